#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "formnet/graph.hpp"
#include "formnet/synthetic.hpp"

using namespace formnet;

namespace {

Document doc_with_centers(const std::vector<std::pair<double, double>>& centers) {
  Document d;
  d.id = "g0";
  d.page_width = 1000;
  d.page_height = 1000;
  for (size_t i = 0; i < centers.size(); ++i) {
    const i64 cx = static_cast<i64>(centers[i].first);
    const i64 cy = static_cast<i64>(centers[i].second);
    d.tokens.push_back({"w", cx, cy, cx + 2, cy + 2, static_cast<i64>(i)});
  }
  d.image = Raster::zeros(1000, 1000);
  return d;
}

// independent brute force: full sort per node, union of proposals
std::set<std::pair<i64, i64>> brute_force_edges(const Document& d, i64 k) {
  std::set<std::pair<i64, i64>> out;
  const i64 n = static_cast<i64>(d.tokens.size());
  for (i64 i = 0; i < n; ++i) {
    std::vector<std::pair<double, i64>> cand;
    for (i64 j = 0; j < n; ++j)
      if (j != i) {
        const double dx = d.tokens[j].cx() - d.tokens[i].cx();
        const double dy = d.tokens[j].cy() - d.tokens[i].cy();
        cand.push_back({dx * dx + dy * dy, j});
      }
    std::sort(cand.begin(), cand.end());
    for (i64 t = 0; t < std::min<i64>(k, static_cast<i64>(cand.size())); ++t)
      out.insert({std::min(i, cand[t].second), std::max(i, cand[t].second)});
  }
  return out;
}

DocGraph synthetic_graph(i64 num_edges) {
  DocGraph g;
  g.doc_id = "big";
  g.num_nodes = num_edges + 1;
  for (i64 i = 0; i < num_edges; ++i) g.edges.push_back({i, i + 1});
  g.layout_feat.assign(static_cast<size_t>(num_edges * kLayoutFeatureDim), 0.5);
  return g;
}

}  // namespace

TEST_CASE("build_graph worked example") {
  Document d = doc_with_centers({{0, 0}, {1, 0}, {5, 0}});
  DocGraph g = build_graph(d, 1);
  std::set<std::pair<i64, i64>> expect{{0, 1}, {1, 2}};
  CHECK(std::set<std::pair<i64, i64>>(g.edges.begin(), g.edges.end()) == expect);
}

TEST_CASE("build_graph degenerate cases") {
  CHECK(build_graph(doc_with_centers({{3, 3}}), 4).edges.empty());
  CHECK(build_graph(doc_with_centers({{0, 0}, {9, 9}}), 7).edges.size() == 1);
  CHECK_THROWS_AS(build_graph(doc_with_centers({{0, 0}}), 0), std::runtime_error);
}

TEST_CASE("build_graph matches the brute-force oracle on random layouts") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const i64 n = rng.next_range(2, 30);
    std::vector<std::pair<double, double>> centers;
    for (i64 i = 0; i < n; ++i)
      centers.push_back({rng.next_uniform(0, 900), rng.next_uniform(0, 900)});
    Document d = doc_with_centers(centers);
    const i64 k = rng.next_range(1, 6);
    DocGraph g = build_graph(d, k);
    CHECK(std::set<std::pair<i64, i64>>(g.edges.begin(), g.edges.end()) ==
          brute_force_edges(d, k));
    for (const auto& [i, j] : g.edges) {
      CHECK(i < j);
      CHECK(j < g.num_nodes);
    }
  }
}

TEST_CASE("equal-distance candidates break ties toward the smaller index") {
  // nodes 1 and 2 are equidistant from node 0
  Document d = doc_with_centers({{0, 0}, {10, 0}, {0, 10}, {100, 100}});
  DocGraph g = build_graph(d, 1);
  CHECK(std::count(g.edges.begin(), g.edges.end(), std::pair<i64, i64>{0, 1}) == 1);
  CHECK(std::count(g.edges.begin(), g.edges.end(), std::pair<i64, i64>{0, 2}) == 0);
}

TEST_CASE("layout edge features") {
  SUBCASE("identical positions zero the relative components") {
    Token a{"x", 10, 10, 20, 20, 0};
    Token b{"y", 10, 10, 20, 20, 1};
    auto f = layout_edge_features(a, b, 700, 700, 10);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == 0.0);
    CHECK(f[2] == 0.0);
  }
  SUBCASE("seven pixels apart on a 700 px page") {
    Token a{"x", 0, 0, 2, 2, 0};
    Token b{"y", 7, 0, 9, 2, 1};
    auto f = layout_edge_features(a, b, 700, 700, 10);
    CHECK(f[0] == doctest::Approx(0.01));
    CHECK(f[2] == doctest::Approx(std::log(8.0)).epsilon(1e-6));
  }
  SUBCASE("swapping endpoints negates the directed components") {
    Token a{"x", 3, 8, 21, 14, 2};
    Token b{"y", 40, 30, 52, 38, 7};
    auto fab = layout_edge_features(a, b, 300, 200, 12);
    auto fba = layout_edge_features(b, a, 300, 200, 12);
    CHECK(fab[0] == doctest::Approx(-fba[0]));
    CHECK(fab[1] == doctest::Approx(-fba[1]));
    CHECK(fab[2] == doctest::Approx(fba[2]));
    CHECK(fab[7] == doctest::Approx(-fba[7]));
  }
  SUBCASE("zero page dimension is an error") {
    Token a{"x", 0, 0, 2, 2, 0};
    CHECK_THROWS_AS(layout_edge_features(a, a, 0, 100, 5), std::runtime_error);
  }
}

TEST_CASE("corrupt_pair") {
  SUBCASE("all-zero rates with coupled views reproduce the parent") {
    DocGraph g = synthetic_graph(50);
    CorruptionConfig cfg{0.0, 0.0, 0.0, 0.0, false, 9};
    auto [v1, v2] = corrupt_pair(g, cfg);
    CHECK(v1.num_edges() == 50);
    CHECK(v2.num_edges() == 50);
    CHECK(std::count(v1.layout_kept.begin(), v1.layout_kept.end(), 1) == 50);
    CHECK(std::count(v1.image_kept.begin(), v1.image_kept.end(), 1) == 50);
    CHECK(std::count(v1.text_kept.begin(), v1.text_kept.end(), 1) == g.num_nodes);
  }
  SUBCASE("text_drop = 1 with decoupling empties one view and spares the other") {
    DocGraph g = synthetic_graph(20);
    CorruptionConfig cfg{0.0, 0.0, 0.0, 1.0, true, 9};
    auto [v1, v2] = corrupt_pair(g, cfg);
    CHECK(std::count(v1.text_kept.begin(), v1.text_kept.end(), 1) == 0);
    CHECK(std::count(v2.text_kept.begin(), v2.text_kept.end(), 1) == g.num_nodes);
  }
  SUBCASE("kept-edge fraction is within 3 sigma of 0.7 on a 10k-edge graph") {
    DocGraph g = synthetic_graph(10000);
    CorruptionConfig cfg{0.3, 0.8, 0.8, 0.8, true, 13};
    auto [v1, v2] = corrupt_pair(g, cfg);
    const double sigma = std::sqrt(0.3 * 0.7 / 10000.0);
    for (const GraphView* v : {&v1, &v2}) {
      const double kept = static_cast<double>(v->num_edges()) / 10000.0;
      CHECK(std::abs(kept - 0.7) < 3.0 * sigma);
    }
  }
  SUBCASE("decoupled drop fractions sum to one per channel") {
    DocGraph g = synthetic_graph(10000);
    CorruptionConfig cfg{0.0, 0.8, 0.8, 0.8, true, 31};
    auto [v1, v2] = corrupt_pair(g, cfg);
    auto drop_fraction = [](const std::vector<std::uint8_t>& kept) {
      return 1.0 - static_cast<double>(std::count(kept.begin(), kept.end(), 1)) /
                       static_cast<double>(kept.size());
    };
    const double sigma = std::sqrt(0.8 * 0.2 / 10000.0) * 2.0;  // two independent samples
    CHECK(std::abs(drop_fraction(v1.layout_kept) + drop_fraction(v2.layout_kept) - 1.0) <
          3.0 * sigma);
    CHECK(std::abs(drop_fraction(v1.image_kept) + drop_fraction(v2.image_kept) - 1.0) <
          3.0 * sigma);
    CHECK(std::abs(drop_fraction(v1.text_kept) + drop_fraction(v2.text_kept) - 1.0) <
          3.0 * sigma);
  }
  SUBCASE("views are subsets of the parent with nodes preserved") {
    DocGraph g = synthetic_graph(500);
    CorruptionConfig cfg{0.5, 0.5, 0.5, 0.5, true, 77};
    auto [v1, v2] = corrupt_pair(g, cfg);
    for (const GraphView* v : {&v1, &v2}) {
      CHECK(v->num_nodes() == g.num_nodes);
      for (i64 e : v->kept_edges) {
        CHECK(e >= 0);
        CHECK(e < static_cast<i64>(g.edges.size()));
      }
      CHECK(std::is_sorted(v->kept_edges.begin(), v->kept_edges.end()));
    }
  }
  SUBCASE("deterministic given (graph, cfg)") {
    DocGraph g = synthetic_graph(300);
    CorruptionConfig cfg{0.3, 0.8, 0.8, 0.8, true, 5};
    auto [a1, a2] = corrupt_pair(g, cfg);
    auto [b1, b2] = corrupt_pair(g, cfg);
    CHECK(a1.kept_edges == b1.kept_edges);
    CHECK(a2.kept_edges == b2.kept_edges);
    CHECK(a1.layout_kept == b1.layout_kept);
    CHECK(a2.image_kept == b2.image_kept);
    CHECK(a1.text_kept == b1.text_kept);
    cfg.seed = 6;
    auto [c1, c2] = corrupt_pair(g, cfg);
    CHECK(a1.kept_edges != c1.kept_edges);
  }
  SUBCASE("rates outside range are rejected") {
    DocGraph g = synthetic_graph(5);
    CorruptionConfig cfg{1.0, 0.8, 0.8, 0.8, true, 0};
    CHECK_THROWS_AS(corrupt_pair(g, cfg), std::runtime_error);
    cfg = {0.3, 1.5, 0.8, 0.8, true, 0};
    CHECK_THROWS_AS(corrupt_pair(g, cfg), std::runtime_error);
  }
}

TEST_CASE("graphs built on synthetic documents are well formed") {
  SyntheticFormSpec spec;
  spec.seed = 3;
  spec.num_documents = 3;
  for (const Document& d : generate_synthetic_corpus(spec)) {
    DocGraph g = build_graph(d, 4);
    CHECK(g.num_nodes == static_cast<i64>(d.tokens.size()));
    CHECK(static_cast<i64>(g.layout_feat.size()) ==
          static_cast<i64>(g.edges.size()) * kLayoutFeatureDim);
    for (double v : g.layout_feat) CHECK(std::isfinite(v));
  }
}
