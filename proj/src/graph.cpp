#include "formnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace formnet {

std::array<double, kLayoutFeatureDim> layout_edge_features(const Token& token_i,
                                                           const Token& token_j, i64 page_w,
                                                           i64 page_h, i64 num_tokens) {
  if (page_w <= 0 || page_h <= 0)
    fail(cat("layout_edge_features: zero page dimension ", page_w, "x", page_h));
  const double pw = static_cast<double>(page_w);
  const double ph = static_cast<double>(page_h);
  const double dcx = token_j.cx() - token_i.cx();
  const double dcy = token_j.cy() - token_i.cy();
  const double dist = std::sqrt(dcx * dcx + dcy * dcy);
  return {dcx / pw,
          dcy / ph,
          std::log1p(dist),
          token_i.width() / pw,
          token_i.height() / ph,
          token_j.width() / pw,
          token_j.height() / ph,
          static_cast<double>(token_j.index - token_i.index) / static_cast<double>(num_tokens)};
}

DocGraph build_graph(const Document& doc, i64 k) {
  if (doc.tokens.empty()) fail(cat("build_graph: document '", doc.id, "' has no tokens"));
  if (k < 1) fail(cat("build_graph: k must be >= 1, got ", k));
  const i64 n = static_cast<i64>(doc.tokens.size());
  DocGraph g;
  g.doc_id = doc.id;
  g.num_nodes = n;

  std::set<std::pair<i64, i64>> undirected;
  std::vector<std::pair<double, i64>> cand;
  for (i64 i = 0; i < n; ++i) {
    cand.clear();
    for (i64 j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = doc.tokens[j].cx() - doc.tokens[i].cx();
      const double dy = doc.tokens[j].cy() - doc.tokens[i].cy();
      cand.push_back({dx * dx + dy * dy, j});
    }
    const i64 take = std::min<i64>(k, static_cast<i64>(cand.size()));
    // ties resolved toward the smaller token index
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
    for (i64 t = 0; t < take; ++t) {
      const i64 j = cand[static_cast<size_t>(t)].second;
      undirected.insert({std::min(i, j), std::max(i, j)});
    }
  }

  g.edges.assign(undirected.begin(), undirected.end());
  g.layout_feat.reserve(g.edges.size() * kLayoutFeatureDim);
  for (const auto& [i, j] : g.edges) {
    const auto f = layout_edge_features(doc.tokens[static_cast<size_t>(i)],
                                        doc.tokens[static_cast<size_t>(j)], doc.page_width,
                                        doc.page_height, n);
    g.layout_feat.insert(g.layout_feat.end(), f.begin(), f.end());
  }
  round_storage(g.layout_feat);
  return g;
}

void assign_token_ids(DocGraph& graph, const Document& doc, const Vocabulary& vocab) {
  graph.node_token_ids.clear();
  for (const Token& t : doc.tokens) graph.node_token_ids.push_back(vocab.id_of(t.text));
}

void CorruptionConfig::validate() const {
  if (edge_drop < 0.0 || edge_drop >= 1.0)
    fail(cat("CorruptionConfig: edge_drop ", edge_drop, " outside [0, 1)"));
  for (auto [name, v] : {std::pair<const char*, double>{"layout_drop", layout_drop},
                         {"image_drop", image_drop},
                         {"text_drop", text_drop}})
    if (v < 0.0 || v > 1.0) fail(cat("CorruptionConfig: ", name, " ", v, " outside [0, 1]"));
}

namespace {

// Per-channel drop mask over all parent items, one draw per item per view.
std::vector<std::uint8_t> keep_mask(Rng& rng, i64 count, double drop_rate) {
  std::vector<std::uint8_t> kept(static_cast<size_t>(count));
  for (i64 i = 0; i < count; ++i) kept[static_cast<size_t>(i)] = rng.next_bernoulli(drop_rate) ? 0 : 1;
  return kept;
}

std::vector<std::uint8_t> select(const std::vector<std::uint8_t>& mask,
                                 const std::vector<i64>& idx) {
  std::vector<std::uint8_t> out;
  out.reserve(idx.size());
  for (i64 i : idx) out.push_back(mask[static_cast<size_t>(i)]);
  return out;
}

}  // namespace

std::pair<GraphView, GraphView> corrupt_pair(const DocGraph& graph, const CorruptionConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, hash_string(graph.doc_id)));
  const i64 e = static_cast<i64>(graph.edges.size());
  const i64 n = graph.num_nodes;

  GraphView v1, v2;
  v1.parent = &graph;
  v2.parent = &graph;

  // fixed draw order: edges v1, edges v2, then per channel v1 before v2
  for (i64 i = 0; i < e; ++i)
    if (!rng.next_bernoulli(cfg.edge_drop)) v1.kept_edges.push_back(i);
  for (i64 i = 0; i < e; ++i)
    if (!rng.next_bernoulli(cfg.edge_drop)) v2.kept_edges.push_back(i);

  const double layout2 = cfg.decoupled ? 1.0 - cfg.layout_drop : cfg.layout_drop;
  const double image2 = cfg.decoupled ? 1.0 - cfg.image_drop : cfg.image_drop;
  const double text2 = cfg.decoupled ? 1.0 - cfg.text_drop : cfg.text_drop;

  const auto layout_all_1 = keep_mask(rng, e, cfg.layout_drop);
  const auto layout_all_2 = keep_mask(rng, e, layout2);
  const auto image_all_1 = keep_mask(rng, e, cfg.image_drop);
  const auto image_all_2 = keep_mask(rng, e, image2);
  v1.text_kept = keep_mask(rng, n, cfg.text_drop);
  v2.text_kept = keep_mask(rng, n, text2);

  v1.layout_kept = select(layout_all_1, v1.kept_edges);
  v2.layout_kept = select(layout_all_2, v2.kept_edges);
  v1.image_kept = select(image_all_1, v1.kept_edges);
  v2.image_kept = select(image_all_2, v2.kept_edges);
  return {std::move(v1), std::move(v2)};
}

GraphView full_view(const DocGraph& graph) {
  GraphView v;
  v.parent = &graph;
  const i64 e = static_cast<i64>(graph.edges.size());
  for (i64 i = 0; i < e; ++i) v.kept_edges.push_back(i);
  v.layout_kept.assign(static_cast<size_t>(e), 1);
  v.image_kept.assign(static_cast<size_t>(e), 1);
  v.text_kept.assign(static_cast<size_t>(graph.num_nodes), 1);
  return v;
}

}  // namespace formnet
