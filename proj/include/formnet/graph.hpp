#pragma once

#include "formnet/document.hpp"

namespace formnet {

constexpr i64 kLayoutFeatureDim = 8;

struct DocGraph {
  std::string doc_id;
  i64 num_nodes = 0;
  std::vector<std::pair<i64, i64>> edges;  // i < j, undirected, deduplicated
  std::vector<double> layout_feat;         // edges.size() x kLayoutFeatureDim
  std::vector<i64> node_token_ids;         // filled by assign_token_ids

  std::span<const double> layout_of(i64 edge) const {
    return {layout_feat.data() + edge * kLayoutFeatureDim, kLayoutFeatureDim};
  }
};

// K nearest other tokens by Euclidean distance between box centers propose
// directed edges; ties prefer the smaller token index; proposals are merged
// into undirected edges. A single-token document has no edges.
DocGraph build_graph(const Document& doc, i64 k);

void assign_token_ids(DocGraph& graph, const Document& doc, const Vocabulary& vocab);

// [dcx/pw, dcy/ph, ln(1 + center distance px), wi/pw, hi/ph, wj/pw, hj/ph,
//  (j - i)/num_tokens], deltas taken as center(j) - center(i)
std::array<double, kLayoutFeatureDim> layout_edge_features(const Token& token_i,
                                                           const Token& token_j, i64 page_w,
                                                           i64 page_h, i64 num_tokens);

struct CorruptionConfig {
  double edge_drop = 0.3;
  double layout_drop = 0.8;
  double image_drop = 0.8;
  double text_drop = 0.8;
  bool decoupled = true;
  u64 seed = 0;

  void validate() const;
};

// A corrupted copy: a subset of the parent's edges, with per-edge layout and
// image keep masks and per-node text keep masks. Nodes are never removed;
// dropping a feature zeroes its vector.
struct GraphView {
  const DocGraph* parent = nullptr;
  std::vector<i64> kept_edges;            // indices into parent->edges
  std::vector<std::uint8_t> layout_kept;  // per kept edge
  std::vector<std::uint8_t> image_kept;   // per kept edge
  std::vector<std::uint8_t> text_kept;    // per node

  i64 num_nodes() const { return parent->num_nodes; }
  i64 num_edges() const { return static_cast<i64>(kept_edges.size()); }
};

// Two independently corrupted views. Both sample edge drops at edge_drop; for
// each feature channel the second view uses the complement rate when
// decoupled. Deterministic in (graph, cfg).
std::pair<GraphView, GraphView> corrupt_pair(const DocGraph& graph, const CorruptionConfig& cfg);

// The identity view (everything kept); fine-tuning and MLM run on this.
GraphView full_view(const DocGraph& graph);

}  // namespace formnet
