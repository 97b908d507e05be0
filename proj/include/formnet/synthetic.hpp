#pragma once

#include "formnet/document.hpp"

namespace formnet {

// Desk-scale key-value form generator: a header band, rows of question/answer
// token groups in two columns, occasional extra tokens. Which group of a row
// is the question is a coin flip that only the raster reveals (when the
// intensity signal is on), so the image modality carries label information
// that text and layout alone cannot recover.
struct SyntheticFormSpec {
  u64 seed = 0;
  i64 num_documents = 100;
  i64 page_width = 160;
  i64 page_height = 128;
  std::vector<std::string> labels = {"header", "question", "answer", "other"};
  i64 vocab_size = 120;  // word pool size

  // visual-signal toggles
  bool label_intensity = true;   // font-weight proxy per label
  bool separator_lines = true;   // horizontal rules between entity rows

  // layout knobs
  i64 min_rows = 3;
  i64 max_rows = 5;
  i64 min_entity_tokens = 1;
  i64 max_entity_tokens = 3;
  double other_entity_prob = 0.7;
  i64 noise_tokens_max = 2;
};

std::vector<Document> generate_synthetic_corpus(const SyntheticFormSpec& spec);

// Rendering is a pure function of the token layout, the entity labels, and
// the visual-signal toggles; with both toggles off it does not depend on the
// labels at all.
Raster render_synthetic_raster(const Document& doc, const SyntheticFormSpec& spec);

// Deterministic pronounceable word for a pool index.
std::string synthetic_word(i64 pool_index);

}  // namespace formnet
