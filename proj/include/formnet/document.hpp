#pragma once

#include <string>
#include <unordered_map>

#include "formnet/pnm.hpp"

namespace formnet {

struct Token {
  std::string text;
  i64 x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // page pixels
  i64 index = 0;                       // OCR reading order

  double cx() const { return 0.5 * static_cast<double>(x0 + x1); }
  double cy() const { return 0.5 * static_cast<double>(y0 + y1); }
  double width() const { return static_cast<double>(x1 - x0); }
  double height() const { return static_cast<double>(y1 - y0); }
};

struct EntitySpan {
  std::string label;
  i64 start = 0;
  i64 end = 0;  // inclusive

  bool operator==(const EntitySpan&) const = default;
};

struct Document {
  std::string id;
  i64 page_width = 0;
  i64 page_height = 0;
  std::vector<Token> tokens;
  Raster image;
  std::vector<EntitySpan> entities;
  std::string image_path;  // relative to the dataset file
};

// Throws with the document id and field path on any invariant breach.
void validate_document(const Document& doc);

// Dataset JSON plus sibling PGM/PPM images; token array order is the OCR
// reading order.
std::vector<Document> load_dataset(const std::string& json_path);
void save_dataset(const std::vector<Document>& docs, const std::string& json_path);

class Vocabulary {
 public:
  static constexpr i64 kPad = 0;
  static constexpr i64 kUnk = 1;
  static constexpr i64 kMask = 2;
  static constexpr i64 kGlobal = 3;
  static constexpr i64 kReserved = 4;

  // Most frequent lowercased token strings, ties broken lexicographically.
  static Vocabulary build(const std::vector<Document>& corpus, i64 max_size);
  static Vocabulary from_tokens(std::vector<std::string> tokens);  // non-reserved entries

  i64 id_of(const std::string& text) const;  // lowercases; unknown -> kUnk
  const std::string& token_of(i64 id) const;
  i64 size() const { return static_cast<i64>(id_to_token_.size()); }

  const std::vector<std::string>& entries() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, i64> token_to_id_;
};

std::string lowercase(const std::string& s);

struct MlmPlan {
  enum class Replacement { kMask, kRandom, kKeep };
  std::vector<i64> positions;             // distinct token indices
  std::vector<Replacement> replacement;   // per position
  std::vector<i64> replaced_ids;          // id fed to the model at the position
  std::vector<i64> original_ids;          // prediction targets

  bool empty() const { return positions.empty(); }
};

// Each token independently selected with probability `rate`; of the selected,
// 80% MASK / 10% random vocabulary id / 10% kept. Deterministic in
// (doc, rate, seed).
MlmPlan sample_mlm(const Document& doc, const Vocabulary& vocab, double rate, u64 seed);

}  // namespace formnet
