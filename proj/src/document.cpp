#include "formnet/document.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

namespace formnet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void validate_document(const Document& doc) {
  auto ctx = [&](const std::string& field) { return cat("document '", doc.id, "': ", field); };
  if (doc.page_width <= 0 || doc.page_height <= 0)
    fail(ctx(cat("page size ", doc.page_width, "x", doc.page_height, " is not positive")));
  for (size_t i = 0; i < doc.tokens.size(); ++i) {
    const Token& t = doc.tokens[i];
    const std::string field = cat("tokens[", i, "]");
    if (t.index != static_cast<i64>(i)) fail(ctx(cat(field, ".index is not contiguous")));
    if (t.x0 > t.x1 || t.y0 > t.y1) fail(ctx(cat(field, ".box is inverted")));
    if (t.x0 < 0 || t.y0 < 0 || t.x1 > doc.page_width || t.y1 > doc.page_height)
      fail(ctx(cat(field, ".box exceeds page bounds")));
  }
  std::vector<EntitySpan> sorted = doc.entities;
  std::sort(sorted.begin(), sorted.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  i64 prev_end = -1;
  for (size_t i = 0; i < doc.entities.size(); ++i) {
    const EntitySpan& e = doc.entities[i];
    const std::string field = cat("entities[", i, "]");
    if (e.start > e.end) fail(ctx(cat(field, ".start > end")));
    if (e.start < 0 || e.end >= static_cast<i64>(doc.tokens.size()))
      fail(ctx(cat(field, " span out of token range")));
  }
  for (const EntitySpan& e : sorted) {
    if (e.start <= prev_end) fail(ctx("entities overlap"));
    prev_end = e.end;
  }
  if (doc.image.width != doc.page_width || doc.image.height != doc.page_height)
    fail(ctx(cat("image dims ", doc.image.width, "x", doc.image.height, " do not match page ",
                 doc.page_width, "x", doc.page_height)));
}

namespace {

const ordered_json& require_field(const ordered_json& j, const char* key,
                                  const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) fail(cat(where, ": missing field '", key, "'"));
  return *it;
}

}  // namespace

std::vector<Document> load_dataset(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) fail(cat(json_path, ": cannot open"));
  ordered_json root;
  try {
    root = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(cat(json_path, ": invalid JSON: ", e.what()));
  }
  const fs::path base = fs::path(json_path).parent_path();
  std::vector<Document> docs;
  const auto& jdocs = require_field(root, "documents", json_path);
  for (size_t di = 0; di < jdocs.size(); ++di) {
    const auto& jd = jdocs[di];
    Document doc;
    const std::string where0 = cat(json_path, ": documents[", di, "]");
    doc.id = require_field(jd, "id", where0).get<std::string>();
    const std::string where = cat("document '", doc.id, "'");
    doc.page_width = require_field(jd, "page_width", where).get<i64>();
    doc.page_height = require_field(jd, "page_height", where).get<i64>();
    doc.image_path = require_field(jd, "image", where).get<std::string>();
    const auto& jtokens = require_field(jd, "tokens", where);
    i64 index = 0;
    for (const auto& jt : jtokens) {
      Token t;
      t.text = require_field(jt, "text", cat(where, ".tokens[", index, "]")).get<std::string>();
      const auto& box = require_field(jt, "box", cat(where, ".tokens[", index, "]"));
      if (!box.is_array() || box.size() != 4)
        fail(cat(where, ".tokens[", index, "].box must be [x0, y0, x1, y1]"));
      t.x0 = box[0].get<i64>();
      t.y0 = box[1].get<i64>();
      t.x1 = box[2].get<i64>();
      t.y1 = box[3].get<i64>();
      t.index = index++;
      doc.tokens.push_back(std::move(t));
    }
    if (jd.contains("entities")) {
      for (const auto& je : jd["entities"]) {
        EntitySpan e;
        e.label = require_field(je, "label", cat(where, ".entities")).get<std::string>();
        e.start = require_field(je, "start", cat(where, ".entities")).get<i64>();
        e.end = require_field(je, "end", cat(where, ".entities")).get<i64>();
        doc.entities.push_back(std::move(e));
      }
    }
    const fs::path img = base / doc.image_path;
    if (!fs::exists(img)) fail(cat(where, ": missing image file ", img.string()));
    doc.image = load_pnm(img.string());
    validate_document(doc);
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_dataset(const std::vector<Document>& docs, const std::string& json_path) {
  const fs::path base = fs::path(json_path).parent_path();
  ordered_json root;
  root["documents"] = ordered_json::array();
  for (const Document& doc : docs) {
    ordered_json jd;
    jd["id"] = doc.id;
    jd["page_width"] = doc.page_width;
    jd["page_height"] = doc.page_height;
    jd["image"] = doc.image_path;
    jd["tokens"] = ordered_json::array();
    for (const Token& t : doc.tokens) {
      ordered_json jt;
      jt["text"] = t.text;
      jt["box"] = {t.x0, t.y0, t.x1, t.y1};
      jd["tokens"].push_back(std::move(jt));
    }
    jd["entities"] = ordered_json::array();
    for (const EntitySpan& e : doc.entities) {
      ordered_json je;
      je["label"] = e.label;
      je["start"] = e.start;
      je["end"] = e.end;
      jd["entities"].push_back(std::move(je));
    }
    root["documents"].push_back(std::move(jd));
    const fs::path img = base / doc.image_path;
    fs::create_directories(img.parent_path());
    save_pgm(doc.image, img.string());
  }
  std::ofstream out(json_path);
  if (!out) fail(cat(json_path, ": cannot open for writing"));
  out << root.dump(1) << "\n";
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

Vocabulary Vocabulary::build(const std::vector<Document>& corpus, i64 max_size) {
  if (corpus.empty()) fail("Vocabulary::build: empty corpus");
  std::map<std::string, i64> counts;  // ordered map gives the lexicographic tie-break
  for (const Document& doc : corpus)
    for (const Token& t : doc.tokens) ++counts[lowercase(t.text)];
  std::vector<std::pair<std::string, i64>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (const auto& [tok, cnt] : sorted) {
    if (static_cast<i64>(tokens.size()) + kReserved >= max_size) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.id_to_token_ = {"[PAD]", "[UNK]", "[MASK]", "[GLOBAL]"};
  for (std::string& t : tokens) {
    if (v.token_to_id_.count(t)) fail(cat("Vocabulary: duplicate token '", t, "'"));
    v.token_to_id_[t] = static_cast<i64>(v.id_to_token_.size());
    v.id_to_token_.push_back(std::move(t));
  }
  return v;
}

i64 Vocabulary::id_of(const std::string& text) const {
  auto it = token_to_id_.find(lowercase(text));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(i64 id) const {
  if (id < 0 || id >= size()) fail(cat("Vocabulary: id ", id, " out of range"));
  return id_to_token_[static_cast<size_t>(id)];
}

MlmPlan sample_mlm(const Document& doc, const Vocabulary& vocab, double rate, u64 seed) {
  if (rate < 0.0 || rate >= 1.0 + 1e-12)
    fail(cat("sample_mlm: rate ", rate, " outside [0, 1]"));
  Rng rng(mix_seed(seed, hash_string(doc.id)));
  MlmPlan plan;
  const i64 n_real = vocab.size() - Vocabulary::kReserved;
  for (const Token& t : doc.tokens) {
    const bool selected = rate >= 1.0 ? true : rng.next_bernoulli(rate);
    if (!selected) continue;
    plan.positions.push_back(t.index);
    plan.original_ids.push_back(vocab.id_of(t.text));
    const double u = rng.next_double();
    if (u < 0.8) {
      plan.replacement.push_back(MlmPlan::Replacement::kMask);
      plan.replaced_ids.push_back(Vocabulary::kMask);
    } else if (u < 0.9 && n_real > 0) {
      plan.replacement.push_back(MlmPlan::Replacement::kRandom);
      plan.replaced_ids.push_back(Vocabulary::kReserved + rng.next_below(n_real));
    } else {
      plan.replacement.push_back(MlmPlan::Replacement::kKeep);
      plan.replaced_ids.push_back(plan.original_ids.back());
    }
  }
  return plan;
}

}  // namespace formnet
