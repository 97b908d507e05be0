#include "formnet/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace formnet {

namespace {

constexpr i64 kTokenHeight = 7;
constexpr i64 kRowPitch = 18;
constexpr i64 kMargin = 6;
constexpr i64 kHeaderY = 6;
constexpr i64 kRowsY = 22;

i64 word_width(const std::string& w) { return 3 * static_cast<i64>(w.size()) + 2; }

double label_base_intensity(const std::string& label, bool use_signal) {
  if (!use_signal) return 0.60;
  if (label == "header") return 0.95;
  if (label == "question") return 0.78;
  if (label == "answer") return 0.52;
  if (label == "other") return 0.35;
  return 0.60;  // tokens outside any entity
}

struct PendingToken {
  std::string text;
  i64 x0, y0, x1, y1;
};

void fill_rect(Raster& r, i64 x0, i64 y0, i64 x1, i64 y1, double v) {
  for (i64 y = std::max<i64>(0, y0); y < std::min(r.height, y1); ++y)
    for (i64 x = std::max<i64>(0, x0); x < std::min(r.width, x1); ++x) r.at(y, x) = v;
}

}  // namespace

std::string synthetic_word(i64 pool_index) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v"};
  static const char* vowels[] = {"a", "e", "i", "o", "u"};
  std::string w;
  u64 h = mix_seed(0x5eedULL, static_cast<u64>(pool_index));
  const int syllables = 2 + static_cast<int>(h % 2);
  for (int s = 0; s < syllables; ++s) {
    h = mix_seed(h, static_cast<u64>(s) + 17);
    w += onsets[h % 13];
    w += vowels[(h >> 8) % 5];
  }
  return w;
}

Raster render_synthetic_raster(const Document& doc, const SyntheticFormSpec& spec);

std::vector<Document> generate_synthetic_corpus(const SyntheticFormSpec& spec) {
  // fit check before any work
  const i64 max_word_w = word_width(synthetic_word(0)) + 6;  // words are at most 6 letters
  const i64 column_w = spec.max_entity_tokens * (3 * 6 + 2 + 3);
  if (spec.page_width < 2 * column_w + 3 * kMargin)
    fail(cat("generate_synthetic_corpus: page width ", spec.page_width,
             " too small for ", spec.max_entity_tokens, "-token entity columns"));
  // bottom band sits 4 px under the last row and needs a token plus its rule
  if (spec.page_height < kRowsY + spec.max_rows * kRowPitch + 4 + kTokenHeight + 4)
    fail(cat("generate_synthetic_corpus: page height ", spec.page_height, " too small for ",
             spec.max_rows, " rows"));
  (void)max_word_w;

  std::vector<Document> docs;
  docs.reserve(static_cast<size_t>(spec.num_documents));
  for (i64 di = 0; di < spec.num_documents; ++di) {
    Rng rng(mix_seed(spec.seed, static_cast<u64>(di)));
    Document doc;
    doc.id = cat("doc-", spec.seed, "-", di);
    doc.page_width = spec.page_width;
    doc.page_height = spec.page_height;
    doc.image_path = cat("images/", doc.id, ".pgm");

    auto emit_group = [&](const std::vector<std::string>& words, i64 x, i64 y,
                          const std::string& label) {
      const i64 start = static_cast<i64>(doc.tokens.size());
      for (const std::string& w : words) {
        Token t;
        t.text = w;
        t.x0 = x;
        t.y0 = y;
        t.x1 = std::min(x + word_width(w), spec.page_width - 1);
        t.y1 = y + kTokenHeight;
        t.index = static_cast<i64>(doc.tokens.size());
        x = t.x1 + 3;
        doc.tokens.push_back(std::move(t));
      }
      if (!label.empty())
        doc.entities.push_back({label, start, static_cast<i64>(doc.tokens.size()) - 1});
    };

    auto chain_words = [&](i64 base, i64 count) {
      std::vector<std::string> ws;
      for (i64 t = 0; t < count; ++t) {
        i64 idx = (base + t) % spec.vocab_size;
        if (rng.next_bernoulli(0.15)) idx = rng.next_below(spec.vocab_size);
        ws.push_back(synthetic_word(idx));
      }
      return ws;
    };

    // header band: words from a small dedicated sub-pool
    {
      const i64 n = rng.next_range(1, 2);
      std::vector<std::string> ws;
      for (i64 t = 0; t < n; ++t) ws.push_back(synthetic_word(rng.next_below(10)));
      emit_group(ws, kMargin + rng.next_below(8), kHeaderY, "header");
    }

    // question/answer rows; which column holds the question is a coin flip
    const i64 n_rows = rng.next_range(spec.min_rows, spec.max_rows);
    for (i64 r = 0; r < n_rows; ++r) {
      const i64 y = kRowsY + r * kRowPitch + rng.next_range(-1, 1);
      const i64 base = 10 + rng.next_below(spec.vocab_size - 10);
      const i64 qn = rng.next_range(spec.min_entity_tokens, spec.max_entity_tokens);
      const i64 an = rng.next_range(spec.min_entity_tokens, spec.max_entity_tokens);
      auto q_words = chain_words(base, qn);
      auto a_words = chain_words((base + 40) % spec.vocab_size, an);
      const i64 left_x = kMargin + rng.next_below(6);
      const i64 right_x = spec.page_width / 2 + 4 + rng.next_below(6);
      const bool question_left = rng.next_bernoulli(0.5);
      if (question_left) {
        emit_group(q_words, left_x, y, "question");
        emit_group(a_words, right_x, y, "answer");
      } else {
        emit_group(a_words, left_x, y, "answer");
        emit_group(q_words, right_x, y, "question");
      }
    }

    // bottom band: an optional 'other' entity plus unlabeled noise tokens
    const i64 bottom_y = kRowsY + n_rows * kRowPitch + 4;
    if (rng.next_bernoulli(spec.other_entity_prob)) {
      const i64 n = rng.next_range(1, 2);
      emit_group(chain_words(rng.next_below(spec.vocab_size), n), kMargin + rng.next_below(10),
                 bottom_y, "other");
    }
    const i64 noise = spec.noise_tokens_max > 0 ? rng.next_below(spec.noise_tokens_max + 1) : 0;
    for (i64 t = 0; t < noise; ++t) {
      emit_group({synthetic_word(rng.next_below(spec.vocab_size))},
                 spec.page_width / 2 + 10 + t * 26, bottom_y, "");
    }

    doc.image = render_synthetic_raster(doc, spec);
    validate_document(doc);
    docs.push_back(std::move(doc));
  }
  return docs;
}

Raster render_synthetic_raster(const Document& doc, const SyntheticFormSpec& spec) {
  Raster r = Raster::zeros(doc.page_width, doc.page_height);
  std::vector<std::string> token_label(doc.tokens.size());
  for (const EntitySpan& e : doc.entities)
    for (i64 i = e.start; i <= e.end; ++i) token_label[static_cast<size_t>(i)] = e.label;

  for (const Token& t : doc.tokens) {
    // jitter depends only on (doc, token index), never on the label
    Rng jr(mix_seed(hash_string(doc.id), static_cast<u64>(t.index) + 101));
    const double jitter = jr.next_uniform(-0.04, 0.04);
    const double v =
        label_base_intensity(token_label[static_cast<size_t>(t.index)], spec.label_intensity) +
        jitter;
    fill_rect(r, t.x0, t.y0, t.x1, t.y1, std::min(1.0, std::max(0.05, v)));
  }

  if (spec.separator_lines) {
    // rules under the header band and under each question/answer row
    fill_rect(r, kMargin, kHeaderY + kTokenHeight + 3, doc.page_width - kMargin,
              kHeaderY + kTokenHeight + 4, 0.85);
    std::vector<i64> row_bottoms;
    for (const Token& t : doc.tokens) {
      if (t.y0 >= kRowsY && t.y1 + 4 < doc.page_height) {
        const i64 line_y = t.y1 + 3;
        bool found = false;
        for (i64 y : row_bottoms)
          if (std::abs(y - line_y) <= 3) found = true;
        if (!found) row_bottoms.push_back(line_y);
      }
    }
    for (i64 y : row_bottoms) fill_rect(r, kMargin, y, doc.page_width - kMargin, y + 1, 0.85);
  }
  round_storage(r.pixels);
  return r;
}

}  // namespace formnet
