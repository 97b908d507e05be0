#include "formnet/pnm.hpp"

#include <cmath>
#include <fstream>

namespace formnet {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_header_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) fail(cat(path, ": truncated header"));
  return tok;
}

i64 parse_dim(const std::string& tok, const std::string& path, const char* what) {
  try {
    const i64 v = std::stoll(tok);
    if (v <= 0) fail(cat(path, ": non-positive ", what));
    return v;
  } catch (const std::invalid_argument&) {
    fail(cat(path, ": malformed ", what, " '", tok, "'"));
  }
}

}  // namespace

Raster load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(cat(path, ": cannot open"));
  std::string magic = next_header_token(in, path);
  if (magic != "P5" && magic != "P6") fail(cat(path, ": bad magic '", magic, "', expected P5/P6"));
  const bool color = magic == "P6";
  const i64 w = parse_dim(next_header_token(in, path), path, "width");
  const i64 h = parse_dim(next_header_token(in, path), path, "height");
  const i64 maxval = parse_dim(next_header_token(in, path), path, "maxval");
  if (maxval != 255) fail(cat(path, ": unsupported maxval ", maxval, ", expected 255"));
  // exactly one whitespace byte separates the header from the payload; it was
  // already consumed by the tokenizer
  const i64 chan = color ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<size_t>(w * h * chan));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    fail(cat(path, ": truncated payload, expected ", buf.size(), " bytes, got ", in.gcount()));

  Raster r = Raster::zeros(w, h);
  for (i64 i = 0; i < w * h; ++i) {
    double v;
    if (color) {
      v = 0.299 * buf[static_cast<size_t>(3 * i)] + 0.587 * buf[static_cast<size_t>(3 * i + 1)] +
          0.114 * buf[static_cast<size_t>(3 * i + 2)];
    } else {
      v = buf[static_cast<size_t>(i)];
    }
    r.pixels[static_cast<size_t>(i)] = v / 255.0;
  }
  round_storage(r.pixels);
  return r;
}

void save_pgm(const Raster& raster, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(cat(path, ": cannot open for writing"));
  out << "P5\n" << raster.width << " " << raster.height << "\n255\n";
  std::vector<unsigned char> buf(raster.pixels.size());
  for (size_t i = 0; i < raster.pixels.size(); ++i) {
    const double v = std::round(raster.pixels[i] * 255.0);
    buf[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(cat(path, ": write failed"));
}

}  // namespace formnet
