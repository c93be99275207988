#include "odseg/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "odseg/error.hpp"

namespace odseg {

RawImage::RawImage(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
  if (w <= 0 || h <= 0) throw ParameterError("image dimensions must be positive");
  if (c != 1 && c != 3) throw FormatError("unsupported channel count " + std::to_string(c));
}

namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string next_token(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (start == pos) throw FormatError("truncated PNM header");
  return s.substr(start, pos - start);
}

int parse_positive(const std::string& tok, const char* what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &used);
  } catch (const std::exception&) {
    throw FormatError(std::string("bad PNM ") + what + " '" + tok + "'");
  }
  if (used != tok.size() || v <= 0) throw FormatError(std::string("bad PNM ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

RawImage decode_pnm(const std::string& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError("unsupported PNM magic '" + magic + "'");
  const int w = parse_positive(next_token(bytes, pos), "width");
  const int h = parse_positive(next_token(bytes, pos), "height");
  const int maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw FormatError("only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("missing whitespace after PNM header");
  ++pos;
  RawImage img(w, h, channels);
  if (bytes.size() - pos != img.data.size())
    throw FormatError("PNM payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(img.data.size()));
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.data.begin());
  return img;
}

RawImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_pnm(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_pnm(const RawImage& img) {
  if (img.channels != 1 && img.channels != 3)
    throw FormatError("cannot encode " + std::to_string(img.channels) + "-channel image");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.append(img.data.begin(), img.data.end());
  return out;
}

void write_pnm(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  const auto bytes = encode_pnm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace odseg
