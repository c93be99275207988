#include "odseg/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "odseg/error.hpp"

namespace odseg {

StageOrder parse_stage_order(const std::string& s) {
  if (s == "clahe,minmax,gamma") return StageOrder::ClaheFirst;
  if (s == "minmax,clahe,gamma") return StageOrder::NormalizeFirst;
  throw ParameterError("unknown preprocessing order '" + s + "' (expected clahe,minmax,gamma or minmax,clahe,gamma)");
}

std::string to_string(StageOrder order) {
  return order == StageOrder::ClaheFirst ? "clahe,minmax,gamma" : "minmax,clahe,gamma";
}

void PreprocessConfig::validate() const {
  if (target_size < 1) throw ParameterError("target size must be positive");
  if (clahe_tiles < 1 || clahe_tiles > target_size) throw ParameterError("CLAHE tile grid must be in [1, target size]");
  if (!(clahe_clip >= 1.0)) throw ParameterError("CLAHE clip limit must be >= 1");
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
}

RawImage to_grayscale(const RawImage& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw FormatError("grayscale conversion needs 1 or 3 channels, got " + std::to_string(img.channels));
  RawImage out(img.width, img.height, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const unsigned r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
    // integer weights keep half-up rounding exact
    out.data[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return out;
}

FloatImage normalize_minmax(const RawImage& img) {
  if (img.channels != 1) throw FormatError("min-max normalization expects a 1-channel image");
  if (img.data.empty()) throw ParameterError("min-max normalization of an empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.data.begin(), img.data.end());
  const double lo = *lo_it, hi = *hi_it;
  FloatImage out(img.width, img.height);
  if (hi == lo) return out;
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = (img.data[i] - lo) / (hi - lo);
  return out;
}

namespace {

using Lut = std::array<double, 256>;

Lut tile_mapping(const RawImage& img, int x0, int y0, int tw, int th, double clip_limit) {
  std::array<double, 256> hist{};
  for (int y = y0; y < y0 + th; ++y)
    for (int x = x0; x < x0 + tw; ++x) hist[img.at(x, y)] += 1.0;
  const double pixels = static_cast<double>(tw) * th;
  if (std::isfinite(clip_limit)) {
    const double limit = clip_limit * pixels / 256.0;
    double excess = 0.0;
    for (auto& h : hist)
      if (h > limit) {
        excess += h - limit;
        h = limit;
      }
    const double share = excess / 256.0;
    for (auto& h : hist) h += share;
  }
  Lut lut{};
  double cdf = 0.0;
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    lut[v] = std::min(255.0, std::floor(255.0 * cdf / pixels + 0.5));
  }
  return lut;
}

RawImage pad_edge(const RawImage& img, int w, int h) {
  RawImage out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(std::min(x, img.width - 1), std::min(y, img.height - 1));
  return out;
}

}  // namespace

RawImage clahe(const RawImage& img, int tiles, double clip_limit) {
  if (img.channels != 1) throw FormatError("CLAHE expects a 1-channel image");
  if (tiles < 1 || tiles > img.width || tiles > img.height)
    throw ParameterError("CLAHE grid " + std::to_string(tiles) + " does not fit a " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + " image");
  if (!(clip_limit >= 1.0)) throw ParameterError("CLAHE clip limit must be >= 1");

  const int pw = (img.width + tiles - 1) / tiles * tiles;
  const int ph = (img.height + tiles - 1) / tiles * tiles;
  const RawImage src = (pw == img.width && ph == img.height) ? img : pad_edge(img, pw, ph);
  const int tw = pw / tiles, th = ph / tiles;

  std::vector<Lut> luts(static_cast<std::size_t>(tiles) * tiles);
  for (int ty = 0; ty < tiles; ++ty)
    for (int tx = 0; tx < tiles; ++tx) luts[ty * tiles + tx] = tile_mapping(src, tx * tw, ty * th, tw, th, clip_limit);

  RawImage out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    const double fy = (y + 0.5) / th - 0.5;
    const int ty0 = static_cast<int>(std::floor(fy));
    const double ay = fy - ty0;
    const int r0 = std::clamp(ty0, 0, tiles - 1), r1 = std::clamp(ty0 + 1, 0, tiles - 1);
    for (int x = 0; x < img.width; ++x) {
      const double fx = (x + 0.5) / tw - 0.5;
      const int tx0 = static_cast<int>(std::floor(fx));
      const double ax = fx - tx0;
      const int c0 = std::clamp(tx0, 0, tiles - 1), c1 = std::clamp(tx0 + 1, 0, tiles - 1);
      const int v = src.at(x, y);
      const double top = (1.0 - ax) * luts[r0 * tiles + c0][v] + ax * luts[r0 * tiles + c1][v];
      const double bottom = (1.0 - ax) * luts[r1 * tiles + c0][v] + ax * luts[r1 * tiles + c1][v];
      const double value = (1.0 - ay) * top + ay * bottom;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(value + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

FloatImage gamma_correct(const FloatImage& img, double gamma) {
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive, got " + std::to_string(gamma));
  FloatImage out = img;
  for (auto& v : out.data) v = std::pow(v, gamma);
  return out;
}

int nearest_source_index(int i, int src_extent, int dst_extent) {
  // sample at the destination pixel centre
  const long s = (2L * i + 1) * src_extent / (2L * dst_extent);
  return static_cast<int>(std::min<long>(s, src_extent - 1));
}

RawImage resize_nearest(const RawImage& img, int width, int height) {
  if (width == img.width && height == img.height) return img;
  RawImage out(width, height, img.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_source_index(y, img.height, height);
    for (int x = 0; x < width; ++x) {
      const int sx = nearest_source_index(x, img.width, width);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

FloatImage preprocess_pipeline(const RawImage& img, const PreprocessConfig& cfg) {
  cfg.validate();
  RawImage gray = resize_nearest(to_grayscale(img), cfg.target_size, cfg.target_size);
  FloatImage unit;
  if (cfg.order == StageOrder::ClaheFirst) {
    unit = normalize_minmax(clahe(gray, cfg.clahe_tiles, cfg.clahe_clip));
  } else {
    const FloatImage stretched = normalize_minmax(gray);
    for (std::size_t i = 0; i < gray.data.size(); ++i)
      gray.data[i] = static_cast<std::uint8_t>(std::floor(stretched.data[i] * 255.0 + 0.5));
    const RawImage eq = clahe(gray, cfg.clahe_tiles, cfg.clahe_clip);
    unit = FloatImage(eq.width, eq.height);
    for (std::size_t i = 0; i < eq.data.size(); ++i) unit.data[i] = eq.data[i] / 255.0;
  }
  return gamma_correct(unit, cfg.gamma);
}

}  // namespace odseg
