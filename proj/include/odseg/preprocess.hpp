#pragma once

#include <string>

#include "odseg/image.hpp"

namespace odseg {

/// Stage order after grayscale conversion and resizing.
enum class StageOrder {
  ClaheFirst,      // CLAHE -> min-max -> gamma (default)
  NormalizeFirst,  // min-max stretch to 8 bits -> CLAHE -> scale to [0,1] -> gamma
};

StageOrder parse_stage_order(const std::string& s);
std::string to_string(StageOrder order);

struct PreprocessConfig {
  int target_size = 64;
  int clahe_tiles = 8;
  double clahe_clip = 2.0;
  double gamma = 1.2;
  StageOrder order = StageOrder::ClaheFirst;

  void validate() const;
};

/// Luma 0.299 R + 0.587 G + 0.114 B, rounded half-up. 1-channel input passes through.
RawImage to_grayscale(const RawImage& img);

/// (v - min) / (max - min); a constant image maps to all zeros.
FloatImage normalize_minmax(const RawImage& img);

/// Contrast-limited adaptive histogram equalization on a tiles x tiles grid.
/// `clip_limit` is a multiple of the uniform bin height (tile pixels / 256);
/// infinity disables clipping.
RawImage clahe(const RawImage& img, int tiles, double clip_limit);

/// v -> v^gamma.
FloatImage gamma_correct(const FloatImage& img, double gamma);

RawImage resize_nearest(const RawImage& img, int width, int height);

/// Source pixel index sampled by destination index `i` under resize_nearest.
int nearest_source_index(int i, int src_extent, int dst_extent);

/// grayscale -> resize -> stages per `cfg.order`. Output in [0,1].
FloatImage preprocess_pipeline(const RawImage& img, const PreprocessConfig& cfg);

}  // namespace odseg
