#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odseg/image.hpp"
#include "odseg/preprocess.hpp"
#include "odseg/rng.hpp"
#include "odseg/tensor.hpp"

namespace odseg {

/// Optic-disc centre in pixel coordinates; pixel (i, j) has its centre at (i, j).
struct CentroidLabel {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const CentroidLabel&) const = default;
};

/// Binary mask, values 0/1, row-major.
struct MaskLabel {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::size_t foreground() const;
  bool operator==(const MaskLabel&) const = default;
};

struct Sample {
  RawImage image;
  CentroidLabel centroid;
  MaskLabel mask;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t size() const { return samples.size(); }
};

/// Parameters of the synthetic fundus-like image generator. Sizes and radii
/// are fractions of the image side.
struct SyntheticSpec {
  int image_size = 64;
  double radius_min = 0.09;
  double radius_max = 0.14;
  double aspect_max = 1.15;       // ellipse axis ratio bound; 1 gives circles
  double disc_intensity_min = 30;  // added to the local background
  double disc_intensity_max = 70;
  double background_min = 70;
  double background_max = 110;
  double texture_amplitude = 25;
  int distractor_count = 3;  // bright lesion-like blobs
  double distractor_intensity = 1.0;  // relative to the disc intensity
  int vessel_count = 5;
  double vessel_width = 1.2;
  double vessel_contrast = 35;
  double noise_sigma = 6;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One synthetic image with its disc centre and exact disc mask.
Sample generate_sample(const SyntheticSpec& spec, Rng& rng);

/// `count` samples; sample i draws from its own stream derived from spec.seed.
Dataset generate_dataset(const SyntheticSpec& spec, std::size_t count);

std::string describe(const SyntheticSpec& spec);

/// Layout: images/NNNN.pgm, masks/NNNN.pgm (0/255), centroids.csv ("id,x,y"),
/// plus manifest.txt with `manifest` as content.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, const std::string& manifest);
Dataset load_dataset(const std::filesystem::path& dir);

/// Sample index -> fold id.
struct FoldPlan {
  int k = 0;
  std::vector<int> assignment;

  std::vector<std::size_t> members(int fold) const;
  std::vector<std::size_t> complement(int fold) const;
  bool operator==(const FoldPlan&) const = default;
};

/// Shuffles 0..n-1 under `seed` and deals them round-robin into k folds.
FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed);

/// Nested subset: the first ceil(percent * |ids| / 100) ids of a single
/// seeded permutation. `percent` must be one of 10, 20, ..., 100.
std::vector<std::size_t> subsample_fraction(const std::vector<std::size_t>& ids, int percent, std::uint64_t seed);

/// Index split for the localisation data: fractions of n for train/val, the
/// remainder is test.
struct SplitIds {
  std::vector<std::size_t> train, validation, test;
};
SplitIds train_val_test_split(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed);

/// Network-ready inputs and targets, one tensor per example.
/// Inputs are [1,1,S,S]; targets are [1,2] centroids or [1,1,S,S] masks.
struct TensorSet {
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
  std::size_t size() const { return inputs.size(); }
};

Tensor image_tensor(const FloatImage& img);
Tensor mask_tensor(const MaskLabel& mask);

/// Preprocesses images and rescales labels to the preprocessed frame.
TensorSet localization_set(const Dataset& data, const std::vector<std::size_t>& ids, const PreprocessConfig& cfg);
TensorSet segmentation_set(const Dataset& data, const std::vector<std::size_t>& ids, const PreprocessConfig& cfg);

/// Maps a centroid through resize_nearest from src_w x src_h to dst_w x dst_h.
CentroidLabel rescale_centroid(const CentroidLabel& c, int src_w, int src_h, int dst_w, int dst_h);
MaskLabel resize_mask(const MaskLabel& mask, int width, int height);

std::vector<std::size_t> all_ids(std::size_t n);

}  // namespace odseg
