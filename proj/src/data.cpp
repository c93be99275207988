#include "odseg/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "odseg/error.hpp"

namespace odseg {

namespace fs = std::filesystem;

std::size_t MaskLabel::foreground() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

void SyntheticSpec::validate() const {
  auto require = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw ParameterError(std::string(key) + ": " + msg);
  };
  require(image_size >= 16, "gen.image_size", "must be >= 16");
  require(radius_min > 0.0 && radius_min < 0.5, "gen.radius_min", "must be in (0, 0.5)");
  require(radius_max > 0.0 && radius_max < 0.5, "gen.radius_max", "must be in (0, 0.5)");
  require(radius_min <= radius_max, "gen.radius_min", "must not exceed gen.radius_max");
  require(aspect_max >= 1.0, "gen.aspect_max", "must be >= 1");
  require(disc_intensity_min <= disc_intensity_max, "gen.disc_intensity_min", "must not exceed gen.disc_intensity_max");
  require(background_min <= background_max, "gen.background_min", "must not exceed gen.background_max");
  require(texture_amplitude >= 0.0, "gen.texture_amplitude", "must be >= 0");
  require(distractor_count >= 0, "gen.distractor_count", "must be >= 0");
  require(distractor_intensity >= 0.0, "gen.distractor_intensity", "must be >= 0");
  require(vessel_count >= 0, "gen.vessel_count", "must be >= 0");
  require(vessel_width > 0.0, "gen.vessel_width", "must be positive");
  require(noise_sigma >= 0.0, "gen.noise_sigma", "must be >= 0");
  // the disc plus a margin must fit inside the circular field of view
  require(radius_max * aspect_max < 0.36, "gen.radius_max", "disc does not fit in the field of view");
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Sample generate_sample(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.image_size;
  const double s = n;
  const double mid = (s - 1.0) / 2.0;
  std::vector<double> img(static_cast<std::size_t>(n) * n);
  auto px = [&](int x, int y) -> double& { return img[static_cast<std::size_t>(y) * n + x]; };

  // Background: base level, illumination ramp, low-frequency blobs.
  const double base = rng.uniform(spec.background_min, spec.background_max);
  const double ramp_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ramp = rng.uniform(0.0, 0.6 * spec.texture_amplitude);
  struct Blob {
    double x, y, sigma, amp;
  };
  std::vector<Blob> texture(6);
  for (auto& b : texture) b = {rng.uniform(0.0, s), rng.uniform(0.0, s), rng.uniform(0.06, 0.2) * s,
                               rng.uniform(-1.0, 1.0) * spec.texture_amplitude};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double v = base + ramp * ((x - mid) * std::cos(ramp_angle) + (y - mid) * std::sin(ramp_angle)) / mid;
      for (const auto& b : texture) {
        const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
        v += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
      }
      px(x, y) = v;
    }

  // Disc: axis-aligned ellipse inside the field of view.
  const double fov = 0.5 * s;
  const double r = rng.uniform(spec.radius_min, spec.radius_max) * s;
  const double aspect = rng.uniform(1.0 / spec.aspect_max, spec.aspect_max);
  const double rx = r * std::sqrt(aspect), ry = r / std::sqrt(aspect);
  const double reach = std::max(rx, ry);
  double cx, cy;
  do {
    cx = rng.uniform(reach + 1.0, s - 2.0 - reach);
    cy = rng.uniform(reach + 1.0, s - 2.0 - reach);
  } while (std::hypot(cx - mid, cy - mid) + reach > fov - 2.0);
  const double disc_gain = rng.uniform(spec.disc_intensity_min, spec.disc_intensity_max);

  Sample out;
  out.centroid = {cx, cy};
  out.mask = {n, n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n, 0)};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double rho = std::hypot((x - cx) / rx, (y - cy) / ry);
      if (rho <= 1.0) out.mask.values[static_cast<std::size_t>(y) * n + x] = 1;
      // one-pixel anti-aliased rim, slight dome and a brighter cup
      const double edge = clamp01((1.0 - rho) * r + 0.5);
      const double cup = clamp01((0.45 - rho) * r + 0.5);
      px(x, y) += disc_gain * (edge * (1.0 - 0.15 * std::min(rho, 1.0) * std::min(rho, 1.0)) + 0.35 * cup);
    }

  // Bright lesion-like distractors away from the disc.
  for (int i = 0; i < spec.distractor_count; ++i) {
    const double rd = rng.uniform(0.3, 0.7) * r;
    double dx, dy;
    int tries = 0;
    do {
      dx = rng.uniform(rd, s - 1.0 - rd);
      dy = rng.uniform(rd, s - 1.0 - rd);
    } while (++tries < 100 && (std::hypot(dx - cx, dy - cy) < reach + rd + 3.0 ||
                               std::hypot(dx - mid, dy - mid) + rd > fov - 1.0));
    if (tries >= 100) continue;
    const double amp = disc_gain * spec.distractor_intensity * rng.uniform(0.7, 1.1);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double q = std::hypot(x - dx, y - dy) / rd;
        px(x, y) += amp * std::exp(-q * q * q * q);
      }
  }

  // Vessels: dark tapered curves radiating from the disc centre.
  std::vector<double> dark(img.size(), 0.0);
  for (int i = 0; i < spec.vessel_count; ++i) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double length = rng.uniform(0.35, 0.7) * s;
    const double bend = rng.uniform(-0.2, 0.2) * s;
    const double ex = cx + length * std::cos(angle), ey = cy + length * std::sin(angle);
    const double mx = (cx + ex) / 2.0 - bend * std::sin(angle), my = (cy + ey) / 2.0 + bend * std::cos(angle);
    constexpr int kSteps = 160;
    for (int k = 0; k <= kSteps; ++k) {
      const double t = static_cast<double>(k) / kSteps;
      const double bx = (1 - t) * (1 - t) * cx + 2 * (1 - t) * t * mx + t * t * ex;
      const double by = (1 - t) * (1 - t) * cy + 2 * (1 - t) * t * my + t * t * ey;
      const double w = spec.vessel_width * (1.0 - 0.5 * t);
      const int x0 = static_cast<int>(std::floor(bx - 2 * w - 1)), x1 = static_cast<int>(std::ceil(bx + 2 * w + 1));
      const int y0 = static_cast<int>(std::floor(by - 2 * w - 1)), y1 = static_cast<int>(std::ceil(by + 2 * w + 1));
      for (int y = std::max(0, y0); y <= std::min(n - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(n - 1, x1); ++x) {
          const double d2 = ((x - bx) * (x - bx) + (y - by) * (y - by)) / (w * w);
          auto& dv = dark[static_cast<std::size_t>(y) * n + x];
          dv = std::max(dv, std::exp(-d2));
        }
    }
  }

  RawImage raw(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      double v = img[i] - spec.vessel_contrast * dark[i] + spec.noise_sigma * rng.normal();
      // circular field of view with a soft rim
      const double d = std::hypot(x - mid, y - mid);
      const double inside = clamp01((fov - d) / 2.0 + 0.5);
      v = inside * v + (1.0 - inside) * 6.0;
      raw.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  out.image = std::move(raw);
  return out;
}

Dataset generate_dataset(const SyntheticSpec& spec, std::size_t count) {
  spec.validate();
  Dataset d;
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(spec.seed, {i}));
    d.samples.push_back(generate_sample(spec, rng));
  }
  return d;
}

std::string describe(const SyntheticSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "gen.image_size = " << spec.image_size << "\n"
     << "gen.radius_min = " << spec.radius_min << "\n"
     << "gen.radius_max = " << spec.radius_max << "\n"
     << "gen.aspect_max = " << spec.aspect_max << "\n"
     << "gen.disc_intensity_min = " << spec.disc_intensity_min << "\n"
     << "gen.disc_intensity_max = " << spec.disc_intensity_max << "\n"
     << "gen.background_min = " << spec.background_min << "\n"
     << "gen.background_max = " << spec.background_max << "\n"
     << "gen.texture_amplitude = " << spec.texture_amplitude << "\n"
     << "gen.distractor_count = " << spec.distractor_count << "\n"
     << "gen.distractor_intensity = " << spec.distractor_intensity << "\n"
     << "gen.vessel_count = " << spec.vessel_count << "\n"
     << "gen.vessel_width = " << spec.vessel_width << "\n"
     << "gen.vessel_contrast = " << spec.vessel_contrast << "\n"
     << "gen.noise_sigma = " << spec.noise_sigma << "\n"
     << "gen.seed = " << spec.seed << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// On-disk format

namespace {

std::string sample_id(std::size_t i) {
  std::string s = std::to_string(i);
  if (s.size() < 4) s.insert(0, 4 - s.size(), '0');
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok, const std::string& context) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw FormatError(context + ": bad number '" + tok + "'");
  return v;
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir, const std::string& manifest) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec) throw FileError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  std::ofstream csv(dir / "centroids.csv", std::ios::binary);
  if (!csv) throw FileError("cannot write " + (dir / "centroids.csv").string());
  csv << "id,x,y\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    const std::string id = sample_id(i);
    write_pnm(dir / "images" / (id + ".pgm"), to_grayscale(s.image));
    RawImage mask(s.mask.width, s.mask.height, 1);
    for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = s.mask.values[p] ? 255 : 0;
    write_pnm(dir / "masks" / (id + ".pgm"), mask);
    csv << id << ',' << format_double(s.centroid.x) << ',' << format_double(s.centroid.y) << '\n';
  }
  std::ofstream man(dir / "manifest.txt", std::ios::binary);
  man << manifest;
  if (!csv || !man) throw FileError("write failed under " + dir.string());
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FileError("dataset directory not found: " + dir.string());
  std::ifstream csv(dir / "centroids.csv");
  if (!csv) throw FormatError("missing " + (dir / "centroids.csv").string());
  std::string line;
  if (!std::getline(csv, line) || line != "id,x,y")
    throw FormatError((dir / "centroids.csv").string() + ": header must be 'id,x,y'");

  Dataset d;
  std::size_t row = 1;
  while (std::getline(csv, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string ctx = (dir / "centroids.csv").string() + ":" + std::to_string(row);
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() != 3) throw FormatError(ctx + ": expected 3 columns");
    const std::string& id = cols[0];
    if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError(ctx + ": bad id '" + id + "'");

    Sample s;
    s.centroid = {parse_double(cols[1], ctx), parse_double(cols[2], ctx)};
    s.image = read_pnm(dir / "images" / (id + ".pgm"));
    const RawImage mask = read_pnm(dir / "masks" / (id + ".pgm"));
    if (mask.channels != 1 || mask.width != s.image.width || mask.height != s.image.height)
      throw FormatError("mask " + id + " is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                        ", image is " + std::to_string(s.image.width) + "x" + std::to_string(s.image.height));
    s.mask = {mask.width, mask.height, std::vector<std::uint8_t>(mask.data.size())};
    for (std::size_t p = 0; p < mask.data.size(); ++p) {
      if (mask.data[p] != 0 && mask.data[p] != 255)
        throw ValidationError("mask " + id + " has non-binary value " + std::to_string(mask.data[p]));
      s.mask.values[p] = mask.data[p] ? 1 : 0;
    }
    if (s.mask.foreground() == 0) throw ValidationError("mask " + id + " has no foreground");
    if (!(s.centroid.x >= 0.0 && s.centroid.x < s.image.width && s.centroid.y >= 0.0 &&
          s.centroid.y < s.image.height))
      throw ValidationError("centroid " + id + " lies outside the image");
    d.samples.push_back(std::move(s));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Splits

std::vector<std::size_t> all_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

std::vector<std::size_t> FoldPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::complement(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] != fold) out.push_back(i);
  return out;
}

FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("k-fold split needs k >= 2");
  if (n < static_cast<std::size_t>(k))
    throw ParameterError("cannot split " + std::to_string(n) + " samples into " + std::to_string(k) + " folds");
  auto perm = all_ids(n);
  Rng rng(seed);
  rng.shuffle(perm);
  FoldPlan plan{k, std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) plan.assignment[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

std::vector<std::size_t> subsample_fraction(const std::vector<std::size_t>& ids, int percent, std::uint64_t seed) {
  if (percent < 10 || percent > 100 || percent % 10 != 0)
    throw ParameterError("fraction must be one of 10, 20, ..., 100; got " + std::to_string(percent));
  std::vector<std::size_t> perm = ids;
  Rng rng(seed);
  rng.shuffle(perm);
  const std::size_t keep = (static_cast<std::size_t>(percent) * ids.size() + 99) / 100;
  perm.resize(keep);
  return perm;
}

SplitIds train_val_test_split(std::size_t n, double train_fraction, double val_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
    throw ParameterError("invalid train/validation fractions");
  auto perm = all_ids(n);
  Rng rng(seed);
  rng.shuffle(perm);
  const auto n_train = static_cast<std::size_t>(std::floor(n * train_fraction));
  const auto n_val = static_cast<std::size_t>(std::floor(n * val_fraction));
  SplitIds s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                      perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

// ---------------------------------------------------------------------------
// Tensors

Tensor image_tensor(const FloatImage& img) {
  return Tensor::from({1, 1, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)}, img.data);
}

Tensor mask_tensor(const MaskLabel& mask) {
  std::vector<double> v(mask.values.begin(), mask.values.end());
  return Tensor::from({1, 1, static_cast<std::size_t>(mask.height), static_cast<std::size_t>(mask.width)},
                      std::move(v));
}

CentroidLabel rescale_centroid(const CentroidLabel& c, int src_w, int src_h, int dst_w, int dst_h) {
  return {(c.x + 0.5) * dst_w / src_w - 0.5, (c.y + 0.5) * dst_h / src_h - 0.5};
}

MaskLabel resize_mask(const MaskLabel& mask, int width, int height) {
  if (mask.width == width && mask.height == height) return mask;
  MaskLabel out{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height)};
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_source_index(y, mask.height, height);
    for (int x = 0; x < width; ++x)
      out.values[static_cast<std::size_t>(y) * width + x] =
          mask.values[static_cast<std::size_t>(sy) * mask.width + nearest_source_index(x, mask.width, width)];
  }
  return out;
}

TensorSet localization_set(const Dataset& data, const std::vector<std::size_t>& ids, const PreprocessConfig& cfg) {
  TensorSet set;
  for (auto i : ids) {
    const auto& s = data.samples.at(i);
    set.inputs.push_back(image_tensor(preprocess_pipeline(s.image, cfg)));
    const auto c = rescale_centroid(s.centroid, s.image.width, s.image.height, cfg.target_size, cfg.target_size);
    set.targets.push_back(Tensor::from({1, 2}, {c.x, c.y}));
  }
  return set;
}

TensorSet segmentation_set(const Dataset& data, const std::vector<std::size_t>& ids, const PreprocessConfig& cfg) {
  TensorSet set;
  for (auto i : ids) {
    const auto& s = data.samples.at(i);
    set.inputs.push_back(image_tensor(preprocess_pipeline(s.image, cfg)));
    set.targets.push_back(mask_tensor(resize_mask(s.mask, cfg.target_size, cfg.target_size)));
  }
  return set;
}

}  // namespace odseg
