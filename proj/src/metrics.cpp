#include "odseg/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "odseg/error.hpp"

namespace odseg {

double euclidean_error(const CentroidLabel& pred, const CentroidLabel& truth) {
  return std::hypot(pred.x - truth.x, pred.y - truth.y);
}

MaskLabel threshold_mask(const Tensor& prob, double threshold) {
  const auto& s = prob.shape();
  const bool ok = s.size() >= 2 && s.size() <= 4 &&
                  std::all_of(s.begin(), s.end() - 2, [](std::size_t d) { return d == 1; });
  if (!ok) throw ShapeError("threshold_mask: expected a single-channel map, got " + shape_str(s));
  MaskLabel m{static_cast<int>(s[s.size() - 1]), static_cast<int>(s[s.size() - 2]), {}};
  m.values.resize(prob.numel());
  auto v = prob.values();
  for (std::size_t i = 0; i < v.size(); ++i) m.values[i] = v[i] > threshold ? 1 : 0;
  return m;
}

double dice_coefficient(const MaskLabel& a, const MaskLabel& b) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size())
    throw ShapeError("dice_coefficient: masks differ in size");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    na += a.values[i] != 0;
    nb += b.values[i] != 0;
    both += a.values[i] != 0 && b.values[i] != 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

LocalizationReport localization_report(const std::vector<CentroidLabel>& pred,
                                       const std::vector<CentroidLabel>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("localization_report: prediction/truth count mismatch");
  if (pred.empty()) throw ParameterError("localization_report: empty split");
  LocalizationReport r;
  r.count = pred.size();
  double sq = 0.0, eu = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].x - truth[i].x, dy = pred[i].y - truth[i].y;
    sq += dx * dx + dy * dy;
    eu += euclidean_error(pred[i], truth[i]);
  }
  r.mse = sq / (2.0 * static_cast<double>(pred.size()));
  r.mean_euclidean = eu / static_cast<double>(pred.size());
  return r;
}

}  // namespace odseg
