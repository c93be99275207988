#include "odseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "odseg/error.hpp"

namespace odseg {

namespace {

using detail::Node;

struct Dims4 {
  std::size_t b, c, h, w;
};

Dims4 image_dims(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected [B,C,H,W], got " + shape_str(t.shape()));
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

void check_vector(const Tensor& t, std::size_t n, const char* op, const char* what) {
  if (t.rank() != 1 || t.dim(0) != n)
    throw ShapeError(std::string(op) + ": " + what + " must be [" + std::to_string(n) + "], got " +
                     shape_str(t.shape()));
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Sum of term(i) for i in [0, n). Lane j accumulates the indices congruent to
// j mod 32 and lanes combine in a fixed order, so the rounding never depends
// on buffer alignment.
template <typename Term>
double lane_sum(std::size_t n, Term term) {
  constexpr std::size_t kLanes = 32;
  double lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t j = 0; j < kLanes; ++j) lanes[j] += term(i + j);
  for (; i < n; ++i) lanes[i % kLanes] += term(i);
  for (std::size_t width = kLanes / 2; width > 0; width /= 2)
    for (std::size_t j = 0; j < width; ++j) lanes[j] += lanes[j + width];
  return lanes[0];
}

double lane_sum(const double* p, std::size_t n) {
  return lane_sum(n, [p](std::size_t i) { return p[i]; });
}

// Column buffers cover bands of image rows so they stay cache resident.
constexpr std::size_t kBandColumns = 512;

std::size_t band_rows(std::size_t w) { return std::max<std::size_t>(1, kBandColumns / w); }

// For output rows [y0, y1): cols[(ci*9 + ky*3 + kx), (y-y0)*w + x] =
// in[ci][y+ky-1][x+kx-1], zero outside the image.
void im2col3x3(const double* in, std::size_t c, std::size_t h, std::size_t w, std::size_t y0, std::size_t y1,
               double* cols) {
  const std::size_t plane = h * w;
  const std::size_t n = (y1 - y0) * w;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols + ((ci * 9) + static_cast<std::size_t>(ky * 3 + kx)) * n;
        for (std::size_t y = y0; y < y1; ++y) {
          double* dst = row + (y - y0) * w;
          const long iy = static_cast<long>(y) + ky - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = in + ci * plane + static_cast<std::size_t>(iy) * w;
          if (kx == 0) {
            dst[0] = 0.0;
            std::copy(src, src + w - 1, dst + 1);
          } else if (kx == 1) {
            std::copy(src, src + w, dst);
          } else {
            std::copy(src + 1, src + w, dst);
            dst[w - 1] = 0.0;
          }
        }
      }
}

// Adjoint of im2col3x3: scatters column gradients back onto the input.
void col2im3x3_add(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t y0, std::size_t y1,
                   double* in) {
  const std::size_t plane = h * w;
  const std::size_t n = (y1 - y0) * w;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols + ((ci * 9) + static_cast<std::size_t>(ky * 3 + kx)) * n;
        for (std::size_t y = y0; y < y1; ++y) {
          const long iy = static_cast<long>(y) + ky - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          const double* src = row + (y - y0) * w;
          double* dst = in + ci * plane + static_cast<std::size_t>(iy) * w;
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? w - 1 : w;
          const long shift = kx - 1;
#pragma omp simd
          for (std::size_t x = x0; x < x1; ++x) dst[x + shift] += src[x];
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const auto d = image_dims(input, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3)
    throw ShapeError("conv2d: weight must be [Cout,Cin,3,3], got " + shape_str(weight.shape()));
  if (weight.dim(1) != d.c)
    throw ShapeError("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  const std::size_t cout = weight.dim(0);
  check_vector(bias, cout, "conv2d", "bias");

  const std::size_t plane = d.h * d.w;
  const std::size_t k = d.c * 9;
  const std::size_t rows = band_rows(d.w);
  std::vector<double> out(d.b * cout * plane);
  std::vector<double> cols(k * rows * d.w);
  const ConstMatrixMap wt(weight.values().data(), cout, k);
  const double* bs = bias.values().data();
  for (std::size_t b = 0; b < d.b; ++b) {
    double* ob = out.data() + b * cout * plane;
    for (std::size_t y0 = 0; y0 < d.h; y0 += rows) {
      const std::size_t y1 = std::min(d.h, y0 + rows);
      const std::size_t n = (y1 - y0) * d.w;
      im2col3x3(input.values().data() + b * d.c * plane, d.c, d.h, d.w, y0, y1, cols.data());
      StridedMap o(ob + y0 * d.w, cout, n, Eigen::OuterStride<>(plane));
      o.noalias() = wt * ConstMatrixMap(cols.data(), k, n);
    }
    for (std::size_t co = 0; co < cout; ++co) {
      double* op = ob + co * plane;
      for (std::size_t i = 0; i < plane; ++i) op[i] += bs[co];
    }
  }

  return Tensor::make_result(
      {d.b, cout, d.h, d.w}, std::move(out), {input, weight, bias}, [d, cout, plane, k, rows](Node& self) {
        Node& in = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        const double* g = self.grad.data();
        if (bn.requires_grad) {
          for (std::size_t b = 0; b < d.b; ++b)
            for (std::size_t co = 0; co < cout; ++co) {
              const double* gp = g + (b * cout + co) * plane;
              bn.grad[co] += lane_sum(gp, plane);
            }
        }
        std::vector<double> cols(k * rows * d.w);
        const ConstMatrixMap wt(wn.values.data(), cout, k);
        MatrixMap wg(wn.grad.data(), cout, wn.requires_grad ? k : 0);
        for (std::size_t b = 0; b < d.b; ++b)
          for (std::size_t y0 = 0; y0 < d.h; y0 += rows) {
            const std::size_t y1 = std::min(d.h, y0 + rows);
            const std::size_t n = (y1 - y0) * d.w;
            const ConstStridedMap gb(g + b * cout * plane + y0 * d.w, cout, n, Eigen::OuterStride<>(plane));
            if (wn.requires_grad) {
              im2col3x3(in.values.data() + b * d.c * plane, d.c, d.h, d.w, y0, y1, cols.data());
              wg.noalias() += gb * ConstMatrixMap(cols.data(), k, n).transpose();
            }
            if (in.requires_grad) {
              MatrixMap(cols.data(), k, n).noalias() = wt.transpose() * gb;
              col2im3x3_add(cols.data(), d.c, d.h, d.w, y0, y1, in.grad.data() + b * d.c * plane);
            }
          }
      });
}

Tensor conv1x1(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const auto d = image_dims(input, "conv1x1");
  if (weight.rank() != 4 || weight.dim(2) != 1 || weight.dim(3) != 1)
    throw ShapeError("conv1x1: weight must be [Cout,Cin,1,1], got " + shape_str(weight.shape()));
  if (weight.dim(1) != d.c)
    throw ShapeError("conv1x1: input has " + std::to_string(d.c) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  const std::size_t cout = weight.dim(0);
  check_vector(bias, cout, "conv1x1", "bias");

  const std::size_t plane = d.h * d.w;
  std::vector<double> out(d.b * cout * plane);
  const ConstMatrixMap wt(weight.values().data(), cout, d.c);
  for (std::size_t b = 0; b < d.b; ++b) {
    MatrixMap o(out.data() + b * cout * plane, cout, plane);
    o.noalias() = wt * ConstMatrixMap(input.values().data() + b * d.c * plane, d.c, plane);
    for (std::size_t co = 0; co < cout; ++co) o.row(co).array() += bias.values()[co];
  }

  return Tensor::make_result({d.b, cout, d.h, d.w}, std::move(out), {input, weight, bias},
                             [d, cout, plane](Node& self) {
                               Node& in = *self.parents[0];
                               Node& wn = *self.parents[1];
                               Node& bn = *self.parents[2];
                               const ConstMatrixMap wt(wn.values.data(), cout, d.c);
                               for (std::size_t b = 0; b < d.b; ++b) {
                                 const ConstMatrixMap gb(self.grad.data() + b * cout * plane, cout, plane);
                                 if (bn.requires_grad)
                                   for (std::size_t co = 0; co < cout; ++co)
                                     bn.grad[co] += lane_sum(gb.row(co).data(), plane);
                                 if (wn.requires_grad)
                                   MatrixMap(wn.grad.data(), cout, d.c).noalias() +=
                                       gb * ConstMatrixMap(in.values.data() + b * d.c * plane, d.c, plane).transpose();
                                 if (in.requires_grad)
                                   MatrixMap(in.grad.data() + b * d.c * plane, d.c, plane).noalias() +=
                                       wt.transpose() * gb;
                               }
                             });
}

Tensor maxpool2(const Tensor& input) {
  const auto d = image_dims(input, "maxpool2");
  if (d.h % 2 != 0 || d.w % 2 != 0)
    throw ShapeError("maxpool2: spatial dims must be even, got " + shape_str(input.shape()));
  const std::size_t oh = d.h / 2, ow = d.w / 2;
  const std::size_t n = d.b * d.c * oh * ow;
  std::vector<double> out(n);
  std::vector<std::size_t> argmax(n);
  const double* x = input.values().data();
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < d.b * d.c; ++bc) {
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t base = bc * d.h * d.w + 2 * y * d.w + 2 * xx;
        const std::size_t cand[4] = {base, base + 1, base + d.w, base + d.w + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i)
          if (x[cand[i]] > x[best]) best = cand[i];
        out[o] = x[best];
        argmax[o] = best;
      }
  }
  return Tensor::make_result({d.b, d.c, oh, ow}, std::move(out), {input},
                             [argmax = std::move(argmax)](Node& self) {
                               Node& in = *self.parents[0];
                               for (std::size_t i = 0; i < argmax.size(); ++i) in.grad[argmax[i]] += self.grad[i];
                             });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode) {
  const auto d = image_dims(input, "batch_norm");
  check_vector(gamma, d.c, "batch_norm", "gamma");
  check_vector(beta, d.c, "batch_norm", "beta");
  if (state.running_mean.size() != d.c || state.running_var.size() != d.c)
    throw ShapeError("batch_norm: running statistics sized for " + std::to_string(state.running_mean.size()) +
                     " channels, input has " + std::to_string(d.c));
  const std::size_t plane = d.h * d.w;
  const std::size_t count = d.b * plane;
  if (mode == Mode::Train && count < 2)
    throw ShapeError("batch_norm: train mode needs at least 2 values per channel");

  const double* x = input.values().data();
  std::vector<double> mean(d.c), inv_std(d.c);
  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < d.c; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        s += lane_sum(x + (b * d.c + c) * plane, plane);
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < d.b; ++b) {
        const double* p = x + (b * d.c + c) * plane;
        ss += lane_sum(plane, [p, m](std::size_t i) { return (p[i] - m) * (p[i] - m); });
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEpsilon);
      // Running variance tracks the unbiased estimate.
      const double unbiased = ss / static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - kBatchNormMomentum) * state.running_mean[c] + kBatchNormMomentum * m;
      state.running_var[c] = (1.0 - kBatchNormMomentum) * state.running_var[c] + kBatchNormMomentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < d.c; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + kBatchNormEpsilon);
    }
  }

  std::vector<double> xhat(input.numel()), out(input.numel());
  const double* g = gamma.values().data();
  const double* bt = beta.values().data();
  for (std::size_t b = 0; b < d.b; ++b)
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t off = (b * d.c + c) * plane;
      const double m = mean[c], is = inv_std[c], gc = g[c], bc = bt[c];
      double* xh = xhat.data() + off;
      double* o = out.data() + off;
      const double* xi = x + off;
#pragma omp simd
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (xi[i] - m) * is;
        o[i] = gc * xh[i] + bc;
      }
    }

  const bool train = mode == Mode::Train;
  return Tensor::make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [d, plane, count, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& in = *self.parents[0];
        Node& gn = *self.parents[1];
        Node& bn = *self.parents[2];
        const double* gy = self.grad.data();
        for (std::size_t c = 0; c < d.c; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < d.b; ++b) {
            const std::size_t off = (b * d.c + c) * plane;
            const double* gp = gy + off;
            const double* xh = xhat.data() + off;
            sum_g += lane_sum(gp, plane);
            sum_gx += lane_sum(plane, [gp, xh](std::size_t i) { return gp[i] * xh[i]; });
          }
          if (gn.requires_grad) gn.grad[c] += sum_gx;
          if (bn.requires_grad) bn.grad[c] += sum_g;
          if (!in.requires_grad) continue;
          const double k = gn.values[c] * inv_std[c];
          const double n = static_cast<double>(count);
          const double mg = train ? sum_g / n : 0.0;
          const double mgx = train ? sum_gx / n : 0.0;
          for (std::size_t b = 0; b < d.b; ++b) {
            const std::size_t off = (b * d.c + c) * plane;
            const double* gp = gy + off;
            const double* xh = xhat.data() + off;
            double* gi = in.grad.data() + off;
#pragma omp simd
            for (std::size_t i = 0; i < plane; ++i) gi[i] += k * (gp[i] - mg - xh[i] * mgx);
          }
        }
      });
}

Tensor relu(const Tensor& input) {
  std::vector<double> out(input.values().begin(), input.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_result(input.shape(), std::move(out), {input}, [](Node& self) {
    Node& in = *self.parents[0];
    const std::size_t n = self.grad.size();
    const double* x = in.values.data();
    const double* g = self.grad.data();
    double* gi = in.grad.data();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) gi[i] += x[i] > 0.0 ? g[i] : 0.0;
  });
}

Tensor sigmoid(const Tensor& input) {
  std::vector<double> out(input.numel());
  auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // split form avoids overflow in exp for large |x|
    if (x[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      out[i] = e / (1.0 + e);
    }
  }
  return Tensor::make_result(input.shape(), std::move(out), {input}, [](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.values[i];
      in.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(input.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(input.numel());
  auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return Tensor::make_result(input.shape(), std::move(out), {input}, [mask = std::move(mask)](Node& self) {
    Node& in = *self.parents[0];
    const std::size_t n = mask.size();
    const double* g = self.grad.data();
    double* gi = in.grad.data();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) gi[i] += g[i] * mask[i];
  });
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t b = input.dim(0);
  const std::size_t f = b == 0 ? 0 : input.numel() / b;
  std::vector<double> out(input.values().begin(), input.values().end());
  return Tensor::make_result({b, f}, std::move(out), {input}, [](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 2) throw ShapeError("linear: input must be [B,F], got " + shape_str(input.shape()));
  if (weight.rank() != 2 || weight.dim(1) != input.dim(1))
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(input.shape()));
  const std::size_t bsz = input.dim(0), f = input.dim(1), o = weight.dim(0);
  check_vector(bias, o, "linear", "bias");
  std::vector<double> out(bsz * o);
  const double* x = input.values().data();
  const double* w = weight.values().data();
  for (std::size_t b = 0; b < bsz; ++b)
    for (std::size_t j = 0; j < o; ++j) {
      const double* xr = x + b * f;
      const double* wr = w + j * f;
      out[b * o + j] = lane_sum(f, [xr, wr](std::size_t i) { return xr[i] * wr[i]; }) + bias.values()[j];
    }
  return Tensor::make_result({bsz, o}, std::move(out), {input, weight, bias}, [bsz, f, o](Node& self) {
    Node& in = *self.parents[0];
    Node& wn = *self.parents[1];
    Node& bn = *self.parents[2];
    for (std::size_t b = 0; b < bsz; ++b)
      for (std::size_t j = 0; j < o; ++j) {
        const double g = self.grad[b * o + j];
        if (bn.requires_grad) bn.grad[j] += g;
        if (wn.requires_grad)
          for (std::size_t i = 0; i < f; ++i) wn.grad[j * f + i] += g * in.values[b * f + i];
        if (in.requires_grad)
          for (std::size_t i = 0; i < f; ++i) in.grad[b * f + i] += g * wn.values[j * f + i];
      }
  });
}

Tensor upsample2(const Tensor& input) {
  const auto d = image_dims(input, "upsample2");
  const std::size_t oh = 2 * d.h, ow = 2 * d.w;
  std::vector<double> out(d.b * d.c * oh * ow);
  auto x = input.values();
  for (std::size_t bc = 0; bc < d.b * d.c; ++bc)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) out[(bc * oh + y) * ow + xx] = x[(bc * d.h + y / 2) * d.w + xx / 2];
  return Tensor::make_result({d.b, d.c, oh, ow}, std::move(out), {input}, [d, oh, ow](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t bc = 0; bc < d.b * d.c; ++bc)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          in.grad[(bc * d.h + y / 2) * d.w + xx / 2] += self.grad[(bc * oh + y) * ow + xx];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const auto da = image_dims(a, "concat_channels");
  const auto db = image_dims(b, "concat_channels");
  if (da.b != db.b || da.h != db.h || da.w != db.w)
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ outside the channel axis");
  const std::size_t plane = da.h * da.w;
  const std::size_t ca = da.c * plane, cb = db.c * plane;
  std::vector<double> out(da.b * (ca + cb));
  for (std::size_t n = 0; n < da.b; ++n) {
    std::copy_n(a.values().data() + n * ca, ca, out.data() + n * (ca + cb));
    std::copy_n(b.values().data() + n * cb, cb, out.data() + n * (ca + cb) + ca);
  }
  return Tensor::make_result({da.b, da.c + db.c, da.h, da.w}, std::move(out), {a, b}, [da, ca, cb](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    for (std::size_t n = 0; n < da.b; ++n) {
      const double* g = self.grad.data() + n * (ca + cb);
      if (na.requires_grad)
        for (std::size_t i = 0; i < ca; ++i) na.grad[n * ca + i] += g[i];
      if (nb.requires_grad)
        for (std::size_t i = 0; i < cb; ++i) nb.grad[n * cb + i] += g[ca + i];
    }
  });
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() != tail.size() + 1 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1))
      throw ShapeError("concat_batch: mismatched shape " + shape_str(p.shape()));
    offsets.push_back(total);
    total += p.dim(0);
  }
  Shape shape = tail;
  shape.insert(shape.begin(), total);
  std::vector<double> out;
  out.reserve(shape_numel(shape));
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& parent : self.parents) {
      if (parent->requires_grad)
        for (std::size_t i = 0; i < parent->values.size(); ++i) parent->grad[i] += self.grad[off + i];
      off += parent->values.size();
    }
  });
}

Tensor sum(const Tensor& input) {
  double s = 0.0;
  for (double v : input.values()) s += v;
  return Tensor::make_result({}, {s}, {input}, [](Node& self) {
    Node& in = *self.parents[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

Tensor scale(const Tensor& input, double factor) {
  std::vector<double> out(input.values().begin(), input.values().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(input.shape(), std::move(out), {input}, [factor](Node& self) {
    Node& in = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += factor * self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& parent : self.parents)
      if (parent->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) parent->grad[i] += self.grad[i];
  });
}

}  // namespace odseg
