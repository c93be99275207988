#pragma once

#include <vector>

namespace odseg {

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct PairedScores {
  std::vector<double> pretrained;
  std::vector<double> baseline;
};

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;  // two-sided
  // Zero-variance differences with nonzero mean: t is +/-inf and p is 0.
  bool degenerate = false;
};

/// Paired t-test on d_i = pretrained_i - baseline_i with sample standard
/// deviation; two-sided p-value from the Student-t distribution.
TTestResult paired_t_test(const PairedScores& scores);

/// Sample mean and standard deviation (n - 1 denominator; 0 when n < 2).
double mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v);

}  // namespace odseg
