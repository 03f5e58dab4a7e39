#pragma once

#include <cstddef>
#include <span>

namespace xmaml {

/// I_x(a, b), evaluated with a modified-Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);

double normal_cdf(double x);

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;
  /// The differences had zero sample variance; t is 0 (p = 1) when their
  /// mean is 0 and +-infinity (p = 0) otherwise.
  bool zero_variance = false;
};

/// Two-sided paired t-test on d = a - b. Throws InsufficientSamplesError
/// when n < 2 and StructureError on a length mismatch.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// One-sided test of mean(a - b) > 0 over resampled train/test splits
/// (Nadeau & Bengio's corrected resampled t): the sample variance is scaled
/// by (1/n + test_train_ratio) instead of 1/n to account for overlap between
/// splits. Same zero-variance convention and errors as paired_t_test.
TTestResult corrected_resampled_t_test(std::span<const double> a, std::span<const double> b,
                                       double test_train_ratio);

/// base_cutoff / m. Throws ArgumentError unless m >= 1 and 0 < base < 1.
double bonferroni(double base_cutoff, std::size_t m);

}  // namespace xmaml
