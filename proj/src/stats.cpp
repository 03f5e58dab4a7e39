#include "xmaml/stats.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "xmaml/errors.hpp"

namespace xmaml {
namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ArgumentError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("incomplete beta needs x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fastest below the mean; use the symmetry
  // I_x(a, b) = 1 - I_{1-x}(b, a) above it.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ArgumentError("degrees of freedom must be > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments paired_moments(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.size() != b.size()) throw StructureError(std::string(who) + ": samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) {
    throw InsufficientSamplesError(std::string(who) + " needs n >= 2, got " + std::to_string(n));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] - b[i];
  Moments m;
  m.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (a[i] - b[i]) - m.mean;
    ss += e * e;
  }
  m.var = ss / static_cast<double>(n - 1);
  return m;
}

// Zero-variance convention shared by both tests.
bool degenerate(const Moments& m, TTestResult& r) {
  if (m.var != 0.0) return false;
  r.zero_variance = true;
  if (m.mean == 0.0) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = m.mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
  }
  return true;
}

}  // namespace

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  const Moments m = paired_moments(a, b, "paired_t_test");
  TTestResult r;
  r.df = a.size() - 1;
  if (degenerate(m, r)) return r;
  r.t = m.mean / std::sqrt(m.var / static_cast<double>(a.size()));
  r.p = student_t_two_sided_p(r.t, static_cast<double>(r.df));
  return r;
}

TTestResult corrected_resampled_t_test(std::span<const double> a, std::span<const double> b,
                                       double test_train_ratio) {
  if (!(test_train_ratio >= 0.0) || !std::isfinite(test_train_ratio)) {
    throw ArgumentError("test/train ratio must be finite and >= 0");
  }
  const Moments m = paired_moments(a, b, "corrected_resampled_t_test");
  TTestResult r;
  r.df = a.size() - 1;
  if (degenerate(m, r)) {
    if (m.mean < 0.0) r.p = 1.0;
    return r;
  }
  r.t = m.mean / std::sqrt(m.var * (1.0 / static_cast<double>(a.size()) + test_train_ratio));
  const double tail = 0.5 * student_t_two_sided_p(r.t, static_cast<double>(r.df));
  r.p = r.t >= 0.0 ? tail : 1.0 - tail;
  return r;
}

double bonferroni(double base_cutoff, std::size_t m) {
  if (m < 1) throw ArgumentError("bonferroni needs m >= 1");
  if (!(base_cutoff > 0.0 && base_cutoff < 1.0)) {
    throw ArgumentError("bonferroni base cutoff must be in (0, 1)");
  }
  return base_cutoff / static_cast<double>(m);
}

}  // namespace xmaml
