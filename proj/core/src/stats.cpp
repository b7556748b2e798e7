#include "nlidisc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nlidisc/error.hpp"

namespace nlidisc {

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
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
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return h;
}

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.variance += (x - m.mean) * (x - m.mean);
  m.variance /= static_cast<double>(xs.size() - 1);
  return m;
}

}  // namespace

std::string_view to_string(StatTest test) noexcept {
  switch (test) {
    case StatTest::welch_t: return "welch-t";
    case StatTest::mcnemar_exact: return "mcnemar-exact";
    case StatTest::mcnemar_chi2: return "mcnemar-chi2";
  }
  return "";
}

std::optional<StatTest> stat_test_from_string(std::string_view text) noexcept {
  for (auto t : {StatTest::welch_t, StatTest::mcnemar_exact, StatTest::mcnemar_chi2})
    if (to_string(t) == text) return t;
  return std::nullopt;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(Errc::invalid_argument, "incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw Error(Errc::invalid_argument, "degrees of freedom must be positive");
  if (std::isnan(t)) throw Error(Errc::invalid_argument, "t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return std::clamp(regularized_incomplete_beta(dof / 2.0, 0.5, x), 0.0, 1.0);
}

StatTestResult welch_t_test(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() < 2 || ys.size() < 2)
    throw Error(Errc::insufficient_samples, "welch_t_test needs at least two values per sample");
  const Moments mx = moments(xs);
  const Moments my = moments(ys);
  const double vx = mx.variance / static_cast<double>(xs.size());
  const double vy = my.variance / static_cast<double>(ys.size());
  const double se2 = vx + vy;

  StatTestResult r;
  r.test = StatTest::welch_t;
  if (se2 == 0.0) {
    if (mx.mean == my.mean) {
      r.statistic = 0.0;
      r.p_value = 1.0;
      return r;
    }
    throw Error(Errc::degenerate_variance, "both samples are constant with different means");
  }
  r.statistic = (mx.mean - my.mean) / std::sqrt(se2);
  const double dof = se2 * se2 / (vx * vx / static_cast<double>(xs.size() - 1) +
                                   vy * vy / static_cast<double>(ys.size() - 1));
  r.degrees_of_freedom = dof;
  r.p_value = student_t_two_sided_p(r.statistic, dof);
  return r;
}

StatTestResult mcnemar_test(std::uint64_t b, std::uint64_t c) {
  StatTestResult r;
  const std::uint64_t n = b + c;
  if (n == 0) {
    r.test = StatTest::mcnemar_exact;
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  if (n < 25) {
    r.test = StatTest::mcnemar_exact;
    r.statistic = static_cast<double>(std::min(b, c));
    const std::uint64_t k = std::min(b, c);
    double coef = 1.0;  // C(n, i), exact in double for n < 25
    double tail = 0.0;
    for (std::uint64_t i = 0; i <= k; ++i) {
      if (i > 0) coef = coef * static_cast<double>(n - i + 1) / static_cast<double>(i);
      tail += coef;
    }
    r.p_value = std::min(1.0, 2.0 * std::ldexp(tail, -static_cast<int>(n)));
    return r;
  }
  r.test = StatTest::mcnemar_chi2;
  const double diff = std::fabs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
  r.statistic = diff * diff / static_cast<double>(n);
  // Chi-square survival with one degree of freedom.
  r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
  return r;
}

}  // namespace nlidisc
