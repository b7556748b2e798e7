#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace nlidisc {

enum class StatTest { welch_t, mcnemar_exact, mcnemar_chi2 };
std::string_view to_string(StatTest test) noexcept;
std::optional<StatTest> stat_test_from_string(std::string_view text) noexcept;

inline constexpr double kSignificanceLevel = 0.01;

struct StatTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  StatTest test = StatTest::welch_t;
  double significant_at = kSignificanceLevel;
  /// Welch-Satterthwaite degrees of freedom (t-test only).
  std::optional<double> degrees_of_freedom;

  bool significant() const noexcept { return p_value < significant_at; }
};

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

/// Welch's unequal-variance t-test, two-sided.
/// Throws InsufficientSamples (fewer than two values on a side). When both
/// samples have zero variance, equal means give statistic 0 and p = 1;
/// different means throw DegenerateVariance.
StatTestResult welch_t_test(std::span<const double> xs, std::span<const double> ys);

/// McNemar's test on discordant counts b and c. Exact two-sided binomial
/// when b + c < 25, otherwise chi-square with continuity correction,
/// (|b - c| - 1)^2 / (b + c). b = c = 0 gives p = 1.
StatTestResult mcnemar_test(std::uint64_t b, std::uint64_t c);

}  // namespace nlidisc
