#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace nlidisc::testing {

namespace mp = boost::multiprecision;

TokenEmbeddings random_sequence(Rng& rng, std::size_t len, std::size_t dim) {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;
  for (std::size_t i = 0; i < len; ++i) {
    tokens.push_back("t" + std::to_string(i));
    std::vector<double> v(dim);
    do {
      for (double& x : v) x = rng.unit() * 2.0 - 1.0;
    } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
    vectors.push_back(std::move(v));
  }
  return TokenEmbeddings::normalized(std::move(tokens), std::move(vectors));
}

ScoreTriple brute_force_score(const TokenEmbeddings& cand, const TokenEmbeddings& ref, bool clamp) {
  std::vector<std::vector<double>> sim(cand.size(), std::vector<double>(ref.size()));
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      double num = 0, na = 0, nb = 0;
      for (std::size_t d = 0; d < cand.dim(); ++d) {
        num += cand.vectors[i][d] * ref.vectors[j][d];
        na += cand.vectors[i][d] * cand.vectors[i][d];
        nb += ref.vectors[j][d] * ref.vectors[j][d];
      }
      double c = num / std::sqrt(na * nb);
      if (clamp) c = std::min(1.0, std::max(0.0, c));
      sim[i][j] = c;
    }
  }
  ScoreTriple s;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    double best = sim[i][0];
    for (std::size_t j = 1; j < ref.size(); ++j) best = std::max(best, sim[i][j]);
    s.precision += best / cand.size();
  }
  for (std::size_t j = 0; j < ref.size(); ++j) {
    double best = sim[0][j];
    for (std::size_t i = 1; i < cand.size(); ++i) best = std::max(best, sim[i][j]);
    s.recall += best / ref.size();
  }
  s.f1 = s.precision + s.recall <= 0 ? 0 : 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

double welch_oracle(const std::vector<double>& xs, const std::vector<double>& ys) {
  using Big = mp::cpp_bin_float_50;
  auto moments = [](const std::vector<double>& v) {
    Big mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    Big var = 0;
    for (double x : v) var += (Big(x) - mean) * (Big(x) - mean);
    var /= (v.size() - 1);
    return std::pair{mean, var / v.size()};
  };
  auto [mx, vx] = moments(xs);
  auto [my, vy] = moments(ys);
  const Big se2 = vx + vy;
  const Big t = (mx - my) / mp::sqrt(se2);
  const Big dof = se2 * se2 / (vx * vx / (xs.size() - 1) + vy * vy / (ys.size() - 1));
  boost::math::students_t_distribution<Big> dist(dof);
  return static_cast<double>(2 * boost::math::cdf(boost::math::complement(dist, mp::abs(t))));
}

double exact_mcnemar_oracle(unsigned b, unsigned c) {
  const unsigned n = b + c;
  if (n == 0) return 1.0;
  const unsigned k = std::min(b, c);
  mp::cpp_int tail = 0;
  mp::cpp_int coef = 1;
  for (unsigned i = 0; i <= k; ++i) {
    if (i > 0) coef = coef * (n - i + 1) / i;
    tail += coef;
  }
  mp::cpp_rational p(2 * tail, mp::cpp_int(1) << n);
  if (p > 1) p = 1;
  return static_cast<double>(p);
}

bool brute_three_of_five(const NLIProblem& problem) {
  if (!problem.annotator_labels || problem.annotator_labels->size() != 5) return false;
  int best = 0;
  for (Label l : {Label::entailment, Label::contradiction, Label::neutral})
    best = std::max(best, static_cast<int>(std::count(problem.annotator_labels->begin(),
                                                      problem.annotator_labels->end(), l)));
  return best == 3;
}

}  // namespace nlidisc::testing
