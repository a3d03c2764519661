#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "saspec/cocycle.hpp"
#include "saspec/projective.hpp"
#include "saspec/symbolic.hpp"

namespace saspec {

/// Bernoulli measure for sigma^n: i.i.d. blocks drawn from `weights` over `support`.
struct StepBernoulliMeasure {
  int N = 0;
  int n = 0;
  std::vector<Word> support;
  std::vector<double> weights;

  /// Throws InvalidInput on negative weights, a sum away from 1 by more than 1e-12, or bad words.
  void validate() const;
  std::size_t size() const { return support.size(); }

  static StepBernoulliMeasure uniform(int N, int n);
  static StepBernoulliMeasure bernoulli(std::vector<double> p);
};

/// -sum w log w / n (nats per symbol).
double entropy(const StepBernoulliMeasure& mu);

struct Interval {
  double lower = 0, upper = 0;
  double mid() const { return 0.5 * (lower + upper); }
  double width() const { return upper - lower; }
  bool contains(double x, double tol = 0) const { return x >= lower - tol && x <= upper + tol; }
};

enum class LyapunovMethod { FiniteN, MonteCarlo };

struct LyapunovOptions {
  LyapunovMethod method = LyapunovMethod::FiniteN;
  /// Finite-n: number of blocks (0 picks the largest k <= max_blocks within the term budget).
  int k = 0;
  int max_blocks = 6;
  std::uint64_t term_budget = 1000000;
  /// Finite-n: the support lies in a certified subsystem with this defect.
  std::optional<double> Z;
  /// Monte-Carlo
  int chains = 64;
  std::uint64_t steps = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct LyapunovEstimate {
  Interval chi1, chi2;
  LyapunovMethod method = LyapunovMethod::FiniteN;
  /// -E log|det| / n, computed exactly.
  double sum = 0;
  int k = 0;
  std::uint64_t terms = 0;
  bool certified = false;
  bool budget_limited = false;
  double half_width = 0;
};

LyapunovEstimate lyapunov_exponents(const std::vector<Mat2>& mats, const StepBernoulliMeasure& mu,
                                    const LyapunovOptions& opt = {});
LyapunovEstimate lyapunov_exponents(const AffineIfs& ifs, const StepBernoulliMeasure& mu,
                                    const LyapunovOptions& opt = {});

/// min{h/chi1, 1 + (h - chi1)/chi2}.
double lyapunov_dimension(double h, double chi1, double chi2);
/// Range of the dimension over chi1 in the bracket with chi1 + chi2 = sum held fixed.
Interval lyapunov_dimension_range(double h, const LyapunovEstimate& est);

/// Weights proportional to exp(values).
StepBernoulliMeasure equilibrium_weights(int N, std::vector<Word> support, const std::vector<double>& values);

struct MatchOptions {
  double s = 1.0;
  double tol = 1e-8;
  int max_newton = 200;
  int max_outer = 100;
  /// Certified subsystem at block length n; without one the support is Sigma_n and Psi_n is
  /// log phi^s of the block products.
  const DominatedSubsystem* subsystem = nullptr;
  double oseledets_tol = 1e-10;
  LyapunovOptions lyapunov;
  int threads = 1;
};

struct MatchReport {
  StepBernoulliMeasure measure;
  std::vector<double> q;
  /// Exact Birkhoff average of Phi under the sigma-average of the measure.
  std::vector<double> average;
  double residual = 0;
  double entropy = 0;
  LyapunovEstimate lyapunov;
  Interval dimension;
  int newton_steps = 0;
  bool on_subsystem = false;
  /// Largest Oseledets truncation width used for Psi_n.
  double psi_width = 0;
  /// s Z / n plus |q| sum_{j<d} Var_j / n.
  double slack = 0;
};

MatchReport match_measure(const AffineIfs& ifs, const LocallyConstantPotential& phi, const std::vector<double>& alpha,
                          int n, const MatchOptions& opt = {});

}  // namespace saspec
