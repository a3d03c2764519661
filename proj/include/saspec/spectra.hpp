#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "saspec/measures.hpp"
#include "saspec/pressure.hpp"

namespace saspec {

struct SpectrumOptions {
  int n = 10;
  /// Bisection tolerance on s.
  double tol = 1e-6;
  int threads = 1;
  /// Certified subsystem; its block length may differ from n.
  const DominatedSubsystem* subsystem = nullptr;
  /// Attach a witness measure (match_measure or the Legendre equilibrium measure).
  bool witness = false;
  /// Block length of the match_measure witness when no subsystem is given.
  int witness_n = 1;
  int max_newton = 100;
  /// A point counts as converged when its s bracket is at most this wide.
  double max_width = 0.1;
  std::uint64_t cycle_cap = 1000000;
};

struct SpectrumPoint {
  std::vector<double> alpha;
  Interval s;
  /// Root of the upper (subadditive) estimator; lies in s.
  double s_value = 0;
  std::vector<double> q_star;
  std::optional<Interval> h_top;
  std::optional<double> h_value;
  std::optional<StepBernoulliMeasure> witness;
  std::optional<double> witness_entropy;
  std::optional<LyapunovEstimate> witness_lyapunov;
  std::optional<Interval> witness_dimension;
  /// Characterization (ii) of the Lyapunov spectrum, min{h/alpha1, 1 + (h - alpha1)/alpha2}.
  std::optional<Interval> s_formula;
  bool boundary = false;
  bool converged = true;
  int n = 0;
};

/// Slope constants: C1 = min_i -log||A_i||, C = max_i log||A_i^{-1}||.
std::pair<double, double> slope_constants(const std::vector<Mat2>& mats);

/// dim of the Birkhoff level set via sup{s : inf_q P(log phi^s + <q, Phi - alpha>) >= 0}.
SpectrumPoint birkhoff_spectrum(const AffineIfs& ifs, const LocallyConstantPotential& phi,
                                const std::vector<double>& alpha, const SpectrumOptions& opt = {});

/// Legendre value inf_q {P(log psi^{-q}) - <q, alpha>}.
struct EntropyResult {
  Interval h;
  double value = 0;
  std::array<double, 2> q_star{0, 0};
};
EntropyResult entropy_spectrum(const AffineIfs& ifs, std::array<double, 2> alpha, const SpectrumOptions& opt = {});

/// (1/n) log #{w in Sigma_n : |chi_hat(w) - alpha|_inf < eps}, chi_hat(w) = -(log sigma1, log sigma2)/n.
double counting_entropy(const AffineIfs& ifs, std::array<double, 2> alpha, int n, double eps, int threads = 1);

SpectrumPoint lyapunov_spectrum(const AffineIfs& ifs, std::array<double, 2> alpha, const SpectrumOptions& opt = {});

struct LyapunovDomainOptions {
  int n = 8;
  /// Points per axis of the q grid on [-q_max, q_max]^2.
  int grid = 9;
  double q_max = 20;
  /// Periodic words up to this length contribute their eigenvalue exponents.
  int periodic_max = 8;
  int threads = 1;
};
ValueDomain lyapunov_value_domain(const AffineIfs& ifs, const LyapunovDomainOptions& opt = {});

struct BoundaryOptions {
  int n = 1;
  std::vector<double> eps{0.1, 0.05, 0.02, 0.01};
  int multistart = 16;
  std::uint64_t seed = 7;
  int max_evals = 4000;
  const DominatedSubsystem* subsystem = nullptr;
};
struct BoundaryResult {
  SpectrumPoint point;
  /// Best dim_L with |chi(mu) - alpha| <= eps, one per schedule entry.
  std::vector<double> values;
};
BoundaryResult boundary_spectrum(const AffineIfs& ifs, std::array<double, 2> alpha, const BoundaryOptions& opt = {});

/// Root of P(log phi^s) = 0 over a schedule of word lengths.
struct DimensionRow {
  int n = 0;
  Interval s;
  Interval running;
};
struct DimensionResult {
  Interval s;
  double value = 0;
  std::vector<DimensionRow> trace;
};
struct DimensionOptions {
  std::vector<int> schedule{1, 2, 4, 8};
  double tol = 1e-9;
  int threads = 1;
  /// Build a dominated subsystem at each n when the system admits one.
  bool use_subsystem = true;
  /// Schedule points needing more than this many summands are skipped (the first is always run).
  std::uint64_t term_budget = 100000000ULL;
};
DimensionResult affinity_dimension(const std::vector<Mat2>& mats, const DimensionOptions& opt = {});

enum class SweepMode { Birkhoff, Lyapunov };

struct SweepEntry {
  std::vector<double> alpha;
  std::optional<SpectrumPoint> point;
  /// "infeasible", "unconverged", ... when the point failed.
  std::string error_kind, error;
};
struct SpectrumCurve {
  SweepMode mode = SweepMode::Birkhoff;
  std::vector<SweepEntry> entries;
  int n = 0;
  double tol = 0;
  /// Hash of the certified subsystem used, or "none" (fallback bounds).
  std::string certificate = "none";
};

SpectrumCurve spectrum_sweep(const AffineIfs& ifs, SweepMode mode, const std::vector<std::vector<double>>& grid,
                             const LocallyConstantPotential* phi, const SpectrumOptions& opt = {});

/// CSV: alpha components, s_lower, s_upper, s_value, h_top, q_star, witness entropy/exponents, error.
void write_curve_csv(std::ostream& os, const SpectrumCurve& curve);

}  // namespace saspec
