#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "saspec/cocycle.hpp"
#include "saspec/projective.hpp"
#include "saspec/symbolic.hpp"

namespace saspec {

struct PressureBracket {
  double lower = 0, upper = 0;
  int n = 0;
  std::uint64_t terms = 0;
  bool converged = true;

  double width() const { return upper - lower; }
  double mid() const { return 0.5 * (lower + upper); }
  bool contains(double x, double tol = 0) const { return x >= lower - tol && x <= upper + tol; }
};

/// Per-word data over a fixed set of words of one length: log singular values, the
/// the interior part of S_n Phi, and the last d-1 symbols (the index into the tail table).
class WordTable {
 public:
  /// All of Sigma_n.
  WordTable(const std::vector<Mat2>& mats, int n, const LocallyConstantPotential* phi = nullptr, int threads = 1);
  /// An explicit list of words of a common length n.
  WordTable(const std::vector<Mat2>& mats, std::vector<Word> words, const LocallyConstantPotential* phi = nullptr,
            int threads = 1);

  std::uint64_t size() const { return l1_.size(); }
  int n() const { return n_; }
  int alphabet() const { return N_; }
  int dim() const { return M_; }
  int depth() const { return d_; }
  int threads() const { return threads_; }
  bool full_shift() const { return words_.empty(); }
  const std::vector<Word>& words() const { return words_; }
  Word word(std::uint64_t i) const;

  double l1(std::uint64_t i) const { return l1_[i]; }
  double l2(std::uint64_t i) const { return l2_[i]; }
  const double* interior(std::uint64_t i) const { return M_ ? &S_[i * M_] : nullptr; }
  std::uint32_t last(std::uint64_t i) const { return last_.empty() ? 0 : last_[i]; }

  /// N^{d-1} (1 for d <= 1).
  std::uint64_t tail_keys() const { return T_; }
  /// Contribution of the windows that reach into the tail, for last-key l and tail t.
  const double* tail_sum(std::uint64_t l, std::uint64_t t) const { return &tails_[(l * T_ + t) * M_]; }

  /// For each last-key: max (upper) or min (lower) over tails of <q, tail_sum>, and the arg.
  void tail_envelope(const std::vector<double>& q, bool upper, std::vector<double>& value,
                     std::vector<std::uint64_t>& arg) const;

 private:
  void build(const std::vector<Mat2>& mats, const LocallyConstantPotential* phi);
  void fill(std::uint64_t i, const Word& w, double l1, double l2, const double* S);

  int N_ = 0, n_ = 0, M_ = 0, d_ = 0, threads_ = 1;
  std::uint64_t T_ = 1;
  std::vector<Word> words_;
  std::vector<double> l1_, l2_, S_, tails_;
  std::vector<std::uint32_t> last_;
};

/// Weight a1 log sigma1 + a2 log sigma2 per word. phi^s, psi^q and |det|^t are all of this form.
struct Exponent {
  double a1 = 0, a2 = 0;
  static Exponent svf(double s);
  static Exponent psi(std::array<double, 2> q) { return {q[0], q[1]}; }
};

enum class Envelope { Upper, Lower };

/// (1/n) LSE_i [a1 l1 + a2 l2 + env_q(S_n Phi) - n <q, alpha>] together with the feature
/// moments: mean and covariance (scaled by 1/n) of g = (l1, l2, S - n alpha) under the
/// normalized weights. Derivatives are in (a1, a2, q).
struct LseEval {
  double value = 0;
  std::vector<double> mean;
  std::vector<double> cov;  // row-major (2+M)^2
  std::uint64_t terms = 0;
};

LseEval lse_eval(const WordTable& T, Exponent e, const std::vector<double>& q, const std::vector<double>& alpha,
                 Envelope env, bool second_order = false);

/// Tables at one word length, reused across many pressure evaluations.
struct PressureContext {
  std::shared_ptr<const WordTable> full;
  /// Sigma_m^D; may be null. Its length m may differ from n since both sides are valid at
  /// every length.
  std::shared_ptr<const WordTable> sub;
  /// The subsystem is all of Sigma_n (K = 0), so the defect also bounds the full shift.
  bool full_dominated = false;
  double Z = 0;
  /// Sum_{j<d} Var_j(Phi), the cylinder slack of the potential.
  double envelope_slack = 0;

  /// Diagonal maps with a depth <= 1 potential: log|a_i|, log|d_i| and Phi(i) per symbol.
  /// Sums then split into two multiplicative axis sums.
  struct Axes {
    std::vector<double> la, ld, pot;
  };
  std::optional<Axes> diagonal;

  int n() const { return full->n(); }
};

PressureContext make_context(const std::vector<Mat2>& mats, int n, const LocallyConstantPotential* phi,
                             const DominatedSubsystem* sub, int threads = 1);

/// Exact diagonal-system limit for a1 >= a2 as an LseEval: the larger of the two axis
/// pressures with that axis' moments (features sum over one symbol, n = 1).
LseEval diagonal_eval(const PressureContext::Axes& ax, Exponent e, const std::vector<double>& q,
                      const std::vector<double>& alpha, bool second_order = false);

/// Exact diagonal-system pressure for any exponent. a1 >= a2: the axis maximum;
/// a1 < a2: min over t of the mixed axis sums.
double diagonal_pressure(const PressureContext::Axes& ax, Exponent e, const std::vector<double>& q,
                         const std::vector<double>& alpha);

/// Per-junction defect of log phi^s given Z: only the sigma1 exponent pays.
double svf_defect(double Z, double s);

/// Bracket for P(log phi^s + <q, Phi - alpha>) at the context's word length.
PressureBracket pressure_phi(const PressureContext& ctx, double s, const std::vector<double>& q,
                             const std::vector<double>& alpha);
/// Bracket for P(log psi^q).
PressureBracket pressure_psi(const PressureContext& ctx, std::array<double, 2> q);

struct PressureOptions {
  int threads = 1;
  /// Optional certified subsystem at the same word length (enables the dominated lower side).
  const DominatedSubsystem* subsystem = nullptr;
};

PressureBracket pressure_phi(const AffineIfs& ifs, double s, const LocallyConstantPotential& phi,
                             const std::vector<double>& q, const std::vector<double>& alpha, int n,
                             const PressureOptions& opt = {});
PressureBracket pressure_psi(const AffineIfs& ifs, std::array<double, 2> q, int n, const PressureOptions& opt = {});

struct WeightSpec {
  enum class Kind { Svf, Psi, SvfLinear };
  Kind kind = Kind::Svf;
  double s = 0;
  std::array<double, 2> psi_q{0, 0};
  const LocallyConstantPotential* phi = nullptr;
  std::vector<double> q, alpha;

  static WeightSpec svf(double s) { return {Kind::Svf, s, {0, 0}, nullptr, {}, {}}; }
  static WeightSpec psi(std::array<double, 2> q) { return {Kind::Psi, 0, q, nullptr, {}, {}}; }
  static WeightSpec svf_linear(double s, const LocallyConstantPotential& phi, std::vector<double> q,
                               std::vector<double> alpha) {
    return {Kind::SvfLinear, s, {0, 0}, &phi, std::move(q), std::move(alpha)};
  }
};

/// Pressure of the subshift generated by Sigma_n^D, from k-fold concatenations.
PressureBracket dominated_pressure(const DominatedSubsystem& sub, const WeightSpec& w, int k, int threads = 1);

struct TraceRow {
  int n = 0;
  double lower = 0, upper = 0;
  std::uint64_t terms = 0;
  double seconds = 0;
};

struct PressureTrace {
  /// [max lower, min upper] over the schedule.
  PressureBracket best;
  std::vector<TraceRow> rows;
  bool converged = false;
};

/// d, 2d, 4d, ... up to cap (cap itself appended when it is not a doubling point).
std::vector<int> doubling_schedule(int start, int cap);

struct LimitOptions {
  double target_width = 1e-3;
  std::uint64_t term_budget = 100000000ULL;
  /// Summands needed at n; schedule points above the budget are skipped.
  std::function<std::uint64_t(int)> terms_at;
};

PressureTrace pressure_limit(const std::function<PressureBracket(int)>& estimator, const std::vector<int>& schedule,
                             const LimitOptions& opt = {});

/// CSV rows n,lower,upper,terms[,seconds].
void write_trace_csv(std::ostream& os, const PressureTrace& trace, bool with_seconds = true);

}  // namespace saspec
