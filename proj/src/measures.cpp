#include "saspec/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "saspec/errors.hpp"
#include "saspec/parallel.hpp"
#include "saspec/pressure.hpp"
#include "saspec/rng.hpp"

namespace saspec {

void StepBernoulliMeasure::validate() const {
  if (N < 1 || n < 1) throw InvalidInput("measure needs N >= 1 and n >= 1");
  if (support.empty() || support.size() != weights.size()) throw InvalidInput("support and weights differ in size");
  double sum = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0)) throw InvalidInput(fmt::format("negative weight at {}", i));
    sum += weights[i];
    if (static_cast<int>(support[i].size()) != n) throw InvalidInput("support word of the wrong length");
    for (auto c : support[i])
      if (c < 1 || c > N) throw InvalidInput("support symbol outside alphabet");
  }
  if (std::abs(sum - 1) > 1e-12) throw InvalidInput(fmt::format("weights sum to {:.17g}", sum));
}

StepBernoulliMeasure StepBernoulliMeasure::uniform(int N, int n) {
  StepBernoulliMeasure mu{N, n, enumerate_words(N, n), {}};
  mu.weights.assign(mu.support.size(), 1.0 / mu.support.size());
  return mu;
}

StepBernoulliMeasure StepBernoulliMeasure::bernoulli(std::vector<double> p) {
  StepBernoulliMeasure mu{static_cast<int>(p.size()), 1, enumerate_words(static_cast<int>(p.size()), 1), std::move(p)};
  mu.validate();
  return mu;
}

double entropy(const StepBernoulliMeasure& mu) {
  mu.validate();
  double h = 0;
  for (double w : mu.weights)
    if (w > 0) h -= w * std::log(w);
  return h / mu.n;
}

namespace {

struct Scaled {
  Mat2 P;
  double log_scale;
};

Scaled scaled_product(const std::vector<Mat2>& mats, const Word& w) {
  Scaled s{Mat2::identity(), 0};
  for (auto c : w) {
    s.P = s.P * mats[c - 1];
    double m = norm(s.P);
    s.P = s.P.scaled(1 / m);
    s.log_scale += std::log(m);
  }
  return s;
}

double exact_sum(const std::vector<Scaled>& P, const StepBernoulliMeasure& mu) {
  double D = 0;
  for (std::size_t i = 0; i < P.size(); ++i)
    D -= mu.weights[i] * (std::log(std::abs(P[i].P.det())) + 2 * P[i].log_scale);
  return D / mu.n;
}

void finish(LyapunovEstimate& est) {
  est.chi1.upper = std::min(est.chi1.upper, est.sum / 2);
  est.chi1.lower = std::min(est.chi1.lower, est.chi1.upper);
  est.chi2 = {est.sum - est.chi1.upper, est.sum - est.chi1.lower};
}

LyapunovEstimate finite_n(const std::vector<Scaled>& P, const StepBernoulliMeasure& mu, const LyapunovOptions& opt) {
  LyapunovEstimate est;
  est.method = LyapunovMethod::FiniteN;
  est.sum = exact_sum(P, mu);
  const std::uint64_t S = P.size();
  auto fits = [&](int k) {
    double terms = std::pow(static_cast<double>(S), k);
    return terms <= static_cast<double>(opt.term_budget);
  };
  int k = opt.k;
  if (k <= 0) {
    k = 1;
    while (k < opt.max_blocks && fits(k + 1)) ++k;
  } else if (!fits(k)) {
    while (k > 1 && !fits(k)) --k;
    est.budget_limited = true;
  }
  est.k = k;
  est.terms = static_cast<std::uint64_t>(std::pow(static_cast<double>(S), k) + 0.5);

  // E log ||A_{w_1} ... A_{w_k}|| by depth-first expansion of the remaining blocks
  auto expand = [&](auto&& self, const Mat2& M, double logs, double weight, int depth) -> double {
    if (depth == k) return weight * (std::log(norm(M)) + logs);
    double acc = 0;
    for (std::uint64_t j = 0; j < S; ++j) {
      if (mu.weights[j] == 0) continue;
      Mat2 Q = M * P[j].P;
      double m = norm(Q);
      acc += self(self, Q.scaled(1 / m), logs + P[j].log_scale + std::log(m), weight * mu.weights[j], depth + 1);
    }
    return acc;
  };
  double E = parallel_reduce<double>(
      S, 1, opt.threads,
      [&](std::uint64_t b, std::uint64_t e) {
        double acc = 0;
        for (std::uint64_t i = b; i < e; ++i)
          if (mu.weights[i] > 0) acc += expand(expand, P[i].P, P[i].log_scale, mu.weights[i], 1);
        return acc;
      },
      [](double a, double b) { return a + b; }, 0.0);
  const double kn = static_cast<double>(k) * mu.n;
  est.chi1.lower = -E / kn;
  est.chi1.upper = est.sum / 2;
  if (opt.Z) {
    est.certified = true;
    est.chi1.upper = std::min(est.chi1.upper, est.chi1.lower + *opt.Z / kn);
  }
  finish(est);
  return est;
}

LyapunovEstimate monte_carlo(const std::vector<Scaled>& P, const StepBernoulliMeasure& mu, const LyapunovOptions& opt) {
  if (opt.chains < 2 || opt.steps < 2) throw InvalidInput("Monte-Carlo needs at least 2 chains of 2 steps");
  LyapunovEstimate est;
  est.method = LyapunovMethod::MonteCarlo;
  est.sum = exact_sum(P, mu);
  std::vector<double> cdf(mu.weights.size());
  std::partial_sum(mu.weights.begin(), mu.weights.end(), cdf.begin());
  const std::uint64_t m = opt.steps, half = m / 2;
  std::vector<double> corrected(opt.chains);
  parallel_chunks(static_cast<std::uint64_t>(opt.chains), 1, opt.threads, [&](std::uint64_t b, std::uint64_t e) {
    for (std::uint64_t c = b; c < e; ++c) {
      auto rng = make_stream(opt.seed, c);
      Mat2 M = Mat2::identity();
      double acc = 0, at_half = 0;
      for (std::uint64_t t = 1; t <= m; ++t) {
        double u = uniform01(rng) * cdf.back();
        std::size_t j = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        if (j >= P.size()) j = P.size() - 1;
        M = M * P[j].P;
        double r = norm(M);
        M = M.scaled(1 / r);
        acc += std::log(r) + P[j].log_scale;
        if (t == half) at_half = acc;
      }
      double em = -acc / (static_cast<double>(m) * mu.n);
      double eh = -at_half / (static_cast<double>(half) * mu.n);
      // removes a bias of order m^{-1/2} (equal exponents), harmless otherwise
      corrected[c] = em + (em - eh) / (std::sqrt(2.0) - 1);
    }
  });
  double mean = 0;
  for (double x : corrected) mean += x;
  mean /= opt.chains;
  double var = 0;
  for (double x : corrected) var += (x - mean) * (x - mean);
  var /= (opt.chains - 1);
  est.half_width = 1.959963984540054 * std::sqrt(var / opt.chains);
  est.chi1 = {mean - est.half_width, mean + est.half_width};
  est.k = 0;
  est.terms = m * opt.chains;
  finish(est);
  return est;
}

}  // namespace

LyapunovEstimate lyapunov_exponents(const std::vector<Mat2>& mats, const StepBernoulliMeasure& mu,
                                    const LyapunovOptions& opt) {
  mu.validate();
  if (mu.N != static_cast<int>(mats.size())) throw InvalidInput("measure alphabet does not match the maps");
  std::vector<Scaled> P;
  P.reserve(mu.size());
  for (const auto& w : mu.support) P.push_back(scaled_product(mats, w));
  return opt.method == LyapunovMethod::FiniteN ? finite_n(P, mu, opt) : monte_carlo(P, mu, opt);
}

LyapunovEstimate lyapunov_exponents(const AffineIfs& ifs, const StepBernoulliMeasure& mu, const LyapunovOptions& opt) {
  return lyapunov_exponents(ifs.matrices(), mu, opt);
}

double lyapunov_dimension(double h, double chi1, double chi2) {
  if (!(chi1 > 0) || !(chi2 > 0)) throw InvalidInput("Lyapunov exponents must be positive");
  if (!(h >= 0)) throw InvalidInput("entropy must be non-negative");
  if (chi1 > chi2 * (1 + 1e-12)) throw InvalidInput("need chi1 <= chi2");
  return std::min(h / chi1, 1 + (h - chi1) / chi2);
}

Interval lyapunov_dimension_range(double h, const LyapunovEstimate& est) {
  Interval r{1e300, -1e300};
  const int K = 128;
  for (int i = 0; i <= K; ++i) {
    double c1 = est.chi1.lower + (est.chi1.upper - est.chi1.lower) * i / K;
    double d = lyapunov_dimension(h, c1, std::max(est.sum - c1, c1));
    r.lower = std::min(r.lower, d);
    r.upper = std::max(r.upper, d);
  }
  return r;
}

StepBernoulliMeasure equilibrium_weights(int N, std::vector<Word> support, const std::vector<double>& values) {
  if (support.size() != values.size() || support.empty()) throw InvalidInput("values must match the support");
  double m = *std::max_element(values.begin(), values.end());
  std::vector<double> w(values.size());
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += (w[i] = std::exp(values[i] - m));
  for (double& x : w) x /= s;
  StepBernoulliMeasure mu{N, static_cast<int>(support[0].size()), std::move(support), std::move(w)};
  mu.validate();
  return mu;
}

MatchReport match_measure(const AffineIfs& ifs, const LocallyConstantPotential& phi, const std::vector<double>& alpha,
                          int n, const MatchOptions& opt) {
  const auto& mats = ifs.matrices();
  const int N = static_cast<int>(mats.size());
  const int M = phi.dimension();
  if (phi.alphabet() != N) throw InvalidInput("potential alphabet does not match the maps");
  if (static_cast<int>(alpha.size()) != M) throw InvalidInput(fmt::format("alpha must have dimension {}", M));
  if (M <= 2) {
    auto dom = value_domain(phi);
    if (!dom.contains(alpha, 0) || dom.depth(alpha) <= 1e-12)
      throw Infeasible("alpha is not in the interior of the value domain");
  }

  MatchReport rep;
  std::vector<Word> support;
  const DominatedSubsystem* sub = opt.subsystem;
  if (sub) {
    if (sub->n != n) throw InvalidInput("subsystem block length differs from n");
    support = sub->words;
    rep.on_subsystem = true;
  } else {
    support = enumerate_words(N, n);
  }
  WordTable T(mats, support, &phi, opt.threads);
  const std::size_t S = support.size();

  // Psi_n per block
  std::vector<double> psi(S);
  for (std::size_t i = 0; i < S; ++i) {
    double l1 = T.l1(i), l2 = T.l2(i);
    if (sub) {
      Mat2 A = word_product(mats, support[i]);
      Mat2 An = A.scaled(1 / norm(A));
      DominationCertificate cert{sub->C, sub->margin, {}};
      auto od = oseledets_direction({An}, cert, Word(400, 1), opt.oseledets_tol);
      rep.psi_width = std::max(rep.psi_width, od.width);
      Vec2 v{std::cos(od.angle), std::sin(od.angle)};
      Vec2 Av = A * v;
      double la = std::log(std::hypot(Av.x, Av.y));
      double ld = std::log(std::abs(A.det()));
      l1 = la;
      l2 = ld - la;
    }
    psi[i] = log_svf(l1, l2, opt.s);
  }

  // marginal of the first d-1 symbols of a block, used for the tail windows
  const std::uint64_t TK = T.tail_keys();
  const int d = phi.depth();
  std::vector<std::uint64_t> head(S, 0);
  if (d >= 2)
    for (std::size_t i = 0; i < S; ++i)
      head[i] = word_index(N, Word(support[i].begin(), support[i].begin() + (d - 1)));
  auto marginal = [&](const std::vector<double>& w) {
    std::vector<double> pi(TK, 0);
    for (std::size_t i = 0; i < S; ++i) pi[head[i]] += w[i];
    return pi;
  };
  auto block_sums = [&](const std::vector<double>& pi) {
    std::vector<double> F(S * M);
    for (std::size_t i = 0; i < S; ++i) {
      const double* in = T.interior(i);
      for (int m = 0; m < M; ++m) {
        double v = in[m];
        if (d >= 2)
          for (std::uint64_t t = 0; t < TK; ++t)
            if (pi[t] != 0) v += pi[t] * T.tail_sum(T.last(i), t)[m];
        F[i * M + m] = v - n * alpha[m];
      }
    }
    return F;
  };
  auto objective = [&](const std::vector<double>& F, const Eigen::VectorXd& q, std::vector<double>* w) {
    std::vector<double> x(S);
    double mx = -1e300;
    for (std::size_t i = 0; i < S; ++i) {
      x[i] = psi[i];
      for (int m = 0; m < M; ++m) x[i] += q[m] * F[i * M + m];
      mx = std::max(mx, x[i]);
    }
    double s = 0;
    for (double v : x) s += std::exp(v - mx);
    if (w) {
      w->resize(S);
      for (std::size_t i = 0; i < S; ++i) (*w)[i] = std::exp(x[i] - mx) / s;
    }
    return mx + std::log(s);
  };

  Eigen::VectorXd q = Eigen::VectorXd::Zero(M);
  std::vector<double> w(S, 1.0 / S);
  std::vector<double> pi = marginal(w);
  double inner_tol = opt.tol * n * 1e-2;
  bool done = false;
  for (int outer = 0; outer < opt.max_outer && !done; ++outer) {
    auto F = block_sums(pi);
    double f = objective(F, q, &w);
    for (int it = 0; it < opt.max_newton; ++it) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(M);
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(M, M);
      for (std::size_t i = 0; i < S; ++i)
        for (int a = 0; a < M; ++a) g[a] += w[i] * F[i * M + a];
      for (std::size_t i = 0; i < S; ++i)
        for (int a = 0; a < M; ++a)
          for (int b = 0; b < M; ++b) H(a, b) += w[i] * (F[i * M + a] - g[a]) * (F[i * M + b] - g[b]);
      if (g.norm() <= inner_tol) break;
      H += 1e-14 * (1 + H.trace()) * Eigen::MatrixXd::Identity(M, M);
      Eigen::VectorXd step = -H.ldlt().solve(g);
      double t = 1;
      std::vector<double> w2;
      for (;;) {
        Eigen::VectorXd q2 = q + t * step;
        double f2 = objective(F, q2, &w2);
        if (f2 <= f || t < 1e-12) {
          q = q2, f = f2, w = w2;
          break;
        }
        t /= 2;
      }
      ++rep.newton_steps;
      if (!(q.norm() < 1e8))
        throw Unconverged(fmt::format("Newton diverged: |q| = {:.3g} after {} steps", q.norm(), rep.newton_steps));
      if (it + 1 == opt.max_newton)
        throw Unconverged(fmt::format("Newton stalled after {} steps, gradient {:.3g}", opt.max_newton, g.norm()));
    }
    auto pi2 = marginal(w);
    double change = 0;
    for (std::uint64_t t = 0; t < TK; ++t) change = std::max(change, std::abs(pi2[t] - pi[t]));
    pi = std::move(pi2);
    // the exact average under the current weights
    auto F2 = block_sums(pi);
    double res = 0;
    for (int m = 0; m < M; ++m) {
      double a = 0;
      for (std::size_t i = 0; i < S; ++i) a += w[i] * F2[i * M + m];
      res += (a / n) * (a / n);
    }
    res = std::sqrt(res);
    done = d <= 1 || (change <= 1e-14 && res <= opt.tol * 1e-1) || res <= opt.tol * 1e-3;
  }

  auto F = block_sums(pi);
  rep.average.assign(M, 0);
  for (int m = 0; m < M; ++m) {
    for (std::size_t i = 0; i < S; ++i) rep.average[m] += w[i] * F[i * M + m];
    rep.average[m] = rep.average[m] / n + alpha[m];
  }
  double res = 0;
  for (int m = 0; m < M; ++m) res += (rep.average[m] - alpha[m]) * (rep.average[m] - alpha[m]);
  rep.residual = std::sqrt(res);
  if (rep.residual > opt.tol)
    throw Unconverged(fmt::format("achieved average misses alpha by {:.3g}", rep.residual));

  rep.q.assign(q.data(), q.data() + M);
  rep.measure = StepBernoulliMeasure{N, n, std::move(support), w};
  rep.measure.validate();
  rep.entropy = entropy(rep.measure);
  LyapunovOptions lo = opt.lyapunov;
  lo.threads = opt.threads;
  if (sub) lo.Z = sub->Z;
  rep.lyapunov = lyapunov_exponents(mats, rep.measure, lo);
  rep.dimension = lyapunov_dimension_range(rep.entropy, rep.lyapunov);
  double slack_var = 0;
  for (int j = 1; j < d; ++j) slack_var += variation(phi, j);
  rep.slack = (sub ? opt.s * sub->Z / n : 0) + q.norm() * slack_var / n;
  return rep;
}

}  // namespace saspec
