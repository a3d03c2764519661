#include "saspec/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "saspec/errors.hpp"
#include "saspec/parallel.hpp"
#include "saspec/rng.hpp"

namespace saspec {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Value, and when g/H are non-null also gradient and Hessian.
using SmoothFn = std::function<double(const Vec&, Vec*, Mat*)>;
using PlainFn = std::function<double(const Vec&)>;

struct BoxResult {
  Vec x;
  double f = 0;
  bool converged = false;
};

Vec clip(Vec x, const Vec& c, double R) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], c[i] - R, c[i] + R);
  return x;
}

// Projected damped Newton on the box |x - c|_inf <= R for a convex objective.
BoxResult newton_box(const SmoothFn& f, Vec x, const Vec& c, double R, int max_iter) {
  const Eigen::Index m = x.size();
  x = clip(x, c, R);
  Vec g;
  Mat H;
  double fx = f(x, &g, &H);
  BoxResult r;
  for (int it = 0; it < max_iter; ++it) {
    std::vector<Eigen::Index> free;
    double pg = 0;
    const double edge = 1e-13 * (1 + R);
    for (Eigen::Index i = 0; i < m; ++i) {
      bool lo = x[i] <= c[i] - R + edge, hi = x[i] >= c[i] + R - edge;
      if ((lo && g[i] > 0) || (hi && g[i] < 0)) continue;
      free.push_back(i);
      pg = std::max(pg, std::abs(g[i]));
    }
    if (pg <= 1e-12 * (1 + std::abs(fx))) {
      r.converged = true;
      break;
    }
    const auto k = static_cast<Eigen::Index>(free.size());
    Mat Hf(k, k);
    Vec gf(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      gf[a] = g[free[a]];
      for (Eigen::Index b = 0; b < k; ++b) Hf(a, b) = H(free[a], free[b]);
    }
    double reg = 1e-10 * (1 + Hf.diagonal().cwiseAbs().maxCoeff());
    Hf += reg * Mat::Identity(k, k);
    Vec df = Hf.ldlt().solve(-gf);
    if (!df.allFinite() || gf.dot(df) >= 0) df = -gf;
    Vec d = Vec::Zero(m);
    for (Eigen::Index a = 0; a < k; ++a) d[free[a]] = df[a];

    bool moved = false;
    for (double t = 1; t > 1e-12; t *= 0.5) {
      Vec xn = clip(x + t * d, c, R);
      double fn = f(xn, nullptr, nullptr);
      if (fn < fx) {
        double gain = fx - fn;
        x = xn;
        moved = true;
        if (gain <= 1e-15 * (1 + std::abs(fn))) r.converged = true;
        break;
      }
    }
    if (!moved) {
      r.converged = true;  // no descent left within double precision
      break;
    }
    fx = f(x, &g, &H);
    if (r.converged) break;
  }
  r.x = x;
  r.f = fx;
  return r;
}

BoxResult nelder_mead(const PlainFn& f, Vec x0, double step, int max_evals, double ftol) {
  const Eigen::Index m = x0.size();
  std::vector<Vec> P(m + 1, x0);
  std::vector<double> F(m + 1);
  for (Eigen::Index i = 0; i < m; ++i) P[i + 1][i] += step;
  int evals = 0;
  auto eval = [&](const Vec& x) {
    ++evals;
    return f(x);
  };
  for (auto i = 0u; i < P.size(); ++i) F[i] = eval(P[i]);
  std::vector<std::size_t> idx(P.size());
  BoxResult r;
  while (evals < max_evals) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return F[a] < F[b]; });
    std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
    double size = 0;
    for (const auto& p : P) size = std::max(size, (p - P[best]).cwiseAbs().maxCoeff());
    if (std::abs(F[worst] - F[best]) <= ftol * (1 + std::abs(F[best])) && size <= 1e-10 * (1 + step)) {
      r.converged = true;
      break;
    }
    Vec cen = Vec::Zero(m);
    for (std::size_t i = 0; i < P.size(); ++i)
      if (i != worst) cen += P[i];
    cen /= double(m);
    Vec xr = cen + (cen - P[worst]);
    double fr = eval(xr);
    if (fr < F[best]) {
      Vec xe = cen + 2.0 * (cen - P[worst]);
      double fe = eval(xe);
      if (fe < fr) P[worst] = xe, F[worst] = fe;
      else P[worst] = xr, F[worst] = fr;
    } else if (fr < F[second]) {
      P[worst] = xr, F[worst] = fr;
    } else {
      bool outside = fr < F[worst];
      Vec xc = outside ? Vec(cen + 0.5 * (xr - cen)) : Vec(cen + 0.5 * (P[worst] - cen));
      double fc = eval(xc);
      if (fc < std::min(fr, F[worst])) {
        P[worst] = xc, F[worst] = fc;
      } else {
        for (std::size_t i = 0; i < P.size(); ++i) {
          if (i == best) continue;
          P[i] = P[best] + 0.5 * (P[i] - P[best]);
          F[i] = eval(P[i]);
        }
      }
    }
  }
  std::size_t b = std::min_element(F.begin(), F.end()) - F.begin();
  r.x = P[b];
  r.f = F[b];
  return r;
}

// Restarted Nelder-Mead on the box (the objective is evaluated at the clipped point).
BoxResult nelder_mead_box(const PlainFn& f, Vec x0, const Vec& c, double R, double step) {
  auto g = [&](const Vec& x) { return f(clip(x, c, R)); };
  BoxResult best;
  best.x = clip(x0, c, R);
  best.f = f(best.x);
  for (int round = 0; round < 4; ++round) {
    BoxResult r = nelder_mead(g, best.x, step, 2000, 1e-15);
    r.x = clip(r.x, c, R);
    r.f = f(r.x);
    bool gain = r.f < best.f - 1e-15 * (1 + std::abs(best.f));
    if (r.f <= best.f) best = r;
    best.converged = r.converged;
    if (!gain && round > 0) break;
    step *= 0.1;
  }
  return best;
}

/// Bracket of the root of a decreasing function on [0, 2]; the root is 2 (resp. 0) when
/// f stays non-negative (resp. negative).
Interval bisect_root(const std::function<double(double)>& f, double tol) {
  double lo = 0, hi = 2;
  if (f(hi) >= 0) return {hi, hi};
  if (f(lo) < 0) return {lo, lo};
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    (f(mid) >= 0 ? lo : hi) = mid;
  }
  return {lo, hi};
}

// Slopes of recorded (s, value) pairs must lie in [-C, -C1].
void check_slopes(std::vector<std::pair<double, double>> pts, double C1, double C, const char* what) {
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    double ds = pts[i].first - pts[i - 1].first, dv = pts[i].second - pts[i - 1].second;
    if (ds <= 0) continue;
    double slack = 1e-8 * (1 + std::abs(pts[i].second));
    if (dv < -C * ds - slack || dv > -C1 * ds + slack)
      throw InternalInconsistency(fmt::format(
          "{}: slope certificate violated between s = {} and s = {}: change {} outside [{}, {}]", what,
          pts[i - 1].first, pts[i].first, dv, -C * ds, -C1 * ds));
  }
}

double log_alphabet(const std::vector<Mat2>& mats) { return std::log(double(mats.size())); }

/// Depth of alpha inside a Lyapunov-exponent domain that may be a segment or a point
/// (equal determinants, conformal systems); distances are measured inside its affine hull.
double relative_depth(const ValueDomain& dom, std::array<double, 2> a) {
  const auto& V = dom.vertices;
  if (V.empty()) return -kInf;
  double diam = 0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < V.size(); ++i)
    for (std::size_t j = i + 1; j < V.size(); ++j) {
      double d = std::hypot(V[i][0] - V[j][0], V[i][1] - V[j][1]);
      if (d > diam) diam = d, ia = i, ib = j;
    }
  const double flat = 1e-9 * (1 + std::hypot(V[0][0], V[0][1]));
  if (diam <= flat) return std::hypot(a[0] - V[0][0], a[1] - V[0][1]) <= flat ? kInf : -kInf;
  double width = 0;
  const double ux = (V[ib][0] - V[ia][0]) / diam, uy = (V[ib][1] - V[ia][1]) / diam;
  for (const auto& v : V) width = std::max(width, std::abs((v[0] - V[ia][0]) * uy - (v[1] - V[ia][1]) * ux));
  if (V.size() >= 3 && width > flat) return dom.depth({a[0], a[1]});
  double px = a[0] - V[ia][0], py = a[1] - V[ia][1];
  if (std::abs(px * uy - py * ux) > flat) return -kInf;
  double t = px * ux + py * uy;
  return std::min(t, diam - t);
}

struct LegendreEval {
  Vec q;
  double value = 0, lower = 0, upper = 0;
  bool converged = false;
};

// inf_q {P(log psi^{shift - q}) - <q, alpha>} over |q - shift|_inf <= R; the pressure is the
// direct finite-n estimate clamped into its bracket, plus the bracket itself at the minimizer.
LegendreEval legendre_min(const PressureContext& ctx, std::array<double, 2> shift, std::array<double, 2> alpha,
                          double R, Vec& warm, int max_newton) {
  Vec c(2);
  c << shift[0], shift[1];
  auto pexp = [&](const Vec& q) { return Exponent{shift[0] - q[0], shift[1] - q[1]}; };
  BoxResult r;
  if (ctx.diagonal) {
    auto f = [&](const Vec& q) {
      return diagonal_pressure(*ctx.diagonal, pexp(q), {}, {}) - q[0] * alpha[0] - q[1] * alpha[1];
    };
    r = nelder_mead_box(f, warm, c, R, 0.5);
  } else {
    SmoothFn f = [&](const Vec& q, Vec* g, Mat* H) {
      LseEval ev = lse_eval(*ctx.full, pexp(q), {}, {}, Envelope::Upper, g != nullptr);
      if (g) {
        g->resize(2);
        (*g)[0] = -ev.mean[0] - alpha[0];
        (*g)[1] = -ev.mean[1] - alpha[1];
        H->resize(2, 2);
        *H << ev.cov[0], ev.cov[1], ev.cov[2], ev.cov[3];
      }
      return ev.value - q[0] * alpha[0] - q[1] * alpha[1];
    };
    r = newton_box(f, warm, c, R, max_newton);
  }
  warm = r.x;
  PressureBracket pb = pressure_psi(ctx, {shift[0] - r.x[0], shift[1] - r.x[1]});
  double lin = r.x[0] * alpha[0] + r.x[1] * alpha[1];
  LegendreEval out;
  out.q = r.x;
  out.lower = pb.lower - lin;
  out.upper = pb.upper - lin;
  out.value = std::clamp(r.f, out.lower, out.upper);
  out.converged = r.converged;
  return out;
}

std::uint64_t capped_length(int N, int n, std::uint64_t cap) {
  int m = 1;
  while (m < n && word_count(N, m + 1) <= cap) ++m;
  return m;
}

ValueDomain spectrum_domain(const AffineIfs& ifs, const SpectrumOptions& opt) {
  LyapunovDomainOptions d;
  d.n = int(capped_length(ifs.size(), opt.n, 200000));
  d.threads = opt.threads;
  return lyapunov_value_domain(ifs, d);
}

struct EntropyWork {
  EntropyResult result;
  double R = 0;
  bool converged = true;
};

EntropyWork entropy_impl(const PressureContext& ctx, const ValueDomain& dom, std::array<double, 2> alpha,
                         const SpectrumOptions& opt, double logN) {
  double delta = relative_depth(dom, alpha);
  if (!(delta > 0))
    throw Infeasible(fmt::format("alpha = ({}, {}) is not inside the Lyapunov value domain (depth {})", alpha[0],
                                 alpha[1], delta));
  EntropyWork w;
  w.R = std::isinf(delta) ? 0.0 : 2 * logN / delta;
  Vec warm = Vec::Zero(2);
  LegendreEval le = legendre_min(ctx, {0, 0}, alpha, w.R, warm, opt.max_newton);
  // 0 <= h_top <= log N on a non-empty level set
  w.result.h = {std::clamp(le.lower, 0.0, logN), std::clamp(le.upper, 0.0, logN)};
  w.result.value = std::clamp(le.value, w.result.h.lower, w.result.h.upper);
  w.result.q_star = {le.q[0], le.q[1]};
  w.converged = le.converged;
  return w;
}

double min_formula(double h, std::array<double, 2> a) {
  return std::clamp(std::min(h / a[0], 1 + (h - a[0]) / a[1]), 0.0, 2.0);
}

}  // namespace

std::pair<double, double> slope_constants(const std::vector<Mat2>& mats) {
  double C1 = kInf, C = -kInf;
  for (const auto& A : mats) {
    auto sv = singular_values(A);
    C1 = std::min(C1, -std::log(sv.sigma1));
    C = std::max(C, -std::log(sv.sigma2));
  }
  return {C1, C};
}

SpectrumPoint birkhoff_spectrum(const AffineIfs& ifs, const LocallyConstantPotential& phi,
                                const std::vector<double>& alpha, const SpectrumOptions& opt) {
  const int M = phi.dimension();
  if (static_cast<int>(alpha.size()) != M)
    throw InvalidInput(fmt::format("alpha has {} components, the potential has dimension {}", alpha.size(), M));
  if (phi.alphabet() != ifs.size()) throw InvalidInput("potential alphabet does not match the number of maps");
  const auto mats = ifs.matrices();
  double R = 1e4;
  if (M <= 2) {
    ValueDomain dom = value_domain(phi, opt.cycle_cap);
    double delta = dom.depth(alpha);
    if (!(delta > 0)) throw Infeasible(fmt::format("alpha is not strictly inside the value domain (depth {})", delta));
    R = (2 * slope_constants(mats).second + log_alphabet(mats)) / delta;
  }
  auto [C1, C] = slope_constants(mats);
  PressureContext ctx = make_context(mats, opt.n, &phi, opt.subsystem, opt.threads);

  Vec center = Vec::Zero(M);
  Vec warm_hi = Vec::Zero(M), warm_lo = Vec::Zero(M);
  bool converged = true;

  auto minimize = [&](double s, bool upper, Vec& warm) -> BoxResult {
    SmoothFn f;
    if (ctx.diagonal) {
      f = [&, s](const Vec& q, Vec* g, Mat* H) {
        std::vector<double> qq(q.data(), q.data() + M);
        LseEval ev = diagonal_eval(*ctx.diagonal, Exponent::svf(s), qq, alpha, g != nullptr);
        if (g) {
          *g = Eigen::Map<const Vec>(ev.mean.data() + 2, M);
          H->resize(M, M);
          for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) (*H)(a, b) = ev.cov[(2 + a) * (2 + M) + 2 + b];
        }
        return ev.value;
      };
    } else {
      const WordTable* T = ctx.full.get();
      Exponent e = Exponent::svf(s);
      Envelope env = Envelope::Upper;
      double shift = 0;
      if (!upper) {
        env = Envelope::Lower;
        if (ctx.sub) {
          T = ctx.sub.get();
          shift = svf_defect(ctx.Z, s) / T->n();
        } else {
          e = {s / 2, s / 2};
        }
      }
      f = [T, e, env, shift, M, &alpha](const Vec& q, Vec* g, Mat* H) {
        std::vector<double> qq(q.data(), q.data() + M);
        LseEval ev = lse_eval(*T, e, qq, alpha, env, g != nullptr);
        if (g) {
          *g = Eigen::Map<const Vec>(ev.mean.data() + 2, M);
          H->resize(M, M);
          for (int a = 0; a < M; ++a)
            for (int b = 0; b < M; ++b) (*H)(a, b) = ev.cov[(2 + a) * (2 + M) + 2 + b];
        }
        return ev.value - shift;
      };
    }
    BoxResult r = newton_box(f, warm, center, R, opt.max_newton);
    if (ctx.diagonal && M <= 4) {
      // the axis maximum has kinks where the two axes tie
      PlainFn p = [&](const Vec& q) { return f(q, nullptr, nullptr); };
      BoxResult nm = nelder_mead_box(p, r.x, center, R, 0.05);
      if (nm.f < r.f) r = nm;
      r.converged = true;
    }
    warm = r.x;
    if (!r.converged) converged = false;
    return r;
  };

  std::vector<std::pair<double, double>> hi_pts;
  Vec q_at_value = Vec::Zero(M);
  auto G_hi = [&](double s) {
    BoxResult r = minimize(s, true, warm_hi);
    hi_pts.emplace_back(s, r.f);
    return r.f;
  };
  auto G_lo = [&](double s) { return ctx.diagonal ? G_hi(s) : minimize(s, false, warm_lo).f; };

  Interval up = bisect_root(G_hi, opt.tol);
  Interval lo = bisect_root(G_lo, opt.tol);
  check_slopes(hi_pts, C1, C, "birkhoff_spectrum");

  SpectrumPoint pt;
  pt.alpha = alpha;
  pt.n = opt.n;
  pt.s = {std::min(lo.lower, up.upper), up.upper};
  pt.s_value = std::clamp(up.mid(), pt.s.lower, pt.s.upper);
  {
    Vec w = warm_hi;
    BoxResult r = minimize(pt.s_value, true, w);
    pt.q_star.assign(r.x.data(), r.x.data() + M);
  }
  pt.converged = converged && pt.s.width() <= opt.max_width;

  if (opt.witness) {
    MatchOptions mo;
    mo.s = std::max(pt.s.lower, 1e-6);
    mo.subsystem = opt.subsystem;
    mo.threads = opt.threads;
    mo.lyapunov.threads = opt.threads;
    try {
      int wn = opt.subsystem ? opt.subsystem->n : opt.witness_n;
      MatchReport rep = match_measure(ifs, phi, alpha, wn, mo);
      pt.witness = rep.measure;
      pt.witness_entropy = rep.entropy;
      pt.witness_lyapunov = rep.lyapunov;
      pt.witness_dimension = rep.dimension;
    } catch (const Unconverged&) {
      pt.converged = false;
    }
  }
  return pt;
}

EntropyResult entropy_spectrum(const AffineIfs& ifs, std::array<double, 2> alpha, const SpectrumOptions& opt) {
  const auto mats = ifs.matrices();
  PressureContext ctx = make_context(mats, opt.n, nullptr, opt.subsystem, opt.threads);
  ValueDomain dom = spectrum_domain(ifs, opt);
  EntropyWork w = entropy_impl(ctx, dom, alpha, opt, log_alphabet(mats));
  if (!w.converged) throw Unconverged(fmt::format("entropy Legendre minimization did not converge at alpha = ({}, {})",
                                                  alpha[0], alpha[1]));
  return w.result;
}

double counting_entropy(const AffineIfs& ifs, std::array<double, 2> alpha, int n, double eps, int threads) {
  WordTable T(ifs.matrices(), n, nullptr, threads);
  std::uint64_t count = parallel_reduce<std::uint64_t>(
      T.size(), 4096, threads,
      [&](std::uint64_t b, std::uint64_t e) {
        std::uint64_t c = 0;
        for (std::uint64_t i = b; i < e; ++i)
          if (std::max(std::abs(-T.l1(i) / n - alpha[0]), std::abs(-T.l2(i) / n - alpha[1])) < eps) ++c;
        return c;
      },
      [](std::uint64_t a, std::uint64_t b) { return a + b; }, 0);
  return count ? std::log(double(count)) / n : -kInf;
}

SpectrumPoint lyapunov_spectrum(const AffineIfs& ifs, std::array<double, 2> alpha, const SpectrumOptions& opt) {
  const double scale = 1 + std::abs(alpha[0]) + std::abs(alpha[1]);
  if (alpha[0] > alpha[1] + 1e-12 * scale)
    throw Infeasible(fmt::format("alpha = ({}, {}) has alpha1 > alpha2", alpha[0], alpha[1]));
  if (std::abs(alpha[0] - alpha[1]) <= 1e-12 * scale) {
    BoundaryOptions bo;
    bo.subsystem = opt.subsystem;
    return boundary_spectrum(ifs, alpha, bo).point;
  }
  if (!(alpha[0] > 0)) throw Infeasible("Lyapunov exponents of a contracting system are positive");

  const auto mats = ifs.matrices();
  const double logN = log_alphabet(mats);
  PressureContext ctx = make_context(mats, opt.n, nullptr, opt.subsystem, opt.threads);
  ValueDomain dom = spectrum_domain(ifs, opt);
  EntropyWork ew = entropy_impl(ctx, dom, alpha, opt, logN);
  const EntropyResult& E = ew.result;
  bool converged = ew.converged;

  // (i) nested solver
  struct Row {
    double value, lower, upper;
  };
  std::vector<std::pair<double, Row>> cache;
  Vec warm(2);
  warm << E.q_star[0], E.q_star[1];
  auto eval = [&](double s) -> Row {
    for (const auto& [cs, row] : cache)
      if (cs == s) return row;
    auto sp = s_prime(s);
    Vec w = warm;
    w[0] += sp[0];
    w[1] += sp[1];
    LegendreEval le = legendre_min(ctx, sp, alpha, ew.R, w, opt.max_newton);
    if (!le.converged) converged = false;
    Row row{le.value, le.lower, le.upper};
    cache.emplace_back(s, row);
    return row;
  };
  Interval root_value = bisect_root([&](double s) { return eval(s).value; }, opt.tol);
  Interval root_lo = bisect_root([&](double s) { return eval(s).lower; }, opt.tol);
  Interval root_hi = bisect_root([&](double s) { return eval(s).upper; }, opt.tol);
  Interval s1{std::min(root_lo.lower, root_value.lower), std::max(root_hi.upper, root_value.upper)};

  // (ii) min-formula
  Interval s2{min_formula(E.h.lower, alpha), min_formula(E.h.upper, alpha)};
  double slack = 2 * opt.tol + 1e-9;
  SpectrumPoint pt;
  pt.alpha = {alpha[0], alpha[1]};
  pt.n = opt.n;
  pt.s = {std::max(s1.lower, s2.lower), std::min(s1.upper, s2.upper)};
  if (pt.s.lower > pt.s.upper + slack)
    throw InternalInconsistency(fmt::format(
        "lyapunov_spectrum at alpha = ({}, {}): nested bracket [{}, {}] and min-formula bracket [{}, {}] are "
        "disjoint (h in [{}, {}], q* = ({}, {}), n = {})",
        alpha[0], alpha[1], s1.lower, s1.upper, s2.lower, s2.upper, E.h.lower, E.h.upper, E.q_star[0],
        E.q_star[1], opt.n));
  if (pt.s.lower > pt.s.upper) std::swap(pt.s.lower, pt.s.upper);
  pt.s_value = std::clamp(root_value.mid(), pt.s.lower, pt.s.upper);
  pt.s_formula = s2;
  pt.q_star = {E.q_star[0], E.q_star[1]};
  pt.h_top = E.h;
  pt.h_value = E.value;
  pt.converged = converged && pt.s.width() <= opt.max_width;

  if (opt.witness) {
    const WordTable& T = *ctx.full;
    std::vector<double> vals(T.size());
    for (std::uint64_t i = 0; i < T.size(); ++i) vals[i] = -E.q_star[0] * T.l1(i) - E.q_star[1] * T.l2(i);
    StepBernoulliMeasure mu = equilibrium_weights(ifs.size(), enumerate_words(ifs.size(), opt.n), vals);
    LyapunovOptions lo;
    lo.threads = opt.threads;
    if (ctx.full_dominated) lo.Z = ctx.Z;
    LyapunovEstimate est = lyapunov_exponents(ifs, mu, lo);
    double h = entropy(mu);
    pt.witness_entropy = h;
    pt.witness_lyapunov = est;
    pt.witness_dimension = lyapunov_dimension_range(h, est);
    pt.witness = std::move(mu);
  }
  return pt;
}

ValueDomain lyapunov_value_domain(const AffineIfs& ifs, const LyapunovDomainOptions& opt) {
  const auto mats = ifs.matrices();
  const int N = ifs.size();
  std::vector<std::vector<double>> pts;
  WordTable T(mats, opt.n, nullptr, opt.threads);
  const int G = std::max(opt.grid, 1);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      double q1 = G == 1 ? 0 : -opt.q_max + 2 * opt.q_max * i / (G - 1);
      double q2 = G == 1 ? 0 : -opt.q_max + 2 * opt.q_max * j / (G - 1);
      LseEval ev = lse_eval(T, Exponent{-q1, -q2}, {}, {}, Envelope::Upper, true);
      pts.push_back({-ev.mean[0], -ev.mean[1]});
    }
  for (int len = 1; len <= opt.periodic_max; ++len) {
    if (word_count(N, len) > 2000000) break;
    for (const Word& w : enumerate_words(N, len)) {
      Mat2 A = word_product(mats, w);
      double tr = A.trace(), det = A.det(), disc = tr * tr - 4 * det;
      if (disc <= 0) {
        double c = -std::log(std::abs(det)) / (2 * len);
        pts.push_back({c, c});
      } else {
        double r = std::sqrt(disc);
        double l1 = std::abs(0.5 * (tr + (tr >= 0 ? r : -r)));
        double l2 = std::abs(det) / l1;
        pts.push_back({-std::log(l1) / len, -std::log(l2) / len});
      }
    }
  }
  return convex_hull(2, std::move(pts), false);
}

BoundaryResult boundary_spectrum(const AffineIfs& ifs, std::array<double, 2> alpha, const BoundaryOptions& opt) {
  const double scale = 1 + std::abs(alpha[0]) + std::abs(alpha[1]);
  if (std::abs(alpha[0] - alpha[1]) > 1e-12 * scale)
    throw InvalidInput(fmt::format("boundary mode needs alpha1 = alpha2, got ({}, {})", alpha[0], alpha[1]));
  if (opt.eps.empty()) throw InvalidInput("boundary mode needs a non-empty eps schedule");
  for (std::size_t i = 1; i < opt.eps.size(); ++i)
    if (!(opt.eps[i] < opt.eps[i - 1])) throw InvalidInput("eps schedule must be strictly decreasing");

  const auto mats = ifs.matrices();
  const int N = ifs.size();
  std::vector<Word> support = opt.subsystem ? opt.subsystem->words : enumerate_words(N, opt.n);
  const int n = opt.subsystem ? opt.subsystem->n : opt.n;
  const std::size_t S = support.size();

  bool diag = true, conformal = true;
  for (const auto& A : mats) {
    diag = diag && A.b == 0 && A.c == 0;
    auto sv = singular_values(A);
    conformal = conformal && std::abs(sv.sigma1 - sv.sigma2) <= 1e-14 * sv.sigma1;
  }
  // per-word exponents: diagonal axes, or (log sigma1 of the block, log |det|)
  std::vector<double> x(S), y(S);
  for (std::size_t i = 0; i < S; ++i) {
    Mat2 A = word_product(mats, support[i]);
    if (diag) {
      x[i] = -std::log(std::abs(A.a)) / n;
      y[i] = -std::log(std::abs(A.d)) / n;
    } else {
      x[i] = -std::log(singular_values(A).sigma1) / n;
      y[i] = -std::log(std::abs(A.det())) / n;
    }
  }

  struct Eval {
    double dist, dim;
    Vec logits;
  };
  std::vector<Eval> archive;
  auto measure_of = [&](const Vec& z, std::vector<double>& w, std::array<double, 3>& out) {
    double m = z.maxCoeff(), tot = 0;
    w.resize(S);
    for (std::size_t i = 0; i < S; ++i) tot += (w[i] = std::exp(z[i] - m));
    double h = 0, ex = 0, ey = 0;
    for (std::size_t i = 0; i < S; ++i) {
      w[i] /= tot;
      if (w[i] > 0) h -= w[i] * std::log(w[i]);
      ex += w[i] * x[i];
      ey += w[i] * y[i];
    }
    h /= n;
    double c1, c2;
    if (diag) {
      c1 = std::min(ex, ey), c2 = std::max(ex, ey);
    } else {
      c1 = ex, c2 = ey - ex;
      if (c1 > c2) c1 = c2 = 0.5 * ey;
    }
    out = {h, c1, c2};
  };
  std::vector<double> w;
  auto record = [&](const Vec& z) -> const Eval& {
    std::array<double, 3> m;
    measure_of(z, w, m);
    double dist = std::hypot(m[1] - alpha[0], m[2] - alpha[1]);
    double dim = lyapunov_dimension(std::max(m[0], 0.0), m[1], m[2]);
    archive.push_back({dist, dim, z});
    return archive.back();
  };

  auto rng = make_stream(opt.seed, 0);
  std::vector<Vec> starts;
  for (int k = 0; k < std::max(opt.multistart, 1); ++k) {
    Vec z = Vec::Zero(S);
    if (k > 0)
      for (std::size_t i = 0; i < S; ++i) z[i] = 4 * uniform01(rng) - 2;
    starts.push_back(z);
  }
  for (double eps : opt.eps) {
    const double lambda = 100 / (eps * eps);
    auto f = [&](const Vec& z) {
      const Eval& e = record(z);
      double over = std::max(0.0, e.dist - eps);
      return -e.dim + lambda * over * over;
    };
    for (Vec& z : starts) {
      BoxResult r = nelder_mead(f, z, 0.5, opt.max_evals, 1e-12);
      z = r.x;  // warm start the next eps from here
    }
  }

  BoundaryResult res;
  const Eval* best = nullptr;
  for (double eps : opt.eps) {
    double v = -kInf;
    const Eval* arg = nullptr;
    for (const auto& e : archive)
      if (e.dist <= eps && e.dim > v) v = e.dim, arg = &e;
    if (!arg)
      throw Infeasible(fmt::format("no measure found with |chi(mu) - alpha| <= {} at alpha = ({}, {})", eps, alpha[0],
                                   alpha[1]));
    res.values.push_back(v);
    best = arg;
  }
  SpectrumPoint& pt = res.point;
  pt.alpha = {alpha[0], alpha[1]};
  pt.n = n;
  pt.boundary = true;
  double last = res.values.back();
  double prev = res.values.size() > 1 ? res.values[res.values.size() - 2] : last;
  pt.s = {last, prev};
  pt.s_value = last;
  std::array<double, 3> m;
  measure_of(best->logits, w, m);
  StepBernoulliMeasure mu;
  mu.N = N;
  mu.n = n;
  mu.support = support;
  mu.weights = w;
  pt.witness = std::move(mu);
  pt.witness_entropy = m[0];
  pt.witness_dimension = Interval{best->dim, best->dim};
  return res;
}

DimensionResult affinity_dimension(const std::vector<Mat2>& mats, const DimensionOptions& opt) {
  if (opt.schedule.empty()) throw InvalidInput("dimension schedule is empty");
  const int N = static_cast<int>(mats.size());
  std::optional<SubsystemSkeleton> sk;
  if (opt.use_subsystem) {
    try {
      sk = build_skeleton(mats);
    } catch (const std::exception&) {
    }
  }
  DimensionResult res;
  Interval running{0, 2};
  for (int n : opt.schedule) {
    if (!res.trace.empty() && capped_length(N, n, opt.term_budget) < std::uint64_t(n)) continue;
    std::optional<DominatedSubsystem> sub;
    if (sk) {
      int m = int(capped_length(N, n, 1000000));
      int len = sk->K == 0 ? n : 2 * sk->K + m;
      try {
        sub = build_dominated_subsystem(mats, *sk, len);
      } catch (const std::exception&) {
      }
    }
    PressureContext ctx = make_context(mats, n, nullptr, sub ? &*sub : nullptr, opt.threads);
    Interval hi = bisect_root([&](double s) { return pressure_phi(ctx, s, {}, {}).upper; }, opt.tol);
    Interval lo = bisect_root([&](double s) { return pressure_phi(ctx, s, {}, {}).lower; }, opt.tol);
    DimensionRow row;
    row.n = n;
    row.s = {lo.lower, hi.upper};
    running = {std::max(running.lower, row.s.lower), std::min(running.upper, row.s.upper)};
    if (running.lower > running.upper + 2 * opt.tol)
      throw InternalInconsistency(fmt::format("dimension brackets disjoint at n = {}: [{}, {}]", n, running.lower,
                                              running.upper));
    row.running = running;
    res.trace.push_back(row);
  }
  res.s = running;
  res.value = running.upper;
  return res;
}

SpectrumCurve spectrum_sweep(const AffineIfs& ifs, SweepMode mode, const std::vector<std::vector<double>>& grid,
                             const LocallyConstantPotential* phi, const SpectrumOptions& opt) {
  if (mode == SweepMode::Birkhoff && !phi) throw InvalidInput("Birkhoff sweep needs a potential");
  SpectrumCurve curve;
  curve.mode = mode;
  curve.n = opt.n;
  curve.tol = opt.tol;
  for (const auto& a : grid) {
    SweepEntry e;
    e.alpha = a;
    try {
      if (mode == SweepMode::Birkhoff) {
        e.point = birkhoff_spectrum(ifs, *phi, a, opt);
      } else {
        if (a.size() != 2) throw InvalidInput("Lyapunov alpha must have two components");
        e.point = lyapunov_spectrum(ifs, {a[0], a[1]}, opt);
      }
    } catch (const Infeasible& ex) {
      e.error_kind = "infeasible", e.error = ex.what();
    } catch (const Unconverged& ex) {
      e.error_kind = "unconverged", e.error = ex.what();
    } catch (const InternalInconsistency& ex) {
      e.error_kind = "internal", e.error = ex.what();
    } catch (const InvalidInput& ex) {
      e.error_kind = "invalid", e.error = ex.what();
    } catch (const std::exception& ex) {
      e.error_kind = "error", e.error = ex.what();
    }
    curve.entries.push_back(std::move(e));
  }
  return curve;
}

namespace {

std::string num(double x) { return std::isfinite(x) ? fmt::format("{:.12g}", x) : (x > 0 ? "inf" : x < 0 ? "-inf" : "nan"); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
  return out + "\"";
}

}  // namespace

void write_curve_csv(std::ostream& os, const SpectrumCurve& curve) {
  std::size_t M = curve.mode == SweepMode::Lyapunov ? 2 : 1;
  for (const auto& e : curve.entries) M = std::max(M, e.alpha.size());
  for (std::size_t k = 0; k < M; ++k) os << "alpha_" << k + 1 << ',';
  os << "s_lower,s_upper,s_value,h_lower,h_upper,h_value,q_star,witness_entropy,witness_chi1,witness_chi2,"
        "witness_dim_lower,witness_dim_upper,boundary,converged,n,certificate,fallback,error_kind,error\n";
  for (const auto& e : curve.entries) {
    for (std::size_t k = 0; k < M; ++k) os << (k < e.alpha.size() ? num(e.alpha[k]) : "") << ',';
    if (e.point) {
      const SpectrumPoint& p = *e.point;
      os << num(p.s.lower) << ',' << num(p.s.upper) << ',' << num(p.s_value) << ',';
      if (p.h_top) os << num(p.h_top->lower) << ',' << num(p.h_top->upper) << ',';
      else os << ",,";
      os << (p.h_value ? num(*p.h_value) : "") << ',';
      std::string q;
      for (std::size_t k = 0; k < p.q_star.size(); ++k) q += (k ? ";" : "") + num(p.q_star[k]);
      os << q << ',' << (p.witness_entropy ? num(*p.witness_entropy) : "") << ',';
      if (p.witness_lyapunov) os << num(p.witness_lyapunov->chi1.mid()) << ',' << num(p.witness_lyapunov->chi2.mid()) << ',';
      else os << ",,";
      if (p.witness_dimension) os << num(p.witness_dimension->lower) << ',' << num(p.witness_dimension->upper) << ',';
      else os << ",,";
      os << (p.boundary ? 1 : 0) << ',' << (p.converged ? 1 : 0) << ',' << p.n << ',';
    } else {
      os << ",,,,,,,,,,,,,," << curve.n << ',';
    }
    os << curve.certificate << ',' << (curve.certificate == "none" ? 1 : 0) << ',' << e.error_kind << ','
       << csv_field(e.error) << '\n';
  }
}

}  // namespace saspec
