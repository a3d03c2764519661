#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "saspec/errors.hpp"
#include "saspec/spectra.hpp"
#include "systems.hpp"

using namespace saspec;
using doctest::Approx;

namespace {

const double kLog2 = std::log(2.0), kLog3 = std::log(3.0);

LocallyConstantPotential third_symbol() { return LocallyConstantPotential(3, 1, 1, {0, 0, 1}); }

std::vector<oracle::M2> plain(const std::vector<Mat2>& m) {
  std::vector<oracle::M2> out;
  for (const auto& A : m) out.push_back({A.a, A.b, A.c, A.d});
  return out;
}

// Uniform-weight averages of -(log sigma1, log sigma2)/n over Sigma_n.
std::array<double, 2> uniform_chi_n(const std::vector<Mat2>& mats, int n) {
  double s1 = 0, s2 = 0, c = 0;
  oracle::for_each_word(plain(mats), n, [&](const std::vector<int>&, const oracle::M2& P) {
    s1 += std::log(oracle::singular_values(P)[0]);
    s2 += std::log(oracle::sigma2_stable(P));
    c += 1;
  });
  return {-s1 / (c * n), -s2 / (c * n)};
}

double binary_entropy(double x) { return -x * std::log(x) - (1 - x) * std::log(1 - x); }

double min_formula(double h, std::array<double, 2> a) { return std::min(h / a[0], 1 + (h - a[0]) / a[1]); }

}  // namespace

TEST_CASE("Birkhoff spectrum of the similarity benchmark") {
  auto ifs = systems::similarity_triple();
  auto phi = third_symbol();
  for (int n : {1, 6}) {
    for (double a : {0.2, 1.0 / 3, 0.5, 0.7}) {
      SpectrumOptions o;
      o.n = n;
      o.tol = 1e-8;
      auto pt = birkhoff_spectrum(ifs, phi, {a}, o);
      double expect = oracle::constrained_entropy(a) / kLog2;
      CHECK(pt.s_value == Approx(expect).epsilon(1e-6));
      CHECK(pt.s.contains(expect, 1e-8));
      CHECK(pt.s.width() < 1e-6);
      CHECK(pt.converged);
    }
  }
  SpectrumOptions o;
  o.n = 1;
  CHECK(birkhoff_spectrum(ifs, phi, {1.0 / 3}, o).s_value == Approx(1.584963).epsilon(1e-6));
  CHECK(birkhoff_spectrum(ifs, phi, {0.5}, o).s_value == Approx(1.5).epsilon(1e-6));
}

TEST_CASE("Birkhoff witness on the similarity benchmark") {
  auto ifs = systems::similarity_triple();
  SpectrumOptions o;
  o.n = 1;
  o.witness = true;
  auto pt = birkhoff_spectrum(ifs, third_symbol(), {0.5}, o);
  REQUIRE(pt.witness);
  CHECK(pt.witness->weights[0] == Approx(0.25).epsilon(1e-6));
  CHECK(pt.witness->weights[1] == Approx(0.25).epsilon(1e-6));
  CHECK(pt.witness->weights[2] == Approx(0.5).epsilon(1e-6));
  REQUIRE(pt.witness_dimension);
  CHECK(pt.witness_dimension->upper >= pt.s.lower - 1e-6);
  CHECK(pt.witness_dimension->lower <= pt.s.upper + 1e-6);
}

TEST_CASE("Birkhoff spectrum at the q = 0 point is the dimension root") {
  auto mats = systems::positive_pair();
  auto ifs = systems::positive_pair_ifs();
  LocallyConstantPotential phi(2, 1, 1, {0, 1});
  const int n = 6;
  // brute-force root of (1/n) log sum phi^s and the phi^s-weighted frequency of symbol 2
  auto terms = [&](double s) {
    std::vector<double> lw, f;
    oracle::for_each_word(plain(mats), n, [&](const std::vector<int>& w, const oracle::M2& P) {
      auto sv = oracle::singular_values(P);
      double l1 = std::log(sv[0]), l2 = std::log(oracle::sigma2_stable(P));
      lw.push_back(s <= 1 ? s * l1 : l1 + (s - 1) * l2);
      f.push_back(double(std::count(w.begin(), w.end(), 2)) / n);
    });
    return std::make_pair(lw, f);
  };
  double lo = 0, hi = 2;
  while (hi - lo > 1e-13) {
    double mid = 0.5 * (lo + hi);
    (oracle::log_sum_exp(terms(mid).first) / n >= 0 ? lo : hi) = mid;
  }
  double s0 = 0.5 * (lo + hi);
  auto [lw, f] = terms(s0);
  double L = oracle::log_sum_exp(lw), alpha = 0;
  for (std::size_t i = 0; i < lw.size(); ++i) alpha += std::exp(lw[i] - L) * f[i];

  SpectrumOptions o;
  o.n = n;
  o.tol = 1e-9;
  auto pt = birkhoff_spectrum(ifs, phi, {alpha}, o);
  CHECK(pt.s.upper == Approx(s0).epsilon(1e-7));
  CHECK(std::abs(pt.q_star[0]) < 1e-4);
  CHECK(pt.s.lower <= pt.s.upper);

  auto sub = build_dominated_subsystem(mats, n);
  o.subsystem = &sub;
  auto ps = birkhoff_spectrum(ifs, phi, {alpha}, o);
  CHECK(ps.s.upper == Approx(s0).epsilon(1e-7));
  CHECK(ps.s.lower >= pt.s.lower - 1e-12);
}

TEST_CASE("Birkhoff spectrum errors") {
  auto ifs = systems::similarity_triple();
  auto phi = third_symbol();
  CHECK_THROWS_AS(birkhoff_spectrum(ifs, phi, {1.2}), Infeasible);
  CHECK_THROWS_AS(birkhoff_spectrum(ifs, phi, {0.0}), Infeasible);
  CHECK_THROWS_AS(birkhoff_spectrum(ifs, phi, {0.5, 0.5}), InvalidInput);
}

TEST_CASE("slope constants and the Birkhoff slope certificate") {
  auto [C1, C] = slope_constants(systems::diagonal_triple().matrices());
  CHECK(C1 == Approx(kLog2).epsilon(1e-15));
  CHECK(C == Approx(2 * kLog2).epsilon(1e-15));
  // the certificate runs inside every solve; a non-diagonal one must not trip it
  auto ifs = systems::positive_pair_ifs();
  SpectrumOptions o;
  o.n = 8;
  CHECK_NOTHROW(birkhoff_spectrum(ifs, LocallyConstantPotential(2, 1, 1, {0, 1}), {0.4}, o));
}

TEST_CASE("Birkhoff spectrum is bit-identical across thread counts") {
  auto ifs = systems::positive_pair_ifs();
  LocallyConstantPotential phi(2, 2, 1, {0, 1, 1, 0});
  SpectrumOptions o;
  o.n = 10;
  auto a = birkhoff_spectrum(ifs, phi, {0.45}, o);
  o.threads = 3;
  auto b = birkhoff_spectrum(ifs, phi, {0.45}, o);
  CHECK(a.s.lower == b.s.lower);
  CHECK(a.s.upper == b.s.upper);
  CHECK(a.q_star == b.q_star);
}

TEST_CASE("entropy spectrum at the stationary point is log N") {
  auto ifs = systems::unequal_hyperbolic_pair_ifs();
  const int n = 10;
  auto a = uniform_chi_n(ifs.matrices(), n);
  SpectrumOptions o;
  o.n = n;
  auto e = entropy_spectrum(ifs, a, o);
  CHECK(e.value == Approx(kLog2).epsilon(1e-9));
  CHECK(std::abs(e.q_star[0]) < 1e-5);
  CHECK(std::abs(e.q_star[1]) < 1e-5);
  CHECK(e.h.contains(e.value));
  CHECK(e.h.upper <= kLog2 + 1e-15);
}

TEST_CASE("similarity systems: the exponent domain is one point") {
  auto ifs = systems::similarity_triple();
  auto dom = lyapunov_value_domain(ifs);
  for (const auto& v : dom.vertices) {
    CHECK(v[0] == Approx(kLog2).epsilon(1e-12));
    CHECK(v[1] == Approx(kLog2).epsilon(1e-12));
  }
  CHECK_FALSE(dom.exact);
  SpectrumOptions o;
  o.n = 4;
  CHECK(entropy_spectrum(ifs, {kLog2, kLog2}, o).value == Approx(kLog3).epsilon(1e-12));
  CHECK_THROWS_AS(entropy_spectrum(ifs, {kLog2, 1.0}, o), Infeasible);
  auto pt = lyapunov_spectrum(ifs, {kLog2, kLog2}, o);
  CHECK(pt.boundary);
  CHECK(pt.s_value == Approx(kLog3 / kLog2).epsilon(1e-6));
}

TEST_CASE("diagonal swap pair domain holds the constant-word corner") {
  auto dom = lyapunov_value_domain(systems::diagonal_swap_pair());
  CHECK(dom.contains({kLog2, 2 * kLog2}, 1e-9));
  CHECK(dom.contains({1.5 * kLog2, 1.5 * kLog2}, 1e-9));
}

TEST_CASE("exponent domain contains Monte-Carlo exponents of random Bernoulli measures") {
  std::mt19937_64 g(2024);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (auto ifs : {systems::unequal_hyperbolic_pair_ifs(), systems::hyperbolic_pair_ifs(), systems::positive_pair_ifs()}) {
    auto dom = lyapunov_value_domain(ifs);
    for (int k = 0; k < 5; ++k) {
      double p = u(g);
      LyapunovOptions lo;
      lo.method = LyapunovMethod::MonteCarlo;
      lo.chains = 16;
      lo.steps = 20000;
      lo.seed = 10 + k;
      auto est = lyapunov_exponents(ifs, StepBernoulliMeasure::bernoulli({p, 1 - p}), lo);
      CHECK(dom.contains({est.chi1.mid(), est.chi2.mid()}, 1e-9));
    }
  }
}

TEST_CASE("counting entropy matches a brute-force count") {
  auto mats = systems::unequal_hyperbolic_pair();
  auto ifs = systems::unequal_hyperbolic_pair_ifs();
  const int n = 10;
  std::array<double, 2> a{0.58, 1.40};
  for (double eps : {0.05, 0.1}) {
    double c = 0;
    oracle::for_each_word(plain(mats), n, [&](const std::vector<int>&, const oracle::M2& P) {
      double x = -std::log(oracle::singular_values(P)[0]) / n, y = -std::log(oracle::sigma2_stable(P)) / n;
      if (std::max(std::abs(x - a[0]), std::abs(y - a[1])) < eps) c += 1;
    });
    CHECK(counting_entropy(ifs, a, n, eps) == Approx(std::log(c) / n).epsilon(1e-12));
  }
  CHECK(std::isinf(counting_entropy(ifs, {5, 5}, n, 0.01)));
}

TEST_CASE("Legendre entropy and counting agree near the centre of the domain") {
  auto ifs = systems::unequal_hyperbolic_pair_ifs();
  auto sub = build_dominated_subsystem(ifs.matrices(), 14);
  SpectrumOptions o;
  o.n = 14;
  o.subsystem = &sub;
  auto c = uniform_chi_n(ifs.matrices(), 14);
  auto e = entropy_spectrum(ifs, c, o);
  CHECK(std::abs(e.value - counting_entropy(ifs, c, 14, 0.05)) < 0.1);
}

TEST_CASE("Lyapunov spectrum: both characterizations and the uniform measure") {
  auto ifs = systems::unequal_hyperbolic_pair_ifs();
  auto sub = build_dominated_subsystem(ifs.matrices(), 14);
  REQUIRE(sub.K == 0);
  LyapunovOptions lo;
  lo.method = LyapunovMethod::MonteCarlo;
  auto u = lyapunov_exponents(ifs, StepBernoulliMeasure::uniform(2, 1), lo);
  std::array<double, 2> a{u.chi1.mid(), u.chi2.mid()};
  double dim_u = lyapunov_dimension(kLog2, a[0], a[1]);

  SpectrumOptions o;
  o.n = 14;
  o.subsystem = &sub;
  o.witness = true;
  auto pt = lyapunov_spectrum(ifs, a, o);
  CHECK(pt.s.lower <= pt.s.upper);
  CHECK(pt.s.upper >= dim_u - o.tol);
  REQUIRE(pt.h_value);
  CHECK(std::abs(pt.s_value - min_formula(*pt.h_value, a)) <= 2 * o.tol);
  REQUIRE(pt.s_formula);
  CHECK(pt.s_formula->contains(pt.s_value, 2 * o.tol));
  REQUIRE(pt.witness_dimension);
  CHECK(pt.witness_dimension->upper >= pt.s.lower - 1e-6);
  CHECK(pt.witness_dimension->lower <= pt.s.upper + 1e-6);
  REQUIRE(pt.witness_lyapunov);
  CHECK(pt.witness_lyapunov->chi1.upper <= pt.witness_lyapunov->chi2.lower + 1e-12);
}

TEST_CASE("Lyapunov spectrum rejects points outside the interior") {
  auto ifs = systems::unequal_hyperbolic_pair_ifs();
  SpectrumOptions o;
  o.n = 8;
  CHECK_THROWS_AS(lyapunov_spectrum(ifs, {1.3, 0.6}, o), Infeasible);
  CHECK_THROWS_AS(lyapunov_spectrum(ifs, {0.1, 3.0}, o), Infeasible);
}

TEST_CASE("diagonal benchmark matches the per-axis large-deviation closed form") {
  // chi1 = log2 (1 + x) is attained by the words with a fraction x (or 1 - x) of swaps,
  // so h = H(x) on the segment chi1 + chi2 = 3 log 2
  auto ifs = systems::diagonal_swap_pair();
  SpectrumOptions o;
  o.n = 6;
  for (double x : {0.1, 0.25, 0.4}) {
    std::array<double, 2> a{kLog2 * (1 + x), kLog2 * (2 - x)};
    double h = binary_entropy(x);
    auto e = entropy_spectrum(ifs, a, o);
    CHECK(e.value == Approx(h).epsilon(1e-6));
    auto pt = lyapunov_spectrum(ifs, a, o);
    CHECK(pt.s_value == Approx(min_formula(h, a)).epsilon(1e-2));
    CHECK(std::abs(pt.s_value - min_formula(h, a)) < 1e-5);
  }
  // identical maps: a point domain whose single value is the affinity dimension
  auto tri = systems::diagonal_triple();
  auto pt = lyapunov_spectrum(tri, {kLog2, 2 * kLog2}, o);
  CHECK(pt.s_value == Approx(1 + std::log(1.5) / std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("boundary mode on the similarity benchmark") {
  auto ifs = systems::similarity_triple();
  auto r = boundary_spectrum(ifs, {kLog2, kLog2});
  REQUIRE(r.values.size() == 4);
  for (double v : r.values) CHECK(v == Approx(kLog3 / kLog2).epsilon(1e-9));
  for (std::size_t i = 1; i < r.values.size(); ++i) CHECK(r.values[i] <= r.values[i - 1]);
  CHECK(r.point.boundary);
  CHECK(r.point.s.contains(kLog3 / kLog2, 1e-9));
  CHECK_THROWS_AS(boundary_spectrum(ifs, {kLog2, 1.0}), InvalidInput);
}

TEST_CASE("boundary mode on the symmetric diagonal swap pair") {
  auto ifs = systems::diagonal_swap_pair();
  const double c = 1.5 * kLog2;
  BoundaryOptions bo;
  auto r = boundary_spectrum(ifs, {c, c}, bo);
  // one-parameter oracle: Bernoulli(p, 1 - p) has axis exponents log2 (2 - p) and log2 (1 + p)
  for (std::size_t k = 0; k < bo.eps.size(); ++k) {
    double best = 0;
    for (int i = 1; i < 200000; ++i) {
      double p = i / 200000.0;
      double e1 = kLog2 * (2 - p), e2 = kLog2 * (1 + p);
      double x1 = std::min(e1, e2), x2 = std::max(e1, e2);
      if (std::hypot(x1 - c, x2 - c) > bo.eps[k]) continue;
      double h = binary_entropy(p);
      best = std::max(best, h <= x1 ? h / x1 : 1 + (h - x1) / x2);
    }
    CHECK(r.values[k] == Approx(best).epsilon(1e-4));
    if (k) CHECK(r.values[k] <= r.values[k - 1]);
  }
  // the symmetric measure: log 2 - s (3/2) log 2 = 0
  CHECK(r.values.back() - 2.0 / 3 < 0.02);
  CHECK(r.values.back() >= 2.0 / 3 - 1e-9);
  auto again = boundary_spectrum(ifs, {c, c}, bo);
  CHECK(again.values == r.values);
}

TEST_CASE("affinity dimension examples") {
  auto d = affinity_dimension(systems::diagonal_triple().matrices());
  CHECK(d.value == Approx(1 + std::log(1.5) / std::log(4.0)).epsilon(1e-8));
  CHECK(d.value == Approx(1.292481).epsilon(1e-6));
  CHECK(affinity_dimension(systems::similarity_triple().matrices()).value == Approx(kLog3 / kLog2).epsilon(1e-8));
  auto p = affinity_dimension(systems::similarity_pair().matrices());
  CHECK(std::abs(p.value - 1.0) < 1e-6);
  CHECK(p.s.contains(1.0, 1e-8));
}

TEST_CASE("affinity dimension trace on the positive pair") {
  auto mats = systems::positive_pair();
  DimensionOptions o;
  o.schedule = {1, 2, 4, 8};
  auto d = affinity_dimension(mats, o);
  REQUIRE(d.trace.size() == 4);
  for (std::size_t i = 1; i < d.trace.size(); ++i) {
    CHECK(d.trace[i].running.width() <= d.trace[i - 1].running.width());
    CHECK(d.trace[i].running.lower <= d.trace[i].running.upper);
  }
  // upper root at n = 8 from a brute-force pressure
  auto P = [&](double s) {
    std::vector<double> lw;
    oracle::for_each_word(plain(mats), 8, [&](const std::vector<int>&, const oracle::M2& A) {
      auto sv = oracle::singular_values(A);
      double l1 = std::log(sv[0]), l2 = std::log(oracle::sigma2_stable(A));
      lw.push_back(s <= 1 ? s * l1 : l1 + (s - 1) * l2);
    });
    return oracle::log_sum_exp(lw) / 8;
  };
  double lo = 0, hi = 2;
  while (hi - lo > 1e-12) {
    double mid = 0.5 * (lo + hi);
    (P(mid) >= 0 ? lo : hi) = mid;
  }
  CHECK(d.trace.back().s.upper == Approx(0.5 * (lo + hi)).epsilon(1e-8));
  CHECK(d.s.width() < 0.05);
}

TEST_CASE("spectrum sweep") {
  auto ifs = systems::similarity_triple();
  auto phi = third_symbol();
  SpectrumOptions o;
  o.n = 1;
  std::vector<std::vector<double>> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back({i / 10.0});
  grid.push_back({1.2});
  auto curve = spectrum_sweep(ifs, SweepMode::Birkhoff, grid, &phi, o);
  REQUIRE(curve.entries.size() == 10);
  for (int i = 0; i < 9; ++i) {
    REQUIRE(curve.entries[i].point);
    CHECK(curve.entries[i].point->s_value == Approx(oracle::constrained_entropy(grid[i][0]) / kLog2).epsilon(1e-5));
  }
  CHECK_FALSE(curve.entries[9].point);
  CHECK(curve.entries[9].error_kind == "infeasible");

  auto single = spectrum_sweep(ifs, SweepMode::Birkhoff, {{0.3}}, &phi, o);
  CHECK(single.entries[0].point->s_value == birkhoff_spectrum(ifs, phi, {0.3}, o).s_value);

  std::ostringstream os;
  write_curve_csv(os, curve);
  std::string csv = os.str();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
  CHECK(csv.rfind("alpha_1,s_lower,s_upper", 0) == 0);
  CHECK(csv.find("infeasible") != std::string::npos);

  std::ostringstream empty;
  write_curve_csv(empty, spectrum_sweep(ifs, SweepMode::Birkhoff, {}, &phi, o));
  std::string header = empty.str();
  CHECK(std::count(header.begin(), header.end(), '\n') == 1);
}

TEST_CASE("entropy spectrum is concave along a segment") {
  auto ifs = systems::unequal_hyperbolic_pair_ifs();
  auto sub = build_dominated_subsystem(ifs.matrices(), 12);
  SpectrumOptions o;
  o.n = 12;
  o.subsystem = &sub;
  auto c = uniform_chi_n(ifs.matrices(), 12);
  std::vector<EntropyResult> h;
  for (double t : {-1.0, -0.5, 0.0, 0.5, 1.0}) h.push_back(entropy_spectrum(ifs, {c[0] - 0.04 * t, c[1] + 0.1 * t}, o));
  for (std::size_t i = 1; i + 1 < h.size(); ++i) {
    double slack = std::max({h[i - 1].h.width(), h[i].h.width(), h[i + 1].h.width()});
    CHECK(h[i].value >= 0.5 * (h[i - 1].value + h[i + 1].value) - 2 * slack);
    // the Legendre value of one convex estimator is exactly concave
    CHECK(h[i].value >= 0.5 * (h[i - 1].value + h[i + 1].value) - 1e-9);
  }
}
