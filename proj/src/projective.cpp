#include "saspec/projective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "saspec/errors.hpp"
#include "saspec/rng.hpp"
#include "saspec/symbolic.hpp"

namespace saspec {

double proj_normalize(double theta) {
  double t = std::fmod(theta, kPi);
  if (t < 0) t += kPi;
  if (t >= kPi) t -= kPi;
  return t;
}

double proj_distance(double a, double b) {
  double d = std::abs(proj_normalize(a) - proj_normalize(b));
  return std::min(d, kPi - d);
}

double map_point(const Mat2& A, double theta) {
  return proj_angle(A * Vec2{std::cos(theta), std::sin(theta)});
}

ProjInterval ProjInterval::ball(double center, double r) {
  return {proj_normalize(center - r), proj_normalize(center + r)};
}

double ProjInterval::length() const { return proj_normalize(end - start); }

double ProjInterval::mid() const { return proj_normalize(start + 0.5 * length()); }

bool ProjInterval::contains(double theta, double tol) const {
  double off = proj_normalize(theta - start);
  return off <= length() + tol || off >= kPi - tol;
}

double ProjInterval::inner_margin(const ProjInterval& other) const {
  double len = length(), olen = other.length();
  double o = proj_normalize(other.start - start);
  return std::min(o, len - o - olen);
}

ProjInterval map_interval(const Mat2& A, const ProjInterval& I) {
  double s = map_point(A, I.start), e = map_point(A, I.end);
  return A.det() > 0 ? ProjInterval{s, e} : ProjInterval{e, s};
}

namespace {

// Arcs as linear [s, s+len] with s in [0, pi).
struct Lin {
  double s, e;
};

std::vector<Lin> sorted_lin(const std::vector<ProjInterval>& arcs) {
  std::vector<Lin> v;
  for (const auto& a : arcs) {
    double s = proj_normalize(a.start);
    v.push_back({s, s + a.length()});
  }
  std::sort(v.begin(), v.end(), [](const Lin& x, const Lin& y) { return x.s < y.s || (x.s == y.s && x.e < y.e); });
  return v;
}

std::vector<ProjInterval> to_arcs(const std::vector<Lin>& v) {
  std::vector<ProjInterval> out;
  for (const auto& l : v) out.push_back({proj_normalize(l.s), proj_normalize(l.e)});
  return out;
}

}  // namespace

std::optional<Multicone> merge_arcs(std::vector<ProjInterval> arcs, int max_intervals) {
  if (arcs.empty()) return Multicone{};
  auto v = sorted_lin(arcs);
  std::vector<Lin> m;
  for (const auto& l : v) {
    if (!m.empty() && l.s <= m.back().e)
      m.back().e = std::max(m.back().e, l.e);
    else
      m.push_back(l);
  }
  // Wrap-around: the last arc may reach past pi into the first ones.
  while (m.size() > 1 && m.back().e >= m.front().s + kPi) {
    m.back().e = std::max(m.back().e, m.front().e + kPi);
    m.erase(m.begin());
  }
  if (m.size() == 1 && m[0].e - m[0].s >= kPi) return std::nullopt;
  while (static_cast<int>(m.size()) > max_intervals) {
    std::size_t best = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m.size(); ++i) {
      double g = i + 1 < m.size() ? m[i + 1].s - m[i].e : m[0].s + kPi - m[i].e;
      if (g < gap) gap = g, best = i;
    }
    if (best + 1 < m.size()) {
      m[best].e = std::max(m[best].e, m[best + 1].e);
      m.erase(m.begin() + best + 1);
    } else {
      m[best].e = std::max(m[best].e, m[0].e + kPi);
      m.erase(m.begin());
    }
  }
  double total = 0;
  for (const auto& l : m) total += l.e - l.s;
  if (total >= kPi) return std::nullopt;
  for (const auto& l : m)
    if (l.e - l.s >= kPi) return std::nullopt;
  return Multicone{to_arcs(m)};
}

void Multicone::validate() const {
  if (intervals.empty()) throw InvalidInput("multicone has no intervals");
  if (static_cast<int>(intervals.size()) > kMaxIntervals) throw InvalidInput("multicone has more than 8 intervals");
  auto v = sorted_lin(intervals);
  double total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    total += v[i].e - v[i].s;
    double next = i + 1 < v.size() ? v[i + 1].s : v[0].s + kPi;
    if (v.size() > 1 && !(next > v[i].e)) throw InvalidInput("multicone intervals overlap");
  }
  if (!(total < kPi)) throw InvalidInput("multicone covers the projective line");
}

bool Multicone::contains(double theta, double tol) const {
  for (const auto& I : intervals)
    if (I.contains(theta, tol)) return true;
  return false;
}

double Multicone::min_gap() const {
  auto v = sorted_lin(intervals);
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    double next = i + 1 < v.size() ? v[i + 1].s : v[0].s + kPi;
    g = std::min(g, next - v[i].e);
  }
  return g;
}

namespace {

double best_margin(const Multicone& cone, const ProjInterval& img) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& K : cone.intervals) best = std::max(best, K.inner_margin(img));
  return best;
}

Mat2 normalized(const Mat2& A) { return A.scaled(1.0 / norm(A)); }

double covering_width(const std::vector<ProjInterval>& arcs, double* mid) {
  auto merged = merge_arcs(arcs, 1000);
  if (!merged) {
    if (mid) *mid = 0;
    return kPi;
  }
  auto v = sorted_lin(merged->intervals);
  double gap = -1;
  std::size_t at = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double next = i + 1 < v.size() ? v[i + 1].s : v[0].s + kPi;
    if (next - v[i].e > gap) gap = next - v[i].e, at = i;
  }
  // The covering arc starts after the largest gap.
  double start = at + 1 < v.size() ? v[at + 1].s : v[0].s;
  double width = kPi - gap;
  if (mid) *mid = proj_normalize(start + 0.5 * width);
  return width;
}

// DFS over all words of length 1..n_max with normalized prefix products.
template <class F>
void for_each_product(const std::vector<Mat2>& mats, int n_max, F&& f) {
  const int N = static_cast<int>(mats.size());
  Word w;
  std::vector<Mat2> stack{Mat2::identity()};
  std::vector<double> logscale{0.0};
  std::vector<int> next{0};
  while (!next.empty()) {
    int depth = static_cast<int>(next.size()) - 1;
    if (depth == n_max || next.back() >= N) {
      next.pop_back();
      stack.pop_back();
      logscale.pop_back();
      if (!w.empty()) w.pop_back();
      continue;
    }
    int a = next.back()++;
    Mat2 P = stack.back() * mats[a];
    double nrm = norm(P);
    w.push_back(static_cast<std::uint8_t>(a + 1));
    f(w, P.scaled(1.0 / nrm), logscale.back() + std::log(nrm));
    stack.push_back(P.scaled(1.0 / nrm));
    logscale.push_back(logscale.back() + std::log(nrm));
    next.push_back(0);
  }
}

struct HypWord {
  Word w;
  double s, u;
};

std::vector<HypWord> hyperbolic_words(const std::vector<Mat2>& mats, int max_len) {
  std::vector<HypWord> out;
  for_each_product(mats, max_len, [&](const Word& w, const Mat2& P, double) {
    auto ec = classify(P);
    if (ec.kind == EigenKind::hyperbolic) out.push_back({w, *ec.s_dir, *ec.u_dir});
  });
  return out;
}

}  // namespace

DominationCheck check_domination(const std::vector<Mat2>& mats, const Multicone& cone) {
  cone.validate();
  DominationCheck res;
  DominationCertificate cert;
  cert.cone = cone;
  cert.margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mats.size(); ++i) {
    std::vector<ProjInterval> imgs;
    for (std::size_t j = 0; j < cone.intervals.size(); ++j) {
      auto img = map_interval(mats[i], cone.intervals[j]);
      double m = best_margin(cone, img);
      if (!(m > 0)) {
        res.offending = std::make_pair(static_cast<int>(i), static_cast<int>(j));
        return res;
      }
      cert.margin = std::min(cert.margin, m);
      imgs.push_back(img);
    }
    cert.images.push_back(std::move(imgs));
  }
  res.certificate = std::move(cert);
  return res;
}

BgStatistic bg_statistic(const std::vector<Mat2>& mats, int n_max) {
  if (n_max < 1) throw InvalidInput("bg_statistic needs n_max >= 1");
  std::vector<double> best(n_max + 1, 0.0);
  std::vector<double> logdet(mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) logdet[i] = std::log(std::abs(mats[i].det()));
  // Normalized products have norm 1, so the ratio is |det| of the normalized product.
  for_each_product(mats, n_max, [&](const Word& w, const Mat2& P, double) {
    double r = std::abs(P.det());
    int n = static_cast<int>(w.size());
    if (r > best[n]) best[n] = r;
  });
  BgStatistic out;
  std::vector<double> xs, ys;
  for (int n = 1; n <= n_max; ++n) {
    out.ratios.emplace_back(n, best[n]);
    if (n > n_max / 2) xs.push_back(n), ys.push_back(std::log(best[n]));
  }
  if (xs.size() < 2) xs.insert(xs.begin(), 0.0), ys.insert(ys.begin(), 0.0);
  double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
  out.tau = std::exp(sxy / sxx);
  return out;
}

namespace {

std::optional<Multicone> complement_of_balls(const std::vector<double>& centers, double rho) {
  std::vector<ProjInterval> balls;
  for (double c : centers) balls.push_back(ProjInterval::ball(c, rho));
  auto m = merge_arcs(balls, 1000);
  if (!m || m->intervals.empty()) return std::nullopt;
  std::vector<ProjInterval> comp;
  auto v = sorted_lin(m->intervals);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double next = i + 1 < v.size() ? v[i + 1].s : v[0].s + kPi;
    if (next - v[i].e > 1e-9) comp.push_back({proj_normalize(v[i].e), proj_normalize(next)});
  }
  if (comp.empty()) return std::nullopt;
  return merge_arcs(comp);
}

std::optional<Multicone> expand(const Multicone& C, double eta) {
  std::vector<ProjInterval> arcs;
  for (const auto& I : C.intervals) arcs.push_back({I.start - eta, I.end + eta});
  return merge_arcs(arcs);
}

std::optional<Multicone> forward_closure(const std::vector<Mat2>& mats, Multicone C, int steps) {
  for (int t = 0; t < steps; ++t) {
    std::vector<ProjInterval> arcs = C.intervals;
    for (const auto& A : mats)
      for (const auto& I : C.intervals) arcs.push_back(map_interval(A, I));
    auto next = merge_arcs(arcs);
    if (!next) return std::nullopt;
    bool same = next->intervals.size() == C.intervals.size();
    if (same)
      for (std::size_t i = 0; i < C.intervals.size(); ++i)
        same = same && proj_distance(next->intervals[i].start, C.intervals[i].start) < 1e-13 &&
               proj_distance(next->intervals[i].end, C.intervals[i].end) < 1e-13;
    C = *next;
    if (same) break;
  }
  return C;
}

}  // namespace

MulticoneResult find_multicone(const std::vector<Mat2>& mats, const MulticoneSearch& params) {
  MulticoneResult res;
  res.evidence = bg_statistic(mats, params.bg_n_max);
  auto consider = [&](const std::optional<Multicone>& c) {
    if (!c || c->intervals.empty()) return;
    try {
      c->validate();
    } catch (const InvalidInput&) {
      return;
    }
    auto chk = check_domination(mats, *c);
    if (chk.certificate && (!res.certificate || chk.certificate->margin > res.certificate->margin))
      res.certificate = std::move(chk.certificate);
  };
  if (params.user_cone) consider(params.user_cone);

  auto hyp = hyperbolic_words(mats, params.max_word_length);
  if (hyp.empty()) return res;
  std::vector<double> S, U;
  for (const auto& h : hyp) S.push_back(h.s), U.push_back(h.u);

  const double radii[] = {0.7, 0.55, 0.45, 0.35, 0.25, 0.18, 0.12, 0.08, 0.05, 0.03, 0.02, 0.01, 0.005};
  std::vector<Multicone> seeds;
  for (double eps : radii) {
    std::vector<ProjInterval> arcs;
    for (double s : S) arcs.push_back(ProjInterval::ball(s, eps));
    if (auto m = merge_arcs(arcs)) seeds.push_back(*m);
    if (auto m = complement_of_balls(U, eps)) seeds.push_back(*m);
  }
  for (const auto& seed : seeds) {
    consider(seed);
    auto closed = forward_closure(mats, seed, params.refine_steps);
    if (!closed) continue;
    consider(closed);
    for (double eta : {0.1, 0.03, 0.01, 0.003}) consider(expand(*closed, eta));
  }
  return res;
}

std::vector<Mat2> DominatedSubsystem::products() const {
  std::vector<Mat2> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(word_product(base, w));
  return out;
}

namespace {

Mat2 normalized_product(const std::vector<Mat2>& mats, const Word& w) {
  Mat2 P = Mat2::identity();
  for (auto c : w) P = normalized(P * mats[c - 1]);
  return P;
}

// Margin of A C inside target (min over the arcs of C); negative if some image escapes.
double cone_margin(const Mat2& A, const Multicone& C, const Multicone& target) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& I : C.intervals) m = std::min(m, best_margin(target, map_interval(A, I)));
  return m;
}

// B: per component of C the hull of the images inside it, expanded by eta.
Multicone inner_cone(const Multicone& C, const std::vector<ProjInterval>& images, double eta) {
  std::vector<ProjInterval> out;
  for (const auto& K : C.intervals) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& img : images) {
      if (K.inner_margin(img) <= 0) continue;
      double o = proj_normalize(img.start - K.start);
      lo = std::min(lo, o);
      hi = std::max(hi, o + img.length());
    }
    if (lo <= hi) out.push_back({proj_normalize(K.start + lo - eta), proj_normalize(K.start + hi + eta)});
  }
  return Multicone{out};
}

Word lcm_power(const Word& w, std::size_t target) { return power(w, static_cast<int>(target / w.size())); }

}  // namespace

SubsystemSkeleton build_skeleton(const std::vector<Mat2>& mats, const SubsystemParams& params) {
  SubsystemSkeleton sk;
  MulticoneSearch ms;
  ms.max_word_length = params.max_word_length;
  auto found = find_multicone(mats, ms);
  if (found.certificate) {
    sk.already_dominated = true;
    sk.certificate = *found.certificate;
    sk.C = found.certificate->cone;
    sk.K = 0;
    return sk;
  }
  auto hyp = hyperbolic_words(mats, params.max_word_length);
  if (hyp.empty()) throw HypothesisFailure("no hyperbolic word up to length " + std::to_string(params.max_word_length));
  double best = 0;
  std::size_t bi = 0, bj = 0;
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    for (std::size_t j = i + 1; j < hyp.size(); ++j) {
      const auto& x = hyp[i];
      const auto& y = hyp[j];
      double d = std::min({proj_distance(x.s, x.u), proj_distance(x.s, y.s), proj_distance(x.s, y.u),
                           proj_distance(x.u, y.s), proj_distance(x.u, y.u), proj_distance(y.s, y.u)});
      std::size_t len = std::lcm(x.w.size(), y.w.size());
      if (len > 12) continue;
      // Prefer well separated axes; among near-ties prefer short words.
      if (d > best * 1.05 || (d > best * 0.95 && len < best_len)) {
        best = d, bi = i, bj = j, best_len = len;
      }
    }
  }
  if (!(best > 1e-6)) throw HypothesisFailure("no pair of hyperbolic words with four distinct eigen-directions");
  const auto& h1 = hyp[bi];
  const auto& h2 = hyp[bj];
  sk.k1 = lcm_power(h1.w, best_len);
  sk.k2 = lcm_power(h2.w, best_len);
  sk.r = params.radius_fraction * best;
  Mat2 A1 = normalized_product(mats, sk.k1), A2 = normalized_product(mats, sk.k2);
  // Smallest L with (A_k)^L mapping the complement of B(u, r) into B(s, r)°.
  auto ok = [&](const Mat2& P, const HypWord& h) {
    ProjInterval outside{proj_normalize(h.u + sk.r), proj_normalize(h.u + kPi - sk.r)};
    Multicone target{{ProjInterval::ball(h.s, sk.r)}};
    return best_margin(target, map_interval(P, outside)) > 0;
  };
  Mat2 P1 = Mat2::identity(), P2 = Mat2::identity();
  for (int L = 1; L <= params.max_power; ++L) {
    P1 = normalized(P1 * A1);
    P2 = normalized(P2 * A2);
    if (ok(P1, h1) && ok(P2, h2)) {
      sk.L = L;
      break;
    }
  }
  if (sk.L == 0) throw HypothesisFailure("no power of the hyperbolic words contracts onto the attracting balls");
  auto C = merge_arcs({ProjInterval::ball(h1.s, sk.r), ProjInterval::ball(h2.s, sk.r)});
  sk.C = *C;
  sk.K = 2 * sk.L * static_cast<int>(sk.k1.size());
  const std::size_t half = static_cast<std::size_t>(sk.L) * sk.k1.size();
  for (const auto& h : hyp) {
    if (half % h.w.size() != 0) continue;
    bool u_in = proj_distance(h.u, h1.s) <= sk.r || proj_distance(h.u, h2.s) <= sk.r;
    bool s_in = proj_distance(h.s, h1.u) <= sk.r || proj_distance(h.s, h2.u) <= sk.r;
    if (u_in && s_in) sk.k3_candidates.push_back(lcm_power(h.w, half));
    if (sk.k3_candidates.size() >= 16) break;
  }
  return sk;
}

DominatedSubsystem build_dominated_subsystem(const std::vector<Mat2>& mats, const SubsystemSkeleton& sk, int n,
                                             const SubsystemParams& params) {
  const int N = static_cast<int>(mats.size());
  DominatedSubsystem sub;
  sub.n = n;
  sub.K = sk.K;
  sub.base = mats;
  sub.C = sk.C;
  sub.k1 = sk.k1;
  sub.k2 = sk.k2;
  sub.L = sk.L;
  sub.r = sk.r;
  if (n < 1 || (sk.K > 0 && n <= 2 * sk.K))
    throw InvalidInput("block length " + std::to_string(n) + " must exceed 2K = " + std::to_string(2 * sk.K));
  std::vector<ProjInterval> images;
  double margin = std::numeric_limits<double>::infinity();
  WordStream ws(N, n - 2 * sk.K);
  Word core;
  if (sk.K == 0) {
    while (ws.next(core)) {
      Mat2 P = normalized_product(mats, core);
      double m = cone_margin(P, sk.C, sk.C);
      if (!(m > 0)) throw ConstructionFailure("certified cone not preserved", word_to_string(core));
      margin = std::min(margin, m);
      for (const auto& I : sk.C.intervals) images.push_back(map_interval(P, I));
      sub.words.push_back(core);
    }
  } else {
    std::vector<std::pair<Word, Word>> cands;
    Word a2[2] = {power(sk.k1, 2 * sk.L), power(sk.k2, 2 * sk.L)};
    Word a1[2] = {power(sk.k1, sk.L), power(sk.k2, sk.L)};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) cands.emplace_back(a2[a], a2[b]);
    for (const auto& k3 : sk.k3_candidates)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) cands.emplace_back(concat(a1[a], k3), a2[b]);
    std::vector<std::pair<Mat2, Mat2>> cand_mats;
    for (const auto& [j1, j2] : cands) cand_mats.emplace_back(normalized_product(mats, j1), normalized_product(mats, j2));
    while (ws.next(core)) {
      Mat2 Pi = normalized_product(mats, core);
      bool done = false;
      for (std::size_t c = 0; c < cands.size() && !done; ++c) {
        Mat2 P = normalized(cand_mats[c].first * Pi * cand_mats[c].second);
        double m = cone_margin(P, sk.C, sk.C);
        if (m > 0) {
          margin = std::min(margin, m);
          for (const auto& I : sk.C.intervals) images.push_back(map_interval(P, I));
          sub.words.push_back(concat(concat(cands[c].first, core), cands[c].second));
          done = true;
        }
      }
      if (!done) throw ConstructionFailure("no verified sandwich for core word", word_to_string(core));
    }
  }
  double eta = std::min(1e-6, 1e-3 * margin);
  sub.B = inner_cone(sk.C, images, eta);
  sub.margin = margin - eta;
  almost_mult_constant(sub, params.z_samples, params.z_max_blocks, params.seed);
  return sub;
}

DominatedSubsystem build_dominated_subsystem(const std::vector<Mat2>& mats, int n, const SubsystemParams& params) {
  return build_dominated_subsystem(mats, build_skeleton(mats, params), n, params);
}

DominatedSubsystem build_dominated_subsystem(const AffineIfs& ifs, int n, const SubsystemParams& params) {
  return build_dominated_subsystem(ifs.matrices(), n, params);
}

double sampled_defect(const DominatedSubsystem& sub, int samples, int max_blocks, std::uint64_t seed) {
  std::vector<Mat2> P;
  P.reserve(sub.words.size());
  for (const auto& w : sub.words) P.push_back(normalized_product(sub.base, w));
  if (P.empty()) return 0;
  auto rng = make_stream(seed, 0);
  auto draw = [&]() {
    int k = 1 + static_cast<int>(uniform_below(rng, max_blocks));
    Mat2 M = Mat2::identity();
    for (int i = 0; i < k; ++i) M = normalized(M * P[uniform_below(rng, P.size())]);
    return M;
  };
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    Mat2 A = draw(), B = draw();
    // A and B have unit norm, so the defect is -log ||AB||.
    worst = std::max(worst, -std::log(norm(A * B)));
  }
  for (const auto& A : P) worst = std::max(worst, -std::log(norm(A * A)));
  return worst;
}

double almost_mult_constant(DominatedSubsystem& sub, int samples, int max_blocks, std::uint64_t seed) {
  sub.Z_sampled = sampled_defect(sub, samples, max_blocks, seed);
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& I : sub.B.intervals) delta = std::min(delta, best_margin(sub.C, I));
  delta = std::min(delta, kPi / 2);
  sub.Z_geometric = delta > 0 ? -std::log(std::sin(delta)) : std::numeric_limits<double>::infinity();
  sub.Z = std::max(sub.Z_sampled, sub.Z_geometric);
  return sub.Z;
}

OseledetsDirection oseledets_direction(const std::vector<Mat2>& mats, const DominationCertificate& cert,
                                       const Word& w, double tol) {
  if (!(tol > 0)) throw InvalidInput("tolerance must be positive");
  OseledetsDirection out;
  std::vector<ProjInterval> prev = cert.cone.intervals;
  double mid = 0;
  out.width = covering_width(prev, &mid);
  out.angle = mid;
  Mat2 P = Mat2::identity();
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] < 1 || w[k] > mats.size()) throw InvalidInput("symbol outside alphabet");
    P = normalized(P * mats[w[k] - 1]);
    std::vector<ProjInterval> cur;
    for (const auto& I : cert.cone.intervals) cur.push_back(map_interval(P, I));
    for (const auto& img : cur) {
      bool inside = false;
      for (const auto& p : prev) inside = inside || p.inner_margin(img) > -1e-12;
      if (!inside) throw CertificateViolation("nested image escapes at depth " + std::to_string(k + 1));
    }
    out.width = covering_width(cur, &mid);
    out.angle = mid;
    out.depth = static_cast<int>(k + 1);
    out.widths.push_back(out.width);
    prev = std::move(cur);
    if (out.width < tol) break;
  }
  return out;
}

namespace {

bool is_scalar(const Mat2& A) {
  double s = std::abs(A.a) + std::abs(A.d);
  return std::abs(A.b) <= 1e-12 * s && std::abs(A.c) <= 1e-12 * s && std::abs(A.a - A.d) <= 1e-12 * s;
}

std::vector<double> real_eigenlines(const Mat2& A) {
  double tr = A.trace(), D = A.det();
  double disc = tr * tr - 4 * D;
  double scale = tr * tr + 4 * std::abs(D);
  if (disc < -1e-14 * scale) return {};
  double root = std::sqrt(std::max(disc, 0.0));
  std::vector<double> out;
  for (double lam : {0.5 * (tr + root), 0.5 * (tr - root)}) {
    Vec2 r1{A.b, lam - A.a}, r2{lam - A.d, A.c};
    Vec2 v = std::hypot(r1.x, r1.y) >= std::hypot(r2.x, r2.y) ? r1 : r2;
    if (std::hypot(v.x, v.y) == 0) continue;
    double t = proj_angle(v);
    bool dup = false;
    for (double o : out) dup = dup || proj_distance(o, t) < 1e-12;
    if (!dup) out.push_back(t);
  }
  return out;
}

bool fixes_line(const Mat2& A, double theta) {
  Vec2 v{std::cos(theta), std::sin(theta)};
  Vec2 w = A * v;
  return std::abs(w.x * v.y - w.y * v.x) <= 1e-10 * norm(A);
}

}  // namespace

HypothesisReport check_hypotheses(const std::vector<Mat2>& mats, int L, int union_cap) {
  if (L < 1) throw InvalidInput("word bound must be at least 1");
  HypothesisReport rep;
  rep.bound_word_length = L;
  rep.bound_union_cap = union_cap;

  const Mat2* ref = nullptr;
  for (const auto& A : mats)
    if (!is_scalar(A)) {
      ref = &A;
      break;
    }
  if (!ref) {
    rep.irreducible = false;
    rep.invariant_line = 0.0;
  } else {
    rep.irreducible = true;
    for (double t : real_eigenlines(*ref)) {
      bool common = true;
      for (const auto& A : mats) common = common && fixes_line(A, t);
      if (common) {
        rep.irreducible = false;
        rep.invariant_line = t;
        break;
      }
    }
  }

  std::vector<double> seeds{0.0, kPi / 4, kPi / 2, 3 * kPi / 4};
  double best_tr = 0;
  for_each_product(mats, L, [&](const Word& w, const Mat2& P, double) {
    double val = std::abs(P.trace()) / std::sqrt(std::abs(P.det()));
    if (val > best_tr) {
      best_tr = val;
      if (val > 2 * (1 + 1e-9)) rep.noncompact_witness = w;
    }
    if (seeds.size() < 4000)
      for (double t : real_eigenlines(P)) {
        bool dup = false;
        for (double s : seeds) dup = dup || proj_distance(s, t) < 1e-9;
        if (!dup) seeds.push_back(t);
      }
  });
  if (rep.noncompact_witness) rep.witness_trace = best_tr;

  if (rep.irreducible) {
    rep.strongly_irreducible = true;
    for (double seed : seeds) {
      std::vector<double> orbit{seed};
      bool overflow = false;
      for (std::size_t i = 0; i < orbit.size() && !overflow; ++i) {
        for (const auto& A : mats) {
          double y = map_point(A, orbit[i]);
          bool seen = false;
          for (double o : orbit) seen = seen || proj_distance(o, y) < 1e-9;
          if (!seen) orbit.push_back(y);
          if (static_cast<int>(orbit.size()) > union_cap) {
            overflow = true;
            break;
          }
        }
      }
      if (!overflow) {
        rep.strongly_irreducible = false;
        std::sort(orbit.begin(), orbit.end());
        rep.invariant_union = orbit;
        break;
      }
    }
  } else if (rep.invariant_line) {
    rep.invariant_union = {*rep.invariant_line};
  }
  return rep;
}

}  // namespace saspec
