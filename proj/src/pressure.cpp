#include "saspec/pressure.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "saspec/errors.hpp"
#include "saspec/parallel.hpp"

namespace saspec {

namespace {

constexpr std::uint64_t kChunk = 4096;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t ipow(std::uint64_t b, int e) {
  std::uint64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Divide by the largest entry and return its log, keeping long products in range.
double renormalize(Mat2& P) {
  double m = std::max(std::max(std::abs(P.a), std::abs(P.b)), std::max(std::abs(P.c), std::abs(P.d)));
  P = P.scaled(1.0 / m);
  return std::log(m);
}

void check_mats(const std::vector<Mat2>& mats, const LocallyConstantPotential* phi) {
  if (mats.empty()) throw InvalidInput("empty matrix list");
  if (mats.size() > 255) throw InvalidInput("at most 255 maps");
  if (phi && phi->alphabet() != static_cast<int>(mats.size()))
    throw InvalidInput(fmt::format("potential alphabet {} does not match {} maps", phi->alphabet(), mats.size()));
}

}  // namespace

WordTable::WordTable(const std::vector<Mat2>& mats, int n, const LocallyConstantPotential* phi, int threads)
    : N_(static_cast<int>(mats.size())), n_(n), threads_(threads) {
  check_mats(mats, phi);
  if (n < 1) throw InvalidInput("word length must be positive");
  if (phi && n < phi->depth())
    throw InvalidInput(fmt::format("word length {} is below the potential depth {}", n, phi->depth()));
  build(mats, phi);
}

WordTable::WordTable(const std::vector<Mat2>& mats, std::vector<Word> words, const LocallyConstantPotential* phi,
                     int threads)
    : N_(static_cast<int>(mats.size())), threads_(threads), words_(std::move(words)) {
  check_mats(mats, phi);
  if (words_.empty()) throw InvalidInput("empty word list");
  n_ = static_cast<int>(words_[0].size());
  if (n_ < 1) throw InvalidInput("empty word");
  for (const auto& w : words_) {
    if (static_cast<int>(w.size()) != n_) throw InvalidInput("words of unequal length");
    for (auto c : w)
      if (c < 1 || c > N_) throw InvalidInput("symbol outside alphabet");
  }
  if (phi && n_ < phi->depth())
    throw InvalidInput(fmt::format("word length {} is below the potential depth {}", n_, phi->depth()));
  build(mats, phi);
}

Word WordTable::word(std::uint64_t i) const {
  return words_.empty() ? word_at(N_, n_, i) : words_[i];
}

void WordTable::build(const std::vector<Mat2>& mats, const LocallyConstantPotential* phi) {
  M_ = phi ? phi->dimension() : 0;
  d_ = phi ? phi->depth() : 0;
  T_ = d_ >= 2 ? ipow(N_, d_ - 1) : 1;
  std::uint64_t count = words_.empty() ? word_count(N_, n_) : words_.size();
  l1_.assign(count, 0);
  l2_.assign(count, 0);
  S_.assign(count * M_, 0);
  if (d_ >= 2) last_.assign(count, 0);
  const std::uint64_t keyspace = d_ >= 1 ? ipow(N_, d_) : 1;

  // tail table: windows of (last d-1 symbols, tail) that start inside the word
  tails_.assign(T_ * T_ * std::max(M_, 1), 0);
  if (d_ >= 2) {
    for (std::uint64_t l = 0; l < T_; ++l)
      for (std::uint64_t t = 0; t < T_; ++t) {
        Word lw = word_at(N_, d_ - 1, l), tw = word_at(N_, d_ - 1, t);
        Word cat = concat(lw, tw);
        double* out = &tails_[(l * T_ + t) * M_];
        for (int k = 0; k + d_ <= static_cast<int>(cat.size()) && k < d_ - 1; ++k) {
          std::uint64_t key = word_index(N_, Word(cat.begin() + k, cat.begin() + k + d_));
          const double* v = phi->value(key);
          for (int m = 0; m < M_; ++m) out[m] += v[m];
        }
      }
  }

  const bool explicit_words = !words_.empty();
  parallel_chunks(count, kChunk, threads_, [&](std::uint64_t b, std::uint64_t e) {
    // prefix stacks: normalized product, accumulated log scale, window key, interior sum
    std::vector<Mat2> P(n_ + 1, Mat2::identity());
    std::vector<double> scale(n_ + 1, 0.0);
    std::vector<std::uint64_t> key(n_ + 1, 0);
    std::vector<double> acc((n_ + 1) * std::max(M_, 1), 0.0);
    Word prev, w;
    std::optional<WordStream> stream;
    if (!explicit_words) stream.emplace(N_, n_, b, e);
    for (std::uint64_t i = b; i < e; ++i) {
      if (explicit_words) {
        w = words_[i];
      } else {
        stream->next(w);
      }
      int from = 0;
      if (!prev.empty())
        while (from < n_ && prev[from] == w[from]) ++from;
      for (int j = from; j < n_; ++j) {
        Mat2 Q = P[j] * mats[w[j] - 1];
        double ls = renormalize(Q);
        P[j + 1] = Q;
        scale[j + 1] = scale[j] + ls;
        if (d_ >= 1) {
          key[j + 1] = (key[j] * N_ + (w[j] - 1)) % keyspace;
          for (int m = 0; m < M_; ++m) acc[(j + 1) * M_ + m] = acc[j * M_ + m];
          if (j >= d_ - 1) {
            const double* v = phi->value(key[j + 1]);
            for (int m = 0; m < M_; ++m) acc[(j + 1) * M_ + m] += v[m];
          }
        }
      }
      auto [a, c] = log_singular_values(P[n_]);
      l1_[i] = a + scale[n_];
      l2_[i] = c + scale[n_];
      for (int m = 0; m < M_; ++m) S_[i * M_ + m] = acc[n_ * M_ + m];
      if (d_ >= 2) last_[i] = static_cast<std::uint32_t>(key[n_] % T_);
      prev = w;
    }
  });
}

void WordTable::tail_envelope(const std::vector<double>& q, bool upper, std::vector<double>& value,
                              std::vector<std::uint64_t>& arg) const {
  value.assign(T_, 0);
  arg.assign(T_, 0);
  if (M_ == 0 || d_ < 2) return;
  for (std::uint64_t l = 0; l < T_; ++l) {
    double best = upper ? kNegInf : -kNegInf;
    for (std::uint64_t t = 0; t < T_; ++t) {
      const double* v = tail_sum(l, t);
      double x = 0;
      for (int m = 0; m < M_; ++m) x += q[m] * v[m];
      if (upper ? x > best : x < best) best = x, arg[l] = t;
    }
    value[l] = best;
  }
}

Exponent Exponent::svf(double s) {
  if (s < 0) throw InvalidInput("s must be non-negative");
  if (s <= 1) return {s, 0};
  if (s <= 2) return {1, s - 1};
  return {s / 2, s / 2};
}

namespace {

struct Acc {
  double m = kNegInf, s = 0;
  std::vector<double> g1, g2;
};

Acc merge(const Acc& x, const Acc& y) {
  if (y.m == kNegInf) return x;
  if (x.m == kNegInf) return y;
  Acc r;
  r.m = std::max(x.m, y.m);
  double fx = std::exp(x.m - r.m), fy = std::exp(y.m - r.m);
  r.s = x.s * fx + y.s * fy;
  r.g1.resize(x.g1.size());
  for (std::size_t k = 0; k < x.g1.size(); ++k) r.g1[k] = x.g1[k] * fx + y.g1[k] * fy;
  r.g2.resize(x.g2.size());
  for (std::size_t k = 0; k < x.g2.size(); ++k) r.g2[k] = x.g2[k] * fx + y.g2[k] * fy;
  return r;
}

}  // namespace

LseEval lse_eval(const WordTable& T, Exponent e, const std::vector<double>& q, const std::vector<double>& alpha,
                 Envelope env, bool second_order) {
  const int M = T.dim();
  if (static_cast<int>(q.size()) != M || static_cast<int>(alpha.size()) != M)
    throw InvalidInput(fmt::format("q and alpha must have dimension {}", M));
  const int n = T.n();
  const int K = 2 + M;
  std::vector<double> tv;
  std::vector<std::uint64_t> targ;
  T.tail_envelope(q, env == Envelope::Upper, tv, targ);
  double qa = 0;
  for (int m = 0; m < M; ++m) qa += q[m] * alpha[m];

  auto features = [&](std::uint64_t i, double* g) {
    g[0] = T.l1(i);
    g[1] = T.l2(i);
    const double* S = T.interior(i);
    const double* ts = M ? T.tail_sum(T.last(i), targ[T.last(i)]) : nullptr;
    for (int m = 0; m < M; ++m) g[2 + m] = S[m] + ts[m] - n * alpha[m];
  };
  auto exponent = [&](std::uint64_t i) {
    double x = e.a1 * T.l1(i) + e.a2 * T.l2(i) - n * qa + tv[T.last(i)];
    const double* S = T.interior(i);
    for (int m = 0; m < M; ++m) x += q[m] * S[m];
    return x;
  };

  std::vector<double> shift(K, 0);
  features(0, shift.data());

  Acc id;
  if (second_order) {
    id.g1.assign(K, 0);
    id.g2.assign(K * K, 0);
  }
  Acc total = parallel_reduce<Acc>(
      T.size(), kChunk, T.threads(),
      [&](std::uint64_t b, std::uint64_t en) {
        Acc a = id;
        a.m = kNegInf;
        for (std::uint64_t i = b; i < en; ++i) a.m = std::max(a.m, exponent(i));
        std::vector<double> g(K);
        for (std::uint64_t i = b; i < en; ++i) {
          double w = std::exp(exponent(i) - a.m);
          a.s += w;
          if (!second_order) continue;
          features(i, g.data());
          for (int k = 0; k < K; ++k) g[k] -= shift[k];
          for (int k = 0; k < K; ++k) {
            a.g1[k] += w * g[k];
            for (int l = 0; l < K; ++l) a.g2[k * K + l] += w * g[k] * g[l];
          }
        }
        return a;
      },
      merge, id);

  LseEval out;
  out.terms = T.size();
  out.value = (total.m + std::log(total.s)) / n;
  if (second_order) {
    out.mean.resize(K);
    out.cov.resize(K * K);
    std::vector<double> mu(K);
    for (int k = 0; k < K; ++k) mu[k] = total.g1[k] / total.s;
    for (int k = 0; k < K; ++k) {
      out.mean[k] = (mu[k] + shift[k]) / n;
      for (int l = 0; l < K; ++l) out.cov[k * K + l] = (total.g2[k * K + l] / total.s - mu[k] * mu[l]) / n;
    }
  }
  return out;
}

PressureContext make_context(const std::vector<Mat2>& mats, int n, const LocallyConstantPotential* phi,
                             const DominatedSubsystem* sub, int threads) {
  PressureContext ctx;
  ctx.full = std::make_shared<WordTable>(mats, n, phi, threads);
  if (sub) {
    ctx.Z = sub->Z;
    if (sub->K == 0 && sub->n == n) {
      ctx.sub = ctx.full;
      ctx.full_dominated = true;
    } else {
      ctx.sub = std::make_shared<WordTable>(mats, sub->words, phi, threads);
    }
  }
  if (phi)
    for (int j = 1; j < phi->depth(); ++j) ctx.envelope_slack += variation(*phi, j);
  bool diag = !phi || phi->depth() <= 1;
  for (const auto& A : mats) diag = diag && A.b == 0 && A.c == 0;
  if (diag) {
    PressureContext::Axes ax;
    for (std::size_t i = 0; i < mats.size(); ++i) {
      ax.la.push_back(std::log(std::abs(mats[i].a)));
      ax.ld.push_back(std::log(std::abs(mats[i].d)));
      for (int m = 0; m < (phi ? phi->dimension() : 0); ++m) ax.pot.push_back(phi->value(i)[m]);
    }
    ctx.diagonal = std::move(ax);
  }
  return ctx;
}

double svf_defect(double Z, double s) {
  if (s >= 2) return 0;
  return Z * std::min(s, 2 - s);
}

namespace {

void check_bracket(PressureBracket& b, const char* what) {
  double tol = 1e-10 * (1 + std::abs(b.upper));
  if (b.lower > b.upper + tol)
    throw InternalInconsistency(fmt::format("{} bracket inverted: [{}, {}] at n = {}", what, b.lower, b.upper, b.n));
  if (b.lower > b.upper) b.lower = b.upper;
}

// log sum_i exp(u la_i + v ld_i + <q, Phi(i) - alpha>)
double axis_sum(const PressureContext::Axes& ax, double u, double v, const std::vector<double>& q,
                const std::vector<double>& alpha) {
  const std::size_t N = ax.la.size(), M = q.size();
  double m = kNegInf;
  std::vector<double> x(N);
  for (std::size_t i = 0; i < N; ++i) {
    x[i] = u * ax.la[i] + v * ax.ld[i];
    for (std::size_t k = 0; k < M; ++k) x[i] += q[k] * (ax.pot[i * M + k] - alpha[k]);
    m = std::max(m, x[i]);
  }
  double s = 0;
  for (double y : x) s += std::exp(y - m);
  return m + std::log(s);
}

}  // namespace

LseEval diagonal_eval(const PressureContext::Axes& ax, Exponent e, const std::vector<double>& q,
                      const std::vector<double>& alpha, bool second_order) {
  const std::size_t N = ax.la.size(), M = q.size();
  const std::size_t K = 2 + M;
  LseEval best;
  best.value = kNegInf;
  for (int swap = 0; swap < 2; ++swap) {
    // on axis "swap", sigma1 is the a-entry (swap = 0) or the d-entry (swap = 1)
    std::vector<double> x(N), g(N * K);
    double m = kNegInf;
    for (std::size_t i = 0; i < N; ++i) {
      double s1 = swap ? ax.ld[i] : ax.la[i], s2 = swap ? ax.la[i] : ax.ld[i];
      g[i * K] = s1;
      g[i * K + 1] = s2;
      x[i] = e.a1 * s1 + e.a2 * s2;
      for (std::size_t k = 0; k < M; ++k) {
        g[i * K + 2 + k] = ax.pot[i * M + k] - alpha[k];
        x[i] += q[k] * g[i * K + 2 + k];
      }
      m = std::max(m, x[i]);
    }
    double s = 0;
    for (double y : x) s += std::exp(y - m);
    double v = m + std::log(s);
    if (v <= best.value) continue;
    best.value = v;
    best.terms = N;
    if (!second_order) continue;
    best.mean.assign(K, 0);
    best.cov.assign(K * K, 0);
    for (std::size_t i = 0; i < N; ++i) {
      double w = std::exp(x[i] - v);
      for (std::size_t a = 0; a < K; ++a) best.mean[a] += w * g[i * K + a];
    }
    for (std::size_t i = 0; i < N; ++i) {
      double w = std::exp(x[i] - v);
      for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b)
          best.cov[a * K + b] += w * (g[i * K + a] - best.mean[a]) * (g[i * K + b] - best.mean[b]);
    }
  }
  return best;
}

double diagonal_pressure(const PressureContext::Axes& ax, Exponent e, const std::vector<double>& q,
                         const std::vector<double>& alpha) {
  if (e.a1 >= e.a2) return diagonal_eval(ax, e, q, alpha).value;
  // sum of min(X_w, Y_w): the Chernoff exponent min_t log sum x^t y^(1-t) is the exact rate
  auto f = [&](double t) {
    return axis_sum(ax, t * e.a1 + (1 - t) * e.a2, t * e.a2 + (1 - t) * e.a1, q, alpha);
  };
  double lo = 0, hi = 1;
  const double g = (std::sqrt(5.0) - 1) / 2;
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo), f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    if (f1 < f2) {
      hi = x2, x2 = x1, f2 = f1, x1 = hi - g * (hi - lo), f1 = f(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2, x2 = lo + g * (hi - lo), f2 = f(x2);
    }
  }
  return std::min({f(0), f(1), f(0.5 * (lo + hi))});
}

namespace {

void diagonal_refine(const PressureContext& ctx, Exponent e, const std::vector<double>& q,
                     const std::vector<double>& alpha, PressureBracket& b) {
  double v = diagonal_pressure(*ctx.diagonal, e, q, alpha);
  b.lower = std::max(b.lower, v);
  b.upper = std::min(b.upper, v);
}

}  // namespace

PressureBracket pressure_phi(const PressureContext& ctx, double s, const std::vector<double>& q,
                             const std::vector<double>& alpha) {
  const WordTable& F = *ctx.full;
  const int n = F.n();
  PressureBracket b;
  b.n = n;
  b.upper = lse_eval(F, Exponent::svf(s), q, alpha, Envelope::Upper).value;
  // phi^s >= |det|^{s/2}, which is multiplicative
  b.lower = lse_eval(F, {s / 2, s / 2}, q, alpha, Envelope::Lower).value;
  b.terms = 2 * F.size();
  if (ctx.sub) {
    double lo =
        lse_eval(*ctx.sub, Exponent::svf(s), q, alpha, Envelope::Lower).value - svf_defect(ctx.Z, s) / ctx.sub->n();
    b.lower = std::max(b.lower, lo);
    b.terms += ctx.sub->size();
  }
  if (ctx.diagonal) diagonal_refine(ctx, Exponent::svf(s), q, alpha, b);
  check_bracket(b, "pressure_phi");
  return b;
}

PressureBracket pressure_psi(const PressureContext& ctx, std::array<double, 2> q) {
  const WordTable& F = *ctx.full;
  const int n = F.n();
  const std::vector<double> zq(F.dim(), 0.0);
  const double a = q[0] - q[1];
  const double t = 0.5 * (q[0] + q[1]);
  PressureBracket b;
  b.n = n;
  double direct = lse_eval(F, Exponent::psi(q), zq, zq, Envelope::Upper).value;
  double det = lse_eval(F, {t, t}, zq, zq, Envelope::Upper).value;
  b.terms = 2 * F.size();
  if (a >= 0) {
    b.upper = direct;
    b.lower = det;
    if (ctx.sub) {
      double sub = ctx.full_dominated ? direct : lse_eval(*ctx.sub, Exponent::psi(q), zq, zq, Envelope::Lower).value;
      b.lower = std::max(b.lower, sub - a * ctx.Z / ctx.sub->n());
      b.terms += ctx.sub->size();
    }
  } else {
    b.lower = direct;
    b.upper = det;
    if (ctx.full_dominated) b.upper = std::min(b.upper, direct - a * ctx.Z / n);
  }
  if (ctx.diagonal) diagonal_refine(ctx, Exponent::psi(q), zq, zq, b);
  check_bracket(b, "pressure_psi");
  return b;
}

PressureBracket pressure_phi(const AffineIfs& ifs, double s, const LocallyConstantPotential& phi,
                             const std::vector<double>& q, const std::vector<double>& alpha, int n,
                             const PressureOptions& opt) {
  auto ctx = make_context(ifs.matrices(), n, &phi, opt.subsystem, opt.threads);
  return pressure_phi(ctx, s, q, alpha);
}

PressureBracket pressure_psi(const AffineIfs& ifs, std::array<double, 2> q, int n, const PressureOptions& opt) {
  auto ctx = make_context(ifs.matrices(), n, nullptr, opt.subsystem, opt.threads);
  return pressure_psi(ctx, q);
}

PressureBracket dominated_pressure(const DominatedSubsystem& sub, const WeightSpec& w, int k, int threads) {
  if (k < 1) throw InvalidInput("block count must be positive");
  if (sub.words.empty()) throw InvalidInput("empty subsystem");
  const std::uint64_t D = sub.words.size();
  std::uint64_t count = 1;
  for (int i = 0; i < k; ++i) {
    if (count > (1ULL << 40) / D) throw InvalidInput("too many concatenations");
    count *= D;
  }
  std::vector<Word> cat;
  cat.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Word c;
    std::uint64_t r = i, div = count;
    for (int j = 0; j < k; ++j) {
      div /= D;
      const Word& piece = sub.words[r / div];
      r %= div;
      c.insert(c.end(), piece.begin(), piece.end());
    }
    cat.push_back(std::move(c));
  }
  const LocallyConstantPotential* phi = w.kind == WeightSpec::Kind::SvfLinear ? w.phi : nullptr;
  WordTable T(sub.base, std::move(cat), phi, threads);
  Exponent e = w.kind == WeightSpec::Kind::Psi ? Exponent::psi(w.psi_q) : Exponent::svf(w.s);
  std::vector<double> q = phi ? w.q : std::vector<double>{}, alpha = phi ? w.alpha : std::vector<double>{};
  double up = lse_eval(T, e, q, alpha, Envelope::Upper).value;
  double lo = lse_eval(T, e, q, alpha, Envelope::Lower).value;
  // the sigma1 exponent pays the junction defect
  double a = e.a1 - e.a2;
  double defect = std::abs(a) * sub.Z / T.n();
  PressureBracket b;
  b.n = T.n();
  b.terms = 2 * T.size();
  if (a >= 0) {
    b.upper = up;
    b.lower = lo - defect;
  } else {
    b.upper = up + defect;
    b.lower = lo;
  }
  check_bracket(b, "dominated_pressure");
  return b;
}

std::vector<int> doubling_schedule(int start, int cap) {
  if (start < 1 || cap < start) throw InvalidInput("schedule needs 1 <= start <= cap");
  std::vector<int> out;
  for (long long n = start; n <= cap; n *= 2) out.push_back(static_cast<int>(n));
  if (out.back() != cap) out.push_back(cap);
  return out;
}

PressureTrace pressure_limit(const std::function<PressureBracket(int)>& estimator, const std::vector<int>& schedule,
                             const LimitOptions& opt) {
  if (schedule.empty()) throw InvalidInput("empty schedule");
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i] <= schedule[i - 1]) throw InvalidInput("schedule must be increasing");
  PressureTrace tr;
  tr.best.lower = kNegInf;
  tr.best.upper = -kNegInf;
  for (int n : schedule) {
    if (opt.terms_at && opt.terms_at(n) > opt.term_budget) break;
    auto t0 = std::chrono::steady_clock::now();
    PressureBracket b = estimator(n);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    tr.rows.push_back({n, b.lower, b.upper, b.terms, secs});
    tr.best.lower = std::max(tr.best.lower, b.lower);
    tr.best.upper = std::min(tr.best.upper, b.upper);
    tr.best.n = n;
    tr.best.terms += b.terms;
    if (tr.best.width() <= opt.target_width) {
      tr.converged = true;
      break;
    }
  }
  if (tr.rows.empty()) throw InvalidInput("term budget excludes every schedule point");
  tr.best.converged = tr.converged;
  return tr;
}

void write_trace_csv(std::ostream& os, const PressureTrace& trace, bool with_seconds) {
  os << (with_seconds ? "n,lower,upper,terms,seconds\n" : "n,lower,upper,terms\n");
  for (const auto& r : trace.rows) {
    os << fmt::format("{},{:.17g},{:.17g},{}", r.n, r.lower, r.upper, r.terms);
    if (with_seconds) os << fmt::format(",{:.6f}", r.seconds);
    os << '\n';
  }
}

}  // namespace saspec
