#include "saspec/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "saspec/errors.hpp"

namespace saspec {

std::uint64_t word_count(int N, int n) {
  if (N < 1 || n < 0) throw InvalidInput("bad alphabet or length");
  std::uint64_t c = 1;
  for (int i = 0; i < n; ++i) {
    if (c > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(N))
      throw InvalidInput("word count overflows 64 bits");
    c *= static_cast<std::uint64_t>(N);
  }
  return c;
}

Word word_at(int N, int n, std::uint64_t idx) {
  Word w(n);
  for (int i = n - 1; i >= 0; --i) {
    w[i] = static_cast<std::uint8_t>(idx % N + 1);
    idx /= N;
  }
  return w;
}

std::uint64_t word_index(int N, const Word& w) {
  std::uint64_t idx = 0;
  for (auto c : w) idx = idx * N + (c - 1);
  return idx;
}

WordStream::WordStream(int N, int n) : WordStream(N, n, 0, word_count(N, n)) {}

WordStream::WordStream(int N, int n, std::uint64_t begin, std::uint64_t end)
    : N_(N), n_(n), begin_(begin), end_(end), pos_(begin) {
  if (N < 2) throw InvalidInput("alphabet needs at least two symbols");
  if (end < begin || end > word_count(N, n)) throw InvalidInput("bad word range");
}

bool WordStream::next(Word& out) {
  if (pos_ >= end_) return false;
  if (pos_ == begin_ || cur_.size() != static_cast<std::size_t>(n_)) {
    cur_ = word_at(N_, n_, pos_);
  } else {
    for (int i = n_ - 1; i >= 0; --i) {
      if (cur_[i] < N_) {
        ++cur_[i];
        break;
      }
      cur_[i] = 1;
    }
  }
  ++pos_;
  out = cur_;
  return true;
}

void WordStream::restart() {
  pos_ = begin_;
  cur_.clear();
}

std::vector<WordStream> WordStream::split(std::uint64_t parts) const {
  std::vector<WordStream> out;
  if (parts == 0) parts = 1;
  std::uint64_t total = size();
  for (std::uint64_t p = 0; p < parts; ++p) {
    std::uint64_t b = begin_ + total * p / parts, e = begin_ + total * (p + 1) / parts;
    out.emplace_back(N_, n_, b, e);
  }
  return out;
}

std::vector<Word> enumerate_words(int N, int n) {
  std::vector<Word> out;
  WordStream ws(N, n);
  out.reserve(ws.size());
  Word w;
  while (ws.next(w)) out.push_back(w);
  return out;
}

LocallyConstantPotential::LocallyConstantPotential(int N, int depth, int dim, std::vector<double> table)
    : N_(N), d_(depth), M_(dim), table_(std::move(table)) {
  if (N < 2) throw InvalidInput("potential alphabet needs at least two symbols");
  if (depth < 1 || dim < 1) throw InvalidInput("potential depth and dimension must be positive");
  keys_ = word_count(N, depth);
  if (table_.size() != keys_ * static_cast<std::uint64_t>(dim))
    throw InvalidInput("potential table has " + std::to_string(table_.size()) + " entries, expected " +
                       std::to_string(keys_ * dim));
}

LocallyConstantPotential LocallyConstantPotential::from_map(int N, int depth, int dim,
                                                            const std::map<std::string, std::vector<double>>& table) {
  std::uint64_t K = word_count(N, depth);
  std::vector<double> flat(K * dim);
  std::vector<std::string> missing;
  for (std::uint64_t k = 0; k < K; ++k) {
    std::string key = word_to_string(word_at(N, depth, k));
    auto it = table.find(key);
    if (it == table.end()) {
      missing.push_back(key);
      continue;
    }
    if (static_cast<int>(it->second.size()) != dim)
      throw InvalidInput("potential entry \"" + key + "\" has dimension " + std::to_string(it->second.size()));
    std::copy(it->second.begin(), it->second.end(), flat.begin() + k * dim);
  }
  if (!missing.empty()) {
    std::string msg = "potential table is missing keys:";
    for (const auto& m : missing) msg += " \"" + m + "\"";
    throw InvalidInput(msg);
  }
  for (const auto& [key, val] : table) {
    if (key.size() != static_cast<std::size_t>(depth)) throw InvalidInput("potential key \"" + key + "\" has wrong length");
    for (char ch : key)
      if (ch < '1' || ch - '0' > N) throw InvalidInput("potential key \"" + key + "\" uses a symbol outside the alphabet");
  }
  return LocallyConstantPotential(N, depth, dim, std::move(flat));
}

LocallyConstantPotential LocallyConstantPotential::constant(int N, std::vector<double> value) {
  int M = static_cast<int>(value.size());
  std::vector<double> flat;
  for (int i = 0; i < N; ++i) flat.insert(flat.end(), value.begin(), value.end());
  return LocallyConstantPotential(N, 1, M, std::move(flat));
}

std::vector<double> birkhoff_sum(const LocallyConstantPotential& phi, const Word& w, const Word& tail) {
  const int d = phi.depth(), M = phi.dimension(), N = phi.alphabet();
  if (w.empty()) throw InvalidInput("Birkhoff sum of the empty word");
  if (static_cast<int>(tail.size()) != d - 1) throw InvalidInput("tail must have length d-1");
  Word full = concat(w, tail);
  std::vector<double> S(M, 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    std::uint64_t key = 0;
    for (int j = 0; j < d; ++j) {
      auto c = full[k + j];
      if (c < 1 || c > N) throw InvalidInput("symbol outside potential alphabet");
      key = key * N + (c - 1);
    }
    const double* v = phi.value(key);
    for (int m = 0; m < M; ++m) S[m] += v[m];
  }
  return S;
}

SumEnvelope birkhoff_sum_envelope(const LocallyConstantPotential& phi, const Word& w) {
  if (w.empty()) throw InvalidInput("Birkhoff sum envelope of the empty word");
  const int M = phi.dimension();
  SumEnvelope env{std::vector<double>(M, std::numeric_limits<double>::infinity()),
                  std::vector<double>(M, -std::numeric_limits<double>::infinity())};
  std::uint64_t T = word_count(phi.alphabet(), phi.depth() - 1);
  for (std::uint64_t t = 0; t < T; ++t) {
    auto S = birkhoff_sum(phi, w, word_at(phi.alphabet(), phi.depth() - 1, t));
    for (int m = 0; m < M; ++m) {
      env.lower[m] = std::min(env.lower[m], S[m]);
      env.upper[m] = std::max(env.upper[m], S[m]);
    }
  }
  return env;
}

double variation(const LocallyConstantPotential& phi, int n) {
  if (n < 1) throw InvalidInput("variation needs n >= 1");
  const int d = phi.depth(), M = phi.dimension(), N = phi.alphabet();
  if (n >= d) return 0.0;
  std::uint64_t heads = word_count(N, n), tails = word_count(N, d - n);
  double best = 0;
  for (std::uint64_t h = 0; h < heads; ++h) {
    for (std::uint64_t t1 = 0; t1 < tails; ++t1) {
      const double* x = phi.value(h * tails + t1);
      for (std::uint64_t t2 = t1 + 1; t2 < tails; ++t2) {
        const double* y = phi.value(h * tails + t2);
        double s = 0;
        for (int m = 0; m < M; ++m) s += (x[m] - y[m]) * (x[m] - y[m]);
        best = std::max(best, std::sqrt(s));
      }
    }
  }
  return best;
}

namespace {

double cross(const std::vector<double>& o, const std::vector<double>& a, const std::vector<double>& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double seg_dist(const std::vector<double>& p, const std::vector<double>& a, const std::vector<double>& b) {
  double vx = b[0] - a[0], vy = b[1] - a[1];
  double L2 = vx * vx + vy * vy;
  double t = L2 > 0 ? ((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / L2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p[0] - a[0] - t * vx, p[1] - a[1] - t * vy);
}

}  // namespace

ValueDomain convex_hull(int dim, std::vector<std::vector<double>> pts, bool exact) {
  ValueDomain dom;
  dom.dim = dim;
  dom.exact = exact;
  if (pts.empty()) return dom;
  if (dim == 1) {
    double lo = pts[0][0], hi = pts[0][0];
    for (const auto& p : pts) lo = std::min(lo, p[0]), hi = std::max(hi, p[0]);
    dom.vertices = {{lo}, {hi}};
    if (lo == hi) dom.vertices.pop_back();
    return dom;
  }
  if (dim > 2) {
    dom.vertices = std::move(pts);
    return dom;
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) {
    dom.vertices = pts;
    return dom;
  }
  std::vector<std::vector<double>> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  dom.vertices = std::move(h);
  return dom;
}

double ValueDomain::depth(const std::vector<double>& x) const {
  if (vertices.empty()) return -std::numeric_limits<double>::infinity();
  if (dim == 1) {
    double lo = vertices.front()[0], hi = vertices.back()[0];
    return std::min(x[0] - lo, hi - x[0]);
  }
  if (dim != 2) throw InvalidInput("domain depth is only implemented for dimension 1 and 2");
  const auto& V = vertices;
  if (V.size() == 1) return -std::hypot(x[0] - V[0][0], x[1] - V[0][1]);
  if (V.size() == 2) return -seg_dist(x, V[0], V[1]);
  double inside = std::numeric_limits<double>::infinity();
  double outside = std::numeric_limits<double>::infinity();
  bool in = true;
  for (std::size_t i = 0; i < V.size(); ++i) {
    const auto& a = V[i];
    const auto& b = V[(i + 1) % V.size()];
    double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    double sd = cross(a, b, x) / len;
    if (sd < 0) in = false;
    inside = std::min(inside, sd);
    outside = std::min(outside, seg_dist(x, a, b));
  }
  return in ? inside : -outside;
}

bool ValueDomain::contains(const std::vector<double>& x, double tol) const { return depth(x) >= -tol; }

std::vector<std::vector<double>> cycle_averages(const LocallyConstantPotential& phi, std::uint64_t cycle_cap,
                                                bool* complete) {
  const int N = phi.alphabet(), d = phi.depth(), M = phi.dimension();
  const std::uint64_t V = word_count(N, d - 1);
  std::vector<std::vector<double>> out;
  bool full = true;
  std::vector<char> on_path(V, 0);
  std::vector<double> sum(M, 0.0);
  int len = 0;

  // Iterative DFS: frames hold (vertex, next edge symbol, edge key entering vertex).
  struct Frame {
    std::uint64_t v;
    int next;
  };
  for (std::uint64_t s = 0; s < V && full; ++s) {
    std::vector<Frame> stack{{s, 0}};
    std::vector<std::uint64_t> keys;
    on_path[s] = 1;
    while (!stack.empty() && full) {
      Frame& f = stack.back();
      if (f.next >= N) {
        on_path[f.v] = 0;
        stack.pop_back();
        if (!keys.empty()) {
          const double* val = phi.value(keys.back());
          for (int m = 0; m < M; ++m) sum[m] -= val[m];
          keys.pop_back();
          --len;
        }
        continue;
      }
      int a = f.next++;
      std::uint64_t key = f.v * N + a;
      std::uint64_t w = key % V;
      if (w == s) {
        const double* val = phi.value(key);
        std::vector<double> avg(M);
        for (int m = 0; m < M; ++m) avg[m] = (sum[m] + val[m]) / (len + 1);
        out.push_back(std::move(avg));
        if (out.size() >= cycle_cap) full = false;
        continue;
      }
      if (w < s || on_path[w]) continue;
      const double* val = phi.value(key);
      for (int m = 0; m < M; ++m) sum[m] += val[m];
      keys.push_back(key);
      ++len;
      on_path[w] = 1;
      stack.push_back({w, 0});
    }
    std::fill(on_path.begin(), on_path.end(), 0);
    std::fill(sum.begin(), sum.end(), 0.0);
    len = 0;
  }
  if (complete) *complete = full;
  return out;
}

ValueDomain value_domain(const LocallyConstantPotential& phi, std::uint64_t cycle_cap) {
  bool complete = true;
  auto pts = cycle_averages(phi, cycle_cap, &complete);
  return convex_hull(phi.dimension(), std::move(pts), complete);
}

}  // namespace saspec
