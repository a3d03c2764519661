#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saspec/word.hpp"

namespace saspec {

/// Number of words of length n over N symbols; throws if it overflows 64 bits.
std::uint64_t word_count(int N, int n);

/// Word of length n with lexicographic index idx (0-based).
Word word_at(int N, int n, std::uint64_t idx);
std::uint64_t word_index(int N, const Word& w);

/// Lexicographic stream over a half-open index range [begin, end) of Sigma_n.
/// Disjoint ranges can be consumed by independent workers.
class WordStream {
 public:
  WordStream(int N, int n);
  WordStream(int N, int n, std::uint64_t begin, std::uint64_t end);

  std::uint64_t size() const { return end_ - begin_; }
  /// Writes the next word into out; returns false once exhausted.
  bool next(Word& out);
  void restart();
  /// Split into `parts` contiguous ranges (the Sigma_n order is preserved).
  std::vector<WordStream> split(std::uint64_t parts) const;

 private:
  int N_, n_;
  std::uint64_t begin_, end_, pos_;
  Word cur_;
};

/// Convenience: materialize all of Sigma_n.
std::vector<Word> enumerate_words(int N, int n);

/// Depth-d table Phi: Sigma_d -> R^M, indexed lexicographically.
class LocallyConstantPotential {
 public:
  LocallyConstantPotential(int N, int depth, int dim, std::vector<double> table);

  /// Keys are symbol strings of length d ("121"); missing keys are an error listing them.
  static LocallyConstantPotential from_map(int N, int depth, int dim,
                                           const std::map<std::string, std::vector<double>>& table);
  static LocallyConstantPotential constant(int N, std::vector<double> value);

  int alphabet() const { return N_; }
  int depth() const { return d_; }
  int dimension() const { return M_; }
  std::uint64_t keys() const { return keys_; }

  /// Phi on the key with lexicographic index k (a word of length d).
  const double* value(std::uint64_t k) const { return &table_[k * M_]; }
  const std::vector<double>& table() const { return table_; }

 private:
  int N_, d_, M_;
  std::uint64_t keys_;
  std::vector<double> table_;
};

struct SumEnvelope {
  std::vector<double> lower, upper;
};

/// Exact min/max of S_n Phi over the cylinder [w], over all N^{d-1} tail completions.
SumEnvelope birkhoff_sum_envelope(const LocallyConstantPotential& phi, const Word& w);

/// S_n Phi(w t...) for one explicit tail t of length d-1 (the brute-force reference).
std::vector<double> birkhoff_sum(const LocallyConstantPotential& phi, const Word& w, const Word& tail);

/// Var_n: maximal Euclidean diameter of Phi over an n-cylinder.
double variation(const LocallyConstantPotential& phi, int n);

struct ValueDomain {
  int dim = 1;
  /// Hull vertices (counterclockwise for dim 2, {min, max} for dim 1).
  std::vector<std::vector<double>> vertices;
  bool exact = true;

  bool contains(const std::vector<double>& x, double tol = 0) const;
  /// Signed distance to the boundary; positive strictly inside. Only dim <= 2.
  double depth(const std::vector<double>& x) const;
};

/// Convex hull of points in R^1 or R^2 (higher dimensions keep all points).
ValueDomain convex_hull(int dim, std::vector<std::vector<double>> pts, bool exact = true);

/// P(Phi): hull of simple-cycle averages of the de Bruijn graph on Sigma_{d-1}.
ValueDomain value_domain(const LocallyConstantPotential& phi, std::uint64_t cycle_cap = 1000000);

/// Simple-cycle averages (the hull generators); exposed for testing.
std::vector<std::vector<double>> cycle_averages(const LocallyConstantPotential& phi, std::uint64_t cycle_cap,
                                                bool* complete = nullptr);

}  // namespace saspec
