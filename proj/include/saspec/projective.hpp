#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "saspec/cocycle.hpp"
#include "saspec/word.hpp"

namespace saspec {

inline constexpr double kPi = 3.14159265358979323846;

/// Reduce an angle to [0, pi).
double proj_normalize(double theta);
/// min(|a-b|, pi-|a-b|) on representatives.
double proj_distance(double a, double b);
/// Image direction of the line at angle theta under A.
double map_point(const Mat2& A, double theta);

/// Closed arc of RP^1 traversed counterclockwise from start to end.
struct ProjInterval {
  double start = 0, end = 0;

  static ProjInterval ball(double center, double r);
  double length() const;
  double mid() const;
  bool contains(double theta, double tol = 0) const;
  /// Distance of the subarc `other` from the complement of this arc's interior; negative if not inside.
  double inner_margin(const ProjInterval& other) const;
};

ProjInterval map_interval(const Mat2& A, const ProjInterval& I);

/// Pairwise disjoint closed arcs, at most 8, not covering RP^1.
struct Multicone {
  std::vector<ProjInterval> intervals;

  static constexpr int kMaxIntervals = 8;
  /// Throws InvalidInput on overlap, too many arcs or full coverage.
  void validate() const;
  bool contains(double theta, double tol = 0) const;
  /// Smallest gap between consecutive arcs.
  double min_gap() const;
};

/// Union of arcs merged into disjoint arcs (closest gaps merged first beyond max_intervals).
/// Returns nullopt if the union covers RP^1.
std::optional<Multicone> merge_arcs(std::vector<ProjInterval> arcs, int max_intervals = Multicone::kMaxIntervals);

struct DominationCertificate {
  Multicone cone;
  double margin = 0;
  /// images[i][j] = A_i applied to cone.intervals[j].
  std::vector<std::vector<ProjInterval>> images;
};

struct DominationCheck {
  std::optional<DominationCertificate> certificate;
  /// (map index, interval index) of the first failing image, 0-based.
  std::optional<std::pair<int, int>> offending;
};

DominationCheck check_domination(const std::vector<Mat2>& mats, const Multicone& cone);

struct BgStatistic {
  std::vector<std::pair<int, double>> ratios;  // (n, max |det A_w| / ||A_w||^2)
  double tau = 1;                              // fitted per-letter decay
};

BgStatistic bg_statistic(const std::vector<Mat2>& mats, int n_max);

struct MulticoneSearch {
  int max_word_length = 6;
  int refine_steps = 6;
  std::optional<Multicone> user_cone;
  int bg_n_max = 10;
};

struct MulticoneResult {
  std::optional<DominationCertificate> certificate;
  BgStatistic evidence;
};

MulticoneResult find_multicone(const std::vector<Mat2>& mats, const MulticoneSearch& params = {});

struct DominatedSubsystem {
  int n = 0;
  int K = 0;
  std::vector<Mat2> base;
  /// Sigma_n^D in the order of the undecorated cores (lexicographic in Sigma_{n-2K}).
  std::vector<Word> words;
  Multicone B, C;
  double Z = 0;
  double Z_sampled = 0;
  double Z_geometric = 0;
  /// Smallest margin of A_w C inside B over all decorated words.
  double margin = 0;
  Word k1, k2;
  int L = 0;
  double r = 0;

  std::vector<Mat2> products() const;
};

struct SubsystemParams {
  int max_word_length = 6;
  int max_power = 64;
  int z_samples = 20000;
  int z_max_blocks = 6;
  std::uint64_t seed = 12345;
  double radius_fraction = 1.0 / 3.0;
};

/// Skeleton (k1, k2, L, C, K) shared by every block length; built once per system.
struct SubsystemSkeleton {
  bool already_dominated = false;
  DominationCertificate certificate;  // valid when already_dominated
  Word k1, k2;
  std::vector<Word> k3_candidates;
  int L = 0;
  double r = 0;
  Multicone C;
  int K = 0;
};

SubsystemSkeleton build_skeleton(const std::vector<Mat2>& mats, const SubsystemParams& params = {});
DominatedSubsystem build_dominated_subsystem(const std::vector<Mat2>& mats, int n, const SubsystemParams& params = {});
DominatedSubsystem build_dominated_subsystem(const std::vector<Mat2>& mats, const SubsystemSkeleton& sk, int n,
                                             const SubsystemParams& params = {});
DominatedSubsystem build_dominated_subsystem(const AffineIfs& ifs, int n, const SubsystemParams& params = {});

struct OseledetsDirection {
  double angle = 0;
  double width = 0;
  int depth = 0;
  std::vector<double> widths;  // width after each prefix
};

/// Nested images A_{w|k} C until the hull width drops below tol (or the word ends).
OseledetsDirection oseledets_direction(const std::vector<Mat2>& mats, const DominationCertificate& cert,
                                       const Word& w, double tol);

/// Z = max(sampled defect, -log sin(delta)) with delta the gap from B to the complement of C.
double almost_mult_constant(DominatedSubsystem& sub, int samples, int max_blocks = 6, std::uint64_t seed = 12345);
/// Largest log(||A|| ||B|| / ||AB||) over a fresh random sample of concatenation pairs.
double sampled_defect(const DominatedSubsystem& sub, int samples, int max_blocks, std::uint64_t seed);

struct HypothesisReport {
  bool irreducible = false;
  std::optional<double> invariant_line;
  bool strongly_irreducible = false;
  int bound_word_length = 0;
  int bound_union_cap = 6;
  std::vector<double> invariant_union;
  std::optional<Word> noncompact_witness;
  double witness_trace = 0;  // |tr| / sqrt|det| of the witness
};

HypothesisReport check_hypotheses(const std::vector<Mat2>& mats, int L, int union_cap = 6);

}  // namespace saspec
