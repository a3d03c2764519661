#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "saspec/word.hpp"

namespace saspec {

struct Vec2 {
  double x = 0, y = 0;
};

/// 2x2 real matrix, row-major: [[a, b], [c, d]].
struct Mat2 {
  double a = 1, b = 0, c = 0, d = 1;

  static Mat2 identity() { return {}; }
  static Mat2 diag(double x, double y) { return {x, 0, 0, y}; }
  static Mat2 rotation(double theta);

  double det() const { return a * d - b * c; }
  double trace() const { return a + d; }
  Mat2 transpose() const { return {a, c, b, d}; }
  Mat2 inverse() const;
  Mat2 scaled(double t) const { return {a * t, b * t, c * t, d * t}; }
};

Mat2 operator*(const Mat2& m, const Mat2& n);
Vec2 operator*(const Mat2& m, const Vec2& v);
inline Vec2 operator+(Vec2 u, Vec2 v) { return {u.x + v.x, u.y + v.y}; }

struct AffineMap {
  Mat2 matrix;
  Vec2 translation;
};

/// Contractive invertible planar affine maps f_i(x) = A_i x + v_i, N >= 2.
class AffineIfs {
 public:
  /// Throws InvalidInput unless N >= 2 and every A_i is invertible with norm < 1.
  explicit AffineIfs(std::vector<AffineMap> maps);

  int size() const { return static_cast<int>(maps_.size()); }
  const AffineMap& operator[](int i) const { return maps_[i]; }
  const std::vector<AffineMap>& maps() const { return maps_; }
  std::vector<Mat2> matrices() const;

 private:
  std::vector<AffineMap> maps_;
};

struct SingularPair {
  double sigma1;  // = ||A||
  double sigma2;  // = 1 / ||A^{-1}||
};

enum class EigenKind { hyperbolic, elliptic, parabolic };

/// Projective directions are angles in [0, pi).
struct EigenClass {
  EigenKind kind;
  std::optional<double> s_dir;
  std::optional<double> u_dir;
};

SingularPair singular_values(const Mat2& A);

/// Log singular values without the invertibility check; used in hot loops.
std::pair<double, double> log_singular_values(const Mat2& A);

double svf(const Mat2& A, double s);
double log_svf(const Mat2& A, double s);
/// log phi^s from precomputed log singular values.
double log_svf(double log_s1, double log_s2, double s);

std::array<double, 2> s_prime(double s);

double psi(const Mat2& A, std::array<double, 2> q);

EigenClass classify(const Mat2& A);

/// A_{w_1} ... A_{w_n}.
Mat2 word_product(const std::vector<Mat2>& mats, const Word& w);
Mat2 word_product(const AffineIfs& ifs, const Word& w);

/// sum_{k=1}^{n} A_{w|k-1} v_{w_k}, i.e. f_{w_1} o ... o f_{w_n}(0).
Vec2 canonical_projection(const AffineIfs& ifs, const Word& w);

/// Operator norm.
double norm(const Mat2& A);

/// Angle of a vector as a projective point in [0, pi).
double proj_angle(Vec2 v);

}  // namespace saspec
