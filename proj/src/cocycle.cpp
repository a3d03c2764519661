#include "saspec/cocycle.hpp"

#include <cmath>
#include <string>

#include "saspec/errors.hpp"

namespace saspec {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_invertible(const Mat2& A) {
  double scale = std::abs(A.a) + std::abs(A.b) + std::abs(A.c) + std::abs(A.d);
  if (!(std::abs(A.det()) > 1e-300) || !(std::abs(A.det()) > 1e-15 * scale * scale))
    throw InvalidInput("singular matrix");
}

Vec2 eigenvector(const Mat2& A, double lambda) {
  Vec2 r1{A.b, lambda - A.a};
  Vec2 r2{lambda - A.d, A.c};
  double n1 = std::hypot(r1.x, r1.y), n2 = std::hypot(r2.x, r2.y);
  if (n1 == 0 && n2 == 0) return {1, 0};
  return n1 >= n2 ? r1 : r2;
}

}  // namespace

Mat2 Mat2::rotation(double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  return {c, -s, s, c};
}

Mat2 Mat2::inverse() const {
  double D = det();
  if (D == 0) throw InvalidInput("singular matrix");
  return {d / D, -b / D, -c / D, a / D};
}

Mat2 operator*(const Mat2& m, const Mat2& n) {
  return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d, m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
}

Vec2 operator*(const Mat2& m, const Vec2& v) { return {m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y}; }

AffineIfs::AffineIfs(std::vector<AffineMap> maps) : maps_(std::move(maps)) {
  if (maps_.size() < 2) throw InvalidInput("an IFS needs at least two maps");
  if (maps_.size() > 255) throw InvalidInput("at most 255 maps are supported");
  for (std::size_t i = 0; i < maps_.size(); ++i) {
    const Mat2& A = maps_[i].matrix;
    require_invertible(A);
    double nrm = norm(A);
    if (!(nrm < 1.0))
      throw InvalidInput("map " + std::to_string(i + 1) + " is not contractive: ||A|| = " + std::to_string(nrm));
  }
}

std::vector<Mat2> AffineIfs::matrices() const {
  std::vector<Mat2> out;
  out.reserve(maps_.size());
  for (const auto& m : maps_) out.push_back(m.matrix);
  return out;
}

double norm(const Mat2& A) {
  double e = (A.a + A.d) / 2, f = (A.a - A.d) / 2, g = (A.c + A.b) / 2, h = (A.c - A.b) / 2;
  return std::hypot(e, h) + std::hypot(f, g);
}

SingularPair singular_values(const Mat2& A) {
  require_invertible(A);
  double s1 = norm(A);
  return {s1, std::abs(A.det()) / s1};
}

std::pair<double, double> log_singular_values(const Mat2& A) {
  double s1 = norm(A);
  double l1 = std::log(s1);
  return {l1, std::log(std::abs(A.det())) - l1};
}

double log_svf(double l1, double l2, double s) {
  if (s < 1) return s * l1;
  if (s < 2) return l1 + (s - 1) * l2;
  return 0.5 * s * (l1 + l2);
}

double log_svf(const Mat2& A, double s) {
  if (!(s >= 0)) throw InvalidInput("svf parameter must be nonnegative");
  require_invertible(A);
  auto [l1, l2] = log_singular_values(A);
  return log_svf(l1, l2, s);
}

double svf(const Mat2& A, double s) { return std::exp(log_svf(A, s)); }

std::array<double, 2> s_prime(double s) {
  if (!(s >= 0)) throw InvalidInput("s must be nonnegative");
  if (s < 1) return {s, 0.0};
  if (s < 2) return {1.0, s - 1};
  return {s / 2, s / 2};
}

double psi(const Mat2& A, std::array<double, 2> q) {
  require_invertible(A);
  auto [l1, l2] = log_singular_values(A);
  return std::exp(q[0] * l1 + q[1] * l2);
}

EigenClass classify(const Mat2& A) {
  double tr = A.trace(), D = A.det();
  double disc = tr * tr - 4 * D;
  double scale = tr * tr + 4 * std::abs(D);
  if (disc < -1e-14 * scale) return {EigenKind::elliptic, std::nullopt, std::nullopt};
  double root = std::sqrt(std::max(disc, 0.0));
  double l1 = 0.5 * (tr + (tr >= 0 ? root : -root));
  double l2 = l1 != 0 ? D / l1 : 0.0;
  if (std::abs(l2) > std::abs(l1)) std::swap(l1, l2);
  if (std::abs(l1) - std::abs(l2) <= 1e-10 * std::abs(l1)) return {EigenKind::parabolic, std::nullopt, std::nullopt};
  return {EigenKind::hyperbolic, proj_angle(eigenvector(A, l1)), proj_angle(eigenvector(A, l2))};
}

Mat2 word_product(const std::vector<Mat2>& mats, const Word& w) {
  Mat2 P = Mat2::identity();
  for (auto sym : w) {
    if (sym < 1 || sym > mats.size())
      throw InvalidInput("symbol " + std::to_string(sym) + " outside alphabet of size " + std::to_string(mats.size()));
    P = P * mats[sym - 1];
  }
  return P;
}

Mat2 word_product(const AffineIfs& ifs, const Word& w) { return word_product(ifs.matrices(), w); }

Vec2 canonical_projection(const AffineIfs& ifs, const Word& w) {
  if (w.empty()) throw InvalidInput("canonical projection needs a non-empty word");
  Vec2 x{0, 0};
  Mat2 P = Mat2::identity();
  for (auto sym : w) {
    if (sym < 1 || sym > ifs.size()) throw InvalidInput("symbol outside alphabet");
    const AffineMap& f = ifs[sym - 1];
    x = x + P * f.translation;
    P = P * f.matrix;
  }
  return x;
}

double proj_angle(Vec2 v) {
  double t = std::atan2(v.y, v.x);
  t = std::fmod(t, kPi);
  if (t < 0) t += kPi;
  if (t >= kPi) t -= kPi;
  return t;
}

}  // namespace saspec
