#pragma once
// Benchmark systems shared by the test binaries.

#include <cmath>
#include <vector>

#include "saspec/cocycle.hpp"

namespace systems {

using saspec::AffineIfs;
using saspec::Mat2;

inline Mat2 rotated(const Mat2& D, double theta) {
  return Mat2::rotation(theta) * D * Mat2::rotation(-theta);
}

/// Linear parts with spread-out translations (only the matrices matter for pressures).
inline AffineIfs ifs_from(const std::vector<Mat2>& mats) {
  std::vector<saspec::AffineMap> maps;
  for (std::size_t i = 0; i < mats.size(); ++i) maps.push_back({mats[i], {0.3 * double(i), 0.2 * double(i % 2)}});
  return AffineIfs(maps);
}

/// Three similarities of ratio 1/2 (Sierpinski layout).
inline AffineIfs similarity_triple() {
  Mat2 H = Mat2::diag(0.5, 0.5);
  return AffineIfs({{H, {0, 0}}, {H, {0.5, 0}}, {H, {0.25, 0.5}}});
}

inline AffineIfs similarity_pair() {
  Mat2 H = Mat2::diag(0.5, 0.5);
  return AffineIfs({{H, {0, 0}}, {H, {0.5, 0}}});
}

/// Three copies of diag(1/2, 1/4).
inline AffineIfs diagonal_triple() {
  Mat2 D = Mat2::diag(0.5, 0.25);
  return AffineIfs({{D, {0, 0}}, {D, {0.5, 0}}, {D, {0, 0.75}}});
}

/// diag(1/2,1/4) and diag(1/4,1/2).
inline AffineIfs diagonal_swap_pair() {
  return AffineIfs({{Mat2::diag(0.5, 0.25), {0, 0}}, {Mat2::diag(0.25, 0.5), {0.5, 0.5}}});
}

inline std::vector<Mat2> positive_pair() {
  return {Mat2{0.45, 0.30, 0.25, 0.35}, Mat2{0.35, 0.25, 0.30, 0.45}};
}

inline AffineIfs positive_pair_ifs() {
  auto m = positive_pair();
  return AffineIfs({{m[0], {0, 0}}, {m[1], {0.4, 0.4}}});
}

inline std::vector<Mat2> rotation_pair() {
  return {Mat2::rotation(0.7).scaled(0.5), Mat2::rotation(2.1).scaled(0.6)};
}

/// Strongly hyperbolic pair with axes 1 rad apart; admits a two-arc cone around the s-directions.
inline std::vector<Mat2> sharp_hyperbolic_pair() {
  Mat2 D = Mat2::diag(0.9, 0.05);
  return {D, rotated(D, 1.0)};
}

/// Moderately hyperbolic pair with transverse axes (dominated).
inline std::vector<Mat2> hyperbolic_pair() {
  Mat2 D = Mat2::diag(0.7, 0.3);
  return {D, rotated(D, 1.0)};
}

inline AffineIfs hyperbolic_pair_ifs() {
  auto m = hyperbolic_pair();
  return AffineIfs({{m[0], {0, 0}}, {m[1], {0.3, 0.6}}});
}

/// Dominated pair with unequal determinants, so the exponent domain has interior.
inline std::vector<Mat2> unequal_hyperbolic_pair() {
  return {Mat2::diag(0.7, 0.3), rotated(Mat2::diag(0.6, 0.15), 1.0)};
}

inline AffineIfs unequal_hyperbolic_pair_ifs() {
  auto m = unequal_hyperbolic_pair();
  return AffineIfs({{m[0], {0, 0}}, {m[1], {0.3, 0.6}}});
}

/// Two hyperbolic maps with transverse axes plus an elliptic map: not dominated.
inline std::vector<Mat2> hyperbolic_elliptic_triple() {
  Mat2 D = Mat2::diag(0.7, 0.2);
  return {D, rotated(D, 1.0), Mat2::rotation(1.0).scaled(0.5)};
}

}  // namespace systems
