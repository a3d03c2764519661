#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saspec/cocycle.hpp"
#include "saspec/symbolic.hpp"

namespace saspec {

struct MapSpec {
  std::array<double, 4> matrix{};  // row-major
  std::array<double, 2> translation{};
};

struct PotentialSpec {
  int depth = 1;
  int dimension = 1;
  std::map<std::string, std::vector<double>> table;
};

struct SolverSpec {
  int n = 10;
  double tol = 1e-6;
  std::uint64_t seed = 1;
  /// 0 means machine parallelism.
  int threads = 0;
  std::uint64_t budget_terms = 100000000ULL;
};

struct AssertionSpec {
  bool sosc_asserted = false;
  /// Open rectangle {x0, y0, x1, y1} offered for the SOSC sufficient check.
  std::optional<std::array<double, 4>> open_set;
};

struct SystemConfig {
  std::vector<MapSpec> maps;
  std::optional<PotentialSpec> potential;
  SolverSpec solver;
  AssertionSpec assertions;

  AffineIfs ifs() const;
  std::vector<Mat2> matrices() const;
  std::optional<LocallyConstantPotential> phi() const;

  /// Sorted-key JSON; numbers written in shortest round-trip form.
  nlohmann::json canonical() const;
  std::string canonical_text() const;
  /// SHA-256 of canonical_text(), lowercase hex.
  std::string hash() const;
};

struct ConfigIssue {
  int line = 0, column = 0;  // 1-based; 0 when not attributable
  std::string message;
};

/// Every problem found in one pass, each anchored to a line of the source.
struct ConfigError : std::runtime_error {
  ConfigError(std::string source, std::vector<ConfigIssue> issues);
  std::string source;
  std::vector<ConfigIssue> issues;
};

/// YAML (JSON is accepted as a subset). Numbers must be plain decimals.
SystemConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
SystemConfig parse_config(const std::string& path);
SystemConfig config_from_json(const nlohmann::json& j);

std::string sha256_hex(const std::string& data);

}  // namespace saspec
