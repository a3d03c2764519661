#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saspec/config.hpp"

namespace saspec::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kHypothesis = 2,
  kInfeasible = 3,
  kUnconverged = 4,
  kParse = 5,
};

/// One command with every effective option resolved; replaying it reproduces the outputs.
struct Invocation {
  std::string command;
  nlohmann::json options;
  SystemConfig config;
};

struct OutputFile {
  std::string name, content;
};

struct Outcome {
  int exit = kOk;
  std::vector<OutputFile> files;
  std::string stdout_text;
  std::string message;
};

Outcome execute(const Invocation& inv, int threads);

/// Rectangle SOSC sufficient check: images inside the rectangle and pairwise disjoint interiors.
struct SoscCheck {
  bool inside = false, disjoint = false;
  std::string detail;
  bool verified() const { return inside && disjoint; }
};
SoscCheck check_rectangle(const AffineIfs& ifs, const std::array<double, 4>& rect);

/// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace saspec::cli
