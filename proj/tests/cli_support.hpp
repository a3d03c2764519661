#pragma once
// Config files and in-process CLI runs for the command-level tests.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "saspec/cli.hpp"
#include "saspec/cocycle.hpp"

namespace clitest {

namespace fs = std::filesystem;

inline fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("saspec_test_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

inline std::string yaml_for(const saspec::AffineIfs& ifs, const std::string& extra = "") {
  std::string y = "maps:\n";
  for (const auto& m : ifs.maps()) {
    const auto& A = m.matrix;
    y += fmt::format("  - matrix: [{:.17g}, {:.17g}, {:.17g}, {:.17g}]\n    translation: [{:.17g}, {:.17g}]\n", A.a,
                     A.b, A.c, A.d, m.translation.x, m.translation.y);
  }
  return y + extra;
}

inline std::string write(const std::string& name, const std::string& text) {
  fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p.string();
}

struct Run {
  int code = 0;
  std::string out, err;
};

inline Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = saspec::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

}  // namespace clitest
