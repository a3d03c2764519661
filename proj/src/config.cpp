#include "saspec/config.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "saspec/errors.hpp"

namespace saspec {

namespace {

std::string join_issues(const std::string& source, const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += '\n';
    out += i.line ? fmt::format("{}:{}:{}: {}", source, i.line, i.column, i.message)
                  : fmt::format("{}: {}", source, i.message);
  }
  return out;
}

class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void fail(const YAML::Node& at, std::string msg) {
    const auto m = at.Mark();
    if (m.is_null()) issues.push_back({0, 0, std::move(msg)});
    else issues.push_back({m.line + 1, m.column + 1, std::move(msg)});
  }

  bool is_map(const YAML::Node& n, const std::string& path) {
    if (n.IsMap()) return true;
    fail(n, path + " must be a mapping");
    return false;
  }
  bool is_seq(const YAML::Node& n, const std::string& path, std::size_t size = 0) {
    if (!n.IsSequence()) {
      fail(n, path + " must be a list");
      return false;
    }
    if (size && n.size() != size) {
      fail(n, fmt::format("{} must have {} entries, found {}", path, size, n.size()));
      return false;
    }
    return true;
  }

  void keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& kv : n) {
      std::string k = kv.first.Scalar();
      if (!allowed.count(k)) fail(kv.first, fmt::format("unknown key \"{}\" in {}", k, path));
    }
  }

  bool decimal(const YAML::Node& n, const std::string& path, double& out) {
    static const std::regex re(R"([-+]?(\d+(\.\d*)?|\.\d+)([eE][-+]?\d+)?)");
    if (!n.IsScalar() || !std::regex_match(n.Scalar(), re)) {
      fail(n, path + " must be a decimal number");
      return false;
    }
    out = std::strtod(n.Scalar().c_str(), nullptr);
    return true;
  }

  template <class I>
  bool integer(const YAML::Node& n, const std::string& path, I& out, long long lo) {
    static const std::regex re(R"([-+]?\d+)");
    if (!n.IsScalar() || !std::regex_match(n.Scalar(), re)) {
      fail(n, path + " must be an integer");
      return false;
    }
    long long v = std::stoll(n.Scalar());
    if (v < lo) {
      fail(n, fmt::format("{} must be at least {}", path, lo));
      return false;
    }
    out = static_cast<I>(v);
    return true;
  }

  bool boolean(const YAML::Node& n, const std::string& path, bool& out) {
    if (n.IsScalar() && (n.Scalar() == "true" || n.Scalar() == "false")) {
      out = n.Scalar() == "true";
      return true;
    }
    fail(n, path + " must be true or false");
    return false;
  }

  template <std::size_t K>
  bool decimals(const YAML::Node& n, const std::string& path, std::array<double, K>& out) {
    if (!is_seq(n, path, K)) return false;
    bool ok = true;
    for (std::size_t i = 0; i < K; ++i) ok = decimal(n[i], fmt::format("{}[{}]", path, i), out[i]) && ok;
    return ok;
  }
};

void read_maps(Reader& r, const YAML::Node& node, SystemConfig& cfg) {
  if (!r.is_seq(node, "maps")) return;
  if (node.size() < 2) r.fail(node, fmt::format("maps needs at least two entries, found {}", node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) {
    const YAML::Node m = node[i];
    std::string path = fmt::format("maps[{}]", i);
    if (!r.is_map(m, path)) continue;
    r.keys(m, path, {"matrix", "translation"});
    MapSpec spec;
    bool ok = true;
    if (!m["matrix"]) r.fail(m, path + " lacks \"matrix\""), ok = false;
    else ok = r.decimals(m["matrix"], path + ".matrix", spec.matrix);
    if (!m["translation"]) r.fail(m, path + " lacks \"translation\""), ok = false;
    else ok = r.decimals(m["translation"], path + ".translation", spec.translation) && ok;
    if (ok) {
      Mat2 A{spec.matrix[0], spec.matrix[1], spec.matrix[2], spec.matrix[3]};
      if (A.det() == 0) {
        r.fail(m["matrix"], fmt::format("{}.matrix is singular", path));
      } else {
        double nrm = norm(A);
        if (!(nrm < 1))
          r.fail(m["matrix"], fmt::format("map {} is not contractive: ||A|| = {:.6g} (operator norm must be < 1)", i + 1, nrm));
      }
    }
    cfg.maps.push_back(spec);
  }
}

void read_potential(Reader& r, const YAML::Node& node, SystemConfig& cfg) {
  if (!r.is_map(node, "potential")) return;
  r.keys(node, "potential", {"depth", "dimension", "table"});
  PotentialSpec p;
  bool ok = true;
  if (node["depth"]) ok = r.integer(node["depth"], "potential.depth", p.depth, 1);
  if (node["dimension"]) ok = r.integer(node["dimension"], "potential.dimension", p.dimension, 1) && ok;
  const YAML::Node table = node["table"];
  if (!table) {
    r.fail(node, "potential lacks \"table\"");
    return;
  }
  if (!r.is_map(table, "potential.table")) return;
  const int N = static_cast<int>(cfg.maps.size());
  for (const auto& kv : table) {
    std::string key = kv.first.Scalar();
    std::string path = fmt::format("potential.table[\"{}\"]", key);
    bool key_ok = key.size() == static_cast<std::size_t>(p.depth);
    for (char c : key) key_ok = key_ok && c >= '1' && c - '0' <= N;
    if (!key_ok) {
      r.fail(kv.first, fmt::format("potential key \"{}\" is not a word of length {} over symbols 1..{}", key, p.depth, N));
      ok = false;
      continue;
    }
    std::vector<double> v;
    if (kv.second.IsScalar()) {
      double x;
      if (r.decimal(kv.second, path, x)) v.push_back(x);
      else ok = false;
    } else if (r.is_seq(kv.second, path)) {
      for (std::size_t i = 0; i < kv.second.size(); ++i) {
        double x;
        if (r.decimal(kv.second[i], fmt::format("{}[{}]", path, i), x)) v.push_back(x);
        else ok = false;
      }
    } else {
      ok = false;
      continue;
    }
    if (static_cast<int>(v.size()) != p.dimension && ok) {
      r.fail(kv.second, fmt::format("{} has {} components, dimension is {}", path, v.size(), p.dimension));
      ok = false;
    }
    p.table[key] = v;
  }
  if (ok && N >= 2 && word_count(N, p.depth) <= 10000000) {
    std::string missing;
    for (std::uint64_t k = 0; k < word_count(N, p.depth); ++k) {
      std::string key = word_to_string(word_at(N, p.depth, k));
      if (!p.table.count(key)) missing += (missing.empty() ? "" : ", ") + ("\"" + key + "\"");
    }
    if (!missing.empty()) r.fail(table, "potential table is missing keys: " + missing);
  }
  cfg.potential = std::move(p);
}

void read_solver(Reader& r, const YAML::Node& node, SystemConfig& cfg) {
  if (!r.is_map(node, "solver")) return;
  r.keys(node, "solver", {"n", "tol", "seed", "threads", "budget_terms"});
  auto& s = cfg.solver;
  if (node["n"]) r.integer(node["n"], "solver.n", s.n, 1);
  if (node["tol"]) {
    if (r.decimal(node["tol"], "solver.tol", s.tol) && !(s.tol > 0)) r.fail(node["tol"], "solver.tol must be positive");
  }
  if (node["seed"]) r.integer(node["seed"], "solver.seed", s.seed, 0);
  if (node["threads"]) r.integer(node["threads"], "solver.threads", s.threads, 0);
  if (node["budget_terms"]) r.integer(node["budget_terms"], "solver.budget_terms", s.budget_terms, 1);
}

void read_assertions(Reader& r, const YAML::Node& node, SystemConfig& cfg) {
  if (!r.is_map(node, "assertions")) return;
  r.keys(node, "assertions", {"sosc_asserted", "open_set"});
  if (node["sosc_asserted"]) r.boolean(node["sosc_asserted"], "assertions.sosc_asserted", cfg.assertions.sosc_asserted);
  if (node["open_set"]) {
    std::array<double, 4> rect{};
    if (r.decimals(node["open_set"], "assertions.open_set", rect)) {
      if (!(rect[0] < rect[2] && rect[1] < rect[3]))
        r.fail(node["open_set"], "assertions.open_set must be [x0, y0, x1, y1] with x0 < x1 and y0 < y1");
      else cfg.assertions.open_set = rect;
    }
  }
}

nlohmann::json nums(const double* x, std::size_t k) { return nlohmann::json(std::vector<double>(x, x + k)); }

}  // namespace

ConfigError::ConfigError(std::string src, std::vector<ConfigIssue> iss)
    : std::runtime_error(join_issues(src, iss)), source(std::move(src)), issues(std::move(iss)) {}

SystemConfig parse_config_text(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, {{e.mark.line + 1, e.mark.column + 1, e.msg}});
  }
  Reader r;
  SystemConfig cfg;
  if (!root.IsMap()) {
    r.issues.push_back({1, 1, "config must be a mapping with a \"maps\" list"});
    throw ConfigError(source, r.issues);
  }
  r.keys(root, "config", {"maps", "potential", "solver", "assertions"});
  if (!root["maps"]) r.issues.push_back({1, 1, "config lacks \"maps\""});
  else read_maps(r, root["maps"], cfg);
  if (root["potential"]) read_potential(r, root["potential"], cfg);
  if (root["solver"]) read_solver(r, root["solver"], cfg);
  if (root["assertions"]) read_assertions(r, root["assertions"], cfg);
  if (!r.issues.empty()) throw ConfigError(source, r.issues);
  return cfg;
}

SystemConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, {{0, 0, "cannot read file"}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

SystemConfig config_from_json(const nlohmann::json& j) { return parse_config_text(j.dump(), "<manifest config>"); }

std::vector<Mat2> SystemConfig::matrices() const {
  std::vector<Mat2> out;
  for (const auto& m : maps) out.push_back({m.matrix[0], m.matrix[1], m.matrix[2], m.matrix[3]});
  return out;
}

AffineIfs SystemConfig::ifs() const {
  std::vector<AffineMap> out;
  for (const auto& m : maps)
    out.push_back({{m.matrix[0], m.matrix[1], m.matrix[2], m.matrix[3]}, {m.translation[0], m.translation[1]}});
  return AffineIfs(std::move(out));
}

std::optional<LocallyConstantPotential> SystemConfig::phi() const {
  if (!potential) return std::nullopt;
  return LocallyConstantPotential::from_map(static_cast<int>(maps.size()), potential->depth, potential->dimension,
                                            potential->table);
}

nlohmann::json SystemConfig::canonical() const {
  nlohmann::json j;
  j["maps"] = nlohmann::json::array();
  for (const auto& m : maps)
    j["maps"].push_back({{"matrix", nums(m.matrix.data(), 4)}, {"translation", nums(m.translation.data(), 2)}});
  if (potential) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : potential->table) t[k] = v;
    j["potential"] = {{"depth", potential->depth}, {"dimension", potential->dimension}, {"table", t}};
  }
  j["solver"] = {{"n", solver.n},
                 {"tol", solver.tol},
                 {"seed", solver.seed},
                 {"threads", solver.threads},
                 {"budget_terms", solver.budget_terms}};
  j["assertions"] = {{"sosc_asserted", assertions.sosc_asserted}};
  if (assertions.open_set) j["assertions"]["open_set"] = nums(assertions.open_set->data(), 4);
  return j;
}

std::string SystemConfig::canonical_text() const { return canonical().dump(); }

std::string SystemConfig::hash() const { return sha256_hex(canonical_text()); }

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

}  // namespace saspec
