#include "saspec/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "saspec/errors.hpp"
#include "saspec/measures.hpp"
#include "saspec/pressure.hpp"
#include "saspec/projective.hpp"
#include "saspec/rng.hpp"
#include "saspec/spectra.hpp"

namespace saspec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double x) {
  if (std::isfinite(x)) return fmt::format("{:.12g}", x);
  return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
}

json finite(double x) { return std::isfinite(x) ? json(x) : json(num(x)); }

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end) throw UsageError(fmt::format("{}: \"{}\" is not a number", what, item));
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(fmt::format("{} is empty", what));
  return out;
}

// "a1:a2:steps[,b1:b2:steps]": steps points per axis including both ends, crossed.
std::vector<std::vector<double>> parse_grid(const std::string& s) {
  std::vector<std::vector<double>> axes;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::vector<std::string> f;
    std::stringstream ps(part);
    std::string x;
    while (std::getline(ps, x, ':')) f.push_back(x);
    if (f.size() != 3) throw UsageError(fmt::format("grid axis \"{}\" must be a1:a2:steps", part));
    double a = parse_list(f[0], "grid")[0], b = parse_list(f[1], "grid")[0];
    char* end = nullptr;
    long steps = std::strtol(f[2].c_str(), &end, 10);
    if (*end || steps < 0) throw UsageError(fmt::format("grid steps \"{}\" must be a non-negative integer", f[2]));
    std::vector<double> ax;
    for (long i = 0; i < steps; ++i) ax.push_back(steps == 1 ? a : a + (b - a) * double(i) / double(steps - 1));
    axes.push_back(ax);
  }
  std::vector<std::vector<double>> pts{{}};
  for (const auto& ax : axes) {
    std::vector<std::vector<double>> next;
    for (const auto& p : pts)
      for (double v : ax) {
        auto q = p;
        q.push_back(v);
        next.push_back(q);
      }
    pts = std::move(next);
  }
  if (axes.empty() || pts.empty()) return {};
  return pts;
}

Word parse_word(const std::string& s) {
  try {
    return word_from_string(s);
  } catch (const InvalidInput&) {
    throw CertificateViolation("certificate word \"" + s + "\" is malformed");
  }
}

json arcs_json(const Multicone& m) {
  json a = json::array();
  for (const auto& I : m.intervals) a.push_back({I.start, I.end});
  return a;
}

Multicone arcs_from(const json& a) {
  Multicone m;
  for (const auto& x : a) m.intervals.push_back({x.at(0).get<double>(), x.at(1).get<double>()});
  m.validate();
  return m;
}

json certificate_json(const DominatedSubsystem& sub) {
  json j;
  j["n"] = sub.n;
  j["K"] = sub.K;
  j["L"] = sub.L;
  j["r"] = sub.r;
  j["k1"] = word_to_string(sub.k1);
  j["k2"] = word_to_string(sub.k2);
  j["B"] = arcs_json(sub.B);
  j["C"] = arcs_json(sub.C);
  j["Z"] = sub.Z;
  j["Z_sampled"] = sub.Z_sampled;
  j["Z_geometric"] = sub.Z_geometric;
  j["margin"] = sub.margin;
  j["base"] = json::array();
  for (const auto& A : sub.base) j["base"].push_back({A.a, A.b, A.c, A.d});
  j["words"] = json::array();
  for (const auto& w : sub.words) j["words"].push_back(word_to_string(w));
  return j;
}

// Rebuilds a stored certificate and re-verifies the strict cone inclusion of every word.
DominatedSubsystem certificate_from(const json& j, const std::vector<Mat2>& mats) {
  DominatedSubsystem sub;
  sub.n = j.at("n");
  sub.K = j.at("K");
  sub.L = j.at("L");
  sub.r = j.at("r");
  sub.k1 = parse_word(j.at("k1"));
  sub.k2 = parse_word(j.at("k2"));
  sub.B = arcs_from(j.at("B"));
  sub.C = arcs_from(j.at("C"));
  sub.Z = j.at("Z");
  sub.Z_sampled = j.at("Z_sampled");
  sub.Z_geometric = j.at("Z_geometric");
  for (const auto& a : j.at("base")) sub.base.push_back({a.at(0), a.at(1), a.at(2), a.at(3)});
  if (sub.base.size() != mats.size()) throw CertificateViolation("certificate was issued for a different system");
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const Mat2 &x = sub.base[i], &y = mats[i];
    if (x.a != y.a || x.b != y.b || x.c != y.c || x.d != y.d)
      throw CertificateViolation(fmt::format("certificate map {} differs from the config", i + 1));
  }
  double margin = INFINITY;
  for (const auto& s : j.at("words")) {
    Word w = parse_word(s.get<std::string>());
    if (static_cast<int>(w.size()) != sub.n)
      throw CertificateViolation(fmt::format("certificate word {} does not have length {}", s.get<std::string>(), sub.n));
    for (auto c : w)
      if (c < 1 || c > mats.size()) throw CertificateViolation("certificate word uses an unknown symbol");
    Mat2 A = word_product(mats, w);
    for (const auto& I : sub.C.intervals) {
      ProjInterval img = map_interval(A, I);
      double best = -INFINITY;
      for (const auto& J : sub.B.intervals) best = std::max(best, J.inner_margin(img));
      if (!(best > 0))
        throw CertificateViolation(fmt::format("word {} does not map C strictly into B", s.get<std::string>()));
      margin = std::min(margin, best);
    }
    sub.words.push_back(std::move(w));
  }
  sub.margin = margin;
  double z = sampled_defect(sub, 2000, 4, 97);
  if (z > sub.Z + 1e-12)
    throw CertificateViolation(fmt::format("sampled defect {} exceeds the certified Z = {}", z, sub.Z));
  return sub;
}

struct Subsystem {
  std::optional<DominatedSubsystem> sub;
  std::string hash = "none";
  std::optional<json> cert;
};

// The subsystem for block length n: a supplied certificate, else a fresh construction
// when the system admits one (K = 0 at length n, otherwise 2K + m with a small core m).
Subsystem obtain_subsystem(const Invocation& inv, const std::vector<Mat2>& mats, int n) {
  Subsystem out;
  const json& o = inv.options;
  if (o.contains("certificate")) {
    out.sub = certificate_from(o["certificate"], mats);
  } else {
    SubsystemParams params;
    params.seed = o.value("seed", std::uint64_t{1});
    try {
      SubsystemSkeleton sk = build_skeleton(mats, params);
      int len = n;
      if (sk.K > 0) {
        int m = 1;
        while (m < n && word_count(int(mats.size()), m + 1) <= 4096) ++m;
        len = 2 * sk.K + m;
      }
      out.sub = build_dominated_subsystem(mats, sk, len, params);
    } catch (const ConstructionFailure&) {
    } catch (const HypothesisFailure&) {
    }
  }
  if (out.sub) {
    out.cert = o.contains("certificate") ? o["certificate"] : certificate_json(*out.sub);
    out.hash = sha256_hex(out.cert->dump());
  }
  return out;
}

bool hypotheses_ok(const HypothesisReport& r) { return r.irreducible && r.strongly_irreducible && r.noncompact_witness; }

json hypothesis_json(const HypothesisReport& r) {
  json j;
  j["irreducible"] = r.irreducible;
  j["invariant_line"] = r.invariant_line ? json(*r.invariant_line) : json(nullptr);
  j["strongly_irreducible"] = r.strongly_irreducible;
  j["strong_irreducibility_bound"] = {{"word_length", r.bound_word_length}, {"union_cap", r.bound_union_cap}};
  j["invariant_union"] = r.invariant_union;
  j["noncompact"] = bool(r.noncompact_witness);
  j["noncompact_witness"] = r.noncompact_witness ? json(word_to_string(*r.noncompact_witness)) : json(nullptr);
  j["witness_trace_ratio"] = r.witness_trace;
  return j;
}

void gate(const Invocation& inv, const std::vector<Mat2>& mats) {
  if (inv.options.value("override_hypotheses", false)) return;
  HypothesisReport r = check_hypotheses(mats, 6);
  if (hypotheses_ok(r)) return;
  std::string why = !r.irreducible ? "a common invariant line"
                    : !r.strongly_irreducible ? "a finite invariant union of lines"
                                              : "a compact generated group (no word with |tr|/sqrt|det| > 2 up to length 6)";
  throw HypothesisFailure("standing hypotheses fail: " + why + "; rerun with --override-hypotheses to proceed");
}

int threads_or(int t) {
  if (t > 0) return t;
  unsigned h = std::thread::hardware_concurrency();
  return h ? int(h) : 1;
}

struct Ctx {
  const Invocation& inv;
  int threads;
  Outcome out;
  json result;

  int n() const { return inv.options.at("n"); }
  double tol() const { return inv.options.at("tol"); }
  std::uint64_t seed() const { return inv.options.at("seed"); }
  std::string format() const { return inv.options.value("format", std::string("csv")); }
  double max_width(double dflt) const { return inv.options.value("max_width", dflt); }

  void finish(const std::string& csv) {
    result["command"] = inv.command;
    result["config_hash"] = inv.config.hash();
    result["version"] = kVersion;
    std::string js = result.dump(2) + "\n";
    if (!csv.empty()) out.files.push_back({"result.csv", csv});
    out.files.push_back({"result.json", js});
    out.stdout_text = (format() == "csv" && !csv.empty()) ? csv : js;
  }
};

// ---- commands ----

void cmd_check(Ctx& c) {
  const auto& cfg = c.inv.config;
  auto mats = cfg.matrices();
  auto ifs = cfg.ifs();
  HypothesisReport rep = check_hypotheses(mats, 6);
  json& r = c.result;
  r["hypotheses"] = hypothesis_json(rep);
  MulticoneResult mc = find_multicone(mats);
  json dom;
  dom["dominated"] = bool(mc.certificate);
  if (mc.certificate) {
    dom["multicone"] = arcs_json(mc.certificate->cone);
    dom["margin"] = mc.certificate->margin;
  }
  json bg = json::array();
  for (auto [n, v] : mc.evidence.ratios) bg.push_back({{"n", n}, {"ratio", v}});
  dom["bg_ratios"] = bg;
  dom["bg_tau"] = mc.evidence.tau;
  try {
    SubsystemSkeleton sk = build_skeleton(mats);
    dom["skeleton"] = {{"already_dominated", sk.already_dominated}, {"K", sk.K}, {"L", sk.L},
                       {"k1", word_to_string(sk.k1)}, {"k2", word_to_string(sk.k2)}};
    if (sk.K == 0) {
      Subsystem s = obtain_subsystem(c.inv, mats, std::min(c.n(), 10));
      if (s.sub) {
        dom["certificate_hash"] = s.hash;
        dom["Z"] = s.sub->Z;
        dom["subsystem_n"] = s.sub->n;
        c.out.files.push_back({"certificate.json", s.cert->dump(2) + "\n"});
      }
    }
  } catch (const std::exception& e) {
    dom["skeleton_error"] = e.what();
  }
  r["domination"] = dom;

  json sosc;
  sosc["asserted"] = cfg.assertions.sosc_asserted;
  std::vector<std::string> warnings;
  bool sosc_ok = cfg.assertions.sosc_asserted;
  if (cfg.assertions.open_set) {
    SoscCheck sc = check_rectangle(ifs, *cfg.assertions.open_set);
    sosc["rectangle"] = *cfg.assertions.open_set;
    sosc["check"] = sc.verified() ? "verified" : "not verified";
    sosc["images_inside"] = sc.inside;
    sosc["images_disjoint"] = sc.disjoint;
    if (!sc.detail.empty()) sosc["detail"] = sc.detail;
    if (!sc.verified() && cfg.assertions.sosc_asserted)
      warnings.push_back("SOSC rectangle check failed; the user assertion is still honored");
    sosc_ok = sosc_ok || sc.verified();
  } else {
    sosc["check"] = cfg.assertions.sosc_asserted ? "user-asserted" : "not asserted";
  }
  r["sosc"] = sosc;
  r["warnings"] = warnings;
  bool green = hypotheses_ok(rep) && mc.certificate && sosc_ok;
  r["spectra_allowed"] = hypotheses_ok(rep);
  r["status"] = green ? "green" : "findings";
  if (rep.noncompact_witness && !hypotheses_ok(rep)) r["status"] = "findings";
  if (!rep.noncompact_witness) r["group"] = "compact";
  c.finish("");
}

void cmd_dimension(Ctx& c) {
  DimensionOptions o;
  o.schedule = doubling_schedule(1, c.n());
  o.tol = std::min(c.tol(), 1e-6);
  o.threads = c.threads;
  o.term_budget = c.inv.options.at("budget_terms");
  DimensionResult d = affinity_dimension(c.inv.config.matrices(), o);
  std::string csv = "n,s_lower,s_upper,running_lower,running_upper\n";
  json rows = json::array();
  for (const auto& r : d.trace) {
    csv += fmt::format("{},{},{},{},{}\n", r.n, num(r.s.lower), num(r.s.upper), num(r.running.lower),
                       num(r.running.upper));
    rows.push_back({{"n", r.n}, {"lower", r.s.lower}, {"upper", r.s.upper}, {"running_lower", r.running.lower},
                    {"running_upper", r.running.upper}});
  }
  bool conv = d.s.width() <= c.max_width(0.05);
  c.result["value"] = d.value;
  c.result["lower"] = d.s.lower;
  c.result["upper"] = d.s.upper;
  c.result["converged"] = conv;
  c.result["trace"] = rows;
  if (!conv) c.out.exit = kUnconverged;
  c.finish(csv);
}

void cmd_pressure(Ctx& c) {
  const auto& o = c.inv.options;
  auto ifs = c.inv.config.ifs();
  auto mats = ifs.matrices();
  auto phi = c.inv.config.phi();
  bool psi = o.contains("psi");
  std::vector<double> q, alpha;
  if (o.contains("q")) q = o["q"].get<std::vector<double>>();
  if (o.contains("alpha")) alpha = o["alpha"].get<std::vector<double>>();
  if (!q.empty() && !phi) throw UsageError("--q needs a potential in the config");
  if (!q.empty() && alpha.empty()) alpha.assign(q.size(), 0.0);
  if (phi && !q.empty() && (int(q.size()) != phi->dimension() || alpha.size() != q.size()))
    throw UsageError("--q and --alpha must match the potential dimension");
  std::array<double, 2> pq{0, 0};
  if (psi) {
    auto v = o["psi"].get<std::vector<double>>();
    if (v.size() != 2) throw UsageError("--psi needs two exponents");
    pq = {v[0], v[1]};
  }
  double s = o.value("s", 1.0);
  int d = (!psi && !q.empty()) ? phi->depth() : 1;
  SubsystemSkeleton sk;
  bool dominated = false;
  try {
    sk = build_skeleton(mats);
    dominated = sk.K == 0;
  } catch (const std::exception&) {
  }
  std::vector<std::string> hashes;
  auto estimator = [&](int n) {
    std::optional<DominatedSubsystem> sub;
    if (dominated) {
      try {
        sub = build_dominated_subsystem(mats, sk, n);
        hashes.push_back(sha256_hex(certificate_json(*sub).dump()));
      } catch (const std::exception&) {
      }
    }
    PressureOptions po;
    po.threads = c.threads;
    po.subsystem = sub ? &*sub : nullptr;
    if (psi) return pressure_psi(ifs, pq, n, po);
    if (!q.empty()) return pressure_phi(ifs, s, *phi, q, alpha, n, po);
    auto zero = LocallyConstantPotential::constant(ifs.size(), {0.0});
    return pressure_phi(ifs, s, zero, {0.0}, {0.0}, n, po);
  };
  LimitOptions lo;
  lo.target_width = c.max_width(1e-3);
  lo.term_budget = o.at("budget_terms");
  const int N = ifs.size();
  lo.terms_at = [N](int n) { return word_count(N, n); };
  PressureTrace tr = pressure_limit(estimator, doubling_schedule(d, c.n()), lo);
  std::ostringstream csv;
  write_trace_csv(csv, tr, false);
  json rows = json::array();
  for (const auto& r : tr.rows) rows.push_back({{"n", r.n}, {"lower", r.lower}, {"upper", r.upper}, {"terms", r.terms}});
  c.result["weight"] = psi ? json({{"psi", pq}}) : json({{"s", s}, {"q", q}, {"alpha", alpha}});
  c.result["lower"] = tr.best.lower;
  c.result["upper"] = tr.best.upper;
  c.result["converged"] = tr.converged;
  c.result["rows"] = rows;
  c.result["certificates"] = hashes.empty() ? json("none") : json(hashes);
  if (!tr.converged) c.out.exit = kUnconverged;
  c.finish(csv.str());
}

std::vector<std::vector<double>> grid_of(const json& o, std::size_t dim) {
  std::vector<std::vector<double>> g;
  if (o.contains("alpha")) g.push_back(o["alpha"].get<std::vector<double>>());
  else if (o.contains("grid")) g = parse_grid(o["grid"].get<std::string>());
  else throw UsageError("spectrum needs --grid or --alpha");
  for (const auto& a : g)
    if (a.size() != dim) throw UsageError(fmt::format("alpha points must have {} components", dim));
  return g;
}

void cmd_spectrum(Ctx& c) {
  const auto& o = c.inv.options;
  auto ifs = c.inv.config.ifs();
  auto mats = ifs.matrices();
  gate(c.inv, mats);
  std::string mode = o.at("mode");
  SpectrumOptions so;
  so.n = c.n();
  so.tol = c.tol();
  so.threads = c.threads;
  so.witness = true;
  so.max_width = c.max_width(0.1);
  Subsystem sub = obtain_subsystem(c.inv, mats, c.n());
  so.subsystem = sub.sub ? &*sub.sub : nullptr;
  if (sub.cert) c.out.files.push_back({"certificate.json", sub.cert->dump(2) + "\n"});
  c.result["mode"] = mode;
  c.result["n"] = so.n;
  c.result["tol"] = so.tol;
  c.result["certificate"] = sub.hash;
  c.result["fallback_bounds"] = !sub.sub;

  bool any_infeasible = false, any_unconverged = false;
  std::string csv;
  json pts = json::array();
  if (mode == "entropy") {
    auto grid = grid_of(o, 2);
    std::optional<double> eps;
    if (o.contains("eps")) eps = o["eps"].get<double>();
    csv = "alpha_1,alpha_2,h_lower,h_upper,h_value,q1,q2,counting,certificate,fallback,error_kind,error\n";
    for (const auto& a : grid) {
      std::string row = num(a[0]) + "," + num(a[1]) + ",";
      json p = {{"alpha", a}};
      try {
        EntropyResult e = entropy_spectrum(ifs, {a[0], a[1]}, so);
        std::string cnt;
        if (eps) {
          double ce = counting_entropy(ifs, {a[0], a[1]}, so.n, *eps, c.threads);
          cnt = num(ce);
          p["counting"] = finite(ce);
        }
        row += fmt::format("{},{},{},{},{},{},", num(e.h.lower), num(e.h.upper), num(e.value), num(e.q_star[0]),
                           num(e.q_star[1]), cnt);
        row += fmt::format("{},{},,\n", sub.hash, sub.sub ? 0 : 1);
        p["h"] = {e.h.lower, e.h.upper};
        p["h_value"] = e.value;
        p["q_star"] = e.q_star;
      } catch (const Infeasible& ex) {
        any_infeasible = true;
        row += fmt::format(",,,,,,{},{},infeasible,\"{}\"\n", sub.hash, sub.sub ? 0 : 1, ex.what());
        p["error_kind"] = "infeasible";
        p["error"] = ex.what();
      } catch (const Unconverged& ex) {
        any_unconverged = true;
        row += fmt::format(",,,,,,{},{},unconverged,\"{}\"\n", sub.hash, sub.sub ? 0 : 1, ex.what());
        p["error_kind"] = "unconverged";
        p["error"] = ex.what();
      }
      csv += row;
      pts.push_back(p);
    }
  } else if (mode == "birkhoff" || mode == "lyapunov") {
    std::optional<LocallyConstantPotential> phi;
    SweepMode sm = SweepMode::Lyapunov;
    std::size_t dim = 2;
    if (mode == "birkhoff") {
      phi = c.inv.config.phi();
      if (!phi) throw UsageError("Birkhoff mode needs a potential in the config");
      sm = SweepMode::Birkhoff;
      dim = phi->dimension();
    }
    SpectrumCurve curve = spectrum_sweep(ifs, sm, grid_of(o, dim), phi ? &*phi : nullptr, so);
    curve.certificate = sub.hash;
    std::ostringstream os;
    write_curve_csv(os, curve);
    csv = os.str();
    for (const auto& e : curve.entries) {
      json p = {{"alpha", e.alpha}};
      if (e.point) {
        const auto& pt = *e.point;
        p["s"] = {pt.s.lower, pt.s.upper};
        p["s_value"] = pt.s_value;
        p["q_star"] = pt.q_star;
        p["boundary"] = pt.boundary;
        p["converged"] = pt.converged;
        if (pt.h_top) p["h"] = {pt.h_top->lower, pt.h_top->upper};
        if (pt.s_formula) p["s_min_formula"] = {pt.s_formula->lower, pt.s_formula->upper};
        if (pt.witness_entropy) p["witness_entropy"] = *pt.witness_entropy;
        if (pt.witness_lyapunov)
          p["witness_chi"] = {pt.witness_lyapunov->chi1.mid(), pt.witness_lyapunov->chi2.mid()};
        if (pt.witness_dimension) p["witness_dimension"] = {pt.witness_dimension->lower, pt.witness_dimension->upper};
        if (!pt.converged) any_unconverged = true;
      } else {
        p["error_kind"] = e.error_kind;
        p["error"] = e.error;
        if (e.error_kind == "infeasible") any_infeasible = true;
        else any_unconverged = true;
      }
      pts.push_back(p);
    }
  } else {
    throw UsageError("--mode must be birkhoff, lyapunov or entropy");
  }
  c.result["points"] = pts;
  c.result["converged"] = !any_infeasible && !any_unconverged;
  if (any_infeasible) c.out.exit = kInfeasible;
  else if (any_unconverged) c.out.exit = kUnconverged;
  c.finish(csv);
}

void cmd_match(Ctx& c) {
  const auto& o = c.inv.options;
  auto ifs = c.inv.config.ifs();
  auto phi = c.inv.config.phi();
  if (!phi) throw UsageError("match needs a potential in the config");
  if (!o.contains("alpha")) throw UsageError("match needs --alpha");
  auto alpha = o["alpha"].get<std::vector<double>>();
  Subsystem sub;
  if (!o.value("full_shift", false)) sub = obtain_subsystem(c.inv, ifs.matrices(), c.n());
  MatchOptions mo;
  mo.s = o.value("s", 1.0);
  mo.tol = std::min(c.tol(), 1e-8);
  mo.subsystem = sub.sub ? &*sub.sub : nullptr;
  mo.threads = c.threads;
  mo.lyapunov.threads = c.threads;
  mo.lyapunov.seed = c.seed();
  MatchReport rep = match_measure(ifs, *phi, alpha, sub.sub ? sub.sub->n : c.n(), mo);
  std::string csv = "word,weight\n";
  for (std::size_t i = 0; i < rep.measure.size(); ++i)
    csv += fmt::format("{},{:.17g}\n", word_to_string(rep.measure.support[i]), rep.measure.weights[i]);
  auto& r = c.result;
  r["alpha"] = alpha;
  r["q"] = rep.q;
  r["average"] = rep.average;
  r["residual"] = rep.residual;
  r["entropy"] = rep.entropy;
  r["chi1"] = {rep.lyapunov.chi1.lower, rep.lyapunov.chi1.upper};
  r["chi2"] = {rep.lyapunov.chi2.lower, rep.lyapunov.chi2.upper};
  r["dimension"] = {rep.dimension.lower, rep.dimension.upper};
  r["newton_steps"] = rep.newton_steps;
  r["on_subsystem"] = rep.on_subsystem;
  r["slack"] = rep.slack;
  r["certificate"] = sub.hash;
  if (sub.cert) c.out.files.push_back({"certificate.json", sub.cert->dump(2) + "\n"});
  c.finish(csv);
}

void cmd_render(Ctx& c) {
  const auto& o = c.inv.options;
  auto ifs = c.inv.config.ifs();
  const int N = ifs.size();
  int depth = o.value("depth", 6);
  std::uint64_t count = o.value("count", std::uint64_t{0});
  if (depth < 1) throw UsageError("--depth must be positive");
  std::uint64_t total = count ? 0 : word_count(N, depth);
  std::string csv = "x,y\n";
  auto emit = [&](const Word& w) {
    Vec2 p = canonical_projection(ifs, w);
    csv += fmt::format("{:.17g},{:.17g}\n", p.x, p.y);
  };
  bool all = count == 0;
  if (all) {
    if (total > 5000000) throw UsageError("depth too large to render every word; pass --count");
    for (std::uint64_t k = 0; k < total; ++k) emit(word_at(N, depth, k));
  } else {
    auto g = make_stream(c.seed(), 7);
    Word w(depth);
    for (std::uint64_t k = 0; k < count; ++k) {
      for (auto& x : w) x = static_cast<std::uint8_t>(1 + uniform_below(g, N));
      emit(w);
    }
  }
  c.result["depth"] = depth;
  c.result["points"] = all ? total : count;
  c.result["sampled"] = !all;
  c.finish(csv);
}

}  // namespace

SoscCheck check_rectangle(const AffineIfs& ifs, const std::array<double, 4>& R) {
  SoscCheck out;
  const double x0 = R[0], y0 = R[1], x1 = R[2], y1 = R[3];
  const double tol = 1e-12 * (1 + std::abs(x1 - x0) + std::abs(y1 - y0));
  std::vector<std::array<Vec2, 4>> img;
  for (const auto& m : ifs.maps()) {
    std::array<Vec2, 4> q;
    Vec2 corners[4] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    for (int k = 0; k < 4; ++k) q[k] = m.matrix * corners[k] + m.translation;
    img.push_back(q);
  }
  out.inside = true;
  for (std::size_t i = 0; i < img.size() && out.inside; ++i)
    for (const auto& p : img[i])
      if (p.x < x0 - tol || p.x > x1 + tol || p.y < y0 - tol || p.y > y1 + tol) {
        out.inside = false;
        out.detail = fmt::format("image of map {} leaves the rectangle", i + 1);
        break;
      }
  // separating axes among the edge normals of two parallelograms; touching is allowed
  auto separated = [&](const std::array<Vec2, 4>& P, const std::array<Vec2, 4>& Q) {
    for (const auto* S : {&P, &Q})
      for (int k = 0; k < 4; ++k) {
        Vec2 e{(*S)[(k + 1) % 4].x - (*S)[k].x, (*S)[(k + 1) % 4].y - (*S)[k].y};
        Vec2 nrm{-e.y, e.x};
        double pmin = INFINITY, pmax = -INFINITY, qmin = INFINITY, qmax = -INFINITY;
        for (const auto& p : P) pmin = std::min(pmin, p.x * nrm.x + p.y * nrm.y), pmax = std::max(pmax, p.x * nrm.x + p.y * nrm.y);
        for (const auto& p : Q) qmin = std::min(qmin, p.x * nrm.x + p.y * nrm.y), qmax = std::max(qmax, p.x * nrm.x + p.y * nrm.y);
        double sc = tol * (1 + std::hypot(nrm.x, nrm.y));
        if (pmax <= qmin + sc || qmax <= pmin + sc) return true;
      }
    return false;
  };
  out.disjoint = true;
  for (std::size_t i = 0; i < img.size() && out.disjoint; ++i)
    for (std::size_t j = i + 1; j < img.size(); ++j)
      if (!separated(img[i], img[j])) {
        out.disjoint = false;
        if (out.detail.empty()) out.detail = fmt::format("images of maps {} and {} overlap", i + 1, j + 1);
        break;
      }
  return out;
}

Outcome execute(const Invocation& inv, int threads) {
  Ctx c{inv, threads_or(threads), {}, json::object()};
  try {
    if (inv.command == "check") cmd_check(c);
    else if (inv.command == "dimension") cmd_dimension(c);
    else if (inv.command == "pressure") cmd_pressure(c);
    else if (inv.command == "spectrum") cmd_spectrum(c);
    else if (inv.command == "match") cmd_match(c);
    else if (inv.command == "render") cmd_render(c);
    else throw UsageError("unknown command " + inv.command);
  } catch (const UsageError& e) {
    c.out = {kParse, {}, "", e.what()};
  } catch (const InvalidInput& e) {
    c.out = {kParse, {}, "", e.what()};
  } catch (const HypothesisFailure& e) {
    c.out = {kHypothesis, {}, "", e.what()};
  } catch (const CertificateViolation& e) {
    c.out = {kHypothesis, {}, "", e.what()};
  } catch (const Infeasible& e) {
    c.out = {kInfeasible, {}, "", e.what()};
  } catch (const Unconverged& e) {
    c.out = {kUnconverged, {}, "", e.what()};
  } catch (const json::exception& e) {
    c.out = {kParse, {}, "", std::string("malformed certificate or manifest: ") + e.what()};
  } catch (const std::exception& e) {
    c.out = {kFailure, {}, "", e.what()};
  }
  return c.out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  f << content;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

json manifest_for(const Invocation& inv, int threads, double seconds, const Outcome& oc) {
  json m;
  m["command"] = inv.command;
  m["options"] = inv.options;
  m["config"] = inv.config.canonical();
  m["config_hash"] = inv.config.hash();
  m["version"] = kVersion;
  m["seeds"] = {inv.options.value("seed", std::uint64_t{1})};
  m["threads"] = threads;
  m["override_hypotheses"] = inv.options.value("override_hypotheses", false);
  m["wall_seconds"] = seconds;
  m["exit_code"] = oc.exit;
  m["outputs"] = json::array();
  for (const auto& f : oc.files)
    m["outputs"].push_back({{"file", f.name}, {"sha256", sha256_hex(f.content)}, {"bytes", f.content.size()}});
  return m;
}

void emit(const Invocation& inv, int threads, double seconds, const Outcome& oc, const std::string& out_dir,
          std::ostream& out) {
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    for (const auto& f : oc.files) write_file(fs::path(out_dir) / f.name, f.content);
    write_file(fs::path(out_dir) / "manifest.json", manifest_for(inv, threads, seconds, oc).dump(2) + "\n");
  }
  out << oc.stdout_text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planar self-affine spectra, pressures and dimension"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, format = "csv", alpha, grid, mode = "birkhoff", certificate, out_dir, psi, qs, manifest;
  int n = 0, threads = 0, depth = 6;
  double tol = 0, s = 1, max_width = 0, eps = 0;
  std::uint64_t seed = 1, budget = 0, count = 0;
  bool override_h = false, full_shift = false;

  struct Opts {
    CLI::Option *n, *tol, *seed, *threads, *budget, *alpha, *grid, *cert, *s, *psi, *q, *width, *eps, *depth, *count;
  };
  std::map<std::string, Opts> opts;
  auto common = [&](CLI::App* sub) {
    Opts o{};
    sub->add_option("--config", config_path, "System config (YAML or JSON)")->required();
    o.n = sub->add_option("--n", n, "Word length / block length");
    o.tol = sub->add_option("--tol", tol, "Solver tolerance");
    o.seed = sub->add_option("--seed", seed, "Seed for sampling and Monte-Carlo");
    o.threads = sub->add_option("--threads", threads, "Worker threads (default: machine parallelism)");
    sub->add_option("--format", format, "Stdout format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_flag("--override-hypotheses", override_h, "Run spectra even when the standing hypotheses fail");
    o.cert = sub->add_option("--certificate", certificate, "Reuse a dominated-subsystem certificate (JSON)");
    o.budget = sub->add_option("--budget-terms", budget, "Summand budget for pressure schedules");
    o.width = sub->add_option("--max-width", max_width, "Bracket width counted as converged");
    sub->add_option("--out", out_dir, "Directory for result files and manifest.json");
    return o;
  };
  auto* check = app.add_subcommand("check", "Hypothesis report");
  opts["check"] = common(check);
  auto* dim = app.add_subcommand("dimension", "Affinity dimension root");
  opts["dimension"] = common(dim);
  auto* pres = app.add_subcommand("pressure", "Pressure bracket along a doubling schedule");
  opts["pressure"] = common(pres);
  opts["pressure"].s = pres->add_option("--s", s, "Singular value function exponent");
  opts["pressure"].psi = pres->add_option("--psi", psi, "psi exponents \"q1,q2\"");
  opts["pressure"].q = pres->add_option("--q", qs, "Potential multipliers");
  opts["pressure"].alpha = pres->add_option("--alpha", alpha, "Potential centering");
  auto* spec = app.add_subcommand("spectrum", "Birkhoff, Lyapunov or entropy spectrum");
  opts["spectrum"] = common(spec);
  spec->add_option("--mode", mode, "birkhoff|lyapunov|entropy")->check(CLI::IsMember({"birkhoff", "lyapunov", "entropy"}));
  opts["spectrum"].grid = spec->add_option("--grid", grid, "a1:a2:steps[,b1:b2:steps]");
  opts["spectrum"].alpha = spec->add_option("--alpha", alpha, "Single point x[,y]");
  opts["spectrum"].eps = spec->add_option("--eps", eps, "Entropy mode: also report the counting estimator");
  auto* match = app.add_subcommand("match", "Bernoulli measure with prescribed Birkhoff average");
  opts["match"] = common(match);
  opts["match"].alpha = match->add_option("--alpha", alpha, "Target average")->required();
  opts["match"].s = match->add_option("--s", s, "Exponent of phi^s in the Gibbs weights");
  match->add_flag("--full-shift", full_shift, "Ignore any dominated subsystem");
  auto* render = app.add_subcommand("render", "Canonical-projection point cloud");
  opts["render"] = common(render);
  opts["render"].depth = render->add_option("--depth", depth, "Word length");
  opts["render"].count = render->add_option("--count", count, "Sample this many words with replacement (0: every word)");
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
  replay->add_option("manifest", manifest, "manifest.json")->required();
  auto* replay_threads = replay->add_option("--threads", threads, "Worker threads");
  replay->add_option("--out", out_dir, "Directory for the replayed outputs");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kParse;
  }

  try {
    if (replay->parsed()) {
      json m = json::parse(read_file(manifest));
      Invocation inv{m.at("command"), m.at("options"), config_from_json(m.at("config"))};
      int t = replay_threads->count() ? threads : m.value("threads", 1);
      auto t0 = std::chrono::steady_clock::now();
      Outcome oc = execute(inv, t);
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::vector<std::string> diffs;
      std::map<std::string, std::string> got;
      for (const auto& f : oc.files) got[f.name] = sha256_hex(f.content);
      for (const auto& f : m.at("outputs")) {
        std::string name = f.at("file");
        if (!got.count(name)) diffs.push_back(name + " (missing)");
        else if (got[name] != f.at("sha256").get<std::string>()) diffs.push_back(name);
      }
      if (got.size() != m.at("outputs").size()) diffs.push_back("output list differs");
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        for (const auto& f : oc.files) write_file(fs::path(out_dir) / f.name, f.content);
        write_file(fs::path(out_dir) / "manifest.json", manifest_for(inv, t, secs, oc).dump(2) + "\n");
      }
      if (oc.exit != m.value("exit_code", 0)) diffs.push_back(fmt::format("exit code {} (was {})", oc.exit, m.value("exit_code", 0)));
      if (diffs.empty()) {
        out << fmt::format("replay: {} outputs identical\n", got.size());
        return kOk;
      }
      for (const auto& d : diffs) err << "replay mismatch: " << d << "\n";
      return kFailure;
    }

    std::string cmd;
    for (auto* sub : app.get_subcommands()) cmd = sub->get_name();
    const Opts& o = opts[cmd];
    SystemConfig cfg;
    try {
      cfg = parse_config(config_path);
    } catch (const ConfigError& e) {
      err << e.what() << "\n";
      return kParse;
    }
    json op;
    op["n"] = o.n->count() ? n : cfg.solver.n;
    op["tol"] = o.tol->count() ? tol : cfg.solver.tol;
    op["seed"] = o.seed->count() ? seed : cfg.solver.seed;
    op["budget_terms"] = o.budget->count() ? budget : cfg.solver.budget_terms;
    op["format"] = format;
    op["override_hypotheses"] = override_h;
    if (o.width->count()) op["max_width"] = max_width;
    if (o.cert && o.cert->count()) op["certificate"] = json::parse(read_file(certificate));
    if (cmd == "pressure") {
      if (o.s->count() && o.psi->count()) throw UsageError("--s and --psi are exclusive");
      if (o.psi->count()) op["psi"] = parse_list(psi, "--psi");
      else op["s"] = s;
      if (o.q->count()) op["q"] = parse_list(qs, "--q");
      if (o.alpha->count()) op["alpha"] = parse_list(alpha, "--alpha");
    } else if (cmd == "spectrum") {
      op["mode"] = mode;
      if (o.alpha->count()) op["alpha"] = parse_list(alpha, "--alpha");
      else if (o.grid->count()) op["grid"] = grid;
      if (o.eps->count()) op["eps"] = eps;
    } else if (cmd == "match") {
      op["alpha"] = parse_list(alpha, "--alpha");
      op["s"] = s;
      op["full_shift"] = full_shift;
    } else if (cmd == "render") {
      op["depth"] = depth;
      op["count"] = count;
    }
    int t = o.threads->count() ? threads : cfg.solver.threads;
    Invocation inv{cmd, op, cfg};
    auto t0 = std::chrono::steady_clock::now();
    Outcome oc = execute(inv, t);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!oc.message.empty()) err << "error: " << oc.message << "\n";
    emit(inv, threads_or(t), secs, oc, out_dir, out);
    return oc.exit;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kParse;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kParse;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kParse;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace saspec::cli
