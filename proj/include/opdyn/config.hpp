#pragma once

// JSON run configuration. Parsing collects every violation before failing;
// unknown keys are rejected. See configs/README.md for the schema.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "opdyn/agent_sim.hpp"
#include "opdyn/error.hpp"
#include "opdyn/experiments.hpp"
#include "opdyn/format.hpp"
#include "opdyn/kernels.hpp"
#include "opdyn/meanfield.hpp"

namespace opdyn {

using json = nlohmann::json;

struct SimulateSection {
  std::size_t n = 1000;
  double tau = 10.0;
  std::vector<double> snapshot_times;  // filled with 11 equispaced times when omitted
  bool symmetric = false;
  bool allow_self = false;
  bool operator==(const SimulateSection&) const = default;
};

struct MeanfieldSection {
  double lo = 0.0;  // lo >= hi: use the hull of mu_0 and psi
  double hi = 0.0;
  std::size_t cells = 1000;
  double dt = 0.01;
  double T = 10.0;
  std::vector<double> snapshot_times;
  Scheme scheme = Scheme::Euler;
  bool operator==(const MeanfieldSection&) const = default;
};

struct MomentsSection {
  int K = 8;
  double T = 10.0;
  double dt = 0.001;
  std::size_t record_every = 100;
  bool operator==(const MomentsSection&) const = default;
};

struct ConcentrateSection {
  double tau = 5.0;
  std::vector<double> sample_times;  // filled with 20 equispaced times when omitted
  std::vector<std::size_t> n_list{100, 300, 1000, 3000};
  std::size_t replicas = 100;
  std::vector<double> eps_list;  // empty: median D at the second population
  unsigned threads = 1;
  std::size_t cells = 2000;
  double dt = 0.005;
  Scheme scheme = Scheme::RK4;
  bool check_discretization = true;
  bool operator==(const ConcentrateSection&) const = default;
};

struct RunConfig {
  KernelSpec kernel;
  InitialLaw initial = InitialUniform{};
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  SimulateSection simulate;
  MeanfieldSection meanfield;
  MomentsSection moments;
  ConcentrateSection concentrate;
  bool operator==(const RunConfig&) const = default;
};

/// Configuration rejected at parse time; `violations()` lists every problem.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error("cli", join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : "\n") + s;
    return out;
  }
  std::vector<std::string> violations_;
};

namespace detail {

class ConfigReader {
 public:
  std::vector<std::string> errors;

  void error(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  bool object(const json& j, const std::string& path) {
    if (!j.is_object()) {
      error(path, "expected an object");
      return false;
    }
    return true;
  }

  void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
      if (!ok.count(key)) error(join(path, key), "unknown key");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  template <class Pred>
  double real(const json& j, const std::string& path, const char* key, double fallback, Pred ok, const char* what) {
    const auto p = join(path, key);
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number()) {
      error(p, "expected a number");
      return fallback;
    }
    const double x = v.get<double>();
    if (!ok(x)) error(p, what);
    return x;
  }

  double real(const json& j, const std::string& path, const char* key, double fallback) {
    return real(j, path, key, fallback, [](double x) { return std::isfinite(x); }, "must be finite");
  }

  double required_real(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) {
      error(join(path, key), "required");
      return 0.0;
    }
    return real(j, path, key, 0.0);
  }

  double unit(const json& j, const std::string& path, const char* key, double fallback) {
    return real(j, path, key, fallback, [](double x) { return x >= 0.0 && x <= 1.0; }, "must lie in [0,1]");
  }

  std::uint64_t count(const json& j, const std::string& path, const char* key, std::uint64_t fallback,
                      std::uint64_t min = 0) {
    const auto p = join(path, key);
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
      error(p, "expected a non-negative integer");
      return fallback;
    }
    const auto x = v.get<std::uint64_t>();
    if (x < min) error(p, "must be >= " + std::to_string(min));
    return x;
  }

  bool boolean(const json& j, const std::string& path, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) {
      error(join(path, key), "expected true or false");
      return fallback;
    }
    return j.at(key).get<bool>();
  }

  std::vector<double> reals(const json& j, const std::string& path, const char* key) {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    const auto& v = j.at(key);
    const auto p = join(path, key);
    if (!v.is_array()) {
      error(p, "expected an array of numbers");
      return out;
    }
    for (const auto& x : v) {
      if (!x.is_number()) {
        error(p, "expected an array of numbers");
        return {};
      }
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::string type(const json& j, const std::string& path) {
    if (!j.contains("type") || !j.at("type").is_string()) {
      error(join(path, "type"), "required string");
      return {};
    }
    return j.at("type").get<std::string>();
  }

  Scheme scheme(const json& j, const std::string& path, Scheme fallback) {
    if (!j.contains("scheme")) return fallback;
    const auto& v = j.at("scheme");
    if (v == "euler") return Scheme::Euler;
    if (v == "rk4") return Scheme::RK4;
    error(join(path, "scheme"), "expected \"euler\" or \"rk4\"");
    return fallback;
  }

  WeightLaw weight_law(const json& j, const std::string& path) {
    if (!object(j, path)) return ConstantWeight{};
    const auto t = type(j, path);
    if (t == "constant") {
      only_keys(j, path, {"type", "omega"});
      return ConstantWeight{unit(j, path, "omega", 0.5)};
    }
    if (t == "bounded_confidence") {
      only_keys(j, path, {"type", "omega0", "R"});
      const double w0 = real(j, path, "omega0", 0.5, [](double x) { return x > 0.0 && x < 1.0; }, "must lie in (0,1)");
      const double r = real(j, path, "R", 1.0, [](double x) { return x > 0.0; }, "must be > 0");
      return BoundedConfidence{w0, r};
    }
    if (t == "gaussian") {
      only_keys(j, path, {"type", "omega0", "sigma"});
      const double w0 = unit(j, path, "omega0", 0.5);
      const double s = real(j, path, "sigma", 1.0, [](double x) { return x > 0.0; }, "must be > 0");
      return GaussianWeight{w0, s};
    }
    if (t == "mixture") {
      only_keys(j, path, {"type", "omegas", "probs"});
      WeightMixture m{reals(j, path, "omegas"), reals(j, path, "probs")};
      if (m.omegas.empty() || m.omegas.size() != m.probs.size())
        error(path, "omegas and probs must be non-empty and of equal length");
      double total = 0.0;
      for (double w : m.omegas)
        if (!(w >= 0.0 && w <= 1.0)) error(join(path, "omegas"), "must lie in [0,1]");
      for (double p : m.probs) {
        if (!(p >= 0.0)) error(join(path, "probs"), "must be >= 0");
        total += p;
      }
      if (!m.probs.empty() && std::abs(total - 1.0) > 1e-12) error(join(path, "probs"), "must sum to 1");
      return m;
    }
    if (!t.empty()) error(join(path, "type"), "unknown weight law \"" + t + "\"");
    return ConstantWeight{};
  }

  GridMeasure1D grid(const json& j, const std::string& path) {
    only_keys(j, path, {"type", "lo", "hi", "cells"});
    const double lo = required_real(j, path, "lo");
    const double hi = required_real(j, path, "hi");
    auto cells = reals(j, path, "cells");
    if (!(hi > lo)) error(path, "requires hi > lo");
    if (cells.size() < 2) error(join(path, "cells"), "needs at least 2 cells");
    for (double c : cells)
      if (!(c >= 0.0)) error(join(path, "cells"), "masses must be >= 0");
    double total = 0.0;
    for (double c : cells) total += c;
    if (!(hi > lo) || cells.size() < 2 || !(total > 0.0)) return GridMeasure1D(0.0, 1.0, {0.5, 0.5});
    for (double& c : cells) c = std::max(c, 0.0) / total;
    return GridMeasure1D(lo, hi, std::move(cells));
  }

  EnvironmentSpec environment(const json& j, const std::string& path) {
    if (!object(j, path)) return NoEnvironment{};
    const auto t = type(j, path);
    if (t == "none") {
      only_keys(j, path, {"type"});
      return NoEnvironment{};
    }
    if (t == "atom") {
      only_keys(j, path, {"type", "z"});
      if (j.contains("z") && j.at("z").is_number()) return EnvironmentAtom{{j.at("z").get<double>()}};
      auto z = reals(j, path, "z");
      if (z.empty()) error(join(path, "z"), "required number or array of numbers");
      return EnvironmentAtom{z.empty() ? std::vector<double>{0.0} : z};
    }
    if (t == "uniform") {
      only_keys(j, path, {"type", "a", "b"});
      const double a = required_real(j, path, "a"), b = required_real(j, path, "b");
      if (!(b > a)) error(path, "requires b > a");
      return EnvironmentUniform{a, b};
    }
    if (t == "bump") {
      only_keys(j, path, {"type", "a", "b"});
      const double a = real(j, path, "a", 2.0), b = real(j, path, "b", 4.0);
      if (!(b > a)) {
        error(path, "requires b > a");
        return BumpEnvironment{};
      }
      return BumpEnvironment{a, b};
    }
    if (t == "grid") return EnvironmentGrid{grid(j, path)};
    if (!t.empty()) error(join(path, "type"), "unknown environment \"" + t + "\"");
    return NoEnvironment{};
  }

  KernelSpec kernel(const json& j, const std::string& path) {
    KernelSpec k;
    if (!object(j, path)) return k;
    only_keys(j, path, {"alpha", "internal", "external", "environment"});
    k.alpha = unit(j, path, "alpha", 1.0);
    if (j.contains("internal")) {
      k.internal = weight_law(j.at("internal"), join(path, "internal"));
    } else {
      error(join(path, "internal"), "required");
    }
    if (j.contains("external")) k.external = weight_law(j.at("external"), join(path, "external"));
    if (j.contains("environment")) k.environment = environment(j.at("environment"), join(path, "environment"));
    if (k.alpha < 1.0) {
      if (!has_environment(k.environment)) error(join(path, "environment"), "environment required");
      if (!j.contains("external")) error(join(path, "external"), "required when alpha < 1");
    }
    return k;
  }

  InitialLaw initial(const json& j, const std::string& path) {
    if (!object(j, path)) return InitialUniform{};
    const auto t = type(j, path);
    if (t == "uniform") {
      only_keys(j, path, {"type", "a", "b"});
      const double a = required_real(j, path, "a"), b = required_real(j, path, "b");
      if (!(b > a)) error(path, "requires b > a");
      return InitialUniform{a, b};
    }
    if (t == "atoms") {
      only_keys(j, path, {"type", "points", "weights"});
      std::vector<double> positions;
      std::size_t dim = 1;
      if (!j.contains("points") || !j.at("points").is_array() || j.at("points").empty()) {
        error(join(path, "points"), "required non-empty array");
        return InitialUniform{};
      }
      const auto& pts = j.at("points");
      if (pts.front().is_array()) dim = pts.front().size();
      for (const auto& p : pts) {
        if (p.is_number() && dim == 1) {
          positions.push_back(p.get<double>());
        } else if (p.is_array() && p.size() == dim && dim > 0 &&
                   std::all_of(p.begin(), p.end(), [](const json& c) { return c.is_number(); })) {
          for (const auto& c : p) positions.push_back(c.get<double>());
        } else {
          error(join(path, "points"), "points must be numbers or equal-length coordinate arrays");
          return InitialUniform{};
        }
      }
      const std::size_t count = positions.size() / dim;
      auto ws = reals(j, path, "weights");
      if (ws.empty()) ws.assign(count, 1.0 / static_cast<double>(count));
      if (ws.size() != count) {
        error(join(path, "weights"), "must match the number of points");
        return InitialUniform{};
      }
      double total = 0.0;
      for (double w : ws) {
        if (!(w >= 0.0)) error(join(path, "weights"), "must be >= 0");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        error(join(path, "weights"), "must sum to 1");
        return InitialUniform{};
      }
      for (double& w : ws) w = std::max(w, 0.0);
      return InitialAtoms{AtomicMeasure(dim, std::move(positions), std::move(ws))};
    }
    if (t == "grid") return InitialGrid{grid(j, path)};
    if (!t.empty()) error(join(path, "type"), "unknown initial law \"" + t + "\"");
    return InitialUniform{};
  }

  void times(std::vector<double>& out, const json& j, const std::string& path, const char* key, double horizon,
             std::size_t default_count) {
    out = reals(j, path, key);
    if (!j.contains(key)) {
      out = equispaced(0.0, horizon, default_count);
      return;
    }
    if (!std::is_sorted(out.begin(), out.end())) error(join(path, key), "must be sorted ascending");
    for (double s : out)
      if (s < 0.0 || s > horizon) {
        error(join(path, key), "must lie in [0, horizon]");
        break;
      }
  }
};

}  // namespace detail

/// Parses and validates a JSON run configuration, filling defaults.
inline RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({"parse error at byte " + std::to_string(e.byte) + ": " + e.what()});
  }
  detail::ConfigReader rd;
  RunConfig cfg;
  if (!rd.object(root, "<root>")) throw ConfigError(rd.errors);
  rd.only_keys(root, "", {"kernel", "initial", "seed", "output_dir", "simulate", "meanfield", "moments", "concentrate"});

  if (root.contains("kernel")) {
    cfg.kernel = rd.kernel(root.at("kernel"), "kernel");
  } else {
    rd.error("kernel", "required");
  }
  if (root.contains("initial")) {
    cfg.initial = rd.initial(root.at("initial"), "initial");
  } else {
    rd.error("initial", "required");
  }
  cfg.seed = rd.count(root, "", "seed", 0);
  if (root.contains("output_dir")) {
    if (root.at("output_dir").is_string()) {
      cfg.output_dir = root.at("output_dir").get<std::string>();
    } else {
      rd.error("output_dir", "expected a string");
    }
  }

  auto section = [&](const char* key) -> json {
    if (!root.contains(key)) return json::object();
    if (!root.at(key).is_object()) {
      rd.error(key, "expected an object");
      return json::object();
    }
    return root.at(key);
  };
  auto positive = [](double x) { return x > 0.0; };
  auto nonneg = [](double x) { return x >= 0.0; };

  {
    const json s = section("simulate");
    const std::string p = "simulate";
    rd.only_keys(s, p, {"n", "tau", "snapshot_times", "symmetric", "allow_self"});
    auto& o = cfg.simulate;
    o.n = rd.count(s, p, "n", o.n, 2);
    o.tau = rd.real(s, p, "tau", o.tau, nonneg, "must be >= 0");
    rd.times(o.snapshot_times, s, p, "snapshot_times", o.tau, 11);
    o.symmetric = rd.boolean(s, p, "symmetric", o.symmetric);
    o.allow_self = rd.boolean(s, p, "allow_self", o.allow_self);
  }
  {
    const json s = section("meanfield");
    const std::string p = "meanfield";
    rd.only_keys(s, p, {"lo", "hi", "cells", "dt", "T", "snapshot_times", "scheme"});
    auto& o = cfg.meanfield;
    o.lo = rd.real(s, p, "lo", o.lo);
    o.hi = rd.real(s, p, "hi", o.hi);
    if (s.contains("lo") != s.contains("hi")) rd.error(p, "lo and hi must be given together");
    if (s.contains("lo") && s.contains("hi") && !(o.hi > o.lo)) rd.error(p, "requires hi > lo");
    o.cells = rd.count(s, p, "cells", o.cells, 2);
    o.dt = rd.real(s, p, "dt", o.dt, [](double x) { return x > 0.0 && x <= 0.1; }, "must lie in (0, 0.1]");
    o.T = rd.real(s, p, "T", o.T, nonneg, "must be >= 0");
    rd.times(o.snapshot_times, s, p, "snapshot_times", o.T, 11);
    o.scheme = rd.scheme(s, p, o.scheme);
  }
  {
    const json s = section("moments");
    const std::string p = "moments";
    rd.only_keys(s, p, {"K", "T", "dt", "record_every"});
    auto& o = cfg.moments;
    o.K = static_cast<int>(rd.count(s, p, "K", static_cast<std::uint64_t>(o.K), 1));
    o.T = rd.real(s, p, "T", o.T, nonneg, "must be >= 0");
    o.dt = rd.real(s, p, "dt", o.dt, [](double x) { return x > 0.0 && x <= 0.01; }, "must lie in (0, 0.01]");
    o.record_every = rd.count(s, p, "record_every", o.record_every, 1);
  }
  {
    const json s = section("concentrate");
    const std::string p = "concentrate";
    rd.only_keys(s, p, {"tau", "sample_times", "n_list", "replicas", "eps_list", "threads", "cells", "dt", "scheme",
                        "check_discretization"});
    auto& o = cfg.concentrate;
    o.tau = rd.real(s, p, "tau", o.tau, positive, "must be > 0");
    rd.times(o.sample_times, s, p, "sample_times", o.tau, 20);
    if (s.contains("n_list")) {
      o.n_list.clear();
      for (double n : rd.reals(s, p, "n_list")) {
        if (!(n >= 2.0) || n != std::floor(n)) {
          rd.error("concentrate.n_list", "entries must be integers >= 2");
          break;
        }
        o.n_list.push_back(static_cast<std::size_t>(n));
      }
      if (o.n_list.empty()) rd.error("concentrate.n_list", "must be non-empty");
    }
    o.replicas = rd.count(s, p, "replicas", o.replicas, 1);
    o.eps_list = rd.reals(s, p, "eps_list");
    for (double e : o.eps_list)
      if (!(e > 0.0)) rd.error("concentrate.eps_list", "entries must be > 0");
    o.threads = static_cast<unsigned>(rd.count(s, p, "threads", o.threads, 1));
    o.cells = rd.count(s, p, "cells", o.cells, 2);
    o.dt = rd.real(s, p, "dt", o.dt, [](double x) { return x > 0.0 && x <= 0.1; }, "must lie in (0, 0.1]");
    o.scheme = rd.scheme(s, p, o.scheme);
    o.check_discretization = rd.boolean(s, p, "check_discretization", o.check_discretization);
  }

  if (rd.errors.empty()) {
    const std::size_t env_dim = environment_dim(cfg.kernel.environment);
    if (env_dim != 0 && env_dim != initial_dim(cfg.initial))
      rd.error("kernel.environment", "dimension differs from the initial law");
  }
  if (!rd.errors.empty()) throw ConfigError(rd.errors);
  return cfg;
}

namespace detail {

inline json to_json(const WeightLaw& law) {
  return std::visit(overloaded{
                        [](const ConstantWeight& c) { return json{{"type", "constant"}, {"omega", c.omega}}; },
                        [](const BoundedConfidence& b) {
                          return json{{"type", "bounded_confidence"}, {"omega0", b.omega0}, {"R", b.radius}};
                        },
                        [](const GaussianWeight& g) {
                          return json{{"type", "gaussian"}, {"omega0", g.omega0}, {"sigma", g.sigma}};
                        },
                        [](const WeightMixture& m) {
                          return json{{"type", "mixture"}, {"omegas", m.omegas}, {"probs", m.probs}};
                        },
                    },
                    law);
}

inline json to_json(const GridMeasure1D& g, const char* type) {
  return json{{"type", type},
              {"lo", g.lo()},
              {"hi", g.hi()},
              {"cells", std::vector<double>(g.cells().begin(), g.cells().end())}};
}

inline json to_json(const EnvironmentSpec& e) {
  return std::visit(overloaded{
                        [](const NoEnvironment&) { return json{{"type", "none"}}; },
                        [](const EnvironmentAtom& a) { return json{{"type", "atom"}, {"z", a.point}}; },
                        [](const EnvironmentUniform& u) { return json{{"type", "uniform"}, {"a", u.a}, {"b", u.b}}; },
                        [](const EnvironmentGrid& g) { return to_json(g.density(), "grid"); },
                        [](const BumpEnvironment& b) { return json{{"type", "bump"}, {"a", b.a()}, {"b", b.b()}}; },
                    },
                    e);
}

inline json to_json(const InitialLaw& law) {
  return std::visit(overloaded{
                        [](const InitialUniform& u) { return json{{"type", "uniform"}, {"a", u.a}, {"b", u.b}}; },
                        [](const InitialAtoms& a) {
                          json pts = json::array();
                          for (std::size_t i = 0; i < a.law.size(); ++i) {
                            const auto p = a.law.position(i);
                            if (a.law.dim() == 1) {
                              pts.push_back(p[0]);
                            } else {
                              pts.push_back(std::vector<double>(p.begin(), p.end()));
                            }
                          }
                          return json{{"type", "atoms"},
                                      {"points", pts},
                                      {"weights", std::vector<double>(a.law.weights().begin(), a.law.weights().end())}};
                        },
                        [](const InitialGrid& g) { return to_json(g.density, "grid"); },
                    },
                    law);
}

inline const char* scheme_name(Scheme s) { return s == Scheme::Euler ? "euler" : "rk4"; }

}  // namespace detail

/// Full JSON form of a configuration, defaults included.
inline json serialize(const RunConfig& cfg) {
  using detail::to_json;
  json j;
  j["kernel"] = {{"alpha", cfg.kernel.alpha},
                 {"internal", to_json(cfg.kernel.internal)},
                 {"external", to_json(cfg.kernel.external)},
                 {"environment", to_json(cfg.kernel.environment)}};
  j["initial"] = to_json(cfg.initial);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  const auto& s = cfg.simulate;
  j["simulate"] = {{"n", s.n},
                   {"tau", s.tau},
                   {"snapshot_times", s.snapshot_times},
                   {"symmetric", s.symmetric},
                   {"allow_self", s.allow_self}};
  const auto& m = cfg.meanfield;
  j["meanfield"] = {{"cells", m.cells},
                    {"dt", m.dt},
                    {"T", m.T},
                    {"snapshot_times", m.snapshot_times},
                    {"scheme", detail::scheme_name(m.scheme)}};
  if (m.hi > m.lo) {
    j["meanfield"]["lo"] = m.lo;
    j["meanfield"]["hi"] = m.hi;
  }
  const auto& mo = cfg.moments;
  j["moments"] = {{"K", mo.K}, {"T", mo.T}, {"dt", mo.dt}, {"record_every", mo.record_every}};
  const auto& c = cfg.concentrate;
  j["concentrate"] = {{"tau", c.tau},
                      {"sample_times", c.sample_times},
                      {"n_list", c.n_list},
                      {"replicas", c.replicas},
                      {"eps_list", c.eps_list},
                      {"threads", c.threads},
                      {"cells", c.cells},
                      {"dt", c.dt},
                      {"scheme", detail::scheme_name(c.scheme)},
                      {"check_discretization", c.check_discretization}};
  return j;
}

/// FNV-1a of the canonical (sorted-key) serialization.
inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(serialize(cfg).dump()); }

}  // namespace opdyn
