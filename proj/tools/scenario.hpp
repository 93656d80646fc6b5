#pragma once

// Scenario files and the run / verify pipelines behind the command line.
//
// A scenario is an INI file:
//
//   [scenario]  name, kind = so3 | se3 | curve
//   [problem]   so3:   q0, q1
//               se3:   q0, r0, q1, r1
//               curve: template, template_radius, template_center, nodes,
//                      target, target_radius, target_center, shift_nodes,
//                      planted_profile, planted_scale
//   [metric]    inertia, coupling, mass          (so3 / se3)
//   [kernel]    sigma                            (curve)
//   [solver]    steps, tol, max_iter, basis, fourier_modes
//   [output]    dir
//
// Rotations are rotation vectors; "a b c; d e f" composes exp(hat(abc)) exp(hat(def)).
// Nine numbers are read as a row-major rotation matrix.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "format.hpp"
#include "unreduce/unreduce.hpp"

namespace unreduce::cli {

enum class Kind { So3, Se3, Curve };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::So3: return "so3";
    case Kind::Se3: return "se3";
    case Kind::Curve: return "curve";
  }
  return "unknown";
}

struct Overrides {
  std::optional<int> steps;
  std::optional<double> tol;
  unsigned threads = 1;
};

struct Scenario {
  std::string name;
  std::filesystem::path file;
  Kind kind = Kind::So3;

  Mat3 q0 = Mat3::Identity();
  Mat3 q1 = Mat3::Identity();
  Vec3 r0 = Vec3::Zero();
  Vec3 r1 = Vec3::Zero();
  Mat3 inertia = Mat3::Identity();
  Vec3 coupling = Vec3::Zero();
  double mass = 1.0;

  curves::Points templ;
  curves::Points target;
  double sigma = 0.5;
  curves::NuBasis basis = curves::NuBasis::Nodewise;
  int fourier_modes = 0;
  std::optional<curves::MatchParams> planted;
  std::uint64_t seed = 0;

  int steps = 400;
  LmOptions lm;
  std::string output_dir;
};

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"scenario", {"name", "kind"}},
      {"problem",
       {"q0", "q1", "r0", "r1", "template", "template_radius", "template_center", "nodes", "target", "target_radius",
        "target_center", "shift_nodes", "planted_profile", "planted_scale"}},
      {"metric", {"inertia", "coupling", "mass"}},
      {"kernel", {"sigma"}},
      {"solver", {"steps", "tol", "max_iter", "basis", "fourier_modes"}},
      {"output", {"dir"}},
  };
  return keys;
}

inline std::vector<double> numbers(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::string cell;
  for (char c : text + " ") {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!cell.empty()) out.push_back(parse_double(cell, key));
      cell.clear();
    } else {
      cell += c;
    }
  }
  return out;
}

inline Vec3 vec3(const std::string& text, const std::string& key) {
  const auto v = numbers(text, key);
  if (v.size() != 3) throw CliError("E_PARAM", key + " needs 3 numbers");
  return {v[0], v[1], v[2]};
}

inline Mat3 rotation(const std::string& text, const std::string& key) {
  Mat3 q = Mat3::Identity();
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(';', start), text.size());
    const auto v = numbers(text.substr(start, end - start), key);
    if (v.size() == 3) {
      q = q * exp_so3(hat(Vec3(v[0], v[1], v[2]))).matrix();
    } else if (v.size() == 9 && start == 0 && end == text.size()) {
      Mat3 m;
      m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
      try {
        q = RotationMatrix(m).matrix();
      } catch (const Error&) {
        throw CliError("E_PARAM", key + " is not a rotation matrix");
      }
    } else {
      throw CliError("E_PARAM", key + " needs a rotation vector (3 numbers) or a rotation matrix (9 numbers)");
    }
    start = end + 1;
  }
  return q;
}

inline Mat3 symmetric(const std::string& text, const std::string& key) {
  const auto v = numbers(text, key);
  if (v.size() == 3) return Vec3(v[0], v[1], v[2]).asDiagonal();
  if (v.size() == 9) {
    Mat3 m;
    m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    return m;
  }
  throw CliError("E_PARAM", key + " needs 3 (diagonal) or 9 numbers");
}

inline double scalar(const ptree& tree, const std::string& key, double fallback) {
  const auto v = tree.get_optional<std::string>(key);
  return v ? parse_double(*v, key) : fallback;
}

inline int integer(const ptree& tree, const std::string& key, int fallback) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return fallback;
  const double d = parse_double(*v, key);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw CliError("E_PARAM", key + " must be an integer");
  return static_cast<int>(d);
}

inline std::string text(const ptree& tree, const std::string& key, const std::string& fallback = "") {
  return tree.get<std::string>(key, fallback);
}

inline std::uint64_t seed_from_env() {
  const char* env = std::getenv("UNREDUCE_SEED");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw CliError("E_PARAM", "UNREDUCE_SEED must be a non-negative integer");
  return v;
}

/// Uniform on [0, 1) from the top 53 bits, identical on every platform.
inline double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline curves::MatchParams planted_params(const std::string& profile, double scale, Eigen::Index n,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::ArrayXd s = periodic_grid(n).array();
  const double two_pi = 2.0 * std::numbers::pi;
  curves::MatchParams m;
  if (profile == "smooth") {
    const double wobble = 0.15 * (0.8 + 0.4 * uniform(rng));
    const double drift = 0.05 * (0.8 + 0.4 * uniform(rng));
    const double swirl = 0.03 * (0.8 + 0.4 * uniform(rng));
    m.amplitude = scale * (0.3 + wobble * (2.0 * two_pi * s).cos());
    m.nu = drift + swirl * (two_pi * s).sin();
  } else if (profile == "bulge") {
    const double centre = 0.25 + 0.1 * (uniform(rng) - 0.5);
    const Eigen::ArrayXd d = (s - centre) - (s - centre + 0.5).floor();
    m.amplitude = -scale * 0.4 * (-(d / 0.08).square()).exp();
    m.nu = Eigen::VectorXd::Zero(n);
  } else {
    throw CliError("E_PARAM", "planted_profile must be smooth or bulge");
  }
  return m;
}

inline curves::Points curve_source(const ptree& tree, const std::string& prefix, const std::filesystem::path& dir,
                                   Eigen::Index nodes) {
  const std::string src = text(tree, "problem." + prefix, "circle");
  if (src == "circle") {
    const double r = scalar(tree, "problem." + prefix + "_radius", 1.0);
    if (!(r > 0.0)) throw CliError("E_PARAM", prefix + "_radius must be positive");
    const auto c = numbers(text(tree, "problem." + prefix + "_center", "0 0"), prefix + "_center");
    if (c.size() != 2) throw CliError("E_PARAM", prefix + "_center needs 2 numbers");
    return curves::circle(nodes, r, curves::Vec2(c[0], c[1]));
  }
  const std::filesystem::path path = dir / src;
  if (!std::filesystem::exists(path)) throw CliError("E_IO", "curve file not found: " + path.string());
  try {
    return curves::read_curve_csv(path.string());
  } catch (const Error& e) {
    throw CliError("E_PARSE", e.what());
  }
}

}  // namespace detail

/// Reads and validates a scenario. The curve target is built only when
/// `with_target` is set; it is not needed to check a trajectory.
inline Scenario load_scenario(const std::string& path, const Overrides& ov = {}, bool with_target = true) {
  using namespace detail;
  if (!std::filesystem::is_regular_file(path)) throw CliError("E_IO", "scenario not found: " + path);
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw CliError("E_PARSE", e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = allowed_keys().find(section);
    if (it == allowed_keys().end() || body.data().size()) {
      throw CliError("E_PARAM", "unknown section or top-level key: " + section);
    }
    for (const auto& kv : body) {
      if (!it->second.contains(kv.first)) throw CliError("E_PARAM", "unknown key " + section + "." + kv.first);
    }
  }

  Scenario sc;
  sc.file = path;
  sc.name = text(tree, "scenario.name", std::filesystem::path(path).stem().string());
  const std::string kind = text(tree, "scenario.kind");
  if (kind == "so3") {
    sc.kind = Kind::So3;
  } else if (kind == "se3") {
    sc.kind = Kind::Se3;
  } else if (kind == "curve") {
    sc.kind = Kind::Curve;
  } else {
    throw CliError("E_PARAM", "scenario.kind must be so3, se3 or curve");
  }

  sc.steps = integer(tree, "solver.steps", 400);
  const int file_steps = sc.steps;
  if (ov.steps) sc.steps = *ov.steps;
  if (sc.steps < 10) throw CliError("E_PARAM", "steps must be at least 10");
  sc.lm.max_iter = integer(tree, "solver.max_iter", 100);
  if (sc.lm.max_iter < 1) throw CliError("E_PARAM", "max_iter must be positive");
  sc.lm.threads = ov.threads;
  const double default_tol = sc.kind == Kind::Curve ? curves::MatchOptions{}.lm.tol : LmOptions{}.tol;
  sc.lm.tol = ov.tol ? *ov.tol : scalar(tree, "solver.tol", default_tol);
  if (!(sc.lm.tol > 0.0)) throw CliError("E_PARAM", "tol must be positive");
  sc.output_dir = text(tree, "output.dir");

  if (sc.kind != Kind::Curve) {
    sc.q0 = rotation(text(tree, "problem.q0", "0 0 0"), "q0");
    sc.q1 = rotation(text(tree, "problem.q1", "0 0 0"), "q1");
    sc.inertia = symmetric(text(tree, "metric.inertia", "1 1 1"), "inertia");
    try {
      so3::Inertia check(sc.inertia);
    } catch (const Error& e) {
      throw CliError("E_PARAM", e.what());
    }
    if (sc.kind == Kind::Se3) {
      sc.r0 = vec3(text(tree, "problem.r0", "0 0 0"), "r0");
      sc.r1 = vec3(text(tree, "problem.r1", "0 0 0"), "r1");
      sc.coupling = vec3(text(tree, "metric.coupling", "0 0 0"), "coupling");
      sc.mass = scalar(tree, "metric.mass", 1.0);
      try {
        se3::Metric check(sc.inertia, sc.coupling, sc.mass);
      } catch (const Error& e) {
        throw CliError("E_PARAM", e.what());
      }
    }
    return sc;
  }

  sc.sigma = scalar(tree, "kernel.sigma", 0.5);
  if (!(sc.sigma > 0.0) || !std::isfinite(sc.sigma)) throw CliError("E_PARAM", "sigma must be positive");
  const std::string basis = text(tree, "solver.basis", "nodewise");
  if (basis == "nodewise") {
    sc.basis = curves::NuBasis::Nodewise;
  } else if (basis == "fourier") {
    sc.basis = curves::NuBasis::Fourier;
  } else {
    throw CliError("E_PARAM", "basis must be nodewise or fourier");
  }
  sc.fourier_modes = integer(tree, "solver.fourier_modes", 0);
  if (sc.fourier_modes < 0) throw CliError("E_PARAM", "fourier_modes must be non-negative");

  const int nodes = integer(tree, "problem.nodes", 32);
  if (nodes < static_cast<int>(curves::DiscreteCurve::kMinNodes)) {
    throw CliError("E_PARAM", "nodes must be at least " + std::to_string(curves::DiscreteCurve::kMinNodes));
  }
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  sc.templ = curve_source(tree, "template", dir, nodes);
  try {
    curves::DiscreteCurve check(sc.templ);
  } catch (const Error& e) {
    throw CliError("E_PARAM", std::string("template: ") + e.what());
  }
  if (!with_target) return sc;

  const Eigen::Index n = sc.templ.cols();
  const std::string target = text(tree, "problem.target", "circle");
  if (target == "shift") {
    const int k = integer(tree, "problem.shift_nodes", 1);
    sc.target.resize(2, n);
    for (Eigen::Index i = 0; i < n; ++i) sc.target.col(i) = sc.templ.col(((i + k) % n + n) % n);
  } else if (target == "planted") {
    sc.seed = seed_from_env();
    const double scale = scalar(tree, "problem.planted_scale", 1.0);
    sc.planted = planted_params(text(tree, "problem.planted_profile", "smooth"), scale, n, sc.seed);
    try {
      sc.target = curves::forward_endpoint(curves::DiscreteCurve(sc.templ), curves::GaussianKernel(sc.sigma),
                                           *sc.planted, file_steps);
    } catch (const Error& e) {
      throw CliError("E_PARAM", std::string("planted target: ") + e.what());
    }
  } else {
    sc.target = curve_source(tree, "target", dir, n);
  }
  if (sc.target.cols() != n) {
    throw CliError("E_INCONSISTENT", "template has " + std::to_string(n) + " nodes, target has " +
                                         std::to_string(sc.target.cols()));
  }
  try {
    curves::DiscreteCurve check(sc.target);
  } catch (const Error& e) {
    throw CliError("E_PARAM", std::string("target: ") + e.what());
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Trajectory tables

inline std::vector<std::string> state_columns(const Scenario& sc) {
  std::vector<std::string> cols;
  auto matrix = [&](const std::string& name) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) cols.push_back(name + "_" + std::to_string(i) + std::to_string(j));
    }
  };
  auto vector = [&](const std::string& name) {
    for (const char* c : {"x", "y", "z"}) cols.push_back(name + "_" + c);
  };
  switch (sc.kind) {
    case Kind::So3:
      matrix("Q");
      matrix("P");
      break;
    case Kind::Se3:
      matrix("Q");
      vector("r");
      matrix("P");
      vector("p");
      break;
    case Kind::Curve:
      for (const char* name : {"q", "p"}) {
        for (Eigen::Index i = 0; i < sc.templ.cols(); ++i) {
          cols.push_back(name + std::to_string(i) + "_x");
          cols.push_back(name + std::to_string(i) + "_y");
        }
      }
      break;
  }
  return cols;
}

inline std::vector<double> flat(const so3::State& s) {
  const auto a = so3::flatten(s);
  return {a.begin(), a.end()};
}
inline std::vector<double> flat(const se3::State& s) {
  const auto a = se3::flatten(s);
  return {a.begin(), a.end()};
}
inline std::vector<double> flat(const curves::State& s) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(4 * s.q.cols()));
  for (const curves::Points* m : {&s.q, &s.p}) {
    for (Eigen::Index i = 0; i < m->cols(); ++i) {
      out.push_back((*m)(0, i));
      out.push_back((*m)(1, i));
    }
  }
  return out;
}

template <class State>
Table trajectory_table(const Scenario& sc, const Trajectory<State>& traj) {
  Table t;
  t.header.push_back("t");
  for (auto& c : state_columns(sc)) t.header.push_back(std::move(c));
  for (const auto& d : traj.diagnostic_names) t.header.push_back(d);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::vector<double> row{traj.times[k]};
    for (double v : flat(traj.states[k])) row.push_back(v);
    for (double v : traj.diagnostics[k]) row.push_back(v);
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rebuilds the states of a trajectory table written by trajectory_table.
/// Diagnostic columns after the state are ignored.
template <class State, class Unflatten>
Trajectory<State> trajectory_from_table(const Scenario& sc, const Table& t, Unflatten unflatten) {
  const auto cols = state_columns(sc);
  if (t.header.size() < cols.size() + 1) {
    throw CliError("E_INCONSISTENT", "trajectory has " + std::to_string(t.header.size()) + " columns, scenario kind " +
                                         kind_name(sc.kind) + " needs at least " + std::to_string(cols.size() + 1));
  }
  if (t.header[0] != "t") throw CliError("E_INCONSISTENT", "first trajectory column must be t");
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (t.header[j + 1] != cols[j]) {
      throw CliError("E_INCONSISTENT",
                     "trajectory column " + std::to_string(j + 1) + " is " + t.header[j + 1] + ", expected " + cols[j]);
    }
  }
  if (t.rows.size() < 2) throw CliError("E_PARSE", "trajectory needs at least 2 rows");
  Trajectory<State> traj;
  for (const auto& row : t.rows) {
    traj.times.push_back(row[0]);
    traj.states.push_back(unflatten(row.data() + 1));
    traj.diagnostics.emplace_back();
  }
  return traj;
}

inline curves::State curve_unflatten(const double* v, Eigen::Index n) {
  curves::State s{curves::Points(2, n), curves::Points(2, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.q.col(i) << v[2 * i], v[2 * i + 1];
    s.p.col(i) << v[2 * (n + i)], v[2 * (n + i) + 1];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Reports

inline json report_json(const Scenario& sc, const ConservationReport& report) {
  json checks = json::array();
  for (const auto& c : report) {
    checks.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
  }
  return {{"scenario", sc.name}, {"kind", kind_name(sc.kind)}, {"checks", checks}, {"all_pass", all_pass(report)}};
}

inline json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Checks a trajectory of the original system against the scenario's metric.
inline ConservationReport verify_table(const Scenario& sc, const Table& t) {
  switch (sc.kind) {
    case Kind::So3: {
      const auto traj = trajectory_from_table<so3::State>(sc, t, [](const double* v) { return so3::unflatten(v); });
      return so3::conservation_report(traj, so3::Inertia(sc.inertia));
    }
    case Kind::Se3: {
      const auto traj = trajectory_from_table<se3::State>(sc, t, [](const double* v) { return se3::unflatten(v); });
      return se3::conservation_report(traj, se3::Metric(sc.inertia, sc.coupling, sc.mass));
    }
    case Kind::Curve: {
      const Eigen::Index n = sc.templ.cols();
      const auto traj =
          trajectory_from_table<curves::State>(sc, t, [n](const double* v) { return curve_unflatten(v, n); });
      return curves::conservation_report(traj, curves::GaussianKernel(sc.sigma));
    }
  }
  return {};
}

/// Files produced by a successful run, as text.
struct RunOutput {
  std::string trajectory;
  std::string reparameterised;
  std::string summary;
  std::string verification;
};

template <class Result>
json solver_json(const Scenario& sc, const Result& r) {
  return {{"scenario", sc.name},
          {"kind", kind_name(sc.kind)},
          {"status", "converged"},
          {"steps", sc.steps},
          {"dt", r.reconstructed.dt()},
          {"cost", r.cost},
          {"residual_norm", r.residual_norm},
          {"tolerance", sc.lm.tol},
          {"iterations", r.iterations},
          {"evaluations", r.solver.evaluations}};
}

/// Solves the scenario. Library errors propagate as unreduce::Error.
inline RunOutput run_scenario(const Scenario& sc) {
  RunOutput out;
  auto finish = [&](json summary, const auto& result) {
    const Table table = trajectory_table(sc, result.reconstructed);
    const ConservationReport report = verify_table(sc, table);
    summary["all_checks_pass"] = all_pass(report);
    out.trajectory = table_text(table);
    out.reparameterised = table_text(trajectory_table(sc, result.reparameterised));
    out.summary = to_text(summary);
    out.verification = to_text(report_json(sc, report));
  };
  switch (sc.kind) {
    case Kind::So3: {
      so3::Problem problem{RotationMatrix(sc.q0), RotationMatrix(sc.q1), so3::Inertia(sc.inertia)};
      const so3::Result r = so3::solve(problem, {sc.steps, sc.lm});
      json s = solver_json(sc, r);
      s["theta"] = r.params.theta;
      s["pi0"] = vector_json(r.params.pi0);
      finish(std::move(s), r);
      break;
    }
    case Kind::Se3: {
      se3::Problem problem{{RotationMatrix(sc.q0), sc.r0},
                           {RotationMatrix(sc.q1), sc.r1},
                           se3::Metric(sc.inertia, sc.coupling, sc.mass)};
      const se3::Result r = se3::solve(problem, {sc.steps, sc.lm});
      json s = solver_json(sc, r);
      s["alpha"] = r.params.alpha;
      s["pi0"] = vector_json(r.params.pi0);
      s["p0"] = vector_json(r.params.p0);
      finish(std::move(s), r);
      break;
    }
    case Kind::Curve: {
      curves::MatchOptions opts;
      opts.steps = sc.steps;
      opts.lm.tol = sc.lm.tol;
      opts.lm.max_iter = sc.lm.max_iter;
      opts.lm.threads = sc.lm.threads;
      opts.basis = sc.basis;
      opts.fourier_modes = sc.fourier_modes;
      const curves::GaussianKernel kernel(sc.sigma);
      const curves::Result r =
          curves::solve_matching(curves::DiscreteCurve(sc.templ), curves::DiscreteCurve(sc.target), kernel, opts);
      json s = solver_json(sc, r);
      s["nodes"] = sc.templ.cols();
      s["sigma"] = sc.sigma;
      s["endpoint_error"] = (r.reparameterised.back().q - sc.target).cwiseAbs().maxCoeff();
      s["amplitude"] = vector_json(r.params.amplitude);
      s["nu"] = vector_json(r.params.nu);
      if (sc.planted) {
        s["seed"] = sc.seed;
        s["planted_amplitude_error"] = (r.params.amplitude - sc.planted->amplitude).cwiseAbs().maxCoeff();
        s["planted_nu_error"] = (r.params.nu - sc.planted->nu).cwiseAbs().maxCoeff();
      }
      finish(std::move(s), r);
      break;
    }
  }
  return out;
}

}  // namespace unreduce::cli
