// unreduce: solve and check symmetry-reduced geodesic matching problems.
//
//   unreduce run <scenario.ini | directory> [--steps N] [--tol X] [--out-dir D] [--jobs J]
//   unreduce verify <trajectory.csv> <scenario.ini>
//
// Exit status: 0 success, 1 input error, 2 solver failure (NoConvergence),
// 3 verify found a failing check.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "scenario.hpp"

namespace fs = std::filesystem;
using namespace unreduce;
using namespace unreduce::cli;

namespace {

CliError classify(const Error& e) {
  switch (e.code()) {
    case Errc::NoConvergence:
      return {"E_NOCONV", e.what(), 2};
    case Errc::FlowNotDiffeomorphic:
    case Errc::NonFiniteState:
    case Errc::NonFiniteResidual:
    case Errc::AngleNearPi:
      return {"E_NUMERIC", e.what(), 2};
    case Errc::DimensionMismatch:
      return {"E_INCONSISTENT", e.what(), 1};
    default:
      return {"E_PARAM", e.what(), 1};
  }
}

struct Outcome {
  int status = 0;
  std::string out;
  std::string err;
};

fs::path output_dir(const Scenario& sc, const std::string& out_dir) {
  if (!out_dir.empty()) return fs::path(out_dir) / sc.name;
  if (!sc.output_dir.empty()) return sc.output_dir;
  return fs::path("out") / sc.name;
}

Outcome run_one(const std::string& path, const Overrides& ov, const std::string& out_dir) {
  Outcome o;
  std::string label = path;
  try {
    const Scenario sc = load_scenario(path, ov);
    label = sc.name;
    const fs::path dir = output_dir(sc, out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CliError("E_IO", "cannot create " + dir.string() + ": " + ec.message());
    try {
      const RunOutput result = run_scenario(sc);
      write_text((dir / "trajectory.csv").string(), result.trajectory);
      write_text((dir / "trajectory_reparam.csv").string(), result.reparameterised);
      write_text((dir / "summary.json").string(), result.summary);
      write_text((dir / "verification.json").string(), result.verification);
      o.out = sc.name + ": converged, output in " + dir.string() + "\n";
    } catch (const Error& e) {
      const CliError c = classify(e);
      if (c.exit_code() == 2) {
        for (const char* f : {"trajectory.csv", "trajectory_reparam.csv", "verification.json"}) fs::remove(dir / f, ec);
        json s{{"scenario", sc.name},
               {"kind", kind_name(sc.kind)},
               {"status", c.code() == "E_NOCONV" ? "no_convergence" : "numerical_failure"},
               {"message", c.what()}};
        write_text((dir / "summary.json").string(), to_text(s));
      }
      throw c;
    }
  } catch (const CliError& e) {
    o.status = e.exit_code();
    o.err = e.code() + ": " + label + ": " + e.what() + "\n";
  } catch (const Error& e) {
    const CliError c = classify(e);
    o.status = c.exit_code();
    o.err = c.code() + ": " + label + ": " + c.what() + "\n";
  }
  return o;
}

int run_command(const std::string& target, const Overrides& base, const std::string& out_dir, unsigned jobs) {
  std::vector<std::string> files;
  if (fs::is_directory(target)) {
    for (const auto& entry : fs::directory_iterator(target)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ini") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      std::cerr << "E_IO: no .ini scenarios in " << target << "\n";
      return 1;
    }
  } else {
    files.push_back(target);
  }

  Overrides ov = base;
  // One scenario: the workers go to the Jacobian. Several: one scenario per worker.
  ov.threads = files.size() == 1 ? jobs : 1;
  std::vector<Outcome> outcomes(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) outcomes[i] = run_one(files[i], ov, out_dir);
  };
  const unsigned pool = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(files.size())));
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < pool; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  int status = 0;
  for (const auto& o : outcomes) {
    std::cout << o.out;
    std::cerr << o.err;
    if (o.status == 1 || (o.status == 2 && status == 0)) status = o.status;
  }
  return status;
}

int verify_command(const std::string& trajectory, const std::string& scenario) {
  const Scenario sc = load_scenario(scenario, {}, false);
  const Table table = read_table(trajectory);
  ConservationReport report;
  try {
    report = verify_table(sc, table);
  } catch (const Error& e) {
    throw CliError(e.code() == Errc::DimensionMismatch ? "E_INCONSISTENT" : "E_PARAM", e.what());
  }
  std::cout << to_text(report_json(sc, report));
  return all_pass(report) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geodesic matching with a free endpoint symmetry: solve scenarios and check trajectories."};
  app.require_subcommand(1);

  std::optional<int> steps;
  std::optional<double> tol;
  std::string out_dir;
  unsigned jobs = 1;
  app.add_option("--steps", steps, "integrator steps (overrides the scenario)");
  app.add_option("--tol", tol, "solver residual tolerance (overrides the scenario)");
  app.add_option("--out-dir", out_dir, "write outputs to <out-dir>/<scenario name>");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  std::string scenario_path;
  auto* run = app.add_subcommand("run", "solve a scenario file or every .ini file of a directory");
  run->add_option("scenario", scenario_path, "scenario file or directory")->required();
  run->fallthrough();

  std::string trajectory_path;
  std::string verify_scenario;
  auto* verify = app.add_subcommand("verify", "check the invariants of a trajectory file");
  verify->add_option("trajectory", trajectory_path, "trajectory CSV")->required();
  verify->add_option("scenario", verify_scenario, "scenario file")->required();
  verify->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "E_USAGE: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*run) {
      if (steps && *steps < 10) throw CliError("E_PARAM", "--steps must be at least 10");
      if (tol && !(*tol > 0.0)) throw CliError("E_PARAM", "--tol must be positive");
      return run_command(scenario_path, {steps, tol, 1}, out_dir, jobs);
    }
    return verify_command(trajectory_path, verify_scenario);
  } catch (const CliError& e) {
    std::cerr << e.code() << ": " << e.what() << "\n";
    return e.exit_code();
  } catch (const Error& e) {
    const CliError c = classify(e);
    std::cerr << c.code() << ": " << c.what() << "\n";
    return c.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
}
