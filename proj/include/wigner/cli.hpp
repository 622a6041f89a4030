#pragma once

// Command-line front end: run built-in scenarios or .wig protocol files,
// sweep parameters, and run the cut-scaling bench. Human-readable summary on
// stderr, machine report (JSON, or CSV for sweeps) on stdout or --out.
// Exit codes: 0 success with all assertions passing, 1 assertion failure,
// 2 usage or parse errors.

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wigner/protoparse.hpp"
#include "wigner/report.hpp"
#include "wigner/scenarios.hpp"
#include "wigner/version.hpp"

namespace wigner::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertionFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

using report::AssertionResult;
using report::ReportDocument;
using scenarios::FriendPolicy;

inline constexpr double kPi = std::numbers::pi;

inline AssertionResult check_eq(std::string name, double actual, double expected, double tol) {
  return {std::move(name), expected, actual, tol, std::abs(actual - expected) <= tol};
}

inline AssertionResult check_le(std::string name, double actual, double bound, double tol) {
  return {std::move(name), bound, actual, tol, actual <= bound + tol};
}

struct RunOptions {
  FriendPolicy policy = FriendPolicy::PreMeasure;
  std::vector<double> phi;
  double alpha = kPi / 5;
  bool filter_on = true;
  bool record_path = false;
  std::size_t m = 10;
  double leak = 0.0;
  int grid_deg = 10;
  std::size_t points = 25;
  std::string agents = "WWW";
  std::string input = "mixed";
  std::uint64_t seed = meas::kDefaultSeed;
};

inline ReportDocument fr_report(const RunOptions& opt) {
  const auto r = scenarios::run_fr(opt.policy, opt.seed);
  ReportDocument doc;
  doc.scenario = "fr";
  doc.seed = opt.seed;
  doc.parameters["policy"] = meas::to_string(opt.policy);
  nlohmann::json table = nlohmann::json::object();
  for (const auto& row : r.table) table[row.wg + "," + row.ws] = row.probability;
  doc.tables["wigner_joint"] = table;
  doc.derived_quantities["p_ok_okbar"] = r.p_ok_okbar;
  doc.derived_quantities["p_wg_minus"] = r.p_wg_minus;
  doc.derived_quantities["p_ok_given_okbar"] = r.p_ok_given_okbar;
  doc.derived_quantities["p_T_and_ok"] = r.p_T_and_ok;
  doc.derived_quantities["p_ws_ok_given_record_T"] = r.p_ws_ok_given_record_T;
  if (opt.policy == FriendPolicy::PreMeasure) {
    doc.assertions.push_back(check_eq("p_ok_okbar", r.p_ok_okbar, 1.0 / 12.0, 1e-9));
    doc.assertions.push_back(check_eq("p_wg_minus", r.p_wg_minus, 1.0 / 6.0, 1e-9));
    doc.assertions.push_back(check_eq("p_ok_given_okbar", r.p_ok_given_okbar, 0.5, 1e-9));
  } else {
    doc.assertions.push_back(check_eq("p_wg_minus", r.p_wg_minus, 0.5, 1e-9));
    doc.assertions.push_back(
        check_eq("p_ws_ok_given_record_T", r.p_ws_ok_given_record_T, 0.5, 1e-9));
  }
  doc.assertions.push_back(check_eq("p_T_and_ok", r.p_T_and_ok, 0.0, 1e-12));
  return doc;
}

inline ReportDocument ghz_report(const RunOptions& opt) {
  scenarios::GHZSettings settings;
  if (!opt.phi.empty()) {
    if (opt.phi.size() != 3) throw CLI::ValidationError("--phi", "ghz needs three phases");
    settings.phi = {opt.phi[0], opt.phi[1], opt.phi[2]};
  } else {
    settings.phi = {0.0, kPi / 2, kPi / 2};
  }
  if (opt.agents.size() != 3) throw CLI::ValidationError("--agents", "need three of W|F");
  for (int m = 0; m < 3; ++m) {
    if (opt.agents[m] == 'W') {
      settings.agents[m] = scenarios::StationAgent::Wigner;
    } else if (opt.agents[m] == 'F') {
      settings.agents[m] = scenarios::StationAgent::Friend;
    } else {
      throw CLI::ValidationError("--agents", "need three of W|F");
    }
  }
  const auto r = scenarios::run_ghz(settings);
  ReportDocument doc;
  doc.scenario = "ghz";
  doc.seed = opt.seed;
  doc.parameters["phi"] = settings.phi;
  doc.parameters["agents"] = opt.agents;
  nlohmann::json table = nlohmann::json::object();
  for (const auto& o : r.joint) table[o.labels] = o.probability;
  doc.tables["joint"] = table;
  doc.derived_quantities["correlation"] = r.correlation;
  doc.derived_quantities["outside"] = r.outside;
  const double expect = std::cos(settings.phi[0] + settings.phi[1] + settings.phi[2]);
  doc.assertions.push_back(check_eq("correlation_cos_sum", r.correlation, expect, 1e-9));
  doc.assertions.push_back(check_eq("outside_mass", r.outside, 0.0, 1e-12));
  return doc;
}

inline ReportDocument counterfactual_report(const RunOptions& opt) {
  const auto constraints = scenarios::ghz_reductio_constraints();
  ReportDocument doc;
  doc.scenario = "counterfactual";
  doc.seed = opt.seed;
  const auto found = scenarios::counterfactual_search(constraints);
  doc.derived_quantities["satisfying_assignments"] = found.size();
  doc.assertions.push_back(
      check_eq("reductio_empty", static_cast<double>(found.size()), 0.0, 0.5));
  nlohmann::json drops = nlohmann::json::array();
  for (std::size_t k = 0; k < constraints.size(); ++k) {
    std::vector<scenarios::ProductConstraint> reduced;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      if (i != k) reduced.push_back(constraints[i]);
    }
    const auto partial = scenarios::counterfactual_search(reduced);
    drops.push_back(partial.size());
    doc.assertions.push_back(check_eq("drop_constraint_" + std::to_string(k) + "_count",
                                      static_cast<double>(partial.size()), 8.0, 0.5));
  }
  doc.derived_quantities["drop_one_counts"] = drops;
  return doc;
}

inline ReportDocument brukner_report(const RunOptions& opt) {
  const bool grid = opt.policy == FriendPolicy::FullMeasure;
  const auto r = scenarios::run_brukner_chsh(opt.policy, opt.grid_deg, grid);
  ReportDocument doc;
  doc.scenario = "brukner";
  doc.seed = opt.seed;
  doc.parameters["policy"] = meas::to_string(opt.policy);
  doc.parameters["grid_step_deg"] = opt.grid_deg;
  doc.derived_quantities["E_ab"] = r.e_ab;
  doc.derived_quantities["E_abp"] = r.e_abp;
  doc.derived_quantities["E_apb"] = r.e_apb;
  doc.derived_quantities["E_apbp"] = r.e_apbp;
  doc.derived_quantities["S"] = r.s_value;
  const double target =
      opt.policy == FriendPolicy::PreMeasure ? 2.0 * std::sqrt(2.0) : std::sqrt(2.0);
  doc.assertions.push_back(check_eq("chsh_value", r.s_value, target, 1e-9));
  if (r.grid_max) {
    doc.derived_quantities["grid_max"] = *r.grid_max;
    doc.assertions.push_back(check_le("grid_max_le_2", *r.grid_max, 2.0, 1e-9));
  }
  return doc;
}

inline ReportDocument eraser_report(const RunOptions& opt) {
  const double phi = opt.phi.empty() ? 0.0 : opt.phi.front();
  const auto r = scenarios::run_eraser(phi, opt.filter_on, opt.record_path, opt.points);
  ReportDocument doc;
  doc.scenario = "eraser";
  doc.seed = opt.seed;
  doc.parameters["phi"] = phi;
  doc.parameters["filter"] = opt.filter_on ? "on" : "off";
  doc.parameters["record_path"] = opt.record_path;
  doc.parameters["points"] = opt.points;
  report::SweepTable sweep;
  sweep.columns = {"phi", "p_detector1"};
  for (const auto& [x, p] : r.sweep) sweep.rows.push_back({x, p});
  doc.sweep = std::move(sweep);
  doc.derived_quantities["p_detector1"] = r.p_detector1;
  doc.derived_quantities["visibility"] = r.visibility;
  if (opt.record_path) {
    doc.assertions.push_back(check_eq("visibility", r.visibility, 0.0, 1e-12));
  } else if (opt.filter_on) {
    doc.assertions.push_back(check_eq("visibility", r.visibility, 1.0, 1e-12));
    doc.assertions.push_back(
        check_eq("p_detector1", r.p_detector1, (1.0 + std::sin(phi)) / 4.0, 1e-9));
  } else {
    doc.assertions.push_back(check_eq("visibility", r.visibility, 0.0, 1e-12));
    doc.assertions.push_back(check_eq("p_detector1", r.p_detector1, 0.5, 1e-9));
  }
  return doc;
}

inline ReportDocument cut_report(const RunOptions& opt) {
  scenarios::CutScalingConfig config;
  config.m = opt.m;
  config.leak = opt.leak;
  const auto r = scenarios::run_cut_scaling(config);
  ReportDocument doc;
  doc.scenario = "cut";
  doc.seed = opt.seed;
  doc.parameters["m"] = opt.m;
  doc.parameters["leak"] = opt.leak;
  report::SweepTable sweep;
  sweep.columns = {"phi", "p_plus"};
  for (const auto& [x, p] : r.sweep) sweep.rows.push_back({x, p});
  doc.sweep = std::move(sweep);
  doc.derived_quantities["visibility"] = r.visibility;
  doc.timings["seconds"] = r.seconds;
  const double expect = std::pow(1.0 - opt.leak, static_cast<double>(opt.m));
  doc.assertions.push_back(
      check_eq("visibility", r.visibility, expect, opt.leak > 0.0 ? 1e-10 : 1e-12));
  return doc;
}

inline ReportDocument sealed_report(const RunOptions& opt) {
  scenarios::SealedLabSetting setting;
  setting.alpha = opt.alpha;
  setting.phi = opt.phi.empty() ? kPi / 7 : opt.phi.front();
  if (opt.input == "mixed") {
    // default: unpolarized
  } else if (opt.input == "h") {
    setting.input_polarization = qcore::DensityOperator({qcore::qubit("pol")}, {1.0, 0.0, 0.0, 0.0});
  } else if (opt.input == "v") {
    setting.input_polarization = qcore::DensityOperator({qcore::qubit("pol")}, {0.0, 0.0, 0.0, 1.0});
  } else if (opt.input == "d") {
    setting.input_polarization =
        qcore::DensityOperator({qcore::qubit("pol")}, {0.5, 0.5, 0.5, 0.5});
  } else {
    throw CLI::ValidationError("--input", "expected h, v, d or mixed");
  }
  const auto r = scenarios::run_sealed_lab(setting);
  ReportDocument doc;
  doc.scenario = "sealed";
  doc.seed = opt.seed;
  doc.parameters["alpha"] = setting.alpha;
  doc.parameters["phi"] = setting.phi;
  doc.parameters["input"] = opt.input;
  doc.derived_quantities["p_exit_h"] = r.p_exit_h;
  doc.derived_quantities["p_exit_v"] = r.p_exit_v;
  doc.derived_quantities["p_no_measurement"] = r.p_no_measurement;
  doc.derived_quantities["exit_h_polarization_fidelity"] = r.exit_h_polarization_fidelity;
  doc.derived_quantities["exit_v_polarization_fidelity"] = r.exit_v_polarization_fidelity;
  doc.assertions.push_back(check_eq("p_no_measurement", r.p_no_measurement, 0.0, 1e-12));
  if (r.p_exit_h > 1e-12) {
    doc.assertions.push_back(
        check_eq("exit_h_polarization_fidelity", r.exit_h_polarization_fidelity, 1.0, 1e-12));
  }
  if (r.p_exit_v > 1e-12) {
    doc.assertions.push_back(
        check_eq("exit_v_polarization_fidelity", r.exit_v_polarization_fidelity, 1.0, 1e-12));
  }
  if (opt.input == "mixed") {
    doc.assertions.push_back(check_eq("p_exit_h", r.p_exit_h, 0.5, 1e-12));
    doc.assertions.push_back(check_eq("p_exit_v", r.p_exit_v, 0.5, 1e-12));
  } else if (opt.input == "h") {
    doc.assertions.push_back(
        check_eq("p_exit_h", r.p_exit_h, std::cos(setting.alpha) * std::cos(setting.alpha), 1e-9));
  }
  return doc;
}

inline ReportDocument concordant_report(const RunOptions& opt) {
  const auto r = scenarios::run_concordant_wigner();
  ReportDocument doc;
  doc.scenario = "concordant";
  doc.seed = opt.seed;
  nlohmann::json table = nlohmann::json::object();
  for (const auto& row : r.table) table[row.wg + "," + row.ws] = row.probability;
  doc.tables["record_vs_wigner"] = table;
  doc.derived_quantities["agreement"] = r.agreement;
  doc.derived_quantities["p_record_h"] = r.p_record_h;
  doc.assertions.push_back(check_eq("agreement", r.agreement, 1.0, 1e-12));
  return doc;
}

inline ReportDocument scenario_report(const std::string& name, const RunOptions& opt) {
  if (name == "fr") return fr_report(opt);
  if (name == "ghz") return ghz_report(opt);
  if (name == "counterfactual") return counterfactual_report(opt);
  if (name == "brukner") return brukner_report(opt);
  if (name == "eraser") return eraser_report(opt);
  if (name == "cut") return cut_report(opt);
  if (name == "sealed") return sealed_report(opt);
  if (name == "concordant") return concordant_report(opt);
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

struct WigOutcome {
  ReportDocument doc;
  std::vector<std::string> diagnostics;
  bool parse_failed = false;
};

inline WigOutcome wig_report(const std::string& path, std::uint64_t seed) {
  WigOutcome outcome;
  std::ifstream in(path);
  if (!in.good()) {
    outcome.parse_failed = true;
    outcome.diagnostics.push_back(path + ": error: cannot read file");
    return outcome;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  const auto parsed = protoparse::parse(ss.str());
  for (const auto& d : parsed.diagnostics) {
    outcome.diagnostics.push_back(protoparse::format_diagnostic(path, d));
  }
  if (!parsed.ok()) {
    outcome.parse_failed = true;
    return outcome;
  }
  const auto diags = protoparse::validate(parsed.ast);
  for (const auto& d : diags) {
    outcome.diagnostics.push_back(protoparse::format_diagnostic(path, d));
  }
  if (protoparse::has_errors(diags)) {
    outcome.parse_failed = true;
    return outcome;
  }
  const auto run = protoparse::execute(parsed.ast, seed);
  auto& doc = outcome.doc;
  const auto slash = path.find_last_of('/');
  doc.scenario = slash == std::string::npos ? path : path.substr(slash + 1);
  doc.seed = seed;
  doc.parameters["file"] = path;
  for (const auto& a : run.assertions) {
    doc.assertions.push_back({a.description, a.expected, a.actual, a.tolerance, a.passed});
  }
  return outcome;
}

inline void summarize(const ReportDocument& doc, std::ostream& err) {
  err << "scenario " << doc.scenario << ": " << doc.assertions.size() << " assertion(s)\n";
  for (const auto& a : doc.assertions) {
    err << "  [" << (a.passed ? "PASS" : "FAIL") << "] " << a.name << ": actual "
        << report::format_17g(a.actual) << ", expected " << report::format_17g(a.expected)
        << " (tol " << report::format_17g(a.tolerance) << ")\n";
  }
  for (const auto& [k, v] : doc.timings) {
    err << "  " << k << ": " << report::format_17g(v) << "\n";
  }
}

inline int finish(const ReportDocument& doc, const std::string& out_path, report::Format format,
                  std::ostream& out, std::ostream& err) {
  const std::string payload = report::emit_report(doc, format);
  if (out_path.empty()) {
    out << payload;
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f.good()) {
      err << "error: cannot write '" << out_path << "'\n";
      return kExitUsage;
    }
    f << payload;
  }
  summarize(doc, err);
  return doc.all_passed() ? kExitOk : kExitAssertionFailure;
}

}  // namespace detail

// Entry point shared by the binary and the tests.
inline int run_command(const std::vector<std::string>& args, std::ostream& out,
                       std::ostream& err) {
  CLI::App app{"wigner-lab: executable models of the quantum measurement process"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  detail::RunOptions opt;
  std::string target;
  std::string policy_str = "premeasure";
  std::string filter_str = "on";
  std::string out_path;
  std::string format_str = "json";
  bool timings = false;

  std::size_t m_min = 0, m_max = 12;
  double budget_seconds = 60.0;

  auto add_io = [&](CLI::App* cmd) {
    cmd->add_option("--seed", opt.seed, "RNG seed for sampled outcomes")->capture_default_str();
    cmd->add_option("--out", out_path, "write the machine report to this path");
    cmd->add_option("--format", format_str, "report format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    cmd->add_flag("--timings", timings, "include wall-clock timings in the report");
  };

  auto* list_cmd = app.add_subcommand("list", "list the built-in scenarios");

  auto* run_cmd = app.add_subcommand("run", "run a scenario or .wig protocol file");
  run_cmd->add_option("target", target, "scenario name or path to a .wig file")->required();
  run_cmd->add_option("--policy", policy_str, "Friend policy")
      ->check(CLI::IsMember({"premeasure", "fullmeasure"}))
      ->capture_default_str();
  run_cmd->add_option("--phi", opt.phi, "phase angle(s), comma separated")->delimiter(',');
  run_cmd->add_option("--alpha", opt.alpha, "sealed-lab polarizer angle")->capture_default_str();
  run_cmd->add_option("--filter", filter_str, "eraser polarization filter")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  run_cmd->add_flag("--record-path", opt.record_path, "eraser: add a which-path record");
  run_cmd->add_option("--m", opt.m, "Friend qubit count (cut)")->capture_default_str();
  run_cmd->add_option("--leak", opt.leak, "per-qubit dephasing strength (cut)")
      ->capture_default_str();
  run_cmd->add_option("--grid-deg", opt.grid_deg, "CHSH setting grid step in degrees")
      ->capture_default_str();
  run_cmd->add_option("--points", opt.points, "sweep point count")->capture_default_str();
  run_cmd->add_option("--agents", opt.agents, "GHZ station agents, e.g. WFF")
      ->capture_default_str();
  run_cmd->add_option("--input", opt.input, "sealed-lab input polarization (h|v|d|mixed)")
      ->capture_default_str();
  add_io(run_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "sweep a scenario parameter");
  sweep_cmd->add_option("target", target, "cut or eraser")->required();
  sweep_cmd->add_option("--m-min", m_min, "first Friend qubit count")->capture_default_str();
  sweep_cmd->add_option("--m-max", m_max, "last Friend qubit count")->capture_default_str();
  sweep_cmd->add_option("--leak", opt.leak, "per-qubit dephasing strength")
      ->capture_default_str();
  sweep_cmd->add_option("--points", opt.points, "phase points per sweep")->capture_default_str();
  sweep_cmd->add_option("--filter", filter_str, "eraser polarization filter")
      ->check(CLI::IsMember({"on", "off"}));
  add_io(sweep_cmd);

  auto* bench_cmd = app.add_subcommand("bench", "time the cut-scaling run at a given m");
  bench_cmd->add_option("--m", opt.m, "Friend qubit count")->default_val(std::size_t{20});
  bench_cmd->add_option("--leak", opt.leak, "per-qubit dephasing strength")
      ->capture_default_str();
  bench_cmd->add_option("--budget", budget_seconds, "wall-clock budget in seconds")
      ->capture_default_str();
  add_io(bench_cmd);

  std::vector<const char*> argv;
  static const std::string prog = "wigner-lab";
  argv.push_back(prog.c_str());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  opt.policy = policy_str == "fullmeasure" ? detail::FriendPolicy::FullMeasure
                                           : detail::FriendPolicy::PreMeasure;
  opt.filter_on = filter_str == "on";
  const report::Format format =
      format_str == "csv" ? report::Format::Csv : report::Format::Json;

  try {
    if (list_cmd->parsed()) {
      for (const auto& name : scenarios::scenario_names()) out << name << "\n";
      return kExitOk;
    }

    if (run_cmd->parsed()) {
      if (target.size() > 4 && target.substr(target.size() - 4) == ".wig") {
        auto outcome = detail::wig_report(target, opt.seed);
        for (const auto& d : outcome.diagnostics) err << d << "\n";
        if (outcome.parse_failed) return kExitUsage;
        outcome.doc.include_timings = timings;
        return detail::finish(outcome.doc, out_path, format, out, err);
      }
      auto doc = detail::scenario_report(target, opt);
      doc.include_timings = timings;
      return detail::finish(doc, out_path, format, out, err);
    }

    if (sweep_cmd->parsed()) {
      if (target == "cut") {
        scenarios::CutScalingConfig base;
        base.leak = opt.leak;
        const auto sweep = scenarios::run_cut_sweep(m_min, m_max, base);
        report::ReportDocument doc;
        doc.scenario = "cut-sweep";
        doc.seed = opt.seed;
        doc.parameters["m_min"] = m_min;
        doc.parameters["m_max"] = m_max;
        doc.parameters["leak"] = opt.leak;
        report::SweepTable table;
        table.columns = {"m", "p", "visibility", "seconds"};
        bool monotone = true;
        for (std::size_t i = 0; i < sweep.points.size(); ++i) {
          const auto& pt = sweep.points[i];
          table.rows.push_back(
              {static_cast<double>(pt.m), pt.leak, pt.visibility, pt.seconds});
          if (i > 0) monotone = monotone && pt.visibility <= sweep.points[i - 1].visibility + 1e-12;
        }
        doc.sweep = std::move(table);
        if (sweep.m_threshold) doc.derived_quantities["m_threshold"] = *sweep.m_threshold;
        doc.derived_quantities["threshold"] = sweep.threshold;
        doc.assertions.push_back(
            {"visibility_monotone_in_m", 1.0, monotone ? 1.0 : 0.0, 0.5, monotone});
        doc.include_timings = timings;
        return detail::finish(doc, out_path, format, out, err);
      }
      if (target == "eraser") {
        auto doc = detail::eraser_report(opt);
        doc.scenario = "eraser-sweep";
        doc.include_timings = timings;
        return detail::finish(doc, out_path, format, out, err);
      }
      err << "error: sweep target must be 'cut' or 'eraser'\n";
      return kExitUsage;
    }

    if (bench_cmd->parsed()) {
      scenarios::CutScalingConfig config;
      config.m = opt.m;
      config.leak = opt.leak;
      const auto r = scenarios::run_cut_scaling(config);
      report::ReportDocument doc;
      doc.scenario = "bench";
      doc.seed = opt.seed;
      doc.parameters["m"] = opt.m;
      doc.parameters["leak"] = opt.leak;
      doc.parameters["budget_seconds"] = budget_seconds;
      doc.derived_quantities["visibility"] = r.visibility;
      doc.timings["seconds"] = r.seconds;
      doc.include_timings = true;
      doc.assertions.push_back(detail::check_le("within_budget", r.seconds, budget_seconds, 0.0));
      doc.assertions.push_back(detail::check_eq(
          "visibility", r.visibility, std::pow(1.0 - opt.leak, static_cast<double>(opt.m)),
          opt.leak > 0.0 ? 1e-10 : 1e-12));
      return detail::finish(doc, out_path, format, out, err);
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace wigner::cli
