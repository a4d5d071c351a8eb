#pragma once

// The check / design-p / run / sweep commands behind the liouctl CLI.
// Each returns the process exit code and writes human-readable output to a
// stream; file output goes under an output directory.

#include "liouctl/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace liouctl {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConditions = 2,
  kExitRuntime = 3,
};

inline std::string format_number(double x, int precision = 17) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, x);
  return buf;
}

inline std::string element_label(Eigen::Index i, Eigen::Index j, Eigen::Index n) {
  if (n <= 9) return std::to_string(i + 1) + std::to_string(j + 1);
  return std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

// ---------------------------------------------------------------------------
// check

struct ScanRow {
  double gamma = 0.0;
  RegularityReport regularity;
  ConnectednessReport connectedness;
};

struct CheckReport {
  ScanRow at_zero;
  std::vector<ScanRow> scan;
  std::optional<double> first_satisfying;  // smallest scanned gamma with i and ii
  double commutator_norm = 0.0;            // ||[P_gamma, H(gamma)]||_F at the first satisfying gamma (or 0)
  DiagonalDistinctness p_diag;             // working-basis diagonal of P at that gamma
  ExistenceMargin existence;
  double residual_control_at_target = 0.0;
  bool satisfiable = false;
};

inline ScanRow scan_point(const HamiltonianSet& sys, const ControlMask& mask, double gamma,
                          const CheckOptions& opt) {
  ScanRow row;
  row.gamma = gamma;
  const SpectralFrame f = build_frame(sys, mask, gamma);
  row.regularity = check_strong_regularity(f, opt.regularity_tol);
  row.connectedness = check_full_connectedness(f, sys.controls, opt.connectedness_tol);
  return row;
}

inline CheckReport run_check(const RunConfig& cfg) {
  const SimulationProblem& w = cfg.working;
  const auto& mask = w.controller.mask;
  CheckReport rep;
  rep.at_zero = scan_point(w.sys, mask, 0.0, cfg.check);
  const auto grid = uniform_grid(cfg.check.gamma_min, cfg.check.gamma_max, cfg.check.gamma_step);
  for (double g : grid) {
    rep.scan.push_back(scan_point(w.sys, mask, g, cfg.check));
    const auto& row = rep.scan.back();
    if (!rep.first_satisfying && row.regularity.strongly_regular &&
        row.connectedness.fully_connected) {
      rep.first_satisfying = g;
    }
  }
  const bool zero_ok = rep.at_zero.regularity.strongly_regular &&
                       rep.at_zero.connectedness.fully_connected;
  rep.satisfiable = zero_ok || rep.first_satisfying.has_value();

  const DesignedObservable obs(w.sys, mask, w.controller.p_values);
  const double g_ref = zero_ok ? 0.0 : rep.first_satisfying.value_or(0.0);
  const HermitianMatrix p = obs.P(g_ref);
  rep.commutator_norm = commutator(p.mat(), perturbed_hamiltonian(w.sys, mask, g_ref)).norm();
  rep.p_diag = check_P_diag_distinct(p, cfg.check.p_diag_tol);
  try {
    rep.existence = existence_margin(w.controller.theta, obs, grid);
  } catch (const SingularityError&) {
    // Degenerate spectrum on the grid: C is unbounded there.
    rep.existence.c_finite_difference = std::numeric_limits<double>::infinity();
    rep.existence.c_star = std::numeric_limits<double>::infinity();
    rep.existence.bound = 0.0;
    rep.existence.sup_theta_derivative = w.controller.theta.sup_derivative();
    rep.existence.satisfied = false;
  }
  rep.residual_control_at_target =
      LyapunovController(w.sys, w.controller, w.rhof).residual_control_at_target();
  return rep;
}

inline void print_scan_row(std::ostream& os, const ScanRow& row) {
  os << "gamma=" << format_number(row.gamma, 6) << "  strongly_regular="
     << (row.regularity.strongly_regular ? "yes" : "no")
     << " (min Bohr gap " << format_number(row.regularity.min_gap, 6);
  if (row.regularity.witness && !row.regularity.strongly_regular) {
    auto [a, b] = *row.regularity.witness;
    // Report the witness with positive frequencies.
    if (a.omega < 0.0) {
      std::swap(a.l, a.m);
      a.omega = -a.omega;
    }
    if (b.omega < 0.0) {
      std::swap(b.l, b.m);
      b.omega = -b.omega;
    }
    os << ": omega_" << a.l + 1 << a.m + 1 << " = omega_" << b.l + 1 << b.m + 1 << " = "
       << format_number(a.omega, 6);
  }
  os << ")  fully_connected=" << (row.connectedness.fully_connected ? "yes" : "no");
  if (row.connectedness.weakest_j >= 0) {
    os << " (weakest |H^_" << row.connectedness.weakest_j + 1 << row.connectedness.weakest_l + 1
       << "| = " << format_number(row.connectedness.weakest, 6) << ")";
  }
  os << "\n";
}

inline int cmd_check(const RunConfig& cfg, std::ostream& os) {
  const CheckReport rep = run_check(cfg);
  os << "system: N=" << cfg.working.sys.dim() << " r=" << cfg.working.sys.num_controls()
     << " working frame=" << (cfg.uses_target_frame() ? "target-diagonal" : "original")
     << " target_transform=" << to_string(cfg.transform) << "\n";
  os << "[gamma = 0] ";
  print_scan_row(os, rep.at_zero);
  os << "[scan " << format_number(cfg.check.gamma_min, 6) << ".."
     << format_number(cfg.check.gamma_max, 6) << " step " << format_number(cfg.check.gamma_step, 6)
     << "]\n";
  for (const auto& row : rep.scan) {
    os << "  ";
    print_scan_row(os, row);
  }
  if (rep.first_satisfying) {
    os << "smallest scanned gamma satisfying strong regularity and full connectedness: "
       << format_number(*rep.first_satisfying, 6) << "\n";
  } else {
    os << "no scanned gamma satisfies strong regularity and full connectedness\n";
  }
  os << "commutation: ||[P_gamma, H(gamma)]||_F = " << format_number(rep.commutator_norm, 6) << "\n";
  os << "P diagonal distinct: " << (rep.p_diag.distinct ? "yes" : "no") << " (min gap "
     << format_number(rep.p_diag.min_gap, 6) << ", off-diagonal mass "
     << format_number(rep.p_diag.offdiag_mass, 6) << ")\n";
  os << "existence bound: C=" << format_number(rep.existence.c_finite_difference, 6)
     << " (perturbative " << format_number(rep.existence.c_perturbative, 6) << ") bound 1/(2(1+C))="
     << format_number(rep.existence.bound, 6)
     << " sup|theta'|=" << format_number(rep.existence.sup_theta_derivative, 6)
     << (rep.existence.satisfied ? " satisfied" : " NOT satisfied (warning)") << "\n";
  os << "residual |v| at target (gamma = 0): " << format_number(rep.residual_control_at_target, 6)
     << "\n";
  os << "verdict: "
     << (rep.satisfiable ? "conditions satisfiable" : "degenerate and not fixed by scanned gamma")
     << "\n";
  return rep.satisfiable ? kExitOk : kExitConditions;
}

// ---------------------------------------------------------------------------
// design-p

inline int cmd_design_p(const RunConfig& cfg, std::ostream& os) {
  const SimulationProblem& w = cfg.working;
  const Eigen::Index n = w.sys.dim();
  os << "working-frame target diagonal:";
  for (Eigen::Index i = 0; i < n; ++i) os << " " << format_number(w.rhof.mat()(i, i).real(), 6);
  os << "\nP (" << (cfg.p_design.provenance == PProvenance::constructed ? "constructed" : "user-supplied")
     << "):";
  for (double v : cfg.p_design.values) os << " " << format_number(v, 6);
  os << "  min gap " << format_number(cfg.p_design.min_gap, 6) << "\n";

  const DesignedObservable obs(w.sys, w.controller.mask, w.controller.p_values);
  const ESet e = enumerate_E(w.rho0);
  os << "invariant diagonal states (permutations of rho0 spectrum): " << e.candidates.size() << "\n";
  bool pass = true;
  for (auto mode : {PermutationMode::gamma_zero, PermutationMode::gamma_solved}) {
    const bool zero = mode == PermutationMode::gamma_zero;
    try {
      const auto res = verify_min_over_permutations(obs, w.rhof, mode, &w.controller.theta);
      os << (zero ? "gamma-zero  " : "gamma-solved") << ": V(target)="
         << format_number(res.target_value, 8) << " worst margin="
         << format_number(res.worst_margin, 8) << " over " << res.candidates << " permutations";
      if (!res.worst_permutation.empty()) {
        os << " (worst permutation";
        for (int i : res.worst_permutation) os << " " << i + 1;
        os << ")";
      }
      os << (res.pass ? " PASS" : " FAIL") << "\n";
      if (zero) pass = res.pass;
    } catch (const Error& ex) {
      os << (zero ? "gamma-zero  " : "gamma-solved") << ": error: " << ex.what() << "\n";
      if (zero) pass = false;
    }
  }
  return pass ? kExitOk : kExitConditions;
}

// ---------------------------------------------------------------------------
// run

struct RunSummary {
  DensityMatrix final_state;  // output frame
  double transition_probability = 0.0;
  double final_V = 0.0;
  ConservationSummary conservation;
  int steps = 0;
  int max_gamma_iterations = 0;
  double max_gamma_residual = 0.0;
  int negative_theta_steps = 0;
};

inline RunSummary summarize(const RunConfig& cfg, const TrajectoryRecord& traj) {
  RunSummary s;
  s.final_state = cfg.to_output_frame(traj.final_state);
  s.transition_probability = transition_probability(traj.final_state, cfg.working.rhof);
  s.final_V = traj.lyapunov.empty() ? 0.0 : traj.lyapunov.back();
  s.conservation = conservation_report(traj);
  s.steps = traj.steps_taken;
  for (std::size_t i = 0; i < traj.gamma_iterations.size(); ++i) {
    s.max_gamma_iterations = std::max(s.max_gamma_iterations, traj.gamma_iterations[i]);
    s.max_gamma_residual = std::max(s.max_gamma_residual, traj.gamma_residuals[i]);
  }
  s.negative_theta_steps = traj.negative_theta_steps;
  return s;
}

inline std::string trajectory_header(Eigen::Index n, std::size_t r) {
  std::string h = "t";
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const std::string e = element_label(i, j, n);
      h += ",rho_" + e + "_re,rho_" + e + "_im";
    }
  }
  h += ",V,gamma";
  for (std::size_t k = 0; k < r; ++k) h += ",v_" + std::to_string(k + 1);
  for (std::size_t k = 0; k < r; ++k) h += ",u_" + std::to_string(k + 1);
  h += ",trace_err,herm_err";
  return h;
}

inline void write_trajectory_csv(std::ostream& os, const RunConfig& cfg,
                                 const TrajectoryRecord& traj) {
  const Eigen::Index n = cfg.working.sys.dim();
  const std::size_t r = cfg.working.sys.num_controls();
  const int prec = cfg.output.precision;
  os << trajectory_header(n, r) << "\n";
  for (std::size_t row = 0; row < traj.times.size(); ++row) {
    const DensityMatrix rho = cfg.to_output_frame(traj.states[row]);
    const ControlRecord& c = traj.controls[row];
    const StepConservation& cons = traj.conservation[traj.recorded_steps[row]];
    os << format_number(traj.times[row], prec);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        os << "," << format_number(rho.mat()(i, j).real(), prec) << ","
           << format_number(rho.mat()(i, j).imag(), prec);
      }
    }
    os << "," << format_number(c.V, prec) << "," << format_number(c.gamma, prec);
    for (double v : c.v) os << "," << format_number(v, prec);
    for (double u : c.u) os << "," << format_number(u, prec);
    os << "," << format_number(cons.trace_err, prec) << "," << format_number(cons.herm_err, prec)
       << "\n";
  }
}

inline void write_controls_csv(std::ostream& os, const RunConfig& cfg, const TrajectoryRecord& traj) {
  const std::size_t r = cfg.working.sys.num_controls();
  const int prec = cfg.output.precision;
  os << "t,gamma";
  for (std::size_t k = 0; k < r; ++k) os << ",v_" << k + 1;
  for (std::size_t k = 0; k < r; ++k) os << ",u_" << k + 1;
  os << ",V,Vdot_analytic,gamma_dot_analytic,gamma_residual,gamma_iterations\n";
  for (const auto& c : traj.controls) {
    os << format_number(c.t, prec) << "," << format_number(c.gamma, prec);
    for (double v : c.v) os << "," << format_number(v, prec);
    for (double u : c.u) os << "," << format_number(u, prec);
    os << "," << format_number(c.V, prec) << "," << format_number(c.vdot_analytic, prec) << ","
       << format_number(c.gamma_dot_analytic, prec) << "," << format_number(c.gamma_residual, prec)
       << "," << c.gamma_iterations << "\n";
  }
}

inline json summary_json(const RunSummary& s) {
  json j;
  const Eigen::Index n = s.final_state.dim();
  json pops = json::array();
  for (Eigen::Index i = 0; i < n; ++i) pops.push_back(s.final_state.mat()(i, i).real());
  j["final_populations"] = pops;
  json rho = json::array();
  for (Eigen::Index i = 0; i < n; ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < n; ++k) {
      row.push_back({s.final_state.mat()(i, k).real(), s.final_state.mat()(i, k).imag()});
    }
    rho.push_back(row);
  }
  j["final_rho"] = rho;
  j["transition_probability"] = s.transition_probability;
  j["final_V"] = s.final_V;
  j["max_V_increase"] = s.conservation.max_v_increase;
  j["max_trace_err"] = s.conservation.max_trace_err;
  j["max_herm_err"] = s.conservation.max_herm_err;
  j["max_spectrum_drift"] = s.conservation.max_spectrum_drift;
  j["closed_loop"] = s.conservation.closed_loop;
  j["steps"] = s.steps;
  j["max_gamma_iterations"] = s.max_gamma_iterations;
  j["max_gamma_residual"] = s.max_gamma_residual;
  j["negative_theta_steps"] = s.negative_theta_steps;
  return j;
}

inline void print_summary(std::ostream& os, const RunSummary& s) {
  const Eigen::Index n = s.final_state.dim();
  os << "summary:";
  for (Eigen::Index i = 0; i < n; ++i) {
    os << " rho_" << element_label(i, i, n) << "=" << format_number(s.final_state.mat()(i, i).real(), 8);
  }
  if (n > 1) {
    os << " rho_" << element_label(0, 1, n) << "=" << format_number(s.final_state.mat()(0, 1).real(), 8)
       << (s.final_state.mat()(0, 1).imag() < 0 ? "" : "+")
       << format_number(s.final_state.mat()(0, 1).imag(), 3) << "i";
  }
  os << " transition_probability=" << format_number(s.transition_probability, 8)
     << " max_dV=" << format_number(s.conservation.max_v_increase, 3)
     << " trace_err=" << format_number(s.conservation.max_trace_err, 3)
     << " herm_err=" << format_number(s.conservation.max_herm_err, 3)
     << " spectrum_drift=" << format_number(s.conservation.max_spectrum_drift, 3)
     << " steps=" << s.steps << "\n";
}

inline int cmd_run(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& os,
                   std::ostream& err) {
  TrajectoryRecord traj;
  try {
    traj = simulate(cfg.working);
  } catch (const SimulationError& e) {
    err << "error: simulation aborted at step " << e.step_index() << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir / cfg.output.trajectory_csv, std::ios::binary);
    write_trajectory_csv(f, cfg, traj);
  }
  {
    std::ofstream f(out_dir / cfg.output.controls_csv, std::ios::binary);
    write_controls_csv(f, cfg, traj);
  }
  const RunSummary s = summarize(cfg, traj);
  {
    std::ofstream f(out_dir / "summary.json", std::ios::binary);
    f << summary_json(s).dump(2) << "\n";
  }
  if (traj.negative_theta_steps > 0) {
    err << "warning: theta evaluated at a negative argument on " << traj.negative_theta_steps
        << " steps\n";
  }
  print_summary(os, s);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  std::vector<json> values;
  double metric = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success
};

inline double sweep_metric(const RunConfig& cfg, const TrajectoryRecord& traj, SweepMetric m) {
  if (m == SweepMetric::final_V) return traj.lyapunov.back();
  return transition_probability(traj.final_state, cfg.working.rhof);
}

inline SweepRow run_sweep_cell(const json& base, const std::vector<SweepAxis>& axes,
                               const std::vector<std::size_t>& idx, const ConfigOverrides& ov,
                               SweepMetric metric) {
  SweepRow row;
  json doc = base;
  doc.erase("sweep");
  for (std::size_t a = 0; a < axes.size(); ++a) {
    row.values.push_back(axes[a].values[idx[a]]);
  }
  try {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto ptr = config_detail::to_pointer(axes[a].path);
      if (!doc.contains(ptr)) throw ConfigError(axes[a].path, "sweep path does not exist in config");
      doc[ptr] = axes[a].values[idx[a]];
    }
    const RunConfig cell = parse_config(doc, ov);
    SimulateOptions so;
    so.diagnostics = false;
    const TrajectoryRecord traj = simulate(cell.working, so);
    row.metric = sweep_metric(cell, traj, metric);
  } catch (const std::exception& e) {
    row.metric = std::numeric_limits<double>::quiet_NaN();
    row.error = e.what();
  }
  return row;
}

/// Rows in cartesian order (last axis fastest), independent of execution order.
inline std::vector<SweepRow> run_sweep(const RunConfig& cfg, const ConfigOverrides& ov = {},
                                       unsigned workers = 0) {
  const auto& axes = cfg.sweep.axes;
  const std::size_t total = cfg.sweep.combinations();
  std::vector<std::vector<std::size_t>> cells;
  cells.reserve(total);
  for (std::size_t c = 0; c < total; ++c) {
    std::vector<std::size_t> idx(axes.size());
    std::size_t rem = c;
    for (std::size_t a = axes.size(); a-- > 0;) {
      idx[a] = rem % axes[a].values.size();
      rem /= axes[a].values.size();
    }
    cells.push_back(std::move(idx));
  }
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<SweepRow> rows(total);
  for (std::size_t start = 0; start < total; start += workers) {
    const std::size_t stop = std::min(total, start + workers);
    std::vector<std::future<SweepRow>> batch;
    for (std::size_t c = start; c < stop; ++c) {
      batch.push_back(std::async(std::launch::async, run_sweep_cell, std::cref(cfg.source),
                                 std::cref(axes), std::cref(cells[c]), std::cref(ov),
                                 cfg.sweep.metric));
    }
    for (std::size_t c = start; c < stop; ++c) rows[c] = batch[c - start].get();
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const RunConfig& cfg, const std::vector<SweepRow>& rows) {
  for (const auto& axis : cfg.sweep.axes) os << axis.path << ",";
  os << (cfg.sweep.metric == SweepMetric::final_V ? "final_V" : "transition_probability")
     << ",error\n";
  for (const auto& row : rows) {
    for (const auto& v : row.values) {
      os << (v.is_number() ? format_number(v.get<double>(), cfg.output.precision) : v.dump()) << ",";
    }
    std::string err = row.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    }
    os << format_number(row.metric, cfg.output.precision) << "," << err << "\n";
  }
}

inline int cmd_sweep(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& os,
                     const ConfigOverrides& ov = {}) {
  const auto rows = run_sweep(cfg, ov);
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "sweep.csv", std::ios::binary);
  write_sweep_csv(f, cfg, rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
  os << "sweep: " << rows.size() << " cells, " << failed << " failed; results in "
     << (out_dir / "sweep.csv").string() << "\n";
  return kExitOk;
}

}  // namespace liouctl
