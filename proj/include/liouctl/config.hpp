#pragma once

// JSON run configuration: parsing, validation with field paths, and the
// problem it describes in both the original and the working (target-diagonal)
// frame.

#include "liouctl/liouville_dynamics.hpp"
#include "liouctl/p_design.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace liouctl {

using json = nlohmann::json;

class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& msg)
      : Error(path.empty() ? msg : path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class OutputFrame { original, tilde };

inline OutputFrame parse_output_frame(const std::string& s) {
  if (s == "original") return OutputFrame::original;
  if (s == "tilde") return OutputFrame::tilde;
  throw ValidationError("unknown frame '" + s + "' (expected original|tilde)");
}

struct OutputOptions {
  std::string trajectory_csv = "trajectory.csv";
  std::string controls_csv = "controls.csv";
  int precision = 17;
  OutputFrame frame = OutputFrame::original;
};

struct CheckOptions {
  double gamma_min = 0.0;
  double gamma_max = 0.2;
  double gamma_step = 0.01;
  double regularity_tol = 1e-8;
  double connectedness_tol = 1e-10;
  double p_diag_tol = 1e-8;
};

enum class SweepMetric { transition_probability, final_V };

struct SweepAxis {
  std::string path;  // e.g. "controller.K[0]"
  std::vector<json> values;
};

struct SweepSpec {
  std::vector<SweepAxis> axes;
  SweepMetric metric = SweepMetric::transition_probability;
  std::size_t cap = 10000;
  std::size_t combinations() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }
};

struct RunConfig {
  json source;                   // the parsed document, for sweeps
  SimulationProblem original;    // as given
  SimulationProblem working;     // frame the controller runs in
  std::optional<TargetFrame> target_frame;  // set when rhof is non-diagonal
  TargetTransform transform = TargetTransform::conjugate;
  PDesign p_design;
  OutputOptions output;
  CheckOptions check;
  SweepSpec sweep;
  double density_tol = kPositivityTol;

  bool uses_target_frame() const { return target_frame.has_value(); }

  DensityMatrix to_output_frame(const DensityMatrix& working_state) const {
    if (output.frame == OutputFrame::tilde || !target_frame) return working_state;
    return map_back(working_state, *target_frame);
  }
};

namespace config_detail {

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) {
      throw ConfigError(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
  }
}

inline const json& require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) throw ConfigError(path + "." + key, "missing required field");
  return obj.at(key);
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "not finite");
  return v;
}

inline double number_or(const json& obj, const std::string& path, const char* key, double dflt) {
  return obj.contains(key) ? as_number(obj.at(key), path + "." + key) : dflt;
}

inline std::string string_or(const json& obj, const std::string& path, const char* key,
                             std::string dflt) {
  if (!obj.contains(key)) return dflt;
  if (!obj.at(key).is_string()) throw ConfigError(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

inline std::vector<double> number_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

/// Row-major matrix; each entry is [re, im] or a bare real number.
inline ComplexMatrix parse_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of rows");
  const std::size_t n = j.size();
  ComplexMatrix m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != n) {
      throw ConfigError(rp, "expected a row of " + std::to_string(n) + " entries (square matrix)");
    }
    for (std::size_t c = 0; c < n; ++c) {
      const std::string ep = rp + "[" + std::to_string(c) + "]";
      const json& e = j[r][c];
      if (e.is_number()) {
        m(r, c) = cplx(as_number(e, ep), 0.0);
      } else if (e.is_array() && e.size() == 2) {
        m(r, c) = cplx(as_number(e[0], ep + "[0]"), as_number(e[1], ep + "[1]"));
      } else {
        throw ConfigError(ep, "expected [re, im] or a number");
      }
    }
  }
  return m;
}

inline HermitianMatrix parse_hermitian(const json& j, const std::string& path) {
  try {
    return HermitianMatrix(parse_matrix(j, path));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

inline DensityMatrix parse_density(const json& j, const std::string& path, double tol) {
  try {
    return validate_density(parse_matrix(j, path), tol);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

inline FeedbackShape parse_shape(const std::string& s, const std::string& path) {
  if (s == "identity") return FeedbackShape::identity;
  if (s == "odd_saturating") return FeedbackShape::odd_saturating;
  throw ConfigError(path, "unknown f_kind '" + s + "' (expected identity|odd_saturating)");
}

inline bool is_diagonal(const ComplexMatrix& m, double tol = 1e-12) {
  ComplexMatrix off = m;
  off.diagonal().setZero();
  return off.cwiseAbs().maxCoeff() <= tol;
}

/// "controller.K[0]" -> "/controller/K/0".
inline json::json_pointer to_pointer(const std::string& path) {
  std::string ptr;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      ptr += "/" + token;
      token.clear();
    }
  };
  for (char ch : path) {
    if (ch == '.' || ch == '[') {
      flush();
    } else if (ch == ']') {
      flush();
    } else {
      token += ch;
    }
  }
  flush();
  return json::json_pointer(ptr);
}

}  // namespace config_detail

struct ConfigOverrides {
  std::optional<double> dt;
  std::optional<double> duration;
  std::optional<OutputFrame> frame;
};

inline RunConfig parse_config(const json& doc, const ConfigOverrides& ov = {}) {
  using namespace config_detail;
  reject_unknown(doc, "",
                 {"system", "states", "controller", "integration", "tolerance", "output", "check",
                  "sweep", "description"});
  RunConfig cfg;
  cfg.source = doc;

  // tolerance
  const json tol = doc.value("tolerance", json::object());
  reject_unknown(tol, "tolerance", {"gamma_tol", "gamma_max_iter", "density_tol"});
  cfg.density_tol = number_or(tol, "tolerance", "density_tol", kPositivityTol);
  SolveOptions solve;
  solve.tol = number_or(tol, "tolerance", "gamma_tol", 1e-10);
  solve.max_iter = static_cast<int>(number_or(tol, "tolerance", "gamma_max_iter", 200));
  if (!(solve.tol > 0.0)) throw ConfigError("tolerance.gamma_tol", "must be > 0");
  if (solve.max_iter < 1) throw ConfigError("tolerance.gamma_max_iter", "must be >= 1");

  // system
  const json& sys = require(doc, "", "system");
  reject_unknown(sys, "system", {"H0", "Hk"});
  SimulationProblem& p = cfg.original;
  p.sys.h0 = parse_hermitian(require(sys, "system", "H0"), "system.H0");
  const json& hk = require(sys, "system", "Hk");
  if (!hk.is_array() || hk.empty()) throw ConfigError("system.Hk", "expected a non-empty list");
  for (std::size_t k = 0; k < hk.size(); ++k) {
    const std::string kp = "system.Hk[" + std::to_string(k) + "]";
    p.sys.controls.push_back(parse_hermitian(hk[k], kp));
    if (p.sys.controls.back().dim() != p.sys.h0.dim()) {
      throw ConfigError(kp, "dimension differs from H0");
    }
  }
  const Eigen::Index n = p.sys.dim();
  const std::size_t r = p.sys.num_controls();

  // states
  const json& st = require(doc, "", "states");
  reject_unknown(st, "states", {"rho0", "rhof", "target_transform"});
  p.rho0 = parse_density(require(st, "states", "rho0"), "states.rho0", cfg.density_tol);
  p.rhof = parse_density(require(st, "states", "rhof"), "states.rhof", cfg.density_tol);
  if (p.rho0.dim() != n) throw ConfigError("states.rho0", "dimension differs from H0");
  if (p.rhof.dim() != n) throw ConfigError("states.rhof", "dimension differs from H0");
  {
    const double mismatch = (spectrum(p.rho0.mat()) - spectrum(p.rhof.mat())).cwiseAbs().maxCoeff();
    if (mismatch > kSpectrumMatchTol) {
      std::ostringstream os;
      os << "spectra of rho0 and rhof differ by " << mismatch
         << " (target must be unitarily equivalent to the initial state)";
      throw ConfigError("states", os.str());
    }
  }
  try {
    cfg.transform = parse_target_transform(string_or(st, "states", "target_transform", "conjugate"));
  } catch (const ValidationError& e) {
    throw ConfigError("states.target_transform", e.what());
  }

  // controller
  const json& ct = require(doc, "", "controller");
  reject_unknown(ct, "controller",
                 {"mask", "M", "theta_kind", "gamma_star", "gamma_max", "clamp_negative", "K",
                  "f_kind", "saturation", "P", "p_design"});
  ControllerConfig& cc = p.controller;
  cc.gamma_solve = solve;
  if (ct.contains("mask")) {
    const auto m = number_list(ct.at("mask"), "controller.mask");
    for (double x : m) cc.mask.push_back(static_cast<int>(x));
  } else {
    cc.mask.assign(r, 1);
  }
  cc.theta.slope = number_or(ct, "controller", "M", 0.1);
  const std::string kind = string_or(ct, "controller", "theta_kind", "linear");
  if (kind == "linear") {
    cc.theta.kind = ThetaKind::linear;
  } else if (kind == "saturating") {
    cc.theta.kind = ThetaKind::saturating;
  } else {
    throw ConfigError("controller.theta_kind", "unknown kind '" + kind + "'");
  }
  cc.theta.gamma_star = number_or(ct, "controller", "gamma_star", 0.2);
  cc.theta.gamma_max = number_or(ct, "controller", "gamma_max", 1.0);
  if (ct.contains("clamp_negative")) {
    if (!ct.at("clamp_negative").is_boolean()) {
      throw ConfigError("controller.clamp_negative", "expected a boolean");
    }
    cc.theta.clamp_negative = ct.at("clamp_negative").get<bool>();
  }
  cc.gains = number_list(require(ct, "controller", "K"), "controller.K");
  if (ct.contains("f_kind") && ct.at("f_kind").is_array()) {
    for (std::size_t k = 0; k < ct.at("f_kind").size(); ++k) {
      const std::string kp = "controller.f_kind[" + std::to_string(k) + "]";
      if (!ct.at("f_kind")[k].is_string()) throw ConfigError(kp, "expected a string");
      cc.shapes.push_back(parse_shape(ct.at("f_kind")[k].get<std::string>(), kp));
    }
  } else {
    const auto s = parse_shape(string_or(ct, "controller", "f_kind", "identity"), "controller.f_kind");
    cc.shapes.assign(r, s);
  }
  cc.saturation = number_or(ct, "controller", "saturation", 1.0);

  // integration
  const json integ = doc.value("integration", json::object());
  reject_unknown(integ, "integration", {"dt", "duration", "record_stride", "early_stop"});
  p.dt = ov.dt.value_or(number_or(integ, "integration", "dt", 0.01));
  p.duration = ov.duration.value_or(number_or(integ, "integration", "duration", 30.0));
  p.record_stride = static_cast<int>(number_or(integ, "integration", "record_stride", 1));
  if (integ.contains("early_stop") && !integ.at("early_stop").is_null()) {
    p.early_stop = as_number(integ.at("early_stop"), "integration.early_stop");
  }
  if (!(p.dt > 0.0)) throw ConfigError("integration.dt", "must be > 0");
  if (!(p.duration >= 0.0)) throw ConfigError("integration.duration", "must be >= 0");
  if (p.record_stride < 1) throw ConfigError("integration.record_stride", "must be >= 1");

  // Working frame.
  SimulationProblem w = p;
  if (!is_diagonal(p.rhof.mat())) {
    cfg.target_frame = diagonalize_target(p.rhof);
  }

  // P values: explicit or designed from the working-frame target.
  const json pj = ct.contains("P") ? ct.at("P") : json("auto");
  const json pd = ct.value("p_design", json::object());
  reject_unknown(pd, "controller.p_design", {"min_gap", "base"});
  const double min_gap = number_or(pd, "controller.p_design", "min_gap", 0.5);
  const double base = number_or(pd, "controller.p_design", "base", 0.01);
  const DensityMatrix& target_w = cfg.target_frame ? cfg.target_frame->rhof_tilde : p.rhof;
  if (pj.is_string() && pj.get<std::string>() == "auto") {
    std::vector<double> diag(n);
    for (Eigen::Index i = 0; i < n; ++i) diag[i] = target_w.mat()(i, i).real();
    try {
      cfg.p_design = design_P(diag, min_gap, base);
    } catch (const Error& e) {
      throw ConfigError("controller.p_design", e.what());
    }
  } else {
    cfg.p_design.values = number_list(pj, "controller.P");
    cfg.p_design.provenance = PProvenance::user_supplied;
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cfg.p_design.values.size(); ++i)
      for (std::size_t j = i + 1; j < cfg.p_design.values.size(); ++j)
        g = std::min(g, std::abs(cfg.p_design.values[i] - cfg.p_design.values[j]));
    cfg.p_design.min_gap = g;
  }
  cc.p_values = cfg.p_design.values;

  try {
    cc.validate(r, n);
  } catch (const Error& e) {
    throw ConfigError("controller", e.what());
  }

  if (cfg.target_frame) {
    w = transform_problem(p, *cfg.target_frame, cfg.transform);
  }
  w.controller = cc;
  p.controller = cc;
  cfg.working = std::move(w);

  // output
  const json out = doc.value("output", json::object());
  reject_unknown(out, "output", {"csv", "controls_csv", "precision", "frame"});
  cfg.output.trajectory_csv = string_or(out, "output", "csv", cfg.output.trajectory_csv);
  cfg.output.controls_csv = string_or(out, "output", "controls_csv", cfg.output.controls_csv);
  cfg.output.precision = static_cast<int>(number_or(out, "output", "precision", 17));
  if (cfg.output.precision < 1 || cfg.output.precision > 17) {
    throw ConfigError("output.precision", "must be in [1, 17]");
  }
  try {
    cfg.output.frame = parse_output_frame(string_or(out, "output", "frame", "original"));
  } catch (const ValidationError& e) {
    throw ConfigError("output.frame", e.what());
  }
  if (ov.frame) cfg.output.frame = *ov.frame;

  // check
  const json chk = doc.value("check", json::object());
  reject_unknown(chk, "check",
                 {"gamma_min", "gamma_max", "gamma_step", "regularity_tol", "connectedness_tol",
                  "p_diag_tol"});
  cfg.check.gamma_min = number_or(chk, "check", "gamma_min", cfg.check.gamma_min);
  cfg.check.gamma_max = number_or(chk, "check", "gamma_max", cfg.check.gamma_max);
  cfg.check.gamma_step = number_or(chk, "check", "gamma_step", cfg.check.gamma_step);
  cfg.check.regularity_tol = number_or(chk, "check", "regularity_tol", cfg.check.regularity_tol);
  cfg.check.connectedness_tol =
      number_or(chk, "check", "connectedness_tol", cfg.check.connectedness_tol);
  cfg.check.p_diag_tol = number_or(chk, "check", "p_diag_tol", cfg.check.p_diag_tol);
  if (!(cfg.check.gamma_step > 0.0)) throw ConfigError("check.gamma_step", "must be > 0");
  if (cfg.check.gamma_max < cfg.check.gamma_min) {
    throw ConfigError("check.gamma_max", "must be >= check.gamma_min");
  }

  // sweep
  const json sw = doc.value("sweep", json::object());
  reject_unknown(sw, "sweep", {"axes", "metric", "cap"});
  if (sw.contains("axes")) {
    const json& axes = sw.at("axes");
    if (!axes.is_array()) throw ConfigError("sweep.axes", "expected an array");
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const std::string ap = "sweep.axes[" + std::to_string(a) + "]";
      reject_unknown(axes[a], ap, {"path", "values"});
      SweepAxis axis;
      const json& path = require(axes[a], ap, "path");
      if (!path.is_string()) throw ConfigError(ap + ".path", "expected a string");
      axis.path = path.get<std::string>();
      const json& vals = require(axes[a], ap, "values");
      if (!vals.is_array() || vals.empty()) {
        throw ConfigError(ap + ".values", "expected a non-empty array");
      }
      for (const auto& v : vals) axis.values.push_back(v);
      cfg.sweep.axes.push_back(std::move(axis));
    }
  }
  const std::string metric = string_or(sw, "sweep", "metric", "transition_probability");
  if (metric == "transition_probability") {
    cfg.sweep.metric = SweepMetric::transition_probability;
  } else if (metric == "final_V") {
    cfg.sweep.metric = SweepMetric::final_V;
  } else {
    throw ConfigError("sweep.metric", "unknown metric '" + metric + "'");
  }
  cfg.sweep.cap = static_cast<std::size_t>(number_or(sw, "sweep", "cap", 10000));
  if (cfg.sweep.combinations() > cfg.sweep.cap) {
    throw ConfigError("sweep", "cartesian product of axes exceeds cap");
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& text, const ConfigOverrides& ov = {}) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc, ov);
}

}  // namespace liouctl
