// liouctl: check | design-p | run | sweep on a JSON configuration.

#include "liouctl/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw liouctl::ConfigError("", "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit Lyapunov control for the quantum Liouville equation"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = "out";
  std::string frame;
  double dt = 0.0;
  double duration = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--frame", frame, "Output frame")->check(CLI::IsMember({"original", "tilde"}));
    sub->add_option("--dt", dt, "Time step override");
    sub->add_option("--duration", duration, "Duration override");
  };
  auto* check = app.add_subcommand("check", "Regularity and connectedness report");
  auto* design = app.add_subcommand("design-p", "Design P and verify target minimality");
  auto* run = app.add_subcommand("run", "Closed-loop simulation");
  auto* sweep = app.add_subcommand("sweep", "Parameter sweep");
  for (auto* s : {check, design, run, sweep}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? liouctl::kExitOk : liouctl::kExitUsage;
  }

  auto* active = app.get_subcommands().front();
  liouctl::ConfigOverrides ov;
  if (active->count("--dt") > 0) ov.dt = dt;
  if (active->count("--duration") > 0) ov.duration = duration;
  if (active->count("--frame") > 0) ov.frame = liouctl::parse_output_frame(frame);

  liouctl::RunConfig cfg;
  try {
    cfg = liouctl::parse_config(read_file(config_path), ov);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return liouctl::kExitUsage;
  }

  try {
    if (active == check) return liouctl::cmd_check(cfg, std::cout);
    if (active == design) return liouctl::cmd_design_p(cfg, std::cout);
    if (active == run) return liouctl::cmd_run(cfg, out_dir, std::cout, std::cerr);
    return liouctl::cmd_sweep(cfg, out_dir, std::cout, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return liouctl::kExitRuntime;
  }
}
