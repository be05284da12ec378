// qhx: command-line driver for the composite heat-machine experiments.

#include "qhx/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Stroke and simultaneous quantum heat machines: sweeps, equivalence orders, batteries, dephasing"};
  app.set_version_flag("--version", qhx::commands::tool_version);
  app.require_subcommand(1);

  qhx::commands::Invocation inv;
  std::string out;
  for (auto cmd : {qhx::config::Command::sweep_power, qhx::config::Command::equivalence_order,
                   qhx::config::Command::battery, qhx::config::Command::signature}) {
    auto* sub = app.add_subcommand(std::string(qhx::config::to_string(cmd)));
    sub->add_option("--config", inv.config_path, "JSON run configuration")->required();
    sub->add_option("--out", out, "Output directory (overrides output.directory)");
    sub->add_option("--threads", inv.threads, "Worker threads for independent sweep points")
        ->check(CLI::PositiveNumber)
        ->default_val(1);
    sub->callback([&inv, cmd] { inv.command = cmd; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : qhx::commands::config_error;
  }
  if (!out.empty()) inv.out_dir = out;

  std::string message;
  const int code = qhx::commands::execute(inv, &message);
  if (code != qhx::commands::success) std::cerr << "qhx: " << message << "\n";
  return code;
}
