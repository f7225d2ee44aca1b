// Command line front end: construct, verify, sweep, export.
#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace cascade::cli;
  CLI::App app{"Finite-stage cascade construction and verification"};
  app.require_subcommand(1);
  app.allow_windows_style_options(false);

  std::string config, out, manifest, kind, report;

  auto* construct = app.add_subcommand("construct", "Build a multi-stage construction and write a manifest");
  construct->add_option("--config", config, "RunConfig JSON")->required();
  construct->add_option("--out", out, "Output directory")->required();

  auto* verify = app.add_subcommand("verify", "Run the bundled checks on a manifest");
  verify->add_option("--manifest", manifest, "Manifest JSON")->required();
  verify->add_option("--report", report, "Also write the report to this file");

  auto* sweep = app.add_subcommand("sweep", "Measure increment norms over an M or K grid");
  sweep->add_option("--config", config, "RunConfig JSON with a sweep section")->required();
  sweep->add_option("--out", out, "CSV output")->required();

  auto* exp = app.add_subcommand("export", "Write plot-ready CSV from a manifest");
  exp->add_option("--manifest", manifest, "Manifest JSON")->required();
  exp->add_option("--kind", kind, "cascade_csv or norms_csv")->required()->check(CLI::IsMember({"cascade_csv", "norms_csv"}));
  exp->add_option("--out", out, "CSV output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_invalid;
  }

  try {
    if (*construct) return cmd_construct(config, out, std::cerr);
    if (*verify)
      return cmd_verify(manifest, report.empty() ? std::nullopt : std::optional<std::filesystem::path>(report), std::cout,
                        std::cerr);
    if (*sweep) return cmd_sweep(config, out, std::cout, std::cerr);
    if (*exp) return cmd_export(manifest, kind, out, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "cascade_forge: " << e.what() << "\n";
    return exit_internal;
  }
  return exit_internal;
}
