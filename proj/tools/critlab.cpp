#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "critlab/report.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw critlab::IoError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw critlab::ConfigError("config '" + path + "': " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical checks for critical loci of feedforward networks"};
  app.set_version_flag("--version", std::string(critlab::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_path;
  int jobs = 1;
  bool trace = false;
  bool emit_basis = false;
  bool falsify = false;
  bool csv = false;

  const std::map<std::string, std::string> descriptions = {
      {"verify-star", "check criticality of sampled star-locus points"},
      {"verify-core", "check the Hessian spectrum on sampled core-locus points"},
      {"spectrum", "Hessian spectrum and zero-eigenvalue bounds at one point"},
      {"fiber", "final-layer fiber quadratic, ranks, descent line and witnesses"},
      {"flow", "gradient-flow trajectories, terminal tags and basin fractions"},
      {"dims", "closed-form and counted locus dimensions over a width sweep"}};
  for (const auto& name : critlab::command_names()) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    sub->add_option("--config", config_path, "JSON config, or a previous report to re-run")->required();
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--trace", trace, "stream flow trajectories as CSV to stderr");
    sub->add_flag("--emit-basis", emit_basis, "include witness bases and terminal points");
    sub->add_flag("--falsify", falsify, "also run the negative controls");
    sub->add_option("--out", out_path, "write the report here instead of stdout");
    if (name == "dims") sub->add_flag("--csv", csv, "print the width sweep as CSV");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    nlohmann::json doc = critlab::extract_config(read_json_file(config_path));
    if (!doc.is_object()) throw critlab::ConfigError("/: expected an object");
    if (falsify || emit_basis) {
      auto& options = doc["options"];
      if (options.is_null()) options = nlohmann::json::object();
      if (falsify) options["falsify"] = true;
      if (emit_basis) options["emit_basis"] = true;
    }
    const auto base_dir = std::filesystem::path(config_path).parent_path();
    const critlab::RunConfig config = critlab::parse_config(command, doc, base_dir);

    critlab::RunContext ctx;
    ctx.jobs = jobs;
    if (trace) ctx.trace = &std::cerr;
    const critlab::Report report = critlab::run_command(config, ctx);

    const std::string text = report.to_json().dump(2) + "\n";
    if (csv) std::cout << critlab::dims_csv(critlab::dims_rows(config.dims));
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) throw critlab::IoError("cannot write report '" + out_path + "'");
      out << text;
    } else if (!csv) {
      std::cout << text;
    }
    return report.pass ? kExitPass : kExitFail;
  } catch (const critlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const critlab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
  } catch (const critlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kExitUsage;
}
