// offset-risk <command> --config path.json [--seed N] [--out dir] [--format csv|json|svg]

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "offset_risk/harness/acceptance.hpp"
#include "offset_risk/harness/config.hpp"
#include "offset_risk/harness/experiments.hpp"
#include "offset_risk/harness/outputs.hpp"
#include "offset_risk/mirror_descent.hpp"

namespace h = offset_risk::harness;

namespace {

h::RunResult dispatch(const h::ExperimentConfig& cfg) {
  if (cfg.command == "aggregate") return h::run_aggregate(cfg);
  if (cfg.command == "complexity") return h::run_complexity(cfg);
  if (cfg.command == "concentration") return h::run_concentration(cfg);
  if (cfg.command == "mirror") return h::run_mirror(cfg);
  return h::run_verify(cfg, [](const h::CheckResult& r) {
    std::cerr << (r.passed ? "PASS " : "FAIL ") << r.id << ": " << r.detail << " (" << r.runtime_seconds << " s)\n";
  });
}

const char* describe(const std::string& command) {
  if (command == "aggregate") return "excess-risk rate of the aggregation estimators over a grid of sample sizes";
  if (command == "complexity") return "offset vs local complexity, and the sparse-class offset complexity sweep";
  if (command == "concentration") return "log-MGF and tail checks for the multiplier process supremum";
  if (command == "mirror") return "stopping-time conditions of early-stopped mirror descent";
  return "run the acceptance checks and write a manifest";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offset-condition risk bounds: experiments and acceptance checks"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string format = "csv";
  std::vector<std::string> overrides;

  for (const auto& name : h::command_names()) {
    auto* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed; overrides the config");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--format", format, "output format")
        ->check(CLI::IsMember({"csv", "json", "svg"}))
        ->capture_default_str();
    sub->add_option("--set", overrides, "override a config value, e.g. aggregate.replicates=200");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    nlohmann::json doc = h::read_json_file(config_path);
    for (const auto& o : overrides) h::apply_override(doc, o);
    if (seed) doc["seed"] = *seed;
    const auto base = std::filesystem::path(config_path).parent_path();
    const auto cfg = h::parse_config(doc, command, base.empty() ? "." : base);
    const h::Provenance prov{h::config_hash(cfg.document), cfg.seed};

    const auto result = dispatch(cfg);
    const auto written = h::emit_outputs(result, h::parse_format(format), out_dir, prov);
    for (const auto& p : written) std::cout << p.string() << "\n";
    std::cout << command << ": " << (result.passed ? "ok" : "FAILED") << "\n";
    return result.passed ? 0 : 1;
  } catch (const offset_risk::MirrorDescentDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const offset_risk::ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const h::OutputError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return 4;
  }
}
