#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "voltron/cli/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kDependency = 3, kData = 4 };

int exit_code(const voltron::Error& e) {
  const std::string kind = e.kind();
  if (kind == "config") return kConfig;
  if (kind == "dependency") return kDependency;
  return kData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltron: zero-shot malware detection on API call graphs"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, mode;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  int float_bits = 0;
  app.add_option("--config", config_path, "run configuration (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "master seed, overrides the config");
  auto* out_opt = app.add_option("--out", out_dir, "output directory, overrides the config");
  auto* mode_opt =
      app.add_option("--mode", mode, "decision mode")->check(CLI::IsMember({"zero-shot", "few-shot"}));
  auto* thr_opt = app.add_option("--threshold", threshold, "zero-shot similarity threshold");
  auto* float_opt = app.add_option("--float", float_bits, "floating point width")->check(CLI::IsMember({32, 64}));
  app.fallthrough();

  const std::string all = "all";
  for (const auto& name : voltron::cli::command_names()) app.add_subcommand(name, "run the " + name + " stage");
  app.add_subcommand(all, "run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    auto doc = nlohmann::json::object();
    {
      std::ifstream in(config_path);
      if (!in) throw voltron::ConfigError("cannot read config '" + config_path + "'");
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw voltron::ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
      }
    }
    if (*seed_opt) doc["seed"] = seed;
    if (*out_opt) doc["paths"]["out"] = out_dir;
    if (*mode_opt) doc["zeroshot"]["mode"] = mode;
    if (*thr_opt) doc["zeroshot"]["threshold"] = threshold;
    if (*float_opt) doc["float"] = float_bits;
    const auto cfg = voltron::cli::config_from_json(doc);

    const std::string command = app.get_subcommands().front()->get_name();
    std::cerr << "voltron " << command << ": master seed " << cfg.seed << ", float" << cfg.float_bits << "\n";
    voltron::cli::Pipeline pipeline(cfg, std::cerr);
    if (command == all) {
      pipeline.run_all();
    } else {
      pipeline.run(command);
    }
  } catch (const voltron::Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
