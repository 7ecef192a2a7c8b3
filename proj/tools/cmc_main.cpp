#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmc/error.hpp"
#include "cmc/experiments.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;

// The config file mirrors ExperimentConfig: optional "id", "seed", "scale" and
// "threads", plus experiment parameters either at top level or under "params".
cmc::ExperimentConfig load_config(const std::string& path, const std::string& id) {
  cmc::ExperimentConfig cfg;
  cfg.id = id;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw cmc::ConfigError("cannot read config file " + path);
  std::stringstream text;
  text << f.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::exception& e) {
    throw cmc::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw cmc::ConfigError("config must be a JSON object");
  try {
    nlohmann::json params = nlohmann::json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const std::string& key = it.key();
      if (key == "id" || key == "experiment") {
        if (it.value().get<std::string>() != id) throw cmc::ConfigError("config is for experiment " + it.value().get<std::string>());
      } else if (key == "seed") {
        cfg.seed = it.value().get<std::uint64_t>();
      } else if (key == "scale") {
        cfg.scale = cmc::parse_scale(it.value().get<std::string>());
      } else if (key == "threads") {
        cfg.threads = it.value().get<std::size_t>();
      } else if (key == "params") {
        if (!it.value().is_object()) throw cmc::ConfigError("params must be a JSON object");
        for (auto p = it.value().begin(); p != it.value().end(); ++p) params[p.key()] = p.value();
      } else {
        params[key] = it.value();
      }
    }
    cfg.overrides_json = params.dump();
  } catch (const nlohmann::json::exception& e) {
    throw cmc::ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed Monte Carlo experiment runner"};
  app.set_version_flag("--version", std::string(cmc::kVersion));
  app.require_subcommand(1);

  CLI::App* run = app.add_subcommand("run", "Run one experiment and write its CSV tables");
  std::string id;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string scale;
  std::size_t threads = 0;
  run->add_option("exp-id", id, "exp1 .. exp6")->required();
  run->add_option("--config", config_path, "JSON config file");
  auto* seed_opt = run->add_option("--seed", seed, "Base seed");
  run->add_option("--out", out_dir, "Output directory")->required();
  auto* scale_opt = run->add_option("--scale", scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  auto* threads_opt = run->add_option("--threads", threads, "Worker threads (0 = hardware count)");

  app.add_subcommand("list", "List experiment ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  if (app.got_subcommand("list")) {
    for (const auto& e : cmc::experiment_ids()) std::cout << e << "\n";
    return 0;
  }

  try {
    cmc::ExperimentConfig cfg = load_config(config_path, id);
    if (*seed_opt) cfg.seed = seed;
    if (*scale_opt) cfg.scale = cmc::parse_scale(scale);
    if (*threads_opt) cfg.threads = threads;
    const cmc::ExperimentOutput out = cmc::run_experiment(cfg);
    for (const auto& path : cmc::write_output(out, out_dir)) std::cout << path << "\n";
    return 0;
  } catch (const cmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const cmc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
