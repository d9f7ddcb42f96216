// pacc: simulate position-biased logs, train click/conversion models, evaluate
// and run position-swap studies.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pacc/pacc.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string model = "pacc";
  std::string data;
  std::string checkpoint;
  std::vector<std::string> sets;
};

std::string output_dir(const Options& o, const pacc::RunConfig& cfg) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("PACC_OUT_DIR"); env && *env) return env;
  return cfg.out_dir;
}

pacc::RunConfig load(const Options& o) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw pacc::ConfigError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) overrides.emplace_back("run.seed", std::to_string(*o.seed));
  return pacc::load_run_config(o.config, overrides);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw pacc::ConfigError(std::string("missing required flag ") + flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-aware click/conversion models: simulate, train, eval, swap, bench"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "config file (key = value with [section] headers)");
    sub->add_option("--seed", o.seed, "top-level seed (overrides run.seed)");
    sub->add_option("--out", o.out, "output directory (overrides PACC_OUT_DIR and run.out_dir)");
    sub->add_option("--set", o.sets, "override a config key, e.g. --set train.epochs=5");
  };

  auto* simulate = app.add_subcommand("simulate", "generate synthetic logs and the true propensity table");
  common(simulate);

  auto* train = app.add_subcommand("train", "train one model on <data>/train.csv with <data>/valid.csv");
  common(train);
  train->add_option("--data", o.data, "directory written by simulate")->required();
  train->add_option("--model", o.model, "pacc | pacc-pe | naive | posfeat")
      ->check(CLI::IsMember({"pacc", "pacc-pe", "naive", "posfeat"}));

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on test data");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", o.data, "test CSV or simulate directory")->required();

  auto* swap = app.add_subcommand("swap", "position-swap study for a checkpoint");
  common(swap);
  swap->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  swap->add_option("--data", o.data, "test CSV or simulate directory")->required();

  auto* bench = app.add_subcommand("bench", "simulate, train all models and compare");
  common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto cfg = load(o);
    const std::string out = output_dir(o, cfg);
    if (simulate->parsed()) {
      const auto split = pacc::pipeline::cmd_simulate(cfg, out);
      std::cout << "wrote " << split.train.size() << '/' << split.validation.size() << '/' << split.test.size()
                << " train/valid/test impressions to " << out << '\n';
    } else if (train->parsed()) {
      require(o.data, "--data");
      const auto r = pacc::pipeline::cmd_train(cfg, o.data, pacc::parse_model_kind(o.model), out);
      std::cout << "best epoch " << r.report.best_epoch << ", checkpoint " << r.report.checkpoint_path << '\n';
    } else if (eval->parsed()) {
      pacc::pipeline::cmd_eval(cfg, o.checkpoint, o.data, out);
    } else if (swap->parsed()) {
      const auto s = pacc::pipeline::cmd_swap(cfg, o.checkpoint, o.data, out);
      std::cout << "bias score ctr " << pacc::bias_score(s.points, pacc::Task::kCtr) << ", cvr "
                << pacc::bias_score(s.points, pacc::Task::kCvr) << '\n';
    } else if (bench->parsed()) {
      pacc::pipeline::cmd_bench(cfg, out, &std::cout);
    }
  } catch (const pacc::ConfigError& e) {
    std::cerr << "pacc: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "pacc: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
