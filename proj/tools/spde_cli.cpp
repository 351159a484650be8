#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spde/commands.hpp"
#include "spde/config.hpp"
#include "spde/error.hpp"
#include "spde/file_formats.hpp"

namespace {

using spde::ErrorCategory;

// Exit status per error category; 0 is success.
int exit_code(ErrorCategory c) { return 2 + static_cast<int>(c); }

int report(ErrorCategory c, const std::string& msg) {
  std::cerr << "error: " << spde::to_string(c) << ": " << msg << "\n";
  return exit_code(c);
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const auto comma = list.find(',', pos);
    const std::string item = list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) {
      spde::fail(ErrorCategory::InvalidArgument, "--seeds: bad entry '" + item + "'");
    }
    seeds.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral chaos latent model for linear SPDEs: simulate, train, eval, diagnose"};
  app.require_subcommand(1);

  std::string config_path;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string out_dir;
  std::string seeds;
  std::string profile;
  bool resume = false;
  int until = -1;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "key = value config file");
    if (needs_config) opt->required();
    sub->add_option("--dataset", dataset_path, "dataset path (overrides config)");
    sub->add_option("--checkpoint", checkpoint_path, "checkpoint directory or file (overrides config)");
    sub->add_option("--out", out_dir, "output directory (overrides config)");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate a dataset");
  add_common(simulate, true);
  auto* train = app.add_subcommand("train", "train the latent model");
  add_common(train, true);
  train->add_option("--seeds", seeds, "comma-separated training seeds; runs train + eval per seed");
  train->add_flag("--resume", resume, "continue from <checkpoint>/last.ckpt if present");
  train->add_option("--until", until, "stop before this epoch");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, true);
  auto* diagnose = app.add_subcommand("diagnose", "reference statistics of a dataset");
  add_common(diagnose, false);
  auto* echo = app.add_subcommand("config", "print the fully resolved config");
  echo->add_option("--config", config_path, "key = value config file");
  echo->add_option("--profile", profile, "built-in profile (full, desk)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorCategory::InvalidArgument, e.what());
  }

  try {
    spde::RunConfig cfg;
    if (!config_path.empty()) cfg = spde::load_config(config_path);
    else if (!profile.empty()) cfg = spde::profile_config(profile);
    if (!dataset_path.empty()) cfg.dataset_path = dataset_path;
    if (!checkpoint_path.empty()) cfg.checkpoint_path = checkpoint_path;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (echo->parsed()) {
      std::cout << spde::echo_config(cfg);
      return 0;
    }
    if (simulate->parsed()) {
      (void)spde::cmd_simulate(cfg, cfg.dataset_path, std::cout);
      return 0;
    }
    if (diagnose->parsed()) {
      if (dataset_path.empty() && config_path.empty()) {
        return report(ErrorCategory::InvalidArgument, "diagnose needs --dataset or --config");
      }
      const spde::Dataset ds = spde::read_dataset(cfg.dataset_path);
      (void)spde::cmd_diagnose(ds, cfg.out_dir, std::cout);
      return 0;
    }
    const spde::Dataset ds = spde::read_dataset(cfg.dataset_path);
    if (train->parsed()) {
      if (!seeds.empty()) {
        const auto list = parse_seeds(seeds);
        spde::cmd_multi_seed(cfg, ds, list, cfg.checkpoint_path, cfg.out_dir, std::cout);
        return 0;
      }
      spde::TrainOptions opts;
      opts.resume = resume;
      if (until >= 0) opts.until = until;
      (void)spde::cmd_train(cfg, ds, cfg.checkpoint_path, opts, std::cout);
      return 0;
    }
    if (eval->parsed()) {
      std::filesystem::path ckpt = cfg.checkpoint_path;
      if (std::filesystem::is_directory(ckpt)) ckpt /= "best.ckpt";
      (void)spde::cmd_eval(cfg, ds, ckpt, cfg.out_dir, std::cout);
      return 0;
    }
  } catch (const spde::Error& e) {
    return report(e.category(), e.what());
  } catch (const std::exception& e) {
    return report(ErrorCategory::Io, e.what());
  }
  return 0;
}
