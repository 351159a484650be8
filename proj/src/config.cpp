#include "spde/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "spde/error.hpp"

namespace spde {

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(ErrorCategory::Config, "key '" + std::string(key) + "': cannot parse '" +
                                    std::string(text) + "' as a number");
  }
  return value;
}

std::string_view selection_name(Selection s) {
  return s == Selection::ValElbo ? "val_elbo" : "val_rel_l2";
}

Selection parse_selection(std::string_view s) {
  if (s == "val_elbo") return Selection::ValElbo;
  if (s == "val_rel_l2") return Selection::ValRelL2;
  fail(ErrorCategory::Config, "selection_metric must be val_elbo or val_rel_l2, got '" +
                                  std::string(s) + "'");
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Key int_key(const char* name, T RunConfig::*outer, int T::*field) {
  return {name, [=](const RunConfig& c) { return std::to_string(c.*outer.*field); },
          [=](RunConfig& c, std::string_view v) { c.*outer.*field = parse_number<int>(name, v); }};
}

template <typename T>
Key real_key(const char* name, T RunConfig::*outer, double T::*field) {
  return {name, [=](const RunConfig& c) { return format_real(c.*outer.*field); },
          [=](RunConfig& c, std::string_view v) { c.*outer.*field = parse_number<double>(name, v); }};
}

const std::vector<Key>& keys() {
  using R = RunConfig;
  static const std::vector<Key> table = {
      {"profile", [](const R& c) { return c.profile; }, [](R&, std::string_view) {}},
      {"regime", [](const R& c) { return std::string(regime_name(c.sim.regime)); },
       [](R& c, std::string_view v) { c.sim.regime = parse_regime(v); }},
      int_key("N", &R::sim, &SimConfig::N),
      int_key("K", &R::sim, &SimConfig::K),
      int_key("L", &R::sim, &SimConfig::L),
      real_key("T", &R::sim, &SimConfig::T),
      int_key("M1", &R::sim, &SimConfig::M1),
      int_key("M2", &R::sim, &SimConfig::M2),
      int_key("M3", &R::sim, &SimConfig::M3),
      {"scheme", [](const R& c) { return std::string(scheme_name(c.sim.scheme)); },
       [](R& c, std::string_view v) { c.sim.scheme = parse_scheme(v); }},
      {"seed", [](const R& c) { return std::to_string(c.sim.master_seed); },
       [](R& c, std::string_view v) { c.sim.master_seed = parse_number<std::uint64_t>("seed", v); }},
      int_key("workers", &R::sim, &SimConfig::workers),
      {"noise_r", [](const R& c) { return format_real(c.sim.noise.r); },
       [](R& c, std::string_view v) { c.sim.noise.r = parse_number<double>("noise_r", v); }},
      {"noise_eps", [](const R& c) { return format_real(c.sim.noise.eps); },
       [](R& c, std::string_view v) { c.sim.noise.eps = parse_number<double>("noise_eps", v); }},
      int_key("batch_size", &R::train, &TrainConfig::batch_size),
      int_key("epochs", &R::train, &TrainConfig::epochs),
      int_key("warmup_epochs", &R::train, &TrainConfig::warmup_epochs),
      real_key("beta_z", &R::train, &TrainConfig::beta_z),
      real_key("beta_xi", &R::train, &TrainConfig::beta_xi),
      real_key("train_fraction", &R::train, &TrainConfig::train_fraction),
      real_key("val_fraction", &R::train, &TrainConfig::val_fraction),
      real_key("test_fraction", &R::train, &TrainConfig::test_fraction),
      real_key("lr_encoder", &R::train, &TrainConfig::lr_encoder),
      real_key("lr_dynamics", &R::train, &TrainConfig::lr_dynamics),
      real_key("lr_decoder", &R::train, &TrainConfig::lr_decoder),
      real_key("weight_decay", &R::train, &TrainConfig::weight_decay),
      int_key("hidden", &R::train, &TrainConfig::hidden),
      int_key("rk4_substeps", &R::train, &TrainConfig::rk4_substeps),
      real_key("decoder_log_var_offset", &R::train, &TrainConfig::decoder_log_var_offset),
      real_key("posterior_log_var_init", &R::train, &TrainConfig::posterior_log_var_init),
      int_key("encoder_freeze_epochs", &R::train, &TrainConfig::encoder_freeze_epochs),
      {"selection_metric", [](const R& c) { return std::string(selection_name(c.train.selection)); },
       [](R& c, std::string_view v) { c.train.selection = parse_selection(v); }},
      {"train_seed", [](const R& c) { return std::to_string(c.train.seed); },
       [](R& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>("train_seed", v); }},
      {"eval_samples", [](const R& c) { return std::to_string(c.eval_samples); },
       [](R& c, std::string_view v) { c.eval_samples = parse_number<int>("eval_samples", v); }},
      {"log_every", [](const R& c) { return std::to_string(c.log_every); },
       [](R& c, std::string_view v) { c.log_every = parse_number<int>("log_every", v); }},
      {"dataset", [](const R& c) { return c.dataset_path; },
       [](R& c, std::string_view v) { c.dataset_path = std::string(v); }},
      {"checkpoint", [](const R& c) { return c.checkpoint_path; },
       [](R& c, std::string_view v) { c.checkpoint_path = std::string(v); }},
      {"out", [](const R& c) { return c.out_dir; },
       [](R& c, std::string_view v) { c.out_dir = std::string(v); }},
  };
  return table;
}

const Key* find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  try {
    sim.validate();
    train.validate();
  } catch (const Error& e) {
    fail(ErrorCategory::Config, e.what());
  }
  require(sim.noise.r >= 0.0 && sim.noise.eps >= 0.0, "noise_r and noise_eps must be nonnegative",
          ErrorCategory::Config);
  require(eval_samples >= 2, "eval_samples must be at least 2", ErrorCategory::Config);
  require(log_every >= 0, "log_every must be nonnegative", ErrorCategory::Config);
}

RunConfig profile_config(std::string_view name) {
  RunConfig c;
  c.profile = std::string(name);
  if (name == "full") {
    c.sim = SimConfig::full_scale_defaults(Regime::B_DirichletHeat);
    c.sim.noise.L = c.sim.L;
    return c;
  }
  if (name == "desk") {
    c.sim = SimConfig::full_scale_defaults(Regime::B_DirichletHeat);
    c.sim.N = 4;
    c.sim.K = 8;
    c.sim.L = 4;
    c.sim.M1 = 256;
    c.sim.M2 = 50;
    c.sim.M3 = 64;
    c.sim.noise.L = c.sim.L;
    c.train.epochs = 300;
    c.eval_samples = 5000;
    return c;
  }
  fail(ErrorCategory::Config, "unknown profile '" + std::string(name) + "' (full, desk)");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg = profile_config("full");
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCategory::Config, where + "expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const Key* k = find_key(key);
    if (k == nullptr) fail(ErrorCategory::Config, where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      fail(ErrorCategory::Config, where + "duplicate key '" + std::string(key) + "'");
    }
    if (key == "profile") {
      if (seen.size() != 1) fail(ErrorCategory::Config, where + "'profile' must be the first key");
      cfg = profile_config(value);
      continue;
    }
    try {
      k->set(cfg, value);
    } catch (const Error& e) {
      fail(ErrorCategory::Config, where + e.what());
    }
  }
  // The grid size follows the regime unless set explicitly.
  if (seen.count("regime") != 0 && seen.count("M3") == 0 && cfg.profile == "full") {
    cfg.sim.M3 = default_grid_size(cfg.sim.regime);
  }
  // The forcing spectrum covers the first L modes.
  cfg.sim.noise.L = cfg.sim.L;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::Io, "cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string echo_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) {
    out += k.name;
    out += " = ";
    out += k.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace spde
