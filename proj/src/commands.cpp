#include "spde/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "spde/error.hpp"
#include "spde/file_formats.hpp"

namespace spde {

namespace {

namespace fs = std::filesystem;

// Unconditional samples are generated and reduced in chunks of this size.
constexpr int kSampleChunk = 500;

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::Io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

class Csv {
 public:
  Csv(const fs::path& path, const std::string& header) : path_(path), out_(path) {
    if (!out_) fail(ErrorCategory::Io, "cannot open '" + path.string() + "' for writing");
    out_ << header << '\n';
  }
  ~Csv() noexcept(false) {
    out_.close();
    if (!out_ && std::uncaught_exceptions() == 0) {
      fail(ErrorCategory::Io, "write error on '" + path_.string() + "'");
    }
  }
  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return real(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  fs::path path_;
  std::ofstream out_;
};

SpatialGrid grid_of(const Dataset& ds) {
  SpatialGrid grid = make_grid(ds.regime, ds.n_space());
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    if (std::abs(grid.points[i] - ds.space[i]) > 1e-12 * (1.0 + std::abs(grid.points[i]))) {
      fail(ErrorCategory::Incompatible, "dataset space points differ from the regime grid at index " +
                                            std::to_string(i));
    }
  }
  return grid;
}

/// Rows of `fields` at time index j, one per trajectory, as an S x M3 matrix.
RowMatrix snapshot_rows(const Dataset& ds, int j) {
  RowMatrix out(ds.n_trajectories(), ds.n_space());
  for (int m = 0; m < ds.n_trajectories(); ++m) out.row(m) = ds.trajectory(m).row(j);
  return out;
}

RowMatrix spectrum_matrix(const std::vector<EnergySpectrum>& per_time, bool errors) {
  const auto modes = static_cast<Eigen::Index>(per_time.front().energy.size());
  RowMatrix out(modes, static_cast<Eigen::Index>(per_time.size()));
  for (std::size_t c = 0; c < per_time.size(); ++c) {
    const auto& v = errors ? per_time[c].std_error : per_time[c].energy;
    for (Eigen::Index n = 0; n < modes; ++n) out(n, static_cast<Eigen::Index>(c)) = v[static_cast<std::size_t>(n)];
  }
  return out;
}

std::vector<double> true_q(const Dataset& ds) {
  std::vector<double> q;
  for (int l = 1; l <= ds.L; ++l) q.push_back(ds.noise.amplitude(l));
  return q;
}

void write_variance_csv(const fs::path& path, const std::vector<double>& times,
                        const std::vector<double>& model, const std::vector<double>& reference) {
  Csv csv(path, "t,model,reference");
  for (std::size_t j = 0; j < times.size(); ++j) csv.row(times[j], model[j], reference[j]);
}

void write_comparison_csv(const fs::path& path, const std::vector<double>& learned,
                          const std::vector<double>& truth) {
  Csv csv(path, "mode,learned,true,rel_error");
  for (std::size_t i = 0; i < learned.size(); ++i) {
    const double t = i < truth.size() ? truth[i] : std::nan("");
    csv.row(static_cast<int>(i + 1), learned[i], t, std::abs(learned[i] - t) / std::abs(t));
  }
}

std::string spectrum_header(const std::vector<double>& times, std::initializer_list<const char*> tags) {
  std::string h = "mode";
  for (const char* tag : tags) {
    for (double t : times) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6g", t);
      h += std::string(",") + tag + "_t" + buf;
    }
  }
  return h;
}

}  // namespace

void write_config_echo(const fs::path& dir, const RunConfig& cfg) {
  ensure_dir(dir);
  std::ofstream out(dir / "config.txt");
  if (!out) fail(ErrorCategory::Io, "cannot write config echo in '" + dir.string() + "'");
  out << echo_config(cfg);
}

Dataset cmd_simulate(const RunConfig& cfg, const fs::path& dataset_path, std::ostream& log) {
  cfg.validate();
  const Dataset ds = generate_dataset(cfg.sim);
  ensure_dir(dataset_path.parent_path());
  write_dataset(dataset_path, ds);
  {
    std::ofstream echo(dataset_path.string() + ".config");
    if (!echo) fail(ErrorCategory::Io, "cannot write config echo next to '" + dataset_path.string() + "'");
    echo << echo_config(cfg);
  }

  const SpatialBasis basis(ds.regime, ds.N);
  const RowMatrix coeffs =
      least_squares_coefficients(snapshot_rows(ds, ds.n_times() - 1), basis, ds.space);
  log << "wrote " << dataset_path.string() << ": M1=" << ds.n_trajectories()
      << " M2+1=" << ds.n_times() << " M3=" << ds.n_space() << " regime "
      << regime_name(ds.regime) << " scheme " << scheme_name(ds.scheme) << "\n";
  log << "mode,empirical_var_T,ou_var_T\n";
  const double T = ds.times.back();
  for (int n = 1; n <= ds.N; ++n) {
    RunningMoments m;
    for (Eigen::Index s = 0; s < coeffs.rows(); ++s) m.add(coeffs(s, n - 1));
    const double lam = basis.eigenvalue(n);
    const double q = n <= ds.L ? ds.noise.amplitude(n) : 0.0;
    const double theory = q * (1.0 - std::exp(-2.0 * lam * T)) / (2.0 * lam);
    log << n << "," << real(m.count() >= 2 ? m.variance() : 0.0) << "," << real(theory) << "\n";
  }
  return ds;
}

void check_compatible(const RunConfig& cfg, const Dataset& ds) {
  auto check = [](const char* field, long long want, long long got) {
    if (want != got) {
      fail(ErrorCategory::Incompatible, std::string("dataset ") + field + " = " + std::to_string(got) +
                                            " but config has " + std::to_string(want));
    }
  };
  check("regime", static_cast<long long>(cfg.sim.regime), static_cast<long long>(ds.regime));
  check("N", cfg.sim.N, ds.N);
  check("K", cfg.sim.K, ds.K);
  check("L", cfg.sim.L, ds.L);
  check("M2+1", cfg.sim.M2 + 1, ds.n_times());
  check("M3", cfg.sim.M3, ds.n_space());
}

TrainingState cmd_train(const RunConfig& cfg, const Dataset& ds, const fs::path& checkpoint_dir,
                        const TrainOptions& opts, std::ostream& log) {
  cfg.validate();
  check_compatible(cfg, ds);
  const int until = opts.until.value_or(cfg.train.epochs);
  require(until >= 0, "--until must be nonnegative");
  const fs::path last = checkpoint_dir / "last.ckpt";

  TrainingState st;
  if (opts.resume && fs::exists(last)) {
    st = load_training_state(last);
    const auto& s = st.model.shape();
    if (s.N != ds.N || s.K != ds.K || s.L != ds.L || s.regime != ds.regime ||
        s.times != ds.times || s.space != ds.space) {
      fail(ErrorCategory::Incompatible, "checkpoint '" + last.string() + "' was trained on a different mesh or truncation");
    }
    if (st.optimizer.total_epochs != cfg.train.epochs ||
        st.optimizer.warmup_epochs != cfg.train.warmup_epochs) {
      fail(ErrorCategory::Incompatible, "checkpoint '" + last.string() + "' has a different epoch schedule");
    }
    log << "resuming at epoch " << st.next_epoch << "\n";
  } else {
    st = start_training(ds, cfg.train);
  }

  const int every = cfg.log_every;
  train_epochs(st, ds, cfg.train, until, [&](const TrainingState&, const EpochRecord& r) {
    if (every > 0 && (r.epoch % every == 0 || r.epoch + 1 == cfg.train.epochs)) {
      log << "epoch " << r.epoch << " train_elbo " << real(r.train_elbo) << " val_elbo "
          << real(r.val_elbo) << " lambda";
      for (double v : r.lambda) log << " " << real(v);
      log << " q";
      for (double v : r.q) log << " " << real(v);
      log << "\n";
    }
  });

  ensure_dir(checkpoint_dir);
  save_training_state(last, st);
  save_model(checkpoint_dir / "best.ckpt", st.best);
  write_config_echo(checkpoint_dir, cfg);
  {
    std::string header = "epoch,train_elbo,val_elbo,val_rel_l2,lr_scale";
    for (int n = 1; n <= ds.N; ++n) header += ",lambda_" + std::to_string(n);
    for (int l = 1; l <= ds.L; ++l) header += ",q_" + std::to_string(l);
    std::ofstream out(checkpoint_dir / "train_log.csv");
    if (!out) fail(ErrorCategory::Io, "cannot write train_log.csv");
    out << header << "\n";
    for (const auto& r : st.log) {
      out << r.epoch << "," << real(r.train_elbo) << "," << real(r.val_elbo) << ","
          << real(r.val_rel_l2) << "," << real(r.lr_scale);
      for (double v : r.lambda) out << "," << real(v);
      for (double v : r.q) out << "," << real(v);
      out << "\n";
    }
  }
  log << "best epoch " << st.best_epoch << ", checkpoints in " << checkpoint_dir.string() << "\n";
  return st;
}

std::vector<int> spectrum_time_indices(int n_times) {
  require(n_times >= 2, "spectrum_time_indices: need at least two times");
  const int m2 = n_times - 1;
  std::vector<int> idx = {std::max(1, m2 / 4), std::max(1, m2 / 2), m2};
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

EvalReport evaluate(const VariationalModel& model, const Dataset& ds, const Dataset& reference,
                    const RunConfig& cfg) {
  const DataSplit split = split_indices(ds.n_trajectories(), cfg.train);
  if (split.test.empty()) {
    fail(ErrorCategory::InvalidArgument, "eval: empty test split (M1 = " +
                                             std::to_string(ds.n_trajectories()) + ")");
  }
  const SpatialGrid grid = grid_of(reference);
  const SpatialBasis basis(ds.regime, ds.N);
  const auto weights = spatial_average_weights(ds.regime, grid);

  EvalReport rep;
  rep.times = ds.times;
  std::vector<double> rel;
  std::vector<double> err;
  for (int i : split.test) {
    const auto truth = ds.trajectory(i);
    const RowMatrix pred = generate_conditional(model, truth);
    rel.push_back(rel_l2(pred, truth));
    err.push_back(rmse(pred, truth));
  }
  rep.rel_l2 = mean_std(rel);
  rep.rmse = mean_std(err);

  rep.spectrum_time_indices = spectrum_time_indices(ds.n_times());
  const auto& tj = rep.spectrum_time_indices;

  // Unconditional law of the model.
  FieldMoments moments(ds.n_times(), ds.n_space());
  std::vector<RowMatrix> model_coeffs(tj.size(), RowMatrix(cfg.eval_samples, ds.N));
  for (int first = 0; first < cfg.eval_samples; first += kSampleChunk) {
    const int count = std::min(kSampleChunk, cfg.eval_samples - first);
    const auto samples = generate_unconditional(model, count, cfg.train.seed, first);
    RowMatrix rows(count, ds.n_space());
    for (std::size_t c = 0; c < tj.size(); ++c) {
      for (int s = 0; s < count; ++s) rows.row(s) = samples[static_cast<std::size_t>(s)].row(tj[c]);
      model_coeffs[c].middleRows(first, count) = least_squares_coefficients(rows, basis, ds.space);
    }
    for (const auto& s : samples) moments.add(s);
  }
  rep.variance_curve = spatial_variance_curve(moments, weights);

  // Reference law from the trajectories of `reference`.
  FieldMoments ref_moments(reference.n_times(), reference.n_space());
  for (int m = 0; m < reference.n_trajectories(); ++m) ref_moments.add(reference.trajectory(m));
  rep.reference_variance_curve = spatial_variance_curve(ref_moments, weights);

  std::vector<EnergySpectrum> model_spec;
  std::vector<EnergySpectrum> ref_spec;
  for (std::size_t c = 0; c < tj.size(); ++c) {
    model_spec.push_back(energy_spectrum(model_coeffs[c]));
    ref_spec.push_back(energy_spectrum(
        least_squares_coefficients(snapshot_rows(reference, tj[c]), basis, reference.space)));
  }
  rep.energy_spectrum = spectrum_matrix(model_spec, false);
  rep.reference_energy_spectrum = spectrum_matrix(ref_spec, false);

  const auto dyn = model.dynamics();
  rep.lambda_learned = dyn.lambdas();
  rep.lambda_true = basis.eigenvalues();
  rep.q_learned = dyn.qs();
  rep.q_true = true_q(ds);
  rep.gamma_window_mass =
      ds.regime == Regime::A_OrnsteinUhlenbeck ? std::erf(grid.upper / std::sqrt(2.0)) : 1.0;
  return rep;
}

EvalReport cmd_eval(const RunConfig& cfg, const Dataset& ds, const fs::path& checkpoint,
                    const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  check_compatible(cfg, ds);
  const VariationalModel model = load_model(checkpoint);
  const auto& s = model.shape();
  if (s.N != ds.N || s.K != ds.K || s.L != ds.L || s.regime != ds.regime ||
      s.n_times() != ds.n_times() || s.n_space() != ds.n_space()) {
    fail(ErrorCategory::Incompatible, "checkpoint '" + checkpoint.string() + "' does not match the dataset");
  }
  const EvalReport rep = evaluate(model, ds, ds, cfg);
  ensure_dir(out_dir);
  write_config_echo(out_dir, cfg);
  const double var_err = time_averaged_relative_error(rep.variance_curve, rep.reference_variance_curve);
  {
    Csv csv(out_dir / "metrics.csv", "metric,mean,std,count");
    csv.row("rel_l2", rep.rel_l2.mean, rep.rel_l2.std, rep.rel_l2.count);
    csv.row("rmse", rep.rmse.mean, rep.rmse.std, rep.rmse.count);
    csv.row("variance_rel_error", var_err, 0.0, static_cast<std::size_t>(1));
    csv.row("gamma_window_mass", rep.gamma_window_mass, 0.0, static_cast<std::size_t>(1));
  }
  write_variance_csv(out_dir / "variance_curve.csv", rep.times, rep.variance_curve,
                     rep.reference_variance_curve);
  {
    std::vector<double> ts;
    for (int j : rep.spectrum_time_indices) ts.push_back(rep.times[static_cast<std::size_t>(j)]);
    Csv csv(out_dir / "energy_spectrum.csv", spectrum_header(ts, {"model", "reference"}));
    for (Eigen::Index n = 0; n < rep.energy_spectrum.rows(); ++n) {
      std::string line = std::to_string(n + 1);
      for (Eigen::Index c = 0; c < rep.energy_spectrum.cols(); ++c) line += "," + real(rep.energy_spectrum(n, c));
      for (Eigen::Index c = 0; c < rep.reference_energy_spectrum.cols(); ++c) {
        line += "," + real(rep.reference_energy_spectrum(n, c));
      }
      csv.row(line);
    }
  }
  write_comparison_csv(out_dir / "lambda.csv", rep.lambda_learned, rep.lambda_true);
  write_comparison_csv(out_dir / "q.csv", rep.q_learned, rep.q_true);
  log << "test rel_l2 " << real(rep.rel_l2.mean) << " +- " << real(rep.rel_l2.std) << ", rmse "
      << real(rep.rmse.mean) << " +- " << real(rep.rmse.std) << ", variance rel error "
      << real(var_err) << "\n";
  log << "lambda learned/true:";
  for (std::size_t i = 0; i < rep.lambda_learned.size(); ++i) {
    log << " " << real(rep.lambda_learned[i]) << "/" << real(rep.lambda_true[i]);
  }
  log << "\n";
  return rep;
}

Diagnostics diagnose(const Dataset& ds) {
  require(ds.n_trajectories() >= 2, "diagnose: need at least two trajectories");
  const SpatialGrid grid = grid_of(ds);
  const SpatialBasis basis(ds.regime, ds.N);
  Diagnostics d;
  d.times = ds.times;
  FieldMoments moments(ds.n_times(), ds.n_space());
  for (int m = 0; m < ds.n_trajectories(); ++m) moments.add(ds.trajectory(m));
  d.variance_curve = spatial_variance_curve(moments, spatial_average_weights(ds.regime, grid));
  d.spectrum_time_indices = spectrum_time_indices(ds.n_times());
  std::vector<EnergySpectrum> spec;
  for (int j : d.spectrum_time_indices) {
    spec.push_back(energy_spectrum(least_squares_coefficients(snapshot_rows(ds, j), basis, ds.space)));
  }
  d.energy = spectrum_matrix(spec, false);
  d.energy_se = spectrum_matrix(spec, true);
  return d;
}

Diagnostics cmd_diagnose(const Dataset& ds, const fs::path& out_dir, std::ostream& log) {
  const Diagnostics d = diagnose(ds);
  ensure_dir(out_dir);
  {
    Csv csv(out_dir / "variance_curve.csv", "t,variance");
    for (std::size_t j = 0; j < d.times.size(); ++j) csv.row(d.times[j], d.variance_curve[j]);
  }
  {
    std::vector<double> ts;
    for (int j : d.spectrum_time_indices) ts.push_back(d.times[static_cast<std::size_t>(j)]);
    Csv csv(out_dir / "energy_spectrum.csv", spectrum_header(ts, {"energy", "std_error"}));
    for (Eigen::Index n = 0; n < d.energy.rows(); ++n) {
      std::string line = std::to_string(n + 1);
      for (Eigen::Index c = 0; c < d.energy.cols(); ++c) line += "," + real(d.energy(n, c));
      for (Eigen::Index c = 0; c < d.energy_se.cols(); ++c) line += "," + real(d.energy_se(n, c));
      csv.row(line);
    }
  }
  log << "variance at T " << real(d.variance_curve.back()) << "; diagnostics in " << out_dir.string()
      << "\n";
  return d;
}

void cmd_multi_seed(const RunConfig& cfg, const Dataset& ds, std::span<const std::uint64_t> seeds,
                    const fs::path& checkpoint_dir, const fs::path& out_dir, std::ostream& log) {
  require(!seeds.empty(), "--seeds: empty seed list");
  std::vector<std::string> names = {"rel_l2", "rmse", "variance_rel_error"};
  for (int n = 1; n <= ds.N; ++n) names.push_back("lambda_" + std::to_string(n));
  for (int l = 1; l <= ds.L; ++l) names.push_back("q_" + std::to_string(l));
  std::vector<std::vector<double>> values(names.size());
  for (std::uint64_t seed : seeds) {
    RunConfig c = cfg;
    c.train.seed = seed;
    const std::string tag = "seed_" + std::to_string(seed);
    log << "== " << tag << "\n";
    (void)cmd_train(c, ds, checkpoint_dir / tag, {}, log);
    const EvalReport rep = cmd_eval(c, ds, checkpoint_dir / tag / "best.ckpt", out_dir / tag, log);
    std::size_t k = 0;
    values[k++].push_back(rep.rel_l2.mean);
    values[k++].push_back(rep.rmse.mean);
    values[k++].push_back(time_averaged_relative_error(rep.variance_curve, rep.reference_variance_curve));
    for (double v : rep.lambda_learned) values[k++].push_back(v);
    for (double v : rep.q_learned) values[k++].push_back(v);
  }
  ensure_dir(out_dir);
  Csv csv(out_dir / "seeds_summary.csv", "metric,mean,std,count");
  for (std::size_t i = 0; i < names.size(); ++i) {
    const MeanStd ms = mean_std(values[i]);
    csv.row(names[i], ms.mean, ms.std, ms.count);
  }
}

}  // namespace spde
