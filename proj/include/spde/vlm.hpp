#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "spde/diffengine.hpp"
#include "spde/propagator.hpp"
#include "spde/simulator.hpp"
#include "spde/spectral_core.hpp"
#include "spde/types.hpp"

namespace spde {

/// Diagonal Gaussian; `var` is the variance vector.
struct DiagonalGaussian {
  Vector mean;
  Vector var;
};

/// Approximate posterior q(z_t0, xi | X).
struct Posterior {
  DiagonalGaussian z0;  // N
  DiagonalGaussian xi;  // K L
};

inline constexpr double kMinPosteriorVar = 1e-8;
inline constexpr double kMaxPosteriorVar = 1e4;

/// mean + sqrt(var) * g.
[[nodiscard]] Vector reparameterize(const DiagonalGaussian& p, const Vector& g);

/// KL(p || N(0, I)) = 1/2 sum (mean^2 + var - 1 - log var).
[[nodiscard]] double gaussian_kl(const DiagonalGaussian& p);

/// Checkpoint selection criterion on the validation split.
enum class Selection { ValElbo, ValRelL2 };

struct TrainConfig {
  int batch_size = 40;
  int epochs = 2000;
  int warmup_epochs = 10;
  double beta_z = 7e-2;
  double beta_xi = 1.3;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  double lr_encoder = 1e-3;
  double lr_dynamics = 2e-2;
  double lr_decoder = 1e-3;
  double weight_decay = 1e-4;
  int hidden = 256;
  int rk4_substeps = 1;
  /// Initial decoder log-variance (uniform in space), as an offset from the log
  /// of the pooled across-trajectory training variance.
  double decoder_log_var_offset = -4.0;
  /// Initial posterior log-variance of z_t0 and xi (encoder output bias).
  double posterior_log_var_init = -4.0;
  /// Epochs at the start during which the encoder receives no gradient, so the
  /// dynamics fit the data before posterior means can absorb their misfit.
  int encoder_freeze_epochs = 40;
  Selection selection = Selection::ValElbo;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Contiguous index split of M1 trajectories: [train | val | test].
struct DataSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

[[nodiscard]] DataSplit split_indices(int n_trajectories, const TrainConfig& cfg);

/// Static description of a model: regime, truncations and observation mesh.
struct ModelShape {
  Regime regime = Regime::B_DirichletHeat;
  int N = 0;
  int K = 0;
  int L = 0;
  std::vector<double> times;
  std::vector<double> space;
  int hidden = 256;
  int rk4_substeps = 1;

  [[nodiscard]] int n_times() const { return static_cast<int>(times.size()); }
  [[nodiscard]] int n_space() const { return static_cast<int>(space.size()); }
  [[nodiscard]] int n_features() const { return n_times() * n_space(); }
  /// Encoder input width: N least-squares modal coefficients per time.
  [[nodiscard]] int n_encoder_inputs() const { return n_times() * N; }
  [[nodiscard]] int n_chaos() const { return K * L; }
  /// Encoder output width 2 (N + K L).
  [[nodiscard]] int n_outputs() const { return 2 * (N + K * L); }
};

[[nodiscard]] ModelShape shape_of(const Dataset& ds, int hidden = 256, int rk4_substeps = 1);

/// Encoder, generative parameters (lambda, q) and decoder noise, plus the
/// input normalization and the unconditional initial state.
///
/// The encoder reads the least-squares modal coefficients of each observed
/// snapshot. Output columns: [mu_z (N) | logvar_z (N) | mu_xi (KL) | logvar_xi (KL)].
class VariationalModel {
 public:
  /// Parameter slots; the order is part of the checkpoint format.
  enum Slot : int { kW1, kB1, kW2, kB2, kW3, kB3, kLambdaRaw, kQRaw, kObsLogVar, kSlotCount };
  /// Learning-rate groups.
  enum Group : int { kEncoderGroup = 0, kDynamicsGroup = 1, kDecoderGroup = 2 };

  VariationalModel() = default;
  /// Random encoder weights keyed by `seed`; lambda_n = q_l = 1; unit decoder variances.
  VariationalModel(ModelShape shape, std::uint64_t seed);

  [[nodiscard]] const ModelShape& shape() const { return shape_; }
  [[nodiscard]] LatentLayout layout() const { return {shape_.N, shape_.K, shape_.L}; }
  [[nodiscard]] std::vector<ad::Parameter>& params() { return params_; }
  [[nodiscard]] const std::vector<ad::Parameter>& params() const { return params_; }
  [[nodiscard]] ad::Parameter& param(Slot s) { return params_[static_cast<std::size_t>(s)]; }
  [[nodiscard]] const ad::Parameter& param(Slot s) const {
    return params_[static_cast<std::size_t>(s)];
  }

  [[nodiscard]] DynamicsParams dynamics() const;
  void set_dynamics(const DynamicsParams& p);
  /// exp(log-variance) per spatial location.
  [[nodiscard]] Vector obs_variance() const;

  /// Design matrix H (M3 x N), H(i, n-1) = h_n(x_i).
  [[nodiscard]] const RowMatrix& design() const { return design_; }
  [[nodiscard]] const TimeBasis& time_basis() const { return time_basis_; }

  /// Modal coefficients of B flattened observations (B x F) as B x (M2+1) N,
  /// time-major.
  [[nodiscard]] RowMatrix modal_features(const RowMatrix& observations) const;

  /// Encoder input is (c - input_mean) / input_scale over the modal features.
  RowMatrix input_mean;  // 1 x (M2+1) N
  double input_scale = 1.0;
  /// Unconditional z_t0: average posterior mean over the training split. Empty until trained.
  Vector z0_mean;

  [[nodiscard]] bool has_unconditional_state() const { return z0_mean.size() == shape_.N; }

 private:
  ModelShape shape_;
  std::vector<ad::Parameter> params_;
  RowMatrix design_;
  RowMatrix projector_;  // M3 x N, H (H^T H)^-1
  TimeBasis time_basis_{1.0, 1};
};

/// Posterior for one (M2+1) x M3 observation.
[[nodiscard]] Posterior encode(const VariationalModel& model, const Eigen::Ref<const RowMatrix>& observation);

/// Standard normal draws for a batch: z is B x N, xi is B x KL.
struct NoiseDraw {
  RowMatrix z;
  RowMatrix xi;
};

[[nodiscard]] NoiseDraw draw_noise(int batch, int N, int KL, std::uint64_t master,
                                   std::initializer_list<std::uint64_t> stream);

/// Batch objective nodes. All values are per-trajectory means over the batch.
struct ElboGraph {
  ad::Var elbo;
  ad::Var loglik;
  ad::Var kl_z;
  ad::Var kl_xi;
};

/// Records the weighted ELBO of a batch on `tape`. `observations` is B x F with
/// raw (unnormalized) flattened fields. Parameters are bound when
/// `bind_params` is set, so Tape::backward accumulates into their gradients.
[[nodiscard]] ElboGraph build_elbo_graph(ad::Tape& tape, VariationalModel& model,
                                         const RowMatrix& observations, const NoiseDraw& noise,
                                         double beta_z, double beta_xi, bool bind_params);

struct ElboTerms {
  double elbo = 0.0;
  double loglik = 0.0;
  double kl_z = 0.0;
  double kl_xi = 0.0;
};

/// Weighted ELBO of a single observation with the given noise draws.
[[nodiscard]] ElboTerms elbo(const VariationalModel& model,
                             const Eigen::Ref<const RowMatrix>& observation, const Vector& g_z,
                             const Vector& g_xi, double beta_z, double beta_xi);

/// Latent propagation without gradients. zero[j] is B x N, first[j] is 1 x (KL N)
/// in latent-layout order, for each grid time j.
struct LatentPaths {
  std::vector<RowMatrix> zero;
  std::vector<RowMatrix> first;
};

[[nodiscard]] LatentPaths propagate(const VariationalModel& model, const RowMatrix& z0);

/// Field on the mesh from row `row` of the zero-order paths and chaos coordinates `xi` (length KL).
[[nodiscard]] RowMatrix decode(const VariationalModel& model, const LatentPaths& paths, int row,
                               const Vector& xi);

enum class GenerationMode { ConditionalOnObservation, Unconditional };

/// Reconstruction from posterior means. With `use_xi` false the chaos
/// coordinates are set to zero (mean-only reconstruction).
[[nodiscard]] RowMatrix generate_conditional(const VariationalModel& model,
                                             const Eigen::Ref<const RowMatrix>& observation,
                                             bool use_xi = true);

/// Samples first .. first+count-1 from z_t0 = model.z0_mean and xi ~ N(0, I);
/// sample i is keyed by (seed, i), so chunked generation matches one pass.
[[nodiscard]] std::vector<RowMatrix> generate_unconditional(const VariationalModel& model, int count,
                                                            std::uint64_t seed, int first = 0);

/// Conditional mode reconstructs each of `observations`; unconditional mode
/// draws `count` samples keyed by `seed` and ignores `observations`.
[[nodiscard]] std::vector<RowMatrix> generate(const VariationalModel& model, GenerationMode mode,
                                              std::span<const RowMatrix> observations, int count,
                                              std::uint64_t seed);

/// Per-epoch training record.
struct EpochRecord {
  int epoch = 0;
  double train_elbo = 0.0;
  double val_elbo = 0.0;
  /// Mean conditional rel. L2 on the validation split; computed only when it drives selection.
  double val_rel_l2 = 0.0;
  double lr_scale = 0.0;
  std::vector<double> lambda;
  std::vector<double> q;
};

struct TrainingState {
  VariationalModel model;
  VariationalModel best;
  ad::OptimizerState optimizer;
  int next_epoch = 0;
  int best_epoch = -1;
  /// Best selection score so far (higher is better).
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> log;
};

/// Fresh model and optimizer for `ds`: input normalization from the training
/// split, zero output-layer weights, mu_z output bias at the least-squares
/// coefficients of the mean t0 snapshot, posterior log-variance biases at
/// cfg.posterior_log_var_init, uniform decoder log-variance from the pooled
/// training variance.
[[nodiscard]] TrainingState start_training(const Dataset& ds, const TrainConfig& cfg);

using EpochCallback = std::function<void(const TrainingState&, const EpochRecord&)>;

/// Runs epochs next_epoch .. min(until, cfg.epochs) - 1. Each epoch visits the
/// training split in a permutation keyed by (seed, epoch); batch noise is keyed
/// by (seed, epoch, batch) and validation noise by (seed, trajectory), so a
/// resumed state continues bit-exactly.
void train_epochs(TrainingState& state, const Dataset& ds, const TrainConfig& cfg, int until,
                  const EpochCallback& on_epoch = {});

/// start_training + train_epochs over all epochs; returns the final state whose
/// `best` member is the validation-best model.
[[nodiscard]] TrainingState train(const Dataset& ds, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = {});

/// Sets model.z0_mean to the average posterior mean of z_t0 over `indices`.
void fit_unconditional_state(VariationalModel& model, const Dataset& ds,
                             std::span<const int> indices);

/// Mean conditional rel. L2 over `indices`.
[[nodiscard]] double mean_rel_l2(const VariationalModel& model, const Dataset& ds,
                                 std::span<const int> indices);

/// Mean per-trajectory ELBO over `indices` with frozen per-trajectory noise.
[[nodiscard]] double mean_elbo(const VariationalModel& model, const Dataset& ds,
                               std::span<const int> indices, const TrainConfig& cfg);

}  // namespace spde
