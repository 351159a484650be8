#include "spde/vlm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spde/error.hpp"
#include "spde/metrics.hpp"
#include "spde/stochastics.hpp"

namespace spde {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kTrainNoiseStream = 0x74726e6eULL;
constexpr std::uint64_t kValNoiseStream = 0x76616c6eULL;
constexpr std::uint64_t kGenerateStream = 0x67656e73ULL;

using ad::Array;
using ad::Var;

void check_observation(const ModelShape& s, Eigen::Index rows, Eigen::Index cols) {
  if (rows != s.n_times() || cols != s.n_space()) {
    fail(ErrorCategory::InvalidArgument,
         "observation shape " + std::to_string(rows) + "x" + std::to_string(cols) +
             " does not match model mesh " + std::to_string(s.n_times()) + "x" +
             std::to_string(s.n_space()));
  }
}

RowMatrix flatten(const Eigen::Ref<const RowMatrix>& obs) {
  RowMatrix row(1, obs.size());
  for (Eigen::Index j = 0; j < obs.rows(); ++j) {
    row.block(0, j * obs.cols(), 1, obs.cols()) = obs.row(j);
  }
  return row;
}

RowMatrix gather_rows(const Dataset& ds, std::span<const int> idx) {
  const Eigen::Index F = static_cast<Eigen::Index>(ds.n_times()) * ds.n_space();
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), F);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto traj = ds.trajectory(idx[b]);
    out.row(static_cast<Eigen::Index>(b)) = Eigen::Map<const RowMatrix>(traj.data(), 1, F);
  }
  return out;
}

// E with E(n, a N + n) = 1: lambda (1 x N) E tiles lambda over the KL first-order blocks.
RowMatrix tiling_matrix(int N, int KL) {
  RowMatrix E = RowMatrix::Zero(N, static_cast<Eigen::Index>(KL) * N);
  for (int a = 0; a < KL; ++a) {
    for (int n = 0; n < N; ++n) E(n, static_cast<Eigen::Index>(a) * N + n) = 1.0;
  }
  return E;
}

// sqrt(q) (1 x L) M_t is the first-order forcing: M_t(l-1, a(k,l) N + l-1) = m_k(t).
RowMatrix forcing_matrix(const ModelShape& s, const TimeBasis& tb, double t) {
  const int N = s.N;
  RowMatrix M = RowMatrix::Zero(s.L, static_cast<Eigen::Index>(s.n_chaos()) * N);
  for (int k = 1; k <= s.K; ++k) {
    const double mk = tb.eval(k, t);
    for (int l = 1; l <= s.L; ++l) {
      const int a = (k - 1) * s.L + (l - 1);
      M(l - 1, static_cast<Eigen::Index>(a) * N + (l - 1)) = mk;
    }
  }
  return M;
}

struct EncoderOut {
  Var mu_z;
  Var var_z;
  Var mu_xi;
  Var var_xi;
};

struct Bound {
  std::vector<Var> p;
  Var operator[](VariationalModel::Slot s) const { return p[static_cast<std::size_t>(s)]; }
};

Bound bind(ad::Tape& tape, const VariationalModel& model, VariationalModel* target) {
  Bound b;
  for (int s = 0; s < VariationalModel::kSlotCount; ++s) {
    const auto slot = static_cast<VariationalModel::Slot>(s);
    b.p.push_back(target != nullptr ? tape.parameter(target->param(slot))
                                    : tape.constant(model.param(slot).value));
  }
  return b;
}

EncoderOut encoder_graph(ad::Tape& tape, const VariationalModel& model, const Bound& p,
                         const RowMatrix& raw) {
  using S = VariationalModel;
  const auto& s = model.shape();
  RowMatrix xin = model.modal_features(raw);
  xin.rowwise() -= model.input_mean.row(0);
  xin /= model.input_scale;
  const Var x = tape.constant(std::move(xin));
  const Var h1 = ad::tanh(ad::affine(x, p[S::kW1], p[S::kB1]));
  const Var h2 = ad::tanh(ad::affine(h1, p[S::kW2], p[S::kB2]));
  const Var out = ad::affine(h2, p[S::kW3], p[S::kB3]);
  const int N = s.N;
  const int KL = s.n_chaos();
  EncoderOut e;
  e.mu_z = ad::slice_cols(out, 0, N);
  e.var_z = ad::clamp(ad::exp(ad::slice_cols(out, N, N)), kMinPosteriorVar, kMaxPosteriorVar);
  e.mu_xi = ad::slice_cols(out, 2 * N, KL);
  e.var_xi =
      ad::clamp(ad::exp(ad::slice_cols(out, 2 * N + KL, KL)), kMinPosteriorVar, kMaxPosteriorVar);
  return e;
}

// Sum over all entries of mu^2 + var - 1 - log var, halved.
Var kl_graph(Var mu, Var var) {
  const Var terms = ad::square(mu) + var - ad::log(var);
  return ad::scale(ad::add_scalar(ad::sum(terms), -static_cast<double>(mu.value().size())), 0.5);
}

ElboGraph build(ad::Tape& tape, const VariationalModel& model, VariationalModel* target,
                const RowMatrix& observations, const NoiseDraw& noise, double beta_z,
                double beta_xi) {
  using S = VariationalModel;
  const auto& s = model.shape();
  const Eigen::Index B = observations.rows();
  const int N = s.N;
  const int KL = s.n_chaos();
  const int M3 = s.n_space();
  require(B >= 1, "elbo: empty batch");
  require(observations.cols() == s.n_features(),
          "elbo: observation width " + std::to_string(observations.cols()) + " != " +
              std::to_string(s.n_features()));
  require(noise.z.rows() == B && noise.z.cols() == N && noise.xi.rows() == B &&
              noise.xi.cols() == KL,
          "elbo: noise draw shape mismatch");

  const Bound p = bind(tape, model, target);
  const EncoderOut enc = encoder_graph(tape, model, p, observations);
  const Var z0 = enc.mu_z + ad::sqrt(enc.var_z) * tape.constant(noise.z);
  const Var xi = enc.mu_xi + ad::sqrt(enc.var_xi) * tape.constant(noise.xi);
  const Var kl_z = kl_graph(enc.mu_z, enc.var_z);
  const Var kl_xi = kl_graph(enc.mu_xi, enc.var_xi);

  const Var neg_lambda = ad::neg(ad::softplus(p[S::kLambdaRaw]));
  const Var sqrt_q = ad::sqrt(ad::softplus(p[S::kQRaw]));
  const Var neg_lambda_tiled = ad::matmul(neg_lambda, tape.constant(tiling_matrix(N, KL)));
  const TimeBasis& tb = model.time_basis();

  // The zero-order block depends on the trajectory; the first-order block
  // starts at zero for every trajectory and is shared across the batch.
  auto zero_field = [&](double, const Var& z) { return z * neg_lambda; };
  auto first_field = [&](double t, const Var& f) {
    return f * neg_lambda_tiled + ad::matmul(sqrt_q, tape.constant(forcing_matrix(s, tb, t)));
  };
  const auto zero = rk4_integrate<Var>(zero_field, z0, s.times, s.rk4_substeps);
  const auto first = rk4_integrate<Var>(
      first_field, tape.constant(Array::Zero(1, static_cast<Eigen::Index>(KL) * N)), s.times,
      s.rk4_substeps);

  const Var obs_var = ad::exp(p[S::kObsLogVar]);
  const Var design_t = tape.constant(model.design().transpose());
  Var loglik;
  for (int j = 0; j < s.n_times(); ++j) {
    const Var coeffs = zero[j] + ad::matmul(xi, ad::reshape(first[j], KL, N));
    const Var fitted = ad::matmul(coeffs, design_t);
    const Var target_j = tape.constant(observations.middleCols(static_cast<Eigen::Index>(j) * M3, M3));
    const Var term = ad::gaussian_log_density(target_j, fitted, obs_var);
    loglik = j == 0 ? term : loglik + term;
  }

  const double inv_b = 1.0 / static_cast<double>(B);
  ElboGraph g;
  g.loglik = ad::scale(loglik, inv_b);
  g.kl_z = ad::scale(kl_z, inv_b);
  g.kl_xi = ad::scale(kl_xi, inv_b);
  g.elbo = g.loglik - beta_z * g.kl_z - beta_xi * g.kl_xi;
  return g;
}

}  // namespace

Vector reparameterize(const DiagonalGaussian& p, const Vector& g) {
  require(g.size() == p.mean.size() && p.var.size() == p.mean.size(),
          "reparameterize: dimension mismatch");
  return p.mean + (p.var.array().sqrt() * g.array()).matrix();
}

double gaussian_kl(const DiagonalGaussian& p) {
  require(p.var.size() == p.mean.size(), "gaussian_kl: dimension mismatch");
  if ((p.var.array() <= 0.0).any()) fail(ErrorCategory::Numerical, "gaussian_kl: nonpositive variance");
  return 0.5 * (p.mean.array().square() + p.var.array() - 1.0 - p.var.array().log()).sum();
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be positive", ErrorCategory::Config);
  require(epochs >= 1, "epochs must be positive", ErrorCategory::Config);
  require(warmup_epochs >= 0 && warmup_epochs < epochs,
          "warmup_epochs must lie in [0, epochs)", ErrorCategory::Config);
  require(beta_z >= 0.0 && beta_xi >= 0.0, "KL weights must be nonnegative", ErrorCategory::Config);
  require(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction >= 0.0,
          "split fractions must be positive", ErrorCategory::Config);
  require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) < 1e-9,
          "split fractions must sum to 1", ErrorCategory::Config);
  require(lr_encoder > 0.0 && lr_dynamics > 0.0 && lr_decoder > 0.0,
          "learning rates must be positive", ErrorCategory::Config);
  require(weight_decay >= 0.0, "weight_decay must be nonnegative", ErrorCategory::Config);
  require(hidden >= 1, "hidden width must be positive", ErrorCategory::Config);
  require(rk4_substeps >= 1, "rk4_substeps must be positive", ErrorCategory::Config);
  require(encoder_freeze_epochs >= 0, "encoder_freeze_epochs must be nonnegative",
          ErrorCategory::Config);
}

DataSplit split_indices(int n_trajectories, const TrainConfig& cfg) {
  require(n_trajectories >= 1, "split: no trajectories");
  const int n_train = static_cast<int>(std::floor(cfg.train_fraction * n_trajectories + 1e-9));
  const int n_val = static_cast<int>(std::floor(cfg.val_fraction * n_trajectories + 1e-9));
  DataSplit s;
  for (int i = 0; i < n_trajectories; ++i) {
    if (i < n_train) s.train.push_back(i);
    else if (i < n_train + n_val) s.val.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

ModelShape shape_of(const Dataset& ds, int hidden, int rk4_substeps) {
  ModelShape s;
  s.regime = ds.regime;
  s.N = ds.N;
  s.K = ds.K;
  s.L = ds.L;
  s.times = ds.times;
  s.space = ds.space;
  s.hidden = hidden;
  s.rk4_substeps = rk4_substeps;
  return s;
}

VariationalModel::VariationalModel(ModelShape shape, std::uint64_t seed)
    : shape_(std::move(shape)), time_basis_(1.0, 1) {
  const auto& s = shape_;
  require(s.N >= 1 && s.K >= 1 && s.L >= 1 && s.L <= s.N, "model: invalid truncations");
  require(s.n_times() >= 2 && s.n_space() >= 1, "model: mesh too small");
  require(s.hidden >= 1, "model: hidden width must be positive");
  time_basis_ = TimeBasis(s.times.back() - s.times.front(), s.K);
  require(s.times.front() == 0.0, "model: time grid must start at 0");
  design_ = SpatialBasis(s.regime, s.N).design_matrix(s.space);
  const Eigen::MatrixXd gram = design_.transpose() * design_;
  projector_ = design_ * gram.inverse();

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  auto dense = [&](const char* name, int rows, int cols, int fan_in, int slot) {
    RandomStream rng(seed, {kInitStream, static_cast<std::uint64_t>(slot)});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    ad::Parameter p{name, Array(rows, cols), Array(), kEncoderGroup};
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
    }
    p.zero_grad();
    return p;
  };
  const int F = s.n_encoder_inputs();
  const int H = s.hidden;
  params_.push_back(dense("encoder.w1", F, H, F, kW1));
  params_.push_back(dense("encoder.b1", 1, H, F, kB1));
  params_.push_back(dense("encoder.w2", H, H, H, kW2));
  params_.push_back(dense("encoder.b2", 1, H, H, kB2));
  params_.push_back(dense("encoder.w3", H, s.n_outputs(), H, kW3));
  params_.push_back(dense("encoder.b3", 1, s.n_outputs(), H, kB3));
  const double one_raw = inverse_positive_map(1.0);
  params_.push_back({"dynamics.lambda_raw", Array::Constant(1, s.N, one_raw), Array(), kDynamicsGroup});
  params_.push_back({"dynamics.q_raw", Array::Constant(1, s.L, one_raw), Array(), kDynamicsGroup});
  params_.push_back({"decoder.log_var", Array::Zero(1, s.n_space()), Array(), kDecoderGroup});
  for (auto& p : params_) p.zero_grad();

  input_mean = RowMatrix::Zero(1, F);
}

RowMatrix VariationalModel::modal_features(const RowMatrix& observations) const {
  const auto& s = shape_;
  require(observations.cols() == s.n_features(), "modal_features: observation width mismatch");
  RowMatrix out(observations.rows(), s.n_encoder_inputs());
  for (Eigen::Index b = 0; b < observations.rows(); ++b) {
    const Eigen::Map<const RowMatrix> field(observations.row(b).data(), s.n_times(), s.n_space());
    Eigen::Map<RowMatrix>(out.row(b).data(), s.n_times(), s.N) = field * projector_;
  }
  return out;
}

DynamicsParams VariationalModel::dynamics() const {
  DynamicsParams d;
  const auto& l = param(kLambdaRaw).value;
  const auto& q = param(kQRaw).value;
  d.lambda_raw.assign(l.data(), l.data() + l.size());
  d.q_raw.assign(q.data(), q.data() + q.size());
  return d;
}

void VariationalModel::set_dynamics(const DynamicsParams& p) {
  require(p.n_modes() == shape_.N && p.n_noise() == shape_.L, "set_dynamics: size mismatch");
  for (int n = 0; n < shape_.N; ++n) param(kLambdaRaw).value(0, n) = p.lambda_raw[n];
  for (int l = 0; l < shape_.L; ++l) param(kQRaw).value(0, l) = p.q_raw[l];
}

Vector VariationalModel::obs_variance() const {
  return param(kObsLogVar).value.row(0).transpose().array().exp();
}

Posterior encode(const VariationalModel& model, const Eigen::Ref<const RowMatrix>& observation) {
  check_observation(model.shape(), observation.rows(), observation.cols());
  ad::Tape tape;
  const Bound p = bind(tape, model, nullptr);
  const EncoderOut e = encoder_graph(tape, model, p, flatten(observation));
  Posterior post;
  post.z0.mean = e.mu_z.value().row(0).transpose();
  post.z0.var = e.var_z.value().row(0).transpose();
  post.xi.mean = e.mu_xi.value().row(0).transpose();
  post.xi.var = e.var_xi.value().row(0).transpose();
  return post;
}

NoiseDraw draw_noise(int batch, int N, int KL, std::uint64_t master,
                     std::initializer_list<std::uint64_t> stream) {
  RandomStream rng(master, stream);
  NoiseDraw d{RowMatrix(batch, N), RowMatrix(batch, KL)};
  for (int b = 0; b < batch; ++b) {
    for (int n = 0; n < N; ++n) d.z(b, n) = rng.normal();
    for (int a = 0; a < KL; ++a) d.xi(b, a) = rng.normal();
  }
  return d;
}

ElboGraph build_elbo_graph(ad::Tape& tape, VariationalModel& model, const RowMatrix& observations,
                           const NoiseDraw& noise, double beta_z, double beta_xi, bool bind_params) {
  return build(tape, model, bind_params ? &model : nullptr, observations, noise, beta_z, beta_xi);
}

ElboTerms elbo(const VariationalModel& model, const Eigen::Ref<const RowMatrix>& observation,
               const Vector& g_z, const Vector& g_xi, double beta_z, double beta_xi) {
  check_observation(model.shape(), observation.rows(), observation.cols());
  NoiseDraw noise{g_z.transpose(), g_xi.transpose()};
  ad::Tape tape;
  const ElboGraph g = build(tape, model, nullptr, flatten(observation), noise, beta_z, beta_xi);
  return {g.elbo.scalar(), g.loglik.scalar(), g.kl_z.scalar(), g.kl_xi.scalar()};
}

LatentPaths propagate(const VariationalModel& model, const RowMatrix& z0) {
  const auto& s = model.shape();
  const int N = s.N;
  const int KL = s.n_chaos();
  require(z0.cols() == N, "propagate: initial state must have N columns");
  const auto dyn = model.dynamics();
  RowMatrix neg_lambda(1, N);
  for (int n = 0; n < N; ++n) neg_lambda(0, n) = -dyn.lambda(n + 1);
  RowMatrix sqrt_q(1, s.L);
  for (int l = 0; l < s.L; ++l) sqrt_q(0, l) = std::sqrt(dyn.q(l + 1));
  const RowMatrix neg_lambda_tiled = neg_lambda * tiling_matrix(N, KL);
  const TimeBasis& tb = model.time_basis();

  auto zero_field = [&](double, const RowMatrix& z) -> RowMatrix {
    return (z.array().rowwise() * neg_lambda.row(0).array()).matrix();
  };
  auto first_field = [&](double t, const RowMatrix& f) -> RowMatrix {
    return f.cwiseProduct(neg_lambda_tiled) + sqrt_q * forcing_matrix(s, tb, t);
  };
  LatentPaths out;
  out.zero = rk4_integrate<RowMatrix>(zero_field, z0, s.times, s.rk4_substeps);
  out.first = rk4_integrate<RowMatrix>(
      first_field, RowMatrix::Zero(1, static_cast<Eigen::Index>(KL) * N), s.times, s.rk4_substeps);
  return out;
}

RowMatrix decode(const VariationalModel& model, const LatentPaths& paths, int row, const Vector& xi) {
  const auto& s = model.shape();
  const int N = s.N;
  const int KL = s.n_chaos();
  require(xi.size() == KL, "decode: expected " + std::to_string(KL) + " chaos coordinates");
  RowMatrix coeffs(s.n_times(), N);
  for (int j = 0; j < s.n_times(); ++j) {
    const Eigen::Map<const RowMatrix> first(paths.first[j].data(), KL, N);
    coeffs.row(j) = paths.zero[j].row(row) + xi.transpose() * first;
  }
  return coeffs * model.design().transpose();
}

RowMatrix generate_conditional(const VariationalModel& model,
                               const Eigen::Ref<const RowMatrix>& observation, bool use_xi) {
  const Posterior post = encode(model, observation);
  const LatentPaths paths = propagate(model, post.z0.mean.transpose());
  const Vector xi = use_xi ? post.xi.mean : Vector::Zero(model.shape().n_chaos());
  return decode(model, paths, 0, xi);
}

std::vector<RowMatrix> generate_unconditional(const VariationalModel& model, int count,
                                              std::uint64_t seed, int first) {
  require(model.has_unconditional_state(),
          "generate: model has no unconditional initial state (untrained)");
  require(count >= 0 && first >= 0, "generate: negative sample count or offset");
  const int KL = model.shape().n_chaos();
  const LatentPaths paths = propagate(model, model.z0_mean.transpose());
  std::vector<RowMatrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    RandomStream rng(seed, {kGenerateStream, static_cast<std::uint64_t>(first + i)});
    Vector xi(KL);
    for (int a = 0; a < KL; ++a) xi(a) = rng.normal();
    out.push_back(decode(model, paths, 0, xi));
  }
  return out;
}

std::vector<RowMatrix> generate(const VariationalModel& model, GenerationMode mode,
                                std::span<const RowMatrix> observations, int count,
                                std::uint64_t seed) {
  if (mode == GenerationMode::Unconditional) return generate_unconditional(model, count, seed);
  std::vector<RowMatrix> out;
  out.reserve(observations.size());
  for (const auto& obs : observations) out.push_back(generate_conditional(model, obs));
  return out;
}

void fit_unconditional_state(VariationalModel& model, const Dataset& ds,
                             std::span<const int> indices) {
  require(!indices.empty(), "fit_unconditional_state: empty index set");
  check_observation(model.shape(), ds.n_times(), ds.n_space());
  ad::Tape tape;
  const Bound p = bind(tape, model, nullptr);
  const EncoderOut e = encoder_graph(tape, model, p, gather_rows(ds, indices));
  model.z0_mean = e.mu_z.value().colwise().mean().transpose();
}

double mean_rel_l2(const VariationalModel& model, const Dataset& ds, std::span<const int> indices) {
  require(!indices.empty(), "mean_rel_l2: empty index set");
  double total = 0.0;
  for (int i : indices) {
    const auto truth = ds.trajectory(i);
    total += rel_l2(generate_conditional(model, truth), truth);
  }
  return total / static_cast<double>(indices.size());
}

double mean_elbo(const VariationalModel& model, const Dataset& ds, std::span<const int> indices,
                 const TrainConfig& cfg) {
  require(!indices.empty(), "mean_elbo: empty index set");
  const int N = model.shape().N;
  const int KL = model.shape().n_chaos();
  double total = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t count = std::min(indices.size() - start, static_cast<std::size_t>(cfg.batch_size));
    const auto idx = indices.subspan(start, count);
    NoiseDraw noise{RowMatrix(static_cast<Eigen::Index>(count), N),
                    RowMatrix(static_cast<Eigen::Index>(count), KL)};
    for (std::size_t b = 0; b < count; ++b) {
      const NoiseDraw one =
          draw_noise(1, N, KL, cfg.seed, {kValNoiseStream, static_cast<std::uint64_t>(idx[b])});
      noise.z.row(static_cast<Eigen::Index>(b)) = one.z.row(0);
      noise.xi.row(static_cast<Eigen::Index>(b)) = one.xi.row(0);
    }
    ad::Tape tape;
    const ElboGraph g =
        build(tape, model, nullptr, gather_rows(ds, idx), noise, cfg.beta_z, cfg.beta_xi);
    total += g.elbo.scalar() * static_cast<double>(count);
  }
  return total / static_cast<double>(indices.size());
}

TrainingState start_training(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const DataSplit split = split_indices(ds.n_trajectories(), cfg);
  if (split.train.empty() || split.val.empty()) {
    fail(ErrorCategory::InvalidArgument, "train: empty training or validation split (M1 = " +
                                             std::to_string(ds.n_trajectories()) + ")");
  }
  require(static_cast<std::size_t>(cfg.batch_size) <= split.train.size(),
          "train: batch_size " + std::to_string(cfg.batch_size) + " exceeds training-set size " +
              std::to_string(split.train.size()),
          ErrorCategory::Config);

  TrainingState st;
  st.model = VariationalModel(shape_of(ds, cfg.hidden, cfg.rk4_substeps), cfg.seed);
  VariationalModel& m = st.model;
  const auto& s = m.shape();

  const RowMatrix X = gather_rows(ds, split.train);
  const RowMatrix C = m.modal_features(X);
  m.input_mean = C.colwise().mean();
  const double spread = std::sqrt((C.rowwise() - m.input_mean.row(0)).squaredNorm() /
                                  static_cast<double>(C.size()));
  m.input_scale = spread > 1e-12 ? spread : 1.0;

  // The posterior starts input-independent: mu_z at the mean t0 snapshot in
  // coefficient space, mu_xi = 0, small variances.
  const int KL = s.n_chaos();
  m.param(VariationalModel::kW3).value.setZero();
  auto& b3 = m.param(VariationalModel::kB3).value;
  b3.leftCols(s.N) = m.input_mean.leftCols(s.N);
  b3.middleCols(s.N, s.N).setConstant(cfg.posterior_log_var_init);
  b3.middleCols(2 * s.N, KL).setZero();
  b3.rightCols(KL).setConstant(cfg.posterior_log_var_init);

  // Spatially uniform start at the across-trajectory variance averaged over
  // time and space; a location-dependent start would weight modes unevenly.
  const RowMatrix centered = X.rowwise() - X.colwise().mean();
  const double pooled = centered.squaredNorm() / static_cast<double>(X.size());
  m.param(VariationalModel::kObsLogVar)
      .value.setConstant(std::log(std::max(pooled, 1e-12)) + cfg.decoder_log_var_offset);

  ad::AdamSettings adam;
  adam.weight_decay = cfg.weight_decay;
  st.optimizer = ad::make_optimizer(m.params(), {cfg.lr_encoder, cfg.lr_dynamics, cfg.lr_decoder},
                                    cfg.warmup_epochs, cfg.epochs, adam);
  st.best = m;
  return st;
}

void train_epochs(TrainingState& st, const Dataset& ds, const TrainConfig& cfg, int until,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const DataSplit split = split_indices(ds.n_trajectories(), cfg);
  require(!split.train.empty() && !split.val.empty(), "train: empty training or validation split");
  VariationalModel& m = st.model;
  check_observation(m.shape(), ds.n_times(), ds.n_space());
  const int N = m.shape().N;
  const int KL = m.shape().n_chaos();
  const int last = std::min(until, cfg.epochs);

  for (int epoch = st.next_epoch; epoch < last; ++epoch) {
    std::vector<int> order = split.train;
    RandomStream shuffle(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle.engine());

    double elbo_sum = 0.0;
    std::uint64_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      const std::span<const int> idx(order.data() + start, count);
      const NoiseDraw noise = draw_noise(static_cast<int>(count), N, KL, cfg.seed,
                                         {kTrainNoiseStream, static_cast<std::uint64_t>(epoch), batch});
      for (auto& p : m.params()) p.zero_grad();
      ad::Tape tape;
      const ElboGraph g = build(tape, m, &m, gather_rows(ds, idx), noise, cfg.beta_z, cfg.beta_xi);
      tape.backward(ad::neg(g.elbo));
      if (epoch < cfg.encoder_freeze_epochs) {
        for (auto& p : m.params()) {
          if (p.group == VariationalModel::kEncoderGroup) p.grad.setZero();
        }
      }
      ad::adam_step(st.optimizer, m.params(), epoch);
      elbo_sum += g.elbo.scalar() * static_cast<double>(count);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_elbo = elbo_sum / static_cast<double>(order.size());
    rec.val_elbo = mean_elbo(m, ds, split.val, cfg);
    rec.lr_scale = ad::lr_schedule(epoch, 1.0, cfg.warmup_epochs, cfg.epochs);
    const auto dyn = m.dynamics();
    rec.lambda = dyn.lambdas();
    rec.q = dyn.qs();
    double score = rec.val_elbo;
    if (cfg.selection == Selection::ValRelL2) {
      rec.val_rel_l2 = mean_rel_l2(m, ds, split.val);
      score = -rec.val_rel_l2;
    }
    if (score > st.best_score) {
      st.best_score = score;
      st.best_epoch = epoch;
      st.best = m;
    }
    st.log.push_back(rec);
    st.next_epoch = epoch + 1;
    if (on_epoch) on_epoch(st, rec);
  }
  fit_unconditional_state(st.model, ds, split.train);
  fit_unconditional_state(st.best, ds, split.train);
}

TrainingState train(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  TrainingState st = start_training(ds, cfg);
  train_epochs(st, ds, cfg, cfg.epochs, on_epoch);
  return st;
}

}  // namespace spde
