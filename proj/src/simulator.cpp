#include "spde/simulator.hpp"

#include <cmath>
#include <string>
#include <thread>

#include "spde/error.hpp"

namespace spde {

namespace {
constexpr std::uint64_t kSimulationStream = 0x73696d756c617465ULL;
}

std::string_view scheme_name(Scheme s) {
  return s == Scheme::SemiImplicitEM ? "semi_implicit_em" : "exact_ou";
}

Scheme parse_scheme(std::string_view s) {
  if (s == "semi_implicit_em" || s == "semi_implicit" || s == "em") return Scheme::SemiImplicitEM;
  if (s == "exact_ou" || s == "exact") return Scheme::ExactOU;
  fail(ErrorCategory::InvalidArgument, "unknown scheme '" + std::string(s) + "'");
}

SimConfig SimConfig::full_scale_defaults(Regime regime) {
  SimConfig cfg;
  cfg.regime = regime;
  cfg.M3 = default_grid_size(regime);
  return cfg;
}

void SimConfig::validate() const {
  require(N >= 1 && K >= 1 && L >= 1, "truncations N, K, L must be positive");
  require(L <= N, "L = " + std::to_string(L) + " exceeds N = " + std::to_string(N) +
                      ": forcing targets mode l of the first N modes");
  require(T > 0.0, "horizon T must be positive");
  require(M1 >= 1, "M1 must be positive");
  require(M2 >= 1, "M2 must be positive");
  require(M3 >= 2, "M3 must be at least 2");
  require(workers >= 1, "workers must be positive");
}

double step_semi_implicit(double z, double lambda, double q, double dt, double g) {
  require(dt > 0.0, "step_semi_implicit: dt must be positive");
  return (z + std::sqrt(q * dt) * g) / (1.0 + lambda * dt);
}

double step_exact_ou(double z, double lambda, double q, double dt, double g) {
  require(dt > 0.0, "step_exact_ou: dt must be positive");
  const double decay = std::exp(-lambda * dt);
  // (1 - e^{-2 lambda dt}) / (2 lambda) without cancellation for small lambda dt.
  const double var = q * (-std::expm1(-2.0 * lambda * dt)) / (2.0 * lambda);
  return decay * z + std::sqrt(var) * g;
}

std::vector<double> uniform_times(double T, int M2) {
  std::vector<double> t(static_cast<std::size_t>(M2) + 1);
  for (int j = 0; j <= M2; ++j) t[j] = T * j / M2;
  t[M2] = T;
  return t;
}

ModalSimulator::ModalSimulator(const SimConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const SpatialBasis basis(cfg_.regime, cfg_.N);
  c0_ = initial_condition_coeffs(basis);
  lambda_.resize(cfg_.N);
  q_.assign(cfg_.N, 0.0);
  for (int n = 1; n <= cfg_.N; ++n) {
    lambda_[n - 1] = basis.eigenvalue(n);
    if (n <= cfg_.L) q_[n - 1] = cfg_.noise.amplitude(n);
  }
}

ModalPath ModalSimulator::simulate(std::uint64_t trajectory, bool keep_draws) const {
  const double dt = cfg_.dt();
  const int N = cfg_.N;
  ModalPath path;
  path.coeffs.resize(cfg_.M2 + 1, N);
  if (keep_draws) path.draws.resize(cfg_.M2, N);
  for (int n = 0; n < N; ++n) path.coeffs(0, n) = c0_[n];

  RandomStream rng(cfg_.master_seed, {kSimulationStream, trajectory});
  for (int j = 0; j < cfg_.M2; ++j) {
    for (int n = 0; n < N; ++n) {
      const double g = rng.normal();
      if (keep_draws) path.draws(j, n) = g;
      const double z = path.coeffs(j, n);
      path.coeffs(j + 1, n) = cfg_.scheme == Scheme::SemiImplicitEM
                                  ? step_semi_implicit(z, lambda_[n], q_[n], dt, g)
                                  : step_exact_ou(z, lambda_[n], q_[n], dt, g);
    }
  }
  return path;
}

ModalPath simulate_modes(const SimConfig& cfg, std::uint64_t trajectory, bool keep_draws) {
  return ModalSimulator(cfg).simulate(trajectory, keep_draws);
}

int Dataset::n_trajectories() const {
  const std::size_t per = times.size() * space.size();
  return per == 0 ? 0 : static_cast<int>(fields.size() / per);
}

Eigen::Map<const RowMatrix> Dataset::trajectory(int m1) const {
  const std::size_t per = times.size() * space.size();
  return {fields.data() + per * static_cast<std::size_t>(m1), n_times(), n_space()};
}

Eigen::Map<RowMatrix> Dataset::trajectory(int m1) {
  const std::size_t per = times.size() * space.size();
  return {fields.data() + per * static_cast<std::size_t>(m1), n_times(), n_space()};
}

Dataset generate_dataset(const SimConfig& cfg) {
  cfg.validate();
  const SpatialBasis basis(cfg.regime, cfg.N);
  const SpatialGrid grid = make_grid(cfg.regime, cfg.M3);
  const RowMatrix design = basis.design_matrix(grid.points);  // M3 x N

  Dataset ds;
  ds.regime = cfg.regime;
  ds.N = cfg.N;
  ds.K = cfg.K;
  ds.L = cfg.L;
  ds.times = uniform_times(cfg.T, cfg.M2);
  ds.space = grid.points;
  ds.scheme = cfg.scheme;
  ds.seed = cfg.master_seed;
  ds.noise = cfg.noise;
  ds.fields.assign(static_cast<std::size_t>(cfg.M1) * (cfg.M2 + 1) * cfg.M3, 0.0);

  // Each worker owns a disjoint, index-determined set of trajectories.
  const ModalSimulator sim(cfg);
  auto work = [&](int worker) {
    for (int m1 = worker; m1 < cfg.M1; m1 += cfg.workers) {
      const ModalPath path = sim.simulate(static_cast<std::uint64_t>(m1));
      ds.trajectory(m1).noalias() = path.coeffs * design.transpose();
    }
  };
  if (cfg.workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(work, w);
  }
  return ds;
}

}  // namespace spde
