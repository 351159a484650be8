#include "spde/propagator.hpp"

#include <cmath>
#include <numbers>

namespace spde {

double positive_map(double u) {
  // log(1 + e^u) = max(u, 0) + log1p(e^{-|u|})
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

double inverse_positive_map(double v) {
  require(v > 0.0, "inverse_positive_map: argument must be positive");
  // log(e^v - 1) = v + log(1 - e^{-v})
  return v + std::log(-std::expm1(-v));
}

std::vector<double> DynamicsParams::lambdas() const {
  std::vector<double> out(lambda_raw.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = positive_map(lambda_raw[i]);
  return out;
}

std::vector<double> DynamicsParams::qs() const {
  std::vector<double> out(q_raw.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = positive_map(q_raw[i]);
  return out;
}

DynamicsParams DynamicsParams::from_values(std::span<const double> lambda,
                                           std::span<const double> q) {
  DynamicsParams p;
  for (double v : lambda) p.lambda_raw.push_back(inverse_positive_map(v));
  for (double v : q) p.q_raw.push_back(inverse_positive_map(v));
  return p;
}

LatentLayout::LatentLayout(int N, int K, int L) : n_(N), k_(K), l_(L) {
  require(N >= 1 && K >= 1 && L >= 1, "LatentLayout: N, K, L must be positive");
  require(L <= N, "LatentLayout: L must not exceed N");
}

std::size_t LatentLayout::index(int n, std::optional<ChaosIndex> alpha) const {
  if (n < 1 || n > n_) {
    fail(ErrorCategory::InvalidArgument, "latent index: mode " + std::to_string(n) +
                                             " out of range 1.." + std::to_string(n_));
  }
  if (!alpha) return static_cast<std::size_t>(n - 1);
  const int block = ChaosIndexSet(k_, l_).position(*alpha) + 1;
  return static_cast<std::size_t>(n_) * block + (n - 1);
}

Vector vector_field(const DynamicsParams& params, const LatentLayout& layout, const TimeBasis& tb,
                    double t, const Vector& z) {
  const int N = layout.n_modes();
  const int K = layout.n_time();
  const int L = layout.n_noise();
  require(static_cast<std::size_t>(z.size()) == layout.dim(), "vector_field: state size mismatch");
  require(params.n_modes() == N && params.n_noise() == L,
          "vector_field: parameter sizes do not match the layout");

  const auto lambda = params.lambdas();
  const auto q = params.qs();
  Vector dz(z.size());
  const int blocks = 1 + K * L;
  for (int b = 0; b < blocks; ++b) {
    for (int n = 0; n < N; ++n) {
      const Eigen::Index i = static_cast<Eigen::Index>(b) * N + n;
      dz(i) = -lambda[n] * z(i);
    }
  }
  for (int k = 1; k <= K; ++k) {
    const double mk = tb.eval(k, t);
    for (int l = 1; l <= L; ++l) {
      dz(static_cast<Eigen::Index>(layout.index(l, ChaosIndex{k, l}))) += mk * std::sqrt(q[l - 1]);
    }
  }
  return dz;
}

RowMatrix rk4_integrate(const DynamicsParams& params, const LatentLayout& layout,
                        const TimeBasis& tb, const Vector& z0, std::span<const double> times,
                        int substeps) {
  require(static_cast<std::size_t>(z0.size()) == layout.dim(), "rk4_integrate: state size mismatch");
  auto field = [&](double t, const Vector& z) { return vector_field(params, layout, tb, t, z); };
  const auto states = rk4_integrate<Vector>(field, z0, times, substeps);
  RowMatrix out(static_cast<Eigen::Index>(states.size()), z0.size());
  for (std::size_t j = 0; j < states.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = states[j];
  return out;
}

double closed_form_propagator(double lambda, double q, int k, double t, const TimeBasis& tb) {
  require(lambda > 0.0, "closed_form_propagator: lambda must be positive");
  require(k >= 1 && k <= tb.size(), "closed_form_propagator: time-basis index out of range");
  const double T = tb.horizon();
  const double decay = std::exp(-lambda * t);
  const double sq = std::sqrt(q);
  if (k == 1) return sq * (-std::expm1(-lambda * t)) / (lambda * std::sqrt(T));
  const double w = (k - 1) * std::numbers::pi / T;
  const double integral =
      (lambda * std::cos(w * t) + w * std::sin(w * t) - lambda * decay) / (lambda * lambda + w * w);
  return sq * std::sqrt(2.0 / T) * integral;
}

RowMatrix closed_form_states(const DynamicsParams& params, const LatentLayout& layout,
                             const TimeBasis& tb, std::span<const double> c0,
                             std::span<const double> times) {
  const int N = layout.n_modes();
  require(c0.size() == static_cast<std::size_t>(N), "closed_form_states: c0 size mismatch");
  const auto lambda = params.lambdas();
  const auto q = params.qs();
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(times.size()),
                                  static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t j = 0; j < times.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    for (int n = 1; n <= N; ++n) {
      out(row, n - 1) = std::exp(-lambda[n - 1] * times[j]) * c0[n - 1];
    }
    for (int k = 1; k <= layout.n_time(); ++k) {
      for (int l = 1; l <= layout.n_noise(); ++l) {
        out(row, static_cast<Eigen::Index>(layout.index(l, ChaosIndex{k, l}))) =
            closed_form_propagator(lambda[l - 1], q[l - 1], k, times[j], tb);
      }
    }
  }
  return out;
}

Vector initial_state(const LatentLayout& layout, std::span<const double> zero_order) {
  require(zero_order.size() == static_cast<std::size_t>(layout.n_modes()),
          "initial_state: zero-order block size mismatch");
  Vector z = Vector::Zero(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t n = 0; n < zero_order.size(); ++n) z(static_cast<Eigen::Index>(n)) = zero_order[n];
  return z;
}

RowMatrix modal_coefficients(const RowMatrix& states, std::span<const double> xi,
                             const LatentLayout& layout) {
  const int N = layout.n_modes();
  const int KL = layout.n_time() * layout.n_noise();
  require(static_cast<std::size_t>(states.cols()) == layout.dim(),
          "modal_coefficients: state dimension mismatch");
  require(xi.size() == static_cast<std::size_t>(KL), "modal_coefficients: expected " +
                                                          std::to_string(KL) + " chaos coordinates");
  RowMatrix c = states.leftCols(N);
  for (int a = 0; a < KL; ++a) {
    if (xi[a] == 0.0) continue;
    c += xi[a] * states.middleCols(static_cast<Eigen::Index>(N) * (a + 1), N);
  }
  return c;
}

RowMatrix reconstruct(const RowMatrix& states, std::span<const double> xi,
                      const LatentLayout& layout, const SpatialBasis& basis,
                      std::span<const double> points) {
  require(basis.size() == layout.n_modes(), "reconstruct: basis size differs from layout");
  const RowMatrix c = modal_coefficients(states, xi, layout);
  return c * basis.design_matrix(points).transpose();
}

}  // namespace spde
