#include "spde/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "spde/error.hpp"

namespace spde {

namespace {

void check_same_shape(const Eigen::Ref<const RowMatrix>& pred,
                      const Eigen::Ref<const RowMatrix>& truth, const char* op) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    fail(ErrorCategory::InvalidArgument,
         std::string(op) + ": shape mismatch " + std::to_string(pred.rows()) + "x" +
             std::to_string(pred.cols()) + " vs " + std::to_string(truth.rows()) + "x" +
             std::to_string(truth.cols()));
  }
  require(truth.rows() >= 2, std::string(op) + ": need at least one time after t0");
}

}  // namespace

MeanStd mean_std(std::span<const double> values) {
  RunningMoments m;
  for (double v : values) m.add(v);
  MeanStd out;
  out.count = m.count();
  out.mean = m.mean();
  out.std = m.count() >= 2 ? std::sqrt(m.variance()) : 0.0;
  return out;
}

void RunningMoments::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

double RunningMoments::variance() const {
  require(n_ >= 2, "variance: need at least two values");
  return m2_ / static_cast<double>(n_ - 1);
}

double RunningMoments::std_error() const {
  return std::sqrt(variance() / static_cast<double>(n_));
}

double rel_l2(const Eigen::Ref<const RowMatrix>& pred, const Eigen::Ref<const RowMatrix>& truth) {
  check_same_shape(pred, truth, "rel_l2");
  const Eigen::Index m = truth.rows() - 1;
  const double denom = truth.bottomRows(m).norm();
  if (denom == 0.0) fail(ErrorCategory::Numerical, "rel_l2: truth has zero norm");
  return (pred.bottomRows(m) - truth.bottomRows(m)).norm() / denom;
}

double rmse(const Eigen::Ref<const RowMatrix>& pred, const Eigen::Ref<const RowMatrix>& truth) {
  check_same_shape(pred, truth, "rmse");
  const Eigen::Index m = truth.rows() - 1;
  const double sq = (pred.bottomRows(m) - truth.bottomRows(m)).squaredNorm();
  return std::sqrt(sq / static_cast<double>(m * truth.cols()));
}

EnergySpectrum energy_spectrum(const RowMatrix& coeffs) {
  require(coeffs.rows() >= 1, "energy_spectrum: empty sample set");
  EnergySpectrum out;
  for (Eigen::Index n = 0; n < coeffs.cols(); ++n) {
    RunningMoments m;
    for (Eigen::Index s = 0; s < coeffs.rows(); ++s) m.add(coeffs(s, n) * coeffs(s, n));
    out.energy.push_back(m.mean());
    out.std_error.push_back(m.count() >= 2 ? m.std_error() : 0.0);
  }
  return out;
}

EnergySpectrum energy_spectrum(const RowMatrix& fields_on_nodes, const SpatialBasis& basis) {
  require(fields_on_nodes.rows() >= 1, "energy_spectrum: empty sample set");
  const auto& rule = basis.projection_rule();
  require(static_cast<std::size_t>(fields_on_nodes.cols()) == rule.nodes.size(),
          "energy_spectrum: fields must be sampled on the projection nodes");
  // Coefficients c = F W H with W the diagonal quadrature weights.
  RowMatrix wh = basis.design_matrix(rule.nodes);
  for (std::size_t i = 0; i < rule.weights.size(); ++i) {
    wh.row(static_cast<Eigen::Index>(i)) *= rule.weights[i];
  }
  return energy_spectrum(RowMatrix(fields_on_nodes * wh));
}

RowMatrix least_squares_coefficients(const RowMatrix& fields, const SpatialBasis& basis,
                                     std::span<const double> points) {
  require(static_cast<std::size_t>(fields.cols()) == points.size(),
          "least_squares_coefficients: field width differs from grid size");
  const RowMatrix H = basis.design_matrix(points);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxProjectionCondition)) {
    fail(ErrorCategory::Numerical, "least-squares projection: condition number " +
                                       std::to_string(cond) + " exceeds 1e8");
  }
  const Eigen::MatrixXd rhs = fields.transpose();
  return svd.solve(rhs).transpose();
}

std::vector<double> spatial_average_weights(Regime regime, const SpatialGrid& grid) {
  const std::size_t M = grid.size();
  require(M >= 1, "spatial_average_weights: empty grid");
  std::vector<double> w(M);
  if (regime == Regime::B_DirichletHeat) {
    for (auto& x : w) x = 1.0 / static_cast<double>(M);
    return w;
  }
  require(grid.weights.size() == M, "spatial_average_weights: grid weights missing");
  double total = 0.0;
  for (double v : grid.weights) total += v;
  require(total > 0.0, "spatial_average_weights: zero total weight");
  for (std::size_t i = 0; i < M; ++i) w[i] = grid.weights[i] / total;
  return w;
}

FieldMoments::FieldMoments(int n_times, int n_space)
    : mean_(RowMatrix::Zero(n_times, n_space)), m2_(RowMatrix::Zero(n_times, n_space)) {}

void FieldMoments::add(const Eigen::Ref<const RowMatrix>& field) {
  require(field.rows() == mean_.rows() && field.cols() == mean_.cols(),
          "FieldMoments: field shape mismatch");
  ++n_;
  const RowMatrix delta = field - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_.array() += delta.array() * (field - mean_).array();
}

RowMatrix FieldMoments::variance() const {
  require(n_ >= 2, "spatial variance: need at least two samples");
  return m2_ / static_cast<double>(n_ - 1);
}

std::vector<double> spatial_variance_curve(const FieldMoments& moments,
                                           std::span<const double> weights) {
  const RowMatrix var = moments.variance();
  require(static_cast<std::size_t>(var.cols()) == weights.size(),
          "spatial variance: weight count differs from grid size");
  const Eigen::Map<const Vector> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  const Vector curve = var * w;
  return {curve.data(), curve.data() + curve.size()};
}

std::vector<double> spatial_variance_curve(std::span<const RowMatrix> samples, Regime regime,
                                           const SpatialGrid& grid) {
  require(samples.size() >= 2, "spatial variance: need at least two samples");
  FieldMoments m(static_cast<int>(samples.front().rows()), static_cast<int>(samples.front().cols()));
  for (const auto& s : samples) m.add(s);
  return spatial_variance_curve(m, spatial_average_weights(regime, grid));
}

double time_averaged_relative_error(std::span<const double> curve,
                                    std::span<const double> reference) {
  require(curve.size() == reference.size() && curve.size() >= 2,
          "time_averaged_relative_error: length mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 1; j < curve.size(); ++j) {
    num += std::abs(curve[j] - reference[j]);
    den += reference[j];
  }
  if (den <= 0.0) fail(ErrorCategory::Numerical, "time_averaged_relative_error: zero reference");
  return num / den;
}

}  // namespace spde
