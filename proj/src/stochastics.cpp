#include "spde/stochastics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "spde/error.hpp"

namespace spde {

RandomStream::RandomStream(std::uint64_t master, std::initializer_list<std::uint64_t> ids) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * ids.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (auto id : ids) push(id);
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
}

double NoiseSpectrum::amplitude(int l) const {
  if (l < 1 || l > L) {
    fail(ErrorCategory::InvalidArgument,
         "noise component " + std::to_string(l) + " out of range 1.." + std::to_string(L));
  }
  return std::pow(static_cast<double>(l), -(2.0 * r + 1.0 + eps));
}

std::vector<double> NoiseSpectrum::amplitudes() const {
  std::vector<double> q(L);
  for (int l = 1; l <= L; ++l) q[l - 1] = amplitude(l);
  return q;
}

TimeBasis::TimeBasis(double horizon, int n_functions)
    : horizon_(horizon), n_functions_(n_functions) {
  require(horizon > 0.0, "TimeBasis: horizon must be positive");
  require(n_functions >= 1, "TimeBasis: need at least one basis function");
}

TimeBasis make_time_basis(double horizon, int n_functions) {
  return TimeBasis(horizon, n_functions);
}

double TimeBasis::eval(int k, double t) const {
  if (k < 1 || k > n_functions_) {
    fail(ErrorCategory::InvalidArgument,
         "time-basis index " + std::to_string(k) + " out of range 1.." +
             std::to_string(n_functions_));
  }
  // Tolerate rounding at the interval ends (grids built as j * dt).
  const double slack = 1e-12 * horizon_;
  if (t < -slack || t > horizon_ + slack) {
    fail(ErrorCategory::InvalidArgument,
         "time " + std::to_string(t) + " outside [0, " + std::to_string(horizon_) + "]");
  }
  if (k == 1) return 1.0 / std::sqrt(horizon_);
  return std::sqrt(2.0 / horizon_) * std::cos((k - 1) * std::numbers::pi * t / horizon_);
}

std::vector<double> TimeBasis::eval_all(double t) const {
  std::vector<double> out(n_functions_);
  for (int k = 1; k <= n_functions_; ++k) out[k - 1] = eval(k, t);
  return out;
}

double TimeBasis::cell_average(int k, double a, double b) const {
  require(b > a, "cell_average: empty interval");
  if (k == 1) return eval(1, a);
  const double w = (k - 1) * std::numbers::pi / horizon_;
  return std::sqrt(2.0 / horizon_) * (std::sin(w * b) - std::sin(w * a)) / (w * (b - a));
}

ChaosIndexSet::ChaosIndexSet(int n_time, int n_noise) : k_(n_time), l_(n_noise) {
  require(n_time >= 1 && n_noise >= 1, "ChaosIndexSet: K and L must be positive");
}

int ChaosIndexSet::position(ChaosIndex idx) const {
  if (idx.k < 1 || idx.k > k_ || idx.l < 1 || idx.l > l_) {
    fail(ErrorCategory::InvalidArgument, "chaos index (" + std::to_string(idx.k) + ", " +
                                             std::to_string(idx.l) + ") out of range");
  }
  return (idx.k - 1) * l_ + (idx.l - 1);
}

ChaosIndex ChaosIndexSet::at(int position) const {
  require(position >= 0 && position < size(), "chaos position out of range");
  return {position / l_ + 1, position % l_ + 1};
}

ChaosSample sample_chaos(const ChaosIndexSet& idx, std::uint64_t master, std::uint64_t stream) {
  RandomStream rng(master, {0x6368616f73ULL, stream});
  ChaosSample xi(static_cast<std::size_t>(idx.size()));
  for (auto& v : xi) v = rng.normal();
  return xi;
}

}  // namespace spde
