#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace spde {

/// Independent random stream keyed by a master seed and a tuple of stream ids
/// (e.g. trajectory index, purpose tag). Two streams with the same key produce
/// identical draws regardless of the order in which streams are created.
class RandomStream {
 public:
  RandomStream(std::uint64_t master, std::initializer_list<std::uint64_t> ids);

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Diagonal covariance spectrum q_l = l^{-(2r + 1 + eps)} of the Q-Wiener forcing.
struct NoiseSpectrum {
  int L = 8;
  double r = 0.5;
  double eps = 0.01;

  /// q_l for 1 <= l <= L.
  [[nodiscard]] double amplitude(int l) const;
  [[nodiscard]] std::vector<double> amplitudes() const;
};

/// Orthonormal cosine basis of L^2([0, T]):
/// m_1 = 1/sqrt(T), m_k(t) = sqrt(2/T) cos((k-1) pi t / T) for k >= 2.
class TimeBasis {
 public:
  TimeBasis(double horizon, int n_functions);

  [[nodiscard]] double horizon() const { return horizon_; }
  [[nodiscard]] int size() const { return n_functions_; }

  /// m_k(t), 1 <= k <= K, 0 <= t <= T.
  [[nodiscard]] double eval(int k, double t) const;
  /// m_1(t)..m_K(t).
  [[nodiscard]] std::vector<double> eval_all(double t) const;
  /// Average of m_k over [a, b], computed exactly.
  [[nodiscard]] double cell_average(int k, double a, double b) const;

 private:
  double horizon_;
  int n_functions_;
};

[[nodiscard]] TimeBasis make_time_basis(double horizon, int n_functions);

struct ChaosIndex {
  int k;  // time-basis index, 1..K
  int l;  // noise component, 1..L

  friend bool operator==(const ChaosIndex&, const ChaosIndex&) = default;
};

/// First-order multi-indices e_{k,l}, ordered k-major:
/// position(e_{k,l}) = (k-1) L + (l-1).
class ChaosIndexSet {
 public:
  ChaosIndexSet(int n_time, int n_noise);

  [[nodiscard]] int n_time() const { return k_; }
  [[nodiscard]] int n_noise() const { return l_; }
  [[nodiscard]] int size() const { return k_ * l_; }

  [[nodiscard]] int position(ChaosIndex idx) const;
  [[nodiscard]] ChaosIndex at(int position) const;

 private:
  int k_;
  int l_;
};

/// Gaussian coordinates xi_{k,l}, ordered as the index set.
using ChaosSample = std::vector<double>;

/// K*L i.i.d. standard normal draws from stream (master, stream).
[[nodiscard]] ChaosSample sample_chaos(const ChaosIndexSet& idx, std::uint64_t master,
                                       std::uint64_t stream = 0);

}  // namespace spde
