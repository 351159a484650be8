#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "spde/error.hpp"
#include "spde/stochastics.hpp"

using namespace spde;

TEST_SUITE("stochastics") {

TEST_CASE("time basis values") {
  const TimeBasis tb(1.0, 4);
  CHECK(tb.eval(1, 0.5) == doctest::Approx(1.0));
  CHECK(tb.eval(2, 0.0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(tb.eval(3, 1.0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(std::abs(tb.eval(2, 0.5)) < 1e-15);
  CHECK_THROWS_AS((void)tb.eval(0, 0.5), Error);
  CHECK_THROWS_AS((void)tb.eval(5, 0.5), Error);
  CHECK_THROWS_AS((void)tb.eval(1, 1.5), Error);
  CHECK_THROWS_AS(TimeBasis(0.0, 3), Error);
  CHECK_THROWS_AS(TimeBasis(1.0, 0), Error);
}

TEST_CASE("time basis Gram matrix is the identity (Simpson oracle)") {
  const double T = 1.7;
  const TimeBasis tb(T, 16);
  const int n = 10000;
  const double h = T / n;
  for (int a = 1; a <= 16; ++a) {
    for (int b = a; b <= 16; ++b) {
      double s = tb.eval(a, 0.0) * tb.eval(b, 0.0) + tb.eval(a, T) * tb.eval(b, T);
      for (int i = 1; i < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * tb.eval(a, i * h) * tb.eval(b, i * h);
      CHECK(std::abs(s * h / 3.0 - (a == b ? 1.0 : 0.0)) < 1e-10);
    }
  }
}

TEST_CASE("noise amplitudes") {
  const NoiseSpectrum q{8, 0.5, 0.01};
  CHECK(q.amplitude(1) == 1.0);
  CHECK(q.amplitude(2) == doctest::Approx(0.2482729).epsilon(1e-6));
  CHECK(q.amplitude(3) < q.amplitude(2));
  CHECK_THROWS_AS((void)q.amplitude(0), Error);
  CHECK_THROWS_AS((void)q.amplitude(9), Error);
  // Partial sums stay below the full p-series bound.
  double partial = 0.0;
  for (double v : q.amplitudes()) partial += v;
  double bound = 0.0;
  for (int l = 1; l <= 200000; ++l) bound += std::pow(l, -2.01);
  CHECK(partial < bound);
}

TEST_CASE("chaos index ordering is k-major") {
  const ChaosIndexSet idx(16, 8);
  CHECK(idx.size() == 128);
  CHECK(idx.position({1, 1}) == 0);
  CHECK(idx.position({2, 1}) == 8);
  CHECK(idx.position({16, 8}) == 127);
  for (int p = 0; p < idx.size(); ++p) CHECK(idx.position(idx.at(p)) == p);
  CHECK_THROWS_AS((void)idx.position({17, 1}), Error);
}

TEST_CASE("chaos samples are deterministic and standard normal") {
  const ChaosIndexSet idx(2, 2);
  CHECK(sample_chaos(idx, 7, 3) == sample_chaos(idx, 7, 3));
  CHECK(sample_chaos(idx, 7, 3) != sample_chaos(idx, 7, 4));

  const int M = 100000;
  std::vector<std::vector<double>> cols(4);
  for (int m = 0; m < M; ++m) {
    const auto xi = sample_chaos(idx, 11, static_cast<std::uint64_t>(m));
    for (int c = 0; c < 4; ++c) cols[c].push_back(xi[c]);
  }
  std::vector<double> mean(4, 0.0);
  std::vector<double> var(4, 0.0);
  for (int c = 0; c < 4; ++c) {
    for (double v : cols[c]) mean[c] += v;
    mean[c] /= M;
    for (double v : cols[c]) var[c] += (v - mean[c]) * (v - mean[c]);
    var[c] /= (M - 1);
    CHECK(std::abs(mean[c]) < 4.0 / std::sqrt(M));
    CHECK(var[c] > 0.98);
    CHECK(var[c] < 1.02);
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      double cov = 0.0;
      for (int m = 0; m < M; ++m) cov += (cols[a][m] - mean[a]) * (cols[b][m] - mean[b]);
      cov /= (M - 1);
      CHECK(std::abs(cov / std::sqrt(var[a] * var[b])) < 0.02);
    }
  }
  // Two-sample Kolmogorov-Smirnov between coordinates, 1% critical value.
  std::vector<double> x = cols[0];
  std::vector<double> y = cols[3];
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double d = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] <= y[j]) ++i;
    else ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / M - static_cast<double>(j) / M));
  }
  CHECK(d < 1.628 * std::sqrt(2.0 / M));
}

TEST_CASE("random streams are keyed by master and ids") {
  RandomStream a(5, {1, 2});
  RandomStream b(5, {1, 2});
  RandomStream c(5, {2, 1});
  const double va = a.normal();
  CHECK(va == b.normal());
  CHECK(va != c.normal());
}

}
