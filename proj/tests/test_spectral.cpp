#include "horus/error.hpp"
#include "horus/spectral.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace {

using horus::Matrix;
using horus::Spectrum;
using horus::Vector;

Spectrum spec(std::vector<double> s) {
  Spectrum out;
  out.nominal_rank = static_cast<int>(s.size());
  out.singular_values = std::move(s);
  return out;
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Plain trapezoid integration of the standard normal density from -10.
double cdf_by_quadrature(double x) {
  const int steps = 200000;
  const double lo = -10.0;
  const double h = (x - lo) / steps;
  double sum = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double t = lo + i * h;
    const double f = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
    sum += (i == 0 || i == steps) ? 0.5 * f : f;
  }
  return sum * h;
}

}  // namespace

TEST(ThinSvd, IdentityAndDiagonal) {
  const auto eye = horus::spectrum_of(Matrix::Identity(3, 3));
  ASSERT_EQ(eye.singular_values.size(), 3u);
  for (double s : eye.singular_values) EXPECT_NEAR(s, 1.0, 1e-12);

  Matrix d(2, 2);
  d << 3, 0, 0, 1;
  const auto ds = horus::spectrum_of(d);
  EXPECT_NEAR(ds.singular_values[0], 3.0, 1e-12);
  EXPECT_NEAR(ds.singular_values[1], 1.0, 1e-12);
}

TEST(ThinSvd, ReconstructsRandomMatrices) {
  std::mt19937_64 rng(7);
  for (auto [p, q] : {std::pair{5, 7}, std::pair{7, 5}, std::pair{1, 4}, std::pair{8, 64}}) {
    const Matrix m = random_matrix(p, q, rng);
    const auto svd = horus::thin_svd(m);
    const int t = std::min(p, q);
    ASSERT_EQ(svd.left.cols(), t);
    ASSERT_EQ(svd.right.cols(), t);
    ASSERT_EQ(svd.spectrum.nominal_rank, t);
    Vector sigma = Eigen::Map<const Vector>(svd.spectrum.singular_values.data(), t);
    const Matrix rebuilt = svd.left * sigma.asDiagonal() * svd.right.transpose();
    EXPECT_LE((rebuilt - m).norm(), 1e-8 * std::max(1.0, m.norm()));
    EXPECT_LE((svd.left.transpose() * svd.left - Matrix::Identity(t, t)).norm(), 1e-8);
    EXPECT_LE((svd.right.transpose() * svd.right - Matrix::Identity(t, t)).norm(), 1e-8);
    EXPECT_TRUE(std::is_sorted(svd.spectrum.singular_values.rbegin(), svd.spectrum.singular_values.rend()));
  }
}

TEST(ThinSvd, RejectsBadInput) {
  Matrix m = Matrix::Ones(2, 2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(horus::thin_svd(m), horus::InvalidInput);
  m(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(horus::spectrum_of(m), horus::InvalidInput);
  EXPECT_THROW(horus::thin_svd(Matrix(0, 3)), horus::InvalidInput);
}

TEST(SpectralEntropy, Examples) {
  EXPECT_NEAR(horus::spectral_entropy(spec({1, 1, 1, 1})), std::log(4.0), 1e-9);
  EXPECT_NEAR(horus::spectral_entropy(spec({5, 0, 0, 0})), 0.0, 1e-9);
  const double expected = -0.75 * std::log(0.75) - 0.25 * std::log(0.25);
  EXPECT_NEAR(horus::spectral_entropy(spec({3, 1, 0, 0})), expected, 1e-12);
  EXPECT_EQ(horus::spectral_entropy(spec({0, 0, 0})), 0.0);
}

TEST(TopkRatio, Examples) {
  EXPECT_DOUBLE_EQ(horus::topk_energy_ratio(spec({3, 1, 0, 0}), 4), 1.0);
  EXPECT_DOUBLE_EQ(horus::topk_energy_ratio(spec({1, 1, 1, 1}), 1), 0.25);
  EXPECT_DOUBLE_EQ(horus::topk_energy_ratio(spec({3, 1, 0, 0}), 1), 0.75);
  EXPECT_DOUBLE_EQ(horus::topk_energy_ratio(spec({3, 1, 0, 0}), 99), 1.0);  // clamped
  EXPECT_DOUBLE_EQ(horus::topk_energy_ratio(spec({0, 0}), 1), 1.0);
  EXPECT_THROW(horus::topk_energy_ratio(spec({1}), 0), horus::InvalidInput);
}

TEST(SpectralFeatures, BoundsAndMonotoneOnRandomSpectra) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(1, 12);
  std::exponential_distribution<double> mag(1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(len(rng));
    for (double& v : s) v = mag(rng);
    std::sort(s.rbegin(), s.rend());
    const Spectrum sp = spec(s);
    const double h = horus::spectral_entropy(sp);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(s.size())) + 1e-12);
    double prev = 0.0;
    for (int k = 1; k <= sp.nominal_rank; ++k) {
      const double r = horus::topk_energy_ratio(sp, k);
      EXPECT_GE(r, prev - 1e-15);
      EXPECT_LE(r, 1.0 + 1e-15);
      prev = r;
    }
    EXPECT_NEAR(prev, 1.0, 1e-12);
  }
}

TEST(SpectralFeatures, ScaleAndPaddingInvariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix m = random_matrix(8, 20, rng);
    const auto base = horus::spectrum_of(m);
    const auto scaled = horus::spectrum_of(37.5 * m);
    Matrix padded = Matrix::Zero(12, 31);
    padded.topLeftCorner(8, 20) = m;
    const auto pad = horus::spectrum_of(padded);
    const double h = horus::spectral_entropy(base);
    EXPECT_NEAR(horus::spectral_entropy(scaled), h, 1e-10);
    EXPECT_NEAR(horus::spectral_entropy(pad), h, 1e-10);
    for (int k = 1; k <= 8; ++k) {
      const double r = horus::topk_energy_ratio(base, k);
      EXPECT_NEAR(horus::topk_energy_ratio(scaled, k), r, 1e-10);
      EXPECT_NEAR(horus::topk_energy_ratio(pad, k), r, 1e-10);
    }
  }
}

TEST(FirstRightSingularVector, DiagonalAndRankOne) {
  Matrix d(2, 2);
  d << 3, 0, 0, 1;
  auto v = horus::first_right_singular_vector(d);
  EXPECT_FALSE(v.degenerate);
  EXPECT_NEAR(v.v(0), 1.0, 1e-12);
  EXPECT_NEAR(v.v(1), 0.0, 1e-12);

  Vector u(3), w(4);
  u << 1, -2, 0.5;
  w << -0.3, 4, 1, 2;
  v = horus::first_right_singular_vector(u * w.transpose());
  EXPECT_NEAR(std::abs(v.v.dot(w.normalized())), 1.0, 1e-12);
  EXPECT_GT(v.v(1), 0.0);  // largest-magnitude entry made positive
}

TEST(FirstRightSingularVector, MatchesPowerIteration) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_matrix(4, 6, rng);
    const Matrix g = m.transpose() * m;
    Vector x = Vector::Ones(6).normalized();
    for (int it = 0; it < 100000; ++it) {
      Vector next = (g * x).normalized();
      const double residual = (next - x).norm();
      x = next;
      if (residual < 1e-12) break;
    }
    const auto v = horus::first_right_singular_vector(m);
    EXPECT_NEAR(v.v.norm(), 1.0, 1e-12);
    EXPECT_GE(std::abs(v.v.dot(x)), 1.0 - 1e-8);
  }
}

TEST(FirstRightSingularVector, ZeroMatrixIsDegenerate) {
  const auto v = horus::first_right_singular_vector(Matrix::Zero(3, 5));
  EXPECT_TRUE(v.degenerate);
  ASSERT_EQ(v.v.size(), 5);
  EXPECT_EQ(v.v(0), 1.0);
  EXPECT_EQ(v.v.tail(4).norm(), 0.0);
}

TEST(Percentile, Examples) {
  const std::vector<double> five{5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(horus::percentile(five, 50), 3.0);
  EXPECT_DOUBLE_EQ(horus::percentile(five, 100), 5.0);
  EXPECT_DOUBLE_EQ(horus::percentile(five, 0), 1.0);
  // rank 2.85 between 0.3 and 0.9
  const std::vector<double> four{0.1, 0.2, 0.3, 0.9};
  EXPECT_NEAR(horus::percentile(four, 95), 0.3 + 0.85 * 0.6, 1e-12);
  EXPECT_THROW(horus::percentile(std::vector<double>{}, 50), horus::InvalidInput);
}

TEST(Percentile, AgreesWithIndependentInterpolation) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<int> len(1, 30);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> xs(len(rng));
    for (double& x : xs) x = u(rng);
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    for (double p : {0.0, 12.5, 50.0, 95.0, 99.0, 100.0}) {
      const double pos = (sorted.size() - 1) * p / 100.0;
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = static_cast<std::size_t>(std::ceil(pos));
      const double expected = sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
      EXPECT_NEAR(horus::percentile(xs, p), expected, 1e-12);
    }
  }
}

TEST(InverseNormalCdf, Examples) {
  EXPECT_NEAR(horus::inverse_normal_cdf(0.5), 0.0, 1e-12);
  EXPECT_NEAR(horus::inverse_normal_cdf(0.841344746), 1.0, 1e-4);
  EXPECT_NEAR(cdf_by_quadrature(horus::inverse_normal_cdf(0.841344746)), 0.841344746, 1e-6);
  for (double q : {0.001, 0.02, 0.3, 0.49}) {
    EXPECT_NEAR(horus::inverse_normal_cdf(q), -horus::inverse_normal_cdf(1.0 - q), 1e-9);
  }
  // deep tail: 1 - q carries a rounding error of ~1e-16, amplified by 1/density(6) ~ 1e8
  EXPECT_NEAR(horus::inverse_normal_cdf(1e-9), -horus::inverse_normal_cdf(1.0 - 1e-9), 1e-7);
  EXPECT_NEAR(horus::normal_cdf(horus::inverse_normal_cdf(1e-9)) / 1e-9, 1.0, 1e-6);
}

TEST(InverseNormalCdf, RoundTripsThroughCdf) {
  for (int i = 1; i < 1000; ++i) {
    const double q = i / 1000.0;
    EXPECT_NEAR(horus::normal_cdf(horus::inverse_normal_cdf(q)), q, 1e-6);
  }
  EXPECT_THROW(horus::inverse_normal_cdf(0.0), horus::InvalidInput);
  EXPECT_THROW(horus::inverse_normal_cdf(1.0), horus::InvalidInput);
  EXPECT_THROW(horus::inverse_normal_cdf(std::nan("")), horus::InvalidInput);
}
