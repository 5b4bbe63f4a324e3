#include "horus/kernels.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace horus;
namespace ks = horus::kernels::serial;
namespace kp = horus::kernels::parallel;

namespace {

struct Stack {
  Matrix values;
  Matrix masks;
  Vector weights;
  Vector fallback;
};

Stack random_stack(int entries, int clients, double coverage, std::mt19937_64& rng) {
  std::bernoulli_distribution cover(coverage);
  std::uniform_real_distribution<double> w(0.0, 2.0);
  Stack s{horus::testing::gaussian(entries, clients, rng), Matrix(entries, clients), Vector(clients),
          horus::testing::gaussian(entries, 1, rng).col(0)};
  for (Eigen::Index i = 0; i < s.masks.size(); ++i) s.masks.data()[i] = cover(rng) ? 1.0 : 0.0;
  for (int c = 0; c < clients; ++c) s.weights(c) = w(rng);
  return s;
}

std::vector<double> covered(const Stack& s, Eigen::Index i) {
  std::vector<double> xs;
  for (Eigen::Index c = 0; c < s.values.cols(); ++c)
    if (s.masks(i, c) != 0.0) xs.push_back(s.values(i, c));
  return xs;
}

}  // namespace

TEST(Kernels, SerialAndParallelAgreeBitForBit) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Stack s = random_stack(3000 + trial, 7, 0.7, rng);
    EXPECT_EQ(ks::weighted_masked_mean(s.values, s.masks, s.weights, s.fallback, 1e-12),
              kp::weighted_masked_mean(s.values, s.masks, s.weights, s.fallback, 1e-12));
    EXPECT_EQ(ks::coordinate_median(s.values, s.masks, s.fallback),
              kp::coordinate_median(s.values, s.masks, s.fallback));
    EXPECT_EQ(ks::coordinate_trimmed_mean(s.values, s.masks, 0.2, s.fallback),
              kp::coordinate_trimmed_mean(s.values, s.masks, 0.2, s.fallback));
    EXPECT_EQ(ks::pairwise_sq_distances(s.values, s.masks), kp::pairwise_sq_distances(s.values, s.masks));
  }
}

TEST(Kernels, WeightedMeanMatchesDirectLoop) {
  std::mt19937_64 rng(22);
  const Stack s = random_stack(200, 5, 0.5, rng);
  const Vector out = ks::weighted_masked_mean(s.values, s.masks, s.weights, s.fallback, 1e-12);
  for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
      num += s.weights(c) * s.masks(i, c) * s.values(i, c);
      den += s.weights(c) * s.masks(i, c);
    }
    if (den <= 1e-12)
      EXPECT_EQ(out(i), s.fallback(i));
    else
      EXPECT_NEAR(out(i), num / den, 1e-12);
  }
}

TEST(Kernels, MedianAndTrimmedMeanMatchSortedOracle) {
  std::mt19937_64 rng(23);
  const Stack s = random_stack(300, 9, 0.6, rng);
  const double beta = 0.25;
  const Vector med = ks::coordinate_median(s.values, s.masks, s.fallback);
  const Vector trim = ks::coordinate_trimmed_mean(s.values, s.masks, beta, s.fallback);
  for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
    std::vector<double> xs = covered(s, i);
    if (xs.empty()) {
      EXPECT_EQ(med(i), s.fallback(i));
      EXPECT_EQ(trim(i), s.fallback(i));
      continue;
    }
    std::sort(xs.begin(), xs.end());
    const std::size_t k = xs.size();
    const double m = k % 2 ? xs[k / 2] : 0.5 * (xs[k / 2 - 1] + xs[k / 2]);
    EXPECT_NEAR(med(i), m, 1e-12);
    const auto drop = static_cast<std::size_t>(std::floor(beta * static_cast<double>(k) + 1e-9));
    double sum = 0.0;
    for (std::size_t j = drop; j < k - drop; ++j) sum += xs[j];
    EXPECT_NEAR(trim(i), sum / static_cast<double>(k - 2 * drop), 1e-12);
  }
}

TEST(Kernels, PairwiseDistancesUseCommonSupport) {
  Matrix v(3, 2), m(3, 2);
  v << 1, 4, 2, 6, 100, -100;
  m << 1, 1, 1, 1, 1, 0;
  const Matrix d = ks::pairwise_sq_distances(v, m);
  EXPECT_DOUBLE_EQ(d(0, 1), 9.0 + 16.0);
  EXPECT_DOUBLE_EQ(d(1, 0), d(0, 1));
  EXPECT_DOUBLE_EQ(d(0, 0), 0.0);
}

TEST(Kernels, ZeroWeightsFallBack) {
  std::mt19937_64 rng(24);
  Stack s = random_stack(50, 4, 1.0, rng);
  s.weights.setZero();
  EXPECT_EQ(ks::weighted_masked_mean(s.values, s.masks, s.weights, s.fallback, 1e-12), s.fallback);
  EXPECT_GE(kernels::max_threads(), 1);
}
