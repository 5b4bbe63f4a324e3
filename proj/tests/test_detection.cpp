#include "horus/detection.hpp"
#include "horus/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace horus;
using horus::testing::arch_dims;
using horus::testing::random_update;
using horus::testing::toy_global;

namespace {

SpectralFeatures uniform_features(double one_minus_r, double h) {
  SpectralFeatures f;
  for (auto& l : f.layers) l = LayerFeatures{h, 1.0 - one_minus_r, 5};
  return f;
}

std::map<int, ClientUpdate> cohort(int n, int rank, std::mt19937_64& rng) {
  std::map<int, ClientUpdate> out;
  for (int c = 0; c < n; ++c) out.emplace(c, random_update(c, c % 2, arch_dims(c % 2), rank, rng));
  return out;
}

std::map<int, HopsScore> scores_of(std::initializer_list<double> xs) {
  std::map<int, HopsScore> out;
  int id = 0;
  for (double x : xs) {
    out[id] = HopsScore{id, x, {x, x}};
    ++id;
  }
  return out;
}

}  // namespace

TEST(ClientFeatures, RankOneAndScale) {
  ClientUpdate u;
  Vector p(3), q(5), s(3), t(9);
  p << 1, 2, 3;
  q << 1, -1, 0.5, 2, 0;
  s << -1, 0, 4;
  t << 1, 1, 1, 1, 1, 1, 1, 1, 2;
  u.layers[0] = LoraPair{p * q.transpose(), Matrix::Ones(4, 3)};
  u.layers[1] = LoraPair{s * t.transpose(), Matrix::Ones(4, 3)};
  const SpectralFeatures f = client_features(u, 5);
  for (const auto& l : f.layers) {
    EXPECT_NEAR(l.ratio, 1.0, 1e-12);
    EXPECT_NEAR(l.entropy, 0.0, 1e-7);
    EXPECT_EQ(l.k_used, 3);  // clamped to rank
  }

  std::mt19937_64 rng(31);
  const ClientUpdate r = random_update(0, 0, arch_dims(0), 3, rng);
  ClientUpdate scaled = r;
  for (auto& l : scaled.layers) l.a *= 10.0;
  const SpectralFeatures a = client_features(r, 2);
  const SpectralFeatures b = client_features(scaled, 2);
  for (int i = 0; i < kNumLayers; ++i) {
    EXPECT_NEAR(a.layers[i].entropy, b.layers[i].entropy, 1e-10);
    EXPECT_NEAR(a.layers[i].ratio, b.layers[i].ratio, 1e-10);
  }
}

TEST(ClientFeatures, MatchesTwoStepOracle) {
  std::mt19937_64 rng(32);
  const ClientUpdate u = random_update(0, 1, {LayerDims{64, 48}, LayerDims{48, 10}}, 8, rng);
  const SpectralFeatures f = client_features(u, 5);
  for (int i = 0; i < kNumLayers; ++i) {
    Eigen::JacobiSVD<Matrix> svd(u.layers[i].a);
    const Vector sv = svd.singularValues();
    const double total = sv.sum();
    double h = 0.0;
    for (Eigen::Index j = 0; j < sv.size(); ++j) {
      const double p = sv(j) / total;
      if (p > 0) h -= p * std::log(p);
    }
    EXPECT_NEAR(f.layers[i].entropy, h, 1e-10);
    EXPECT_NEAR(f.layers[i].ratio, sv.head(5).sum() / total, 1e-10);
  }
}

TEST(HopsScores, HandOracle) {
  std::map<int, SpectralFeatures> feats{
      {0, uniform_features(0.1, 1.5)}, {1, uniform_features(0.1, 1.5)}, {2, uniform_features(0.4, 1.5)}};
  const auto s = hops_scores(feats, 0.7);
  EXPECT_NEAR(s.at(0).score, 0.07, 1e-12);
  EXPECT_NEAR(s.at(1).score, 0.07, 1e-12);
  EXPECT_NEAR(s.at(2).score, 0.14, 1e-12);
  EXPECT_NEAR(s.at(2).layer_scores[0], 0.14, 1e-12);
}

TEST(HopsScores, EndpointsAndIdenticalClients) {
  std::map<int, SpectralFeatures> same{{0, uniform_features(0.3, 1.0)}, {1, uniform_features(0.3, 1.0)}};
  for (const auto& [id, s] : hops_scores(same, 0.4)) EXPECT_EQ(s.score, 0.0);

  std::map<int, SpectralFeatures> feats{
      {0, uniform_features(0.1, 1.0)}, {1, uniform_features(0.2, 2.0)}, {2, uniform_features(0.6, 3.0)}};
  const auto ratio_only = hops_scores(feats, 1.0);
  const auto entropy_only = hops_scores(feats, 0.0);
  const double mu = 0.3;
  const double sigma = std::sqrt(2.0 / 3.0);
  const double one_minus_r[] = {0.1, 0.2, 0.6};
  const double h[] = {1.0, 2.0, 3.0};
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(ratio_only.at(c).score, std::abs(one_minus_r[c] - mu), 1e-12);
    EXPECT_NEAR(entropy_only.at(c).score, std::abs((h[c] - 2.0) / sigma), 1e-12);
  }
  std::map<int, SpectralFeatures> lone{{4, uniform_features(0.9, 0.1)}};
  EXPECT_EQ(hops_scores(lone, 0.5).at(4).score, 0.0);
}

TEST(FlagClients, PercentileIsStrict) {
  const auto equal = scores_of({0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3});
  EXPECT_TRUE(flag_clients(equal, DetectionMode::percentile(95)).flagged.empty());

  const auto spread = scores_of({0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.9, 0.95});
  const RoundDetection d = flag_clients(spread, DetectionMode::percentile(95));
  std::vector<double> xs;
  for (const auto& [id, s] : spread) xs.push_back(s.score);
  const double theta = percentile(xs, 95);
  EXPECT_DOUBLE_EQ(d.threshold, theta);
  std::set<int> expected;
  for (const auto& [id, s] : spread)
    if (s.score > theta) expected.insert(id);
  EXPECT_EQ(d.flagged, expected);
  EXPECT_EQ(d.flagged, (std::set<int>{9}));
}

TEST(FlagClients, TopM) {
  const auto s = scores_of({0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.9, 0.95});
  const RoundDetection d = flag_clients(s, DetectionMode::top_m(2));
  EXPECT_EQ(d.flagged, (std::set<int>{8, 9}));
  EXPECT_DOUBLE_EQ(d.threshold, 0.01);

  const auto ties = scores_of({0.5, 0.5, 0.5, 0.1});
  EXPECT_EQ(flag_clients(ties, DetectionMode::top_m(2)).flagged, (std::set<int>{0, 1}));
  const RoundDetection all = flag_clients(ties, DetectionMode::top_m(7));
  EXPECT_EQ(all.flagged.size(), 4u);
  EXPECT_EQ(all.threshold, 0.0);
}

TEST(Detect, SkippedBelowTwoClients) {
  std::mt19937_64 rng(33);
  auto one = cohort(1, 3, rng);
  DetectionConfig cfg;
  cfg.mode = DetectionMode::top_m(1);
  const RoundDetection d = detect(one, cfg);
  EXPECT_TRUE(d.skipped);
  EXPECT_TRUE(d.flagged.empty());
}

TEST(Detect, InvariantToRescalingPaddingAndB) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  DetectionConfig cfg;
  cfg.lambda = 0.3;
  cfg.k = 2;
  cfg.mode = DetectionMode::percentile(80);
  for (int trial = 0; trial < 20; ++trial) {
    const auto base = cohort(6, 3, rng);
    auto rescaled = base;
    auto padded = base;
    auto poisoned_b = base;
    for (auto& [id, u] : rescaled)
      for (auto& l : u.layers) l.a *= scale(rng);
    for (auto& [id, u] : padded) {
      const PaddedUpdate p = pad_to_global(u, toy_global());
      for (int i = 0; i < kNumLayers; ++i) u.layers[i] = LoraPair{p[i].a, p[i].b};
    }
    for (auto& [id, u] : poisoned_b) u.layers[1].b(0, 0) = std::numeric_limits<double>::quiet_NaN();

    const RoundDetection d0 = detect(base, cfg);
    for (const auto* other : {&rescaled, &padded, &poisoned_b}) {
      const RoundDetection d1 = detect(*other, cfg);
      EXPECT_EQ(d0.flagged, d1.flagged);
      for (const auto& [id, s] : d0.scores) EXPECT_NEAR(s.score, d1.scores.at(id).score, 1e-10);
    }
  }
}

TEST(Detect, PermutationSymmetry) {
  std::mt19937_64 rng(35);
  const auto base = cohort(5, 3, rng);
  std::map<int, ClientUpdate> relabelled;
  const int perm[] = {3, 0, 4, 1, 2};
  for (const auto& [id, u] : base) {
    ClientUpdate v = u;
    v.client_id = perm[id];
    relabelled.emplace(perm[id], v);
  }
  DetectionConfig cfg;
  const RoundDetection a = detect(base, cfg);
  const RoundDetection b = detect(relabelled, cfg);
  EXPECT_DOUBLE_EQ(a.threshold, b.threshold);
  for (const auto& [id, s] : a.scores) EXPECT_NEAR(s.score, b.scores.at(perm[id]).score, 1e-12);
}

TEST(Detect, LoraBSourceReadsB) {
  std::mt19937_64 rng(36);
  auto base = cohort(4, 3, rng);
  base.at(0).layers[0].b(0, 0) = std::numeric_limits<double>::quiet_NaN();
  DetectionConfig cfg;
  cfg.source = FeatureSource::LoraB;
  EXPECT_THROW(detect(base, cfg), InvalidInput);
}
