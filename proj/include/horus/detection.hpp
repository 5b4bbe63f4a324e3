#pragma once

#include "horus/lora.hpp"

#include <array>
#include <map>
#include <set>

namespace horus {

// Which LoRA factor feeds the spectral features. B exists only for the ablation study.
enum class FeatureSource { LoraA, LoraB };

struct LayerFeatures {
  double entropy = 0.0;  // spectral entropy of the singular values
  double ratio = 1.0;    // top-k energy ratio
  int k_used = 0;
};

struct SpectralFeatures {
  std::array<LayerFeatures, kNumLayers> layers;
};

struct HopsScore {
  int client_id = 0;
  double score = 0.0;
  std::array<double, kNumLayers> layer_scores{};
};

struct DetectionMode {
  enum class Kind { Percentile, TopM };
  Kind kind = Kind::Percentile;
  double p = 95.0;
  int m = 2;

  static DetectionMode percentile(double p) { return {Kind::Percentile, p, 0}; }
  static DetectionMode top_m(int m) { return {Kind::TopM, 0.0, m}; }
};

struct DetectionConfig {
  double lambda = 0.5;
  int k = 5;
  DetectionMode mode;
  FeatureSource source = FeatureSource::LoraA;
};

struct RoundDetection {
  std::map<int, SpectralFeatures> features;
  std::map<int, HopsScore> scores;
  double threshold = 0.0;
  std::set<int> flagged;
  DetectionMode mode;
  bool skipped = false;  // fewer than two clients: nothing scored, nobody flagged
};

/// Spectral features of every instrumented layer, from A only (B for the ablation).
SpectralFeatures client_features(const ClientUpdate& u, int k, FeatureSource source = FeatureSource::LoraA);

/// Poisoning scores against the round's own statistics. Per layer:
///   lambda |(1 - R) - mean(1 - R)| + (1 - lambda) |(H - mean H) / std H|
/// with the population standard deviation and the entropy term dropped when std H <= 1e-12.
/// A client's score is the mean over layers. With fewer than two clients every score is 0.
std::map<int, HopsScore> hops_scores(const std::map<int, SpectralFeatures>& features, double lambda);

/// Percentile mode flags scores strictly above the p-th percentile. TopM flags the m highest
/// (lower id first on ties) and reports the (m+1)-th highest score as the threshold.
RoundDetection flag_clients(const std::map<int, HopsScore>& scores, const DetectionMode& mode);

/// Features, scores and flags for one round's submissions.
RoundDetection detect(const std::map<int, ClientUpdate>& updates, const DetectionConfig& cfg);

}  // namespace horus
