#include "horus/detection.hpp"

#include "horus/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace horus {

SpectralFeatures client_features(const ClientUpdate& u, int k, FeatureSource source) {
  if (k < 1) throw InvalidInput("client_features: k must be >= 1");
  SpectralFeatures f;
  for (int i = 0; i < kNumLayers; ++i) {
    const Matrix& m = source == FeatureSource::LoraA ? u.layers[i].a : u.layers[i].b;
    const Spectrum s = spectrum_of(m);
    f.layers[i].entropy = spectral_entropy(s);
    f.layers[i].ratio = topk_energy_ratio(s, k);
    f.layers[i].k_used = std::min(k, s.nominal_rank);
  }
  return f;
}

std::map<int, HopsScore> hops_scores(const std::map<int, SpectralFeatures>& features, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidInput("hops_scores: lambda outside [0, 1]");
  std::map<int, HopsScore> out;
  for (const auto& [id, _] : features) out[id].client_id = id;
  const auto n = static_cast<double>(features.size());
  if (features.size() < 2) return out;

  for (int layer = 0; layer < kNumLayers; ++layer) {
    double mean_gap = 0.0;
    double mean_h = 0.0;
    for (const auto& [id, f] : features) {
      mean_gap += 1.0 - f.layers[layer].ratio;
      mean_h += f.layers[layer].entropy;
    }
    mean_gap /= n;
    mean_h /= n;
    double var_h = 0.0;
    for (const auto& [id, f] : features) {
      const double d = f.layers[layer].entropy - mean_h;
      var_h += d * d;
    }
    const double std_h = std::sqrt(var_h / n);

    for (const auto& [id, f] : features) {
      const double concentration = std::abs((1.0 - f.layers[layer].ratio) - mean_gap);
      const double dispersion = std_h > 1e-12 ? std::abs((f.layers[layer].entropy - mean_h) / std_h) : 0.0;
      out[id].layer_scores[layer] = lambda * concentration + (1.0 - lambda) * dispersion;
    }
  }
  for (auto& [id, s] : out) {
    double sum = 0.0;
    for (double x : s.layer_scores) sum += x;
    s.score = sum / kNumLayers;
  }
  return out;
}

RoundDetection flag_clients(const std::map<int, HopsScore>& scores, const DetectionMode& mode) {
  if (scores.empty()) throw InvalidInput("flag_clients: no scores");
  RoundDetection det;
  det.scores = scores;
  det.mode = mode;

  if (mode.kind == DetectionMode::Kind::Percentile) {
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& [id, s] : scores) values.push_back(s.score);
    det.threshold = percentile(values, mode.p);
    for (const auto& [id, s] : scores)
      if (s.score > det.threshold) det.flagged.insert(id);
    return det;
  }

  if (mode.m < 0) throw InvalidInput("flag_clients: m must be non-negative");
  std::vector<const HopsScore*> order;
  for (const auto& [id, s] : scores) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const HopsScore* a, const HopsScore* b) { return a->score > b->score; });
  const auto m = std::min<std::size_t>(static_cast<std::size_t>(mode.m), order.size());
  for (std::size_t i = 0; i < m; ++i) det.flagged.insert(order[i]->client_id);
  det.threshold = m < order.size() ? order[m]->score : 0.0;
  return det;
}

RoundDetection detect(const std::map<int, ClientUpdate>& updates, const DetectionConfig& cfg) {
  std::map<int, SpectralFeatures> features;
  for (const auto& [id, u] : updates) features[id] = client_features(u, cfg.k, cfg.source);
  if (updates.size() < 2) {
    RoundDetection det;
    det.features = std::move(features);
    for (const auto& [id, _] : updates) det.scores[id].client_id = id;
    det.mode = cfg.mode;
    det.skipped = true;
    return det;
  }
  RoundDetection det = flag_clients(hops_scores(features, cfg.lambda), cfg.mode);
  det.features = std::move(features);
  return det;
}

}  // namespace horus
