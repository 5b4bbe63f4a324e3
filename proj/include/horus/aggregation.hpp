#pragma once

#include "horus/detection.hpp"
#include "horus/lora.hpp"

#include <map>
#include <string>
#include <vector>

namespace horus {

struct LayerAggregate {
  Matrix a;
  Matrix b;
};
using Aggregate = std::array<LayerAggregate, kNumLayers>;

struct LayerAlpha {
  double alpha_a = 1.0;
  double alpha_b = 1.0;
};

struct ProjectionWeights {
  std::map<int, std::array<LayerAlpha, kNumLayers>> per_client;
  bool uniform_fallback = false;  // global directions were not yet available
};

struct AggregatorKind {
  enum class Kind { Horus, FedAvg, Krum, MultiKrum, CoordinateMedian, TrimmedMean };
  Kind kind = Kind::Horus;
  int f = 0;          // Krum / MultiKrum: assumed number of Byzantine clients
  int m = 1;          // MultiKrum: number of selected clients
  double beta = 0.1;  // TrimmedMean: fraction trimmed from each tail

  static AggregatorKind horus() { return {Kind::Horus}; }
  static AggregatorKind fedavg() { return {Kind::FedAvg}; }
  static AggregatorKind krum(int f) { return {Kind::Krum, f}; }
  static AggregatorKind multi_krum(int f, int m) { return {Kind::MultiKrum, f, m}; }
  static AggregatorKind median() { return {Kind::CoordinateMedian}; }
  static AggregatorKind trimmed_mean(double beta) { return {Kind::TrimmedMean, 0, 1, beta}; }
};

std::string aggregator_name(AggregatorKind::Kind kind);
AggregatorKind::Kind parse_aggregator_name(const std::string& name);

/// Rejects parameters no round with `n` clients could satisfy (f < n/2 - 1, 0 <= beta < 0.5, ...).
void check_feasible(const AggregatorKind& kind, int n);

using PaddedSet = std::map<int, PaddedUpdate>;

/// Element-wise masked mean. Entries nobody covers keep the value from `previous`.
Aggregate masked_average(const PaddedSet& padded, const GlobalState& previous);

/// |<v_c, v_g>| per client and layer, v_c the first right singular vector of the padded matrix.
/// Falls back to all-ones (uniform_fallback) when `g` has no directions yet.
ProjectionWeights projection_weights(const PaddedSet& padded, const GlobalState& g);

/// Masked mean with per-client factor weights. Entries whose weighted coverage is <= 1e-12 keep
/// the value from `previous`.
Aggregate weighted_masked_average(const PaddedSet& padded, const ProjectionWeights& weights,
                                  const GlobalState& previous);

/// Stores the aggregate, re-derives the global directions from it and advances the round.
/// A zero aggregate leaves that direction untouched and is reported through `degenerate`.
GlobalState update_global_directions(const GlobalState& g, const Aggregate& agg,
                                     std::vector<std::string>* degenerate = nullptr);

struct HorusConfig {
  DetectionConfig detection;
  LayerShapes global_dims{};
};

struct HorusRound {
  GlobalState state;
  RoundDetection detection;
  ProjectionWeights weights;
  bool aggregated = false;  // false when every client was flagged
  std::vector<std::string> events;
};

/// detect -> drop flagged -> pad -> projection weights (uniform until directions exist)
/// -> weighted masked average -> new directions.
HorusRound horus_aggregate(const std::map<int, ClientUpdate>& updates, const GlobalState& g,
                           const HorusConfig& cfg);

struct BaselineRound {
  GlobalState state;
  std::vector<int> selected;  // Krum / MultiKrum picks, in score order
};

/// Krum score of each client: sum of squared distances to its n - f - 2 nearest neighbours.
std::vector<double> krum_scores(const Matrix& sq_distances, int f);

/// Classical rules over mask-aligned flattened updates. Krum distances use the pairwise common
/// support. Uncovered entries keep their previous global value.
BaselineRound baseline_aggregate(const AggregatorKind& kind, const PaddedSet& padded, const GlobalState& g);

}  // namespace horus
