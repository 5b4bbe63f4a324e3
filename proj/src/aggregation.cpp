#include "horus/aggregation.hpp"

#include "horus/error.hpp"
#include "horus/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace horus {

namespace {

constexpr double kDenominatorEps = 1e-12;

enum class Factor { A, B };

const Matrix& factor_of(const PaddedPair& p, Factor f) { return f == Factor::A ? p.a : p.b; }
const Matrix& mask_of(const PaddedPair& p, Factor f) { return f == Factor::A ? p.mask_a : p.mask_b; }
const Matrix& factor_of(const GlobalLayer& l, Factor f) { return f == Factor::A ? l.a : l.b; }

// Column c holds client c (map order) reshaped; rows are matrix entries.
Matrix weighted_factor(const PaddedSet& padded, int layer, Factor f, const Vector& weights,
                       const Matrix& previous) {
  const auto n = static_cast<Eigen::Index>(padded.size());
  Matrix values(previous.size(), n);
  Matrix masks(previous.size(), n);
  Eigen::Index c = 0;
  for (const auto& [id, p] : padded) {
    const Matrix& m = factor_of(p[layer], f);
    if (m.rows() != previous.rows() || m.cols() != previous.cols())
      throw InvalidInput("aggregation: client " + std::to_string(id) + " is not padded to the global shape");
    values.col(c) = m.reshaped();
    masks.col(c) = mask_of(p[layer], f).reshaped();
    ++c;
  }
  const Vector fallback = previous.reshaped();
  const Vector out = kernels::parallel::weighted_masked_mean(values, masks, weights, fallback, kDenominatorEps);
  return out.reshaped(previous.rows(), previous.cols());
}

Vector weights_for(const ProjectionWeights& w, const PaddedSet& padded, int layer, Factor f) {
  Vector out(static_cast<Eigen::Index>(padded.size()));
  Eigen::Index c = 0;
  for (const auto& [id, _] : padded) {
    const auto it = w.per_client.find(id);
    if (it == w.per_client.end()) throw InvalidInput("weighted_masked_average: no weight for client " + std::to_string(id));
    out(c++) = f == Factor::A ? it->second[layer].alpha_a : it->second[layer].alpha_b;
  }
  return out;
}

PaddedUpdate global_as_padded(const GlobalState& g) {
  PaddedUpdate p;
  for (int i = 0; i < kNumLayers; ++i) {
    p[i].a = g.layers[i].a;
    p[i].b = g.layers[i].b;
    p[i].mask_a = Matrix::Ones(g.layers[i].a.rows(), g.layers[i].a.cols());
    p[i].mask_b = Matrix::Ones(g.layers[i].b.rows(), g.layers[i].b.cols());
  }
  return p;
}

GlobalState with_aggregate(const GlobalState& g, const Aggregate& agg) {
  GlobalState out = g;
  for (int i = 0; i < kNumLayers; ++i) {
    out.layers[i].a = agg[i].a;
    out.layers[i].b = agg[i].b;
  }
  ++out.round_index;
  return out;
}

}  // namespace

std::string aggregator_name(AggregatorKind::Kind kind) {
  switch (kind) {
    case AggregatorKind::Kind::Horus: return "horus";
    case AggregatorKind::Kind::FedAvg: return "fedavg";
    case AggregatorKind::Kind::Krum: return "krum";
    case AggregatorKind::Kind::MultiKrum: return "multi_krum";
    case AggregatorKind::Kind::CoordinateMedian: return "median";
    case AggregatorKind::Kind::TrimmedMean: return "trimmed_mean";
  }
  return "unknown";
}

AggregatorKind::Kind parse_aggregator_name(const std::string& name) {
  for (auto k : {AggregatorKind::Kind::Horus, AggregatorKind::Kind::FedAvg, AggregatorKind::Kind::Krum,
                 AggregatorKind::Kind::MultiKrum, AggregatorKind::Kind::CoordinateMedian,
                 AggregatorKind::Kind::TrimmedMean})
    if (aggregator_name(k) == name) return k;
  throw ConfigError("unknown aggregator '" + name + "'");
}

void check_feasible(const AggregatorKind& kind, int n) {
  using K = AggregatorKind::Kind;
  if (kind.kind == K::Krum || kind.kind == K::MultiKrum) {
    if (kind.f < 0 || 2 * kind.f + 2 >= n)
      throw ConfigError(aggregator_name(kind.kind) + ": need 0 <= f < n/2 - 1 (f=" + std::to_string(kind.f) +
                        ", n=" + std::to_string(n) + ")");
    if (kind.kind == K::MultiKrum && (kind.m < 1 || kind.m > n))
      throw ConfigError("multi_krum: m must lie in [1, n]");
  }
  if (kind.kind == K::TrimmedMean && !(kind.beta >= 0.0 && kind.beta < 0.5))
    throw ConfigError("trimmed_mean: beta must lie in [0, 0.5)");
}

Aggregate masked_average(const PaddedSet& padded, const GlobalState& previous) {
  ProjectionWeights uniform;
  for (const auto& [id, _] : padded) uniform.per_client[id] = {};
  return weighted_masked_average(padded, uniform, previous);
}

ProjectionWeights projection_weights(const PaddedSet& padded, const GlobalState& g) {
  ProjectionWeights w;
  for (const auto& l : g.layers)
    if (!l.direction_a || !l.direction_b) w.uniform_fallback = true;

  for (const auto& [id, p] : padded) {
    auto& alphas = w.per_client[id];
    for (int i = 0; i < kNumLayers; ++i) {
      const GlobalLayer& gl = g.layers[i];
      if (gl.direction_a)
        alphas[i].alpha_a = std::min(1.0, std::abs(first_right_singular_vector(p[i].a).v.dot(*gl.direction_a)));
      if (gl.direction_b)
        alphas[i].alpha_b = std::min(1.0, std::abs(first_right_singular_vector(p[i].b).v.dot(*gl.direction_b)));
    }
  }
  return w;
}

Aggregate weighted_masked_average(const PaddedSet& padded, const ProjectionWeights& weights,
                                  const GlobalState& previous) {
  if (padded.empty()) throw InvalidInput("weighted_masked_average: no clients");
  Aggregate agg;
  for (int i = 0; i < kNumLayers; ++i) {
    agg[i].a = weighted_factor(padded, i, Factor::A, weights_for(weights, padded, i, Factor::A), previous.layers[i].a);
    agg[i].b = weighted_factor(padded, i, Factor::B, weights_for(weights, padded, i, Factor::B), previous.layers[i].b);
  }
  return agg;
}

GlobalState update_global_directions(const GlobalState& g, const Aggregate& agg,
                                     std::vector<std::string>* degenerate) {
  GlobalState out = with_aggregate(g, agg);
  for (LayerId id : kLayers) {
    GlobalLayer& l = out.layer(id);
    for (Factor f : {Factor::A, Factor::B}) {
      const auto dir = first_right_singular_vector(factor_of(l, f));
      auto& slot = f == Factor::A ? l.direction_a : l.direction_b;
      if (dir.degenerate) {
        if (degenerate)
          degenerate->push_back(std::string(layer_name(id)) + (f == Factor::A ? ".A" : ".B") +
                                " aggregate is zero; direction kept");
      } else {
        slot = dir.v;
      }
    }
  }
  return out;
}

HorusRound horus_aggregate(const std::map<int, ClientUpdate>& updates, const GlobalState& g,
                           const HorusConfig& cfg) {
  if (updates.empty()) throw InvalidInput("horus_aggregate: no updates");
  HorusRound out;
  out.detection = detect(updates, cfg.detection);
  if (out.detection.skipped) out.events.push_back("detection skipped: fewer than two clients");

  PaddedSet benign;
  for (const auto& [id, u] : updates)
    if (!out.detection.flagged.contains(id)) benign.emplace(id, pad_to_global(u, cfg.global_dims));

  if (benign.empty()) {
    out.state = g;
    out.events.push_back("all clients flagged; aggregation skipped");
    return out;
  }
  out.weights = projection_weights(benign, g);
  if (out.weights.uniform_fallback) out.events.push_back("global directions unavailable; uniform weights");
  const Aggregate agg = weighted_masked_average(benign, out.weights, g);
  out.state = update_global_directions(g, agg, &out.events);
  out.aggregated = true;
  return out;
}

std::vector<double> krum_scores(const Matrix& sq_distances, int f) {
  const auto n = static_cast<int>(sq_distances.rows());
  const int neighbours = n - f - 2;
  if (neighbours < 1)
    throw ConfigError("krum: n - f - 2 must be >= 1 (n=" + std::to_string(n) + ", f=" + std::to_string(f) + ")");
  std::vector<double> scores(n);
  std::vector<double> row;
  for (int i = 0; i < n; ++i) {
    row.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) row.push_back(sq_distances(i, j));
    std::partial_sort(row.begin(), row.begin() + neighbours, row.end());
    scores[i] = std::accumulate(row.begin(), row.begin() + neighbours, 0.0);
  }
  return scores;
}

BaselineRound baseline_aggregate(const AggregatorKind& kind, const PaddedSet& padded, const GlobalState& g) {
  using K = AggregatorKind::Kind;
  if (padded.empty()) throw InvalidInput("baseline_aggregate: no clients");
  if (kind.kind == K::Horus) throw InvalidInput("baseline_aggregate: horus is not a baseline");

  BaselineRound out;
  if (kind.kind == K::FedAvg) {
    out.state = with_aggregate(g, masked_average(padded, g));
    return out;
  }

  const PaddedUpdate previous = global_as_padded(g);
  const Vector fallback = flatten(previous).values;
  const auto n = static_cast<Eigen::Index>(padded.size());
  Matrix values(fallback.size(), n);
  Matrix masks(fallback.size(), n);
  std::vector<int> ids;
  for (const auto& [id, p] : padded) {
    FlatUpdate flat = flatten(p);
    if (flat.values.size() != fallback.size())
      throw InvalidInput("baseline_aggregate: client " + std::to_string(id) + " is not padded to the global shape");
    values.col(static_cast<Eigen::Index>(ids.size())) = flat.values;
    masks.col(static_cast<Eigen::Index>(ids.size())) = flat.mask;
    ids.push_back(id);
  }

  Vector result;
  switch (kind.kind) {
    case K::Krum:
    case K::MultiKrum: {
      const std::vector<double> scores = krum_scores(kernels::parallel::pairwise_sq_distances(values, masks), kind.f);
      std::vector<int> order(scores.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
      const int take = kind.kind == K::Krum ? 1 : std::min<int>(kind.m, static_cast<int>(order.size()));
      Vector w = Vector::Zero(n);
      for (int i = 0; i < take; ++i) {
        w(order[i]) = 1.0;
        out.selected.push_back(ids[order[i]]);
      }
      result = kernels::parallel::weighted_masked_mean(values, masks, w, fallback, kDenominatorEps);
      break;
    }
    case K::CoordinateMedian:
      result = kernels::parallel::coordinate_median(values, masks, fallback);
      break;
    case K::TrimmedMean:
      result = kernels::parallel::coordinate_trimmed_mean(values, masks, kind.beta, fallback);
      break;
    default:
      throw InvariantViolation("baseline_aggregate: unhandled aggregator");
  }

  const PaddedUpdate merged = unflatten(result, previous);
  Aggregate agg;
  for (int i = 0; i < kNumLayers; ++i) agg[i] = {merged[i].a, merged[i].b};
  out.state = with_aggregate(g, agg);
  return out;
}

}  // namespace horus
