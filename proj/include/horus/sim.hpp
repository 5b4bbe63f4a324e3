#pragma once

#include "horus/aggregation.hpp"
#include "horus/attacks.hpp"
#include "horus/detection.hpp"
#include "horus/lora.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace horus {

// ---------------------------------------------------------------------------------------------
// Synthetic task

struct TaskConfig {
  int feature_dim = 64;
  int num_classes = 10;
  int samples_per_class = 6000;
  int test_per_class = 100;
  double class_separation = 3.0;
  double noise_scale = 1.0;
  double dirichlet_alpha = 0.3;
  std::uint64_t seed = 1;
};

struct Dataset {
  Matrix x;  // feature_dim x n, one sample per column
  std::vector<int> y;

  int size() const { return static_cast<int>(y.size()); }
  bool empty() const { return y.empty(); }
  Dataset subset(const std::vector<int>& indices) const;
};

struct Task {
  Dataset pool;  // training pool to be partitioned across clients
  Dataset test;  // class-balanced global test set
  Matrix class_means;  // feature_dim x num_classes
};

/// Gaussian clusters around random unit directions scaled by class_separation.
Task generate_task(const TaskConfig& cfg);

/// Per class, Dirichlet(alpha) proportions over clients (Gamma(alpha, 1) normalisation). Redraws up
/// to 100 times while some client is empty, then tops empty clients up from the largest shards.
/// Returns pool indices per client; shards are disjoint and cover the pool.
std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels, int num_classes, int clients,
                                                  double alpha, std::mt19937_64& rng);

/// Marsaglia-Tsang Gamma(shape, 1), with the U^(1/shape) boost for shape < 1.
double sample_gamma(double shape, std::mt19937_64& rng);

// ---------------------------------------------------------------------------------------------
// Local model: frozen two-layer ReLU backbone with LoRA on both layers.
//   logits = (W2 + B2 A2) relu((W1 + B1 A1) x)

struct Backbone {
  Matrix w1;  // hidden x feature_dim
  Matrix w2;  // num_classes x hidden
};

struct LocalModel {
  Backbone backbone;
  std::array<LoraPair, kNumLayers> lora;

  int hidden() const { return static_cast<int>(backbone.w1.rows()); }
  LayerShapes shapes() const;
  Matrix effective(LayerId id) const;
  Matrix logits(const Matrix& x) const;
};

struct LoraGradients {
  double loss = 0.0;
  std::array<LoraPair, kNumLayers> grad;  // same shapes as the model's LoRA pairs
};

/// Mean softmax cross-entropy over the columns of x and its gradient w.r.t. every LoRA entry.
LoraGradients lora_loss_and_gradients(const LocalModel& model, const Matrix& x, const std::vector<int>& y);

/// Mean softmax cross-entropy only.
double loss(const LocalModel& model, const Matrix& x, const std::vector<int>& y);

struct TrainParams {
  int epochs = 1;
  double lr = 0.05;
  int batch = 256;
};

/// Mini-batch gradient descent on the LoRA parameters; the backbone is untouched. Returns the
/// per-step training losses (empty when the shard is empty).
std::vector<double> local_train(LocalModel& model, const Dataset& shard, const TrainParams& params,
                                std::mt19937_64& rng);

/// Backbone of the given width cut from a shared maximum-width initialisation, so narrower
/// architectures share the leading hidden units of wider ones.
Backbone initial_backbone(int hidden, int feature_dim, int num_classes, int max_hidden, std::uint64_t seed);

/// Trains W1 and W2 for params.epochs on local data, then resets LoRA: A ~ U(-1/sqrt(d_in), 1/sqrt(d_in)), B = 0.
LocalModel warmup(const Backbone& init, const Dataset& shard, int rank, const TrainParams& params,
                  std::mt19937_64& rng);

/// Fraction of argmax-correct predictions (ties go to the lowest class id).
double evaluate(const LocalModel& model, const Dataset& data);

std::uint64_t backbone_hash(const Backbone& b);

/// Parameter bytes of a full (W1, W2) upload, for the LoRA payload ratio.
std::int64_t full_parameter_bytes(const Backbone& b);

// ---------------------------------------------------------------------------------------------
// Round-based federation

struct ClientsConfig {
  int count = 10;
  std::vector<int> hidden_widths{32, 48};            // architecture a = client_id % widths.size()
  std::vector<double> participation_choices{1.0, 0.75, 0.5};
  std::vector<double> participation;                 // explicit per-client rates; overrides choices
  bool attackers_always_participate = true;
};

struct SimConfig {
  TaskConfig task;
  ClientsConfig clients;
  int rank = 8;
  AggregatorKind aggregator = AggregatorKind::horus();
  DetectionConfig detection{0.5, 5, DetectionMode::percentile(95.0), FeatureSource::LoraA};
  AttackConfig attack;
  int rounds = 200;
  TrainParams train{1, 1.0, 256};
  TrainParams warmup{10, 0.002, 32};
  std::uint64_t master_seed = 1;
  bool parallel_clients = true;

  /// Throws ConfigError on anything a run could not honour.
  void validate() const;
};

struct ClientProfile {
  int client_id = 0;
  int arch_id = 0;
  int hidden = 0;
  double participation_rate = 1.0;
  bool attacker = false;
  Dataset train;
  Dataset test;
};

struct ClientDiagnostics {
  int client_id = 0;
  bool attacker = false;
  bool flagged = false;
  std::array<double, kNumLayers> ratio_a{};
  std::array<double, kNumLayers> ratio_b{};
};

struct RoundMetrics {
  int round = 0;
  bool skipped = false;
  std::vector<int> participants;
  std::vector<int> attackers_present;  // attackers taking part while the attack is active
  double global_accuracy = 0.0;      // mean over benign clients, shared test set
  double mean_local_accuracy = 0.0;  // mean over benign clients, own test split
  std::optional<double> precision;   // only for detection-based aggregation
  std::optional<double> recall;
  std::set<int> flagged;
  double threshold = 0.0;
  std::int64_t payload_bytes = 0;
  std::vector<std::string> events;
  RoundDetection detection;          // empty unless the aggregator runs detection
  ProjectionWeights weights;
  std::vector<ClientDiagnostics> diagnostics;
};

/// Precision and recall of `flagged` against the attackers present; both 0 without positives.
std::pair<double, double> precision_recall(const std::set<int>& flagged, const std::vector<int>& attackers_present);

class Simulation {
 public:
  explicit Simulation(SimConfig cfg);

  /// Runs the next round: participation sampling, trim + local training, attacks, aggregation,
  /// broadcast, evaluation.
  RoundMetrics run_round();

  int next_round() const { return round_ + 1; }
  const SimConfig& config() const { return cfg_; }
  const GlobalState& global() const { return global_; }
  const LayerShapes& global_dims() const { return global_dims_; }
  const std::vector<ClientProfile>& profiles() const { return profiles_; }
  const std::vector<LocalModel>& models() const { return models_; }
  const Task& task() const { return task_; }

 private:
  double benign_mean(bool global_test) const;

  SimConfig cfg_;
  Task task_;
  LayerShapes global_dims_{};
  std::vector<ClientProfile> profiles_;
  std::vector<LocalModel> models_;
  std::vector<std::uint64_t> backbone_hashes_;
  GlobalState global_;
  int round_ = 0;
};

}  // namespace horus
