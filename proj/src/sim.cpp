#include "horus/sim.hpp"

#include "horus/error.hpp"
#include "horus/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace horus {

// ---------------------------------------------------------------------------------------------
// Task

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.x.resize(x.rows(), static_cast<Eigen::Index>(indices.size()));
  out.y.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.x.col(static_cast<Eigen::Index>(i)) = x.col(indices[i]);
    out.y.push_back(y[indices[i]]);
  }
  return out;
}

namespace {

Dataset sample_clusters(const Matrix& means, int per_class, double noise, std::mt19937_64& rng) {
  const auto d = means.rows();
  const auto classes = static_cast<int>(means.cols());
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.x.resize(d, static_cast<Eigen::Index>(per_class) * classes);
  out.y.reserve(static_cast<std::size_t>(per_class) * classes);
  Eigen::Index col = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++col) {
      for (Eigen::Index j = 0; j < d; ++j) out.x(j, col) = means(j, c) + noise * normal(rng);
      out.y.push_back(c);
    }
  }
  return out;
}

}  // namespace

Task generate_task(const TaskConfig& cfg) {
  if (cfg.feature_dim < 2 || cfg.num_classes < 2) throw ConfigError("task: need feature_dim >= 2 and num_classes >= 2");
  if (cfg.samples_per_class < 1 || cfg.test_per_class < 1) throw ConfigError("task: sample counts must be positive");
  if (!(cfg.class_separation > 0.0) || !(cfg.noise_scale > 0.0))
    throw ConfigError("task: class_separation and noise_scale must be positive");

  std::mt19937_64 rng = make_stream(cfg.seed, {tag(StreamTag::Task)});
  std::normal_distribution<double> normal(0.0, 1.0);
  Task task;
  task.class_means.resize(cfg.feature_dim, cfg.num_classes);
  for (int c = 0; c < cfg.num_classes; ++c) {
    Vector v(cfg.feature_dim);
    for (auto& x : v) x = normal(rng);
    task.class_means.col(c) = cfg.class_separation * v / v.norm();
  }
  task.pool = sample_clusters(task.class_means, cfg.samples_per_class, cfg.noise_scale, rng);
  task.test = sample_clusters(task.class_means, cfg.test_per_class, cfg.noise_scale, rng);
  return task;
}

double sample_gamma(double shape, std::mt19937_64& rng) {
  if (!(shape > 0.0)) throw InvalidInput("sample_gamma: shape must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    double u = unit(rng);
    while (u == 0.0) u = unit(rng);
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = unit(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels, int num_classes, int clients,
                                                  double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw ConfigError("dirichlet_partition: alpha must be positive");
  if (clients < 1) throw ConfigError("dirichlet_partition: need at least one client");
  if (labels.size() < static_cast<std::size_t>(clients))
    throw ConfigError("dirichlet_partition: fewer samples than clients");

  std::vector<std::vector<int>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InvalidInput("dirichlet_partition: label out of range");
    by_class[labels[i]].push_back(static_cast<int>(i));
  }
  for (auto& idx : by_class) std::shuffle(idx.begin(), idx.end(), rng);

  std::vector<std::vector<int>> shards;
  for (int attempt = 0; attempt < 100; ++attempt) {
    shards.assign(clients, {});
    for (const auto& idx : by_class) {
      std::vector<double> props(clients);
      double total = 0.0;
      for (double& p : props) total += (p = sample_gamma(alpha, rng));
      if (total <= 0.0) {
        std::fill(props.begin(), props.end(), 1.0);
        total = clients;
      }
      // Cumulative boundaries, so every index lands in exactly one shard.
      double cum = 0.0;
      std::size_t start = 0;
      for (int c = 0; c < clients; ++c) {
        cum += props[c] / total;
        const std::size_t end = c + 1 == clients
                                    ? idx.size()
                                    : std::min(idx.size(), static_cast<std::size_t>(std::llround(cum * idx.size())));
        for (std::size_t j = start; j < end; ++j) shards[c].push_back(idx[j]);
        start = std::max(start, end);
      }
    }
    if (std::none_of(shards.begin(), shards.end(), [](const auto& s) { return s.empty(); })) return shards;
  }
  // Round-robin top-up of empty shards from the largest ones.
  for (auto& s : shards) {
    if (!s.empty()) continue;
    auto largest = std::max_element(shards.begin(), shards.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    s.push_back(largest->back());
    largest->pop_back();
  }
  return shards;
}

// ---------------------------------------------------------------------------------------------
// Model

LayerShapes LocalModel::shapes() const { return {lora[0].dims(), lora[1].dims()}; }

Matrix LocalModel::effective(LayerId id) const {
  const Matrix& w = id == LayerId::FeatureFirst ? backbone.w1 : backbone.w2;
  const LoraPair& p = lora[index_of(id)];
  return w + p.b * p.a;
}

Matrix LocalModel::logits(const Matrix& x) const {
  return effective(LayerId::Classifier) * (effective(LayerId::FeatureFirst) * x).cwiseMax(0.0);
}

namespace {

struct DenseGradients {
  double loss = 0.0;
  Matrix w1;  // gradient w.r.t. the effective first-layer weight
  Matrix w2;
};

DenseGradients dense_gradients(const Matrix& w1e, const Matrix& w2e, const Matrix& x, const std::vector<int>& y) {
  const auto n = static_cast<double>(y.size());
  const Matrix z1 = w1e * x;
  const Matrix h = z1.cwiseMax(0.0);
  Matrix p = w2e * h;
  DenseGradients g;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    const double mx = p.col(c).maxCoeff();
    p.col(c) = (p.col(c).array() - mx).exp();
    const double z = p.col(c).sum();
    p.col(c) /= z;
    g.loss -= std::log(std::max(p(y[c], c), 1e-300));
    p(y[c], c) -= 1.0;
  }
  g.loss /= n;
  p /= n;  // dL/dlogits
  g.w2 = p * h.transpose();
  const Matrix dz1 = (w2e.transpose() * p).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
  g.w1 = dz1 * x.transpose();
  return g;
}

}  // namespace

LoraGradients lora_loss_and_gradients(const LocalModel& model, const Matrix& x, const std::vector<int>& y) {
  const DenseGradients d =
      dense_gradients(model.effective(LayerId::FeatureFirst), model.effective(LayerId::Classifier), x, y);
  LoraGradients out;
  out.loss = d.loss;
  for (LayerId id : kLayers) {
    const LoraPair& p = model.lora[index_of(id)];
    const Matrix& dw = id == LayerId::FeatureFirst ? d.w1 : d.w2;
    out.grad[index_of(id)] = LoraPair{p.b.transpose() * dw, dw * p.a.transpose()};
  }
  return out;
}

double loss(const LocalModel& model, const Matrix& x, const std::vector<int>& y) {
  const Matrix logits = model.logits(x);
  double total = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const double lse = mx + std::log((logits.col(c).array() - mx).exp().sum());
    total += lse - logits(y[c], c);
  }
  return total / static_cast<double>(y.size());
}

namespace {

template <typename Step>
std::vector<double> minibatch_loop(const Dataset& shard, const TrainParams& params, std::mt19937_64& rng, Step&& step) {
  std::vector<double> losses;
  if (shard.empty()) return losses;
  if (params.batch < 1 || params.epochs < 0) throw ConfigError("training: batch must be >= 1 and epochs >= 0");
  std::vector<int> order(shard.size());
  for (int e = 0; e < params.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < shard.size(); start += params.batch) {
      const int end = std::min(shard.size(), start + params.batch);
      const Dataset batch = shard.subset(std::vector<int>(order.begin() + start, order.begin() + end));
      losses.push_back(step(batch));
    }
  }
  return losses;
}

}  // namespace

std::vector<double> local_train(LocalModel& model, const Dataset& shard, const TrainParams& params,
                                std::mt19937_64& rng) {
  return minibatch_loop(shard, params, rng, [&](const Dataset& batch) {
    const LoraGradients g = lora_loss_and_gradients(model, batch.x, batch.y);
    for (int i = 0; i < kNumLayers; ++i) {
      model.lora[i].a -= params.lr * g.grad[i].a;
      model.lora[i].b -= params.lr * g.grad[i].b;
    }
    return g.loss;
  });
}

Backbone initial_backbone(int hidden, int feature_dim, int num_classes, int max_hidden, std::uint64_t seed) {
  if (hidden < 1 || hidden > max_hidden) throw ConfigError("initial_backbone: hidden width outside [1, max_hidden]");
  std::mt19937_64 rng = make_stream(seed, {tag(StreamTag::BackboneInit)});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w1(max_hidden, feature_dim);
  Matrix w2(num_classes, max_hidden);
  const double s1 = std::sqrt(2.0 / feature_dim);
  const double s2 = std::sqrt(1.0 / max_hidden);
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = s1 * normal(rng);
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = s2 * normal(rng);
  return Backbone{w1.topRows(hidden), w2.leftCols(hidden)};
}

namespace {

LoraPair fresh_lora(int rank, LayerDims dims, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.d_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  LoraPair p{Matrix(rank, dims.d_in), Matrix::Zero(dims.d_out, rank)};
  for (Eigen::Index i = 0; i < p.a.size(); ++i) p.a.data()[i] = u(rng);
  return p;
}

}  // namespace

LocalModel warmup(const Backbone& init, const Dataset& shard, int rank, const TrainParams& params,
                  std::mt19937_64& rng) {
  if (rank < 1) throw ConfigError("warmup: rank must be >= 1");
  LocalModel model;
  model.backbone = init;
  minibatch_loop(shard, params, rng, [&](const Dataset& batch) {
    const DenseGradients g = dense_gradients(model.backbone.w1, model.backbone.w2, batch.x, batch.y);
    model.backbone.w1 -= params.lr * g.w1;
    model.backbone.w2 -= params.lr * g.w2;
    return g.loss;
  });
  const int d = static_cast<int>(init.w1.cols());
  const int h = static_cast<int>(init.w1.rows());
  const int classes = static_cast<int>(init.w2.rows());
  model.lora[index_of(LayerId::FeatureFirst)] = fresh_lora(rank, {d, h}, rng);
  model.lora[index_of(LayerId::Classifier)] = fresh_lora(rank, {h, classes}, rng);
  return model;
}

double evaluate(const LocalModel& model, const Dataset& data) {
  if (data.empty()) throw InvalidInput("evaluate: empty dataset");
  const Matrix logits = model.logits(data.x);
  int correct = 0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    if (!logits.col(c).allFinite()) continue;  // undefined prediction counts as wrong
    Eigen::Index arg = 0;
    logits.col(c).maxCoeff(&arg);  // first maximum, i.e. lowest class id on ties
    if (arg == data.y[c]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::uint64_t backbone_hash(const Backbone& b) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const Matrix& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  mix(b.w1);
  mix(b.w2);
  return h;
}

std::int64_t full_parameter_bytes(const Backbone& b) {
  return static_cast<std::int64_t>(b.w1.size() + b.w2.size()) * static_cast<std::int64_t>(sizeof(double));
}

// ---------------------------------------------------------------------------------------------
// Federation

void SimConfig::validate() const {
  if (clients.count < 1) throw ConfigError("clients.count must be >= 1");
  if (clients.hidden_widths.empty()) throw ConfigError("clients.hidden_widths must not be empty");
  for (int w : clients.hidden_widths)
    if (w < 1) throw ConfigError("clients.hidden_widths entries must be >= 1");
  if (clients.participation.empty()) {
    if (clients.participation_choices.empty()) throw ConfigError("clients.participation_choices must not be empty");
    for (double p : clients.participation_choices)
      if (!(p > 0.0 && p <= 1.0)) throw ConfigError("clients.participation_choices entries must lie in (0, 1]");
  } else {
    if (static_cast<int>(clients.participation.size()) != clients.count)
      throw ConfigError("clients.participation must list one rate per client");
    for (double p : clients.participation)
      if (!(p > 0.0 && p <= 1.0)) throw ConfigError("clients.participation entries must lie in (0, 1]");
  }
  if (rank < 1) throw ConfigError("rank must be >= 1");
  if (rounds < 0) throw ConfigError("rounds must be >= 0");
  if (!(detection.lambda >= 0.0 && detection.lambda <= 1.0)) throw ConfigError("detection.lambda must lie in [0, 1]");
  if (detection.k < 1) throw ConfigError("detection.k must be >= 1");
  if (detection.mode.kind == DetectionMode::Kind::Percentile && !(detection.mode.p >= 0.0 && detection.mode.p <= 100.0))
    throw ConfigError("detection.mode.p must lie in [0, 100]");
  if (detection.mode.kind == DetectionMode::Kind::TopM && detection.mode.m < 0)
    throw ConfigError("detection.mode.m must be >= 0");
  if (attack.start_round < 1) throw ConfigError("attack.start_round must be >= 1");
  for (int id : attack.attacker_ids)
    if (id < 0 || id >= clients.count) throw ConfigError("attack.attacker_ids: unknown client " + std::to_string(id));
  if (attack.search_iters < 1) throw ConfigError("attack.search_iters must be >= 1");
  if (!(attack.gamma_init > 0.0)) throw ConfigError("attack.gamma_init must be positive");
  if (train.batch < 1 || train.epochs < 0 || warmup.batch < 1 || warmup.epochs < 0)
    throw ConfigError("training: batch must be >= 1 and epochs >= 0");
  if (aggregator.kind != AggregatorKind::Kind::Horus && aggregator.kind != AggregatorKind::Kind::FedAvg)
    check_feasible(aggregator, clients.count);
}

std::pair<double, double> precision_recall(const std::set<int>& flagged, const std::vector<int>& attackers_present) {
  int tp = 0;
  for (int id : attackers_present)
    if (flagged.contains(id)) ++tp;
  const double precision = flagged.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(flagged.size());
  const double recall =
      attackers_present.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(attackers_present.size());
  return {precision, recall};
}

Simulation::Simulation(SimConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::uint64_t seed = cfg_.master_seed;

  TaskConfig task_cfg = cfg_.task;
  task_cfg.seed = splitmix64(cfg_.task.seed ^ splitmix64(seed));
  task_ = generate_task(task_cfg);

  const int n = cfg_.clients.count;
  const int d = cfg_.task.feature_dim;
  const int classes = cfg_.task.num_classes;
  const int max_hidden = *std::max_element(cfg_.clients.hidden_widths.begin(), cfg_.clients.hidden_widths.end());
  global_dims_[index_of(LayerId::FeatureFirst)] = {d, max_hidden};
  global_dims_[index_of(LayerId::Classifier)] = {max_hidden, classes};

  std::mt19937_64 part_rng = make_stream(seed, {tag(StreamTag::Partition)});
  const auto shards = dirichlet_partition(task_.pool.y, classes, n, cfg_.task.dirichlet_alpha, part_rng);

  profiles_.resize(n);
  for (int id = 0; id < n; ++id) {
    ClientProfile& p = profiles_[id];
    p.client_id = id;
    p.arch_id = id % static_cast<int>(cfg_.clients.hidden_widths.size());
    p.hidden = cfg_.clients.hidden_widths[p.arch_id];
    p.attacker = cfg_.attack.kind != AttackKind::None && cfg_.attack.attacker_ids.contains(id);
    if (!cfg_.clients.participation.empty()) {
      p.participation_rate = cfg_.clients.participation[id];
    } else {
      std::mt19937_64 r = make_stream(seed, {tag(StreamTag::ParticipationRate), static_cast<std::uint64_t>(id)});
      const auto& choices = cfg_.clients.participation_choices;
      p.participation_rate = choices[std::uniform_int_distribution<std::size_t>(0, choices.size() - 1)(r)];
    }
    if (p.attacker && cfg_.clients.attackers_always_participate) p.participation_rate = 1.0;

    std::vector<int> idx = shards[id];
    std::mt19937_64 split_rng = make_stream(seed, {tag(StreamTag::Split), static_cast<std::uint64_t>(id)});
    std::shuffle(idx.begin(), idx.end(), split_rng);
    auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, std::min<std::size_t>(1, idx.size()), idx.size());
    p.train = task_.pool.subset(std::vector<int>(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)));
    p.test = task_.pool.subset(std::vector<int>(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end()));
  }

  models_.resize(n);
  backbone_hashes_.resize(n);
#pragma omp parallel for schedule(dynamic, 1) if (cfg_.parallel_clients)
  for (int id = 0; id < n; ++id) {
    const ClientProfile& p = profiles_[id];
    const Backbone init = initial_backbone(p.hidden, d, classes, max_hidden, seed);
    std::mt19937_64 rng = make_stream(seed, {tag(StreamTag::Warmup), static_cast<std::uint64_t>(id)});
    models_[id] = warmup(init, p.train, cfg_.rank, cfg_.warmup, rng);
    backbone_hashes_[id] = backbone_hash(models_[id].backbone);
  }

  // Shared LoRA initialisation broadcast before round 1: A uniform, B zero.
  global_ = make_global_state(global_dims_, cfg_.rank);
  std::mt19937_64 init_rng = make_stream(seed, {tag(StreamTag::GlobalInit)});
  for (GlobalLayer& l : global_.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.a.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < l.a.size(); ++i) l.a.data()[i] = u(init_rng);
  }
  for (int id = 0; id < n; ++id)
    for (LayerId layer : kLayers)
      models_[id].lora[index_of(layer)] = trim_to_local(global_, layer, models_[id].lora[index_of(layer)].dims());
}

double Simulation::benign_mean(bool global_test) const {
  std::vector<double> acc(profiles_.size(), -1.0);
  const int n = static_cast<int>(profiles_.size());
#pragma omp parallel for schedule(static) if (cfg_.parallel_clients)
  for (int id = 0; id < n; ++id) {
    const ClientProfile& p = profiles_[id];
    if (p.attacker) continue;
    const Dataset& data = global_test ? task_.test : p.test;
    if (!data.empty()) acc[id] = evaluate(models_[id], data);
  }
  double sum = 0.0;
  int count = 0;
  for (double a : acc)
    if (a >= 0.0) {
      sum += a;
      ++count;
    }
  return count == 0 ? 0.0 : sum / count;
}

RoundMetrics Simulation::run_round() {
  const int round = ++round_;
  const std::uint64_t seed = cfg_.master_seed;
  const int n = cfg_.clients.count;
  RoundMetrics m;
  m.round = round;

  for (int id = 0; id < n; ++id) {
    const ClientProfile& p = profiles_[id];
    std::mt19937_64 r =
        make_stream(seed, {tag(StreamTag::Participation), static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(id)});
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(r);
    if (p.participation_rate >= 1.0 || u < p.participation_rate) {
      m.participants.push_back(id);
      if (p.attacker && cfg_.attack.active(round)) m.attackers_present.push_back(id);
    }
  }
  if (m.participants.empty()) {
    m.skipped = true;
    m.events.push_back("no participants; round skipped");
    m.global_accuracy = benign_mean(true);
    m.mean_local_accuracy = benign_mean(false);
    return m;
  }

  // Receive the global LoRA, trim, train locally.
  const bool flip = cfg_.attack.kind == AttackKind::LabelFlip && cfg_.attack.active(round);
  std::vector<ClientUpdate> trained(m.participants.size());
  const int np = static_cast<int>(m.participants.size());
#pragma omp parallel for schedule(dynamic, 1) if (cfg_.parallel_clients)
  for (int i = 0; i < np; ++i) {
    const int id = m.participants[i];
    const ClientProfile& p = profiles_[id];
    LocalModel model = models_[id];
    for (LayerId layer : kLayers)
      model.lora[index_of(layer)] = trim_to_local(global_, layer, model.lora[index_of(layer)].dims());
    std::mt19937_64 rng =
        make_stream(seed, {tag(StreamTag::Training), static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(id)});
    if (flip && p.attacker) {
      Dataset poisoned = p.train;
      poisoned.y = flip_labels(poisoned.y, cfg_.task.num_classes);
      local_train(model, poisoned, cfg_.train, rng);
    } else {
      local_train(model, p.train, cfg_.train, rng);
    }
    trained[i] = ClientUpdate{id, p.arch_id, model.lora};
  }
  std::map<int, ClientUpdate> honest;
  for (auto& u : trained) {
    if (!all_finite(u)) {
      m.events.push_back("client " + std::to_string(u.client_id) + ": local training diverged; update dropped");
      continue;
    }
    honest.emplace(u.client_id, std::move(u));
  }

  PoisonOutcome poisoned = poison_round(cfg_.attack, round, honest, global_dims_, seed);
  for (auto& e : poisoned.events) m.events.push_back(std::move(e));
  std::map<int, ClientUpdate> submitted;
  for (auto& [id, u] : poisoned.submissions) {
    if (!all_finite(u)) {
      m.events.push_back("client " + std::to_string(id) + ": non-finite submission dropped");
      continue;
    }
    submitted.emplace(id, std::move(u));
  }
  for (const auto& [id, u] : submitted) m.payload_bytes += payload_bytes(u);
  const GlobalState before = global_;

  // Server step.
  if (submitted.empty()) {
    m.events.push_back("no usable submissions; aggregation skipped");
  } else if (cfg_.aggregator.kind == AggregatorKind::Kind::Horus) {
    HorusRound hr = horus_aggregate(submitted, global_, HorusConfig{cfg_.detection, global_dims_});
    global_ = std::move(hr.state);
    m.detection = std::move(hr.detection);
    m.weights = std::move(hr.weights);
    m.flagged = m.detection.flagged;
    m.threshold = m.detection.threshold;
    for (auto& e : hr.events) m.events.push_back(std::move(e));
    const auto [precision, recall] = precision_recall(m.flagged, m.attackers_present);
    m.precision = precision;
    m.recall = recall;
  } else {
    PaddedSet padded;
    for (const auto& [id, u] : submitted) padded.emplace(id, pad_to_global(u, global_dims_));
    AggregatorKind kind = cfg_.aggregator;
    const int count = static_cast<int>(padded.size());
    if ((kind.kind == AggregatorKind::Kind::Krum || kind.kind == AggregatorKind::Kind::MultiKrum) &&
        count - kind.f - 2 < 1) {
      if (count >= 3) {
        kind.f = count - 3;
      } else {
        kind = AggregatorKind::fedavg();
      }
      m.events.push_back("too few participants for " + aggregator_name(cfg_.aggregator.kind) + "; using " +
                         aggregator_name(kind.kind) + " with f=" + std::to_string(kind.f));
    }
    BaselineRound br = baseline_aggregate(kind, padded, global_);
    global_ = std::move(br.state);
  }
  if (!all_finite(global_)) {
    m.events.push_back("aggregate overflowed; previous global state kept");
    global_ = before;
  }

  for (const auto& [id, u] : submitted) {
    ClientDiagnostics diag;
    diag.client_id = id;
    diag.attacker = profiles_[id].attacker;
    diag.flagged = m.flagged.contains(id);
    for (int i = 0; i < kNumLayers; ++i) {
      diag.ratio_a[i] = topk_energy_ratio(spectrum_of(u.layers[i].a), cfg_.detection.k);
      diag.ratio_b[i] = topk_energy_ratio(spectrum_of(u.layers[i].b), cfg_.detection.k);
    }
    m.diagnostics.push_back(diag);
  }

  // Broadcast to participants.
  for (int id : m.participants)
    for (LayerId layer : kLayers)
      models_[id].lora[index_of(layer)] = trim_to_local(global_, layer, models_[id].lora[index_of(layer)].dims());

  for (int id = 0; id < n; ++id)
    if (backbone_hash(models_[id].backbone) != backbone_hashes_[id])
      throw InvariantViolation("backbone of client " + std::to_string(id) + " changed after warm-up");

  m.global_accuracy = benign_mean(true);
  m.mean_local_accuracy = benign_mean(false);
  return m;
}

}  // namespace horus
