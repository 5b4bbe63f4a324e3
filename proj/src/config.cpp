#include "horus/config.hpp"

#include "horus/error.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace horus {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [key, _] : node_.items())
      if (!known.contains(key)) fail(path_ + "/" + key, "unknown key");
  }

  template <typename T>
  void get(const char* key, T& out) const {
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer()) fail(path_ + "/" + key, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) fail(path_ + "/" + key, "expected a number");
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(path_ + "/" + key, "wrong type (found " + std::string(it->type_name()) + ")");
    }
  }

  std::optional<Reader> child(const char* key) const {
    const auto it = node_.find(key);
    if (it == node_.end()) return std::nullopt;
    return Reader(*it, path_ + "/" + key);
  }

  bool has(const char* key) const { return node_.contains(key); }
  const json& at(const char* key) const { return node_.at(key); }
  std::string path(const char* key) const { return path_ + "/" + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ConfigError((path.empty() ? std::string("/") : path) + ": " + msg);
  }

 private:
  const json& node_;
  std::string path_;
};

std::string mode_name(DetectionMode::Kind k) { return k == DetectionMode::Kind::Percentile ? "percentile" : "top_m"; }
std::string source_name(FeatureSource s) { return s == FeatureSource::LoraA ? "lora_a" : "lora_b"; }
std::string direction_name(PerturbationDirection d) {
  return d == PerturbationDirection::NegativeStd ? "negative_std" : "inverse_unit";
}

void read_train(const Reader& r, TrainParams& t) {
  r.allow({"epochs", "lr", "batch"});
  r.get("epochs", t.epochs);
  r.get("lr", t.lr);
  r.get("batch", t.batch);
}

json train_json(const TrainParams& t) { return {{"epochs", t.epochs}, {"lr", t.lr}, {"batch", t.batch}}; }

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }

  RunConfig cfg;
  SimConfig& s = cfg.sim;
  const Reader r(root, "");
  r.allow({"task", "clients", "rank", "aggregator", "detection", "attack", "rounds", "train", "warmup", "master_seed",
           "parallel_clients", "output_dir"});

  if (auto t = r.child("task")) {
    t->allow({"feature_dim", "num_classes", "samples_per_class", "test_per_class", "class_separation", "noise_scale",
              "dirichlet_alpha", "seed"});
    t->get("feature_dim", s.task.feature_dim);
    t->get("num_classes", s.task.num_classes);
    t->get("samples_per_class", s.task.samples_per_class);
    t->get("test_per_class", s.task.test_per_class);
    t->get("class_separation", s.task.class_separation);
    t->get("noise_scale", s.task.noise_scale);
    t->get("dirichlet_alpha", s.task.dirichlet_alpha);
    t->get("seed", s.task.seed);
    if (s.task.feature_dim < 2) Reader::fail(t->path("feature_dim"), "must be >= 2");
    if (s.task.num_classes < 2) Reader::fail(t->path("num_classes"), "must be >= 2");
    if (s.task.samples_per_class < 1) Reader::fail(t->path("samples_per_class"), "must be >= 1");
    if (s.task.test_per_class < 1) Reader::fail(t->path("test_per_class"), "must be >= 1");
    if (!(s.task.class_separation > 0)) Reader::fail(t->path("class_separation"), "must be positive");
    if (!(s.task.noise_scale > 0)) Reader::fail(t->path("noise_scale"), "must be positive");
    if (!(s.task.dirichlet_alpha > 0)) Reader::fail(t->path("dirichlet_alpha"), "must be positive");
  }

  if (auto c = r.child("clients")) {
    c->allow({"count", "hidden_widths", "participation_choices", "participation", "attackers_always_participate"});
    c->get("count", s.clients.count);
    c->get("hidden_widths", s.clients.hidden_widths);
    c->get("participation_choices", s.clients.participation_choices);
    c->get("participation", s.clients.participation);
    c->get("attackers_always_participate", s.clients.attackers_always_participate);
  }

  r.get("rank", s.rank);

  if (auto a = r.child("aggregator")) {
    a->allow({"kind", "f", "m", "beta"});
    std::string kind = aggregator_name(s.aggregator.kind);
    a->get("kind", kind);
    try {
      s.aggregator.kind = parse_aggregator_name(kind);
    } catch (const ConfigError& e) {
      Reader::fail(a->path("kind"), e.what());
    }
    a->get("f", s.aggregator.f);
    a->get("m", s.aggregator.m);
    a->get("beta", s.aggregator.beta);
  }

  if (auto d = r.child("detection")) {
    d->allow({"lambda", "k", "mode", "p", "m", "source"});
    d->get("lambda", s.detection.lambda);
    d->get("k", s.detection.k);
    std::string mode = mode_name(s.detection.mode.kind);
    d->get("mode", mode);
    if (mode == "percentile") {
      s.detection.mode.kind = DetectionMode::Kind::Percentile;
    } else if (mode == "top_m") {
      s.detection.mode.kind = DetectionMode::Kind::TopM;
    } else {
      Reader::fail(d->path("mode"), "expected 'percentile' or 'top_m'");
    }
    d->get("p", s.detection.mode.p);
    d->get("m", s.detection.mode.m);
    std::string source = source_name(s.detection.source);
    d->get("source", source);
    if (source == "lora_a") {
      s.detection.source = FeatureSource::LoraA;
    } else if (source == "lora_b") {
      s.detection.source = FeatureSource::LoraB;
    } else {
      Reader::fail(d->path("source"), "expected 'lora_a' or 'lora_b'");
    }
  }

  if (auto a = r.child("attack")) {
    a->allow({"kind", "start_round", "attacker_ids", "z_override", "gamma_init", "search_iters", "direction",
              "full_knowledge"});
    std::string kind = attack_name(s.attack.kind);
    a->get("kind", kind);
    try {
      s.attack.kind = parse_attack_name(kind);
    } catch (const ConfigError& e) {
      Reader::fail(a->path("kind"), e.what());
    }
    a->get("start_round", s.attack.start_round);
    std::vector<int> ids(s.attack.attacker_ids.begin(), s.attack.attacker_ids.end());
    a->get("attacker_ids", ids);
    s.attack.attacker_ids = std::set<int>(ids.begin(), ids.end());
    if (a->has("z_override") && !a->at("z_override").is_null()) {
      double z = 0.0;
      a->get("z_override", z);
      s.attack.z_override = z;
    } else if (a->has("z_override")) {
      s.attack.z_override.reset();
    }
    a->get("gamma_init", s.attack.gamma_init);
    a->get("search_iters", s.attack.search_iters);
    std::string direction = direction_name(s.attack.direction);
    a->get("direction", direction);
    if (direction == "negative_std") {
      s.attack.direction = PerturbationDirection::NegativeStd;
    } else if (direction == "inverse_unit") {
      s.attack.direction = PerturbationDirection::InverseUnit;
    } else {
      Reader::fail(a->path("direction"), "expected 'negative_std' or 'inverse_unit'");
    }
    a->get("full_knowledge", s.attack.full_knowledge);
  }

  r.get("rounds", s.rounds);
  if (auto t = r.child("train")) read_train(*t, s.train);
  if (auto t = r.child("warmup")) read_train(*t, s.warmup);
  r.get("master_seed", s.master_seed);
  r.get("parallel_clients", s.parallel_clients);
  r.get("output_dir", cfg.output_dir);

  s.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  const SimConfig& s = cfg.sim;
  json j;
  j["task"] = {{"feature_dim", s.task.feature_dim},         {"num_classes", s.task.num_classes},
               {"samples_per_class", s.task.samples_per_class}, {"test_per_class", s.task.test_per_class},
               {"class_separation", s.task.class_separation}, {"noise_scale", s.task.noise_scale},
               {"dirichlet_alpha", s.task.dirichlet_alpha}, {"seed", s.task.seed}};
  j["clients"] = {{"count", s.clients.count},
                  {"hidden_widths", s.clients.hidden_widths},
                  {"participation_choices", s.clients.participation_choices},
                  {"participation", s.clients.participation},
                  {"attackers_always_participate", s.clients.attackers_always_participate}};
  j["rank"] = s.rank;
  j["aggregator"] = {{"kind", aggregator_name(s.aggregator.kind)},
                     {"f", s.aggregator.f},
                     {"m", s.aggregator.m},
                     {"beta", s.aggregator.beta}};
  j["detection"] = {{"lambda", s.detection.lambda}, {"k", s.detection.k},
                    {"mode", mode_name(s.detection.mode.kind)}, {"p", s.detection.mode.p},
                    {"m", s.detection.mode.m}, {"source", source_name(s.detection.source)}};
  j["attack"] = {{"kind", attack_name(s.attack.kind)},
                 {"start_round", s.attack.start_round},
                 {"attacker_ids", std::vector<int>(s.attack.attacker_ids.begin(), s.attack.attacker_ids.end())},
                 {"z_override", s.attack.z_override ? json(*s.attack.z_override) : json(nullptr)},
                 {"gamma_init", s.attack.gamma_init},
                 {"search_iters", s.attack.search_iters},
                 {"direction", direction_name(s.attack.direction)},
                 {"full_knowledge", s.attack.full_knowledge}};
  j["rounds"] = s.rounds;
  j["train"] = train_json(s.train);
  j["warmup"] = train_json(s.warmup);
  j["master_seed"] = s.master_seed;
  j["parallel_clients"] = s.parallel_clients;
  j["output_dir"] = cfg.output_dir;
  return j;
}

}  // namespace horus
