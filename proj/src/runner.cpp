#include "horus/runner.hpp"

#include "horus/error.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace horus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::vector<RoundMetrics> run_simulation(const SimConfig& cfg, const RoundObserver& observer) {
  Simulation sim(cfg);
  std::vector<RoundMetrics> out;
  out.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int t = 0; t < cfg.rounds; ++t) {
    out.push_back(sim.run_round());
    if (observer) observer(sim, out.back());
  }
  return out;
}

RunSummary summarize(const SimConfig& cfg, const std::vector<RoundMetrics>& rounds) {
  RunSummary s;
  s.aggregator = aggregator_name(cfg.aggregator.kind);
  s.attack = attack_name(cfg.attack.kind);
  s.rank = cfg.rank;
  s.lambda = cfg.detection.lambda;
  s.rounds = static_cast<int>(rounds.size());
  const std::size_t tail = std::min<std::size_t>(10, rounds.size());
  for (std::size_t i = rounds.size() - tail; i < rounds.size(); ++i) {
    s.final_global_accuracy += rounds[i].global_accuracy;
    s.final_local_accuracy += rounds[i].mean_local_accuracy;
  }
  if (tail > 0) {
    s.final_global_accuracy /= static_cast<double>(tail);
    s.final_local_accuracy /= static_cast<double>(tail);
  }
  double precision = 0.0;
  double recall = 0.0;
  int scored = 0;
  for (const RoundMetrics& m : rounds) {
    s.total_payload_bytes += m.payload_bytes;
    if (!cfg.attack.active(m.round) || m.attackers_present.empty() || m.skipped) continue;
    ++s.attack_rounds;
    if (!m.precision) continue;
    ++scored;
    precision += *m.precision;
    recall += m.recall.value_or(0.0);
  }
  if (scored > 0) {
    s.detection_precision = precision / scored;
    s.detection_recall = recall / scored;
  }
  return s;
}

json round_record(const RoundMetrics& m) {
  return {{"round", m.round},
          {"skipped", m.skipped},
          {"participants", m.participants},
          {"attackers_present", m.attackers_present},
          {"global_accuracy", m.global_accuracy},
          {"mean_local_accuracy", m.mean_local_accuracy},
          {"precision", optional_json(m.precision)},
          {"recall", optional_json(m.recall)},
          {"flagged", std::vector<int>(m.flagged.begin(), m.flagged.end())},
          {"threshold", m.threshold},
          {"payload_bytes", m.payload_bytes},
          {"events", m.events}};
}

std::vector<json> detection_records(const RoundMetrics& m, const std::set<int>& attackers) {
  std::vector<json> out;
  for (const auto& [id, score] : m.detection.scores) {
    json layers = json::array();
    const auto it = m.detection.features.find(id);
    for (LayerId layer : kLayers) {
      const int i = index_of(layer);
      json l = {{"layer", layer_name(layer)}, {"sub_score", score.layer_scores[i]}};
      if (it != m.detection.features.end()) {
        l["entropy"] = it->second.layers[i].entropy;
        l["topk_ratio"] = it->second.layers[i].ratio;
        l["k"] = it->second.layers[i].k_used;
      }
      layers.push_back(std::move(l));
    }
    out.push_back({{"round", m.round},
                   {"client_id", id},
                   {"layers", std::move(layers)},
                   {"score", score.score},
                   {"threshold", m.detection.threshold},
                   {"flagged", m.detection.flagged.contains(id)},
                   {"attacker", attackers.contains(id)},
                   {"skipped", m.detection.skipped}});
  }
  return out;
}

json aggregate_record(const RoundMetrics& m, const GlobalState& g, const std::string& aggregator) {
  json layers = json::array();
  for (LayerId layer : kLayers) {
    const GlobalLayer& l = g.layer(layer);
    json rec = {{"layer", layer_name(layer)}, {"norm_a", l.a.norm()}, {"norm_b", l.b.norm()}};
    if (!m.weights.per_client.empty()) {
      for (const bool factor_a : {true, false}) {
        double lo = 1.0;
        double hi = 0.0;
        double sum = 0.0;
        for (const auto& [id, alphas] : m.weights.per_client) {
          const LayerAlpha& la = alphas[index_of(layer)];
          const double a = factor_a ? la.alpha_a : la.alpha_b;
          lo = std::min(lo, a);
          hi = std::max(hi, a);
          sum += a;
        }
        rec[factor_a ? "alpha_a" : "alpha_b"] = {{"min", lo}, {"mean", sum / static_cast<double>(m.weights.per_client.size())}, {"max", hi}};
      }
    }
    layers.push_back(std::move(rec));
  }
  return {{"round", m.round}, {"aggregator", aggregator}, {"layers", std::move(layers)},
          {"uniform_weights", m.weights.uniform_fallback}};
}

std::string summary_csv_header() {
  return "aggregator,attack,rank,lambda,rounds,final_global_accuracy,final_local_accuracy,"
         "detection_precision,detection_recall,attack_rounds,total_payload_bytes";
}

std::string summary_csv_row(const RunSummary& s) {
  std::ostringstream os;
  os << s.aggregator << ',' << s.attack << ',' << s.rank << ',' << fmt(s.lambda) << ',' << s.rounds << ','
     << fmt(s.final_global_accuracy) << ',' << fmt(s.final_local_accuracy) << ',' << fmt(s.detection_precision) << ','
     << fmt(s.detection_recall) << ',' << s.attack_rounds << ',' << s.total_payload_bytes;
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

RunSummary run_to_directory(const RunConfig& cfg, bool diagnostics) {
  std::ostringstream rounds_out;
  std::ostringstream detection_out;
  std::ostringstream aggregate_out;
  std::ostringstream diag_out;
  diag_out << kDiagnosticsHeader << '\n';
  const std::string agg_name = aggregator_name(cfg.sim.aggregator.kind);
  const std::set<int>& attackers =
      cfg.sim.attack.kind == AttackKind::None ? std::set<int>{} : cfg.sim.attack.attacker_ids;

  auto rounds = run_simulation(cfg.sim, [&](const Simulation& sim, const RoundMetrics& m) {
    rounds_out << round_record(m).dump() << '\n';
    for (const json& rec : detection_records(m, attackers)) detection_out << rec.dump() << '\n';
    aggregate_out << aggregate_record(m, sim.global(), agg_name).dump() << '\n';
    if (diagnostics) {
      for (const ClientDiagnostics& d : m.diagnostics)
        for (LayerId layer : kLayers)
          diag_out << m.round << ',' << d.client_id << ',' << layer_name(layer) << ',' << (d.attacker ? 1 : 0) << ','
                   << (d.flagged ? 1 : 0) << ',' << fmt(d.ratio_a[index_of(layer)]) << ','
                   << fmt(d.ratio_b[index_of(layer)]) << '\n';
    }
  });

  const RunSummary summary = summarize(cfg.sim, rounds);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_file_atomic((dir / "rounds.jsonl").string(), rounds_out.str());
  write_file_atomic((dir / "detection.jsonl").string(), detection_out.str());
  write_file_atomic((dir / "aggregate.jsonl").string(), aggregate_out.str());
  write_file_atomic((dir / "summary.csv").string(), summary_csv_header() + "\n" + summary_csv_row(summary) + "\n");
  write_file_atomic((dir / "config.json").string(), config_to_json(cfg).dump(2) + "\n");
  if (diagnostics) write_file_atomic((dir / "diagnostics.csv").string(), diag_out.str());
  return summary;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "lambda") return SweepAxis::Lambda;
  if (name == "rank") return SweepAxis::Rank;
  if (name == "aggregator") return SweepAxis::Aggregator;
  throw ConfigError("unknown sweep axis '" + name + "' (expected lambda, rank or aggregator)");
}

namespace {

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::Rank: return "rank";
    case SweepAxis::Aggregator: return "aggregator";
  }
  return "unknown";
}

}  // namespace

RunConfig sweep_cell(const RunConfig& base, SweepAxis axis, const std::string& value) {
  RunConfig cell = base;
  try {
    std::size_t used = 0;
    switch (axis) {
      case SweepAxis::Lambda:
        cell.sim.detection.lambda = std::stod(value, &used);
        break;
      case SweepAxis::Rank:
        cell.sim.rank = std::stoi(value, &used);
        break;
      case SweepAxis::Aggregator:
        cell.sim.aggregator.kind = parse_aggregator_name(value);
        used = value.size();
        break;
    }
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("sweep: cannot use '" + value + "' as a " + axis_name(axis) + " value");
  }
  cell.sim.validate();
  cell.output_dir = (fs::path(base.output_dir) / (axis_name(axis) + "_" + value)).string();
  return cell;
}

std::vector<RunSummary> run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
  std::vector<RunConfig> cells;
  for (const std::string& v : values) cells.push_back(sweep_cell(base, axis, v));

  std::vector<RunSummary> out;
  std::string csv = "axis,value," + summary_csv_header() + "\n";
  const std::string sweep_path = (fs::path(base.output_dir) / "sweep.csv").string();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    try {
      out.push_back(run_to_directory(cells[i]));
    } catch (...) {
      write_file_atomic(sweep_path, csv);
      throw;
    }
    csv += axis_name(axis) + "," + values[i] + "," + summary_csv_row(out.back()) + "\n";
  }
  write_file_atomic(sweep_path, csv);
  return out;
}

}  // namespace horus
