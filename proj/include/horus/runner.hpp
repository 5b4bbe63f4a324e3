#pragma once

#include "horus/config.hpp"
#include "horus/sim.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace horus {

struct RunSummary {
  std::string aggregator;
  std::string attack;
  int rank = 0;
  double lambda = 0.0;
  int rounds = 0;
  double final_global_accuracy = 0.0;  // mean over the final min(10, rounds) rounds
  double final_local_accuracy = 0.0;
  // Mean over attack rounds with attackers present; empty for aggregators without detection.
  std::optional<double> detection_precision;
  std::optional<double> detection_recall;
  int attack_rounds = 0;
  std::int64_t total_payload_bytes = 0;
};

using RoundObserver = std::function<void(const Simulation&, const RoundMetrics&)>;

/// Runs cfg.rounds rounds in memory. The observer sees every round as it completes.
std::vector<RoundMetrics> run_simulation(const SimConfig& cfg, const RoundObserver& observer = {});

RunSummary summarize(const SimConfig& cfg, const std::vector<RoundMetrics>& rounds);

// One JSON object per line in each file.
nlohmann::json round_record(const RoundMetrics& m);
std::vector<nlohmann::json> detection_records(const RoundMetrics& m, const std::set<int>& attackers);
nlohmann::json aggregate_record(const RoundMetrics& m, const GlobalState& g, const std::string& aggregator);

std::string summary_csv_header();
std::string summary_csv_row(const RunSummary& s);

inline constexpr const char* kDiagnosticsHeader = "round,client_id,layer,attacker,flagged,topk_ratio_a,topk_ratio_b";

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& contents);

/// run: rounds.jsonl, detection.jsonl, aggregate.jsonl, summary.csv (and diagnostics.csv when
/// `diagnostics` is set) under cfg.output_dir.
RunSummary run_to_directory(const RunConfig& cfg, bool diagnostics = false);

enum class SweepAxis { Lambda, Rank, Aggregator };
SweepAxis parse_sweep_axis(const std::string& name);

/// Applies one sweep value to a copy of `base`, pointing output_dir at a per-value sub-directory.
RunConfig sweep_cell(const RunConfig& base, SweepAxis axis, const std::string& value);

/// One full run per value, then sweep.csv. A failing cell rethrows after writing the rows that
/// completed.
std::vector<RunSummary> run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::string>& values);

}  // namespace horus
