#pragma once

#include "horus/lora.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace horus {

enum class AttackKind { None, LabelFlip, Lie, MinMax, MinSum, FangTrimmed };

std::string attack_name(AttackKind kind);
AttackKind parse_attack_name(const std::string& name);

// Direction the min-max / min-sum perturbation moves away from the benign mean.
enum class PerturbationDirection { NegativeStd, InverseUnit };

struct AttackConfig {
  AttackKind kind = AttackKind::None;
  int start_round = 20;
  std::set<int> attacker_ids;
  std::optional<double> z_override;
  double gamma_init = 1.0;
  int search_iters = 20;
  PerturbationDirection direction = PerturbationDirection::NegativeStd;
  bool full_knowledge = false;  // attackers see every participant's honest update

  bool active(int round) const { return kind != AttackKind::None && round >= start_round; }
  bool is_model_poisoning() const { return kind != AttackKind::None && kind != AttackKind::LabelFlip; }
};

/// y -> C - 1 - y.
std::vector<int> flip_labels(const std::vector<int>& labels, int num_classes);

struct CohortStats {
  Vector mean;
  Vector stddev;  // sample form (divisor n - 1)
};

/// Coordinate mean and standard deviation. Needs at least two equally sized vectors.
CohortStats cohort_stats(const std::vector<Vector>& benign);

/// z = Phi^-1((n - m - s) / (n - m)), s = floor(n/2) + 1 - m. Empty when s <= 0.
std::optional<double> lie_z(int n, int m);

/// mean + z * std. `z_override` wins; otherwise z comes from lie_z(n, m) and a ConfigError is
/// raised when that is undefined.
Vector lie_attack(const std::vector<Vector>& benign, int n, int m, std::optional<double> z_override);

struct ScaledAttack {
  Vector malicious;
  double gamma = 0.0;
};

/// Largest gamma (doubling from gamma_init, then `iters` bisection steps) such that
/// max_c |mean + gamma p - b_c| <= max_{c,c'} |b_c - b_c'|.
ScaledAttack min_max_attack(const std::vector<Vector>& benign, PerturbationDirection direction,
                            double gamma_init, int iters);

/// Same search with sum_c |mal - b_c|^2 <= max_c' sum_c |b_c' - b_c|^2.
ScaledAttack min_sum_attack(const std::vector<Vector>& benign, PerturbationDirection direction,
                            double gamma_init, int iters);

/// Unit perturbation direction used by min-max / min-sum (zero when the statistic is zero).
Vector perturbation_direction(const CohortStats& stats, PerturbationDirection direction);

/// Constraint evaluations, exposed for verification. Each returns (lhs, bound).
std::pair<double, double> min_max_constraint(const std::vector<Vector>& benign, const Vector& candidate);
std::pair<double, double> min_sum_constraint(const std::vector<Vector>& benign, const Vector& candidate);

/// Per coordinate, uniform in [mu - 4 sigma, mu - 3 sigma] when mu >= 0, else [mu + 3 sigma, mu + 4 sigma].
Vector fang_trimmed_attack(const std::vector<Vector>& benign, std::mt19937_64& rng);

struct PoisonOutcome {
  std::map<int, ClientUpdate> submissions;
  std::vector<std::string> events;
};

/// Replaces the participating attackers' submissions for a model-poisoning attack. Attackers work in
/// the padded global space (entries only some attackers cover are filled with the covering mean)
/// and crop the result back to their own shapes. Identity before start_round, for data poisoning,
/// and when the attacker-visible cohort has fewer than two members.
PoisonOutcome poison_round(const AttackConfig& cfg, int round, const std::map<int, ClientUpdate>& honest,
                           const LayerShapes& global_dims, std::uint64_t seed);

}  // namespace horus
