#include "horus/attacks.hpp"

#include "horus/error.hpp"
#include "horus/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace horus {

std::string attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::None: return "none";
    case AttackKind::LabelFlip: return "label_flip";
    case AttackKind::Lie: return "lie";
    case AttackKind::MinMax: return "min_max";
    case AttackKind::MinSum: return "min_sum";
    case AttackKind::FangTrimmed: return "fang";
  }
  return "unknown";
}

AttackKind parse_attack_name(const std::string& name) {
  for (auto k : {AttackKind::None, AttackKind::LabelFlip, AttackKind::Lie, AttackKind::MinMax,
                 AttackKind::MinSum, AttackKind::FangTrimmed})
    if (attack_name(k) == name) return k;
  throw ConfigError("unknown attack '" + name + "'");
}

std::vector<int> flip_labels(const std::vector<int>& labels, int num_classes) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InvalidInput("flip_labels: label out of range");
    out[i] = num_classes - 1 - labels[i];
  }
  return out;
}

CohortStats cohort_stats(const std::vector<Vector>& benign) {
  if (benign.size() < 2) throw InvalidInput("attack: need at least two benign vectors");
  const Eigen::Index d = benign.front().size();
  CohortStats s{Vector::Zero(d), Vector::Zero(d)};
  for (const Vector& v : benign) {
    if (v.size() != d) throw InvalidInput("attack: benign vectors differ in length");
    s.mean += v;
  }
  s.mean /= static_cast<double>(benign.size());
  for (const Vector& v : benign) s.stddev += (v - s.mean).cwiseAbs2();
  s.stddev = (s.stddev / static_cast<double>(benign.size() - 1)).cwiseSqrt();
  return s;
}

std::optional<double> lie_z(int n, int m) {
  const int s = n / 2 + 1 - m;
  if (s <= 0 || n - m <= 0) return std::nullopt;
  const double q = static_cast<double>(n - m - s) / static_cast<double>(n - m);
  if (!(q > 0.0 && q < 1.0)) return std::nullopt;
  return inverse_normal_cdf(q);
}

Vector lie_attack(const std::vector<Vector>& benign, int n, int m, std::optional<double> z_override) {
  const CohortStats s = cohort_stats(benign);
  double z = 0.0;
  if (z_override) {
    z = *z_override;
  } else if (auto derived = lie_z(n, m)) {
    z = *derived;
  } else {
    throw ConfigError("lie: z undefined for n=" + std::to_string(n) + ", m=" + std::to_string(m) +
                      " and no z_override given");
  }
  return s.mean + z * s.stddev;
}

Vector perturbation_direction(const CohortStats& stats, PerturbationDirection direction) {
  const Vector& base = direction == PerturbationDirection::NegativeStd ? stats.stddev : stats.mean;
  const double norm = base.norm();
  if (norm == 0.0) return Vector::Zero(base.size());
  return -base / norm;
}

std::pair<double, double> min_max_constraint(const std::vector<Vector>& benign, const Vector& candidate) {
  double bound = 0.0;
  for (std::size_t i = 0; i < benign.size(); ++i)
    for (std::size_t j = i + 1; j < benign.size(); ++j) bound = std::max(bound, (benign[i] - benign[j]).norm());
  double lhs = 0.0;
  for (const Vector& b : benign) lhs = std::max(lhs, (candidate - b).norm());
  return {lhs, bound};
}

std::pair<double, double> min_sum_constraint(const std::vector<Vector>& benign, const Vector& candidate) {
  double bound = 0.0;
  for (const Vector& a : benign) {
    double sum = 0.0;
    for (const Vector& b : benign) sum += (a - b).squaredNorm();
    bound = std::max(bound, sum);
  }
  double lhs = 0.0;
  for (const Vector& b : benign) lhs += (candidate - b).squaredNorm();
  return {lhs, bound};
}

namespace {

using Constraint = std::function<std::pair<double, double>(const std::vector<Vector>&, const Vector&)>;

ScaledAttack scaled_search(const std::vector<Vector>& benign, PerturbationDirection direction, double gamma_init,
                           int iters, const Constraint& constraint) {
  if (!(gamma_init > 0.0)) throw InvalidInput("attack: gamma_init must be positive");
  if (iters < 1) throw InvalidInput("attack: search_iters must be >= 1");
  const CohortStats stats = cohort_stats(benign);
  const Vector p = perturbation_direction(stats, direction);
  if (p.isZero(0.0)) return {stats.mean, 0.0};

  auto feasible = [&](double gamma) {
    const auto [lhs, bound] = constraint(benign, stats.mean + gamma * p);
    return lhs <= bound;
  };
  if (!feasible(0.0)) throw InvariantViolation("attack: benign mean violates its own constraint");

  const double cap = gamma_init * std::ldexp(1.0, 30);
  double lo = 0.0;
  double hi = gamma_init;
  while (feasible(hi)) {
    lo = hi;
    if (hi >= cap) return {stats.mean + hi * p, hi};
    hi *= 2.0;
  }
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  return {stats.mean + lo * p, lo};
}

}  // namespace

ScaledAttack min_max_attack(const std::vector<Vector>& benign, PerturbationDirection direction, double gamma_init,
                            int iters) {
  return scaled_search(benign, direction, gamma_init, iters, min_max_constraint);
}

ScaledAttack min_sum_attack(const std::vector<Vector>& benign, PerturbationDirection direction, double gamma_init,
                            int iters) {
  return scaled_search(benign, direction, gamma_init, iters, min_sum_constraint);
}

Vector fang_trimmed_attack(const std::vector<Vector>& benign, std::mt19937_64& rng) {
  const CohortStats s = cohort_stats(benign);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector out(s.mean.size());
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    const double mu = s.mean(j);
    const double sigma = s.stddev(j);
    const double u = unit(rng);
    out(j) = mu >= 0.0 ? mu - (3.0 + u) * sigma : mu + (3.0 + u) * sigma;
  }
  return out;
}

PoisonOutcome poison_round(const AttackConfig& cfg, int round, const std::map<int, ClientUpdate>& honest,
                           const LayerShapes& global_dims, std::uint64_t seed) {
  PoisonOutcome out{honest, {}};
  if (!cfg.active(round) || !cfg.is_model_poisoning()) return out;

  std::vector<int> attackers;
  for (const auto& [id, _] : honest)
    if (cfg.attacker_ids.contains(id)) attackers.push_back(id);
  if (attackers.empty()) return out;

  // Attacker-visible honest updates in the padded global space.
  std::map<int, FlatUpdate> flat;
  for (const auto& [id, u] : honest)
    if (cfg.full_knowledge || cfg.attacker_ids.contains(id)) flat.emplace(id, flatten(pad_to_global(u, global_dims)));
  if (flat.size() < 2) {
    out.events.push_back("attack " + attack_name(cfg.kind) + " skipped: attacker cohort smaller than two");
    return out;
  }

  // Fill entries a member does not cover with the covering members' mean (0 if nobody covers).
  const Eigen::Index d = flat.begin()->second.values.size();
  Vector cover_sum = Vector::Zero(d);
  Vector cover_count = Vector::Zero(d);
  for (const auto& [id, f] : flat) {
    cover_sum += f.values.cwiseProduct(f.mask);
    cover_count += f.mask;
  }
  const Vector cover_mean = (cover_count.array() > 0.0).select(cover_sum.cwiseQuotient(cover_count.cwiseMax(1.0)), 0.0);
  std::vector<Vector> cohort;
  for (const auto& [id, f] : flat)
    cohort.push_back((f.mask.array() > 0.0).select(f.values, cover_mean));

  const int n = static_cast<int>(honest.size());
  const int m = static_cast<int>(attackers.size());
  std::map<int, Vector> malicious;
  switch (cfg.kind) {
    case AttackKind::Lie: {
      const Vector v = lie_attack(cohort, n, m, cfg.z_override);
      for (int id : attackers) malicious[id] = v;
      break;
    }
    case AttackKind::MinMax: {
      const Vector v = min_max_attack(cohort, cfg.direction, cfg.gamma_init, cfg.search_iters).malicious;
      for (int id : attackers) malicious[id] = v;
      break;
    }
    case AttackKind::MinSum: {
      const Vector v = min_sum_attack(cohort, cfg.direction, cfg.gamma_init, cfg.search_iters).malicious;
      for (int id : attackers) malicious[id] = v;
      break;
    }
    case AttackKind::FangTrimmed:
      for (int id : attackers) {
        std::mt19937_64 rng =
            make_stream(seed, {tag(StreamTag::Attack), static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(id)});
        malicious[id] = fang_trimmed_attack(cohort, rng);
      }
      break;
    default:
      throw InvariantViolation("poison_round: unhandled attack");
  }

  for (int id : attackers) {
    const ClientUpdate& own = honest.at(id);
    const PaddedUpdate shape = pad_to_global(own, global_dims);
    out.submissions[id] = crop_to_client(unflatten(malicious.at(id), shape), own);
  }
  out.events.push_back("attack " + attack_name(cfg.kind) + " applied by " + std::to_string(m) + " attacker(s)");
  return out;
}

}  // namespace horus
