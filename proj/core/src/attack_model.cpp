#include "multirobust/attack_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>

#include "multirobust/error.hpp"

namespace mrb {

namespace {

constexpr double kGridTolerance = 1e-9;

// 0.48000000000000004 -> 0.48, so generated grid points print cleanly.
double round_significant(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::strtod(buf, nullptr);
}

bool same_strength(double a, double b) {
  return std::abs(a - b) <= kGridTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

std::string shortest(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

}  // namespace

bool is_builtin_family(std::string_view id) {
  return std::ranges::find(kBuiltinFamilies, id) != std::end(kBuiltinFamilies);
}

bool is_external_family(std::string_view id) {
  constexpr std::string_view prefix = "external:";
  return id.size() > prefix.size() && id.substr(0, prefix.size()) == prefix;
}

bool is_valid_family_id(std::string_view id) {
  return is_builtin_family(id) || is_external_family(id);
}

AttackFamily::AttackFamily(std::string id, std::vector<double> grid, AttackParams params)
    : id_(std::move(id)), grid_(std::move(grid)), params_(params) {
  if (!is_valid_family_id(id_)) {
    throw Error(ErrorKind::kConfiguration, "unknown attack family id '" + id_ + "'");
  }
  if (grid_.empty()) {
    throw Error(ErrorKind::kConfiguration, "attack family '" + id_ + "' has an empty grid");
  }
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (!std::isfinite(grid_[i]) || grid_[i] <= 0.0) {
      throw Error(ErrorKind::kConfiguration,
                  "attack family '" + id_ + "': grid values must be finite and positive");
    }
    if (i > 0 && grid_[i] <= grid_[i - 1]) {
      throw Error(ErrorKind::kConfiguration,
                  "attack family '" + id_ + "': grid must be strictly increasing");
    }
  }
  if (params_.iterations < 1 || !(params_.step_divisor > 0.0) || params_.restarts < 1) {
    throw Error(ErrorKind::kConfiguration,
                "attack family '" + id_ + "': iterations, step divisor and restarts must be positive");
  }
}

std::optional<std::size_t> AttackFamily::grid_index(double eps) const {
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (same_strength(grid_[i], eps)) return i;
  }
  return std::nullopt;
}

std::size_t AttackFamily::count_at_or_below(double eps) const {
  std::size_t n = 0;
  for (double g : grid_) {
    if (g < eps || same_strength(g, eps)) ++n;
  }
  return n;
}

std::vector<double> uniform_grid(double max_epsilon, std::size_t count) {
  if (count == 0 || !std::isfinite(max_epsilon) || max_epsilon <= 0.0) {
    throw Error(ErrorKind::kConfiguration, "uniform grid needs count >= 1 and a positive maximum");
  }
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = round_significant(max_epsilon * static_cast<double>(i + 1) / static_cast<double>(count));
  }
  return grid;
}

std::string AttackInstance::label() const {
  if (is_clean()) return std::string(kCleanFamily);
  return family + "@" + shortest(epsilon);
}

AttackInstance canonical(AttackInstance instance) {
  if (instance.epsilon == 0.0) return AttackInstance::clean();
  return instance;
}

const AttackFamily* find_family(std::span<const AttackFamily> families, std::string_view id) {
  auto it = std::ranges::find_if(families, [&](const AttackFamily& f) { return f.id() == id; });
  return it == families.end() ? nullptr : &*it;
}

AttackSet::AttackSet(std::vector<AttackInstance> instances, std::vector<double> weights)
    : instances_(std::move(instances)), weights_(std::move(weights)) {
  if (instances_.size() != weights_.size()) {
    throw Error(ErrorKind::kConfiguration, "attack set: one weight per instance required");
  }
  double total = 0.0;
  std::size_t clean_count = 0;
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    instances_[i] = canonical(std::move(instances_[i]));
    if (instances_[i].is_clean()) ++clean_count;
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
      throw Error(ErrorKind::kConfiguration, "attack set: weights must be finite and nonnegative");
    }
    total += weights_[i];
  }
  if (clean_count > 1) {
    throw Error(ErrorKind::kConfiguration, "attack set: at most one epsilon = 0 entry");
  }
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    for (std::size_t j = i + 1; j < instances_.size(); ++j) {
      if (!instances_[i].is_clean() && instances_[i] == instances_[j]) {
        throw Error(ErrorKind::kConfiguration, "attack set: duplicate instance " + instances_[i].label());
      }
    }
  }
  if (!instances_.empty() && std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kConfiguration, "attack set: weights must sum to 1");
  }
}

AttackSet AttackSet::uniform(std::vector<AttackInstance> instances) {
  const std::size_t n = instances.size();
  std::vector<double> weights(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  return AttackSet(std::move(instances), std::move(weights));
}

AttackSet AttackSet::from_families(std::span<const AttackFamily> families, bool include_clean) {
  std::vector<AttackInstance> instances;
  if (include_clean) instances.push_back(AttackInstance::clean());
  for (const auto& family : families) {
    for (double eps : family.grid()) instances.push_back({family.id(), eps});
  }
  return uniform(std::move(instances));
}

bool AttackSet::contains(const AttackInstance& instance) const {
  return std::ranges::find(instances_, canonical(instance)) != instances_.end();
}

KnowledgeSet::KnowledgeSet() : instances_{AttackInstance::clean()} {}

KnowledgeSet::KnowledgeSet(std::vector<AttackInstance> instances) {
  instances_.push_back(AttackInstance::clean());
  for (auto& inst : instances) {
    auto c = canonical(std::move(inst));
    if (std::ranges::find(instances_, c) == instances_.end()) instances_.push_back(std::move(c));
  }
}

bool KnowledgeSet::contains(const AttackInstance& instance) const {
  return std::ranges::find(instances_, canonical(instance)) != instances_.end();
}

KnowledgeSet build_knowledge_set(std::span<const TrainingThreat> training,
                                 std::span<const AttackFamily> families,
                                 std::vector<std::string>* warnings) {
  std::vector<AttackInstance> instances;
  for (const auto& threat : training) {
    const AttackFamily* family = find_family(families, threat.family);
    if (family == nullptr) {
      throw Error(ErrorKind::kConfiguration,
                  "knowledge set: train-time family '" + threat.family + "' is not registered");
    }
    if (!(threat.epsilon >= 0.0) || !std::isfinite(threat.epsilon)) {
      throw Error(ErrorKind::kConfiguration, "knowledge set: train epsilon must be finite and >= 0");
    }
    const std::size_t n = family->count_at_or_below(threat.epsilon);
    if (n == 0 && threat.epsilon > 0.0 && warnings != nullptr) {
      warnings->push_back("train epsilon " + shortest(threat.epsilon) + " of family '" +
                          threat.family + "' is below its smallest grid point");
    }
    for (std::size_t i = 0; i < n; ++i) instances.push_back({family->id(), family->grid()[i]});
  }
  return KnowledgeSet(std::move(instances));
}

std::string_view to_string(MultiErrorKind kind) {
  switch (kind) {
    case MultiErrorKind::kExp: return "exp";
    case MultiErrorKind::kMax: return "max";
    case MultiErrorKind::kInd: return "ind";
  }
  return "ind";
}

MultiErrorKind multi_error_kind_from_string(std::string_view name) {
  if (name == "exp") return MultiErrorKind::kExp;
  if (name == "max") return MultiErrorKind::kMax;
  if (name == "ind") return MultiErrorKind::kInd;
  throw Error(ErrorKind::kConfiguration, "unknown multiattack error kind '" + std::string(name) + "'");
}

void GameSpec::validate() const {
  if (knowledge_set.size() > attack_set.size()) {
    throw Error(ErrorKind::kConfiguration, "game: knowledge set larger than attack set");
  }
  if (threshold.empty()) throw Error(ErrorKind::kConfiguration, "game: threshold missing");
  for (double g : threshold) {
    if (!(g > 0.0)) throw Error(ErrorKind::kConfiguration, "game: thresholds must be positive");
  }
  if (error_kind == MultiErrorKind::kInd) {
    if (threshold.size() != 1 && threshold.size() != attack_set.size()) {
      throw Error(ErrorKind::kConfiguration, "game: threshold vector length must equal |K|");
    }
  } else if (threshold.size() != 1) {
    throw Error(ErrorKind::kConfiguration, "game: vector threshold requires the ind error kind");
  }
}

GameVerdict game_outcome(const GameSpec& spec, std::span<const double> err_h,
                         std::span<const double> err_opt) {
  spec.validate();
  const std::size_t n = spec.error_kind == MultiErrorKind::kInd ? spec.attack_set.size() : 1;
  if (err_h.size() != n || err_opt.size() != n) {
    throw Error(ErrorKind::kConfiguration, "game: error vectors have the wrong length");
  }
  GameVerdict verdict;
  verdict.learner_wins = true;
  verdict.ratios.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double gamma = spec.threshold.size() == 1 ? spec.threshold[0] : spec.threshold[i];
    double ratio;
    if (err_opt[i] == 0.0) {
      ratio = err_h[i] == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
      if (err_h[i] > 0.0) verdict.unbounded_ratio = true;
    } else {
      ratio = err_h[i] / err_opt[i];
    }
    verdict.ratios[i] = ratio;
    // An unbounded ratio only satisfies an infinite threshold.
    if (!(ratio <= gamma)) verdict.learner_wins = false;
  }
  return verdict;
}

}  // namespace mrb
