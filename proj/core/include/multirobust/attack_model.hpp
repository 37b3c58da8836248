#pragma once

// Vocabulary for attacks: families with strength grids, individual attack
// instances, attack sets with a distribution, knowledge sets, and the
// threshold game used to decide whether a learner is close to optimal.

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mrb {

// Reserved family id of the no-attack instance (epsilon = 0).
inline constexpr std::string_view kCleanFamily = "clean";

// Families the sandbox knows how to execute.
inline constexpr std::string_view kBuiltinFamilies[] = {
    "linf", "l2", "l1", "brightness", "contrast", "translate"};

bool is_builtin_family(std::string_view id);
bool is_external_family(std::string_view id);  // "external:<tag>"
bool is_valid_family_id(std::string_view id);

// Optimizer settings for one family. The step size of an attack at strength
// eps is eps / step_divisor.
struct AttackParams {
  int iterations = 20;
  double step_divisor = 18.0;
  int restarts = 1;

  friend bool operator==(const AttackParams&, const AttackParams&) = default;
};

class AttackFamily {
 public:
  // Throws kConfiguration if the id is unknown or the grid is empty, not
  // strictly increasing, or contains a non-finite / non-positive value.
  AttackFamily(std::string id, std::vector<double> grid, AttackParams params = {});

  const std::string& id() const noexcept { return id_; }
  std::span<const double> grid() const noexcept { return grid_; }
  const AttackParams& params() const noexcept { return params_; }
  double max_epsilon() const noexcept { return grid_.back(); }

  // Index of the grid point equal to eps (relative tolerance 1e-9).
  std::optional<std::size_t> grid_index(double eps) const;
  // Number of grid points <= eps (with the same tolerance).
  std::size_t count_at_or_below(double eps) const;

  friend bool operator==(const AttackFamily&, const AttackFamily&) = default;

 private:
  std::string id_;
  std::vector<double> grid_;
  AttackParams params_;
};

// Builds an evenly spaced grid max/count, 2*max/count, ..., max.
std::vector<double> uniform_grid(double max_epsilon, std::size_t count);

struct AttackInstance {
  std::string family;
  double epsilon = 0.0;

  static AttackInstance clean() { return {std::string(kCleanFamily), 0.0}; }
  bool is_clean() const noexcept { return epsilon == 0.0; }

  // "clean" or "<family>@<eps>" with the shortest round-tripping decimal.
  std::string label() const;

  friend auto operator<=>(const AttackInstance&, const AttackInstance&) = default;
  friend bool operator==(const AttackInstance&, const AttackInstance&) = default;
};

// Normalizes any epsilon = 0 instance to the canonical clean instance.
AttackInstance canonical(AttackInstance instance);

const AttackFamily* find_family(std::span<const AttackFamily> families, std::string_view id);

// Test-time attack set K with its distribution P(K). Iteration order is the
// order of `instances`.
class AttackSet {
 public:
  AttackSet() = default;
  AttackSet(std::vector<AttackInstance> instances, std::vector<double> weights);

  static AttackSet uniform(std::vector<AttackInstance> instances);
  // Clean instance (when requested) followed by every grid point of every
  // family, uniform weights.
  static AttackSet from_families(std::span<const AttackFamily> families, bool include_clean = true);

  std::span<const AttackInstance> instances() const noexcept { return instances_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return instances_.size(); }
  bool empty() const noexcept { return instances_.empty(); }
  bool contains(const AttackInstance& instance) const;

 private:
  std::vector<AttackInstance> instances_;
  std::vector<double> weights_;
};

// The perturbation functions a defender could exploit while training.
// Always contains the clean instance.
class KnowledgeSet {
 public:
  KnowledgeSet();
  explicit KnowledgeSet(std::vector<AttackInstance> instances);

  std::span<const AttackInstance> instances() const noexcept { return instances_; }
  std::size_t size() const noexcept { return instances_.size(); }
  bool contains(const AttackInstance& instance) const;

 private:
  std::vector<AttackInstance> instances_;
};

// One train-time threat of a defense: a family and the strength used.
struct TrainingThreat {
  std::string family;
  double epsilon = 0.0;

  friend bool operator==(const TrainingThreat&, const TrainingThreat&) = default;
};

// {clean} plus, for each train-time family, the grid prefix at or below the
// defense's train epsilon. Train epsilons below the first grid point add
// nothing and push a message onto `warnings` when given.
KnowledgeSet build_knowledge_set(std::span<const TrainingThreat> training,
                                 std::span<const AttackFamily> families,
                                 std::vector<std::string>* warnings = nullptr);

enum class MultiErrorKind { kExp, kMax, kInd };

std::string_view to_string(MultiErrorKind kind);
MultiErrorKind multi_error_kind_from_string(std::string_view name);

struct GameSpec {
  // One entry for kExp/kMax; one entry per attack-set instance for kInd.
  std::vector<double> threshold;
  AttackSet attack_set;
  KnowledgeSet knowledge_set;
  MultiErrorKind error_kind = MultiErrorKind::kInd;

  void validate() const;
};

struct GameVerdict {
  bool learner_wins = false;
  bool unbounded_ratio = false;
  std::vector<double> ratios;  // err_h / err_opt per component (inf when unbounded)
};

// Learner wins iff err_h / err_opt <= threshold, componentwise for kInd.
GameVerdict game_outcome(const GameSpec& spec, std::span<const double> err_h,
                         std::span<const double> err_opt);

}  // namespace mrb
