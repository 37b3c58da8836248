#pragma once

// Robust-accuracy curves from per-image minimal-epsilon searches, and
// baseline tables from adversarially trained reference models.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multirobust/attack_model.hpp"
#include "multirobust/metrics.hpp"
#include "multirobust/profile.hpp"
#include "multirobust/sandbox/dataset.hpp"
#include "multirobust/sandbox/model.hpp"
#include "multirobust/sandbox/train.hpp"

namespace mrb {

// Attack success on one image across one family's grid, made monotone in
// epsilon: results are cached per grid index, a success at index i implies
// success at every index >= i, and attacks at larger strengths start from
// the smallest successful perturbation found so far.
class MonotoneAttacker {
 public:
  MonotoneAttacker(const SandboxModel& model, std::span<const double> image, int label,
                   const AttackFamily& family, std::uint64_t stream_seed);

  bool succeeds(std::size_t grid_index);
  int attack_runs() const noexcept { return runs_; }

 private:
  enum class State : unsigned char { kUnknown, kSuccess, kFailure };

  const SandboxModel& model_;
  std::span<const double> image_;
  int label_;
  const AttackFamily& family_;
  std::uint64_t seed_;
  std::vector<State> cache_;
  std::vector<std::vector<double>> adversarial_;  // per index, when successful
  int runs_ = 0;
};

enum class SearchStrategy { kBinary, kExhaustive };

struct SearchResult {
  double epsilon = 0.0;  // grid value, 0 (clean misclassified) or kNeverSucceeds
  int attack_runs = 0;
};

// Smallest grid strength at which the attack succeeds, by bisection over
// grid indices (kBinary) or an ascending scan (kExhaustive).
SearchResult minimal_epsilon_search(const SandboxModel& model, std::span<const double> image,
                                    int label, const AttackFamily& family,
                                    std::uint64_t stream_seed,
                                    SearchStrategy strategy = SearchStrategy::kBinary);

// (epsilon, accuracy) pairs starting with epsilon = 0.
std::vector<std::pair<double, double>> accuracy_curve(const MinimalEpsilonProfile& profile,
                                                      const std::string& family);

struct EvalOptions {
  std::uint64_t seed = 0;
  int jobs = 1;
  SearchStrategy strategy = SearchStrategy::kBinary;
  Split split = Split::kTest;
};

struct EvaluationResult {
  EvaluationMatrix matrix;
  MinimalEpsilonProfile profile;
  std::vector<std::string> failures;  // per (image, family) attack errors
};

// Per-image RNG stream; independent of evaluation order.
std::uint64_t image_stream_seed(std::uint64_t master, std::size_t image_index, std::string_view family);

EvaluationResult evaluate_model(const SandboxModel& model, const std::string& model_id,
                                std::span<const AttackFamily> families, const Dataset& dataset,
                                const EvalOptions& options);

double clean_accuracy(const SandboxModel& model, const Dataset& dataset, Split split);

// Robust accuracy of `model` at exactly (family, epsilon) on the split.
double accuracy_at(const SandboxModel& model, const AttackFamily& family, double epsilon,
                   const Dataset& dataset, const EvalOptions& options);

struct BaselineConfig {
  std::vector<std::uint64_t> seeds;
  TrainHyper hyper;
  EvalOptions eval;
};

// One at(family, eps) model per seed and grid point, evaluated at its own
// instance; the clean cell comes from standard-trained models. Training
// failures leave the cell out and mark the table incomplete.
BaselineTable build_baseline_table(const Dataset& dataset, std::span<const AttackFamily> families,
                                   const BaselineConfig& config);

}  // namespace mrb
