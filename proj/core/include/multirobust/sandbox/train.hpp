#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multirobust/attack_model.hpp"
#include "multirobust/sandbox/dataset.hpp"
#include "multirobust/sandbox/model.hpp"

namespace mrb {

// standard: clean examples only.
// at:  adversarial examples of the single threat.
// avg: loss averaged over every threat's adversarial example.
// max: loss of the threat whose adversarial example scores highest.
// sat: one threat drawn uniformly at random per example.
enum class DefenseKind { kStandard, kAt, kAvg, kMax, kSat };

std::string_view to_string(DefenseKind kind);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::kStandard;
  std::vector<TrainingThreat> threats;

  // "standard", "at:linf@0.1", "max:linf@0.1+l2@0.5", ...
  static DefenseSpec parse(std::string_view text);
  std::string label() const;
  void validate(std::span<const AttackFamily> registry) const;

  friend bool operator==(const DefenseSpec&, const DefenseSpec&) = default;
};

struct TrainHyper {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 0.1;  // divided by 10 at 1/2 and again at 3/4 of the epochs
  int hidden = 32;
  // Overrides the family iteration count while generating training attacks.
  std::optional<int> attack_iterations;

  void validate() const;
  friend bool operator==(const TrainHyper&, const TrainHyper&) = default;
};

double learning_rate_at(const TrainHyper& hyper, int epoch);

// Fraction of `split` classified correctly under every threat (clean
// accuracy when `threats` is empty). Attacks use cold starts.
double robust_accuracy(const SandboxModel& model, const Dataset& dataset, Split split,
                       std::span<const TrainingThreat> threats,
                       std::span<const AttackFamily> registry, std::uint64_t seed);

// Minibatch SGD; returns the epoch checkpoint with the best validation
// robust accuracy against the training threats. Throws kTraining with the
// epoch index when the loss diverges.
SandboxModel train(const Dataset& dataset, const DefenseSpec& defense,
                   std::span<const AttackFamily> registry, const TrainHyper& hyper,
                   std::uint64_t seed);

}  // namespace mrb
