#pragma once

// Small fully connected classifier with exact analytic gradients:
//   logits = W2 tanh(W1 x + b1) + b2     (hidden > 0)
//   logits = W2 x + b2                   (hidden == 0, linear model)
// trained with softmax cross-entropy.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "multirobust/attack_model.hpp"

namespace mrb {

class Rng;

struct Provenance {
  std::string defense;  // e.g. "standard", "at:linf@0.1"
  std::vector<TrainingThreat> threats;
  std::uint64_t seed = 0;
  int epochs = 0;
  int best_epoch = 0;
  double selection_accuracy = 0.0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct SandboxModel {
  int height = 0;  // input image geometry; input dim = height * width
  int width = 0;
  int hidden = 0;
  int num_classes = 0;
  std::vector<double> w1;  // hidden x input
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // classes x (hidden or input)
  std::vector<double> b2;  // classes
  Provenance provenance;

  std::size_t input_dim() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t feature_dim() const { return hidden > 0 ? static_cast<std::size_t>(hidden) : input_dim(); }
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  // All-zero parameters. Throws kConfiguration for non-positive sizes.
  static SandboxModel zeros(int height, int width, int hidden, int num_classes);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static SandboxModel random(int height, int width, int hidden, int num_classes, Rng& rng);

  void validate() const;

  friend bool operator==(const SandboxModel&, const SandboxModel&) = default;
};

// Scratch buffers reused across calls on the hot attack/training paths.
struct Workspace {
  std::vector<double> pre;     // hidden pre-activations
  std::vector<double> act;     // hidden activations
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<double> dlogits;
  std::vector<double> dact;
};

// Fills ws.logits / ws.probs and returns the cross-entropy loss of `label`
// (label < 0 skips the loss). Throws kNumeric naming the layer when an
// activation is not finite.
double forward(const SandboxModel& model, std::span<const double> x, int label, Workspace& ws);

std::vector<double> logits(const SandboxModel& model, std::span<const double> x);
int predict(const SandboxModel& model, std::span<const double> x, Workspace& ws);
int predict(const SandboxModel& model, std::span<const double> x);
double loss(const SandboxModel& model, std::span<const double> x, int label);

// Loss and d loss / d x written into `grad` (size input_dim).
double input_gradient(const SandboxModel& model, std::span<const double> x, int label,
                      std::span<double> grad, Workspace& ws);

struct Gradients {
  double loss = 0.0;
  std::vector<double> w1, b1, w2, b2;
  std::vector<double> input;

  static Gradients zeros_like(const SandboxModel& model);
};

Gradients backward(const SandboxModel& model, std::span<const double> x, int label);

// acc += scale * d loss / d params; returns the loss.
double accumulate_gradients(const SandboxModel& model, std::span<const double> x, int label,
                            double scale, Gradients& acc, Workspace& ws);

// Flattened parameter access in the order w1, b1, w2, b2 (used by the
// gradient checker and the optimizer).
double& parameter(SandboxModel& model, std::size_t index);
double gradient_entry(const Gradients& g, std::size_t index);

}  // namespace mrb
