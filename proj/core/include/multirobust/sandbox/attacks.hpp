#pragma once

// White-box attacks on SandboxModel.
//
// Norm-bounded families (linf, l2, l1) perturb pixels directly; the
// parameter vector of an outcome is the perturbation x' - x. Semantic
// families (brightness, contrast, translate) optimise a low-dimensional
// transform parameter bounded by epsilon in the max norm.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "multirobust/attack_model.hpp"
#include "multirobust/sandbox/model.hpp"

namespace mrb {

class Rng;

struct AttackBudget {
  std::string family;
  double epsilon = 0.0;
  int iterations = 20;
  double step_size = 0.0;
  int restarts = 1;

  // iterations / restarts from the family params, step = eps / step_divisor.
  static AttackBudget for_family(const AttackFamily& family, double epsilon);
  void validate() const;
};

struct AttackOutcome {
  std::vector<double> image;        // best-loss iterate
  std::vector<double> parameters;   // its perturbation / transform parameters
  double loss = 0.0;
  bool success = false;             // some iterate was misclassified
  std::vector<double> adversarial_parameters;  // first misclassified iterate
  int gradient_evaluations = 0;
};

bool is_norm_family(std::string_view family);
bool is_semantic_family(std::string_view family);
std::size_t parameter_count(std::string_view family);

// PGD for linf / l2 / l1. `warm_start`, when non-empty, is an initial
// perturbation (projected into the ball before use). The returned image is
// the best-loss iterate across all steps and restarts.
AttackOutcome pgd_attack(const SandboxModel& model, std::span<const double> image, int label,
                         const AttackBudget& budget, Rng* rng = nullptr,
                         std::span<const double> warm_start = {});

// Projected sign-gradient ascent over transform parameters, initialised
// from the best point of a dense sweep.
AttackOutcome semantic_attack(const SandboxModel& model, std::span<const double> image, int label,
                              const AttackBudget& budget, Rng* rng = nullptr,
                              std::span<const double> warm_start = {});

// Dispatches on the family id; throws kAttack for families the sandbox
// cannot execute.
AttackOutcome run_attack(const SandboxModel& model, std::span<const double> image, int label,
                         const AttackBudget& budget, Rng* rng = nullptr,
                         std::span<const double> warm_start = {});

// Number of points per direction in the semantic sweep.
inline constexpr int kSweepPoints = 33;

// Parameter vectors visited by the semantic sweep: kSweepPoints evenly
// spaced values in [-eps, eps] for one-parameter families; for translate the
// same values along both axes and both diagonals.
std::vector<std::vector<double>> semantic_sweep(std::string_view family, double epsilon);

// Transforms.
std::vector<double> apply_brightness(std::span<const double> x, double delta);
std::vector<double> apply_contrast(std::span<const double> x, double delta);
// Sub-pixel shift by (dx, dy) with bilinear interpolation and edge clamping.
std::vector<double> apply_translate(std::span<const double> x, int height, int width, double dx,
                                    double dy);
std::vector<double> apply_semantic(std::string_view family, std::span<const double> x, int height,
                                   int width, std::span<const double> params);

// Distance of x' from x in the family's norm.
double perturbation_norm(std::string_view family, std::span<const double> x,
                         std::span<const double> x_adv);

// Euclidean projection onto {v : ||v||_1 <= radius}.
void project_l1_ball(std::span<double> v, double radius);
void project_l2_ball(std::span<double> v, double radius);

}  // namespace mrb
