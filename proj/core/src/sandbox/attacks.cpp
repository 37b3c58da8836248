#include "multirobust/sandbox/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "multirobust/error.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace mrb {

namespace {

constexpr double kTinyGradient = 1e-12;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool misclassified(const Workspace& ws, int label) {
  const auto best = std::ranges::max_element(ws.logits) - ws.logits.begin();
  return best != label;
}

void project_norm_ball(std::string_view family, std::span<double> delta, double eps) {
  if (family == "linf") {
    for (double& v : delta) v = std::clamp(v, -eps, eps);
  } else if (family == "l2") {
    project_l2_ball(delta, eps);
  } else {
    project_l1_ball(delta, eps);
  }
}

// Keeps x + delta inside [0, 1]; only shrinks |delta_i|, so the norm
// constraint survives.
void clip_to_box(std::span<const double> x, std::span<double> delta) {
  for (std::size_t i = 0; i < x.size(); ++i) delta[i] = std::clamp(x[i] + delta[i], 0.0, 1.0) - x[i];
}

void random_start(std::string_view family, double eps, std::span<double> delta, Rng& rng) {
  if (family == "linf") {
    for (double& v : delta) v = rng.uniform(-eps, eps);
    return;
  }
  double norm = 0.0;
  for (double& v : delta) {
    v = family == "l2" ? rng.normal() : rng.uniform(-1.0, 1.0);
    norm += family == "l2" ? v * v : std::abs(v);
  }
  norm = family == "l2" ? std::sqrt(norm) : norm;
  const double scale = norm > 0.0 ? eps * rng.uniform() / norm : 0.0;
  for (double& v : delta) v *= scale;
}

// Ascent direction for one PGD step; false when the gradient vanishes.
bool step_direction(std::string_view family, std::span<const double> grad,
                    std::span<const double> x_adv, std::span<double> dir) {
  const std::size_t d = grad.size();
  std::ranges::fill(dir, 0.0);
  if (family == "linf") {
    bool any = false;
    for (std::size_t i = 0; i < d; ++i) {
      dir[i] = sign(grad[i]);
      any = any || grad[i] != 0.0;
    }
    return any;
  }
  if (family == "l2") {
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (norm < kTinyGradient) return false;
    for (std::size_t i = 0; i < d; ++i) dir[i] = grad[i] / norm;
    return true;
  }
  // l1: split a unit l1 step over the top-k coordinates that can still move
  // in the ascent direction.
  std::vector<std::size_t> movable;
  for (std::size_t i = 0; i < d; ++i) {
    if (grad[i] > 0.0 && x_adv[i] < 1.0) movable.push_back(i);
    if (grad[i] < 0.0 && x_adv[i] > 0.0) movable.push_back(i);
  }
  if (movable.empty()) return false;
  const std::size_t k = std::min(movable.size(), std::max<std::size_t>(1, d / 20));
  std::partial_sort(movable.begin(), movable.begin() + static_cast<std::ptrdiff_t>(k), movable.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double ga = std::abs(grad[a]);
                      const double gb = std::abs(grad[b]);
                      return ga != gb ? ga > gb : a < b;
                    });
  for (std::size_t j = 0; j < k; ++j) {
    dir[movable[j]] = sign(grad[movable[j]]) / static_cast<double>(k);
  }
  return true;
}

void identity_outcome(const SandboxModel& model, std::span<const double> image, int label,
                      std::size_t n_params, AttackOutcome& out) {
  Workspace ws;
  out.image.assign(image.begin(), image.end());
  out.parameters.assign(n_params, 0.0);
  out.loss = forward(model, image, label, ws);
  out.success = misclassified(ws, label);
  if (out.success) out.adversarial_parameters = out.parameters;
}

// Per-pixel derivative of the transformed image w.r.t. each parameter.
void semantic_jacobian(std::string_view family, std::span<const double> x, int height, int width,
                       std::span<const double> p, std::vector<double>& jx, std::vector<double>& jy) {
  const std::size_t d = x.size();
  jx.assign(d, 0.0);
  jy.assign(d, 0.0);
  if (family == "brightness") {
    for (std::size_t i = 0; i < d; ++i) {
      const double v = x[i] + p[0];
      jx[i] = (v > 0.0 && v < 1.0) ? 1.0 : 0.0;
    }
  } else if (family == "contrast") {
    for (std::size_t i = 0; i < d; ++i) {
      const double v = 0.5 + (1.0 + p[0]) * (x[i] - 0.5);
      jx[i] = (v > 0.0 && v < 1.0) ? x[i] - 0.5 : 0.0;
    }
  } else {
    auto at = [&](int r, int c) {
      r = std::clamp(r, 0, height - 1);
      c = std::clamp(c, 0, width - 1);
      return x[static_cast<std::size_t>(r * width + c)];
    };
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double sy = r - p[1];
        const double sx = c - p[0];
        const int y0 = static_cast<int>(std::floor(sy));
        const int x0 = static_cast<int>(std::floor(sx));
        const double a = sy - y0;
        const double b = sx - x0;
        const double i00 = at(y0, x0), i01 = at(y0, x0 + 1), i10 = at(y0 + 1, x0), i11 = at(y0 + 1, x0 + 1);
        const double dv_db = (1.0 - a) * (i01 - i00) + a * (i11 - i10);
        const double dv_da = (1.0 - b) * (i10 - i00) + b * (i11 - i01);
        const std::size_t idx = static_cast<std::size_t>(r * width + c);
        jx[idx] = -dv_db;  // d sx / d dx = -1
        jy[idx] = -dv_da;
      }
    }
  }
}

}  // namespace

AttackBudget AttackBudget::for_family(const AttackFamily& family, double epsilon) {
  AttackBudget b;
  b.family = family.id();
  b.epsilon = epsilon;
  b.iterations = family.params().iterations;
  b.restarts = family.params().restarts;
  b.step_size = epsilon / family.params().step_divisor;
  return b;
}

void AttackBudget::validate() const {
  if (iterations < 1 || restarts < 1) {
    throw Error(ErrorKind::kConfiguration, "attack budget: iterations and restarts must be >= 1");
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorKind::kConfiguration, "attack budget: epsilon must be finite and >= 0");
  }
  if (epsilon > 0.0 && !(step_size > 0.0)) {
    throw Error(ErrorKind::kConfiguration, "attack budget: step size must be positive");
  }
}

bool is_norm_family(std::string_view family) {
  return family == "linf" || family == "l2" || family == "l1";
}

bool is_semantic_family(std::string_view family) {
  return family == "brightness" || family == "contrast" || family == "translate";
}

std::size_t parameter_count(std::string_view family) {
  if (family == "translate") return 2;
  return 1;
}

void project_l2_ball(std::span<double> v, double radius) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > radius && norm > 0.0) {
    const double s = radius / norm;
    for (double& x : v) x *= s;
  }
}

void project_l1_ball(std::span<double> v, double radius) {
  double total = 0.0;
  for (double x : v) total += std::abs(x);
  if (total <= radius) return;
  if (radius <= 0.0) {
    std::ranges::fill(v, 0.0);
    return;
  }
  std::vector<double> u(v.size());
  std::ranges::transform(v, u.begin(), [](double x) { return std::abs(x); });
  std::ranges::sort(u, std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - radius) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& x : v) x = sign(x) * std::max(std::abs(x) - theta, 0.0);
  // Rounding can leave the sum a hair above the radius.
  double after = 0.0;
  for (double x : v) after += std::abs(x);
  if (after > radius) {
    const double s = radius / after;
    for (double& x : v) x *= s;
  }
}

AttackOutcome pgd_attack(const SandboxModel& model, std::span<const double> image, int label,
                         const AttackBudget& budget, Rng* rng, std::span<const double> warm_start) {
  budget.validate();
  if (!is_norm_family(budget.family)) {
    throw Error(ErrorKind::kAttack, "pgd_attack: '" + budget.family + "' is not a norm-bounded family");
  }
  const std::size_t d = image.size();
  AttackOutcome out;
  if (budget.epsilon == 0.0) {
    identity_outcome(model, image, label, d, out);
    return out;
  }
  if (budget.restarts > 1 && rng == nullptr) {
    throw Error(ErrorKind::kAttack, "pgd_attack: random restarts need a generator");
  }
  Workspace ws;
  std::vector<double> delta(d), x_adv(d), grad(d), dir(d);
  out.loss = -std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < budget.restarts; ++restart) {
    if (restart == 0) {
      if (!warm_start.empty()) {
        if (warm_start.size() != d) throw Error(ErrorKind::kAttack, "pgd_attack: warm start has wrong size");
        std::ranges::copy(warm_start, delta.begin());
      } else {
        std::ranges::fill(delta, 0.0);
      }
    } else {
      random_start(budget.family, budget.epsilon, delta, *rng);
    }
    project_norm_ball(budget.family, delta, budget.epsilon);
    clip_to_box(image, delta);

    for (int it = 0;; ++it) {
      for (std::size_t i = 0; i < d; ++i) x_adv[i] = image[i] + delta[i];
      const double l = input_gradient(model, x_adv, label, grad, ws);
      ++out.gradient_evaluations;
      if (misclassified(ws, label)) {
        out.success = true;
        if (out.adversarial_parameters.empty()) out.adversarial_parameters = delta;
      }
      if (l > out.loss) {
        out.loss = l;
        out.image = x_adv;
        out.parameters = delta;
      }
      if (it == budget.iterations) break;
      if (!step_direction(budget.family, grad, x_adv, dir)) break;
      for (std::size_t i = 0; i < d; ++i) delta[i] += budget.step_size * dir[i];
      project_norm_ball(budget.family, delta, budget.epsilon);
      clip_to_box(image, delta);
    }
  }
  return out;
}

std::vector<std::vector<double>> semantic_sweep(std::string_view family, double epsilon) {
  std::vector<double> values(kSweepPoints);
  for (int i = 0; i < kSweepPoints; ++i) {
    values[static_cast<std::size_t>(i)] = -epsilon + 2.0 * epsilon * i / (kSweepPoints - 1);
  }
  values[kSweepPoints / 2] = 0.0;
  std::vector<std::vector<double>> points;
  if (family != "translate") {
    for (double v : values) points.push_back({v});
    return points;
  }
  for (double v : values) points.push_back({v, 0.0});
  for (double v : values) {
    if (v != 0.0) points.push_back({0.0, v});
  }
  for (double v : values) {
    if (v != 0.0) points.push_back({v, v});
  }
  for (double v : values) {
    if (v != 0.0) points.push_back({v, -v});
  }
  return points;
}

std::vector<double> apply_brightness(std::span<const double> x, double delta) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + delta, 0.0, 1.0);
  return out;
}

std::vector<double> apply_contrast(std::span<const double> x, double delta) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(0.5 + (1.0 + delta) * (x[i] - 0.5), 0.0, 1.0);
  }
  return out;
}

std::vector<double> apply_translate(std::span<const double> x, int height, int width, double dx,
                                    double dy) {
  if (x.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw Error(ErrorKind::kAttack, "translate: image size does not match its geometry");
  }
  auto at = [&](int r, int c) {
    r = std::clamp(r, 0, height - 1);
    c = std::clamp(c, 0, width - 1);
    return x[static_cast<std::size_t>(r * width + c)];
  };
  std::vector<double> out(x.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double sy = r - dy;
      const double sx = c - dx;
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const double a = sy - y0;
      const double b = sx - x0;
      out[static_cast<std::size_t>(r * width + c)] =
          (1.0 - a) * ((1.0 - b) * at(y0, x0) + b * at(y0, x0 + 1)) +
          a * ((1.0 - b) * at(y0 + 1, x0) + b * at(y0 + 1, x0 + 1));
    }
  }
  return out;
}

std::vector<double> apply_semantic(std::string_view family, std::span<const double> x, int height,
                                   int width, std::span<const double> params) {
  if (family == "brightness") return apply_brightness(x, params[0]);
  if (family == "contrast") return apply_contrast(x, params[0]);
  if (family == "translate") return apply_translate(x, height, width, params[0], params[1]);
  throw Error(ErrorKind::kAttack, "'" + std::string(family) + "' is not a semantic family");
}

AttackOutcome semantic_attack(const SandboxModel& model, std::span<const double> image, int label,
                              const AttackBudget& budget, Rng* rng, std::span<const double> warm_start) {
  budget.validate();
  if (!is_semantic_family(budget.family)) {
    throw Error(ErrorKind::kAttack, "semantic_attack: '" + budget.family + "' is not a semantic family");
  }
  const std::size_t n = parameter_count(budget.family);
  AttackOutcome out;
  if (budget.epsilon == 0.0) {
    identity_outcome(model, image, label, n, out);
    return out;
  }
  if (budget.restarts > 1 && rng == nullptr) {
    throw Error(ErrorKind::kAttack, "semantic_attack: random restarts need a generator");
  }
  const double eps = budget.epsilon;
  const std::size_t d = image.size();
  Workspace ws;
  std::vector<double> grad(d), jx, jy;
  out.loss = -std::numeric_limits<double>::infinity();

  // Evaluates the loss at p, optionally with its parameter gradient.
  auto evaluate = [&](const std::vector<double>& p, std::vector<double>* pgrad) {
    const auto x_adv = apply_semantic(budget.family, image, model.height, model.width, p);
    double l;
    if (pgrad != nullptr) {
      l = input_gradient(model, x_adv, label, grad, ws);
      ++out.gradient_evaluations;
      semantic_jacobian(budget.family, image, model.height, model.width, p, jx, jy);
      (*pgrad)[0] = std::inner_product(grad.begin(), grad.end(), jx.begin(), 0.0);
      if (n == 2) (*pgrad)[1] = std::inner_product(grad.begin(), grad.end(), jy.begin(), 0.0);
    } else {
      l = forward(model, x_adv, label, ws);
    }
    if (misclassified(ws, label)) {
      out.success = true;
      if (out.adversarial_parameters.empty()) out.adversarial_parameters = p;
    }
    if (l > out.loss) {
      out.loss = l;
      out.image = x_adv;
      out.parameters = p;
    }
    return l;
  };

  for (int restart = 0; restart < budget.restarts; ++restart) {
    std::vector<double> p(n, 0.0);
    if (restart == 0) {
      double best = -std::numeric_limits<double>::infinity();
      if (!warm_start.empty()) {
        if (warm_start.size() != n) throw Error(ErrorKind::kAttack, "semantic_attack: warm start has wrong size");
        std::vector<double> w(warm_start.begin(), warm_start.end());
        for (double& v : w) v = std::clamp(v, -eps, eps);
        best = evaluate(w, nullptr);
        p = w;
      }
      for (const auto& candidate : semantic_sweep(budget.family, eps)) {
        const double l = evaluate(candidate, nullptr);
        if (l > best) {
          best = l;
          p = candidate;
        }
      }
    } else {
      for (double& v : p) v = rng->uniform(-eps, eps);
    }

    std::vector<double> pgrad(n);
    evaluate(p, &pgrad);
    for (int it = 0; it < budget.iterations; ++it) {
      double magnitude = 0.0;
      for (double g : pgrad) magnitude = std::max(magnitude, std::abs(g));
      if (magnitude < kTinyGradient) break;  // flat: the sweep already covered the range
      for (std::size_t j = 0; j < n; ++j) {
        p[j] = std::clamp(p[j] + budget.step_size * sign(pgrad[j]), -eps, eps);
      }
      evaluate(p, &pgrad);
    }
  }
  return out;
}

AttackOutcome run_attack(const SandboxModel& model, std::span<const double> image, int label,
                         const AttackBudget& budget, Rng* rng, std::span<const double> warm_start) {
  if (is_norm_family(budget.family)) return pgd_attack(model, image, label, budget, rng, warm_start);
  if (is_semantic_family(budget.family)) {
    return semantic_attack(model, image, label, budget, rng, warm_start);
  }
  throw Error(ErrorKind::kAttack, "the sandbox cannot execute attack family '" + budget.family + "'");
}

double perturbation_norm(std::string_view family, std::span<const double> x,
                         std::span<const double> x_adv) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(x_adv[i] - x[i]);
    if (family == "linf") acc = std::max(acc, d);
    else if (family == "l2") acc += d * d;
    else acc += d;
  }
  return family == "l2" ? std::sqrt(acc) : acc;
}

}  // namespace mrb
