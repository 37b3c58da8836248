#include "multirobust/sandbox/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "multirobust/error.hpp"
#include "multirobust/sandbox/attacks.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace mrb {

namespace {

double parse_double(std::string_view text, std::string_view context) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::kUsage, "cannot parse number '" + std::string(text) + "' in " +
                                       std::string(context));
  }
  return value;
}

DefenseKind kind_from_string(std::string_view name) {
  if (name == "standard") return DefenseKind::kStandard;
  if (name == "at") return DefenseKind::kAt;
  if (name == "avg") return DefenseKind::kAvg;
  if (name == "max") return DefenseKind::kMax;
  if (name == "sat") return DefenseKind::kSat;
  throw Error(ErrorKind::kUsage, "unknown defense kind '" + std::string(name) +
                                     "' (expected standard, at, avg, max or sat)");
}

std::string format_threat(const TrainingThreat& t) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), t.epsilon);
  return t.family + "@" + std::string(buf, end);
}

AttackBudget training_budget(const TrainingThreat& threat, std::span<const AttackFamily> registry,
                             const TrainHyper& hyper) {
  AttackBudget b = AttackBudget::for_family(*find_family(registry, threat.family), threat.epsilon);
  if (hyper.attack_iterations) b.iterations = *hyper.attack_iterations;
  return b;
}

}  // namespace

std::string_view to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kStandard: return "standard";
    case DefenseKind::kAt: return "at";
    case DefenseKind::kAvg: return "avg";
    case DefenseKind::kMax: return "max";
    case DefenseKind::kSat: return "sat";
  }
  return "standard";
}

DefenseSpec DefenseSpec::parse(std::string_view text) {
  DefenseSpec spec;
  const auto colon = text.find(':');
  spec.kind = kind_from_string(text.substr(0, colon));
  if (colon == std::string_view::npos) return spec;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto plus = rest.find('+');
    const std::string_view item = rest.substr(0, plus);
    const auto at = item.rfind('@');
    if (at == std::string_view::npos) {
      throw Error(ErrorKind::kUsage, "defense threat '" + std::string(item) + "' must read family@epsilon");
    }
    spec.threats.push_back({std::string(item.substr(0, at)), parse_double(item.substr(at + 1), text)});
    if (plus == std::string_view::npos) break;
    rest = rest.substr(plus + 1);
  }
  return spec;
}

std::string DefenseSpec::label() const {
  std::string out(to_string(kind));
  for (std::size_t i = 0; i < threats.size(); ++i) {
    out += i == 0 ? ":" : "+";
    out += format_threat(threats[i]);
  }
  return out;
}

void DefenseSpec::validate(std::span<const AttackFamily> registry) const {
  if (kind == DefenseKind::kStandard && !threats.empty()) {
    throw Error(ErrorKind::kConfiguration, "standard training takes no threats");
  }
  if (kind == DefenseKind::kAt && threats.size() != 1) {
    throw Error(ErrorKind::kConfiguration, "at training takes exactly one threat");
  }
  if (kind != DefenseKind::kStandard && threats.empty()) {
    throw Error(ErrorKind::kConfiguration, "defense '" + label() + "' needs at least one threat");
  }
  for (const auto& t : threats) {
    if (find_family(registry, t.family) == nullptr) {
      throw Error(ErrorKind::kConfiguration, "defense uses unregistered family '" + t.family + "'");
    }
    if (!is_norm_family(t.family) && !is_semantic_family(t.family)) {
      throw Error(ErrorKind::kConfiguration, "family '" + t.family + "' cannot be trained against");
    }
    if (!(t.epsilon > 0.0) || !std::isfinite(t.epsilon)) {
      throw Error(ErrorKind::kConfiguration, "defense threat epsilon must be positive");
    }
  }
}

void TrainHyper::validate() const {
  if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0) || hidden < 0) {
    throw Error(ErrorKind::kConfiguration, "training: epochs, batch size and learning rate must be positive");
  }
  if (attack_iterations && *attack_iterations < 1) {
    throw Error(ErrorKind::kConfiguration, "training: attack iterations must be >= 1");
  }
}

double learning_rate_at(const TrainHyper& hyper, int epoch) {
  if (2 * epoch < hyper.epochs) return hyper.learning_rate;
  if (4 * epoch < 3 * hyper.epochs) return hyper.learning_rate / 10.0;
  return hyper.learning_rate / 100.0;
}

double robust_accuracy(const SandboxModel& model, const Dataset& dataset, Split split,
                       std::span<const TrainingThreat> threats,
                       std::span<const AttackFamily> registry, std::uint64_t seed) {
  const auto idx = dataset.indices(split);
  if (idx.empty()) return 0.0;
  Workspace ws;
  std::size_t robust = 0;
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto x = dataset.image(idx[n]);
    const int y = dataset.labels[idx[n]];
    if (predict(model, x, ws) != y) continue;
    bool ok = true;
    for (std::size_t t = 0; t < threats.size() && ok; ++t) {
      const AttackFamily* family = find_family(registry, threats[t].family);
      if (family == nullptr) {
        throw Error(ErrorKind::kConfiguration, "unregistered family '" + threats[t].family + "'");
      }
      Rng rng(derive_seed(seed, idx[n], stable_hash(threats[t].family)));
      const auto budget = AttackBudget::for_family(*family, threats[t].epsilon);
      ok = !run_attack(model, x, y, budget, &rng).success;
    }
    if (ok) ++robust;
  }
  return static_cast<double>(robust) / static_cast<double>(idx.size());
}

SandboxModel train(const Dataset& dataset, const DefenseSpec& defense,
                   std::span<const AttackFamily> registry, const TrainHyper& hyper,
                   std::uint64_t seed) {
  hyper.validate();
  defense.validate(registry);
  Rng rng(seed);
  SandboxModel model = SandboxModel::random(dataset.config.height, dataset.config.width, hyper.hidden,
                                            dataset.config.num_classes, rng);
  auto order = dataset.indices(Split::kTrain);
  auto selection_split = dataset.indices(Split::kValidation).empty() ? Split::kTrain : Split::kValidation;
  if (order.empty()) throw Error(ErrorKind::kTraining, "training split is empty");

  std::vector<AttackBudget> budgets;
  for (const auto& t : defense.threats) budgets.push_back(training_budget(t, registry, hyper));

  SandboxModel best = model;
  double best_accuracy = -1.0;
  int best_epoch = 0;
  Gradients grads = Gradients::zeros_like(model);
  Workspace ws;
  const std::size_t n_params = model.parameter_count();

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = learning_rate_at(hyper, epoch);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* g : {&grads.w1, &grads.b1, &grads.w2, &grads.b2}) std::ranges::fill(*g, 0.0);
      double batch_loss = 0.0;

      for (std::size_t k = start; k < end; ++k) {
        const auto x = dataset.image(order[k]);
        const int y = dataset.labels[order[k]];
        switch (defense.kind) {
          case DefenseKind::kStandard:
            batch_loss += accumulate_gradients(model, x, y, scale, grads, ws);
            break;
          case DefenseKind::kAt:
          case DefenseKind::kSat: {
            const std::size_t t = defense.kind == DefenseKind::kAt ? 0 : rng.below(budgets.size());
            const auto adv = run_attack(model, x, y, budgets[t], &rng);
            batch_loss += accumulate_gradients(model, adv.image, y, scale, grads, ws);
            break;
          }
          case DefenseKind::kAvg: {
            const double share = scale / static_cast<double>(budgets.size());
            for (const auto& b : budgets) {
              const auto adv = run_attack(model, x, y, b, &rng);
              batch_loss += accumulate_gradients(model, adv.image, y, share, grads, ws);
            }
            break;
          }
          case DefenseKind::kMax: {
            AttackOutcome worst;
            worst.loss = -std::numeric_limits<double>::infinity();
            for (const auto& b : budgets) {
              auto adv = run_attack(model, x, y, b, &rng);
              if (adv.loss > worst.loss) worst = std::move(adv);
            }
            batch_loss += accumulate_gradients(model, worst.image, y, scale, grads, ws);
            break;
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::kTraining, "training diverged in epoch " + std::to_string(epoch + 1));
      }
      for (std::size_t i = 0; i < n_params; ++i) parameter(model, i) -= lr * gradient_entry(grads, i);
    }

    const double acc = robust_accuracy(model, dataset, selection_split, defense.threats, registry,
                                       derive_seed(seed, static_cast<std::uint64_t>(epoch), 0x5e1ec7));
    if (acc > best_accuracy) {
      best_accuracy = acc;
      best = model;
      best_epoch = epoch + 1;
    }
  }

  best.provenance = Provenance{defense.label(), defense.threats, seed, hyper.epochs, best_epoch, best_accuracy};
  return best;
}

}  // namespace mrb
