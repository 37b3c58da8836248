#include "multirobust/eval.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include "multirobust/error.hpp"
#include "multirobust/parallel.hpp"
#include "multirobust/sandbox/attacks.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace mrb {

MonotoneAttacker::MonotoneAttacker(const SandboxModel& model, std::span<const double> image, int label,
                                   const AttackFamily& family, std::uint64_t stream_seed)
    : model_(model),
      image_(image),
      label_(label),
      family_(family),
      seed_(stream_seed),
      cache_(family.grid().size(), State::kUnknown),
      adversarial_(family.grid().size()) {}

bool MonotoneAttacker::succeeds(std::size_t grid_index) {
  if (grid_index >= cache_.size()) throw Error(ErrorKind::kAttack, "grid index out of range");
  if (cache_[grid_index] != State::kUnknown) return cache_[grid_index] == State::kSuccess;

  // A perturbation that already succeeds inside a smaller ball is a valid,
  // successful starting point for every larger ball.
  for (std::size_t j = 0; j < grid_index; ++j) {
    if (cache_[j] == State::kSuccess) {
      cache_[grid_index] = State::kSuccess;
      adversarial_[grid_index] = adversarial_[j];
      return true;
    }
  }

  const double eps = family_.grid()[grid_index];
  Rng rng(derive_seed(seed_, grid_index));
  const auto outcome = run_attack(model_, image_, label_, AttackBudget::for_family(family_, eps), &rng);
  ++runs_;
  if (outcome.success) {
    for (std::size_t j = grid_index; j < cache_.size(); ++j) {
      cache_[j] = State::kSuccess;
      adversarial_[j] = outcome.adversarial_parameters;
    }
    return true;
  }
  cache_[grid_index] = State::kFailure;
  return false;
}

SearchResult minimal_epsilon_search(const SandboxModel& model, std::span<const double> image,
                                    int label, const AttackFamily& family,
                                    std::uint64_t stream_seed, SearchStrategy strategy) {
  SearchResult result;
  if (predict(model, image) != label) {
    result.epsilon = 0.0;
    return result;
  }
  MonotoneAttacker attacker(model, image, label, family, stream_seed);
  const std::size_t n = family.grid().size();
  std::size_t first = n;
  if (strategy == SearchStrategy::kBinary) {
    std::size_t lo = 0;
    std::size_t hi = n;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (attacker.succeeds(mid)) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    first = lo;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (attacker.succeeds(i)) {
        first = i;
        break;
      }
    }
  }
  result.epsilon = first == n ? kNeverSucceeds : family.grid()[first];
  result.attack_runs = attacker.attack_runs();
  return result;
}

std::vector<std::pair<double, double>> accuracy_curve(const MinimalEpsilonProfile& profile,
                                                      const std::string& family) {
  auto it = profile.families.find(family);
  if (it == profile.families.end()) {
    throw Error(ErrorKind::kIncompleteEvaluation,
                "model '" + profile.model_id + "' has no profile for family '" + family + "'");
  }
  const auto& values = it->second.minimal_epsilon;
  const double n = static_cast<double>(values.size());
  auto robust_fraction = [&](double eps) {
    if (values.empty()) return 0.0;
    const auto count = std::ranges::count_if(values, [&](double m) {
      return m > eps && !(std::abs(m - eps) <= 1e-9 * std::max(1.0, eps));
    });
    return static_cast<double>(count) / n;
  };
  std::vector<std::pair<double, double>> curve;
  curve.emplace_back(0.0, robust_fraction(0.0));
  for (double eps : it->second.grid) curve.emplace_back(eps, robust_fraction(eps));
  return curve;
}

std::uint64_t image_stream_seed(std::uint64_t master, std::size_t image_index, std::string_view family) {
  return derive_seed(master, image_index, stable_hash(family));
}

EvaluationResult evaluate_model(const SandboxModel& model, const std::string& model_id,
                                std::span<const AttackFamily> families, const Dataset& dataset,
                                const EvalOptions& options) {
  model.validate();
  if (model.input_dim() != dataset.dim() || model.num_classes != dataset.config.num_classes) {
    throw Error(ErrorKind::kConfiguration, "model '" + model_id + "' does not match the dataset geometry");
  }
  for (const auto& f : families) {
    if (!is_norm_family(f.id()) && !is_semantic_family(f.id())) {
      throw Error(ErrorKind::kConfiguration, "family '" + f.id() + "' cannot be executed in the sandbox");
    }
  }
  const auto idx = dataset.indices(options.split);
  if (idx.empty()) throw Error(ErrorKind::kConfiguration, "evaluation split is empty");
  const std::size_t n = idx.size();

  EvaluationResult result;
  result.matrix.set_model_id(model_id);
  result.profile.model_id = model_id;
  result.profile.n_images = n;

  result.matrix.set(AttackInstance::clean(), clean_accuracy(model, dataset, options.split), n);

  const std::size_t tasks = families.size() * n;
  std::vector<double> minimal(tasks, 0.0);
  std::vector<std::string> errors(tasks);
  parallel_for(tasks, options.jobs, [&](std::size_t t) {
    const auto& family = families[t / n];
    const std::size_t image = idx[t % n];
    try {
      minimal[t] = minimal_epsilon_search(model, dataset.image(image), dataset.labels[image], family,
                                          image_stream_seed(options.seed, image, family.id()),
                                          options.strategy)
                       .epsilon;
    } catch (const Error& e) {
      minimal[t] = 0.0;
      errors[t] = "image " + std::to_string(image) + ", family " + family.id() + ": " + e.what();
    }
  });

  std::set<std::size_t> failed_images;
  for (std::size_t t = 0; t < tasks; ++t) {
    if (!errors[t].empty()) {
      result.failures.push_back(errors[t]);
      failed_images.insert(t % n);
    }
  }
  if (static_cast<double>(failed_images.size()) > 0.01 * static_cast<double>(n)) {
    throw Error(ErrorKind::kAttack, "evaluation of '" + model_id + "' aborted: " +
                                        std::to_string(failed_images.size()) + " of " +
                                        std::to_string(n) + " images failed (first: " +
                                        result.failures.front() + ")");
  }

  for (std::size_t f = 0; f < families.size(); ++f) {
    FamilyProfile fp;
    fp.grid.assign(families[f].grid().begin(), families[f].grid().end());
    fp.minimal_epsilon.assign(minimal.begin() + static_cast<std::ptrdiff_t>(f * n),
                              minimal.begin() + static_cast<std::ptrdiff_t>((f + 1) * n));
    result.profile.families[families[f].id()] = std::move(fp);
    const auto curve = accuracy_curve(result.profile, families[f].id());
    for (std::size_t k = 1; k < curve.size(); ++k) {
      result.matrix.set({families[f].id(), curve[k].first}, curve[k].second, n);
    }
  }
  return result;
}

double clean_accuracy(const SandboxModel& model, const Dataset& dataset, Split split) {
  const auto idx = dataset.indices(split);
  if (idx.empty()) throw Error(ErrorKind::kConfiguration, "evaluation split is empty");
  Workspace ws;
  std::size_t correct = 0;
  for (std::size_t i : idx) {
    if (predict(model, dataset.image(i), ws) == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

double accuracy_at(const SandboxModel& model, const AttackFamily& family, double epsilon,
                   const Dataset& dataset, const EvalOptions& options) {
  const auto idx = dataset.indices(options.split);
  if (idx.empty()) throw Error(ErrorKind::kConfiguration, "evaluation split is empty");
  std::vector<char> robust(idx.size(), 0);
  parallel_for(idx.size(), options.jobs, [&](std::size_t k) {
    const std::size_t i = idx[k];
    const auto x = dataset.image(i);
    const int y = dataset.labels[i];
    if (predict(model, x) != y) return;
    if (epsilon == 0.0) {
      robust[k] = 1;
      return;
    }
    Rng rng(image_stream_seed(options.seed, i, family.id()));
    robust[k] = run_attack(model, x, y, AttackBudget::for_family(family, epsilon), &rng).success ? 0 : 1;
  });
  return static_cast<double>(std::ranges::count(robust, 1)) / static_cast<double>(idx.size());
}

BaselineTable build_baseline_table(const Dataset& dataset, std::span<const AttackFamily> families,
                                   const BaselineConfig& config) {
  if (config.seeds.empty()) throw Error(ErrorKind::kConfiguration, "baseline table needs at least one seed");
  std::vector<AttackInstance> cells{AttackInstance::clean()};
  for (const auto& f : families) {
    for (double eps : f.grid()) cells.push_back({f.id(), eps});
  }
  const std::size_t n_seeds = config.seeds.size();
  const std::size_t tasks = cells.size() * n_seeds;
  std::vector<double> accuracy(tasks, 0.0);
  std::vector<char> ok(tasks, 0);

  // Parallelism lives at the training level; each task evaluates serially.
  EvalOptions serial = config.eval;
  serial.jobs = 1;
  parallel_for(tasks, config.eval.jobs, [&](std::size_t t) {
    const auto& cell = cells[t / n_seeds];
    const std::uint64_t seed = config.seeds[t % n_seeds];
    DefenseSpec spec;
    if (!cell.is_clean()) spec = DefenseSpec{DefenseKind::kAt, {{cell.family, cell.epsilon}}};
    try {
      const SandboxModel model = train(dataset, spec, families, config.hyper, seed);
      if (cell.is_clean()) {
        accuracy[t] = clean_accuracy(model, dataset, serial.split);
      } else {
        accuracy[t] = accuracy_at(model, *find_family(families, cell.family), cell.epsilon, dataset, serial);
      }
      ok[t] = 1;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kTraining && e.kind() != ErrorKind::kNumeric) throw;
    }
  });

  BaselineTable table(dataset.config.num_classes);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> per_seed;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      if (ok[c * n_seeds + s]) per_seed.push_back(accuracy[c * n_seeds + s]);
    }
    if (per_seed.size() != n_seeds) table.mark_incomplete(cells[c]);
    if (!per_seed.empty()) table.set(cells[c], std::move(per_seed));
  }
  return table;
}

}  // namespace mrb
