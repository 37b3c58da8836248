#include "multirobust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "multirobust/error.hpp"

namespace mrb {

namespace {

// Strength differences within this slack of alpha still count as neighbours,
// so that grid values like 0.13 - 0.10 are not lost to rounding.
constexpr double kAlphaSlack = 1e-12;

Error undefined(const std::string& what) { return Error(ErrorKind::kMetricUndefined, what); }

bool in_unit_interval(double v) { return v >= 0.0 && v <= 1.0; }

AttackSet restrict_set(const AttackSet& attacks, bool keep_in, const KnowledgeSet& knowledge) {
  std::vector<AttackInstance> kept;
  std::vector<double> weights;
  double total = 0.0;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    if (knowledge.contains(attacks.instances()[i]) == keep_in) {
      kept.push_back(attacks.instances()[i]);
      weights.push_back(attacks.weights()[i]);
      total += attacks.weights()[i];
    }
  }
  if (kept.empty()) return {};
  if (total <= 0.0) {
    std::ranges::fill(weights, 1.0 / static_cast<double>(kept.size()));
  } else {
    for (double& w : weights) w /= total;
  }
  return AttackSet(std::move(kept), std::move(weights));
}

template <typename Fn>
std::optional<double> defined_or_empty(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kMetricUndefined || e.kind() == ErrorKind::kDegenerateDenominator) {
      return std::nullopt;
    }
    throw;
  }
}

}  // namespace

void EvaluationMatrix::set(const AttackInstance& instance, double accuracy, std::size_t n_samples) {
  if (!std::isfinite(accuracy) || !in_unit_interval(accuracy)) {
    throw Error(ErrorKind::kSchema,
                "accuracy of " + instance.label() + " for model '" + model_id_ + "' outside [0, 1]");
  }
  cells_[canonical(instance)] = MatrixCell{accuracy, n_samples};
}

bool EvaluationMatrix::contains(const AttackInstance& instance) const {
  return cells_.contains(canonical(instance));
}

double EvaluationMatrix::accuracy(const AttackInstance& instance) const {
  auto it = cells_.find(canonical(instance));
  if (it == cells_.end()) {
    throw Error(ErrorKind::kIncompleteEvaluation,
                "model '" + model_id_ + "' has no accuracy for " + canonical(instance).label());
  }
  return it->second.accuracy;
}

std::vector<std::string> EvaluationMatrix::monotonicity_violations() const {
  std::vector<std::string> out;
  const auto clean = cells_.find(AttackInstance::clean());
  const AttackInstance* prev = nullptr;
  double prev_acc = 0.0;
  for (const auto& [inst, cell] : cells_) {
    if (inst.is_clean()) continue;
    const bool new_family = prev == nullptr || prev->family != inst.family;
    if (new_family) {
      if (clean == cells_.end()) {
        prev = nullptr;
      } else {
        prev = &clean->first;
        prev_acc = clean->second.accuracy;
      }
    }
    if (prev != nullptr && cell.accuracy > prev_acc) {
      out.push_back("model '" + model_id_ + "': accuracy rises from " + prev->label() + " to " +
                    inst.label());
    }
    prev = &inst;
    prev_acc = cell.accuracy;
  }
  return out;
}

BaselineTable::BaselineTable(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw Error(ErrorKind::kConfiguration, "baseline table: num_classes must be positive");
}

void BaselineTable::set(const AttackInstance& instance, std::vector<double> per_seed) {
  if (per_seed.empty()) {
    throw Error(ErrorKind::kSchema, "baseline " + instance.label() + " has no per-seed accuracies");
  }
  for (double v : per_seed) {
    if (!std::isfinite(v) || !in_unit_interval(v)) {
      throw Error(ErrorKind::kSchema, "baseline " + instance.label() + " has an accuracy outside [0, 1]");
    }
  }
  const double mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) /
                      static_cast<double>(per_seed.size());
  cells_[canonical(instance)] = BaselineCell{std::move(per_seed), mean};
}

bool BaselineTable::contains(const AttackInstance& instance) const {
  return cells_.contains(canonical(instance));
}

const BaselineCell& BaselineTable::cell(const AttackInstance& instance) const {
  auto it = cells_.find(canonical(instance));
  if (it == cells_.end()) {
    throw Error(ErrorKind::kIncompleteEvaluation,
                "no baseline accuracy for " + canonical(instance).label());
  }
  return it->second;
}

double BaselineTable::acc_star(const AttackInstance& instance) const { return cell(instance).acc_star; }

void BaselineTable::mark_incomplete(const AttackInstance& instance) {
  auto c = canonical(instance);
  if (std::ranges::find(incomplete_, c) == incomplete_.end()) incomplete_.push_back(std::move(c));
}

std::vector<double> multi_error(const EvaluationMatrix& matrix, const AttackSet& attacks,
                                MultiErrorKind kind) {
  std::vector<double> errors;
  errors.reserve(attacks.size());
  for (const auto& inst : attacks.instances()) errors.push_back(1.0 - matrix.accuracy(inst));
  switch (kind) {
    case MultiErrorKind::kInd:
      return errors;
    case MultiErrorKind::kExp: {
      double e = 0.0;
      for (std::size_t i = 0; i < errors.size(); ++i) e += attacks.weights()[i] * errors[i];
      return {e};
    }
    case MultiErrorKind::kMax: {
      if (errors.empty()) throw undefined("max multiattack error of an empty attack set");
      return {*std::ranges::max_element(errors)};
    }
  }
  return errors;
}

double cr_general(double acc_multi, double acc_star_multi) {
  if (!(acc_star_multi > 0.0)) {
    throw Error(ErrorKind::kDegenerateDenominator, "competitiveness ratio with zero optimal accuracy");
  }
  return 100.0 * acc_multi / acc_star_multi;
}

CrValue cr_ind_avg(const EvaluationMatrix& matrix, const AttackSet& attacks,
                   const BaselineTable& baselines) {
  CrValue out;
  double weight = 0.0;
  double sum = 0.0;
  std::size_t retained = 0;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const auto& inst = attacks.instances()[i];
    const double acc = matrix.accuracy(inst);
    const double star = baselines.acc_star(inst);
    if (star < kDegenerateFloor) {
      out.excluded.push_back(inst);
      continue;
    }
    ++retained;
    weight += attacks.weights()[i];
    sum += attacks.weights()[i] * acc / star;
  }
  if (retained == 0 || !(weight > 0.0)) {
    throw undefined("CR_ind-avg undefined: every instance has a degenerate baseline");
  }
  out.value = 100.0 * sum / weight;
  return out;
}

CrValue cr_ind_worst(const EvaluationMatrix& matrix, const AttackSet& attacks,
                     const BaselineTable& baselines) {
  CrValue out;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& inst : attacks.instances()) {
    const double acc = matrix.accuracy(inst);
    const double star = baselines.acc_star(inst);
    if (star < kDegenerateFloor) {
      out.excluded.push_back(inst);
      continue;
    }
    worst = std::min(worst, acc / star);
  }
  if (std::isinf(worst)) {
    throw undefined("CR_ind-worst undefined: every instance has a degenerate baseline");
  }
  out.value = 100.0 * worst;
  return out;
}

double cr_exp(const EvaluationMatrix& matrix, const AttackSet& attacks,
              const BaselineTable& baselines) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const auto& inst = attacks.instances()[i];
    num += attacks.weights()[i] * matrix.accuracy(inst);
    den += attacks.weights()[i] * baselines.acc_star(inst);
  }
  if (den < kDegenerateFloor) throw undefined("CR_exp undefined: expected optimal accuracy is zero");
  return 100.0 * num / den;
}

double cr_max(const EvaluationMatrix& matrix, const AttackSet& attacks,
              const BaselineTable& baselines) {
  if (attacks.empty()) throw undefined("CR_max of an empty attack set");
  double min_acc = std::numeric_limits<double>::infinity();
  double min_star = std::numeric_limits<double>::infinity();
  for (const auto& inst : attacks.instances()) {
    min_acc = std::min(min_acc, matrix.accuracy(inst));
    min_star = std::min(min_star, baselines.acc_star(inst));
  }
  if (min_star < kDegenerateFloor) throw undefined("CR_max undefined: worst optimal accuracy is zero");
  return 100.0 * min_acc / min_star;
}

AttackSet single_family_set(const AttackFamily& family) {
  return AttackSet::from_families(std::span<const AttackFamily>(&family, 1), true);
}

SingleCr single_cr(const EvaluationMatrix& matrix, const AttackFamily& family,
                   const BaselineTable& baselines) {
  const AttackSet set = single_family_set(family);
  auto avg = cr_ind_avg(matrix, set, baselines);
  auto worst = cr_ind_worst(matrix, set, baselines);
  return SingleCr{avg.value, worst.value, std::move(avg.excluded)};
}

double uar(const EvaluationMatrix& matrix, const AttackFamily& family,
           const BaselineTable& baselines) {
  double num = 0.0;
  double den = 0.0;
  for (double eps : family.grid()) {
    const AttackInstance inst{family.id(), eps};
    num += matrix.accuracy(inst);
    den += baselines.acc_star(inst);
  }
  if (den < kDegenerateFloor) throw undefined("UAR undefined for family '" + family.id() + "'");
  return 100.0 * num / den;
}

double muar(const EvaluationMatrix& matrix, std::span<const AttackFamily> families,
            const BaselineTable& baselines) {
  if (families.empty()) throw undefined("mUAR of an empty family list");
  double sum = 0.0;
  for (const auto& family : families) sum += uar(matrix, family, baselines);
  return sum / static_cast<double>(families.size());
}

double union_accuracy(const MinimalEpsilonProfile& profile,
                      const std::map<std::string, double>& levels) {
  if (profile.n_images == 0) throw undefined("union accuracy over zero images");
  std::vector<const FamilyProfile*> selected;
  std::vector<double> thresholds;
  for (const auto& [family, level] : levels) {
    auto it = profile.families.find(family);
    if (it == profile.families.end()) {
      throw Error(ErrorKind::kIncompleteEvaluation,
                  "model '" + profile.model_id + "' has no profile for family '" + family + "'");
    }
    const auto& grid = it->second.grid;
    const bool on_grid = level == 0.0 || std::ranges::any_of(grid, [&](double g) {
                           return std::abs(g - level) <= 1e-9 * std::max(1.0, g);
                         });
    if (!on_grid) {
      throw Error(ErrorKind::kConfiguration, "union accuracy level for '" + family + "' is off-grid");
    }
    if (it->second.minimal_epsilon.size() != profile.n_images) {
      throw Error(ErrorKind::kIncompleteEvaluation, "profile of family '" + family + "' is incomplete");
    }
    selected.push_back(&it->second);
    thresholds.push_back(level);
  }
  std::size_t robust = 0;
  for (std::size_t i = 0; i < profile.n_images; ++i) {
    bool survives = true;
    for (std::size_t f = 0; f < selected.size() && survives; ++f) {
      // Snap away rounding noise between stored grid values and the level.
      const double m = selected[f]->minimal_epsilon[i];
      survives = !std::isfinite(m) ||
                 (m > thresholds[f] && std::abs(m - thresholds[f]) > 1e-9 * std::max(1.0, m));
    }
    if (survives) ++robust;
  }
  return static_cast<double>(robust) / static_cast<double>(profile.n_images);
}

double average_accuracy(const EvaluationMatrix& matrix, const AttackSet& attacks) {
  double sum = 0.0;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    sum += attacks.weights()[i] * matrix.accuracy(attacks.instances()[i]);
  }
  return sum;
}

double attack_strength(const AttackInstance& instance, const BaselineTable& baselines) {
  return 1.0 - baselines.acc_star(instance);
}

StabilityConstant stability_constant(const EvaluationMatrix& matrix, const AttackSet& attacks,
                                     const KnowledgeSet& knowledge,
                                     const BaselineTable& baselines, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::kConfiguration, "stability constant needs alpha > 0");
  StabilityConstant out;
  for (const auto& known : knowledge.instances()) {
    if (!attacks.contains(known)) continue;
    const double s1 = attack_strength(known, baselines);
    const double a1 = matrix.accuracy(known);
    for (const auto& other : attacks.instances()) {
      if (other == known) continue;
      const double ds = std::abs(s1 - attack_strength(other, baselines));
      if (ds == 0.0 || ds > alpha + kAlphaSlack) continue;
      const double ratio = std::abs(a1 - matrix.accuracy(other)) / ds;
      if (out.empty_pair_set || ratio > out.value) {
        out.value = ratio;
        out.known = known;
        out.other = other;
      }
      out.empty_pair_set = false;
    }
  }
  return out;
}

CrInOut cr_in_out(const EvaluationMatrix& matrix, const AttackSet& attacks,
                  const KnowledgeSet& knowledge, const BaselineTable& baselines) {
  CrInOut out;
  const AttackSet in = restrict_set(attacks, true, knowledge);
  const AttackSet rest = restrict_set(attacks, false, knowledge);
  if (!in.empty()) {
    auto v = cr_ind_avg(matrix, in, baselines);
    out.cr_in = v.value;
    out.excluded.insert(out.excluded.end(), v.excluded.begin(), v.excluded.end());
  }
  if (!rest.empty()) {
    auto v = cr_ind_avg(matrix, rest, baselines);
    out.cr_out = v.value;
    out.excluded.insert(out.excluded.end(), v.excluded.begin(), v.excluded.end());
  }
  return out;
}

MetricReport compute_report(const EvaluationMatrix& matrix,
                            std::span<const AttackFamily> families, const AttackSet& attacks,
                            const KnowledgeSet& knowledge, const BaselineTable& baselines,
                            double alpha, const MinimalEpsilonProfile* profile) {
  MetricReport r;
  r.model_id = matrix.model_id();
  r.clean_accuracy = matrix.accuracy(AttackInstance::clean());

  for (const auto& inst : attacks.instances()) {
    if (baselines.acc_star(inst) < kDegenerateFloor) r.excluded_instances.push_back(inst);
  }
  r.cr_ind_avg = defined_or_empty([&] { return cr_ind_avg(matrix, attacks, baselines).value; });
  r.cr_ind_worst = defined_or_empty([&] { return cr_ind_worst(matrix, attacks, baselines).value; });
  r.cr_exp = defined_or_empty([&] { return cr_exp(matrix, attacks, baselines); });
  r.cr_max = defined_or_empty([&] { return cr_max(matrix, attacks, baselines); });
  r.muar = defined_or_empty([&] { return muar(matrix, families, baselines); });

  for (const auto& family : families) {
    FamilyScores scores;
    const AttackSet set = single_family_set(family);
    scores.avg = defined_or_empty([&] { return cr_ind_avg(matrix, set, baselines).value; });
    scores.worst = defined_or_empty([&] { return cr_ind_worst(matrix, set, baselines).value; });
    scores.uar = defined_or_empty([&] { return uar(matrix, family, baselines); });
    r.single_cr[family.id()] = scores;
  }

  const auto sc = stability_constant(matrix, attacks, knowledge, baselines, alpha);
  r.sc = sc.value;
  r.sc_empty_pair_set = sc.empty_pair_set;

  try {
    const auto io = cr_in_out(matrix, attacks, knowledge, baselines);
    r.cr_in = io.cr_in;
    r.cr_out = io.cr_out;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kMetricUndefined) throw;
  }

  if (profile != nullptr && !families.empty()) {
    bool available = true;
    std::size_t levels = std::numeric_limits<std::size_t>::max();
    for (const auto& family : families) {
      if (!profile->families.contains(family.id())) available = false;
      levels = std::min(levels, family.grid().size());
    }
    if (available) {
      std::vector<double> curve;
      for (std::size_t k = 0; k < levels; ++k) {
        std::map<std::string, double> at;
        for (const auto& family : families) at[family.id()] = family.grid()[k];
        curve.push_back(union_accuracy(*profile, at));
      }
      r.union_accuracy_by_level = std::move(curve);
    }
  }
  return r;
}

std::string_view to_string(LeaderboardMetric metric) {
  return metric == LeaderboardMetric::kCrIndAvg ? "cr_ind_avg" : "cr_ind_worst";
}

LeaderboardMetric leaderboard_metric_from_string(std::string_view name) {
  if (name == "cr_ind_avg") return LeaderboardMetric::kCrIndAvg;
  if (name == "cr_ind_worst") return LeaderboardMetric::kCrIndWorst;
  throw Error(ErrorKind::kUsage, "unknown leaderboard metric '" + std::string(name) +
                                     "' (expected cr_ind_avg or cr_ind_worst)");
}

std::vector<RankEntry> rank_leaderboard(std::span<const MetricReport> reports,
                                        LeaderboardMetric metric) {
  std::vector<RankEntry> entries;
  entries.reserve(reports.size());
  for (const auto& r : reports) {
    entries.push_back(RankEntry{0, r.model_id,
                                metric == LeaderboardMetric::kCrIndAvg ? r.cr_ind_avg : r.cr_ind_worst,
                                r.clean_accuracy});
  }
  std::ranges::sort(entries, [](const RankEntry& a, const RankEntry& b) {
    if (a.value.has_value() != b.value.has_value()) return a.value.has_value();
    if (a.value && *a.value != *b.value) return *a.value > *b.value;
    if (a.clean_accuracy != b.clean_accuracy) return a.clean_accuracy > b.clean_accuracy;
    return a.model_id < b.model_id;
  });
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].rank = static_cast<int>(i + 1);
  return entries;
}

}  // namespace mrb
