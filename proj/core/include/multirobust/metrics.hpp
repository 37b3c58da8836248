#pragma once

// Competitiveness ratios, stability constant, comparison metrics (union and
// average accuracy, UAR/mUAR) and leaderboard ranking.
//
// Accuracies and attack strengths are fractions in [0, 1]; CR values are
// percentages. Every function is a pure function of its arguments.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multirobust/attack_model.hpp"
#include "multirobust/profile.hpp"

namespace mrb {

// Baselines below this accuracy are excluded from per-instance ratios.
inline constexpr double kDegenerateFloor = 1e-6;

// Default neighbourhood for the stability constant (3 % strength difference).
inline constexpr double kDefaultAlpha = 0.03;

struct MatrixCell {
  double accuracy = 0.0;
  std::size_t n_samples = 0;

  friend bool operator==(const MatrixCell&, const MatrixCell&) = default;
};

// Robust accuracy of one model under each evaluated attack instance.
class EvaluationMatrix {
 public:
  EvaluationMatrix() = default;
  explicit EvaluationMatrix(std::string model_id) : model_id_(std::move(model_id)) {}

  const std::string& model_id() const noexcept { return model_id_; }
  void set_model_id(std::string id) { model_id_ = std::move(id); }

  // Throws kSchema for accuracies outside [0, 1].
  void set(const AttackInstance& instance, double accuracy, std::size_t n_samples = 0);
  bool contains(const AttackInstance& instance) const;
  // Throws kIncompleteEvaluation naming the instance when absent.
  double accuracy(const AttackInstance& instance) const;
  const std::map<AttackInstance, MatrixCell>& cells() const noexcept { return cells_; }

  // Human-readable descriptions of every place a family's curve increases
  // with epsilon.
  std::vector<std::string> monotonicity_violations() const;

  friend bool operator==(const EvaluationMatrix&, const EvaluationMatrix&) = default;

 private:
  std::string model_id_;
  std::map<AttackInstance, MatrixCell> cells_;
};

struct BaselineCell {
  std::vector<double> per_seed;
  double acc_star = 0.0;

  friend bool operator==(const BaselineCell&, const BaselineCell&) = default;
};

// acc*(P): mean accuracy of models adversarially trained on P itself.
class BaselineTable {
 public:
  BaselineTable() = default;
  explicit BaselineTable(int num_classes);

  int num_classes() const noexcept { return num_classes_; }

  // acc_star becomes the arithmetic mean of `per_seed`.
  void set(const AttackInstance& instance, std::vector<double> per_seed);
  bool contains(const AttackInstance& instance) const;
  double acc_star(const AttackInstance& instance) const;
  const BaselineCell& cell(const AttackInstance& instance) const;
  const std::map<AttackInstance, BaselineCell>& cells() const noexcept { return cells_; }

  bool complete() const noexcept { return incomplete_.empty(); }
  const std::vector<AttackInstance>& incomplete_cells() const noexcept { return incomplete_; }
  void mark_incomplete(const AttackInstance& instance);

  friend bool operator==(const BaselineTable&, const BaselineTable&) = default;

 private:
  int num_classes_ = 0;
  std::map<AttackInstance, BaselineCell> cells_;
  std::vector<AttackInstance> incomplete_;
};

// Multiattack error: one entry for kExp and kMax, |K| entries for kInd.
std::vector<double> multi_error(const EvaluationMatrix& matrix, const AttackSet& attacks,
                                MultiErrorKind kind);

// 100 * acc_multi / acc_star_multi.
double cr_general(double acc_multi, double acc_star_multi);

struct CrValue {
  double value = 0.0;
  std::vector<AttackInstance> excluded;  // degenerate-baseline cells left out
};

CrValue cr_ind_avg(const EvaluationMatrix& matrix, const AttackSet& attacks,
                   const BaselineTable& baselines);
CrValue cr_ind_worst(const EvaluationMatrix& matrix, const AttackSet& attacks,
                     const BaselineTable& baselines);
double cr_exp(const EvaluationMatrix& matrix, const AttackSet& attacks,
              const BaselineTable& baselines);
double cr_max(const EvaluationMatrix& matrix, const AttackSet& attacks,
              const BaselineTable& baselines);

// Instances of one family plus the clean instance, uniformly weighted.
AttackSet single_family_set(const AttackFamily& family);

struct SingleCr {
  double avg = 0.0;
  double worst = 0.0;
  std::vector<AttackInstance> excluded;
};

SingleCr single_cr(const EvaluationMatrix& matrix, const AttackFamily& family,
                   const BaselineTable& baselines);

double uar(const EvaluationMatrix& matrix, const AttackFamily& family,
           const BaselineTable& baselines);
double muar(const EvaluationMatrix& matrix, std::span<const AttackFamily> families,
            const BaselineTable& baselines);

// Fraction of images that survive every family at the requested level.
double union_accuracy(const MinimalEpsilonProfile& profile,
                      const std::map<std::string, double>& levels);

double average_accuracy(const EvaluationMatrix& matrix, const AttackSet& attacks);

// s(P) = 1 - acc*(P).
double attack_strength(const AttackInstance& instance, const BaselineTable& baselines);

struct StabilityConstant {
  double value = 0.0;
  bool empty_pair_set = true;
  std::optional<AttackInstance> known;   // maximizing pair, when any
  std::optional<AttackInstance> other;
};

StabilityConstant stability_constant(const EvaluationMatrix& matrix, const AttackSet& attacks,
                                     const KnowledgeSet& knowledge,
                                     const BaselineTable& baselines, double alpha);

struct CrInOut {
  std::optional<double> cr_in;   // undefined when K ∩ K_learner is empty
  std::optional<double> cr_out;  // undefined when K \ K_learner is empty
  std::vector<AttackInstance> excluded;
};

CrInOut cr_in_out(const EvaluationMatrix& matrix, const AttackSet& attacks,
                  const KnowledgeSet& knowledge, const BaselineTable& baselines);

struct FamilyScores {
  std::optional<double> avg;
  std::optional<double> worst;
  std::optional<double> uar;

  friend bool operator==(const FamilyScores&, const FamilyScores&) = default;
};

struct MetricReport {
  std::string model_id;
  double clean_accuracy = 0.0;
  std::optional<double> cr_ind_avg;
  std::optional<double> cr_ind_worst;
  std::optional<double> cr_exp;
  std::optional<double> cr_max;
  std::optional<double> muar;
  std::map<std::string, FamilyScores> single_cr;
  double sc = 0.0;
  bool sc_empty_pair_set = true;
  std::optional<double> cr_in;
  std::optional<double> cr_out;
  std::vector<AttackInstance> excluded_instances;
  // Entry k: union accuracy with every family at its k-th grid point.
  // Absent when the model has no per-image profile.
  std::optional<std::vector<double>> union_accuracy_by_level;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Every metric for one model over `attacks`. Undefined metrics are left
// empty instead of throwing; missing cells still throw.
MetricReport compute_report(const EvaluationMatrix& matrix,
                            std::span<const AttackFamily> families, const AttackSet& attacks,
                            const KnowledgeSet& knowledge, const BaselineTable& baselines,
                            double alpha, const MinimalEpsilonProfile* profile = nullptr);

enum class LeaderboardMetric { kCrIndAvg, kCrIndWorst };

std::string_view to_string(LeaderboardMetric metric);
LeaderboardMetric leaderboard_metric_from_string(std::string_view name);

struct RankEntry {
  int rank = 0;
  std::string model_id;
  std::optional<double> value;
  double clean_accuracy = 0.0;

  friend bool operator==(const RankEntry&, const RankEntry&) = default;
};

// Descending by metric, then clean accuracy descending, then model id.
// Reports whose metric is undefined go last.
std::vector<RankEntry> rank_leaderboard(std::span<const MetricReport> reports,
                                        LeaderboardMetric metric);

}  // namespace mrb
