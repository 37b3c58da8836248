#pragma once

// On-disk interchange. Every file is UTF-8 JSON carrying `schema_version`;
// a leaderboard bundle is a directory laid out as
//
//   bundle.json              attack registry, model metadata, accuracy records
//   baselines.json           acc* table
//   profiles/<model>.json    per-image minimal epsilons (null = never succeeds)
//   models/<model>.json      sandbox checkpoints
//   reports.json             metric reports on the full attack set
//   leaderboard_avg.json     ranking by cr_ind_avg
//   leaderboard_worst.json   ranking by cr_ind_worst
//   viz/<model>.json         visualization datasets
//
// Parse errors are kSchema with a JSON-pointer path to the offending value.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multirobust/attack_model.hpp"
#include "multirobust/metrics.hpp"
#include "multirobust/profile.hpp"
#include "multirobust/sandbox/model.hpp"

namespace mrb {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMaxComparedModels = 5;

inline constexpr const char* kBundleFile = "bundle.json";
inline constexpr const char* kBaselinesFile = "baselines.json";
inline constexpr const char* kReportsFile = "reports.json";
inline constexpr const char* kLeaderboardAvgFile = "leaderboard_avg.json";
inline constexpr const char* kLeaderboardWorstFile = "leaderboard_worst.json";
inline constexpr const char* kProfilesDir = "profiles";
inline constexpr const char* kModelsDir = "models";
inline constexpr const char* kVizDir = "viz";

// Model ids double as file names: [A-Za-z0-9._-]+, not starting with '.'.
bool is_valid_model_id(std::string_view id);

struct ModelInfo {
  std::string model_id{};
  std::string display_name{};
  std::string defense_kind{};
  std::vector<TrainingThreat> training_threats{};
  std::string architecture{};
  std::string notes{};

  friend bool operator==(const ModelInfo&, const ModelInfo&) = default;
};

struct AccuracyRecord {
  std::string model_id;
  std::string family;  // "clean" for the no-attack entry
  double epsilon = 0.0;
  double accuracy = 0.0;
  std::size_t n_samples = 0;

  AttackInstance instance() const { return canonical({family, epsilon}); }
  friend bool operator==(const AccuracyRecord&, const AccuracyRecord&) = default;
};

struct RecordBundle {
  int schema_version = kSchemaVersion;
  std::vector<AttackFamily> attacks;
  std::vector<ModelInfo> models;
  std::vector<AccuracyRecord> records;
  std::string baseline_ref = kBaselinesFile;

  const ModelInfo* find_model(std::string_view model_id) const;
  EvaluationMatrix matrix(const std::string& model_id) const;
  KnowledgeSet knowledge(const ModelInfo& model) const;
  // Clean instance plus every grid point of every registered family.
  AttackSet full_attack_set() const;

  // Inserts or replaces a model together with all of its records; keeps
  // models and records in a canonical order.
  void upsert(ModelInfo model, const EvaluationMatrix& matrix);

  friend bool operator==(const RecordBundle&, const RecordBundle&) = default;
};

// Serialization. The *_from_json functions validate and throw kSchema with
// `path` prefixed to the location of the first violation.
json to_json(const AttackFamily& family);
AttackFamily attack_family_from_json(const json& j, const std::string& path = "");
json to_json(const AttackInstance& instance);
AttackInstance attack_instance_from_json(const json& j, const std::string& path = "");

json to_json(const RecordBundle& bundle);
// Non-monotone curves are reported through `warnings` instead of rejected.
RecordBundle bundle_from_json(const json& j, std::vector<std::string>* warnings = nullptr);

json to_json(const BaselineTable& table);
BaselineTable baselines_from_json(const json& j);

json to_json(const MinimalEpsilonProfile& profile);
MinimalEpsilonProfile profile_from_json(const json& j);

json to_json(const MetricReport& report);
MetricReport report_from_json(const json& j, const std::string& path = "");
json reports_to_json(std::span<const MetricReport> reports, double alpha);
std::vector<MetricReport> reports_from_json(const json& j, double* alpha = nullptr);

json leaderboard_to_json(std::span<const RankEntry> entries, LeaderboardMetric metric);
std::vector<RankEntry> leaderboard_from_json(const json& j);

json to_json(const SandboxModel& model, const std::string& model_id);
SandboxModel model_from_json(const json& j, std::string* model_id = nullptr);

// Whole-file helpers. Writes go through a temporary file and a rename.
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);
std::string dump(const json& j);

RecordBundle import_records(const std::filesystem::path& path,
                            std::vector<std::string>* warnings = nullptr);

// Visualization datasets for one model.
struct ScatterPoint {
  AttackInstance instance;
  double defense_accuracy = 0.0;
  std::optional<double> baseline_accuracy;

  friend bool operator==(const ScatterPoint&, const ScatterPoint&) = default;
};

struct CurvePoint {
  double epsilon = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct SingleCrBar {
  std::string family;
  std::optional<double> avg;
  std::optional<double> worst;

  friend bool operator==(const SingleCrBar&, const SingleCrBar&) = default;
};

struct ModelVisualization {
  std::string model_id;
  std::vector<ScatterPoint> scatter;
  std::map<std::string, std::vector<CurvePoint>> curves;
  std::optional<double> cr_in;
  std::optional<double> cr_out;
  std::vector<SingleCrBar> single_cr;

  friend bool operator==(const ModelVisualization&, const ModelVisualization&) = default;
};

struct VisualizationDataset {
  std::vector<ModelVisualization> models;
};

// Curve of one family from the model's records, starting at epsilon = 0.
std::vector<CurvePoint> record_curve(const RecordBundle& bundle, const std::string& model_id,
                                     const std::string& family);

ModelVisualization build_model_visualization(const RecordBundle& bundle,
                                             const BaselineTable& baselines,
                                             const MetricReport& report);
// Throws kUsage for more than kMaxComparedModels ids and kConfiguration for
// ids without a report.
VisualizationDataset build_visualizations(const RecordBundle& bundle,
                                          const BaselineTable& baselines,
                                          std::span<const MetricReport> reports,
                                          std::span<const std::string> model_ids);

json to_json(const ModelVisualization& viz);
json to_json(const VisualizationDataset& viz);

// Reports for every model in the bundle over `attacks` (the full set when
// omitted), in bundle order. Profiles are looked up by model id.
std::vector<MetricReport> score_bundle(const RecordBundle& bundle, const BaselineTable& baselines,
                                       const std::map<std::string, MinimalEpsilonProfile>& profiles,
                                       double alpha, const AttackSet* attacks = nullptr);

// Everything the server needs, loaded from a bundle directory.
struct LeaderboardBundle {
  RecordBundle bundle;
  BaselineTable baselines;
  std::map<std::string, MinimalEpsilonProfile> profiles;
  std::vector<MetricReport> reports;
  double alpha = kDefaultAlpha;
};

// Writes bundle.json, baselines.json, profiles, reports.json, both
// leaderboards and one viz file per model into `dir`.
void export_bundle(const LeaderboardBundle& data, const std::filesystem::path& dir);

// Loads a directory written by export_bundle. Missing files throw kIo
// naming the file.
LeaderboardBundle load_bundle_dir(const std::filesystem::path& dir);

}  // namespace mrb
