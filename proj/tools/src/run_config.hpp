#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multirobust/attack_model.hpp"
#include "multirobust/eval.hpp"
#include "multirobust/sandbox/dataset.hpp"
#include "multirobust/sandbox/train.hpp"

namespace mrb::cli {

// One defense to train and score.
struct ModelSpec {
  std::string id;
  DefenseSpec defense;
  std::uint64_t seed = 0;
  std::string display_name;
  std::string notes;
};

struct RunConfig {
  DatasetConfig dataset;
  std::uint64_t dataset_seed = 0;
  std::vector<AttackFamily> attacks;
  std::vector<std::uint64_t> seeds{0, 1, 2};  // baseline seeds
  TrainHyper training;
  std::uint64_t eval_seed = 0;
  SearchStrategy strategy = SearchStrategy::kBinary;
  std::vector<ModelSpec> models;
  double alpha = kDefaultAlpha;
  std::filesystem::path output = "mrb-out";
  int jobs = 1;

  const ModelSpec* find_model(std::string_view id) const;
  EvalOptions eval_options() const;
  void validate() const;
};

// Grids are either {"max": m, "count": n} or an explicit list. Relative
// paths are kept as written.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Command-line overrides; every set field replaces the file value.
struct Overrides {
  std::optional<std::filesystem::path> output;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<double> alpha;
  std::optional<std::vector<std::string>> families;
  std::optional<std::size_t> grid_size;
  std::optional<int> jobs;
};

void apply_overrides(RunConfig& config, const Overrides& overrides);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);
std::vector<std::string> parse_name_list(std::string_view text);

}  // namespace mrb::cli
