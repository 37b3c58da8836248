#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "run_config.hpp"

namespace mrb::cli {

// Exclusive claim on an output directory, held through a lock file that
// is created atomically and removed on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

  static constexpr const char* kFileName = ".mrb.lock";

 private:
  std::filesystem::path path_;
};

// Each command returns a JSON summary of what it wrote. Outputs depend only
// on the inputs and seeds.
nlohmann::json cmd_baseline(const RunConfig& config);
nlohmann::json cmd_train(const RunConfig& config, std::span<const std::string> model_ids = {});
nlohmann::json cmd_eval(const RunConfig& config, std::span<const std::string> model_ids = {});
nlohmann::json cmd_metrics(const std::filesystem::path& dir, double alpha);
nlohmann::json cmd_rank(const std::filesystem::path& dir);
nlohmann::json cmd_export_viz(const std::filesystem::path& dir, std::span<const std::string> compare = {});
nlohmann::json cmd_import(const std::filesystem::path& records, const std::filesystem::path& baselines,
                          const std::filesystem::path& dir);
nlohmann::json cmd_pipeline(const RunConfig& config);
void cmd_serve(const std::filesystem::path& dir, const std::string& host, int port,
               const std::string& static_dir);

// Full command-line entry point. Errors go to `err` as one JSON object;
// returns the process exit status (0 ok, 2 usage, 1 other failures).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mrb::cli
