#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mrb {

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split split);

struct DatasetConfig {
  int height = 8;
  int width = 8;
  int num_classes = 3;
  int n_train = 600;
  int n_validation = 200;
  int n_test = 300;
  double noise = 0.15;       // half-width of the uniform pixel noise
  double background = 0.25;
  double foreground = 0.75;

  std::size_t dim() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  void validate() const;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

// Grayscale images in [0, 1], row-major, one shape template per class.
struct Dataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::vector<double> pixels;  // size() * dim()
  std::vector<int> labels;
  std::vector<Split> splits;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return config.dim(); }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(pixels).subspan(i * dim(), dim());
  }
  std::vector<std::size_t> indices(Split split) const;
};

// Number of distinct shape templates available (upper bound on classes).
inline constexpr int kTemplateCount = 8;

// Noise-free image of class `label`.
std::vector<double> class_template(const DatasetConfig& config, int label);

// Deterministic in (config, seed). Each split holds balanced classes.
Dataset make_dataset(const DatasetConfig& config, std::uint64_t seed);

}  // namespace mrb
