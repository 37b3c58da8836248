#include "multirobust/sandbox/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "multirobust/error.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace mrb {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

void DatasetConfig::validate() const {
  if (height < 2 || width < 2) throw Error(ErrorKind::kConfiguration, "dataset: height and width must be >= 2");
  if (num_classes < 2 || num_classes > kTemplateCount) {
    throw Error(ErrorKind::kConfiguration,
                "dataset: num_classes must be in [2, " + std::to_string(kTemplateCount) + "]");
  }
  if (n_train < 1 || n_validation < 0 || n_test < 1) {
    throw Error(ErrorKind::kConfiguration, "dataset: split sizes must be positive");
  }
  if (!(noise >= 0.0) || !(background >= 0.0 && background <= 1.0) ||
      !(foreground >= 0.0 && foreground <= 1.0)) {
    throw Error(ErrorKind::kConfiguration, "dataset: intensities must lie in [0, 1], noise >= 0");
  }
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

std::vector<double> class_template(const DatasetConfig& config, int label) {
  const int h = config.height;
  const int w = config.width;
  const int band = std::max(1, std::min(h, w) / 4);
  const double rc = (h - 1) / 2.0;
  const double cc = (w - 1) / 2.0;
  std::vector<double> img(config.dim(), config.background);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double dr = r - rc;
      const double dc = c - cc;
      bool on = false;
      switch (label) {
        case 0: on = std::abs(dr) < band; break;                        // horizontal bar
        case 1: on = std::abs(dc) < band; break;                        // vertical bar
        case 2: on = std::abs(dr - dc) < band; break;                   // diagonal
        case 3: on = std::abs(dr + dc) < band; break;                   // anti-diagonal
        case 4: {                                                       // ring
          const double m = std::max(std::abs(dr), std::abs(dc));
          on = m > rc / 2.0 && m < rc / 2.0 + band;
          break;
        }
        case 5: on = std::abs(dr) < band / 2.0 + 0.5 || std::abs(dc) < band / 2.0 + 0.5; break;  // cross
        case 6: on = std::abs(dr) < band && std::abs(dc) < band; break;  // centre block
        case 7: on = ((r / band) + (c / band)) % 2 == 0; break;         // checkerboard
        default:
          throw Error(ErrorKind::kConfiguration, "dataset: no template for class " + std::to_string(label));
      }
      if (on) img[static_cast<std::size_t>(r * w + c)] = config.foreground;
    }
  }
  return img;
}

Dataset make_dataset(const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.seed = seed;

  std::vector<std::vector<double>> templates;
  for (int k = 0; k < config.num_classes; ++k) templates.push_back(class_template(config, k));

  Rng rng(seed);
  const std::pair<Split, int> parts[] = {{Split::kTrain, config.n_train},
                                         {Split::kValidation, config.n_validation},
                                         {Split::kTest, config.n_test}};
  const std::size_t total = static_cast<std::size_t>(config.n_train + config.n_validation + config.n_test);
  ds.pixels.reserve(total * config.dim());
  for (const auto& [split, n] : parts) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % config.num_classes;
    rng.shuffle(std::span<int>(labels));
    for (int label : labels) {
      for (double t : templates[static_cast<std::size_t>(label)]) {
        const double noise = config.noise == 0.0 ? 0.0 : rng.uniform(-config.noise, config.noise);
        ds.pixels.push_back(std::clamp(t + noise, 0.0, 1.0));
      }
      ds.labels.push_back(label);
      ds.splits.push_back(split);
    }
  }
  return ds;
}

}  // namespace mrb
