#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mrb {

inline constexpr double kNeverSucceeds = std::numeric_limits<double>::infinity();

// Per test image, the smallest grid strength at which a family's attack
// succeeds: 0 when the clean input is already misclassified, kNeverSucceeds
// when the attack fails on the whole grid.
struct FamilyProfile {
  std::vector<double> grid;
  std::vector<double> minimal_epsilon;  // one entry per test image

  friend bool operator==(const FamilyProfile&, const FamilyProfile&) = default;
};

struct MinimalEpsilonProfile {
  std::string model_id;
  std::size_t n_images = 0;
  std::map<std::string, FamilyProfile> families;

  friend bool operator==(const MinimalEpsilonProfile&, const MinimalEpsilonProfile&) = default;
};

}  // namespace mrb
