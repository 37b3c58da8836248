#pragma once

// Brute-force reference formulas over flat cell lists. Deliberately
// written without the library's types so that they can check it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

constexpr double kFloor = 1e-6;

struct Cell {
  std::string family;  // "clean" at epsilon 0
  double epsilon = 0.0;
  double acc = 0.0;
  double acc_star = 0.0;
  double weight = 0.0;
  bool known = false;  // member of the knowledge set
};

inline std::optional<double> cr_ind_avg(const std::vector<Cell>& cells) {
  double num = 0.0;
  double mass = 0.0;
  for (const Cell& c : cells) {
    if (c.acc_star < kFloor) continue;
    num += c.weight * (c.acc / c.acc_star);
    mass += c.weight;
  }
  if (mass <= 0.0) return std::nullopt;
  return 100.0 * num / mass;
}

inline std::optional<double> cr_ind_worst(const std::vector<Cell>& cells) {
  std::optional<double> worst;
  for (const Cell& c : cells) {
    if (c.acc_star < kFloor) continue;
    const double r = c.acc / c.acc_star;
    if (!worst || r < *worst) worst = r;
  }
  if (!worst) return std::nullopt;
  return 100.0 * *worst;
}

inline std::optional<double> cr_exp(const std::vector<Cell>& cells) {
  double a = 0.0;
  double b = 0.0;
  for (const Cell& c : cells) {
    a += c.weight * c.acc;
    b += c.weight * c.acc_star;
  }
  if (b < kFloor) return std::nullopt;
  return 100.0 * a / b;
}

inline std::optional<double> cr_max(const std::vector<Cell>& cells) {
  double a = std::numeric_limits<double>::infinity();
  double b = std::numeric_limits<double>::infinity();
  for (const Cell& c : cells) {
    a = std::min(a, c.acc);
    b = std::min(b, c.acc_star);
  }
  if (b < kFloor) return std::nullopt;
  return 100.0 * a / b;
}

inline double average_accuracy(const std::vector<Cell>& cells) {
  double s = 0.0;
  for (const Cell& c : cells) s += c.weight * c.acc;
  return s;
}

inline std::optional<double> uar(const std::vector<Cell>& cells, const std::string& family) {
  double a = 0.0;
  double b = 0.0;
  for (const Cell& c : cells) {
    if (c.family != family) continue;
    a += c.acc;
    b += c.acc_star;
  }
  if (b < kFloor) return std::nullopt;
  return 100.0 * a / b;
}

inline std::optional<double> muar(const std::vector<Cell>& cells) {
  std::set<std::string> families;
  for (const Cell& c : cells) {
    if (c.family != "clean") families.insert(c.family);
  }
  if (families.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& f : families) {
    const auto u = uar(cells, f);
    if (!u) return std::nullopt;
    total += *u;
  }
  return total / static_cast<double>(families.size());
}

// Pairs (known P1, any P2), P1 != P2, with 0 < |s1 - s2| <= alpha.
inline std::optional<double> stability_constant(const std::vector<Cell>& cells, double alpha) {
  std::optional<double> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].known) continue;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (i == j) continue;
      const double ds = std::abs((1.0 - cells[i].acc_star) - (1.0 - cells[j].acc_star));
      if (!(ds > 0.0) || ds > alpha + 1e-12) continue;
      const double r = std::abs(cells[i].acc - cells[j].acc) / ds;
      if (!best || r > *best) best = r;
    }
  }
  return best;
}

// minimal[family][image]; an image survives a family when its minimal
// epsilon exceeds the level.
inline double union_accuracy(const std::map<std::string, std::vector<double>>& minimal,
                             const std::map<std::string, double>& levels, std::size_t n_images) {
  std::size_t robust = 0;
  for (std::size_t i = 0; i < n_images; ++i) {
    bool ok = true;
    for (const auto& [family, level] : levels) ok = ok && minimal.at(family)[i] > level;
    if (ok) ++robust;
  }
  return static_cast<double>(robust) / static_cast<double>(n_images);
}

inline bool close(double a, double b, double rel) {
  if (a == b) return true;
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace oracle
