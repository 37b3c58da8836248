#pragma once

// Read-only HTTP facade over a loaded leaderboard bundle.
//
//   GET  /api/models
//   GET  /api/attacks
//   GET  /api/leaderboard?metric=cr_ind_avg|cr_ind_worst
//   POST /api/metrics        {model_ids, attack_filter, alpha}
//   GET  /api/curves?model=&family=
//   GET  /api/viz?models=a,b,...
//
// Errors are {"error": {"kind", "message", ...}} with status 400 (invalid
// request), 404 (unknown model or family) or 422 (metric undefined).

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "multirobust/store.hpp"

namespace mrb {

struct AttackFilter {
  std::set<std::string> families;  // empty selects every registered family
  std::map<std::string, std::pair<double, double>> ranges;  // inclusive epsilon bounds
  bool include_clean = true;
};

// Throws Error: kUsage for malformed filters, kConfiguration for unknown
// families.
AttackFilter attack_filter_from_json(const json& j, std::span<const AttackFamily> registry);
// Uniformly weighted set of the selected instances; throws kUsage when the
// selection is empty.
AttackSet apply_filter(const AttackFilter& filter, std::span<const AttackFamily> registry);

struct ApiResponse {
  int status = 200;
  json body;
};

class ApiService {
 public:
  explicit ApiService(LeaderboardBundle data);

  ApiResponse models() const;
  ApiResponse attacks() const;
  ApiResponse leaderboard(const std::optional<std::string>& metric) const;
  ApiResponse metrics(const std::string& request_body) const;
  ApiResponse curves(const std::optional<std::string>& model, const std::optional<std::string>& family) const;
  ApiResponse viz(const std::optional<std::string>& models) const;

  const LeaderboardBundle& data() const noexcept { return data_; }

 private:
  LeaderboardBundle data_;
  json models_;
  json attacks_;
  std::map<LeaderboardMetric, json> leaderboards_;
};

// httplib server bound to an ApiService. Static files under `static_dir`
// (when non-empty) are served at /.
class HttpServer {
 public:
  HttpServer(const ApiService& service, std::string static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns the bound port; port 0 picks a free one. Throws kIo on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mrb
