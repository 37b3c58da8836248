#include "multirobust/server.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>

#include "multirobust/error.hpp"

namespace mrb {

namespace {

json error_body(ErrorKind kind, const std::string& message) {
  return {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}};
}

ApiResponse failure(int status, ErrorKind kind, const std::string& message) {
  return {status, error_body(kind, message)};
}

ApiResponse from_error(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfiguration:
      return failure(404, e.kind(), e.what());
    case ErrorKind::kMetricUndefined:
    case ErrorKind::kDegenerateDenominator:
    case ErrorKind::kIncompleteEvaluation:
      return failure(422, e.kind(), e.what());
    default:
      return failure(400, e.kind(), e.what());
  }
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string item = text.substr(start, comma - start);
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

json report_with_rank(const MetricReport& report, const RankEntry& entry) {
  json j = to_json(report);
  j["rank"] = entry.rank;
  j["value"] = entry.value ? json(*entry.value) : json(nullptr);
  return j;
}

}  // namespace

AttackFilter attack_filter_from_json(const json& j, std::span<const AttackFamily> registry) {
  AttackFilter filter;
  if (j.is_null()) return filter;
  if (!j.is_object()) throw Error(ErrorKind::kUsage, "attack_filter must be an object");
  if (auto it = j.find("families"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorKind::kUsage, "attack_filter.families must be an array of family ids");
    for (const auto& f : *it) {
      if (!f.is_string()) throw Error(ErrorKind::kUsage, "attack_filter.families must contain strings");
      const std::string id = f.get<std::string>();
      if (find_family(registry, id) == nullptr) {
        throw Error(ErrorKind::kConfiguration, "unknown attack family '" + id + "'");
      }
      filter.families.insert(id);
    }
    if (filter.families.empty()) throw Error(ErrorKind::kUsage, "attack_filter.families selects no family");
  }
  if (auto it = j.find("ranges"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw Error(ErrorKind::kUsage, "attack_filter.ranges must map family ids to [min, max]");
    for (const auto& [id, range] : it->items()) {
      const AttackFamily* family = find_family(registry, id);
      if (family == nullptr) throw Error(ErrorKind::kConfiguration, "unknown attack family '" + id + "'");
      if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number()) {
        throw Error(ErrorKind::kUsage, "range for '" + id + "' must be [min, max]");
      }
      const double lo = range[0].get<double>();
      const double hi = range[1].get<double>();
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || lo > hi) {
        throw Error(ErrorKind::kUsage, "range for '" + id + "' must satisfy 0 <= min <= max");
      }
      if (lo > family->max_epsilon() * (1.0 + 1e-9)) {
        throw Error(ErrorKind::kUsage, "range for '" + id + "' lies beyond its grid");
      }
      filter.ranges[id] = {lo, hi};
    }
  }
  if (auto it = j.find("include_clean"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw Error(ErrorKind::kUsage, "attack_filter.include_clean must be true or false");
    filter.include_clean = it->get<bool>();
  }
  return filter;
}

AttackSet apply_filter(const AttackFilter& filter, std::span<const AttackFamily> registry) {
  std::vector<AttackInstance> selected;
  if (filter.include_clean) selected.push_back(AttackInstance::clean());
  for (const auto& family : registry) {
    if (!filter.families.empty() && !filter.families.contains(family.id())) continue;
    auto range = filter.ranges.find(family.id());
    for (double eps : family.grid()) {
      if (range != filter.ranges.end()) {
        const double tol = 1e-9 * std::max(1.0, eps);
        if (eps < range->second.first - tol || eps > range->second.second + tol) continue;
      }
      selected.push_back({family.id(), eps});
    }
  }
  if (selected.empty()) throw Error(ErrorKind::kUsage, "attack filter selects no attack instance");
  return AttackSet::uniform(std::move(selected));
}

ApiService::ApiService(LeaderboardBundle data) : data_(std::move(data)) {
  json models = json::array();
  const json bundle = to_json(data_.bundle);
  for (const auto& m : bundle["models"]) models.push_back(m);
  models_ = {{"schema_version", kSchemaVersion}, {"models", models}};
  json attacks = json::array();
  for (const auto& f : data_.bundle.attacks) attacks.push_back(to_json(f));
  attacks_ = {{"schema_version", kSchemaVersion}, {"attacks", attacks}};

  for (auto metric : {LeaderboardMetric::kCrIndAvg, LeaderboardMetric::kCrIndWorst}) {
    json entries = json::array();
    for (const auto& e : rank_leaderboard(data_.reports, metric)) {
      auto it = std::ranges::find(data_.reports, e.model_id, &MetricReport::model_id);
      entries.push_back(report_with_rank(*it, e));
    }
    leaderboards_[metric] = {{"schema_version", kSchemaVersion},
                             {"metric", std::string(to_string(metric))},
                             {"alpha", data_.alpha},
                             {"entries", entries}};
  }
}

ApiResponse ApiService::models() const { return {200, models_}; }

ApiResponse ApiService::attacks() const { return {200, attacks_}; }

ApiResponse ApiService::leaderboard(const std::optional<std::string>& metric) const {
  try {
    const auto m = leaderboard_metric_from_string(metric.value_or("cr_ind_avg"));
    return {200, leaderboards_.at(m)};
  } catch (const Error& e) {
    return failure(400, ErrorKind::kUsage, e.what());
  }
}

ApiResponse ApiService::metrics(const std::string& request_body) const {
  json request;
  try {
    request = request_body.empty() ? json::object() : json::parse(request_body);
  } catch (const json::parse_error& e) {
    return failure(400, ErrorKind::kUsage, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!request.is_object()) return failure(400, ErrorKind::kUsage, "request body must be a JSON object");

  std::vector<std::string> ids;
  if (auto it = request.find("model_ids"); it != request.end() && !it->is_null()) {
    if (!it->is_array()) return failure(400, ErrorKind::kUsage, "model_ids must be an array of strings");
    for (const auto& id : *it) {
      if (!id.is_string()) return failure(400, ErrorKind::kUsage, "model_ids must be an array of strings");
      ids.push_back(id.get<std::string>());
    }
  } else {
    for (const auto& m : data_.bundle.models) ids.push_back(m.model_id);
  }
  for (const auto& id : ids) {
    if (data_.bundle.find_model(id) == nullptr) {
      return failure(404, ErrorKind::kConfiguration, "unknown model '" + id + "'");
    }
  }

  double alpha = data_.alpha;
  if (auto it = request.find("alpha"); it != request.end() && !it->is_null()) {
    if (!it->is_number() || !(it->get<double>() > 0.0) || !std::isfinite(it->get<double>())) {
      return failure(400, ErrorKind::kUsage, "alpha must be a positive number");
    }
    alpha = it->get<double>();
  }

  AttackFilter filter;
  AttackSet attacks;
  try {
    filter = attack_filter_from_json(request.value("attack_filter", json()), data_.bundle.attacks);
    attacks = apply_filter(filter, data_.bundle.attacks);
  } catch (const Error& e) {
    return from_error(e);
  }
  std::vector<AttackFamily> families;
  for (const auto& f : data_.bundle.attacks) {
    if (filter.families.empty() || filter.families.contains(f.id())) families.push_back(f);
  }

  json reports = json::array();
  for (const auto& id : ids) {
    const ModelInfo& model = *data_.bundle.find_model(id);
    MetricReport report;
    try {
      auto profile = data_.profiles.find(id);
      report = compute_report(data_.bundle.matrix(id), families, attacks, data_.bundle.knowledge(model),
                              data_.baselines, alpha, profile == data_.profiles.end() ? nullptr : &profile->second);
    } catch (const Error& e) {
      return from_error(e);
    }
    if (!report.cr_ind_avg || !report.cr_ind_worst) {
      ApiResponse r = failure(422, ErrorKind::kMetricUndefined,
                              "competitiveness ratio of '" + id + "' is undefined: every selected instance "
                              "has a degenerate baseline");
      json excluded = json::array();
      for (const auto& inst : report.excluded_instances) excluded.push_back(to_json(inst));
      r.body["error"]["excluded_instances"] = excluded;
      return r;
    }
    reports.push_back(to_json(report));
  }
  json instances = json::array();
  for (const auto& inst : attacks.instances()) instances.push_back(to_json(inst));
  return {200,
          {{"schema_version", kSchemaVersion}, {"alpha", alpha}, {"attack_set", instances}, {"reports", reports}}};
}

ApiResponse ApiService::curves(const std::optional<std::string>& model,
                               const std::optional<std::string>& family) const {
  if (!model || model->empty()) return failure(400, ErrorKind::kUsage, "query parameter 'model' is required");
  if (!family || family->empty()) return failure(400, ErrorKind::kUsage, "query parameter 'family' is required");
  if (data_.bundle.find_model(*model) == nullptr) {
    return failure(404, ErrorKind::kConfiguration, "unknown model '" + *model + "'");
  }
  try {
    json points = json::array();
    for (const auto& p : record_curve(data_.bundle, *model, *family)) {
      points.push_back({{"epsilon", p.epsilon}, {"accuracy", p.accuracy}});
    }
    return {200, {{"schema_version", kSchemaVersion}, {"model_id", *model}, {"family", *family}, {"points", points}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ApiService::viz(const std::optional<std::string>& models) const {
  if (!models) return failure(400, ErrorKind::kUsage, "query parameter 'models' is required");
  const auto ids = split_csv(*models);
  if (ids.empty()) return failure(400, ErrorKind::kUsage, "query parameter 'models' names no model");
  try {
    return {200, to_json(build_visualizations(data_.bundle, data_.baselines, data_.reports, ids))};
  } catch (const Error& e) {
    return from_error(e);
  }
}

struct HttpServer::Impl {
  explicit Impl(const ApiService& s) : service(s) {}
  const ApiService& service;
  httplib::Server server;
};

HttpServer::HttpServer(const ApiService& service, std::string static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& svr = impl_->server;
  const ApiService& api = impl_->service;

  auto send = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string> {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
  };

  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  svr.Get("/api/models", [&api, send](const httplib::Request&, httplib::Response& res) { send(res, api.models()); });
  svr.Get("/api/attacks", [&api, send](const httplib::Request&, httplib::Response& res) { send(res, api.attacks()); });
  svr.Get("/api/leaderboard", [&api, send, param](const httplib::Request& req, httplib::Response& res) {
    send(res, api.leaderboard(param(req, "metric")));
  });
  svr.Post("/api/metrics", [&api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api.metrics(req.body));
  });
  svr.Get("/api/curves", [&api, send, param](const httplib::Request& req, httplib::Response& res) {
    send(res, api.curves(param(req, "model"), param(req, "family")));
  });
  svr.Get("/api/viz", [&api, send, param](const httplib::Request& req, httplib::Response& res) {
    send(res, api.viz(param(req, "models")));
  });
  if (!static_dir.empty() && !svr.set_mount_point("/", static_dir)) {
    throw Error(ErrorKind::kIo, "static asset directory '" + static_dir + "' does not exist");
  }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  auto& svr = impl_->server;
  const int bound = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace mrb
