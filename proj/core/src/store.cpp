#include "multirobust/store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "multirobust/error.hpp"

namespace mrb {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& message) {
  throw Error(ErrorKind::kSchema, (path.empty() ? "/" : path) + ": " + message, path.empty() ? "/" : path);
}

std::string child(const std::string& path, std::string_view key) {
  std::string escaped;
  for (char c : key) {
    if (c == '~') {
      escaped += "~0";
    } else if (c == '/') {
      escaped += "~1";
    } else {
      escaped += c;
    }
  }
  return path + "/" + escaped;
}

std::string child(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

const json& expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) schema_error(path, "expected an object");
  return j;
}

const json& expect_array(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array");
  return j;
}

const json& member(const json& obj, std::string_view key, const std::string& path) {
  expect_object(obj, path);
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(child(path, key), "missing required field");
  return *it;
}

const json* optional_member(const json& obj, std::string_view key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(path, "expected a finite number");
  return v;
}

double number_at(const json& obj, std::string_view key, const std::string& path) {
  return number(member(obj, key, path), child(path, key));
}

std::optional<double> optional_number_at(const json& obj, std::string_view key, const std::string& path) {
  const json* v = optional_member(obj, key);
  if (v == nullptr) return std::nullopt;
  return number(*v, child(path, key));
}

double unit_interval_at(const json& obj, std::string_view key, const std::string& path) {
  const double v = number_at(obj, key, path);
  if (v < 0.0 || v > 1.0) schema_error(child(path, key), "accuracy " + dump(json(v)) + " outside [0, 1]");
  return v;
}

std::int64_t integer_at(const json& obj, std::string_view key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_number_integer()) schema_error(child(path, key), "expected an integer");
  return v.get<std::int64_t>();
}

std::string string_at(const json& obj, std::string_view key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_string()) schema_error(child(path, key), "expected a string");
  return v.get<std::string>();
}

std::string optional_string_at(const json& obj, std::string_view key, const std::string& path) {
  const json* v = optional_member(obj, key);
  if (v == nullptr) return {};
  if (!v->is_string()) schema_error(child(path, key), "expected a string");
  return v->get<std::string>();
}

bool bool_at(const json& obj, std::string_view key, const std::string& path) {
  const json& v = member(obj, key, path);
  if (!v.is_boolean()) schema_error(child(path, key), "expected true or false");
  return v.get<bool>();
}

std::vector<double> numbers_at(const json& obj, std::string_view key, const std::string& path) {
  const std::string p = child(path, key);
  const json& arr = expect_array(member(obj, key, path), p);
  std::vector<double> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(number(arr[i], child(p, i)));
  return out;
}

void check_version(const json& j) {
  const std::int64_t v = integer_at(j, "schema_version", "");
  if (v < 1 || v > kSchemaVersion) {
    schema_error("/schema_version", "unsupported schema version " + std::to_string(v) +
                                        " (this build reads 1.." + std::to_string(kSchemaVersion) + ")");
  }
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string registered_list(std::span<const AttackFamily> families) {
  std::string out;
  for (const auto& f : families) {
    if (!out.empty()) out += ", ";
    out += f.id();
  }
  return out.empty() ? "none" : out;
}

json threat_json(const TrainingThreat& t) { return {{"family", t.family}, {"epsilon", t.epsilon}}; }

std::vector<TrainingThreat> threats_at(const json& obj, std::string_view key, const std::string& path) {
  std::vector<TrainingThreat> out;
  const json* arr = optional_member(obj, key);
  if (arr == nullptr) return out;
  const std::string p = child(path, key);
  expect_array(*arr, p);
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const std::string tp = child(p, i);
    out.push_back({string_at((*arr)[i], "family", tp), number_at((*arr)[i], "epsilon", tp)});
  }
  return out;
}

}  // namespace

bool is_valid_model_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id.front() == '.') return false;
  return std::ranges::all_of(id, [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
           c == '_' || c == '-';
  });
}

const ModelInfo* RecordBundle::find_model(std::string_view model_id) const {
  auto it = std::ranges::find(models, model_id, &ModelInfo::model_id);
  return it == models.end() ? nullptr : &*it;
}

EvaluationMatrix RecordBundle::matrix(const std::string& model_id) const {
  if (find_model(model_id) == nullptr) {
    throw Error(ErrorKind::kConfiguration, "unknown model '" + model_id + "'");
  }
  EvaluationMatrix m(model_id);
  for (const auto& r : records) {
    if (r.model_id == model_id) m.set(r.instance(), r.accuracy, r.n_samples);
  }
  return m;
}

KnowledgeSet RecordBundle::knowledge(const ModelInfo& model) const {
  return build_knowledge_set(model.training_threats, attacks);
}

AttackSet RecordBundle::full_attack_set() const { return AttackSet::from_families(attacks, true); }

void RecordBundle::upsert(ModelInfo model, const EvaluationMatrix& matrix) {
  std::erase_if(records, [&](const AccuracyRecord& r) { return r.model_id == model.model_id; });
  for (const auto& [inst, cell] : matrix.cells()) {
    records.push_back({model.model_id, inst.family, inst.epsilon, cell.accuracy, cell.n_samples});
  }
  auto it = std::ranges::find(models, model.model_id, &ModelInfo::model_id);
  if (it == models.end()) {
    models.push_back(std::move(model));
  } else {
    *it = std::move(model);
  }
  std::ranges::sort(models, {}, &ModelInfo::model_id);
  std::ranges::sort(records, [](const AccuracyRecord& a, const AccuracyRecord& b) {
    if (a.model_id != b.model_id) return a.model_id < b.model_id;
    return a.instance() < b.instance();
  });
}

json to_json(const AttackFamily& family) {
  return {{"id", family.id()},
          {"grid", std::vector<double>(family.grid().begin(), family.grid().end())},
          {"params",
           {{"iterations", family.params().iterations},
            {"step_divisor", family.params().step_divisor},
            {"restarts", family.params().restarts}}}};
}

AttackFamily attack_family_from_json(const json& j, const std::string& path) {
  const std::string id = string_at(j, "id", path);
  std::vector<double> grid = numbers_at(j, "grid", path);
  AttackParams params;
  if (const json* p = optional_member(j, "params")) {
    const std::string pp = child(path, "params");
    expect_object(*p, pp);
    if (p->contains("iterations")) params.iterations = static_cast<int>(integer_at(*p, "iterations", pp));
    if (p->contains("step_divisor")) params.step_divisor = number_at(*p, "step_divisor", pp);
    if (p->contains("restarts")) params.restarts = static_cast<int>(integer_at(*p, "restarts", pp));
    if (params.iterations < 1 || params.restarts < 1 || !(params.step_divisor > 0.0)) {
      schema_error(pp, "iterations, restarts and step_divisor must be positive");
    }
  }
  try {
    return AttackFamily(id, std::move(grid), params);
  } catch (const Error& e) {
    schema_error(path, e.what());
  }
}

json to_json(const AttackInstance& instance) {
  return {{"family", instance.family}, {"epsilon", instance.epsilon}};
}

AttackInstance attack_instance_from_json(const json& j, const std::string& path) {
  return canonical({string_at(j, "family", path), number_at(j, "epsilon", path)});
}

json to_json(const RecordBundle& bundle) {
  json attacks = json::array();
  for (const auto& f : bundle.attacks) attacks.push_back(to_json(f));
  json models = json::array();
  for (const auto& m : bundle.models) {
    json threats = json::array();
    for (const auto& t : m.training_threats) threats.push_back(threat_json(t));
    models.push_back({{"model_id", m.model_id},
                      {"display_name", m.display_name},
                      {"defense_kind", m.defense_kind},
                      {"training_threats", threats},
                      {"architecture", m.architecture},
                      {"notes", m.notes}});
  }
  json records = json::array();
  for (const auto& r : bundle.records) {
    records.push_back({{"model_id", r.model_id},
                       {"family", r.family},
                       {"epsilon", r.epsilon},
                       {"accuracy", r.accuracy},
                       {"n_samples", r.n_samples}});
  }
  return {{"schema_version", bundle.schema_version},
          {"attacks", attacks},
          {"models", models},
          {"records", records},
          {"baseline_ref", bundle.baseline_ref}};
}

RecordBundle bundle_from_json(const json& j, std::vector<std::string>* warnings) {
  expect_object(j, "");
  check_version(j);
  RecordBundle b;
  b.schema_version = static_cast<int>(j.at("schema_version").get<std::int64_t>());
  b.baseline_ref = optional_string_at(j, "baseline_ref", "");
  if (b.baseline_ref.empty()) b.baseline_ref = kBaselinesFile;

  const json& attacks = expect_array(member(j, "attacks", ""), "/attacks");
  std::set<std::string> family_ids;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const std::string p = child("/attacks", i);
    b.attacks.push_back(attack_family_from_json(attacks[i], p));
    if (!family_ids.insert(b.attacks.back().id()).second) {
      schema_error(p + "/id", "duplicate attack family '" + b.attacks.back().id() + "'");
    }
  }

  const json& models = expect_array(member(j, "models", ""), "/models");
  std::set<std::string> model_ids;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string p = child("/models", i);
    ModelInfo m;
    m.model_id = string_at(models[i], "model_id", p);
    if (!is_valid_model_id(m.model_id)) {
      schema_error(p + "/model_id", "model id '" + m.model_id + "' must match [A-Za-z0-9._-]+");
    }
    if (!model_ids.insert(m.model_id).second) {
      schema_error(p + "/model_id", "duplicate model id '" + m.model_id + "'");
    }
    m.display_name = optional_string_at(models[i], "display_name", p);
    m.defense_kind = optional_string_at(models[i], "defense_kind", p);
    m.training_threats = threats_at(models[i], "training_threats", p);
    for (std::size_t t = 0; t < m.training_threats.size(); ++t) {
      if (!family_ids.contains(m.training_threats[t].family)) {
        schema_error(p + "/training_threats/" + std::to_string(t) + "/family",
                     "unknown attack family '" + m.training_threats[t].family +
                         "' (registered: " + registered_list(b.attacks) + ")");
      }
    }
    m.architecture = optional_string_at(models[i], "architecture", p);
    m.notes = optional_string_at(models[i], "notes", p);
    b.models.push_back(std::move(m));
  }

  const json& records = expect_array(member(j, "records", ""), "/records");
  std::set<std::pair<std::string, AttackInstance>> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string p = child("/records", i);
    AccuracyRecord r;
    r.model_id = string_at(records[i], "model_id", p);
    if (!model_ids.contains(r.model_id)) {
      schema_error(p + "/model_id", "record for undeclared model '" + r.model_id + "'");
    }
    r.family = string_at(records[i], "family", p);
    r.epsilon = number_at(records[i], "epsilon", p);
    r.accuracy = unit_interval_at(records[i], "accuracy", p);
    const std::int64_t n = records[i].contains("n_samples") ? integer_at(records[i], "n_samples", p) : 0;
    if (n < 0) schema_error(p + "/n_samples", "expected a non-negative integer");
    r.n_samples = static_cast<std::size_t>(n);
    if (r.epsilon < 0.0) schema_error(p + "/epsilon", "epsilon must be non-negative");
    if (r.epsilon == 0.0 || r.family == kCleanFamily) {
      if (r.epsilon != 0.0) schema_error(p + "/epsilon", "the clean entry must have epsilon 0");
    } else {
      const AttackFamily* f = find_family(b.attacks, r.family);
      if (f == nullptr) {
        schema_error(p + "/family", "unknown attack family '" + r.family + "' (registered: " +
                                        registered_list(b.attacks) + ")");
      }
      if (!f->grid_index(r.epsilon)) {
        schema_error(p + "/epsilon", "epsilon " + dump(json(r.epsilon)) + " is not on the grid of '" +
                                         r.family + "'");
      }
    }
    if (!seen.insert({r.model_id, r.instance()}).second) {
      schema_error(p, "duplicate record for " + r.model_id + " at " + r.instance().label());
    }
    b.records.push_back(std::move(r));
  }

  if (warnings != nullptr) {
    for (const auto& m : b.models) {
      for (auto& w : b.matrix(m.model_id).monotonicity_violations()) {
        warnings->push_back("model '" + m.model_id + "': " + w);
      }
    }
  }
  return b;
}

json to_json(const BaselineTable& table) {
  json cells = json::array();
  for (const auto& [inst, cell] : table.cells()) {
    cells.push_back({{"family", inst.family},
                     {"epsilon", inst.epsilon},
                     {"per_seed", cell.per_seed},
                     {"acc_star", cell.acc_star}});
  }
  json incomplete = json::array();
  for (const auto& inst : table.incomplete_cells()) incomplete.push_back(to_json(inst));
  return {{"schema_version", kSchemaVersion},
          {"num_classes", table.num_classes()},
          {"cells", cells},
          {"incomplete", incomplete}};
}

BaselineTable baselines_from_json(const json& j) {
  expect_object(j, "");
  check_version(j);
  const std::int64_t classes = integer_at(j, "num_classes", "");
  if (classes < 2) schema_error("/num_classes", "expected at least 2 classes");
  BaselineTable table(static_cast<int>(classes));
  const json& cells = expect_array(member(j, "cells", ""), "/cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string p = child("/cells", i);
    const AttackInstance inst = attack_instance_from_json(cells[i], p);
    if (table.contains(inst)) schema_error(p, "duplicate baseline cell " + inst.label());
    std::vector<double> per_seed = numbers_at(cells[i], "per_seed", p);
    if (per_seed.empty()) schema_error(p + "/per_seed", "expected at least one seed");
    for (std::size_t s = 0; s < per_seed.size(); ++s) {
      if (per_seed[s] < 0.0 || per_seed[s] > 1.0) schema_error(child(p + "/per_seed", s), "accuracy outside [0, 1]");
    }
    table.set(inst, std::move(per_seed));
    if (const auto stored = optional_number_at(cells[i], "acc_star", p)) {
      if (std::abs(*stored - table.acc_star(inst)) > 1e-12) {
        schema_error(p + "/acc_star", "acc_star is not the mean of per_seed");
      }
    }
  }
  if (const json* inc = optional_member(j, "incomplete")) {
    expect_array(*inc, "/incomplete");
    for (std::size_t i = 0; i < inc->size(); ++i) {
      table.mark_incomplete(attack_instance_from_json((*inc)[i], child("/incomplete", i)));
    }
  }
  return table;
}

json to_json(const MinimalEpsilonProfile& profile) {
  json families = json::object();
  for (const auto& [id, fp] : profile.families) {
    json values = json::array();
    for (double m : fp.minimal_epsilon) values.push_back(std::isinf(m) ? json(nullptr) : json(m));
    families[id] = {{"grid", fp.grid}, {"minimal_epsilon", values}};
  }
  return {{"schema_version", kSchemaVersion},
          {"model_id", profile.model_id},
          {"n_images", profile.n_images},
          {"families", families}};
}

MinimalEpsilonProfile profile_from_json(const json& j) {
  expect_object(j, "");
  check_version(j);
  MinimalEpsilonProfile p;
  p.model_id = string_at(j, "model_id", "");
  const std::int64_t n = integer_at(j, "n_images", "");
  if (n < 0) schema_error("/n_images", "expected a non-negative integer");
  p.n_images = static_cast<std::size_t>(n);
  const json& families = expect_object(member(j, "families", ""), "/families");
  for (const auto& [id, fj] : families.items()) {
    const std::string fp = child("/families", id);
    FamilyProfile prof;
    prof.grid = numbers_at(fj, "grid", fp);
    const std::string mp = fp + "/minimal_epsilon";
    const json& values = expect_array(member(fj, "minimal_epsilon", fp), mp);
    if (values.size() != p.n_images) {
      schema_error(mp, "expected " + std::to_string(p.n_images) + " entries, found " +
                           std::to_string(values.size()));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double m = values[i].is_null() ? kNeverSucceeds : number(values[i], child(mp, i));
      const bool on_grid = m == 0.0 || std::isinf(m) || std::ranges::find(prof.grid, m) != prof.grid.end();
      if (!on_grid) schema_error(child(mp, i), "value is neither 0, null nor a grid point");
      prof.minimal_epsilon.push_back(m);
    }
    p.families[id] = std::move(prof);
  }
  return p;
}

json to_json(const MetricReport& r) {
  json single = json::object();
  for (const auto& [family, s] : r.single_cr) {
    single[family] = {{"avg", optional_json(s.avg)}, {"worst", optional_json(s.worst)}, {"uar", optional_json(s.uar)}};
  }
  json excluded = json::array();
  for (const auto& inst : r.excluded_instances) excluded.push_back(to_json(inst));
  return {{"model_id", r.model_id},
          {"clean_accuracy", r.clean_accuracy},
          {"cr_ind_avg", optional_json(r.cr_ind_avg)},
          {"cr_ind_worst", optional_json(r.cr_ind_worst)},
          {"cr_exp", optional_json(r.cr_exp)},
          {"cr_max", optional_json(r.cr_max)},
          {"muar", optional_json(r.muar)},
          {"single_cr", single},
          {"sc", r.sc},
          {"sc_empty_pair_set", r.sc_empty_pair_set},
          {"cr_in", optional_json(r.cr_in)},
          {"cr_out", optional_json(r.cr_out)},
          {"excluded_instances", excluded},
          {"union_accuracy_by_level",
           r.union_accuracy_by_level ? json(*r.union_accuracy_by_level) : json(nullptr)}};
}

MetricReport report_from_json(const json& j, const std::string& path) {
  MetricReport r;
  r.model_id = string_at(j, "model_id", path);
  r.clean_accuracy = unit_interval_at(j, "clean_accuracy", path);
  r.cr_ind_avg = optional_number_at(j, "cr_ind_avg", path);
  r.cr_ind_worst = optional_number_at(j, "cr_ind_worst", path);
  r.cr_exp = optional_number_at(j, "cr_exp", path);
  r.cr_max = optional_number_at(j, "cr_max", path);
  r.muar = optional_number_at(j, "muar", path);
  const std::string sp = child(path, "single_cr");
  for (const auto& [family, s] : expect_object(member(j, "single_cr", path), sp).items()) {
    const std::string fp = child(sp, family);
    expect_object(s, fp);
    r.single_cr[family] = {optional_number_at(s, "avg", fp), optional_number_at(s, "worst", fp),
                           optional_number_at(s, "uar", fp)};
  }
  r.sc = number_at(j, "sc", path);
  r.sc_empty_pair_set = bool_at(j, "sc_empty_pair_set", path);
  r.cr_in = optional_number_at(j, "cr_in", path);
  r.cr_out = optional_number_at(j, "cr_out", path);
  const std::string ep = child(path, "excluded_instances");
  const json& excluded = expect_array(member(j, "excluded_instances", path), ep);
  for (std::size_t i = 0; i < excluded.size(); ++i) {
    r.excluded_instances.push_back(attack_instance_from_json(excluded[i], child(ep, i)));
  }
  if (optional_member(j, "union_accuracy_by_level") != nullptr) {
    r.union_accuracy_by_level = numbers_at(j, "union_accuracy_by_level", path);
  }
  return r;
}

json reports_to_json(std::span<const MetricReport> reports, double alpha) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return {{"schema_version", kSchemaVersion}, {"alpha", alpha}, {"reports", arr}};
}

std::vector<MetricReport> reports_from_json(const json& j, double* alpha) {
  expect_object(j, "");
  check_version(j);
  if (alpha != nullptr) *alpha = number_at(j, "alpha", "");
  const json& arr = expect_array(member(j, "reports", ""), "/reports");
  std::vector<MetricReport> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(report_from_json(arr[i], child("/reports", i)));
    if (!ids.insert(out.back().model_id).second) {
      schema_error(child("/reports", i) + "/model_id", "duplicate report for '" + out.back().model_id + "'");
    }
  }
  return out;
}

json leaderboard_to_json(std::span<const RankEntry> entries, LeaderboardMetric metric) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"rank", e.rank},
                   {"model_id", e.model_id},
                   {"value", optional_json(e.value)},
                   {"clean_accuracy", e.clean_accuracy}});
  }
  return {{"schema_version", kSchemaVersion}, {"metric", std::string(to_string(metric))}, {"entries", arr}};
}

std::vector<RankEntry> leaderboard_from_json(const json& j) {
  expect_object(j, "");
  check_version(j);
  try {
    leaderboard_metric_from_string(string_at(j, "metric", ""));
  } catch (const Error& e) {
    schema_error("/metric", e.what());
  }
  const json& arr = expect_array(member(j, "entries", ""), "/entries");
  std::vector<RankEntry> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = child("/entries", i);
    out.push_back({static_cast<int>(integer_at(arr[i], "rank", p)), string_at(arr[i], "model_id", p),
                   optional_number_at(arr[i], "value", p), unit_interval_at(arr[i], "clean_accuracy", p)});
  }
  return out;
}

json to_json(const SandboxModel& model, const std::string& model_id) {
  json threats = json::array();
  for (const auto& t : model.provenance.threats) threats.push_back(threat_json(t));
  return {{"schema_version", kSchemaVersion},
          {"model_id", model_id},
          {"architecture",
           {{"kind", model.hidden > 0 ? "mlp" : "linear"},
            {"height", model.height},
            {"width", model.width},
            {"hidden", model.hidden},
            {"num_classes", model.num_classes}}},
          {"provenance",
           {{"defense", model.provenance.defense},
            {"threats", threats},
            {"seed", model.provenance.seed},
            {"epochs", model.provenance.epochs},
            {"best_epoch", model.provenance.best_epoch},
            {"selection_accuracy", model.provenance.selection_accuracy}}},
          {"parameters", {{"w1", model.w1}, {"b1", model.b1}, {"w2", model.w2}, {"b2", model.b2}}}};
}

SandboxModel model_from_json(const json& j, std::string* model_id) {
  expect_object(j, "");
  check_version(j);
  if (model_id != nullptr) *model_id = string_at(j, "model_id", "");
  const json& arch = member(j, "architecture", "");
  SandboxModel m;
  m.height = static_cast<int>(integer_at(arch, "height", "/architecture"));
  m.width = static_cast<int>(integer_at(arch, "width", "/architecture"));
  m.hidden = static_cast<int>(integer_at(arch, "hidden", "/architecture"));
  m.num_classes = static_cast<int>(integer_at(arch, "num_classes", "/architecture"));
  const json& prov = member(j, "provenance", "");
  m.provenance.defense = string_at(prov, "defense", "/provenance");
  m.provenance.threats = threats_at(prov, "threats", "/provenance");
  const json& seed = member(prov, "seed", "/provenance");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    schema_error("/provenance/seed", "expected a non-negative integer");
  }
  m.provenance.seed = seed.get<std::uint64_t>();
  m.provenance.epochs = static_cast<int>(integer_at(prov, "epochs", "/provenance"));
  m.provenance.best_epoch = static_cast<int>(integer_at(prov, "best_epoch", "/provenance"));
  m.provenance.selection_accuracy = number_at(prov, "selection_accuracy", "/provenance");
  const json& params = member(j, "parameters", "");
  m.w1 = numbers_at(params, "w1", "/parameters");
  m.b1 = numbers_at(params, "b1", "/parameters");
  m.w2 = numbers_at(params, "w2", "/parameters");
  m.b2 = numbers_at(params, "b2", "/parameters");
  try {
    m.validate();
  } catch (const Error& e) {
    schema_error("/parameters", e.what());
  }
  return m;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return json::parse(buffer.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kSchema, path.string() + ": invalid JSON (" + e.what() + ")", "/");
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    out << dump(j);
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

RecordBundle import_records(const fs::path& path, std::vector<std::string>* warnings) {
  const json j = read_json(path);
  try {
    return bundle_from_json(j, warnings);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + e.path() + ": " + std::string(e.what()).substr(e.path().size() + 2),
                e.path());
  }
}

std::vector<CurvePoint> record_curve(const RecordBundle& bundle, const std::string& model_id,
                                     const std::string& family) {
  const AttackFamily* f = find_family(bundle.attacks, family);
  if (f == nullptr) {
    throw Error(ErrorKind::kConfiguration, "unknown attack family '" + family + "' (registered: " +
                                               registered_list(bundle.attacks) + ")");
  }
  const EvaluationMatrix m = bundle.matrix(model_id);
  std::vector<CurvePoint> curve;
  if (m.contains(AttackInstance::clean())) curve.push_back({0.0, m.accuracy(AttackInstance::clean())});
  for (double eps : f->grid()) {
    const AttackInstance inst{family, eps};
    if (m.contains(inst)) curve.push_back({eps, m.accuracy(inst)});
  }
  return curve;
}

ModelVisualization build_model_visualization(const RecordBundle& bundle, const BaselineTable& baselines,
                                             const MetricReport& report) {
  ModelVisualization viz;
  viz.model_id = report.model_id;
  const EvaluationMatrix m = bundle.matrix(report.model_id);
  for (const auto& [inst, cell] : m.cells()) {
    ScatterPoint p{inst, cell.accuracy, std::nullopt};
    if (baselines.contains(inst)) p.baseline_accuracy = baselines.acc_star(inst);
    viz.scatter.push_back(std::move(p));
  }
  for (const auto& f : bundle.attacks) {
    auto curve = record_curve(bundle, report.model_id, f.id());
    if (curve.size() > 1) viz.curves[f.id()] = std::move(curve);
  }
  viz.cr_in = report.cr_in;
  viz.cr_out = report.cr_out;
  for (const auto& [family, s] : report.single_cr) viz.single_cr.push_back({family, s.avg, s.worst});
  return viz;
}

VisualizationDataset build_visualizations(const RecordBundle& bundle, const BaselineTable& baselines,
                                          std::span<const MetricReport> reports,
                                          std::span<const std::string> model_ids) {
  if (model_ids.size() > kMaxComparedModels) {
    throw Error(ErrorKind::kUsage, "at most " + std::to_string(kMaxComparedModels) +
                                       " models can be compared, got " + std::to_string(model_ids.size()));
  }
  VisualizationDataset out;
  for (const auto& id : model_ids) {
    auto it = std::ranges::find(reports, id, &MetricReport::model_id);
    if (it == reports.end()) throw Error(ErrorKind::kConfiguration, "unknown model '" + id + "'");
    out.models.push_back(build_model_visualization(bundle, baselines, *it));
  }
  return out;
}

json to_json(const ModelVisualization& viz) {
  json scatter = json::array();
  for (const auto& p : viz.scatter) {
    scatter.push_back({{"family", p.instance.family},
                       {"epsilon", p.instance.epsilon},
                       {"defense_accuracy", p.defense_accuracy},
                       {"baseline_accuracy", optional_json(p.baseline_accuracy)}});
  }
  json curves = json::object();
  for (const auto& [family, points] : viz.curves) {
    json arr = json::array();
    for (const auto& p : points) arr.push_back({{"epsilon", p.epsilon}, {"accuracy", p.accuracy}});
    curves[family] = arr;
  }
  json bars = json::array();
  for (const auto& b : viz.single_cr) {
    bars.push_back({{"family", b.family}, {"avg", optional_json(b.avg)}, {"worst", optional_json(b.worst)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"model_id", viz.model_id},
          {"scatter", scatter},
          {"curves", curves},
          {"cr_in_out", {{"cr_in", optional_json(viz.cr_in)}, {"cr_out", optional_json(viz.cr_out)}}},
          {"single_cr", bars}};
}

json to_json(const VisualizationDataset& viz) {
  json models = json::array();
  for (const auto& m : viz.models) models.push_back(to_json(m));
  return {{"schema_version", kSchemaVersion}, {"models", models}};
}

std::vector<MetricReport> score_bundle(const RecordBundle& bundle, const BaselineTable& baselines,
                                       const std::map<std::string, MinimalEpsilonProfile>& profiles,
                                       double alpha, const AttackSet* attacks) {
  const AttackSet full = bundle.full_attack_set();
  const AttackSet& k = attacks != nullptr ? *attacks : full;
  std::vector<MetricReport> out;
  out.reserve(bundle.models.size());
  for (const auto& model : bundle.models) {
    auto it = profiles.find(model.model_id);
    out.push_back(compute_report(bundle.matrix(model.model_id), bundle.attacks, k, bundle.knowledge(model),
                                 baselines, alpha, it == profiles.end() ? nullptr : &it->second));
  }
  return out;
}

void export_bundle(const LeaderboardBundle& data, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / kBundleFile, to_json(data.bundle));
  write_json(dir / data.bundle.baseline_ref, to_json(data.baselines));
  for (const auto& [id, profile] : data.profiles) {
    write_json(dir / kProfilesDir / (id + ".json"), to_json(profile));
  }
  write_json(dir / kReportsFile, reports_to_json(data.reports, data.alpha));
  write_json(dir / kLeaderboardAvgFile,
             leaderboard_to_json(rank_leaderboard(data.reports, LeaderboardMetric::kCrIndAvg),
                                 LeaderboardMetric::kCrIndAvg));
  write_json(dir / kLeaderboardWorstFile,
             leaderboard_to_json(rank_leaderboard(data.reports, LeaderboardMetric::kCrIndWorst),
                                 LeaderboardMetric::kCrIndWorst));
  for (const auto& r : data.reports) {
    write_json(dir / kVizDir / (r.model_id + ".json"),
               to_json(build_model_visualization(data.bundle, data.baselines, r)));
  }
}

LeaderboardBundle load_bundle_dir(const fs::path& dir) {
  auto load = [&](const fs::path& file) {
    if (!fs::exists(file)) throw Error(ErrorKind::kIo, "missing " + file.string());
    return read_json(file);
  };
  auto with_file = [](const fs::path& file, auto&& parse) {
    try {
      return parse();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kSchema) throw;
      throw Error(ErrorKind::kSchema, file.string() + ": " + e.what(), e.path());
    }
  };
  LeaderboardBundle out;
  const fs::path bundle_file = dir / kBundleFile;
  const json bj = load(bundle_file);
  out.bundle = with_file(bundle_file, [&] { return bundle_from_json(bj); });
  const fs::path baselines_file = dir / out.bundle.baseline_ref;
  const json blj = load(baselines_file);
  out.baselines = with_file(baselines_file, [&] { return baselines_from_json(blj); });
  for (const auto& m : out.bundle.models) {
    const fs::path pf = dir / kProfilesDir / (m.model_id + ".json");
    if (!fs::exists(pf)) continue;
    const json pj = read_json(pf);
    out.profiles[m.model_id] = with_file(pf, [&] { return profile_from_json(pj); });
  }
  const fs::path reports_file = dir / kReportsFile;
  const json rj = load(reports_file);
  out.reports = with_file(reports_file, [&] { return reports_from_json(rj, &out.alpha); });
  return out;
}

}  // namespace mrb
