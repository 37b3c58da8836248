#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "multirobust/error.hpp"
#include "multirobust/store.hpp"

namespace mrb::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& message) {
  throw Error(ErrorKind::kSchema, "config " + path + ": " + message, path);
}

const json* field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

template <typename T>
void read(const json& obj, const char* key, const std::string& path, T& out) {
  const json* v = field(obj, key);
  if (v == nullptr) return;
  const std::string p = path + "/" + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v->is_boolean()) bad(p, "expected true or false");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v->is_number_integer()) bad(p, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0) {
        bad(p, "expected a non-negative integer");
      }
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v->is_number() || !std::isfinite(v->get<double>())) bad(p, "expected a finite number");
  } else {
    if (!v->is_string()) bad(p, "expected a string");
  }
  out = v->get<T>();
}

std::vector<double> read_grid(const json& g, const std::string& path) {
  if (g.is_array()) {
    std::vector<double> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g[i].is_number()) bad(path + "/" + std::to_string(i), "expected a number");
      out.push_back(g[i].get<double>());
    }
    return out;
  }
  if (!g.is_object()) bad(path, "expected {\"max\": m, \"count\": n} or a list of strengths");
  double max = 0.0;
  std::size_t count = 0;
  if (!g.contains("max")) bad(path + "/max", "missing required field");
  if (!g.contains("count")) bad(path + "/count", "missing required field");
  read(g, "max", path, max);
  read(g, "count", path, count);
  try {
    return uniform_grid(max, count);
  } catch (const Error& e) {
    bad(path, e.what());
  }
}

}  // namespace

const ModelSpec* RunConfig::find_model(std::string_view id) const {
  auto it = std::ranges::find(models, id, &ModelSpec::id);
  return it == models.end() ? nullptr : &*it;
}

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.seed = eval_seed;
  o.jobs = jobs;
  o.strategy = strategy;
  o.split = Split::kTest;
  return o;
}

void RunConfig::validate() const {
  dataset.validate();
  training.validate();
  if (attacks.empty()) throw Error(ErrorKind::kConfiguration, "config declares no attack family");
  if (seeds.empty()) throw Error(ErrorKind::kConfiguration, "config needs at least one baseline seed");
  if (!(alpha > 0.0)) throw Error(ErrorKind::kConfiguration, "alpha must be positive");
  if (jobs < 1) throw Error(ErrorKind::kConfiguration, "jobs must be >= 1");
  for (const auto& f : attacks) {
    if (is_external_family(f.id())) {
      throw Error(ErrorKind::kConfiguration, "family '" + f.id() + "' cannot run in the sandbox");
    }
  }
  std::vector<std::string> ids;
  for (const auto& m : models) {
    if (!is_valid_model_id(m.id)) {
      throw Error(ErrorKind::kConfiguration, "model id '" + m.id + "' must match [A-Za-z0-9._-]+");
    }
    if (std::ranges::find(ids, m.id) != ids.end()) {
      throw Error(ErrorKind::kConfiguration, "duplicate model id '" + m.id + "'");
    }
    ids.push_back(m.id);
    m.defense.validate(attacks);
  }
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) bad("/", "expected an object");
  if (const json* v = field(j, "schema_version")) {
    if (!v->is_number_integer() || v->get<int>() != kSchemaVersion) bad("/schema_version", "unsupported version");
  }
  RunConfig c;
  if (const json* d = field(j, "dataset")) {
    const std::string p = "/dataset";
    read(*d, "height", p, c.dataset.height);
    read(*d, "width", p, c.dataset.width);
    read(*d, "num_classes", p, c.dataset.num_classes);
    read(*d, "n_train", p, c.dataset.n_train);
    read(*d, "n_validation", p, c.dataset.n_validation);
    read(*d, "n_test", p, c.dataset.n_test);
    read(*d, "noise", p, c.dataset.noise);
    read(*d, "background", p, c.dataset.background);
    read(*d, "foreground", p, c.dataset.foreground);
    read(*d, "seed", p, c.dataset_seed);
  }
  const json* attacks = field(j, "attacks");
  if (attacks == nullptr || !attacks->is_array()) bad("/attacks", "expected a list of attack families");
  for (std::size_t i = 0; i < attacks->size(); ++i) {
    const std::string p = "/attacks/" + std::to_string(i);
    const json& a = (*attacks)[i];
    if (!a.is_object()) bad(p, "expected an object");
    std::string id;
    read(a, "id", p, id);
    if (!a.contains("grid")) bad(p + "/grid", "missing required field");
    AttackParams params;
    if (const json* pj = field(a, "params")) {
      read(*pj, "iterations", p + "/params", params.iterations);
      read(*pj, "step_divisor", p + "/params", params.step_divisor);
      read(*pj, "restarts", p + "/params", params.restarts);
    }
    try {
      c.attacks.emplace_back(id, read_grid(a["grid"], p + "/grid"), params);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kSchema) throw;
      bad(p, e.what());
    }
  }
  if (const json* s = field(j, "seeds")) {
    if (!s->is_array()) bad("/seeds", "expected a list of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < s->size(); ++i) {
      if (!(*s)[i].is_number_unsigned()) bad("/seeds/" + std::to_string(i), "expected a non-negative integer");
      c.seeds.push_back((*s)[i].get<std::uint64_t>());
    }
  }
  if (const json* t = field(j, "training")) {
    read(*t, "epochs", "/training", c.training.epochs);
    read(*t, "batch_size", "/training", c.training.batch_size);
    read(*t, "learning_rate", "/training", c.training.learning_rate);
    read(*t, "hidden", "/training", c.training.hidden);
    if (field(*t, "attack_iterations") != nullptr) {
      int it = 0;
      read(*t, "attack_iterations", "/training", it);
      c.training.attack_iterations = it;
    }
  }
  if (const json* e = field(j, "evaluation")) {
    read(*e, "seed", "/evaluation", c.eval_seed);
    std::string strategy = "binary";
    read(*e, "strategy", "/evaluation", strategy);
    if (strategy == "binary") {
      c.strategy = SearchStrategy::kBinary;
    } else if (strategy == "exhaustive") {
      c.strategy = SearchStrategy::kExhaustive;
    } else {
      bad("/evaluation/strategy", "expected \"binary\" or \"exhaustive\"");
    }
  }
  if (const json* ms = field(j, "models")) {
    if (!ms->is_array()) bad("/models", "expected a list of models");
    for (std::size_t i = 0; i < ms->size(); ++i) {
      const std::string p = "/models/" + std::to_string(i);
      const json& m = (*ms)[i];
      if (!m.is_object()) bad(p, "expected an object");
      ModelSpec spec;
      std::string defense;
      read(m, "id", p, spec.id);
      read(m, "defense", p, defense);
      if (spec.id.empty()) bad(p + "/id", "missing required field");
      if (defense.empty()) bad(p + "/defense", "missing required field");
      try {
        spec.defense = DefenseSpec::parse(defense);
      } catch (const Error& e) {
        bad(p + "/defense", e.what());
      }
      read(m, "seed", p, spec.seed);
      read(m, "display_name", p, spec.display_name);
      read(m, "notes", p, spec.notes);
      c.models.push_back(std::move(spec));
    }
  }
  read(j, "alpha", "", c.alpha);
  std::string output = c.output.string();
  read(j, "output", "", output);
  c.output = output;
  read(j, "jobs", "", c.jobs);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::kUsage, "config file " + path.string() + " not found");
  return parse_run_config(read_json(path));
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.output) config.output = *o.output;
  if (o.seeds) config.seeds = *o.seeds;
  if (o.alpha) config.alpha = *o.alpha;
  if (o.jobs) config.jobs = *o.jobs;
  if (o.families) {
    std::vector<AttackFamily> kept;
    for (const auto& id : *o.families) {
      const AttackFamily* f = find_family(config.attacks, id);
      if (f == nullptr) {
        std::string known;
        for (const auto& a : config.attacks) known += (known.empty() ? "" : ", ") + a.id();
        throw Error(ErrorKind::kUsage, "--families names unknown family '" + id + "' (configured: " + known + ")");
      }
      kept.push_back(*f);
    }
    config.attacks = std::move(kept);
  }
  if (o.grid_size) {
    for (auto& f : config.attacks) f = AttackFamily(f.id(), uniform_grid(f.max_epsilon(), *o.grid_size), f.params());
  }
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : parse_name_list(text)) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw Error(ErrorKind::kUsage, "--seeds expects comma-separated non-negative integers, got '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorKind::kUsage, "--seeds needs at least one seed");
  return out;
}

std::vector<std::string> parse_name_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string_view item = text.substr(start, comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

}  // namespace mrb::cli
