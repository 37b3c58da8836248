#include "commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <csignal>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "multirobust/error.hpp"
#include "multirobust/eval.hpp"
#include "multirobust/parallel.hpp"
#include "multirobust/server.hpp"
#include "multirobust/store.hpp"

namespace mrb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require(const fs::path& file, const char* prior) {
  if (!fs::exists(file)) {
    throw Error(ErrorKind::kUsage, file.string() + " not found: run `mrb " + std::string(prior) + "` first");
  }
}

std::vector<const ModelSpec*> select_models(const RunConfig& config, std::span<const std::string> ids) {
  std::vector<const ModelSpec*> out;
  if (ids.empty()) {
    for (const auto& m : config.models) out.push_back(&m);
  } else {
    for (const auto& id : ids) {
      const ModelSpec* m = config.find_model(id);
      if (m == nullptr) throw Error(ErrorKind::kUsage, "model '" + id + "' is not declared in the config");
      out.push_back(m);
    }
  }
  if (out.empty()) throw Error(ErrorKind::kUsage, "the config declares no models");
  return out;
}

std::string architecture_tag(const SandboxModel& m) {
  const std::string in = std::to_string(m.height) + "x" + std::to_string(m.width);
  if (m.hidden == 0) return "linear-" + in + "-" + std::to_string(m.num_classes);
  return "mlp-" + in + "-" + std::to_string(m.hidden) + "-" + std::to_string(m.num_classes);
}

json names(const std::vector<std::string>& v) { return json(v); }

std::map<std::string, MinimalEpsilonProfile> load_profiles(const fs::path& dir, const RecordBundle& bundle) {
  std::map<std::string, MinimalEpsilonProfile> out;
  for (const auto& m : bundle.models) {
    const fs::path p = dir / kProfilesDir / (m.model_id + ".json");
    if (fs::exists(p)) out[m.model_id] = profile_from_json(read_json(p));
  }
  return out;
}

void with_hint(const std::function<void()>& fn, const char* hint) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kIncompleteEvaluation) throw;
    throw Error(e.kind(), std::string(e.what()) + " (" + hint + ")", e.path());
  }
}

}  // namespace

OutputLock::OutputLock(const fs::path& dir) : path_(dir / kFileName) {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error(ErrorKind::kIo, "output directory " + dir.string() + " is in use by another command (remove " +
                                    path_.string() + " if no command is running)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

json cmd_baseline(const RunConfig& config) {
  config.validate();
  const Dataset dataset = make_dataset(config.dataset, config.dataset_seed);
  BaselineConfig bc{config.seeds, config.training, config.eval_options()};
  const BaselineTable table = build_baseline_table(dataset, config.attacks, bc);
  write_json(config.output / kBaselinesFile, to_json(table));
  std::vector<std::string> incomplete;
  for (const auto& inst : table.incomplete_cells()) incomplete.push_back(inst.label());
  return {{"command", "baseline"},
          {"wrote", (config.output / kBaselinesFile).string()},
          {"cells", table.cells().size()},
          {"seeds", config.seeds},
          {"incomplete", incomplete}};
}

json cmd_train(const RunConfig& config, std::span<const std::string> model_ids) {
  config.validate();
  const auto models = select_models(config, model_ids);
  const Dataset dataset = make_dataset(config.dataset, config.dataset_seed);
  std::vector<SandboxModel> trained(models.size());
  parallel_for(models.size(), config.jobs, [&](std::size_t i) {
    trained[i] = train(dataset, models[i]->defense, config.attacks, config.training, models[i]->seed);
  });
  json written = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const fs::path p = config.output / kModelsDir / (models[i]->id + ".json");
    write_json(p, to_json(trained[i], models[i]->id));
    written.push_back({{"model_id", models[i]->id},
                       {"path", p.string()},
                       {"best_epoch", trained[i].provenance.best_epoch},
                       {"selection_accuracy", trained[i].provenance.selection_accuracy}});
  }
  return {{"command", "train"}, {"models", written}};
}

json cmd_eval(const RunConfig& config, std::span<const std::string> model_ids) {
  config.validate();
  const auto models = select_models(config, model_ids);
  const Dataset dataset = make_dataset(config.dataset, config.dataset_seed);

  RecordBundle bundle;
  const fs::path bundle_file = config.output / kBundleFile;
  if (fs::exists(bundle_file)) {
    bundle = bundle_from_json(read_json(bundle_file));
    if (bundle.attacks != config.attacks) {
      throw Error(ErrorKind::kUsage, bundle_file.string() +
                                         " was produced with a different attack registry; evaluate into a fresh --out");
    }
  }
  bundle.attacks = config.attacks;

  json written = json::array();
  for (const ModelSpec* spec : models) {
    const fs::path ckpt = config.output / kModelsDir / (spec->id + ".json");
    require(ckpt, ("train --model " + spec->id).c_str());
    const SandboxModel model = model_from_json(read_json(ckpt));
    EvaluationResult result = evaluate_model(model, spec->id, config.attacks, dataset, config.eval_options());
    for (const auto& f : result.failures) std::cerr << "warning: " << f << "\n";

    ModelInfo info;
    info.model_id = spec->id;
    info.display_name = spec->display_name.empty() ? spec->defense.label() : spec->display_name;
    info.defense_kind = std::string(to_string(spec->defense.kind));
    info.training_threats = spec->defense.threats;
    info.architecture = architecture_tag(model);
    info.notes = spec->notes;
    bundle.upsert(std::move(info), result.matrix);
    write_json(config.output / kProfilesDir / (spec->id + ".json"), to_json(result.profile));
    written.push_back({{"model_id", spec->id},
                       {"clean_accuracy", result.matrix.accuracy(AttackInstance::clean())},
                       {"failures", result.failures.size()}});
  }
  write_json(bundle_file, to_json(bundle));
  return {{"command", "eval"}, {"wrote", bundle_file.string()}, {"models", written}};
}

json cmd_metrics(const fs::path& dir, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::kUsage, "--alpha must be positive");
  require(dir / kBundleFile, "eval");
  require(dir / kBaselinesFile, "baseline");
  const RecordBundle bundle = bundle_from_json(read_json(dir / kBundleFile));
  const BaselineTable baselines = baselines_from_json(read_json(dir / bundle.baseline_ref));
  const auto profiles = load_profiles(dir, bundle);
  std::vector<MetricReport> reports;
  with_hint([&] { reports = score_bundle(bundle, baselines, profiles, alpha); },
            "run `mrb baseline` with the same attack grids first");
  write_json(dir / kReportsFile, reports_to_json(reports, alpha));
  std::vector<std::string> ids;
  for (const auto& r : reports) ids.push_back(r.model_id);
  return {{"command", "metrics"}, {"wrote", (dir / kReportsFile).string()}, {"alpha", alpha}, {"models", names(ids)}};
}

json cmd_rank(const fs::path& dir) {
  require(dir / kReportsFile, "metrics");
  const auto reports = reports_from_json(read_json(dir / kReportsFile));
  json out = {{"command", "rank"}};
  for (auto [metric, file] : {std::pair{LeaderboardMetric::kCrIndAvg, kLeaderboardAvgFile},
                              std::pair{LeaderboardMetric::kCrIndWorst, kLeaderboardWorstFile}}) {
    const auto entries = rank_leaderboard(reports, metric);
    write_json(dir / file, leaderboard_to_json(entries, metric));
    std::vector<std::string> order;
    for (const auto& e : entries) order.push_back(e.model_id);
    out[std::string(to_string(metric))] = order;
  }
  return out;
}

json cmd_export_viz(const fs::path& dir, std::span<const std::string> compare) {
  require(dir / kBundleFile, "eval");
  require(dir / kBaselinesFile, "baseline");
  require(dir / kReportsFile, "metrics");
  const RecordBundle bundle = bundle_from_json(read_json(dir / kBundleFile));
  const BaselineTable baselines = baselines_from_json(read_json(dir / bundle.baseline_ref));
  const auto reports = reports_from_json(read_json(dir / kReportsFile));
  std::vector<std::string> written;
  for (const auto& r : reports) {
    const fs::path p = dir / kVizDir / (r.model_id + ".json");
    write_json(p, to_json(build_model_visualization(bundle, baselines, r)));
    written.push_back(p.string());
  }
  if (!compare.empty()) {
    const fs::path p = dir / "viz_comparison.json";
    write_json(p, to_json(build_visualizations(bundle, baselines, reports, compare)));
    written.push_back(p.string());
  }
  return {{"command", "export-viz"}, {"wrote", written}};
}

json cmd_import(const fs::path& records, const fs::path& baselines, const fs::path& dir) {
  std::vector<std::string> warnings;
  RecordBundle bundle = import_records(records, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (!fs::exists(baselines)) throw Error(ErrorKind::kUsage, "baseline file " + baselines.string() + " not found");
  const BaselineTable table = baselines_from_json(read_json(baselines));
  bundle.baseline_ref = kBaselinesFile;
  write_json(dir / kBundleFile, to_json(bundle));
  write_json(dir / kBaselinesFile, to_json(table));
  return {{"command", "import"},
          {"wrote", (dir / kBundleFile).string()},
          {"models", bundle.models.size()},
          {"records", bundle.records.size()},
          {"warnings", warnings}};
}

json cmd_pipeline(const RunConfig& config) {
  json steps = json::array();
  steps.push_back(cmd_baseline(config));
  steps.push_back(cmd_train(config));
  steps.push_back(cmd_eval(config));
  steps.push_back(cmd_metrics(config.output, config.alpha));
  steps.push_back(cmd_rank(config.output));
  steps.push_back(cmd_export_viz(config.output));
  return {{"command", "pipeline"}, {"steps", steps}};
}

namespace {

HttpServer* active_server = nullptr;

void stop_on_signal(int) {
  if (active_server != nullptr) active_server->stop();
}

}  // namespace

void cmd_serve(const fs::path& dir, const std::string& host, int port, const std::string& static_dir) {
  if (port < 0 || port > 65535) throw Error(ErrorKind::kUsage, "--port must be in [0, 65535]");
  require(dir / kReportsFile, "metrics");
  ApiService service(load_bundle_dir(dir));
  HttpServer server(service, static_dir);
  const int bound = server.bind(host, port);
  std::cout << json{{"command", "serve"}, {"host", host}, {"port", bound}}.dump() << std::endl;
  active_server = &server;
  std::signal(SIGINT, stop_on_signal);
  std::signal(SIGTERM, stop_on_signal);
  server.run();
  active_server = nullptr;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-attack robustness benchmark: baselines, training, evaluation and leaderboards", "mrb"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::string out_dir, seeds, families;
  double alpha = 0.0;
  std::size_t grid_size = 0;
  int jobs = 0;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string static_dir;
  std::vector<std::string> model_ids;
  std::string compare;
  std::string records_path, baselines_path;

  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", config_path, "Run configuration (JSON)");
    if (required) opt->required();
    cmd->add_option("--out", out_dir, "Output directory (overrides the config)");
  };
  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--seeds", seeds, "Comma-separated baseline seeds");
    cmd->add_option("--families", families, "Comma-separated subset of the configured attack families");
    cmd->add_option("--grid-size", grid_size, "Points per family grid, evenly spaced up to the configured maximum")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", jobs, "Worker threads (capped by MRB_MAX_JOBS)")->check(CLI::PositiveNumber);
  };

  auto* baseline = app.add_subcommand("baseline", "Train per-instance baselines and write baselines.json");
  add_config(baseline, true);
  add_run_flags(baseline);
  auto* train_cmd = app.add_subcommand("train", "Train the configured defenses into models/<id>.json");
  add_config(train_cmd, true);
  add_run_flags(train_cmd);
  train_cmd->add_option("--model", model_ids, "Model id(s) from the config; default all");
  auto* eval = app.add_subcommand("eval", "Evaluate trained models into bundle.json and profiles/");
  add_config(eval, true);
  add_run_flags(eval);
  eval->add_option("--model", model_ids, "Model id(s) from the config; default all");
  auto* metrics = app.add_subcommand("metrics", "Compute reports.json from bundle.json and baselines.json");
  add_config(metrics, false);
  metrics->add_option("--alpha", alpha, "Stability-constant neighbourhood (default 0.03)");
  auto* rank = app.add_subcommand("rank", "Write leaderboard_avg.json and leaderboard_worst.json");
  add_config(rank, false);
  auto* viz = app.add_subcommand("export-viz", "Write viz/<model>.json visualization datasets");
  add_config(viz, false);
  viz->add_option("--models", compare, "Up to 5 comma-separated models for viz_comparison.json");
  auto* import = app.add_subcommand("import", "Validate external accuracy records into a bundle directory");
  import->add_option("--records", records_path, "Record bundle (JSON)")->required();
  import->add_option("--baselines", baselines_path, "Baseline table (JSON)")->required();
  import->add_option("--out", out_dir, "Output directory")->required();
  auto* serve = app.add_subcommand("serve", "Serve a bundle directory over HTTP");
  add_config(serve, false);
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--static", static_dir, "Directory of UI assets served at /");
  auto* pipeline = app.add_subcommand("pipeline", "baseline, train, eval, metrics, rank and export-viz in one go");
  add_config(pipeline, true);
  add_run_flags(pipeline);
  pipeline->add_option("--alpha", alpha, "Stability-constant neighbourhood (default from config)");

  auto fail = [&](ErrorKind kind, const std::string& message, const std::string& path) {
    json e = {{"kind", std::string(to_string(kind))}, {"message", message}};
    if (!path.empty()) e["path"] = path;
    err << json{{"error", e}}.dump() << "\n";
    return kind == ErrorKind::kUsage ? 2 : 1;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string message = e.what();
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      message = sub->get_name() + ": " + message;
    }
    return fail(ErrorKind::kUsage, message, "");
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    if (!out_dir.empty()) overrides.output = out_dir;
    if (!seeds.empty()) overrides.seeds = parse_seed_list(seeds);
    if (!families.empty()) overrides.families = parse_name_list(families);
    if (grid_size > 0) overrides.grid_size = grid_size;
    if (jobs > 0) overrides.jobs = jobs;
    if (alpha != 0.0) overrides.alpha = alpha;

    std::optional<RunConfig> config;
    if (!config_path.empty()) {
      config = load_run_config(config_path);
      apply_overrides(*config, overrides);
    }
    auto output_dir = [&]() -> fs::path {
      if (!out_dir.empty()) return out_dir;
      if (config) return config->output;
      throw Error(ErrorKind::kUsage, name + ": pass --out or --config");
    };

    json summary;
    if (name == "serve") {
      cmd_serve(output_dir(), host, port, static_dir);
      return 0;
    }
    const fs::path dir = output_dir();
    OutputLock lock(dir);
    if (name == "baseline") {
      summary = cmd_baseline(*config);
    } else if (name == "train") {
      summary = cmd_train(*config, model_ids);
    } else if (name == "eval") {
      summary = cmd_eval(*config, model_ids);
    } else if (name == "metrics") {
      summary = cmd_metrics(dir, overrides.alpha.value_or(config ? config->alpha : kDefaultAlpha));
    } else if (name == "rank") {
      summary = cmd_rank(dir);
    } else if (name == "export-viz") {
      const auto ids = parse_name_list(compare);
      summary = cmd_export_viz(dir, ids);
    } else if (name == "import") {
      summary = cmd_import(records_path, baselines_path, dir);
    } else {
      summary = cmd_pipeline(*config);
    }
    out << summary.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), e.path());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorKind::kIo, e.what(), "");
  } catch (const std::exception& e) {
    return fail(ErrorKind::kIo, std::string("unexpected failure: ") + e.what(), "");
  }
}

}  // namespace mrb::cli
