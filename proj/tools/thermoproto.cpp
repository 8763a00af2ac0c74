// Command-line front end: synth -> extract -> train -> classify -> eval.
//
// Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "thermoproto/thermoproto.hpp"

namespace fs = std::filesystem;
using namespace thermoproto;

namespace {

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string parent_dir(const std::string& path) {
  auto dir = fs::path(path).parent_path().string();
  return dir.empty() ? "." : dir;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void make_parent_dirs(const std::string& file) {
  const auto dir = fs::path(file).parent_path();
  if (!dir.empty()) make_dirs(dir);
}

BandwidthPolicy parse_bandwidth(const std::string& s) {
  if (s == "auto") return std::nullopt;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !(v > 0.0) || !std::isfinite(v))
    throw ValidationError("bandwidth must be \"auto\" or a positive number, got \"" + s + "\"");
  return v;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  for (auto field : detail::split_commas(list)) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || end != field.data() + field.size())
      throw ValidationError("sweep value \"" + std::string(field) + "\" is not a number");
    out.push_back(v);
  }
  return out;
}

EmbedderKind parse_embedder_kind(const std::string& s) {
  if (s == "identity") return EmbedderKind::Identity;
  if (s == "mlp") return EmbedderKind::Mlp;
  throw ValidationError("embedder must be identity or mlp, got \"" + s + "\"");
}

// Options shared by extract, train and eval. Flags override the --config file.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> t_lo, t_hi;
  std::optional<int> grid_points;
  std::optional<std::string> bandwidth;
  std::optional<double> alpha;
  std::optional<int> refine_iters;
  std::optional<std::string> embedder;
  std::optional<int> episodes, hidden, dim;
  std::optional<double> lr;
  std::optional<int> repeats;

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty()) cfg = experiment_config_from_json(read_json(config), parent_dir(config));
    if (seed) cfg.seed = *seed;
    if (t_lo) cfg.grid.t_lo = *t_lo;
    if (t_hi) cfg.grid.t_hi = *t_hi;
    if (grid_points) cfg.grid.n_points = *grid_points;
    if (bandwidth) cfg.bandwidth = parse_bandwidth(*bandwidth);
    if (alpha) cfg.alpha = *alpha;
    if (refine_iters) cfg.refine_iterations = *refine_iters;
    if (embedder) cfg.embedder = parse_embedder_kind(*embedder);
    if (episodes) cfg.embedder_config.episodes = *episodes;
    if (hidden) cfg.embedder_config.hidden = *hidden;
    if (dim) cfg.embedder_config.output = *dim;
    if (lr) cfg.embedder_config.learning_rate = *lr;
    if (repeats) cfg.repeats = *repeats;
    return cfg;
  }
};

void add_grid_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--t-lo", o.t_lo, "Feature grid lower temperature, degC");
  cmd->add_option("--t-hi", o.t_hi, "Feature grid upper temperature, degC");
  cmd->add_option("--grid-points", o.grid_points, "Feature grid size");
  cmd->add_option("--bandwidth", o.bandwidth, "KDE bandwidth in degC, or auto");
}

void add_train_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--alpha", o.alpha, "Weight of the labeled center in refinement, [0, 1]");
  cmd->add_option("--refine-iters", o.refine_iters, "Refinement passes over the unlabeled set");
  cmd->add_option("--embedder", o.embedder, "identity or mlp");
  cmd->add_option("--episodes", o.episodes, "Embedder training episodes");
  cmd->add_option("--hidden", o.hidden, "Embedder hidden width");
  cmd->add_option("--dim", o.dim, "Embedding dimension");
  cmd->add_option("--lr", o.lr, "Embedder learning rate");
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  SynthConfig cfg = SynthConfig::default_scene();
  if (!a.config.empty()) {
    // An experiment config is accepted too; its top-level seed drives the scene.
    const auto j = read_json(a.config);
    if (j.contains("synth")) {
      cfg = synth_config_from_json(j.at("synth"));
      cfg.seed = j.value("seed", std::uint64_t{0});
    } else {
      cfg = synth_config_from_json(j);
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const auto ds = synthesize(cfg);
  write_dataset(ds, a.out);

  std::map<SubcategoryId, std::pair<int, int>> counts;
  for (int m = 0; m < kNumSubcategories; ++m) counts[SubcategoryId::from_index(m)];
  for (const auto& r : ds.manifest.labeled) ++counts[{r.equipment_type, *r.status}].first;
  for (const auto& r : ds.manifest.test) ++counts[{r.equipment_type, *r.status}].second;
  std::map<EquipmentType, int> unlabeled;
  for (const auto& r : ds.manifest.unlabeled) ++unlabeled[r.equipment_type];

  std::printf("wrote %zu images to %s (seed %llu)\n", ds.images.size(), a.out.c_str(),
              static_cast<unsigned long long>(cfg.seed));
  std::printf("%-32s %8s %8s\n", "subcategory", "labeled", "test");
  for (const auto& [cls, c] : counts) std::printf("%-32s %8d %8d\n", cls.name().c_str(), c.first, c.second);
  std::printf("unlabeled: %zu", ds.manifest.unlabeled.size());
  for (const auto& [type, n] : unlabeled) std::printf("  %s=%d", std::string(to_string(type)).c_str(), n);
  std::printf("\n");
  return 0;
}

// ---- extract ---------------------------------------------------------------

struct ExtractArgs {
  std::string manifest;
  std::string image_root;
  std::string out;
};

int cmd_extract(const ExtractArgs& a, const Overrides& o) {
  const auto cfg = o.resolve();
  cfg.grid.validate();
  const auto ds = a.image_root.empty() ? load_dataset(a.manifest) : load_dataset(a.manifest, a.image_root);
  const auto records = extract_records(ds, cfg.grid, cfg.bandwidth);
  make_parent_dirs(a.out);
  write_feature_records(records, a.out);
  std::printf("extracted %zu feature records (%d grid points) to %s\n", records.size(), cfg.grid.n_points, a.out.c_str());
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string features;
  std::string out;
  std::string embedder_out;
  std::string mode = "weak";
};

std::string default_embedder_path(const std::string& model_path) {
  fs::path p(model_path);
  return (p.parent_path() / (p.stem().string() + ".embedder.json")).string();
}

int cmd_train(const TrainArgs& a, const Overrides& o) {
  const auto cfg = o.resolve();
  const auto mode = parse_mode(a.mode);
  const auto opt = train_options(cfg, mode, cfg.seed);
  opt.validate();

  const auto records = read_feature_records(a.features);
  const auto trained = train_model(records, opt);

  make_parent_dirs(a.out);
  write_file(a.out, to_json(trained.model).dump(2) + "\n");
  std::printf("trained %s model: %zu classes, dimension %zu, alpha %g -> %s\n", std::string(to_string(mode)).c_str(),
              trained.model.classes().size(), trained.model.feature_dim(), trained.model.alpha(), a.out.c_str());
  if (!trained.embedder.is_identity()) {
    const auto path = a.embedder_out.empty() ? default_embedder_path(a.out) : a.embedder_out;
    make_parent_dirs(path);
    write_file(path, to_json(trained.embedder).dump(2) + "\n");
    if (!trained.embedder_losses.empty())
      std::printf("embedder: %zu episodes, loss %.6g -> %.6g -> %s\n", trained.embedder_losses.size(),
                  trained.embedder_losses.front(), trained.embedder_losses.back(), path.c_str());
    else
      std::printf("embedder: untrained random weights -> %s\n", path.c_str());
  }
  return 0;
}

// ---- classify --------------------------------------------------------------

struct ClassifyArgs {
  std::string model;
  std::string features;
  std::string embedder;
  std::string out;
};

int cmd_classify(const ClassifyArgs& a) {
  const auto model = prototype_model_from_json(read_json(a.model));
  const auto embedder = a.embedder.empty() ? Embedder::identity() : embedder_from_json(read_json(a.embedder));
  const auto records = read_feature_records(a.features);

  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  std::size_t n = 0;
  for (const auto& r : records) {
    try {
      rows.push_back(prediction_to_json(r, classify_record(r, embedder, model), model));
    } catch (const ValidationError& e) {
      throw ValidationError(a.features + ": record " + std::to_string(n + 1) + ": " + e.what());
    }
    ++n;
  }
  make_parent_dirs(a.out);
  write_file(a.out, format_jsonl(rows));
  std::printf("classified %zu records -> %s\n", rows.size(), a.out.c_str());
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string out;
  std::optional<std::string> mode;
  std::vector<std::string> sweep;
};

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void write_report(const fs::path& dir, const std::string& stem, const nlohmann::json& j, const std::string& text) {
  write_file((dir / (stem + ".json")).string(), j.dump(2) + "\n");
  write_file((dir / (stem + ".txt")).string(), text);
}

int cmd_eval(const EvalArgs& a, const Overrides& o) {
  const auto cfg = o.resolve();
  cfg.validate();
  const fs::path dir(a.out);

  if (!a.sweep.empty()) {
    if (a.mode) throw ValidationError("--sweep always runs weak mode; drop --mode");
    const auto param = parse_sweep_param(a.sweep[0]);
    const auto values = parse_values(a.sweep[1]);
    const auto reports = sweep(cfg, param, values);
    nlohmann::json runs = nlohmann::json::array();
    std::string text;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      runs.push_back({{"value", values[i]}, {"report", to_json(reports[i])}});
      text += a.sweep[0] + " = " + label(values[i]) + "\n" + format_table(reports[i]) + "\n";
    }
    make_dirs(dir);
    write_report(dir, "sweep_" + a.sweep[0], {{"param", a.sweep[0]}, {"runs", runs}}, text);
    std::fputs(text.c_str(), stdout);
    return 0;
  }

  const auto mode = a.mode.value_or("both");
  if (mode == "both") {
    const auto [sup, weak] = run_both(cfg);
    const auto delta = compare(sup, weak);
    const auto text = format_table(sup) + "\n" + format_table(weak) + "\n" + format_table(delta);
    make_dirs(dir);
    write_report(dir, "report_supervised", to_json(sup), format_table(sup));
    write_report(dir, "report_weak", to_json(weak), format_table(weak));
    write_report(dir, "delta", to_json(delta), format_table(delta));
    std::fputs(text.c_str(), stdout);
    return 0;
  }
  const auto report = run_experiment(cfg, parse_mode(mode));
  make_dirs(dir);
  write_report(dir, "report_" + mode, to_json(report), format_table(report));
  std::fputs(format_table(report).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal equipment fault recognition with density features and prototype classification"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  Overrides over;

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic thermal dataset");
  synth->add_option("--config", synth_args.config, "Synthetic scene config (JSON)");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--seed", synth_args.seed, "RNG seed");

  ExtractArgs extract_args;
  auto* extract = app.add_subcommand("extract", "Compute one density feature per annotated region");
  extract->add_option("--manifest", extract_args.manifest, "Dataset manifest (JSON)")->required();
  extract->add_option("--image-root", extract_args.image_root, "Directory image paths are relative to (default: manifest dir)");
  extract->add_option("--out", extract_args.out, "Feature file (JSON lines)")->required();
  extract->add_option("--config", over.config, "Experiment config (JSON) supplying grid and bandwidth");
  add_grid_flags(extract, over);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Build prototype centers from a feature file");
  train->add_option("--features", train_args.features, "Feature file from extract")->required();
  train->add_option("--out", train_args.out, "Model file (JSON)")->required();
  train->add_option("--mode", train_args.mode, "supervised or weak")->check(CLI::IsMember({"supervised", "weak"}));
  train->add_option("--embedder-out", train_args.embedder_out, "Embedder file for --embedder mlp (default: <model>.embedder.json)");
  train->add_option("--config", over.config, "Experiment config (JSON) supplying training settings");
  train->add_option("--seed", over.seed, "RNG seed");
  add_train_flags(train, over);

  ClassifyArgs classify_args;
  auto* classify_cmd = app.add_subcommand("classify", "Predict subcategories and posteriors for a feature file");
  classify_cmd->add_option("--model", classify_args.model, "Model file from train")->required();
  classify_cmd->add_option("--features", classify_args.features, "Feature file from extract")->required();
  classify_cmd->add_option("--embedder", classify_args.embedder, "Embedder file written by train");
  classify_cmd->add_option("--out", classify_args.out, "Predictions file (JSON lines)")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Run the supervised / weakly supervised protocol and write reports");
  eval->add_option("--config", over.config, "Experiment config (JSON)");
  eval->add_option("--out", eval_args.out, "Report directory")->required();
  eval->add_option("--mode", eval_args.mode, "supervised, weak or both (default both)")
      ->check(CLI::IsMember({"supervised", "weak", "both"}));
  eval->add_option("--sweep", eval_args.sweep, "Parameter and comma-separated values, e.g. --sweep alpha 0,0.5,1")
      ->expected(2)
      ->type_name("PARAM VALUES");
  eval->add_option("--seed", over.seed, "RNG seed");
  eval->add_option("--repeats", over.repeats, "Independent repeats, counts pooled");
  add_grid_flags(eval, over);
  add_train_flags(eval, over);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) return cmd_synth(synth_args);
    if (*extract) return cmd_extract(extract_args, over);
    if (*train) return cmd_train(train_args, over);
    if (*classify_cmd) return cmd_classify(classify_args);
    if (*eval) return cmd_eval(eval_args, over);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
