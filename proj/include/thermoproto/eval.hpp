#pragma once

// Supervised vs weakly supervised experiments, per-equipment accuracy tables,
// parameter sweeps and report comparison.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "thermoproto/density.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/manifest.hpp"
#include "thermoproto/pipeline.hpp"
#include "thermoproto/rng.hpp"
#include "thermoproto/synth.hpp"

namespace thermoproto {

struct ExperimentConfig {
  // Either a manifest path (images resolved next to it) or a synthetic scene.
  std::variant<std::string, SynthConfig> source = SynthConfig::default_scene();
  FeatureGrid grid;
  BandwidthPolicy bandwidth;
  EmbedderKind embedder = EmbedderKind::Identity;
  EmbedderTrainConfig embedder_config;  // its seed is derived per run
  double alpha = 0.5;
  int refine_iterations = 1;
  std::uint64_t seed = 0;
  int repeats = 1;

  void validate() const {
    require(repeats >= 1, "repeat count must be >= 1");
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(refine_iterations >= 1, "refine iterations must be >= 1");
    grid.validate();
    if (bandwidth) require(*bandwidth > 0.0 && std::isfinite(*bandwidth), "bandwidth must be > 0");
    if (embedder == EmbedderKind::Mlp) embedder_config.validate();
    if (const auto* s = std::get_if<SynthConfig>(&source)) s->validate();
    if (const auto* p = std::get_if<std::string>(&source))
      require(std::filesystem::exists(*p), "manifest " + *p + " does not exist");
  }
};

// JSON form. Relative manifest paths resolve against base_dir.
//   {"manifest": str | "synth": {...}, "grid": {"t_lo","t_hi","n_points"},
//    "bandwidth": "auto" | f64, "embedder": {"kind","hidden","output","episodes","lr"},
//    "alpha": f64, "refine_iters": int, "seed": u64, "repeats": int}
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".") {
  ExperimentConfig cfg;
  try {
    if (j.contains("manifest")) {
      std::filesystem::path p = j.at("manifest").get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      cfg.source = p.lexically_normal().string();
    } else if (j.contains("synth")) {
      cfg.source = synth_config_from_json(j.at("synth"));
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      cfg.grid = {g.value("t_lo", cfg.grid.t_lo), g.value("t_hi", cfg.grid.t_hi), g.value("n_points", cfg.grid.n_points)};
    }
    if (j.contains("bandwidth")) {
      const auto& b = j.at("bandwidth");
      if (b.is_string()) require(b.get<std::string>() == "auto", "bandwidth must be \"auto\" or a number");
      else cfg.bandwidth = b.get<double>();
    }
    if (j.contains("embedder")) {
      const auto& e = j.at("embedder");
      const auto kind = e.value("kind", std::string("identity"));
      require(kind == "identity" || kind == "mlp", "embedder kind must be \"identity\" or \"mlp\"");
      cfg.embedder = kind == "mlp" ? EmbedderKind::Mlp : EmbedderKind::Identity;
      cfg.embedder_config.hidden = e.value("hidden", cfg.embedder_config.hidden);
      cfg.embedder_config.output = e.value("output", cfg.embedder_config.output);
      cfg.embedder_config.episodes = e.value("episodes", cfg.embedder_config.episodes);
      cfg.embedder_config.learning_rate = e.value("lr", cfg.embedder_config.learning_rate);
    }
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.refine_iterations = j.value("refine_iters", cfg.refine_iterations);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.repeats = j.value("repeats", cfg.repeats);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  return cfg;
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  if (const auto* p = std::get_if<std::string>(&cfg.source)) j["manifest"] = *p;
  else j["synth"] = synth_config_to_json(std::get<SynthConfig>(cfg.source));
  j["grid"] = {{"t_lo", cfg.grid.t_lo}, {"t_hi", cfg.grid.t_hi}, {"n_points", cfg.grid.n_points}};
  j["bandwidth"] = cfg.bandwidth ? nlohmann::json(*cfg.bandwidth) : nlohmann::json("auto");
  j["embedder"] = {{"kind", cfg.embedder == EmbedderKind::Mlp ? "mlp" : "identity"},
                   {"hidden", cfg.embedder_config.hidden},
                   {"output", cfg.embedder_config.output},
                   {"episodes", cfg.embedder_config.episodes},
                   {"lr", cfg.embedder_config.learning_rate}};
  j["alpha"] = cfg.alpha;
  j["refine_iters"] = cfg.refine_iterations;
  j["seed"] = cfg.seed;
  j["repeats"] = cfg.repeats;
  return j;
}

// FNV-1a 64 over the canonical (key-sorted) JSON dump, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(cfg).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct AccuracyRow {
  std::string label;  // equipment type, or "entirety"
  std::size_t n_normal = 0, correct_normal = 0;
  std::size_t n_fault = 0, correct_fault = 0;

  static std::optional<double> ratio(std::size_t correct, std::size_t n) {
    if (n == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(n);
  }
  std::optional<double> acc_normal() const { return ratio(correct_normal, n_normal); }
  std::optional<double> acc_fault() const { return ratio(correct_fault, n_fault); }
  // Sample-weighted mean of the two cells.
  std::optional<double> acc_average() const { return ratio(correct_normal + correct_fault, n_normal + n_fault); }
};

struct EvalReport {
  Mode mode = Mode::Supervised;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::array<AccuracyRow, 5> rows;
  AccuracyRow overall;

  std::size_t total() const { return overall.n_normal + overall.n_fault; }
};

// Rows per equipment type plus the overall row from (true, predicted) pairs.
inline void tally(EvalReport& report, SubcategoryId truth, SubcategoryId predicted) {
  const bool ok = truth == predicted;
  auto add = [&](AccuracyRow& row) {
    if (truth.status == Status::Normal) {
      ++row.n_normal;
      row.correct_normal += ok;
    } else {
      ++row.n_fault;
      row.correct_fault += ok;
    }
  };
  add(report.rows[static_cast<std::size_t>(truth.equipment_type)]);
  add(report.overall);
}

inline EvalReport empty_report(Mode mode, double alpha, std::uint64_t seed, std::string hash) {
  EvalReport r;
  r.mode = mode;
  r.alpha = alpha;
  r.seed = seed;
  r.config_hash = std::move(hash);
  for (std::size_t t = 0; t < r.rows.size(); ++t) r.rows[t].label = std::string(to_string(kEquipmentTypes[t]));
  r.overall.label = "entirety";
  return r;
}

inline Dataset load_experiment_dataset(const ExperimentConfig& cfg, int repeat) {
  if (const auto* path = std::get_if<std::string>(&cfg.source)) return load_dataset(*path);
  SynthConfig synth = std::get<SynthConfig>(cfg.source);
  synth.seed = cfg.seed + static_cast<std::uint64_t>(repeat);
  return synthesize(synth).to_dataset();
}

inline TrainOptions train_options(const ExperimentConfig& cfg, Mode mode, std::uint64_t run_seed) {
  TrainOptions opt;
  opt.mode = mode;
  opt.alpha = cfg.alpha;
  opt.refine_iterations = cfg.refine_iterations;
  opt.embedder = cfg.embedder;
  opt.embedder_config = cfg.embedder_config;
  opt.embedder_config.seed = derive_seed(run_seed, 2);
  return opt;
}

// Accumulates the test-set outcome of one run into `report`.
inline void evaluate_run(EvalReport& report, const std::vector<FeatureRecord>& records, const TrainOptions& opt) {
  const auto trained = train_model(records, opt);
  for (const auto& r : records) {
    if (r.split != Split::Test) continue;
    tally(report, *r.label(), classify_record(r, trained.embedder, trained.model).predicted);
  }
}

inline void check_test_coverage(const Dataset& ds) {
  std::set<SubcategoryId> labeled;
  for (const auto& r : ds.manifest.labeled) labeled.insert({r.equipment_type, *r.status});
  for (const auto& r : ds.manifest.test)
    if (!labeled.count({r.equipment_type, *r.status}))
      throw ValidationError("test subcategory " + SubcategoryId{r.equipment_type, *r.status}.name() + " is absent from the labeled set");
}

// Supervised mode builds centers from labeled data only (alpha = 1). Weak
// mode refines them with the unlabeled split before classifying the test set.
// Repeats pool their counts; repeat r of a synthetic source uses seed + r.
inline EvalReport run_experiment(const ExperimentConfig& cfg, Mode mode) {
  cfg.validate();
  auto report = empty_report(mode, mode == Mode::Supervised ? 1.0 : cfg.alpha, cfg.seed, config_hash(cfg));
  for (int r = 0; r < cfg.repeats; ++r) {
    const auto ds = load_experiment_dataset(cfg, r);
    check_test_coverage(ds);
    const auto records = extract_records(ds, cfg.grid, cfg.bandwidth);
    evaluate_run(report, records, train_options(cfg, mode, cfg.seed + static_cast<std::uint64_t>(r)));
  }
  return report;
}

// Both modes over the same datasets and features.
inline std::pair<EvalReport, EvalReport> run_both(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto hash = config_hash(cfg);
  auto sup = empty_report(Mode::Supervised, 1.0, cfg.seed, hash);
  auto weak = empty_report(Mode::Weak, cfg.alpha, cfg.seed, hash);
  for (int r = 0; r < cfg.repeats; ++r) {
    const auto ds = load_experiment_dataset(cfg, r);
    check_test_coverage(ds);
    const auto records = extract_records(ds, cfg.grid, cfg.bandwidth);
    const auto run_seed = cfg.seed + static_cast<std::uint64_t>(r);
    evaluate_run(sup, records, train_options(cfg, Mode::Supervised, run_seed));
    evaluate_run(weak, records, train_options(cfg, Mode::Weak, run_seed));
  }
  return {std::move(sup), std::move(weak)};
}

enum class SweepParam { Alpha, Bandwidth, GridPoints };

inline SweepParam parse_sweep_param(std::string_view s) {
  if (s == "alpha") return SweepParam::Alpha;
  if (s == "bandwidth") return SweepParam::Bandwidth;
  if (s == "grid_points") return SweepParam::GridPoints;
  throw ValidationError("unknown sweep parameter \"" + std::string(s) + "\" (alpha, bandwidth, grid_points)");
}

inline ExperimentConfig with_param(ExperimentConfig cfg, SweepParam param, double value) {
  switch (param) {
    case SweepParam::Alpha:
      require(value >= 0.0 && value <= 1.0, "alpha sweep value " + std::to_string(value) + " outside [0, 1]");
      cfg.alpha = value;
      break;
    case SweepParam::Bandwidth:
      require(value > 0.0 && std::isfinite(value), "bandwidth sweep value must be > 0");
      cfg.bandwidth = value;
      break;
    case SweepParam::GridPoints:
      require(value >= 2.0 && value == std::floor(value), "grid_points sweep value must be an integer >= 2");
      cfg.grid.n_points = static_cast<int>(value);
      break;
  }
  return cfg;
}

// One weak-mode run per value with the shared seed. All values are validated
// before the first run starts.
inline std::vector<EvalReport> sweep(const ExperimentConfig& cfg, SweepParam param, const std::vector<double>& values) {
  require(!values.empty(), "sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (double v : values) {
    configs.push_back(with_param(cfg, param, v));
    configs.back().validate();
  }
  std::vector<EvalReport> out;
  for (const auto& c : configs) out.push_back(run_experiment(c, Mode::Weak));
  return out;
}

struct DeltaRow {
  std::string label;
  std::optional<double> normal, fault, average;
};

struct DeltaTable {
  std::vector<DeltaRow> rows;  // equipment types, then "entirety"
};

inline std::optional<double> diff(std::optional<double> a, std::optional<double> b) {
  if (!a || !b) return std::nullopt;
  return *b - *a;
}

// Per-row accuracy change b - a. Both reports must cover the same subcategories.
inline DeltaTable compare(const EvalReport& a, const EvalReport& b) {
  DeltaTable t;
  auto row = [&](const AccuracyRow& ra, const AccuracyRow& rb) {
    require((ra.n_normal > 0) == (rb.n_normal > 0) && (ra.n_fault > 0) == (rb.n_fault > 0),
            "reports cover different subcategories in row " + ra.label);
    t.rows.push_back({ra.label, diff(ra.acc_normal(), rb.acc_normal()), diff(ra.acc_fault(), rb.acc_fault()),
                      diff(ra.acc_average(), rb.acc_average())});
  };
  for (std::size_t i = 0; i < a.rows.size(); ++i) row(a.rows[i], b.rows[i]);
  row(a.overall, b.overall);
  return t;
}

// ---- output ----------------------------------------------------------------

inline nlohmann::json opt_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json row_to_json(const AccuracyRow& r) {
  return {{"equipment_type", r.label},     {"acc_normal", opt_json(r.acc_normal())},
          {"acc_fault", opt_json(r.acc_fault())}, {"acc_average", opt_json(r.acc_average())},
          {"n_normal", r.n_normal},         {"n_fault", r.n_fault},
          {"correct_normal", r.correct_normal}, {"correct_fault", r.correct_fault}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(row_to_json(row));
  return {{"mode", std::string(to_string(r.mode))}, {"alpha", r.alpha}, {"seed", r.seed},
          {"rows", rows}, {"overall", row_to_json(r.overall)}, {"config_hash", r.config_hash}};
}

inline nlohmann::json to_json(const DeltaTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"equipment_type", r.label}, {"delta_normal", opt_json(r.normal)},
                    {"delta_fault", opt_json(r.fault)}, {"delta_average", opt_json(r.average)}});
  return {{"rows", rows}};
}

namespace detail {

inline std::string cell(std::optional<double> v, bool signed_value = false) {
  char buf[32];
  if (!v) return "    -  ";
  std::snprintf(buf, sizeof(buf), signed_value ? "%+7.3f" : "%7.3f", *v);
  return buf;
}

inline std::string table_line(const std::string& label, const std::string& a, const std::string& b, const std::string& c) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-22s %8s %8s %8s\n", label.c_str(), a.c_str(), b.c_str(), c.c_str());
  return buf;
}

}  // namespace detail

inline std::string format_table(const EvalReport& r) {
  char head[160];
  std::snprintf(head, sizeof(head), "Recognition accuracy (%s, alpha=%.4g, seed=%llu, config %s)\n",
                std::string(to_string(r.mode)).c_str(), r.alpha, static_cast<unsigned long long>(r.seed),
                r.config_hash.c_str());
  std::string out = head;
  out += detail::table_line("type", "normal", "fault", "average");
  for (const auto& row : r.rows)
    out += detail::table_line(row.label, detail::cell(row.acc_normal()), detail::cell(row.acc_fault()), detail::cell(row.acc_average()));
  out += detail::table_line(r.overall.label, detail::cell(r.overall.acc_normal()), detail::cell(r.overall.acc_fault()),
                            detail::cell(r.overall.acc_average()));
  return out;
}

inline std::string format_table(const DeltaTable& t) {
  std::string out = "Accuracy change (b - a)\n";
  out += detail::table_line("type", "normal", "fault", "average");
  for (const auto& r : t.rows)
    out += detail::table_line(r.label, detail::cell(r.normal, true), detail::cell(r.fault, true), detail::cell(r.average, true));
  return out;
}

}  // namespace thermoproto
