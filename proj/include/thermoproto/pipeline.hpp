#pragma once

// Glue between the stages: region -> feature record -> (embedder, prototype
// model) -> predictions. Both the command-line tool and the evaluation
// harness go through these functions, so a file-mediated run and an
// in-memory run compute identical numbers.

#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "thermoproto/density.hpp"
#include "thermoproto/embedding.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/manifest.hpp"
#include "thermoproto/prototype.hpp"
#include "thermoproto/subcategory.hpp"
#include "thermoproto/thermal.hpp"

namespace thermoproto {

enum class Split { Labeled, Unlabeled, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Labeled: return "labeled";
    case Split::Unlabeled: return "unlabeled";
    case Split::Test: return "test";
  }
  return "unknown";
}

inline Split parse_split(std::string_view s) {
  if (s == "labeled") return Split::Labeled;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "test") return Split::Test;
  throw ValidationError("unknown split \"" + std::string(s) + "\"");
}

enum class Mode { Supervised, Weak };

inline std::string_view to_string(Mode m) { return m == Mode::Supervised ? "supervised" : "weak"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "supervised") return Mode::Supervised;
  if (s == "weak") return Mode::Weak;
  throw ValidationError("unknown mode \"" + std::string(s) + "\"");
}

struct FeatureRecord {
  Split split = Split::Labeled;
  RegionAnnotation region;
  PdfFeature feature;

  std::optional<SubcategoryId> label() const {
    if (!region.status) return std::nullopt;
    return SubcategoryId{region.equipment_type, *region.status};
  }
};

// One record per region, in manifest order: labeled, unlabeled, test.
inline std::vector<FeatureRecord> extract_records(const Dataset& ds, const FeatureGrid& grid, BandwidthPolicy bandwidth) {
  grid.validate();
  if (bandwidth) require(*bandwidth > 0.0 && std::isfinite(*bandwidth), "bandwidth must be > 0");
  std::vector<FeatureRecord> out;
  auto run = [&](const std::vector<RegionAnnotation>& list, Split split) {
    for (const auto& r : list) {
      const auto samples = extract_region(ds.image(r.image_ref), r.bbox);
      out.push_back({split, r, feature_vector(samples, grid, bandwidth)});
    }
  };
  run(ds.manifest.labeled, Split::Labeled);
  run(ds.manifest.unlabeled, Split::Unlabeled);
  run(ds.manifest.test, Split::Test);
  return out;
}

// ---- JSON lines ------------------------------------------------------------

inline nlohmann::json to_json(const FeatureRecord& r) {
  nlohmann::json j;
  j["split"] = std::string(to_string(r.split));
  j["image_ref"] = r.region.image_ref;
  j["bbox"] = {r.region.bbox.x, r.region.bbox.y, r.region.bbox.w, r.region.bbox.h};
  j["equipment_type"] = std::string(to_string(r.region.equipment_type));
  j["status"] = r.region.status ? nlohmann::json(std::string(to_string(*r.region.status))) : nlohmann::json(nullptr);
  j["feature"] = to_json(r.feature);
  return j;
}

inline FeatureRecord feature_record_from_json(const nlohmann::json& j) {
  FeatureRecord r;
  try {
    r.split = parse_split(j.at("split").get<std::string>());
    r.region = detail::region_from_json(j);
    r.feature = pdf_feature_from_json(j.at("feature"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed feature record: ") + e.what());
  }
  if (r.split == Split::Unlabeled) r.region.status.reset();
  require(r.split == Split::Unlabeled || r.region.status.has_value(), "labeled and test records need a status");
  return r;
}

inline std::string format_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& row : rows) out += row.dump() + "\n";
  return out;
}

inline std::vector<nlohmann::json> parse_jsonl(std::string_view text, const std::string& name) {
  std::vector<nlohmann::json> rows;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    auto line = text.substr(start, nl - start);
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(name, line_no, 0, e.what());
    }
  }
  return rows;
}

inline std::vector<FeatureRecord> read_feature_records(const std::string& path) {
  std::vector<FeatureRecord> out;
  std::size_t line = 0;
  for (const auto& row : parse_jsonl(read_file(path), path)) {
    ++line;
    try {
      out.push_back(feature_record_from_json(row));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

inline void write_feature_records(const std::vector<FeatureRecord>& records, const std::string& path) {
  std::vector<nlohmann::json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_file(path, format_jsonl(rows));
}

// ---- training and inference ------------------------------------------------

struct TrainOptions {
  Mode mode = Mode::Weak;
  double alpha = 0.5;
  int refine_iterations = 1;
  EmbedderKind embedder = EmbedderKind::Identity;
  EmbedderTrainConfig embedder_config;

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(refine_iterations >= 1, "refine iterations must be >= 1");
    if (embedder == EmbedderKind::Mlp) embedder_config.validate();
  }
};

struct TrainedModel {
  Embedder embedder;
  PrototypeModel model;
  std::vector<double> embedder_losses;
};

// Classes are those with labeled records plus any that appear in test
// records; a test class without labeled samples is an error. Supervised mode
// ignores unlabeled records and stores alpha = 1.
inline TrainedModel train_model(const std::vector<FeatureRecord>& records, const TrainOptions& opt) {
  opt.validate();
  std::vector<LabeledVector> labeled;
  std::vector<Vector> unlabeled_raw;
  std::set<SubcategoryId> required;
  for (const auto& r : records) {
    if (r.split == Split::Labeled) labeled.push_back({r.feature.values, *r.label()});
    else if (r.split == Split::Unlabeled) unlabeled_raw.push_back(r.feature.values);
    else required.insert(*r.label());
  }
  require(!labeled.empty(), "training needs at least one labeled record");

  Embedder embedder = Embedder::identity();
  std::vector<double> losses;
  if (opt.embedder == EmbedderKind::Mlp) {
    auto trained = train_embedder(labeled, opt.embedder_config);
    embedder = std::move(trained.embedder);
    losses = std::move(trained.episode_losses);
    for (auto& lv : labeled) lv.v = embedder(lv.v);
  }
  const std::vector<SubcategoryId> required_list(required.begin(), required.end());
  auto model = compute_centers(labeled, required_list, opt.mode == Mode::Supervised ? 1.0 : opt.alpha);
  if (opt.mode == Mode::Weak && !unlabeled_raw.empty()) {
    std::vector<Vector> unlabeled;
    unlabeled.reserve(unlabeled_raw.size());
    for (const auto& v : unlabeled_raw) unlabeled.push_back(embedder(v));
    model = refine_centers(model, unlabeled, opt.refine_iterations);
  }
  return {std::move(embedder), std::move(model), std::move(losses)};
}

inline Posterior classify_record(const FeatureRecord& r, const Embedder& embedder, const PrototypeModel& model) {
  return classify(embedder(r.feature.values), model);
}

inline nlohmann::json prediction_to_json(const FeatureRecord& r, const Posterior& p, const PrototypeModel& model) {
  nlohmann::json j;
  j["split"] = std::string(to_string(r.split));
  j["image_ref"] = r.region.image_ref;
  j["bbox"] = {r.region.bbox.x, r.region.bbox.y, r.region.bbox.w, r.region.bbox.h};
  j["equipment_type"] = std::string(to_string(r.region.equipment_type));
  j["status"] = r.region.status ? nlohmann::json(std::string(to_string(*r.region.status))) : nlohmann::json(nullptr);
  j["predicted"] = {{"equipment_type", std::string(to_string(p.predicted.equipment_type))},
                    {"status", std::string(to_string(p.predicted.status))}};
  nlohmann::json post = nlohmann::json::array();
  for (std::size_t k = 0; k < p.probs.size(); ++k)
    post.push_back({{"equipment_type", std::string(to_string(model.classes()[k].equipment_type))},
                    {"status", std::string(to_string(model.classes()[k].status))},
                    {"prob", p.probs[k]}});
  j["posterior"] = std::move(post);
  return j;
}

}  // namespace thermoproto
