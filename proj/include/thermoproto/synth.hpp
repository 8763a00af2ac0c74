#pragma once

// Deterministic synthetic thermal scenes.
//
// Every region gets its own image. Pixels outside the region are background;
// inside, a contiguous rectangle covering `hotspot_fraction` of the region is
// drawn from the hot-spot Gaussian and the rest from the ambient Gaussian.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/manifest.hpp"
#include "thermoproto/rng.hpp"
#include "thermoproto/subcategory.hpp"
#include "thermoproto/thermal.hpp"

namespace thermoproto {

struct SubcategoryModel {
  double ambient_mean = 20.0;
  double ambient_std = 1.0;
  double hotspot_mean = 20.0;
  double hotspot_std = 1.0;
  double hotspot_fraction = 0.0;
};

struct SynthConfig {
  std::array<SubcategoryModel, kNumSubcategories> models{};
  int labeled_per_class = 15;
  int unlabeled_count = 150;
  int test_count = 100;
  int image_width = 10;
  int image_height = 10;
  int region_width = 8;
  int region_height = 8;
  double background_mean = 5.0;
  double background_std = 1.0;
  std::uint64_t seed = 0;

  SubcategoryModel& model(EquipmentType type, Status status) { return models[SubcategoryId{type, status}.index()]; }
  const SubcategoryModel& model(EquipmentType type, Status status) const {
    return models[SubcategoryId{type, status}.index()];
  }

  // Default scene. Arrester and bushing
  // temperatures follow two reference measurements (13.9/15.1 and 37.8/44.0 degC);
  // the other three types sit between them. Per type, with ambient std s:
  // normal hot spot at ambient + 4s, fault hot spot at ambient + 6s, so the
  // two statuses differ by 2s. Hot spots cover 10% of the region, std s/2.
  static SynthConfig default_scene() {
    SynthConfig cfg;
    auto set = [&](EquipmentType type, double ambient, double fault_hot) {
      const double s = (fault_hot - ambient) / 6.0;
      cfg.model(type, Status::Normal) = {ambient, s, ambient + 4.0 * s, 0.5 * s, 0.1};
      cfg.model(type, Status::Fault) = {ambient, s, fault_hot, 0.5 * s, 0.1};
    };
    set(EquipmentType::Arrester, 13.9, 15.1);
    set(EquipmentType::CurrentTransformer, 21.0, 27.0);
    set(EquipmentType::VoltageTransformer, 27.0, 33.0);
    set(EquipmentType::Transformer, 32.0, 38.0);
    set(EquipmentType::Bushing, 37.8, 44.0);
    return cfg;
  }

  // Field-case crop of one type: the normal part is plain ambient and the
  // fault part covers half the region. Larger regions than the default.
  static SynthConfig case_study(EquipmentType type) {
    SynthConfig cfg = default_scene();
    cfg.image_width = cfg.image_height = 18;
    cfg.region_width = cfg.region_height = 16;
    cfg.model(type, Status::Normal).hotspot_fraction = 0.0;
    cfg.model(type, Status::Fault).hotspot_fraction = 0.5;
    return cfg;
  }

  void validate() const {
    require(labeled_per_class >= 0 && unlabeled_count >= 0 && test_count >= 0, "split counts must be >= 0");
    require(test_count == 0 || labeled_per_class >= 1, "test regions need at least one labeled region per subcategory");
    require(image_width >= 1 && image_height >= 1, "image size must be positive");
    require(region_width >= 1 && region_height >= 1, "region size must be positive");
    require(region_width <= image_width && region_height <= image_height, "region must fit inside the image");
    require(std::isfinite(background_mean) && background_std > 0.0, "background std must be > 0");
    for (int m = 0; m < kNumSubcategories; ++m) {
      const auto& s = models[m];
      const auto name = SubcategoryId::from_index(m).name();
      require(std::isfinite(s.ambient_mean) && std::isfinite(s.hotspot_mean), name + ": means must be finite");
      require(s.ambient_std > 0.0 && s.hotspot_std > 0.0, name + ": standard deviations must be > 0");
      require(s.hotspot_fraction >= 0.0 && s.hotspot_fraction <= 1.0, name + ": hot-spot fraction must lie in [0, 1]");
    }
    for (auto type : kEquipmentTypes)
      require(model(type, Status::Fault).hotspot_mean > model(type, Status::Normal).hotspot_mean,
              std::string(to_string(type)) + ": fault hot-spot mean must exceed the normal hot-spot mean");
  }
};

// Pixel rectangle of `fraction` of the region area, as close to the region's
// aspect ratio as integer sides allow. Zero area when fraction rounds to 0.
inline BoundingBox hotspot_extent(int region_w, int region_h, double fraction) {
  const double area = fraction * region_w * region_h;
  const long target = std::lround(area);
  if (target <= 0) return {0, 0, 0, 0};
  int w = static_cast<int>(std::lround(std::sqrt(area * region_w / region_h)));
  w = std::clamp(w, 1, region_w);
  int h = static_cast<int>(std::lround(static_cast<double>(target) / w));
  h = std::clamp(h, 1, region_h);
  return {0, 0, w, h};
}

struct SyntheticDataset {
  std::vector<ThermalImage> images;
  DatasetManifest manifest;

  Dataset to_dataset() const {
    Dataset ds;
    ds.manifest = manifest;
    for (const auto& img : images) ds.images.emplace(img.source_id(), img);
    return ds;
  }
};

inline SyntheticDataset synthesize(const SynthConfig& cfg) {
  cfg.validate();
  Xoshiro256 rng(cfg.seed);
  SyntheticDataset out;

  auto make_region = [&](SubcategoryId cls, std::vector<RegionAnnotation>& split, bool labeled) {
    char id[32];
    std::snprintf(id, sizeof(id), "img_%05zu", out.images.size());
    const auto& model = cfg.models[cls.index()];

    BoundingBox region{static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.image_width - cfg.region_width + 1))),
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.image_height - cfg.region_height + 1))),
                       cfg.region_width, cfg.region_height};
    BoundingBox hot = hotspot_extent(cfg.region_width, cfg.region_height, model.hotspot_fraction);
    if (hot.w > 0) {
      hot.x = region.x + static_cast<int>(rng.below(static_cast<std::uint64_t>(region.w - hot.w + 1)));
      hot.y = region.y + static_cast<int>(rng.below(static_cast<std::uint64_t>(region.h - hot.h + 1)));
    }
    auto inside = [](const BoundingBox& b, int x, int y) {
      return x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
    };

    std::vector<double> temps;
    temps.reserve(static_cast<std::size_t>(cfg.image_width) * cfg.image_height);
    for (int y = 0; y < cfg.image_height; ++y) {
      for (int x = 0; x < cfg.image_width; ++x) {
        if (hot.w > 0 && inside(hot, x, y))
          temps.push_back(rng.normal(model.hotspot_mean, model.hotspot_std));
        else if (inside(region, x, y))
          temps.push_back(rng.normal(model.ambient_mean, model.ambient_std));
        else
          temps.push_back(rng.normal(cfg.background_mean, cfg.background_std));
      }
    }
    out.images.emplace_back(cfg.image_width, cfg.image_height, std::move(temps), id);
    out.manifest.images.push_back({id, std::string("images/") + id + ".rtm"});

    RegionAnnotation ann{id, region, cls.equipment_type, std::nullopt};
    if (labeled) ann.status = cls.status;
    split.push_back(std::move(ann));
  };

  for (int m = 0; m < kNumSubcategories; ++m)
    for (int i = 0; i < cfg.labeled_per_class; ++i) make_region(SubcategoryId::from_index(m), out.manifest.labeled, true);
  for (int i = 0; i < cfg.unlabeled_count; ++i)
    make_region(SubcategoryId::from_index(i % kNumSubcategories), out.manifest.unlabeled, false);
  for (int i = 0; i < cfg.test_count; ++i)
    make_region(SubcategoryId::from_index(i % kNumSubcategories), out.manifest.test, true);
  return out;
}

// Writes <dir>/images/<id>.rtm and <dir>/manifest.json.
inline void write_dataset(const SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create " + (fs::path(dir) / "images").string() + ": " + ec.message());
  for (std::size_t i = 0; i < ds.images.size(); ++i)
    save_thermal(ds.images[i], (fs::path(dir) / ds.manifest.images[i].path).string());
  write_file((fs::path(dir) / "manifest.json").string(), manifest_to_json(ds.manifest).dump(2) + "\n");
}

// ---- JSON config -----------------------------------------------------------
//
// Every key is optional and overrides default_scene():
//   {"seed": u64, "image": {"width","height"}, "region": {"width","height"},
//    "background": {"mean","std"},
//    "counts": {"labeled_per_class","unlabeled","test"},
//    "subcategories": [{"equipment_type","status", "ambient_mean", ...}]}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig cfg = SynthConfig::default_scene()) {
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("image")) {
      cfg.image_width = j.at("image").value("width", cfg.image_width);
      cfg.image_height = j.at("image").value("height", cfg.image_height);
    }
    if (j.contains("region")) {
      cfg.region_width = j.at("region").value("width", cfg.region_width);
      cfg.region_height = j.at("region").value("height", cfg.region_height);
    }
    if (j.contains("background")) {
      cfg.background_mean = j.at("background").value("mean", cfg.background_mean);
      cfg.background_std = j.at("background").value("std", cfg.background_std);
    }
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      cfg.labeled_per_class = c.value("labeled_per_class", cfg.labeled_per_class);
      cfg.unlabeled_count = c.value("unlabeled", cfg.unlabeled_count);
      cfg.test_count = c.value("test", cfg.test_count);
    }
    if (j.contains("subcategories")) {
      for (const auto& s : j.at("subcategories")) {
        auto& m = cfg.model(parse_equipment_type(s.at("equipment_type").get<std::string>()),
                            parse_status(s.at("status").get<std::string>()));
        m.ambient_mean = s.value("ambient_mean", m.ambient_mean);
        m.ambient_std = s.value("ambient_std", m.ambient_std);
        m.hotspot_mean = s.value("hotspot_mean", m.hotspot_mean);
        m.hotspot_std = s.value("hotspot_std", m.hotspot_std);
        m.hotspot_fraction = s.value("hotspot_fraction", m.hotspot_fraction);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed synth config: ") + e.what());
  }
  return cfg;
}

inline nlohmann::json synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["image"] = {{"width", cfg.image_width}, {"height", cfg.image_height}};
  j["region"] = {{"width", cfg.region_width}, {"height", cfg.region_height}};
  j["background"] = {{"mean", cfg.background_mean}, {"std", cfg.background_std}};
  j["counts"] = {{"labeled_per_class", cfg.labeled_per_class}, {"unlabeled", cfg.unlabeled_count}, {"test", cfg.test_count}};
  j["subcategories"] = nlohmann::json::array();
  for (int m = 0; m < kNumSubcategories; ++m) {
    const auto id = SubcategoryId::from_index(m);
    const auto& s = cfg.models[m];
    j["subcategories"].push_back({{"equipment_type", std::string(to_string(id.equipment_type))},
                                  {"status", std::string(to_string(id.status))},
                                  {"ambient_mean", s.ambient_mean},
                                  {"ambient_std", s.ambient_std},
                                  {"hotspot_mean", s.hotspot_mean},
                                  {"hotspot_std", s.hotspot_std},
                                  {"hotspot_fraction", s.hotspot_fraction}});
  }
  return j;
}

}  // namespace thermoproto
