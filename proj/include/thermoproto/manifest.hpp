#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/thermal.hpp"

namespace thermoproto {

struct ImageEntry {
  std::string id;
  std::string path;  // relative to the manifest's image root
};

// Labeled set S, unlabeled query set Q, and the held-out test set.
struct DatasetManifest {
  std::vector<ImageEntry> images;
  std::vector<RegionAnnotation> labeled;
  std::vector<RegionAnnotation> unlabeled;
  std::vector<RegionAnnotation> test;
};

// Manifest together with every image it references, already parsed.
struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, ThermalImage> images;

  const ThermalImage& image(const std::string& id) const {
    auto it = images.find(id);
    if (it == images.end()) throw ValidationError("unknown image_ref \"" + id + "\"");
    return it->second;
  }
};

namespace detail {

inline nlohmann::json region_to_json(const RegionAnnotation& r) {
  nlohmann::json j;
  j["image_ref"] = r.image_ref;
  j["bbox"] = {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h};
  j["equipment_type"] = std::string(to_string(r.equipment_type));
  j["status"] = r.status ? nlohmann::json(std::string(to_string(*r.status))) : nlohmann::json(nullptr);
  return j;
}

inline RegionAnnotation region_from_json(const nlohmann::json& j) {
  RegionAnnotation r;
  try {
    r.image_ref = j.at("image_ref").get<std::string>();
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw ValidationError("bbox must be [x,y,w,h]");
    r.bbox = BoundingBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    r.equipment_type = parse_equipment_type(j.at("equipment_type").get<std::string>());
    if (j.contains("status") && !j.at("status").is_null()) r.status = parse_status(j.at("status").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed region: ") + e.what());
  }
  if (r.bbox.w < 1 || r.bbox.h < 1) throw ValidationError("bbox " + describe(r.bbox) + " has non-positive size");
  return r;
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& img : m.images) j["images"].push_back({{"id", img.id}, {"path", img.path}});
  auto regions = [](const std::vector<RegionAnnotation>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : list) arr.push_back(detail::region_to_json(r));
    return arr;
  };
  j["labeled"] = regions(m.labeled);
  j["unlabeled"] = regions(m.unlabeled);
  j["test"] = regions(m.test);
  return j;
}

// Builds a manifest from JSON. A region without a status is unlabeled no
// matter which list it was listed under; a status given in the unlabeled list
// is dropped.
inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    for (const auto& img : j.at("images")) m.images.push_back({img.at("id").get<std::string>(), img.at("path").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed images list: ") + e.what());
  }
  auto read_list = [&](const char* key) {
    std::vector<RegionAnnotation> out;
    if (!j.contains(key)) return out;
    for (const auto& r : j.at(key)) out.push_back(detail::region_from_json(r));
    return out;
  };
  for (auto& r : read_list("labeled")) (r.status ? m.labeled : m.unlabeled).push_back(std::move(r));
  for (auto& r : read_list("unlabeled")) {
    r.status.reset();
    m.unlabeled.push_back(std::move(r));
  }
  for (auto& r : read_list("test")) (r.status ? m.test : m.unlabeled).push_back(std::move(r));
  return m;
}

// Structural invariants that do not need the pixel data: known image ids,
// disjoint splits, and every test subcategory present in the labeled set.
inline void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> ids;
  for (const auto& img : m.images)
    if (!ids.insert(img.id).second) throw ValidationError("duplicate image id \"" + img.id + "\"");

  std::set<std::tuple<std::string, BoundingBox>> seen;
  auto check = [&](const std::vector<RegionAnnotation>& list, const char* split) {
    for (const auto& r : list) {
      if (!ids.count(r.image_ref))
        throw ValidationError(std::string(split) + " region references unknown image \"" + r.image_ref + "\"");
      if (!seen.emplace(r.image_ref, r.bbox).second)
        throw ValidationError("region " + r.image_ref + " " + describe(r.bbox) + " appears more than once across splits");
    }
  };
  check(m.labeled, "labeled");
  check(m.unlabeled, "unlabeled");
  check(m.test, "test");

  std::set<std::pair<EquipmentType, Status>> labeled_classes;
  for (const auto& r : m.labeled) labeled_classes.emplace(r.equipment_type, *r.status);
  for (const auto& r : m.test)
    if (!labeled_classes.count({r.equipment_type, *r.status}))
      throw ValidationError("test subcategory " + std::string(to_string(r.equipment_type)) + "/" +
                            std::string(to_string(*r.status)) + " has no labeled samples");
}

// Parses the manifest, loads every referenced RTM image relative to
// image_root, and checks that every box lies inside its image.
inline Dataset load_dataset(const std::string& manifest_path, const std::string& image_root) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(manifest_path + ": " + e.what());
  }
  Dataset ds;
  ds.manifest = manifest_from_json(j);
  validate_manifest(ds.manifest);
  for (const auto& entry : ds.manifest.images) {
    const auto full = (std::filesystem::path(image_root) / entry.path).string();
    ds.images.emplace(entry.id, load_thermal(full, entry.id));
  }
  auto check_boxes = [&](const std::vector<RegionAnnotation>& list) {
    for (const auto& r : list)
      if (!ds.image(r.image_ref).contains(r.bbox))
        throw ValidationError("bbox " + describe(r.bbox) + " lies outside image \"" + r.image_ref + "\"");
  };
  check_boxes(ds.manifest.labeled);
  check_boxes(ds.manifest.unlabeled);
  check_boxes(ds.manifest.test);
  return ds;
}

inline Dataset load_dataset(const std::string& manifest_path) {
  auto root = std::filesystem::path(manifest_path).parent_path().string();
  return load_dataset(manifest_path, root.empty() ? "." : root);
}

inline DatasetManifest load_manifest(const std::string& path, const std::string& image_root) {
  return load_dataset(path, image_root).manifest;
}

}  // namespace thermoproto
