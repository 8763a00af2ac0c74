#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"

using namespace thermoproto;
using thermoproto::testing::TempDir;

namespace {

const SubcategoryModel& model(const SynthConfig& c, EquipmentType t, Status s) { return c.model(t, s); }

// Region pixels of the first labeled region of class (t, s).
std::vector<double> first_region(const SyntheticDataset& ds, EquipmentType t, Status s) {
  for (const auto& r : ds.manifest.labeled)
    if (r.equipment_type == t && r.status == s) return extract_region(ds.to_dataset().image(r.image_ref), r.bbox);
  return {};
}

}  // namespace

TEST(SynthDefaults, CaseTemperatures) {
  const auto cfg = SynthConfig::default_scene();
  EXPECT_DOUBLE_EQ(model(cfg, EquipmentType::Arrester, Status::Normal).ambient_mean, 13.9);
  EXPECT_DOUBLE_EQ(model(cfg, EquipmentType::Arrester, Status::Fault).hotspot_mean, 15.1);
  EXPECT_DOUBLE_EQ(model(cfg, EquipmentType::Bushing, Status::Normal).ambient_mean, 37.8);
  EXPECT_DOUBLE_EQ(model(cfg, EquipmentType::Bushing, Status::Fault).hotspot_mean, 44.0);
}

TEST(SynthDefaults, ProtocolCountsAndOverlap) {
  const auto cfg = SynthConfig::default_scene();
  EXPECT_EQ(cfg.labeled_per_class * kNumSubcategories, 150);
  EXPECT_EQ(cfg.unlabeled_count, 150);
  EXPECT_EQ(cfg.test_count, 100);
  // Within each type the two statuses' hot spots are 1.5 to 2.5 ambient std apart.
  for (auto t : kEquipmentTypes) {
    const auto& n = cfg.model(t, Status::Normal);
    const auto& f = cfg.model(t, Status::Fault);
    const double sep = (f.hotspot_mean - n.hotspot_mean) / n.ambient_std;
    EXPECT_GE(sep, 1.5 - 1e-12) << to_string(t);
    EXPECT_LE(sep, 2.5 + 1e-12) << to_string(t);
  }
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Synthesize, TenSubcategoriesAndSplitSizes) {
  auto cfg = SynthConfig::default_scene();
  cfg.seed = 5;
  const auto ds = synthesize(cfg);
  EXPECT_EQ(ds.manifest.labeled.size(), 150u);
  EXPECT_EQ(ds.manifest.unlabeled.size(), 150u);
  EXPECT_EQ(ds.manifest.test.size(), 100u);
  EXPECT_EQ(ds.images.size(), 400u);
  std::set<int> labeled, test;
  for (const auto& r : ds.manifest.labeled) labeled.insert(SubcategoryId{r.equipment_type, *r.status}.index());
  for (const auto& r : ds.manifest.test) test.insert(SubcategoryId{r.equipment_type, *r.status}.index());
  EXPECT_EQ(labeled.size(), 10u);
  EXPECT_EQ(test.size(), 10u);
  for (const auto& r : ds.manifest.unlabeled) EXPECT_FALSE(r.status.has_value());
  EXPECT_NO_THROW(validate_manifest(ds.manifest));
}

TEST(Synthesize, ZeroCountGivesEmptySplit) {
  auto cfg = SynthConfig::default_scene();
  cfg.unlabeled_count = 0;
  cfg.test_count = 0;
  const auto ds = synthesize(cfg);
  EXPECT_TRUE(ds.manifest.unlabeled.empty());
  EXPECT_TRUE(ds.manifest.test.empty());
  EXPECT_EQ(ds.manifest.labeled.size(), 150u);
}

TEST(Synthesize, SameSeedIsBitIdentical) {
  auto cfg = SynthConfig::default_scene();
  cfg.seed = 123;
  const auto a = synthesize(cfg);
  const auto b = synthesize(cfg);
  ASSERT_EQ(a.images.size(), b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) EXPECT_EQ(format_rtm(a.images[i]), format_rtm(b.images[i]));
  EXPECT_EQ(manifest_to_json(a.manifest).dump(), manifest_to_json(b.manifest).dump());
  cfg.seed = 124;
  const auto c = synthesize(cfg);
  EXPECT_NE(format_rtm(a.images[0]), format_rtm(c.images[0]));
}

TEST(Synthesize, HotSpotIsOneContiguousRectangleOfTheRightArea) {
  auto cfg = SynthConfig::default_scene();
  cfg.image_width = 30;
  cfg.image_height = 24;
  cfg.region_width = 20;
  cfg.region_height = 15;
  cfg.unlabeled_count = cfg.test_count = 0;
  cfg.labeled_per_class = 3;
  for (auto& m : cfg.models) m = {0.0, 0.01, 1000.0, 0.01, 0.23};
  for (auto t : kEquipmentTypes) cfg.model(t, Status::Fault).hotspot_mean = 2000.0;
  const auto ds = synthesize(cfg);
  const auto expect = hotspot_extent(20, 15, 0.23);
  const auto full = ds.to_dataset();
  for (const auto& r : ds.manifest.labeled) {
    const auto& img = full.image(r.image_ref);
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1, count = 0;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (img.at(x, y) > 500.0) {
          ++count;
          x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
        }
    EXPECT_EQ(x1 - x0 + 1, expect.w);
    EXPECT_EQ(y1 - y0 + 1, expect.h);
    EXPECT_EQ(count, expect.w * expect.h);  // filled rectangle
    EXPECT_GE(x0, r.bbox.x);
    EXPECT_GE(y0, r.bbox.y);
    EXPECT_LE(x1, r.bbox.x + r.bbox.w - 1);
    EXPECT_LE(y1, r.bbox.y + r.bbox.h - 1);
    // Region ambient pixels near 0, background near 5.
    const auto px = extract_region(img, r.bbox);
    for (double t : px) EXPECT_TRUE(std::abs(t) < 1.0 || t > 500.0);
  }
}

TEST(Synthesize, MixtureFractionMatchesConfig) {
  auto cfg = SynthConfig::default_scene();
  cfg.image_width = cfg.image_height = 40;
  cfg.region_width = cfg.region_height = 40;
  cfg.labeled_per_class = 1;
  cfg.unlabeled_count = cfg.test_count = 0;
  const auto ds = synthesize(cfg);
  const auto& arrester = cfg.model(EquipmentType::Arrester, Status::Fault);
  const auto px = first_region(ds, EquipmentType::Arrester, Status::Fault);
  const double cut = 0.5 * (arrester.hotspot_mean + 13.9 + 2.0 * arrester.ambient_std);
  int hot = 0;
  for (double t : px) hot += t > cut;
  const auto ext = hotspot_extent(40, 40, arrester.hotspot_fraction);
  EXPECT_NEAR(hot, ext.w * ext.h, 0.02 * 1600);
  EXPECT_NEAR(static_cast<double>(ext.w * ext.h) / 1600.0, arrester.hotspot_fraction, 0.01);
}

TEST(Synthesize, ArresterNormalHistogramModeContainsAmbient) {
  auto cfg = SynthConfig::default_scene();
  cfg.image_width = cfg.image_height = 100;
  cfg.region_width = cfg.region_height = 100;
  cfg.labeled_per_class = 1;
  cfg.unlabeled_count = cfg.test_count = 0;
  cfg.seed = 17;
  const auto px = first_region(synthesize(cfg), EquipmentType::Arrester, Status::Normal);
  ASSERT_EQ(px.size(), 10000u);
  const auto h = histogram(px, 0.0, 1.0);
  const auto& p = h.probs();
  const auto mode = std::max_element(p.begin(), p.end()) - p.begin();
  const double lo = h.bin_lower(h.first_bin() + mode);
  EXPECT_LE(lo, 13.9);
  EXPECT_GT(lo + h.bin_width(), 13.9);
}

TEST(Synthesize, FaultMaxExceedsNormalAmbientAtLargeRegions) {
  auto cfg = SynthConfig::default_scene();
  cfg.image_width = cfg.image_height = 34;
  cfg.region_width = cfg.region_height = 32;
  cfg.labeled_per_class = 10;
  cfg.unlabeled_count = cfg.test_count = 0;
  cfg.seed = 4;
  const auto ds = synthesize(cfg);
  const auto full = ds.to_dataset();
  for (const auto& r : ds.manifest.labeled) {
    if (r.status != Status::Fault) continue;
    const auto px = extract_region(full.image(r.image_ref), r.bbox);
    EXPECT_GT(*std::max_element(px.begin(), px.end()), cfg.model(r.equipment_type, Status::Normal).ambient_mean);
  }
}

TEST(SynthConfig, ValidationRejectsBadModels) {
  auto bad = [](auto mutate) {
    auto c = SynthConfig::default_scene();
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](SynthConfig& c) { c.models[3].hotspot_fraction = 1.5; }).validate(), ValidationError);
  EXPECT_THROW(bad([](SynthConfig& c) { c.models[3].ambient_std = 0.0; }).validate(), ValidationError);
  EXPECT_THROW(bad([](SynthConfig& c) { c.models[2].hotspot_std = -1.0; }).validate(), ValidationError);
  EXPECT_THROW(bad([](SynthConfig& c) { c.test_count = -1; }).validate(), ValidationError);
  EXPECT_THROW(bad([](SynthConfig& c) { c.region_width = c.image_width + 1; }).validate(), ValidationError);
  EXPECT_THROW(bad([](SynthConfig& c) {
                 c.model(EquipmentType::Bushing, Status::Fault).hotspot_mean = c.model(EquipmentType::Bushing, Status::Normal).hotspot_mean;
               }).validate(),
               ValidationError);
  EXPECT_THROW(synthesize(bad([](SynthConfig& c) { c.background_std = 0.0; })), ValidationError);
}

TEST(SynthConfig, JsonRoundTripAndPartialOverride) {
  auto cfg = SynthConfig::default_scene();
  cfg.seed = 77;
  cfg.models[4].hotspot_fraction = 0.37;
  const auto j = synth_config_to_json(cfg);
  EXPECT_EQ(synth_config_to_json(synth_config_from_json(j)), j);

  const auto over = synth_config_from_json(
      {{"counts", {{"test", 20}}}, {"subcategories", {{{"equipment_type", "arrester"}, {"status", "fault"}, {"hotspot_fraction", 0.5}}}}});
  EXPECT_EQ(over.test_count, 20);
  EXPECT_EQ(over.labeled_per_class, 15);
  EXPECT_EQ(over.model(EquipmentType::Arrester, Status::Fault).hotspot_fraction, 0.5);
  EXPECT_EQ(over.model(EquipmentType::Arrester, Status::Fault).hotspot_mean, 15.1);
  EXPECT_THROW(synth_config_from_json({{"subcategories", {{{"equipment_type", "fan"}, {"status", "fault"}}}}}), ValidationError);
  EXPECT_THROW(synth_config_from_json({{"seed", "x"}}), ValidationError);
}

TEST(HotspotExtent, AreaAndShape) {
  EXPECT_EQ(hotspot_extent(8, 8, 0.0).w, 0);
  EXPECT_EQ(hotspot_extent(8, 8, 1.0), (BoundingBox{0, 0, 8, 8}));
  const auto b = hotspot_extent(8, 8, 0.1);
  EXPECT_EQ(b.w * b.h, 6);
  const auto c = hotspot_extent(16, 16, 0.5);
  EXPECT_NEAR(c.w * c.h, 128, c.w);  // nearest whole rows
}

TEST(WriteDataset, LoadsBackIdentically) {
  TempDir dir;
  auto cfg = SynthConfig::default_scene();
  cfg.labeled_per_class = 2;
  cfg.unlabeled_count = 5;
  cfg.test_count = 10;
  cfg.seed = 3;
  const auto ds = synthesize(cfg);
  write_dataset(ds, dir.path().string());
  const auto back = load_dataset(dir.file("manifest.json"));
  EXPECT_EQ(manifest_to_json(back.manifest), manifest_to_json(ds.manifest));
  for (const auto& img : ds.images) EXPECT_EQ(back.image(img.source_id()).temps(), img.temps());
}

TEST(CaseStudy, FaultPartDominatesOnlyTheChosenType) {
  const auto cfg = SynthConfig::case_study(EquipmentType::Bushing);
  EXPECT_EQ(cfg.model(EquipmentType::Bushing, Status::Normal).hotspot_fraction, 0.0);
  EXPECT_EQ(cfg.model(EquipmentType::Bushing, Status::Fault).hotspot_fraction, 0.5);
  EXPECT_EQ(cfg.model(EquipmentType::Bushing, Status::Fault).hotspot_mean, 44.0);
  EXPECT_EQ(cfg.model(EquipmentType::Arrester, Status::Fault).hotspot_fraction,
            SynthConfig::default_scene().model(EquipmentType::Arrester, Status::Fault).hotspot_fraction);
  EXPECT_NO_THROW(cfg.validate());
}
