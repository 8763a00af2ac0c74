#pragma once

#include <string>

#include "thermoproto/thermal.hpp"

namespace thermoproto {

inline constexpr int kNumSubcategories = 10;

// One of the 5 equipment types x {normal, fault}; index m = 2*type + status.
struct SubcategoryId {
  EquipmentType equipment_type = EquipmentType::Transformer;
  Status status = Status::Normal;

  int index() const { return 2 * static_cast<int>(equipment_type) + static_cast<int>(status); }

  static SubcategoryId from_index(int m) {
    require(m >= 0 && m < kNumSubcategories, "subcategory index out of range: " + std::to_string(m));
    return {static_cast<EquipmentType>(m / 2), static_cast<Status>(m % 2)};
  }

  std::string name() const { return std::string(to_string(equipment_type)) + "/" + std::string(to_string(status)); }

  bool operator==(const SubcategoryId& o) const { return index() == o.index(); }
  auto operator<=>(const SubcategoryId& o) const { return index() <=> o.index(); }
};

}  // namespace thermoproto
