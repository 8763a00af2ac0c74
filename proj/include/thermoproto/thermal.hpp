#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "thermoproto/error.hpp"

namespace thermoproto {

enum class EquipmentType : int {
  Transformer = 0,
  Bushing = 1,
  VoltageTransformer = 2,
  CurrentTransformer = 3,
  Arrester = 4,
};

enum class Status : int { Normal = 0, Fault = 1 };

inline constexpr std::array<EquipmentType, 5> kEquipmentTypes = {
    EquipmentType::Transformer, EquipmentType::Bushing, EquipmentType::VoltageTransformer,
    EquipmentType::CurrentTransformer, EquipmentType::Arrester};

inline constexpr std::array<Status, 2> kStatuses = {Status::Normal, Status::Fault};

inline std::string_view to_string(EquipmentType type) {
  switch (type) {
    case EquipmentType::Transformer: return "transformer";
    case EquipmentType::Bushing: return "bushing";
    case EquipmentType::VoltageTransformer: return "voltage_transformer";
    case EquipmentType::CurrentTransformer: return "current_transformer";
    case EquipmentType::Arrester: return "arrester";
  }
  return "unknown";
}

inline std::string_view to_string(Status status) {
  return status == Status::Normal ? "normal" : "fault";
}

inline EquipmentType parse_equipment_type(std::string_view s) {
  for (auto type : kEquipmentTypes)
    if (to_string(type) == s) return type;
  throw ValidationError("unknown equipment_type \"" + std::string(s) + "\"");
}

inline Status parse_status(std::string_view s) {
  if (s == "normal") return Status::Normal;
  if (s == "fault") return Status::Fault;
  throw ValidationError("unknown status \"" + std::string(s) + "\"");
}

// Pixel rectangle; (x, y) is the top-left corner, x runs along a row.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::size_t area() const { return static_cast<std::size_t>(w) * static_cast<std::size_t>(h); }
  auto operator<=>(const BoundingBox&) const = default;
};

// Row-major matrix of calibrated temperatures in degrees Celsius.
class ThermalImage {
 public:
  ThermalImage(int width, int height, std::vector<double> temps, std::string source_id = {})
      : width_(width), height_(height), temps_(std::move(temps)), source_id_(std::move(source_id)) {
    require(width_ >= 1 && height_ >= 1, "thermal image dimensions must be at least 1x1");
    require(temps_.size() == static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_),
            "thermal image has " + std::to_string(temps_.size()) + " values, expected " +
                std::to_string(static_cast<std::size_t>(width_) * height_));
    for (double t : temps_) require(std::isfinite(t), "thermal image contains a non-finite temperature");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const std::string& source_id() const { return source_id_; }
  const std::vector<double>& temps() const { return temps_; }

  double at(int x, int y) const {
    return temps_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }

  double min_temp() const { return *std::min_element(temps_.begin(), temps_.end()); }
  double max_temp() const { return *std::max_element(temps_.begin(), temps_.end()); }

  bool contains(const BoundingBox& box) const {
    return box.w >= 1 && box.h >= 1 && box.x >= 0 && box.y >= 0 &&
           static_cast<long long>(box.x) + box.w <= width_ &&
           static_cast<long long>(box.y) + box.h <= height_;
  }

 private:
  int width_;
  int height_;
  std::vector<double> temps_;
  std::string source_id_;
};

struct RegionAnnotation {
  std::string image_ref;
  BoundingBox bbox;
  EquipmentType equipment_type = EquipmentType::Transformer;
  std::optional<Status> status;  // absent exactly when unlabeled
};

inline std::string describe(const BoundingBox& b) {
  return "[" + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) + "," +
         std::to_string(b.h) + "]";
}

// Temperatures inside the box, row-major.
inline std::vector<double> extract_region(const ThermalImage& img, const BoundingBox& box) {
  if (!img.contains(box))
    throw ValidationError("bbox " + describe(box) + " is outside image \"" + img.source_id() + "\" (" +
                          std::to_string(img.width()) + "x" + std::to_string(img.height()) + ")");
  std::vector<double> out;
  out.reserve(box.area());
  for (int y = box.y; y < box.y + box.h; ++y)
    for (int x = box.x; x < box.x + box.w; ++x) out.push_back(img.at(x, y));
  return out;
}

// ---- RTM text format -------------------------------------------------------
//
//   line 1       "width,height"
//   lines 2..    height rows of width comma-separated decimal temperatures
//
// Numbers are written with 17 significant digits, so a save/load cycle is
// exact. Parsing and formatting go through <charconv> and ignore the locale.

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, ptr);
}

template <typename T>
bool parse_number(std::string_view cell, T& value) {
  if (cell.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars rejects a leading '+', which is fine for this format.
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value, std::chars_format::general);
    return ec == std::errc() && ptr == cell.data() + cell.size();
  } else {
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    return ec == std::errc() && ptr == cell.data() + cell.size();
  }
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

inline ThermalImage parse_rtm(std::string_view text, const std::string& name, std::string source_id = {}) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      lines.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
  }
  if (lines.empty()) throw ParseError(name, 1, 0, "empty file, expected \"width,height\" header");

  auto header = detail::split_commas(lines[0]);
  int width = 0, height = 0;
  if (header.size() != 2 || !detail::parse_number(header[0], width) || !detail::parse_number(header[1], height))
    throw ParseError(name, 1, 0, "malformed header, expected \"width,height\"");
  if (width < 1 || height < 1) throw ParseError(name, 1, 0, "image dimensions must be positive");

  if (lines.size() - 1 != static_cast<std::size_t>(height))
    throw ParseError(name, std::min(lines.size(), static_cast<std::size_t>(height) + 1) + 1, 0,
                     "expected " + std::to_string(height) + " rows, found " + std::to_string(lines.size() - 1));

  std::vector<double> temps;
  temps.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int row = 0; row < height; ++row) {
    const std::size_t line_no = static_cast<std::size_t>(row) + 2;
    auto cells = detail::split_commas(lines[static_cast<std::size_t>(row) + 1]);
    if (cells.size() != static_cast<std::size_t>(width))
      throw ParseError(name, line_no, 0,
                       "row length " + std::to_string(cells.size()) + " does not match width " + std::to_string(width));
    for (std::size_t col = 0; col < cells.size(); ++col) {
      double v = 0.0;
      if (!detail::parse_number(cells[col], v))
        throw ParseError(name, line_no, col + 1, "non-numeric cell \"" + std::string(cells[col]) + "\"");
      if (!std::isfinite(v)) throw ParseError(name, line_no, col + 1, "non-finite temperature");
      temps.push_back(v);
    }
  }
  return ThermalImage(width, height, std::move(temps), std::move(source_id));
}

inline std::string format_rtm(const ThermalImage& img) {
  std::string out;
  out.reserve(static_cast<std::size_t>(img.width()) * img.height() * 20 + 32);
  out += std::to_string(img.width()) + "," + std::to_string(img.height()) + "\n";
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (x > 0) out += ',';
      detail::append_double(out, img.at(x, y));
    }
    out += '\n';
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path);
  return std::move(ss).str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing " + path);
}

inline ThermalImage load_thermal(const std::string& path, std::string source_id = {}) {
  return parse_rtm(read_file(path), path, source_id.empty() ? path : std::move(source_id));
}

inline void save_thermal(const ThermalImage& img, const std::string& path) { write_file(path, format_rtm(img)); }

}  // namespace thermoproto
