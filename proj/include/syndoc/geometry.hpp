// Page geometry on the canonical 0-1000 coordinate scale: bounding boxes,
// grid partitions, and the nine-region spatial vocabulary.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace syndoc {

inline constexpr int kCoordScale = 1000;

struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  bool valid() const {
    return x_min <= x_max && y_min <= y_max && x_min >= 0 && y_min >= 0 &&
           x_max <= kCoordScale && y_max <= kCoordScale;
  }
  // Center doubled, so boundary ties stay exact in integer arithmetic.
  int cx2() const { return x_min + x_max; }
  int cy2() const { return y_min + y_max; }
  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }

  bool operator==(const BBox&) const = default;
};

struct GridSpec {
  int rows = 3;
  int cols = 3;

  int cells() const { return rows * cols; }
  bool valid() const { return rows >= 1 && cols >= 1; }
};

// Maps a doubled coordinate (0..2000) to a cell index along one axis of
// `n` cells. A center exactly on a cell boundary goes to the lower index.
inline int axis_cell(int doubled_coord, int n) {
  const std::int64_t num = static_cast<std::int64_t>(doubled_coord) * n;
  const std::int64_t den = 2 * static_cast<std::int64_t>(kCoordScale);
  std::int64_t cell = num / den;
  if (num % den == 0 && cell > 0) --cell;  // boundary tie
  if (cell >= n) cell = n - 1;
  return static_cast<int>(cell);
}

inline int grid_index_of(const BBox& bbox, const GridSpec& spec) {
  if (!bbox.valid()) throw std::invalid_argument("grid_index_of: invalid bbox");
  if (!spec.valid()) throw std::invalid_argument("grid_index_of: invalid grid spec");
  const int row = axis_cell(bbox.cy2(), spec.rows);
  const int col = axis_cell(bbox.cx2(), spec.cols);
  return row * spec.cols + col;
}

enum class VerticalBand { top, middle, bottom };
enum class HorizontalBand { left, middle, right };

struct RegionLabel {
  VerticalBand vertical = VerticalBand::top;
  HorizontalBand horizontal = HorizontalBand::left;

  // Index in the 3x3 partition; equals grid_index_of under a 3x3 spec.
  int index() const {
    return static_cast<int>(vertical) * 3 + static_cast<int>(horizontal);
  }
  bool operator==(const RegionLabel&) const = default;
};

inline RegionLabel assign_region(const BBox& bbox) {
  const int idx = grid_index_of(bbox, GridSpec{3, 3});
  return RegionLabel{static_cast<VerticalBand>(idx / 3),
                     static_cast<HorizontalBand>(idx % 3)};
}

inline std::string to_string(const RegionLabel& r) {
  static const char* v[] = {"top", "middle", "bottom"};
  static const char* h[] = {"left", "middle", "right"};
  return std::string(v[static_cast<int>(r.vertical)]) + "-" +
         h[static_cast<int>(r.horizontal)];
}

inline RegionLabel region_from_string(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw std::invalid_argument("bad region: " + s);
  const std::string v = s.substr(0, dash);
  const std::string h = s.substr(dash + 1);
  RegionLabel r;
  if (v == "top") {
    r.vertical = VerticalBand::top;
  } else if (v == "middle") {
    r.vertical = VerticalBand::middle;
  } else if (v == "bottom") {
    r.vertical = VerticalBand::bottom;
  } else {
    throw std::invalid_argument("bad region: " + s);
  }
  if (h == "left") {
    r.horizontal = HorizontalBand::left;
  } else if (h == "middle") {
    r.horizontal = HorizontalBand::middle;
  } else if (h == "right") {
    r.horizontal = HorizontalBand::right;
  } else {
    throw std::invalid_argument("bad region: " + s);
  }
  return r;
}

}  // namespace syndoc
