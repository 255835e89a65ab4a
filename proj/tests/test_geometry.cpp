// Canonical coordinates, grid cells, and 3x3 region labels.
#include <catch2/catch_amalgamated.hpp>

#include "syndoc/geometry.hpp"
#include "syndoc/rng.hpp"

using namespace syndoc;

TEST_CASE("bbox validity") {
  CHECK(BBox{0, 0, 1, 1}.valid());
  CHECK(BBox{0, 0, 1000, 1000}.valid());
  CHECK(BBox{5, 0, 5, 10}.valid());          // zero extent is in range; parsers widen it
  CHECK(BBox{0, 9, 10, 9}.valid());
  CHECK_FALSE(BBox{10, 0, 5, 10}.valid());   // inverted
  CHECK_FALSE(BBox{-1, 0, 10, 10}.valid());  // out of canonical range
  CHECK_FALSE(BBox{0, 0, 1001, 10}.valid());
}

TEST_CASE("grid spec cell count") {
  CHECK(GridSpec{3, 3}.cells() == 9);
  CHECK(GridSpec{2, 5}.cells() == 10);
  CHECK(GridSpec{1, 1}.cells() == 1);
  CHECK_FALSE(GridSpec{0, 3}.valid());
}

TEST_CASE("grid index covers the full range over random boxes") {
  Rng rng(17);
  const GridSpec grid{3, 3};
  for (int i = 0; i < 2000; ++i) {
    const int x0 = static_cast<int>(rng.bounded(999));
    const int y0 = static_cast<int>(rng.bounded(999));
    const int x1 = x0 + 1 + static_cast<int>(rng.bounded(1000 - x0 - 1 + 1));
    const int y1 = y0 + 1 + static_cast<int>(rng.bounded(1000 - y0 - 1 + 1));
    const BBox b{x0, y0, std::min(x1, 1000), std::min(y1, 1000)};
    const int cell = grid_index_of(b, grid);
    CHECK(cell >= 0);
    CHECK(cell < grid.cells());
  }
}

TEST_CASE("grid index of known cells") {
  const GridSpec grid{3, 3};
  // Centers of the nine cells of a 3x3 grid over 0..1000.
  int expected = 0;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      const int cx = col * 333 + 150;
      const int cy = row * 333 + 150;
      const BBox b{cx - 10, cy - 10, cx + 10, cy + 10};
      CHECK(grid_index_of(b, grid) == expected);
      ++expected;
    }
  }
}

TEST_CASE("grid index is row-major and center-based") {
  const GridSpec grid{3, 3};
  CHECK(grid_index_of(BBox{0, 0, 10, 10}, grid) == 0);
  CHECK(grid_index_of(BBox{990, 0, 1000, 10}, grid) == 2);
  CHECK(grid_index_of(BBox{0, 990, 10, 1000}, grid) == 6);
  CHECK(grid_index_of(BBox{990, 990, 1000, 1000}, grid) == 8);
  CHECK(grid_index_of(BBox{450, 450, 550, 550}, grid) == 4);
}

TEST_CASE("a box straddling cells lands where its center lies") {
  const GridSpec grid{3, 3};
  // Center at (400, 100): column 1, row 0.
  CHECK(grid_index_of(BBox{100, 50, 700, 150}, grid) == 1);
}

TEST_CASE("region labels name the nine sectors") {
  CHECK(to_string(assign_region(BBox{10, 10, 50, 50})) == "top-left");
  CHECK(to_string(assign_region(BBox{480, 10, 520, 50})) == "top-middle");
  CHECK(to_string(assign_region(BBox{950, 10, 990, 50})) == "top-right");
  CHECK(to_string(assign_region(BBox{10, 480, 50, 520})) == "middle-left");
  CHECK(to_string(assign_region(BBox{480, 480, 520, 520})) == "middle-middle");
  CHECK(to_string(assign_region(BBox{950, 480, 990, 520})) == "middle-right");
  CHECK(to_string(assign_region(BBox{10, 950, 50, 990})) == "bottom-left");
  CHECK(to_string(assign_region(BBox{480, 950, 520, 990})) == "bottom-middle");
  CHECK(to_string(assign_region(BBox{950, 950, 990, 990})) == "bottom-right");
}

TEST_CASE("region round trip through strings") {
  for (int i = 0; i < 9; ++i) {
    const BBox b{(i % 3) * 333 + 100, (i / 3) * 333 + 100, (i % 3) * 333 + 120,
                 (i / 3) * 333 + 120};
    const RegionLabel r = assign_region(b);
    CHECK(region_from_string(to_string(r)).index() == r.index());
  }
}

TEST_CASE("region label matches 3x3 grid index") {
  Rng rng(23);
  const GridSpec grid{3, 3};
  for (int i = 0; i < 500; ++i) {
    const int x = static_cast<int>(rng.bounded(990));
    const int y = static_cast<int>(rng.bounded(990));
    const BBox b{x, y, x + 10, y + 10};
    CHECK(assign_region(b).index() == grid_index_of(b, grid));
  }
}

TEST_CASE("axis_cell works on doubled coordinates with lower-index ties") {
  CHECK(axis_cell(0, 3) == 0);
  CHECK(axis_cell(1998, 3) == 2);
  CHECK(axis_cell(2000, 3) == 2);   // far edge clamps into the last cell
  CHECK(axis_cell(1000, 2) == 0);   // center exactly on the boundary
  CHECK(axis_cell(1001, 2) == 1);
  // Doubled center 2000/3 per cell: the tie at one third goes down.
  CHECK(axis_cell(666, 3) == 0);
  CHECK(axis_cell(667, 3) == 1);
}
