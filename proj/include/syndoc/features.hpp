// Fixed feature encoders: hashed n-gram sentence vectors, seeded random
// projections of image crops, and grid-cell pixel features. None of these
// carry learned state; all are deterministic in their inputs.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "syndoc/entities.hpp"
#include "syndoc/geometry.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/image.hpp"
#include "syndoc/rng.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

inline constexpr int kVisualPatchSide = 16;
inline constexpr int kGridCellSide = 8;
inline constexpr int kMinCropSide = 4;

// Hashed bag of word unigrams and character trigrams with sign hashing,
// L2-normalized. Case-sensitive: sentence identity matters more than
// match folding here.
inline Eigen::VectorXd embed_sentence(std::string_view text, int dim) {
  if (dim <= 0) throw std::invalid_argument("embed_sentence: dim must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  auto add_feature = [&](std::string_view feat) {
    const std::uint64_t h = fnv1a64(feat);
    const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim));
    const double sign = ((h >> 61) & 1u) ? 1.0 : -1.0;
    v[bucket] += sign;
  };
  const std::string norm = normalize_whitespace(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    if (end > start) add_feature(std::string_view(norm).substr(start, end - start));
    start = end + 1;
  }
  if (norm.size() >= 3) {
    for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
      add_feature(std::string_view(norm).substr(i, 3));
    }
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

namespace detail {

// Fixed projection matrices are derived from a constant seed, so every
// process maps pixels to the same subspace.
inline const Eigen::MatrixXd& visual_projection(int dim) {
  static std::mutex mu;
  static std::map<int, Eigen::MatrixXd> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(dim);
  if (it != cache.end()) return it->second;
  Rng rng(0x5eedf00dULL);
  const int in_dim = kVisualPatchSide * kVisualPatchSide;
  Eigen::MatrixXd m(in_dim, dim);
  for (int r = 0; r < in_dim; ++r) {
    for (int c = 0; c < dim; ++c) m(r, c) = rng.gaussian() / std::sqrt(in_dim);
  }
  return cache.emplace(dim, std::move(m)).first->second;
}

inline void canonical_to_pixels(const BBox& bbox, int page_w, int page_h,
                                int& x0, int& y0, int& x1, int& y1) {
  x0 = static_cast<int>(bbox.x_min * page_w / kCoordScale);
  x1 = static_cast<int>(bbox.x_max * page_w / kCoordScale);
  y0 = static_cast<int>(bbox.y_min * page_h / kCoordScale);
  y1 = static_cast<int>(bbox.y_max * page_h / kCoordScale);
}

}  // namespace detail

// Visual embedding of an entity crop: resize to a fixed patch, project with
// a seeded matrix. Crops smaller than 4x4 pixels carry no signal and map to
// the zero vector, as does a missing page image.
inline Eigen::VectorXd embed_visual(const Gray8& page, const BBox& bbox,
                                    int page_w, int page_h, int dim) {
  if (dim <= 0) throw std::invalid_argument("embed_visual: dim must be positive");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
  if (page.empty() || page_w <= 0 || page_h <= 0) return out;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  detail::canonical_to_pixels(bbox, page_w, page_h, x0, y0, x1, y1);
  if (x1 - x0 < kMinCropSide || y1 - y0 < kMinCropSide) return out;
  const Gray8 region = crop(page, x0, y0, x1, y1);
  if (region.width < kMinCropSide || region.height < kMinCropSide) return out;
  const Gray8 patch = resize(region, kVisualPatchSide, kVisualPatchSide);
  Eigen::VectorXd flat(kVisualPatchSide * kVisualPatchSide);
  for (int i = 0; i < kVisualPatchSide * kVisualPatchSide; ++i) {
    flat[i] = patch.pixels[static_cast<std::size_t>(i)] / 255.0;
  }
  out = detail::visual_projection(dim).transpose() * flat;
  return out;
}

// Pixel features for one grid cell: the cell's image region resized to 8x8,
// scaled to [0,1], row-major. Missing image yields zeros, which keeps grid
// tokens position-only for text-only documents.
inline Eigen::VectorXd grid_cell_pixels(const Gray8& page, const GridSpec& spec,
                                        int row, int col) {
  if (row < 0 || row >= spec.rows || col < 0 || col >= spec.cols) {
    throw std::invalid_argument("grid_cell_pixels: cell out of range");
  }
  const int n = kGridCellSide * kGridCellSide;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (page.empty()) return out;
  const int x0 = col * page.width / spec.cols;
  const int x1 = (col + 1) * page.width / spec.cols;
  const int y0 = row * page.height / spec.rows;
  const int y1 = (row + 1) * page.height / spec.rows;
  if (x1 <= x0 || y1 <= y0) return out;
  const Gray8 cell = resize(crop(page, x0, y0, x1, y1), kGridCellSide, kGridCellSide);
  for (int i = 0; i < n; ++i) out[i] = cell.pixels[static_cast<std::size_t>(i)] / 255.0;
  return out;
}

}  // namespace syndoc
