// Normalizes OCR and PDF-parser output records into canonical entity sets:
// coordinates rescaled to 0-1000, whitespace-normalized content, reading
// order assigned, empty lines dropped.
//
// Input schemas (one JSON object per document):
//   OCR:  {"doc_id", "page": {"width", "height"}, "image"?, "lines":
//          [{"rect": [x0,y0,x1,y1]} | {"polygon": [[x,y],...]}, "text", "confidence"?]}
//   PDF:  {"doc_id", "page": {"width", "height"}, "image"?, "spans":
//          [{"bbox": [x0,y0,x1,y1]}, "text", "kind"?]}   (y measured bottom-up)
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "syndoc/entities.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline int scale_to_canonical(double v, double page_dim) {
  const double scaled = v * kCoordScale / page_dim;
  int r = static_cast<int>(std::llround(scaled));
  return std::clamp(r, 0, kCoordScale);
}

// OCR tools emit zero-area boxes for thin rules; widen to 1 unit instead
// of rejecting them.
inline void widen_degenerate(int& lo, int& hi) {
  if (lo < hi) return;
  if (hi < kCoordScale) {
    hi = lo + 1;
  } else {
    lo = hi - 1;
  }
}

inline BBox finish_bbox(int x0, int y0, int x1, int y1) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  widen_degenerate(x0, x1);
  widen_degenerate(y0, y1);
  return BBox{x0, y0, x1, y1};
}

// Reading order: top-to-bottom by 10-unit row buckets, then left-to-right.
inline void assign_reading_order(std::vector<TextLineEntity>& entities) {
  std::stable_sort(entities.begin(), entities.end(),
                   [](const TextLineEntity& a, const TextLineEntity& b) {
                     const int row_a = a.bbox.cy2() / 20;  // cy2 is 2*center
                     const int row_b = b.bbox.cy2() / 20;
                     if (row_a != row_b) return row_a < row_b;
                     return a.bbox.x_min < b.bbox.x_min;
                   });
  for (std::size_t i = 0; i < entities.size(); ++i) {
    entities[i].id = static_cast<int>(i);
  }
}

inline void read_page_header(const nlohmann::json& record, EntitySet& set) {
  set.doc_id = record.at("doc_id").get<std::string>();
  const auto& page = record.at("page");
  set.page_width_px = page.at("width").get<int>();
  set.page_height_px = page.at("height").get<int>();
  if (set.page_width_px <= 0 || set.page_height_px <= 0) {
    throw ParseError("document " + set.doc_id + ": non-positive page size");
  }
  set.image_path = record.value("image", std::string());
}

}  // namespace detail

inline EntitySet normalize_ocr(const nlohmann::json& raw_ocr) {
  EntitySet set;
  detail::read_page_header(raw_ocr, set);
  const double w = set.page_width_px;
  const double h = set.page_height_px;

  const auto& lines = raw_ocr.at("lines");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const std::string text = normalize_whitespace(line.value("text", std::string()));
    if (text.empty()) continue;

    double x0, y0, x1, y1;
    if (line.contains("rect")) {
      const auto& r = line["rect"];
      if (!r.is_array() || r.size() != 4) {
        throw ParseError("document " + set.doc_id + ": line " + std::to_string(i) +
                         ": rect must be [x0,y0,x1,y1]");
      }
      x0 = r[0].get<double>();
      y0 = r[1].get<double>();
      x1 = r[2].get<double>();
      y1 = r[3].get<double>();
    } else if (line.contains("polygon")) {
      const auto& poly = line["polygon"];
      if (!poly.is_array() || poly.empty()) {
        throw ParseError("document " + set.doc_id + ": line " + std::to_string(i) +
                         ": empty polygon");
      }
      x0 = y0 = 1e30;
      x1 = y1 = -1e30;
      for (const auto& pt : poly) {
        if (!pt.is_array() || pt.size() != 2) {
          throw ParseError("document " + set.doc_id + ": line " + std::to_string(i) +
                           ": polygon points must be [x,y]");
        }
        const double px = pt[0].get<double>();
        const double py = pt[1].get<double>();
        x0 = std::min(x0, px);
        y0 = std::min(y0, py);
        x1 = std::max(x1, px);
        y1 = std::max(y1, py);
      }
    } else {
      throw ParseError("document " + set.doc_id + ": line " + std::to_string(i) +
                       ": missing rect or polygon");
    }

    TextLineEntity e;
    e.bbox = detail::finish_bbox(
        detail::scale_to_canonical(x0, w), detail::scale_to_canonical(y0, h),
        detail::scale_to_canonical(x1, w), detail::scale_to_canonical(y1, h));
    e.content = text;
    e.source = EntitySource::ocr;
    set.entities.push_back(std::move(e));
  }
  detail::assign_reading_order(set.entities);
  return set;
}

inline EntitySet normalize_pdf(const nlohmann::json& parsed_pdf) {
  EntitySet set;
  detail::read_page_header(parsed_pdf, set);
  const double w = set.page_width_px;
  const double h = set.page_height_px;

  // A page with zero spans is a valid (flagged-empty) result, not an error.
  const auto& spans = parsed_pdf.at("spans");
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& span = spans[i];
    const std::string text = normalize_whitespace(span.value("text", std::string()));
    if (text.empty()) continue;
    const auto& b = span.at("bbox");
    if (!b.is_array() || b.size() != 4) {
      throw ParseError("document " + set.doc_id + ": span " + std::to_string(i) +
                       ": bbox must be [x0,y0,x1,y1]");
    }
    const double x0 = b[0].get<double>();
    const double y0 = b[1].get<double>();
    const double x1 = b[2].get<double>();
    const double y1 = b[3].get<double>();

    TextLineEntity e;
    // PDF y runs bottom-up; flip to top-down before rescaling.
    e.bbox = detail::finish_bbox(
        detail::scale_to_canonical(x0, w), detail::scale_to_canonical(h - y1, h),
        detail::scale_to_canonical(x1, w), detail::scale_to_canonical(h - y0, h));
    e.content = text;
    e.source = EntitySource::pdf;
    e.kind = span.value("kind", std::string());
    set.entities.push_back(std::move(e));
  }
  detail::assign_reading_order(set.entities);
  return set;
}

// Normalizing an already-canonical set is the identity apart from renumbering,
// which reading order makes stable.
inline EntitySet renormalize(const EntitySet& set) {
  EntitySet out = set;
  for (auto& e : out.entities) e.content = normalize_whitespace(e.content);
  std::erase_if(out.entities, [](const TextLineEntity& e) { return e.content.empty(); });
  detail::assign_reading_order(out.entities);
  return out;
}

}  // namespace syndoc
