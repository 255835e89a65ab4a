// Canonical text-line entities for one document page, plus JSON round-trip.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "syndoc/geometry.hpp"

namespace syndoc {

enum class EntitySource { ocr, pdf };

inline std::string to_string(EntitySource s) {
  return s == EntitySource::ocr ? "ocr" : "pdf";
}

struct TextLineEntity {
  int id = 0;
  BBox bbox;
  std::string content;
  EntitySource source = EntitySource::ocr;
  // Semantic kind reported by PDF parsers (paragraph, list, section, ...).
  // Stored for completeness; nothing downstream consumes it yet.
  std::string kind;
};

struct EntitySet {
  std::string doc_id;
  int page_width_px = 0;
  int page_height_px = 0;
  std::vector<TextLineEntity> entities;
  std::string image_path;

  bool empty() const { return entities.empty(); }
};

inline nlohmann::json to_json(const BBox& b) {
  return nlohmann::json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

inline BBox bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("bbox must be [x0,y0,x1,y1]");
  return BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline nlohmann::json to_json(const EntitySet& set) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& e : set.entities) {
    nlohmann::json le{{"id", e.id},
                      {"bbox", to_json(e.bbox)},
                      {"content", e.content},
                      {"source", to_string(e.source)}};
    if (!e.kind.empty()) le["kind"] = e.kind;
    lines.push_back(std::move(le));
  }
  return nlohmann::json{{"doc_id", set.doc_id},
                        {"page_size", {set.page_width_px, set.page_height_px}},
                        {"image", set.image_path},
                        {"entities", std::move(lines)}};
}

inline EntitySet entity_set_from_json(const nlohmann::json& j) {
  EntitySet set;
  set.doc_id = j.at("doc_id").get<std::string>();
  set.page_width_px = j.at("page_size").at(0).get<int>();
  set.page_height_px = j.at("page_size").at(1).get<int>();
  set.image_path = j.value("image", std::string());
  for (const auto& le : j.at("entities")) {
    TextLineEntity e;
    e.id = le.at("id").get<int>();
    e.bbox = bbox_from_json(le.at("bbox"));
    e.content = le.at("content").get<std::string>();
    e.source = le.at("source").get<std::string>() == "pdf" ? EntitySource::pdf
                                                           : EntitySource::ocr;
    e.kind = le.value("kind", std::string());
    set.entities.push_back(std::move(e));
  }
  return set;
}

}  // namespace syndoc
