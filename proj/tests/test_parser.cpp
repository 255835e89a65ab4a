// Structure parser: OCR/PDF normalization, reading order, idempotence.
#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include "syndoc/entities.hpp"
#include "syndoc/structure_parser.hpp"

using namespace syndoc;
using nlohmann::json;

namespace {

json ocr_doc() {
  return json{
      {"doc_id", "ocr1"},
      {"page", {{"width", 2000}, {"height", 1000}}},
      {"lines",
       json::array({
           {{"rect", {100.0, 100.0, 400.0, 150.0}}, {"text", "  Total   Amount: "}},
           {{"rect", {100.0, 300.0, 500.0, 360.0}}, {"text", "$12.50"}},
           {{"polygon", json::array({{1500.0, 100.0}, {1900.0, 100.0}, {1900.0, 160.0}, {1500.0, 160.0}})},
            {"text", "Date"}},
           {{"rect", {0.0, 0.0, 10.0, 10.0}}, {"text", "   "}},  // dropped: blank
       })}};
}

}  // namespace

TEST_CASE("ocr normalization rescales to the canonical range") {
  const EntitySet set = normalize_ocr(ocr_doc());
  CHECK(set.doc_id == "ocr1");
  CHECK(set.page_width_px == 2000);
  CHECK(set.page_height_px == 1000);
  REQUIRE(set.entities.size() == 3);  // blank line dropped
  for (const auto& e : set.entities) {
    CHECK(e.bbox.valid());
    CHECK(e.source == EntitySource::ocr);
  }
  // x=100 of 2000 → 50; y=100 of 1000 → 100.
  const auto& total = set.entities[0];
  CHECK(total.content == "Total Amount:");
  CHECK(total.bbox == BBox{50, 100, 200, 150});
}

TEST_CASE("ocr polygon lines take their bounding box") {
  const EntitySet set = normalize_ocr(ocr_doc());
  const auto& date = set.entities[1];
  CHECK(date.content == "Date");
  CHECK(date.bbox == BBox{750, 100, 950, 160});
}

TEST_CASE("reading order is top to bottom, left to right") {
  // Total sits in row bucket 12 (cy2 250), Date in 13 (cy2 260), the amount
  // far below; renumbered ids follow that order.
  const EntitySet set = normalize_ocr(ocr_doc());
  REQUIRE(set.entities.size() == 3);
  CHECK(set.entities[0].content == "Total Amount:");
  CHECK(set.entities[1].content == "Date");
  CHECK(set.entities[2].content == "$12.50");
  for (std::size_t i = 0; i < set.entities.size(); ++i) {
    CHECK(set.entities[i].id == static_cast<int>(i));
  }
}

TEST_CASE("same-band entities order left to right") {
  const json doc{{"doc_id", "row"},
                 {"page", {{"width", 1000}, {"height", 1000}}},
                 {"lines", json::array({
                               {{"rect", {600.0, 100.0, 700.0, 120.0}}, {"text", "right"}},
                               {{"rect", {50.0, 102.0, 150.0, 122.0}}, {"text", "left"}},
                           })}};
  const EntitySet set = normalize_ocr(doc);
  REQUIRE(set.entities.size() == 2);
  CHECK(set.entities[0].content == "left");
  CHECK(set.entities[1].content == "right");
}

TEST_CASE("pdf normalization flips the y axis") {
  const json doc{
      {"doc_id", "pdf1"},
      {"page", {{"width", 1000}, {"height", 1000}}},
      {"spans", json::array({
                    // In PDF space y runs bottom-up: y0=900..950 is near the top.
                    {{"bbox", {100.0, 900.0, 300.0, 950.0}}, {"text", "Header"}, {"kind", "title"}},
                    {{"bbox", {100.0, 50.0, 300.0, 100.0}}, {"text", "Footer"}},
                })}};
  const EntitySet set = normalize_pdf(doc);
  REQUIRE(set.entities.size() == 2);
  CHECK(set.entities[0].content == "Header");
  CHECK(set.entities[0].bbox == BBox{100, 50, 300, 100});
  CHECK(set.entities[0].kind == "title");
  CHECK(set.entities[1].content == "Footer");
  CHECK(set.entities[1].bbox == BBox{100, 900, 300, 950});
  CHECK(set.entities[0].source == EntitySource::pdf);
}

TEST_CASE("pdf with zero spans is a valid empty set") {
  const json doc{{"doc_id", "blank"},
                 {"page", {{"width", 100}, {"height", 100}}},
                 {"spans", json::array()}};
  const EntitySet set = normalize_pdf(doc);
  CHECK(set.empty());
  CHECK(set.doc_id == "blank");
}

TEST_CASE("degenerate boxes are widened, not rejected") {
  const json doc{{"doc_id", "thin"},
                 {"page", {{"width", 1000}, {"height", 1000}}},
                 {"lines", json::array({
                               {{"rect", {500.0, 200.0, 500.0, 200.0}}, {"text", "dot"}},
                               {{"rect", {1000.0, 0.0, 1000.0, 5.0}}, {"text", "edge"}},
                           })}};
  const EntitySet set = normalize_ocr(doc);
  REQUIRE(set.entities.size() == 2);
  for (const auto& e : set.entities) {
    CHECK(e.bbox.valid());
    CHECK(e.bbox.width() >= 1);
    CHECK(e.bbox.height() >= 1);
  }
}

TEST_CASE("parse errors carry document context") {
  json bad = ocr_doc();
  bad["lines"][0].erase("rect");
  CHECK_THROWS_AS(normalize_ocr(bad), ParseError);
  CHECK_THROWS_WITH(normalize_ocr(bad), Catch::Matchers::ContainsSubstring("ocr1"));

  json nonpos{{"doc_id", "zero"},
              {"page", {{"width", 0}, {"height", 100}}},
              {"lines", json::array()}};
  CHECK_THROWS_AS(normalize_ocr(nonpos), ParseError);
}

TEST_CASE("renormalize is idempotent") {
  const EntitySet once = normalize_ocr(ocr_doc());
  const EntitySet twice = renormalize(once);
  REQUIRE(twice.entities.size() == once.entities.size());
  for (std::size_t i = 0; i < once.entities.size(); ++i) {
    CHECK(twice.entities[i].id == once.entities[i].id);
    CHECK(twice.entities[i].content == once.entities[i].content);
    CHECK(twice.entities[i].bbox == once.entities[i].bbox);
  }
}

TEST_CASE("entity sets round trip through json") {
  EntitySet set = normalize_ocr(ocr_doc());
  set.image_path = "/tmp/page.pgm";
  const EntitySet back = entity_set_from_json(to_json(set));
  CHECK(back.doc_id == set.doc_id);
  CHECK(back.page_width_px == set.page_width_px);
  CHECK(back.image_path == set.image_path);
  REQUIRE(back.entities.size() == set.entities.size());
  for (std::size_t i = 0; i < set.entities.size(); ++i) {
    CHECK(back.entities[i].id == set.entities[i].id);
    CHECK(back.entities[i].bbox == set.entities[i].bbox);
    CHECK(back.entities[i].content == set.entities[i].content);
    CHECK(back.entities[i].source == set.entities[i].source);
  }
}

TEST_CASE("ocr and pdf sources are distinguished after normalization") {
  const EntitySet ocr = normalize_ocr(ocr_doc());
  const json pdoc{{"doc_id", "p"},
                  {"page", {{"width", 100}, {"height", 100}}},
                  {"spans", json::array({{{"bbox", {1.0, 1.0, 50.0, 20.0}}, {"text", "x"}}})}};
  const EntitySet pdf = normalize_pdf(pdoc);
  CHECK(to_json(ocr).at("entities").at(0).at("source") == "ocr");
  CHECK(to_json(pdf).at("entities").at(0).at("source") == "pdf");
}
