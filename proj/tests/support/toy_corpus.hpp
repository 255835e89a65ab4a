// Deterministic toy form corpus for tests: label/value pairs in fixed grid
// cells with per-document jitter, key-specific value shapes, optional decoy
// fields and boilerplate for the noisy variant.
#pragma once

#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "syndoc/entities.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/image.hpp"
#include "syndoc/jsonl.hpp"
#include "syndoc/pipeline.hpp"
#include "syndoc/rng.hpp"
#include "syndoc/structure_parser.hpp"

namespace syndoc::testsupport {

inline const std::array<const char*, 5>& toy_labels() {
  static const std::array<const char*, 5> labels = {
      "Invoice Number", "Issue Date", "Total Amount", "Customer Name", "Reference Code"};
  return labels;
}

// Confusable decoy fields occupying the grid cells the real keys skip.
inline const std::array<const char*, 4>& decoy_labels() {
  static const std::array<const char*, 4> labels = {"Order Number", "Invoice Date",
                                                    "Subtotal Amount", "Vendor Name"};
  return labels;
}

namespace detail {

inline std::string four_digits(Rng& rng) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%04d", static_cast<int>(rng.bounded(10000)));
  return buf;
}

inline std::string a_date(Rng& rng) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", 2023 + static_cast<int>(rng.bounded(2)),
                1 + static_cast<int>(rng.bounded(12)), 1 + static_cast<int>(rng.bounded(28)));
  return buf;
}

inline std::string an_amount(Rng& rng) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "$%d.%02d", 10 + static_cast<int>(rng.bounded(990)),
                static_cast<int>(rng.bounded(100)));
  return buf;
}

inline std::string a_name(Rng& rng) {
  static const std::array<const char*, 8> first = {"Alice", "Bruno", "Chen",  "Dana",
                                                   "Emil",  "Farah", "Goran", "Hana"};
  static const std::array<const char*, 8> last = {"Keller", "Lindqvist", "Moreau", "Novak",
                                                  "Okafor", "Park",      "Quinn",  "Rossi"};
  return std::string(first[rng.bounded(first.size())]) + " " + last[rng.bounded(last.size())];
}

inline std::string toy_value(int key, Rng& rng) {
  switch (key) {
    case 0: return "INV-" + four_digits(rng);
    case 1: return a_date(rng);
    case 2: return an_amount(rng);
    case 3: return a_name(rng);
    default: return "REF-" + four_digits(rng);
  }
}

inline std::string decoy_value(int key, Rng& rng) {
  switch (key) {
    case 0: return "ORD-" + four_digits(rng);
    case 1: return a_date(rng);
    case 2: return an_amount(rng);
    default: return a_name(rng);
  }
}

// One label/value pair anchored inside a grid cell. band staggers pairs
// sharing a grid row so reading order keeps each value right after its label.
inline void place_pair(EntitySet& set, const std::string& label, const std::string& value,
                       int cell, int band, Rng& rng) {
  const int grid_row = cell / 3;
  const int grid_col = cell % 3;
  const int x0 = grid_col * 333 + 20 + static_cast<int>(rng.bounded(30));
  const int y0 = grid_row * 333 + 30 + band * 140 + static_cast<int>(rng.bounded(20));

  TextLineEntity l;
  l.bbox = BBox{x0, y0, x0 + 150, y0 + 24};
  l.content = label + ":";
  set.entities.push_back(std::move(l));

  TextLineEntity v;
  v.bbox = BBox{x0, y0 + 40, x0 + 170, y0 + 64};
  v.content = value;
  set.entities.push_back(std::move(v));
}

}  // namespace detail

struct ToyGold {
  std::string id;
  std::string doc_id;
  std::string question;
  std::string gold;
  int key = 0;
  int grid_cell = 0;
};

struct ToyCorpus {
  std::vector<EntitySet> sets;
  std::vector<ToyGold> golds;  // 5 per document, the real keys only
};

struct ToyOptions {
  int n_docs = 50;
  std::uint64_t seed = 1234;
  bool noisy = false;
  std::string doc_prefix = "toy";
  std::string image_dir;  // when set, a PGM page is rendered per document
};

// Real keys sit in the grid cells {0,2,4,6,8}; decoys (noisy only) take
// {1,3,5,7}. Within a grid row, pairs get distinct vertical bands.
inline ToyCorpus make_toy_corpus(const ToyOptions& opts) {
  static const std::array<int, 5> real_cells = {0, 2, 4, 6, 8};
  static const std::array<int, 4> decoy_cells = {1, 3, 5, 7};

  ToyCorpus corpus;
  for (int d = 0; d < opts.n_docs; ++d) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", opts.doc_prefix.c_str(), d);
    EntitySet set;
    set.doc_id = idbuf;
    set.page_width_px = 1000;
    set.page_height_px = 1000;
    Rng rng(fnv1a64(set.doc_id, opts.seed));

    std::map<int, int> bands;  // next free band per grid row
    for (int k = 0; k < 5; ++k) {
      const int cell = real_cells[static_cast<std::size_t>(k)];
      const int band = bands[cell / 3]++;
      const std::string value = detail::toy_value(k, rng);
      detail::place_pair(set, toy_labels()[static_cast<std::size_t>(k)], value, cell, band, rng);

      ToyGold gold;
      gold.id = set.doc_id + "#k" + std::to_string(k);
      gold.doc_id = set.doc_id;
      gold.question = std::string("What is the ") + toy_labels()[static_cast<std::size_t>(k)] + "?";
      gold.gold = value;
      gold.key = k;
      gold.grid_cell = cell;
      corpus.golds.push_back(std::move(gold));
    }
    if (opts.noisy) {
      for (int k = 0; k < 4; ++k) {
        const int cell = decoy_cells[static_cast<std::size_t>(k)];
        const int band = bands[cell / 3]++;
        detail::place_pair(set, decoy_labels()[static_cast<std::size_t>(k)],
                           detail::decoy_value(k, rng), cell, band, rng);
      }
      TextLineEntity note;
      note.bbox = BBox{360, 960, 640, 990};
      note.content = "Page 1 of 1";
      set.entities.push_back(std::move(note));
      TextLineEntity stamp;
      stamp.bbox = BBox{40, 960, 300, 990};
      stamp.content = "Printed for internal review";
      set.entities.push_back(std::move(stamp));
    }

    set = renormalize(set);

    if (!opts.image_dir.empty()) {
      std::filesystem::create_directories(opts.image_dir);
      Gray8 page = Gray8::filled(200, 200, 255);
      for (const TextLineEntity& e : set.entities) {
        const int shade = static_cast<int>(64 + fnv1a64(e.content) % 128);
        fill_rect(page, e.bbox.x_min * 200 / kCoordScale, e.bbox.y_min * 200 / kCoordScale,
                  e.bbox.x_max * 200 / kCoordScale, e.bbox.y_max * 200 / kCoordScale,
                  static_cast<std::uint8_t>(shade));
      }
      const std::filesystem::path path =
          std::filesystem::path(opts.image_dir) / (set.doc_id + ".pgm");
      write_pgm(page, path);
      set.image_path = path.string();
    }

    corpus.sets.push_back(std::move(set));
  }
  return corpus;
}

inline std::map<std::string, std::map<std::string, std::string>> gold_by_doc(
    const ToyCorpus& corpus) {
  std::map<std::string, std::map<std::string, std::string>> out;
  for (const ToyGold& g : corpus.golds) out[g.doc_id][g.question] = g.gold;
  return out;
}

inline void write_entities_jsonl(const std::vector<EntitySet>& sets,
                                 const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  JsonlWriter writer(path);
  for (const EntitySet& set : sets) writer.write(to_json(set));
  writer.flush();
}

inline void write_questions_json(const std::vector<ToyGold>& golds,
                                 const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  nlohmann::json arr = nlohmann::json::array();
  for (const ToyGold& g : golds) {
    arr.push_back(nlohmann::json{
        {"id", g.id}, {"doc_id", g.doc_id}, {"question", g.question}, {"gold", g.gold}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << nlohmann::json{{"questions", arr}}.dump(2) << "\n";
}

// Unique scratch directory per call, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("syndoc_" + tag + "_" + std::to_string(++counter) + "_" +
             std::to_string(static_cast<unsigned>(::getpid())));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace syndoc::testsupport
