// JSONL reading and writing. Artifact files carry a leading _meta record
// with the run's config hash and seed so provenance survives file moves.
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/text.hpp"

namespace syndoc {

using Json = nlohmann::json;

struct JsonlMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline Json to_json(const JsonlMeta& m) {
  return Json{{"_meta", {{"config_hash", m.config_hash}, {"seed", m.seed}}}};
}

inline bool is_meta_record(const Json& j) {
  return j.is_object() && j.contains("_meta");
}

inline JsonlMeta meta_from_json(const Json& j) {
  JsonlMeta m;
  const Json& inner = j.at("_meta");
  m.config_hash = inner.at("config_hash").get<std::string>();
  m.seed = inner.at("seed").get<std::uint64_t>();
  return m;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path,
                       const std::optional<JsonlMeta>& meta = std::nullopt)
      : out_(path) {
    if (!out_) throw std::runtime_error("jsonl: cannot open for write: " + path.string());
    if (meta) write(to_json(*meta));
  }

  void write(const Json& record) {
    out_ << record.dump() << '\n';
    if (!out_) throw std::runtime_error("jsonl: write failed");
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

struct JsonlFile {
  std::optional<JsonlMeta> meta;
  std::vector<Json> records;
};

inline JsonlFile read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("jsonl: cannot open for read: " + path.string());
  JsonlFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw std::runtime_error("jsonl: " + path.string() + " line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    if (lineno == 1 && is_meta_record(j)) {
      out.meta = meta_from_json(j);
    } else {
      out.records.push_back(std::move(j));
    }
  }
  return out;
}

}  // namespace syndoc
