// Run manifest: records which pipeline stages have completed and where their
// artifacts live, so reruns resume instead of recomputing. Deliberately free
// of timestamps: a manifest, like every artifact, must be byte-identical
// across reruns of the same config.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace syndoc {

inline const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order = {"parse",  "generate", "verify",
                                                 "tune",   "infer",    "eval"};
  return order;
}

struct StageRecord {
  bool done = false;
  std::vector<std::string> artifacts;  // run-dir-relative paths
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, StageRecord> stages;

  bool stage_done(const std::string& name) const {
    const auto it = stages.find(name);
    return it != stages.end() && it->second.done;
  }

  void mark_done(const std::string& name, std::vector<std::string> artifacts) {
    StageRecord& rec = stages[name];
    rec.done = true;
    rec.artifacts = std::move(artifacts);
  }

  // A stage may run only after everything before it in the order has run.
  bool stage_ready(const std::string& name) const {
    for (const std::string& s : stage_order()) {
      if (s == name) return true;
      if (!stage_done(s)) return false;
    }
    throw std::invalid_argument("manifest: unknown stage '" + name + "'");
  }
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, rec] : m.stages) {
    stages[name] = {{"done", rec.done}, {"artifacts", rec.artifacts}};
  }
  return nlohmann::json{
      {"config_hash", m.config_hash}, {"seed", m.seed}, {"stages", stages}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("stages")) {
    for (const auto& [name, rec] : j.at("stages").items()) {
      StageRecord r;
      r.done = rec.at("done").get<bool>();
      if (rec.contains("artifacts")) {
        r.artifacts = rec.at("artifacts").get<std::vector<std::string>>();
      }
      m.stages[name] = std::move(r);
    }
  }
  return m;
}

inline void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
  out << to_json(m).dump(2) << "\n";
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return manifest_from_json(j);
}

}  // namespace syndoc
