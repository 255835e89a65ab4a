// Synthetic QA record types, the four verification subsets, and their
// JSONL form. Generation lives in inquiry.hpp.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/geometry.hpp"

namespace syndoc {

struct SemanticQA {
  std::string question;  // q_sem
  std::string answer;    // target entity content, copied verbatim
  int entity_id = -1;
  std::string doc_id;
};

// Spatially grounded question. The paper writes q_spt and q_str for the
// same object; this struct is both.
struct SpatialQA {
  std::string question;  // q_spt
  RegionLabel region;
  int grid_index = -1;
  int entity_id = -1;
  std::string doc_id;
};

struct VerificationFlags {
  bool meaningful = false;
  bool consistent = false;
  std::string meaningful_reply;  // verbatim backend justification
  std::string consistent_reply;
};

struct QARecord {
  SemanticQA semantic;
  SpatialQA spatial;
  VerificationFlags flags;
};

enum class Subset { all = 1, meaningful = 2, consistent = 3, both = 4 };

inline const char* to_string(Subset s) {
  switch (s) {
    case Subset::all: return "all";
    case Subset::meaningful: return "meaningful";
    case Subset::consistent: return "consistent";
    case Subset::both: return "both";
  }
  throw std::invalid_argument("bad Subset");
}

inline Subset subset_from_string(const std::string& s) {
  if (s == "all") return Subset::all;
  if (s == "meaningful") return Subset::meaningful;
  if (s == "consistent") return Subset::consistent;
  if (s == "both") return Subset::both;
  throw std::invalid_argument("bad subset name '" + s + "'");
}

struct QASubsets {
  std::vector<QARecord> all;
  std::vector<QARecord> meaningful;
  std::vector<QARecord> consistent;
  std::vector<QARecord> both;

  const std::vector<QARecord>& get(Subset s) const {
    switch (s) {
      case Subset::all: return all;
      case Subset::meaningful: return meaningful;
      case Subset::consistent: return consistent;
      case Subset::both: return both;
    }
    throw std::invalid_argument("bad Subset");
  }
};

inline QASubsets build_subsets(const std::vector<QARecord>& records) {
  QASubsets out;
  out.all = records;
  for (const QARecord& r : records) {
    if (r.flags.meaningful) out.meaningful.push_back(r);
    if (r.flags.consistent) out.consistent.push_back(r);
    if (r.flags.meaningful && r.flags.consistent) out.both.push_back(r);
  }
  return out;
}

inline nlohmann::json to_json(const QARecord& r) {
  return nlohmann::json{{"doc_id", r.semantic.doc_id},
                        {"entity_id", r.semantic.entity_id},
                        {"q_sem", r.semantic.question},
                        {"answer", r.semantic.answer},
                        {"q_spt", r.spatial.question},
                        {"region", to_string(r.spatial.region)},
                        {"grid_index", r.spatial.grid_index},
                        {"meaningful", r.flags.meaningful},
                        {"consistent", r.flags.consistent}};
}

inline QARecord qa_record_from_json(const nlohmann::json& j) {
  QARecord r;
  r.semantic.doc_id = j.at("doc_id").get<std::string>();
  r.semantic.entity_id = j.at("entity_id").get<int>();
  r.semantic.question = j.at("q_sem").get<std::string>();
  r.semantic.answer = j.at("answer").get<std::string>();
  r.spatial.doc_id = r.semantic.doc_id;
  r.spatial.entity_id = r.semantic.entity_id;
  r.spatial.question = j.at("q_spt").get<std::string>();
  r.spatial.region = region_from_string(j.at("region").get<std::string>());
  r.spatial.grid_index = j.at("grid_index").get<int>();
  r.flags.meaningful = j.at("meaningful").get<bool>();
  r.flags.consistent = j.at("consistent").get<bool>();
  return r;
}

}  // namespace syndoc
