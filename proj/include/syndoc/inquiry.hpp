// Synthetic inquiry generation: sample entities, ask the backend for
// semantic and spatial questions, verify on two axes, build QA records.
// Parallel across documents, deterministic per document.
#pragma once

#include <atomic>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "syndoc/backends.hpp"
#include "syndoc/entities.hpp"
#include "syndoc/geometry.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/qa.hpp"
#include "syndoc/rng.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

struct GenerationConfig {
  int entities_per_doc = 10;
  std::uint64_t seed = 0;
  GridSpec grid{3, 3};
  bool send_image = true;
  int threads = 1;
};

// Per-record audit row: the verbatim backend replies behind each QARecord.
struct QAAudit {
  std::string doc_id;
  int entity_id = -1;
  std::string semantic_reply;
  std::string spatial_reply;
  std::string meaningful_reply;
  std::string consistent_reply;
};

struct GenerationResult {
  std::vector<QARecord> records;
  std::vector<QAAudit> audits;   // parallel to records
  int skipped_backend_failures = 0;
};

inline std::vector<TextLineEntity> sample_entities(const EntitySet& set, int n,
                                                   std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_entities: n must be >= 1");
  if (set.entities.empty()) return {};
  Rng rng(seed);
  const std::vector<std::size_t> idx =
      rng.sample_indices(set.entities.size(), static_cast<std::size_t>(n));
  std::vector<TextLineEntity> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(set.entities[i]);
  return out;
}

// Document context fed to generation prompts: entity contents in reading
// order, one line each.
inline std::string document_context(const EntitySet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.entities.size(); ++i) {
    if (i > 0) out += '\n';
    out += set.entities[i].content;
  }
  return out;
}

namespace detail {

inline std::string first_nonempty_line(std::string_view reply) {
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    const std::string_view line = trim(reply.substr(start, end - start));
    if (!line.empty()) return std::string(line);
    if (end == reply.size()) break;
    start = end + 1;
  }
  return std::string();
}

}  // namespace detail

// Asks the backend for a short question whose answer is the entity content.
// The answer field is copied from the entity, never taken from the reply.
inline SemanticQA generate_semantic_qa(const TextLineEntity& entity,
                                       const std::string& context,
                                       const std::optional<std::string>& image_ref,
                                       Gateway& gateway, std::string* raw_reply = nullptr) {
  if (entity.content.empty()) {
    throw std::invalid_argument("generate_semantic_qa: empty entity content");
  }
  PromptState state;
  state.template_id = "gen_semantic";
  state.slots = {{"context", context}, {"target", entity.content}};
  state.image_ref = image_ref;
  const BackendReply reply = gateway.complete(state);
  if (raw_reply != nullptr) *raw_reply = reply.raw_text;
  SemanticQA qa;
  qa.question = detail::first_nonempty_line(reply.raw_text);
  qa.answer = entity.content;
  qa.entity_id = entity.id;
  if (qa.question.empty()) {
    throw TransportError("generate_semantic_qa: backend produced no question");
  }
  return qa;
}

// Reformulates a semantic question into a location question. Region and
// grid index come from the bbox alone; the backend only words the question,
// and a failed or empty reply falls back to a fixed template.
inline SpatialQA transform_spatial(const SemanticQA& sem, const BBox& entity_bbox,
                                   Gateway& gateway, const GridSpec& grid,
                                   std::string* raw_reply = nullptr) {
  SpatialQA out;
  out.entity_id = sem.entity_id;
  out.doc_id = sem.doc_id;
  out.region = assign_region(entity_bbox);
  out.grid_index = grid_index_of(entity_bbox, grid);

  std::string question;
  try {
    PromptState state;
    state.template_id = "gen_spatial";
    state.slots = {{"question", sem.question}};
    const BackendReply reply = gateway.complete(state);
    if (raw_reply != nullptr) *raw_reply = reply.raw_text;
    question = detail::first_nonempty_line(reply.raw_text);
  } catch (const TransportError&) {
    question.clear();
  }
  if (question.empty()) {
    question = "Where is the answer of " + sem.question + " located?";
  }
  out.question = question;
  return out;
}

inline bool verify_meaningful(const TextLineEntity& entity, const std::string& context,
                              const std::optional<std::string>& image_ref, Gateway& gateway,
                              std::string* raw_reply = nullptr) {
  PromptState state;
  state.template_id = "verify_user_input";
  state.slots = {{"context", context}, {"target", entity.content}};
  state.image_ref = image_ref;
  try {
    const BackendReply reply = gateway.complete(state);
    if (raw_reply != nullptr) *raw_reply = reply.raw_text;
    return parse_yes_no(reply.raw_text);
  } catch (const TransportError&) {
    return false;
  }
}

inline bool verify_consistent(const std::string& q_sem, const std::string& content,
                              Gateway& gateway, std::string* raw_reply = nullptr) {
  PromptState state;
  state.template_id = "verify_answer";
  state.slots = {{"answer", content}, {"question", q_sem}};
  try {
    const BackendReply reply = gateway.complete(state);
    if (raw_reply != nullptr) *raw_reply = reply.raw_text;
    return parse_yes_no(reply.raw_text);
  } catch (const TransportError&) {
    return false;
  }
}

// Full per-document pass. The per-doc seed is forked from the corpus seed
// by doc id, so results do not depend on document order. Duplicate
// questions within a document keep only the first occurrence.
inline GenerationResult generate_for_document(const EntitySet& set,
                                              const GenerationConfig& config,
                                              Gateway& gateway) {
  GenerationResult result;
  if (set.entities.empty()) return result;
  const std::uint64_t doc_seed = fnv1a64(set.doc_id, config.seed);
  const std::vector<TextLineEntity> sampled =
      sample_entities(set, config.entities_per_doc, doc_seed);
  const std::string context = document_context(set);
  const std::optional<std::string> image_ref =
      (config.send_image && !set.image_path.empty())
          ? std::optional<std::string>(set.image_path)
          : std::nullopt;

  std::vector<std::string> seen_questions;
  for (const TextLineEntity& entity : sampled) {
    if (entity.content.empty()) continue;
    QARecord record;
    QAAudit audit;
    audit.doc_id = set.doc_id;
    audit.entity_id = entity.id;
    try {
      record.semantic =
          generate_semantic_qa(entity, context, image_ref, gateway, &audit.semantic_reply);
    } catch (const TransportError&) {
      ++result.skipped_backend_failures;
      continue;
    }
    record.semantic.doc_id = set.doc_id;

    bool duplicate = false;
    for (const std::string& q : seen_questions) {
      if (q == record.semantic.question) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    seen_questions.push_back(record.semantic.question);

    record.spatial = transform_spatial(record.semantic, entity.bbox, gateway, config.grid,
                                       &audit.spatial_reply);
    record.flags.meaningful =
        verify_meaningful(entity, context, image_ref, gateway, &audit.meaningful_reply);
    record.flags.consistent = verify_consistent(record.semantic.question, entity.content,
                                                gateway, &audit.consistent_reply);
    record.flags.meaningful_reply = audit.meaningful_reply;
    record.flags.consistent_reply = audit.consistent_reply;

    result.records.push_back(std::move(record));
    result.audits.push_back(std::move(audit));
  }
  return result;
}

// Corpus pass: documents are distributed over worker threads; the merged
// output preserves input document order regardless of scheduling.
inline GenerationResult generate_corpus(const std::vector<EntitySet>& sets,
                                        const GenerationConfig& config, Gateway& gateway) {
  const int threads = std::max(1, config.threads);
  std::vector<GenerationResult> per_doc(sets.size());
  if (threads == 1 || sets.size() <= 1) {
    for (std::size_t i = 0; i < sets.size(); ++i) {
      per_doc[i] = generate_for_document(sets[i], config, gateway);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min<std::size_t>(threads, sets.size());
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= sets.size()) break;
          per_doc[i] = generate_for_document(sets[i], config, gateway);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  GenerationResult merged;
  for (auto& r : per_doc) {
    merged.skipped_backend_failures += r.skipped_backend_failures;
    for (auto& rec : r.records) merged.records.push_back(std::move(rec));
    for (auto& a : r.audits) merged.audits.push_back(std::move(a));
  }
  return merged;
}

}  // namespace syndoc
