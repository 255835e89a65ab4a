// The recursive inference loop (Eqs. 8-10): Warmer retrieval conditioned on
// the prior generated answer, prompt update with ranked tips, generation,
// repeat until the answer stabilizes or the iteration cap is hit.
#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/backends.hpp"
#include "syndoc/image.hpp"
#include "syndoc/inquiry.hpp"
#include "syndoc/jsonl.hpp"
#include "syndoc/model.hpp"
#include "syndoc/prompts.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

struct LoopConfig {
  int k = 3;
  int max_iter = 5;
  bool use_hints = true;       // false = vanilla generation only
  bool use_bbox_hints = false;
  bool recursive = true;       // false = exactly one hint iteration
  int convergence_window = 2;

  void validate() const {
    if (k < 1) throw std::invalid_argument("LoopConfig: K must be >= 1");
    if (max_iter < 1) throw std::invalid_argument("LoopConfig: max_iter must be >= 1");
    if (convergence_window < 2) {
      throw std::invalid_argument("LoopConfig: convergence window must be >= 2");
    }
  }
};

struct Candidate {
  int entity_id = -1;
  std::string content;
  BBox bbox;
  double score = 0.0;
};

// L_D^{(t)}: ranked hints for one iteration.
struct RetrievedCandidates {
  std::vector<Candidate> items;  // scores non-increasing, distinct entities
  int iteration = 0;
};

struct IterationRecord {
  int iteration = 0;
  RetrievedCandidates candidates;  // empty at iteration 0
  std::string prompt_digest;
  std::string answer;              // A_G^{(t)}
  bool transport_failed = false;
};

struct InferenceTrace {
  std::string question_id;
  std::string doc_id;
  std::string question;
  std::string gold;                // empty when unknown
  std::vector<IterationRecord> iterations;
  std::string stop_reason;         // "converged" | "max_iter"
  bool aborted_by_error = false;   // transport failure cut the loop short
  std::string final_answer;
  // Standalone retrieval with no prior, recorded for Warmer-only scoring
  // even when iteration 0 injects nothing.
  RetrievedCandidates vanilla_candidates;
};

// Eq. 8: Top-K entities by pointer probability, conditioned on the prior
// generated answer. K is clipped to the entity count.
inline RetrievedCandidates retrieve(WarmerModel& warmer, const EntitySet& set,
                                    const DocFeatures& feats, const std::string& question,
                                    const std::string& prior_answer, int k) {
  if (k < 1) throw std::invalid_argument("retrieve: K must be >= 1");
  RetrievedCandidates out;
  const std::vector<ScoredEntity> ranked =
      rank_entities(warmer, set, feats, question, prior_answer);
  const std::size_t limit = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
  for (std::size_t i = 0; i < limit; ++i) {
    Candidate c;
    c.entity_id = ranked[i].entity_id;
    c.content = ranked[i].content;
    c.bbox = ranked[i].bbox;
    c.score = ranked[i].score;
    out.items.push_back(std::move(c));
  }
  return out;
}

// Eq. 9: rebuild the prompt around the new candidate list. Tips replace the
// previous iteration's tips; the template is chosen by tip count and the
// bbox flag.
inline PromptState update_prompt(const PromptState& prev, const RetrievedCandidates& cands,
                                 const LoopConfig& config) {
  PromptState next = prev;
  next.tips.clear();
  next.tip_boxes.clear();
  if (cands.items.empty()) {
    next.template_id = config.use_bbox_hints ? "bbox_no_tips" : "no_tips";
    return next;
  }
  for (const Candidate& c : cands.items) {
    next.tips.push_back(c.content);
    next.tip_boxes.push_back(c.bbox);
  }
  if (config.use_bbox_hints) {
    next.template_id = cands.items.size() == 1 ? "bbox_one_tip" : "bbox_multi_tips";
  } else {
    next.template_id = cands.items.size() == 1 ? "one_tip" : "multi_tips";
    next.tip_boxes.clear();
  }
  return next;
}

// Eq. 10: one generator call, answer extracted from the reply.
inline std::string step(Gateway& gateway, const PromptState& prompt) {
  const BackendReply reply = gateway.complete(prompt);
  return parse_answer(reply.raw_text);
}

// Stable-answer convergence over the trailing window.
inline bool check_converged(const std::vector<IterationRecord>& iterations, int window) {
  if (static_cast<int>(iterations.size()) < window) return false;
  const std::string base =
      normalize_whitespace(iterations[iterations.size() - 1].answer);
  for (int i = 2; i <= window; ++i) {
    const std::string other =
        normalize_whitespace(iterations[iterations.size() - static_cast<std::size_t>(i)].answer);
    if (other != base) return false;
  }
  return true;
}

struct LoopContext {
  WarmerModel* warmer = nullptr;    // null only when hints disabled
  const EntitySet* set = nullptr;
  const DocFeatures* feats = nullptr;
  Gateway* gateway = nullptr;
  std::optional<std::string> image_ref;
  std::optional<std::string> overlay_dir;  // where bbox overlay pages are written
};

namespace detail {

// Overlay page for bbox hints: candidate boxes drawn as dark frames on a
// copy of the page image. Returns the written path, or the original ref
// when there is nothing to draw on.
inline std::optional<std::string> render_overlay(const LoopContext& ctx,
                                                 const RetrievedCandidates& cands,
                                                 const std::string& question_id,
                                                 int iteration) {
  if (!ctx.image_ref || !ctx.overlay_dir || cands.items.empty()) return ctx.image_ref;
  if (!std::filesystem::exists(*ctx.image_ref)) return ctx.image_ref;
  Gray8 page = read_pgm(*ctx.image_ref);
  for (const Candidate& c : cands.items) {
    const int x0 = static_cast<int>(c.bbox.x_min * page.width / kCoordScale);
    const int x1 = static_cast<int>(c.bbox.x_max * page.width / kCoordScale);
    const int y0 = static_cast<int>(c.bbox.y_min * page.height / kCoordScale);
    const int y1 = static_cast<int>(c.bbox.y_max * page.height / kCoordScale);
    const int t = 2;  // frame thickness
    fill_rect(page, x0 - t, y0 - t, x1 + t, y0, 0);
    fill_rect(page, x0 - t, y1, x1 + t, y1 + t, 0);
    fill_rect(page, x0 - t, y0, x0, y1, 0);
    fill_rect(page, x1, y0, x1 + t, y1, 0);
  }
  const std::filesystem::path out =
      std::filesystem::path(*ctx.overlay_dir) /
      ("overlay_" + question_id + "_it" + std::to_string(iteration) + ".pgm");
  std::filesystem::create_directories(out.parent_path());
  write_pgm(page, out);
  return out.string();
}

}  // namespace detail

// Full loop for one question. Iteration 0 is always the vanilla hint-free
// prompt; hint iterations follow when enabled. A transport failure ends the
// loop keeping the last good answer.
inline InferenceTrace run_loop(const LoopContext& ctx, const std::string& question_id,
                               const std::string& question, const std::string& gold,
                               const LoopConfig& config) {
  config.validate();
  if (ctx.set == nullptr || ctx.gateway == nullptr) {
    throw std::invalid_argument("run_loop: context missing document or gateway");
  }
  if (config.use_hints && (ctx.warmer == nullptr || ctx.feats == nullptr)) {
    throw std::invalid_argument("run_loop: hints enabled without a Warmer");
  }

  InferenceTrace trace;
  trace.question_id = question_id;
  trace.doc_id = ctx.set->doc_id;
  trace.question = question;
  trace.gold = gold;

  PromptState base;
  base.template_id = "no_tips";
  base.slots = {{"context", document_context(*ctx.set)},
                {"target", ctx.set->doc_id},
                {"question", question}};
  base.image_ref = ctx.image_ref;

  // Iteration 0: vanilla generation. The hint-free retrieval snapshot is
  // recorded alongside so Warmer-only rows can be scored from the trace.
  if (config.use_hints) {
    trace.vanilla_candidates = retrieve(*ctx.warmer, *ctx.set, *ctx.feats, question, "",
                                        config.k);
    trace.vanilla_candidates.iteration = 0;
  }
  IterationRecord rec0;
  rec0.iteration = 0;
  rec0.prompt_digest = payload_digest(base);
  try {
    rec0.answer = step(*ctx.gateway, base);
  } catch (const TransportError&) {
    rec0.transport_failed = true;
    trace.iterations.push_back(rec0);
    trace.stop_reason = "max_iter";
    trace.aborted_by_error = true;
    trace.final_answer.clear();
    return trace;
  }
  trace.iterations.push_back(rec0);

  if (!config.use_hints) {
    trace.stop_reason = "max_iter";
    trace.final_answer = rec0.answer;
    return trace;
  }

  const int hint_iters = config.recursive ? config.max_iter : 1;
  for (int t = 1; t <= hint_iters; ++t) {
    const std::string& prior = trace.iterations.back().answer;
    RetrievedCandidates cands =
        retrieve(*ctx.warmer, *ctx.set, *ctx.feats, question, prior, config.k);
    cands.iteration = t;

    PromptState prompt = update_prompt(base, cands, config);
    if (config.use_bbox_hints) {
      prompt.image_ref = detail::render_overlay(ctx, cands, question_id, t);
    }

    IterationRecord rec;
    rec.iteration = t;
    rec.candidates = cands;
    rec.prompt_digest = payload_digest(prompt);
    try {
      rec.answer = step(*ctx.gateway, prompt);
    } catch (const TransportError&) {
      rec.transport_failed = true;
      trace.iterations.push_back(rec);
      trace.stop_reason = "max_iter";
      trace.aborted_by_error = true;
      trace.final_answer = prior;
      return trace;
    }
    trace.iterations.push_back(rec);

    if (check_converged(trace.iterations, config.convergence_window)) {
      trace.stop_reason = "converged";
      trace.final_answer = rec.answer;
      return trace;
    }
  }
  trace.stop_reason = "max_iter";
  trace.final_answer = trace.iterations.back().answer;
  return trace;
}

inline nlohmann::json to_json(const Candidate& c) {
  return nlohmann::json{{"entity_id", c.entity_id},
                        {"content", c.content},
                        {"bbox", to_json(c.bbox)},
                        {"score", c.score}};
}

inline nlohmann::json to_json(const RetrievedCandidates& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& c : r.items) items.push_back(to_json(c));
  return nlohmann::json{{"iteration", r.iteration}, {"items", items}};
}

inline nlohmann::json to_json(const InferenceTrace& t) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& it : t.iterations) {
    iters.push_back(nlohmann::json{{"iteration", it.iteration},
                                   {"candidates", to_json(it.candidates)},
                                   {"prompt_digest", it.prompt_digest},
                                   {"answer", it.answer},
                                   {"transport_failed", it.transport_failed}});
  }
  return nlohmann::json{{"question_id", t.question_id},
                        {"doc_id", t.doc_id},
                        {"question", t.question},
                        {"gold", t.gold},
                        {"iterations", iters},
                        {"stop_reason", t.stop_reason},
                        {"aborted_by_error", t.aborted_by_error},
                        {"final_answer", t.final_answer},
                        {"vanilla_candidates", to_json(t.vanilla_candidates)}};
}

inline Candidate candidate_from_json(const nlohmann::json& j) {
  Candidate c;
  c.entity_id = j.at("entity_id").get<int>();
  c.content = j.at("content").get<std::string>();
  c.bbox = bbox_from_json(j.at("bbox"));
  c.score = j.at("score").get<double>();
  return c;
}

inline RetrievedCandidates retrieved_from_json(const nlohmann::json& j) {
  RetrievedCandidates r;
  r.iteration = j.at("iteration").get<int>();
  for (const auto& item : j.at("items")) r.items.push_back(candidate_from_json(item));
  return r;
}

inline InferenceTrace trace_from_json(const nlohmann::json& j) {
  InferenceTrace t;
  t.question_id = j.at("question_id").get<std::string>();
  t.doc_id = j.at("doc_id").get<std::string>();
  t.question = j.at("question").get<std::string>();
  t.gold = j.at("gold").get<std::string>();
  for (const auto& it : j.at("iterations")) {
    IterationRecord rec;
    rec.iteration = it.at("iteration").get<int>();
    rec.candidates = retrieved_from_json(it.at("candidates"));
    rec.prompt_digest = it.at("prompt_digest").get<std::string>();
    rec.answer = it.at("answer").get<std::string>();
    rec.transport_failed = it.at("transport_failed").get<bool>();
    t.iterations.push_back(std::move(rec));
  }
  t.stop_reason = j.at("stop_reason").get<std::string>();
  t.aborted_by_error = j.at("aborted_by_error").get<bool>();
  t.final_answer = j.at("final_answer").get<std::string>();
  t.vanilla_candidates = retrieved_from_json(j.at("vanilla_candidates"));
  return t;
}

}  // namespace syndoc
