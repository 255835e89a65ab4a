// Pipeline stages over a run directory: parse, generate, verify, tune,
// infer, eval. Each stage is gated by the manifest, idempotent under an
// unchanged config hash, and writes artifacts stamped with hash and seed.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/config.hpp"
#include "syndoc/inference.hpp"
#include "syndoc/inquiry.hpp"
#include "syndoc/jsonl.hpp"
#include "syndoc/manifest.hpp"
#include "syndoc/model.hpp"
#include "syndoc/qa.hpp"
#include "syndoc/report.hpp"
#include "syndoc/structure_parser.hpp"
#include "syndoc/tuning.hpp"

namespace syndoc {

// One benchmark question: key-value gold converted to QA form.
struct QuestionSpec {
  std::string id;
  std::string doc_id;
  std::string question;
  std::string gold;
};

inline std::vector<QuestionSpec> questions_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() && j.contains("questions") ? j.at("questions") : j;
  if (!arr.is_array()) {
    throw std::runtime_error("questions: expected an array or {\"questions\": [...]}");
  }
  std::vector<QuestionSpec> out;
  for (const auto& q : arr) {
    QuestionSpec spec;
    spec.id = q.at("id").get<std::string>();
    spec.doc_id = q.at("doc_id").get<std::string>();
    spec.question = q.at("question").get<std::string>();
    spec.gold = q.value("gold", std::string());
    out.push_back(std::move(spec));
  }
  return out;
}

inline std::vector<QuestionSpec> load_questions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("questions: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return questions_from_json(j);
}

// Fallback when no benchmark file is configured: the doubly verified subset
// of the synthetic records becomes the evaluation set.
inline std::vector<QuestionSpec> derive_questions(const std::vector<QARecord>& records) {
  const QASubsets subsets = build_subsets(records);
  std::vector<QuestionSpec> out;
  for (const QARecord& rec : subsets.both) {
    QuestionSpec spec;
    spec.id = rec.semantic.doc_id + "#e" + std::to_string(rec.semantic.entity_id);
    spec.doc_id = rec.semantic.doc_id;
    spec.question = rec.semantic.question;
    spec.gold = rec.semantic.answer;
    out.push_back(std::move(spec));
  }
  return out;
}

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path entities() const { return root / "entities" / "entities.jsonl"; }
  std::filesystem::path qa() const { return root / "qa" / "qa.jsonl"; }
  std::filesystem::path qa_audit() const { return root / "qa" / "qa_audit.jsonl"; }
  std::filesystem::path stats() const { return root / "qa" / "stats.json"; }
  std::filesystem::path priors() const { return root / "qa" / "priors.jsonl"; }
  std::filesystem::path checkpoint(const std::string& id) const {
    return root / "checkpoints" / (id + ".bin");
  }
  std::filesystem::path tuning_report(const std::string& id) const {
    return root / "reports" / ("tuning_" + id + ".json");
  }
  std::filesystem::path traces() const { return root / "traces" / "traces.jsonl"; }
  std::filesystem::path overlays() const { return root / "traces" / "overlays"; }
  std::filesystem::path eval_json() const { return root / "reports" / "eval.json"; }
  std::filesystem::path eval_table() const { return root / "reports" / "eval.txt"; }
};

struct PipelineContext {
  RunConfig config;
  std::string hash;
  RunPaths paths;
  RunManifest manifest;

  JsonlMeta meta() const { return JsonlMeta{hash, config.seed}; }
  void save() const { save_manifest(manifest, paths.manifest()); }
};

// Opens (or creates) the run directory for this config. An existing manifest
// with a different hash means the directory is someone else's run.
inline PipelineContext open_run(const RunConfig& config) {
  PipelineContext ctx;
  ctx.config = config;
  ctx.hash = config_hash(config);
  ctx.paths.root = std::filesystem::path(config.output_dir) / ctx.hash;
  for (const char* sub : {"entities", "qa", "checkpoints", "traces", "reports"}) {
    std::filesystem::create_directories(ctx.paths.root / sub);
  }
  if (std::filesystem::exists(ctx.paths.manifest())) {
    ctx.manifest = load_manifest(ctx.paths.manifest());
    if (ctx.manifest.config_hash != ctx.hash) {
      throw std::runtime_error("run dir " + ctx.paths.root.string() +
                               " belongs to config hash " + ctx.manifest.config_hash);
    }
  } else {
    ctx.manifest.config_hash = ctx.hash;
    ctx.manifest.seed = config.seed;
    ctx.save();
  }
  return ctx;
}

namespace detail {

inline void require_ready(const PipelineContext& ctx, const std::string& stage) {
  if (!ctx.manifest.stage_ready(stage)) {
    throw std::runtime_error("stage '" + stage + "' is not ready: an upstream stage has not run");
  }
}

inline std::vector<std::filesystem::path> sorted_json_files(const std::string& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace detail

inline std::vector<EntitySet> load_entity_sets(const std::filesystem::path& path) {
  const JsonlFile file = read_jsonl(path);
  std::vector<EntitySet> sets;
  sets.reserve(file.records.size());
  for (const Json& rec : file.records) sets.push_back(entity_set_from_json(rec));
  return sets;
}

inline std::vector<QARecord> load_qa_records(const std::filesystem::path& path) {
  const JsonlFile file = read_jsonl(path);
  std::vector<QARecord> records;
  records.reserve(file.records.size());
  for (const Json& rec : file.records) records.push_back(qa_record_from_json(rec));
  return records;
}

// parse: raw OCR/PDF inputs (or an already-canonical entity file) to one
// canonical entities.jsonl, sorted inputs for determinism.
inline bool stage_parse(PipelineContext& ctx) {
  detail::require_ready(ctx, "parse");
  if (ctx.manifest.stage_done("parse")) return false;

  std::vector<EntitySet> sets;
  const InputPaths& in = ctx.config.inputs;
  if (!in.entities_jsonl && !in.ocr_dir && !in.pdf_dir) {
    throw std::runtime_error("stage parse: no inputs configured");
  }
  if (in.entities_jsonl) {
    for (EntitySet& set : load_entity_sets(*in.entities_jsonl)) {
      sets.push_back(renormalize(set));
    }
  }
  if (in.ocr_dir) {
    for (const auto& path : detail::sorted_json_files(*in.ocr_dir)) {
      sets.push_back(normalize_ocr(detail::read_json_file(path)));
    }
  }
  if (in.pdf_dir) {
    for (const auto& path : detail::sorted_json_files(*in.pdf_dir)) {
      sets.push_back(normalize_pdf(detail::read_json_file(path)));
    }
  }

  JsonlWriter writer(ctx.paths.entities(), ctx.meta());
  for (const EntitySet& set : sets) writer.write(to_json(set));
  writer.flush();

  ctx.manifest.mark_done("parse", {"entities/entities.jsonl"});
  ctx.save();
  return true;
}

// generate: synthetic QA with inline dual verification; audit rows keep the
// verbatim backend replies next to the records they justified.
inline bool stage_generate(PipelineContext& ctx) {
  detail::require_ready(ctx, "generate");
  if (ctx.manifest.stage_done("generate")) return false;

  const std::vector<EntitySet> sets = load_entity_sets(ctx.paths.entities());
  Gateway gateway = make_gateway(ctx.config);
  const GenerationResult result = generate_corpus(sets, ctx.config.generation, gateway);

  JsonlWriter qa_writer(ctx.paths.qa(), ctx.meta());
  for (const QARecord& rec : result.records) qa_writer.write(to_json(rec));
  qa_writer.flush();

  JsonlWriter audit_writer(ctx.paths.qa_audit(), ctx.meta());
  for (const QAAudit& audit : result.audits) {
    audit_writer.write(Json{{"doc_id", audit.doc_id},
                            {"entity_id", audit.entity_id},
                            {"semantic_reply", audit.semantic_reply},
                            {"spatial_reply", audit.spatial_reply},
                            {"meaningful_reply", audit.meaningful_reply},
                            {"consistent_reply", audit.consistent_reply}});
  }
  audit_writer.flush();

  ctx.manifest.mark_done("generate", {"qa/qa.jsonl", "qa/qa_audit.jsonl"});
  ctx.save();
  return true;
}

struct DatasetStats {
  std::string domain;
  std::string category;
  std::size_t n_doc = 0;
  std::size_t n_qa = 0;
  std::size_t set1 = 0;
  std::size_t set2 = 0;
  std::size_t set3 = 0;
  std::size_t set4 = 0;
};

inline nlohmann::json to_json(const DatasetStats& s) {
  return nlohmann::json{{"domain", s.domain}, {"category", s.category},
                        {"n_doc", s.n_doc},   {"n_qa", s.n_qa},
                        {"set1", s.set1},     {"set2", s.set2},
                        {"set3", s.set3},     {"set4", s.set4}};
}

inline DatasetStats stats_from_json(const nlohmann::json& j) {
  DatasetStats s;
  s.domain = j.at("domain").get<std::string>();
  s.category = j.at("category").get<std::string>();
  s.n_doc = j.at("n_doc").get<std::size_t>();
  s.n_qa = j.at("n_qa").get<std::size_t>();
  s.set1 = j.at("set1").get<std::size_t>();
  s.set2 = j.at("set2").get<std::size_t>();
  s.set3 = j.at("set3").get<std::size_t>();
  s.set4 = j.at("set4").get<std::size_t>();
  return s;
}

inline std::vector<QuestionSpec> pipeline_questions(const PipelineContext& ctx) {
  if (ctx.config.inputs.questions_json) {
    return load_questions(*ctx.config.inputs.questions_json);
  }
  return derive_questions(load_qa_records(ctx.paths.qa()));
}

// verify: materializes the subset lattice into counts. The per-record flags
// were computed during generation; this stage owns the derived sizes.
inline bool stage_verify(PipelineContext& ctx) {
  detail::require_ready(ctx, "verify");
  if (ctx.manifest.stage_done("verify")) return false;

  const std::vector<QARecord> records = load_qa_records(ctx.paths.qa());
  const QASubsets subsets = build_subsets(records);

  DatasetStats stats;
  stats.domain = ctx.config.dataset_id;
  stats.category = ctx.config.category;
  stats.n_doc = load_entity_sets(ctx.paths.entities()).size();
  stats.n_qa = pipeline_questions(ctx).size();
  stats.set1 = subsets.all.size();
  stats.set2 = subsets.meaningful.size();
  stats.set3 = subsets.consistent.size();
  stats.set4 = subsets.both.size();

  nlohmann::json j = to_json(stats);
  j["_meta"] = to_json(ctx.meta()).at("_meta");
  detail::write_json_file(j, ctx.paths.stats());

  ctx.manifest.mark_done("verify", {"qa/stats.json"});
  ctx.save();
  return true;
}

// Vanilla answers for the Prior ablation: one hint-free generator call per
// record, cached in priors.jsonl so tuning reruns never re-query.
inline PriorMap ensure_priors(PipelineContext& ctx, const std::vector<QARecord>& records,
                              const std::vector<EntitySet>& sets) {
  PriorMap priors;
  if (std::filesystem::exists(ctx.paths.priors())) {
    for (const Json& rec : read_jsonl(ctx.paths.priors()).records) {
      priors[prior_key(rec.at("doc_id").get<std::string>(),
                       rec.at("question").get<std::string>())] =
          rec.at("answer").get<std::string>();
    }
    return priors;
  }

  std::map<std::string, const EntitySet*> by_id;
  for (const EntitySet& set : sets) by_id[set.doc_id] = &set;
  Gateway gateway = make_gateway(ctx.config);

  JsonlWriter writer(ctx.paths.priors(), ctx.meta());
  for (const QARecord& rec : records) {
    const auto it = by_id.find(rec.semantic.doc_id);
    if (it == by_id.end()) continue;
    const std::string key = prior_key(rec.semantic.doc_id, rec.semantic.question);
    if (priors.count(key) > 0) continue;

    PromptState state;
    state.template_id = "no_tips";
    state.slots = {{"context", document_context(*it->second)},
                   {"target", rec.semantic.doc_id},
                   {"question", rec.semantic.question}};
    std::string answer;
    try {
      answer = parse_answer(gateway.complete(state).raw_text);
    } catch (const TransportError&) {
      continue;  // no cached prior for this record; tuning degrades to none
    }
    priors[key] = answer;
    writer.write(Json{{"doc_id", rec.semantic.doc_id},
                      {"question", rec.semantic.question},
                      {"answer", answer}});
  }
  writer.flush();
  return priors;
}

// tune: staged Warmer adaptation on the configured subset. A hint-free
// inference config needs no Warmer, so the stage records itself as done
// without training.
inline bool stage_tune(PipelineContext& ctx) {
  detail::require_ready(ctx, "tune");
  if (ctx.manifest.stage_done("tune")) return false;

  if (!ctx.config.inference.use_hints) {
    ctx.manifest.mark_done("tune", {});
    ctx.save();
    return true;
  }

  const std::vector<EntitySet> sets = load_entity_sets(ctx.paths.entities());
  const std::vector<QARecord> records = load_qa_records(ctx.paths.qa());
  const QASubsets subsets = build_subsets(records);
  const WarmerConfig wconfig = ctx.config.warmer_config();
  const DocIndex index = DocIndex::build(sets, wconfig);

  PriorMap priors;
  if (ctx.config.tuning.use_prior_answer) {
    priors = ensure_priors(ctx, subsets.get(ctx.config.tuning.subset), sets);
  }

  WarmerModel model(wconfig);
  model.initialize(ctx.config.seed);
  const TuningReport report = run_tuning(model, subsets, index, priors, ctx.config.tuning);

  const std::string ckpt = report.checkpoint_id;
  model.save_checkpoint(ctx.paths.checkpoint(ckpt), ctx.hash);

  nlohmann::json j{{"checkpoint_id", report.checkpoint_id},
                   {"subset_size", report.subset_size},
                   {"structural_epoch_losses", report.structural_epoch_losses},
                   {"semantic_epoch_losses", report.semantic_epoch_losses},
                   {"skipped_gold_out_of_window", report.skipped_gold_out_of_window},
                   {"skipped_unlocatable_spans", report.skipped_unlocatable_spans}};
  j["_meta"] = to_json(ctx.meta()).at("_meta");
  detail::write_json_file(j, ctx.paths.tuning_report(ckpt));

  std::vector<std::string> artifacts = {"checkpoints/" + ckpt + ".bin",
                                        "reports/tuning_" + ckpt + ".json"};
  if (ctx.config.tuning.use_prior_answer) artifacts.push_back("qa/priors.jsonl");
  ctx.manifest.mark_done("tune", artifacts);
  ctx.save();
  return true;
}

// infer: one trace per question. Already-written traces are reused, so an
// interrupted run resumes without recomputing; the file is rewritten in
// question order to stay byte-comparable.
inline bool stage_infer(PipelineContext& ctx) {
  detail::require_ready(ctx, "infer");
  if (ctx.manifest.stage_done("infer")) return false;

  const std::vector<EntitySet> sets = load_entity_sets(ctx.paths.entities());
  const std::vector<QuestionSpec> questions = pipeline_questions(ctx);
  if (questions.empty()) throw std::runtime_error("stage infer: no questions to answer");

  const WarmerConfig wconfig = ctx.config.warmer_config();
  std::optional<DocIndex> index;
  std::optional<WarmerModel> model;
  if (ctx.config.inference.use_hints) {
    index.emplace(DocIndex::build(sets, wconfig));
    model.emplace(wconfig);
    model->load_checkpoint(ctx.paths.checkpoint(ctx.config.tuning.checkpoint_id()), ctx.hash);
  }
  std::map<std::string, const EntitySet*> by_id;
  for (const EntitySet& set : sets) by_id[set.doc_id] = &set;

  std::map<std::string, Json> existing;
  if (std::filesystem::exists(ctx.paths.traces())) {
    for (Json& rec : read_jsonl(ctx.paths.traces()).records) {
      // Take the key first: the assignment moves rec out from under at().
      std::string qid = rec.at("question_id").get<std::string>();
      existing[std::move(qid)] = std::move(rec);
    }
  }

  Gateway gateway = make_gateway(ctx.config);
  JsonlWriter writer(ctx.paths.traces(), ctx.meta());
  for (const QuestionSpec& q : questions) {
    const auto done = existing.find(q.id);
    if (done != existing.end()) {
      writer.write(done->second);
      continue;
    }
    const auto set_it = by_id.find(q.doc_id);
    if (set_it == by_id.end()) {
      throw std::runtime_error("stage infer: question " + q.id + " names unknown doc " +
                               q.doc_id);
    }
    LoopContext loop;
    loop.set = set_it->second;
    loop.gateway = &gateway;
    if (!set_it->second->image_path.empty() && ctx.config.generation.send_image) {
      loop.image_ref = set_it->second->image_path;
    }
    if (ctx.config.inference.use_hints) {
      loop.warmer = &*model;
      loop.feats = &index->features_of(q.doc_id);
      loop.overlay_dir = ctx.paths.overlays().string();
    }
    const InferenceTrace trace = run_loop(loop, q.id, q.question, q.gold, ctx.config.inference);
    writer.write(to_json(trace));
    writer.flush();  // partial progress survives interruption
  }

  ctx.manifest.mark_done("infer", {"traces/traces.jsonl"});
  ctx.save();
  return true;
}

inline std::string config_label(const RunConfig& config) {
  if (!config.inference.use_hints) return "Vanilla";
  return config.inference.recursive ? "Top-K R" : "Top-K";
}

// eval: traces against golds, one report in JSON and one as a text table.
inline bool stage_eval(PipelineContext& ctx) {
  detail::require_ready(ctx, "eval");
  if (ctx.manifest.stage_done("eval")) return false;

  std::vector<InferenceTrace> traces;
  for (const Json& rec : read_jsonl(ctx.paths.traces()).records) {
    traces.push_back(trace_from_json(rec));
  }
  std::map<std::string, std::string> golds;
  for (const QuestionSpec& q : pipeline_questions(ctx)) golds[q.id] = q.gold;

  EvalReport report = build_report(traces, golds, ctx.config.dataset_id, config_label(ctx.config));
  report.config_hash = ctx.hash;

  nlohmann::json j = to_json(report);
  j["_meta"] = to_json(ctx.meta()).at("_meta");
  detail::write_json_file(j, ctx.paths.eval_json());

  std::ofstream table(ctx.paths.eval_table(), std::ios::binary | std::ios::trunc);
  if (!table) throw std::runtime_error("cannot write " + ctx.paths.eval_table().string());
  table << format_report_table(report);

  ctx.manifest.mark_done("eval", {"reports/eval.json", "reports/eval.txt"});
  ctx.save();
  return true;
}

inline bool run_stage(PipelineContext& ctx, const std::string& name) {
  if (name == "parse") return stage_parse(ctx);
  if (name == "generate") return stage_generate(ctx);
  if (name == "verify") return stage_verify(ctx);
  if (name == "tune") return stage_tune(ctx);
  if (name == "infer") return stage_infer(ctx);
  if (name == "eval") return stage_eval(ctx);
  throw std::invalid_argument("unknown stage '" + name + "'");
}

// Stages that would run (in order) for the current manifest state.
inline std::vector<std::string> pending_stages(const PipelineContext& ctx) {
  std::vector<std::string> out;
  for (const std::string& stage : stage_order()) {
    if (!ctx.manifest.stage_done(stage)) out.push_back(stage);
  }
  return out;
}

inline std::vector<std::string> run_pipeline(PipelineContext& ctx) {
  std::vector<std::string> ran;
  for (const std::string& stage : stage_order()) {
    if (run_stage(ctx, stage)) ran.push_back(stage);
  }
  return ran;
}

}  // namespace syndoc
