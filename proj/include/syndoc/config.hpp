// Run configuration: strict-schema JSON loading (unknown fields rejected),
// environment interpolation for credentials, and the canonical config hash
// that names run directories and stamps every artifact.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/backends.hpp"
#include "syndoc/geometry.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/inference.hpp"
#include "syndoc/inquiry.hpp"
#include "syndoc/model.hpp"
#include "syndoc/qa.hpp"
#include "syndoc/tuning.hpp"

namespace syndoc {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct InputPaths {
  std::optional<std::string> entities_jsonl;  // pre-parsed canonical sets
  std::optional<std::string> ocr_dir;         // raw OCR JSON files
  std::optional<std::string> pdf_dir;         // raw PDF-parser JSON files
  std::optional<std::string> questions_json;  //[{id, doc_id, question, gold}]
};

struct BackendConfig {
  std::string name = "sim";
  nlohmann::json options = nlohmann::json::object();
  int retry_budget = 3;
  double backoff_base_s = 1.0;
  int max_in_flight = 4;
  double min_interval_s = 0.0;
};

struct RunConfig {
  std::string dataset_id = "dataset";
  std::string category = "-";  // stats table label only
  InputPaths inputs;
  std::string output_dir = "runs";
  std::uint64_t seed = 0;
  GridSpec grid{3, 3};
  std::string backbone = "tiny";
  GenerationConfig generation;
  TuningConfig tuning;
  LoopConfig inference;
  BackendConfig backend;

  WarmerConfig warmer_config() const {
    WarmerConfig w = make_warmer_config(backbone);
    w.grid = grid;
    w.seed = seed;
    return w;
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& where,
                           const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const std::string& a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("config: unknown field '" + where + key + "'");
  }
}

// ${ENV:NAME} interpolation. Only backend option strings pass through here,
// so credentials never need to live in the config file.
inline std::string interpolate_env(const std::string& value) {
  std::string out;
  std::size_t i = 0;
  while (i < value.size()) {
    const std::size_t open = value.find("${ENV:", i);
    if (open == std::string::npos) {
      out += value.substr(i);
      break;
    }
    out += value.substr(i, open - i);
    const std::size_t close = value.find('}', open);
    if (close == std::string::npos) {
      throw ConfigError("config: unterminated ${ENV:...} in backend options");
    }
    const std::string name = value.substr(open + 6, close - open - 6);
    const char* env = std::getenv(name.c_str());
    if (env == nullptr) {
      throw ConfigError("config: environment variable '" + name + "' is not set");
    }
    out += env;
    i = close + 1;
  }
  return out;
}

inline void interpolate_options(nlohmann::json& j) {
  if (j.is_string()) {
    j = interpolate_env(j.get<std::string>());
  } else if (j.is_object() || j.is_array()) {
    for (auto& child : j) interpolate_options(child);
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: root must be an object");
  detail::reject_unknown(j, "", {"dataset_id", "category", "inputs", "output_dir", "seed",
                                 "grid", "backbone", "generation", "tuning", "inference",
                                 "backend"});
  RunConfig c;
  try {
    c.dataset_id = j.value("dataset_id", c.dataset_id);
    c.category = j.value("category", c.category);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.seed = j.value("seed", c.seed);
    c.backbone = j.value("backbone", c.backbone);
    if (j.contains("inputs")) {
      const auto& in = j.at("inputs");
      detail::reject_unknown(in, "inputs.",
                             {"entities_jsonl", "ocr_dir", "pdf_dir", "questions_json"});
      if (in.contains("entities_jsonl")) c.inputs.entities_jsonl = in.at("entities_jsonl");
      if (in.contains("ocr_dir")) c.inputs.ocr_dir = in.at("ocr_dir");
      if (in.contains("pdf_dir")) c.inputs.pdf_dir = in.at("pdf_dir");
      if (in.contains("questions_json")) c.inputs.questions_json = in.at("questions_json");
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      detail::reject_unknown(g, "grid.", {"rows", "cols"});
      c.grid.rows = g.value("rows", 3);
      c.grid.cols = g.value("cols", 3);
      if (!c.grid.valid()) throw ConfigError("config: grid dimensions must be positive");
    }
    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      detail::reject_unknown(g, "generation.", {"entities_per_doc", "send_image", "threads"});
      c.generation.entities_per_doc = g.value("entities_per_doc", 10);
      c.generation.send_image = g.value("send_image", true);
      c.generation.threads = g.value("threads", 1);
    }
    if (j.contains("tuning")) {
      const auto& t = j.at("tuning");
      detail::reject_unknown(
          t, "tuning.",
          {"subset", "use_structural", "use_prior_answer", "lambda_fg", "lambda_cg",
           "epochs_structural", "epochs_semantic", "batch_size", "lr", "weight_decay",
           "freeze_backbone_semantic"});
      if (t.contains("subset")) c.tuning.subset = subset_from_string(t.at("subset"));
      c.tuning.use_structural = t.value("use_structural", true);
      c.tuning.use_prior_answer = t.value("use_prior_answer", false);
      c.tuning.lambda_fg = t.value("lambda_fg", 1.0);
      c.tuning.lambda_cg = t.value("lambda_cg", 1.0);
      c.tuning.epochs_structural = t.value("epochs_structural", 2);
      c.tuning.epochs_semantic = t.value("epochs_semantic", 10);
      c.tuning.batch_size = t.value("batch_size", 16);
      c.tuning.lr = t.value("lr", 2e-5);
      c.tuning.weight_decay = t.value("weight_decay", 0.01);
      c.tuning.freeze_backbone_semantic = t.value("freeze_backbone_semantic", false);
      c.tuning.validate();
    }
    if (j.contains("inference")) {
      const auto& i = j.at("inference");
      detail::reject_unknown(i, "inference.",
                             {"k", "max_iter", "use_hints", "use_bbox_hints", "recursive",
                              "convergence_window"});
      c.inference.k = i.value("k", 3);
      c.inference.max_iter = i.value("max_iter", 5);
      c.inference.use_hints = i.value("use_hints", true);
      c.inference.use_bbox_hints = i.value("use_bbox_hints", false);
      c.inference.recursive = i.value("recursive", true);
      c.inference.convergence_window = i.value("convergence_window", 2);
      c.inference.validate();
    }
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      detail::reject_unknown(b, "backend.",
                             {"name", "options", "retry_budget", "backoff_base_s",
                              "max_in_flight", "min_interval_s"});
      c.backend.name = b.value("name", std::string("sim"));
      if (b.contains("options")) c.backend.options = b.at("options");
      c.backend.retry_budget = b.value("retry_budget", 3);
      c.backend.backoff_base_s = b.value("backoff_base_s", 1.0);
      c.backend.max_in_flight = b.value("max_in_flight", 4);
      c.backend.min_interval_s = b.value("min_interval_s", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.generation.seed = c.seed;
  c.generation.grid = c.grid;
  c.tuning.seed = c.seed;
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// Canonical serialization of everything that affects results. output_dir is
// deliberately excluded: the same experiment written to two places must
// produce identical artifacts.
inline nlohmann::json config_identity_json(const RunConfig& c) {
  nlohmann::json inputs = nlohmann::json::object();
  if (c.inputs.entities_jsonl) inputs["entities_jsonl"] = *c.inputs.entities_jsonl;
  if (c.inputs.ocr_dir) inputs["ocr_dir"] = *c.inputs.ocr_dir;
  if (c.inputs.pdf_dir) inputs["pdf_dir"] = *c.inputs.pdf_dir;
  if (c.inputs.questions_json) inputs["questions_json"] = *c.inputs.questions_json;
  return nlohmann::json{
      {"dataset_id", c.dataset_id},
      {"category", c.category},
      {"inputs", inputs},
      {"seed", c.seed},
      {"grid", {{"rows", c.grid.rows}, {"cols", c.grid.cols}}},
      {"backbone", c.backbone},
      {"generation",
       {{"entities_per_doc", c.generation.entities_per_doc},
        {"send_image", c.generation.send_image}}},
      {"tuning",
       {{"subset", to_string(c.tuning.subset)},
        {"use_structural", c.tuning.use_structural},
        {"use_prior_answer", c.tuning.use_prior_answer},
        {"lambda_fg", c.tuning.lambda_fg},
        {"lambda_cg", c.tuning.lambda_cg},
        {"epochs_structural", c.tuning.epochs_structural},
        {"epochs_semantic", c.tuning.epochs_semantic},
        {"batch_size", c.tuning.batch_size},
        {"lr", c.tuning.lr},
        {"weight_decay", c.tuning.weight_decay},
        {"freeze_backbone_semantic", c.tuning.freeze_backbone_semantic}}},
      {"inference",
       {{"k", c.inference.k},
        {"max_iter", c.inference.max_iter},
        {"use_hints", c.inference.use_hints},
        {"use_bbox_hints", c.inference.use_bbox_hints},
        {"recursive", c.inference.recursive},
        {"convergence_window", c.inference.convergence_window}}},
      {"backend",
       {{"name", c.backend.name},
        {"options", c.backend.options},
        {"retry_budget", c.backend.retry_budget}}}};
}

inline std::string config_hash(const RunConfig& c) {
  return to_hex(fnv1a64(config_identity_json(c).dump()));
}

// Builds the gateway from the backend section. Interpolation of ${ENV:...}
// happens here, at use time, never in the stored config or its hash.
inline Gateway make_gateway(const RunConfig& c) {
  nlohmann::json options = c.backend.options;
  detail::interpolate_options(options);
  RetryPolicy retry;
  retry.budget = c.backend.retry_budget;
  retry.backoff_base_s = c.backend.backoff_base_s;
  GatewayLimits limits;
  limits.max_in_flight = c.backend.max_in_flight;
  limits.min_interval_s = c.backend.min_interval_s;
  return Gateway(make_backend(c.backend.name, options), retry, limits);
}

}  // namespace syndoc
