// Staged adaptive tuning: structural adaptation on spatial QA over the
// grid head (Eq. 4), then semantic adaptation with the combined span and
// entity losses (Eqs. 5-7). Per-stage parameter freezing, AdamW updates.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "syndoc/autograd.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/model.hpp"
#include "syndoc/qa.hpp"
#include "syndoc/rng.hpp"
#include "syndoc/tokenizer.hpp"

namespace syndoc {

namespace detail {

inline double ce_of(const Eigen::VectorXd& logits, int gold) {
  if (gold < 0 || gold >= logits.size()) {
    throw std::out_of_range("cross entropy: gold index out of range");
  }
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[gold];
}

}  // namespace detail

// Eq. 4.
inline double structural_loss(const Eigen::VectorXd& grid_logits, int gold_index) {
  return detail::ce_of(grid_logits, gold_index);
}

// Eq. 5: start CE plus end CE.
inline double fine_grained_loss(const Eigen::VectorXd& start_logits,
                                const Eigen::VectorXd& end_logits, int gold_start,
                                int gold_end) {
  return detail::ce_of(start_logits, gold_start) + detail::ce_of(end_logits, gold_end);
}

// Eq. 6.
inline double coarse_grained_loss(const Eigen::VectorXd& entity_logits, int gold_entity) {
  return detail::ce_of(entity_logits, gold_entity);
}

// Eq. 7.
inline double combined_loss(double l_fg, double l_cg, double lambda_fg, double lambda_cg) {
  if (!std::isfinite(l_fg) || !std::isfinite(l_cg)) {
    throw std::invalid_argument("combined_loss: non-finite input");
  }
  return lambda_fg * l_fg + lambda_cg * l_cg;
}

struct TuningConfig {
  Subset subset = Subset::both;
  bool use_structural = true;    // Table 2 "St"
  bool use_prior_answer = false; // Table 2 "Prior"
  double lambda_fg = 1.0;
  double lambda_cg = 1.0;
  int epochs_structural = 2;
  int epochs_semantic = 10;
  int batch_size = 16;
  double lr = 2e-5;
  double weight_decay = 0.01;
  bool freeze_backbone_semantic = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda_fg < 0.0 || lambda_cg < 0.0) {
      throw std::invalid_argument("TuningConfig: negative lambda");
    }
    if (lambda_fg == 0.0 && lambda_cg == 0.0) {
      throw std::invalid_argument("TuningConfig: both lambdas zero");
    }
    if (batch_size < 1) throw std::invalid_argument("TuningConfig: batch_size < 1");
    if (epochs_structural < 0 || epochs_semantic < 0) {
      throw std::invalid_argument("TuningConfig: negative epochs");
    }
  }

  // Checkpoint id encodes the Table-2 cell this run occupies.
  std::string checkpoint_id() const {
    return "warmer_s" + std::to_string(static_cast<int>(subset)) + "_st" +
           (use_structural ? "1" : "0") + "_pr" + (use_prior_answer ? "1" : "0") +
           "_seed" + std::to_string(seed);
  }
};

struct TuningReport {
  std::vector<double> structural_epoch_losses;
  std::vector<double> semantic_epoch_losses;
  std::string checkpoint_id;
  std::size_t subset_size = 0;
  int skipped_gold_out_of_window = 0;
  int skipped_unlocatable_spans = 0;
};

// Prior generator answers keyed by (doc, question); used when the Prior
// column of the ablation is enabled.
using PriorMap = std::map<std::string, std::string>;

inline std::string prior_key(const std::string& doc_id, const std::string& question) {
  return doc_id + "#" + to_hex(fnv1a64(question));
}

// First exact occurrence of the answer's word sequence in the window's
// context words. Both sides pass through the same tokenizer, so matching is
// case-insensitive and whitespace-normalized by construction.
inline std::optional<std::pair<int, int>> find_span_label(const Window& w,
                                                          const std::string& answer) {
  const std::vector<std::string> target = word_tokens(answer);
  if (target.empty() || target.size() > w.ctx_words.size()) return std::nullopt;
  for (std::size_t start = 0; start + target.size() <= w.ctx_words.size(); ++start) {
    bool match = true;
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (w.ctx_words[start + i] != target[i]) {
        match = false;
        break;
      }
    }
    if (match) {
      return std::make_pair(static_cast<int>(start),
                            static_cast<int>(start + target.size() - 1));
    }
  }
  return std::nullopt;
}

namespace detail {

struct BatchRunner {
  ag::AdamW optimizer;
  std::function<bool(const std::string&)> trainable;
  int pending = 0;

  BatchRunner(double lr, double weight_decay,
              std::function<bool(const std::string&)> mask)
      : optimizer([&] {
          ag::AdamW::Config c;
          c.lr = lr;
          c.weight_decay = weight_decay;
          return c;
        }()),
        trainable(std::move(mask)) {}

  void flush(ag::ParamStore& store) {
    if (pending == 0) return;
    optimizer.step(store, trainable, 1.0 / static_cast<double>(pending));
    store.zero_grads();
    pending = 0;
  }
};

}  // namespace detail

// Eq. 4 stage: spatial questions supervise the grid head and backbone.
// Every window of a document is a training example with the same gold cell.
inline std::vector<double> run_structural_adaptation(WarmerModel& model,
                                                     const std::vector<QARecord>& records,
                                                     const DocIndex& index,
                                                     const TuningConfig& config) {
  config.validate();
  if (records.empty()) {
    throw std::invalid_argument("run_structural_adaptation: empty record set");
  }
  auto trainable = [](const std::string& name) {
    return WarmerModel::is_backbone_param(name) || WarmerModel::is_grid_head_param(name);
  };
  detail::BatchRunner runner(config.lr, config.weight_decay, trainable);
  model.params().zero_grads();

  std::vector<double> epoch_losses;
  Rng rng(fnv1a64("structural", config.seed));
  for (int epoch = 0; epoch < config.epochs_structural; ++epoch) {
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double total = 0.0;
    int counted = 0;
    for (std::size_t ri : order) {
      const QARecord& rec = records[ri];
      const EntitySet& set = index.set_of(rec.spatial.doc_id);
      const DocFeatures& feats = index.features_of(rec.spatial.doc_id);
      const std::vector<Window> windows = build_windows(
          set, rec.spatial.question, "", feats, model.config(), model.tokenizer());
      for (const Window& w : windows) {
        ag::Tape tape(&model.params());
        const EncodedWindow enc = model.encode(tape, w);
        const ag::Var logits = model.forward_grid(tape, enc);
        const ag::Var loss = tape.ce_rows(logits, {rec.spatial.grid_index});
        total += tape.value(loss)(0, 0);
        ++counted;
        tape.backward(loss);
        if (++runner.pending >= config.batch_size) runner.flush(model.params());
      }
    }
    runner.flush(model.params());
    if (counted == 0) throw std::runtime_error("run_structural_adaptation: no examples");
    epoch_losses.push_back(total / counted);
  }
  return epoch_losses;
}

// Eqs. 5-7 stage: the subset's semantic questions supervise the span and
// entity heads (grid head frozen). Records whose gold entity misses every
// window, or whose answer cannot be located, degrade as specified.
inline std::vector<double> run_semantic_adaptation(WarmerModel& model,
                                                   const std::vector<QARecord>& records,
                                                   const DocIndex& index,
                                                   const PriorMap& priors,
                                                   const TuningConfig& config,
                                                   TuningReport* report = nullptr) {
  config.validate();
  if (records.empty()) {
    throw std::invalid_argument("run_semantic_adaptation: empty subset");
  }
  auto trainable = [&config](const std::string& name) {
    if (WarmerModel::is_semantic_head_param(name)) return true;
    if (config.freeze_backbone_semantic) return false;
    return WarmerModel::is_backbone_param(name);
  };
  detail::BatchRunner runner(config.lr, config.weight_decay, trainable);
  model.params().zero_grads();

  std::vector<double> epoch_losses;
  Rng rng(fnv1a64("semantic", config.seed));
  for (int epoch = 0; epoch < config.epochs_semantic; ++epoch) {
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double total = 0.0;
    int counted = 0;
    for (std::size_t ri : order) {
      const QARecord& rec = records[ri];
      const EntitySet& set = index.set_of(rec.semantic.doc_id);
      const DocFeatures& feats = index.features_of(rec.semantic.doc_id);
      std::string prior;
      if (config.use_prior_answer) {
        const auto it = priors.find(prior_key(rec.semantic.doc_id, rec.semantic.question));
        if (it != priors.end()) prior = it->second;
      }
      const std::vector<Window> windows = build_windows(
          set, rec.semantic.question, prior, feats, model.config(), model.tokenizer());

      const Window* chosen = nullptr;
      int gold_pos = -1;
      for (const Window& w : windows) {
        const int pos = w.find_entity(rec.semantic.entity_id);
        if (pos >= 0) {
          chosen = &w;
          gold_pos = pos;
          break;
        }
      }
      if (chosen == nullptr) {
        if (epoch == 0 && report != nullptr) ++report->skipped_gold_out_of_window;
        continue;
      }

      ag::Tape tape(&model.params());
      const EncodedWindow enc = model.encode(tape, *chosen);
      const RetrieveOut retrieve = model.forward_retrieve(tape, enc, *chosen);
      const ag::Var l_cg = tape.ce_rows(retrieve.logits, {gold_pos});

      ag::Var loss = tape.scale(l_cg, config.lambda_cg);
      const auto span = find_span_label(*chosen, rec.semantic.answer);
      if (span) {
        const SpanOut so = model.forward_span(tape, enc, *chosen);
        const ag::Var l_start = tape.ce_rows(so.start_logits, {span->first});
        const ag::Var l_end = tape.ce_rows(so.end_logits, {span->second});
        const ag::Var l_fg = tape.add(l_start, l_end);
        loss = tape.add(loss, tape.scale(l_fg, config.lambda_fg));
      } else if (epoch == 0 && report != nullptr) {
        ++report->skipped_unlocatable_spans;
      }

      total += tape.value(loss)(0, 0);
      ++counted;
      tape.backward(loss);
      if (++runner.pending >= config.batch_size) runner.flush(model.params());
    }
    runner.flush(model.params());
    if (counted == 0) {
      throw std::runtime_error("run_semantic_adaptation: every record skipped");
    }
    epoch_losses.push_back(total / counted);
  }
  return epoch_losses;
}

// Full staged run in the Table 2 configuration space: structural stage if
// enabled, then semantic on the selected subset.
inline TuningReport run_tuning(WarmerModel& model, const QASubsets& subsets,
                               const DocIndex& index, const PriorMap& priors,
                               const TuningConfig& config) {
  config.validate();
  TuningReport report;
  report.checkpoint_id = config.checkpoint_id();
  const std::vector<QARecord>& subset = subsets.get(config.subset);
  report.subset_size = subset.size();
  if (config.use_structural && config.epochs_structural > 0) {
    report.structural_epoch_losses =
        run_structural_adaptation(model, subset, index, config);
  }
  if (config.epochs_semantic > 0) {
    report.semantic_epoch_losses =
        run_semantic_adaptation(model, subset, index, priors, config, &report);
  }
  return report;
}

// Retrieval accuracy: fraction of records whose Top-1 ranked entity is the
// gold source entity. The Warmer prediction string for ANLS-style scoring
// is the ranked entity's content.
inline double evaluate_retrieval_top1(WarmerModel& model, const std::vector<QARecord>& records,
                                      const DocIndex& index, const PriorMap& priors = {},
                                      bool use_prior = false) {
  if (records.empty()) throw std::invalid_argument("evaluate_retrieval_top1: empty");
  int hits = 0;
  for (const QARecord& rec : records) {
    std::string prior;
    if (use_prior) {
      const auto it = priors.find(prior_key(rec.semantic.doc_id, rec.semantic.question));
      if (it != priors.end()) prior = it->second;
    }
    const std::vector<ScoredEntity> ranked =
        rank_entities(model, index.set_of(rec.semantic.doc_id),
                      index.features_of(rec.semantic.doc_id), rec.semantic.question, prior);
    if (!ranked.empty() && ranked.front().entity_id == rec.semantic.entity_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline double evaluate_grid_accuracy(WarmerModel& model, const std::vector<QARecord>& records,
                                     const DocIndex& index) {
  if (records.empty()) throw std::invalid_argument("evaluate_grid_accuracy: empty");
  int hits = 0;
  for (const QARecord& rec : records) {
    const int pred = predict_grid(model, index.set_of(rec.spatial.doc_id),
                                  index.features_of(rec.spatial.doc_id),
                                  rec.spatial.question);
    if (pred == rec.spatial.grid_index) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace syndoc
