// Evaluation reports over inference traces: per-iteration generator and
// Warmer ANLS in the layout of the paper's iteration tables, plus JSON and
// aligned-text serializations.
#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/inference.hpp"
#include "syndoc/metrics.hpp"

namespace syndoc {

struct EvalReport {
  std::string dataset_id;
  std::string config_label;
  std::string config_hash;
  std::vector<double> generator_anls;    // index = iteration
  std::vector<double> warmer_top1_anls;  // empty when no Warmer ran
  std::vector<double> warmer_topk_anls;
  double final_anls = 0.0;
  std::size_t n_questions = 0;
  std::size_t n_converged = 0;
  std::size_t n_aborted = 0;
};

namespace detail {

// Answer at iteration t with carry-forward: converged questions keep their
// last answer for later iterations, matching how the iteration tables read.
inline const std::string& answer_at(const InferenceTrace& trace, std::size_t t) {
  const std::size_t last = trace.iterations.size() - 1;
  return trace.iterations[std::min(t, last)].answer;
}

inline const RetrievedCandidates* candidates_at(const InferenceTrace& trace, std::size_t t) {
  if (t == 0) {
    return trace.vanilla_candidates.items.empty() ? nullptr : &trace.vanilla_candidates;
  }
  const RetrievedCandidates* latest = nullptr;
  for (const IterationRecord& rec : trace.iterations) {
    if (rec.iteration >= 1 && static_cast<std::size_t>(rec.iteration) <= t &&
        !rec.candidates.items.empty()) {
      latest = &rec.candidates;
    }
  }
  return latest;
}

}  // namespace detail

// Builds the per-iteration grid. Golds are taken from the gold map when the
// id is present, else from the trace itself; ids missing from both sides
// are an error listing every offender.
inline EvalReport build_report(const std::vector<InferenceTrace>& traces,
                               const std::map<std::string, std::string>& golds,
                               const std::string& dataset_id = "",
                               const std::string& config_label = "") {
  if (traces.empty()) throw std::invalid_argument("build_report: no traces");
  std::vector<std::string> missing;
  for (const InferenceTrace& t : traces) {
    if (golds.find(t.question_id) == golds.end() && t.gold.empty()) {
      missing.push_back(t.question_id);
    }
  }
  if (!missing.empty()) {
    std::string msg = "build_report: missing gold for ids:";
    for (const std::string& id : missing) msg += " " + id;
    throw std::invalid_argument(msg);
  }

  auto gold_of = [&](const InferenceTrace& t) -> const std::string& {
    const auto it = golds.find(t.question_id);
    return it != golds.end() ? it->second : t.gold;
  };

  EvalReport report;
  report.dataset_id = dataset_id;
  report.config_label = config_label;
  report.n_questions = traces.size();

  std::size_t max_iters = 0;
  for (const InferenceTrace& t : traces) {
    if (t.iterations.empty()) throw std::invalid_argument("build_report: empty trace");
    max_iters = std::max(max_iters, t.iterations.size());
    if (t.stop_reason == "converged") ++report.n_converged;
    if (t.aborted_by_error) ++report.n_aborted;
  }

  bool any_candidates = false;
  for (const InferenceTrace& t : traces) {
    if (detail::candidates_at(t, max_iters) != nullptr) any_candidates = true;
  }

  for (std::size_t it = 0; it < max_iters; ++it) {
    double gen_sum = 0.0;
    double w1_sum = 0.0;
    double wk_sum = 0.0;
    std::size_t w_count = 0;
    for (const InferenceTrace& t : traces) {
      const std::string& gold = gold_of(t);
      gen_sum += nls(detail::answer_at(t, it), gold);
      const RetrievedCandidates* cands = detail::candidates_at(t, it);
      if (cands != nullptr) {
        w1_sum += nls(cands->items.front().content, gold);
        double best = 0.0;
        for (const Candidate& c : cands->items) best = std::max(best, nls(c.content, gold));
        wk_sum += best;
        ++w_count;
      }
    }
    report.generator_anls.push_back(gen_sum / static_cast<double>(traces.size()));
    if (any_candidates && w_count == traces.size()) {
      report.warmer_top1_anls.push_back(w1_sum / static_cast<double>(w_count));
      report.warmer_topk_anls.push_back(wk_sum / static_cast<double>(w_count));
    }
  }

  double final_sum = 0.0;
  for (const InferenceTrace& t : traces) final_sum += nls(t.final_answer, gold_of(t));
  report.final_anls = final_sum / static_cast<double>(traces.size());
  return report;
}

inline nlohmann::json to_json(const EvalReport& r) {
  return nlohmann::json{{"dataset_id", r.dataset_id},
                        {"config_label", r.config_label},
                        {"config_hash", r.config_hash},
                        {"generator_anls", r.generator_anls},
                        {"warmer_top1_anls", r.warmer_top1_anls},
                        {"warmer_topk_anls", r.warmer_topk_anls},
                        {"final_anls", r.final_anls},
                        {"n_questions", r.n_questions},
                        {"n_converged", r.n_converged},
                        {"n_aborted", r.n_aborted}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.config_label = j.at("config_label").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.generator_anls = j.at("generator_anls").get<std::vector<double>>();
  r.warmer_top1_anls = j.at("warmer_top1_anls").get<std::vector<double>>();
  r.warmer_topk_anls = j.at("warmer_topk_anls").get<std::vector<double>>();
  r.final_anls = j.at("final_anls").get<double>();
  r.n_questions = j.at("n_questions").get<std::size_t>();
  r.n_converged = j.at("n_converged").get<std::size_t>();
  r.n_aborted = j.at("n_aborted").get<std::size_t>();
  return r;
}

// Iteration table in the paper's layout: one row per iteration, generator
// and Warmer columns side by side. Iteration 0 is the vanilla row.
inline std::string format_report_table(const EvalReport& r) {
  std::ostringstream out;
  out << "dataset: " << (r.dataset_id.empty() ? "-" : r.dataset_id)
      << "  config: " << (r.config_label.empty() ? "-" : r.config_label) << '\n';
  out << std::left << std::setw(10) << "iter" << std::setw(12) << "generator";
  const bool warmer = !r.warmer_top1_anls.empty();
  if (warmer) {
    out << std::setw(14) << "warmer_top1" << std::setw(14) << "warmer_topk";
  }
  out << '\n';
  for (std::size_t i = 0; i < r.generator_anls.size(); ++i) {
    const std::string label = i == 0 ? "0 (vani.)" : std::to_string(i);
    out << std::left << std::setw(10) << label << std::fixed << std::setprecision(4)
        << std::setw(12) << r.generator_anls[i];
    if (warmer && i < r.warmer_top1_anls.size()) {
      out << std::setw(14) << r.warmer_top1_anls[i] << std::setw(14)
          << r.warmer_topk_anls[i];
    }
    out << '\n';
  }
  out << "final_anls " << std::fixed << std::setprecision(4) << r.final_anls
      << "  questions " << r.n_questions << "  converged " << r.n_converged
      << "  aborted " << r.n_aborted << '\n';
  return out.str();
}

}  // namespace syndoc
