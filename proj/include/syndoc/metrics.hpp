// ANLS scoring: Levenshtein distance over code points, normalized similarity
// with the 0.5 threshold convention, corpus averages, and top-K variants.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "syndoc/text.hpp"

namespace syndoc {

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::vector<std::uint32_t> ca = utf8_codepoints(a);
  const std::vector<std::uint32_t> cb = utf8_codepoints(b);
  const std::size_t n = ca.size();
  const std::size_t m = cb.size();
  if (n == 0) return m;
  if (m == 0) return n;

  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (ca[i - 1] == cb[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline constexpr double kNlsThreshold = 0.5;

// Normalized Levenshtein similarity, thresholded. Comparison is
// case-insensitive with whitespace normalization; empty predictions score 0.
inline double nls(std::string_view pred, std::string_view gold,
                  double threshold = kNlsThreshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("nls: threshold must be in (0,1)");
  }
  const std::string p = fold_for_match(pred);
  const std::string g = fold_for_match(gold);
  if (p.empty()) return 0.0;
  const std::size_t lp = utf8_codepoints(p).size();
  const std::size_t lg = utf8_codepoints(g).size();
  const std::size_t denom = std::max<std::size_t>({lp, lg, 1});
  const double d = static_cast<double>(levenshtein(p, g)) / static_cast<double>(denom);
  const double score = 1.0 - d;
  return score >= threshold ? score : 0.0;
}

struct ScoredItem {
  std::string question_id;
  std::string prediction;
  std::string gold;
  double nls_score = 0.0;
  std::optional<int> iteration;
};

inline double anls(const std::vector<ScoredItem>& items) {
  if (items.empty()) throw std::invalid_argument("anls: empty item list");
  double sum = 0.0;
  for (const auto& it : items) sum += it.nls_score;
  return sum / static_cast<double>(items.size());
}

inline double anls_of(const std::vector<std::string>& preds,
                      const std::vector<std::string>& golds) {
  if (preds.size() != golds.size()) throw std::invalid_argument("anls_of: size mismatch");
  if (preds.empty()) throw std::invalid_argument("anls_of: empty item list");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += nls(preds[i], golds[i]);
  return sum / static_cast<double>(preds.size());
}

// Mean over items of the best candidate score; candidate lists are ranked,
// so a K prefix gives the top-K variant.
inline double topk_anls(const std::vector<std::vector<std::string>>& candidates_per_item,
                        const std::vector<std::string>& golds,
                        std::size_t k = 0) {
  if (candidates_per_item.size() != golds.size()) {
    throw std::invalid_argument("topk_anls: size mismatch");
  }
  if (candidates_per_item.empty()) throw std::invalid_argument("topk_anls: empty item list");
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates_per_item.size(); ++i) {
    const auto& cands = candidates_per_item[i];
    if (cands.empty()) throw std::invalid_argument("topk_anls: item without candidates");
    const std::size_t limit = k == 0 ? cands.size() : std::min(k, cands.size());
    double best = 0.0;
    for (std::size_t c = 0; c < limit; ++c) {
      best = std::max(best, nls(cands[c], golds[i]));
    }
    sum += best;
  }
  return sum / static_cast<double>(candidates_per_item.size());
}

}  // namespace syndoc
