// Prompt protocol: the fixed template texts, slot filling, tip insertion,
// payload digests, and reply parsing. Rendering is pure; transport lives in
// backends.hpp.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "syndoc/geometry.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

class PromptError : public std::runtime_error {
 public:
  explicit PromptError(const std::string& what) : std::runtime_error(what) {}
};

struct PromptState {
  std::string template_id;
  std::map<std::string, std::string> slots;
  std::vector<std::string> tips;        // rank order, best first
  std::vector<BBox> tip_boxes;          // parallel to tips for bbox templates
  std::optional<std::string> image_ref; // page image path, overlay drawn by caller
};

struct PromptPayload {
  std::string text;
  std::optional<std::string> image_ref;
  std::vector<BBox> overlay_boxes;
};

namespace detail {

struct TemplateDef {
  const char* text;                      // placeholders {name}
  std::vector<const char*> slots;        // required slot names
  bool uses_tips;
  bool uses_bbox;
};

inline const std::map<std::string, TemplateDef>& template_registry() {
  static const std::map<std::string, TemplateDef> reg = {
      {"gen_semantic",
       {"Based on the above context {context} and target document image, generate a "
        "human-asked SHORT question (output question only) of which answer is exactly "
        "same as \"{target}\"",
        {"context", "target"},
        false,
        false}},
      {"gen_spatial",
       {"Change the question {question} to a very short question about finding the "
        "position of the answer from input document image. For example, where is the "
        "answer of xx located?",
        {"question"},
        false,
        false}},
      {"verify_user_input",
       {"Based on the provided Context {context} from the target form and the form "
        "image itself, check if the target information itself (do not consider the "
        "context) \"{target}\" was entered by the form user (not part of the form "
        "template). Only output \"Yes\" if the {target} is exactly provided by user "
        "not from the form template, do not consider context information. The "
        "response should follow the format below: \"Response\": \"Yes/No\"",
        {"context", "target"},
        false,
        false}},
      {"verify_answer",
       {"Ignore the context information and domain knowledge (e.g. FAX NUMBER). Just "
        "consider whether '{answer}' could be the expected answer to the question "
        "'{question}'. Output format: {'Response': 'Yes/No', 'Explanation': 'xxx'}.",
        {"answer", "question"},
        false,
        false}},
      {"no_tips",
       {"Above is the context {context} of the target {target}. Please answer the "
        "question '{question}' based on the context and image. The output format "
        "must strictly follow:\nAnswer: xxx",
        {"context", "target", "question"},
        false,
        false}},
      {"one_tip",
       {"The above is the context {context} of the target {target}. This is a Tip: "
        "'{tip}' (which may not be correct). Please answer the question '{question}' "
        "based on the context and image. The output format must strictly "
        "follow:\nAnswer: xxx",
        {"context", "target", "question"},
        true,
        false}},
      {"multi_tips",
       {"The above is the context {context} of the target {target}. These are the "
        "Tips (which may not be correct):\n{tips}\nPlease answer the question "
        "'{question}' based on the context and image. The output format must "
        "strictly follow:\nAnswer: xxx",
        {"context", "target", "question"},
        true,
        false}},
      {"bbox_no_tips",
       {"Above is the context {context} of the target {target} document,\nPlease "
        "answer the question {question},\nBased on the context and image,\nThe "
        "output format strictly follows:\nAnswer: xxx",
        {"context", "target", "question"},
        false,
        true}},
      {"bbox_one_tip",
       {"The above is the context {context} of the target {target} document.\nThis "
        "is a Tip: '{tip}' (which may not be correct).\nPlease answer the question "
        "{question},\nBased on the context and image,\nThe output format strictly "
        "follows:\nAnswer: xxx",
        {"context", "target", "question"},
        true,
        true}},
      {"bbox_multi_tips",
       {"The above is the context {context} of the target {target} document.\nThese "
        "are Tips: '{tips}', (which may not be correct.)\nPlease answer the question "
        "{question},\nBased on the context and images,\nThe output format strictly "
        "follows:\nAnswer: xxx",
        {"context", "target", "question"},
        true,
        true}},
  };
  return reg;
}

inline std::string substitute(std::string_view tmpl,
                              const std::map<std::string, std::string>& values,
                              const std::string& template_id) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    // {'Response': ...} in verify_answer is literal text, not a placeholder:
    // only {name} forms made of identifier characters substitute.
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const std::string_view name = tmpl.substr(i + 1, close - i - 1);
        const bool ident = !name.empty() &&
                           std::all_of(name.begin(), name.end(), [](char c) {
                             return (c >= 'a' && c <= 'z') || c == '_';
                           });
        if (ident) {
          const auto it = values.find(std::string(name));
          if (it == values.end()) {
            throw PromptError("template " + template_id + ": missing slot '" +
                              std::string(name) + "'");
          }
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i];
    ++i;
  }
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& template_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& [id, def] : detail::template_registry()) v.push_back(id);
    return v;
  }();
  return ids;
}

// Renders the template text with slots and tips filled. Tips go in rank
// order: single-tip templates consume the first tip, multi-tip templates a
// numbered list or quoted sequence. Bbox templates carry overlay boxes and
// append their normalized coordinates as text.
inline PromptPayload render_prompt(const PromptState& state) {
  const auto& reg = detail::template_registry();
  const auto it = reg.find(state.template_id);
  if (it == reg.end()) {
    throw PromptError("unknown template '" + state.template_id + "'");
  }
  const detail::TemplateDef& def = it->second;

  std::map<std::string, std::string> values = state.slots;
  for (const char* slot : def.slots) {
    if (values.find(slot) == values.end()) {
      throw PromptError("template " + state.template_id + ": missing slot '" +
                        std::string(slot) + "'");
    }
  }
  if (def.uses_tips) {
    if (state.tips.empty()) {
      throw PromptError("template " + state.template_id + ": requires at least one tip");
    }
    if (state.template_id == "one_tip" || state.template_id == "bbox_one_tip") {
      values["tip"] = state.tips.front();
    } else if (state.template_id == "multi_tips") {
      std::string list;
      for (std::size_t i = 0; i < state.tips.size(); ++i) {
        list += std::to_string(i + 1) + ". '" + state.tips[i] + "'";
        if (i + 1 < state.tips.size()) list += '\n';
      }
      values["tips"] = list;
    } else {  // bbox_multi_tips: quoted sequence inside the template's quotes
      std::string joined;
      for (std::size_t i = 0; i < state.tips.size(); ++i) {
        if (i > 0) joined += "', '";
        joined += state.tips[i];
      }
      values["tips"] = joined;
    }
  }

  PromptPayload payload;
  payload.text = detail::substitute(def.text, values, state.template_id);
  if (def.uses_bbox) {
    if (!state.tip_boxes.empty()) {
      std::string lines = "\nTip locations (x0,y0,x1,y1 in 0-1000):";
      for (const BBox& b : state.tip_boxes) {
        lines += " [" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
                 std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "]";
      }
      payload.text += lines;
    }
    payload.overlay_boxes = state.tip_boxes;
  }
  payload.image_ref = state.image_ref;
  return payload;
}

// Stable identity of a request: template plus slot values plus tips. Keys
// the scripted mock and the trace prompt digests.
inline std::string payload_digest(const PromptState& state) {
  std::uint64_t h = fnv1a64(state.template_id);
  for (const auto& [k, v] : state.slots) {  // std::map iterates sorted
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64("\n", h);
  }
  for (const auto& tip : state.tips) {
    h = fnv1a64("tip:", h);
    h = fnv1a64(tip, h);
    h = fnv1a64("\n", h);
  }
  return to_hex(h);
}

// Extracts the answer: text after the last "Answer:" marker, else the whole
// reply. Trimmed either way; an empty reply stays empty.
inline std::string parse_answer(std::string_view reply) {
  const std::string_view marker = "Answer:";
  const std::size_t pos = reply.rfind(marker);
  if (pos == std::string_view::npos) return std::string(trim(reply));
  return std::string(trim(reply.substr(pos + marker.size())));
}

// Extracts a yes/no verdict. Accepts the '"Response": "Yes"' format with
// either quote style, or a bare leading yes/no. Anything else is a refusal
// and reads as no.
inline bool parse_yes_no(std::string_view reply) {
  const std::string lower = to_lower_ascii(std::string(reply));
  const std::size_t field = lower.find("response");
  if (field != std::string::npos) {
    std::size_t i = field + 8;
    while (i < lower.size() &&
           (lower[i] == '"' || lower[i] == '\'' || lower[i] == ':' ||
            is_space(lower[i]))) {
      ++i;
    }
    if (lower.compare(i, 3, "yes") == 0) return true;
    if (lower.compare(i, 2, "no") == 0) return false;
  }
  const std::string head = to_lower_ascii(std::string(trim(reply)));
  if (head.rfind("yes", 0) == 0) return true;
  return false;
}

}  // namespace syndoc
