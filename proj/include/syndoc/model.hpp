// The Warmer model: multimodal input assembly with context windowing, a
// transformer backbone, entity pooling and fusion, and the entity, span,
// and grid heads. One forward implementation serves training and eval.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "syndoc/autograd.hpp"
#include "syndoc/entities.hpp"
#include "syndoc/features.hpp"
#include "syndoc/geometry.hpp"
#include "syndoc/hash.hpp"
#include "syndoc/image.hpp"
#include "syndoc/rng.hpp"
#include "syndoc/tokenizer.hpp"

namespace syndoc {

struct WarmerConfig {
  std::string backbone = "tiny";
  int d_model = 32;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 64;
  int vocab_size = 512;
  int max_len = 128;
  int visual_dim = 16;
  int coarse_layers = 1;
  GridSpec grid{3, 3};
  GridSpec patch_grid{2, 2};
  bool use_layout = true;
  bool use_grid = true;
  bool use_patches = false;
  std::uint64_t seed = 42;

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0) {
      throw std::invalid_argument("WarmerConfig: non-positive dimension");
    }
    if (d_model % n_heads != 0) {
      throw std::invalid_argument("WarmerConfig: d_model must divide into heads");
    }
    if (max_len < 16) throw std::invalid_argument("WarmerConfig: max_len too small");
    if (!grid.valid() || !patch_grid.valid()) {
      throw std::invalid_argument("WarmerConfig: bad grid spec");
    }
  }

  int entity_width() const { return d_model + visual_dim + d_model; }
  int grid_cells() const { return use_grid ? grid.cells() : 0; }
  int patch_cells() const { return use_patches ? patch_grid.cells() : 0; }
};

// Reference backbone presets. All share the same architecture and random
// initialization; they differ in which modalities reach the encoder, which
// is what the backbone comparison varies.
inline WarmerConfig make_warmer_config(const std::string& backbone) {
  WarmerConfig c;
  c.backbone = backbone;
  if (backbone == "tiny") {
    return c;
  }
  if (backbone == "text") {
    c.d_model = 64;
    c.n_heads = 4;
    c.n_layers = 2;
    c.d_ff = 128;
    c.vocab_size = 4096;
    c.max_len = 256;
    c.use_layout = false;
    c.use_patches = false;
    return c;
  }
  if (backbone == "text_layout") {
    c.d_model = 64;
    c.n_heads = 4;
    c.n_layers = 2;
    c.d_ff = 128;
    c.vocab_size = 4096;
    c.max_len = 256;
    c.use_layout = true;
    c.use_patches = false;
    return c;
  }
  if (backbone == "text_layout_vision") {
    c.d_model = 64;
    c.n_heads = 4;
    c.n_layers = 2;
    c.d_ff = 128;
    c.vocab_size = 4096;
    c.max_len = 256;
    c.use_layout = true;
    c.use_patches = true;
    return c;
  }
  throw std::invalid_argument("unknown backbone '" + backbone + "'");
}

// Segment ids mark the roles of Eq. 1's inputs in the flat sequence.
enum Segment : int {
  kSegSpecial = 0,
  kSegQuestion = 1,
  kSegPrior = 2,
  kSegContext = 3,
  kSegGrid = 4,
  kSegPatch = 5,
};
inline constexpr int kSegmentCount = 6;

// Per-document fixed features, computed once and shared across windows.
struct DocFeatures {
  Eigen::MatrixXd v;            // N x visual_dim
  Eigen::MatrixXd s;            // N x d_model
  Eigen::MatrixXd grid_pixels;  // cells x 64
  Eigen::MatrixXd patch_pixels; // patch cells x 64 (empty when unused)
};

inline DocFeatures build_doc_features(const EntitySet& set, const WarmerConfig& config) {
  Gray8 page;
  if (!set.image_path.empty() && std::filesystem::exists(set.image_path)) {
    page = read_pgm(set.image_path);
  }
  DocFeatures f;
  const int n = static_cast<int>(set.entities.size());
  f.v = Eigen::MatrixXd::Zero(n, config.visual_dim);
  f.s = Eigen::MatrixXd::Zero(n, config.d_model);
  for (int i = 0; i < n; ++i) {
    const TextLineEntity& e = set.entities[static_cast<std::size_t>(i)];
    f.v.row(i) = embed_visual(page, e.bbox, set.page_width_px, set.page_height_px,
                              config.visual_dim);
    f.s.row(i) = embed_sentence(e.content, config.d_model);
  }
  f.grid_pixels = Eigen::MatrixXd::Zero(config.grid_cells(), kGridCellSide * kGridCellSide);
  if (config.use_grid) {
    for (int r = 0; r < config.grid.rows; ++r) {
      for (int c = 0; c < config.grid.cols; ++c) {
        f.grid_pixels.row(r * config.grid.cols + c) =
            grid_cell_pixels(page, config.grid, r, c);
      }
    }
  }
  if (config.use_patches) {
    f.patch_pixels =
        Eigen::MatrixXd::Zero(config.patch_grid.cells(), kGridCellSide * kGridCellSide);
    for (int r = 0; r < config.patch_grid.rows; ++r) {
      for (int c = 0; c < config.patch_grid.cols; ++c) {
        f.patch_pixels.row(r * config.patch_grid.cols + c) =
            grid_cell_pixels(page, config.patch_grid, r, c);
      }
    }
  }
  return f;
}

// A corpus with per-document fixed features, addressable by doc id.
struct DocIndex {
  std::vector<EntitySet> sets;
  std::vector<DocFeatures> features;
  std::map<std::string, std::size_t> by_id;

  static DocIndex build(std::vector<EntitySet> sets_in, const WarmerConfig& config) {
    DocIndex idx;
    idx.sets = std::move(sets_in);
    idx.features.reserve(idx.sets.size());
    for (std::size_t i = 0; i < idx.sets.size(); ++i) {
      idx.features.push_back(build_doc_features(idx.sets[i], config));
      if (!idx.by_id.emplace(idx.sets[i].doc_id, i).second) {
        throw std::invalid_argument("DocIndex: duplicate doc_id " + idx.sets[i].doc_id);
      }
    }
    return idx;
  }

  std::size_t index_of(const std::string& doc_id) const {
    const auto it = by_id.find(doc_id);
    if (it == by_id.end()) throw std::out_of_range("DocIndex: unknown doc_id " + doc_id);
    return it->second;
  }

  const EntitySet& set_of(const std::string& doc_id) const { return sets[index_of(doc_id)]; }
  const DocFeatures& features_of(const std::string& doc_id) const {
    return features[index_of(doc_id)];
  }
};

// One backbone-sized window over a document: text token ids plus aligned
// coordinates, entity spans, and the fixed grid/patch features.
struct Window {
  std::vector<int> ids;             // text tokens only
  std::vector<int> segments;        // full sequence incl. grid/patch rows
  Eigen::MatrixXd ctx_coords;       // n_ctx x 4, normalized to [0,1]
  std::vector<std::string> ctx_words;  // word per context token, for span labels
  int context_begin = 0;            // token index of first context token
  int context_end = 0;
  std::vector<int> entity_ids;      // entities present, in document order
  std::vector<std::pair<int, int>> entity_ranges;  // token ranges, parallel
  Eigen::MatrixXd v_feats;          // per present entity
  Eigen::MatrixXd s_feats;
  const DocFeatures* doc = nullptr;

  int total_len() const { return static_cast<int>(segments.size()); }
  int context_len() const { return context_end - context_begin; }

  // Index into entity_ids for a context token offset, -1 between entities.
  std::vector<int> token_entity;    // size context_len()

  int find_entity(int entity_id) const {
    for (std::size_t i = 0; i < entity_ids.size(); ++i) {
      if (entity_ids[i] == entity_id) return static_cast<int>(i);
    }
    return -1;
  }
};

namespace detail {

inline std::vector<int> truncated_tokens(const Tokenizer& tok, const std::string& text,
                                         int cap) {
  std::vector<int> ids = tok.encode(text);
  if (static_cast<int>(ids.size()) > cap) ids.resize(static_cast<std::size_t>(cap));
  return ids;
}

}  // namespace detail

// Splits a document into overlapping windows that respect entity
// boundaries. The stride is half the context budget, so every entity
// appears in at least one window and most appear in two.
inline std::vector<Window> build_windows(const EntitySet& set, const std::string& question,
                                         const std::string& prior_answer,
                                         const DocFeatures& doc, const WarmerConfig& config,
                                         const Tokenizer& tok) {
  const int q_cap = config.max_len / 4;
  const std::vector<int> q_ids = detail::truncated_tokens(tok, question, q_cap);
  const std::vector<int> a_ids = prior_answer.empty()
                                     ? std::vector<int>{}
                                     : detail::truncated_tokens(tok, prior_answer, q_cap);
  const int overhead = 1 + static_cast<int>(q_ids.size()) + 1 +
                       (a_ids.empty() ? 0 : static_cast<int>(a_ids.size()) + 1) + 1;
  const int fixed_tail = config.grid_cells() + config.patch_cells();
  const int budget = config.max_len - overhead - fixed_tail;
  if (budget < 4) throw std::invalid_argument("build_windows: question leaves no context room");

  std::vector<std::vector<std::string>> entity_words;
  std::vector<std::vector<int>> entity_tokens;
  entity_words.reserve(set.entities.size());
  entity_tokens.reserve(set.entities.size());
  for (const auto& e : set.entities) {
    std::vector<std::string> words = word_tokens(e.content);
    if (static_cast<int>(words.size()) > budget) {
      words.resize(static_cast<std::size_t>(budget));
    }
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& word : words) ids.push_back(tok.encode_word(word));
    entity_words.push_back(std::move(words));
    entity_tokens.push_back(std::move(ids));
  }

  auto make_window = [&](std::size_t first, std::size_t last_exclusive) {
    Window w;
    w.doc = &doc;
    w.ids.push_back(Tokenizer::kClsId);
    w.segments.push_back(kSegSpecial);
    for (int id : q_ids) {
      w.ids.push_back(id);
      w.segments.push_back(kSegQuestion);
    }
    w.ids.push_back(Tokenizer::kSepId);
    w.segments.push_back(kSegSpecial);
    if (!a_ids.empty()) {
      for (int id : a_ids) {
        w.ids.push_back(id);
        w.segments.push_back(kSegPrior);
      }
      w.ids.push_back(Tokenizer::kSepId);
      w.segments.push_back(kSegSpecial);
    }
    w.context_begin = static_cast<int>(w.ids.size());
    std::vector<Eigen::RowVector4d> coords;
    for (std::size_t i = first; i < last_exclusive; ++i) {
      const TextLineEntity& e = set.entities[i];
      if (entity_tokens[i].empty()) continue;
      const int start = static_cast<int>(w.ids.size());
      for (std::size_t t = 0; t < entity_tokens[i].size(); ++t) {
        w.ids.push_back(entity_tokens[i][t]);
        w.segments.push_back(kSegContext);
        w.ctx_words.push_back(entity_words[i][t]);
        coords.emplace_back(e.bbox.x_min / 1000.0, e.bbox.y_min / 1000.0,
                            e.bbox.x_max / 1000.0, e.bbox.y_max / 1000.0);
        w.token_entity.push_back(static_cast<int>(w.entity_ids.size()));
      }
      w.entity_ids.push_back(e.id);
      w.entity_ranges.emplace_back(start, static_cast<int>(w.ids.size()));
    }
    w.context_end = static_cast<int>(w.ids.size());
    w.ids.push_back(Tokenizer::kSepId);
    w.segments.push_back(kSegSpecial);
    w.ctx_coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(coords.size()), 4);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      w.ctx_coords.row(static_cast<Eigen::Index>(i)) = coords[i];
    }
    for (int g = 0; g < config.grid_cells(); ++g) w.segments.push_back(kSegGrid);
    for (int p = 0; p < config.patch_cells(); ++p) w.segments.push_back(kSegPatch);

    const int n = static_cast<int>(w.entity_ids.size());
    w.v_feats = Eigen::MatrixXd::Zero(n, config.visual_dim);
    w.s_feats = Eigen::MatrixXd::Zero(n, config.d_model);
    for (int i = 0; i < n; ++i) {
      w.v_feats.row(i) = doc.v.row(w.entity_ids[static_cast<std::size_t>(i)]);
      w.s_feats.row(i) = doc.s.row(w.entity_ids[static_cast<std::size_t>(i)]);
    }
    return w;
  };

  std::vector<Window> out;
  if (set.entities.empty()) {
    out.push_back(make_window(0, 0));
    return out;
  }
  std::size_t first = 0;
  while (first < set.entities.size()) {
    int used = 0;
    std::size_t last = first;
    while (last < set.entities.size()) {
      const int need = static_cast<int>(entity_tokens[last].size());
      if (used + need > budget && last > first) break;
      used += need;
      ++last;
      if (used >= budget) break;
    }
    out.push_back(make_window(first, last));
    if (last >= set.entities.size()) break;
    // Advance by half the budget in tokens, at least one entity.
    int walked = 0;
    std::size_t next = first;
    while (next < last && walked < budget / 2) {
      walked += static_cast<int>(entity_tokens[next].size());
      ++next;
    }
    first = std::max(next, first + 1);
  }
  return out;
}

struct EncodedWindow {
  ag::Var all;   // T x d
  ag::Var cls;   // 1 x d
  ag::Var t_c;   // n_ctx x d (absent context -> 0 x d)
  ag::Var grid;  // cells x d
};

struct RetrieveOut {
  ag::Var logits;                // 1 x N
  std::vector<int> entity_ids;   // column order
};

struct SpanOut {
  ag::Var start_logits;  // 1 x n_ctx
  ag::Var end_logits;    // 1 x n_ctx
};

class WarmerModel {
 public:
  explicit WarmerModel(WarmerConfig config)
      : config_(config), tokenizer_(config.vocab_size) {
    config_.validate();
    build_params();
    initialize(config_.seed);
  }

  const WarmerConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  ag::ParamStore& params() { return store_; }
  const ag::ParamStore& params() const { return store_; }

  // Eq. 1: embed the flat sequence and run the backbone encoder.
  EncodedWindow encode(ag::Tape& tape, const Window& w) const {
    const int n_text = static_cast<int>(w.ids.size());
    const int n_ctx = w.context_len();
    if (w.total_len() > config_.max_len) {
      throw std::invalid_argument("encode: window exceeds max_len");
    }
    ag::Var text = tape.gather_rows(tape.param("emb.tok"), w.ids);
    if (config_.use_layout && n_ctx > 0) {
      ag::Var coords = tape.constant(w.ctx_coords);
      ag::Var proj = tape.add_rowvec(tape.matmul(coords, tape.param("coord_proj.W")),
                                     tape.param("coord_proj.b"));
      std::vector<ag::Var> parts;
      if (w.context_begin > 0) parts.push_back(tape.slice_rows(text, 0, w.context_begin));
      parts.push_back(tape.add(tape.slice_rows(text, w.context_begin, n_ctx), proj));
      if (w.context_end < n_text) {
        parts.push_back(tape.slice_rows(text, w.context_end, n_text - w.context_end));
      }
      text = tape.concat_rows(parts);
    }
    std::vector<ag::Var> seq_parts{text};
    if (config_.use_grid) {
      ag::Var g = tape.constant(w.doc->grid_pixels);
      seq_parts.push_back(tape.add_rowvec(tape.matmul(g, tape.param("grid_proj.W")),
                                          tape.param("grid_proj.b")));
    }
    if (config_.use_patches) {
      ag::Var p = tape.constant(w.doc->patch_pixels);
      seq_parts.push_back(tape.add_rowvec(tape.matmul(p, tape.param("patch_proj.W")),
                                          tape.param("patch_proj.b")));
    }
    ag::Var x = seq_parts.size() == 1 ? seq_parts[0] : tape.concat_rows(seq_parts);

    const int total = static_cast<int>(tape.value(x).rows());
    if (total != w.total_len()) throw std::logic_error("encode: sequence length mismatch");
    std::vector<int> positions(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) positions[static_cast<std::size_t>(i)] = i;
    x = tape.add(x, tape.gather_rows(tape.param("emb.pos"), positions));
    x = tape.add(x, tape.gather_rows(tape.param("emb.seg"), w.segments));

    for (int layer = 0; layer < config_.n_layers; ++layer) {
      x = encoder_layer(tape, x, "enc.l" + std::to_string(layer) + ".");
    }

    EncodedWindow out;
    out.all = x;
    out.cls = tape.slice_rows(x, 0, 1);
    out.t_c = tape.slice_rows(x, w.context_begin, n_ctx);
    const int grid_at = n_text + 0;
    out.grid = config_.use_grid
                   ? tape.slice_rows(x, grid_at, config_.grid_cells())
                   : tape.constant(Eigen::MatrixXd::Zero(config_.grid_cells(), config_.d_model));
    return out;
  }

  // Eqs. 2-3: mean-pool each entity's token features, fuse with the fixed
  // visual and sentence vectors, and project to model width.
  ag::Var pool_and_fuse(ag::Tape& tape, const EncodedWindow& enc, const Window& w) const {
    const int n = static_cast<int>(w.entity_ids.size());
    if (n == 0) throw std::invalid_argument("pool_and_fuse: no entities in window");
    std::vector<ag::Var> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto [begin, end] = w.entity_ranges[static_cast<std::size_t>(i)];
      ag::Var pooled = tape.mean_rows(
          tape.slice_rows(enc.t_c, begin - w.context_begin, end - begin));
      ag::Var v = tape.constant(w.v_feats.row(i));
      ag::Var s = tape.constant(w.s_feats.row(i));
      rows.push_back(tape.concat_cols({pooled, v, s}));
    }
    ag::Var fused = tape.concat_rows(rows);  // N x entity_width
    return tape.add_rowvec(tape.matmul(fused, tape.param("entity_proj.W")),
                           tape.param("entity_proj.b"));
  }

  // Coarse-grained contextual encoder plus the pointer head. No positional
  // input, so entity order cannot leak into the scores.
  RetrieveOut forward_retrieve(ag::Tape& tape, const EncodedWindow& enc,
                               const Window& w) const {
    ag::Var e = pool_and_fuse(tape, enc, w);
    for (int layer = 0; layer < config_.coarse_layers; ++layer) {
      e = encoder_layer(tape, e, "coarse.l" + std::to_string(layer) + ".");
    }
    RetrieveOut out;
    out.logits = pointer_scores(tape, enc.cls, e, "head.entity.");
    out.entity_ids = w.entity_ids;
    return out;
  }

  SpanOut forward_span(ag::Tape& tape, const EncodedWindow& enc, const Window& w) const {
    if (w.context_len() == 0) throw std::invalid_argument("forward_span: empty context");
    ag::Var logits = tape.add_rowvec(tape.matmul(enc.t_c, tape.param("head.span.W")),
                                     tape.param("head.span.b"));  // n_ctx x 2
    SpanOut out;
    out.start_logits = tape.transpose(tape.slice_cols(logits, 0, 1));
    out.end_logits = tape.transpose(tape.slice_cols(logits, 1, 1));
    return out;
  }

  ag::Var forward_grid(ag::Tape& tape, const EncodedWindow& enc) const {
    if (!config_.use_grid) throw std::logic_error("forward_grid: grid channel disabled");
    return pointer_scores(tape, enc.cls, enc.grid, "head.grid.");
  }

  // Name prefixes owned by each stage; used by the optimizer's freeze mask.
  static bool is_backbone_param(const std::string& name) {
    return name.rfind("emb.", 0) == 0 || name.rfind("enc.", 0) == 0 ||
           name.rfind("coord_proj.", 0) == 0 || name.rfind("grid_proj.", 0) == 0 ||
           name.rfind("patch_proj.", 0) == 0;
  }
  static bool is_grid_head_param(const std::string& name) {
    return name.rfind("head.grid.", 0) == 0;
  }
  static bool is_semantic_head_param(const std::string& name) {
    return name.rfind("head.span.", 0) == 0 || name.rfind("head.entity.", 0) == 0 ||
           name.rfind("entity_proj.", 0) == 0 || name.rfind("coarse.", 0) == 0;
  }

  void save_checkpoint(const std::filesystem::path& path,
                       const std::string& config_hash) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    const char magic[8] = {'S', 'Y', 'N', 'W', 'A', 'R', 'M', '1'};
    out.write(magic, 8);
    write_string(out, config_hash);
    write_string(out, config_.backbone);
    const auto names = store_.names();
    const std::uint64_t count = names.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& name : names) {
      write_string(out, name);
      const ag::Mat& m = store_.at(name);
      const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
      const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
      out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
      out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed " + path.string());
  }

  // Loads weights into this model. The stored config hash must match the
  // expected one; pass empty to skip the check (tests only).
  void load_checkpoint(const std::filesystem::path& path,
                       const std::string& expected_config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SYNWARM1", 8) != 0) {
      throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
    }
    const std::string stored_hash = read_string(in);
    if (!expected_config_hash.empty() && stored_hash != expected_config_hash) {
      throw std::runtime_error("load_checkpoint: config hash mismatch (stored " +
                               stored_hash + ", expected " + expected_config_hash + ")");
    }
    const std::string backbone = read_string(in);
    if (backbone != config_.backbone) {
      throw std::runtime_error("load_checkpoint: backbone mismatch (stored " + backbone +
                               ")");
    }
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::string name = read_string(in);
      std::uint64_t rows = 0;
      std::uint64_t cols = 0;
      in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
      in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
      if (!store_.contains(name)) {
        throw std::runtime_error("load_checkpoint: unknown param " + name);
      }
      ag::Mat& m = store_.at(name);
      if (static_cast<std::uint64_t>(m.rows()) != rows ||
          static_cast<std::uint64_t>(m.cols()) != cols) {
        throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
      }
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path.string());
  }

  // Each parameter draws from its own name-seeded stream, so the init is
  // independent of creation order and stable across platforms.
  void initialize(std::uint64_t seed) {
    for (const std::string& name : store_.names()) {
      ag::Mat& m = store_.at(name);
      Rng rng(fnv1a64(name, seed ^ 0x9e3779b97f4a7c15ULL));
      const bool is_gain = name.find("ln") != std::string::npos && name.ends_with(".g");
      const bool is_bias = m.rows() == 1 && name.find(".b") != std::string::npos;
      if (is_gain) {
        m.setOnes();
      } else if (is_bias) {
        m.setZero();
      } else {
        ag::init_gaussian(m, rng, 0.02);
      }
    }
  }

 private:
  ag::Var encoder_layer(ag::Tape& tape, ag::Var x, const std::string& prefix) const {
    const int d = config_.d_model;
    const int heads = config_.n_heads;
    const int dh = d / heads;
    ag::Var q = tape.add_rowvec(tape.matmul(x, tape.param(prefix + "attn.Wq")),
                                tape.param(prefix + "attn.bq"));
    ag::Var k = tape.add_rowvec(tape.matmul(x, tape.param(prefix + "attn.Wk")),
                                tape.param(prefix + "attn.bk"));
    ag::Var v = tape.add_rowvec(tape.matmul(x, tape.param(prefix + "attn.Wv")),
                                tape.param(prefix + "attn.bv"));
    std::vector<ag::Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      ag::Var qh = tape.slice_cols(q, h * dh, dh);
      ag::Var kh = tape.slice_cols(k, h * dh, dh);
      ag::Var vh = tape.slice_cols(v, h * dh, dh);
      ag::Var scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(dh));
      head_outs.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    ag::Var attn = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs);
    attn = tape.add_rowvec(tape.matmul(attn, tape.param(prefix + "attn.Wo")),
                           tape.param(prefix + "attn.bo"));
    x = tape.layernorm_rows(tape.add(x, attn), tape.param(prefix + "ln1.g"),
                            tape.param(prefix + "ln1.b"));
    ag::Var ff = tape.add_rowvec(tape.matmul(x, tape.param(prefix + "ff.W1")),
                                 tape.param(prefix + "ff.b1"));
    ff = tape.relu(ff);
    ff = tape.add_rowvec(tape.matmul(ff, tape.param(prefix + "ff.W2")),
                         tape.param(prefix + "ff.b2"));
    return tape.layernorm_rows(tape.add(x, ff), tape.param(prefix + "ln2.g"),
                               tape.param(prefix + "ln2.b"));
  }

  // Additive pointer scoring of candidates H against query u:
  // score_i = v^T tanh(u Wq + H_i Wk + b). Output is one logit row.
  ag::Var pointer_scores(ag::Tape& tape, ag::Var query, ag::Var candidates,
                         const std::string& prefix) const {
    ag::Var uq = tape.matmul(query, tape.param(prefix + "Wq"));  // 1 x d
    ag::Var hk = tape.matmul(candidates, tape.param(prefix + "Wk"));
    ag::Var mixed = tape.add_rowvec(hk, tape.add(uq, tape.param(prefix + "b")));
    ag::Var scores = tape.matmul(tape.tanh(mixed), tape.param(prefix + "v"));  // N x 1
    return tape.transpose(scores);
  }

  void build_params() {
    const int d = config_.d_model;
    store_.create("emb.tok", config_.vocab_size, d);
    store_.create("emb.pos", config_.max_len, d);
    store_.create("emb.seg", kSegmentCount, d);
    store_.create("coord_proj.W", 4, d);
    store_.create("coord_proj.b", 1, d);
    store_.create("grid_proj.W", kGridCellSide * kGridCellSide, d);
    store_.create("grid_proj.b", 1, d);
    if (config_.use_patches) {
      store_.create("patch_proj.W", kGridCellSide * kGridCellSide, d);
      store_.create("patch_proj.b", 1, d);
    }
    for (int layer = 0; layer < config_.n_layers; ++layer) {
      build_encoder_layer("enc.l" + std::to_string(layer) + ".");
    }
    for (int layer = 0; layer < config_.coarse_layers; ++layer) {
      build_encoder_layer("coarse.l" + std::to_string(layer) + ".");
    }
    store_.create("entity_proj.W", config_.entity_width(), d);
    store_.create("entity_proj.b", 1, d);
    for (const char* head : {"head.entity.", "head.grid."}) {
      store_.create(std::string(head) + "Wq", d, d);
      store_.create(std::string(head) + "Wk", d, d);
      store_.create(std::string(head) + "b", 1, d);
      store_.create(std::string(head) + "v", d, 1);
    }
    store_.create("head.span.W", d, 2);
    store_.create("head.span.b", 1, 2);
  }

  void build_encoder_layer(const std::string& prefix) {
    const int d = config_.d_model;
    for (const char* name : {"attn.Wq", "attn.Wk", "attn.Wv", "attn.Wo"}) {
      store_.create(prefix + name, d, d);
    }
    for (const char* name : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
      store_.create(prefix + name, 1, d);
    }
    store_.create(prefix + "ln1.g", 1, d);
    store_.create(prefix + "ln1.b", 1, d);
    store_.create(prefix + "ln2.g", 1, d);
    store_.create(prefix + "ln2.b", 1, d);
    store_.create(prefix + "ff.W1", d, config_.d_ff);
    store_.create(prefix + "ff.b1", 1, config_.d_ff);
    store_.create(prefix + "ff.W2", config_.d_ff, d);
    store_.create(prefix + "ff.b2", 1, d);
  }

  static void write_string(std::ofstream& out, const std::string& s) {
    const std::uint64_t len = s.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(s.data(), static_cast<std::streamsize>(len));
  }

  static std::string read_string(std::ifstream& in) {
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1u << 20)) throw std::runtime_error("checkpoint: bad string length");
    std::string s(static_cast<std::size_t>(len), '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    return s;
  }

  WarmerConfig config_;
  Tokenizer tokenizer_;
  ag::ParamStore store_;
};

inline int argmax_lowest(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax_lowest: empty");
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline Eigen::VectorXd softmax_vector(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - mx).exp();
  return (e / e.sum()).matrix();
}

struct ScoredEntity {
  int entity_id = -1;
  std::string content;
  BBox bbox;
  double score = 0.0;  // max softmax probability over windows
};

// Eval-mode entity ranking: per-window pointer probabilities merged by max
// across windows, sorted by score then by entity id.
inline std::vector<ScoredEntity> rank_entities(WarmerModel& model, const EntitySet& set,
                                               const DocFeatures& doc,
                                               const std::string& question,
                                               const std::string& prior_answer) {
  std::map<int, double> best;
  const std::vector<Window> windows =
      build_windows(set, question, prior_answer, doc, model.config(), model.tokenizer());
  for (const Window& w : windows) {
    if (w.entity_ids.empty()) continue;
    ag::Tape tape(&model.params());
    const EncodedWindow enc = model.encode(tape, w);
    const RetrieveOut out = model.forward_retrieve(tape, enc, w);
    const Eigen::VectorXd probs =
        softmax_vector(tape.value(out.logits).row(0).transpose());
    for (std::size_t i = 0; i < out.entity_ids.size(); ++i) {
      const int id = out.entity_ids[i];
      const double p = probs[static_cast<Eigen::Index>(i)];
      auto it = best.find(id);
      if (it == best.end() || p > it->second) best[id] = p;
    }
  }
  std::vector<ScoredEntity> ranked;
  ranked.reserve(best.size());
  for (const auto& [id, score] : best) {
    ScoredEntity se;
    se.entity_id = id;
    se.score = score;
    const auto& e = set.entities[static_cast<std::size_t>(id)];
    se.content = e.content;
    se.bbox = e.bbox;
    ranked.push_back(std::move(se));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity_id < b.entity_id;
  });
  return ranked;
}

// Eval-mode grid prediction: mean probability across windows, argmax with
// lowest-index tie-break.
inline int predict_grid(WarmerModel& model, const EntitySet& set, const DocFeatures& doc,
                        const std::string& question) {
  const std::vector<Window> windows =
      build_windows(set, question, "", doc, model.config(), model.tokenizer());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.config().grid_cells());
  int counted = 0;
  for (const Window& w : windows) {
    ag::Tape tape(&model.params());
    const EncodedWindow enc = model.encode(tape, w);
    const ag::Var logits = model.forward_grid(tape, enc);
    acc += softmax_vector(tape.value(logits).row(0).transpose());
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("predict_grid: no windows");
  acc /= static_cast<double>(counted);
  return argmax_lowest(acc);
}

}  // namespace syndoc
