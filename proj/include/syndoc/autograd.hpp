// Reverse-mode autograd on a per-example tape over Eigen matrices, with a
// named parameter store and AdamW. Scalars are 1x1 matrices. The op set is
// exactly what the Warmer forward pass needs.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "syndoc/rng.hpp"

namespace syndoc::ag {

using Mat = Eigen::MatrixXd;

// Named dense parameters with matching gradient buffers. Iteration order is
// the map order, so serialization and optimizer sweeps are stable.
class ParamStore {
 public:
  Mat& create(const std::string& name, int rows, int cols) {
    if (values_.count(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
    values_[name] = Mat::Zero(rows, cols);
    grads_[name] = Mat::Zero(rows, cols);
    return values_[name];
  }

  bool contains(const std::string& name) const { return values_.count(name) > 0; }

  Mat& at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::out_of_range("ParamStore: no param " + name);
    return it->second;
  }

  const Mat& at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::out_of_range("ParamStore: no param " + name);
    return it->second;
  }

  Mat& grad(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw std::out_of_range("ParamStore: no grad " + name);
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, g] : grads_) g.setZero();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [name, v] : values_) out.push_back(name);
    return out;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, v] : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  const std::map<std::string, Mat>& values() const { return values_; }

 private:
  std::map<std::string, Mat> values_;
  std::map<std::string, Mat> grads_;
};

inline void init_gaussian(Mat& m, Rng& rng, double stddev) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.gaussian() * stddev;
  }
}

struct Var {
  int id = -1;
};

class Tape {
 public:
  explicit Tape(ParamStore* store = nullptr) : store_(store) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Mat& value(Var v) const { return node(v.id).value; }
  const Mat& grad(Var v) const { return node(v.id).grad; }

  Var constant(Mat m) { return make(std::move(m), {}); }

  // Parameter leaf: value copied in, gradient flushed to the store on
  // backward. One node per name per tape.
  Var param(const std::string& name) {
    if (store_ == nullptr) throw std::logic_error("Tape: param() without store");
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Var{it->second};
    const int id = make(store_->at(name), {}).id;
    const std::string captured = name;
    nodes_[id].backward = [this, id, captured] {
      store_->grad(captured) += nodes_[id].grad;
    };
    param_nodes_[name] = id;
    return Var{id};
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Var out = make(value(a) + value(b), {a.id, b.id});
    set_backward(out, [this, a, b, out] {
      nodes_[a.id].grad += nodes_[out.id].grad;
      nodes_[b.id].grad += nodes_[out.id].grad;
    });
    return out;
  }

  // Broadcast add of a 1xC row vector onto every row.
  Var add_rowvec(Var a, Var r) {
    if (value(r).rows() != 1 || value(r).cols() != value(a).cols()) {
      throw std::invalid_argument("add_rowvec: shape mismatch");
    }
    Var out = make(value(a).rowwise() + value(r).row(0), {a.id, r.id});
    set_backward(out, [this, a, r, out] {
      nodes_[a.id].grad += nodes_[out.id].grad;
      nodes_[r.id].grad.row(0) += nodes_[out.id].grad.colwise().sum();
    });
    return out;
  }

  Var scale(Var a, double s) {
    Var out = make(value(a) * s, {a.id});
    set_backward(out, [this, a, out, s] { nodes_[a.id].grad += nodes_[out.id].grad * s; });
    return out;
  }

  Var matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) throw std::invalid_argument("matmul: shape");
    Var out = make(value(a) * value(b), {a.id, b.id});
    set_backward(out, [this, a, b, out] {
      nodes_[a.id].grad += nodes_[out.id].grad * nodes_[b.id].value.transpose();
      nodes_[b.id].grad += nodes_[a.id].value.transpose() * nodes_[out.id].grad;
    });
    return out;
  }

  // C = A * B^T, the attention-score shape.
  Var matmul_nt(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw std::invalid_argument("matmul_nt: shape");
    Var out = make(value(a) * value(b).transpose(), {a.id, b.id});
    set_backward(out, [this, a, b, out] {
      nodes_[a.id].grad += nodes_[out.id].grad * nodes_[b.id].value;
      nodes_[b.id].grad += nodes_[out.id].grad.transpose() * nodes_[a.id].value;
    });
    return out;
  }

  Var relu(Var a) {
    Var out = make(value(a).cwiseMax(0.0), {a.id});
    set_backward(out, [this, a, out] {
      nodes_[a.id].grad.array() +=
          nodes_[out.id].grad.array() * (nodes_[a.id].value.array() > 0.0).cast<double>();
    });
    return out;
  }

  Var tanh(Var a) {
    Var out = make(value(a).array().tanh().matrix(), {a.id});
    set_backward(out, [this, a, out] {
      nodes_[a.id].grad.array() +=
          nodes_[out.id].grad.array() * (1.0 - nodes_[out.id].value.array().square());
    });
    return out;
  }

  Var softmax_rows(Var a) {
    Mat y = value(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double mx = y.row(r).maxCoeff();
      y.row(r) = (y.row(r).array() - mx).exp();
      y.row(r) /= y.row(r).sum();
    }
    Var out = make(std::move(y), {a.id});
    set_backward(out, [this, a, out] {
      const Mat& yv = nodes_[out.id].value;
      const Mat& dy = nodes_[out.id].grad;
      for (Eigen::Index r = 0; r < yv.rows(); ++r) {
        const double dot = (dy.row(r).array() * yv.row(r).array()).sum();
        nodes_[a.id].grad.row(r).array() +=
            yv.row(r).array() * (dy.row(r).array() - dot);
      }
    });
    return out;
  }

  // Per-row layer norm with learned gain and bias (both 1xC).
  Var layernorm_rows(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Mat& xv = value(x);
    const Eigen::Index cols = xv.cols();
    if (value(gamma).rows() != 1 || value(gamma).cols() != cols ||
        value(beta).rows() != 1 || value(beta).cols() != cols) {
      throw std::invalid_argument("layernorm_rows: gain/bias shape");
    }
    Mat xhat(xv.rows(), cols);
    Mat inv_sigma(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const double mu = xv.row(r).mean();
      const double var = (xv.row(r).array() - mu).square().mean();
      const double is = 1.0 / std::sqrt(var + eps);
      inv_sigma(r, 0) = is;
      xhat.row(r) = (xv.row(r).array() - mu) * is;
    }
    Mat y = (xhat.array().rowwise() * value(gamma).row(0).array()).rowwise() +
            value(beta).row(0).array();
    Var out = make(std::move(y), {x.id, gamma.id, beta.id});
    auto xhat_p = std::make_shared<Mat>(std::move(xhat));
    auto is_p = std::make_shared<Mat>(std::move(inv_sigma));
    set_backward(out, [this, x, gamma, beta, out, xhat_p, is_p] {
      const Mat& dy = nodes_[out.id].grad;
      const Mat& g = nodes_[gamma.id].value;
      const Eigen::Index n = dy.cols();
      nodes_[beta.id].grad.row(0) += dy.colwise().sum();
      nodes_[gamma.id].grad.row(0) += (dy.array() * xhat_p->array()).colwise().sum().matrix();
      for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const Eigen::ArrayXd dxhat = dy.row(r).array() * g.row(0).array();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xhat_p->row(r).transpose().array()).mean();
        nodes_[x.id].grad.row(r).array() +=
            (*is_p)(r, 0) * (dxhat - m1 - xhat_p->row(r).transpose().array() * m2);
        static_cast<void>(n);
      }
    });
    return out;
  }

  // Row gather; duplicate indices scatter-add on backward, which makes
  // embedding lookups work.
  Var gather_rows(Var a, std::vector<int> rows) {
    const Mat& av = value(a);
    Mat y(static_cast<Eigen::Index>(rows.size()), av.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] < 0 || rows[i] >= av.rows()) {
        throw std::out_of_range("gather_rows: index out of range");
      }
      y.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
    }
    Var out = make(std::move(y), {a.id});
    auto rows_p = std::make_shared<std::vector<int>>(std::move(rows));
    set_backward(out, [this, a, out, rows_p] {
      for (std::size_t i = 0; i < rows_p->size(); ++i) {
        nodes_[a.id].grad.row((*rows_p)[i]) +=
            nodes_[out.id].grad.row(static_cast<Eigen::Index>(i));
      }
    });
    return out;
  }

  Var slice_rows(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > value(a).rows()) {
      throw std::out_of_range("slice_rows: range");
    }
    Var out = make(value(a).middleRows(start, count), {a.id});
    set_backward(out, [this, a, out, start, count] {
      nodes_[a.id].grad.middleRows(start, count) += nodes_[out.id].grad;
    });
    return out;
  }

  Var slice_cols(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > value(a).cols()) {
      throw std::out_of_range("slice_cols: range");
    }
    Var out = make(value(a).middleCols(start, count), {a.id});
    set_backward(out, [this, a, out, start, count] {
      nodes_[a.id].grad.middleCols(start, count) += nodes_[out.id].grad;
    });
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Mat y(rows, cols);
    Eigen::Index at = 0;
    std::vector<int> ids;
    for (Var p : parts) {
      y.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
      ids.push_back(p.id);
    }
    Var out = make(std::move(y), ids);
    auto parts_p = std::make_shared<std::vector<Var>>(parts);
    set_backward(out, [this, out, parts_p] {
      Eigen::Index at2 = 0;
      for (Var p : *parts_p) {
        const Eigen::Index w = nodes_[p.id].value.cols();
        nodes_[p.id].grad += nodes_[out.id].grad.middleCols(at2, w);
        at2 += w;
      }
    });
    return out;
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
      if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
      rows += value(p).rows();
    }
    Mat y(rows, cols);
    Eigen::Index at = 0;
    std::vector<int> ids;
    for (Var p : parts) {
      y.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
      ids.push_back(p.id);
    }
    Var out = make(std::move(y), ids);
    auto parts_p = std::make_shared<std::vector<Var>>(parts);
    set_backward(out, [this, out, parts_p] {
      Eigen::Index at2 = 0;
      for (Var p : *parts_p) {
        const Eigen::Index h = nodes_[p.id].value.rows();
        nodes_[p.id].grad += nodes_[out.id].grad.middleRows(at2, h);
        at2 += h;
      }
    });
    return out;
  }

  Var transpose(Var a) {
    Var out = make(value(a).transpose(), {a.id});
    set_backward(out, [this, a, out] {
      nodes_[a.id].grad += nodes_[out.id].grad.transpose();
    });
    return out;
  }

  // 1xC mean over rows.
  Var mean_rows(Var a) {
    const Eigen::Index m = value(a).rows();
    if (m == 0) throw std::invalid_argument("mean_rows: empty");
    Var out = make(value(a).colwise().mean(), {a.id});
    set_backward(out, [this, a, out, m] {
      nodes_[a.id].grad.array().rowwise() +=
          nodes_[out.id].grad.row(0).array() / static_cast<double>(m);
    });
    return out;
  }

  // Mean cross entropy of row-wise logits against integer targets, via a
  // stable log-sum-exp. Scalar output.
  Var ce_rows(Var logits, const std::vector<int>& targets) {
    const Mat& lv = value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != lv.rows()) {
      throw std::invalid_argument("ce_rows: target count mismatch");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
      const int t = targets[static_cast<std::size_t>(r)];
      if (t < 0 || t >= lv.cols()) throw std::out_of_range("ce_rows: target out of range");
      const double mx = lv.row(r).maxCoeff();
      const double lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
      total += lse - lv(r, t);
    }
    Mat y(1, 1);
    y(0, 0) = total / static_cast<double>(lv.rows());
    Var out = make(std::move(y), {logits.id});
    auto targets_p = std::make_shared<std::vector<int>>(targets);
    set_backward(out, [this, logits, out, targets_p] {
      const Mat& lv2 = nodes_[logits.id].value;
      const double d = nodes_[out.id].grad(0, 0) / static_cast<double>(lv2.rows());
      for (Eigen::Index r = 0; r < lv2.rows(); ++r) {
        const double mx = lv2.row(r).maxCoeff();
        Eigen::ArrayXd p = (lv2.row(r).array() - mx).exp();
        p /= p.sum();
        nodes_[logits.id].grad.row(r).array() += p.transpose() * d;
        nodes_[logits.id].grad(r, (*targets_p)[static_cast<std::size_t>(r)]) -= d;
      }
    });
    return out;
  }

  // Seeds d(loss) = 1 and sweeps the tape in reverse. Parameter leaves
  // flush into the store, so call once per example and step the optimizer
  // after the batch.
  void backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1) {
      throw std::invalid_argument("backward: loss must be scalar");
    }
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[static_cast<std::size_t>(i)].backward) {
        nodes_[static_cast<std::size_t>(i)].backward();
      }
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> backward;
  };

  Node& node(int id) {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw std::out_of_range("Tape: bad var id");
    }
    return nodes_[static_cast<std::size_t>(id)];
  }

  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
      throw std::out_of_range("Tape: bad var id");
    }
    return nodes_[static_cast<std::size_t>(id)];
  }

  Var make(Mat value, const std::vector<int>&) {
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void set_backward(Var v, std::function<void()> fn) {
    nodes_[static_cast<std::size_t>(v.id)].backward = std::move(fn);
  }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
  }

  std::vector<Node> nodes_;
  ParamStore* store_;
  std::map<std::string, int> param_nodes_;
};

// AdamW with decoupled weight decay. Only parameters passing the trainable
// predicate move; moments persist across stage switches keyed by name.
struct AdamWConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  using Config = AdamWConfig;

  explicit AdamW(Config config = {}) : config_(config) {}

  const Config& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  void step(ParamStore& store, const std::function<bool(const std::string&)>& trainable,
            double grad_scale = 1.0) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    for (const std::string& name : store.names()) {
      if (!trainable(name)) continue;
      Mat& p = store.at(name);
      const Mat g = store.grad(name) * grad_scale;
      Mat& m = moment(m1_, name, p);
      Mat& v = moment(m2_, name, p);
      m = config_.beta1 * m + (1.0 - config_.beta1) * g;
      v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
      const Mat mhat = m / bc1;
      const Mat vhat = v / bc2;
      p.array() -= config_.lr * (mhat.array() / (vhat.array().sqrt() + config_.eps) +
                                 config_.weight_decay * p.array());
    }
  }

 private:
  Mat& moment(std::map<std::string, Mat>& table, const std::string& name, const Mat& like) {
    auto it = table.find(name);
    if (it == table.end()) {
      it = table.emplace(name, Mat::Zero(like.rows(), like.cols())).first;
    }
    return it->second;
  }

  Config config_;
  std::int64_t t_ = 0;
  std::map<std::string, Mat> m1_;
  std::map<std::string, Mat> m2_;
};

}  // namespace syndoc::ag
