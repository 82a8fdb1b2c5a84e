#include "attnsup/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attnsup/errors.hpp"

namespace attnsup {

namespace {

void require_vector(const Tensor& t, const char* op) {
  if (t.rank() != 1) throw DimensionError(std::string(op) + ": expected a vector, got " + t.shape_string());
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Param::zero_grad() {
  if (dense_touched) {
    grad.fill(0.0);
  } else {
    for (std::size_t r : touched_rows) std::fill(grad.row(r).begin(), grad.row(r).end(), 0.0);
  }
  touched_rows.clear();
  dense_touched = false;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

void Graph::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ContractError("variable does not belong to this graph");
}

Var Graph::push(Tensor value, bool requires_grad, std::function<void(Graph&, std::size_t)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Graph::constant_ref(const Tensor& value) {
  Var v = push(Tensor(), false, nullptr);
  nodes_[v.id].bound = &value;
  return v;
}

Var Graph::leaf(Tensor value) { return push(std::move(value), true, nullptr); }

Var Graph::param(Param& p) {
  Var v = push(Tensor(), true, nullptr);
  nodes_[v.id].bound = &p.value;
  nodes_[v.id].param = &p;
  return v;
}

Var Graph::param_row(Param& p, std::size_t row) {
  if (p.value.rank() != 2 || row >= p.value.rows()) {
    throw DimensionError("param_row: row " + std::to_string(row) + " out of range for " + p.name + " " +
                         p.value.shape_string());
  }
  auto r = p.value.row(row);
  Var v = push(Tensor::vector({r.begin(), r.end()}), true, nullptr);
  nodes_[v.id].param = &p;
  nodes_[v.id].row = row;
  return v;
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return val(v.id);
}

double Graph::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw ContractError("scalar: node holds " + t.shape_string());
  return t[0];
}

const Tensor& Graph::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

Var Graph::unary(Var a, Tensor out, std::function<void(Graph&, std::size_t)> backprop) {
  return push(std::move(out), nodes_[a.id].requires_grad, std::move(backprop));
}

Var Graph::matvec(Var w, Var x) {
  check(w);
  check(x);
  const Tensor& W = val(w.id);
  const Tensor& X = val(x.id);
  require_vector(X, "matvec");
  if (W.rank() != 2 || W.cols() != X.size()) {
    throw DimensionError("matvec: " + W.shape_string() + " times " + X.shape_string());
  }
  const std::size_t m = W.rows(), n = W.cols();
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    const double* wr = W.data().data() + r * n;
    const double* xv = X.data().data();
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += wr[c] * xv[c];
    out[r] = s;
  }
  const bool rg = nodes_[w.id].requires_grad || nodes_[x.id].requires_grad;
  return push(std::move(out), rg, [w, x, m, n](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& W = g.val(w.id);
    const Tensor& X = g.val(x.id);
    if (Tensor* dW = g.grad_of(w.id)) {
      for (std::size_t r = 0; r < m; ++r) {
        const double gr = G[r];
        if (gr == 0.0) continue;
        double* row = dW->data().data() + r * n;
        for (std::size_t c = 0; c < n; ++c) row[c] += gr * X[c];
      }
    }
    if (Tensor* dX = g.grad_of(x.id)) {
      double* dx = dX->data().data();
      for (std::size_t r = 0; r < m; ++r) {
        const double gr = G[r];
        if (gr == 0.0) continue;
        const double* wr = W.data().data() + r * n;
        for (std::size_t c = 0; c < n; ++c) dx[c] += wr[c] * gr;
      }
    }
  });
}

Var Graph::matvec_t(Var m, Var x) {
  check(m);
  check(x);
  const Tensor& M = val(m.id);
  const Tensor& X = val(x.id);
  require_vector(X, "matvec_t");
  if (M.rank() != 2 || M.rows() != X.size()) {
    throw DimensionError("matvec_t: transpose of " + M.shape_string() + " times " + X.shape_string());
  }
  const std::size_t rows = M.rows(), cols = M.cols();
  Tensor out({cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double xr = X[r];
    for (std::size_t c = 0; c < cols; ++c) out[c] += M.at(r, c) * xr;
  }
  const bool rg = nodes_[m.id].requires_grad || nodes_[x.id].requires_grad;
  return push(std::move(out), rg, [m, x, rows, cols](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& M = g.val(m.id);
    const Tensor& X = g.val(x.id);
    if (Tensor* dM = g.grad_of(m.id)) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dM->at(r, c) += X[r] * G[c];
    }
    if (Tensor* dX = g.grad_of(x.id)) {
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += M.at(r, c) * G[c];
        (*dX)[r] += s;
      }
    }
  });
}

Var Graph::dot(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_vector(A, "dot");
  require_same(A, B, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * B[i];
  const bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  return push(Tensor::scalar(s), rg, [a, b](Graph& g, std::size_t self) {
    const double G = g.nodes_[self].grad[0];
    const Tensor& A = g.val(a.id);
    const Tensor& B = g.val(b.id);
    if (Tensor* dA = g.grad_of(a.id))
      for (std::size_t i = 0; i < A.size(); ++i) (*dA)[i] += G * B[i];
    if (Tensor* dB = g.grad_of(b.id))
      for (std::size_t i = 0; i < B.size(); ++i) (*dB)[i] += G * A[i];
  });
}

Var Graph::stack(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack: no rows");
  for (Var r : rows) check(r);
  const std::size_t width = val(rows.front().id).size();
  std::vector<double> data;
  data.reserve(width * rows.size());
  bool rg = false;
  for (Var r : rows) {
    const Tensor& t = val(r.id);
    require_vector(t, "stack");
    if (t.size() != width) throw DimensionError("stack: rows of unequal width");
    data.insert(data.end(), t.data().begin(), t.data().end());
    rg = rg || nodes_[r.id].requires_grad;
  }
  std::vector<Var> ids(rows.begin(), rows.end());
  return push(Tensor::matrix(rows.size(), width, std::move(data)), rg,
              [ids = std::move(ids), width](Graph& g, std::size_t self) {
                const Tensor& G = g.nodes_[self].grad;
                for (std::size_t r = 0; r < ids.size(); ++r) {
                  if (Tensor* d = g.grad_of(ids[r].id))
                    for (std::size_t c = 0; c < width; ++c) (*d)[c] += G.at(r, c);
                }
              });
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  std::vector<double> data;
  bool rg = false;
  for (Var p : parts) {
    check(p);
    const Tensor& t = val(p.id);
    require_vector(t, "concat");
    data.insert(data.end(), t.data().begin(), t.data().end());
    rg = rg || nodes_[p.id].requires_grad;
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(Tensor::vector(std::move(data)), rg, [ids = std::move(ids)](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    std::size_t offset = 0;
    for (Var p : ids) {
      const std::size_t n = g.val(p.id).size();
      if (Tensor* d = g.grad_of(p.id))
        for (std::size_t i = 0; i < n; ++i) (*d)[i] += G[offset + i];
      offset += n;
    }
  });
}

Var Graph::slice(Var x, std::size_t offset, std::size_t length) {
  check(x);
  const Tensor& X = val(x.id);
  require_vector(X, "slice");
  if (length == 0 || offset + length > X.size()) {
    throw DimensionError("slice: [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") outside " + X.shape_string());
  }
  std::vector<double> data(X.data().begin() + offset, X.data().begin() + offset + length);
  return unary(x, Tensor::vector(std::move(data)), [x, offset, length](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    Tensor* d = g.grad_of(x.id);
    for (std::size_t i = 0; i < length; ++i) (*d)[offset + i] += G[i];
  });
}

Var Graph::add(Var a, Var b) {
  const Var terms[] = {a, b};
  return add(terms);
}

Var Graph::add(std::span<const Var> terms) {
  if (terms.empty()) throw DimensionError("add: no terms");
  for (Var t : terms) check(t);
  Tensor out = val(terms.front().id);
  out.fill(0.0);
  bool rg = false;
  for (Var t : terms) {
    const Tensor& v = val(t.id);
    require_same(out, v, "add");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
    rg = rg || nodes_[t.id].requires_grad;
  }
  std::vector<Var> ids(terms.begin(), terms.end());
  return push(std::move(out), rg, [ids = std::move(ids)](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    for (Var t : ids)
      if (Tensor* d = g.grad_of(t.id))
        for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i];
  });
}

Var Graph::mul(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& A = val(a.id);
  const Tensor& B = val(b.id);
  require_same(A, B, "mul");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  const bool rg = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
  return push(std::move(out), rg, [a, b](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& A = g.val(a.id);
    const Tensor& B = g.val(b.id);
    if (Tensor* dA = g.grad_of(a.id))
      for (std::size_t i = 0; i < G.size(); ++i) (*dA)[i] += G[i] * B[i];
    if (Tensor* dB = g.grad_of(b.id))
      for (std::size_t i = 0; i < G.size(); ++i) (*dB)[i] += G[i] * A[i];
  });
}

Var Graph::scale(Var a, double factor) {
  check(a);
  Tensor out = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  return unary(a, std::move(out), [a, factor](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    Tensor* d = g.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += factor * G[i];
  });
}

Var Graph::tanh(Var a) {
  check(a);
  Tensor out = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return unary(a, std::move(out), [a](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Y = g.nodes_[self].value;
    Tensor* d = g.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] * (1.0 - Y[i] * Y[i]);
  });
}

Var Graph::sigmoid(Var a) {
  check(a);
  Tensor out = val(a.id);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(out[i]);
  return unary(a, std::move(out), [a](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Y = g.nodes_[self].value;
    Tensor* d = g.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i] * Y[i] * (1.0 - Y[i]);
  });
}

Var Graph::softmax(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  require_vector(A, "softmax");
  Tensor out = Tensor::vector(attnsup::softmax(A.data()));
  return unary(a, std::move(out), [a](Graph& g, std::size_t self) {
    const Tensor& G = g.nodes_[self].grad;
    const Tensor& Y = g.nodes_[self].value;
    double gy = 0.0;
    for (std::size_t i = 0; i < G.size(); ++i) gy += G[i] * Y[i];
    Tensor* d = g.grad_of(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += Y[i] * (G[i] - gy);
  });
}

Var Graph::sum(Var a) {
  check(a);
  const Tensor& A = val(a.id);
  const double s = std::accumulate(A.data().begin(), A.data().end(), 0.0);
  return unary(a, Tensor::scalar(s), [a](Graph& g, std::size_t self) {
    const double G = g.nodes_[self].grad[0];
    Tensor* d = g.grad_of(a.id);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += G;
  });
}

Var Graph::neg_log_pick(Var probs, std::size_t index, double floor) {
  check(probs);
  const Tensor& P = val(probs.id);
  require_vector(P, "neg_log_pick");
  if (index >= P.size()) throw DimensionError("neg_log_pick: index out of range");
  const double p = P[index];
  return unary(probs, Tensor::scalar(-std::log(std::max(p, floor))),
               [probs, index, floor](Graph& g, std::size_t self) {
                 const double G = g.nodes_[self].grad[0];
                 const double p = g.val(probs.id)[index];
                 if (p > floor) (*g.grad_of(probs.id))[index] -= G / p;
               });
}

Var Graph::kl_divergence(const Tensor& target, Var probs, double floor) {
  check(probs);
  const Tensor& P = val(probs.id);
  require_vector(P, "kl_divergence");
  require_same(target, P, "kl_divergence");
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (target[i] > 0.0) s += target[i] * (std::log(target[i]) - std::log(std::max(P[i], floor)));
  }
  return unary(probs, Tensor::scalar(s), [target, probs, floor](Graph& g, std::size_t self) {
    const double G = g.nodes_[self].grad[0];
    const Tensor& P = g.val(probs.id);
    Tensor* d = g.grad_of(probs.id);
    for (std::size_t i = 0; i < P.size(); ++i)
      if (target[i] > 0.0 && P[i] > floor) (*d)[i] -= G * target[i] / P[i];
  });
}

Var Graph::binary_cross_entropy(Var probs, std::span<const double> targets, double floor) {
  check(probs);
  const Tensor& P = val(probs.id);
  require_vector(P, "binary_cross_entropy");
  if (targets.size() != P.size()) throw DimensionError("binary_cross_entropy: target length mismatch");
  const double n = static_cast<double>(P.size());
  double s = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = std::clamp(P[i], floor, 1.0 - floor);
    s -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  std::vector<double> t(targets.begin(), targets.end());
  return unary(probs, Tensor::scalar(s / n), [probs, t = std::move(t), floor, n](Graph& g, std::size_t self) {
    const double G = g.nodes_[self].grad[0];
    const Tensor& P = g.val(probs.id);
    Tensor* d = g.grad_of(probs.id);
    for (std::size_t i = 0; i < P.size(); ++i) {
      const double p = P[i];
      if (p <= floor || p >= 1.0 - floor) continue;
      (*d)[i] += G * (-t[i] / p + (1.0 - t[i]) / (1.0 - p)) / n;
    }
  });
}

void Graph::backward(Var loss) {
  check(loss);
  if (val(loss.id).size() != 1) throw ContractError("backward: loss must be a scalar");
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      const Tensor& v = n.bound ? *n.bound : n.value;
      if (n.grad.same_shape(v)) {
        n.grad.fill(0.0);
      } else {
        n.grad = Tensor(v.shape());
      }
    }
  }
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(*this, i);
  }
}

void Graph::accumulate_param_grads() const {
  for (const Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    Param& p = *n.param;
    if (n.row == Var::kInvalid) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
      p.dense_touched = true;
    } else {
      auto dst = p.grad.row(n.row);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
      p.touched_rows.push_back(n.row);
    }
  }
}

std::pair<Var, Var> lstm_step(Graph& g, const LstmWeights& w, Var x, Var h_prev, Var c_prev) {
  const std::size_t d = g.value(h_prev).size();
  const Tensor& W = g.value(w.input);
  const Tensor& U = g.value(w.recurrent);
  if (W.rank() != 2 || W.rows() != 4 * d || U.rank() != 2 || U.rows() != 4 * d || U.cols() != d ||
      g.value(w.bias).size() != 4 * d || g.value(c_prev).size() != d) {
    throw DimensionError("lstm_step: weights " + W.shape_string() + "/" + U.shape_string() +
                         " inconsistent with hidden size " + std::to_string(d));
  }
  const Var pre[] = {g.matvec(w.input, x), g.matvec(w.recurrent, h_prev), w.bias};
  const Var z = g.add(pre);
  const Var in_gate = g.sigmoid(g.slice(z, 0, d));
  const Var forget_gate = g.sigmoid(g.slice(z, d, d));
  const Var out_gate = g.sigmoid(g.slice(z, 2 * d, d));
  const Var candidate = g.tanh(g.slice(z, 3 * d, d));
  const Var c = g.add(g.mul(forget_gate, c_prev), g.mul(in_gate, candidate));
  const Var h = g.mul(out_gate, g.tanh(c));
  return {h, c};
}

}  // namespace attnsup
