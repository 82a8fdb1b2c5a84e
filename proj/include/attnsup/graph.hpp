#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnsup/tensor.hpp"

namespace attnsup {

// A trainable tensor with its gradient accumulator. Rows touched through
// Graph::param_row are tracked so sparse updates stay sparse.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  std::vector<std::size_t> touched_rows;
  bool dense_touched = false;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad();
};

// Handle to a node on a Graph tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// tape order is a topological order and backward() walks it in reverse.
// A Graph is single-threaded; separate Graphs may read shared Params
// concurrently as long as nobody writes them.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var constant(Tensor value);
  // Constant that reads `value` in place; it must outlive the graph.
  Var constant_ref(const Tensor& value);
  Var leaf(Tensor value);
  Var param(Param& p);
  Var param_row(Param& p, std::size_t row);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;
  // Gradient of the last backward() loss w.r.t. v; empty if v needs none.
  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Linear algebra.
  Var matvec(Var w, Var x);
  Var matvec_t(Var m, Var x);  // m^T x
  Var dot(Var a, Var b);
  Var stack(std::span<const Var> rows);
  Var concat(std::span<const Var> parts);
  Var slice(Var x, std::size_t offset, std::size_t length);

  // Element-wise.
  Var add(Var a, Var b);
  Var add(std::span<const Var> terms);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softmax(Var a);
  Var sum(Var a);

  // Scalar losses. Probabilities are floored at `floor` inside logs.
  Var neg_log_pick(Var probs, std::size_t index, double floor);
  Var kl_divergence(const Tensor& target, Var probs, double floor);
  Var binary_cross_entropy(Var probs, std::span<const double> targets, double floor);

  // Fills grad() for every node reachable from `loss`. Gradients are reset
  // first, so calling it twice yields the same result.
  void backward(Var loss);

  // Adds parameter-leaf gradients into the owning Params' accumulators.
  void accumulate_param_grads() const;

 private:
  struct Node {
    Tensor value;
    const Tensor* bound = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Graph&, std::size_t)> backprop;
    Param* param = nullptr;
    std::size_t row = Var::kInvalid;
  };

  const Tensor& val(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.bound ? *n.bound : n.value;
  }
  Tensor* grad_of(std::size_t id) {
    return nodes_[id].requires_grad ? &nodes_[id].grad : nullptr;
  }
  Var push(Tensor value, bool requires_grad, std::function<void(Graph&, std::size_t)> backprop);
  void check(Var v) const;
  Var unary(Var a, Tensor out, std::function<void(Graph&, std::size_t)> backprop);

  std::vector<Node> nodes_;
};

struct LstmWeights {
  Var input;      // [4d x in], gate order: input, forget, output, candidate
  Var recurrent;  // [4d x d]
  Var bias;       // [4d]
};

// One LSTM cell update. Returns (h, c).
std::pair<Var, Var> lstm_step(Graph& g, const LstmWeights& w, Var x, Var h_prev, Var c_prev);

// Numerically stable softmax on plain values.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace attnsup
