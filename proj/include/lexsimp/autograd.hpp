#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records one forward computation; backward() walks it in
// reverse and deposits parameter gradients into a GradBuffer.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace lexsimp {
class Rng;
}

namespace lexsimp::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  // Frozen parameters are read on the tape but never receive gradients.
  bool frozen = false;
};

// Gradients keyed by parameter identity. Lookup only; reductions that need a
// stable summation order iterate an explicit parameter list instead.
class GradBuffer {
 public:
  Matrix& slot(const Parameter* p);
  const Matrix* find(const Parameter* p) const;
  void clear() { grads_.clear(); }
  bool empty() const { return grads_.empty(); }

 private:
  std::unordered_map<const Parameter*, Matrix> grads_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Without a buffer the tape still supports gradients w.r.t. leaf() inputs.
  explicit Tape(GradBuffer* grads = nullptr) : grads_(grads) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Input whose gradient is kept and readable through grad() after backward.
  Var leaf(Matrix value);
  Var param(const Parameter& p);
  Var gather_rows(const Parameter& table, const std::vector<int>& rows);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  // a (n x m) + row (1 x m) broadcast over rows.
  Var add_row(Var a, Var row);
  Var matmul(Var a, Var b);
  // a * b^T.
  Var matmul_nt(Var a, Var b);
  // Row i of a multiplied by col(i, 0).
  Var scale_rows(Var a, Var col);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-12);
  Var gelu(Var x);
  Var softmax_rows(Var x);
  Var log_softmax_rows(Var x);
  Var slice_rows(Var x, int start, int count);
  Var slice_cols(Var x, int start, int count);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var square(Var x);
  Var sum(Var x);
  // Sum of x .* weights with constant weights; returns 1 x 1.
  Var weighted_sum(Var x, const Matrix& weights);
  // Cosine similarity of two row vectors, 1 x 1. The denominator is floored
  // at `eps`; identical inputs give exactly 1.
  Var cosine(Var a, Var b, double eps);
  Var dropout(Var x, double rate, Rng& rng);

  const Matrix& value(Var v) const;
  double scalar(Var v) const { return value(v)(0, 0); }
  const Matrix& grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Seeds d(loss)/d(loss) = 1 for a 1 x 1 node and propagates.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  using Backward = std::function<void(Tape&, int)>;

  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool needs_grad = false;
    Backward back;
  };

  const Matrix& val(int id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.value;
  }
  Matrix& grad_slot(int id);
  Var push(Matrix value, bool needs_grad, Backward back);
  bool any_grad(std::initializer_list<Var> vars) const;

  GradBuffer* grads_;
  std::vector<Node> nodes_;
};

}  // namespace lexsimp::nn
