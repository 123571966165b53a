#include "lexsimp/autograd.hpp"

#include <cmath>

#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp::nn {

namespace {

void require(bool ok, const char* op) {
  if (!ok) throw ShapeError(std::string("shape mismatch in ") + op);
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

Matrix& GradBuffer::slot(const Parameter* p) {
  auto [it, inserted] = grads_.try_emplace(p);
  if (inserted) it->second = Matrix::Zero(p->value.rows(), p->value.cols());
  return it->second;
}

const Matrix* GradBuffer::find(const Parameter* p) const {
  auto it = grads_.find(p);
  return it == grads_.end() ? nullptr : &it->second;
}

Matrix& Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = val(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::push(Matrix value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

bool Tape::any_grad(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (nodes_[v.id].needs_grad) return true;
  }
  return false;
}

const Matrix& Tape::value(Var v) const { return val(v.id); }

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    static thread_local Matrix empty;
    const Matrix& value = val(v.id);
    empty = Matrix::Zero(value.rows(), value.cols());
    return empty;
  }
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) {
  return push(std::move(value), true, [](Tape&, int) {});
}

Var Tape::param(const Parameter& p) {
  const bool trainable = grads_ != nullptr && !p.frozen;
  Node n;
  n.ref = &p.value;
  n.needs_grad = trainable;
  if (trainable) {
    const Parameter* key = &p;
    n.back = [key](Tape& t, int self) { t.grads_->slot(key) += t.nodes_[self].grad; };
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::gather_rows(const Parameter& table, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), table.value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= table.value.rows()) throw ShapeError("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(rows[i]);
  }
  const bool trainable = grads_ != nullptr && !table.frozen;
  const Parameter* key = &table;
  return push(std::move(out), trainable, [key, rows](Tape& t, int self) {
    Matrix& g = t.grads_->slot(key);
    const Matrix& up = t.nodes_[self].grad;
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += up.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::add(Var a, Var b) {
  require(val(a.id).rows() == val(b.id).rows() && val(a.id).cols() == val(b.id).cols(), "add");
  return push(val(a.id) + val(b.id), any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) t.grad_slot(a.id) += g;
    if (t.nodes_[b.id].needs_grad) t.grad_slot(b.id) += g;
  });
}

Var Tape::sub(Var a, Var b) {
  require(val(a.id).rows() == val(b.id).rows() && val(a.id).cols() == val(b.id).cols(), "sub");
  return push(val(a.id) - val(b.id), any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) t.grad_slot(a.id) += g;
    if (t.nodes_[b.id].needs_grad) t.grad_slot(b.id) -= g;
  });
}

Var Tape::mul(Var a, Var b) {
  require(val(a.id).rows() == val(b.id).rows() && val(a.id).cols() == val(b.id).cols(), "mul");
  return push(val(a.id).cwiseProduct(val(b.id)), any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) t.grad_slot(a.id) += g.cwiseProduct(t.val(b.id));
    if (t.nodes_[b.id].needs_grad) t.grad_slot(b.id) += g.cwiseProduct(t.val(a.id));
  });
}

Var Tape::scale(Var a, double s) {
  return push(val(a.id) * s, any_grad({a}), [a, s](Tape& t, int self) {
    t.grad_slot(a.id) += t.nodes_[self].grad * s;
  });
}

Var Tape::add_scalar(Var a, double s) {
  Matrix out = val(a.id).array() + s;
  return push(std::move(out), any_grad({a}), [a](Tape& t, int self) {
    t.grad_slot(a.id) += t.nodes_[self].grad;
  });
}

Var Tape::add_row(Var a, Var row) {
  require(val(row.id).rows() == 1 && val(row.id).cols() == val(a.id).cols(), "add_row");
  Matrix out = val(a.id).rowwise() + val(row.id).row(0);
  return push(std::move(out), any_grad({a, row}), [a, row](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) t.grad_slot(a.id) += g;
    if (t.nodes_[row.id].needs_grad) t.grad_slot(row.id) += g.colwise().sum();
  });
}

Var Tape::matmul(Var a, Var b) {
  require(val(a.id).cols() == val(b.id).rows(), "matmul");
  return push(val(a.id) * val(b.id), any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) t.grad_slot(a.id).noalias() += g * t.val(b.id).transpose();
    if (t.nodes_[b.id].needs_grad) t.grad_slot(b.id).noalias() += t.val(a.id).transpose() * g;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  require(val(a.id).cols() == val(b.id).cols(), "matmul_nt");
  return push(val(a.id) * val(b.id).transpose(), any_grad({a, b}), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) t.grad_slot(a.id).noalias() += g * t.val(b.id);
    if (t.nodes_[b.id].needs_grad) t.grad_slot(b.id).noalias() += g.transpose() * t.val(a.id);
  });
}

Var Tape::scale_rows(Var a, Var col) {
  const Matrix& av = val(a.id);
  const Matrix& cv = val(col.id);
  require(cv.cols() == 1 && cv.rows() == av.rows(), "scale_rows");
  Matrix out = av;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) *= cv(i, 0);
  return push(std::move(out), any_grad({a, col}), [a, col](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.nodes_[a.id].needs_grad) {
      Matrix& ga = t.grad_slot(a.id);
      const Matrix& c = t.val(col.id);
      for (Eigen::Index i = 0; i < g.rows(); ++i) ga.row(i) += g.row(i) * c(i, 0);
    }
    if (t.nodes_[col.id].needs_grad) {
      Matrix& gc = t.grad_slot(col.id);
      const Matrix& av2 = t.val(a.id);
      for (Eigen::Index i = 0; i < g.rows(); ++i) gc(i, 0) += g.row(i).dot(av2.row(i));
    }
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& xv = val(x.id);
  const Eigen::Index n = xv.cols();
  require(val(gamma.id).cols() == n && val(beta.id).cols() == n, "layer_norm");
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_sigma(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_sigma(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_sigma(i);
  }
  Matrix out = (xhat.array().rowwise() * val(gamma.id).row(0).array()).rowwise() + val(beta.id).row(0).array();
  return push(std::move(out), any_grad({x, gamma, beta}),
              [x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Tape& t, int self) {
                const Matrix& g = t.nodes_[self].grad;
                if (t.nodes_[gamma.id].needs_grad) t.grad_slot(gamma.id) += g.cwiseProduct(xhat).colwise().sum();
                if (t.nodes_[beta.id].needs_grad) t.grad_slot(beta.id) += g.colwise().sum();
                if (t.nodes_[x.id].needs_grad) {
                  Matrix& gx = t.grad_slot(x.id);
                  const auto gam = t.val(gamma.id).row(0).array();
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    Eigen::ArrayXd dxhat = (g.row(i).array() * gam).transpose();
                    Eigen::ArrayXd xh = xhat.row(i).array().transpose();
                    const double m1 = dxhat.mean();
                    const double m2 = (dxhat * xh).mean();
                    gx.row(i) += ((dxhat - m1 - xh * m2) * inv_sigma(i)).matrix().transpose();
                  }
                }
              });
}

Var Tape::gelu(Var x) {
  const Matrix& xv = val(x.id);
  Matrix th = (kGeluScale * (xv.array() + kGeluCubic * xv.array().cube())).tanh();
  Matrix out = 0.5 * xv.array() * (1.0 + th.array());
  return push(std::move(out), any_grad({x}), [x, th = std::move(th)](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    const auto xa = t.val(x.id).array();
    const auto ta = th.array();
    auto deriv = 0.5 * (1.0 + ta) + 0.5 * xa * (1.0 - ta.square()) * kGeluScale * (1.0 + 3.0 * kGeluCubic * xa.square());
    t.grad_slot(x.id).array() += g.array() * deriv;
  });
}

Var Tape::softmax_rows(Var x) {
  const Matrix& xv = val(x.id);
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    out.row(i) = (xv.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return push(std::move(out), any_grad({x}), [x](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.val(self);
    Matrix& gx = t.grad_slot(x.id);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double s = g.row(i).dot(y.row(i));
      gx.row(i).array() += y.row(i).array() * (g.row(i).array() - s);
    }
  });
}

Var Tape::log_softmax_rows(Var x) {
  const Matrix& xv = val(x.id);
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    const double lse = m + std::log((xv.row(i).array() - m).exp().sum());
    out.row(i) = xv.row(i).array() - lse;
  }
  return push(std::move(out), any_grad({x}), [x](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.val(self);
    Matrix& gx = t.grad_slot(x.id);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double s = g.row(i).sum();
      gx.row(i).array() += g.row(i).array() - y.row(i).array().exp() * s;
    }
  });
}

Var Tape::slice_rows(Var x, int start, int count) {
  const Matrix& xv = val(x.id);
  require(start >= 0 && count >= 0 && start + count <= xv.rows(), "slice_rows");
  return push(xv.middleRows(start, count), any_grad({x}), [x, start, count](Tape& t, int self) {
    t.grad_slot(x.id).middleRows(start, count) += t.nodes_[self].grad;
  });
}

Var Tape::slice_cols(Var x, int start, int count) {
  const Matrix& xv = val(x.id);
  require(start >= 0 && count >= 0 && start + count <= xv.cols(), "slice_cols");
  return push(xv.middleCols(start, count), any_grad({x}), [x, start, count](Tape& t, int self) {
    t.grad_slot(x.id).middleCols(start, count) += t.nodes_[self].grad;
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = val(parts.front().id).cols();
  bool grad = false;
  for (Var p : parts) {
    require(val(p.id).cols() == cols, "concat_rows");
    rows += val(p.id).rows();
    grad = grad || nodes_[p.id].needs_grad;
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, val(p.id).rows()) = val(p.id);
    at += val(p.id).rows();
  }
  return push(std::move(out), grad, [parts](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    Eigen::Index at2 = 0;
    for (Var p : parts) {
      const Eigen::Index r = t.val(p.id).rows();
      if (t.nodes_[p.id].needs_grad) t.grad_slot(p.id) += g.middleRows(at2, r);
      at2 += r;
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  Eigen::Index cols = 0;
  const Eigen::Index rows = val(parts.front().id).rows();
  bool grad = false;
  for (Var p : parts) {
    require(val(p.id).rows() == rows, "concat_cols");
    cols += val(p.id).cols();
    grad = grad || nodes_[p.id].needs_grad;
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, val(p.id).cols()) = val(p.id);
    at += val(p.id).cols();
  }
  return push(std::move(out), grad, [parts](Tape& t, int self) {
    const Matrix& g = t.nodes_[self].grad;
    Eigen::Index at2 = 0;
    for (Var p : parts) {
      const Eigen::Index c = t.val(p.id).cols();
      if (t.nodes_[p.id].needs_grad) t.grad_slot(p.id) += g.middleCols(at2, c);
      at2 += c;
    }
  });
}

Var Tape::square(Var x) {
  return push(val(x.id).array().square().matrix(), any_grad({x}), [x](Tape& t, int self) {
    t.grad_slot(x.id).array() += 2.0 * t.nodes_[self].grad.array() * t.val(x.id).array();
  });
}

Var Tape::sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = val(x.id).sum();
  return push(std::move(out), any_grad({x}), [x](Tape& t, int self) {
    t.grad_slot(x.id).array() += t.nodes_[self].grad(0, 0);
  });
}

Var Tape::weighted_sum(Var x, const Matrix& weights) {
  require(weights.rows() == val(x.id).rows() && weights.cols() == val(x.id).cols(), "weighted_sum");
  Matrix out(1, 1);
  out(0, 0) = val(x.id).cwiseProduct(weights).sum();
  return push(std::move(out), any_grad({x}), [x, weights](Tape& t, int self) {
    t.grad_slot(x.id) += weights * t.nodes_[self].grad(0, 0);
  });
}

Var Tape::cosine(Var a, Var b, double eps) {
  const Matrix& av = val(a.id);
  const Matrix& bv = val(b.id);
  require(av.rows() == 1 && bv.rows() == 1 && av.cols() == bv.cols(), "cosine");
  // One loop for all three sums so a == b gives dot == na2 == nb2 bit-exactly.
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (Eigen::Index i = 0; i < av.cols(); ++i) {
    dot += av(0, i) * bv(0, i);
    na2 += av(0, i) * av(0, i);
    nb2 += bv(0, i) * bv(0, i);
  }
  // sqrt(x * x) == x in IEEE arithmetic, so a == b yields exactly 1.
  const double norm = std::sqrt(na2 * nb2);
  const bool floored = norm < eps;
  const double denom = floored ? eps : norm;
  Matrix out(1, 1);
  out(0, 0) = dot / denom;
  const double c = out(0, 0);
  return push(std::move(out), any_grad({a, b}), [a, b, na2, nb2, denom, floored, c](Tape& t, int self) {
    const double g = t.nodes_[self].grad(0, 0);
    const Matrix& av2 = t.val(a.id);
    const Matrix& bv2 = t.val(b.id);
    if (t.nodes_[a.id].needs_grad) {
      Matrix d = bv2 / denom;
      if (!floored) d -= av2 * (c / na2);
      t.grad_slot(a.id) += g * d;
    }
    if (t.nodes_[b.id].needs_grad) {
      Matrix d = av2 / denom;
      if (!floored) d -= bv2 * (c / nb2);
      t.grad_slot(b.id) += g * d;
    }
  });
}

Var Tape::dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const Matrix& xv = val(x.id);
  Matrix mask(xv.rows(), xv.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  Matrix out = xv.cwiseProduct(mask);
  return push(std::move(out), any_grad({x}), [x, mask = std::move(mask)](Tape& t, int self) {
    t.grad_slot(x.id) += t.nodes_[self].grad.cwiseProduct(mask);
  });
}

void Tape::backward(Var loss) {
  if (val(loss.id).size() != 1) throw ShapeError("backward expects a scalar");
  if (!nodes_[loss.id].needs_grad) return;
  grad_slot(loss.id)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this, i);
  }
}

}  // namespace lexsimp::nn
