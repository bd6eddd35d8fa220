#include "ele/autodiff.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "ele/errors.hpp"

namespace ele::ad {

namespace {

template <typename Scalar>
std::string shape_of(const Matrix<Scalar>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Scalar>
[[noreturn]] void shape_error(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a.value()) + " and " +
                   shape_of(b.value()));
}

template <typename Scalar>
[[noreturn]] void shape_error(const char* op, const Var<Scalar>& a, const std::string& detail) {
  throw ShapeError(std::string(op) + ": operand " + shape_of(a.value()) + " " + detail);
}

template <typename Scalar>
Tape<Scalar>& same_tape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> Gradients<Scalar>::of(const Var<Scalar>& var) const {
  const int id = var.id();
  if (id < 0 || id >= static_cast<int>(adjoints_.size()) || adjoints_[id].size() == 0) {
    return Matrix<Scalar>::Zero(var.rows(), var.cols());
  }
  return adjoints_[id];
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::variable(Mat value) {
  if (checked_ && !value.allFinite()) throw ContractError("variable: non-finite value");
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Scalar value) {
  return constant(Mat::Constant(1, 1, value));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(const char* op, Mat value, std::vector<int> inputs, Backward backward) {
  if (checked_ && !value.allFinite()) {
    throw ContractError(std::string(op) + ": produced non-finite values");
  }
  bool needs = false;
  for (int id : inputs) needs = needs || nodes_[id].requires_grad;
  nodes_.push_back(Node{std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr, needs});
  return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename Scalar>
Gradients<Scalar> Tape<Scalar>::backward(const Var<Scalar>& root) {
  if (root.tape() != this) throw ContractError("backward: root belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward: root must be a scalar, got " + shape_of(root.value()));
  }
  adjoints_.assign(nodes_.size(), Mat());
  if (nodes_[root.id()].requires_grad) adjoints_[root.id()] = Mat::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || adjoints_[id].size() == 0) continue;
    node.backward(*this, id);
  }
  std::vector<Eigen::Index> rows(nodes_.size()), cols(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    rows[i] = nodes_[i].value.rows();
    cols[i] = nodes_[i].value.cols();
  }
  return Gradients<Scalar>(std::move(adjoints_), std::move(rows), std::move(cols));
}

// --- primitives ------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = same_tape("matmul", a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() * b.value();
  return t.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = same_tape("add", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record("add", a.value() + b.value(), {ia, ib}, [ia, ib](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self));
    tp.accumulate(ib, tp.adjoint(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = same_tape("sub", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record("sub", a.value() - b.value(), {ia, ib}, [ia, ib](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self));
    tp.accumulate(ib, -tp.adjoint(self));
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = same_tape("mul", a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record("mul", a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  const int ia = a.id();
  return a.tape()->record("scale", a.value() * s, {ia}, [ia, s](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self) * s);
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  const int ia = a.id();
  Matrix<Scalar> out = a.value().array() + s;
  return a.tape()->record("add_scalar", std::move(out), {ia}, [ia](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self));
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  const int ia = a.id();
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape()->record("relu", std::move(out), {ia}, [ia](Tape<Scalar>& tp, int self) {
    // Subgradient 0 at the kink.
    tp.accumulate(ia, (tp.value(ia).array() > Scalar(0)).select(tp.adjoint(self).array(), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  const int ia = a.id();
  Matrix<Scalar> out = a.value().array().exp();
  return a.tape()->record("exp", std::move(out), {ia}, [ia](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self).cwiseProduct(tp.value(self)));
  });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& a) {
  if (a.tape()->checked() && (a.value().array() <= Scalar(0)).any()) {
    throw ContractError("log: non-positive argument");
  }
  const int ia = a.id();
  Matrix<Scalar> out = a.value().array().log();
  return a.tape()->record("log", std::move(out), {ia}, [ia](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self).cwiseQuotient(tp.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const int ia = a.id();
  Matrix<Scalar> out = a.value().transpose();
  return a.tape()->record("transpose", std::move(out), {ia}, [ia](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self).transpose());
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape()->record("sum", Matrix<Scalar>::Constant(1, 1, a.value().sum()), {ia},
                          [ia, r, c](Tape<Scalar>& tp, int self) {
                            tp.accumulate(ia, Matrix<Scalar>::Constant(r, c, tp.adjoint(self)(0, 0)));
                          });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  if (a.value().size() == 0) shape_error("mean", a, "is empty");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

template <typename Scalar>
Var<Scalar> sum_rows(const Var<Scalar>& a) {
  const int ia = a.id();
  const Eigen::Index c = a.cols();
  Matrix<Scalar> out = a.value().rowwise().sum();
  return a.tape()->record("sum_rows", std::move(out), {ia}, [ia, c](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self).replicate(1, c));
  });
}

template <typename Scalar>
Var<Scalar> sum_cols(const Var<Scalar>& a) {
  const int ia = a.id();
  const Eigen::Index r = a.rows();
  Matrix<Scalar> out = a.value().colwise().sum();
  return a.tape()->record("sum_cols", std::move(out), {ia}, [ia, r](Tape<Scalar>& tp, int self) {
    tp.accumulate(ia, tp.adjoint(self).replicate(r, 1));
  });
}

template <typename Scalar>
Var<Scalar> add_rowvec(const Var<Scalar>& x, const Var<Scalar>& b) {
  auto& t = same_tape("add_rowvec", x, b);
  if (b.rows() != 1 || b.cols() != x.cols()) shape_error("add_rowvec", x, b);
  const int ix = x.id(), ib = b.id();
  Matrix<Scalar> out = x.value().rowwise() + RowVector<Scalar>(b.value());
  return t.record("add_rowvec", std::move(out), {ix, ib}, [ix, ib](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    tp.accumulate(ix, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> mul_rowvec(const Var<Scalar>& x, const Var<Scalar>& gvec) {
  auto& t = same_tape("mul_rowvec", x, gvec);
  if (gvec.rows() != 1 || gvec.cols() != x.cols()) shape_error("mul_rowvec", x, gvec);
  const int ix = x.id(), ig = gvec.id();
  Matrix<Scalar> out = x.value().array().rowwise() * RowVector<Scalar>(gvec.value()).array();
  return t.record("mul_rowvec", std::move(out), {ix, ig}, [ix, ig](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    if (tp.requires_grad(ix)) {
      Matrix<Scalar> dx = g.array().rowwise() * RowVector<Scalar>(tp.value(ig)).array();
      tp.accumulate(ix, dx);
    }
    if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(tp.value(ix)).colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> norm_rows(const Var<Scalar>& x) {
  const int ix = x.id();
  Matrix<Scalar> out = x.value().rowwise().norm();
  if (x.tape()->checked() && (out.array() == Scalar(0)).any()) {
    throw ContractError("norm_rows: zero row (norm not differentiable)");
  }
  return x.tape()->record("norm_rows", std::move(out), {ix}, [ix](Tape<Scalar>& tp, int self) {
    const auto& n = tp.value(self);
    Matrix<Scalar> coef = tp.adjoint(self).cwiseQuotient(n);
    tp.accumulate(ix, (tp.value(ix).array().colwise() * coef.col(0).array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> normalize_rows(const Var<Scalar>& x, Scalar eps) {
  const int ix = x.id();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms = x.value().rowwise().norm();
  if (eps == Scalar(0) && (norms.array() == Scalar(0)).any()) {
    throw DegenerateEmbeddingError("normalize_rows: zero vector cannot be normalized");
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> denom = norms.array() + eps;
  Matrix<Scalar> out = x.value().array().colwise() / denom.array();
  return x.tape()->record("normalize_rows", std::move(out), {ix},
                          [ix, norms, denom](Tape<Scalar>& tp, int self) {
                            // y = x / (|x| + eps); dx = g/d - x (g.x) / (d^2 |x|)
                            const auto& g = tp.adjoint(self);
                            const auto& xv = tp.value(ix);
                            Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gx = g.cwiseProduct(xv).rowwise().sum();
                            Matrix<Scalar> dx = g.array().colwise() / denom.array();
                            for (Eigen::Index i = 0; i < xv.rows(); ++i) {
                              if (norms(i) == Scalar(0)) continue;
                              dx.row(i) -= xv.row(i) * (gx(i) / (denom(i) * denom(i) * norms(i)));
                            }
                            tp.accumulate(ix, dx);
                          });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Eigen::Index c = parts[0].cols();
  Eigen::Index r = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    same_tape("concat_rows", parts[0], p);
    if (p.cols() != c) shape_error("concat_rows", parts[0], p);
    ids.push_back(p.id());
    offsets.push_back(r);
    r += p.rows();
  }
  Matrix<Scalar> out(r, c);
  for (std::size_t k = 0; k < parts.size(); ++k) out.middleRows(offsets[k], parts[k].rows()) = parts[k].value();
  return parts[0].tape()->record("concat_rows", std::move(out), ids, [ids, offsets](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleRows(offsets[k], tp.value(ids[k]).rows()));
    }
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const Eigen::Index r = parts[0].rows();
  Eigen::Index c = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    same_tape("concat_cols", parts[0], p);
    if (p.rows() != r) shape_error("concat_cols", parts[0], p);
    ids.push_back(p.id());
    offsets.push_back(c);
    c += p.cols();
  }
  Matrix<Scalar> out(r, c);
  for (std::size_t k = 0; k < parts.size(); ++k) out.middleCols(offsets[k], parts[k].cols()) = parts[k].value();
  return parts[0].tape()->record("concat_cols", std::move(out), ids, [ids, offsets](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(offsets[k], tp.value(ids[k]).cols()));
    }
  });
}

template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& x, const std::vector<int>& index) {
  const int ix = x.id();
  const Eigen::Index n = x.rows();
  Matrix<Scalar> out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= n) shape_error("gather_rows", x, "indexed out of range");
    out.row(r) = x.value().row(index[r]);
  }
  return x.tape()->record("gather_rows", std::move(out), {ix}, [ix, index](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(tp.value(ix).rows(), tp.value(ix).cols());
    for (std::size_t r = 0; r < index.size(); ++r) dx.row(index[r]) += g.row(r);
    tp.accumulate(ix, dx);
  });
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x) {
  const int ix = x.id();
  Matrix<Scalar> out = x.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i).array() -= out.row(i).maxCoeff();
    out.row(i) = out.row(i).array().exp();
    out.row(i) /= out.row(i).sum();
  }
  return x.tape()->record("softmax_rows", std::move(out), {ix}, [ix](Tape<Scalar>& tp, int self) {
    const auto& y = tp.value(self);
    const auto& g = tp.adjoint(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> dx = y.cwiseProduct(Matrix<Scalar>(g.colwise() - dot));
    tp.accumulate(ix, dx);
  });
}

template <typename Scalar>
Var<Scalar> layer_norm_rows(const Var<Scalar>& x, Scalar eps) {
  const int ix = x.id();
  const Eigen::Index k = x.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mu = x.value().rowwise().mean();
  Matrix<Scalar> centered = x.value().colwise() - mu;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<Scalar>(k)) + eps).rsqrt();
  Matrix<Scalar> out = centered.array().colwise() * inv_std.array();
  return x.tape()->record("layer_norm_rows", std::move(out), {ix}, [ix, inv_std](Tape<Scalar>& tp, int self) {
    // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
    const auto& xhat = tp.value(self);
    const auto& g = tp.adjoint(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gm = g.rowwise().mean();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gxm = g.cwiseProduct(xhat).rowwise().mean();
    Matrix<Scalar> dx = (g.colwise() - gm) - Matrix<Scalar>(xhat.array().colwise() * gxm.array());
    dx = dx.array().colwise() * inv_std.array();
    tp.accumulate(ix, dx);
  });
}

template <typename Scalar>
Var<Scalar> block_matmul(const Var<Scalar>& a, const Var<Scalar>& x, int block_rows) {
  auto& t = same_tape("block_matmul", a, x);
  const Eigen::Index r = block_rows, c = a.cols();
  if (r <= 0 || a.rows() % r != 0) shape_error("block_matmul", a, "not divisible into row blocks");
  const Eigen::Index blocks = a.rows() / r;
  if (x.rows() != blocks * c) shape_error("block_matmul", a, x);
  const Eigen::Index k = x.cols();
  Matrix<Scalar> out(blocks * r, k);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    out.middleRows(b * r, r).noalias() = a.value().middleRows(b * r, r) * x.value().middleRows(b * c, c);
  }
  const int ia = a.id(), ixd = x.id();
  return t.record("block_matmul", std::move(out), {ia, ixd}, [ia, ixd, r, c, blocks](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    const auto& av = tp.value(ia);
    const auto& xv = tp.value(ixd);
    if (tp.requires_grad(ia)) {
      Matrix<Scalar> da(av.rows(), av.cols());
      for (Eigen::Index b = 0; b < blocks; ++b) {
        da.middleRows(b * r, r).noalias() = g.middleRows(b * r, r) * xv.middleRows(b * c, c).transpose();
      }
      tp.accumulate(ia, da);
    }
    if (tp.requires_grad(ixd)) {
      Matrix<Scalar> dx(xv.rows(), xv.cols());
      for (Eigen::Index b = 0; b < blocks; ++b) {
        dx.middleRows(b * c, c).noalias() = av.middleRows(b * r, r).transpose() * g.middleRows(b * r, r);
      }
      tp.accumulate(ixd, dx);
    }
  });
}

template <typename Scalar>
Var<Scalar> segment_sum(const Var<Scalar>& x, int block_rows) {
  const Eigen::Index r = block_rows;
  if (r <= 0 || x.rows() % r != 0) shape_error("segment_sum", x, "not divisible into row blocks");
  const Eigen::Index blocks = x.rows() / r;
  Matrix<Scalar> out(blocks, x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) out.row(b) = x.value().middleRows(b * r, r).colwise().sum();
  const int ix = x.id();
  return x.tape()->record("segment_sum", std::move(out), {ix}, [ix, r, blocks](Tape<Scalar>& tp, int self) {
    const auto& g = tp.adjoint(self);
    Matrix<Scalar> dx(blocks * r, g.cols());
    for (Eigen::Index b = 0; b < blocks; ++b) dx.middleRows(b * r, r) = g.row(b).replicate(r, 1);
    tp.accumulate(ix, dx);
  });
}

template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v, int seq_len,
                      int heads, const std::vector<char>& key_mask) {
  auto& t = same_tape("attention", q, k);
  same_tape("attention", q, v);
  if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols() || q.cols() != v.cols()) {
    shape_error("attention", q, k);
  }
  const Eigen::Index L = seq_len, width = q.cols();
  if (L <= 0 || q.rows() % L != 0) shape_error("attention", q, "rows not divisible by seq_len");
  if (heads <= 0 || width % heads != 0) shape_error("attention", q, "width not divisible by heads");
  if (static_cast<Eigen::Index>(key_mask.size()) != q.rows()) shape_error("attention", q, "mask length mismatch");
  const Eigen::Index batch = q.rows() / L, dk = width / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dk));

  auto probs = std::make_shared<std::vector<Matrix<Scalar>>>(batch * heads);
  Matrix<Scalar> out(q.rows(), width);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      auto qb = q.value().block(b * L, h * dk, L, dk);
      auto kb = k.value().block(b * L, h * dk, L, dk);
      auto vb = v.value().block(b * L, h * dk, L, dk);
      Matrix<Scalar> s = (qb * kb.transpose()) * inv_sqrt;
      for (Eigen::Index j = 0; j < L; ++j) {
        if (!key_mask[b * L + j]) s.col(j).setConstant(-std::numeric_limits<Scalar>::infinity());
      }
      for (Eigen::Index i = 0; i < L; ++i) {
        if (!std::isfinite(static_cast<double>(s.row(i).maxCoeff()))) {
          throw ShapeError("attention: sequence without any unmasked key");
        }
        const Scalar mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b * L, h * dk, L, dk).noalias() = s * vb;
      (*probs)[b * heads + h] = std::move(s);
    }
  }
  const int iq = q.id(), ik = k.id(), iv = v.id();
  return t.record("attention", std::move(out), {iq, ik, iv},
                  [iq, ik, iv, probs, L, dk, batch, heads, inv_sqrt](Tape<Scalar>& tp, int self) {
                    const auto& g = tp.adjoint(self);
                    const auto& qv = tp.value(iq);
                    const auto& kv = tp.value(ik);
                    const auto& vv = tp.value(iv);
                    Matrix<Scalar> dq = Matrix<Scalar>::Zero(qv.rows(), qv.cols());
                    Matrix<Scalar> dkm = Matrix<Scalar>::Zero(kv.rows(), kv.cols());
                    Matrix<Scalar> dv = Matrix<Scalar>::Zero(vv.rows(), vv.cols());
                    for (Eigen::Index b = 0; b < batch; ++b) {
                      for (Eigen::Index h = 0; h < heads; ++h) {
                        const auto& p = (*probs)[b * heads + h];
                        auto gb = g.block(b * L, h * dk, L, dk);
                        dv.block(b * L, h * dk, L, dk).noalias() = p.transpose() * gb;
                        Matrix<Scalar> dp = gb * vv.block(b * L, h * dk, L, dk).transpose();
                        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = dp.cwiseProduct(p).rowwise().sum();
                        Matrix<Scalar> ds = p.cwiseProduct(Matrix<Scalar>(dp.colwise() - rowdot)) * inv_sqrt;
                        dq.block(b * L, h * dk, L, dk).noalias() = ds * kv.block(b * L, h * dk, L, dk);
                        dkm.block(b * L, h * dk, L, dk).noalias() = ds.transpose() * qv.block(b * L, h * dk, L, dk);
                      }
                    }
                    tp.accumulate(iq, dq);
                    tp.accumulate(ik, dkm);
                    tp.accumulate(iv, dv);
                  });
}

// --- named-binding interface -------------------------------------------------

template <typename Scalar>
Evaluation<Scalar> forward(const Expression<Scalar>& expr, const Bindings<Scalar>& bindings, bool checked) {
  Evaluation<Scalar> eval;
  eval.tape = std::make_unique<Tape<Scalar>>(checked);
  for (const auto& [name, value] : bindings) eval.inputs.emplace(name, eval.tape->variable(value));
  eval.root = expr(*eval.tape, eval.inputs);
  return eval;
}

template <typename Scalar>
Bindings<Scalar> gradient(const Evaluation<Scalar>& eval, const std::vector<std::string>& wrt) {
  auto grads = eval.tape->backward(eval.root);
  Bindings<Scalar> out;
  for (const auto& name : wrt) {
    auto it = eval.inputs.find(name);
    if (it == eval.inputs.end()) throw ContractError("gradient: unknown binding '" + name + "'");
    out.emplace(name, grads.of(it->second));
  }
  return out;
}

template <typename Scalar>
FiniteDifferenceReport finite_difference_check(const Expression<Scalar>& expr, const Bindings<Scalar>& bindings,
                                               const std::vector<std::string>& wrt, double step, double tol) {
  auto eval = forward(expr, bindings);
  auto analytic = gradient(eval, wrt);
  auto value_at = [&](const Bindings<Scalar>& b) {
    Tape<Scalar> tape(false);
    VarMap<Scalar> vars;
    for (const auto& [name, value] : b) vars.emplace(name, tape.constant(value));
    return static_cast<double>(expr(tape, vars).value()(0, 0));
  };
  FiniteDifferenceReport report;
  Bindings<Scalar> probe = bindings;
  for (const auto& name : wrt) {
    Matrix<Scalar>& x = probe.at(name);
    Matrix<Scalar> numeric(x.rows(), x.cols());
    for (Eigen::Index idx = 0; idx < x.size(); ++idx) {
      const Scalar orig = x.data()[idx];
      x.data()[idx] = orig + static_cast<Scalar>(step);
      const double up = value_at(probe);
      x.data()[idx] = orig - static_cast<Scalar>(step);
      const double down = value_at(probe);
      x.data()[idx] = orig;
      numeric.data()[idx] = static_cast<Scalar>((up - down) / (2.0 * step));
    }
    const auto& a = analytic.at(name);
    const double scale_ref = std::max({static_cast<double>(a.template lpNorm<Eigen::Infinity>()),
                                       static_cast<double>(numeric.template lpNorm<Eigen::Infinity>()), 1e-12});
    const double err =
        x.size() == 0 ? 0.0 : static_cast<double>((a - numeric).template lpNorm<Eigen::Infinity>()) / scale_ref;
    report.rel_error[name] = err;
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

// --- instantiations ------------------------------------------------------------

#define ELE_AD_INSTANTIATE(S)                                                                         \
  template class Gradients<S>;                                                                        \
  template class Tape<S>;                                                                             \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                               \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> scale(const Var<S>&, S);                                                            \
  template Var<S> add_scalar(const Var<S>&, S);                                                       \
  template Var<S> relu(const Var<S>&);                                                                \
  template Var<S> exp(const Var<S>&);                                                                 \
  template Var<S> log(const Var<S>&);                                                                 \
  template Var<S> transpose(const Var<S>&);                                                           \
  template Var<S> sum(const Var<S>&);                                                                 \
  template Var<S> mean(const Var<S>&);                                                                \
  template Var<S> sum_rows(const Var<S>&);                                                            \
  template Var<S> sum_cols(const Var<S>&);                                                            \
  template Var<S> add_rowvec(const Var<S>&, const Var<S>&);                                           \
  template Var<S> mul_rowvec(const Var<S>&, const Var<S>&);                                           \
  template Var<S> norm_rows(const Var<S>&);                                                           \
  template Var<S> normalize_rows(const Var<S>&, S);                                                   \
  template Var<S> concat_rows(const std::vector<Var<S>>&);                                            \
  template Var<S> concat_cols(const std::vector<Var<S>>&);                                            \
  template Var<S> gather_rows(const Var<S>&, const std::vector<int>&);                                \
  template Var<S> softmax_rows(const Var<S>&);                                                        \
  template Var<S> layer_norm_rows(const Var<S>&, S);                                                  \
  template Var<S> block_matmul(const Var<S>&, const Var<S>&, int);                                    \
  template Var<S> segment_sum(const Var<S>&, int);                                                    \
  template Var<S> attention(const Var<S>&, const Var<S>&, const Var<S>&, int, int,                    \
                            const std::vector<char>&);                                                \
  template Evaluation<S> forward(const Expression<S>&, const Bindings<S>&, bool);                     \
  template Bindings<S> gradient(const Evaluation<S>&, const std::vector<std::string>&);               \
  template FiniteDifferenceReport finite_difference_check(const Expression<S>&, const Bindings<S>&,   \
                                                          const std::vector<std::string>&, double, double);

ELE_AD_INSTANTIATE(float)
ELE_AD_INSTANTIATE(double)

#undef ELE_AD_INSTANTIATE

}  // namespace ele::ad
