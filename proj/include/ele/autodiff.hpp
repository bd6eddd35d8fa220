#pragma once

// Minimal tape-based reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every primitive applied to Var handles. Calling backward() on a 1x1
// root replays the tape in reverse and returns adjoints for every node that depends on
// a tracked variable. Nodes built only from constants are never differentiated.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ele/graph.hpp"

namespace ele::ad {

template <typename Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as its tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

/// Adjoints produced by one backward pass.
template <typename Scalar>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Matrix<Scalar>> adjoints, std::vector<Eigen::Index> rows,
                     std::vector<Eigen::Index> cols)
      : adjoints_(std::move(adjoints)), rows_(std::move(rows)), cols_(std::move(cols)) {}

  /// d root / d var; zeros when var does not influence the root.
  Matrix<Scalar> of(const Var<Scalar>& var) const;

 private:
  std::vector<Matrix<Scalar>> adjoints_;
  std::vector<Eigen::Index> rows_, cols_;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  /// Propagates the adjoint of node `self` to its inputs via accumulate().
  using Backward = std::function<void(Tape& tape, int self)>;

  explicit Tape(bool checked = true) : checked_(checked) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> variable(Mat value);
  Var<Scalar> constant(Mat value);
  Var<Scalar> constant(Scalar value);

  /// Appends a derived node. `inputs` are the ids the backward closure may touch.
  Var<Scalar> record(const char* op, Mat value, std::vector<int> inputs, Backward backward);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool checked() const { return checked_; }
  void set_checked(bool on) { checked_ = on; }

  /// Adjoint of `id` during a backward pass.
  const Mat& adjoint(int id) const { return adjoints_[id]; }
  /// Adds `grad` into the adjoint of `id` (no-op for constants).
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& grad) {
    if (!nodes_[id].requires_grad) return;
    if (adjoints_[id].size() == 0) {
      adjoints_[id] = grad;
    } else {
      adjoints_[id] += grad;
    }
  }

  /// Reverse sweep from a 1x1 root. Throws ContractError for any other shape.
  Gradients<Scalar> backward(const Var<Scalar>& root);

 private:
  struct Node {
    Mat value;
    std::vector<int> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Mat> adjoints_;
  bool checked_;
};

template <typename Scalar>
const Matrix<Scalar>& Var<Scalar>::value() const {
  return tape_->value(id_);
}

// Primitives. All throw ShapeError naming the primitive and operand shapes on mismatch.

template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
/// Elementwise product.
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> exp(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> log(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> transpose(const Var<Scalar>& a);

/// Sum of all entries, 1x1.
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& a);
/// n x k -> n x 1.
template <typename Scalar> Var<Scalar> sum_rows(const Var<Scalar>& a);
/// n x k -> 1 x k.
template <typename Scalar> Var<Scalar> sum_cols(const Var<Scalar>& a);

/// x (n x k) plus row vector b (1 x k) on every row.
template <typename Scalar> Var<Scalar> add_rowvec(const Var<Scalar>& x, const Var<Scalar>& b);
/// x (n x k) times row vector g (1 x k) elementwise on every row.
template <typename Scalar> Var<Scalar> mul_rowvec(const Var<Scalar>& x, const Var<Scalar>& g);

/// Row-wise Euclidean norm, n x 1.
template <typename Scalar> Var<Scalar> norm_rows(const Var<Scalar>& x);
/// Each row divided by (its norm + eps). Throws DegenerateEmbeddingError for a zero row
/// when eps == 0.
template <typename Scalar> Var<Scalar> normalize_rows(const Var<Scalar>& x, Scalar eps = 0);

template <typename Scalar> Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts);
template <typename Scalar> Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts);
template <typename Scalar> Var<Scalar> gather_rows(const Var<Scalar>& x, const std::vector<int>& index);

template <typename Scalar> Var<Scalar> softmax_rows(const Var<Scalar>& x);
/// Zero-mean, unit-variance rows (no affine part).
template <typename Scalar> Var<Scalar> layer_norm_rows(const Var<Scalar>& x, Scalar eps = Scalar(1e-5));

/// Block-diagonal product: `a` stacks B blocks of `block_rows` rows, `x` stacks B blocks of
/// a.cols() rows; output block b is a_b * x_b.
template <typename Scalar> Var<Scalar> block_matmul(const Var<Scalar>& a, const Var<Scalar>& x, int block_rows);
/// Sums consecutive groups of `block_rows` rows: (B*r) x k -> B x k.
template <typename Scalar> Var<Scalar> segment_sum(const Var<Scalar>& x, int block_rows);

/// Multi-head scaled dot-product self-attention over B sequences of `seq_len` rows each.
/// `key_mask[r]` is false for padded rows, which are never attended to.
template <typename Scalar>
Var<Scalar> attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v, int seq_len,
                      int heads, const std::vector<char>& key_mask);

template <typename Scalar> Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar> Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar> Var<Scalar> operator-(const Var<Scalar>& a) { return scale(a, Scalar(-1)); }
template <typename Scalar> Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) { return scale(a, s); }
template <typename Scalar> Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) { return scale(a, s); }

// Named-binding interface used by gradient checks and tooling.

template <typename Scalar>
using Bindings = std::map<std::string, Matrix<Scalar>>;
template <typename Scalar>
using VarMap = std::map<std::string, Var<Scalar>>;
template <typename Scalar>
using Expression = std::function<Var<Scalar>(Tape<Scalar>&, const VarMap<Scalar>&)>;

template <typename Scalar>
struct Evaluation {
  std::unique_ptr<Tape<Scalar>> tape;
  VarMap<Scalar> inputs;
  Var<Scalar> root;
  const Matrix<Scalar>& value() const { return root.value(); }
};

/// Binds every name as a tracked variable and evaluates `expr`.
template <typename Scalar>
Evaluation<Scalar> forward(const Expression<Scalar>& expr, const Bindings<Scalar>& bindings,
                           bool checked = true);

/// d root / d binding for each requested name.
template <typename Scalar>
Bindings<Scalar> gradient(const Evaluation<Scalar>& eval, const std::vector<std::string>& wrt);

struct FiniteDifferenceReport {
  double max_rel_error = 0.0;
  std::map<std::string, double> rel_error;
  bool passed = false;
};

/// Central differences on every coordinate of the named bindings. Errors are normwise:
/// max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-12) per binding.
template <typename Scalar>
FiniteDifferenceReport finite_difference_check(const Expression<Scalar>& expr,
                                               const Bindings<Scalar>& bindings,
                                               const std::vector<std::string>& wrt,
                                               double step, double tol);

}  // namespace ele::ad
