#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "attnmixer/errors.hpp"

namespace attnmixer {

namespace detail {

/// One node of the reverse-mode computation graph. Leaves have no parents;
/// interior nodes carry a closure that pushes their gradient into the
/// parents. Values are row-major 64-bit floats.
struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> val;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  Node(int r, int c) : rows(r), cols(c), val(static_cast<size_t>(r) * c, 0.0),
                       grad(static_cast<size_t>(r) * c, 0.0) {}
};

struct TensorAccess;

}  // namespace detail

/// Dense 2-D tensor participating in a reverse-mode computation graph.
/// Copying a Tensor copies the handle, not the data; graphs built from the
/// same leaf share that leaf and accumulate gradients into it.
///
/// A graph and its tensors are confined to one thread during construction
/// and backward(). Leaf tensors whose values are no longer mutated may be
/// shared read-only across threads.
class Tensor {
 public:
  Tensor() = default;

  /// Leaf filled with zeros.
  Tensor(int rows, int cols) : node_(std::make_shared<detail::Node>(check_dims(rows, cols), cols)) {}

  /// Leaf with explicit row-major values.
  Tensor(int rows, int cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
  static Tensor constant(int rows, int cols, double v);
  static Tensor from(std::initializer_list<std::initializer_list<double>> rows);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  int size() const { return node_->rows * node_->cols; }
  bool is_scalar() const { return defined() && node_->rows == 1 && node_->cols == 1; }

  double operator()(int r, int c) const { return node_->val[static_cast<size_t>(r) * node_->cols + c]; }
  double value() const;  ///< Value of a 1x1 tensor.

  const std::vector<double>& values() const { return node_->val; }
  std::vector<double>& mutable_values() { return node_->val; }
  void set(int r, int c, double v) { node_->val[static_cast<size_t>(r) * node_->cols + c] = v; }
  void fill(double v);

  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->grad; }
  double grad_at(int r, int c) const { return node_->grad[static_cast<size_t>(r) * node_->cols + c]; }
  void zero_grad();

  /// True when both handles refer to the same graph node (used for tied
  /// parameters, which must receive one accumulated gradient).
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  /// Deep copy of the values into a fresh leaf (drops graph history).
  Tensor detached_copy() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  static int check_dims(int rows, int cols);
  std::shared_ptr<detail::Node> node_;

  friend struct detail::TensorAccess;
};

namespace detail {

/// Implementation-side access to the underlying graph node.
struct TensorAccess {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor make(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

/// C = A * B. Counts 2*m*n*k toward the thread's matmul FLOP counter.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// Y = X * W + b broadcast over rows. b is 1 x d_out.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

/// Row-wise softmax with max subtraction. Rejects non-finite input.
Tensor softmax_rows(const Tensor& a);

/// Row-wise layer normalization with population variance:
/// y = gain * (x - mean) / sqrt(var + eps) + bias. gain/bias are 1 x d.
/// eps = 0 is allowed when every row has nonzero variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  ///< elementwise product
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor log_t(const Tensor& a);  ///< natural log; entries must be positive
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);

/// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);

/// Row r of a as a 1 x cols tensor; backward scatters into that row.
Tensor slice_row(const Tensor& a, int r);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into the
/// .grad of every reachable leaf; zero_grad() the leaves between calls for
/// fresh gradients (interior gradients are reset internally). Two sweeps
/// over the same graph from the same leaf state produce bitwise-identical
/// gradients.
void backward(const Tensor& root);

/// Named leaf tensor (a learnable weight).
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Matmul FLOP counter for the calling thread. Incremented by 2*m*n*k on
/// every forward matmul (affine and attention products included); backward
/// passes do not count.
std::uint64_t flop_count();
void reset_flop_count();

}  // namespace attnmixer
