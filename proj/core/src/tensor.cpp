#include "attnmixer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace attnmixer {

namespace {

thread_local std::uint64_t g_flops = 0;

using NodePtr = std::shared_ptr<detail::Node>;

std::string shape_str(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Raw accumulate kernels used by backward closures. These do not touch the
// FLOP counter: the counter tracks the forward pass only.

// C += A * B, A is m x k, B is k x n.
void acc_ab(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T, A is m x k, B is n x k.
void acc_abt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C += A^T * B, A is k x m, B is k x n.
void acc_atb(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* arow = a + static_cast<size_t>(p) * m;
    const double* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

NodePtr make_node(int rows, int cols) {
  return std::make_shared<detail::Node>(rows, cols);
}

}  // namespace

int Tensor::check_dims(int rows, int cols) {
  if (rows <= 0 || cols <= 0) {
    throw DimensionError("tensor dimensions must be positive, got " + shape_str(rows, cols));
  }
  return rows;
}

Tensor::Tensor(int rows, int cols, std::vector<double> values) {
  check_dims(rows, cols);
  if (static_cast<size_t>(rows) * cols != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(rows, cols));
  }
  node_ = make_node(rows, cols);
  node_->val = std::move(values);
}

Tensor Tensor::constant(int rows, int cols, double v) {
  Tensor t(rows, cols);
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  if (r == 0) throw DimensionError("empty initializer for tensor");
  const int c = static_cast<int>(rows.begin()->size());
  std::vector<double> v;
  v.reserve(static_cast<size_t>(r) * c);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) {
      throw DimensionError("ragged initializer rows for tensor");
    }
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(v));
}

double Tensor::value() const {
  if (!is_scalar()) {
    throw DimensionError("value() requires a 1x1 tensor, got " + shape_str(rows(), cols()));
  }
  return node_->val[0];
}

void Tensor::fill(double v) { std::fill(node_->val.begin(), node_->val.end(), v); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detached_copy() const {
  return Tensor(rows(), cols(), node_->val);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& an = detail::TensorAccess::node(a);
  const auto& bn = detail::TensorAccess::node(b);
  if (an->cols != bn->rows) {
    throw DimensionError("matmul shape mismatch: " + shape_str(an->rows, an->cols) +
                         " * " + shape_str(bn->rows, bn->cols));
  }
  const int m = an->rows, k = an->cols, n = bn->cols;
  auto out = make_node(m, n);
  acc_ab(an->val.data(), bn->val.data(), out->val.data(), m, k, n);
  g_flops += 2ull * m * n * k;
  out->parents = {an, bn};
  out->backprop = [m, k, n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // dA += dC * B^T ; dB += A^T * dC
    acc_abt(self.grad.data(), pb.val.data(), pa.grad.data(), m, n, k);
    acc_atb(pa.val.data(), self.grad.data(), pb.grad.data(), k, m, n);
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor transpose(const Tensor& a) {
  const auto& an = detail::TensorAccess::node(a);
  const int r = an->rows, c = an->cols;
  auto out = make_node(c, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->val[static_cast<size_t>(j) * r + i] = an->val[static_cast<size_t>(i) * c + j];
  out->parents = {an};
  out->backprop = [r, c](detail::Node& self) {
    auto& pa = *self.parents[0];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        pa.grad[static_cast<size_t>(i) * c + j] += self.grad[static_cast<size_t>(j) * r + i];
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& xn = detail::TensorAccess::node(x);
  const auto& wn = detail::TensorAccess::node(w);
  const auto& bn = detail::TensorAccess::node(b);
  if (xn->cols != wn->rows) {
    throw DimensionError("affine shape mismatch: " + shape_str(xn->rows, xn->cols) +
                         " * " + shape_str(wn->rows, wn->cols));
  }
  if (bn->rows != 1 || bn->cols != wn->cols) {
    throw DimensionError("affine bias must be 1x" + std::to_string(wn->cols) +
                         ", got " + shape_str(bn->rows, bn->cols));
  }
  const int n = xn->rows, din = xn->cols, dout = wn->cols;
  auto out = make_node(n, dout);
  acc_ab(xn->val.data(), wn->val.data(), out->val.data(), n, din, dout);
  g_flops += 2ull * n * dout * din;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dout; ++j)
      out->val[static_cast<size_t>(i) * dout + j] += bn->val[j];
  out->parents = {xn, wn, bn};
  out->backprop = [n, din, dout](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    acc_abt(self.grad.data(), pw.val.data(), px.grad.data(), n, dout, din);
    acc_atb(px.val.data(), self.grad.data(), pw.grad.data(), din, n, dout);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dout; ++j)
        pb.grad[j] += self.grad[static_cast<size_t>(i) * dout + j];
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor softmax_rows(const Tensor& a) {
  const auto& an = detail::TensorAccess::node(a);
  const int r = an->rows, c = an->cols;
  for (double v : an->val) {
    if (!std::isfinite(v)) throw NumericError("softmax_rows requires finite input");
  }
  auto out = make_node(r, c);
  for (int i = 0; i < r; ++i) {
    const double* row = an->val.data() + static_cast<size_t>(i) * c;
    double* prow = out->val.data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      prow[j] = std::exp(row[j] - mx);
      denom += prow[j];
    }
    for (int j = 0; j < c; ++j) prow[j] /= denom;
  }
  out->parents = {an};
  out->backprop = [r, c](detail::Node& self) {
    auto& pa = *self.parents[0];
    // da = p .* (dp - <dp, p>) per row
    for (int i = 0; i < r; ++i) {
      const double* p = self.val.data() + static_cast<size_t>(i) * c;
      const double* g = self.grad.data() + static_cast<size_t>(i) * c;
      double* da = pa.grad.data() + static_cast<size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += g[j] * p[j];
      for (int j = 0; j < c; ++j) da[j] += p[j] * (g[j] - dot);
    }
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto& xn = detail::TensorAccess::node(x);
  const auto& gn = detail::TensorAccess::node(gain);
  const auto& bn = detail::TensorAccess::node(bias);
  const int n = xn->rows, d = xn->cols;
  if (eps < 0.0) throw NumericError("layer_norm eps must be non-negative");
  if (gn->rows != 1 || gn->cols != d || bn->rows != 1 || bn->cols != d) {
    throw DimensionError("layer_norm gain/bias must be 1x" + std::to_string(d));
  }
  auto out = make_node(n, d);
  // Saved for backward: xhat and 1/sqrt(var+eps) per row.
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * d);
  auto invstd = std::make_shared<std::vector<double>>(n);
  for (int i = 0; i < n; ++i) {
    const double* row = xn->val.data() + static_cast<size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dv = row[j] - mean;
      var += dv * dv;
    }
    var /= d;  // population variance
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[i] = is;
    for (int j = 0; j < d; ++j) {
      const double xh = (row[j] - mean) * is;
      (*xhat)[static_cast<size_t>(i) * d + j] = xh;
      out->val[static_cast<size_t>(i) * d + j] = gn->val[j] * xh + bn->val[j];
    }
  }
  out->parents = {xn, gn, bn};
  out->backprop = [n, d, xhat, invstd](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    std::vector<double> dxhat(d);
    for (int i = 0; i < n; ++i) {
      const double* g = self.grad.data() + static_cast<size_t>(i) * d;
      const double* xh = xhat->data() + static_cast<size_t>(i) * d;
      double* dx = px.grad.data() + static_cast<size_t>(i) * d;
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int j = 0; j < d; ++j) {
        dxhat[j] = g[j] * pg.val[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xh[j];
        pg.grad[j] += g[j] * xh[j];
        pb.grad[j] += g[j];
      }
      mean_dxhat /= d;
      mean_dxhat_xhat /= d;
      const double is = (*invstd)[i];
      for (int j = 0; j < d; ++j) {
        dx[j] += is * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
      }
    }
  };
  return detail::TensorAccess::make(std::move(out));
}

namespace {

void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (a->rows != b->rows || a->cols != b->cols) {
    throw DimensionError(std::string(op) + " shape mismatch: " +
                         shape_str(a->rows, a->cols) + " vs " + shape_str(b->rows, b->cols));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& an = detail::TensorAccess::node(a);
  const auto& bn = detail::TensorAccess::node(b);
  check_same_shape(an, bn, "add");
  auto out = make_node(an->rows, an->cols);
  for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = an->val[i] + bn->val[i];
  out->parents = {an, bn};
  out->backprop = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i];
      pb.grad[i] += self.grad[i];
    }
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto& an = detail::TensorAccess::node(a);
  const auto& bn = detail::TensorAccess::node(b);
  check_same_shape(an, bn, "sub");
  auto out = make_node(an->rows, an->cols);
  for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = an->val[i] - bn->val[i];
  out->parents = {an, bn};
  out->backprop = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i];
      pb.grad[i] -= self.grad[i];
    }
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& an = detail::TensorAccess::node(a);
  const auto& bn = detail::TensorAccess::node(b);
  check_same_shape(an, bn, "mul");
  auto out = make_node(an->rows, an->cols);
  for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = an->val[i] * bn->val[i];
  out->parents = {an, bn};
  out->backprop = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i] * pb.val[i];
      pb.grad[i] += self.grad[i] * pa.val[i];
    }
  };
  return detail::TensorAccess::make(std::move(out));
}

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
  const auto& an = detail::TensorAccess::node(a);
  auto out = make_node(an->rows, an->cols);
  for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = fwd(an->val[i]);
  out->parents = {an};
  out->backprop = [bwd](detail::Node& self) {
    auto& pa = *self.parents[0];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      pa.grad[i] += self.grad[i] * bwd(pa.val[i], self.val[i]);
    }
  };
  return detail::TensorAccess::make(std::move(out));
}

}  // namespace

Tensor scale(const Tensor& a, double c) {
  return unary_op(a, [c](double v) { return v * c; },
                  [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double v) { return v + c; },
                  [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double v) { return -v; },
                  [](double, double) { return -1.0; });
}

Tensor abs_t(const Tensor& a) {
  return unary_op(a, [](double v) { return std::fabs(v); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log_t(const Tensor& a) {
  const auto& an = detail::TensorAccess::node(a);
  for (double v : an->val) {
    if (v <= 0.0) {
      throw DomainError("log of non-positive entry " + std::to_string(v));
    }
  }
  return unary_op(a, [](double v) { return std::log(v); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double v) { return v * v; },
                  [](double x, double) { return 2.0 * x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                  [](double, double s) { return s * (1.0 - s); });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(a, [](double v) { return std::tanh(v); },
                  [](double, double t) { return 1.0 - t * t; });
}

Tensor sum(const Tensor& a) {
  const auto& an = detail::TensorAccess::node(a);
  auto out = make_node(1, 1);
  double s = 0.0;
  for (double v : an->val) s += v;
  out->val[0] = s;
  out->parents = {an};
  out->backprop = [](detail::Node& self) {
    auto& pa = *self.parents[0];
    const double g = self.grad[0];
    for (double& gv : pa.grad) gv += g;
  };
  return detail::TensorAccess::make(std::move(out));
}

Tensor slice_row(const Tensor& a, int r) {
  const auto& an = detail::TensorAccess::node(a);
  if (r < 0 || r >= an->rows) {
    throw DimensionError("slice_row index " + std::to_string(r) + " out of range for " +
                         shape_str(an->rows, an->cols));
  }
  const int c = an->cols;
  auto out = make_node(1, c);
  std::copy_n(an->val.data() + static_cast<size_t>(r) * c, c, out->val.data());
  out->parents = {an};
  out->backprop = [r, c](detail::Node& self) {
    auto& pa = *self.parents[0];
    double* dst = pa.grad.data() + static_cast<size_t>(r) * c;
    for (int j = 0; j < c; ++j) dst[j] += self.grad[j];
  };
  return detail::TensorAccess::make(std::move(out));
}

void backward(const Tensor& root) {
  const auto& rn = detail::TensorAccess::node(root);
  if (!rn || rn->rows != 1 || rn->cols != 1) {
    throw DimensionError("backward requires a scalar (1x1) root");
  }
  // Iterative post-order DFS; parents are visited in construction order so
  // the resulting sweep is deterministic for a given graph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(rn.get(), 0);
  visited.insert(rn.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      detail::Node* parent = node->parents[idx].get();
      ++idx;
      if (visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior gradients are scratch space for this sweep; only leaves keep
  // accumulating across calls. Zeroing them here makes repeated backward
  // over a retained graph exact.
  for (detail::Node* node : order) {
    if (!node->parents.empty()) std::fill(node->grad.begin(), node->grad.end(), 0.0);
  }
  rn->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

std::uint64_t flop_count() { return g_flops; }
void reset_flop_count() { g_flops = 0; }

}  // namespace attnmixer
