#pragma once

// Dense double-precision tensors with reverse-mode autodiff.
//
// A Tensor is a shared handle to a graph node holding the value, the
// gradient buffer and a backward closure over its parents. Graphs are
// built eagerly by the free-function ops below and torn down by
// shared_ptr release. Storage is contiguous row-major; most ops are 2-D.

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace rg2p::tc {

using Real = double;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Node {
  std::vector<int> shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return data.size(); }
};

class Tensor {
 public:
  Tensor() : n_(std::make_shared<Node>()) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, Real value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  const std::vector<int>& shape() const { return n_->shape; }
  std::size_t numel() const { return n_->numel(); }
  int rows() const { return n_->shape.empty() ? 1 : n_->shape[0]; }
  int cols() const { return n_->shape.size() < 2 ? 1 : n_->shape[1]; }

  std::vector<Real>& data() { return n_->data; }
  const std::vector<Real>& data() const { return n_->data; }
  std::vector<Real>& grad() { return n_->grad; }
  const std::vector<Real>& grad() const { return n_->grad; }

  Real& at(int r, int c) { return n_->data[static_cast<std::size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return n_->data[static_cast<std::size_t>(r) * cols() + c]; }
  Real item() const {
    if (numel() != 1) throw DimensionError("item: tensor is not scalar");
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  void zero_grad() { std::fill(n_->grad.begin(), n_->grad.end(), Real(0)); }

  std::shared_ptr<Node> node() const { return n_; }
  bool defined() const { return !n_->shape.empty() || !n_->data.empty(); }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  std::shared_ptr<Node> n_;

  friend Tensor make_op(std::vector<int> shape, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn, const char* op_name);
};

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// --- shape ---
Tensor slice_cols(const Tensor& a, int start, int n);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int start, int n);
Tensor mean_rows(const Tensor& a);                 // [L x d] -> [1 x d]
Tensor broadcast_rows(const Tensor& a, int rows);  // [1 x d] -> [rows x d]
Tensor add_rowvec(const Tensor& a, const Tensor& rowvec);

// --- reductions ---
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

// --- NN primitives ---
// Row softmax with optional additive mask (same shape, typically 0 / -1e30).
Tensor softmax_rows(const Tensor& a, const std::vector<Real>* additive_mask = nullptr);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = 1e-5);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
// input [len x in_ch], kernel [width x in_ch x out_ch] (width odd), bias [1 x out_ch].
// Same padding: positions beyond the edges read zeros.
Tensor conv1d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias);
// Mean over rows of -log softmax(logits)[row, target[row]].
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets);

// Scaled dot-product attention with `heads` column-split heads, followed by
// the output projection. q,k,v are [L x d] inputs; wq/wk/wv/wo are [d x d].
// additive_mask, when present, is row-major [Lq x Lk].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, int heads,
                            const std::vector<Real>* additive_mask = nullptr);

std::vector<Real> causal_mask(int len);  // [len x len], 0 below/on diagonal

// Reverse-mode sweep from a scalar loss. Populates .grad() on every
// requires_grad node reachable from the loss. A second call on the same
// loss without rebuilding the graph is an error.
void backward(const Tensor& loss);

}  // namespace rg2p::tc
