#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace rg2p::tc {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("shape dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void check_finite(const Node& n, const char* op) {
  for (Real v : n.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  std::size_t count = shape_numel(shape);
  n->shape = std::move(shape);
  n->data.assign(count, Real(0));
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(count, Real(0));
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, Real value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<Real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("from: data length does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->data.size(), Real(0));
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor make_op(std::vector<int> shape, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn, const char* op_name) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data.assign(shape_numel(n->shape), Real(0));
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || p.requires_grad();
  n->requires_grad = rg;
  if (rg) {
    n->grad.assign(n->data.size(), Real(0));
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  (void)op_name;
  return Tensor(std::move(n));
}

namespace {

// Ensures a parent that requires grad has a grad buffer (leaves created
// before requires_grad was flipped on).
std::vector<Real>& grad_of(Node& n) {
  if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), Real(0));
  return n.grad;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_op(a.shape(), {a, b}, [](Node& o) {
    for (int pi = 0; pi < 2; ++pi) {
      Node& p = *o.parents[pi];
      if (!p.requires_grad) continue;
      auto& g = grad_of(p);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  }, "add");
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  check_finite(*out.node(), "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_op(a.shape(), {a, b}, [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    }
  }, "sub");
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  check_finite(*out.node(), "sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_op(a.shape(), {a, b}, [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * pa.data[i];
    }
  }, "mul");
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(*out.node(), "mul");
  return out;
}

Tensor scale(const Tensor& a, Real s) {
  Tensor out = make_op(a.shape(), {a}, [s](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * s;
  }, "scale");
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * s;
  check_finite(*out.node(), "scale");
  return out;
}

Tensor add_scalar(const Tensor& a, Real s) {
  Tensor out = make_op(a.shape(), {a}, [](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  }, "add_scalar");
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + s;
  check_finite(*out.node(), "add_scalar");
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = make_op(a.shape(), {a}, [](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      g[i] += o.grad[i] * o.data[i] * (Real(1) - o.data[i]);
    }
  }, "sigmoid");
  for (std::size_t i = 0; i < out.numel(); ++i) {
    Real x = a.data()[i];
    out.data()[i] = x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                           : std::exp(x) / (Real(1) + std::exp(x));
  }
  check_finite(*out.node(), "sigmoid");
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make_op(a.shape(), {a}, [](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (o.data[i] > 0) g[i] += o.grad[i];
    }
  }, "relu");
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::max(Real(0), a.data()[i]);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_op({m, n}, {a, b}, [m, k, n](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {  // dA = dO * B^T
      auto& g = grad_of(pa);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          Real go = o.grad[static_cast<std::size_t>(i) * n + j];
          if (go == 0) continue;
          for (int l = 0; l < k; ++l)
            g[static_cast<std::size_t>(i) * k + l] += go * pb.data[static_cast<std::size_t>(l) * n + j];
        }
    }
    if (pb.requires_grad) {  // dB = A^T * dO
      auto& g = grad_of(pb);
      for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
          Real av = pa.data[static_cast<std::size_t>(i) * k + l];
          if (av == 0) continue;
          for (int j = 0; j < n; ++j)
            g[static_cast<std::size_t>(l) * n + j] += av * o.grad[static_cast<std::size_t>(i) * n + j];
        }
    }
  }, "matmul");
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      Real av = a.data()[static_cast<std::size_t>(i) * k + l];
      if (av == 0) continue;
      for (int j = 0; j < n; ++j) {
        out.data()[static_cast<std::size_t>(i) * n + j] +=
            av * b.data()[static_cast<std::size_t>(l) * n + j];
      }
    }
  }
  check_finite(*out.node(), "matmul");
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) throw DimensionError("transpose: expects 2-D tensor");
  const int m = a.rows(), n = a.cols();
  Tensor out = make_op({n, m}, {a}, [m, n](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        g[static_cast<std::size_t>(j) * n + i] += o.grad[static_cast<std::size_t>(i) * m + j];
  }, "transpose");
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data()[static_cast<std::size_t>(j) * m + i] = a.data()[static_cast<std::size_t>(i) * n + j];
  return out;
}

Tensor slice_cols(const Tensor& a, int start, int n) {
  if (a.shape().size() != 2 || start < 0 || n <= 0 || start + n > a.cols()) {
    throw DimensionError("slice_cols: invalid range");
  }
  const int rows = a.rows(), cols = a.cols();
  Tensor out = make_op({rows, n}, {a}, [rows, cols, start, n](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < n; ++c)
        g[static_cast<std::size_t>(r) * cols + start + c] += o.grad[static_cast<std::size_t>(r) * n + c];
  }, "slice_cols");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c)
      out.data()[static_cast<std::size_t>(r) * n + c] = a.data()[static_cast<std::size_t>(r) * cols + start + c];
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int rows = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 2 || p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch");
    }
    total += p.cols();
  }
  std::vector<int> widths;
  for (const Tensor& p : parts) widths.push_back(p.cols());
  Tensor out = make_op({rows, total}, parts, [rows, total, widths](Node& o) {
    int offset = 0;
    for (std::size_t pi = 0; pi < o.parents.size(); ++pi) {
      Node& p = *o.parents[pi];
      const int w = widths[pi];
      if (p.requires_grad) {
        auto& g = grad_of(p);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < w; ++c)
            g[static_cast<std::size_t>(r) * w + c] += o.grad[static_cast<std::size_t>(r) * total + offset + c];
      }
      offset += w;
    }
  }, "concat_cols");
  int offset = 0;
  for (const Tensor& p : parts) {
    const int w = p.cols();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c)
        out.data()[static_cast<std::size_t>(r) * total + offset + c] = p.data()[static_cast<std::size_t>(r) * w + c];
    offset += w;
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int start, int n) {
  if (a.shape().size() != 2 || start < 0 || n <= 0 || start + n > a.rows()) {
    throw DimensionError("slice_rows: invalid range");
  }
  const int cols = a.cols();
  Tensor out = make_op({n, cols}, {a}, [cols, start, n](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < cols; ++c)
        g[static_cast<std::size_t>(start + r) * cols + c] += o.grad[static_cast<std::size_t>(r) * cols + c];
  }, "slice_rows");
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < cols; ++c)
      out.data()[static_cast<std::size_t>(r) * cols + c] = a.data()[static_cast<std::size_t>(start + r) * cols + c];
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.shape().size() != 2) throw DimensionError("mean_rows: expects 2-D tensor");
  const int rows = a.rows(), cols = a.cols();
  Tensor out = make_op({1, cols}, {a}, [rows, cols](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    const Real inv = Real(1) / rows;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        g[static_cast<std::size_t>(r) * cols + c] += o.grad[c] * inv;
  }, "mean_rows");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.data()[c] += a.data()[static_cast<std::size_t>(r) * cols + c];
  for (int c = 0; c < cols; ++c) out.data()[c] /= rows;
  check_finite(*out.node(), "mean_rows");
  return out;
}

Tensor broadcast_rows(const Tensor& a, int rows) {
  if (a.rows() != 1) throw DimensionError("broadcast_rows: expects a single-row tensor");
  const int cols = a.cols();
  Tensor out = make_op({rows, cols}, {a}, [rows, cols](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        g[c] += o.grad[static_cast<std::size_t>(r) * cols + c];
  }, "broadcast_rows");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.data()[static_cast<std::size_t>(r) * cols + c] = a.data()[c];
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& rowvec) {
  if (rowvec.rows() != 1 || rowvec.cols() != a.cols()) {
    throw DimensionError("add_rowvec: bias shape mismatch");
  }
  const int rows = a.rows(), cols = a.cols();
  Tensor out = make_op(a.shape(), {a, rowvec}, [rows, cols](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g[c] += o.grad[static_cast<std::size_t>(r) * cols + c];
    }
  }, "add_rowvec");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.data()[static_cast<std::size_t>(r) * cols + c] =
          a.data()[static_cast<std::size_t>(r) * cols + c] + rowvec.data()[c];
  check_finite(*out.node(), "add_rowvec");
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = make_op({1}, {a}, [](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0];
  }, "sum");
  Real s = 0;
  for (Real v : a.data()) s += v;
  out.data()[0] = s;
  check_finite(*out.node(), "sum");
  return out;
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), Real(1) / static_cast<Real>(a.numel()));
}

Tensor softmax_rows(const Tensor& a, const std::vector<Real>* additive_mask) {
  if (a.shape().size() != 2) throw DimensionError("softmax_rows: expects 2-D tensor");
  const int rows = a.rows(), cols = a.cols();
  if (additive_mask && additive_mask->size() != a.numel()) {
    throw DimensionError("softmax_rows: mask size mismatch");
  }
  Tensor out = make_op(a.shape(), {a}, [rows, cols](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * cols;
      Real dot = 0;
      for (int c = 0; c < cols; ++c) dot += o.grad[base + c] * o.data[base + c];
      for (int c = 0; c < cols; ++c)
        g[base + c] += o.data[base + c] * (o.grad[base + c] - dot);
    }
  }, "softmax_rows");
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    Real mx = -1e300;
    for (int c = 0; c < cols; ++c) {
      Real v = a.data()[base + c] + (additive_mask ? (*additive_mask)[base + c] : 0);
      mx = std::max(mx, v);
    }
    Real denom = 0;
    for (int c = 0; c < cols; ++c) {
      Real v = a.data()[base + c] + (additive_mask ? (*additive_mask)[base + c] : 0);
      Real e = std::exp(v - mx);
      out.data()[base + c] = e;
      denom += e;
    }
    for (int c = 0; c < cols; ++c) out.data()[base + c] /= denom;
  }
  check_finite(*out.node(), "softmax_rows");
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  if (x.shape().size() != 2) throw DimensionError("layer_norm: expects 2-D tensor");
  if (gain.cols() != x.cols() || bias.cols() != x.cols()) {
    throw DimensionError("layer_norm: gain/bias width mismatch");
  }
  const int rows = x.rows(), cols = x.cols();
  // Cache per-row mean and inverse stddev for the backward pass.
  auto stats = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows) * 2);
  Tensor out = make_op(x.shape(), {x, gain, bias}, [rows, cols, stats](Node& o) {
    Node& px = *o.parents[0];
    Node& pg = *o.parents[1];
    Node& pb = *o.parents[2];
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * cols;
      const Real mu = (*stats)[static_cast<std::size_t>(r) * 2];
      const Real inv_sd = (*stats)[static_cast<std::size_t>(r) * 2 + 1];
      if (pg.requires_grad || pb.requires_grad) {
        auto& gg = grad_of(pg);
        auto& gb = grad_of(pb);
        for (int c = 0; c < cols; ++c) {
          const Real xhat = (px.data[base + c] - mu) * inv_sd;
          gg[c] += o.grad[base + c] * xhat;
          gb[c] += o.grad[base + c];
        }
      }
      if (px.requires_grad) {
        auto& gx = grad_of(px);
        Real sum_dy = 0, sum_dy_xhat = 0;
        for (int c = 0; c < cols; ++c) {
          const Real xhat = (px.data[base + c] - mu) * inv_sd;
          const Real dy = o.grad[base + c] * pg.data[c];
          sum_dy += dy;
          sum_dy_xhat += dy * xhat;
        }
        for (int c = 0; c < cols; ++c) {
          const Real xhat = (px.data[base + c] - mu) * inv_sd;
          const Real dy = o.grad[base + c] * pg.data[c];
          gx[base + c] += inv_sd * (dy - sum_dy / cols - xhat * sum_dy_xhat / cols);
        }
      }
    }
  }, "layer_norm");
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    Real mu = 0;
    for (int c = 0; c < cols; ++c) mu += x.data()[base + c];
    mu /= cols;
    Real var = 0;
    for (int c = 0; c < cols; ++c) {
      const Real d = x.data()[base + c] - mu;
      var += d * d;
    }
    var /= cols;
    const Real inv_sd = Real(1) / std::sqrt(var + eps);
    (*stats)[static_cast<std::size_t>(r) * 2] = mu;
    (*stats)[static_cast<std::size_t>(r) * 2 + 1] = inv_sd;
    for (int c = 0; c < cols; ++c) {
      out.data()[base + c] = (x.data()[base + c] - mu) * inv_sd * gain.data()[c] + bias.data()[c];
    }
  }
  check_finite(*out.node(), "layer_norm");
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) throw DimensionError("embedding: table must be 2-D");
  const int vocab = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw DimensionError("embedding: id out of range");
  }
  const int len = static_cast<int>(ids.size());
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  Tensor out = make_op({len, d}, {table}, [len, d, ids_copy](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    for (int r = 0; r < len; ++r) {
      const std::size_t src = static_cast<std::size_t>(r) * d;
      const std::size_t dst = static_cast<std::size_t>((*ids_copy)[r]) * d;
      for (int c = 0; c < d; ++c) g[dst + c] += o.grad[src + c];
    }
  }, "embedding");
  for (int r = 0; r < len; ++r) {
    const std::size_t src = static_cast<std::size_t>(ids[r]) * d;
    const std::size_t dst = static_cast<std::size_t>(r) * d;
    for (int c = 0; c < d; ++c) out.data()[dst + c] = table.data()[src + c];
  }
  return out;
}

Tensor conv1d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.shape().size() != 2) throw DimensionError("conv1d: input must be [len x in_ch]");
  if (kernel.shape().size() != 3) throw DimensionError("conv1d: kernel must be [width x in_ch x out_ch]");
  const int len = input.shape()[0], in_ch = input.shape()[1];
  const int width = kernel.shape()[0], k_in = kernel.shape()[1], out_ch = kernel.shape()[2];
  if (width % 2 == 0) throw DimensionError("conv1d: kernel width must be odd for same padding");
  if (k_in != in_ch) throw DimensionError("conv1d: channel mismatch");
  if (bias.cols() != out_ch || bias.rows() != 1) throw DimensionError("conv1d: bias shape mismatch");
  const int half = width / 2;
  auto kidx = [in_ch, out_ch](int w, int ic, int oc) {
    return (static_cast<std::size_t>(w) * in_ch + ic) * out_ch + oc;
  };
  Tensor out = make_op({len, out_ch}, {input, kernel, bias},
                       [len, in_ch, width, out_ch, half, kidx](Node& o) {
    Node& px = *o.parents[0];
    Node& pk = *o.parents[1];
    Node& pb = *o.parents[2];
    for (int t = 0; t < len; ++t) {
      for (int oc = 0; oc < out_ch; ++oc) {
        const Real go = o.grad[static_cast<std::size_t>(t) * out_ch + oc];
        if (go == 0) continue;
        if (pb.requires_grad) grad_of(pb)[oc] += go;
        for (int w = 0; w < width; ++w) {
          const int src = t + w - half;
          if (src < 0 || src >= len) continue;
          for (int ic = 0; ic < in_ch; ++ic) {
            if (px.requires_grad) {
              grad_of(px)[static_cast<std::size_t>(src) * in_ch + ic] +=
                  go * pk.data[kidx(w, ic, oc)];
            }
            if (pk.requires_grad) {
              grad_of(pk)[kidx(w, ic, oc)] +=
                  go * px.data[static_cast<std::size_t>(src) * in_ch + ic];
            }
          }
        }
      }
    }
  }, "conv1d");
  for (int t = 0; t < len; ++t) {
    for (int oc = 0; oc < out_ch; ++oc) {
      Real acc = bias.data()[oc];
      for (int w = 0; w < width; ++w) {
        const int src = t + w - half;
        if (src < 0 || src >= len) continue;
        for (int ic = 0; ic < in_ch; ++ic) {
          acc += input.data()[static_cast<std::size_t>(src) * in_ch + ic] * kernel.data()[kidx(w, ic, oc)];
        }
      }
      out.data()[static_cast<std::size_t>(t) * out_ch + oc] = acc;
    }
  }
  check_finite(*out.node(), "conv1d");
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.shape().size() != 2) throw DimensionError("cross_entropy: logits must be 2-D");
  const int rows = logits.rows(), cols = logits.cols();
  if (static_cast<int>(targets.size()) != rows) {
    throw DimensionError("cross_entropy: target count mismatch");
  }
  for (int t : targets) {
    if (t < 0 || t >= cols) throw DimensionError("cross_entropy: target id out of range");
  }
  // Cache softmax probabilities for backward.
  auto probs = std::make_shared<std::vector<Real>>(logits.numel());
  auto tgt = std::make_shared<std::vector<int>>(targets);
  Tensor out = make_op({1}, {logits}, [rows, cols, probs, tgt](Node& o) {
    Node& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = grad_of(p);
    const Real go = o.grad[0] / rows;
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) {
        Real delta = (c == (*tgt)[r]) ? Real(1) : Real(0);
        g[base + c] += go * ((*probs)[base + c] - delta);
      }
    }
  }, "cross_entropy");
  Real total = 0;
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    Real mx = logits.data()[base];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, logits.data()[base + c]);
    Real denom = 0;
    for (int c = 0; c < cols; ++c) denom += std::exp(logits.data()[base + c] - mx);
    const Real log_denom = std::log(denom) + mx;
    for (int c = 0; c < cols; ++c) {
      (*probs)[base + c] = std::exp(logits.data()[base + c] - log_denom);
    }
    total += log_denom - logits.data()[base + targets[r]];
  }
  out.data()[0] = total / rows;
  check_finite(*out.node(), "cross_entropy");
  return out;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, int heads,
                            const std::vector<Real>* additive_mask) {
  const int d = q.cols();
  if (heads <= 0 || d % heads != 0) {
    throw DimensionError("multi_head_attention: model dim " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(heads));
  }
  if (k.rows() != v.rows()) throw DimensionError("multi_head_attention: key/value length mismatch");
  if (additive_mask &&
      additive_mask->size() != static_cast<std::size_t>(q.rows()) * k.rows()) {
    throw DimensionError("multi_head_attention: mask shape mismatch");
  }
  const int dh = d / heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  Tensor qp = matmul(q, wq);
  Tensor kp = matmul(k, wk);
  Tensor vp = matmul(v, wv);
  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qp, h * dh, dh);
    Tensor kh = slice_cols(kp, h * dh, dh);
    Tensor vh = slice_cols(vp, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor attn = softmax_rows(scores, additive_mask);
    head_outs.push_back(matmul(attn, vh));
  }
  return matmul(concat_cols(head_outs), wo);
}

std::vector<Real> causal_mask(int len) {
  std::vector<Real> m(static_cast<std::size_t>(len) * len, Real(0));
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) m[static_cast<std::size_t>(i) * len + j] = Real(-1e30);
  return m;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw DimensionError("backward: loss must be scalar");
  Node* root = loss.node().get();
  if (!root->requires_grad) {
    throw NumericError("backward: loss is detached from any trainable leaf");
  }
  if (root->backward_done) {
    throw NumericError("backward: graph already consumed; rebuild before calling again");
  }
  root->backward_done = true;

  // Topological order by iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grad_of(*root)[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), Real(0));
      n->backward_fn(*n);
    }
  }
}

}  // namespace rg2p::tc
