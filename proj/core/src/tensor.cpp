#include "tqe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>

#include "tqe/errors.hpp"

namespace tqe::ad {

namespace detail {

struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
};

namespace {
thread_local std::uint64_t g_seq = 0;
}

std::shared_ptr<Node> make_node(std::vector<std::size_t> shape, std::vector<double> value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = ++g_seq;
  return n;
}

}  // namespace detail

using detail::Node;

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(Node&)> backprop) {
  auto n = detail::make_node(std::move(shape), std::move(value));
  n->parents.reserve(parents.size());
  for (const Tensor& p : parents) {
    n->parents.push_back(p.node_);
    n->requires_grad = n->requires_grad || p.node_->requires_grad;
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return Tensor(std::move(n));
}

// ---- Tensor basics ----

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(detail::make_node(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data) {
  require(shape_numel(shape) == data.size(),
          "tensor: shape " + shape_string(shape) + " does not match data length " +
              std::to_string(data.size()));
  return Tensor(detail::make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::param(std::vector<std::size_t> shape, std::vector<double> data) {
  Tensor t = from_data(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  return t;
}

const std::vector<std::size_t>& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  require(rank() == 2, "rows(): tensor is not 2-D, shape " + shape_string(shape()));
  return node_->shape[0];
}
std::size_t Tensor::cols() const {
  require(rank() == 2, "cols(): tensor is not 2-D, shape " + shape_string(shape()));
  return node_->shape[1];
}

std::vector<double>& Tensor::data() { return node_->value; }
const std::vector<double>& Tensor::data() const { return node_->value; }

double Tensor::operator()(std::size_t i) const { return node_->value[i]; }
double Tensor::operator()(std::size_t i, std::size_t j) const {
  return node_->value[i * node_->shape[1] + j];
}

double Tensor::item() const {
  require(size() == 1, "item(): tensor is not scalar, shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

const std::vector<double>& Tensor::grad() const { return node_->grad; }
std::vector<double>& Tensor::grad() { return node_->grad; }

Tensor Tensor::clone() const {
  Tensor t = from_data(node_->shape, node_->value);
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
          "matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = av[i * k + l];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += ail * bv[l * n + j];
    }
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = nd.grad[i * n + j];
          for (std::size_t l = 0; l < k; ++l) pa->grad[i * k + l] += g * pb->value[l * n + j];
        }
    }
    if (pb->requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          const double ail = pa->value[i * k + l];
          for (std::size_t j = 0; j < n; ++j) pb->grad[l * n + j] += ail * nd.grad[i * n + j];
        }
    }
  });
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require(a.rank() == 2 && x.rank() == 1 && a.cols() == x.size(),
          "matvec: incompatible shapes " + shape_string(a.shape()) + " and " +
              shape_string(x.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a.data()[i * n + j] * x.data()[j];
    out[i] = acc;
  }
  return make_op({m}, std::move(out), {a, x}, [m, n](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* px = nd.parents[1].get();
    for (std::size_t i = 0; i < m; ++i) {
      const double g = nd.grad[i];
      if (pa->requires_grad)
        for (std::size_t j = 0; j < n; ++j) pa->grad[i * n + j] += g * px->value[j];
      if (px->requires_grad)
        for (std::size_t j = 0; j < n; ++j) px->grad[j] += g * pa->value[i * n + j];
    }
  });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: tensor is not 2-D, shape " + shape_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_op({n, m}, std::move(out), {a}, [m, n](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p->grad[i * n + j] += nd.grad[j * m + i];
  });
}

// ---- elementwise ----

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& nd) {
    for (int s = 0; s < 2; ++s) {
      Node* p = nd.parents[s].get();
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < nd.grad.size(); ++i) p->grad[i] += nd.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += nd.grad[i];
      if (pb->requires_grad) pb->grad[i] -= nd.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& nd) {
    Node* pa = nd.parents[0].get();
    Node* pb = nd.parents[1].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += nd.grad[i] * pb->value[i];
      if (pb->requires_grad) pb->grad[i] += nd.grad[i] * pa->value[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return make_op(a.shape(), std::move(out), {a}, [](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) p->grad[i] += nd.grad[i];
  });
}

Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  return make_op(a.shape(), std::move(out), {a}, [c](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) p->grad[i] += c * nd.grad[i];
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require(m.rank() == 2 && v.rank() == 1 && m.cols() == v.size(),
          "add_rowvec: incompatible shapes " + shape_string(m.shape()) + " and " +
              shape_string(v.shape()));
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.data()[i * c + j] + v.data()[j];
  return make_op({r, c}, std::move(out), {m, v}, [r, c](Node& nd) {
    Node* pm = nd.parents[0].get();
    Node* pv = nd.parents[1].get();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double g = nd.grad[i * c + j];
        if (pm->requires_grad) pm->grad[i * c + j] += g;
        if (pv->requires_grad) pv->grad[j] += g;
      }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_op(a.shape(), std::move(out), {a}, [](Node& nd) {
    Node* p = nd.parents[0].get();
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < nd.grad.size(); ++i)
      if (p->value[i] > 0.0) p->grad[i] += nd.grad[i];
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
  return make_op(a.shape(), std::move(out), {a}, [](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i)
      p->grad[i] += nd.grad[i] * (1.0 - nd.value[i] * nd.value[i]);
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return make_op(a.shape(), std::move(out), {a}, [](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i)
      p->grad[i] += nd.grad[i] * nd.value[i] * (1.0 - nd.value[i]);
  });
}

Tensor softmax(const Tensor& v) {
  require(v.rank() == 1, "softmax: tensor is not 1-D, shape " + shape_string(v.shape()));
  require(v.size() >= 1, "softmax: empty input");
  const std::size_t n = v.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v.data()) mx = std::max(mx, x);
  if (std::isinf(mx) && mx < 0)
    throw tqe::NumericError("softmax: every input is -inf (all positions masked)");
  std::vector<double> out(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(v.data()[i] - mx);
    s += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= s;
  return make_op({n}, std::move(out), {v}, [n](Node& nd) {
    Node* p = nd.parents[0].get();
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += nd.grad[i] * nd.value[i];
    for (std::size_t i = 0; i < n; ++i) p->grad[i] += nd.value[i] * (nd.grad[i] - dot);
  });
}

// ---- shape ops ----

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no parts");
  const std::size_t rank = parts[0].rank();
  require(rank == 1 || rank == 2, "concat: only 1-D and 2-D supported");
  require(axis == 0 || (axis == 1 && rank == 2), "concat: invalid axis for rank");
  for (const Tensor& p : parts) {
    require(p.rank() == rank, "concat: mixed ranks");
    for (std::size_t d = 0; d < rank; ++d)
      require(d == static_cast<std::size_t>(axis) || p.shape()[d] == parts[0].shape()[d],
              "concat: incompatible shapes " + shape_string(parts[0].shape()) + " vs " +
                  shape_string(p.shape()));
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());

  if (rank == 1 || axis == 0) {
    std::size_t total = 0;
    for (const Tensor& p : parts) total += p.shape()[0];
    std::vector<std::size_t> shape = parts[0].shape();
    shape[0] = total;
    std::vector<double> out;
    out.reserve(shape_numel(shape));
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_op(std::move(shape), std::move(out), std::move(parents), [](Node& nd) {
      std::size_t off = 0;
      for (auto& pp : nd.parents) {
        Node* p = pp.get();
        if (p->requires_grad)
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += nd.grad[off + i];
        off += p->value.size();
      }
    });
  }

  // axis == 1, rank 2
  const std::size_t rows = parts[0].rows();
  std::size_t total_cols = 0;
  for (const Tensor& p : parts) total_cols += p.cols();
  std::vector<double> out(rows * total_cols);
  std::size_t col_off = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total_cols + col_off + j] = p.data()[i * c + j];
    col_off += c;
  }
  return make_op({rows, total_cols}, std::move(out), std::move(parents),
                 [rows, total_cols](Node& nd) {
                   std::size_t off = 0;
                   for (auto& pp : nd.parents) {
                     Node* p = pp.get();
                     const std::size_t c = p->shape[1];
                     if (p->requires_grad)
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           p->grad[i * c + j] += nd.grad[i * total_cols + off + j];
                     off += c;
                   }
                 });
}

Tensor slice(const Tensor& v, std::size_t start, std::size_t len) {
  require(v.rank() == 1, "slice: tensor is not 1-D");
  require(start + len <= v.size(), "slice: out of range");
  std::vector<double> out(v.data().begin() + start, v.data().begin() + start + len);
  return make_op({len}, std::move(out), {v}, [start, len](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < len; ++i) p->grad[start + i] += nd.grad[i];
  });
}

Tensor slice_rows(const Tensor& m, std::size_t start, std::size_t count) {
  require(m.rank() == 2, "slice_rows: tensor is not 2-D");
  require(start + count <= m.rows(), "slice_rows: out of range");
  const std::size_t c = m.cols();
  std::vector<double> out(m.data().begin() + start * c, m.data().begin() + (start + count) * c);
  return make_op({count, c}, std::move(out), {m}, [start, c, count](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < count * c; ++i) p->grad[start * c + i] += nd.grad[i];
  });
}

Tensor row(const Tensor& m, std::size_t i) {
  require(m.rank() == 2, "row: tensor is not 2-D");
  require(i < m.rows(), "row: index out of range");
  const std::size_t c = m.cols();
  std::vector<double> out(m.data().begin() + i * c, m.data().begin() + (i + 1) * c);
  return make_op({c}, std::move(out), {m}, [i, c](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t j = 0; j < c; ++j) p->grad[i * c + j] += nd.grad[j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  require(!rows.empty(), "stack_rows: no rows");
  const std::size_t d = rows[0].size();
  for (const Tensor& r : rows)
    require(r.rank() == 1 && r.size() == d,
            "stack_rows: incompatible shapes " + shape_string(rows[0].shape()) + " vs " +
                shape_string(r.shape()));
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const Tensor& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
  std::vector<Tensor> parents(rows.begin(), rows.end());
  return make_op({rows.size(), d}, std::move(out), std::move(parents), [d](Node& nd) {
    for (std::size_t i = 0; i < nd.parents.size(); ++i) {
      Node* p = nd.parents[i].get();
      if (!p->requires_grad) continue;
      for (std::size_t j = 0; j < d; ++j) p->grad[j] += nd.grad[i * d + j];
    }
  });
}

Tensor pad_rows(const Tensor& m, std::size_t total_rows) {
  require(m.rank() == 2, "pad_rows: tensor is not 2-D");
  require(total_rows >= m.rows(), "pad_rows: total smaller than input");
  if (total_rows == m.rows()) return m;
  const std::size_t c = m.cols(), n = m.rows();
  std::vector<double> out(total_rows * c, 0.0);
  std::copy(m.data().begin(), m.data().end(), out.begin());
  return make_op({total_rows, c}, std::move(out), {m}, [n, c](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < n * c; ++i) p->grad[i] += nd.grad[i];
  });
}

Tensor window_concat(const Tensor& m, std::size_t halfwidth) {
  require(m.rank() == 2, "window_concat: tensor is not 2-D");
  const std::size_t n = m.rows(), d = m.cols(), w = 2 * halfwidth + 1;
  std::vector<double> out(n * w * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < w; ++o) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + o) -
                                 static_cast<std::ptrdiff_t>(halfwidth);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      for (std::size_t c = 0; c < d; ++c)
        out[(i * w + o) * d + c] = m.data()[static_cast<std::size_t>(src) * d + c];
    }
  return make_op({n, w * d}, std::move(out), {m}, [n, d, w, halfwidth](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < w; ++o) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + o) -
                                   static_cast<std::ptrdiff_t>(halfwidth);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        for (std::size_t c = 0; c < d; ++c)
          p->grad[static_cast<std::size_t>(src) * d + c] += nd.grad[(i * w + o) * d + c];
      }
  });
}

// ---- reductions ----

Tensor sum(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.data()) acc += x;
  return make_op({1}, {acc}, {t}, [](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += nd.grad[0];
  });
}

Tensor sum_squares(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.data()) acc += x * x;
  return make_op({1}, {acc}, {t}, [](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += 2.0 * p->value[i] * nd.grad[0];
  });
}

Tensor mean_rows(const Tensor& m) {
  require(m.rank() == 2, "mean_rows: tensor is not 2-D");
  require(m.rows() >= 1, "mean_rows: empty matrix");
  const std::size_t n = m.rows(), c = m.cols();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += m.data()[i * c + j];
  for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(n);
  return make_op({c}, std::move(out), {m}, [n, c](Node& nd) {
    Node* p = nd.parents[0].get();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) p->grad[i * c + j] += nd.grad[j] * inv;
  });
}

Tensor lookup_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require(table.rank() == 2, "lookup_rows: table is not 2-D");
  require(!ids.empty(), "lookup_rows: no ids");
  const std::size_t d = table.cols();
  for (std::size_t id : ids)
    require(id < table.rows(), "lookup_rows: id " + std::to_string(id) + " out of range");
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(table.data().begin() + ids[i] * d, table.data().begin() + (ids[i] + 1) * d,
              out.begin() + i * d);
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return make_op({ids.size(), d}, std::move(out), {table}, [idv = std::move(idv), d](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) p->grad[idv[i] * d + j] += nd.grad[i * d + j];
  });
}

Tensor dropout(const Tensor& t, double rate, DetRng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (rate == 0.0) return t;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(t.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0;
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.data()[i] * mask[i];
  return make_op(t.shape(), std::move(out), {t}, [mask = std::move(mask)](Node& nd) {
    Node* p = nd.parents[0].get();
    for (std::size_t i = 0; i < nd.grad.size(); ++i) p->grad[i] += nd.grad[i] * mask[i];
  });
}

// ---- backward ----

void backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1,
          "backward: loss must be a scalar, shape " +
              (loss.defined() ? shape_string(loss.shape()) : std::string("<empty>")));
  Node* root = loss.node();

  // Collect the reachable graph; creation order is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  for (Node* n : order)
    if (n->requires_grad) n->grad.assign(n->value.size(), 0.0);

  if (!root->requires_grad) return;  // nothing trainable reachable
  root->grad.assign(1, 1.0);
  for (Node* n : order)
    if (n->requires_grad && n->backprop) n->backprop(*n);
}

double gradient_check(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.grad().empty())
      throw tqe::NumericError("gradient_check: parameter has no gradient after backward");
    analytic.push_back(p.grad());
  }

  auto eval = [&]() {
    const double v = f().item();
    if (!std::isfinite(v)) throw tqe::NumericError("gradient_check: non-finite evaluation");
    return v;
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data()[i];
      p.data()[i] = orig + eps;
      const double fp = eval();
      p.data()[i] = orig - eps;
      const double fm = eval();
      p.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace tqe::ad
