#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tqe/rng.hpp"

namespace tqe::ad {

namespace detail {
struct Node;
}

/// Shape mismatch between operands; message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor participating in reverse-mode differentiation.
/// Copying a Tensor copies the handle, not the storage; ops on Tensors record
/// their backward rule so that backward() can later fill gradients.
///
/// A recorded graph and its tensors belong to one thread. Tensors that are no
/// longer fed to new ops (frozen parameters) may be shared read-only.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data);
  static Tensor scalar(double v);
  /// Leaf with requires_grad set, the constructor for trainable parameters.
  static Tensor param(std::vector<std::size_t> shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double operator()(std::size_t i) const;
  double operator()(std::size_t i, std::size_t j) const;
  /// Value of a scalar tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);
  /// Gradient buffer; empty until a backward pass has reached this tensor.
  const std::vector<double>& grad() const;
  std::vector<double>& grad();

  /// Deep copy of values into a fresh leaf (no graph history carried over).
  Tensor clone() const;

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(std::vector<std::size_t> shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

// ---- primitives ----

Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n] -> [m,n]
Tensor matvec(const Tensor& a, const Tensor& x);          // [m,n]x[n]   -> [m]
Tensor transpose(const Tensor& a);                        // [m,n] -> [n,m]

Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
/// Adds a row vector to every row of a matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Stable softmax over a 1-D tensor (max subtraction). -inf entries come out
/// as exact zeros, which is how masked attention positions are silenced.
Tensor softmax(const Tensor& v);

/// axis 0 stacks rows (1-D or 2-D), axis 1 appends columns (2-D).
Tensor concat(std::span<const Tensor> parts, int axis);

Tensor slice(const Tensor& v, std::size_t start, std::size_t len);  // 1-D
Tensor row(const Tensor& m, std::size_t i);                         // [n,d] -> [d]
Tensor slice_rows(const Tensor& m, std::size_t start, std::size_t count);
Tensor stack_rows(std::span<const Tensor> rows);                    // n x [d] -> [n,d]
/// Appends zero rows up to total_rows; the zeros are constants.
Tensor pad_rows(const Tensor& m, std::size_t total_rows);

/// Zero-padded sliding windows: out(i) is the concatenation of rows
/// i-halfwidth..i+halfwidth, [n,d] -> [n,(2*halfwidth+1)*d].
Tensor window_concat(const Tensor& m, std::size_t halfwidth);

Tensor sum(const Tensor& t);               // -> scalar
Tensor sum_squares(const Tensor& t);       // -> scalar
Tensor mean_rows(const Tensor& m);         // [n,d] -> [d]

/// Gathers rows of a [V,d] table; gradients land only on the gathered rows.
Tensor lookup_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Inverted dropout: kept entries are scaled by 1/(1-rate). rate in [0,1).
Tensor dropout(const Tensor& t, double rate, DetRng& rng);

/// Reverse-mode sweep from a scalar loss. Gradients of every reachable
/// requires_grad tensor are (re)computed; fan-out accumulates additively.
void backward(const Tensor& loss);

/// Central-difference check of d f / d params against backward(). Returns the
/// max over parameter elements of |analytic-numeric|/max(|analytic|,|numeric|,1e-8).
/// f must be deterministic and is re-evaluated 2x per parameter element.
double gradient_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                      double eps = 1e-5);

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace tqe::ad
