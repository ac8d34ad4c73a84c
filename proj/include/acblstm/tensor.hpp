#ifndef ACBLSTM_TENSOR_HPP_
#define ACBLSTM_TENSOR_HPP_

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "acblstm/errors.hpp"
#include "acblstm/rng.hpp"

namespace acblstm {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  // Empty until a backward pass needs it. Leaf gradients accumulate across
  // backward calls; interior gradients are reset at the start of each pass.
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // null for leaves

  bool is_leaf() const { return !backprop; }
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
/// A Tensor is a shared handle: copying it copies the handle, not the data.
/// Executing an op on inputs that require grad records the op, so the
/// computation graph is built dynamically and freed when the output handles
/// go out of scope.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor full(const std::vector<int>& shape, double value,
                     bool requires_grad = false);
  static Tensor uniform(const std::vector<int>& shape, double lo, double hi,
                        Rng& rng, bool requires_grad = false);
  static Tensor from_data(const std::vector<int>& shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int axis) const;
  std::size_t size() const;
  const std::vector<double>& values() const;
  /// Direct write access. Leaves only: mutating a recorded interior value
  /// would silently corrupt gradients.
  std::vector<double>& mutable_values();
  double operator[](std::size_t flat) const;
  double at(std::initializer_list<int> idx) const;

  bool requires_grad() const;
  void set_requires_grad(bool b);  // leaves only
  bool has_grad() const;
  const std::vector<double>& grad() const;
  /// Writable gradient buffer of a leaf, allocated (zeroed) on first use.
  /// Optimizers and gradient clipping go through this.
  std::vector<double>& mutable_grad();
  void zero_grad();

  /// Value copy with no recorded history, never requiring grad.
  Tensor detach() const;
  /// Fresh leaf with copied values and the same requires_grad flag.
  Tensor clone() const;

  /// Stable identity of the underlying storage (optimizer state keys).
  const void* id() const { return node_.get(); }

  /// Registers a fused operation. `bw` receives the output gradient and one
  /// accumulation buffer per input (null where the input needs no gradient).
  /// Buffers are pre-sized by the engine. Layer implementations use this for
  /// ops whose composite form would be slow or unstable.
  using FusedBackward =
      std::function<void(const std::vector<double>& out_grad,
                         const std::vector<std::vector<double>*>& in_grads)>;
  static Tensor make_op(std::vector<int> shape, std::vector<double> value,
                        const std::vector<Tensor>& inputs, FusedBackward bw);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;

  friend void backward(const Tensor& loss);
};

// -- elementwise / linear algebra -------------------------------------------

/// Standard matrix product of a [p x q] and b [q x r].
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary ops require equal shapes; a scalar (size-1) operand broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

/// Adds vec [n] to every row of mat [m x n].
Tensor add_rowwise(const Tensor& mat, const Tensor& vec);

// -- structural ---------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& inputs, int axis);
/// Elements [lo, hi) along `axis`; hi must exceed lo.
Tensor slice(const Tensor& t, int axis, int lo, int hi);
Tensor reshape(const Tensor& t, const std::vector<int>& shape);
/// Reduction removes `axis`; a fully reduced result has shape [1].
Tensor sum_axis(const Tensor& t, int axis);
Tensor mean_axis(const Tensor& t, int axis);
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);
Tensor transpose2d(const Tensor& t);

// -- losses ------------------------------------------------------------------

/// Mean negative log-likelihood of labels under row-wise softmax(logits),
/// stabilized by subtracting the row max. logits: [m x C], labels in [0, C).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Row-wise softmax of the raw values (no autodiff; prediction helper).
std::vector<double> softmax_rows(const Tensor& logits);

// -- engine --------------------------------------------------------------------

/// Reverse pass from a scalar loss. Gradients of leaf tensors accumulate
/// across calls until zero_grad is invoked on them.
void backward(const Tensor& loss);

/// Compares the autodiff gradient of scalar-valued f at x (a leaf) against
/// central finite differences, coordinate by coordinate. Returns
/// max_i |a_i - n_i| / max(1, |a_i|, |n_i|). f must be deterministic.
/// Side effect: accumulates into any other requires-grad leaves f touches.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         Tensor x, double eps = 1e-5);

}  // namespace acblstm

#endif  // ACBLSTM_TENSOR_HPP_
