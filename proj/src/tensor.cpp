#include "acblstm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace acblstm {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t checked_size(const std::vector<int>& shape) {
  if (shape.empty()) throw shape_error("tensor shape must be non-empty");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw shape_error("tensor dims must be >= 1, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// Collapses a shape around `axis` into [outer, axis_dim, inner].
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const std::vector<int>& shape, int axis) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw shape_error("axis " + std::to_string(axis) + " out of rank for " + shape_str(shape));
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= static_cast<std::size_t>(shape[i]);
  v.n = static_cast<std::size_t>(shape[axis]);
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= static_cast<std::size_t>(shape[i]);
  return v;
}

std::shared_ptr<detail::Node> make_leaf(std::vector<int> shape, std::vector<double> value,
                                        bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

}  // namespace

Tensor Tensor::make_op(std::vector<int> shape, std::vector<double> value,
                       const std::vector<Tensor>& inputs, FusedBackward bw) {
  const std::size_t n = checked_size(shape);
  if (value.size() != n)
    throw shape_error("op output size mismatch: " + std::to_string(value.size()) +
                      " values for shape " + shape_str(shape));
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  auto node = make_leaf(std::move(shape), std::move(value), needs);
  if (needs) {
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node_);
    node->backprop = [fn = std::move(bw)](detail::Node& self) {
      std::vector<std::vector<double>*> slots(self.parents.size(), nullptr);
      for (std::size_t i = 0; i < self.parents.size(); ++i)
        if (self.parents[i]->requires_grad) slots[i] = &self.parents[i]->grad;
      fn(self.grad, slots);
    };
  }
  return Tensor(std::move(node));
}

// -- creation -----------------------------------------------------------------

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  const std::size_t n = checked_size(shape);
  return Tensor(make_leaf(shape, std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
  const std::size_t n = checked_size(shape);
  return Tensor(make_leaf(shape, std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::uniform(const std::vector<int>& shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  const std::size_t n = checked_size(shape);
  if (!(lo < hi)) throw config_error("uniform init requires lo < hi");
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(make_leaf(shape, std::move(v), requires_grad));
}

Tensor Tensor::from_data(const std::vector<int>& shape, std::vector<double> data,
                         bool requires_grad) {
  const std::size_t n = checked_size(shape);
  if (data.size() != n)
    throw shape_error("explicit data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
  return Tensor(make_leaf(shape, std::move(data), requires_grad));
}

// -- accessors ----------------------------------------------------------------

detail::Node& Tensor::node() const {
  if (!node_) throw contract_error("operation on an undefined Tensor");
  return *node_;
}

const std::vector<int>& Tensor::shape() const { return node().shape; }
int Tensor::rank() const { return static_cast<int>(node().shape.size()); }

int Tensor::dim(int axis) const {
  const auto& s = node().shape;
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw shape_error("dim axis out of range");
  return s[axis];
}

std::size_t Tensor::size() const { return node().value.size(); }
const std::vector<double>& Tensor::values() const { return node().value; }

std::vector<double>& Tensor::mutable_values() {
  detail::Node& n = node();
  if (!n.is_leaf())
    throw contract_error("mutable_values is restricted to leaf tensors");
  return n.value;
}

double Tensor::operator[](std::size_t flat) const {
  const auto& v = node().value;
  if (flat >= v.size()) throw bounds_error("flat index out of range");
  return v[flat];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const detail::Node& n = node();
  if (idx.size() != n.shape.size()) throw shape_error("index rank mismatch");
  std::size_t flat = 0;
  auto it = idx.begin();
  for (std::size_t a = 0; a < n.shape.size(); ++a, ++it) {
    if (*it < 0 || *it >= n.shape[a]) throw bounds_error("index out of range");
    flat = flat * static_cast<std::size_t>(n.shape[a]) + static_cast<std::size_t>(*it);
  }
  return n.value[flat];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool b) {
  detail::Node& n = node();
  if (!n.is_leaf()) throw contract_error("requires_grad can only be toggled on leaves");
  n.requires_grad = b;
}

bool Tensor::has_grad() const { return !node().grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  const detail::Node& n = node();
  if (n.grad.empty()) throw contract_error("gradient not populated; call backward first");
  return n.grad;
}

std::vector<double>& Tensor::mutable_grad() {
  detail::Node& n = node();
  if (!n.is_leaf()) throw contract_error("mutable_grad is restricted to leaf tensors");
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() {
  detail::Node& n = node();
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const detail::Node& n = node();
  return Tensor(make_leaf(n.shape, n.value, false));
}

Tensor Tensor::clone() const {
  const detail::Node& n = node();
  return Tensor(make_leaf(n.shape, n.value, n.requires_grad));
}

// -- elementwise ----------------------------------------------------------------

namespace {

enum class Bin { Add, Sub, Mul };

Tensor binary_op(Bin op, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape())
    throw shape_error("elementwise shapes differ: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  const Tensor& big = (a_scalar && !b_scalar) ? b : a;
  const std::size_t n = big.size();
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a_scalar ? av[0] : av[i];
    const double y = b_scalar ? bv[0] : bv[i];
    out[i] = op == Bin::Add ? x + y : op == Bin::Sub ? x - y : x * y;
  }
  return Tensor::make_op(
      big.shape(), std::move(out), {a, b},
      [op, a, b, a_scalar, b_scalar, n](const std::vector<double>& g,
                                        const std::vector<std::vector<double>*>& gi) {
        const auto& av = a.values();
        const auto& bv = b.values();
        if (gi[0]) {
          for (std::size_t i = 0; i < n; ++i) {
            double d = op == Bin::Mul ? g[i] * (b_scalar ? bv[0] : bv[i]) : g[i];
            (*gi[0])[a_scalar ? 0 : i] += d;
          }
        }
        if (gi[1]) {
          for (std::size_t i = 0; i < n; ++i) {
            double d = op == Bin::Mul ? g[i] * (a_scalar ? av[0] : av[i])
                       : op == Bin::Sub ? -g[i]
                                        : g[i];
            (*gi[1])[b_scalar ? 0 : i] += d;
          }
        }
      });
}

template <typename Fwd, typename Dfn>
Tensor unary_op(const Tensor& a, Fwd fwd, Dfn dfn) {
  const std::size_t n = a.size();
  const auto& av = a.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  return Tensor::make_op(a.shape(), std::move(out), {a},
                         [a, dfn, n](const std::vector<double>& g,
                                     const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           const auto& av = a.values();
                           for (std::size_t i = 0; i < n; ++i)
                             (*gi[0])[i] += g[i] * dfn(av[i]);
                         });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(Bin::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(Bin::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(Bin::Mul, a, b); }

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x * c; }, [c](double) { return c; });
}

Tensor relu(const Tensor& a) {
  // subgradient at 0 is 0
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double x) {
                    const double s = 1.0 / (1.0 + std::exp(-x));
                    return s * (1.0 - s);
                  });
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double x) {
                    const double t = std::tanh(x);
                    return 1.0 - t * t;
                  });
}

// -- matmul -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw shape_error("matmul expects 2-d tensors");
  const int p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q)
    throw shape_error("matmul inner dims differ: " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(p) * r, 0.0);
  for (int i = 0; i < p; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * q;
    double* orow = out.data() + static_cast<std::size_t>(i) * r;
    for (int k = 0; k < q; ++k) {
      const double aik = arow[k];
      const double* brow = bv.data() + static_cast<std::size_t>(k) * r;
      for (int j = 0; j < r; ++j) orow[j] += aik * brow[j];
    }
  }
  return Tensor::make_op(
      {p, r}, std::move(out), {a, b},
      [a, b, p, q, r](const std::vector<double>& g,
                      const std::vector<std::vector<double>*>& gi) {
        const auto& av = a.values();
        const auto& bv = b.values();
        if (gi[0]) {  // a.grad += g . b^T
          std::vector<double>& ga = *gi[0];
          for (int i = 0; i < p; ++i) {
            const double* grow = g.data() + static_cast<std::size_t>(i) * r;
            double* garow = ga.data() + static_cast<std::size_t>(i) * q;
            for (int k = 0; k < q; ++k) {
              const double* brow = bv.data() + static_cast<std::size_t>(k) * r;
              double acc = 0.0;
              for (int j = 0; j < r; ++j) acc += grow[j] * brow[j];
              garow[k] += acc;
            }
          }
        }
        if (gi[1]) {  // b.grad += a^T . g
          std::vector<double>& gb = *gi[1];
          for (int i = 0; i < p; ++i) {
            const double* arow = av.data() + static_cast<std::size_t>(i) * q;
            const double* grow = g.data() + static_cast<std::size_t>(i) * r;
            for (int k = 0; k < q; ++k) {
              const double aik = arow[k];
              double* gbrow = gb.data() + static_cast<std::size_t>(k) * r;
              for (int j = 0; j < r; ++j) gbrow[j] += aik * grow[j];
            }
          }
        }
      });
}

Tensor add_rowwise(const Tensor& mat, const Tensor& vec) {
  if (mat.rank() != 2 || vec.rank() != 1)
    throw shape_error("add_rowwise expects a matrix and a vector");
  const int m = mat.dim(0), n = mat.dim(1);
  if (vec.dim(0) != n)
    throw shape_error("add_rowwise width mismatch: " + shape_str(mat.shape()) + " + " +
                      shape_str(vec.shape()));
  const auto& mv = mat.values();
  const auto& vv = vec.values();
  std::vector<double> out(mv.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i) * n + j] = mv[static_cast<std::size_t>(i) * n + j] + vv[j];
  return Tensor::make_op({m, n}, std::move(out), {mat, vec},
                         [m, n](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gi) {
                           if (gi[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                           if (gi[1])
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j)
                                 (*gi[1])[j] += g[static_cast<std::size_t>(i) * n + j];
                         });
}

// -- structural ---------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& inputs, int axis) {
  if (inputs.empty()) throw contract_error("concat of zero tensors");
  const auto& s0 = inputs[0].shape();
  int total = 0;
  for (const Tensor& t : inputs) {
    const auto& s = t.shape();
    if (s.size() != s0.size())
      throw shape_error("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != s0[i])
        throw shape_error("concat inputs ragged on non-concat axis: " + shape_str(s0) +
                          " vs " + shape_str(s));
    const AxisView v = axis_view(s, axis);
    total += static_cast<int>(v.n);
  }
  std::vector<int> out_shape = s0;
  out_shape[axis] = total;
  const AxisView ov = axis_view(out_shape, axis);
  std::vector<double> out(checked_size(out_shape));
  std::size_t off = 0;  // offset along the concat axis, in inner-blocks
  std::vector<std::size_t> offsets;
  for (const Tensor& t : inputs) {
    const AxisView v = axis_view(t.shape(), axis);
    const auto& tv = t.values();
    for (std::size_t o = 0; o < v.outer; ++o)
      std::memcpy(out.data() + (o * ov.n + off) * ov.inner, tv.data() + o * v.n * v.inner,
                  v.n * v.inner * sizeof(double));
    offsets.push_back(off);
    off += v.n;
  }
  return Tensor::make_op(
      std::move(out_shape), std::move(out), inputs,
      [inputs, offsets, ov, axis](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& gi) {
        for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
          if (!gi[idx]) continue;
          const AxisView v = axis_view(inputs[idx].shape(), axis);
          std::vector<double>& dst = *gi[idx];
          for (std::size_t o = 0; o < v.outer; ++o) {
            const double* src = g.data() + (o * ov.n + offsets[idx]) * ov.inner;
            double* d = dst.data() + o * v.n * v.inner;
            for (std::size_t i = 0; i < v.n * v.inner; ++i) d[i] += src[i];
          }
        }
      });
}

Tensor slice(const Tensor& t, int axis, int lo, int hi) {
  const AxisView v = axis_view(t.shape(), axis);
  if (lo < 0 || hi > static_cast<int>(v.n) || lo >= hi)
    throw bounds_error("slice range [" + std::to_string(lo) + "," + std::to_string(hi) +
                       ") invalid for axis of size " + std::to_string(v.n));
  std::vector<int> out_shape = t.shape();
  out_shape[axis] = hi - lo;
  const std::size_t len = static_cast<std::size_t>(hi - lo);
  std::vector<double> out(v.outer * len * v.inner);
  const auto& tv = t.values();
  for (std::size_t o = 0; o < v.outer; ++o)
    std::memcpy(out.data() + o * len * v.inner,
                tv.data() + (o * v.n + static_cast<std::size_t>(lo)) * v.inner,
                len * v.inner * sizeof(double));
  return Tensor::make_op(std::move(out_shape), std::move(out), {t},
                         [v, lo, len](const std::vector<double>& g,
                                      const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           // scatter into the zero-initialized full gradient
                           std::vector<double>& dst = *gi[0];
                           for (std::size_t o = 0; o < v.outer; ++o) {
                             const double* src = g.data() + o * len * v.inner;
                             double* d = dst.data() +
                                         (o * v.n + static_cast<std::size_t>(lo)) * v.inner;
                             for (std::size_t i = 0; i < len * v.inner; ++i) d[i] += src[i];
                           }
                         });
}

Tensor reshape(const Tensor& t, const std::vector<int>& shape) {
  const std::size_t n = checked_size(shape);
  if (n != t.size())
    throw shape_error("reshape size mismatch: " + shape_str(t.shape()) + " -> " +
                      shape_str(shape));
  return Tensor::make_op(shape, t.values(), {t},
                         [](const std::vector<double>& g,
                            const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                         });
}

namespace {

Tensor reduce_axis(const Tensor& t, int axis, bool take_mean) {
  const AxisView v = axis_view(t.shape(), axis);
  std::vector<int> out_shape = t.shape();
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  const double scale = take_mean ? 1.0 / static_cast<double>(v.n) : 1.0;
  std::vector<double> out(v.outer * v.inner, 0.0);
  const auto& tv = t.values();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t k = 0; k < v.n; ++k)
      for (std::size_t i = 0; i < v.inner; ++i)
        out[o * v.inner + i] += tv[(o * v.n + k) * v.inner + i];
  if (take_mean)
    for (double& x : out) x *= scale;
  return Tensor::make_op(std::move(out_shape), std::move(out), {t},
                         [v, scale](const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           std::vector<double>& dst = *gi[0];
                           for (std::size_t o = 0; o < v.outer; ++o)
                             for (std::size_t k = 0; k < v.n; ++k)
                               for (std::size_t i = 0; i < v.inner; ++i)
                                 dst[(o * v.n + k) * v.inner + i] += g[o * v.inner + i] * scale;
                         });
}

}  // namespace

Tensor sum_axis(const Tensor& t, int axis) { return reduce_axis(t, axis, false); }
Tensor mean_axis(const Tensor& t, int axis) { return reduce_axis(t, axis, true); }

Tensor sum_all(const Tensor& t) {
  const std::size_t n = t.size();
  double acc = 0.0;
  for (double x : t.values()) acc += x;
  return Tensor::make_op({1}, {acc}, {t},
                         [n](const std::vector<double>& g,
                             const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           for (std::size_t i = 0; i < n; ++i) (*gi[0])[i] += g[0];
                         });
}

Tensor mean_all(const Tensor& t) {
  const std::size_t n = t.size();
  double acc = 0.0;
  for (double x : t.values()) acc += x;
  const double inv = 1.0 / static_cast<double>(n);
  return Tensor::make_op({1}, {acc * inv}, {t},
                         [n, inv](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           for (std::size_t i = 0; i < n; ++i) (*gi[0])[i] += g[0] * inv;
                         });
}

Tensor transpose2d(const Tensor& t) {
  if (t.rank() != 2) throw shape_error("transpose2d expects a matrix");
  const int p = t.dim(0), q = t.dim(1);
  const auto& tv = t.values();
  std::vector<double> out(tv.size());
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j)
      out[static_cast<std::size_t>(j) * p + i] = tv[static_cast<std::size_t>(i) * q + j];
  return Tensor::make_op({q, p}, std::move(out), {t},
                         [p, q](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           for (int i = 0; i < p; ++i)
                             for (int j = 0; j < q; ++j)
                               (*gi[0])[static_cast<std::size_t>(i) * q + j] +=
                                   g[static_cast<std::size_t>(j) * p + i];
                         });
}

// -- losses ---------------------------------------------------------------------

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw shape_error("softmax_cross_entropy expects [m x C] logits");
  const int m = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != m)
    throw shape_error("label count " + std::to_string(labels.size()) +
                      " does not match batch " + std::to_string(m));
  for (int y : labels)
    if (y < 0 || y >= c)
      throw bounds_error("label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
  const auto& z = logits.values();
  for (double x : z)
    if (!std::isfinite(x)) throw numeric_error("non-finite logit in softmax_cross_entropy");

  std::vector<double> probs(z.size());
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    const double* row = z.data() + static_cast<std::size_t>(i) * c;
    double* prow = probs.data() + static_cast<std::size_t>(i) * c;
    const double mx = *std::max_element(row, row + c);
    double se = 0.0;
    for (int j = 0; j < c; ++j) se += std::exp(row[j] - mx);
    for (int j = 0; j < c; ++j) prow[j] = std::exp(row[j] - mx) / se;
    loss += std::log(se) - (row[labels[i]] - mx);
  }
  loss /= static_cast<double>(m);
  return Tensor::make_op(
      {1}, {loss}, {logits},
      [probs = std::move(probs), labels, m, c](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& gi) {
        if (!gi[0]) return;
        const double scale = g[0] / static_cast<double>(m);
        std::vector<double>& dst = *gi[0];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * c + j;
            dst[k] += scale * (probs[k] - (labels[i] == j ? 1.0 : 0.0));
          }
      });
}

std::vector<double> softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw shape_error("softmax_rows expects a matrix");
  const int m = logits.dim(0), c = logits.dim(1);
  const auto& z = logits.values();
  std::vector<double> probs(z.size());
  for (int i = 0; i < m; ++i) {
    const double* row = z.data() + static_cast<std::size_t>(i) * c;
    double* prow = probs.data() + static_cast<std::size_t>(i) * c;
    const double mx = *std::max_element(row, row + c);
    double se = 0.0;
    for (int j = 0; j < c; ++j) se += std::exp(row[j] - mx);
    for (int j = 0; j < c; ++j) prow[j] = std::exp(row[j] - mx) / se;
  }
  return probs;
}

// -- engine -----------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined()) throw contract_error("backward on an undefined Tensor");
  detail::Node* root = loss.node_.get();
  if (root->value.size() != 1)
    throw contract_error("backward requires a scalar loss, got shape " +
                         shape_str(root->shape));
  if (!root->requires_grad) return;  // no grad-requiring leaves reachable

  // Topological order (inputs before consumers) over the requires-grad slice
  // of the graph, via iterative post-order DFS.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && stack.back().second >= stack.back().first->parents.size()) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  // Interior gradients are per-pass scratch; leaf gradients persist so that
  // repeated backward calls accumulate.
  for (detail::Node* n : order) {
    if (n->is_leaf()) {
      if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->is_leaf()) (*it)->backprop(**it);
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                         double eps) {
  if (eps <= 0.0) throw contract_error("finite_diff_check requires eps > 0");
  if (!x.defined()) throw contract_error("finite_diff_check on undefined Tensor");
  x.set_requires_grad(true);  // throws if x is not a leaf

  auto eval = [&](const Tensor& t) {
    Tensor y = f(t);
    if (y.size() != 1) throw contract_error("finite_diff_check requires scalar-valued f");
    return y;
  };

  // determinism probe: an f with live stochastic layers cannot be checked
  const Tensor y1 = eval(x);
  const Tensor y2 = eval(x);
  if (y1.values() != y2.values())
    throw contract_error("finite_diff_check requires a deterministic function");

  x.zero_grad();
  Tensor y = eval(x);
  backward(y);
  const std::vector<double> analytic = x.grad();

  x.set_requires_grad(false);  // numeric probes need no tape
  std::vector<double>& xv = x.mutable_values();
  double max_err = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double orig = xv[i];
    xv[i] = orig + eps;
    const double fp = eval(x).values()[0];
    xv[i] = orig - eps;
    const double fm = eval(x).values()[0];
    xv[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    max_err = std::max(max_err, err);
  }
  x.set_requires_grad(true);
  x.zero_grad();
  return max_err;
}

}  // namespace acblstm
