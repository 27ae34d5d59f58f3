#include "relmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace relmap {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Parameters

template <typename Real>
Parameter<Real>::Parameter(std::string name, Shape shape, bool decay)
    : values(shape_size(shape), Real(0)),
      grad(shape_size(shape), Real(0)),
      name_(std::move(name)),
      shape_(std::move(shape)),
      decay_(decay) {}

template <typename Real>
void Parameter<Real>::zero_grad() {
  std::fill(grad.begin(), grad.end(), Real(0));
}

template <typename Real>
Parameter<Real>& ParameterSet<Real>::add(std::string name, Shape shape, bool decay) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), std::move(shape), decay));
  return *params_.back();
}

template <typename Real>
Parameter<Real>* ParameterSet<Real>::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name() == name) return p.get();
  return nullptr;
}

template <typename Real>
const Parameter<Real>* ParameterSet<Real>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name() == name) return p.get();
  return nullptr;
}

template <typename Real>
std::size_t ParameterSet<Real>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

template <typename Real>
void ParameterSet<Real>::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

template <typename Real>
void ParameterSet<Real>::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) throw std::invalid_argument("parameter sets differ in length");
  for (std::size_t i = 0; i < size(); ++i) {
    auto& dst = *params_[i];
    const auto& src = other[i];
    if (dst.name() != src.name() || dst.shape() != src.shape())
      throw ShapeError("parameter mismatch at " + dst.name());
    dst.values = src.values;
  }
}

// ---------------------------------------------------------------------------
// Tensor handle

template <typename Real>
const Shape& Tensor<Real>::shape() const {
  return tape_->node(index_).shape;
}

template <typename Real>
std::size_t Tensor<Real>::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : (s.size() == 1 ? 1 : shape_size(s));
}

template <typename Real>
std::size_t Tensor<Real>::cols() const {
  const auto& s = shape();
  return s.empty() ? 1 : s.back();
}

template <typename Real>
std::size_t Tensor<Real>::size() const {
  return tape_->node(index_).value.size();
}

template <typename Real>
std::span<const Real> Tensor<Real>::values() const {
  return tape_->node(index_).value;
}

template <typename Real>
std::span<const Real> Tensor<Real>::grad() const {
  return tape_->node(index_).grad;
}

template <typename Real>
Real Tensor<Real>::item() const {
  const auto& v = tape_->node(index_).value;
  if (v.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return v[0];
}

template <typename Real>
Real Tensor<Real>::at(std::size_t row, std::size_t col) const {
  return tape_->node(index_).value.at(row * cols() + col);
}

// ---------------------------------------------------------------------------
// Tape

template <typename Real>
std::vector<Real>& Tape<Real>::Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  return grad;
}

template <typename Real>
Tensor<Real> Tape<Real>::param(Parameter<Real>& p) {
  auto t = record(p.shape(), p.values, true, nullptr);
  nodes_.back().param = &p;
  return t;
}

template <typename Real>
Tensor<Real> Tape<Real>::constant(Shape shape, std::vector<Real> values) {
  if (shape_size(shape) != values.size())
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     shape_string(shape));
  return record(std::move(shape), std::move(values), false, nullptr);
}

template <typename Real>
Tensor<Real> Tape<Real>::variable(Shape shape, std::vector<Real> values) {
  if (shape_size(shape) != values.size())
    throw ShapeError("variable: " + std::to_string(values.size()) + " values for shape " +
                     shape_string(shape));
  return record(std::move(shape), std::move(values), true, nullptr);
}

template <typename Real>
Tensor<Real> Tape<Real>::record(Shape shape, std::vector<Real> values, bool requires_grad,
                                std::function<void(Node&)> backward) {
  Node& n = nodes_.emplace_back();
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  return Tensor<Real>(this, nodes_.size() - 1);
}

template <typename Real>
void Tape<Real>::backward(const Tensor<Real>& root) {
  if (&root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  Node& r = nodes_[root.index()];
  if (r.value.size() != 1)
    throw ShapeError("backward: root must be scalar, got shape " + shape_string(r.shape));
  for (auto& n : nodes_) n.grad.clear();
  if (!r.requires_grad) return;
  r.ensure_grad()[0] = Real(1);
  for (std::size_t i = root.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.requires_grad) continue;
    if (n.backward) n.backward(n);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    auto& dst = n.param->grad;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
  }
}

template <typename Real>
void Tape<Real>::clear() {
  nodes_.clear();
}

// ---------------------------------------------------------------------------
// Kernels (row-major, accumulating)

namespace {

// c[m x n] += alpha * a[m x k] * b[k x n]
template <typename Real>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c,
             Real alpha = Real(1)) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = alpha * arow[p];
      if (av == Real(0)) continue;
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += alpha * a[m x k] * b[n x k]^T
template <typename Real>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c,
             Real alpha = Real(1)) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += alpha * acc;
    }
  }
}

// c[k x n] += alpha * a[m x k]^T * b[m x n]
template <typename Real>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c,
             Real alpha = Real(1)) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = alpha * arow[p];
      if (av == Real(0)) continue;
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Real>
using NodeOf = typename Tape<Real>::Node;

template <typename Real>
NodeOf<Real>* node_of(const Tensor<Real>& t) {
  return &t.tape().node(t.index());
}

template <typename Real>
void require_rank2(const Tensor<Real>& t, const char* op) {
  if (t.shape().size() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
}

template <typename Real>
void require_same_tape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Algebra

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_tape(a, b, "matmul");
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                     shape_string(b.shape()));
  std::vector<Real> out(m * n, Real(0));
  gemm_nn(m, k, n, a.values().data(), b.values().data(), out.data());
  auto* pa = node_of(a);
  auto* pb = node_of(b);
  return a.tape().record({m, n}, std::move(out), pa->requires_grad || pb->requires_grad,
                         [pa, pb, m, k, n](NodeOf<Real>& self) {
                           if (pa->requires_grad)
                             gemm_nt(m, n, k, self.grad.data(), pb->value.data(),
                                     pa->ensure_grad().data());
                           if (pb->requires_grad)
                             gemm_tn(m, k, n, pa->value.data(), self.grad.data(),
                                     pb->ensure_grad().data());
                         });
}

template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Real alpha) {
  require_same_tape(a, b, "matmul_nt");
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ShapeError("matmul_nt: cannot multiply " + shape_string(a.shape()) + " by transpose of " +
                     shape_string(b.shape()));
  std::vector<Real> out(m * n, Real(0));
  gemm_nt(m, k, n, a.values().data(), b.values().data(), out.data(), alpha);
  auto* pa = node_of(a);
  auto* pb = node_of(b);
  return a.tape().record({m, n}, std::move(out), pa->requires_grad || pb->requires_grad,
                         [pa, pb, m, k, n, alpha](NodeOf<Real>& self) {
                           // out = alpha a b^T: da = alpha g b, db = alpha g^T a
                           if (pa->requires_grad)
                             gemm_nn(m, n, k, self.grad.data(), pb->value.data(),
                                     pa->ensure_grad().data(), alpha);
                           if (pb->requires_grad)
                             gemm_tn(m, n, k, self.grad.data(), pa->value.data(),
                                     pb->ensure_grad().data(), alpha);
                         });
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto* pa = node_of(a);
  auto* pb = node_of(b);
  return a.tape().record(a.shape(), std::move(out), pa->requires_grad || pb->requires_grad,
                         [pa, pb](NodeOf<Real>& self) {
                           for (auto* p : {pa, pb}) {
                             if (!p->requires_grad) continue;
                             auto& g = p->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                           }
                         });
}

template <typename Real>
Tensor<Real> add_row(const Tensor<Real>& a, const Tensor<Real>& row) {
  require_same_tape(a, row, "add_row");
  require_rank2(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n)
    throw ShapeError("add_row: row of shape " + shape_string(row.shape()) + " does not fit " +
                     shape_string(a.shape()));
  std::vector<Real> out(a.values().begin(), a.values().end());
  const auto rv = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  auto* pa = node_of(a);
  auto* pr = node_of(row);
  return a.tape().record(a.shape(), std::move(out), pa->requires_grad || pr->requires_grad,
                         [pa, pr, m, n](NodeOf<Real>& self) {
                           if (pa->requires_grad) {
                             auto& g = pa->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                           }
                           if (pr->requires_grad) {
                             auto& g = pr->ensure_grad();
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                           }
                         });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto* pa = node_of(a);
  auto* pb = node_of(b);
  return a.tape().record(a.shape(), std::move(out), pa->requires_grad || pb->requires_grad,
                         [pa, pb](NodeOf<Real>& self) {
                           if (pa->requires_grad) {
                             auto& g = pa->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i)
                               g[i] += self.grad[i] * pb->value[i];
                           }
                           if (pb->requires_grad) {
                             auto& g = pb->ensure_grad();
                             for (std::size_t i = 0; i < g.size(); ++i)
                               g[i] += self.grad[i] * pa->value[i];
                           }
                         });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  auto* pa = node_of(a);
  return a.tape().record(a.shape(), std::move(out), pa->requires_grad,
                         [pa, factor](NodeOf<Real>& self) {
                           auto& g = pa->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
                         });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Real> out(m * n);
  const auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  auto* pa = node_of(a);
  return a.tape().record({n, m}, std::move(out), pa->requires_grad,
                         [pa, m, n](NodeOf<Real>& self) {
                           auto& g = pa->ensure_grad();
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
                         });
}

template <typename Real>
Tensor<Real> concat_rows(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::size_t rows = 0;
  bool requires_grad = false;
  std::vector<NodeOf<Real>*> nodes;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    require_same_tape(parts[0], p, "concat_rows");
    if (p.cols() != n)
      throw ShapeError("concat_rows: column mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    rows += p.rows();
    nodes.push_back(node_of(p));
    requires_grad = requires_grad || nodes.back()->requires_grad;
  }
  std::vector<Real> out;
  out.reserve(rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return parts[0].tape().record({rows, n}, std::move(out), requires_grad,
                                [nodes](NodeOf<Real>& self) {
                                  std::size_t offset = 0;
                                  for (auto* p : nodes) {
                                    const std::size_t count = p->value.size();
                                    if (p->requires_grad) {
                                      auto& g = p->ensure_grad();
                                      for (std::size_t i = 0; i < count; ++i)
                                        g[i] += self.grad[offset + i];
                                    }
                                    offset += count;
                                  }
                                });
}

template <typename Real>
Tensor<Real> concat_cols(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool requires_grad = false;
  std::vector<NodeOf<Real>*> nodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    require_same_tape(parts[0], p, "concat_cols");
    if (p.rows() != m)
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                       shape_string(p.shape()));
    total += p.cols();
    widths.push_back(p.cols());
    nodes.push_back(node_of(p));
    requires_grad = requires_grad || nodes.back()->requires_grad;
  }
  std::vector<Real> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  return parts[0].tape().record(
      {m, total}, std::move(out), requires_grad, [nodes, widths, m, total](NodeOf<Real>& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const std::size_t w = widths[k];
          if (nodes[k]->requires_grad) {
            auto& g = nodes[k]->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + offset + j];
          }
          offset += w;
        }
      });
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t rows = table.rows(), n = table.cols();
  std::vector<Real> out(ids.size() * n);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows)
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(rows) + " rows");
    std::copy_n(tv.data() + ids[i] * n, n, out.data() + i * n);
  }
  auto* pt = node_of(table);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return table.tape().record({ids.size(), n}, std::move(out), pt->requires_grad,
                             [pt, idx = std::move(idx), n](NodeOf<Real>& self) {
                               auto& g = pt->ensure_grad();
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   g[idx[i] * n + j] += self.grad[i * n + j];
                             });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real total = 0;
  for (auto v : a.values()) total += v;
  auto* pa = node_of(a);
  return a.tape().record({1, 1}, {total}, pa->requires_grad, [pa](NodeOf<Real>& self) {
    auto& g = pa->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  return scale(sum(a), Real(1) / static_cast<Real>(a.size()));
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<Real> out(m * n);
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = xv.data() + i * n;
    Real* dst = out.data() + i * n;
    const Real top = *std::max_element(row, row + n);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(row[j] - top);
      total += dst[j];
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
  }
  auto* px = node_of(x);
  return x.tape().record(x.shape(), std::move(out), px->requires_grad,
                         [px, m, n](NodeOf<Real>& self) {
                           auto& g = px->ensure_grad();
                           for (std::size_t i = 0; i < m; ++i) {
                             const Real* y = self.value.data() + i * n;
                             const Real* dy = self.grad.data() + i * n;
                             Real dot = 0;
                             for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
                             for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
                           }
                         });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  std::vector<Real> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(stable_sigmoid(xv[i]));
  auto* px = node_of(x);
  return x.tape().record(x.shape(), std::move(out), px->requires_grad, [px](NodeOf<Real>& self) {
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real y = self.value[i];
      g[i] += self.grad[i] * y * (Real(1) - y);
    }
  });
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr Real inv_sqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
  std::vector<Real> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Real(0.5) * xv[i] * (Real(1) + std::erf(xv[i] * inv_sqrt2));
  auto* px = node_of(x);
  return x.tape().record(x.shape(), std::move(out), px->requires_grad, [px](NodeOf<Real>& self) {
    constexpr Real inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<Real> / std::numbers::sqrt2_v<Real>;
    auto& g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Real v = px->value[i];
      const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
      const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real epsilon) {
  require_rank2(x, "layer_norm");
  require_same_tape(x, gain, "layer_norm");
  require_same_tape(x, bias, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n)
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(n) + " entries");
  std::vector<Real> out(m * n);
  std::vector<Real> normed(m * n);
  std::vector<Real> inv_std(m);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = xv.data() + i * n;
    Real mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(n);
    inv_std[i] = Real(1) / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < n; ++j) {
      normed[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = normed[i * n + j] * gv[j] + bv[j];
    }
  }
  auto* px = node_of(x);
  auto* pg = node_of(gain);
  auto* pb = node_of(bias);
  const bool requires_grad = px->requires_grad || pg->requires_grad || pb->requires_grad;
  return x.tape().record(
      x.shape(), std::move(out), requires_grad,
      [px, pg, pb, m, n, normed = std::move(normed), inv_std = std::move(inv_std)](NodeOf<Real>& self) {
        if (pg->requires_grad) {
          auto& g = pg->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j] * normed[i * n + j];
        }
        if (pb->requires_grad) {
          auto& g = pb->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
        }
        if (!px->requires_grad) return;
        auto& g = px->ensure_grad();
        const auto& gain_v = pg->value;
        for (std::size_t i = 0; i < m; ++i) {
          Real mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const Real d = self.grad[i * n + j] * gain_v[j];
            mean_d += d;
            mean_dx += d * normed[i * n + j];
          }
          mean_d /= static_cast<Real>(n);
          mean_dx /= static_cast<Real>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const Real d = self.grad[i * n + j] * gain_v[j];
            g[i * n + j] += inv_std[i] * (d - mean_d - normed[i * n + j] * mean_dx);
          }
        }
      });
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, bool training, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - p));
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<Real> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? keep_scale : Real(0);
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto* px = node_of(x);
  return x.tape().record(x.shape(), std::move(out), px->requires_grad,
                         [px, mask = std::move(mask)](NodeOf<Real>& self) {
                           auto& g = px->ensure_grad();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                         });
}

template <typename Real>
Tensor<Real> bce_with_logits(const Tensor<Real>& logits, const Tensor<Real>& targets) {
  require_same_tape(logits, targets, "bce_with_logits");
  require_same_shape(logits, targets, "bce_with_logits");
  const auto z = logits.values();
  const auto t = targets.values();
  const std::size_t count = z.size();
  if (count == 0) throw ShapeError("bce_with_logits: empty input");
  // Accumulate in double so the mean over large maps is not limited by Real.
  double total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (t[i] != Real(0) && t[i] != Real(1))
      throw std::invalid_argument("bce_with_logits: targets must be 0 or 1");
    const double zi = z[i];
    total += std::max(zi, 0.0) - zi * static_cast<double>(t[i]) + std::log1p(std::exp(-std::abs(zi)));
  }
  auto* pz = node_of(logits);
  auto* pt = node_of(targets);
  const Real loss = static_cast<Real>(total / static_cast<double>(count));
  return logits.tape().record({1, 1}, {loss}, pz->requires_grad,
                              [pz, pt, count](NodeOf<Real>& self) {
                                auto& g = pz->ensure_grad();
                                const Real factor = self.grad[0] / static_cast<Real>(count);
                                for (std::size_t i = 0; i < count; ++i) {
                                  const Real s = static_cast<Real>(stable_sigmoid(pz->value[i]));
                                  g[i] += factor * (s - pt->value[i]);
                                }
                              });
}

// ---------------------------------------------------------------------------
// Instantiations

#define RELMAP_INSTANTIATE_TENSOR(R)                                                          \
  template class Parameter<R>;                                                                \
  template class ParameterSet<R>;                                                             \
  template class Tensor<R>;                                                                   \
  template class Tape<R>;                                                                     \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                              \
  template Tensor<R> matmul_nt(const Tensor<R>&, const Tensor<R>&, R);                        \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                 \
  template Tensor<R> add_row(const Tensor<R>&, const Tensor<R>&);                             \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                 \
  template Tensor<R> scale(const Tensor<R>&, R);                                              \
  template Tensor<R> transpose(const Tensor<R>&);                                             \
  template Tensor<R> concat_rows(std::span<const Tensor<R>>);                                 \
  template Tensor<R> concat_cols(std::span<const Tensor<R>>);                                 \
  template Tensor<R> gather_rows(const Tensor<R>&, std::span<const std::size_t>);             \
  template Tensor<R> sum(const Tensor<R>&);                                                   \
  template Tensor<R> mean(const Tensor<R>&);                                                  \
  template Tensor<R> softmax_rows(const Tensor<R>&);                                          \
  template Tensor<R> sigmoid(const Tensor<R>&);                                               \
  template Tensor<R> gelu(const Tensor<R>&);                                                  \
  template Tensor<R> layer_norm(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);     \
  template Tensor<R> dropout(const Tensor<R>&, double, bool, std::mt19937_64&);               \
  template Tensor<R> bce_with_logits(const Tensor<R>&, const Tensor<R>&);

RELMAP_INSTANTIATE_TENSOR(float)
RELMAP_INSTANTIATE_TENSOR(double)

}  // namespace relmap
