#pragma once

// Dense real matrices with tape-based reverse-mode differentiation.
//
// A Tape records every intermediate produced during one forward pass in
// creation order, which is a valid topological order, so backward() is a
// single reverse sweep. Persistent weights live in Parameter objects and are
// bound to a tape as leaves; their gradients are accumulated into
// Parameter::grad when backward() runs. Clearing or destroying the tape
// resets the graph.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relmap {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Real>
class Parameter {
 public:
  Parameter(std::string name, Shape shape, bool decay);

  const std::string& name() const { return name_; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values.size(); }
  // Weight matrices decay; biases and layer-norm gain/bias do not.
  bool decay() const { return decay_; }

  void zero_grad();

  std::vector<Real> values;
  std::vector<Real> grad;

 private:
  std::string name_;
  Shape shape_;
  bool decay_;
};

template <typename Real>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<Real>& add(std::string name, Shape shape, bool decay);
  Parameter<Real>* find(const std::string& name);
  const Parameter<Real>* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const;
  void zero_grads();
  // Requires identical names and shapes in the same order.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
};

template <typename Real>
class Tape;

// Lightweight handle to a node recorded on a Tape.
template <typename Real>
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape<Real>& tape() const { return *tape_; }
  std::size_t index() const { return index_; }

  const Shape& shape() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;

  std::span<const Real> values() const;
  // Empty until backward() reached this node.
  std::span<const Real> grad() const;
  Real item() const;
  Real at(std::size_t row, std::size_t col) const;

 private:
  friend class Tape<Real>;
  Tensor(Tape<Real>* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape<Real>* tape_ = nullptr;
  std::size_t index_ = 0;
};

template <typename Real>
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    Parameter<Real>* param = nullptr;
    std::function<void(Node&)> backward;

    std::vector<Real>& ensure_grad();
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Real> param(Parameter<Real>& p);
  Tensor<Real> constant(Shape shape, std::vector<Real> values);
  // A leaf that receives a gradient but is not tied to a Parameter.
  Tensor<Real> variable(Shape shape, std::vector<Real> values);

  Tensor<Real> record(Shape shape, std::vector<Real> values, bool requires_grad,
                      std::function<void(Node&)> backward);

  // Root must hold exactly one value. Gradients accumulate additively into
  // every reachable node and into the bound parameters.
  void backward(const Tensor<Real>& root);
  void clear();

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t i) { return nodes_[i]; }
  const Node& node(std::size_t i) const { return nodes_[i]; }

 private:
  std::deque<Node> nodes_;
};

// Matrix algebra. All operands are rank-2 (a vector is 1 x n).
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
// alpha * a * b^T in one node.
template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Real alpha);
template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
// Adds a 1 x cols row to every row of a.
template <typename Real>
Tensor<Real> add_row(const Tensor<Real>& a, const Tensor<Real>& row);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);
template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> concat_rows(std::span<const Tensor<Real>> parts);
template <typename Real>
Tensor<Real> concat_cols(std::span<const Tensor<Real>> parts);
template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& table, std::span<const std::size_t> ids);
template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& a);

// Nonlinearities.
template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x);
// Normalizes each row; gain and bias are 1 x cols.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, Real epsilon = Real(1e-12));
// Inverted dropout; identity when not training. p must lie in [0, 1).
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, bool training, std::mt19937_64& rng);

// Mean binary cross entropy over all cells, in the stable form
// max(z,0) - z*t + log(1 + exp(-|z|)). Targets must be 0 or 1.
template <typename Real>
Tensor<Real> bce_with_logits(const Tensor<Real>& logits, const Tensor<Real>& targets);

// Scalar helpers shared with non-differentiable code paths.
double stable_sigmoid(double z);

}  // namespace relmap
