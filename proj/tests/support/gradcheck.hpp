#pragma once

// Central finite-difference oracle for the tape. The function under test
// receives one variable leaf per input and must return a scalar tensor.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "relmap/tensor.hpp"

namespace relmap::testing {

struct Input {
  Shape shape;
  std::vector<double> values;
};

using ScalarFn = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

struct GradCheck {
  double relative_error = 0;  // norm-wise over every input element
  double max_abs_error = 0;
  std::size_t checked = 0;
};

inline double evaluate(const ScalarFn& fn, const std::vector<Input>& inputs) {
  Tape<double> tape;
  std::vector<Tensor<double>> leaves;
  for (const auto& in : inputs) leaves.push_back(tape.constant(in.shape, in.values));
  return fn(tape, leaves).item();
}

// ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12).
inline GradCheck check_gradient(const ScalarFn& fn, std::vector<Input> inputs, double step = 1e-5) {
  Tape<double> tape;
  std::vector<Tensor<double>> leaves;
  for (const auto& in : inputs) leaves.push_back(tape.variable(in.shape, in.values));
  tape.backward(fn(tape, leaves));

  double diff2 = 0, norm_a = 0, norm_n = 0;
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = leaves[k].grad();
    for (std::size_t i = 0; i < inputs[k].values.size(); ++i) {
      const double saved = inputs[k].values[i];
      inputs[k].values[i] = saved + step;
      const double up = evaluate(fn, inputs);
      inputs[k].values[i] = saved - step;
      const double down = evaluate(fn, inputs);
      inputs[k].values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      diff2 += (a - numeric) * (a - numeric);
      norm_a += a * a;
      norm_n += numeric * numeric;
      out.max_abs_error = std::max(out.max_abs_error, std::abs(a - numeric));
      ++out.checked;
    }
  }
  out.relative_error = std::sqrt(diff2) / std::max(std::sqrt(norm_a) + std::sqrt(norm_n), 1e-12);
  return out;
}

inline Input random_input(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Input in{shape, std::vector<double>(shape_size(shape))};
  for (auto& v : in.values) v = dist(rng);
  return in;
}

// Scalarizes a matrix-valued op with fixed random weights so every output
// cell reaches the gradient with a distinct coefficient.
inline Tensor<double> project(Tape<double>& tape, const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> w(y.size());
  for (auto& v : w) v = dist(rng);
  return sum(mul(y, tape.constant(y.shape(), std::move(w))));
}

}  // namespace relmap::testing
