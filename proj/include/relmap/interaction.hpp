#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relmap/dataset.hpp"
#include "relmap/encoder.hpp"
#include "relmap/tensor.hpp"

namespace relmap {

// Query/key projections of the final layer, all heads stacked column-wise:
// wq and wk are d_model x (heads * d_head).
template <typename Real>
struct HeadWeights {
  Parameter<Real>* wq = nullptr;
  Parameter<Real>* bq = nullptr;
  Parameter<Real>* wk = nullptr;
  Parameter<Real>* bk = nullptr;
};

template <typename Real>
HeadWeights<Real> register_head(ParameterSet<Real>& params, const EncoderConfig& config,
                                const std::string& prefix, std::mt19937_64& rng);

// Shapes of every tape node created while scoring one map.
struct ScoringAudit {
  std::vector<Shape> allocations;

  std::size_t count(const Shape& shape) const;
};

// Logits of the interaction map, (N+M) x (N+M): the mean over heads of
// Q_t K_t^T / sqrt(d_h) with Q, K projected from the last hidden state. The
// heads are scored in one product, so a single (N+M)^2 matrix is allocated.
template <typename Real>
Tensor<Real> score_map(const EncoderState<Real>& state, const HeadWeights<Real>& head,
                       const EncoderConfig& config, ScoringAudit* audit = nullptr);

class InteractionMap {
 public:
  // Throws std::invalid_argument unless 0 < threshold < 1 and probs is size^2.
  InteractionMap(std::size_t size, std::vector<double> probs, double threshold = 0.5);

  std::size_t size() const { return size_; }
  double threshold() const { return threshold_; }
  double operator()(std::size_t row, std::size_t col) const { return probs_[row * size_ + col]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::size_t size_;
  std::vector<double> probs_;
  double threshold_;
};

template <typename Real>
InteractionMap to_probs(const Tensor<Real>& logits, double threshold = 0.5);
InteractionMap to_probs(std::span<const double> logits, std::size_t size, double threshold = 0.5);

// A cell is predicted when its probability strictly exceeds the threshold.
CellMatrix predict_cells(const InteractionMap& map);

// Mean BCE over all (N+M)^2 cells against the gold map.
template <typename Real>
Tensor<Real> interaction_loss(const Tensor<Real>& logits, const CellMatrix& gold);

// Row/column labels: sentence tokens then relation words.
std::vector<std::string> map_labels(std::span<const std::string> tokens, const RelationSchema& schema);

void write_map_csv(std::ostream& out, const InteractionMap& map, std::span<const std::string> labels);
// Binary 8-bit grayscale PGM, value round(prob * 255).
void write_map_pgm(std::ostream& out, const InteractionMap& map);

}  // namespace relmap
