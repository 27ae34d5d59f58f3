#include "relmap/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace relmap {

template <typename Real>
HeadWeights<Real> register_head(ParameterSet<Real>& params, const EncoderConfig& config,
                                const std::string& prefix, std::mt19937_64& rng) {
  const std::size_t width = config.heads * config.d_head;
  std::normal_distribution<double> dist(0.0, 0.02);
  auto matrix = [&](const std::string& name) {
    auto& p = params.add(prefix + name, {config.d_model, width}, true);
    for (auto& v : p.values) v = static_cast<Real>(dist(rng));
    return &p;
  };
  HeadWeights<Real> h;
  h.wq = matrix("wq");
  h.bq = &params.add(prefix + "bq", {1, width}, false);
  h.wk = matrix("wk");
  h.bk = &params.add(prefix + "bk", {1, width}, false);
  return h;
}

std::size_t ScoringAudit::count(const Shape& shape) const {
  return static_cast<std::size_t>(std::count(allocations.begin(), allocations.end(), shape));
}

template <typename Real>
Tensor<Real> score_map(const EncoderState<Real>& state, const HeadWeights<Real>& head,
                       const EncoderConfig& config, ScoringAudit* audit) {
  const auto& hidden = state.last();
  auto& tape = hidden.tape();
  const std::size_t first = tape.size();
  auto project = [&](Parameter<Real>& w, Parameter<Real>& b) {
    auto product = matmul(hidden, tape.param(w));
    return add_row(product, tape.param(b));
  };
  auto q = project(*head.wq, *head.bq);
  auto k = project(*head.wk, *head.bk);
  // sum_t Q_t K_t^T equals the product of the head-stacked Q and K.
  const Real alpha = Real(1) / (static_cast<Real>(config.heads) * std::sqrt(static_cast<Real>(config.d_head)));
  auto logits = matmul_nt(q, k, alpha);
  if (audit != nullptr)
    for (std::size_t i = first; i < tape.size(); ++i) audit->allocations.push_back(tape.node(i).shape);
  return logits;
}

InteractionMap::InteractionMap(std::size_t size, std::vector<double> probs, double threshold)
    : size_(size), probs_(std::move(probs)), threshold_(threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("threshold must lie strictly between 0 and 1");
  if (probs_.size() != size * size) throw std::invalid_argument("interaction map must be square");
}

InteractionMap to_probs(std::span<const double> logits, std::size_t size, double threshold) {
  std::vector<double> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = stable_sigmoid(logits[i]);
  return InteractionMap(size, std::move(probs), threshold);
}

template <typename Real>
InteractionMap to_probs(const Tensor<Real>& logits, double threshold) {
  if (logits.shape().size() != 2 || logits.rows() != logits.cols())
    throw ShapeError("interaction logits must be square, got " + shape_string(logits.shape()));
  const auto v = logits.values();
  std::vector<double> wide(v.begin(), v.end());
  return to_probs(std::span<const double>(wide), logits.rows(), threshold);
}

CellMatrix predict_cells(const InteractionMap& map) {
  CellMatrix cells(map.size());
  for (std::size_t i = 0; i < map.size(); ++i)
    for (std::size_t j = 0; j < map.size(); ++j)
      if (map(i, j) > map.threshold()) cells.set(i, j);
  return cells;
}

template <typename Real>
Tensor<Real> interaction_loss(const Tensor<Real>& logits, const CellMatrix& gold) {
  if (logits.shape().size() != 2 || logits.rows() != gold.size() || logits.cols() != gold.size())
    throw ShapeError("loss: logits " + shape_string(logits.shape()) + " do not match gold map of size " +
                     std::to_string(gold.size()));
  std::vector<Real> targets(gold.size() * gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i)
    for (std::size_t j = 0; j < gold.size(); ++j) targets[i * gold.size() + j] = gold(i, j) ? Real(1) : Real(0);
  auto t = logits.tape().constant({gold.size(), gold.size()}, std::move(targets));
  return bce_with_logits(logits, t);
}

std::vector<std::string> map_labels(std::span<const std::string> tokens, const RelationSchema& schema) {
  std::vector<std::string> labels(tokens.begin(), tokens.end());
  for (const auto& r : schema.relations()) labels.push_back(r.word);
  return labels;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_map_csv(std::ostream& out, const InteractionMap& map, std::span<const std::string> labels) {
  if (labels.size() != map.size()) throw std::invalid_argument("label count does not match map size");
  for (const auto& l : labels) out << ',' << csv_field(l);
  out << '\n';
  const auto old_precision = out.precision(6);
  for (std::size_t i = 0; i < map.size(); ++i) {
    out << csv_field(labels[i]);
    for (std::size_t j = 0; j < map.size(); ++j) out << ',' << map(i, j);
    out << '\n';
  }
  out.precision(old_precision);
}

void write_map_pgm(std::ostream& out, const InteractionMap& map) {
  out << "P5\n" << map.size() << ' ' << map.size() << "\n255\n";
  for (double p : map.probs()) {
    const auto v = static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(v));
  }
}

#define RELMAP_INSTANTIATE_INTERACTION(R)                                                         \
  template HeadWeights<R> register_head(ParameterSet<R>&, const EncoderConfig&, const std::string&, \
                                        std::mt19937_64&);                                        \
  template Tensor<R> score_map(const EncoderState<R>&, const HeadWeights<R>&, const EncoderConfig&, \
                               ScoringAudit*);                                                    \
  template InteractionMap to_probs(const Tensor<R>&, double);                                     \
  template Tensor<R> interaction_loss(const Tensor<R>&, const CellMatrix&);

RELMAP_INSTANTIATE_INTERACTION(float)
RELMAP_INSTANTIATE_INTERACTION(double)

}  // namespace relmap
