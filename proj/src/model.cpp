#include "relmap/model.hpp"

#include <stdexcept>
#include <string>

#include "relmap/decoder.hpp"

namespace relmap {

std::string_view to_string(EntityMode mode) {
  return mode == EntityMode::single_token ? "single_token" : "multi_token";
}

EntityMode parse_entity_mode(std::string_view name) {
  if (name == "single_token") return EntityMode::single_token;
  if (name == "multi_token") return EntityMode::multi_token;
  throw std::invalid_argument("unknown entity mode: " + std::string(name));
}

std::vector<SpanMode> map_modes(EntityMode mode) {
  if (mode == EntityMode::single_token) return {SpanMode::single_token};
  return {SpanMode::multi_token_head, SpanMode::multi_token_tail, SpanMode::multi_token_cross};
}

nlohmann::json ModelConfig::to_json() const {
  auto j = encoder.to_json();
  j["entity_mode"] = std::string(to_string(entity_mode));
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder = EncoderConfig::from_json(j);
  c.entity_mode = parse_entity_mode(j.value("entity_mode", std::string("single_token")));
  return c;
}

template <typename Real>
Model<Real>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.encoder.validate();
  std::mt19937_64 rng(seed);
  encoder_ = register_encoder(params_, config_.encoder, rng);
  for (auto mode : map_modes(config_.entity_mode)) {
    std::string prefix = "interaction.";
    if (config_.entity_mode == EntityMode::multi_token) prefix += std::string(to_string(mode)) + ".";
    heads_.push_back(register_head(params_, config_.encoder, prefix, rng));
  }
}

template <typename Real>
Model<Real> Model<Real>::clone() const {
  Model copy(config_, 0);
  copy.params_.copy_values_from(params_);
  return copy;
}

template <typename Real>
typename Model<Real>::Forward Model<Real>::forward(Tape<Real>& tape, const EncodedInput& input, bool training,
                                                   std::mt19937_64& rng, ScoringAudit* audit) const {
  Forward f{encode(tape, input, encoder_, config_.encoder, training, rng), {}};
  for (const auto& head : heads_) f.logits.push_back(score_map(f.state, head, config_.encoder, audit));
  return f;
}

template <typename Real>
Tensor<Real> Model<Real>::loss(Tape<Real>& tape, const EncodedInput& input, std::span<const CellMatrix> gold,
                               bool training, std::mt19937_64& rng) const {
  if (gold.size() != heads_.size())
    throw std::invalid_argument("expected " + std::to_string(heads_.size()) + " gold maps, got " +
                                std::to_string(gold.size()));
  auto f = forward(tape, input, training, rng);
  Tensor<Real> total = interaction_loss(f.logits[0], gold[0]);
  for (std::size_t i = 1; i < gold.size(); ++i) total = add(total, interaction_loss(f.logits[i], gold[i]));
  if (gold.size() > 1) total = scale(total, Real(1) / static_cast<Real>(gold.size()));
  return total;
}

template <typename Real>
Prediction predict(const Model<Real>& model, const EncodedInput& input, double threshold) {
  Tape<Real> tape;
  std::mt19937_64 unused(0);
  auto f = model.forward(tape, input, false, unused);
  Prediction p;
  for (const auto& logits : f.logits) p.maps.push_back(to_probs(logits, threshold));
  const std::size_t n = input.sentence_length, m = input.relation_count;
  if (model.config().entity_mode == EntityMode::single_token) {
    p.triples = decode_single(predict_cells(p.maps[0]), n, m);
  } else {
    p.triples = decode_multi(predict_cells(p.maps[0]), predict_cells(p.maps[1]), predict_cells(p.maps[2]), n, m);
  }
  return p;
}

template class Model<float>;
template class Model<double>;
template Prediction predict(const Model<float>&, const EncodedInput&, double);
template Prediction predict(const Model<double>&, const EncodedInput&, double);

}  // namespace relmap
