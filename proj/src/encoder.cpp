#include "relmap/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace relmap {

std::string_view to_string(AblationMode mode) {
  return mode == AblationMode::semantic_tokens ? "semantic_tokens" : "fresh_placeholder";
}

AblationMode parse_ablation_mode(std::string_view name) {
  if (name == "semantic_tokens") return AblationMode::semantic_tokens;
  if (name == "fresh_placeholder") return AblationMode::fresh_placeholder;
  throw std::invalid_argument("unknown ablation mode: " + std::string(name));
}

void EncoderConfig::validate() const {
  if (layers < 2) throw std::invalid_argument("encoder needs at least 2 layers (the last one is the interaction head)");
  if (heads == 0 || d_head == 0) throw std::invalid_argument("heads and d_head must be positive");
  if (d_model != heads * d_head)
    throw std::invalid_argument("d_model (" + std::to_string(d_model) + ") must equal heads x d_head (" +
                                std::to_string(heads) + " x " + std::to_string(d_head) + ")");
  if (d_ff == 0) throw std::invalid_argument("d_ff must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (max_len == 0) throw std::invalid_argument("max_len must be positive");
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must include PAD and UNK");
  if (relation_count == 0) throw std::invalid_argument("relation_count must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"layers", layers},   {"heads", heads},       {"d_model", d_model},
          {"d_head", d_head},   {"d_ff", d_ff},         {"dropout", dropout},
          {"max_len", max_len}, {"ablation", std::string(to_string(ablation))},
          {"vocab_size", vocab_size}, {"relation_count", relation_count}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.d_head = j.value("d_head", c.d_head);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.dropout = j.value("dropout", c.dropout);
  c.max_len = j.value("max_len", c.max_len);
  c.ablation = parse_ablation_mode(j.value("ablation", std::string(to_string(c.ablation))));
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.relation_count = j.value("relation_count", c.relation_count);
  return c;
}

namespace {

template <typename Real>
Parameter<Real>& normal_param(ParameterSet<Real>& params, std::string name, Shape shape,
                              std::mt19937_64& rng) {
  auto& p = params.add(std::move(name), std::move(shape), true);
  std::normal_distribution<double> dist(0.0, 0.02);
  for (auto& v : p.values) v = static_cast<Real>(dist(rng));
  return p;
}

template <typename Real>
Parameter<Real>& const_param(ParameterSet<Real>& params, std::string name, std::size_t n, Real value) {
  auto& p = params.add(std::move(name), {1, n}, false);
  std::fill(p.values.begin(), p.values.end(), value);
  return p;
}

}  // namespace

template <typename Real>
EncoderWeights<Real> register_encoder(ParameterSet<Real>& params, const EncoderConfig& config,
                                      std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  EncoderWeights<Real> w;
  w.token_embedding = &normal_param(params, "embedding.token", {config.vocab_size, d}, rng);
  w.position_embedding = &normal_param(params, "embedding.position", {config.max_len, d}, rng);
  if (config.ablation == AblationMode::fresh_placeholder)
    w.placeholder_embedding = &normal_param(params, "embedding.placeholder", {config.relation_count, d}, rng);
  for (std::size_t l = 0; l + 1 < config.layers; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    LayerWeights<Real> lw;
    for (std::size_t h = 0; h < config.heads; ++h) {
      const std::string hp = prefix + "head" + std::to_string(h) + ".";
      lw.wq.push_back(&normal_param(params, hp + "wq", {d, config.d_head}, rng));
      lw.bq.push_back(&const_param(params, hp + "bq", config.d_head, Real(0)));
      lw.wk.push_back(&normal_param(params, hp + "wk", {d, config.d_head}, rng));
      lw.bk.push_back(&const_param(params, hp + "bk", config.d_head, Real(0)));
      lw.wv.push_back(&normal_param(params, hp + "wv", {d, config.d_head}, rng));
      lw.bv.push_back(&const_param(params, hp + "bv", config.d_head, Real(0)));
    }
    lw.wo = &normal_param(params, prefix + "wo", {d, d}, rng);
    lw.bo = &const_param(params, prefix + "bo", d, Real(0));
    lw.ln1_gain = &const_param(params, prefix + "ln1.gain", d, Real(1));
    lw.ln1_bias = &const_param(params, prefix + "ln1.bias", d, Real(0));
    lw.w1 = &normal_param(params, prefix + "ff.w1", {d, config.d_ff}, rng);
    lw.b1 = &const_param(params, prefix + "ff.b1", config.d_ff, Real(0));
    lw.w2 = &normal_param(params, prefix + "ff.w2", {config.d_ff, d}, rng);
    lw.b2 = &const_param(params, prefix + "ff.b2", d, Real(0));
    lw.ln2_gain = &const_param(params, prefix + "ln2.gain", d, Real(1));
    lw.ln2_bias = &const_param(params, prefix + "ln2.bias", d, Real(0));
    w.layers.push_back(std::move(lw));
  }
  return w;
}

template <typename Real>
Tensor<Real> embed(Tape<Real>& tape, const EncodedInput& input, const EncoderWeights<Real>& weights,
                   const EncoderConfig& config) {
  const std::size_t n = input.sentence_length;
  const std::size_t total = input.ids.size();
  if (total != n + input.relation_count)
    throw std::invalid_argument("encoded input length does not equal N + M");
  if (total > config.max_len)
    throw std::length_error("sequence of " + std::to_string(total) + " positions exceeds max_len " +
                            std::to_string(config.max_len));
  if (input.relation_count != config.relation_count)
    throw std::invalid_argument("input carries " + std::to_string(input.relation_count) +
                                " relations, model expects " + std::to_string(config.relation_count));
  for (auto id : input.ids)
    if (id >= config.vocab_size)
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(config.vocab_size));

  std::vector<std::size_t> positions(total);
  for (std::size_t i = 0; i < total; ++i) positions[i] = i;
  auto pos = gather_rows(tape.param(*weights.position_embedding), std::span<const std::size_t>(positions));
  auto token_table = tape.param(*weights.token_embedding);

  Tensor<Real> tokens;
  if (config.ablation == AblationMode::fresh_placeholder) {
    if (weights.placeholder_embedding == nullptr)
      throw std::logic_error("fresh_placeholder mode without placeholder table");
    std::vector<std::size_t> relation_rows(input.relation_count);
    for (std::size_t r = 0; r < relation_rows.size(); ++r) relation_rows[r] = r;
    const std::vector<Tensor<Real>> parts{
        gather_rows(token_table, std::span<const std::size_t>(input.ids.data(), n)),
        gather_rows(tape.param(*weights.placeholder_embedding), std::span<const std::size_t>(relation_rows))};
    tokens = n == 0 ? parts[1] : concat_rows(std::span<const Tensor<Real>>(parts));
  } else {
    tokens = gather_rows(token_table, std::span<const std::size_t>(input.ids));
  }
  return add(tokens, pos);
}

template <typename Real>
Tensor<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k) {
  const Real scale_factor = Real(1) / std::sqrt(static_cast<Real>(q.cols()));
  return softmax_rows(matmul_nt(q, k, scale_factor));
}

template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v) {
  return matmul(attention_weights(q, k), v);
}

template <typename Real>
EncoderState<Real> encode(Tape<Real>& tape, const EncodedInput& input,
                          const EncoderWeights<Real>& weights, const EncoderConfig& config,
                          bool training, std::mt19937_64& rng) {
  EncoderState<Real> state;
  state.embedding = embed(tape, input, weights, config);
  Tensor<Real> x = state.embedding;
  for (const auto& lw : weights.layers) {
    std::vector<Tensor<Real>> heads;
    heads.reserve(lw.wq.size());
    for (std::size_t h = 0; h < lw.wq.size(); ++h) {
      auto q = add_row(matmul(x, tape.param(*lw.wq[h])), tape.param(*lw.bq[h]));
      auto k = add_row(matmul(x, tape.param(*lw.wk[h])), tape.param(*lw.bk[h]));
      auto v = add_row(matmul(x, tape.param(*lw.wv[h])), tape.param(*lw.bv[h]));
      heads.push_back(attention(q, k, v));
    }
    auto merged = concat_cols(std::span<const Tensor<Real>>(heads));
    auto projected = add_row(matmul(merged, tape.param(*lw.wo)), tape.param(*lw.bo));
    projected = dropout(projected, config.dropout, training, rng);
    x = layer_norm(add(x, projected), tape.param(*lw.ln1_gain), tape.param(*lw.ln1_bias));

    auto inner = gelu(add_row(matmul(x, tape.param(*lw.w1)), tape.param(*lw.b1)));
    auto outer = add_row(matmul(inner, tape.param(*lw.w2)), tape.param(*lw.b2));
    outer = dropout(outer, config.dropout, training, rng);
    x = layer_norm(add(x, outer), tape.param(*lw.ln2_gain), tape.param(*lw.ln2_bias));
    state.hidden.push_back(x);
  }
  return state;
}

#define RELMAP_INSTANTIATE_ENCODER(R)                                                              \
  template EncoderWeights<R> register_encoder(ParameterSet<R>&, const EncoderConfig&,              \
                                              std::mt19937_64&);                                   \
  template Tensor<R> embed(Tape<R>&, const EncodedInput&, const EncoderWeights<R>&,                \
                           const EncoderConfig&);                                                  \
  template Tensor<R> attention_weights(const Tensor<R>&, const Tensor<R>&);                        \
  template Tensor<R> attention(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&);              \
  template EncoderState<R> encode(Tape<R>&, const EncodedInput&, const EncoderWeights<R>&,         \
                                  const EncoderConfig&, bool, std::mt19937_64&);

RELMAP_INSTANTIATE_ENCODER(float)
RELMAP_INSTANTIATE_ENCODER(double)

}  // namespace relmap
