#include "relmap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <thread>

#include "relmap/evaluation.hpp"

namespace relmap {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("adam_epsilon must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"weight_decay", weight_decay}, {"batch_size", batch_size},
          {"epochs", epochs},               {"seed", seed},                 {"eval_every", eval_every},
          {"threshold", threshold},         {"beta1", beta1},               {"beta2", beta2},
          {"adam_epsilon", adam_epsilon},   {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.threshold = j.value("threshold", c.threshold);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
  c.threads = j.value("threads", c.threads);
  return c;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("RELMAP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<TrainingExample> make_examples(std::span<const AnnotatedSentence> sentences,
                                           const RelationSchema& schema, const Vocab& vocab,
                                           EntityMode mode) {
  std::vector<TrainingExample> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    TrainingExample ex;
    ex.input = encode_concat(s.tokens, schema, vocab);
    for (auto m : map_modes(mode)) ex.gold_maps.push_back(build_gold_map(s, schema.size(), m));
    for (const auto& t : s.triples)
      ex.gold.insert(mode == EntityMode::single_token
                         ? Triple{{t.subject.head, t.subject.head}, t.relation, {t.object.head, t.object.head}}
                         : t);
    out.push_back(std::move(ex));
  }
  return out;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"mean_loss", mean_loss}, {"seconds", seconds}};
  j["dev_f1"] = dev_f1 ? nlohmann::json(*dev_f1) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename Real>
AdamW<Real>::AdamW(ParameterSet<Real>& params, double beta1, double beta2, double epsilon)
    : params_(&params), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params[i].size(), Real(0));
    v_.emplace_back(params[i].size(), Real(0));
  }
}

template <typename Real>
void AdamW<Real>::adam_update(double learning_rate) {
  ++steps_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
  const Real lr = static_cast<Real>(learning_rate);
  const Real c1 = static_cast<Real>(correction1), c2 = static_cast<Real>(correction2);
  const Real eps = static_cast<Real>(epsilon_);
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto& p = (*params_)[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const Real g = p.grad[k];
      m[k] = b1 * m[k] + (Real(1) - b1) * g;
      v[k] = b2 * v[k] + (Real(1) - b2) * g * g;
      const Real m_hat = m[k] / c1;
      const Real v_hat = v[k] / c2;
      p.values[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename Real>
void AdamW<Real>::apply_decay(double learning_rate, double weight_decay) {
  const Real factor = static_cast<Real>(learning_rate * weight_decay);
  if (factor == Real(0)) return;
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto& p = (*params_)[i];
    if (!p.decay()) continue;
    for (auto& x : p.values) x -= factor * x;
  }
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::span<const TrainingExample> data, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  // Bucket by sentence length; equal lengths keep their shuffled order.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].input.sentence_length < data[b].input.sentence_length;
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::mt19937_64 dropout_rng(std::uint64_t seed, std::size_t epoch, std::size_t example) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(example),
                    std::uint64_t{0xd20u}};
  return std::mt19937_64(seq);
}

template <typename Real>
double sentence_backward(const Model<Real>& model, const TrainingExample& ex, Real weight,
                         std::mt19937_64& rng) {
  Tape<Real> tape;
  auto loss = model.loss(tape, ex.input, ex.gold_maps, true, rng);
  const double value = static_cast<double>(loss.item());
  if (std::isfinite(value)) tape.backward(scale(loss, weight));
  return value;
}

}  // namespace

template <typename Real>
Trainer<Real>::Trainer(Model<Real>& model, TrainConfig config)
    : model_(&model),
      config_(std::move(config)),
      optimizer_(model.params(), config_.beta1, config_.beta2, config_.adam_epsilon),
      threads_(config_.threads ? config_.threads : worker_threads()) {
  config_.validate();
  if (threads_ > 1)
    for (std::size_t i = 0; i < threads_; ++i) replicas_.push_back(model.clone());
}

template <typename Real>
EpochRecord Trainer<Real>::run_epoch(std::span<const TrainingExample> data, std::size_t epoch) {
  if (data.empty()) throw TrainingError("training set is empty");
  const auto start = std::chrono::steady_clock::now();
  const auto batches = make_batches(data, config_.batch_size, config_.seed, epoch);
  double loss_sum = 0;
  auto& params = model_->params();
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    const Real weight = Real(1) / static_cast<Real>(batch.size());
    std::vector<double> losses(batch.size());
    params.zero_grads();
    if (threads_ <= 1 || batch.size() == 1) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        auto rng = dropout_rng(config_.seed, epoch, batch[i]);
        losses[i] = sentence_backward(*model_, data[batch[i]], weight, rng);
      }
    } else {
      // Per-sentence gradient slots, reduced in batch order so the result does
      // not depend on the thread count.
      std::vector<std::vector<std::vector<Real>>> slots(batch.size());
      const std::size_t workers = std::min(threads_, batch.size());
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          auto& replica = replicas_[w];
          replica.params().copy_values_from(params);
          for (std::size_t i = w; i < batch.size(); i += workers) {
            replica.params().zero_grads();
            auto rng = dropout_rng(config_.seed, epoch, batch[i]);
            losses[i] = sentence_backward(replica, data[batch[i]], weight, rng);
            auto& slot = slots[i];
            for (std::size_t p = 0; p < replica.params().size(); ++p) slot.push_back(replica.params()[p].grad);
          }
        });
      }
      for (auto& t : pool) t.join();
      for (const auto& slot : slots) {
        if (slot.empty()) continue;
        for (std::size_t p = 0; p < params.size(); ++p) {
          auto& g = params[p].grad;
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += slot[p][k];
        }
      }
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!std::isfinite(losses[i]))
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                            " (example " + std::to_string(batch[i]) + ")");
      loss_sum += losses[i];
    }
    optimizer_.step(config_.learning_rate, config_.weight_decay);
  }
  params.zero_grads();
  EpochRecord record;
  record.epoch = epoch;
  record.mean_loss = loss_sum / static_cast<double>(data.size());
  record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

template <typename Real>
std::vector<EpochRecord> train(Model<Real>& model, std::span<const TrainingExample> data,
                               std::span<const TrainingExample> dev, const TrainConfig& config,
                               const EpochCallback& on_epoch) {
  if (data.empty()) throw TrainingError("training set is empty");
  Trainer<Real> trainer(model, config);
  const MatchMode match = model.config().entity_mode == EntityMode::single_token ? MatchMode::anchor : MatchMode::span;
  std::vector<EpochRecord> log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto record = trainer.run_epoch(data, epoch);
    if (config.eval_every != 0 && epoch % config.eval_every == 0 && !dev.empty()) {
      const auto predicted = predict_all(model, dev, config.threshold);
      std::vector<TripleSet> gold;
      for (const auto& ex : dev) gold.push_back(ex.gold);
      record.dev_f1 = micro_prf(predicted, gold, match).f1;
    }
    if (on_epoch) on_epoch(record);
    log.push_back(record);
  }
  return log;
}

template <typename Real>
std::vector<TripleSet> predict_all(const Model<Real>& model, std::span<const TrainingExample> data,
                                   double threshold) {
  std::vector<TripleSet> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(predict(model, ex.input, threshold).triples);
  return out;
}

#define RELMAP_INSTANTIATE_TRAINER(R)                                                              \
  template class AdamW<R>;                                                                         \
  template class Trainer<R>;                                                                       \
  template std::vector<EpochRecord> train(Model<R>&, std::span<const TrainingExample>,             \
                                          std::span<const TrainingExample>, const TrainConfig&,    \
                                          const EpochCallback&);                                   \
  template std::vector<TripleSet> predict_all(const Model<R>&, std::span<const TrainingExample>, double);

RELMAP_INSTANTIATE_TRAINER(float)
RELMAP_INSTANTIATE_TRAINER(double)

}  // namespace relmap
