#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "relmap/dataset.hpp"
#include "relmap/model.hpp"
#include "relmap/tokenizer.hpp"

namespace relmap {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 24;
  std::size_t epochs = 100;
  std::uint64_t seed = 42;
  // Dev evaluation every eval_every epochs; 0 disables it.
  std::size_t eval_every = 0;
  double threshold = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Worker threads for the per-sentence forward/backward; 0 reads
  // RELMAP_THREADS, falling back to the hardware concurrency.
  std::size_t threads = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// RELMAP_THREADS when set to a positive integer, else hardware concurrency.
std::size_t worker_threads();

struct TrainingExample {
  EncodedInput input;
  std::vector<CellMatrix> gold_maps;  // one per map_modes(entity mode)
  TripleSet gold;                     // anchors in single-token mode, full spans otherwise
};

std::vector<TrainingExample> make_examples(std::span<const AnnotatedSentence> sentences,
                                           const RelationSchema& schema, const Vocab& vocab,
                                           EntityMode mode);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0;
  std::optional<double> dev_f1;
  double seconds = 0;

  nlohmann::json to_json() const;
};

// Adam with decoupled weight decay. Decay touches only parameters flagged
// as weight matrices.
template <typename Real>
class AdamW {
 public:
  AdamW(ParameterSet<Real>& params, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void adam_update(double learning_rate);
  // theta <- theta - lr * wd * theta
  void apply_decay(double learning_rate, double weight_decay);
  void step(double learning_rate, double weight_decay) {
    adam_update(learning_rate);
    apply_decay(learning_rate, weight_decay);
  }
  std::size_t steps() const { return steps_; }

 private:
  ParameterSet<Real>* params_;
  double beta1_, beta2_, epsilon_;
  std::size_t steps_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

template <typename Real>
class Trainer {
 public:
  Trainer(Model<Real>& model, TrainConfig config);

  // Epochs are numbered from 1. Sentences are shuffled with a seed derived
  // from (seed, epoch), bucketed by length into batches, and the batch loss
  // is the mean of per-sentence losses.
  EpochRecord run_epoch(std::span<const TrainingExample> data, std::size_t epoch);

  const TrainConfig& config() const { return config_; }

 private:
  Model<Real>* model_;
  TrainConfig config_;
  AdamW<Real> optimizer_;
  std::size_t threads_;
  std::vector<Model<Real>> replicas_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs config.epochs epochs; dev micro-F1 is logged when eval_every divides
// the epoch and dev is nonempty. Throws TrainingError on empty data or a
// non-finite loss.
template <typename Real>
std::vector<EpochRecord> train(Model<Real>& model, std::span<const TrainingExample> data,
                               std::span<const TrainingExample> dev, const TrainConfig& config,
                               const EpochCallback& on_epoch = {});

// Batch-size-1 inference over examples, in order.
template <typename Real>
std::vector<TripleSet> predict_all(const Model<Real>& model, std::span<const TrainingExample> data,
                                   double threshold = 0.5);

}  // namespace relmap
