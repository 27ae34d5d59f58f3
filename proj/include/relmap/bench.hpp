#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relmap/model.hpp"
#include "relmap/trainer.hpp"

namespace relmap {

enum class BenchMode { train_epoch, inference };

std::string_view to_string(BenchMode mode);
BenchMode parse_bench_mode(std::string_view name);

struct BenchResult {
  BenchMode mode = BenchMode::inference;
  std::size_t samples = 0;
  std::vector<double> runs;  // seconds per epoch, or milliseconds per sample
  double median = 0;

  std::string unit() const;
  std::string line() const;
  nlohmann::json to_json() const;
};

// Wall-clock median of `repeats` runs. train_epoch trains a copy of the model
// for one epoch per run; inference predicts every example at batch size 1.
// Throws std::invalid_argument on an empty dataset or repeats < 1.
template <typename Real>
BenchResult bench(const Model<Real>& model, std::span<const TrainingExample> data, BenchMode mode,
                  const TrainConfig& config, std::size_t repeats = 3);

}  // namespace relmap
