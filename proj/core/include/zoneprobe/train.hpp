#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zoneprobe/eval.hpp"
#include "zoneprobe/model.hpp"

namespace zoneprobe {

inline constexpr std::uint64_t kDefaultSeeds[5] = {11, 22, 33, 44, 55};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;  // global-norm clip; 0 disables
  std::uint64_t seed = kDefaultSeeds[0];
  ProbeSpec probe;  // train-phase entries bite during training

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& json_text);

// Linear warmup to the base rate, then linear decay to exactly 0 at the final
// step. Warmup spans max(1, total_steps·warmup_fraction) steps; step 0 already
// carries base/warmup_steps.
double lr_at_step(double base, int step, int total_steps, double warmup_fraction);

struct TrainStep {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<TrainStep> curve;
};

// Deterministic given config.seed (init, shuffling, dropout). Throws with the
// step index when the loss stops being finite.
TrainResult train(const ModelConfig& model_config, const EncodedDataset& train_data,
                  const TrainConfig& config);

std::pair<double, double> mean_and_sample_std(const std::vector<double>& values);

struct MultiSeedResult {
  std::vector<std::uint64_t> seeds;
  std::vector<TrainResult> runs;       // aligned with seeds
  std::vector<MetricReport> reports;   // evaluation per seed
  double em_mean = 0.0, em_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

// Trains one model per seed and evaluates each on the dev set with the same
// probe active (train-consistent); aggregates mean and sample std.
MultiSeedResult multi_seed_run(const ModelConfig& model_config, const EncodedDataset& train_data,
                               const std::vector<Example>& dev_examples,
                               const EncodedDataset& dev_data, const TrainConfig& config,
                               const std::vector<std::uint64_t>& seeds);

}  // namespace zoneprobe
