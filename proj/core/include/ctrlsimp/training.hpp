#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ctrlsimp/corpus.hpp"
#include "ctrlsimp/decoder.hpp"
#include "ctrlsimp/model.hpp"

namespace ctrlsimp::model {

struct TrainSettings {
  int max_epochs = 50;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.998;
  double epsilon = 1e-9;
  int warmup_steps = 400;
  double clip_norm = 5.0;
  int patience = 3;
  int eval_every = 1;
  // Stop once the epoch loss per token drops below this; 0 disables.
  double target_loss = 0.0;
  double indifferent_fraction = markers::kDefaultIndifferentFraction;
  uint64_t seed = 1;
  int threads = 1;
  decoder::DecodeSettings validation_decode{};

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  long steps = 0;
  double loss = 0.0;  // mean per target token
  std::optional<double> validation_sari;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_sari = 0.0;
  std::string stop_reason;

  std::string to_json() const;
};

// One training pass input: the marked source, target template and target.
TrainingExample example_for(const ParallelPair& pair, const Vocabulary& vocab, double indifferent_fraction,
                            uint64_t seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam with linear warmup, global-norm clipping, and early stopping on
// validation SARI. Returns the parameters of the best validation epoch.
Model train_model(const std::vector<ParallelPair>& train, const std::vector<ParallelPair>& validation,
                  const Vocabulary& vocab, const ModelConfig& config, const TrainSettings& settings,
                  TrainingLog* log = nullptr, const EpochCallback& on_epoch = {});

// Validation SARI of `model` on `pairs`, with fixed training-style markers.
double validation_sari(const Model& model, const std::vector<ParallelPair>& pairs, const TrainSettings& settings);

// Deterministic 64-bit mixing of a seed with extra words.
uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

}  // namespace ctrlsimp::model
