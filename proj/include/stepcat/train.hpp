#pragma once

// Full-batch momentum SGD on in-memory samples.

#include <functional>
#include <string>
#include <vector>

#include "stepcat/model.hpp"

namespace stepcat {

struct Sample {
  Tensor input;  // (25, T, 3), one stream of body 0
  std::size_t label = 0;
  std::string id;
};

/// Loads every manifest entry and derives `stream` for body 0.
std::vector<Sample> load_samples(const skeleton::DatasetManifest& manifest, skeleton::StreamKind stream);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean cross-entropy before the update
  double accuracy = 0.0;  // training accuracy before the update
  double grad_norm = 0.0; // of the mean gradient, before clipping
};

class Trainer {
 public:
  /// lr = 0 is allowed here and leaves parameters untouched; negative lr is an error.
  Trainer(Model& model, double lr, double momentum = 0.9, double clip_norm = 0.0);

  /// One full-batch step: gradients summed over samples in order, averaged,
  /// rescaled to clip_norm if their global norm exceeds it (clip_norm > 0),
  /// then v = momentum * v + g; p -= lr * v.
  EpochMetrics step(const std::vector<Sample>& batch);

  Model& model() { return model_; }
  std::size_t epoch() const { return epoch_; }
  const std::vector<Tensor>& moments() const { return moments_; }
  /// Resumes from saved optimizer state; moments must match the parameter shapes in store order.
  void restore(std::size_t epoch, std::vector<Tensor> moments);

 private:
  Model& model_;
  double lr_, momentum_, clip_norm_;
  std::size_t epoch_ = 0;
  std::vector<Tensor> moments_;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Continues `trainer` for `epochs` steps. Throws on an empty batch or an out-of-range label.
TrainResult train(Trainer& trainer, const std::vector<Sample>& batch, std::size_t epochs,
                  const EpochCallback& on_epoch = {});

/// Trains `model` for `epochs` full-batch steps. Throws on lr <= 0 or an empty batch.
TrainResult train(Model& model, const std::vector<Sample>& batch, std::size_t epochs, double lr,
                  double clip_norm = 0.0, const EpochCallback& on_epoch = {});

struct EvalResult {
  std::vector<ScoreVector> scores;  // one per sample, in order
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Forward passes only; parallel over samples.
EvalResult evaluate(const Model& model, const std::vector<Sample>& samples);

}  // namespace stepcat
