#include "stepcat/train.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

namespace stepcat {

std::vector<Sample> load_samples(const skeleton::DatasetManifest& manifest, skeleton::StreamKind stream) {
  std::vector<Sample> out;
  out.reserve(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const skeleton::SkeletonSequence seq = manifest.load(i);
    out.push_back({skeleton::to_model_input(skeleton::derive_stream(seq, stream)), seq.label, seq.id});
  }
  return out;
}

Trainer::Trainer(Model& model, double lr, double momentum, double clip_norm)
    : model_(model), lr_(lr), momentum_(momentum), clip_norm_(clip_norm) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("trainer: lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("trainer: momentum must be in [0, 1)");
  for (const Parameter& p : model_.params()) moments_.emplace_back(p.value.shape());
}

void Trainer::restore(std::size_t epoch, std::vector<Tensor> moments) {
  if (moments.size() != moments_.size()) throw std::invalid_argument("trainer: moment count does not match the model");
  std::size_t k = 0;
  for (const Parameter& p : model_.params()) {
    if (moments[k].shape() != p.value.shape())
      throw std::invalid_argument("trainer: moment for '" + p.name + "' has shape " + shape_str(moments[k].shape()));
    ++k;
  }
  epoch_ = epoch;
  moments_ = std::move(moments);
}

EpochMetrics Trainer::step(const std::vector<Sample>& batch) {
  if (batch.empty()) throw std::invalid_argument("trainer: empty batch");
  ParamStore& store = model_.params();
  store.zero_grad();
  double loss = 0.0;
  std::size_t correct = 0;
  for (const Sample& s : batch) {
    Graph g;
    const Var logits = stepcat_forward(g.constant(s.input), model_);
    const Var l = cross_entropy(logits, s.label);
    g.backward(l);
    loss += l.value()[0];
    if (argmax(logits.value()) == s.label) ++correct;
  }
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite at epoch " + std::to_string(epoch_ + 1));
  const double inv = 1.0 / static_cast<double>(batch.size());
  double norm2 = 0.0;
  for (const Parameter& p : store)
    for (double g : p.grad.data()) norm2 += g * g;
  const double norm = std::sqrt(norm2) * inv;
  const double gscale = (clip_norm_ > 0.0 && norm > clip_norm_) ? inv * clip_norm_ / norm : inv;
  std::size_t k = 0;
  for (Parameter& p : store) {
    Tensor& v = moments_[k++];
    for (std::size_t i = 0; i < v.numel(); ++i) {
      v[i] = momentum_ * v[i] + p.grad[i] * gscale;
      p.value[i] -= lr_ * v[i];
    }
  }
  ++epoch_;
  return {epoch_, loss * inv, static_cast<double>(correct) * inv, norm};
}

TrainResult train(Trainer& trainer, const std::vector<Sample>& batch, std::size_t epochs,
                  const EpochCallback& on_epoch) {
  if (batch.empty()) throw std::invalid_argument("train: no samples");
  const std::size_t classes = trainer.model().config().classes;
  for (const Sample& s : batch)
    if (s.label >= classes)
      throw std::invalid_argument("train: label " + std::to_string(s.label) + " of '" + s.id + "' outside " +
                                  std::to_string(classes) + " classes");
  TrainResult r;
  for (std::size_t e = 0; e < epochs; ++e) {
    r.history.push_back(trainer.step(batch));
    if (on_epoch) on_epoch(r.history.back());
  }
  return r;
}

TrainResult train(Model& model, const std::vector<Sample>& batch, std::size_t epochs, double lr,
                  double clip_norm, const EpochCallback& on_epoch) {
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  Trainer trainer(model, lr, 0.9, clip_norm);
  return train(trainer, batch, epochs, on_epoch);
}

EvalResult evaluate(const Model& model, const std::vector<Sample>& samples) {
  EvalResult r;
  r.scores.resize(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  const long n = static_cast<long>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      r.scores[i] = predict(model, samples[i].input);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const Sample& s : samples)
    if (s.label >= model.config().classes)
      throw std::invalid_argument("evaluate: label " + std::to_string(s.label) + " of '" + s.id + "' out of range");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (argmax(r.scores[i].probabilities) == samples[i].label) ++correct;
    r.loss -= std::log(r.scores[i].probabilities[samples[i].label]);
  }
  if (!samples.empty()) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    r.loss /= static_cast<double>(samples.size());
  }
  return r;
}

}  // namespace stepcat
