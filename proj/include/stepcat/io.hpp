#pragma once

// File formats:
//   checkpoint  {"config": {...}, "parameters": {name: {"shape": [...], "data": base64}},
//                "optimizer": {"epoch": n, "moments": {name: {...}}}}   optimizer is optional
//               data is the little-endian IEEE-754 binary64 bytes of the values
//   scores      [{"id", "stream", "label", "logits": [...]}]
//   metrics     CSV "epoch,loss,accuracy"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stepcat/model.hpp"
#include "stepcat/train.hpp"

namespace stepcat {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_reals(const Tensor& t);
/// Throws FormatError if the payload is not valid base64 or holds a different count.
std::vector<double> decode_reals(const std::string& b64, std::size_t count);

std::string checkpoint_to_json(const Model& m, const Trainer* trainer = nullptr);
/// Rebuilds the model from the stored config, then overwrites every parameter.
/// Missing, extra or misshaped parameters are FormatErrors.
std::unique_ptr<Model> checkpoint_from_json(const std::string& text);

/// Loads the optimizer section into `trainer`, whose model must already hold the checkpoint.
void restore_optimizer(const std::string& text, Trainer& trainer);

void save_checkpoint(const std::filesystem::path& path, const Model& m, const Trainer* trainer = nullptr);
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

struct ScoreRecord {
  std::string id;
  std::string stream;
  std::size_t label = 0;
  Tensor logits;
};

std::string scores_to_json(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> scores_from_json(const std::string& text);

std::string metrics_to_csv(const std::vector<EpochMetrics>& history);

/// Shortest decimal that parses back to the same double.
std::string format_real(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace stepcat
