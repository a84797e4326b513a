#include "stepcat/io.hpp"

#include <sodium.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stepcat {

using nlohmann::json;

namespace {

constexpr int kVariant = sodium_base64_VARIANT_ORIGINAL;

void init_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium failed to initialize");
}

}  // namespace

std::string encode_reals(const Tensor& t) {
  init_sodium();
  std::vector<unsigned char> bytes(t.numel() * 8);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(t[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), kVariant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), kVariant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<double> decode_reals(const std::string& b64, std::size_t count) {
  init_sodium();
  std::vector<unsigned char> bytes(b64.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(bytes.data(), bytes.size(), b64.data(), b64.size(), nullptr, &len, &end, kVariant) != 0 ||
      end != b64.data() + b64.size())
    throw FormatError("invalid base64 payload");
  if (len != count * 8)
    throw FormatError("payload holds " + std::to_string(len) + " bytes, expected " + std::to_string(count * 8));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

namespace {

json tensor_record(const Tensor& t) { return {{"shape", t.shape()}, {"data", encode_reals(t)}}; }

Tensor read_tensor_record(const json& params, const std::string& name, const Shape& expected) {
  auto it = params.find(name);
  if (it == params.end()) throw FormatError("checkpoint: missing parameter '" + name + "'");
  Shape shape;
  std::string data;
  try {
    shape = it->at("shape").get<Shape>();
    data = it->at("data").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: parameter '" + name + "': " + e.what());
  }
  if (shape != expected)
    throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                      shape_str(expected));
  try {
    const std::size_t n = Tensor(shape).numel();
    return Tensor(shape, decode_reals(data, n));
  } catch (const FormatError& e) {
    throw FormatError("checkpoint: parameter '" + name + "': " + e.what());
  }
}

void reject_unknown(const json& params, const ParamStore& store) {
  for (auto it = params.begin(); it != params.end(); ++it)
    if (!store.contains(it.key())) throw FormatError("checkpoint: unknown parameter '" + it.key() + "'");
}

json parse_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("config") || !doc.contains("parameters") || !doc["parameters"].is_object())
    throw FormatError("checkpoint: expected an object with 'config' and 'parameters'");
  return doc;
}

}  // namespace

std::string checkpoint_to_json(const Model& m, const Trainer* trainer) {
  json params = json::object();
  for (const Parameter& p : m.params()) params[p.name] = tensor_record(p.value);
  json doc = {{"config", json::parse(model_config_to_json(m.config()))}, {"parameters", std::move(params)}};
  if (trainer) {
    json moments = json::object();
    std::size_t k = 0;
    for (const Parameter& p : m.params()) moments[p.name] = tensor_record(trainer->moments()[k++]);
    doc["optimizer"] = {{"epoch", trainer->epoch()}, {"moments", std::move(moments)}};
  }
  return doc.dump(1);
}

std::unique_ptr<Model> checkpoint_from_json(const std::string& text) {
  const json doc = parse_checkpoint(text);
  std::unique_ptr<Model> model;
  try {
    model = std::make_unique<Model>(parse_model_config(doc["config"].dump()));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: bad config: ") + e.what());
  }
  const json& params = doc["parameters"];
  for (Parameter& p : model->params()) p.value = read_tensor_record(params, p.name, p.value.shape());
  if (params.size() != model->params().size()) reject_unknown(params, model->params());
  return model;
}

void restore_optimizer(const std::string& text, Trainer& trainer) {
  const json doc = parse_checkpoint(text);
  if (!doc.contains("optimizer")) throw FormatError("checkpoint: no optimizer state");
  const json& opt = doc["optimizer"];
  std::size_t epoch = 0;
  try {
    epoch = opt.at("epoch").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: optimizer: ") + e.what());
  }
  if (!opt.contains("moments") || !opt["moments"].is_object()) throw FormatError("checkpoint: optimizer has no moments");
  const json& moments = opt["moments"];
  const ParamStore& store = trainer.model().params();
  std::vector<Tensor> out;
  for (const Parameter& p : store) out.push_back(read_tensor_record(moments, p.name, p.value.shape()));
  if (moments.size() != store.size()) reject_unknown(moments, store);
  trainer.restore(epoch, std::move(out));
}

void save_checkpoint(const std::filesystem::path& path, const Model& m, const Trainer* trainer) {
  write_text_file(path, checkpoint_to_json(m, trainer));
}
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_text_file(path));
}

std::string scores_to_json(const std::vector<ScoreRecord>& records) {
  json arr = json::array();
  for (const ScoreRecord& r : records)
    arr.push_back({{"id", r.id}, {"stream", r.stream}, {"label", r.label}, {"logits", r.logits.data()}});
  return arr.dump(1);
}

std::vector<ScoreRecord> scores_from_json(const std::string& text) {
  std::vector<ScoreRecord> out;
  try {
    const json arr = json::parse(text);
    if (!arr.is_array()) throw FormatError("scores: expected a JSON array");
    for (const json& e : arr) {
      ScoreRecord r;
      r.id = e.at("id").get<std::string>();
      r.stream = e.at("stream").get<std::string>();
      r.label = e.value("label", std::size_t{0});
      auto logits = e.at("logits").get<std::vector<double>>();
      if (logits.empty()) throw FormatError("scores: record '" + r.id + "' has no logits");
      const std::size_t k = logits.size();
      r.logits = Tensor({k}, std::move(logits));
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("scores: ") + e.what());
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,loss,accuracy\n";
  for (const EpochMetrics& m : history)
    out += std::to_string(m.epoch) + "," + format_real(m.loss) + "," + format_real(m.accuracy) + "\n";
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace stepcat
