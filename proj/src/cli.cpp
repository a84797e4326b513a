#include "stepcat/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "stepcat/grad_check.hpp"
#include "stepcat/io.hpp"
#include "stepcat/train.hpp"

namespace stepcat::cli {

namespace fs = std::filesystem;
namespace sk = skeleton;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t cls, std::size_t index) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(cls) << 32) | index));
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

// Config resolution shared by gradcheck and train: preset, then file, then flags.
struct ConfigFlags {
  std::string preset = "desk";
  std::string config_path;
  std::string stream;
  std::uint64_t seed = 42;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* stream_opt = nullptr;

  void add_to(CLI::App* app, bool with_preset) {
    if (with_preset)
      app->add_option("--preset", preset, "base config before --config is applied")
          ->check(CLI::IsMember({"desk", "toy", "full"}))
          ->capture_default_str();
    app->add_option("--config", config_path, "JSON object of model config fields");
    seed_opt = app->add_option("--seed", seed, "overrides the config seed (default 42)");
    stream_opt = app->add_option("--stream", stream, "joint, bone, joint_motion or bone_motion");
  }

  void validate() const {
    if (stream_opt->count()) sk::parse_stream_kind(stream);
  }

  ModelConfig resolve() const {
    ModelConfig cfg = preset == "toy" ? ModelConfig::toy() : preset == "full" ? ModelConfig{} : ModelConfig::desk();
    if (!config_path.empty()) cfg = parse_model_config(read_text_file(config_path), cfg);
    if (seed_opt->count()) cfg.seed = seed;
    if (stream_opt->count()) cfg.stream = sk::parse_stream_kind(stream);
    cfg.validate();
    return cfg;
  }
};

std::vector<Sample> manifest_samples(const std::string& path, const std::string& split, sk::StreamKind stream) {
  sk::DatasetManifest m = sk::read_manifest(path);
  if (!split.empty()) m = m.filter(split);
  if (m.entries.empty())
    throw std::invalid_argument("manifest " + path + " has no entries" + (split.empty() ? "" : " in split '" + split + "'"));
  return load_samples(m, stream);
}

void print_probabilities(std::ostream& out, const ScoreVector& s) {
  for (std::size_t k = 0; k < s.probabilities.numel(); ++k)
    out << "class " << k << " " << format_real(s.probabilities[k]) << "\n";
  out << "prediction " << argmax(s.probabilities) << "\n";
}

std::string percent(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * acc);
  return buf;
}

// ---- commands ----

struct SynthCmd {
  std::size_t classes = sk::kSynthClasses, per_class = 16, test_per_class = 0, frames = 16;
  std::uint64_t seed = 42;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--classes", classes)->check(CLI::Range(std::size_t{1}, sk::kSynthClasses))->capture_default_str();
    app->add_option("--per-class", per_class, "training sequences per class")
        ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
        ->capture_default_str();
    app->add_option("--test-per-class", test_per_class, "extra sequences per class tagged split=test")
        ->check(CLI::Range(std::size_t{0}, std::size_t{100000}))
        ->capture_default_str();
    app->add_option("--frames", frames)->check(CLI::Range(std::size_t{2}, std::size_t{100000}))->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--out", out, "output directory")->required();
  }

  int run(std::ostream& os) const {
    sk::DatasetManifest manifest;
    manifest.class_count = classes;
    const fs::path dir(out);
    auto emit = [&](std::size_t c, std::size_t i, const std::string& split) {
      sk::SkeletonSequence seq = sk::synth_generate(c, sample_seed(seed, c, i), frames);
      const std::string name = split + "_c" + zero_pad(c, 2) + "_" + zero_pad(i, 4) + ".skeleton";
      write_text_file(dir / name, sk::write_ntu_skeleton(seq));
      sk::ManifestEntry e;
      e.path = name;
      e.label = c;
      e.split = split;
      manifest.entries.push_back(std::move(e));
    };
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t i = 0; i < per_class; ++i) emit(c, i, "train");
      for (std::size_t i = 0; i < test_per_class; ++i) emit(c, per_class + i, "test");
    }
    write_text_file(dir / "manifest.json", sk::manifest_to_json(manifest));
    os << "wrote " << manifest.entries.size() << " sequences and manifest.json to " << out << "\n";
    return kExitOk;
  }
};

struct ParseCmd {
  std::string input, out;

  void add_to(CLI::App* app) {
    app->add_option("--input", input, ".skeleton file")->required();
    app->add_option("--out", out, "writes the sequence back in canonical .skeleton form");
  }

  int run(std::ostream& os) const {
    const sk::SkeletonSequence seq = sk::read_ntu_skeleton(input);
    os << "id " << seq.id << "\nframes " << seq.frames() << "\nbodies " << seq.bodies() << "\n";
    if (!out.empty()) write_text_file(out, sk::write_ntu_skeleton(seq));
    return kExitOk;
  }
};

struct ForwardCmd {
  std::string checkpoint, input, stream, out;
  CLI::Option* stream_opt = nullptr;

  void add_to(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint)->required();
    app->add_option("--input", input, ".skeleton file")->required();
    stream_opt = app->add_option("--stream", stream, "defaults to the checkpoint's stream");
    app->add_option("--out", out, "scores JSON");
  }

  int run(std::ostream& os) const {
    if (stream_opt->count()) sk::parse_stream_kind(stream);
    const auto model = load_checkpoint(checkpoint);
    const sk::StreamKind kind = stream_opt->count() ? sk::parse_stream_kind(stream) : model->config().stream;
    const sk::SkeletonSequence seq = sk::read_ntu_skeleton(input);
    const ScoreVector s = predict(*model, sk::to_model_input(sk::derive_stream(seq, kind)));
    print_probabilities(os, s);
    if (!out.empty())
      write_text_file(out, scores_to_json({{seq.id, std::string(sk::to_string(kind)), seq.label, s.logits}}));
    return kExitOk;
  }
};

struct GradcheckCmd {
  ConfigFlags config;
  std::size_t entries = 8;
  double tol = 1e-4, perturb = 0.1, eps = 1e-6;
  std::string out;

  void add_to(CLI::App* app) {
    config.preset = "toy";
    config.add_to(app, false);
    app->add_option("--entries", entries, "checked entries per parameter, 0 for all")->capture_default_str();
    app->add_option("--tol", tol, "maximum relative error")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--eps", eps, "central-difference step")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--perturb", perturb, "std of the seeded noise added to every parameter")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--out", out, "JSON report");
  }

  int run(std::ostream& os) const {
    config.validate();
    const ModelConfig cfg = config.resolve();
    Model m(cfg);
    std::mt19937_64 rng(splitmix64(cfg.seed));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Parameter& p : m.params())
      for (double& v : p.value.data()) v += perturb * noise(rng);
    const std::size_t label = cfg.seed % cfg.classes;
    const sk::SkeletonSequence seq = sk::synth_generate(label % sk::kSynthClasses, cfg.seed, cfg.frames);
    const Tensor x = sk::to_model_input(sk::derive_stream(seq, cfg.stream));
    std::vector<Parameter*> params;
    for (Parameter& p : m.params()) params.push_back(&p);
    GradCheckOptions opt;
    opt.tol = tol;
    opt.eps = eps;
    opt.max_entries_per_param = entries;
    opt.seed = cfg.seed;
    const GradCheckReport r = grad_check(
        [&](Graph& g) { return cross_entropy(stepcat_forward(g.constant(x), m), label); }, params, opt);
    std::size_t checked = 0;
    const ParamCheck* worst = &r.params.front();
    for (const ParamCheck& pc : r.params) {
      checked += pc.checked;
      if (pc.max_rel_error > worst->max_rel_error) worst = &pc;
    }
    os << "checked " << checked << " entries in " << r.params.size() << " parameters\n"
       << "max relative error " << format_real(r.max_rel_error) << " at " << worst->name << "[" << worst->worst_index
       << "] analytic " << format_real(worst->analytic) << " numeric " << format_real(worst->numeric) << "\n";
    if (!out.empty()) {
      nlohmann::json doc = {{"max_rel_error", r.max_rel_error}, {"tol", tol}, {"passed", r.passed}};
      nlohmann::json per = nlohmann::json::object();
      for (const ParamCheck& pc : r.params) per[pc.name] = {{"max_rel_error", pc.max_rel_error}, {"checked", pc.checked}};
      doc["parameters"] = std::move(per);
      write_text_file(out, doc.dump(1) + "\n");
    }
    if (!r.passed) {
      os << "FAILED: exceeds tolerance " << format_real(tol) << "\n";
      return kExitFailure;
    }
    return kExitOk;
  }
};

struct TrainCmd {
  ConfigFlags config;
  std::string manifest, split = "train", resume, out;
  std::size_t epochs = 300;
  double lr = 0.05, clip = 1.0;
  bool quiet = false;
  CLI::Option* config_opt = nullptr;

  void add_to(CLI::App* app) {
    config.add_to(app, true);
    app->add_option("--manifest", manifest)->required();
    app->add_option("--split", split, "manifest split to train on, empty for all")->capture_default_str();
    app->add_option("--epochs", epochs)->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lr", lr)->capture_default_str();
    app->add_option("--clip", clip, "global gradient-norm clip, 0 disables")->capture_default_str();
    app->add_option("--resume", resume, "continue from a checkpoint holding optimizer state");
    app->add_option("--out", out, "directory for checkpoint.json and metrics.csv")->required();
    app->add_flag("--quiet", quiet, "print only the final epoch");
  }

  int run(std::ostream& os) const {
    config.validate();
    if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("--lr must be a finite value > 0");
    if (!(clip >= 0.0) || !std::isfinite(clip)) throw UsageError("--clip must be a finite value >= 0");
    if (!resume.empty() && (!config.config_path.empty() || config.seed_opt->count() || config.stream_opt->count()))
      throw UsageError("--resume takes the model config from the checkpoint; drop --config, --seed and --stream");

    std::unique_ptr<Model> model;
    std::string resume_text;
    if (resume.empty()) {
      model = std::make_unique<Model>(config.resolve());
    } else {
      resume_text = read_text_file(resume);
      model = checkpoint_from_json(resume_text);
    }
    Trainer trainer(*model, lr, 0.9, clip);
    if (!resume.empty()) restore_optimizer(resume_text, trainer);

    const auto samples = manifest_samples(manifest, split, model->config().stream);
    os << "training on " << samples.size() << " samples, stream " << sk::to_string(model->config().stream) << ", "
       << model->params().total_elements() << " parameters\n";
    const TrainResult r = train(trainer, samples, epochs, [&](const EpochMetrics& e) {
      if (!quiet) os << "epoch " << e.epoch << " loss " << format_real(e.loss) << " accuracy " << percent(e.accuracy) << "\n";
    });
    if (quiet) {
      const EpochMetrics& e = r.history.back();
      os << "epoch " << e.epoch << " loss " << format_real(e.loss) << " accuracy " << percent(e.accuracy) << "\n";
    }
    const fs::path dir(out);
    save_checkpoint(dir / "checkpoint.json", *model, &trainer);
    write_text_file(dir / "metrics.csv", metrics_to_csv(r.history));
    os << "wrote " << (dir / "checkpoint.json").string() << " and " << (dir / "metrics.csv").string() << "\n";
    return kExitOk;
  }
};

struct EvalCmd {
  std::string checkpoint, manifest, split = "test", stream, out;
  CLI::Option* stream_opt = nullptr;

  void add_to(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint)->required();
    app->add_option("--manifest", manifest)->required();
    app->add_option("--split", split, "manifest split to score, empty for all")->capture_default_str();
    stream_opt = app->add_option("--stream", stream, "defaults to the checkpoint's stream");
    app->add_option("--out", out, "scores JSON");
  }

  int run(std::ostream& os) const {
    if (stream_opt->count()) sk::parse_stream_kind(stream);
    const auto model = load_checkpoint(checkpoint);
    const sk::StreamKind kind = stream_opt->count() ? sk::parse_stream_kind(stream) : model->config().stream;
    const auto samples = manifest_samples(manifest, split, kind);
    for (const Sample& s : samples)
      if (s.label >= model->config().classes)
        throw std::invalid_argument("sample '" + s.id + "' has label " + std::to_string(s.label) + " beyond the model's " +
                                    std::to_string(model->config().classes) + " classes");
    const EvalResult r = evaluate(*model, samples);
    const std::size_t correct = static_cast<std::size_t>(std::lround(r.accuracy * static_cast<double>(samples.size())));
    os << "stream " << sk::to_string(kind) << " accuracy " << percent(r.accuracy) << " (" << correct << "/"
       << samples.size() << ") loss " << format_real(r.loss) << "\n";
    if (!out.empty()) {
      std::vector<ScoreRecord> recs;
      for (std::size_t i = 0; i < samples.size(); ++i)
        recs.push_back({samples[i].id, std::string(sk::to_string(kind)), samples[i].label, r.scores[i].logits});
      write_text_file(out, scores_to_json(recs));
    }
    return kExitOk;
  }
};

struct EnsembleCmd {
  std::vector<std::string> scores;
  std::vector<double> weights;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--scores", scores, "score JSON files, one per stream")->required()->expected(1, -1);
    app->add_option("--weights", weights, "one non-negative weight per score file (default 1 each)")->expected(1, -1);
    app->add_option("--out", out, "fused predictions CSV")->required();
  }

  int run(std::ostream& os) const {
    if (!weights.empty() && weights.size() != scores.size())
      throw UsageError("--weights needs " + std::to_string(scores.size()) + " values, got " + std::to_string(weights.size()));
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("--weights must be finite and >= 0");

    std::vector<std::vector<ScoreRecord>> files;
    for (const std::string& path : scores) files.push_back(scores_from_json(read_text_file(path)));
    const auto& first = files.front();
    std::vector<std::map<std::string, const ScoreRecord*>> index(files.size());
    for (std::size_t f = 0; f < files.size(); ++f) {
      for (const ScoreRecord& r : files[f])
        if (!index[f].emplace(r.id, &r).second) throw FormatError(scores[f] + ": duplicate sample id '" + r.id + "'");
      if (files[f].size() != first.size())
        throw FormatError(scores[f] + " has " + std::to_string(files[f].size()) + " records, " + scores[0] + " has " +
                          std::to_string(first.size()));
    }

    std::vector<std::size_t> stream_correct(files.size(), 0);
    std::size_t fused_correct = 0;
    std::string csv = "id,label,prediction";
    const std::size_t classes = first.empty() ? 0 : first.front().logits.numel();
    for (std::size_t k = 0; k < classes; ++k) csv += ",p" + std::to_string(k);
    csv += "\n";
    for (const ScoreRecord& base : first) {
      std::vector<ScoreVector> per;
      for (std::size_t f = 0; f < files.size(); ++f) {
        auto it = index[f].find(base.id);
        if (it == index[f].end()) throw FormatError(scores[f] + " has no record for '" + base.id + "'");
        if (it->second->label != base.label) throw FormatError("label of '" + base.id + "' differs between score files");
        per.push_back(make_scores(it->second->logits));
        stream_correct[f] += argmax(per.back().probabilities) == base.label;
      }
      const EnsembleResult fused = ensemble_fuse(per, weights);
      fused_correct += fused.prediction == base.label;
      csv += base.id + "," + std::to_string(base.label) + "," + std::to_string(fused.prediction);
      for (double p : fused.fused.probabilities.data()) csv += "," + format_real(p);
      csv += "\n";
    }
    const double n = static_cast<double>(std::max<std::size_t>(first.size(), 1));
    for (std::size_t f = 0; f < files.size(); ++f)
      os << (first.empty() ? std::string("-") : files[f].front().stream) << " (" << scores[f] << ") accuracy "
         << percent(stream_correct[f] / n) << "\n";
    os << "fused accuracy " << percent(fused_correct / n) << " (" << fused_correct << "/" << first.size() << ")\n";
    write_text_file(out, csv);
    return kExitOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skeleton action recognition: synthetic data, training, evaluation and score fusion", "stepcat"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SynthCmd synth;
  ParseCmd parse;
  ForwardCmd forward;
  GradcheckCmd gradcheck;
  TrainCmd train_cmd;
  EvalCmd eval;
  EnsembleCmd ensemble;
  synth.add_to(app.add_subcommand("synth", "write labelled synthetic .skeleton files and a manifest"));
  parse.add_to(app.add_subcommand("parse", "parse one .skeleton file"));
  forward.add_to(app.add_subcommand("forward", "class probabilities for one .skeleton file"));
  gradcheck.add_to(app.add_subcommand("gradcheck", "finite-difference check of the full model's gradient"));
  train_cmd.add_to(app.add_subcommand("train", "full-batch momentum SGD on a manifest split"));
  eval.add_to(app.add_subcommand("eval", "score a manifest split with a checkpoint"));
  ensemble.add_to(app.add_subcommand("ensemble", "fuse per-stream score files"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") return synth.run(out);
    if (name == "parse") return parse.run(out);
    if (name == "forward") return forward.run(out);
    if (name == "gradcheck") return gradcheck.run(out);
    if (name == "train") return train_cmd.run(out);
    if (name == "eval") return eval.run(out);
    return ensemble.run(out);
  } catch (const sk::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace stepcat::cli
