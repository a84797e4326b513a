#include "stepcat/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace stepcat::skeleton {

namespace {

using Vec3 = std::array<double, 3>;

constexpr std::array<std::size_t, kNumJoints> kParents = {
    SpineBase,      // 0 spine base (root)
    SpineBase,      // 1 spine mid
    SpineShoulder,  // 2 neck
    Neck,           // 3 head
    SpineShoulder,  // 4 left shoulder
    ShoulderLeft,   // 5 left elbow
    ElbowLeft,      // 6 left wrist
    WristLeft,      // 7 left hand
    SpineShoulder,  // 8 right shoulder
    ShoulderRight,  // 9 right elbow
    ElbowRight,     // 10 right wrist
    WristRight,     // 11 right hand
    SpineBase,      // 12 left hip
    HipLeft,        // 13 left knee
    KneeLeft,       // 14 left ankle
    AnkleLeft,      // 15 left foot
    SpineBase,      // 16 right hip
    HipRight,       // 17 right knee
    KneeRight,      // 18 right ankle
    AnkleRight,     // 19 right foot
    SpineMid,       // 20 spine shoulder
    HandLeft,       // 21 left hand tip
    HandLeft,       // 22 left thumb
    HandRight,      // 23 right hand tip
    HandRight,      // 24 right thumb
};

// Line cursor over the input text. Line numbers are 1-based.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Next non-blank line split on whitespace; throws when input runs out.
  std::vector<std::string_view> next(const char* expecting) {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      auto fields = split(line);
      if (!fields.empty()) return fields;
    }
    throw ParseError(line_ + 1, std::string("unexpected end of file, expected ") + expecting);
  }

  std::size_t line() const { return line_; }

 private:
  static std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

std::size_t parse_count(std::string_view tok, std::size_t line, const char* what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(line, std::string("invalid ") + what + " '" + std::string(tok) + "'");
  return v;
}

double parse_coord(std::string_view tok, std::size_t line) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(line, "non-numeric coordinate '" + std::string(tok) + "'");
  if (!std::isfinite(v)) throw ParseError(line, "non-finite coordinate '" + std::string(tok) + "'");
  return v;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  out.append(buf, p);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- synthetic motion ----

// Rest pose in meters, x to the subject's right, y up, z toward the camera.
constexpr std::array<Vec3, kNumJoints> kRestPose = {{
    {0.00, 0.00, 0.00},    // spine base
    {0.00, 0.30, 0.00},    // spine mid
    {0.00, 0.62, 0.00},    // neck
    {0.00, 0.76, 0.01},    // head
    {-0.18, 0.52, 0.00},   // L shoulder
    {-0.24, 0.27, 0.00},   // L elbow
    {-0.27, 0.04, 0.01},   // L wrist
    {-0.28, -0.03, 0.02},  // L hand
    {0.18, 0.52, 0.00},    // R shoulder
    {0.24, 0.27, 0.00},    // R elbow
    {0.27, 0.04, 0.01},    // R wrist
    {0.28, -0.03, 0.02},   // R hand
    {-0.09, -0.06, 0.00},  // L hip
    {-0.10, -0.46, 0.01},  // L knee
    {-0.11, -0.86, -0.01}, // L ankle
    {-0.11, -0.92, 0.08},  // L foot
    {0.09, -0.06, 0.00},   // R hip
    {0.10, -0.46, 0.01},   // R knee
    {0.11, -0.86, -0.01},  // R ankle
    {0.11, -0.92, 0.08},   // R foot
    {0.00, 0.54, 0.00},    // spine shoulder
    {-0.29, -0.11, 0.03},  // L hand tip
    {-0.25, -0.05, 0.05},  // L thumb
    {0.29, -0.11, 0.03},   // R hand tip
    {0.25, -0.05, 0.05},   // R thumb
}};

// Rodrigues rotation of p about the axis through `pivot`.
Vec3 rotate_about(const Vec3& p, const Vec3& pivot, Vec3 axis, double angle) {
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  for (double& a : axis) a /= n;
  const Vec3 v{p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]};
  const double c = std::cos(angle), s = std::sin(angle);
  const double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
  const Vec3 cr{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2], axis[0] * v[1] - axis[1] * v[0]};
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = pivot[i] + v[i] * c + cr[i] * s + axis[i] * dot * (1.0 - c);
  return out;
}

using Pose = std::array<Vec3, kNumJoints>;

void rotate_joints(Pose& pose, std::initializer_list<std::size_t> joints, std::size_t pivot, const Vec3& axis,
                   double angle) {
  const Vec3 c = pose[pivot];
  for (std::size_t j : joints) pose[j] = rotate_about(pose[j], c, axis, angle);
}

constexpr Vec3 kAxisX{1, 0, 0}, kAxisY{0, 1, 0}, kAxisZ{0, 0, 1};

struct MotionParams {
  double amplitude;
  double cycles;  // over the whole sequence
  double phase;
};

// Animates the rest pose for one frame; u in [0, 1] is normalized time.
void animate(std::size_t class_id, const MotionParams& m, double u, Pose& pose) {
  const double w = 2.0 * std::numbers::pi * m.cycles * u + m.phase;
  const double osc = std::sin(w);
  const double lift = 0.5 - 0.5 * std::cos(w);  // 0..1
  const double a = m.amplitude;
  switch (class_id) {
    case 0:  // forearms raise in the frontal plane
      rotate_joints(pose, {WristLeft, HandLeft, HandTipLeft, ThumbLeft}, ElbowLeft, kAxisZ, -1.6 * a * lift);
      rotate_joints(pose, {WristRight, HandRight, HandTipRight, ThumbRight}, ElbowRight, kAxisZ, 1.6 * a * lift);
      break;
    case 1:  // right leg swings fore and aft
      rotate_joints(pose, {KneeRight, AnkleRight, FootRight}, HipRight, kAxisX, 0.6 * a * osc);
      break;
    case 2:  // torso bends forward
      rotate_joints(pose,
                    {SpineMid, Neck, Head, ShoulderLeft, ElbowLeft, WristLeft, HandLeft, ShoulderRight, ElbowRight,
                     WristRight, HandRight, SpineShoulder, HandTipLeft, ThumbLeft, HandTipRight, ThumbRight},
                    SpineBase, kAxisX, 0.7 * a * lift);
      break;
    case 3: {  // squat: knees travel forward while the feet stay planted
      const double d = 0.25 * a * lift;
      for (std::size_t j : {AnkleLeft, FootLeft, AnkleRight, FootRight}) pose[j][1] += d;
      for (std::size_t j : {KneeLeft, KneeRight}) {
        pose[j][1] += 0.5 * d;
        pose[j][2] += 0.8 * d;
      }
      break;
    }
    case 4:  // right hand waves with the upper arm raised
      rotate_joints(pose, {ElbowRight, WristRight, HandRight, HandTipRight, ThumbRight}, ShoulderRight, kAxisZ,
                    1.4);
      rotate_joints(pose, {WristRight, HandRight, HandTipRight, ThumbRight}, ElbowRight, kAxisZ,
                    0.8 * a * std::sin(2.0 * w));
      break;
    case 5:  // feet stamp in turn, bending at the knees
      rotate_joints(pose, {AnkleLeft, FootLeft}, KneeLeft, kAxisX, -0.9 * a * lift);
      rotate_joints(pose, {AnkleRight, FootRight}, KneeRight, kAxisX, -0.9 * a * (0.5 + 0.5 * std::cos(w)));
      break;
    case 6:  // head nods
      rotate_joints(pose, {Neck, Head}, SpineShoulder, kAxisX, 0.9 * a * osc);
      break;
    case 7:  // whole upper body sways sideways
      rotate_joints(pose,
                    {SpineMid, Neck, Head, ShoulderLeft, ElbowLeft, WristLeft, HandLeft, ShoulderRight, ElbowRight,
                     WristRight, HandRight, SpineShoulder, HandTipLeft, ThumbLeft, HandTipRight, ThumbRight},
                    SpineBase, kAxisZ, 0.4 * a * osc);
      break;
    default:
      break;
  }
}

}  // namespace

const std::array<std::size_t, kNumJoints>& parents() { return kParents; }

std::vector<std::pair<std::size_t, std::size_t>> tree_edges() {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 0; j < kNumJoints; ++j)
    if (kParents[j] != j) out.emplace_back(j, kParents[j]);
  return out;
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

SkeletonSequence parse_ntu_skeleton(std::string_view text, std::string id) {
  LineReader in(text);
  auto head = in.next("frame count");
  const std::size_t frames = parse_count(head[0], in.line(), "frame count");
  if (frames == 0) throw ParseError(in.line(), "sequence has no frames");

  // frame -> up to two bodies of 25x3
  std::vector<std::vector<std::array<double, kNumJoints * 3>>> raw(frames);
  std::size_t max_bodies = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    auto bc = in.next("body count");
    const std::size_t bodies = parse_count(bc[0], in.line(), "body count");
    for (std::size_t b = 0; b < bodies; ++b) {
      in.next("body info line");
      auto jc = in.next("joint count");
      const std::size_t joints = parse_count(jc[0], in.line(), "joint count");
      if (joints != kNumJoints)
        throw ParseError(in.line(), "joint count " + std::to_string(joints) + " != " + std::to_string(kNumJoints));
      std::array<double, kNumJoints * 3> xyz{};
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        auto f = in.next("joint line");
        if (f.size() < 3) throw ParseError(in.line(), "joint line needs x y z");
        for (std::size_t c = 0; c < 3; ++c) xyz[j * 3 + c] = parse_coord(f[c], in.line());
      }
      if (b < kMaxBodies) raw[t].push_back(xyz);
    }
    max_bodies = std::max(max_bodies, raw[t].size());
  }
  if (max_bodies == 0) throw ParseError(1, "sequence contains no bodies");

  SkeletonSequence seq;
  seq.id = std::move(id);
  seq.coords = Tensor({max_bodies, frames, kNumJoints, 3});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t b = 0; b < raw[t].size(); ++b)
      std::copy(raw[t][b].begin(), raw[t][b].end(), seq.coords.ptr() + (b * frames + t) * kNumJoints * 3);
  return seq;
}

SkeletonSequence read_ntu_skeleton(const std::filesystem::path& path) {
  return parse_ntu_skeleton(read_file(path), path.stem().string());
}

std::string write_ntu_skeleton(const SkeletonSequence& seq) {
  const Tensor& x = seq.coords;
  if (x.rank() != 4 || x.dim(2) != kNumJoints || x.dim(3) != 3)
    throw DimensionError("write_ntu_skeleton: coords must be (M,T,25,3), got " + shape_str(x.shape()));
  if (x.dim(1) == 0) throw std::invalid_argument("write_ntu_skeleton: sequence has no frames");
  if (x.dim(0) == 0 || x.dim(0) > kMaxBodies)
    throw std::invalid_argument("write_ntu_skeleton: body count must be 1 or 2");
  const std::size_t m = x.dim(0), frames = x.dim(1);
  std::string out;
  out.reserve(frames * m * kNumJoints * 64);
  out += std::to_string(frames) + '\n';
  for (std::size_t t = 0; t < frames; ++t) {
    out += std::to_string(m) + '\n';
    for (std::size_t b = 0; b < m; ++b) {
      out += "0 0 0 0 0 0 0 0 0 0\n";
      out += std::to_string(kNumJoints) + '\n';
      const double* p = x.ptr() + (b * frames + t) * kNumJoints * 3;
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        for (std::size_t c = 0; c < 3; ++c) {
          append_double(out, p[j * 3 + c]);
          out += ' ';
        }
        out += "0 0 0 0 0 0 0 0 0\n";
      }
    }
  }
  return out;
}

void save_ntu_skeleton(const SkeletonSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << write_ntu_skeleton(seq);
}

std::string_view to_string(StreamKind kind) {
  switch (kind) {
    case StreamKind::Joint: return "joint";
    case StreamKind::Bone: return "bone";
    case StreamKind::JointMotion: return "joint_motion";
    case StreamKind::BoneMotion: return "bone_motion";
  }
  return "?";
}

StreamKind parse_stream_kind(std::string_view name) {
  std::string n(name);
  std::replace(n.begin(), n.end(), '-', '_');
  for (StreamKind k : kAllStreams)
    if (to_string(k) == n) return k;
  throw std::invalid_argument("unknown stream '" + std::string(name) + "'");
}

Tensor derive_stream(const SkeletonSequence& seq, StreamKind kind) {
  const Tensor& x = seq.coords;
  if (x.rank() != 4 || x.dim(2) != kNumJoints || x.dim(3) != 3)
    throw DimensionError("derive_stream: coords must be (M,T,25,3), got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), frames = x.dim(1);
  Tensor out(x.shape());
  for (std::size_t b = 0; b < m; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      const double* src = x.ptr() + (b * frames + t) * kNumJoints * 3;
      double* dst = out.ptr() + (b * frames + t) * kNumJoints * 3;
      for (std::size_t j = 0; j < kNumJoints; ++j)
        for (std::size_t c = 0; c < 3; ++c) dst[j * 3 + c] = src[j * 3 + c] - src[SpineBase * 3 + c];
    }
  }
  const bool bone = kind == StreamKind::Bone || kind == StreamKind::BoneMotion;
  if (bone) {
    Tensor joints = out;
    for (std::size_t bt = 0; bt < m * frames; ++bt) {
      const double* src = joints.ptr() + bt * kNumJoints * 3;
      double* dst = out.ptr() + bt * kNumJoints * 3;
      for (std::size_t j = 0; j < kNumJoints; ++j)
        for (std::size_t c = 0; c < 3; ++c) dst[j * 3 + c] = src[j * 3 + c] - src[kParents[j] * 3 + c];
    }
  }
  if (kind == StreamKind::JointMotion || kind == StreamKind::BoneMotion) {
    const std::size_t fs = kNumJoints * 3;
    for (std::size_t b = 0; b < m; ++b) {
      double* base = out.ptr() + b * frames * fs;
      for (std::size_t t = 0; t + 1 < frames; ++t)
        for (std::size_t i = 0; i < fs; ++i) base[t * fs + i] = base[(t + 1) * fs + i] - base[t * fs + i];
      std::fill(base + (frames - 1) * fs, base + frames * fs, 0.0);
    }
  }
  return out;
}

Tensor to_model_input(const Tensor& stream, std::size_t body) {
  if (stream.rank() != 4 || stream.dim(2) != kNumJoints || stream.dim(3) != 3)
    throw DimensionError("to_model_input: stream must be (M,T,25,3), got " + shape_str(stream.shape()));
  if (body >= stream.dim(0)) throw std::out_of_range("to_model_input: body " + std::to_string(body) + " absent");
  const std::size_t frames = stream.dim(1);
  Tensor out({kNumJoints, frames, 3});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (std::size_t c = 0; c < 3; ++c)
        out[(j * frames + t) * 3 + c] = stream[((body * frames + t) * kNumJoints + j) * 3 + c];
  return out;
}

std::vector<std::size_t> complement(const std::vector<std::size_t>& set) {
  std::vector<bool> in(kNumJoints, false);
  for (std::size_t j : set) {
    if (j >= kNumJoints) throw std::out_of_range("joint index " + std::to_string(j) + " out of range");
    if (in[j]) throw std::invalid_argument("joint index " + std::to_string(j) + " repeated");
    in[j] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < kNumJoints; ++j)
    if (!in[j]) out.push_back(j);
  return out;
}

const PartitionTable& default_partitions() {
  static const PartitionTable table = [] {
    PartitionTable p;
    p.hands = {WristLeft, HandLeft, HandTipLeft, ThumbLeft, WristRight, HandRight, HandTipRight, ThumbRight};
    p.legs_feet = {KneeLeft, AnkleLeft, FootLeft, KneeRight, AnkleRight, FootRight};
    p.wrist_ankle = {WristLeft, WristRight, AnkleLeft, AnkleRight};
    p.upper = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 20, 21, 22, 23, 24};
    p.other_vs_hands = complement(p.hands);
    p.other_vs_feet = complement(p.legs_feet);
    p.lower = complement(p.upper);
    p.up_down = complement({});
    return p;
  }();
  return table;
}

SkeletonSequence synth_generate(std::size_t class_id, std::uint64_t seed, std::size_t frames) {
  if (class_id >= kSynthClasses)
    throw std::invalid_argument("synth_generate: class_id " + std::to_string(class_id) + " >= " +
                                std::to_string(kSynthClasses));
  if (frames < 2) throw std::invalid_argument("synth_generate: need at least 2 frames");

  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + class_id * 0xbf58476d1ce4e5b9ULL + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double body_scale = uni(0.9, 1.1);
  const double yaw = uni(-0.25, 0.25);
  const Vec3 origin{uni(-0.5, 0.5), uni(-0.2, 0.2), uni(2.5, 3.5)};
  const MotionParams motion{uni(0.8, 1.2), uni(1.0, 2.0), uni(0.0, 2.0 * std::numbers::pi)};
  Pose rest = kRestPose;
  for (auto& p : rest)
    for (double& v : p) v += uni(-0.01, 0.01);  // per-subject proportions

  std::normal_distribution<double> jitter(0.0, 0.01);
  SkeletonSequence seq;
  seq.label = class_id;
  seq.id = "synth_c" + std::to_string(class_id) + "_s" + std::to_string(seed);
  seq.coords = Tensor({1, frames, kNumJoints, 3});
  for (std::size_t t = 0; t < frames; ++t) {
    Pose pose = rest;
    animate(class_id, motion, static_cast<double>(t) / static_cast<double>(frames - 1), pose);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      Vec3 p = rotate_about(pose[j], {0, 0, 0}, kAxisY, yaw);
      for (std::size_t c = 0; c < 3; ++c)
        seq.coords[(t * kNumJoints + j) * 3 + c] = origin[c] + body_scale * p[c] + jitter(rng);
    }
  }
  return seq;
}

DatasetManifest DatasetManifest::filter(const std::string& split) const {
  DatasetManifest out;
  out.class_count = class_count;
  out.base_dir = base_dir;
  for (const auto& e : entries)
    if (e.split == split) out.entries.push_back(e);
  return out;
}

SkeletonSequence DatasetManifest::load(std::size_t index) const {
  const ManifestEntry& e = entries.at(index);
  SkeletonSequence seq;
  if (e.path) {
    std::filesystem::path p(*e.path);
    if (p.is_relative()) p = base_dir / p;
    seq = read_ntu_skeleton(p);
  } else if (e.seed) {
    seq = synth_generate(e.label, *e.seed, e.frames);
  } else {
    throw std::invalid_argument("manifest entry " + std::to_string(index) + " has neither path nor seed");
  }
  seq.label = e.label;
  return seq;
}

void validate_manifest(const DatasetManifest& m) {
  if (m.class_count == 0) throw std::invalid_argument("manifest: class count must be positive");
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (!e.path && !e.seed)
      throw std::invalid_argument("manifest entry " + std::to_string(i) + " has neither path nor seed");
    if (e.label >= m.class_count)
      throw std::invalid_argument("manifest entry " + std::to_string(i) + ": label " + std::to_string(e.label) +
                                  " >= class count " + std::to_string(m.class_count));
    if (e.seed && e.label >= kSynthClasses)
      throw std::invalid_argument("manifest entry " + std::to_string(i) + ": synthetic label out of range");
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  const nlohmann::json* list = &j;
  if (j.is_object()) {  // {"class_count": k, "entries": [...]} is also accepted
    if (j.contains("class_count")) m.class_count = j.at("class_count").get<std::size_t>();
    list = &j.at("entries");
  }
  if (!list->is_array()) throw std::invalid_argument("manifest " + path.string() + ": expected a JSON array");
  std::size_t max_label = 0;
  try {
    for (const auto& item : *list) {
      ManifestEntry e;
      if (item.contains("path")) e.path = item.at("path").get<std::string>();
      if (item.contains("seed")) e.seed = item.at("seed").get<std::uint64_t>();
      e.label = item.at("label").get<std::size_t>();
      if (item.contains("frames")) e.frames = item.at("frames").get<std::size_t>();
      if (item.contains("split")) e.split = item.at("split").get<std::string>();
      max_label = std::max(max_label, e.label);
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  if (m.class_count == 0) m.class_count = m.entries.empty() ? 0 : max_label + 1;
  validate_manifest(m);
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json item;
    if (e.path) item["path"] = *e.path;
    if (e.seed) {
      item["seed"] = *e.seed;
      item["frames"] = e.frames;
    }
    item["label"] = e.label;
    item["split"] = e.split;
    arr.push_back(std::move(item));
  }
  return arr.dump(2) + "\n";
}

}  // namespace stepcat::skeleton
