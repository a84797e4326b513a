#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "stepcat/tensor.hpp"

namespace stepcat::skeleton {

inline constexpr std::size_t kNumJoints = 25;
inline constexpr std::size_t kMaxBodies = 2;
inline constexpr std::size_t kSynthClasses = 8;

// NTU RGB+D joint order, 0-based.
enum Joint : std::size_t {
  SpineBase = 0,
  SpineMid,
  Neck,
  Head,
  ShoulderLeft,
  ElbowLeft,
  WristLeft,
  HandLeft,
  ShoulderRight,
  ElbowRight,
  WristRight,
  HandRight,
  HipLeft,
  KneeLeft,
  AnkleLeft,
  FootLeft,
  HipRight,
  KneeRight,
  AnkleRight,
  FootRight,
  SpineShoulder,
  HandTipLeft,
  ThumbLeft,
  HandTipRight,
  ThumbRight,
};

/// Kinematic tree rooted at the spine base; parents()[SpineBase] == SpineBase.
/// Hand tips and thumbs hang off their hand joint.
const std::array<std::size_t, kNumJoints>& parents();

/// The 24 (child, parent) edges of the tree.
std::vector<std::pair<std::size_t, std::size_t>> tree_edges();

struct SkeletonSequence {
  Tensor coords;  // (bodies, frames, 25, 3), meters
  std::size_t label = 0;
  std::string id;

  std::size_t bodies() const { return coords.dim(0); }
  std::size_t frames() const { return coords.dim(1); }
};

/// Malformed .skeleton input. line() is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Parses the NTU ".skeleton" text layout. Bodies beyond two are skipped;
/// frames with fewer bodies are zero-filled. A file that ends early reports
/// the line number one past its last line.
SkeletonSequence parse_ntu_skeleton(std::string_view text, std::string id = {});
SkeletonSequence read_ntu_skeleton(const std::filesystem::path& path);

/// Inverse of the parser on xyz; every other NTU field is written as 0.
/// Numbers use the shortest representation that round-trips exactly.
std::string write_ntu_skeleton(const SkeletonSequence& seq);
void save_ntu_skeleton(const SkeletonSequence& seq, const std::filesystem::path& path);

enum class StreamKind { Joint, Bone, JointMotion, BoneMotion };
inline constexpr std::array<StreamKind, 4> kAllStreams = {StreamKind::Joint, StreamKind::Bone,
                                                          StreamKind::JointMotion, StreamKind::BoneMotion};
std::string_view to_string(StreamKind kind);
/// Accepts joint, bone, joint_motion / joint-motion, bone_motion / bone-motion.
StreamKind parse_stream_kind(std::string_view name);

/// (bodies, frames, 25, 3) view of one ensemble stream:
///   Joint       coordinates minus the spine base of the same body and frame
///   Bone        joint minus its parent (zero at the root)
///   *Motion     x[t+1] - x[t], last frame zero
Tensor derive_stream(const SkeletonSequence& seq, StreamKind kind);

/// Selects one body of a derived stream as the (25, frames, 3) model input.
Tensor to_model_input(const Tensor& stream, std::size_t body = 0);

struct PartitionTable {
  std::vector<std::size_t> hands;           // H
  std::vector<std::size_t> legs_feet;       // F
  std::vector<std::size_t> other_vs_hands;  // complement of H
  std::vector<std::size_t> other_vs_feet;   // complement of F
  std::vector<std::size_t> upper;           // U
  std::vector<std::size_t> lower;           // D, complement of U
  std::vector<std::size_t> wrist_ankle;     // WA
  std::vector<std::size_t> up_down;         // UD, every joint
};

const PartitionTable& default_partitions();
/// Sorted complement of `set` within [0, 25). Throws on out-of-range or repeated indices.
std::vector<std::size_t> complement(const std::vector<std::size_t>& set);

/// Deterministic sample for (class_id, seed): a rest pose animated by the
/// class's parametric motion plus N(0, 0.01 m) jitter on every coordinate.
///   0 both forearms raise      4 right-hand wave
///   1 right-leg swing          5 alternating foot stamps
///   2 forward torso bend       6 head nod
///   3 squat                    7 lateral body sway
SkeletonSequence synth_generate(std::size_t class_id, std::uint64_t seed, std::size_t frames);

struct ManifestEntry {
  std::optional<std::string> path;  // .skeleton file, relative to the manifest
  std::optional<std::uint64_t> seed;
  std::size_t label = 0;
  std::size_t frames = 64;  // synthetic entries only
  std::string split = "train";
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::size_t class_count = 0;
  std::filesystem::path base_dir;

  /// Entries of one split tag.
  DatasetManifest filter(const std::string& split) const;
  SkeletonSequence load(std::size_t index) const;
};

/// JSON array of {"path"|"seed", "label", ["frames"], ["split"]}.
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& m);
/// Throws std::invalid_argument if any label is >= class_count or an entry has neither path nor seed.
void validate_manifest(const DatasetManifest& m);

}  // namespace stepcat::skeleton
