#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "stepcat/skeleton.hpp"

namespace stepcat::skeleton {
namespace {

const std::filesystem::path kData = STEPCAT_TEST_DATA_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SkeletonSequence random_sequence(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> bodies(1, 2), frames(2, 20), kind(0, 3);
  std::normal_distribution<double> n(0.0, 2.0);
  SkeletonSequence s;
  s.coords = Tensor({bodies(rng), frames(rng), kNumJoints, 3});
  for (double& v : s.coords.data()) {
    switch (kind(rng)) {
      case 0: v = n(rng); break;
      case 1: v = n(rng) * 1e-9; break;  // forces exponent notation
      case 2: v = std::ldexp(n(rng), 40); break;
      default: v = std::round(n(rng) * 1000.0) / 1000.0; break;
    }
  }
  return s;
}

// Per-joint temporal variance summed over xyz, body 0.
std::vector<double> joint_variance(const SkeletonSequence& s) {
  const std::size_t frames = s.frames();
  std::vector<double> var(kNumJoints, 0.0);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < frames; ++t) mean += s.coords.at({0, t, j, c});
      mean /= static_cast<double>(frames);
      for (std::size_t t = 0; t < frames; ++t) {
        const double d = s.coords.at({0, t, j, c}) - mean;
        var[j] += d * d / static_cast<double>(frames);
      }
    }
  }
  return var;
}

double mean_over(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  double s = 0.0;
  for (std::size_t i : idx) s += v[i];
  return s / static_cast<double>(idx.size());
}

TEST(Parser, ZeroFileGivesZeroTensor) {
  const auto seq = read_ntu_skeleton(kData / "zero_sequence.skeleton");
  EXPECT_EQ(seq.coords.shape(), (Shape{1, 1, 25, 3}));
  for (double v : seq.coords.data()) EXPECT_EQ(v, 0.0);
}

TEST(Parser, ZeroSequenceMatchesGoldenText) {
  SkeletonSequence s;
  s.coords = Tensor({1, 1, kNumJoints, 3});
  EXPECT_EQ(write_ntu_skeleton(s), slurp(kData / "zero_sequence.skeleton"));
}

TEST(Parser, ReadsExtraFieldsAndIgnoresThem) {
  const auto seq = read_ntu_skeleton(kData / "two_frames.skeleton");
  ASSERT_EQ(seq.coords.shape(), (Shape{1, 2, 25, 3}));
  EXPECT_DOUBLE_EQ(seq.coords.at({0, 0, 0, 0}), 0.1);
  EXPECT_DOUBLE_EQ(seq.coords.at({0, 1, 24, 0}), 0.44);
  EXPECT_DOUBLE_EQ(seq.coords.at({0, 1, 3, 2}), 3.1);
}

TEST(Parser, RoundTripIsExactOn100RandomSequences) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_sequence(rng);
    const auto back = parse_ntu_skeleton(write_ntu_skeleton(s));
    ASSERT_EQ(back.coords, s.coords) << "sequence " << i;
  }
}

TEST(Parser, RoundTripOfSyntheticSamples) {
  for (std::size_t c = 0; c < kSynthClasses; ++c) {
    const auto s = synth_generate(c, 7 + c, 16);
    EXPECT_EQ(parse_ntu_skeleton(write_ntu_skeleton(s)).coords, s.coords);
  }
}

struct MalformedCase {
  const char* file;
  std::size_t line;
  const char* message;
};

TEST(Parser, MalformedCorpusReportsLine) {
  const MalformedCase cases[] = {
      {"truncated.skeleton", 41, "unexpected end of file"},
      {"bad_joint_count.skeleton", 32, "joint count 26"},
      {"non_numeric.skeleton", 10, "non-numeric coordinate 'abc'"},
  };
  for (const auto& c : cases) {
    try {
      read_ntu_skeleton(kData / "malformed" / c.file);
      ADD_FAILURE() << c.file << " parsed without error";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), c.line) << c.file;
      EXPECT_NE(std::string(e.what()).find(c.message), std::string::npos) << e.what();
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(c.line)), std::string::npos) << e.what();
    }
  }
}

TEST(Parser, TwentySixJointsRejectedAtThatLine) {
  std::string text = "1\n1\n0 0 0 0 0 0 0 0 0 0\n26\n";
  for (int j = 0; j < 26; ++j) text += "0 0 0\n";
  try {
    parse_ntu_skeleton(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(Parser, EmptyAndZeroFrameInputsRejected) {
  EXPECT_THROW(parse_ntu_skeleton(""), ParseError);
  EXPECT_THROW(parse_ntu_skeleton("0\n"), ParseError);
  EXPECT_THROW(parse_ntu_skeleton("1\n0\n"), ParseError);  // no bodies at all
  EXPECT_THROW(
      {
        SkeletonSequence s;
        s.coords = Tensor({1, 0, kNumJoints, 3});
        write_ntu_skeleton(s);
      },
      std::invalid_argument);
}

TEST(Parser, ExtraBodiesDroppedAndMissingBodiesZeroFilled) {
  auto body = [](double v) {
    std::string s = "0 0 0 0 0 0 0 0 0 0\n25\n";
    for (int j = 0; j < 25; ++j) s += std::to_string(v) + " 0 0\n";
    return s;
  };
  // frame 0: three bodies, frame 1: one body
  const std::string text = "2\n3\n" + body(1) + body(2) + body(3) + "1\n" + body(4);
  const auto seq = parse_ntu_skeleton(text);
  ASSERT_EQ(seq.coords.shape(), (Shape{2, 2, 25, 3}));
  EXPECT_EQ(seq.coords.at({0, 0, 5, 0}), 1.0);
  EXPECT_EQ(seq.coords.at({1, 0, 5, 0}), 2.0);
  EXPECT_EQ(seq.coords.at({0, 1, 5, 0}), 4.0);
  EXPECT_EQ(seq.coords.at({1, 1, 5, 0}), 0.0);
}

TEST(Parser, CrlfLineEndings) {
  std::string text = slurp(kData / "zero_sequence.skeleton");
  std::string crlf;
  for (char c : text) crlf += c == '\n' ? std::string("\r\n") : std::string(1, c);
  EXPECT_EQ(parse_ntu_skeleton(crlf).coords.shape(), (Shape{1, 1, 25, 3}));
}

TEST(Tree, ParentTableIsASpanningTreeRootedAtSpineBase) {
  const auto& par = parents();
  EXPECT_EQ(par[SpineBase], SpineBase);
  EXPECT_EQ(tree_edges().size(), kNumJoints - 1);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    std::size_t k = j, steps = 0;
    while (k != SpineBase && steps <= kNumJoints) k = par[k], ++steps;
    EXPECT_EQ(k, SpineBase) << "joint " << j << " does not reach the root";
  }
}

TEST(Streams, StaticSequenceHasZeroMotion) {
  SkeletonSequence s;
  s.coords = Tensor({1, 5, kNumJoints, 3});
  std::mt19937_64 rng(3);
  Tensor pose = Tensor::randn({kNumJoints * 3}, rng);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < kNumJoints * 3; ++i) s.coords[t * kNumJoints * 3 + i] = pose[i];
  for (StreamKind k : {StreamKind::JointMotion, StreamKind::BoneMotion}) {
    const Tensor m = derive_stream(s, k);
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Streams, RootBoneIsZeroAndBoneMatchesEdgeOracle) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const auto s = random_sequence(rng);
    const Tensor bone = derive_stream(s, StreamKind::Bone);
    const Tensor joint = derive_stream(s, StreamKind::Joint);
    for (std::size_t b = 0; b < s.bodies(); ++b) {
      for (std::size_t t = 0; t < s.frames(); ++t) {
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_EQ(bone.at({b, t, SpineBase, c}), 0.0);
          EXPECT_EQ(joint.at({b, t, SpineBase, c}), 0.0);
          for (auto [child, parent] : tree_edges()) {
            const double expect = (s.coords.at({b, t, child, c}) - s.coords.at({b, t, SpineBase, c})) -
                                  (s.coords.at({b, t, parent, c}) - s.coords.at({b, t, SpineBase, c}));
            EXPECT_EQ(bone.at({b, t, child, c}), expect);
          }
        }
      }
    }
  }
}

TEST(Streams, MotionIsForwardDifferenceWithZeroLastFrame) {
  std::mt19937_64 rng(12);
  const auto s = random_sequence(rng);
  const Tensor j = derive_stream(s, StreamKind::Joint);
  const Tensor jm = derive_stream(s, StreamKind::JointMotion);
  const std::size_t last = s.frames() - 1;
  for (std::size_t b = 0; b < s.bodies(); ++b)
    for (std::size_t t = 0; t <= last; ++t)
      for (std::size_t k = 0; k < kNumJoints; ++k)
        for (std::size_t c = 0; c < 3; ++c)
          EXPECT_EQ(jm.at({b, t, k, c}), t == last ? 0.0 : j.at({b, t + 1, k, c}) - j.at({b, t, k, c}));
}

TEST(Streams, CommuteWithFrameTruncation) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const auto s = random_sequence(rng);
    const std::size_t frames = s.frames();
    const std::size_t keep = 1 + rng() % frames;
    SkeletonSequence cut;
    cut.coords = Tensor({s.bodies(), keep, kNumJoints, 3});
    for (std::size_t b = 0; b < s.bodies(); ++b)
      for (std::size_t t = 0; t < keep; ++t)
        for (std::size_t i = 0; i < kNumJoints * 3; ++i)
          cut.coords[(b * keep + t) * kNumJoints * 3 + i] = s.coords[(b * frames + t) * kNumJoints * 3 + i];
    for (StreamKind k : kAllStreams) {
      const bool motion = k == StreamKind::JointMotion || k == StreamKind::BoneMotion;
      const Tensor full = derive_stream(s, k), part = derive_stream(cut, k);
      const std::size_t agree = motion ? keep - 1 : keep;  // boundary frame differs for motion
      for (std::size_t b = 0; b < s.bodies(); ++b)
        for (std::size_t t = 0; t < agree; ++t)
          for (std::size_t i = 0; i < kNumJoints * 3; ++i)
            ASSERT_EQ(part[(b * keep + t) * kNumJoints * 3 + i], full[(b * frames + t) * kNumJoints * 3 + i])
                << to_string(k);
    }
  }
}

TEST(Streams, ModelInputLayout) {
  const auto s = synth_generate(2, 5, 9);
  const Tensor st = derive_stream(s, StreamKind::Joint);
  const Tensor x = to_model_input(st);
  EXPECT_EQ(x.shape(), (Shape{25, 9, 3}));
  EXPECT_EQ(x.at({7, 4, 1}), st.at({0, 4, 7, 1}));
  EXPECT_THROW(to_model_input(st, 1), std::out_of_range);
}

TEST(Streams, KindNamesRoundTrip) {
  std::set<std::string_view> names;
  for (StreamKind k : kAllStreams) {
    EXPECT_EQ(parse_stream_kind(to_string(k)), k);
    names.insert(to_string(k));
  }
  EXPECT_EQ(names.size(), 4u);
  EXPECT_EQ(parse_stream_kind("bone-motion"), StreamKind::BoneMotion);
  EXPECT_THROW(parse_stream_kind("velocity"), std::invalid_argument);
}

TEST(Partitions, SizesAndCovers) {
  const auto& p = default_partitions();
  EXPECT_EQ(p.hands.size(), 8u);
  EXPECT_EQ(p.legs_feet.size(), 6u);
  EXPECT_EQ(p.wrist_ankle.size(), 4u);
  EXPECT_EQ(p.upper.size() + p.lower.size(), kNumJoints);
  EXPECT_EQ(p.up_down.size(), kNumJoints);
  auto check_cover = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::set<std::size_t> all;
    for (std::size_t j : a) all.insert(j);
    for (std::size_t j : b) EXPECT_TRUE(all.insert(j).second) << "joint " << j << " in both sets";
    EXPECT_EQ(all.size(), kNumJoints);
    EXPECT_LT(*all.rbegin(), kNumJoints);
  };
  check_cover(p.hands, p.other_vs_hands);
  check_cover(p.legs_feet, p.other_vs_feet);
  check_cover(p.upper, p.lower);
  for (const auto* set : {&p.hands, &p.legs_feet, &p.other_vs_hands, &p.other_vs_feet, &p.upper, &p.lower,
                          &p.wrist_ankle, &p.up_down})
    EXPECT_FALSE(set->empty());
  EXPECT_EQ(p.lower, (std::vector<std::size_t>{0, 12, 13, 14, 15, 16, 17, 18, 19}));
}

TEST(Partitions, ComplementValidatesInput) {
  EXPECT_THROW(complement({25}), std::out_of_range);
  EXPECT_THROW(complement({3, 3}), std::invalid_argument);
  EXPECT_EQ(complement({}).size(), kNumJoints);
}

TEST(Synth, DeterministicPerClassAndSeed) {
  for (std::size_t c = 0; c < kSynthClasses; ++c) {
    const auto a = synth_generate(c, 99, 32), b = synth_generate(c, 99, 32), d = synth_generate(c, 100, 32);
    EXPECT_EQ(a.coords, b.coords);
    EXPECT_NE(a.coords, d.coords);
    EXPECT_EQ(a.label, c);
    EXPECT_TRUE(a.coords.all_finite());
    EXPECT_EQ(a.coords.shape(), (Shape{1, 32, 25, 3}));
  }
  EXPECT_THROW(synth_generate(8, 0, 32), std::invalid_argument);
  EXPECT_THROW(synth_generate(0, 0, 1), std::invalid_argument);
}

TEST(Synth, ClassZeroEnergyConcentratesInHands) {
  const auto& p = default_partitions();
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto var = joint_variance(synth_generate(0, seed, 64));
    EXPECT_GE(mean_over(var, p.hands), 5.0 * mean_over(var, p.legs_feet)) << "seed " << seed;
  }
}

TEST(Synth, EachClassMovesItsOwnPartitionMost) {
  // centered joint stream removes the global placement
  const auto& p = default_partitions();
  const std::vector<std::size_t> head = {Neck, Head};
  const std::vector<std::size_t> feet = {FootLeft, FootRight};
  const std::vector<std::size_t> right_leg = {KneeRight, AnkleRight, FootRight};
  const std::vector<std::size_t> left_leg = {KneeLeft, AnkleLeft, FootLeft};
  for (std::uint64_t seed : {3, 8}) {
    auto centered = [&](std::size_t c) {
      auto s = synth_generate(c, seed, 64);
      s.coords = derive_stream(s, StreamKind::Joint);
      return joint_variance(s);
    };
    auto v0 = centered(0);
    EXPECT_GT(mean_over(v0, p.hands), 5.0 * mean_over(v0, p.lower));
    auto v1 = centered(1);
    EXPECT_GT(mean_over(v1, right_leg), 5.0 * mean_over(v1, left_leg));
    auto v3 = centered(3);
    EXPECT_GT(mean_over(v3, p.legs_feet), 5.0 * mean_over(v3, p.hands));
    auto v5 = centered(5);
    EXPECT_GT(mean_over(v5, feet), 5.0 * mean_over(v5, p.upper));
    auto v6 = centered(6);
    EXPECT_GT(mean_over(v6, head), 5.0 * mean_over(v6, p.hands));
    auto v2 = centered(2), v7 = centered(7);
    EXPECT_GT(mean_over(v2, p.upper), 5.0 * mean_over(v2, p.legs_feet));
    EXPECT_GT(mean_over(v7, p.upper), 5.0 * mean_over(v7, p.legs_feet));
  }
}

TEST(Manifest, ReadFilterLoad) {
  const auto dir = std::filesystem::temp_directory_path() / "stepcat_manifest_test";
  std::filesystem::create_directories(dir);
  save_ntu_skeleton(synth_generate(4, 1, 12), dir / "a.skeleton");
  {
    std::ofstream out(dir / "manifest.json");
    out << R"([{"path": "a.skeleton", "label": 4, "split": "test"},
               {"seed": 17, "label": 2, "frames": 10}])";
  }
  const auto m = read_manifest(dir / "manifest.json");
  EXPECT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.class_count, 5u);
  const auto test = m.filter("test");
  ASSERT_EQ(test.entries.size(), 1u);
  EXPECT_EQ(test.load(0).coords, synth_generate(4, 1, 12).coords);
  const auto train = m.filter("train");
  EXPECT_EQ(train.load(0).coords, synth_generate(2, 17, 10).coords);
  EXPECT_EQ(train.load(0).label, 2u);

  // serialization reproduces the entries
  {
    std::ofstream out(dir / "copy.json");
    out << manifest_to_json(m);
  }
  const auto again = read_manifest(dir / "copy.json");
  EXPECT_EQ(again.entries.size(), 2u);
  EXPECT_EQ(*again.entries[1].seed, 17u);
  std::filesystem::remove_all(dir);
}

TEST(Manifest, LabelsMustBeBelowClassCount) {
  DatasetManifest m;
  m.class_count = 3;
  m.entries.push_back({std::nullopt, 1, 3, 16, "train"});
  EXPECT_THROW(validate_manifest(m), std::invalid_argument);
  m.entries[0].label = 2;
  EXPECT_NO_THROW(validate_manifest(m));
  m.entries[0].seed.reset();
  EXPECT_THROW(validate_manifest(m), std::invalid_argument);
}

}  // namespace
}  // namespace stepcat::skeleton
