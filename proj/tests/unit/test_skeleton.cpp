// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "arrn/skeleton.hpp"

using namespace arrn;

namespace {

SkeletonFrame random_frame(std::size_t joints, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  SkeletonFrame f;
  for (std::size_t i = 0; i < joints; ++i) f.joints.push_back({d(rng), d(rng), d(rng)});
  return f;
}

SkeletonFrame shifted(SkeletonFrame f, Joint offset) {
  for (auto& j : f.joints) {
    for (int a = 0; a < 3; ++a) j[a] += offset[a];
  }
  return f;
}

double frame_diff(const SkeletonFrame& a, const SkeletonFrame& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.joints.size(); ++i) {
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(a.joints[i][k] - b.joints[i][k]));
  }
  return worst;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / ("arrn_test_skeleton_" + name);
  std::ofstream(path, std::ios::binary) << content;
  return path;
}

const DatasetSpec kSpec3{3, 4, {0}};

}  // namespace

TEST_CASE("normalize_frame examples") {
  const DatasetSpec spec{4, 2, {1, 3}};
  const SkeletonFrame ones{{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}}};
  CHECK(normalize_frame(ones, spec).is_zero());

  std::mt19937_64 rng(1);
  const SkeletonFrame f = random_frame(4, rng);
  const SkeletonFrame centred = normalize_frame(f, spec);
  CHECK(frame_diff(normalize_frame(centred, spec), centred) <= 1e-12);
  CHECK(frame_diff(normalize_frame(shifted(f, {5, 5, 5}), spec), centred) <= 1e-12);

  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(centred.joints[1][a] + centred.joints[3][a]) <= 1e-12);
  }
}

TEST_CASE("normalize_frame rejects out-of-range references") {
  const SkeletonFrame f{{{0, 0, 0}, {1, 1, 1}}};
  CHECK_THROWS_AS(normalize_frame(f, DatasetSpec{2, 2, {2}}), ConfigError);
  CHECK_THROWS_AS(normalize_frame(f, DatasetSpec{2, 2, {}}), ConfigError);
  CHECK_THROWS_AS((DatasetSpec{3, 2, {0, 3}}.validate()), ConfigError);
}

TEST_CASE("compute_lines examples") {
  const LineFrame two = compute_lines(SkeletonFrame{{{0, 0, 0}, {1, 2, 3}}});
  CHECK(two.lines[0] == std::vector<double>{-1, -2, -3});
  CHECK(two.lines[1] == std::vector<double>{1, 2, 3});

  const LineFrame three = compute_lines(SkeletonFrame{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}});
  CHECK(three.lines[0] == std::vector<double>{-1, 0, 0, 0, -1, 0});

  std::mt19937_64 rng(2);
  const SkeletonFrame f = random_frame(5, rng);
  const LineFrame a = compute_lines(f);
  const LineFrame b = compute_lines(shifted(f, {3.5, -1, 2}));
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(a.lines[i].size() == 12);
    for (std::size_t k = 0; k < 12; ++k) CHECK(std::abs(a.lines[i][k] - b.lines[i][k]) <= 1e-12);
  }

  CHECK_THROWS_AS(compute_lines(SkeletonFrame{{{1, 2, 3}}}), DomainError);
}

TEST_CASE("line blocks are antisymmetric") {
  std::mt19937_64 rng(3);
  const std::size_t J = 6;
  const LineFrame lf = compute_lines(random_frame(J, rng));
  // Block of i toward j sits at position j, or j-1 once past the omitted self-pair.
  auto block = [&](std::size_t i, std::size_t j) { return 3 * (j < i ? j : j - 1); };
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      if (i == j) continue;
      for (int a = 0; a < 3; ++a) CHECK(lf.lines[i][block(i, j) + a] == -lf.lines[j][block(j, i) + a]);
    }
  }
}

TEST_CASE("fix_length pads, keeps and samples") {
  std::mt19937_64 rng(4);
  SkeletonSequence two{{random_frame(3, rng), random_frame(3, rng)}, 1};
  const SkeletonSequence padded = fix_length(two, 4, 9);
  REQUIRE(padded.frames.size() == 4);
  CHECK(padded.frames[0] == two.frames[0]);
  CHECK(padded.frames[1] == two.frames[1]);
  CHECK(padded.frames[2].is_zero());
  CHECK(padded.frames[3].is_zero());
  CHECK(padded.label == 1);

  for (std::uint64_t seed : {0ULL, 1ULL, 77ULL}) CHECK(fix_length(two, 2, seed) == two);

  CHECK_THROWS_AS(fix_length(two, 0, 0), ConfigError);
  CHECK_THROWS_AS(fix_length(SkeletonSequence{}, 4, 0), ContractError);
}

TEST_CASE("sampling keeps original frames in strictly increasing order over 100 seeds") {
  // Each frame carries its own index in the first coordinate.
  SkeletonSequence six;
  for (int t = 0; t < 6; ++t) six.frames.push_back(SkeletonFrame{{{double(t), 0, 0}, {0, 0, 0}}});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SkeletonSequence s = fix_length(six, 4, seed);
    REQUIRE(s.frames.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      const double idx = s.frames[k].joints[0][0];
      REQUIRE(six.frames[static_cast<std::size_t>(idx)] == s.frames[k]);
      if (k > 0) REQUIRE(idx > s.frames[k - 1].joints[0][0]);
    }
  }
}

TEST_CASE("prepare_sequence leaves padding at zero") {
  const DatasetSpec spec{2, 2, {0}};
  const SkeletonSequence seq{{SkeletonFrame{{{1, 1, 1}, {2, 3, 4}}}}, 0};
  const SkeletonSequence p = prepare_sequence(seq, spec, 3, 0);
  CHECK(p.frames[0] == SkeletonFrame{{{0, 0, 0}, {1, 2, 3}}});
  CHECK(p.frames[1].is_zero());
  CHECK(p.frames[2].is_zero());
}

TEST_CASE("load_dataset examples") {
  CHECK(load_dataset(temp_file("empty", ""), kSpec3).empty());

  const auto one = load_dataset(
      temp_file("one", "{\"label\":2,\"frames\":[[[0,0,0],[1,0,0],[0,1,0]],[[0,0,1],[1,1,0],[0,1,1]]]}\n"), kSpec3);
  REQUIRE(one.size() == 1);
  CHECK(one[0].label == 2);
  CHECK(one[0].frames.size() == 2);
  CHECK(one[0].frames[1].joints[2] == Joint{0, 1, 1});

  const std::string good = "{\"label\":0,\"frames\":[[[0,0,0],[1,0,0],[0,1,0]]]}\n";
  const std::string bad = "{\"label\":0,\"frames\":[[[0,0,0],[1,0,0]]]}\n";
  try {
    load_dataset(temp_file("bad", good + "\n" + bad), kSpec3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 3);
    const std::string msg = e.what();
    CHECK(msg.find("expected 3 joints, found 2") != std::string::npos);
  }
}

TEST_CASE("parse_dataset rejects malformed content") {
  CHECK_THROWS_AS(parse_dataset("not json\n", kSpec3), DataError);
  CHECK_THROWS_AS(parse_dataset("{\"label\":4,\"frames\":[[[0,0,0],[1,0,0],[0,1,0]]]}", kSpec3), DataError);
  CHECK_THROWS_AS(parse_dataset("{\"label\":-1,\"frames\":[[[0,0,0],[1,0,0],[0,1,0]]]}", kSpec3), DataError);
  CHECK_THROWS_AS(parse_dataset("{\"label\":0,\"frames\":[]}", kSpec3), DataError);
  CHECK_THROWS_AS(parse_dataset("{\"label\":0,\"frames\":[[[0,0],[1,0,0],[0,1,0]]]}", kSpec3), DataError);
  CHECK_THROWS_AS(parse_dataset("{\"frames\":[[[0,0,0],[1,0,0],[0,1,0]]]}", kSpec3), DataError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/arrn.jsonl", kSpec3), std::runtime_error);
}

TEST_CASE("datasets round-trip through the file format") {
  SyntheticSpec s;
  s.classes = 3;
  s.samples_per_class = 4;
  s.joints = 4;
  s.seed = 12;
  const auto data = generate_synthetic(s);
  const auto path = std::filesystem::temp_directory_path() / "arrn_test_skeleton_roundtrip.jsonl";
  save_dataset(path, data);
  CHECK(load_dataset(path, DatasetSpec{4, 3, {0}}) == data);
}

TEST_CASE("synthetic data examples") {
  SyntheticSpec s;
  s.seed = 5;
  const auto a = generate_synthetic(s);
  CHECK(a == generate_synthetic(s));
  REQUIRE(a.size() == 40);

  std::size_t ones = 0;
  for (const auto& seq : a) {
    ones += seq.label;
    CHECK(seq.frames.size() >= 6);
    CHECK(seq.frames.size() <= 12);
    CHECK(seq.frames.front().joint_count() == 5);
  }
  CHECK(ones == 20);

  s.seed = 6;
  CHECK(generate_synthetic(s) != a);

  s.noise = 0.0;
  for (const auto& seq : generate_synthetic(s)) {
    for (std::size_t t = 0; t < seq.frames.size(); ++t) CHECK(seq.frames[t] == synthetic_template(seq.label, 5, t));
  }
}

TEST_CASE("synthetic data draws both short and long sequences") {
  SyntheticSpec s;
  s.seed = 1;
  bool shorter = false, longer = false;
  for (const auto& seq : generate_synthetic(s)) {
    shorter |= seq.frames.size() < 8;
    longer |= seq.frames.size() > 8;
  }
  CHECK(shorter);
  CHECK(longer);
}

TEST_CASE("synthetic templates differ between classes") {
  for (std::size_t k = 1; k < 6; ++k) {
    double diff = 0.0;
    for (std::size_t t = 0; t < 12; ++t) diff += frame_diff(synthetic_template(0, 5, t), synthetic_template(k, 5, t));
    CHECK(diff > 0.1);
  }
}

TEST_CASE("generate_synthetic preconditions") {
  SyntheticSpec s;
  s.classes = 1;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
  s.classes = 2;
  s.joints = 1;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
}

TEST_CASE("feature stacking is frame-major") {
  const SkeletonSequence seq{{SkeletonFrame{{{0, 0, 0}, {1, 2, 3}}}, SkeletonFrame{{{4, 5, 6}, {7, 8, 9}}}}, 0};
  const Tensor j = joint_features(seq);
  CHECK(j.shape() == Shape{4, 3});
  CHECK(j.at(2, 0) == 4);
  CHECK(j.at(3, 2) == 9);
  const Tensor l = line_features(seq);
  CHECK(l.shape() == Shape{4, 3});
  CHECK(l.at(0, 0) == -1);
  CHECK(l.at(3, 0) == 3);
}
