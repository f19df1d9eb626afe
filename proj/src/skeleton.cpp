// SPDX-License-Identifier: Apache-2.0
#include "arrn/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "arrn/random.hpp"

namespace arrn {

using nlohmann::json;

bool SkeletonFrame::is_zero() const {
  return std::all_of(joints.begin(), joints.end(), [](const Joint& j) { return j == Joint{0, 0, 0}; });
}

void DatasetSpec::validate() const {
  if (hip_reference_indices.empty()) throw ConfigError("hip_reference_indices must not be empty");
  for (auto idx : hip_reference_indices) {
    if (idx >= joints) {
      throw ConfigError("hip reference index " + std::to_string(idx) + " out of range for " +
                        std::to_string(joints) + " joints");
    }
  }
}

SkeletonFrame normalize_frame(const SkeletonFrame& frame, const DatasetSpec& spec) {
  if (spec.hip_reference_indices.empty()) throw ConfigError("hip_reference_indices must not be empty");
  Joint centre{0, 0, 0};
  for (auto idx : spec.hip_reference_indices) {
    if (idx >= frame.joint_count()) {
      throw ConfigError("hip reference index " + std::to_string(idx) + " out of range for a frame of " +
                        std::to_string(frame.joint_count()) + " joints");
    }
    for (int a = 0; a < 3; ++a) centre[a] += frame.joints[idx][a];
  }
  const double n = static_cast<double>(spec.hip_reference_indices.size());
  for (auto& c : centre) c /= n;
  SkeletonFrame out = frame;
  for (auto& j : out.joints) {
    for (int a = 0; a < 3; ++a) j[a] -= centre[a];
  }
  return out;
}

LineFrame compute_lines(const SkeletonFrame& frame) {
  const std::size_t J = frame.joint_count();
  if (J < 2) throw DomainError("line features need at least 2 joints, got " + std::to_string(J));
  LineFrame out;
  out.lines.resize(J);
  for (std::size_t i = 0; i < J; ++i) {
    auto& row = out.lines[i];
    row.reserve(3 * (J - 1));
    for (std::size_t j = 0; j < J; ++j) {
      if (j == i) continue;
      for (int a = 0; a < 3; ++a) row.push_back(frame.joints[i][a] - frame.joints[j][a]);
    }
  }
  return out;
}

SkeletonSequence fix_length(const SkeletonSequence& seq, std::size_t frames, std::uint64_t seed) {
  if (frames == 0) throw ConfigError("sequence length T must be positive");
  if (seq.frames.empty()) throw ContractError("fix_length: empty sequence");
  const std::size_t n = seq.frames.size();
  SkeletonSequence out;
  out.label = seq.label;
  if (n <= frames) {
    out.frames = seq.frames;
    const SkeletonFrame zero{std::vector<Joint>(seq.frames.front().joint_count(), Joint{0, 0, 0})};
    out.frames.resize(frames, zero);
    return out;
  }
  std::vector<std::size_t> all(n), kept;
  std::iota(all.begin(), all.end(), std::size_t{0});
  kept.reserve(frames);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(kept), frames, rng);
  out.frames.reserve(frames);
  for (auto idx : kept) out.frames.push_back(seq.frames[idx]);
  return out;
}

SkeletonSequence prepare_sequence(const SkeletonSequence& seq, const DatasetSpec& spec, std::size_t frames,
                                  std::uint64_t seed) {
  SkeletonSequence normalized;
  normalized.label = seq.label;
  normalized.frames.reserve(seq.frames.size());
  for (const auto& f : seq.frames) normalized.frames.push_back(normalize_frame(f, spec));
  return fix_length(normalized, frames, seed);
}

// ---------------------------------------------------------------- JSON lines

namespace {

SkeletonSequence parse_line(const std::string& line, std::size_t lineno, const DatasetSpec& spec) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(lineno, std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("label") || !doc.contains("frames")) {
    throw DataError(lineno, "expected an object with \"label\" and \"frames\"");
  }
  const auto& label = doc["label"];
  if (!label.is_number_integer() || label.get<long long>() < 0) {
    throw DataError(lineno, "label must be a non-negative integer");
  }
  SkeletonSequence seq;
  seq.label = label.get<std::size_t>();
  if (spec.classes && seq.label >= spec.classes) {
    throw DataError(lineno, "label " + std::to_string(seq.label) + " outside [0, " + std::to_string(spec.classes) +
                                ")");
  }
  const auto& frames = doc["frames"];
  if (!frames.is_array() || frames.empty()) throw DataError(lineno, "\"frames\" must be a nonempty array");
  seq.frames.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (!f.is_array()) throw DataError(lineno, "frame " + std::to_string(t) + " is not an array");
    if (f.size() != spec.joints) {
      throw DataError(lineno, "frame " + std::to_string(t) + ": expected " + std::to_string(spec.joints) +
                                  " joints, found " + std::to_string(f.size()));
    }
    SkeletonFrame frame;
    frame.joints.reserve(f.size());
    for (const auto& j : f) {
      if (!j.is_array() || j.size() != 3 || !std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_number(); })) {
        throw DataError(lineno, "frame " + std::to_string(t) + ": each joint must be [x, y, z]");
      }
      Joint joint{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
      if (!std::all_of(joint.begin(), joint.end(), [](double x) { return std::isfinite(x); })) {
        throw DataError(lineno, "frame " + std::to_string(t) + ": non-finite coordinate");
      }
      frame.joints.push_back(joint);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace

std::vector<SkeletonSequence> parse_dataset(const std::string& text, const DatasetSpec& spec) {
  std::vector<SkeletonSequence> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_line(line, lineno, spec));
  }
  return out;
}

std::vector<SkeletonSequence> load_dataset(const std::filesystem::path& path, const DatasetSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), spec);
}

std::string serialize_dataset(const std::vector<SkeletonSequence>& data) {
  std::string out;
  for (const auto& seq : data) {
    json frames = json::array();
    for (const auto& f : seq.frames) {
      json joints = json::array();
      for (const auto& j : f.joints) joints.push_back({j[0], j[1], j[2]});
      frames.push_back(std::move(joints));
    }
    json doc = {{"label", seq.label}, {"frames", std::move(frames)}};
    out += doc.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<SkeletonSequence>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out << serialize_dataset(data);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------- synthetic

SkeletonFrame synthetic_template(std::size_t label, std::size_t joints, std::size_t t) {
  constexpr double kAmplitude = 0.5;
  constexpr double kPeriod = 12.0;
  SkeletonFrame frame;
  frame.joints.resize(joints);
  for (std::size_t i = 0; i < joints; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(joints);
    frame.joints[i] = {0.3 * std::cos(angle), 0.1 * static_cast<double>(i), 0.3 * std::sin(angle)};
  }
  const double cycles = 1.0 + 0.25 * static_cast<double>(label);
  const double phase = 2.0 * std::numbers::pi * cycles * static_cast<double>(t) / kPeriod;
  frame.joints[label % joints][label % 3] += kAmplitude * std::sin(phase + 0.5);
  return frame;
}

std::vector<SkeletonSequence> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.joints < 2) throw ConfigError("synthetic data needs at least 2 joints");
  if (spec.min_frames == 0 || spec.min_frames > spec.max_frames) {
    throw ConfigError("frame range must satisfy 1 <= min_frames <= max_frames");
  }
  if (!(spec.noise >= 0.0)) throw ConfigError("noise scale must be non-negative");
  std::mt19937_64 rng(derive_seed(spec.seed, {0x5e}));
  std::uniform_int_distribution<std::size_t> length(spec.min_frames, spec.max_frames);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<SkeletonSequence> out;
  out.reserve(spec.classes * spec.samples_per_class);
  for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
    for (std::size_t k = 0; k < spec.classes; ++k) {
      SkeletonSequence seq;
      seq.label = k;
      const std::size_t n = length(rng);
      for (std::size_t t = 0; t < n; ++t) {
        SkeletonFrame f = synthetic_template(k, spec.joints, t);
        if (spec.noise > 0.0) {
          for (auto& j : f.joints) {
            for (auto& c : j) c += spec.noise * gauss(rng);
          }
        }
        seq.frames.push_back(std::move(f));
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

Tensor joint_features(const SkeletonSequence& seq) {
  if (seq.frames.empty()) throw ContractError("joint_features: empty sequence");
  const std::size_t J = seq.frames.front().joint_count();
  Tensor out({seq.frames.size() * J, 3});
  std::size_t r = 0;
  for (const auto& f : seq.frames) {
    if (f.joint_count() != J) throw DimensionError("joint_features: ragged frames");
    for (const auto& j : f.joints) {
      for (int a = 0; a < 3; ++a) out.at(r, a) = j[a];
      ++r;
    }
  }
  return out;
}

Tensor line_features(const SkeletonSequence& seq) {
  if (seq.frames.empty()) throw ContractError("line_features: empty sequence");
  const std::size_t J = seq.frames.front().joint_count();
  const std::size_t width = 3 * (J - 1);
  Tensor out({seq.frames.size() * J, width});
  std::size_t r = 0;
  for (const auto& f : seq.frames) {
    if (f.joint_count() != J) throw DimensionError("line_features: ragged frames");
    const LineFrame lf = compute_lines(f);
    for (const auto& row : lf.lines) {
      std::copy(row.begin(), row.end(), &out.at(r, 0));
      ++r;
    }
  }
  return out;
}

}  // namespace arrn
