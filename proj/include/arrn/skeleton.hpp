// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "arrn/tensor.hpp"

namespace arrn {

/// Malformed dataset file content. Carries the 1-based line number.
class DataError : public std::runtime_error {
 public:
  DataError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

using Joint = std::array<double, 3>;

/// One skeleton: J joints in capture order.
struct SkeletonFrame {
  std::vector<Joint> joints;

  std::size_t joint_count() const { return joints.size(); }
  bool is_zero() const;
  friend bool operator==(const SkeletonFrame&, const SkeletonFrame&) = default;
};

/// Per joint i, the 3(J-1) differences c_i - c_j for j != i, ascending j.
struct LineFrame {
  std::vector<std::vector<double>> lines;
};

struct SkeletonSequence {
  std::vector<SkeletonFrame> frames;
  std::size_t label = 0;
  friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;
};

struct DatasetSpec {
  std::size_t joints = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> hip_reference_indices;

  /// Throws ConfigError when the reference set is empty or out of range.
  void validate() const;
};

/// Translates every joint by the negative mean of the reference joints.
SkeletonFrame normalize_frame(const SkeletonFrame& frame, const DatasetSpec& spec);

/// Throws DomainError when the frame has fewer than two joints.
LineFrame compute_lines(const SkeletonFrame& frame);

/// Zero-pads short sequences; keeps a random ascending subset of long ones.
SkeletonSequence fix_length(const SkeletonSequence& seq, std::size_t frames, std::uint64_t seed);

/// Normalizes the original frames, then fixes the length. Padding stays zero.
SkeletonSequence prepare_sequence(const SkeletonSequence& seq, const DatasetSpec& spec, std::size_t frames,
                                  std::uint64_t seed);

/// Reads a JSON-lines dataset. Blank lines are skipped.
std::vector<SkeletonSequence> load_dataset(const std::filesystem::path& path, const DatasetSpec& spec);
std::vector<SkeletonSequence> parse_dataset(const std::string& text, const DatasetSpec& spec);

void save_dataset(const std::filesystem::path& path, const std::vector<SkeletonSequence>& data);
std::string serialize_dataset(const std::vector<SkeletonSequence>& data);

struct SyntheticSpec {
  std::size_t classes = 2;
  std::size_t samples_per_class = 20;
  std::size_t joints = 5;
  std::size_t min_frames = 6;
  std::size_t max_frames = 12;
  double noise = 0.01;
  std::uint64_t seed = 0;
};

/// Noise-free frame t of class `label`: a fixed rest pose with joint
/// (label mod J) oscillating along axis (label mod 3) at a class frequency.
SkeletonFrame synthetic_template(std::size_t label, std::size_t joints, std::size_t t);

/// Samples are interleaved by class: sample s of class k sits at s*K + k.
std::vector<SkeletonSequence> generate_synthetic(const SyntheticSpec& spec);

/// Stacks a prepared sequence into the joint-stream input [T*J x 3].
Tensor joint_features(const SkeletonSequence& seq);
/// Stacks a prepared sequence into the line-stream input [T*J x 3(J-1)].
Tensor line_features(const SkeletonSequence& seq);

}  // namespace arrn
