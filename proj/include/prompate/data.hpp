// Copyright 2026 the prompate authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "prompate/tensor.hpp"

namespace prompate {

enum class Split { kUnsplit, kPrivateTrain, kPublicPool, kTest };

std::string to_string(Split s);

struct Dataset {
  Tensor images;            // N x C x H x W
  std::vector<int> labels;  // length N
  int num_classes = 0;
  Split split = Split::kUnsplit;
  uint64_t provenance = 0;  // generator spec hash

  size_t size() const { return labels.size(); }
  Tensor image(size_t i) const;  // copy of one C x H x W example
  void validate() const;
};

enum class PatternFamily { kBlobs, kStripes, kChecker };

std::string to_string(PatternFamily f);
PatternFamily pattern_family_from_string(const std::string& s);

// Generator spec for a synthetic classification task. gap_knob blends the
// rendered pattern between the canonical blob statistics shared with the
// source task (0) and the declared family at its own statistics (1).
struct SyntheticSpec {
  int classes = 10;
  int channels = 1;
  int height = 16;
  int width = 16;
  PatternFamily family = PatternFamily::kBlobs;
  double gap_knob = 0.0;
  double noise_level = 0.05;
  int count = 1000;
  uint64_t seed = 0;

  void validate() const;
  uint64_t hash() const;
};

// Deterministic in spec.seed; classes balanced within one example; pixel
// values clamped to [0, 1].
Dataset generate(const SyntheticSpec& spec);

struct SplitSets {
  Dataset private_train;
  Dataset public_pool;
  Dataset test;
};

// Seed-shuffled three-way split. Pool and test sizes are floor(frac * N);
// the private split absorbs the remainder.
SplitSets split_three(const Dataset& full, double public_frac,
                      double test_frac, uint64_t seed);

struct PartitionPlan {
  int num_teachers = 1;
  std::vector<int> assignment;  // example index -> teacher index

  std::vector<std::vector<size_t>> slices() const;
};

// Round-robin over a seed-shuffled permutation: slices are disjoint, cover
// the dataset, and differ in size by at most one (earlier teachers absorb
// the remainder).
PartitionPlan partition(const Dataset& dataset, int num_teachers,
                        uint64_t seed);

// --- PTNS tensor file format -----------------------------------------------
// magic "PTNS" | version u16 LE = 1 | dtype u8 | ndim u8 | ndim x u32 LE dims
// | row-major LE payload | CRC32 of payload (u32 LE).
enum class PtnsDtype : uint8_t { kF32 = 0, kF64 = 1, kU16 = 2 };

class TensorIoError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kVersionUnsupported, kCrcMismatch, kTruncated, kBadData };
  TensorIoError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_tensor(const std::filesystem::path& path, const Tensor& t,
                 PtnsDtype dtype = PtnsDtype::kF64);
Tensor load_tensor(const std::filesystem::path& path,
                   PtnsDtype* dtype_out = nullptr);

void save_labels(const std::filesystem::path& path,
                 const std::vector<int>& labels);
std::vector<int> load_labels(const std::filesystem::path& path);

// CSV with a header row, one example per row, label in the last column.
// Feature count must equal channels * height * width.
Dataset load_csv(const std::filesystem::path& path, int channels, int height,
                 int width, int num_classes);

}  // namespace prompate
