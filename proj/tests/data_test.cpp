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
#include "prompate/data.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "prompate/rng.hpp"

using namespace prompate;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("prompate_data_" + name);
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.classes = 5;
  spec.channels = 1;
  spec.height = 12;
  spec.width = 12;
  spec.family = PatternFamily::kStripes;
  spec.gap_knob = 0.5;
  spec.noise_level = 0.05;
  spec.count = 60;
  spec.seed = 42;
  return spec;
}

// Mean distance between per-class mean images of two datasets.
double class_mean_distance(const Dataset& a, const Dataset& b) {
  const size_t pixels = a.images.size() / a.size();
  double total = 0.0;
  for (int k = 0; k < a.num_classes; ++k) {
    std::vector<double> mean_a(pixels, 0.0), mean_b(pixels, 0.0);
    size_t na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      if (a.labels[i] != k) continue;
      ++na;
      for (size_t p = 0; p < pixels; ++p) mean_a[p] += a.images[i * pixels + p];
    }
    for (size_t i = 0; i < b.size(); ++i) {
      if (b.labels[i] != k) continue;
      ++nb;
      for (size_t p = 0; p < pixels; ++p) mean_b[p] += b.images[i * pixels + p];
    }
    double d2 = 0.0;
    for (size_t p = 0; p < pixels; ++p) {
      const double diff = mean_a[p] / na - mean_b[p] / nb;
      d2 += diff * diff;
    }
    total += std::sqrt(d2);
  }
  return total / a.num_classes;
}

}  // namespace

TEST_CASE("generate balances classes exactly for divisible counts") {
  SyntheticSpec spec = small_spec();
  spec.count = 10;
  spec.classes = 5;
  const Dataset ds = generate(spec);
  std::vector<int> hist(5, 0);
  for (int y : ds.labels) ++hist[y];
  for (int h : hist) CHECK(h == 2);
}

TEST_CASE("generate is deterministic and bounded") {
  const Dataset a = generate(small_spec());
  const Dataset b = generate(small_spec());
  CHECK(bitwise_equal(a.images, b.images));
  CHECK(a.labels == b.labels);
  CHECK(a.provenance == b.provenance);
  for (double v : a.images.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  SyntheticSpec other = small_spec();
  other.seed = 43;
  CHECK(!bitwise_equal(generate(other).images, a.images));
}

TEST_CASE("gap knob moves class statistics monotonically") {
  SyntheticSpec spec = small_spec();
  spec.count = 200;
  spec.noise_level = 0.0;
  spec.gap_knob = 0.0;
  const Dataset base = generate(spec);
  spec.gap_knob = 0.5;
  const Dataset mid = generate(spec);
  spec.gap_knob = 1.0;
  const Dataset far = generate(spec);

  const double d0 = class_mean_distance(base, base);
  const double d1 = class_mean_distance(base, mid);
  const double d2 = class_mean_distance(base, far);
  CHECK(d0 == 0.0);
  CHECK(d1 > d0);
  CHECK(d2 > d1);
}

TEST_CASE("generate validates its spec") {
  SyntheticSpec spec = small_spec();
  spec.count = 2;  // below class count
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  spec = small_spec();
  spec.gap_knob = 1.5;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("split three is disjoint and covers") {
  SyntheticSpec spec = small_spec();
  spec.count = 100;
  const Dataset full = generate(spec);
  const SplitSets sets = split_three(full, 0.2, 0.1, 7);
  CHECK(sets.private_train.size() == 70);
  CHECK(sets.public_pool.size() == 20);
  CHECK(sets.test.size() == 10);
  CHECK(sets.private_train.split == Split::kPrivateTrain);
  CHECK(sets.public_pool.split == Split::kPublicPool);
  CHECK(sets.test.split == Split::kTest);

  // Every example carries distinct jitter, so per-example fingerprints
  // across the three splits must not overlap.
  auto fingerprints = [](const Dataset& ds) {
    std::set<uint64_t> out;
    for (size_t i = 0; i < ds.size(); ++i) out.insert(fingerprint(ds.image(i)));
    return out;
  };
  const auto fp_priv = fingerprints(sets.private_train);
  const auto fp_pool = fingerprints(sets.public_pool);
  const auto fp_test = fingerprints(sets.test);
  CHECK(fp_priv.size() == 70);
  for (uint64_t f : fp_pool) CHECK(fp_priv.count(f) == 0);
  for (uint64_t f : fp_test) {
    CHECK(fp_priv.count(f) == 0);
    CHECK(fp_pool.count(f) == 0);
  }
}

TEST_CASE("partition sizes and coverage") {
  SyntheticSpec spec = small_spec();
  spec.count = 10;
  const Dataset ds = generate(spec);

  const PartitionPlan plan = partition(ds, 3, 5);
  auto slices = plan.slices();
  CHECK(slices[0].size() == 4);
  CHECK(slices[1].size() == 3);
  CHECK(slices[2].size() == 3);

  std::set<size_t> seen;
  for (const auto& slice : slices) {
    for (size_t i : slice) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == ds.size());

  const PartitionPlan one_each = partition(ds, 10, 5);
  for (const auto& slice : one_each.slices()) CHECK(slice.size() == 1);

  CHECK(partition(ds, 3, 5).assignment == plan.assignment);
  CHECK_THROWS_AS(partition(ds, 11, 5), std::invalid_argument);
}

TEST_CASE("ptns round trip is bitwise") {
  RandomStream rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<size_t> shape;
    const size_t rank = rng.uniform_index(4);  // includes rank-0 scalars
    for (size_t d = 0; d < rank; ++d) shape.push_back(1 + rng.uniform_index(6));
    Tensor t(shape);
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian(0.0, 100.0);
    const auto path = temp_file("roundtrip.ptns");
    save_tensor(path, t, PtnsDtype::kF64);
    const Tensor back = load_tensor(path);
    CHECK(bitwise_equal(t, back));
  }
}

TEST_CASE("ptns scalar and labels round trip") {
  Tensor scalar(std::vector<size_t>{});
  scalar[0] = -3.25;
  const auto path = temp_file("scalar.ptns");
  save_tensor(path, scalar);
  const Tensor back = load_tensor(path);
  CHECK(back.rank() == 0);
  CHECK(back[0] == -3.25);

  const std::vector<int> labels = {0, 3, 65535, 7};
  const auto lpath = temp_file("labels.ptns");
  save_labels(lpath, labels);
  CHECK(load_labels(lpath) == labels);
}

TEST_CASE("ptns detects every single-byte payload corruption") {
  Tensor t({2, 3});
  for (size_t i = 0; i < t.size(); ++i) t[i] = 1.0 + static_cast<double>(i);
  const auto path = temp_file("corrupt.ptns");
  save_tensor(path, t, PtnsDtype::kF64);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  const size_t header = 4 + 2 + 1 + 1 + 2 * 4;
  const size_t payload_len = t.size() * 8;
  for (size_t i = header; i < header + payload_len; ++i) {
    std::string mutated = bytes;
    mutated[i] = static_cast<char>(mutated[i] ^ 0x01);
    const auto mpath = temp_file("mutated.ptns");
    std::ofstream out(mpath, std::ios::binary | std::ios::trunc);
    out.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    out.close();
    try {
      (void)load_tensor(mpath);
      FAIL("corruption at byte " << i << " was not detected");
    } catch (const TensorIoError& e) {
      CHECK(e.kind() == TensorIoError::Kind::kCrcMismatch);
    }
  }
}

TEST_CASE("ptns rejects malformed headers") {
  const auto path = temp_file("bad.ptns");

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOPE" << std::string(12, '\0');
  }
  try {
    (void)load_tensor(path);
    FAIL("bad magic accepted");
  } catch (const TensorIoError& e) {
    CHECK(e.kind() == TensorIoError::Kind::kBadMagic);
  }

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "PTNS";
    const char version[2] = {9, 0};
    out.write(version, 2);
    out << std::string(10, '\0');
  }
  try {
    (void)load_tensor(path);
    FAIL("version 9 accepted");
  } catch (const TensorIoError& e) {
    CHECK(e.kind() == TensorIoError::Kind::kVersionUnsupported);
  }

  Tensor t({4});
  save_tensor(path, t);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 6));
  }
  try {
    (void)load_tensor(path);
    FAIL("truncated file accepted");
  } catch (const TensorIoError& e) {
    CHECK(e.kind() == TensorIoError::Kind::kTruncated);
  }
}

TEST_CASE("csv import") {
  const auto path = temp_file("import.csv");
  {
    std::ofstream out(path, std::ios::trunc);
    out << "p0,p1,p2,p3,label\n";
    out << "0.0,0.25,0.5,0.75,1\n";
    out << "1.0,0.75,0.5,0.25,0\n";
  }
  const Dataset ds = load_csv(path, 1, 2, 2, 2);
  CHECK(ds.size() == 2);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.images.at4(0, 0, 0, 1) == 0.25);
  CHECK(ds.images.at4(1, 0, 1, 1) == 0.25);

  {
    std::ofstream out(path, std::ios::trunc);
    out << "p0,p1,p2,p3,label\n";
    out << "0.0,0.25,0.5,1\n";  // missing a feature
  }
  CHECK_THROWS(load_csv(path, 1, 2, 2, 2));
}
