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

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "prompate/rng.hpp"

namespace prompate {

namespace {

// Class-conditional pattern parameters. Canonical blob parameters define the
// look shared with the source task; the alternative parameters define the
// fully-shifted target look selected by gap_knob = 1. Each example draws its
// own instance around the class parameters, so a handful of examples never
// pins down the class template.
struct BlobParams {
  double cx[2], cy[2], width[2], amp[2];
};

BlobParams sample_blob_params(RandomStream& rng) {
  BlobParams p;
  for (int i = 0; i < 2; ++i) {
    p.cx[i] = rng.uniform(0.2, 0.8);
    p.cy[i] = rng.uniform(0.2, 0.8);
    p.width[i] = rng.uniform(0.10, 0.18);
    p.amp[i] = rng.uniform(0.7, 1.0);
  }
  return p;
}

BlobParams instantiate_blobs(const BlobParams& p, RandomStream& rng) {
  BlobParams inst;
  for (int i = 0; i < 2; ++i) {
    inst.cx[i] = p.cx[i] + rng.uniform(-0.10, 0.10);
    inst.cy[i] = p.cy[i] + rng.uniform(-0.10, 0.10);
    inst.width[i] = p.width[i] * rng.uniform(0.8, 1.25);
    inst.amp[i] = p.amp[i] * rng.uniform(0.85, 1.15);
  }
  return inst;
}

double render_blobs(const BlobParams& p, double x, double y) {
  double v = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double dx = x - p.cx[i];
    const double dy = y - p.cy[i];
    v += p.amp[i] * std::exp(-(dx * dx + dy * dy) /
                             (2.0 * p.width[i] * p.width[i]));
  }
  return v;
}

struct StripeParams {
  double theta, freq, phase;
};

StripeParams sample_stripe_params(RandomStream& rng) {
  return {rng.uniform(0.0, std::numbers::pi), rng.uniform(2.0, 5.0), 0.0};
}

// Orientation and frequency carry the class; the phase is uninformative.
StripeParams instantiate_stripes(const StripeParams& p, RandomStream& rng) {
  return {p.theta + rng.uniform(-0.15, 0.15), p.freq * rng.uniform(0.9, 1.1),
          rng.uniform(0.0, 2.0 * std::numbers::pi)};
}

double render_stripes(const StripeParams& p, double x, double y) {
  const double u = x * std::cos(p.theta) + y * std::sin(p.theta);
  return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * p.freq * u + p.phase);
}

struct CheckerParams {
  int nx, ny;
  double ox, oy;
};

CheckerParams sample_checker_params(RandomStream& rng) {
  return {2 + static_cast<int>(rng.uniform_index(4)),
          2 + static_cast<int>(rng.uniform_index(4)), 0.0, 0.0};
}

// Cell counts carry the class; the grid offset is uninformative.
CheckerParams instantiate_checker(const CheckerParams& p, RandomStream& rng) {
  return {p.nx, p.ny, rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
}

double render_checker(const CheckerParams& p, double x, double y) {
  const long cx = static_cast<long>(std::floor(x * p.nx + p.ox));
  const long cy = static_cast<long>(std::floor(y * p.ny + p.oy));
  return ((cx + cy) % 2 + 2) % 2 == 0 ? 0.0 : 1.0;
}

uint32_t crc32_of(const unsigned char* data, size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<uint32_t>(crc32(crc, data, static_cast<uInt>(len)));
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

size_t dtype_width(PtnsDtype d) {
  switch (d) {
    case PtnsDtype::kF32: return 4;
    case PtnsDtype::kF64: return 8;
    case PtnsDtype::kU16: return 2;
  }
  throw TensorIoError(TensorIoError::Kind::kBadData, "unknown dtype");
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kUnsplit: return "unsplit";
    case Split::kPrivateTrain: return "private-train";
    case Split::kPublicPool: return "public-pool";
    case Split::kTest: return "test";
  }
  return "?";
}

std::string to_string(PatternFamily f) {
  switch (f) {
    case PatternFamily::kBlobs: return "blobs";
    case PatternFamily::kStripes: return "stripes";
    case PatternFamily::kChecker: return "checker";
  }
  return "?";
}

PatternFamily pattern_family_from_string(const std::string& s) {
  if (s == "blobs") return PatternFamily::kBlobs;
  if (s == "stripes") return PatternFamily::kStripes;
  if (s == "checker") return PatternFamily::kChecker;
  throw std::invalid_argument("unknown pattern family: " + s);
}

Tensor Dataset::image(size_t i) const {
  const size_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out({c, h, w});
  const size_t stride = c * h * w;
  std::memcpy(out.data(), images.data() + i * stride, stride * sizeof(double));
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("dataset images must be N x C x H x W");
  if (images.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset labels length must equal image count");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("dataset label out of range");
    }
  }
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("spec classes must be >= 2");
  if (channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("spec dims must be positive");
  }
  if (count < classes) throw std::invalid_argument("spec count must be >= classes");
  if (gap_knob < 0.0 || gap_knob > 1.0) {
    throw std::invalid_argument("spec gap_knob must lie in [0, 1]");
  }
  if (noise_level < 0.0) throw std::invalid_argument("spec noise_level must be >= 0");
}

uint64_t SyntheticSpec::hash() const {
  uint64_t h = hash_string("synthetic-spec-v1");
  auto mix = [&h](const void* p, size_t n) { h = hash_bytes(p, n, h); };
  mix(&classes, sizeof(classes));
  mix(&channels, sizeof(channels));
  mix(&height, sizeof(height));
  mix(&width, sizeof(width));
  const int fam = static_cast<int>(family);
  mix(&fam, sizeof(fam));
  mix(&gap_knob, sizeof(gap_knob));
  mix(&noise_level, sizeof(noise_level));
  mix(&count, sizeof(count));
  mix(&seed, sizeof(seed));
  return h;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const size_t n = static_cast<size_t>(spec.count);
  const size_t c = static_cast<size_t>(spec.channels);
  const size_t h = static_cast<size_t>(spec.height);
  const size_t w = static_cast<size_t>(spec.width);

  std::vector<BlobParams> base(spec.classes);
  std::vector<BlobParams> alt_blobs(spec.classes);
  std::vector<StripeParams> alt_stripes(spec.classes);
  std::vector<CheckerParams> alt_checker(spec.classes);
  for (int k = 0; k < spec.classes; ++k) {
    RandomStream crng(derive_seed(spec.seed, "class-base", k));
    base[k] = sample_blob_params(crng);
    RandomStream arng(derive_seed(spec.seed, "class-alt", k));
    switch (spec.family) {
      case PatternFamily::kBlobs: alt_blobs[k] = sample_blob_params(arng); break;
      case PatternFamily::kStripes: alt_stripes[k] = sample_stripe_params(arng); break;
      case PatternFamily::kChecker: alt_checker[k] = sample_checker_params(arng); break;
    }
  }

  Dataset ds;
  ds.images = Tensor({n, c, h, w});
  ds.labels.resize(n);
  ds.num_classes = spec.classes;
  ds.split = Split::kUnsplit;
  ds.provenance = spec.hash();

  const double g = spec.gap_knob;
  for (size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    ds.labels[i] = label;
    RandomStream erng(derive_seed(spec.seed, "example", i));
    const BlobParams base_inst = instantiate_blobs(base[label], erng);
    BlobParams blob_inst;
    StripeParams stripe_inst;
    CheckerParams checker_inst;
    switch (spec.family) {
      case PatternFamily::kBlobs:
        blob_inst = instantiate_blobs(alt_blobs[label], erng);
        break;
      case PatternFamily::kStripes:
        stripe_inst = instantiate_stripes(alt_stripes[label], erng);
        break;
      case PatternFamily::kChecker:
        checker_inst = instantiate_checker(alt_checker[label], erng);
        break;
    }
    for (size_t ch = 0; ch < c; ++ch) {
      for (size_t yy = 0; yy < h; ++yy) {
        for (size_t xx = 0; xx < w; ++xx) {
          const double x = (xx + 0.5) / w;
          const double y = (yy + 0.5) / h;
          double v = (1.0 - g) * render_blobs(base_inst, x, y);
          if (g > 0.0) {
            double alt = 0.0;
            switch (spec.family) {
              case PatternFamily::kBlobs:
                alt = render_blobs(blob_inst, x, y);
                break;
              case PatternFamily::kStripes:
                alt = render_stripes(stripe_inst, x, y);
                break;
              case PatternFamily::kChecker:
                alt = render_checker(checker_inst, x, y);
                break;
            }
            v += g * alt;
          }
          v += spec.noise_level * erng.gaussian();
          ds.images.at4(i, ch, yy, xx) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return ds;
}

namespace {

Dataset take_subset(const Dataset& full, const std::vector<size_t>& idx,
                    Split split) {
  const size_t c = full.images.dim(1), h = full.images.dim(2),
               w = full.images.dim(3);
  Dataset out;
  out.images = Tensor({idx.size(), c, h, w});
  out.labels.resize(idx.size());
  out.num_classes = full.num_classes;
  out.split = split;
  out.provenance = full.provenance;
  const size_t stride = c * h * w;
  for (size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(out.images.data() + i * stride,
                full.images.data() + idx[i] * stride, stride * sizeof(double));
    out.labels[i] = full.labels[idx[i]];
  }
  return out;
}

}  // namespace

SplitSets split_three(const Dataset& full, double public_frac,
                      double test_frac, uint64_t seed) {
  if (public_frac < 0.0 || test_frac < 0.0 || public_frac + test_frac >= 1.0) {
    throw std::invalid_argument("split fractions must be nonnegative and sum below 1");
  }
  const size_t n = full.size();
  RandomStream rng(derive_seed(seed, "split", 0));
  std::vector<size_t> idx = shuffled_indices(n, rng);
  const size_t n_pool = static_cast<size_t>(std::floor(public_frac * n));
  const size_t n_test = static_cast<size_t>(std::floor(test_frac * n));
  const size_t n_priv = n - n_pool - n_test;
  SplitSets out;
  out.private_train = take_subset(
      full, {idx.begin(), idx.begin() + n_priv}, Split::kPrivateTrain);
  out.public_pool = take_subset(
      full, {idx.begin() + n_priv, idx.begin() + n_priv + n_pool},
      Split::kPublicPool);
  out.test = take_subset(full, {idx.begin() + n_priv + n_pool, idx.end()},
                         Split::kTest);
  return out;
}

std::vector<std::vector<size_t>> PartitionPlan::slices() const {
  std::vector<std::vector<size_t>> out(num_teachers);
  for (size_t i = 0; i < assignment.size(); ++i) {
    out[assignment[i]].push_back(i);
  }
  return out;
}

PartitionPlan partition(const Dataset& dataset, int num_teachers,
                        uint64_t seed) {
  if (num_teachers < 1) throw std::invalid_argument("num_teachers must be >= 1");
  const size_t n = dataset.size();
  if (static_cast<size_t>(num_teachers) > n) {
    throw std::invalid_argument("num_teachers exceeds dataset size");
  }
  RandomStream rng(derive_seed(seed, "partition", 0));
  std::vector<size_t> perm = shuffled_indices(n, rng);
  PartitionPlan plan;
  plan.num_teachers = num_teachers;
  plan.assignment.resize(n);
  for (size_t i = 0; i < n; ++i) {
    plan.assignment[perm[i]] = static_cast<int>(i % num_teachers);
  }
  return plan;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t,
                 PtnsDtype dtype) {
  std::string buf;
  buf.append("PTNS");
  put_u16(buf, 1);
  buf.push_back(static_cast<char>(dtype));
  buf.push_back(static_cast<char>(t.rank()));
  for (size_t d : t.shape()) {
    if (d > 0xffffffffULL) {
      throw TensorIoError(TensorIoError::Kind::kBadData, "dimension too large");
    }
    put_u32(buf, static_cast<uint32_t>(d));
  }

  std::string payload;
  payload.reserve(t.size() * dtype_width(dtype));
  for (size_t i = 0; i < t.size(); ++i) {
    switch (dtype) {
      case PtnsDtype::kF32: {
        const float f = static_cast<float>(t[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(payload, bits);
        break;
      }
      case PtnsDtype::kF64: {
        uint64_t bits;
        const double d = t[i];
        std::memcpy(&bits, &d, 8);
        put_u32(payload, static_cast<uint32_t>(bits & 0xffffffffULL));
        put_u32(payload, static_cast<uint32_t>(bits >> 32));
        break;
      }
      case PtnsDtype::kU16: {
        const double d = t[i];
        if (d < 0 || d > 65535 || d != std::floor(d)) {
          throw TensorIoError(TensorIoError::Kind::kBadData,
                              "value not representable as u16");
        }
        put_u16(payload, static_cast<uint16_t>(d));
        break;
      }
    }
  }
  buf.append(payload);
  put_u32(buf, crc32_of(reinterpret_cast<const unsigned char*>(payload.data()),
                        payload.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path, PtnsDtype* dtype_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const size_t len = buf.size();

  if (len < 8) throw TensorIoError(TensorIoError::Kind::kTruncated, "file too short");
  if (std::memcmp(p, "PTNS", 4) != 0) {
    throw TensorIoError(TensorIoError::Kind::kBadMagic, "bad magic");
  }
  const uint16_t version = get_u16(p + 4);
  if (version != 1) {
    throw TensorIoError(TensorIoError::Kind::kVersionUnsupported,
                        "unsupported version " + std::to_string(version));
  }
  const uint8_t dtype_raw = p[6];
  if (dtype_raw > 2) {
    throw TensorIoError(TensorIoError::Kind::kBadData, "unknown dtype");
  }
  const PtnsDtype dtype = static_cast<PtnsDtype>(dtype_raw);
  const size_t ndim = p[7];
  size_t off = 8;
  if (len < off + 4 * ndim) {
    throw TensorIoError(TensorIoError::Kind::kTruncated, "truncated dims");
  }
  std::vector<size_t> shape(ndim);
  for (size_t i = 0; i < ndim; ++i) {
    shape[i] = get_u32(p + off);
    off += 4;
  }
  const size_t count = Tensor::shape_size(shape);
  const size_t payload_len = count * dtype_width(dtype);
  if (len < off + payload_len + 4) {
    throw TensorIoError(TensorIoError::Kind::kTruncated, "truncated payload");
  }
  const uint32_t stored_crc = get_u32(p + off + payload_len);
  const uint32_t actual_crc = crc32_of(p + off, payload_len);
  if (stored_crc != actual_crc) {
    throw TensorIoError(TensorIoError::Kind::kCrcMismatch, "payload crc mismatch");
  }

  Tensor t(shape);
  for (size_t i = 0; i < count; ++i) {
    switch (dtype) {
      case PtnsDtype::kF32: {
        const uint32_t bits = get_u32(p + off + 4 * i);
        float v;
        std::memcpy(&v, &bits, 4);
        t[i] = v;
        break;
      }
      case PtnsDtype::kF64: {
        const uint64_t lo = get_u32(p + off + 8 * i);
        const uint64_t hi = get_u32(p + off + 8 * i + 4);
        const uint64_t bits = lo | (hi << 32);
        double v;
        std::memcpy(&v, &bits, 8);
        t[i] = v;
        break;
      }
      case PtnsDtype::kU16:
        t[i] = get_u16(p + off + 2 * i);
        break;
    }
  }
  if (dtype_out) *dtype_out = dtype;
  return t;
}

void save_labels(const std::filesystem::path& path,
                 const std::vector<int>& labels) {
  Tensor t({labels.size()});
  for (size_t i = 0; i < labels.size(); ++i) t[i] = labels[i];
  save_tensor(path, t, PtnsDtype::kU16);
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  PtnsDtype dtype;
  Tensor t = load_tensor(path, &dtype);
  if (dtype != PtnsDtype::kU16) {
    throw TensorIoError(TensorIoError::Kind::kBadData, "labels must be u16");
  }
  std::vector<int> labels(t.size());
  for (size_t i = 0; i < t.size(); ++i) labels[i] = static_cast<int>(t[i]);
  return labels;
}

Dataset load_csv(const std::filesystem::path& path, int channels, int height,
                 int width, int num_classes) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open csv: " + path.string());
  std::string line;
  if (!std::getline(f, line)) {
    throw std::runtime_error("csv missing header row: " + path.string());
  }
  const size_t features =
      static_cast<size_t>(channels) * height * width;
  std::vector<double> pixels;
  std::vector<int> labels;
  size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("csv parse error at line " +
                                 std::to_string(line_no));
      }
    }
    if (row.size() != features + 1) {
      throw std::runtime_error("csv field count mismatch at line " +
                               std::to_string(line_no));
    }
    const int label = static_cast<int>(std::lround(row.back()));
    if (label < 0 || label >= num_classes) {
      throw std::runtime_error("csv label out of range at line " +
                               std::to_string(line_no));
    }
    labels.push_back(label);
    pixels.insert(pixels.end(), row.begin(), row.end() - 1);
  }
  Dataset ds;
  ds.images = Tensor({labels.size(), static_cast<size_t>(channels),
                      static_cast<size_t>(height), static_cast<size_t>(width)},
                     std::move(pixels));
  ds.labels = std::move(labels);
  ds.num_classes = num_classes;
  ds.provenance = hash_string(path.string());
  return ds;
}

}  // namespace prompate
