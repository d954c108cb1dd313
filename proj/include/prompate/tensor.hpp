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

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace prompate {

// Dense row-major tensor of 64-bit reals. The shape may be empty, in which
// case the tensor holds a single scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<size_t> shape, double value);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  size_t dim(size_t i) const { return shape_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // Index helpers for the shapes this project actually uses.
  double& at2(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
  double at2(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }
  double& at3(size_t c, size_t y, size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at3(size_t c, size_t y, size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double& at4(size_t n, size_t c, size_t y, size_t x) {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double at4(size_t n, size_t c, size_t y, size_t x) const {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double v);
  void add_scaled(const Tensor& other, double scale);  // *this += scale * other

  int argmax() const;
  bool all_finite() const;

  static size_t shape_size(const std::vector<size_t>& shape);

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);
uint64_t fingerprint(const Tensor& t, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace prompate
