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
#include "prompate/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "prompate/rng.hpp"

namespace prompate {

size_t Tensor::shape_size(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw std::invalid_argument("tensor data length does not match shape");
  }
}

Tensor Tensor::full(std::vector<size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::add_scaled(const Tensor& other, double scale) {
  if (!same_shape(other)) {
    throw std::invalid_argument("tensor shape mismatch in add_scaled");
  }
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

int Tensor::argmax() const {
  if (data_.empty()) throw std::invalid_argument("argmax of empty tensor");
  int best = 0;
  for (size_t i = 1; i < data_.size(); ++i) {
    if (data_[i] > data_[best]) best = static_cast<int>(i);
  }
  return best;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

uint64_t fingerprint(const Tensor& t, uint64_t seed) {
  uint64_t h = seed;
  for (size_t d : t.shape()) h = hash_bytes(&d, sizeof(d), h);
  return hash_bytes(t.data(), t.size() * sizeof(double), h);
}

}  // namespace prompate
