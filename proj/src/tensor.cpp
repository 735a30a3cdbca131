// Copyright 2026 The latref Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "latref/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace latref {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw Error("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape.size() > 2) throw Error("tensors of rank > 2 are not supported: " + shape_str(shape));
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw Error("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                " elements");
  }
}

Tensor Tensor::zeros(Shape s) { return full(std::move(s), 0.0); }

Tensor Tensor::full(Shape s, double v) {
  auto n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::vec(std::vector<double> v) {
  auto n = static_cast<int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor Tensor::mat(int64_t rows, int64_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::identity(int64_t n) {
  auto t = zeros({n, n});
  for (int64_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

int64_t Tensor::rows() const {
  if (rank() == 2) return shape[0];
  return 1;
}

int64_t Tensor::cols() const {
  if (rank() == 2) return shape[1];
  if (rank() == 1) return shape[0];
  return 1;
}

double Tensor::item() const {
  if (data.size() != 1) throw Error("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                shape_str(b.shape));
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

}  // namespace latref
