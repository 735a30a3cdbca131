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

#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace latref {

using Shape = std::vector<int64_t>;

// Raised for shape mismatches and malformed inputs throughout the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are used.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : shape{}, data(1, 0.0) {}
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vec(std::vector<double> v);
  static Tensor mat(int64_t rows, int64_t cols, std::vector<double> v);
  static Tensor identity(int64_t n);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  // Matrix view: rank-1 tensors are treated as a single row.
  int64_t rows() const;
  int64_t cols() const;

  double& operator()(int64_t r, int64_t c) { return data[r * cols() + c]; }
  double operator()(int64_t r, int64_t c) const { return data[r * cols() + c]; }
  double item() const;

  std::span<const double> row(int64_t r) const {
    return {data.data() + r * cols(), static_cast<size_t>(cols())};
  }

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Throws Error naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);

}  // namespace latref
