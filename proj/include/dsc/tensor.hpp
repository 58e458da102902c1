/* dsc - deep sparse Conformer encoder blocks.
 * Copyright (C) 2026 the dsc authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DSC_TENSOR_HPP_
#define DSC_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsc {

using Shape = std::vector<std::size_t>;

/// Dense row-major tensor of doubles. All model values flow through this
/// type; layout is always contiguous, last axis fastest.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), 0.0);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size()) {
      throw std::invalid_argument("tensor shape/data size mismatch");
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) throw std::out_of_range("tensor axis");
    return shape_[axis];
  }

  std::size_t last_dim() const {
    if (shape_.empty()) throw std::invalid_argument("tensor has no axes");
    return shape_.back();
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const;

  /// Reinterpret the flat buffer under a new shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (count(shape) != data_.size()) {
      throw std::invalid_argument("reshape changes element count");
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(double value) {
    for (double& v : data_) v = value;
  }

  static std::size_t count(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const Shape& shape);

// Elementwise helpers used throughout forward/backward passes.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
void add_inplace(Tensor& dst, const Tensor& src);
void axpy_inplace(Tensor& dst, double a, const Tensor& src);
double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& t);

}  // namespace dsc

#endif  // DSC_TENSOR_HPP_
