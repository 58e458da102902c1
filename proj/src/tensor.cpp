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

#include "dsc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dsc {

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "tensor add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "tensor sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(const Tensor& a, double s) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "tensor add");
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

void axpy_inplace(Tensor& dst, double a, const Tensor& src) {
  require_same_shape(dst, src, "tensor axpy");
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += a * src[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

}  // namespace dsc
