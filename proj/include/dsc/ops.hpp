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

#ifndef DSC_OPS_HPP_
#define DSC_OPS_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

inline constexpr double kLayerNormEps = 1e-5;

/// Numerically stable softmax over the last axis. Each output slice is
/// non-negative and sums to 1; shifting a slice by a constant does not
/// change its output.
Tensor softmax_rows(const Tensor& t);
void softmax_rows_inplace(Tensor& t);

/// Backward of softmax_rows given output probabilities and upstream grad,
/// slice by slice over the last axis.
Tensor softmax_rows_backward(const Tensor& probs, const Tensor& d_probs);

struct LayerNormCache {
  Tensor x_hat;                 // normalized input, same shape as x
  std::vector<double> inv_std;  // per last-axis slice
};

/// Layer normalization over the last axis with population variance, eps
/// inside the square root. eps == 0 is accepted and only fails if a
/// constant slice is encountered.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps, LayerNormCache* cache = nullptr);

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                         const Tensor& d_y, Tensor* d_x, Tensor* d_gamma,
                         Tensor* d_beta);

/// k distinct indices drawn uniformly from [0, n), deterministic per rng
/// state, returned sorted ascending.
std::vector<std::size_t> sample_without_replacement(SeededRng& rng,
                                                    std::size_t n,
                                                    std::size_t k);

/// Indices of the k largest entries; ties keep the lower index; result
/// sorted ascending by index.
std::vector<std::size_t> topk_indices(std::span<const double> v,
                                      std::size_t k);

/// Uniform Xavier/Glorot draw in [-a, a], a = gain * sqrt(6 / (rows+cols)).
Tensor xavier_init(SeededRng& rng, std::size_t rows, std::size_t cols,
                   double gain);

/// Central-difference gradient estimate of a scalar function, elementwise.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double swish(double x) { return x * sigmoid(x); }
inline double swish_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// Row-major matmul kernels. All backward passes are expressed through these
// three layouts; accumulate=true adds into out instead of overwriting.
void matmul(const double* a, const double* b, double* out, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);
// out[m x n] = a[m x k] * b[n x k]^T
void matmul_bt(const double* a, const double* b, double* out, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);
// out[k x n] = a[m x k]^T * b[m x n]
void matmul_at(const double* a, const double* b, double* out, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate = false);

}  // namespace dsc

#endif  // DSC_OPS_HPP_
