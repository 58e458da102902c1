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

#include "dsc/ops.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dsc {

namespace {

std::size_t slice_count(const Tensor& t) {
  return t.numel() / t.last_dim();
}

void check_softmax_axis(const Tensor& t) {
  if (t.rank() == 0 || t.last_dim() == 0) {
    throw std::invalid_argument("degenerate softmax axis");
  }
}

}  // namespace

void softmax_rows_inplace(Tensor& t) {
  check_softmax_axis(t);
  const std::size_t n = t.last_dim();
  double* p = t.data();
  for (std::size_t s = 0; s < slice_count(t); ++s, p += n) {
    double mx = p[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, p[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp(p[i] - mx);
      sum += p[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) p[i] *= inv;
  }
}

Tensor softmax_rows(const Tensor& t) {
  Tensor out = t;
  softmax_rows_inplace(out);
  return out;
}

Tensor softmax_rows_backward(const Tensor& probs, const Tensor& d_probs) {
  if (!probs.same_shape(d_probs)) {
    throw std::invalid_argument("softmax backward: shape mismatch");
  }
  const std::size_t n = probs.last_dim();
  Tensor d_in(probs.shape());
  const double* a = probs.data();
  const double* g = d_probs.data();
  double* o = d_in.data();
  for (std::size_t s = 0; s < slice_count(probs); ++s, a += n, g += n, o += n) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * g[i];
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * (g[i] - dot);
  }
  return d_in;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps, LayerNormCache* cache) {
  const std::size_t n = x.last_dim();
  if (gamma.numel() != n || beta.numel() != n) {
    throw std::invalid_argument("layer_norm: gamma/beta length mismatch");
  }
  if (eps < 0.0) throw std::invalid_argument("layer_norm: negative eps");

  Tensor out(x.shape());
  if (cache) {
    cache->x_hat = Tensor(x.shape());
    cache->inv_std.assign(slice_count(x), 0.0);
  }
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t s = 0; s < slice_count(x); ++s, px += n, po += n) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += px[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = px[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    if (var + eps == 0.0) throw std::invalid_argument("zero variance");
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      const double xh = (px[i] - mean) * inv;
      po[i] = gamma[i] * xh + beta[i];
      if (cache) cache->x_hat.data()[s * n + i] = xh;
    }
    if (cache) cache->inv_std[s] = inv;
  }
  return out;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                         const Tensor& d_y, Tensor* d_x, Tensor* d_gamma,
                         Tensor* d_beta) {
  const Tensor& xh = cache.x_hat;
  if (!xh.same_shape(d_y)) {
    throw std::invalid_argument("layer_norm backward: shape mismatch");
  }
  const std::size_t n = xh.last_dim();
  const std::size_t slices = xh.numel() / n;
  if (d_x) *d_x = Tensor(xh.shape());
  const double* ph = xh.data();
  const double* pg = d_y.data();
  double* po = d_x ? d_x->data() : nullptr;
  for (std::size_t s = 0; s < slices; ++s, ph += n, pg += n) {
    double sum_dxh = 0.0;
    double sum_dxh_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dxh = pg[i] * gamma[i];
      sum_dxh += dxh;
      sum_dxh_xh += dxh * ph[i];
      if (d_gamma) (*d_gamma)[i] += pg[i] * ph[i];
      if (d_beta) (*d_beta)[i] += pg[i];
    }
    if (po) {
      const double inv = cache.inv_std[s];
      const double m1 = sum_dxh / static_cast<double>(n);
      const double m2 = sum_dxh_xh / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double dxh = pg[i] * gamma[i];
        po[i] = inv * (dxh - m1 - ph[i] * m2);
      }
      po += n;
    }
  }
}

std::vector<std::size_t> sample_without_replacement(SeededRng& rng,
                                                    std::size_t n,
                                                    std::size_t k) {
  if (k > n) throw std::invalid_argument("sample size exceeds population");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots form a uniform ordered sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.next_below(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::size_t> topk_indices(std::span<const double> v,
                                      std::size_t k) {
  if (k > v.size()) {
    throw std::invalid_argument("topk size exceeds vector length");
  }
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Ties keep the lower index.
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&v](std::size_t a, std::size_t b) {
                      if (v[a] != v[b]) return v[a] > v[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor xavier_init(SeededRng& rng, std::size_t rows, std::size_t cols,
                   double gain) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("xavier_init: empty matrix");
  }
  if (!(gain > 0.0)) {
    throw std::invalid_argument("xavier_init: gain must be positive");
  }
  const double a = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.next_uniform(-a, a);
  return t;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h <= 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::runtime_error("finite_diff_grad: non-finite evaluation");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

void matmul(const double* a, const double* b, double* out, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(out, out + m * n, 0.0);
  // ikj order: cache-friendly and accumulates each out element in
  // ascending-k order, so results match the naive triple loop bit for bit.
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += av * bk[j];
    }
  }
}

void matmul_bt(const double* a, const double* b, double* out, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = accumulate ? oi[j] : 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      oi[j] = s;
    }
  }
}

void matmul_at(const double* a, const double* b, double* out, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(out, out + k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      double* ok = out + kk * n;
      for (std::size_t j = 0; j < n; ++j) ok[j] += av * bi[j];
    }
  }
}

}  // namespace dsc
