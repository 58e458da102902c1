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

#ifndef DSC_TESTS_ORACLES_HPP_
#define DSC_TESTS_ORACLES_HPP_

// Reference implementations used only by the tests. Everything here is a
// deliberately naive scalar-loop transcription of the operation contracts,
// sharing no code with the library kernels, so that agreement between the
// two is meaningful evidence and not a tautology.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dsc/attention.hpp"
#include "dsc/conformer.hpp"
#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc::test {

inline Tensor random_tensor(SeededRng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = scale * rng.next_gaussian();
  }
  return t;
}

// Plain i-j-k triple loop on 2-D tensors.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
      out.at2(i, j) = acc;
    }
  }
  return out;
}

inline void softmax_row_oracle(std::vector<double>& row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

// One head-slice of a projection: out[dq] = sum_c in[c] * w[c, head*dq + u].
inline void project_head_row(const Tensor& w_mat, const double* in,
                             std::size_t d, std::size_t head, std::size_t dq,
                             double* out) {
  for (std::size_t u = 0; u < dq; ++u) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      acc += in[c] * w_mat.at2(c, head * dq + u);
    }
    out[u] = acc;
  }
}

// Attention with the relative-position score term, evaluated one scalar at
// a time. Covers every query row (the dense path). The returned tensor is
// the final output after the output projection.
inline Tensor dense_attention_oracle(const Tensor& x, const Tensor& x_p,
                                     const Tensor& y,
                                     const AttentionWeights& w,
                                     const AttentionConfig& cfg,
                                     const PaddingMask& mask) {
  const std::size_t b = x.dim(0), lk = x.dim(1), d = x.dim(2);
  const std::size_t lq = y.dim(1);
  const std::size_t h = cfg.heads, dq = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dq));

  Tensor concat({b, lq, d});
  std::vector<double> qv(dq), kv(dq), vv(dq), pv(dq);
  for (std::size_t bi = 0; bi < b; ++bi) {
    const std::size_t valid = mask.valid_len[bi];
    for (std::size_t hi = 0; hi < h; ++hi) {
      for (std::size_t qi = 0; qi < lq; ++qi) {
        project_head_row(w.w_q, y.data() + (bi * lq + qi) * d, d, hi, dq,
                         qv.data());
        std::vector<double> row(lk);
        for (std::size_t j = 0; j < lk; ++j) {
          project_head_row(w.w_k, x.data() + (bi * lk + j) * d, d, hi, dq,
                           kv.data());
          project_head_row(w.w_p, x_p.data() + (bi * lk + j) * d, d, hi, dq,
                           pv.data());
          double content = 0.0, position = 0.0;
          for (std::size_t u = 0; u < dq; ++u) {
            content += (qv[u] + w.u1.at2(hi, u)) * kv[u];
            position += (qv[u] + w.u2.at2(hi, u)) * pv[u];
          }
          row[j] = (content + position) * inv_sqrt;
          if (j >= valid) row[j] += kMaskValue;
        }
        softmax_row_oracle(row);
        for (std::size_t u = 0; u < dq; ++u) {
          double acc = 0.0;
          for (std::size_t j = 0; j < lk; ++j) {
            project_head_row(w.w_v, x.data() + (bi * lk + j) * d, d, hi, dq,
                             vv.data());
            acc += row[j] * vv[u];
          }
          concat.at3(bi, qi, hi * dq + u) = acc;
        }
      }
    }
  }

  Tensor out({b, lq, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t qi = 0; qi < lq; ++qi) {
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          acc += concat.at3(bi, qi, c) * w.w_o.at2(c, j);
        }
        out.at3(bi, qi, j) = acc;
      }
    }
  }
  return out;
}

// Replays the sparse output rule for a selection reported by the forward
// pass: selected query rows get full attention rows, every other row keeps
// its own value projection, and both feed the output projection.
inline Tensor sparse_attention_oracle(const Tensor& x, const Tensor& x_p,
                                      const Tensor& y,
                                      const AttentionWeights& w,
                                      const AttentionConfig& cfg,
                                      const PaddingMask& mask,
                                      const SparsitySelection& sel) {
  const std::size_t b = x.dim(0), lk = x.dim(1), d = x.dim(2);
  const std::size_t lq = y.dim(1);
  const std::size_t h = cfg.heads, dq = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dq));

  Tensor concat({b, lq, d});
  std::vector<double> qv(dq), kv(dq), vv(dq), pv(dq);
  for (std::size_t bi = 0; bi < b; ++bi) {
    const std::size_t valid = mask.valid_len[bi];
    for (std::size_t hi = 0; hi < h; ++hi) {
      const auto& top = sel.top_query_idx[bi * h + hi];
      for (std::size_t qi = 0; qi < lq; ++qi) {
        const bool selected =
            std::find(top.begin(), top.end(), qi) != top.end();
        if (!selected) {
          // lq == lk on this path, so the query's own value row exists
          project_head_row(w.w_v, x.data() + (bi * lk + qi) * d, d, hi, dq,
                           vv.data());
          for (std::size_t u = 0; u < dq; ++u) {
            concat.at3(bi, qi, hi * dq + u) = vv[u];
          }
          continue;
        }
        project_head_row(w.w_q, y.data() + (bi * lq + qi) * d, d, hi, dq,
                         qv.data());
        std::vector<double> row(lk);
        for (std::size_t j = 0; j < lk; ++j) {
          project_head_row(w.w_k, x.data() + (bi * lk + j) * d, d, hi, dq,
                           kv.data());
          project_head_row(w.w_p, x_p.data() + (bi * lk + j) * d, d, hi, dq,
                           pv.data());
          double content = 0.0, position = 0.0;
          for (std::size_t u = 0; u < dq; ++u) {
            content += (qv[u] + w.u1.at2(hi, u)) * kv[u];
            position += (qv[u] + w.u2.at2(hi, u)) * pv[u];
          }
          row[j] = (content + position) * inv_sqrt;
          if (j >= valid) row[j] += kMaskValue;
        }
        softmax_row_oracle(row);
        for (std::size_t u = 0; u < dq; ++u) {
          double acc = 0.0;
          for (std::size_t j = 0; j < lk; ++j) {
            project_head_row(w.w_v, x.data() + (bi * lk + j) * d, d, hi, dq,
                             vv.data());
            acc += row[j] * vv[u];
          }
          concat.at3(bi, qi, hi * dq + u) = acc;
        }
      }
    }
  }

  Tensor out({b, lq, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t qi = 0; qi < lq; ++qi) {
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          acc += concat.at3(bi, qi, c) * w.w_o.at2(c, j);
        }
        out.at3(bi, qi, j) = acc;
      }
    }
  }
  return out;
}

// Direct transcription of the convolution module: pointwise expansion with
// bias, gated linear unit with padded frames forced to zero, depthwise
// correlation over time with out-of-range frames read as zero, channel
// layer norm, swish, pointwise contraction.
inline Tensor conv_module_oracle(const Tensor& x, const ConvParams& p,
                                 const PaddingMask& mask) {
  const std::size_t b = x.dim(0), len = x.dim(1), d = x.dim(2);
  const std::size_t k = p.depthwise.dim(0);
  const std::size_t off = (k - 1) / 2;

  Tensor glu({b, len, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      if (t >= mask.valid_len[bi]) continue;
      for (std::size_t c = 0; c < d; ++c) {
        double content = p.b_in[c], gate = p.b_in[d + c];
        for (std::size_t i = 0; i < d; ++i) {
          content += x.at3(bi, t, i) * p.pointwise_in.at2(i, c);
          gate += x.at3(bi, t, i) * p.pointwise_in.at2(i, d + c);
        }
        glu.at3(bi, t, c) = content / (1.0 + std::exp(-gate));
      }
    }
  }

  Tensor dw({b, len, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                     static_cast<std::ptrdiff_t>(off);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          acc += p.depthwise.at2(j, c) *
                 glu.at3(bi, static_cast<std::size_t>(src), c);
        }
        dw.at3(bi, t, c) = acc;
      }
    }
  }

  Tensor out({b, len, d});
  std::vector<double> sw(d);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      double mean = 0.0;
      for (std::size_t c = 0; c < d; ++c) mean += dw.at3(bi, t, c);
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double dev = dw.at3(bi, t, c) - mean;
        var += dev * dev;
      }
      var /= static_cast<double>(d);
      const double inv_std = 1.0 / std::sqrt(var + p.norm.eps);
      for (std::size_t c = 0; c < d; ++c) {
        const double ln = p.norm.gamma[c] * (dw.at3(bi, t, c) - mean) * inv_std +
                          p.norm.beta[c];
        sw[c] = ln / (1.0 + std::exp(-ln));
      }
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          acc += sw[c] * p.pointwise_out.at2(c, j);
        }
        out.at3(bi, t, j) = acc;
      }
    }
  }
  return out;
}

// Selection oracle: argsort descending by value, lower index first on ties,
// keep k, return in ascending index order.
inline std::vector<std::size_t> topk_by_sort(const std::vector<double>& v,
                                             std::size_t k) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace dsc::test

#endif  // DSC_TESTS_ORACLES_HPP_
