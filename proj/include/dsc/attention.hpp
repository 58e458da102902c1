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

#ifndef DSC_ATTENTION_HPP_
#define DSC_ATTENTION_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dsc/counters.hpp"
#include "dsc/ops.hpp"
#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

enum class AttentionMode { kSparse, kDense };

/// Additive mask value for padded key positions; large but finite so the
/// pre-softmax scores never hold an actual infinity.
inline constexpr double kMaskValue = -1e30;

struct AttentionConfig {
  std::size_t heads = 8;
  std::size_t model_dim = 512;
  double c1 = 5.0;  // key-sampling factor
  double c2 = 5.0;  // query-selection factor
  double p_dropout = 0.0;
  AttentionMode mode = AttentionMode::kSparse;

  std::size_t head_dim() const { return model_dim / heads; }
  void validate() const;
};

/// Projection matrices (all model_dim x model_dim, heads split after the
/// product) and the two relative-position bias vectors of shape
/// (heads, head_dim).
struct AttentionWeights {
  Tensor w_q, w_k, w_v, w_p, w_o;
  Tensor u1, u2;

  void validate(const AttentionConfig& cfg) const;
};

AttentionWeights init_attention_weights(const AttentionConfig& cfg,
                                        SeededRng& rng, double gain);

/// Per-batch count of valid key frames; frames at or beyond valid_len are
/// padding and receive zero attention probability.
struct PaddingMask {
  std::vector<std::size_t> valid_len;

  static PaddingMask full(std::size_t batch, std::size_t len) {
    return PaddingMask{std::vector<std::size_t>(batch, len)};
  }
  void validate(std::size_t batch, std::size_t key_len) const;
};

/// Sampled key subset size L'_K = clamp(c1 * ceil(ln L_K), 1, L_K), further
/// capped by the batch element's valid length at sampling time.
std::size_t sampled_key_count(const AttentionConfig& cfg, std::size_t key_len);
/// Selected query count L'_Q = clamp(c2 * ceil(ln L_Q), 1, L_Q).
std::size_t selected_query_count(const AttentionConfig& cfg,
                                 std::size_t query_len);

struct SparsitySelection {
  std::size_t nominal_sampled_keys = 0;  // L'_K before per-batch capping
  std::size_t selected_per_head = 0;     // L'_Q
  // When L'_Q == L_Q the selection saturates: every query is selected and
  // the sampling/measure stage is skipped entirely.
  bool saturated = false;
  // Indexed [batch * heads + head]; both lists sorted ascending.
  std::vector<std::vector<std::size_t>> key_sample_idx;
  std::vector<std::vector<std::size_t>> top_query_idx;
  Tensor m_bar;  // (batch, heads, L_Q); empty when saturated
};

struct Projections {
  Tensor q;  // (b, L_Q, h, d_q)
  Tensor k;  // (b, h, L_K, d_k)
  Tensor v;  // (b, h, L_K, d_v)
  Tensor p;  // (b, h, L_K, d_k)
};

struct AttentionCache {
  AttentionConfig cfg;
  AttentionWeights weights;
  PaddingMask mask;
  bool training = false;
  bool sparse_rows = false;  // score rows cover only the selected queries
  Tensor x, y, x_p;
  Tensor k, v, p;        // (b, h, L_K, d_k)
  Tensor q_u1, q_u2;     // (b, h, L_Q, d_q)
  SparsitySelection selection;
  Tensor probs;          // softmax output, (b, h, rows, L_K)
  Tensor drop_keep;      // empty unless dropout was applied
  Tensor o_in;           // concatenated head outputs before W_O, (b, L_Q, d)
};

struct AttentionResult {
  Tensor out;  // (b, L_Q, d)
  AttentionCache cache;
};

struct AttentionGrads {
  Tensor d_x, d_y, d_x_p;
  Tensor d_w_q, d_w_k, d_w_v, d_w_p, d_w_o;
  Tensor d_u1, d_u2;
};

/// Sinusoidal relative-position rows: row j encodes distance r = L-1-j as
/// interleaved sin/cos pairs at wavelengths 10000^(2i/d).
Tensor relpos_encoding(std::size_t len, std::size_t dim);

/// Repeat a (L, d) table along a new leading batch axis.
Tensor batch_tile(const Tensor& rows, std::size_t batch);

/// Q/K/V/P projections with head split; Y == X for self-attention.
Projections project(const Tensor& x, const Tensor& y, const Tensor& x_p,
                    const AttentionWeights& w, const AttentionConfig& cfg);

/// Max-mean query sparsity scores from the sampled key subset. Dot products
/// are unscaled and the mean divides by the full key length even though only
/// the sampled keys contribute to the sum.
Tensor sparsity_measure(const Tensor& q_u1, const Tensor& k_part,
                        std::size_t key_len);

AttentionResult probsparse_forward(const Tensor& x, const Tensor& x_p,
                                   const Tensor& y, const AttentionWeights& w,
                                   const AttentionConfig& cfg,
                                   const PaddingMask& mask, SeededRng& rng,
                                   bool training,
                                   OpCounters* counters = nullptr);

AttentionResult dense_forward(const Tensor& x, const Tensor& x_p,
                              const Tensor& y, const AttentionWeights& w,
                              const AttentionConfig& cfg,
                              const PaddingMask& mask, SeededRng& rng,
                              bool training, OpCounters* counters = nullptr);

/// Dispatch on cfg.mode.
AttentionResult attention_forward(const Tensor& x, const Tensor& x_p,
                                  const Tensor& y, const AttentionWeights& w,
                                  const AttentionConfig& cfg,
                                  const PaddingMask& mask, SeededRng& rng,
                                  bool training,
                                  OpCounters* counters = nullptr);

AttentionGrads attention_backward(const AttentionCache& cache,
                                  const Tensor& d_out);

/// Closed-form prediction of the forward mac_count for a self-attention
/// call with batch 1 and no padding; matches the measured counter exactly.
std::uint64_t flop_estimate(const AttentionConfig& cfg, std::size_t len);

}  // namespace dsc

#endif  // DSC_ATTENTION_HPP_
