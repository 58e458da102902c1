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

#include "dsc/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsc {

void AttentionConfig::validate() const {
  if (heads == 0) throw std::invalid_argument("attention: zero heads");
  if (model_dim == 0 || model_dim % heads != 0) {
    throw std::invalid_argument(
        "attention: model_dim must be a positive multiple of heads");
  }
  if (!(c1 > 0.0) || !(c2 > 0.0)) {
    throw std::invalid_argument("attention: c1 and c2 must be positive");
  }
  if (!(p_dropout >= 0.0) || p_dropout >= 1.0) {
    throw std::invalid_argument("attention: p_dropout must be in [0, 1)");
  }
}

namespace {

void check_matrix(const Tensor& t, std::size_t rows, std::size_t cols,
                  const char* name) {
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    throw std::invalid_argument(std::string("attention weights: ") + name +
                                " has shape " + shape_to_string(t.shape()));
  }
}

}  // namespace

void AttentionWeights::validate(const AttentionConfig& cfg) const {
  const std::size_t d = cfg.model_dim;
  check_matrix(w_q, d, d, "W_Q");
  check_matrix(w_k, d, d, "W_K");
  check_matrix(w_v, d, d, "W_V");
  check_matrix(w_p, d, d, "W_P");
  check_matrix(w_o, d, d, "W_O");
  check_matrix(u1, cfg.heads, cfg.head_dim(), "U1");
  check_matrix(u2, cfg.heads, cfg.head_dim(), "U2");
}

AttentionWeights init_attention_weights(const AttentionConfig& cfg,
                                        SeededRng& rng, double gain) {
  const std::size_t d = cfg.model_dim;
  AttentionWeights w;
  SeededRng r_q = rng.child("W_Q"), r_k = rng.child("W_K");
  SeededRng r_v = rng.child("W_V"), r_p = rng.child("W_P");
  SeededRng r_o = rng.child("W_O");
  SeededRng r_u1 = rng.child("U1"), r_u2 = rng.child("U2");
  w.w_q = xavier_init(r_q, d, d, gain);
  w.w_k = xavier_init(r_k, d, d, gain);
  w.w_v = xavier_init(r_v, d, d, gain);
  w.w_p = xavier_init(r_p, d, d, gain);
  w.w_o = xavier_init(r_o, d, d, gain);
  w.u1 = xavier_init(r_u1, cfg.heads, cfg.head_dim(), gain);
  w.u2 = xavier_init(r_u2, cfg.heads, cfg.head_dim(), gain);
  return w;
}

void PaddingMask::validate(std::size_t batch, std::size_t key_len) const {
  if (valid_len.size() != batch) {
    throw std::invalid_argument("padding mask batch mismatch");
  }
  for (std::size_t v : valid_len) {
    if (v == 0) throw std::invalid_argument("no valid keys");
    if (v > key_len) {
      throw std::invalid_argument("padding mask exceeds key length");
    }
  }
}

std::size_t sampled_key_count(const AttentionConfig& cfg,
                              std::size_t key_len) {
  if (key_len == 0) throw std::invalid_argument("empty key axis");
  const double raw = cfg.c1 * std::ceil(std::log(static_cast<double>(key_len)));
  if (!(raw >= 1.0)) return 1;
  if (raw >= static_cast<double>(key_len)) return key_len;
  return static_cast<std::size_t>(raw);
}

std::size_t selected_query_count(const AttentionConfig& cfg,
                                 std::size_t query_len) {
  if (query_len == 0) throw std::invalid_argument("empty query axis");
  const double raw =
      cfg.c2 * std::ceil(std::log(static_cast<double>(query_len)));
  if (!(raw >= 1.0)) return 1;
  if (raw >= static_cast<double>(query_len)) return query_len;
  return static_cast<std::size_t>(raw);
}

Tensor relpos_encoding(std::size_t len, std::size_t dim) {
  if (len == 0) throw std::invalid_argument("relpos_encoding: empty length");
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("relpos_encoding: width must be even and >= 2");
  }
  Tensor enc({len, dim});
  for (std::size_t j = 0; j < len; ++j) {
    const double r = static_cast<double>(len - 1 - j);
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq =
          std::exp(-std::log(10000.0) *
                   (2.0 * static_cast<double>(i) / static_cast<double>(dim)));
      enc.at2(j, 2 * i) = std::sin(r * freq);
      enc.at2(j, 2 * i + 1) = std::cos(r * freq);
    }
  }
  return enc;
}

Tensor batch_tile(const Tensor& rows, std::size_t batch) {
  if (rows.rank() != 2) {
    throw std::invalid_argument("batch_tile: expected a rank-2 tensor");
  }
  Tensor out({batch, rows.dim(0), rows.dim(1)});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(rows.data(), rows.data() + rows.numel(),
              out.data() + b * rows.numel());
  }
  return out;
}

namespace {

void check_input(const Tensor& t, std::size_t d, const char* name) {
  if (t.rank() != 3 || t.dim(2) != d) {
    throw std::invalid_argument(std::string("attention: ") + name +
                                " must have shape (batch, len, " +
                                std::to_string(d) + "), got " +
                                shape_to_string(t.shape()));
  }
}

// Scatter a flat (b*L, d) projection into the (b, h, L, d_h) head layout.
Tensor to_head_major(const Tensor& flat, std::size_t batch, std::size_t len,
                     std::size_t heads, std::size_t d_head) {
  Tensor out({batch, heads, len, d_head});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      const double* src = flat.data() + (b * len + t) * heads * d_head;
      for (std::size_t h = 0; h < heads; ++h) {
        double* dst = out.data() + ((b * heads + h) * len + t) * d_head;
        std::copy(src + h * d_head, src + (h + 1) * d_head, dst);
      }
    }
  }
  return out;
}

}  // namespace

Projections project(const Tensor& x, const Tensor& y, const Tensor& x_p,
                    const AttentionWeights& w, const AttentionConfig& cfg) {
  cfg.validate();
  w.validate(cfg);
  const std::size_t d = cfg.model_dim;
  check_input(x, d, "X");
  check_input(y, d, "Y");
  check_input(x_p, d, "X_P");
  const std::size_t batch = x.dim(0);
  const std::size_t len_k = x.dim(1);
  const std::size_t len_q = y.dim(1);
  if (y.dim(0) != batch || x_p.dim(0) != batch || x_p.dim(1) != len_k) {
    throw std::invalid_argument("attention: X/Y/X_P batch or length mismatch");
  }
  const std::size_t h = cfg.heads;
  const std::size_t dh = cfg.head_dim();

  Projections out;
  // The flat (b*L, d) product already has the (b, L, h, d_q) layout.
  out.q = Tensor({batch, len_q, h, dh});
  matmul(y.data(), w.w_q.data(), out.q.data(), batch * len_q, d, d);

  Tensor flat({batch * len_k, d});
  matmul(x.data(), w.w_k.data(), flat.data(), batch * len_k, d, d);
  out.k = to_head_major(flat, batch, len_k, h, dh);
  matmul(x.data(), w.w_v.data(), flat.data(), batch * len_k, d, d);
  out.v = to_head_major(flat, batch, len_k, h, dh);
  matmul(x_p.data(), w.w_p.data(), flat.data(), batch * len_k, d, d);
  out.p = to_head_major(flat, batch, len_k, h, dh);
  return out;
}

Tensor sparsity_measure(const Tensor& q_u1, const Tensor& k_part,
                        std::size_t key_len) {
  if (q_u1.rank() != 4 || k_part.rank() != 4) {
    throw std::invalid_argument(
        "sparsity_measure: expected (b, h, len, d_head) tensors");
  }
  if (k_part.dim(2) == 0) throw std::invalid_argument("empty key sample");
  if (key_len == 0) throw std::invalid_argument("empty key axis");
  const std::size_t batch = q_u1.dim(0);
  const std::size_t heads = q_u1.dim(1);
  const std::size_t len_q = q_u1.dim(2);
  const std::size_t dh = q_u1.dim(3);
  const std::size_t sampled = k_part.dim(2);
  if (k_part.dim(0) != batch || k_part.dim(1) != heads ||
      k_part.dim(3) != dh) {
    throw std::invalid_argument("sparsity_measure: shape mismatch");
  }
  Tensor m_bar({batch, heads, len_q});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const double* kp = k_part.data() + ((b * heads + h) * sampled) * dh;
      for (std::size_t qi = 0; qi < len_q; ++qi) {
        const double* qv = q_u1.data() + ((b * heads + h) * len_q + qi) * dh;
        double mx = 0.0;
        double sum = 0.0;
        for (std::size_t j = 0; j < sampled; ++j) {
          double dot = 0.0;
          const double* kj = kp + j * dh;
          for (std::size_t i = 0; i < dh; ++i) dot += qv[i] * kj[i];
          mx = j == 0 ? dot : std::max(mx, dot);
          sum += dot;
        }
        // Unscaled dots; the mean divides by the full key length even
        // though only the sampled keys contribute.
        m_bar.at3(b, h, qi) = mx - sum / static_cast<double>(key_len);
      }
    }
  }
  return m_bar;
}

namespace {

struct ForwardShapes {
  std::size_t batch, len_q, len_k, heads, dh, d;
};

// One score row for query qi over all keys, then the additive padding mask.
// Both attention modes and the sparse row subset share this exact loop, so
// matching rows agree bit for bit.
void score_row(const double* qu1, const double* qu2, const double* k_bh,
               const double* p_bh, std::size_t len_k, std::size_t dh,
               double inv_sqrt_dq, std::size_t valid, double* row) {
  for (std::size_t j = 0; j < len_k; ++j) {
    const double* kj = k_bh + j * dh;
    const double* pj = p_bh + j * dh;
    double s = 0.0;
    for (std::size_t i = 0; i < dh; ++i) s += qu1[i] * kj[i];
    double t = 0.0;
    for (std::size_t i = 0; i < dh; ++i) t += qu2[i] * pj[i];
    row[j] = (s + t) * inv_sqrt_dq + (j >= valid ? kMaskValue : 0.0);
  }
}

AttentionResult forward_core(const Tensor& x, const Tensor& x_p,
                             const Tensor& y, const AttentionWeights& w,
                             const AttentionConfig& cfg,
                             const PaddingMask& mask, SeededRng& rng,
                             bool training, OpCounters* counters) {
  cfg.validate();
  w.validate(cfg);
  const std::size_t d = cfg.model_dim;
  check_input(x, d, "X");
  check_input(y, d, "Y");
  check_input(x_p, d, "X_P");
  const ForwardShapes s{x.dim(0), y.dim(1), x.dim(1),
                        cfg.heads, cfg.head_dim(), d};
  if (s.len_q == 0) throw std::invalid_argument("empty query axis");
  if (y.dim(0) != s.batch || x_p.dim(0) != s.batch ||
      x_p.dim(1) != s.len_k) {
    throw std::invalid_argument("attention: X/Y/X_P batch or length mismatch");
  }
  mask.validate(s.batch, s.len_k);

  const bool sparse_mode = cfg.mode == AttentionMode::kSparse;
  SparsitySelection sel;
  sel.selected_per_head = selected_query_count(cfg, s.len_q);
  sel.saturated = sel.selected_per_head >= s.len_q;
  // The partial value overwrite identifies query i with value row i.
  if (sparse_mode && !sel.saturated && s.len_q != s.len_k) {
    throw std::invalid_argument(
        "sparse attention requires equal query and key lengths");
  }

  OpCounters scratch;
  OpCounters& ctr = counters ? *counters : scratch;
  const double inv_sqrt_dq = 1.0 / std::sqrt(static_cast<double>(s.dh));

  AttentionCache cache;
  cache.cfg = cfg;
  cache.weights = w;
  cache.mask = mask;
  cache.training = training;
  cache.x = x;
  cache.y = y;
  cache.x_p = x_p;

  Projections proj = project(x, y, x_p, w, cfg);
  ctr.track_alloc(proj.q.numel());
  ctr.track_alloc(proj.k.numel() + proj.v.numel() + proj.p.numel());

  // Q_U1 / Q_U2: bias the query rows and move to head-major layout.
  Tensor q_u1({s.batch, s.heads, s.len_q, s.dh});
  Tensor q_u2({s.batch, s.heads, s.len_q, s.dh});
  ctr.track_alloc(q_u1.numel() + q_u2.numel());
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < s.len_q; ++t) {
      for (std::size_t h = 0; h < s.heads; ++h) {
        const double* qv = proj.q.data() + ((b * s.len_q + t) * s.heads + h) * s.dh;
        double* o1 = q_u1.data() + ((b * s.heads + h) * s.len_q + t) * s.dh;
        double* o2 = q_u2.data() + ((b * s.heads + h) * s.len_q + t) * s.dh;
        for (std::size_t i = 0; i < s.dh; ++i) {
          o1[i] = qv[i] + w.u1.at2(h, i);
          o2[i] = qv[i] + w.u2.at2(h, i);
        }
      }
    }
  }
  ctr.track_free(proj.q.numel());

  const bool sparse_rows = sparse_mode && !sel.saturated;
  sel.key_sample_idx.assign(s.batch * s.heads, {});
  sel.top_query_idx.assign(s.batch * s.heads, {});

  if (sparse_rows) {
    sel.nominal_sampled_keys = sampled_key_count(cfg, s.len_k);
    sel.m_bar = Tensor({s.batch, s.heads, s.len_q});
    ctr.track_alloc(sel.m_bar.numel());
    SeededRng sample_root = rng.child("keysample");
    for (std::size_t b = 0; b < s.batch; ++b) {
      const std::size_t valid = mask.valid_len[b];
      const std::size_t n_sample = std::min(sel.nominal_sampled_keys, valid);
      for (std::size_t h = 0; h < s.heads; ++h) {
        SeededRng stream = sample_root.child(b * s.heads + h);
        // Sampling is restricted to valid key positions so padded content
        // can never influence the selection.
        auto kidx = sample_without_replacement(stream, valid, n_sample);

        Tensor k_part({1, 1, n_sample, s.dh});
        ctr.track_alloc(k_part.numel());
        const double* k_bh = proj.k.data() + (b * s.heads + h) * s.len_k * s.dh;
        for (std::size_t j = 0; j < n_sample; ++j) {
          std::copy(k_bh + kidx[j] * s.dh, k_bh + (kidx[j] + 1) * s.dh,
                    k_part.data() + j * s.dh);
        }
        Tensor qu_view({1, 1, s.len_q, s.dh},
                       std::vector<double>(
                           q_u1.data() + (b * s.heads + h) * s.len_q * s.dh,
                           q_u1.data() + (b * s.heads + h + 1) * s.len_q * s.dh));
        ctr.track_alloc(s.len_q * n_sample);  // measure dot matrix
        Tensor m_row = sparsity_measure(qu_view, k_part, s.len_k);
        ctr.add_macs(2ull * s.len_q * n_sample * s.dh);
        ctr.track_free(s.len_q * n_sample + k_part.numel());

        // Padded queries never compete for selection slots.
        for (std::size_t qi = valid; qi < s.len_q; ++qi) {
          m_row[qi] = kMaskValue;
        }
        std::copy(m_row.data(), m_row.data() + s.len_q,
                  sel.m_bar.data() + (b * s.heads + h) * s.len_q);
        sel.key_sample_idx[b * s.heads + h] = std::move(kidx);
        sel.top_query_idx[b * s.heads + h] = topk_indices(
            std::span<const double>(m_row.data(), s.len_q),
            sel.selected_per_head);
      }
    }
    ctr.track_free(sel.m_bar.numel());
  } else {
    // Saturated or dense: every query row is computed.
    std::vector<std::size_t> all(s.len_q);
    for (std::size_t i = 0; i < s.len_q; ++i) all[i] = i;
    for (auto& t : sel.top_query_idx) t = all;
  }

  const std::size_t rows = sparse_rows ? sel.selected_per_head : s.len_q;

  Tensor scores({s.batch, s.heads, rows, s.len_k});
  ctr.track_alloc(scores.numel());
  for (std::size_t b = 0; b < s.batch; ++b) {
    const std::size_t valid = mask.valid_len[b];
    for (std::size_t h = 0; h < s.heads; ++h) {
      const auto& top = sel.top_query_idx[b * s.heads + h];
      const double* k_bh = proj.k.data() + (b * s.heads + h) * s.len_k * s.dh;
      const double* p_bh = proj.p.data() + (b * s.heads + h) * s.len_k * s.dh;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t qi = top[r];
        const double* qu1 =
            q_u1.data() + ((b * s.heads + h) * s.len_q + qi) * s.dh;
        const double* qu2 =
            q_u2.data() + ((b * s.heads + h) * s.len_q + qi) * s.dh;
        score_row(qu1, qu2, k_bh, p_bh, s.len_k, s.dh, inv_sqrt_dq, valid,
                  scores.data() + ((b * s.heads + h) * rows + r) * s.len_k);
      }
    }
  }
  // Content and position products, one multiply-accumulate counted as 2.
  ctr.add_macs(2ull * s.batch * s.heads * rows * s.len_k * s.dh);
  ctr.add_macs(2ull * s.batch * s.heads * rows * s.len_k * s.dh);
  ctr.track_free(2 * q_u1.numel() + 2 * s.batch * s.heads * s.len_k * s.dh);

  softmax_rows_inplace(scores);
  cache.probs = scores;

  const bool dropout = training && cfg.p_dropout > 0.0;
  if (dropout) {
    SeededRng drop = rng.child("dropout");
    cache.drop_keep = Tensor(scores.shape());
    ctr.track_alloc(cache.drop_keep.numel());
    const double scale = 1.0 / (1.0 - cfg.p_dropout);
    for (std::size_t i = 0; i < scores.numel(); ++i) {
      const double keep = drop.next_double() >= cfg.p_dropout ? 1.0 : 0.0;
      cache.drop_keep[i] = keep;
      scores[i] *= keep * scale;
    }
  }

  // Head outputs, concatenated: selected rows get their attention context,
  // non-selected rows keep their own value row (the partial overwrite).
  Tensor o_in({s.batch, s.len_q, s.d});
  ctr.track_alloc(o_in.numel());
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      const double* v_bh = proj.v.data() + (b * s.heads + h) * s.len_k * s.dh;
      if (sparse_rows) {
        for (std::size_t t = 0; t < s.len_q; ++t) {
          double* dst = o_in.data() + (b * s.len_q + t) * s.d + h * s.dh;
          std::copy(v_bh + t * s.dh, v_bh + (t + 1) * s.dh, dst);
        }
      }
      const auto& top = sel.top_query_idx[b * s.heads + h];
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = o_in.data() + (b * s.len_q + top[r]) * s.d + h * s.dh;
        const double* prow =
            scores.data() + ((b * s.heads + h) * rows + r) * s.len_k;
        std::fill(dst, dst + s.dh, 0.0);
        for (std::size_t j = 0; j < s.len_k; ++j) {
          const double a = prow[j];
          const double* vj = v_bh + j * s.dh;
          for (std::size_t i = 0; i < s.dh; ++i) dst[i] += a * vj[i];
        }
      }
    }
  }
  ctr.add_macs(2ull * s.batch * s.heads * rows * s.len_k * s.dh);
  ctr.track_free(scores.numel() + (dropout ? cache.drop_keep.numel() : 0));
  ctr.track_free(s.batch * s.heads * s.len_k * s.dh);  // V

  Tensor out({s.batch, s.len_q, s.d});
  matmul(o_in.data(), w.w_o.data(), out.data(), s.batch * s.len_q, s.d, s.d);
  ctr.track_free(o_in.numel());

  cache.sparse_rows = sparse_rows;
  cache.k = std::move(proj.k);
  cache.v = std::move(proj.v);
  cache.p = std::move(proj.p);
  cache.q_u1 = std::move(q_u1);
  cache.q_u2 = std::move(q_u2);
  cache.selection = std::move(sel);
  cache.o_in = std::move(o_in);
  return AttentionResult{std::move(out), std::move(cache)};
}

}  // namespace

AttentionResult probsparse_forward(const Tensor& x, const Tensor& x_p,
                                   const Tensor& y, const AttentionWeights& w,
                                   const AttentionConfig& cfg,
                                   const PaddingMask& mask, SeededRng& rng,
                                   bool training, OpCounters* counters) {
  if (cfg.mode != AttentionMode::kSparse) {
    throw std::invalid_argument("probsparse_forward requires sparse mode");
  }
  return forward_core(x, x_p, y, w, cfg, mask, rng, training, counters);
}

AttentionResult dense_forward(const Tensor& x, const Tensor& x_p,
                              const Tensor& y, const AttentionWeights& w,
                              const AttentionConfig& cfg,
                              const PaddingMask& mask, SeededRng& rng,
                              bool training, OpCounters* counters) {
  if (cfg.mode != AttentionMode::kDense) {
    throw std::invalid_argument("dense_forward requires dense mode");
  }
  return forward_core(x, x_p, y, w, cfg, mask, rng, training, counters);
}

AttentionResult attention_forward(const Tensor& x, const Tensor& x_p,
                                  const Tensor& y, const AttentionWeights& w,
                                  const AttentionConfig& cfg,
                                  const PaddingMask& mask, SeededRng& rng,
                                  bool training, OpCounters* counters) {
  return forward_core(x, x_p, y, w, cfg, mask, rng, training, counters);
}

AttentionGrads attention_backward(const AttentionCache& cache,
                                  const Tensor& d_out) {
  const AttentionConfig& cfg = cache.cfg;
  const std::size_t batch = cache.y.dim(0);
  const std::size_t len_q = cache.y.dim(1);
  const std::size_t len_k = cache.x.dim(1);
  const std::size_t heads = cfg.heads;
  const std::size_t dh = cfg.head_dim();
  const std::size_t d = cfg.model_dim;
  if (!d_out.same_shape(cache.o_in)) {
    throw std::invalid_argument("cache/d_out shape mismatch");
  }
  const double inv_sqrt_dq = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool dropout = !cache.drop_keep.shape().empty();
  const double inv_keep = dropout ? 1.0 / (1.0 - cfg.p_dropout) : 1.0;
  const std::size_t rows = cache.probs.dim(2);

  AttentionGrads g;
  g.d_w_q = Tensor({d, d});
  g.d_w_k = Tensor({d, d});
  g.d_w_v = Tensor({d, d});
  g.d_w_p = Tensor({d, d});
  g.d_w_o = Tensor({d, d});
  g.d_u1 = Tensor({heads, dh});
  g.d_u2 = Tensor({heads, dh});

  // Output projection.
  Tensor d_o_in({batch, len_q, d});
  matmul_bt(d_out.data(), cache.weights.w_o.data(), d_o_in.data(),
            batch * len_q, d, d);
  matmul_at(cache.o_in.data(), d_out.data(), g.d_w_o.data(), batch * len_q, d,
            d);

  Tensor d_qu1({batch, heads, len_q, dh});
  Tensor d_qu2({batch, heads, len_q, dh});
  Tensor d_k({batch, heads, len_k, dh});
  Tensor d_v({batch, heads, len_k, dh});
  Tensor d_p({batch, heads, len_k, dh});

  std::vector<double> d_row(len_k), d_srow(len_k);
  std::vector<char> is_selected(len_q);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t bh = b * heads + h;
      const auto& top = cache.selection.top_query_idx[bh];
      const double* k_bh = cache.k.data() + bh * len_k * dh;
      const double* v_bh = cache.v.data() + bh * len_k * dh;
      const double* p_bh = cache.p.data() + bh * len_k * dh;
      double* dk_bh = d_k.data() + bh * len_k * dh;
      double* dv_bh = d_v.data() + bh * len_k * dh;
      double* dp_bh = d_p.data() + bh * len_k * dh;

      if (cache.sparse_rows) {
        // Non-selected queries passed their own value row through; their
        // gradient routes straight into V.
        std::fill(is_selected.begin(), is_selected.end(), char{0});
        for (std::size_t qi : top) is_selected[qi] = 1;
        for (std::size_t t = 0; t < len_q; ++t) {
          if (is_selected[t]) continue;
          const double* src = d_o_in.data() + (b * len_q + t) * d + h * dh;
          double* dst = dv_bh + t * dh;
          for (std::size_t i = 0; i < dh; ++i) dst[i] += src[i];
        }
      }

      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t qi = top[r];
        const double* d_ctx = d_o_in.data() + (b * len_q + qi) * d + h * dh;
        const double* prow = cache.probs.data() + (bh * rows + r) * len_k;
        const double* keep =
            dropout ? cache.drop_keep.data() + (bh * rows + r) * len_k
                    : nullptr;

        // Through the value product (with the dropout mask applied).
        for (std::size_t j = 0; j < len_k; ++j) {
          const double* vj = v_bh + j * dh;
          double* dvj = dv_bh + j * dh;
          const double a =
              keep ? prow[j] * keep[j] * inv_keep : prow[j];
          double dot = 0.0;
          for (std::size_t i = 0; i < dh; ++i) {
            dot += d_ctx[i] * vj[i];
            dvj[i] += a * d_ctx[i];
          }
          d_row[j] = keep ? dot * keep[j] * inv_keep : dot;
        }
        // Softmax backward on the row.
        double dot_ap = 0.0;
        for (std::size_t j = 0; j < len_k; ++j) dot_ap += prow[j] * d_row[j];
        for (std::size_t j = 0; j < len_k; ++j) {
          d_srow[j] = prow[j] * (d_row[j] - dot_ap) * inv_sqrt_dq;
        }
        // Through the two score products.
        double* dq1 = d_qu1.data() + (bh * len_q + qi) * dh;
        double* dq2 = d_qu2.data() + (bh * len_q + qi) * dh;
        const double* qu1 = cache.q_u1.data() + (bh * len_q + qi) * dh;
        const double* qu2 = cache.q_u2.data() + (bh * len_q + qi) * dh;
        for (std::size_t j = 0; j < len_k; ++j) {
          const double wj = d_srow[j];
          if (wj == 0.0) continue;
          const double* kj = k_bh + j * dh;
          const double* pj = p_bh + j * dh;
          double* dkj = dk_bh + j * dh;
          double* dpj = dp_bh + j * dh;
          for (std::size_t i = 0; i < dh; ++i) {
            dq1[i] += wj * kj[i];
            dkj[i] += wj * qu1[i];
            dq2[i] += wj * pj[i];
            dpj[i] += wj * qu2[i];
          }
        }
      }
    }
  }

  // Un-transpose and fold the U biases: dQ = dQ_U1 + dQ_U2.
  Tensor d_q_flat({batch * len_q, d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len_q; ++t) {
      double* dst = d_q_flat.data() + (b * len_q + t) * d;
      for (std::size_t h = 0; h < heads; ++h) {
        const double* s1 = d_qu1.data() + ((b * heads + h) * len_q + t) * dh;
        const double* s2 = d_qu2.data() + ((b * heads + h) * len_q + t) * dh;
        for (std::size_t i = 0; i < dh; ++i) {
          dst[h * dh + i] = s1[i] + s2[i];
          g.d_u1.at2(h, i) += s1[i];
          g.d_u2.at2(h, i) += s2[i];
        }
      }
    }
  }

  auto from_head_major = [&](const Tensor& hm, std::size_t len) {
    Tensor flat({batch * len, d});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* src = hm.data() + (b * heads + h) * len * dh;
        for (std::size_t t = 0; t < len; ++t) {
          std::copy(src + t * dh, src + (t + 1) * dh,
                    flat.data() + (b * len + t) * d + h * dh);
        }
      }
    }
    return flat;
  };

  Tensor d_k_flat = from_head_major(d_k, len_k);
  Tensor d_v_flat = from_head_major(d_v, len_k);
  Tensor d_p_flat = from_head_major(d_p, len_k);

  g.d_y = Tensor({batch, len_q, d});
  matmul_bt(d_q_flat.data(), cache.weights.w_q.data(), g.d_y.data(),
            batch * len_q, d, d);
  matmul_at(cache.y.data(), d_q_flat.data(), g.d_w_q.data(), batch * len_q, d,
            d);

  g.d_x = Tensor({batch, len_k, d});
  matmul_bt(d_k_flat.data(), cache.weights.w_k.data(), g.d_x.data(),
            batch * len_k, d, d);
  matmul_bt(d_v_flat.data(), cache.weights.w_v.data(), g.d_x.data(),
            batch * len_k, d, d, /*accumulate=*/true);
  matmul_at(cache.x.data(), d_k_flat.data(), g.d_w_k.data(), batch * len_k, d,
            d);
  matmul_at(cache.x.data(), d_v_flat.data(), g.d_w_v.data(), batch * len_k, d,
            d);

  g.d_x_p = Tensor({batch, len_k, d});
  matmul_bt(d_p_flat.data(), cache.weights.w_p.data(), g.d_x_p.data(),
            batch * len_k, d, d);
  matmul_at(cache.x_p.data(), d_p_flat.data(), g.d_w_p.data(), batch * len_k,
            d, d);
  return g;
}

std::uint64_t flop_estimate(const AttentionConfig& cfg, std::size_t len) {
  cfg.validate();
  if (len == 0) throw std::invalid_argument("flop_estimate: empty length");
  const std::uint64_t h = cfg.heads;
  const std::uint64_t dh = cfg.head_dim();
  const std::uint64_t L = len;
  const std::uint64_t dense_total = 4ull * h * L * L * dh + 2ull * h * L * L * dh;
  if (cfg.mode == AttentionMode::kDense) return dense_total;
  const std::uint64_t lq = selected_query_count(cfg, len);
  if (lq >= L) return dense_total;  // selection saturates
  const std::uint64_t lk = sampled_key_count(cfg, len);
  return 2ull * h * L * lk * dh      // sparsity measure
         + 4ull * h * lq * L * dh    // content + position scores
         + 2ull * h * lq * L * dh;   // value product
}

}  // namespace dsc
