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

#include "dsc/conformer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dsc {

double deepnorm_alpha(std::size_t n_blocks, std::size_t decoder_blocks) {
  if (n_blocks == 0 || decoder_blocks == 0) {
    throw std::invalid_argument("deepnorm: block counts must be positive");
  }
  const double n = static_cast<double>(n_blocks);
  const double m = static_cast<double>(decoder_blocks);
  return 0.81 * std::pow(n * n * n * n * m, 1.0 / 16.0);
}

double deepnorm_beta(std::size_t n_blocks, std::size_t decoder_blocks) {
  if (n_blocks == 0 || decoder_blocks == 0) {
    throw std::invalid_argument("deepnorm: block counts must be positive");
  }
  const double n = static_cast<double>(n_blocks);
  const double m = static_cast<double>(decoder_blocks);
  return 0.87 * std::pow(n * n * n * n * m, -1.0 / 16.0);
}

DeepNormParams make_deepnorm(std::size_t n_blocks,
                             std::size_t decoder_blocks) {
  DeepNormParams p;
  p.alpha = deepnorm_alpha(n_blocks, decoder_blocks);
  p.beta = deepnorm_beta(n_blocks, decoder_blocks);
  p.n = n_blocks;
  p.m = decoder_blocks;
  return p;
}

LayerNormParams LayerNormParams::unit(std::size_t width, double eps) {
  LayerNormParams p;
  p.gamma = Tensor::full({width}, 1.0);
  p.beta = Tensor({width});
  p.eps = eps;
  return p;
}

void EncoderConfig::validate() const {
  if (n_blocks == 0) throw std::invalid_argument("encoder: zero blocks");
  if (d_ffn < d) {
    throw std::invalid_argument("encoder: d_ffn must be at least d");
  }
  if (kernel == 0 || kernel % 2 == 0) {
    throw std::invalid_argument("even kernel");
  }
  if (decoder_blocks == 0) {
    throw std::invalid_argument("encoder: zero decoder blocks");
  }
  attention_config().validate();
}

AttentionConfig EncoderConfig::attention_config() const {
  AttentionConfig a;
  a.heads = h;
  a.model_dim = d;
  a.c1 = c1;
  a.c2 = c2;
  a.p_dropout = p_dropout;
  a.mode = mode;
  return a;
}

Tensor deep_norm(const Tensor& x, const Tensor& fx, double alpha,
                 const LayerNormParams& ln, LayerNormCache* cache) {
  if (!x.same_shape(fx)) {
    throw std::invalid_argument("deep_norm: x/fx shape mismatch");
  }
  Tensor s(x.shape());
  for (std::size_t i = 0; i < s.numel(); ++i) s[i] = alpha * x[i] + fx[i];
  return layer_norm(s, ln.gamma, ln.beta, ln.eps, cache);
}

namespace {

void check_block_input(const Tensor& x, std::size_t d, const char* who) {
  if (x.rank() != 3 || x.dim(2) != d) {
    throw std::invalid_argument(std::string(who) +
                                ": expected (batch, len, width) input, got " +
                                shape_to_string(x.shape()));
  }
}

}  // namespace

Tensor macaron_ffn(const Tensor& x, const FfnParams& p, FfnCache* cache) {
  if (x.rank() < 2) {
    throw std::invalid_argument("macaron_ffn: input rank must be >= 2");
  }
  const std::size_t d = x.last_dim();
  const std::size_t rows = x.numel() / d;
  if (p.w1.rank() != 2 || p.w1.dim(0) != d || p.w2.rank() != 2 ||
      p.w2.dim(1) != d || p.w1.dim(1) != p.w2.dim(0) ||
      p.b1.numel() != p.w1.dim(1) || p.b2.numel() != d) {
    throw std::invalid_argument("macaron_ffn: weight shape mismatch");
  }
  const std::size_t dff = p.w1.dim(1);

  Tensor z1({rows, dff});
  matmul(x.data(), p.w1.data(), z1.data(), rows, d, dff);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dff; ++j) z1.data()[r * dff + j] += p.b1[j];
  }
  Tensor sw(z1.shape());
  for (std::size_t i = 0; i < z1.numel(); ++i) sw[i] = swish(z1[i]);
  Tensor out_flat({rows, d});
  matmul(sw.data(), p.w2.data(), out_flat.data(), rows, dff, d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out_flat.data()[r * d + j] += p.b2[j];
  }
  if (cache) {
    cache->x = x;
    cache->z1 = std::move(z1);
  }
  return out_flat.reshaped(x.shape());
}

Tensor macaron_ffn_backward(const FfnCache& cache, const FfnParams& p,
                            const Tensor& d_out, FfnParams& grad) {
  const Tensor& x = cache.x;
  if (!d_out.same_shape(x)) {
    throw std::invalid_argument("macaron_ffn backward: shape mismatch");
  }
  const std::size_t d = x.last_dim();
  const std::size_t rows = x.numel() / d;
  const std::size_t dff = p.w1.dim(1);

  // Recompute the activations from the cached pre-activation.
  Tensor sw({rows, dff});
  for (std::size_t i = 0; i < sw.numel(); ++i) sw[i] = swish(cache.z1[i]);

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      grad.b2[j] += d_out[r * d + j];
    }
  }
  matmul_at(sw.data(), d_out.data(), grad.w2.data(), rows, dff, d,
            /*accumulate=*/true);

  Tensor d_z1({rows, dff});
  matmul_bt(d_out.data(), p.w2.data(), d_z1.data(), rows, d, dff);
  for (std::size_t i = 0; i < d_z1.numel(); ++i) {
    d_z1[i] *= swish_grad(cache.z1[i]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dff; ++j) grad.b1[j] += d_z1[r * dff + j];
  }
  matmul_at(x.data(), d_z1.data(), grad.w1.data(), rows, d, dff,
            /*accumulate=*/true);

  Tensor d_x(x.shape());
  matmul_bt(d_z1.data(), p.w1.data(), d_x.data(), rows, dff, d);
  return d_x;
}

Tensor conv_module(const Tensor& x, const ConvParams& p,
                   const PaddingMask& mask, ConvCache* cache) {
  if (x.rank() != 3) {
    throw std::invalid_argument("conv_module: expected (batch, len, width)");
  }
  const std::size_t b = x.dim(0), len = x.dim(1), d = x.dim(2);
  mask.validate(b, len);
  const std::size_t k = p.depthwise.dim(0);
  if (k == 0 || k % 2 == 0) throw std::invalid_argument("even kernel");
  if (p.pointwise_in.dim(0) != d || p.pointwise_in.dim(1) != 2 * d ||
      p.b_in.numel() != 2 * d || p.depthwise.dim(1) != d ||
      p.pointwise_out.dim(0) != d || p.pointwise_out.dim(1) != d) {
    throw std::invalid_argument("conv_module: weight shape mismatch");
  }
  const std::size_t rows = b * len;
  const std::size_t off = (k - 1) / 2;

  Tensor z({b, len, 2 * d});
  matmul(x.data(), p.pointwise_in.data(), z.data(), rows, d, 2 * d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < 2 * d; ++j) z.data()[r * 2 * d + j] += p.b_in[j];
  }

  // GLU, then zero the padded frames so they cannot leak into the
  // convolution window of a valid frame.
  Tensor glu({b, len, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    const std::size_t valid = mask.valid_len[bi];
    for (std::size_t t = 0; t < len; ++t) {
      const double* zr = z.data() + (bi * len + t) * 2 * d;
      double* gr = glu.data() + (bi * len + t) * d;
      if (t >= valid) continue;  // stays zero
      for (std::size_t c = 0; c < d; ++c) {
        gr[c] = zr[c] * sigmoid(zr[d + c]);
      }
    }
  }

  Tensor dw({b, len, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      double* out = dw.data() + (bi * len + t) * d;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(off);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const double* in = glu.data() + (bi * len + src) * d;
        const double* w = p.depthwise.data() + j * d;
        for (std::size_t c = 0; c < d; ++c) out[c] += w[c] * in[c];
      }
    }
  }

  LayerNormCache ln_scratch;
  LayerNormCache* lnc = cache ? &cache->ln : &ln_scratch;
  Tensor ln_out = layer_norm(dw, p.norm.gamma, p.norm.beta, p.norm.eps, lnc);

  Tensor sw(ln_out.shape());
  for (std::size_t i = 0; i < sw.numel(); ++i) sw[i] = swish(ln_out[i]);
  Tensor out({b, len, d});
  matmul(sw.data(), p.pointwise_out.data(), out.data(), rows, d, d);

  if (cache) {
    cache->x = x;
    cache->mask = mask;
    cache->z = std::move(z);
    cache->glu_masked = std::move(glu);
    cache->ln_out = std::move(ln_out);
  }
  return out;
}

Tensor conv_module_backward(const ConvCache& cache, const ConvParams& p,
                            const Tensor& d_out, ConvParams& grad) {
  const Tensor& x = cache.x;
  if (!d_out.same_shape(x)) {
    throw std::invalid_argument("conv_module backward: shape mismatch");
  }
  const std::size_t b = x.dim(0), len = x.dim(1), d = x.dim(2);
  const std::size_t rows = b * len;
  const std::size_t k = p.depthwise.dim(0);
  const std::size_t off = (k - 1) / 2;

  Tensor sw(cache.ln_out.shape());
  for (std::size_t i = 0; i < sw.numel(); ++i) sw[i] = swish(cache.ln_out[i]);
  matmul_at(sw.data(), d_out.data(), grad.pointwise_out.data(), rows, d, d,
            /*accumulate=*/true);
  Tensor d_ln({b, len, d});
  matmul_bt(d_out.data(), p.pointwise_out.data(), d_ln.data(), rows, d, d);
  for (std::size_t i = 0; i < d_ln.numel(); ++i) {
    d_ln[i] *= swish_grad(cache.ln_out[i]);
  }

  Tensor d_dw;
  layer_norm_backward(cache.ln, p.norm.gamma, d_ln, &d_dw, &grad.norm.gamma,
                      &grad.norm.beta);

  Tensor d_glu({b, len, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      const double* dr = d_dw.data() + (bi * len + t) * d;
      const double* glu_row = cache.glu_masked.data();
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(off);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        double* dg = d_glu.data() + (bi * len + src) * d;
        const double* gm = glu_row + (bi * len + src) * d;
        const double* w = p.depthwise.data() + j * d;
        double* dwj = grad.depthwise.data() + j * d;
        for (std::size_t c = 0; c < d; ++c) {
          dg[c] += w[c] * dr[c];
          dwj[c] += gm[c] * dr[c];
        }
      }
    }
  }

  // GLU backward; padded frames were zeroed in the forward, so their
  // gradient stops here.
  Tensor d_z({b, len, 2 * d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    const std::size_t valid = cache.mask.valid_len[bi];
    for (std::size_t t = 0; t < valid; ++t) {
      const double* zr = cache.z.data() + (bi * len + t) * 2 * d;
      const double* dg = d_glu.data() + (bi * len + t) * d;
      double* dz = d_z.data() + (bi * len + t) * 2 * d;
      for (std::size_t c = 0; c < d; ++c) {
        const double sg = sigmoid(zr[d + c]);
        dz[c] = dg[c] * sg;
        dz[d + c] = dg[c] * zr[c] * sg * (1.0 - sg);
      }
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < 2 * d; ++j) {
      grad.b_in[j] += d_z[r * 2 * d + j];
    }
  }
  matmul_at(x.data(), d_z.data(), grad.pointwise_in.data(), rows, d, 2 * d,
            /*accumulate=*/true);
  Tensor d_x(x.shape());
  matmul_bt(d_z.data(), p.pointwise_in.data(), d_x.data(), rows, 2 * d, d);
  return d_x;
}

namespace {

void push_trace(StageTrace* trace, std::size_t block, const char* stage,
                double alpha) {
  if (!trace) return;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "block=%zu stage=%s alpha=%.9g", block,
                stage, alpha);
  trace->emplace_back(buf);
}

}  // namespace

BlockResult block_forward(const Tensor& x, const BlockParams& params,
                          const EncoderConfig& cfg, const PaddingMask& mask,
                          SeededRng& rng, bool training, StageTrace* trace,
                          std::size_t block_index) {
  cfg.validate();
  check_block_input(x, cfg.d, "block_forward");
  mask.validate(x.dim(0), x.dim(1));
  const double alpha = params.deepnorm.alpha;

  BlockResult res;
  BlockCache& c = res.cache;
  c.cfg = cfg;
  c.params = params;
  c.mask = mask;
  c.x = x;

  // first half-step feed-forward sub-layer
  Tensor f1 = macaron_ffn(x, params.ffn1, &c.ffn1_c);
  Tensor h1 = deep_norm(x, f1 * 0.5, alpha, params.ln1, &c.ln1_c);
  push_trace(trace, block_index, "ffn1", alpha);

  // multi-head self-attention, sparse or dense per cfg.mode
  const Tensor x_p = batch_tile(relpos_encoding(x.dim(1), cfg.d), x.dim(0));
  SeededRng attn_rng = rng.child("attn");
  AttentionResult ar =
      attention_forward(h1, x_p, h1, params.attn, cfg.attention_config(),
                        mask, attn_rng, training);
  Tensor h2 = deep_norm(h1, ar.out, alpha, params.ln2, &c.ln2_c);
  c.attn_c = std::move(ar.cache);
  push_trace(trace, block_index, "mhsa", alpha);

  // convolution sub-layer
  Tensor cv = conv_module(h2, params.conv, mask, &c.conv_c);
  Tensor h3 = deep_norm(h2, cv, alpha, params.ln3, &c.ln3_c);
  push_trace(trace, block_index, "conv", alpha);

  // second half-step feed-forward sub-layer
  Tensor f2 = macaron_ffn(h3, params.ffn2, &c.ffn2_c);
  res.y = deep_norm(h3, f2 * 0.5, alpha, params.ln4, &c.ln4_c);
  push_trace(trace, block_index, "ffn2", alpha);
  return res;
}

BlockGrads block_backward(const BlockCache& cache, const Tensor& d_y) {
  const BlockParams& p = cache.params;
  const double alpha = p.deepnorm.alpha;
  BlockGrads out;
  out.g = zero_like(p);

  // Stage 4 (second FFN).
  Tensor d_s4;
  layer_norm_backward(cache.ln4_c, p.ln4.gamma, d_y, &d_s4, &out.g.ln4.gamma,
                      &out.g.ln4.beta);
  Tensor d_f2 = d_s4 * 0.5;
  Tensor d_h3 = macaron_ffn_backward(cache.ffn2_c, p.ffn2, d_f2, out.g.ffn2);
  axpy_inplace(d_h3, alpha, d_s4);

  // Stage 3 (conv).
  Tensor d_s3;
  layer_norm_backward(cache.ln3_c, p.ln3.gamma, d_h3, &d_s3, &out.g.ln3.gamma,
                      &out.g.ln3.beta);
  Tensor d_h2 = conv_module_backward(cache.conv_c, p.conv, d_s3, out.g.conv);
  axpy_inplace(d_h2, alpha, d_s3);

  // Stage 2 (attention; the position table is a fixed input, its gradient
  // is dropped).
  Tensor d_s2;
  layer_norm_backward(cache.ln2_c, p.ln2.gamma, d_h2, &d_s2, &out.g.ln2.gamma,
                      &out.g.ln2.beta);
  AttentionGrads ag = attention_backward(cache.attn_c, d_s2);
  Tensor d_h1 = ag.d_x;
  add_inplace(d_h1, ag.d_y);
  axpy_inplace(d_h1, alpha, d_s2);
  out.g.attn.w_q = std::move(ag.d_w_q);
  out.g.attn.w_k = std::move(ag.d_w_k);
  out.g.attn.w_v = std::move(ag.d_w_v);
  out.g.attn.w_p = std::move(ag.d_w_p);
  out.g.attn.w_o = std::move(ag.d_w_o);
  out.g.attn.u1 = std::move(ag.d_u1);
  out.g.attn.u2 = std::move(ag.d_u2);

  // Stage 1 (first FFN).
  Tensor d_s1;
  layer_norm_backward(cache.ln1_c, p.ln1.gamma, d_h1, &d_s1, &out.g.ln1.gamma,
                      &out.g.ln1.beta);
  Tensor d_f1 = d_s1 * 0.5;
  out.d_x = macaron_ffn_backward(cache.ffn1_c, p.ffn1, d_f1, out.g.ffn1);
  axpy_inplace(out.d_x, alpha, d_s1);
  return out;
}

EncoderResult encoder_forward(const Tensor& x,
                              const std::vector<BlockParams>& blocks,
                              const EncoderConfig& cfg,
                              const PaddingMask& mask, SeededRng& rng,
                              bool training, StageTrace* trace) {
  cfg.validate();
  if (blocks.empty()) throw std::invalid_argument("encoder: zero blocks");
  if (blocks.size() != cfg.n_blocks) {
    throw std::invalid_argument("encoder: block parameter count mismatch");
  }
  check_block_input(x, cfg.d, "encoder_forward");
  mask.validate(x.dim(0), x.dim(1));

  EncoderResult res;
  res.cache.cfg = cfg;
  res.cache.x = x;
  res.cache.blocks.reserve(blocks.size());

  Tensor h = x;
  if (cfg.norm_style == NormStyle::kDeepnormPostlnMixture) {
    // The mixture adds exactly one unparameterized norm on the stack input.
    const Tensor ones = Tensor::full({cfg.d}, 1.0);
    const Tensor zeros({cfg.d});
    h = layer_norm(h, ones, zeros, kLayerNormEps, &res.cache.in_ln_c);
    res.cache.input_ln = true;
  }

  SeededRng stack_rng = rng.child("block");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    SeededRng brng = stack_rng.child(i);
    BlockResult br =
        block_forward(h, blocks[i], cfg, mask, brng, training, trace, i);
    h = std::move(br.y);
    res.cache.blocks.emplace_back(std::move(br.cache));
  }
  res.y = std::move(h);
  return res;
}

EncoderGrads encoder_backward(const EncoderCache& cache, const Tensor& d_y) {
  if (cache.blocks.empty()) {
    throw std::invalid_argument("encoder backward: empty cache");
  }
  EncoderGrads out;
  out.blocks.resize(cache.blocks.size());
  Tensor d = d_y;
  for (std::size_t i = cache.blocks.size(); i-- > 0;) {
    if (!d.same_shape(cache.blocks[i].x)) {
      throw std::invalid_argument("encoder backward: cache mismatch");
    }
    BlockGrads bg = block_backward(cache.blocks[i], d);
    d = std::move(bg.d_x);
    out.blocks[i] = std::move(bg.g);
  }
  if (cache.input_ln) {
    const Tensor ones = Tensor::full({cache.cfg.d}, 1.0);
    Tensor d_x;
    layer_norm_backward(cache.in_ln_c, ones, d, &d_x, nullptr, nullptr);
    d = std::move(d_x);
  }
  out.d_x = std::move(d);
  return out;
}

BlockParams init_block(const EncoderConfig& cfg, SeededRng& rng,
                       const DeepNormParams& dn) {
  const std::size_t d = cfg.d, dff = cfg.d_ffn, k = cfg.kernel;
  const double gain =
      cfg.norm_style == NormStyle::kDeepnormPostlnMixture ? dn.beta : 1.0;
  BlockParams p;
  p.deepnorm = dn;
  if (cfg.norm_style == NormStyle::kPlainPostln) {
    p.deepnorm.alpha = 1.0;
  }

  SeededRng r1 = rng.child("ffn1");
  SeededRng r1a = r1.child("W1"), r1b = r1.child("W2");
  p.ffn1.w1 = xavier_init(r1a, d, dff, gain);
  p.ffn1.b1 = Tensor({dff});
  p.ffn1.w2 = xavier_init(r1b, dff, d, gain);
  p.ffn1.b2 = Tensor({d});

  SeededRng r2 = rng.child("ffn2");
  SeededRng r2a = r2.child("W1"), r2b = r2.child("W2");
  p.ffn2.w1 = xavier_init(r2a, d, dff, gain);
  p.ffn2.b1 = Tensor({dff});
  p.ffn2.w2 = xavier_init(r2b, dff, d, gain);
  p.ffn2.b2 = Tensor({d});

  SeededRng rc = rng.child("conv");
  SeededRng rca = rc.child("pointwise_in"), rcb = rc.child("depthwise");
  SeededRng rcc = rc.child("pointwise_out");
  p.conv.pointwise_in = xavier_init(rca, d, 2 * d, 1.0);
  p.conv.b_in = Tensor({2 * d});
  p.conv.depthwise = xavier_init(rcb, k, d, 1.0);
  p.conv.pointwise_out = xavier_init(rcc, d, d, 1.0);
  p.conv.norm = LayerNormParams::unit(d);

  SeededRng ra = rng.child("attn");
  p.attn = init_attention_weights(cfg.attention_config(), ra, gain);

  p.ln1 = LayerNormParams::unit(d);
  p.ln2 = LayerNormParams::unit(d);
  p.ln3 = LayerNormParams::unit(d);
  p.ln4 = LayerNormParams::unit(d);
  return p;
}

std::vector<BlockParams> init_encoder(const EncoderConfig& cfg,
                                      SeededRng& rng) {
  cfg.validate();
  const DeepNormParams dn = make_deepnorm(cfg.n_blocks, cfg.decoder_blocks);
  std::vector<BlockParams> blocks;
  blocks.reserve(cfg.n_blocks);
  SeededRng root = rng.child("init");
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    SeededRng r = root.child(i);
    blocks.emplace_back(init_block(cfg, r, dn));
  }
  return blocks;
}

namespace {

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

LayerNormParams zeros_like(const LayerNormParams& p) {
  LayerNormParams z;
  z.gamma = zeros_like(p.gamma);
  z.beta = zeros_like(p.beta);
  z.eps = p.eps;
  return z;
}

}  // namespace

BlockParams zero_like(const BlockParams& p) {
  BlockParams z;
  z.ffn1 = {zeros_like(p.ffn1.w1), zeros_like(p.ffn1.b1),
            zeros_like(p.ffn1.w2), zeros_like(p.ffn1.b2)};
  z.ffn2 = {zeros_like(p.ffn2.w1), zeros_like(p.ffn2.b1),
            zeros_like(p.ffn2.w2), zeros_like(p.ffn2.b2)};
  z.conv.pointwise_in = zeros_like(p.conv.pointwise_in);
  z.conv.b_in = zeros_like(p.conv.b_in);
  z.conv.depthwise = zeros_like(p.conv.depthwise);
  z.conv.pointwise_out = zeros_like(p.conv.pointwise_out);
  z.conv.norm = zeros_like(p.conv.norm);
  z.attn.w_q = zeros_like(p.attn.w_q);
  z.attn.w_k = zeros_like(p.attn.w_k);
  z.attn.w_v = zeros_like(p.attn.w_v);
  z.attn.w_p = zeros_like(p.attn.w_p);
  z.attn.w_o = zeros_like(p.attn.w_o);
  z.attn.u1 = zeros_like(p.attn.u1);
  z.attn.u2 = zeros_like(p.attn.u2);
  z.ln1 = zeros_like(p.ln1);
  z.ln2 = zeros_like(p.ln2);
  z.ln3 = zeros_like(p.ln3);
  z.ln4 = zeros_like(p.ln4);
  z.deepnorm = DeepNormParams{0.0, 0.0, p.deepnorm.n, p.deepnorm.m};
  return z;
}

}  // namespace dsc
