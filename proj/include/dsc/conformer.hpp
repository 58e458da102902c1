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

#ifndef DSC_CONFORMER_HPP_
#define DSC_CONFORMER_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "dsc/attention.hpp"
#include "dsc/ops.hpp"
#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

enum class NormStyle { kDeepnormPostlnMixture, kPlainPostln };

/// Residual-scale and init-gain pair for a stack of n encoder blocks paired
/// (formally) with m decoder blocks. All four residual stages of a block
/// share the same alpha.
struct DeepNormParams {
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t n = 1;
  std::size_t m = 1;
};

double deepnorm_alpha(std::size_t n_blocks, std::size_t decoder_blocks);
double deepnorm_beta(std::size_t n_blocks, std::size_t decoder_blocks);
DeepNormParams make_deepnorm(std::size_t n_blocks, std::size_t decoder_blocks);

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double eps = kLayerNormEps;  // per-layer; not serialized

  static LayerNormParams unit(std::size_t width, double eps = kLayerNormEps);
};

/// Position-wise feed-forward: W2 * swish(W1 * x + b1) + b2. The macaron
/// half-step factor 0.5 is applied by the block, never here.
struct FfnParams {
  Tensor w1;  // (d, d_ffn)
  Tensor b1;  // (d_ffn)
  Tensor w2;  // (d_ffn, d)
  Tensor b2;  // (d)
};

/// Convolution module: pointwise (d -> 2d) + gate bias, GLU, depthwise over
/// time (odd kernel, same-padding, padded frames read as zero), layer norm
/// over channels, swish, pointwise (d -> d).
struct ConvParams {
  Tensor pointwise_in;   // (d, 2d)
  Tensor b_in;           // (2d); second half biases the GLU gate
  Tensor depthwise;      // (k, d)
  Tensor pointwise_out;  // (d, d)
  LayerNormParams norm;  // channel norm between depthwise and swish
};

struct BlockParams {
  FfnParams ffn1, ffn2;
  ConvParams conv;
  AttentionWeights attn;
  LayerNormParams ln1, ln2, ln3, ln4;
  DeepNormParams deepnorm;
};

struct EncoderConfig {
  std::size_t n_blocks = 12;
  std::size_t d = 512;
  std::size_t d_ffn = 2048;
  std::size_t h = 8;
  std::size_t kernel = 31;
  double c1 = 5.0;
  double c2 = 5.0;
  double p_dropout = 0.0;
  AttentionMode mode = AttentionMode::kSparse;
  NormStyle norm_style = NormStyle::kDeepnormPostlnMixture;
  // Decoder depth enters only through the alpha/beta formula; no decoder is
  // built here.
  std::size_t decoder_blocks = 3;

  void validate() const;
  AttentionConfig attention_config() const;
};

// ---- caches ---------------------------------------------------------------

struct FfnCache {
  Tensor x;   // input (b, L, d)
  Tensor z1;  // pre-activation (b, L, d_ffn)
};

struct ConvCache {
  Tensor x;           // input (b, L, d)
  PaddingMask mask;
  Tensor z;           // pointwise-in output (b, L, 2d), pre-GLU
  Tensor glu_masked;  // gated output with padded frames zeroed (b, L, d)
  LayerNormCache ln;
  Tensor ln_out;      // normalized signal, input to swish (b, L, d)
};

struct BlockCache {
  EncoderConfig cfg;
  BlockParams params;
  PaddingMask mask;
  Tensor x;  // block input
  FfnCache ffn1_c;
  LayerNormCache ln1_c;
  AttentionCache attn_c;
  LayerNormCache ln2_c;
  ConvCache conv_c;
  LayerNormCache ln3_c;
  FfnCache ffn2_c;
  LayerNormCache ln4_c;
};

struct EncoderCache {
  EncoderConfig cfg;
  Tensor x;  // raw encoder input
  bool input_ln = false;
  LayerNormCache in_ln_c;  // the mixture's parameter-free input norm
  std::vector<BlockCache> blocks;
};

struct BlockResult {
  Tensor y;
  BlockCache cache;
};

struct EncoderResult {
  Tensor y;
  EncoderCache cache;
};

/// Gradients reuse the parameter containers shape-for-shape; the DeepNorm
/// scalars inside a gradient container are meaningless and left zero.
struct BlockGrads {
  Tensor d_x;
  BlockParams g;
};

struct EncoderGrads {
  Tensor d_x;
  std::vector<BlockParams> blocks;
};

/// One debug line per sub-layer: "block=<i> stage=<name> alpha=<val>".
using StageTrace = std::vector<std::string>;

// ---- operations -----------------------------------------------------------

/// LayerNorm(alpha * x + fx): the scaled-residual connection.
Tensor deep_norm(const Tensor& x, const Tensor& fx, double alpha,
                 const LayerNormParams& ln, LayerNormCache* cache = nullptr);

Tensor macaron_ffn(const Tensor& x, const FfnParams& p,
                   FfnCache* cache = nullptr);
/// Returns d_x; accumulates parameter gradients into grad.
Tensor macaron_ffn_backward(const FfnCache& cache, const FfnParams& p,
                            const Tensor& d_out, FfnParams& grad);

Tensor conv_module(const Tensor& x, const ConvParams& p,
                   const PaddingMask& mask, ConvCache* cache = nullptr);
Tensor conv_module_backward(const ConvCache& cache, const ConvParams& p,
                            const Tensor& d_out, ConvParams& grad);

BlockResult block_forward(const Tensor& x, const BlockParams& params,
                          const EncoderConfig& cfg, const PaddingMask& mask,
                          SeededRng& rng, bool training,
                          StageTrace* trace = nullptr,
                          std::size_t block_index = 0);
BlockGrads block_backward(const BlockCache& cache, const Tensor& d_y);

EncoderResult encoder_forward(const Tensor& x,
                              const std::vector<BlockParams>& blocks,
                              const EncoderConfig& cfg,
                              const PaddingMask& mask, SeededRng& rng,
                              bool training, StageTrace* trace = nullptr);
EncoderGrads encoder_backward(const EncoderCache& cache, const Tensor& d_y);

BlockParams init_block(const EncoderConfig& cfg, SeededRng& rng,
                       const DeepNormParams& dn);
std::vector<BlockParams> init_encoder(const EncoderConfig& cfg,
                                      SeededRng& rng);

/// Zero tensors with the same shapes as p; used as a gradient accumulator.
BlockParams zero_like(const BlockParams& p);

}  // namespace dsc

#endif  // DSC_CONFORMER_HPP_
