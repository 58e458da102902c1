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

#include "dsc/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace dsc {

void to_json(nlohmann::json& j, const Tensor& t) {
  j = nlohmann::json{{"shape", t.shape()},
                     {"data", std::vector<double>(t.data(),
                                                  t.data() + t.numel())}};
}

void from_json(const nlohmann::json& j, Tensor& t) {
  Shape shape = j.at("shape").get<Shape>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  t = Tensor(std::move(shape), std::move(data));
}

std::string mode_to_string(AttentionMode mode) {
  return mode == AttentionMode::kSparse ? "sparse" : "dense";
}

AttentionMode mode_from_string(const std::string& s) {
  if (s == "sparse") return AttentionMode::kSparse;
  if (s == "dense") return AttentionMode::kDense;
  throw std::invalid_argument("unknown attention mode: " + s);
}

std::string norm_style_to_string(NormStyle style) {
  return style == NormStyle::kDeepnormPostlnMixture ? "deepnorm_postln_mixture"
                                                    : "plain_postln";
}

NormStyle norm_style_from_string(const std::string& s) {
  if (s == "deepnorm_postln_mixture") return NormStyle::kDeepnormPostlnMixture;
  if (s == "plain_postln") return NormStyle::kPlainPostln;
  throw std::invalid_argument("unknown norm style: " + s);
}

void to_json(nlohmann::json& j, const EncoderConfig& cfg) {
  j = nlohmann::json{{"n_blocks", cfg.n_blocks},
                     {"d", cfg.d},
                     {"d_ffn", cfg.d_ffn},
                     {"h", cfg.h},
                     {"kernel", cfg.kernel},
                     {"c1", cfg.c1},
                     {"c2", cfg.c2},
                     {"p_dropout", cfg.p_dropout},
                     {"mode", mode_to_string(cfg.mode)},
                     {"norm_style", norm_style_to_string(cfg.norm_style)},
                     {"decoder_blocks", cfg.decoder_blocks}};
}

void apply_config_json(const nlohmann::json& j, EncoderConfig& cfg) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: expected a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "n_blocks") {
      cfg.n_blocks = value.get<std::size_t>();
    } else if (key == "d") {
      cfg.d = value.get<std::size_t>();
    } else if (key == "d_ffn") {
      cfg.d_ffn = value.get<std::size_t>();
    } else if (key == "h") {
      cfg.h = value.get<std::size_t>();
    } else if (key == "kernel") {
      cfg.kernel = value.get<std::size_t>();
    } else if (key == "c1") {
      cfg.c1 = value.get<double>();
    } else if (key == "c2") {
      cfg.c2 = value.get<double>();
    } else if (key == "p_dropout") {
      cfg.p_dropout = value.get<double>();
    } else if (key == "mode") {
      cfg.mode = mode_from_string(value.get<std::string>());
    } else if (key == "norm_style") {
      cfg.norm_style = norm_style_from_string(value.get<std::string>());
    } else if (key == "decoder_blocks") {
      cfg.decoder_blocks = value.get<std::size_t>();
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
}

void from_json(const nlohmann::json& j, EncoderConfig& cfg) {
  cfg = EncoderConfig{};
  apply_config_json(j, cfg);
}

nlohmann::json weights_to_json(const AttentionWeights& w) {
  return nlohmann::json{{"W_Q", w.w_q}, {"W_K", w.w_k}, {"W_V", w.w_v},
                        {"W_P", w.w_p}, {"W_O", w.w_o}, {"U1", w.u1},
                        {"U2", w.u2}};
}

AttentionWeights weights_from_json(const nlohmann::json& j,
                                   const AttentionConfig& cfg) {
  AttentionWeights w;
  w.w_q = j.at("W_Q").get<Tensor>();
  w.w_k = j.at("W_K").get<Tensor>();
  w.w_v = j.at("W_V").get<Tensor>();
  w.w_p = j.at("W_P").get<Tensor>();
  w.w_o = j.at("W_O").get<Tensor>();
  w.u1 = j.at("U1").get<Tensor>();
  w.u2 = j.at("U2").get<Tensor>();
  w.validate(cfg);
  return w;
}

nlohmann::json block_to_json(const BlockParams& p) {
  nlohmann::json j;
  j["ffn1.W1"] = p.ffn1.w1;
  j["ffn1.b1"] = p.ffn1.b1;
  j["ffn1.W2"] = p.ffn1.w2;
  j["ffn1.b2"] = p.ffn1.b2;
  j["ffn2.W1"] = p.ffn2.w1;
  j["ffn2.b1"] = p.ffn2.b1;
  j["ffn2.W2"] = p.ffn2.w2;
  j["ffn2.b2"] = p.ffn2.b2;
  j["conv.pointwise_in"] = p.conv.pointwise_in;
  j["conv.b_in"] = p.conv.b_in;
  j["conv.depthwise"] = p.conv.depthwise;
  j["conv.pointwise_out"] = p.conv.pointwise_out;
  j["conv.norm.gamma"] = p.conv.norm.gamma;
  j["conv.norm.beta"] = p.conv.norm.beta;
  j["attn.W_Q"] = p.attn.w_q;
  j["attn.W_K"] = p.attn.w_k;
  j["attn.W_V"] = p.attn.w_v;
  j["attn.W_P"] = p.attn.w_p;
  j["attn.W_O"] = p.attn.w_o;
  j["attn.U1"] = p.attn.u1;
  j["attn.U2"] = p.attn.u2;
  j["ln1.gamma"] = p.ln1.gamma;
  j["ln1.beta"] = p.ln1.beta;
  j["ln2.gamma"] = p.ln2.gamma;
  j["ln2.beta"] = p.ln2.beta;
  j["ln3.gamma"] = p.ln3.gamma;
  j["ln3.beta"] = p.ln3.beta;
  j["ln4.gamma"] = p.ln4.gamma;
  j["ln4.beta"] = p.ln4.beta;
  return j;
}

BlockParams block_from_json(const nlohmann::json& j,
                            const EncoderConfig& cfg) {
  BlockParams p;
  p.ffn1.w1 = j.at("ffn1.W1").get<Tensor>();
  p.ffn1.b1 = j.at("ffn1.b1").get<Tensor>();
  p.ffn1.w2 = j.at("ffn1.W2").get<Tensor>();
  p.ffn1.b2 = j.at("ffn1.b2").get<Tensor>();
  p.ffn2.w1 = j.at("ffn2.W1").get<Tensor>();
  p.ffn2.b1 = j.at("ffn2.b1").get<Tensor>();
  p.ffn2.w2 = j.at("ffn2.W2").get<Tensor>();
  p.ffn2.b2 = j.at("ffn2.b2").get<Tensor>();
  p.conv.pointwise_in = j.at("conv.pointwise_in").get<Tensor>();
  p.conv.b_in = j.at("conv.b_in").get<Tensor>();
  p.conv.depthwise = j.at("conv.depthwise").get<Tensor>();
  p.conv.pointwise_out = j.at("conv.pointwise_out").get<Tensor>();
  p.conv.norm.gamma = j.at("conv.norm.gamma").get<Tensor>();
  p.conv.norm.beta = j.at("conv.norm.beta").get<Tensor>();
  p.attn.w_q = j.at("attn.W_Q").get<Tensor>();
  p.attn.w_k = j.at("attn.W_K").get<Tensor>();
  p.attn.w_v = j.at("attn.W_V").get<Tensor>();
  p.attn.w_p = j.at("attn.W_P").get<Tensor>();
  p.attn.w_o = j.at("attn.W_O").get<Tensor>();
  p.attn.u1 = j.at("attn.U1").get<Tensor>();
  p.attn.u2 = j.at("attn.U2").get<Tensor>();
  p.ln1.gamma = j.at("ln1.gamma").get<Tensor>();
  p.ln1.beta = j.at("ln1.beta").get<Tensor>();
  p.ln2.gamma = j.at("ln2.gamma").get<Tensor>();
  p.ln2.beta = j.at("ln2.beta").get<Tensor>();
  p.ln3.gamma = j.at("ln3.gamma").get<Tensor>();
  p.ln3.beta = j.at("ln3.beta").get<Tensor>();
  p.ln4.gamma = j.at("ln4.gamma").get<Tensor>();
  p.ln4.beta = j.at("ln4.beta").get<Tensor>();
  p.attn.validate(cfg.attention_config());
  p.deepnorm = make_deepnorm(cfg.n_blocks, cfg.decoder_blocks);
  if (cfg.norm_style == NormStyle::kPlainPostln) p.deepnorm.alpha = 1.0;
  return p;
}

nlohmann::json checkpoint_to_json(const EncoderConfig& cfg,
                                  const std::vector<BlockParams>& blocks) {
  nlohmann::json j;
  j["config"] = cfg;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : blocks) j["blocks"].push_back(block_to_json(b));
  return j;
}

std::pair<EncoderConfig, std::vector<BlockParams>> checkpoint_from_json(
    const nlohmann::json& j) {
  EncoderConfig cfg = j.at("config").get<EncoderConfig>();
  cfg.validate();
  std::vector<BlockParams> blocks;
  for (const auto& jb : j.at("blocks")) {
    blocks.push_back(block_from_json(jb, cfg));
  }
  if (blocks.size() != cfg.n_blocks) {
    throw std::invalid_argument("checkpoint: block count mismatch");
  }
  return {std::move(cfg), std::move(blocks)};
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return nlohmann::json::parse(in);
}

}  // namespace dsc
