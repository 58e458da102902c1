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

#ifndef DSC_SERIALIZE_HPP_
#define DSC_SERIALIZE_HPP_

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dsc/attention.hpp"
#include "dsc/conformer.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

// Tensors travel as {"shape":[...], "data":[...]} with row-major data.
// nlohmann's default (alphabetically ordered) object type keeps every dump
// byte-deterministic.
void to_json(nlohmann::json& j, const Tensor& t);
void from_json(const nlohmann::json& j, Tensor& t);

std::string mode_to_string(AttentionMode mode);
AttentionMode mode_from_string(const std::string& s);
std::string norm_style_to_string(NormStyle style);
NormStyle norm_style_from_string(const std::string& s);

void to_json(nlohmann::json& j, const EncoderConfig& cfg);
/// Merge semantics: only the keys present in j are applied, so a partial
/// config file plus CLI flag overrides compose naturally. Unknown keys are
/// rejected.
void apply_config_json(const nlohmann::json& j, EncoderConfig& cfg);
void from_json(const nlohmann::json& j, EncoderConfig& cfg);

/// Attention weight files: a flat map with names W_Q, W_K, W_V, W_P, W_O,
/// U1, U2. Fixture files reuse the format with extra entries (e.g. input_X,
/// expected_out) which this reader leaves untouched.
nlohmann::json weights_to_json(const AttentionWeights& w);
AttentionWeights weights_from_json(const nlohmann::json& j,
                                   const AttentionConfig& cfg);

/// Block tensors under dotted names ("ffn1.W1", "conv.depthwise", ...).
/// DeepNorm scalars and layer-norm eps values are not stored; they are
/// reconstructed from the config on load.
nlohmann::json block_to_json(const BlockParams& p);
BlockParams block_from_json(const nlohmann::json& j, const EncoderConfig& cfg);

nlohmann::json checkpoint_to_json(const EncoderConfig& cfg,
                                  const std::vector<BlockParams>& blocks);
std::pair<EncoderConfig, std::vector<BlockParams>> checkpoint_from_json(
    const nlohmann::json& j);

void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

}  // namespace dsc

#endif  // DSC_SERIALIZE_HPP_
