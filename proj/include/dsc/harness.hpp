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

#ifndef DSC_HARNESS_HPP_
#define DSC_HARNESS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/attention.hpp"
#include "dsc/conformer.hpp"
#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

/// 0.3*ctc + 0.7*(0.7*att_l2r + 0.3*att_r2l); rejects non-finite inputs.
double combine_losses(double ctc, double att_l2r, double att_r2l);

// ---- synthetic frame-classification task ----------------------------------

/// Frame labels mix a local neighbor window with the sequence-initial
/// symbol, so a model needs both the convolution module (local) and
/// attention (long range) to solve it. Labels are uniform over classes.
struct SynthDataset {
  Tensor inputs;                   // (n, L, d)
  std::vector<std::size_t> labels;  // n*L, row-major over (sample, frame)
  std::size_t n_classes = 0;
};

SynthDataset synth_task(SeededRng& rng, std::size_t n_samples, std::size_t len,
                        std::size_t d, std::size_t n_classes);

// ---- training demo --------------------------------------------------------

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  std::size_t steps = 500;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // toy task shape
  std::size_t n_samples = 8;
  std::size_t len = 12;
  std::size_t n_classes = 5;
  // When set, receives the stage lines of the first forward pass.
  StageTrace* trace = nullptr;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  bool diverged = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Full-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8, fixed lr) on frame
/// cross-entropy through a linear head over encoder outputs. A non-finite
/// loss stops the run and flags it; it never throws for divergence.
TrainResult train(const EncoderConfig& cfg, const TrainOptions& opt);

std::string train_csv(const std::vector<TrainRecord>& records);

// ---- complexity bench -----------------------------------------------------

struct BenchPoint {
  std::size_t len = 0;
  AttentionMode mode = AttentionMode::kDense;
  std::uint64_t mac_count = 0;
  std::uint64_t peak_elements = 0;
  std::uint64_t wall_ns_median = 0;
  bool mac_matches_estimate = false;
  bool failed = false;  // e.g. allocation failure; sweep continues
};

/// Runs a self-attention forward per (length, mode) pair with counters and
/// wall-clock median over `repeats`; lengths must be sorted ascending.
std::vector<BenchPoint> bench(const AttentionConfig& cfg,
                              const std::vector<std::size_t>& lengths,
                              std::size_t repeats, std::uint64_t seed);

/// Schema: L,mode,mac_count,peak_elements,wall_ns_median — everything but
/// the wall column is byte-deterministic per seed.
std::string bench_csv(const std::vector<BenchPoint>& points);

// ---- gradient checking ----------------------------------------------------

struct GradGroup {
  std::string suite;
  std::string name;
  double rel_err = 0.0;
};

struct GradReport {
  std::vector<GradGroup> groups;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
};

/// Finite-difference suites: dense attention, sparse attention (with
/// padding), one full block, and a 2-block encoder, all at toy widths.
GradReport gradcheck(std::uint64_t seed);
nlohmann::json gradcheck_json(const GradReport& report);

// ---- sparse/dense equivalence ---------------------------------------------

struct EquivReport {
  std::size_t l_max = 0;
  std::size_t n_seeds = 0;
  double max_abs_diff = 0.0;     // saturating selection, all L and seeds
  bool saturating_pass = false;  // max_abs_diff within 1e-10
  // Non-saturating cross-check at one length: rows whose output differs
  // from the dense run must be exactly the rows some head did not select.
  std::size_t row_check_len = 0;
  std::vector<std::size_t> differing_rows;
  std::vector<std::size_t> not_fully_selected_rows;
  bool selected_rows_exact = false;  // fully-selected rows match bit-exact
  bool row_sets_match = false;
};

EquivReport equiv(std::size_t l_max, std::size_t n_seeds, std::uint64_t seed);
nlohmann::json equiv_json(const EquivReport& report);

}  // namespace dsc

#endif  // DSC_HARNESS_HPP_
