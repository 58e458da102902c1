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

#include "dsc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <new>
#include <set>
#include <stdexcept>

namespace dsc {

double combine_losses(double ctc, double att_l2r, double att_r2l) {
  if (!std::isfinite(ctc) || !std::isfinite(att_l2r) ||
      !std::isfinite(att_r2l)) {
    throw std::invalid_argument("combine_losses: non-finite input");
  }
  return 0.3 * ctc + 0.7 * (0.7 * att_l2r + 0.3 * att_r2l);
}

SynthDataset synth_task(SeededRng& rng, std::size_t n_samples, std::size_t len,
                        std::size_t d, std::size_t n_classes) {
  if (n_classes < 2) {
    throw std::invalid_argument("synth_task: need at least two classes");
  }
  if (n_samples == 0 || len == 0 || d == 0) {
    throw std::invalid_argument("synth_task: empty dimensions");
  }
  SynthDataset ds;
  ds.n_classes = n_classes;
  ds.inputs = Tensor({n_samples, len, d});
  ds.labels.resize(n_samples * len);

  // Class codebook; symbol embeddings are well separated at unit scale.
  SeededRng code_rng = rng.child("codebook");
  Tensor codebook({n_classes, d});
  for (std::size_t i = 0; i < codebook.numel(); ++i) {
    codebook[i] = code_rng.next_gaussian();
  }

  const double noise_scale = 0.05;
  for (std::size_t n = 0; n < n_samples; ++n) {
    SeededRng srng = rng.child("symbols").child(n);
    SeededRng nrng = rng.child("noise").child(n);
    std::vector<std::size_t> sym(len);
    for (std::size_t t = 0; t < len; ++t) sym[t] = srng.next_below(n_classes);
    for (std::size_t t = 0; t < len; ++t) {
      // Local window (both neighbors) plus the sequence-initial symbol:
      // unsolvable by a purely local model at long range.
      const std::size_t prev = sym[(t + len - 1) % len];
      const std::size_t next = sym[(t + 1) % len];
      ds.labels[n * len + t] = (prev + next + sym[0]) % n_classes;
      double* row = ds.inputs.data() + (n * len + t) * d;
      const double* code = codebook.data() + sym[t] * d;
      for (std::size_t c = 0; c < d; ++c) {
        row[c] = code[c] + noise_scale * nrng.next_gaussian();
      }
    }
  }
  return ds;
}

namespace {

// Every learnable tensor of a block, in a fixed order shared with the
// serialized names below.
std::vector<Tensor*> param_tensors(BlockParams& p) {
  return {&p.ffn1.w1,          &p.ffn1.b1,
          &p.ffn1.w2,          &p.ffn1.b2,
          &p.ffn2.w1,          &p.ffn2.b1,
          &p.ffn2.w2,          &p.ffn2.b2,
          &p.conv.pointwise_in, &p.conv.b_in,
          &p.conv.depthwise,   &p.conv.pointwise_out,
          &p.conv.norm.gamma,  &p.conv.norm.beta,
          &p.attn.w_q,         &p.attn.w_k,
          &p.attn.w_v,         &p.attn.w_p,
          &p.attn.w_o,         &p.attn.u1,
          &p.attn.u2,          &p.ln1.gamma,
          &p.ln1.beta,         &p.ln2.gamma,
          &p.ln2.beta,         &p.ln3.gamma,
          &p.ln3.beta,         &p.ln4.gamma,
          &p.ln4.beta};
}

const char* const kBlockParamNames[] = {
    "ffn1.W1",          "ffn1.b1",      "ffn1.W2",
    "ffn1.b2",          "ffn2.W1",      "ffn2.b1",
    "ffn2.W2",          "ffn2.b2",      "conv.pointwise_in",
    "conv.b_in",        "conv.depthwise", "conv.pointwise_out",
    "conv.norm.gamma",  "conv.norm.beta", "attn.W_Q",
    "attn.W_K",         "attn.W_V",     "attn.W_P",
    "attn.W_O",         "attn.U1",      "attn.U2",
    "ln1.gamma",        "ln1.beta",     "ln2.gamma",
    "ln2.beta",         "ln3.gamma",    "ln3.beta",
    "ln4.gamma",        "ln4.beta"};

struct AdamState {
  std::vector<Tensor> m, v;
};

void adam_step(std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               std::size_t t, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      p[k] -= lr * mh / (std::sqrt(vh) + kEps);
    }
  }
}

}  // namespace

TrainResult train(const EncoderConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (opt.steps == 0) throw std::invalid_argument("train: zero steps");
  if (cfg.d > 64 || cfg.n_blocks > 50) {
    throw std::invalid_argument(
        "train: toy scale only (d <= 64, blocks <= 50)");
  }
  TrainResult result;

  SeededRng root(opt.seed);
  SeededRng data_rng = root.child("data");
  SynthDataset ds =
      synth_task(data_rng, opt.n_samples, opt.len, cfg.d, opt.n_classes);
  const std::size_t n = opt.n_samples, len = opt.len, d = cfg.d;
  const std::size_t classes = opt.n_classes;
  const std::size_t frames = n * len;

  SeededRng init_rng = root.child("init");
  std::vector<BlockParams> blocks = init_encoder(cfg, init_rng);
  SeededRng head_rng = root.child("head");
  Tensor w_head = xavier_init(head_rng, d, classes, 1.0);
  Tensor b_head({classes});

  std::vector<Tensor*> params;
  for (auto& b : blocks) {
    for (Tensor* t : param_tensors(b)) params.push_back(t);
  }
  params.push_back(&w_head);
  params.push_back(&b_head);

  AdamState adam;
  adam.m.reserve(params.size());
  adam.v.reserve(params.size());
  for (Tensor* p : params) {
    adam.m.emplace_back(p->shape());
    adam.v.emplace_back(p->shape());
  }

  const PaddingMask mask = PaddingMask::full(n, len);
  for (std::size_t step = 0; step < opt.steps; ++step) {
    SeededRng step_rng = root.child("step").child(step);
    EncoderResult enc =
        encoder_forward(ds.inputs, blocks, cfg, mask, step_rng,
                        /*training=*/true, step == 0 ? opt.trace : nullptr);

    // Linear head and mean frame cross-entropy.
    Tensor logits({frames, classes});
    matmul(enc.y.data(), w_head.data(), logits.data(), frames, d, classes);
    for (std::size_t r = 0; r < frames; ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        logits.data()[r * classes + c] += b_head[c];
      }
    }
    Tensor probs = softmax_rows(logits);
    double loss = 0.0;
    for (std::size_t r = 0; r < frames; ++r) {
      loss -= std::log(probs.data()[r * classes + ds.labels[r]]);
    }
    loss /= static_cast<double>(frames);

    if (!std::isfinite(loss)) {
      result.diverged = true;
      result.records.push_back(
          {step, loss, std::numeric_limits<double>::quiet_NaN(), opt.lr});
      break;
    }

    Tensor d_logits = probs;
    for (std::size_t r = 0; r < frames; ++r) {
      d_logits.data()[r * classes + ds.labels[r]] -= 1.0;
    }
    for (std::size_t i = 0; i < d_logits.numel(); ++i) {
      d_logits[i] /= static_cast<double>(frames);
    }

    Tensor d_w_head({d, classes});
    matmul_at(enc.y.data(), d_logits.data(), d_w_head.data(), frames, d,
              classes);
    Tensor d_b_head({classes});
    for (std::size_t r = 0; r < frames; ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        d_b_head[c] += d_logits.data()[r * classes + c];
      }
    }
    Tensor d_y({n, len, d});
    matmul_bt(d_logits.data(), w_head.data(), d_y.data(), frames, classes, d);

    EncoderGrads eg = encoder_backward(enc.cache, d_y);

    std::vector<const Tensor*> grads;
    for (auto& b : eg.blocks) {
      for (Tensor* t : param_tensors(b)) grads.push_back(t);
    }
    grads.push_back(&d_w_head);
    grads.push_back(&d_b_head);

    double sq = 0.0;
    for (const Tensor* g : grads) {
      for (std::size_t i = 0; i < g->numel(); ++i) sq += (*g)[i] * (*g)[i];
    }
    const double grad_norm = std::sqrt(sq);

    result.records.push_back({step, loss, grad_norm, opt.lr});
    if (opt.lr != 0.0) {
      adam_step(params, grads, adam, step + 1, opt.lr);
    }
  }

  if (!result.records.empty()) {
    result.initial_loss = result.records.front().loss;
    result.final_loss = result.records.back().loss;
  }
  return result;
}

std::string train_csv(const std::vector<TrainRecord>& records) {
  std::string out = "step,loss,grad_norm,lr\n";
  char buf[160];
  for (const TrainRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.step, r.loss,
                  r.grad_norm, r.lr);
    out += buf;
  }
  return out;
}

std::vector<BenchPoint> bench(const AttentionConfig& cfg,
                              const std::vector<std::size_t>& lengths,
                              std::size_t repeats, std::uint64_t seed) {
  cfg.validate();
  if (repeats == 0) throw std::invalid_argument("bench: zero repeats");
  if (!std::is_sorted(lengths.begin(), lengths.end())) {
    throw std::invalid_argument("bench lengths must be sorted ascending");
  }
  SeededRng root(seed);
  std::vector<BenchPoint> points;
  for (std::size_t len : lengths) {
    // Weights and input are shared between the two modes at each length.
    SeededRng wr = root.child("weights").child(len);
    SeededRng xr = root.child("input").child(len);
    Tensor x, x_p;
    AttentionWeights w;
    bool setup_ok = true;
    try {
      AttentionConfig base = cfg;
      w = init_attention_weights(base, wr, 1.0);
      x = Tensor({1, len, cfg.model_dim});
      for (std::size_t i = 0; i < x.numel(); ++i) x[i] = xr.next_gaussian();
      x_p = batch_tile(relpos_encoding(len, cfg.model_dim), 1);
    } catch (const std::bad_alloc&) {
      setup_ok = false;
    }
    for (AttentionMode mode : {AttentionMode::kDense, AttentionMode::kSparse}) {
      BenchPoint pt;
      pt.len = len;
      pt.mode = mode;
      if (!setup_ok) {
        pt.failed = true;
        points.push_back(pt);
        continue;
      }
      AttentionConfig c = cfg;
      c.mode = mode;
      try {
        const PaddingMask mask = PaddingMask::full(1, len);
        std::vector<std::uint64_t> walls;
        walls.reserve(repeats);
        for (std::size_t r = 0; r < repeats; ++r) {
          OpCounters ctr;
          SeededRng rr = root.child("run").child(
              len * 2 + (mode == AttentionMode::kSparse ? 1 : 0));
          const auto t0 = std::chrono::steady_clock::now();
          AttentionResult res =
              attention_forward(x, x_p, x, w, c, mask, rr, false, &ctr);
          const auto t1 = std::chrono::steady_clock::now();
          walls.push_back(static_cast<std::uint64_t>(
              std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
                  .count()));
          if (r == 0) {
            pt.mac_count = ctr.mac_count;
            pt.peak_elements = ctr.peak_elements;
            pt.mac_matches_estimate =
                ctr.mac_count == flop_estimate(c, len);
          }
        }
        std::sort(walls.begin(), walls.end());
        pt.wall_ns_median = walls[walls.size() / 2];
      } catch (const std::bad_alloc&) {
        pt.failed = true;
      }
      points.push_back(pt);
    }
  }
  return points;
}

std::string bench_csv(const std::vector<BenchPoint>& points) {
  std::string out = "L,mode,mac_count,peak_elements,wall_ns_median\n";
  char buf[160];
  for (const BenchPoint& p : points) {
    if (p.failed) {
      std::snprintf(buf, sizeof(buf), "%zu,%s,failed,failed,failed\n", p.len,
                    p.mode == AttentionMode::kSparse ? "sparse" : "dense");
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,%s,%llu,%llu,%llu\n", p.len,
                    p.mode == AttentionMode::kSparse ? "sparse" : "dense",
                    static_cast<unsigned long long>(p.mac_count),
                    static_cast<unsigned long long>(p.peak_elements),
                    static_cast<unsigned long long>(p.wall_ns_median));
    }
    out += buf;
  }
  return out;
}

namespace {

double group_rel_err(const Tensor& analytic, const Tensor& fd) {
  double denom = 1e-6;
  for (std::size_t i = 0; i < fd.numel(); ++i) {
    denom = std::max(denom, std::abs(fd[i]));
  }
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    denom = std::max(denom, std::abs(analytic[i]));
  }
  return max_abs_diff(analytic, fd) / denom;
}

double dot_all(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

Tensor random_tensor(SeededRng& rng, const Shape& shape, double scale) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = scale * rng.next_gaussian();
  }
  return t;
}

void attention_gradcheck_suite(const std::string& suite_name,
                               const AttentionConfig& cfg, std::size_t batch,
                               std::size_t len, const PaddingMask& mask,
                               std::uint64_t seed, GradReport& report) {
  SeededRng root(seed);
  SeededRng wr = root.child("w");
  AttentionWeights w = init_attention_weights(cfg, wr, 0.8);
  SeededRng xr = root.child("x");
  Tensor x = random_tensor(xr, {batch, len, cfg.model_dim}, 0.6);
  Tensor x_p = batch_tile(relpos_encoding(len, cfg.model_dim), batch);
  SeededRng gr = root.child("g");
  Tensor probe = random_tensor(gr, x.shape(), 1.0);

  auto run = [&](const Tensor& xv, const AttentionWeights& wv) {
    SeededRng rr(seed ^ 0x5eedULL);
    return attention_forward(xv, x_p, xv, wv, cfg, mask, rr, false, nullptr);
  };

  AttentionResult res = run(x, w);
  AttentionGrads g = attention_backward(res.cache, probe);

  auto push = [&](const std::string& name, const Tensor& analytic,
                  const Tensor& fd) {
    report.groups.push_back({suite_name, name, group_rel_err(analytic, fd)});
  };

  Tensor d_x_total = g.d_x;
  add_inplace(d_x_total, g.d_y);  // self-attention: X and Y are the same input
  Tensor fd_x = finite_diff_grad(
      [&](const Tensor& xv) { return dot_all(run(xv, w).out, probe); }, x);
  push("x", d_x_total, fd_x);

  struct WeightSlot {
    const char* name;
    Tensor AttentionWeights::*member;
    Tensor AttentionGrads::*grad;
  };
  const WeightSlot slots[] = {
      {"W_Q", &AttentionWeights::w_q, &AttentionGrads::d_w_q},
      {"W_K", &AttentionWeights::w_k, &AttentionGrads::d_w_k},
      {"W_V", &AttentionWeights::w_v, &AttentionGrads::d_w_v},
      {"W_P", &AttentionWeights::w_p, &AttentionGrads::d_w_p},
      {"W_O", &AttentionWeights::w_o, &AttentionGrads::d_w_o},
      {"U1", &AttentionWeights::u1, &AttentionGrads::d_u1},
      {"U2", &AttentionWeights::u2, &AttentionGrads::d_u2},
  };
  for (const WeightSlot& s : slots) {
    Tensor fd = finite_diff_grad(
        [&](const Tensor& wv) {
          AttentionWeights w2 = w;
          w2.*(s.member) = wv;
          return dot_all(run(x, w2).out, probe);
        },
        w.*(s.member));
    push(s.name, g.*(s.grad), fd);
  }
}

void block_gradcheck_suite(std::uint64_t seed, GradReport& report) {
  EncoderConfig cfg;
  cfg.n_blocks = 1;
  cfg.d = 8;
  cfg.d_ffn = 16;
  cfg.h = 2;
  cfg.kernel = 3;
  cfg.mode = AttentionMode::kDense;
  const PaddingMask mask = PaddingMask::full(1, 5);

  SeededRng root(seed);
  SeededRng ir = root.child("init");
  BlockParams p = init_block(cfg, ir, make_deepnorm(2, 3));
  SeededRng xr = root.child("x");
  Tensor x = random_tensor(xr, {1, 5, cfg.d}, 0.7);
  SeededRng gr = root.child("g");
  Tensor probe = random_tensor(gr, x.shape(), 1.0);

  auto run = [&](const Tensor& xv, const BlockParams& pv) {
    SeededRng rr(seed ^ 0xb10cULL);
    return block_forward(xv, pv, cfg, mask, rr, false);
  };
  BlockResult res = run(x, p);
  BlockGrads bg = block_backward(res.cache, probe);

  Tensor fd_x = finite_diff_grad(
      [&](const Tensor& xv) { return dot_all(run(xv, p).y, probe); }, x);
  report.groups.push_back({"block", "x", group_rel_err(bg.d_x, fd_x)});

  std::vector<Tensor*> slots = param_tensors(p);
  std::vector<Tensor*> gslots = param_tensors(bg.g);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Tensor fd = finite_diff_grad(
        [&](const Tensor& pv) {
          const Tensor saved = *slots[i];
          *slots[i] = pv;
          const double val = dot_all(run(x, p).y, probe);
          *slots[i] = saved;
          return val;
        },
        *slots[i]);
    report.groups.push_back(
        {"block", kBlockParamNames[i], group_rel_err(*gslots[i], fd)});
  }
}

void encoder_gradcheck_suite(std::uint64_t seed, GradReport& report) {
  EncoderConfig cfg;
  cfg.n_blocks = 2;
  cfg.d = 8;
  cfg.d_ffn = 16;
  cfg.h = 2;
  cfg.kernel = 3;
  cfg.mode = AttentionMode::kDense;
  const PaddingMask mask{{5}};

  SeededRng root(seed);
  SeededRng ir = root.child("init");
  std::vector<BlockParams> blocks = init_encoder(cfg, ir);
  SeededRng xr = root.child("x");
  Tensor x = random_tensor(xr, {1, 6, cfg.d}, 0.7);
  SeededRng gr = root.child("g");
  Tensor probe = random_tensor(gr, x.shape(), 1.0);

  auto run = [&](const Tensor& xv, const std::vector<BlockParams>& bv) {
    SeededRng rr(seed ^ 0xe4cULL);
    return encoder_forward(xv, bv, cfg, mask, rr, false);
  };
  EncoderResult res = run(x, blocks);
  EncoderGrads eg = encoder_backward(res.cache, probe);

  Tensor fd_x = finite_diff_grad(
      [&](const Tensor& xv) { return dot_all(run(xv, blocks).y, probe); }, x);
  report.groups.push_back({"encoder", "x", group_rel_err(eg.d_x, fd_x)});

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::vector<Tensor*> slots = param_tensors(blocks[b]);
    std::vector<Tensor*> gslots = param_tensors(eg.blocks[b]);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      Tensor fd = finite_diff_grad(
          [&](const Tensor& pv) {
            const Tensor saved = *slots[i];
            *slots[i] = pv;
            const double val = dot_all(run(x, blocks).y, probe);
            *slots[i] = saved;
            return val;
          },
          *slots[i]);
      report.groups.push_back({"encoder",
                               "block" + std::to_string(b) + "." +
                                   kBlockParamNames[i],
                               group_rel_err(*gslots[i], fd)});
    }
  }
}

}  // namespace

GradReport gradcheck(std::uint64_t seed) {
  GradReport report;
  report.tolerance = 1e-4;

  {
    AttentionConfig cfg;
    cfg.heads = 2;
    cfg.model_dim = 4;
    cfg.mode = AttentionMode::kDense;
    attention_gradcheck_suite("attention_dense", cfg, 1, 3,
                              PaddingMask::full(1, 3), seed ^ 1, report);
  }
  {
    AttentionConfig cfg;
    cfg.heads = 2;
    cfg.model_dim = 6;
    cfg.c1 = 1.0;
    cfg.c2 = 1.0;
    cfg.mode = AttentionMode::kSparse;
    attention_gradcheck_suite("attention_sparse", cfg, 2, 8,
                              PaddingMask{{8, 6}}, seed ^ 2, report);
  }
  block_gradcheck_suite(seed ^ 3, report);
  encoder_gradcheck_suite(seed ^ 4, report);

  for (const GradGroup& g : report.groups) {
    report.max_rel_err = std::max(report.max_rel_err, g.rel_err);
  }
  report.pass = report.max_rel_err < report.tolerance;
  return report;
}

nlohmann::json gradcheck_json(const GradReport& report) {
  nlohmann::json suites = nlohmann::json::object();
  for (const GradGroup& g : report.groups) {
    suites[g.suite][g.name] = g.rel_err;
  }
  return nlohmann::json{{"tolerance", report.tolerance},
                        {"max_rel_err", report.max_rel_err},
                        {"pass", report.pass},
                        {"suites", suites}};
}

EquivReport equiv(std::size_t l_max, std::size_t n_seeds,
                  std::uint64_t seed) {
  if (l_max == 0 || n_seeds == 0) {
    throw std::invalid_argument("equiv: empty sweep");
  }
  EquivReport rep;
  rep.l_max = l_max;
  rep.n_seeds = n_seeds;

  AttentionConfig sat;
  sat.heads = 2;
  sat.model_dim = 8;
  sat.c2 = 1e9;  // saturating: every query selected at any length
  SeededRng root(seed);
  for (std::size_t len = 1; len <= l_max; ++len) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      SeededRng wr = root.child("w").child(len * 4096 + s);
      SeededRng xr = root.child("x").child(len * 4096 + s);
      AttentionConfig c = sat;
      c.mode = AttentionMode::kSparse;
      AttentionWeights w = init_attention_weights(c, wr, 1.0);
      Tensor x = random_tensor(xr, {1, len, c.model_dim}, 1.0);
      Tensor x_p = batch_tile(relpos_encoding(len, c.model_dim), 1);
      const PaddingMask mask = PaddingMask::full(1, len);
      SeededRng r1 = root.child("run").child(len * 4096 + s);
      SeededRng r2 = r1;
      AttentionResult rs =
          probsparse_forward(x, x_p, x, w, c, mask, r1, false);
      c.mode = AttentionMode::kDense;
      AttentionResult rd = dense_forward(x, x_p, x, w, c, mask, r2, false);
      rep.max_abs_diff =
          std::max(rep.max_abs_diff, max_abs_diff(rs.out, rd.out));
    }
  }
  rep.saturating_pass = rep.max_abs_diff <= 1e-10;

  // Non-saturating cross-check: with c2 = 1 only the dominant queries get
  // score rows; any output row every head selected must agree bit-exactly
  // with the dense run, and the differing rows must be exactly the rest.
  // One head keeps the selected set non-empty.
  const std::size_t len = std::max<std::size_t>(l_max, 8);
  rep.row_check_len = len;
  AttentionConfig c = sat;
  c.heads = 1;
  c.c2 = 1.0;
  c.mode = AttentionMode::kSparse;
  SeededRng wr = root.child("rowcheck_w");
  SeededRng xr = root.child("rowcheck_x");
  AttentionWeights w = init_attention_weights(c, wr, 1.0);
  Tensor x = random_tensor(xr, {1, len, c.model_dim}, 1.0);
  Tensor x_p = batch_tile(relpos_encoding(len, c.model_dim), 1);
  const PaddingMask mask = PaddingMask::full(1, len);
  SeededRng r1 = root.child("rowcheck_run");
  SeededRng r2 = r1;
  AttentionResult rs = probsparse_forward(x, x_p, x, w, c, mask, r1, false);
  c.mode = AttentionMode::kDense;
  AttentionResult rd = dense_forward(x, x_p, x, w, c, mask, r2, false);

  std::vector<bool> fully_selected(len, true);
  std::set<std::size_t> selected_union;
  for (std::size_t h = 0; h < c.heads; ++h) {
    std::set<std::size_t> sel(rs.cache.selection.top_query_idx[h].begin(),
                              rs.cache.selection.top_query_idx[h].end());
    for (std::size_t t = 0; t < len; ++t) {
      if (!sel.count(t)) fully_selected[t] = false;
    }
  }
  bool selected_exact = true;
  for (std::size_t t = 0; t < len; ++t) {
    double row_diff = 0.0;
    for (std::size_t i = 0; i < c.model_dim; ++i) {
      row_diff = std::max(row_diff,
                          std::abs(rs.out.at3(0, t, i) - rd.out.at3(0, t, i)));
    }
    if (row_diff > 0.0) rep.differing_rows.push_back(t);
    if (!fully_selected[t]) rep.not_fully_selected_rows.push_back(t);
    if (fully_selected[t] && row_diff != 0.0) selected_exact = false;
  }
  rep.selected_rows_exact = selected_exact;
  rep.row_sets_match = rep.differing_rows == rep.not_fully_selected_rows;
  return rep;
}

nlohmann::json equiv_json(const EquivReport& rep) {
  return nlohmann::json{
      {"l_max", rep.l_max},
      {"n_seeds", rep.n_seeds},
      {"max_abs_diff", rep.max_abs_diff},
      {"saturating_pass", rep.saturating_pass},
      {"row_check",
       nlohmann::json{{"L", rep.row_check_len},
                      {"differing_rows", rep.differing_rows},
                      {"not_fully_selected_rows", rep.not_fully_selected_rows},
                      {"selected_rows_exact", rep.selected_rows_exact},
                      {"row_sets_match", rep.row_sets_match}}}};
}

}  // namespace dsc
