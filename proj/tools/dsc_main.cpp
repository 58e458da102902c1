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

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsc/harness.hpp"
#include "dsc/serialize.hpp"

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string sibling_with_tag(const std::string& path, const std::string& tag) {
  const std::size_t slash = path.find_last_of('/');
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + "." + tag;
  }
  return path.substr(0, dot) + "." + tag + path.substr(dot);
}

struct CommonFlags {
  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 0;
  std::vector<std::size_t> lengths;
  std::string mode;
  double c1 = 0.0, c2 = 0.0;
  std::size_t heads = 0, dim = 0, blocks = 0;
  std::size_t steps = 500;
  double lr = 1e-3;
  bool verbose = false;
};

// Config file first, then explicit flags on top.
dsc::EncoderConfig resolve_config(const CLI::App& cmd, const CommonFlags& f) {
  dsc::EncoderConfig cfg;
  if (!f.config_path.empty()) {
    dsc::apply_config_json(dsc::read_json_file(f.config_path), cfg);
  }
  if (cmd.count("--mode") > 0) cfg.mode = dsc::mode_from_string(f.mode);
  if (cmd.count("--c1") > 0) cfg.c1 = f.c1;
  if (cmd.count("--c2") > 0) cfg.c2 = f.c2;
  if (cmd.count("--heads") > 0) cfg.h = f.heads;
  if (cmd.count("--dim") > 0) {
    cfg.d = f.dim;
    cfg.d_ffn = 4 * f.dim;  // --dim keeps the conventional 4x FFN ratio
  }
  if (cmd.count("--blocks") > 0) cfg.n_blocks = f.blocks;
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path,
                  "JSON config file (encoder field names)");
  cmd->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--out", f.out_path, "output path (default: stdout)");
  cmd->add_option("--lengths", f.lengths,
                  "comma-separated sequence lengths, ascending")
      ->delimiter(',');
  cmd->add_option("--mode", f.mode, "attention mode")
      ->check(CLI::IsMember({"sparse", "dense"}));
  cmd->add_option("--c1", f.c1, "key-sampling factor");
  cmd->add_option("--c2", f.c2, "query-selection factor");
  cmd->add_option("--heads", f.heads, "attention heads");
  cmd->add_option("--dim", f.dim, "model width (sets FFN width to 4x)");
  cmd->add_option("--blocks", f.blocks, "encoder depth");
  cmd->add_option("--steps", f.steps, "training steps")->capture_default_str();
  cmd->add_option("--lr", f.lr, "learning rate")->capture_default_str();
  cmd->add_flag("--verbose", f.verbose, "progress and stage trace on stderr");
}

void emit(const CommonFlags& f, const std::string& text) {
  if (f.out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text_file(f.out_path, text);
  }
}

int run_bench(const CLI::App& cmd, CommonFlags& f) {
  const dsc::EncoderConfig cfg = resolve_config(cmd, f);
  std::vector<std::size_t> lengths = f.lengths;
  if (lengths.empty()) lengths = {64, 128, 256, 512, 1024};
  const std::size_t repeats = 3;
  if (f.verbose) {
    std::fprintf(stderr, "bench: d=%zu h=%zu c1=%g c2=%g repeats=%zu\n",
                 cfg.d, cfg.h, cfg.c1, cfg.c2, repeats);
  }
  const auto points =
      dsc::bench(cfg.attention_config(), lengths, repeats, f.seed);
  emit(f, dsc::bench_csv(points));
  bool ok = true;
  for (const auto& p : points) {
    if (p.failed || !p.mac_matches_estimate) ok = false;
    if (f.verbose) {
      std::fprintf(stderr, "  L=%zu %s mac=%llu (%s)\n", p.len,
                   p.mode == dsc::AttentionMode::kSparse ? "sparse" : "dense",
                   static_cast<unsigned long long>(p.mac_count),
                   p.failed ? "FAILED"
                            : (p.mac_matches_estimate ? "matches estimate"
                                                      : "ESTIMATE MISMATCH"));
    }
  }
  return ok ? 0 : 1;
}

int run_gradcheck(const CLI::App&, CommonFlags& f) {
  const dsc::GradReport report = dsc::gradcheck(f.seed);
  emit(f, dsc::gradcheck_json(report).dump(2) + "\n");
  if (f.verbose) {
    std::fprintf(stderr, "gradcheck: %zu groups, max rel err %.3g, %s\n",
                 report.groups.size(), report.max_rel_err,
                 report.pass ? "pass" : "FAIL");
  }
  return report.pass ? 0 : 1;
}

int run_equiv(const CLI::App&, CommonFlags& f) {
  std::size_t l_max = 64;
  if (!f.lengths.empty()) l_max = f.lengths.back();
  const std::size_t n_seeds = 10;
  const dsc::EquivReport report = dsc::equiv(l_max, n_seeds, f.seed);
  emit(f, dsc::equiv_json(report).dump(2) + "\n");
  if (f.verbose) {
    std::fprintf(stderr, "equiv: L<=%zu, max |diff| %.3g, rows %s\n", l_max,
                 report.max_abs_diff,
                 report.row_sets_match ? "match" : "MISMATCH");
  }
  return report.saturating_pass && report.selected_rows_exact &&
                 report.row_sets_match
             ? 0
             : 1;
}

int run_train(const CLI::App& cmd, CommonFlags& f) {
  dsc::EncoderConfig cfg = resolve_config(cmd, f);
  dsc::TrainOptions opt;
  opt.steps = f.steps;
  opt.lr = f.lr;
  opt.seed = f.seed;
  dsc::StageTrace trace;
  if (f.verbose) opt.trace = &trace;

  const dsc::TrainResult main_run = dsc::train(cfg, opt);
  if (f.verbose) {
    for (const std::string& line : trace) {
      std::fprintf(stderr, "%s\n", line.c_str());
    }
    for (std::size_t i = 0; i < main_run.records.size(); i += 50) {
      std::fprintf(stderr, "step %zu loss %.6f\n", main_run.records[i].step,
                   main_run.records[i].loss);
    }
  }

  // Same run without the DeepNorm pieces, for the stability comparison
  // curve; reported only, never gated.
  dsc::EncoderConfig plain = cfg;
  plain.norm_style = dsc::NormStyle::kPlainPostln;
  dsc::TrainOptions plain_opt = opt;
  plain_opt.trace = nullptr;
  const dsc::TrainResult plain_run = dsc::train(plain, plain_opt);

  if (f.out_path.empty()) {
    std::fputs(dsc::train_csv(main_run.records).c_str(), stdout);
  } else {
    write_text_file(f.out_path, dsc::train_csv(main_run.records));
    write_text_file(sibling_with_tag(f.out_path, "baseline"),
                    dsc::train_csv(plain_run.records));
  }
  if (f.verbose) {
    std::fprintf(stderr,
                 "train: loss %.4f -> %.4f%s | plain baseline %.4f -> %.4f%s\n",
                 main_run.initial_loss, main_run.final_loss,
                 main_run.diverged ? " (DIVERGED)" : "", plain_run.initial_loss,
                 plain_run.final_loss, plain_run.diverged ? " (DIVERGED)" : "");
  }
  return main_run.diverged ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep sparse Conformer encoder: complexity, gradient, "
               "equivalence and training harness"};
  app.require_subcommand(1);

  CommonFlags fb, fg, fe, ft;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "attention complexity sweep (CSV)");
  add_common(bench_cmd, fb);
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference suites (JSON)");
  add_common(grad_cmd, fg);
  CLI::App* equiv_cmd =
      app.add_subcommand("equiv", "sparse vs dense agreement (JSON)");
  add_common(equiv_cmd, fe);
  CLI::App* train_cmd = app.add_subcommand(
      "train", "toy synthetic training demo (CSV loss curve; toy scale only, "
               "e.g. --blocks 24 --dim 32)");
  add_common(train_cmd, ft);

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench_cmd->parsed()) return run_bench(*bench_cmd, fb);
    if (grad_cmd->parsed()) return run_gradcheck(*grad_cmd, fg);
    if (equiv_cmd->parsed()) return run_equiv(*equiv_cmd, fe);
    if (train_cmd->parsed()) return run_train(*train_cmd, ft);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
