// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rnnwave/engine.hpp"
#include "rnnwave/verify.hpp"

namespace rnnwave::bench {

// Optimization-ladder benchmark. Levels O0..O6 run in order, each preceded
// by a bitwise equivalence check against O0 on a shrunken shadow
// configuration (H capped at 64, T at 32): bitwise equivalence is
// size-independent under the fixed accumulation order, so the check stays
// cheap even for large benchmark shapes. A level that fails its check
// aborts the ladder, so no speedup is ever reported for a non-equivalent
// level.

inline const char* const kLevelLabels[7] = {
    "Naive",          "Grouped GEMMs",   "Streamed GEMMs", "Fused point-wise",
    "Pre-transpose",  "Batching inputs", "Overlapping layers"};

enum class PassKind { Forward, Backward, Both };

inline PassKind parse_pass(const std::string& s) {
  if (s == "fwd") return PassKind::Forward;
  if (s == "bwd") return PassKind::Backward;
  if (s == "both") return PassKind::Both;
  throw std::invalid_argument("pass must be one of fwd|bwd|both, got '" + s + "'");
}

inline const char* pass_name(PassKind p) {
  switch (p) {
    case PassKind::Forward: return "fwd";
    case PassKind::Backward: return "bwd";
    case PassKind::Both: return "both";
  }
  return "?";
}

/// GEMM multiply-add work per cell for the measured pass: the backward data
/// pass does the same two transposed GEMMs per cell, and the weight update
/// adds one more pair.
inline int pass_work_multiplier(PassKind p) {
  switch (p) {
    case PassKind::Forward: return 1;
    case PassKind::Backward: return 2;
    case PassKind::Both: return 3;
  }
  return 1;
}

struct LadderOptions {
  LadderConfig cfg;      // opt_level is ignored; all seven levels run
  int reps = 100;
  int warmup = 3;
  PassKind pass = PassKind::Forward;
};

struct LadderRow {
  int opt_level = 0;
  std::string label;
  double us_per_cell_mean = 0.0;
  double us_per_cell_median = 0.0;
  double us_per_cell_min = 0.0;
  double speedup_vs_naive = 1.0;  // from the rounded median column
  double gflops = 0.0;
  bool equiv_ok = false;
};

struct EquivalenceFailure : std::runtime_error {
  int opt_level;
  EquivalenceFailure(int level, const std::string& what)
      : std::runtime_error(what), opt_level(level) {}
};

/// Bitwise check of the full pipeline at (level, cfg.workers) against O0/P1
/// on the shadow configuration.
inline bool equivalent_to_naive(const LadderConfig& cfg, int level, std::string* what) {
  LadderConfig shadow = cfg;
  shadow.hidden = std::min(shadow.hidden, 64);
  shadow.steps = std::min(shadow.steps, 32);
  shadow.batch_steps = std::min(shadow.batch_steps, shadow.steps);
  const verify::PipelineOutputs ref = verify::run_pipeline(shadow, 0, 1);
  const verify::PipelineOutputs got = verify::run_pipeline(shadow, level, cfg.workers);
  return verify::outputs_bitwise_equal(ref, got, what);
}

namespace detail {

struct TimingStats {
  double mean_us = 0.0;
  double median_us = 0.0;
  double min_us = 0.0;
};

inline TimingStats summarize(std::vector<double> us) {
  TimingStats s;
  if (us.empty()) return s;
  double total = 0.0;
  for (double v : us) total += v;
  s.mean_us = total / static_cast<double>(us.size());
  std::sort(us.begin(), us.end());
  const std::size_t n = us.size();
  s.median_us = n % 2 == 1 ? us[n / 2] : 0.5 * (us[n / 2 - 1] + us[n / 2]);
  s.min_us = us.front();
  return s;
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace detail

/// Times one optimization level. Forward timing uses inference mode;
/// backward timing records a training tape once, then times
/// backward_data + weight_update; "both" times the full training step.
inline detail::TimingStats time_level(const LadderConfig& cfg, PassKind pass, int reps,
                                      int warmup, sched::ScheduleTrace* trace_sink) {
  std::vector<LayerParams> params = init_params(cfg);
  Engine engine(cfg);
  const Matrix x = verify::make_input(cfg);
  const Matrix dy = verify::make_dy(cfg);

  ForwardTape tape;
  if (pass == PassKind::Backward) {
    ForwardResult fwd = engine.forward(params, x, true);
    tape = std::move(fwd.tape);
  }

  auto run_once = [&] {
    switch (pass) {
      case PassKind::Forward: {
        ForwardResult fwd = engine.forward(params, x, false);
        break;
      }
      case PassKind::Backward: {
        BackwardState bwd = engine.backward_data(params, tape, dy);
        Gradients grads = engine.weight_update(tape, bwd);
        break;
      }
      case PassKind::Both: {
        ForwardResult fwd = engine.forward(params, x, true);
        BackwardState bwd = engine.backward_data(params, fwd.tape, dy);
        Gradients grads = engine.weight_update(fwd.tape, bwd);
        break;
      }
    }
  };

  for (int i = 0; i < warmup; ++i) run_once();
  if (trace_sink && cfg.opt_level == 6) engine.set_trace_sink(trace_sink);

  std::vector<double> us;
  us.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    const auto t1 = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  engine.set_trace_sink(nullptr);
  return detail::summarize(us);
}

inline std::vector<LadderRow> run_ladder(const LadderOptions& opts, std::ostream* log,
                                         sched::ScheduleTrace* trace_sink = nullptr) {
  LadderConfig cfg = opts.cfg;
  cfg.validate();
  if (opts.reps < 1) throw std::invalid_argument("run_ladder: reps must be >= 1");

  const int cells = cfg.layers * cfg.steps;
  std::vector<LadderRow> rows;
  double naive_median_rounded = 0.0;
  for (int level = 0; level <= 6; ++level) {
    std::string what;
    if (!equivalent_to_naive(cfg, level, &what)) {
      throw EquivalenceFailure(level, std::string(kLevelLabels[level]) + " (O" +
                                          std::to_string(level) +
                                          ") failed the equivalence check against Naive: " +
                                          what);
    }
    LadderConfig level_cfg = cfg;
    level_cfg.opt_level = level;
    const detail::TimingStats stats =
        time_level(level_cfg, opts.pass, opts.reps, opts.warmup, trace_sink);

    LadderRow row;
    row.opt_level = level;
    row.label = kLevelLabels[level];
    row.equiv_ok = true;
    row.us_per_cell_mean = stats.mean_us / cells;
    row.us_per_cell_median = detail::round3(stats.median_us / cells);
    row.us_per_cell_min = stats.min_us / cells;
    if (level == 0) naive_median_rounded = row.us_per_cell_median;
    row.speedup_vs_naive =
        row.us_per_cell_median > 0.0
            ? detail::round3(naive_median_rounded / row.us_per_cell_median)
            : 0.0;
    row.gflops =
        static_cast<double>(pass_work_multiplier(opts.pass)) *
        static_cast<double>(flop_count(cfg.kind, cfg.hidden, cfg.input, cfg.batch)) /
        (row.us_per_cell_median * 1000.0);
    rows.push_back(row);

    if (log) {
      *log << "O" << level << "  " << std::left << std::setw(20) << row.label << std::right
           << std::fixed << std::setprecision(3) << std::setw(12) << row.us_per_cell_median
           << " us/cell  " << std::setw(7) << std::setprecision(2) << row.speedup_vs_naive
           << "x  " << std::setw(9) << std::setprecision(2) << row.gflops << " GFLOPS\n";
    }
  }
  return rows;
}

inline void write_ladder_csv(std::ostream& os, const LadderOptions& opts,
                             const std::vector<LadderRow>& rows) {
  const LadderConfig& c = opts.cfg;
  os << "# rnnwave run-ladder: cell=" << cell_name(c.kind) << " layers=" << c.layers
     << " hidden=" << c.hidden << " input=" << c.input << " batch=" << c.batch
     << " steps=" << c.steps << " batch_steps=" << c.batch_steps << " workers=" << c.workers
     << " seed=" << c.seed << " pass=" << pass_name(opts.pass) << " reps=" << opts.reps
     << " warmup=" << opts.warmup << "\n";
  os << "# us_per_cell is the median over reps; gflops counts GEMM multiply-adds only "
        "(2*G*H*(I+H)*B per cell, pass multiplier fwd=1 bwd=2 both=3)\n";
  os << "opt_level,label,us_per_cell,speedup_vs_naive,gflops,equiv_ok\n";
  for (const LadderRow& r : rows) {
    os << r.opt_level << ',' << r.label << ',' << std::fixed << std::setprecision(3)
       << r.us_per_cell_median << ',' << r.speedup_vs_naive << ',' << r.gflops << ','
       << (r.equiv_ok ? "true" : "false") << '\n';
  }
}

struct SweepOptions {
  LadderConfig cfg;  // hidden/input/batch overridden per grid point
  std::vector<int> hidden_list;
  std::vector<int> batch_list;
  int reps = 20;
  int warmup = 2;
  PassKind pass = PassKind::Forward;
};

struct SweepRow {
  int hidden = 0;
  int batch = 0;
  LadderRow row;
};

/// Cross product of hidden and batch sizes; the layer-0 input width follows
/// the hidden size, matching the square recurrent setup of the ladder runs.
inline std::vector<SweepRow> run_sweep(const SweepOptions& opts, std::ostream* log) {
  if (opts.hidden_list.empty() || opts.batch_list.empty()) {
    throw std::invalid_argument("sweep: hidden and batch lists must be non-empty");
  }
  std::vector<SweepRow> out;
  for (int h : opts.hidden_list) {
    for (int b : opts.batch_list) {
      LadderOptions lo;
      lo.cfg = opts.cfg;
      lo.cfg.hidden = h;
      lo.cfg.input = h;
      lo.cfg.batch = b;
      lo.reps = opts.reps;
      lo.warmup = opts.warmup;
      lo.pass = opts.pass;
      if (log) *log << "== hidden " << h << ", batch " << b << " ==\n";
      const std::vector<LadderRow> rows = run_ladder(lo, log);
      for (const LadderRow& r : rows) out.push_back(SweepRow{h, b, r});
    }
  }
  return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepOptions& opts,
                            const std::vector<SweepRow>& rows) {
  const LadderConfig& c = opts.cfg;
  os << "# rnnwave sweep: cell=" << cell_name(c.kind) << " layers=" << c.layers
     << " steps=" << c.steps << " batch_steps=" << c.batch_steps << " workers=" << c.workers
     << " seed=" << c.seed << " pass=" << pass_name(opts.pass) << " reps=" << opts.reps
     << " warmup=" << opts.warmup << "\n";
  os << "# us_per_cell is the median over reps; gflops counts GEMM multiply-adds only "
        "(2*G*H*(I+H)*B per cell, pass multiplier fwd=1 bwd=2 both=3)\n";
  os << "hidden,batch,opt_level,label,us_per_cell,speedup_vs_naive,gflops,equiv_ok\n";
  for (const SweepRow& r : rows) {
    os << r.hidden << ',' << r.batch << ',' << r.row.opt_level << ',' << r.row.label << ','
       << std::fixed << std::setprecision(3) << r.row.us_per_cell_median << ','
       << r.row.speedup_vs_naive << ',' << r.row.gflops << ','
       << (r.row.equiv_ok ? "true" : "false") << '\n';
  }
}

}  // namespace rnnwave::bench
