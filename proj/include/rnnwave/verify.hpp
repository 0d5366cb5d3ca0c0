// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "rnnwave/engine.hpp"
#include "rnnwave/oracle.hpp"
#include "rnnwave/rng.hpp"
#include "rnnwave/scheduler.hpp"

namespace rnnwave::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Test-input streams sit far away from the parameter streams (which use
// 2*layer + role).
inline constexpr std::uint64_t kInputStream = 1000;
inline constexpr std::uint64_t kDyStream = 1001;

inline Matrix random_matrix(int rows, int cols, std::uint64_t seed, std::uint64_t stream) {
  Matrix m(rows, cols);
  SplitMix64 rng = split_stream(seed, stream);
  float* d = m.data();
  for (std::size_t i = 0; i < m.size(); ++i) d[i] = rng.next_symmetric(1.0);
  return m;
}

inline Matrix make_input(const LadderConfig& cfg) {
  return random_matrix(cfg.input, cfg.batch * cfg.steps, cfg.seed, kInputStream);
}

inline Matrix make_dy(const LadderConfig& cfg) {
  return random_matrix(cfg.hidden, cfg.batch * cfg.steps, cfg.seed, kDyStream);
}

/// Full pipeline at one (level, workers) point; everything a bitwise
/// comparison needs.
struct PipelineOutputs {
  Matrix y;
  Matrix dx0;
  std::vector<Matrix> dh0, dc0;
  Gradients grads;
};

inline PipelineOutputs run_pipeline(LadderConfig cfg, int opt_level, int workers) {
  cfg.opt_level = opt_level;
  cfg.workers = workers;
  std::vector<LayerParams> params = init_params(cfg);
  Engine engine(cfg);
  const Matrix x = make_input(cfg);
  const Matrix dy = make_dy(cfg);
  ForwardResult fwd = engine.forward(params, x, /*training=*/true);
  BackwardState bwd = engine.backward_data(params, fwd.tape, dy);
  PipelineOutputs out;
  out.grads = engine.weight_update(fwd.tape, bwd);
  out.y = std::move(fwd.y);
  out.dx0 = std::move(bwd.dx0);
  out.dh0 = std::move(bwd.dh0);
  out.dc0 = std::move(bwd.dc0);
  return out;
}

inline bool outputs_bitwise_equal(const PipelineOutputs& a, const PipelineOutputs& b,
                                  std::string* what) {
  auto fail = [&](const std::string& w) {
    if (what) *what = w;
    return false;
  };
  if (!bitwise_equal(a.y, b.y)) return fail("forward outputs y");
  if (!bitwise_equal(a.dx0, b.dx0)) return fail("input gradients dx0");
  for (std::size_t l = 0; l < a.dh0.size(); ++l) {
    if (!bitwise_equal(a.dh0[l], b.dh0[l])) return fail("dh0 layer " + std::to_string(l));
  }
  for (std::size_t l = 0; l < a.dc0.size(); ++l) {
    if (!bitwise_equal(a.dc0[l], b.dc0[l])) return fail("dc0 layer " + std::to_string(l));
  }
  for (std::size_t l = 0; l < a.grads.dw.size(); ++l) {
    if (!bitwise_equal(a.grads.dw[l], b.grads.dw[l])) {
      return fail("dW layer " + std::to_string(l));
    }
    if (!bitwise_equal(a.grads.dr[l], b.grads.dr[l])) {
      return fail("dR layer " + std::to_string(l));
    }
    if (a.grads.db[l].size() != b.grads.db[l].size() ||
        std::memcmp(a.grads.db[l].data(), b.grads.db[l].data(),
                    a.grads.db[l].size() * sizeof(float)) != 0) {
      return fail("db layer " + std::to_string(l));
    }
  }
  return true;
}

/// Criterion: forward outputs, backward gradients, and weight updates are
/// bitwise identical across O0..O6 and worker counts.
inline CheckResult check_cross_level(CellKind kind, LadderConfig base,
                                     const std::vector<int>& worker_counts) {
  base.kind = kind;
  CheckResult res;
  res.name = std::string("cross-level bitwise equivalence (") + cell_name(kind) + ")";
  const PipelineOutputs reference = run_pipeline(base, 0, 1);
  for (int level = 0; level <= 6; ++level) {
    for (int workers : worker_counts) {
      if (level == 0 && workers == 1) continue;
      const PipelineOutputs got = run_pipeline(base, level, workers);
      std::string what;
      if (!outputs_bitwise_equal(reference, got, &what)) {
        std::ostringstream os;
        os << "O" << level << " with " << workers << " workers differs from O0/P1 in " << what;
        res.detail = os.str();
        return res;
      }
    }
  }
  res.pass = true;
  res.detail = "O0..O6 x workers bitwise identical";
  return res;
}

inline double max_abs_diff_float_double(const Matrix& a, const std::vector<double>& b) {
  double worst = 0.0;
  const float* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(pa[i]) - b[i]));
  }
  return worst;
}

/// Criterion: engine forward within 1e-4 of the oracle on h outputs, weight
/// gradients within 1e-3, over `num_seeds` random small configurations.
inline CheckResult check_oracle_agreement(int num_seeds, std::uint64_t master_seed) {
  CheckResult res;
  res.name = "oracle agreement";
  const CellKind kinds[] = {CellKind::Lstm, CellKind::Gru, CellKind::RnnTanh,
                            CellKind::RnnRelu};
  SplitMix64 rng = split_stream(master_seed, 77);
  double worst_y = 0.0, worst_w = 0.0;
  for (int i = 0; i < num_seeds; ++i) {
    LadderConfig cfg;
    cfg.kind = kinds[i % 4];
    cfg.layers = 1 + static_cast<int>(rng.next_u64() % 3);
    cfg.hidden = 1 + static_cast<int>(rng.next_u64() % 64);
    cfg.input = 1 + static_cast<int>(rng.next_u64() % 64);
    cfg.batch = 1 + static_cast<int>(rng.next_u64() % 8);
    cfg.steps = 1 + static_cast<int>(rng.next_u64() % 16);
    cfg.batch_steps = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(cfg.steps));
    cfg.opt_level = static_cast<int>(rng.next_u64() % 7);
    cfg.workers = 1 + static_cast<int>(rng.next_u64() % 4);
    cfg.seed = rng.next_u64();

    std::vector<LayerParams> params = init_params(cfg);
    Engine engine(cfg);
    const Matrix x = make_input(cfg);
    const Matrix dy = make_dy(cfg);
    ForwardResult fwd = engine.forward(params, x, true);
    BackwardState bwd = engine.backward_data(params, fwd.tape, dy);
    Gradients grads = engine.weight_update(fwd.tape, bwd);

    const oracle::Net net = oracle::widen(cfg, params);
    const oracle::Activations ref = oracle::forward(net, x, cfg.batch, cfg.steps);
    const oracle::GradientResult oref = oracle::gradient(net, x, dy, cfg.batch, cfg.steps);

    worst_y = std::max(worst_y, max_abs_diff_float_double(fwd.y, ref.y));
    for (int l = 0; l < cfg.layers; ++l) {
      worst_w = std::max(worst_w,
                         max_abs_diff_float_double(grads.dw[static_cast<std::size_t>(l)],
                                                   oref.dw[static_cast<std::size_t>(l)]));
      worst_w = std::max(worst_w,
                         max_abs_diff_float_double(grads.dr[static_cast<std::size_t>(l)],
                                                   oref.dr[static_cast<std::size_t>(l)]));
      const std::vector<float>& db = grads.db[static_cast<std::size_t>(l)];
      for (std::size_t k = 0; k < db.size(); ++k) {
        worst_w = std::max(worst_w, std::abs(static_cast<double>(db[k]) -
                                             oref.db[static_cast<std::size_t>(l)][k]));
      }
    }
    if (worst_y > 1e-4 || worst_w > 1e-3) {
      std::ostringstream os;
      os << "seed draw " << i << " (" << cell_name(cfg.kind) << " L" << cfg.layers << " H"
         << cfg.hidden << " T" << cfg.steps << "): |y| diff " << worst_y << ", |dW| diff "
         << worst_w;
      res.detail = os.str();
      return res;
    }
  }
  std::ostringstream os;
  os << num_seeds << " draws; worst |y| diff " << worst_y << " (<=1e-4), worst weight-grad diff "
     << worst_w << " (<=1e-3)";
  res.pass = true;
  res.detail = os.str();
  return res;
}

/// Central finite differences of the scalar loss sum(dy o y) over every
/// parameter, against the oracle's analytic gradients. The relative-error
/// denominator is floored at 1e-3 to keep the check meaningful where the
/// finite-difference noise floor (~1e-9 absolute in double) exceeds a tiny
/// gradient component.
inline CheckResult check_gradients_vs_fd(std::uint64_t master_seed) {
  CheckResult res;
  res.name = "oracle gradients vs central finite differences";
  const double eps = 1e-6;
  const double tol = 1e-6;
  double worst = 0.0;
  // The ReLU kink makes finite differences ill-defined when a perturbation
  // crosses zero; the fixed seeds below were checked to keep every
  // pre-activation clear of the step window, so the check is deterministic.
  for (CellKind kind :
       {CellKind::Lstm, CellKind::Gru, CellKind::RnnTanh, CellKind::RnnRelu}) {
    LadderConfig cfg;
    cfg.kind = kind;
    cfg.layers = 2;
    cfg.hidden = 8;
    cfg.input = 8;
    cfg.batch = 2;
    cfg.steps = 4;
    cfg.seed = splitmix64_mix(master_seed ^ static_cast<std::uint64_t>(kind));
    std::vector<LayerParams> params = init_params(cfg);
    oracle::Net net = oracle::widen(cfg, params);
    const Matrix x = make_input(cfg);
    const Matrix dy = make_dy(cfg);

    const oracle::GradientResult analytic = oracle::gradient(net, x, dy, cfg.batch, cfg.steps);

    auto loss = [&](const oracle::Net& n) {
      const oracle::Activations acts = oracle::forward(n, x, cfg.batch, cfg.steps);
      double e = 0.0;
      for (std::size_t i = 0; i < acts.y.size(); ++i) {
        const int row = static_cast<int>(i % static_cast<std::size_t>(cfg.hidden));
        const int col = static_cast<int>(i / static_cast<std::size_t>(cfg.hidden));
        e += acts.y[i] * static_cast<double>(dy(row, col));
      }
      return e;
    };

    auto check_tensor = [&](std::vector<double>& tensor, const std::vector<double>& grad) {
      for (std::size_t k = 0; k < tensor.size(); ++k) {
        const double save = tensor[k];
        tensor[k] = save + eps;
        const double ep = loss(net);
        tensor[k] = save - eps;
        const double em = loss(net);
        tensor[k] = save;
        const double fd = (ep - em) / (2.0 * eps);
        const double denom = std::max({std::abs(grad[k]), std::abs(fd), 1e-3});
        worst = std::max(worst, std::abs(grad[k] - fd) / denom);
      }
    };

    for (int l = 0; l < cfg.layers; ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      check_tensor(net.w[li], analytic.dw[li]);
      check_tensor(net.r[li], analytic.dr[li]);
      check_tensor(net.b[li], analytic.db[li]);
    }
    if (worst > tol) {
      std::ostringstream os;
      os << cell_name(kind) << ": max relative error " << worst << " exceeds " << tol;
      res.detail = os.str();
      return res;
    }
  }
  std::ostringstream os;
  os << "LSTM/GRU/RNN max relative error " << worst << " (tolerance " << tol
     << ", step 1e-6, denominator floored at 1e-3)";
  res.pass = true;
  res.detail = os.str();
  return res;
}

/// A small deterministic task body so traces have realistic nonzero spans.
inline void spin_body(const sched::Task&) {
  volatile float acc = 1.0f;
  for (int i = 0; i < 2000; ++i) acc = acc * 1.0000001f + 0.5f;
}

inline bool wavefront_shape_ok(const sched::TaskGraph& graph, const sched::ScheduleTrace& trace,
                               std::string* what) {
  int max_diag = 0;
  for (const sched::Task& t : graph.tasks) max_diag = std::max(max_diag, t.priority);
  std::vector<std::int64_t> max_start(static_cast<std::size_t>(max_diag) + 1,
                                      std::int64_t{-1});
  for (const sched::TraceRecord& r : trace) {
    const int d = graph.tasks[static_cast<std::size_t>(r.task_id)].priority;
    max_start[static_cast<std::size_t>(d)] = std::max(max_start[static_cast<std::size_t>(d)],
                                                      r.start_ns);
  }
  std::vector<std::int64_t> prefix(max_start.size());
  std::int64_t run = -1;
  for (std::size_t d = 0; d < max_start.size(); ++d) {
    run = std::max(run, max_start[d]);
    prefix[d] = run;
  }
  for (const sched::TraceRecord& r : trace) {
    const int d = graph.tasks[static_cast<std::size_t>(r.task_id)].priority;
    if (d >= 2 && prefix[static_cast<std::size_t>(d - 2)] > r.start_ns) {
      if (what) {
        std::ostringstream os;
        os << "task at diagonal " << d << " started at " << r.start_ns
           << "ns before every task at diagonal <= " << d - 2 << " had started (latest "
           << prefix[static_cast<std::size_t>(d - 2)] << "ns)";
        *what = os.str();
      }
      return false;
    }
  }
  return true;
}

/// Criterion: every trace validates; with P >= L no diagonal-d+2 task starts
/// before all diagonal-<=d tasks have started.
inline CheckResult check_scheduler(int num_configs, std::uint64_t master_seed) {
  CheckResult res;
  res.name = "scheduler safety and wavefront shape";
  SplitMix64 rng = split_stream(master_seed, 55);
  const int worker_choices[] = {1, 2, 4, 8};
  const int s_choices[] = {1, 2, 4};
  int wavefront_checked = 0;
  for (int i = 0; i < num_configs; ++i) {
    const int layers = 1 + static_cast<int>(rng.next_u64() % 8);
    const int steps = 1 + static_cast<int>(rng.next_u64() % 64);
    const int s = s_choices[rng.next_u64() % 3];
    const int workers = worker_choices[rng.next_u64() % 4];
    const bool reversed = (rng.next_u64() & 1) != 0;
    sched::TaskGraph graph = sched::build_graph(layers, steps, s);
    if (reversed) graph = sched::reverse_graph(graph);
    sched::ScheduleTrace trace;
    try {
      trace = sched::execute(graph, workers, spin_body);
    } catch (const std::exception& e) {
      res.detail = "config " + std::to_string(i) + ": execute failed: " + e.what();
      return res;
    }
    if (auto violation = sched::validate_trace(graph, trace)) {
      std::ostringstream os;
      os << "config " << i << " (L" << layers << " T" << steps << " s" << s << " P" << workers
         << (reversed ? " reversed" : "") << "): " << violation->description;
      res.detail = os.str();
      return res;
    }
    if (workers >= layers) {
      ++wavefront_checked;
      std::string what;
      if (!wavefront_shape_ok(graph, trace, &what)) {
        std::ostringstream os;
        os << "config " << i << " (L" << layers << " T" << steps << " s" << s << " P" << workers
           << "): " << what;
        res.detail = os.str();
        return res;
      }
    }
  }
  std::ostringstream os;
  os << num_configs << " randomized configs validated; wavefront shape checked on "
     << wavefront_checked << " runs with P >= L";
  res.pass = true;
  res.detail = os.str();
  return res;
}

/// Criterion: the single gathered dW/dR GEMMs equal a sequential per-step
/// accumulation loop, bitwise, and db equals a naive double-loop row sum.
inline CheckResult check_weight_update_equivalence(std::uint64_t seed) {
  CheckResult res;
  res.name = "weight-update single-GEMM equivalence";
  for (CellKind kind : {CellKind::Lstm, CellKind::Gru}) {
    LadderConfig cfg;
    cfg.kind = kind;
    cfg.layers = 2;
    cfg.hidden = 16;
    cfg.input = 16;
    cfg.batch = 4;
    cfg.steps = 8;
    cfg.opt_level = 1;
    cfg.seed = seed;
    std::vector<LayerParams> params = init_params(cfg);
    Engine engine(cfg);
    const Matrix x = make_input(cfg);
    const Matrix dy = make_dy(cfg);
    ForwardResult fwd = engine.forward(params, x, true);
    BackwardState bwd = engine.backward_data(params, fwd.tape, dy);
    Gradients grads = engine.weight_update(fwd.tape, bwd);

    const int gh = gate_count(kind) * cfg.hidden;
    const int b = cfg.batch;
    for (int l = 0; l < cfg.layers; ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      const Matrix& dgw = bwd.dgw_seq[li];
      const Matrix& dgr = kind == CellKind::Gru ? bwd.dgr_seq[li] : bwd.dgw_seq[li];

      Matrix dw_steps(gh, cfg.input_width(l));
      Matrix dr_steps(gh, cfg.hidden);
      for (int t = 0; t < cfg.steps; ++t) {
        ConstSpan x_t = l == 0 ? col_range(fwd.tape.x0, t * b, b)
                               : col_range(fwd.tape.h_seq[li - 1], (t + 1) * b, b);
        gemm(false, true, col_range(dgw, t * b, b), x_t, span(dw_steps), 1.0f, 1.0f);
        ConstSpan h_prev = col_range(fwd.tape.h_seq[li], t * b, b);
        gemm(false, true, col_range(dgr, t * b, b), h_prev, span(dr_steps), 1.0f, 1.0f);
      }
      if (!bitwise_equal(grads.dw[li], dw_steps) || !bitwise_equal(grads.dr[li], dr_steps)) {
        res.detail = std::string(cell_name(kind)) + " layer " + std::to_string(l) +
                     ": gathered GEMM differs from per-step accumulation";
        return res;
      }

      std::vector<float> db_naive(static_cast<std::size_t>(gh), 0.0f);
      for (int ccol = 0; ccol < dgw.cols(); ++ccol) {
        for (int row = 0; row < gh; ++row) {
          db_naive[static_cast<std::size_t>(row)] += dgw(row, ccol);
        }
      }
      if (db_naive != grads.db[li]) {
        res.detail = std::string(cell_name(kind)) + " layer " + std::to_string(l) +
                     ": db differs from naive row sums";
        return res;
      }
    }
  }
  res.pass = true;
  res.detail = "gathered dW/dR bitwise equal per-step loops; db equals naive row sums";
  return res;
}

/// Criterion: identical seed, config, and worker count reproduce identical
/// numeric outputs.
inline CheckResult check_determinism(std::uint64_t seed) {
  CheckResult res;
  res.name = "determinism across repeated runs";
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 3;
  cfg.hidden = 48;
  cfg.input = 40;
  cfg.batch = 6;
  cfg.steps = 24;
  cfg.batch_steps = 2;
  cfg.seed = seed;
  for (int level : {0, 3, 6}) {
    const PipelineOutputs a = run_pipeline(cfg, level, 4);
    const PipelineOutputs b = run_pipeline(cfg, level, 4);
    std::string what;
    if (!outputs_bitwise_equal(a, b, &what)) {
      res.detail = "O" + std::to_string(level) + ": repeated run differs in " + what;
      return res;
    }
  }
  res.pass = true;
  res.detail = "repeated O0/O3/O6 runs bitwise identical";
  return res;
}

/// Randomized cross-level spot checks for --deep mode.
inline CheckResult check_cross_level_randomized(int draws, std::uint64_t master_seed) {
  CheckResult res;
  res.name = "randomized cross-level equivalence";
  const CellKind kinds[] = {CellKind::Lstm, CellKind::Gru, CellKind::RnnTanh,
                            CellKind::RnnRelu};
  SplitMix64 rng = split_stream(master_seed, 99);
  for (int i = 0; i < draws; ++i) {
    LadderConfig cfg;
    cfg.kind = kinds[rng.next_u64() % 4];
    cfg.layers = 1 + static_cast<int>(rng.next_u64() % 4);
    cfg.hidden = 1 + static_cast<int>(rng.next_u64() % 48);
    cfg.input = 1 + static_cast<int>(rng.next_u64() % 48);
    cfg.batch = 1 + static_cast<int>(rng.next_u64() % 8);
    cfg.steps = 1 + static_cast<int>(rng.next_u64() % 24);
    cfg.batch_steps = 1 + static_cast<int>(rng.next_u64() % 4);
    if (cfg.batch_steps > cfg.steps) cfg.batch_steps = cfg.steps;
    cfg.seed = rng.next_u64();
    const int level = 1 + static_cast<int>(rng.next_u64() % 6);
    const int workers = 1 + static_cast<int>(rng.next_u64() % 8);
    const PipelineOutputs ref = run_pipeline(cfg, 0, 1);
    const PipelineOutputs got = run_pipeline(cfg, level, workers);
    std::string what;
    if (!outputs_bitwise_equal(ref, got, &what)) {
      std::ostringstream os;
      os << "draw " << i << " (" << cell_name(cfg.kind) << " L" << cfg.layers << " H"
         << cfg.hidden << " B" << cfg.batch << " T" << cfg.steps << " s" << cfg.batch_steps
         << " O" << level << " P" << workers << ") differs in " << what;
      res.detail = os.str();
      return res;
    }
  }
  res.pass = true;
  res.detail = std::to_string(draws) + " randomized configurations bitwise identical to O0/P1";
  return res;
}

inline LadderConfig default_suite_config(std::uint64_t seed) {
  LadderConfig base;
  base.layers = 4;
  base.hidden = 64;
  base.input = 64;
  base.batch = 8;
  base.steps = 32;
  base.batch_steps = 2;
  base.seed = seed;
  return base;
}

inline std::vector<CheckResult> run_suite(bool deep, std::uint64_t seed,
                                          const LadderConfig* base_override = nullptr) {
  std::vector<CheckResult> results;
  LadderConfig base = base_override ? *base_override : default_suite_config(seed);
  base.seed = seed;
  base.opt_level = 0;
  const std::vector<int> workers = {1, 2, 4, 8};
  for (CellKind kind :
       {CellKind::Lstm, CellKind::Gru, CellKind::RnnTanh, CellKind::RnnRelu}) {
    results.push_back(check_cross_level(kind, base, workers));
  }
  results.push_back(check_oracle_agreement(20, seed));
  results.push_back(check_gradients_vs_fd(seed));
  results.push_back(check_scheduler(50, seed));
  results.push_back(check_weight_update_equivalence(seed));
  results.push_back(check_determinism(seed));
  if (deep) {
    results.push_back(check_cross_level_randomized(50, seed));
  }
  return results;
}

}  // namespace rnnwave::verify
