// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "rnnwave/cells.hpp"
#include "rnnwave/config.hpp"
#include "rnnwave/gemm.hpp"
#include "rnnwave/matrix.hpp"
#include "rnnwave/params.hpp"
#include "rnnwave/scheduler.hpp"
#include "rnnwave/thread_pool.hpp"

namespace rnnwave {

// Executes full forward, backward-data, and weight-update passes for a
// stacked network at optimization levels O0..O6. The levels restructure the
// same arithmetic:
//   O0  one GEMM per gate (2G per cell) and one memory pass per pointwise op
//   O1  gate-stacked GEMMs, two per cell
//   O2  the cell's two GEMMs run on two workers
//   O3  + fused pointwise stage
//   O4  + transposed weight copies, refreshed once per pass
//   O5  + layer-input GEMM batched over s steps, pipelined one block ahead
//   O6  + cross-layer overlap on the wavefront scheduler
// Every element's accumulation chain is level-invariant (see gemm.hpp and
// cells.hpp), so all levels produce bitwise-identical outputs; only the
// execution schedule changes.
//
// Sequences are time-major: a layer's hidden history is H x B*(T+1) with
// column block t+1 holding h_t and block 0 the initial state, so one step is
// a column range and batching s steps just widens the range.

struct ForwardTape {
  LadderConfig cfg;
  bool training = false;
  Matrix x0;                       // I x B*T input copy
  std::vector<Matrix> h_seq;       // per layer, H x B*(T+1)
  std::vector<Matrix> c_seq;       // LSTM: H x B*(T+1)
  std::vector<Matrix> gates_seq;   // training: G*H x B*T post-activations
  std::vector<Matrix> tanh_c_seq;  // LSTM training: H x B*T
  std::vector<Matrix> zrh_seq;     // GRU training: H x B*T, the R_h*h_prev block
};

struct ForwardResult {
  Matrix y;  // H x B*T, the top layer's hidden outputs
  ForwardTape tape;
};

/// Gradients w.r.t. the pre-activations, retained per layer and step between
/// backward-data and the weight update, plus the pass outputs.
struct BackwardState {
  Matrix dx0;                    // I x B*T
  std::vector<Matrix> dgw_seq;   // per layer, G*H x B*T (W-side)
  std::vector<Matrix> dgr_seq;   // GRU only: R-side variant (h~ block differs)
  std::vector<Matrix> dh0;       // per layer, gradient w.r.t. h_0
  std::vector<Matrix> dc0;       // LSTM: gradient w.r.t. c_0
};

struct Gradients {
  std::vector<Matrix> dw;
  std::vector<Matrix> dr;
  std::vector<std::vector<float>> db;
  Matrix dx0;
};

class Engine {
 public:
  explicit Engine(const LadderConfig& cfg) : cfg_(cfg), pool_(cfg.workers - 1) {
    cfg_.validate();
    ws_.resize(static_cast<std::size_t>(cfg_.layers));
    zr_scratch_.resize(static_cast<std::size_t>(cfg_.layers));
  }

  const LadderConfig& config() const { return cfg_; }

  /// When set, O6 passes deposit their schedule trace here.
  void set_trace_sink(sched::ScheduleTrace* sink) { trace_sink_ = sink; }

  ForwardResult forward(std::vector<LayerParams>& params, const Matrix& x, bool training,
                        const std::vector<Matrix>* h0 = nullptr,
                        const std::vector<Matrix>* c0 = nullptr) {
    check_params(params);
    const int bt = cfg_.batch * cfg_.steps;
    if (x.rows() != cfg_.input || x.cols() != bt) {
      throw std::invalid_argument("forward: x is " + std::to_string(x.rows()) + "x" +
                                  std::to_string(x.cols()) + ", expected " +
                                  std::to_string(cfg_.input) + "x" + std::to_string(bt));
    }
    if (cfg_.opt_level >= 4) pretranspose(params);

    ForwardResult result;
    ForwardTape& tape = result.tape;
    prepare_tape(tape, x, training, h0, c0);
    prepare_forward_scratch();

    switch (cfg_.opt_level) {
      case 0:
      case 1:
        forward_sequential(params, tape, training);
        break;
      case 2:
      case 3:
      case 4:
        forward_streamed(params, tape, training);
        break;
      case 5:
        forward_batched(params, tape, training);
        break;
      case 6:
        forward_overlapped(params, tape, training);
        break;
      default:
        throw std::invalid_argument("forward: opt_level out of range");
    }

    result.y = Matrix(cfg_.hidden, bt);
    ConstSpan top = col_range(tape.h_seq.back(), cfg_.batch, bt);
    detail::ew_copy(span(result.y), top);
    return result;
  }

  /// Reverse-time gradient propagation, top layer first. Produces the
  /// retained per-step pre-activation gradients plus dx0 and the initial
  /// state gradients; weight gradients are a separate pass (weight_update).
  BackwardState backward_data(std::vector<LayerParams>& params, const ForwardTape& tape,
                              const Matrix& dy) {
    check_params(params);
    check_tape(tape);
    const int bt = cfg_.batch * cfg_.steps;
    if (dy.rows() != cfg_.hidden || dy.cols() != bt) {
      throw std::invalid_argument("backward_data: dy is " + std::to_string(dy.rows()) + "x" +
                                  std::to_string(dy.cols()) + ", expected " +
                                  std::to_string(cfg_.hidden) + "x" + std::to_string(bt));
    }
    if (cfg_.opt_level >= 4) pretranspose(params);

    BackwardState state;
    prepare_backward_buffers(state);

    switch (cfg_.opt_level) {
      case 0:
      case 1:
        backward_sequential(params, tape, dy, state);
        break;
      case 2:
      case 3:
      case 4:
        backward_streamed(params, tape, dy, state);
        break;
      case 5:
        backward_batched(params, tape, dy, state);
        break;
      case 6:
        backward_overlapped(params, tape, dy, state);
        break;
      default:
        throw std::invalid_argument("backward_data: opt_level out of range");
    }

    for (int l = 0; l < cfg_.layers; ++l) {
      detail::ew_copy(span(state.dh0[static_cast<std::size_t>(l)]),
                      ConstSpan(span(carry_h_[static_cast<std::size_t>(l)])));
      if (cfg_.kind == CellKind::Lstm) {
        detail::ew_copy(span(state.dc0[static_cast<std::size_t>(l)]),
                        ConstSpan(span(carry_c_[static_cast<std::size_t>(l)])));
      }
    }
    return state;
  }

  /// One gathered GEMM per weight matrix over all B*T columns. Because the
  /// accumulation runs over the time-major inner dimension in ascending
  /// order, the result is bitwise equal to a per-step accumulation loop in
  /// time order.
  Gradients weight_update(const ForwardTape& tape, const BackwardState& state) {
    check_tape(tape);
    const int bt = cfg_.batch * cfg_.steps;
    const int gh = gate_count(cfg_.kind) * cfg_.hidden;
    if (static_cast<int>(state.dgw_seq.size()) != cfg_.layers) {
      throw std::invalid_argument("weight_update: backward state layer count mismatch");
    }
    Gradients grads;
    grads.dw.resize(static_cast<std::size_t>(cfg_.layers));
    grads.dr.resize(static_cast<std::size_t>(cfg_.layers));
    grads.db.resize(static_cast<std::size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
      grads.dw[static_cast<std::size_t>(l)] = Matrix(gh, cfg_.input_width(l));
      grads.dr[static_cast<std::size_t>(l)] = Matrix(gh, cfg_.hidden);
      grads.db[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(gh), 0.0f);
    }

    auto update_layer = [&](int l) {
      const std::size_t li = static_cast<std::size_t>(l);
      const Matrix& dgw = state.dgw_seq[li];
      const Matrix& dgr_src =
          cfg_.kind == CellKind::Gru ? state.dgr_seq[li] : state.dgw_seq[li];
      ConstSpan x_l = layer_input_all(tape, l);
      gemm(false, true, span(dgw), x_l, span(grads.dw[li]), 1.0f, 0.0f);
      ConstSpan h_prev_all = col_range(tape.h_seq[li], 0, bt);
      gemm(false, true, span(dgr_src), h_prev_all, span(grads.dr[li]), 1.0f, 0.0f);
      detail::accumulate_row_sums(span(dgw), grads.db[li].data());
    };

    // Independent per layer; fan out across the pool.
    std::vector<WorkerPool::Ticket> tickets;
    for (int l = 1; l < cfg_.layers; ++l) {
      tickets.push_back(pool_.submit([&update_layer, l] { update_layer(l); }));
    }
    update_layer(0);
    for (auto& t : tickets) t.wait();

    grads.dx0 = state.dx0;
    return grads;
  }

 private:
  // ---- setup ----

  void check_params(const std::vector<LayerParams>& params) const {
    if (static_cast<int>(params.size()) != cfg_.layers) {
      throw std::invalid_argument("engine: expected " + std::to_string(cfg_.layers) +
                                  " layer parameter sets, got " +
                                  std::to_string(params.size()));
    }
    const int gh = gate_count(cfg_.kind) * cfg_.hidden;
    for (int l = 0; l < cfg_.layers; ++l) {
      const LayerParams& p = params[static_cast<std::size_t>(l)];
      if (p.w.rows() != gh || p.w.cols() != cfg_.input_width(l) || p.r.rows() != gh ||
          p.r.cols() != cfg_.hidden || static_cast<int>(p.bias.size()) != gh) {
        throw std::invalid_argument("engine: layer " + std::to_string(l) +
                                    " parameter shapes do not match the configuration");
      }
    }
  }

  void check_tape(const ForwardTape& tape) const {
    if (!tape.training) {
      throw std::invalid_argument("engine: tape was recorded without training mode");
    }
    const LadderConfig& t = tape.cfg;
    if (t.layers != cfg_.layers || t.hidden != cfg_.hidden || t.input != cfg_.input ||
        t.batch != cfg_.batch || t.steps != cfg_.steps || t.kind != cfg_.kind) {
      throw std::invalid_argument("engine: stale tape, network dimensions differ");
    }
  }

  void prepare_tape(ForwardTape& tape, const Matrix& x, bool training,
                    const std::vector<Matrix>* h0, const std::vector<Matrix>* c0) {
    const std::size_t layers = static_cast<std::size_t>(cfg_.layers);
    const int bt = cfg_.batch * cfg_.steps;
    tape.cfg = cfg_;
    tape.training = training;
    tape.x0 = x;
    tape.h_seq.clear();
    tape.c_seq.clear();
    tape.gates_seq.clear();
    tape.tanh_c_seq.clear();
    tape.zrh_seq.clear();
    tape.h_seq.reserve(layers);
    for (int l = 0; l < cfg_.layers; ++l) {
      tape.h_seq.emplace_back(cfg_.hidden, cfg_.batch + bt);
      if (cfg_.kind == CellKind::Lstm) tape.c_seq.emplace_back(cfg_.hidden, cfg_.batch + bt);
      if (training) {
        tape.gates_seq.emplace_back(gate_count(cfg_.kind) * cfg_.hidden, bt);
        if (cfg_.kind == CellKind::Lstm) tape.tanh_c_seq.emplace_back(cfg_.hidden, bt);
        if (cfg_.kind == CellKind::Gru) tape.zrh_seq.emplace_back(cfg_.hidden, bt);
      }
    }
    if (h0) {
      if (static_cast<int>(h0->size()) != cfg_.layers) {
        throw std::invalid_argument("forward: h0 must supply one matrix per layer");
      }
      for (int l = 0; l < cfg_.layers; ++l) {
        detail::ew_copy(col_range(tape.h_seq[static_cast<std::size_t>(l)], 0, cfg_.batch),
                        span((*h0)[static_cast<std::size_t>(l)]));
      }
    }
    if (c0) {
      if (cfg_.kind != CellKind::Lstm) {
        throw std::invalid_argument("forward: c0 supplied for a cell kind without cell state");
      }
      for (int l = 0; l < cfg_.layers; ++l) {
        detail::ew_copy(col_range(tape.c_seq[static_cast<std::size_t>(l)], 0, cfg_.batch),
                        span((*c0)[static_cast<std::size_t>(l)]));
      }
    }
  }

  void prepare_forward_scratch() {
    const int gh = gate_count(cfg_.kind) * cfg_.hidden;
    const int bt = cfg_.batch * cfg_.steps;
    if (static_cast<int>(zw_seq_.size()) != cfg_.layers || zw_seq_.empty() ||
        zw_seq_[0].rows() != gh || zw_seq_[0].cols() != bt) {
      zw_seq_.clear();
      for (int l = 0; l < cfg_.layers; ++l) zw_seq_.emplace_back(gh, bt);
    }
    for (int l = 0; l < cfg_.layers; ++l) {
      Matrix& zr = zr_scratch_[static_cast<std::size_t>(l)];
      if (zr.rows() != gh || zr.cols() != cfg_.batch) zr = Matrix(gh, cfg_.batch);
    }
  }

  void prepare_backward_buffers(BackwardState& state) {
    const std::size_t layers = static_cast<std::size_t>(cfg_.layers);
    const int gh = gate_count(cfg_.kind) * cfg_.hidden;
    const int bt = cfg_.batch * cfg_.steps;
    state.dx0 = Matrix(cfg_.input, bt);
    state.dgw_seq.clear();
    state.dgr_seq.clear();
    state.dh0.clear();
    state.dc0.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      state.dgw_seq.emplace_back(gh, bt);
      if (cfg_.kind == CellKind::Gru) state.dgr_seq.emplace_back(gh, bt);
      state.dh0.emplace_back(cfg_.hidden, cfg_.batch);
      if (cfg_.kind == CellKind::Lstm) state.dc0.emplace_back(cfg_.hidden, cfg_.batch);
    }
    dout_seq_.clear();
    for (int l = 1; l < cfg_.layers; ++l) dout_seq_.emplace_back(cfg_.hidden, bt);
    carry_h_.clear();
    carry_c_.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      carry_h_.emplace_back(cfg_.hidden, cfg_.batch);
      carry_c_.emplace_back(cfg_.hidden, cfg_.batch);
    }
  }

  // ---- shared per-step pieces ----

  ConstSpan layer_input_cols(const ForwardTape& tape, int l, int first_step, int n_steps) const {
    const int b = cfg_.batch;
    if (l == 0) return col_range(tape.x0, first_step * b, n_steps * b);
    // Layer l >= 1 reads the previous layer's outputs: h_{l-1, t} sits in
    // column block t+1 of that layer's hidden sequence.
    return col_range(tape.h_seq[static_cast<std::size_t>(l - 1)], (first_step + 1) * b,
                     n_steps * b);
  }

  ConstSpan layer_input_all(const ForwardTape& tape, int l) const {
    return layer_input_cols(tape, l, 0, cfg_.steps);
  }

  /// zw[l] block [first_step, first_step + n_steps) <- W_l * inputs.
  void input_gemm(const std::vector<LayerParams>& params, const ForwardTape& tape, int l,
                  int first_step, int n_steps, bool per_gate) {
    const LayerParams& p = params[static_cast<std::size_t>(l)];
    const int b = cfg_.batch;
    const int h = cfg_.hidden;
    ConstSpan x = layer_input_cols(tape, l, first_step, n_steps);
    Span dst = col_range(zw_seq_[static_cast<std::size_t>(l)], first_step * b, n_steps * b);
    if (per_gate) {
      const int gates = gate_count(cfg_.kind);
      ConstSpan w = span(p.w);
      for (int g = 0; g < gates; ++g) {
        gemm(false, false, row_range(w, g * h, h), x, row_range(dst, g * h, h), 1.0f, 0.0f);
      }
    } else if (use_transposed()) {
      gemm(true, false, span(p.wt), x, dst, 1.0f, 0.0f);
    } else {
      gemm(false, false, span(p.w), x, dst, 1.0f, 0.0f);
    }
  }

  /// zr_scratch[l] <- R_l * h_{l, t-1}.
  void recurrent_gemm(const std::vector<LayerParams>& params, const ForwardTape& tape, int l,
                      int t, bool per_gate) {
    const LayerParams& p = params[static_cast<std::size_t>(l)];
    const int b = cfg_.batch;
    const int h = cfg_.hidden;
    ConstSpan h_prev = col_range(tape.h_seq[static_cast<std::size_t>(l)], t * b, b);
    Span dst = span(zr_scratch_[static_cast<std::size_t>(l)]);
    if (per_gate) {
      const int gates = gate_count(cfg_.kind);
      ConstSpan r = span(p.r);
      for (int g = 0; g < gates; ++g) {
        gemm(false, false, row_range(r, g * h, h), h_prev, row_range(dst, g * h, h), 1.0f,
             0.0f);
      }
    } else if (use_transposed()) {
      gemm(true, false, span(p.rt), h_prev, dst, 1.0f, 0.0f);
    } else {
      gemm(false, false, span(p.r), h_prev, dst, 1.0f, 0.0f);
    }
  }

  void pointwise_step(const std::vector<LayerParams>& params, ForwardTape& tape, int l, int t,
                      bool fused, bool training) {
    const std::size_t li = static_cast<std::size_t>(l);
    const int b = cfg_.batch;
    const LayerParams& p = params[li];
    ConstSpan zw = col_range(zw_seq_[li], t * b, b);
    ConstSpan zr = span(zr_scratch_[li]);
    ConstSpan h_prev = col_range(tape.h_seq[li], t * b, b);
    Span h_out = col_range(tape.h_seq[li], (t + 1) * b, b);
    ConstSpan c_prev;
    Span c_out;
    if (cfg_.kind == CellKind::Lstm) {
      c_prev = col_range(tape.c_seq[li], t * b, b);
      c_out = col_range(tape.c_seq[li], (t + 1) * b, b);
    }
    CellSavedSlices slices;
    CellSavedSlices* save = nullptr;
    if (training) {
      slices.gates = cfg_.kind == CellKind::RnnTanh || cfg_.kind == CellKind::RnnRelu
                         ? h_out
                         : col_range(tape.gates_seq[li], t * b, b);
      if (cfg_.kind == CellKind::Lstm) slices.tanh_c = col_range(tape.tanh_c_seq[li], t * b, b);
      if (cfg_.kind == CellKind::Gru) slices.zr_h = col_range(tape.zrh_seq[li], t * b, b);
      save = &slices;
    }
    pointwise_forward(cfg_.kind, fused, zw, zr, p.bias.data(), h_prev, c_prev, h_out, c_out,
                      save, ws_[li]);
  }

  void forward_cell(const std::vector<LayerParams>& params, ForwardTape& tape, int l, int t,
                    bool training) {
    recurrent_gemm(params, tape, l, t, cfg_.opt_level == 0);
    pointwise_step(params, tape, l, t, /*fused=*/cfg_.opt_level >= 3, training);
  }

  bool use_transposed() const { return cfg_.opt_level >= 4; }

  // ---- forward level structures ----

  void forward_sequential(const std::vector<LayerParams>& params, ForwardTape& tape,
                          bool training) {
    const bool per_gate = cfg_.opt_level == 0;
    for (int l = 0; l < cfg_.layers; ++l) {
      for (int t = 0; t < cfg_.steps; ++t) {
        input_gemm(params, tape, l, t, 1, per_gate);
        forward_cell(params, tape, l, t, training);
      }
    }
  }

  /// One worker runs the input GEMM while the caller runs the recurrent
  /// GEMM; the pointwise stage waits for both.
  void forward_streamed(const std::vector<LayerParams>& params, ForwardTape& tape,
                        bool training) {
    for (int l = 0; l < cfg_.layers; ++l) {
      for (int t = 0; t < cfg_.steps; ++t) {
        WorkerPool::Ticket ticket = pool_.submit(
            [this, &params, &tape, l, t] { input_gemm(params, tape, l, t, 1, false); });
        recurrent_gemm(params, tape, l, t, false);
        ticket.wait();
        pointwise_step(params, tape, l, t, cfg_.opt_level >= 3, training);
      }
    }
  }

  /// Input GEMMs batched over s steps and issued one block ahead, so the
  /// next block's input transform overlaps this block's recurrent chain.
  void forward_batched(const std::vector<LayerParams>& params, ForwardTape& tape,
                       bool training) {
    const int s = cfg_.effective_batch_steps();
    const int blocks = cfg_.num_blocks();
    for (int l = 0; l < cfg_.layers; ++l) {
      std::vector<WorkerPool::Ticket> pending(static_cast<std::size_t>(blocks));
      auto launch = [&](int j) {
        const int first = j * s;
        const int count = std::min(s, cfg_.steps - first);
        pending[static_cast<std::size_t>(j)] = pool_.submit(
            [this, &params, &tape, l, first, count] {
              input_gemm(params, tape, l, first, count, false);
            });
      };
      launch(0);
      for (int j = 0; j < blocks; ++j) {
        if (j + 1 < blocks) launch(j + 1);
        pending[static_cast<std::size_t>(j)].wait();
        const int first = j * s;
        const int last = std::min(cfg_.steps, first + s);
        for (int t = first; t < last; ++t) forward_cell(params, tape, l, t, training);
      }
    }
  }

  void forward_overlapped(const std::vector<LayerParams>& params, ForwardTape& tape,
                          bool training) {
    const int s = cfg_.effective_batch_steps();
    sched::TaskGraph graph = sched::build_graph(cfg_.layers, cfg_.steps, s);
    sched::ScheduleTrace trace =
        sched::execute(graph, cfg_.workers, [&](const sched::Task& task) {
          if (task.phase == sched::TaskPhase::InputGemm) {
            const auto [first, last] = graph.block_steps(task.block);
            input_gemm(params, tape, task.layer, first, last - first, false);
          } else {
            const int t = task.block * graph.block_width + task.step_k;
            forward_cell(params, tape, task.layer, t, training);
          }
        });
    if (trace_sink_) *trace_sink_ = std::move(trace);
  }

  // ---- backward ----

  ConstSpan d_above_cols(const ForwardTape&, const Matrix& dy, int l, int first_step,
                         int n_steps) const {
    const int b = cfg_.batch;
    if (l == cfg_.layers - 1) return col_range(dy, first_step * b, n_steps * b);
    return col_range(dout_seq_[static_cast<std::size_t>(l)], first_step * b, n_steps * b);
  }

  void backward_pointwise(const ForwardTape& tape, const Matrix& dy, BackwardState& state,
                          int l, int t, bool fused) {
    const std::size_t li = static_cast<std::size_t>(l);
    const int b = cfg_.batch;

    CellSavedConst saved;
    saved.gates = cfg_.kind == CellKind::RnnTanh || cfg_.kind == CellKind::RnnRelu
                      ? col_range(tape.h_seq[li], (t + 1) * b, b)
                      : col_range(tape.gates_seq[li], t * b, b);
    if (cfg_.kind == CellKind::Lstm) saved.tanh_c = col_range(tape.tanh_c_seq[li], t * b, b);
    if (cfg_.kind == CellKind::Gru) saved.zr_h = col_range(tape.zrh_seq[li], t * b, b);

    ConstSpan h_prev = col_range(tape.h_seq[li], t * b, b);
    ConstSpan c_prev;
    if (cfg_.kind == CellKind::Lstm) c_prev = col_range(tape.c_seq[li], t * b, b);
    ConstSpan d_above = d_above_cols(tape, dy, l, t, 1);

    Span dgw = col_range(state.dgw_seq[li], t * b, b);
    Span dgr = cfg_.kind == CellKind::Gru ? col_range(state.dgr_seq[li], t * b, b) : dgw;
    Span carry_h = span(carry_h_[li]);
    Span carry_c = span(carry_c_[li]);

    // The carries are read as this step's upstream and overwritten with the
    // next step's seed (the GRU direct term / the LSTM dc o f chain).
    pointwise_backward(cfg_.kind, fused, saved, h_prev, c_prev, d_above, ConstSpan(carry_h),
                       ConstSpan(carry_c), dgw, dgr, /*dh_local=*/carry_h,
                       /*dc_prev=*/carry_c, /*db=*/nullptr, ws_[li]);
  }

  /// carry_h += R^T * dgates(R side); the carry then holds the complete
  /// recurrent contribution for step t-1.
  void recurrent_backward_gemm(const std::vector<LayerParams>& params, BackwardState& state,
                               int l, int t, bool per_gate) {
    const std::size_t li = static_cast<std::size_t>(l);
    const int b = cfg_.batch;
    const int h = cfg_.hidden;
    const LayerParams& p = params[li];
    ConstSpan dgr = cfg_.kind == CellKind::Gru
                        ? ConstSpan(col_range(state.dgr_seq[li], t * b, b))
                        : ConstSpan(col_range(state.dgw_seq[li], t * b, b));
    Span carry_h = span(carry_h_[li]);
    if (per_gate) {
      const int gates = gate_count(cfg_.kind);
      ConstSpan r = span(p.r);
      for (int g = 0; g < gates; ++g) {
        gemm(true, false, row_range(r, g * h, h), row_range(dgr, g * h, h), carry_h, 1.0f,
             1.0f);
      }
    } else if (use_transposed()) {
      gemm(false, false, span(p.rt), dgr, carry_h, 1.0f, 1.0f);
    } else {
      gemm(true, false, span(p.r), dgr, carry_h, 1.0f, 1.0f);
    }
  }

  /// d(layer input) for a block of steps: W^T * dgates(W side), written to
  /// the layer below's d_above sequence (or dx0 for layer 0).
  void output_gemm(const std::vector<LayerParams>& params, BackwardState& state, int l,
                   int first_step, int n_steps, bool per_gate) {
    const std::size_t li = static_cast<std::size_t>(l);
    const int b = cfg_.batch;
    const int h = cfg_.hidden;
    const LayerParams& p = params[li];
    ConstSpan dgw = col_range(state.dgw_seq[li], first_step * b, n_steps * b);
    Span dst = l == 0 ? col_range(state.dx0, first_step * b, n_steps * b)
                      : col_range(dout_seq_[li - 1], first_step * b, n_steps * b);
    if (per_gate) {
      const int gates = gate_count(cfg_.kind);
      ConstSpan w = span(p.w);
      for (int g = 0; g < gates; ++g) {
        gemm(true, false, row_range(w, g * h, h), row_range(dgw, g * h, h), dst, 1.0f,
             g == 0 ? 0.0f : 1.0f);
      }
    } else if (use_transposed()) {
      gemm(false, false, span(p.wt), dgw, dst, 1.0f, 0.0f);
    } else {
      gemm(true, false, span(p.w), dgw, dst, 1.0f, 0.0f);
    }
  }

  void backward_sequential(const std::vector<LayerParams>& params, const ForwardTape& tape,
                           const Matrix& dy, BackwardState& state) {
    const bool per_gate = cfg_.opt_level == 0;
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      for (int t = cfg_.steps - 1; t >= 0; --t) {
        backward_pointwise(tape, dy, state, l, t, /*fused=*/false);
        recurrent_backward_gemm(params, state, l, t, per_gate);
        output_gemm(params, state, l, t, 1, per_gate);
      }
    }
  }

  void backward_streamed(const std::vector<LayerParams>& params, const ForwardTape& tape,
                         const Matrix& dy, BackwardState& state) {
    const bool fused = cfg_.opt_level >= 3;
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      for (int t = cfg_.steps - 1; t >= 0; --t) {
        backward_pointwise(tape, dy, state, l, t, fused);
        // The cell's two weight-matrix GEMMs run on two workers: the
        // input-side one on the pool, the recurrent one here.
        WorkerPool::Ticket ticket = pool_.submit(
            [this, &params, &state, l, t] { output_gemm(params, state, l, t, 1, false); });
        recurrent_backward_gemm(params, state, l, t, false);
        ticket.wait();
      }
    }
  }

  void backward_batched(const std::vector<LayerParams>& params, const ForwardTape& tape,
                        const Matrix& dy, BackwardState& state) {
    const int s = cfg_.effective_batch_steps();
    const int blocks = cfg_.num_blocks();
    for (int l = cfg_.layers - 1; l >= 0; --l) {
      std::vector<WorkerPool::Ticket> pending;
      pending.reserve(static_cast<std::size_t>(blocks));
      for (int j = blocks - 1; j >= 0; --j) {
        const int first = j * s;
        const int last = std::min(cfg_.steps, first + s);
        for (int t = last - 1; t >= first; --t) {
          backward_pointwise(tape, dy, state, l, t, /*fused=*/true);
          recurrent_backward_gemm(params, state, l, t, false);
        }
        // Gathered input-side GEMM for the finished block overlaps the next
        // (earlier) block's cell chain.
        pending.push_back(pool_.submit([this, &params, &state, l, first, last] {
          output_gemm(params, state, l, first, last - first, false);
        }));
      }
      for (auto& t : pending) t.wait();
    }
  }

  void backward_overlapped(const std::vector<LayerParams>& params, const ForwardTape& tape,
                           const Matrix& dy, BackwardState& state) {
    const int s = cfg_.effective_batch_steps();
    sched::TaskGraph graph = sched::reverse_graph(sched::build_graph(cfg_.layers, cfg_.steps, s));
    sched::ScheduleTrace trace =
        sched::execute(graph, cfg_.workers, [&](const sched::Task& task) {
          if (task.phase == sched::TaskPhase::InputGemm) {
            const auto [first, last] = graph.block_steps(task.block);
            output_gemm(params, state, task.layer, first, last - first, false);
          } else {
            const int t = task.block * graph.block_width + task.step_k;
            backward_pointwise(tape, dy, state, task.layer, t, /*fused=*/true);
            recurrent_backward_gemm(params, state, task.layer, t, false);
          }
        });
    if (trace_sink_) *trace_sink_ = std::move(trace);
  }

  LadderConfig cfg_;
  WorkerPool pool_;
  sched::ScheduleTrace* trace_sink_ = nullptr;
  std::vector<CellWorkspace> ws_;
  std::vector<Matrix> zw_seq_;      // per layer, G*H x B*T input-GEMM outputs
  std::vector<Matrix> zr_scratch_;  // per layer, G*H x B single-step recurrent output
  std::vector<Matrix> dout_seq_;    // per layer l >= 1 at index l-1: d(input of layer l)
  std::vector<Matrix> carry_h_;
  std::vector<Matrix> carry_c_;
};

}  // namespace rnnwave
