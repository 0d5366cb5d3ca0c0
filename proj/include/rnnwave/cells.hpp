// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "rnnwave/config.hpp"
#include "rnnwave/matrix.hpp"

namespace rnnwave {

// Pointwise stage of one cell step. The gate pre-activations arrive as two
// blocks: zw = W*x and zr = R*h_prev, each gate-stacked (G*H x B). Combining
// them, adding the bias, and applying the activations is the pointwise
// stage's job, so the fused mode touches memory exactly once.
//
// Every scalar follows one frozen operation chain (written out in the fused
// loops below). The unfused mode replays the same chain as one full-array
// pass per elementary op, matching a kernel-per-op execution; both modes are
// bitwise identical because the chains are identical.
//
// Gate row blocks: LSTM i, f, o, c' in that order; GRU r, z, h~ (update gate
// z is called u in the code). GRU uses the linear-before-reset form
//   h~ = tanh(zw_h + b_h + r o zr_h)
// so all three recurrent products come from one grouped GEMM; zr_h must be
// kept for the backward pass and is stored into `saved.zr_h`.

inline float sigmoid_scalar(float x) { return 1.0f / (1.0f + std::exp(-x)); }

/// Views into the tape slots for one step; filled by a training-mode forward.
struct CellSavedSlices {
  Span gates;   // post-activation gates, G*H x B
  Span tanh_c;  // tanh(c_t), LSTM only
  Span zr_h;    // R_h * h_prev block, GRU only
};

struct CellSavedConst {
  ConstSpan gates;
  ConstSpan tanh_c;
  ConstSpan zr_h;
};

struct CellWorkspace {
  Matrix pre;            // G*H x B
  Matrix gates_scratch;  // G*H x B, post-activations in unfused inference
  Matrix t1, t2, t3, t4; // H x B temporaries

  void ensure(CellKind kind, int hidden, int batch) {
    const int gh = gate_count(kind) * hidden;
    if (pre.rows() != gh || pre.cols() != batch || t1.rows() != hidden) {
      pre = Matrix(gh, batch);
      gates_scratch = Matrix(gh, batch);
      t1 = Matrix(hidden, batch);
      t2 = Matrix(hidden, batch);
      t3 = Matrix(hidden, batch);
      t4 = Matrix(hidden, batch);
    }
  }
};

/// GEMM multiply-add FLOPs of one cell step (the pointwise work is excluded;
/// see the benchmark reporter for the counting convention).
inline std::int64_t flop_count(CellKind kind, int hidden, int input, int batch) {
  return 2ll * gate_count(kind) * hidden * (static_cast<std::int64_t>(input) + hidden) *
         batch;
}

namespace detail {

inline void ew_add(Span dst, ConstSpan a, ConstSpan b) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* pa = a.col(c);
    const float* pb = b.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = pa[r] + pb[r];
  }
}

inline void ew_add_bias(Span dst, const float* bias, int bias_offset) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = d[r] + bias[bias_offset + r];
  }
}

inline void ew_sigmoid(Span dst, ConstSpan src) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* s = src.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = sigmoid_scalar(s[r]);
  }
}

inline void ew_tanh(Span dst, ConstSpan src) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* s = src.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = std::tanh(s[r]);
  }
}

inline void ew_relu(Span dst, ConstSpan src) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* s = src.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = s[r] > 0.0f ? s[r] : 0.0f;
  }
}

inline void ew_mul(Span dst, ConstSpan a, ConstSpan b) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* pa = a.col(c);
    const float* pb = b.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = pa[r] * pb[r];
  }
}

inline void ew_sub(Span dst, ConstSpan a, ConstSpan b) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* pa = a.col(c);
    const float* pb = b.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = pa[r] - pb[r];
  }
}

inline void ew_one_minus(Span dst, ConstSpan a) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* pa = a.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = 1.0f - pa[r];
  }
}

inline void ew_copy(Span dst, ConstSpan a) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* pa = a.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = pa[r];
  }
}

inline void ew_zero(Span dst) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = 0.0f;
  }
}

inline void ew_relu_mask(Span dst, ConstSpan dh, ConstSpan h) {
  for (int c = 0; c < dst.cols; ++c) {
    float* d = dst.col(c);
    const float* pd = dh.col(c);
    const float* ph = h.col(c);
    for (int r = 0; r < dst.rows; ++r) d[r] = ph[r] > 0.0f ? pd[r] : 0.0f;
  }
}

/// db[row] += sum over batch of src(row, col), ascending col.
inline void accumulate_row_sums(const ConstSpan& src, float* db) {
  for (int c = 0; c < src.cols; ++c) {
    const float* s = src.col(c);
    for (int r = 0; r < src.rows; ++r) db[r] += s[r];
  }
}

inline void check_dims(ConstSpan s, int rows, int cols, const char* what) {
  if (s.rows != rows || s.cols != cols) {
    throw std::invalid_argument(std::string("cells: ") + what + " is " +
                                std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                                ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

}  // namespace detail

inline void pointwise_forward(CellKind kind, bool fused, ConstSpan zw, ConstSpan zr,
                              const float* bias, ConstSpan h_prev, ConstSpan c_prev,
                              Span h_out, Span c_out, const CellSavedSlices* save,
                              CellWorkspace& ws) {
  const int hidden = h_prev.rows;
  const int batch = h_prev.cols;
  const int gates = gate_count(kind);
  detail::check_dims(zw, gates * hidden, batch, "zw");
  detail::check_dims(zr, gates * hidden, batch, "zr");
  detail::check_dims(ConstSpan(h_out), hidden, batch, "h_out");
  if (kind == CellKind::Lstm) {
    detail::check_dims(c_prev, hidden, batch, "c_prev");
    detail::check_dims(ConstSpan(c_out), hidden, batch, "c_out");
  } else if (!c_prev.empty()) {
    throw std::invalid_argument("cells: cell state supplied for a cell kind without one");
  }
  ws.ensure(kind, hidden, batch);

  switch (kind) {
    case CellKind::RnnTanh:
    case CellKind::RnnRelu: {
      if (fused) {
        for (int c = 0; c < batch; ++c) {
          const float* pzw = zw.col(c);
          const float* pzr = zr.col(c);
          float* ph = h_out.col(c);
          for (int r = 0; r < hidden; ++r) {
            const float a = (pzw[r] + pzr[r]) + bias[r];
            ph[r] = (kind == CellKind::RnnTanh) ? std::tanh(a) : (a > 0.0f ? a : 0.0f);
          }
        }
      } else {
        Span pre = span(ws.pre);
        detail::ew_add(pre, zw, zr);
        detail::ew_add_bias(pre, bias, 0);
        if (kind == CellKind::RnnTanh) {
          detail::ew_tanh(h_out, ConstSpan(pre));
        } else {
          detail::ew_relu(h_out, ConstSpan(pre));
        }
      }
      // Post-activation state for the backward pass is h itself; the tape's
      // hidden sequence already holds it.
      return;
    }

    case CellKind::Lstm: {
      Span gates_dst = save ? save->gates : span(ws.gates_scratch);
      Span tanh_dst = save ? save->tanh_c : span(ws.t3);
      if (fused) {
        for (int c = 0; c < batch; ++c) {
          const float* pzw = zw.col(c);
          const float* pzr = zr.col(c);
          const float* pcp = c_prev.col(c);
          float* pg = gates_dst.col(c);
          float* pc = c_out.col(c);
          float* ptc = tanh_dst.col(c);
          float* ph = h_out.col(c);
          for (int r = 0; r < hidden; ++r) {
            const float ai = (pzw[r] + pzr[r]) + bias[r];
            const float af = (pzw[hidden + r] + pzr[hidden + r]) + bias[hidden + r];
            const float ao = (pzw[2 * hidden + r] + pzr[2 * hidden + r]) + bias[2 * hidden + r];
            const float ac = (pzw[3 * hidden + r] + pzr[3 * hidden + r]) + bias[3 * hidden + r];
            const float iv = sigmoid_scalar(ai);
            const float fv = sigmoid_scalar(af);
            const float ov = sigmoid_scalar(ao);
            const float cb = std::tanh(ac);
            const float t1 = fv * pcp[r];
            const float t2 = iv * cb;
            const float cv = t1 + t2;
            const float tc = std::tanh(cv);
            pg[r] = iv;
            pg[hidden + r] = fv;
            pg[2 * hidden + r] = ov;
            pg[3 * hidden + r] = cb;
            pc[r] = cv;
            ptc[r] = tc;
            ph[r] = ov * tc;
          }
        }
      } else {
        Span pre = span(ws.pre);
        detail::ew_add(pre, zw, zr);                                   // 1 combine
        detail::ew_add_bias(pre, bias, 0);                             // 2 bias
        Span sig_in = row_range(pre, 0, 3 * hidden);
        detail::ew_sigmoid(row_range(gates_dst, 0, 3 * hidden),
                           ConstSpan(sig_in));                         // 3 sigmoids
        detail::ew_tanh(row_range(gates_dst, 3 * hidden, hidden),
                        ConstSpan(row_range(pre, 3 * hidden, hidden)));// 4 candidate
        ConstSpan gi = row_range(ConstSpan(gates_dst), 0, hidden);
        ConstSpan gf = row_range(ConstSpan(gates_dst), hidden, hidden);
        ConstSpan go = row_range(ConstSpan(gates_dst), 2 * hidden, hidden);
        ConstSpan gc = row_range(ConstSpan(gates_dst), 3 * hidden, hidden);
        detail::ew_mul(span(ws.t1), gf, c_prev);                       // 5 f o c_prev
        detail::ew_mul(span(ws.t2), gi, gc);                           // 6 i o c'
        detail::ew_add(c_out, ConstSpan(span(ws.t1)), ConstSpan(span(ws.t2))); // 7 c
        detail::ew_tanh(tanh_dst, ConstSpan(c_out));                   // 8 tanh c
        detail::ew_mul(h_out, go, ConstSpan(tanh_dst));                // 9 h
      }
      return;
    }

    case CellKind::Gru: {
      Span gates_dst = save ? save->gates : span(ws.gates_scratch);
      ConstSpan zr_hb = row_range(zr, 2 * hidden, hidden);
      if (fused) {
        for (int c = 0; c < batch; ++c) {
          const float* pzw = zw.col(c);
          const float* pzr = zr.col(c);
          const float* php = h_prev.col(c);
          float* pg = gates_dst.col(c);
          float* ph = h_out.col(c);
          float* psave = save ? save->zr_h.col(c) : nullptr;
          for (int r = 0; r < hidden; ++r) {
            const float ar = (pzw[r] + pzr[r]) + bias[r];
            const float au = (pzw[hidden + r] + pzr[hidden + r]) + bias[hidden + r];
            const float rv = sigmoid_scalar(ar);
            const float uv = sigmoid_scalar(au);
            const float t1 = pzw[2 * hidden + r] + bias[2 * hidden + r];
            const float t2 = rv * pzr[2 * hidden + r];
            const float an = t1 + t2;
            const float nv = std::tanh(an);
            const float t3 = uv * php[r];
            const float om = 1.0f - uv;
            const float t4 = om * nv;
            pg[r] = rv;
            pg[hidden + r] = uv;
            pg[2 * hidden + r] = nv;
            ph[r] = t3 + t4;
            if (psave) psave[r] = pzr[2 * hidden + r];
          }
        }
      } else {
        Span pre_ru = row_range(span(ws.pre), 0, 2 * hidden);
        detail::ew_add(pre_ru, row_range(zw, 0, 2 * hidden), row_range(zr, 0, 2 * hidden));
        detail::ew_add_bias(pre_ru, bias, 0);
        detail::ew_sigmoid(row_range(gates_dst, 0, 2 * hidden), ConstSpan(pre_ru));
        ConstSpan gr = row_range(ConstSpan(gates_dst), 0, hidden);
        ConstSpan gu = row_range(ConstSpan(gates_dst), hidden, hidden);
        detail::ew_copy(span(ws.t1), row_range(zw, 2 * hidden, hidden));
        detail::ew_add_bias(span(ws.t1), bias, 2 * hidden);            // zw_h + b_h
        detail::ew_mul(span(ws.t2), gr, zr_hb);                        // r o zr_h
        detail::ew_add(span(ws.t3), ConstSpan(span(ws.t1)), ConstSpan(span(ws.t2)));
        detail::ew_tanh(row_range(gates_dst, 2 * hidden, hidden), ConstSpan(span(ws.t3)));
        ConstSpan gn = row_range(ConstSpan(gates_dst), 2 * hidden, hidden);
        detail::ew_mul(span(ws.t1), gu, h_prev);                       // u o h_prev
        detail::ew_one_minus(span(ws.t2), gu);                         // 1 - u
        detail::ew_mul(span(ws.t3), ConstSpan(span(ws.t2)), gn);       // (1-u) o h~
        detail::ew_add(h_out, ConstSpan(span(ws.t1)), ConstSpan(span(ws.t3)));
        if (save) detail::ew_copy(save->zr_h, zr_hb);
      }
      return;
    }
  }
}

// Backward of the pointwise stage. `d_above` is the gradient arriving from
// the layer above (or dy on the top layer), `dh_carry` the recurrent
// contribution assembled from step t+1 (R^T * dgates + the GRU direct term),
// combined here as dh = d_above + dh_carry. Outputs:
//   dgw      : gradient w.r.t. the W-side pre-activations (feeds dW and dx)
//   dgr      : gradient w.r.t. the R-side pre-activations (feeds dR and
//              dh_prev); distinct from dgw only for GRU's h~ block, callers
//              may alias the two spans for LSTM/RNN
//   dh_local : the direct h_prev term, the seed of the next carry (zero for
//              LSTM/RNN, u o dh for GRU)
//   dc_prev  : LSTM cell-state carry, dc o f
//   db       : optional G*H accumulator, += row sums of dgw
inline void pointwise_backward(CellKind kind, bool fused, const CellSavedConst& saved,
                               ConstSpan h_prev, ConstSpan c_prev, ConstSpan d_above,
                               ConstSpan dh_carry, ConstSpan dc_carry, Span dgw, Span dgr,
                               Span dh_local, Span dc_prev, float* db, CellWorkspace& ws) {
  const int hidden = d_above.rows;
  const int batch = d_above.cols;
  const int gates = gate_count(kind);
  detail::check_dims(ConstSpan(dgw), gates * hidden, batch, "dgw");
  detail::check_dims(dh_carry, hidden, batch, "dh_carry");
  detail::check_dims(ConstSpan(dh_local), hidden, batch, "dh_local");
  if (saved.gates.empty()) {
    throw std::invalid_argument("cells: backward requires saved state from a training forward");
  }
  ws.ensure(kind, hidden, batch);

  switch (kind) {
    case CellKind::RnnTanh:
    case CellKind::RnnRelu: {
      // saved.gates is the post-activation h of this step.
      if (fused) {
        for (int c = 0; c < batch; ++c) {
          const float* pda = d_above.col(c);
          const float* pcar = dh_carry.col(c);
          const float* phv = saved.gates.col(c);
          float* pdg = dgw.col(c);
          float* pl = dh_local.col(c);
          for (int r = 0; r < hidden; ++r) {
            const float dh = pda[r] + pcar[r];
            if (kind == CellKind::RnnTanh) {
              const float s = phv[r] * phv[r];
              const float s1 = 1.0f - s;
              pdg[r] = dh * s1;
            } else {
              pdg[r] = phv[r] > 0.0f ? dh : 0.0f;
            }
            pl[r] = 0.0f;
          }
        }
      } else {
        detail::ew_add(span(ws.t1), d_above, dh_carry);
        if (kind == CellKind::RnnTanh) {
          detail::ew_mul(span(ws.t4), saved.gates, saved.gates);
          detail::ew_one_minus(span(ws.t4), ConstSpan(span(ws.t4)));
          detail::ew_mul(dgw, ConstSpan(span(ws.t1)), ConstSpan(span(ws.t4)));
        } else {
          detail::ew_relu_mask(dgw, ConstSpan(span(ws.t1)), saved.gates);
        }
        detail::ew_zero(dh_local);
      }
      if (db) detail::accumulate_row_sums(ConstSpan(dgw), db);
      return;
    }

    case CellKind::Lstm: {
      detail::check_dims(dc_carry, hidden, batch, "dc_carry");
      detail::check_dims(ConstSpan(dc_prev), hidden, batch, "dc_prev");
      ConstSpan gi = row_range(saved.gates, 0, hidden);
      ConstSpan gf = row_range(saved.gates, hidden, hidden);
      ConstSpan go = row_range(saved.gates, 2 * hidden, hidden);
      ConstSpan gc = row_range(saved.gates, 3 * hidden, hidden);
      if (fused) {
        for (int c = 0; c < batch; ++c) {
          const float* pda = d_above.col(c);
          const float* pcar = dh_carry.col(c);
          const float* pdci = dc_carry.col(c);
          const float* pi = gi.col(c);
          const float* pf = gf.col(c);
          const float* po = go.col(c);
          const float* pcb = gc.col(c);
          const float* ptc = saved.tanh_c.col(c);
          const float* pcp = c_prev.col(c);
          float* pdg = dgw.col(c);
          float* pdcp = dc_prev.col(c);
          float* pl = dh_local.col(c);
          for (int r = 0; r < hidden; ++r) {
            const float dh = pda[r] + pcar[r];
            const float q1 = dh * po[r];
            const float s = ptc[r] * ptc[r];
            const float s1 = 1.0f - s;
            const float q2 = q1 * s1;
            const float dc = pdci[r] + q2;
            const float a1 = dc * pcb[r];
            const float a2 = a1 * pi[r];
            const float a3 = 1.0f - pi[r];
            const float b1 = dc * pcp[r];
            const float b2 = b1 * pf[r];
            const float b3 = 1.0f - pf[r];
            const float c1 = dh * ptc[r];
            const float c2 = c1 * po[r];
            const float c3 = 1.0f - po[r];
            const float d1 = dc * pi[r];
            const float d2 = pcb[r] * pcb[r];
            const float d3 = 1.0f - d2;
            pdg[r] = a2 * a3;
            pdg[hidden + r] = b2 * b3;
            pdg[2 * hidden + r] = c2 * c3;
            pdg[3 * hidden + r] = d1 * d3;
            pdcp[r] = dc * pf[r];
            pl[r] = 0.0f;
          }
        }
      } else {
        Span dh = span(ws.t1);
        Span dc = span(ws.t2);
        detail::ew_add(dh, d_above, dh_carry);
        detail::ew_mul(span(ws.t3), ConstSpan(dh), go);
        detail::ew_mul(span(ws.t4), saved.tanh_c, saved.tanh_c);
        detail::ew_one_minus(span(ws.t4), ConstSpan(span(ws.t4)));
        detail::ew_mul(span(ws.t3), ConstSpan(span(ws.t3)), ConstSpan(span(ws.t4)));
        detail::ew_add(dc, dc_carry, ConstSpan(span(ws.t3)));
        Span dg_i = row_range(dgw, 0, hidden);
        Span dg_f = row_range(dgw, hidden, hidden);
        Span dg_o = row_range(dgw, 2 * hidden, hidden);
        Span dg_c = row_range(dgw, 3 * hidden, hidden);
        detail::ew_mul(dg_i, ConstSpan(dc), gc);
        detail::ew_mul(dg_i, ConstSpan(dg_i), gi);
        detail::ew_one_minus(span(ws.t4), gi);
        detail::ew_mul(dg_i, ConstSpan(dg_i), ConstSpan(span(ws.t4)));
        detail::ew_mul(dg_f, ConstSpan(dc), c_prev);
        detail::ew_mul(dg_f, ConstSpan(dg_f), gf);
        detail::ew_one_minus(span(ws.t4), gf);
        detail::ew_mul(dg_f, ConstSpan(dg_f), ConstSpan(span(ws.t4)));
        detail::ew_mul(dg_o, ConstSpan(dh), saved.tanh_c);
        detail::ew_mul(dg_o, ConstSpan(dg_o), go);
        detail::ew_one_minus(span(ws.t4), go);
        detail::ew_mul(dg_o, ConstSpan(dg_o), ConstSpan(span(ws.t4)));
        detail::ew_mul(span(ws.t4), gc, gc);
        detail::ew_one_minus(span(ws.t4), ConstSpan(span(ws.t4)));
        detail::ew_mul(dg_c, ConstSpan(dc), gi);
        detail::ew_mul(dg_c, ConstSpan(dg_c), ConstSpan(span(ws.t4)));
        detail::ew_mul(dc_prev, ConstSpan(dc), gf);
        detail::ew_zero(dh_local);
      }
      if (db) detail::accumulate_row_sums(ConstSpan(dgw), db);
      return;
    }

    case CellKind::Gru: {
      ConstSpan gr = row_range(saved.gates, 0, hidden);
      ConstSpan gu = row_range(saved.gates, hidden, hidden);
      ConstSpan gn = row_range(saved.gates, 2 * hidden, hidden);
      if (dgr.data == dgw.data) {
        throw std::invalid_argument("cells: GRU needs distinct dgw and dgr blocks");
      }
      detail::check_dims(ConstSpan(dgr), gates * hidden, batch, "dgr");
      if (fused) {
        for (int c = 0; c < batch; ++c) {
          const float* pda = d_above.col(c);
          const float* pcar = dh_carry.col(c);
          const float* pr = gr.col(c);
          const float* pu = gu.col(c);
          const float* pn = gn.col(c);
          const float* php = h_prev.col(c);
          const float* pzrh = saved.zr_h.col(c);
          float* pdgw = dgw.col(c);
          float* pdgr = dgr.col(c);
          float* pl = dh_local.col(c);
          for (int r = 0; r < hidden; ++r) {
            const float dh = pda[r] + pcar[r];
            const float om = 1.0f - pu[r];
            const float dn = dh * om;
            const float s = pn[r] * pn[r];
            const float s1 = 1.0f - s;
            const float dnp = dn * s1;
            const float t = php[r] - pn[r];
            const float q = dh * t;
            const float q2 = q * pu[r];
            const float dgu = q2 * om;
            const float r0 = dnp * pzrh[r];
            const float r1 = r0 * pr[r];
            const float r2 = 1.0f - pr[r];
            const float dgr_gate = r1 * r2;
            pdgw[r] = dgr_gate;
            pdgw[hidden + r] = dgu;
            pdgw[2 * hidden + r] = dnp;
            pdgr[r] = dgr_gate;
            pdgr[hidden + r] = dgu;
            pdgr[2 * hidden + r] = dnp * pr[r];
            pl[r] = dh * pu[r];
          }
        }
      } else {
        Span dh = span(ws.t1);
        Span dnp = span(ws.t2);
        Span om = span(ws.t3);
        detail::ew_add(dh, d_above, dh_carry);
        detail::ew_one_minus(om, gu);
        detail::ew_mul(dnp, ConstSpan(dh), ConstSpan(om));
        detail::ew_mul(span(ws.t4), gn, gn);
        detail::ew_one_minus(span(ws.t4), ConstSpan(span(ws.t4)));
        detail::ew_mul(dnp, ConstSpan(dnp), ConstSpan(span(ws.t4)));
        Span dgw_r = row_range(dgw, 0, hidden);
        Span dgw_u = row_range(dgw, hidden, hidden);
        Span dgw_n = row_range(dgw, 2 * hidden, hidden);
        Span dgr_r = row_range(dgr, 0, hidden);
        Span dgr_u = row_range(dgr, hidden, hidden);
        Span dgr_n = row_range(dgr, 2 * hidden, hidden);
        detail::ew_copy(dgw_n, ConstSpan(dnp));
        detail::ew_mul(dgr_n, ConstSpan(dnp), gr);
        detail::ew_sub(span(ws.t4), h_prev, gn);
        detail::ew_mul(span(ws.t4), ConstSpan(dh), ConstSpan(span(ws.t4)));
        detail::ew_mul(dgw_u, ConstSpan(span(ws.t4)), gu);
        detail::ew_mul(dgw_u, ConstSpan(dgw_u), ConstSpan(om));
        detail::ew_copy(dgr_u, ConstSpan(dgw_u));
        detail::ew_mul(span(ws.t4), ConstSpan(dnp), saved.zr_h);
        detail::ew_mul(span(ws.t4), ConstSpan(span(ws.t4)), gr);
        detail::ew_one_minus(dgw_r, gr);
        detail::ew_mul(dgw_r, ConstSpan(span(ws.t4)), ConstSpan(dgw_r));
        detail::ew_copy(dgr_r, ConstSpan(dgw_r));
        detail::ew_mul(dh_local, ConstSpan(dh), gu);
      }
      if (db) detail::accumulate_row_sums(ConstSpan(dgw), db);
      return;
    }
  }
}

}  // namespace rnnwave
