// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rnnwave/config.hpp"
#include "rnnwave/matrix.hpp"
#include "rnnwave/params.hpp"

namespace rnnwave::oracle {

// Scalar double-precision reference for the stacked recurrence: forward,
// full BPTT, and weight gradients, written as plain nested loops in a fixed
// order. It deliberately shares no matrix-multiply code with the engine;
// the only shared ingredient is the parameter initialization, widened from
// the engine's binary32 values exactly. The engine is checked against this
// oracle with tolerances, and the oracle itself is checked against central
// finite differences in the test suite.

struct Net {
  CellKind kind = CellKind::Lstm;
  int layers = 0;
  int hidden = 0;
  int input = 0;
  // Per layer, column-major like the engine: w is (G*H) x I_l, r is (G*H) x H.
  std::vector<std::vector<double>> w, r, b;

  int input_width(int layer) const { return layer == 0 ? input : hidden; }
  int gh() const { return gate_count(kind) * hidden; }
};

/// Exact widening of engine parameters.
inline Net widen(const LadderConfig& cfg, const std::vector<LayerParams>& params) {
  Net net;
  net.kind = cfg.kind;
  net.layers = cfg.layers;
  net.hidden = cfg.hidden;
  net.input = cfg.input;
  net.w.resize(params.size());
  net.r.resize(params.size());
  net.b.resize(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    net.w[l].assign(params[l].w.data(), params[l].w.data() + params[l].w.size());
    net.r[l].assign(params[l].r.data(), params[l].r.data() + params[l].r.size());
    net.b[l].assign(params[l].bias.begin(), params[l].bias.end());
  }
  return net;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Everything the forward pass computes, retained for the backward pass.
/// Indexing helpers treat each sequence as column-major (value, batch, step).
struct Activations {
  int batch = 0;
  int steps = 0;
  // Per layer: h[(t+1) steps...] with t=0 the initial state, pre-activations
  // a (G*H per column), cell state c and tanh(c) for LSTM, the recurrent
  // h~ product for GRU.
  std::vector<std::vector<double>> h;      // H x B*(T+1)
  std::vector<std::vector<double>> c;      // LSTM
  std::vector<std::vector<double>> gates;  // post-activations, G*H x B*T
  std::vector<std::vector<double>> tanh_c; // LSTM
  std::vector<std::vector<double>> zr_h;   // GRU: R_h * h_prev
  std::vector<double> y;                   // H x B*T
};

inline Activations forward(const Net& net, const Matrix& x, int batch, int steps,
                           const std::vector<std::vector<double>>* h0 = nullptr,
                           const std::vector<std::vector<double>>* c0 = nullptr) {
  const int hid = net.hidden;
  const int gh = net.gh();
  const int gates = gate_count(net.kind);
  Activations acts;
  acts.batch = batch;
  acts.steps = steps;
  acts.h.assign(static_cast<std::size_t>(net.layers),
                std::vector<double>(static_cast<std::size_t>(hid) * batch * (steps + 1), 0.0));
  if (h0) {
    for (std::size_t l = 0; l < acts.h.size(); ++l) {
      std::copy((*h0)[l].begin(), (*h0)[l].end(), acts.h[l].begin());
    }
  }
  if (net.kind == CellKind::Lstm) {
    acts.c = acts.h;
    if (h0 && !c0) {
      for (auto& cl : acts.c) std::fill(cl.begin(), cl.end(), 0.0);
    }
    if (c0) {
      for (auto& cl : acts.c) std::fill(cl.begin(), cl.end(), 0.0);
      for (std::size_t l = 0; l < acts.c.size(); ++l) {
        std::copy((*c0)[l].begin(), (*c0)[l].end(), acts.c[l].begin());
      }
    }
    acts.tanh_c.assign(static_cast<std::size_t>(net.layers),
                       std::vector<double>(static_cast<std::size_t>(hid) * batch * steps, 0.0));
  }
  acts.gates.assign(static_cast<std::size_t>(net.layers),
                    std::vector<double>(static_cast<std::size_t>(gh) * batch * steps, 0.0));
  if (net.kind == CellKind::Gru) {
    acts.zr_h.assign(static_cast<std::size_t>(net.layers),
                     std::vector<double>(static_cast<std::size_t>(hid) * batch * steps, 0.0));
  }
  acts.y.assign(static_cast<std::size_t>(hid) * batch * steps, 0.0);

  std::vector<double> xin;   // layer input column, I_l
  std::vector<double> a(static_cast<std::size_t>(gh));  // pre-activations
  for (int l = 0; l < net.layers; ++l) {
    const int il = net.input_width(l);
    xin.resize(static_cast<std::size_t>(il));
    for (int t = 0; t < steps; ++t) {
      for (int col = 0; col < batch; ++col) {
        // Gather this column's input.
        for (int i = 0; i < il; ++i) {
          if (l == 0) {
            xin[static_cast<std::size_t>(i)] =
                static_cast<double>(x(i, t * batch + col));
          } else {
            xin[static_cast<std::size_t>(i)] =
                acts.h[static_cast<std::size_t>(l - 1)]
                      [(static_cast<std::size_t>(t + 1) * batch + col) * hid + i];
          }
        }
        const double* hprev =
            acts.h[static_cast<std::size_t>(l)].data() +
            (static_cast<std::size_t>(t) * batch + col) * hid;

        // a = W x + R h_prev (no bias yet), plain dot products.
        for (int row = 0; row < gh; ++row) {
          double acc = 0.0;
          for (int k = 0; k < il; ++k) {
            acc += net.w[static_cast<std::size_t>(l)]
                        [static_cast<std::size_t>(k) * gh + row] *
                   xin[static_cast<std::size_t>(k)];
          }
          double racc = 0.0;
          for (int k = 0; k < hid; ++k) {
            racc += net.r[static_cast<std::size_t>(l)]
                         [static_cast<std::size_t>(k) * gh + row] *
                    hprev[k];
          }
          a[static_cast<std::size_t>(row)] = acc + racc;
        }

        double* hout = acts.h[static_cast<std::size_t>(l)].data() +
                       (static_cast<std::size_t>(t + 1) * batch + col) * hid;
        double* gpost = acts.gates[static_cast<std::size_t>(l)].data() +
                        (static_cast<std::size_t>(t) * batch + col) * gh;
        const std::vector<double>& bias = net.b[static_cast<std::size_t>(l)];

        switch (net.kind) {
          case CellKind::RnnTanh:
          case CellKind::RnnRelu: {
            for (int i = 0; i < hid; ++i) {
              const double pre = a[static_cast<std::size_t>(i)] + bias[static_cast<std::size_t>(i)];
              const double hv =
                  net.kind == CellKind::RnnTanh ? std::tanh(pre) : (pre > 0.0 ? pre : 0.0);
              hout[i] = hv;
              gpost[i] = hv;
            }
            break;
          }
          case CellKind::Lstm: {
            const double* cprev = acts.c[static_cast<std::size_t>(l)].data() +
                                  (static_cast<std::size_t>(t) * batch + col) * hid;
            double* cout = acts.c[static_cast<std::size_t>(l)].data() +
                           (static_cast<std::size_t>(t + 1) * batch + col) * hid;
            double* tc = acts.tanh_c[static_cast<std::size_t>(l)].data() +
                         (static_cast<std::size_t>(t) * batch + col) * hid;
            for (int i = 0; i < hid; ++i) {
              const double iv = sigmoid(a[static_cast<std::size_t>(i)] + bias[static_cast<std::size_t>(i)]);
              const double fv = sigmoid(a[static_cast<std::size_t>(hid + i)] +
                                        bias[static_cast<std::size_t>(hid + i)]);
              const double ov = sigmoid(a[static_cast<std::size_t>(2 * hid + i)] +
                                        bias[static_cast<std::size_t>(2 * hid + i)]);
              const double cb = std::tanh(a[static_cast<std::size_t>(3 * hid + i)] +
                                          bias[static_cast<std::size_t>(3 * hid + i)]);
              const double cv = fv * cprev[i] + iv * cb;
              const double tcv = std::tanh(cv);
              gpost[i] = iv;
              gpost[hid + i] = fv;
              gpost[2 * hid + i] = ov;
              gpost[3 * hid + i] = cb;
              cout[i] = cv;
              tc[i] = tcv;
              hout[i] = ov * tcv;
            }
            break;
          }
          case CellKind::Gru: {
            double* zrh = acts.zr_h[static_cast<std::size_t>(l)].data() +
                          (static_cast<std::size_t>(t) * batch + col) * hid;
            for (int i = 0; i < hid; ++i) {
              // Recompute the R_h h_prev dot on its own so the candidate can
              // apply the reset gate after the matrix product.
              double racc = 0.0;
              for (int k = 0; k < hid; ++k) {
                racc += net.r[static_cast<std::size_t>(l)]
                             [static_cast<std::size_t>(k) * gh + 2 * hid + i] *
                        hprev[k];
              }
              zrh[i] = racc;
              double wacc = 0.0;
              for (int k = 0; k < il; ++k) {
                wacc += net.w[static_cast<std::size_t>(l)]
                             [static_cast<std::size_t>(k) * gh + 2 * hid + i] *
                        xin[static_cast<std::size_t>(k)];
              }
              const double rv = sigmoid(a[static_cast<std::size_t>(i)] + bias[static_cast<std::size_t>(i)]);
              const double uv = sigmoid(a[static_cast<std::size_t>(hid + i)] +
                                        bias[static_cast<std::size_t>(hid + i)]);
              const double nv =
                  std::tanh(wacc + bias[static_cast<std::size_t>(2 * hid + i)] + rv * racc);
              gpost[i] = rv;
              gpost[hid + i] = uv;
              gpost[2 * hid + i] = nv;
              hout[i] = uv * hprev[i] + (1.0 - uv) * nv;
            }
            break;
          }
        }
      }
    }
  }

  const std::vector<double>& top = acts.h[static_cast<std::size_t>(net.layers - 1)];
  for (int t = 0; t < steps; ++t) {
    for (int col = 0; col < batch; ++col) {
      for (int i = 0; i < hid; ++i) {
        acts.y[(static_cast<std::size_t>(t) * batch + col) * hid + i] =
            top[(static_cast<std::size_t>(t + 1) * batch + col) * hid + i];
      }
    }
  }
  return acts;
}

struct GradientResult {
  std::vector<std::vector<double>> dw, dr, db;
  std::vector<double> dx0;  // I x B*T
  std::vector<std::vector<double>> dh0, dc0;
};

/// Analytic BPTT in double precision. `dy` has the engine layout H x B*T.
inline GradientResult gradient(const Net& net, const Matrix& x, const Matrix& dy, int batch,
                               int steps) {
  const Activations acts = forward(net, x, batch, steps);
  const int hid = net.hidden;
  const int gh = net.gh();

  GradientResult out;
  out.dw.resize(static_cast<std::size_t>(net.layers));
  out.dr.resize(static_cast<std::size_t>(net.layers));
  out.db.resize(static_cast<std::size_t>(net.layers));
  out.dh0.resize(static_cast<std::size_t>(net.layers));
  if (net.kind == CellKind::Lstm) out.dc0.resize(static_cast<std::size_t>(net.layers));
  for (int l = 0; l < net.layers; ++l) {
    out.dw[static_cast<std::size_t>(l)]
        .assign(static_cast<std::size_t>(gh) * net.input_width(l), 0.0);
    out.dr[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(gh) * hid, 0.0);
    out.db[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(gh), 0.0);
    out.dh0[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(hid) * batch, 0.0);
    if (net.kind == CellKind::Lstm) {
      out.dc0[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(hid) * batch, 0.0);
    }
  }
  out.dx0.assign(static_cast<std::size_t>(net.input) * batch * steps, 0.0);

  // d_above[l]: gradient w.r.t. layer l's output at every step, produced by
  // the layer above (dy for the top layer).
  std::vector<std::vector<double>> d_above(
      static_cast<std::size_t>(net.layers),
      std::vector<double>(static_cast<std::size_t>(hid) * batch * steps, 0.0));
  {
    std::vector<double>& top = d_above[static_cast<std::size_t>(net.layers - 1)];
    for (int t = 0; t < steps; ++t) {
      for (int col = 0; col < batch; ++col) {
        for (int i = 0; i < hid; ++i) {
          top[(static_cast<std::size_t>(t) * batch + col) * hid + i] =
              static_cast<double>(dy(i, t * batch + col));
        }
      }
    }
  }

  std::vector<double> dgw(static_cast<std::size_t>(gh));
  std::vector<double> dgr(static_cast<std::size_t>(gh));
  std::vector<double> carry_h(static_cast<std::size_t>(hid) * batch);
  std::vector<double> carry_c(static_cast<std::size_t>(hid) * batch);

  for (int l = net.layers - 1; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    const int il = net.input_width(l);
    std::fill(carry_h.begin(), carry_h.end(), 0.0);
    std::fill(carry_c.begin(), carry_c.end(), 0.0);

    for (int t = steps - 1; t >= 0; --t) {
      for (int col = 0; col < batch; ++col) {
        const double* gpost =
            acts.gates[li].data() + (static_cast<std::size_t>(t) * batch + col) * gh;
        const double* hprev =
            acts.h[li].data() + (static_cast<std::size_t>(t) * batch + col) * hid;
        double* ch = carry_h.data() + static_cast<std::size_t>(col) * hid;
        double* cc = carry_c.data() + static_cast<std::size_t>(col) * hid;
        const double* da =
            d_above[li].data() + (static_cast<std::size_t>(t) * batch + col) * hid;

        switch (net.kind) {
          case CellKind::RnnTanh:
          case CellKind::RnnRelu: {
            for (int i = 0; i < hid; ++i) {
              const double dh = da[i] + ch[i];
              const double hv = gpost[i];
              dgw[static_cast<std::size_t>(i)] =
                  net.kind == CellKind::RnnTanh ? dh * (1.0 - hv * hv)
                                                : (hv > 0.0 ? dh : 0.0);
              dgr[static_cast<std::size_t>(i)] = dgw[static_cast<std::size_t>(i)];
              ch[i] = 0.0;
            }
            break;
          }
          case CellKind::Lstm: {
            const double* cprev =
                acts.c[li].data() + (static_cast<std::size_t>(t) * batch + col) * hid;
            const double* tc =
                acts.tanh_c[li].data() + (static_cast<std::size_t>(t) * batch + col) * hid;
            for (int i = 0; i < hid; ++i) {
              const double dh = da[i] + ch[i];
              const double iv = gpost[i];
              const double fv = gpost[hid + i];
              const double ov = gpost[2 * hid + i];
              const double cb = gpost[3 * hid + i];
              const double dc = cc[i] + dh * ov * (1.0 - tc[i] * tc[i]);
              dgw[static_cast<std::size_t>(i)] = dc * cb * iv * (1.0 - iv);
              dgw[static_cast<std::size_t>(hid + i)] = dc * cprev[i] * fv * (1.0 - fv);
              dgw[static_cast<std::size_t>(2 * hid + i)] = dh * tc[i] * ov * (1.0 - ov);
              dgw[static_cast<std::size_t>(3 * hid + i)] = dc * iv * (1.0 - cb * cb);
              dgr[static_cast<std::size_t>(i)] = dgw[static_cast<std::size_t>(i)];
              dgr[static_cast<std::size_t>(hid + i)] = dgw[static_cast<std::size_t>(hid + i)];
              dgr[static_cast<std::size_t>(2 * hid + i)] =
                  dgw[static_cast<std::size_t>(2 * hid + i)];
              dgr[static_cast<std::size_t>(3 * hid + i)] =
                  dgw[static_cast<std::size_t>(3 * hid + i)];
              cc[i] = dc * fv;
              ch[i] = 0.0;
            }
            break;
          }
          case CellKind::Gru: {
            const double* zrh =
                acts.zr_h[li].data() + (static_cast<std::size_t>(t) * batch + col) * hid;
            for (int i = 0; i < hid; ++i) {
              const double dh = da[i] + ch[i];
              const double rv = gpost[i];
              const double uv = gpost[hid + i];
              const double nv = gpost[2 * hid + i];
              const double dn = dh * (1.0 - uv);
              const double dnp = dn * (1.0 - nv * nv);
              const double du = dh * (hprev[i] - nv) * uv * (1.0 - uv);
              const double drv = dnp * zrh[i] * rv * (1.0 - rv);
              dgw[static_cast<std::size_t>(i)] = drv;
              dgw[static_cast<std::size_t>(hid + i)] = du;
              dgw[static_cast<std::size_t>(2 * hid + i)] = dnp;
              dgr[static_cast<std::size_t>(i)] = drv;
              dgr[static_cast<std::size_t>(hid + i)] = du;
              dgr[static_cast<std::size_t>(2 * hid + i)] = dnp * rv;
              ch[i] = dh * uv;
            }
            break;
          }
        }

        // Parameter gradients accumulate per step.
        std::vector<double>& dwl = out.dw[li];
        std::vector<double>& drl = out.dr[li];
        std::vector<double>& dbl = out.db[li];
        for (int row = 0; row < gh; ++row) {
          dbl[static_cast<std::size_t>(row)] += dgw[static_cast<std::size_t>(row)];
          for (int k = 0; k < il; ++k) {
            const double xv =
                l == 0 ? static_cast<double>(x(k, t * batch + col))
                       : acts.h[li - 1][(static_cast<std::size_t>(t + 1) * batch + col) * hid + k];
            dwl[static_cast<std::size_t>(k) * gh + row] +=
                dgw[static_cast<std::size_t>(row)] * xv;
          }
          for (int k = 0; k < hid; ++k) {
            drl[static_cast<std::size_t>(k) * gh + row] +=
                dgr[static_cast<std::size_t>(row)] * hprev[k];
          }
        }

        // Propagate into h_prev (R^T dgr) and the layer input (W^T dgw).
        for (int k = 0; k < hid; ++k) {
          double acc = 0.0;
          for (int row = 0; row < gh; ++row) {
            acc += net.r[li][static_cast<std::size_t>(k) * gh + row] *
                   dgr[static_cast<std::size_t>(row)];
          }
          ch[k] += acc;
        }
        for (int k = 0; k < il; ++k) {
          double acc = 0.0;
          for (int row = 0; row < gh; ++row) {
            acc += net.w[li][static_cast<std::size_t>(k) * gh + row] *
                   dgw[static_cast<std::size_t>(row)];
          }
          if (l == 0) {
            out.dx0[(static_cast<std::size_t>(t) * batch + col) * net.input + k] = acc;
          } else {
            d_above[li - 1][(static_cast<std::size_t>(t) * batch + col) * hid + k] += acc;
          }
        }
      }
    }

    out.dh0[li].assign(carry_h.begin(), carry_h.end());
    if (net.kind == CellKind::Lstm) out.dc0[li].assign(carry_c.begin(), carry_c.end());
  }
  return out;
}

}  // namespace rnnwave::oracle
