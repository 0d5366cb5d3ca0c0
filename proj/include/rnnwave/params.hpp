// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "rnnwave/config.hpp"
#include "rnnwave/matrix.hpp"
#include "rnnwave/rng.hpp"

namespace rnnwave {

/// Per-layer weights. W maps the layer input, R the recurrent state, both
/// gate-stacked ((G*H) x width). `wt`/`rt` hold transposed copies, populated
/// once per pass from optimization level 4 up.
struct LayerParams {
  Matrix w;   // (G*H) x input_width
  Matrix r;   // (G*H) x H
  std::vector<float> bias;  // G*H
  Matrix wt;  // input_width x (G*H) when populated
  Matrix rt;  // H x (G*H) when populated
  bool transposed = false;
};

/// Deterministic initialization: every weight is uniform on [-k, k] with
/// k = 1/sqrt(H). Tensor (layer, role) draws from SplitMix64 stream
/// 2*layer + role (role 0 = W, role 1 = R) of the config seed, filling in
/// column-major order; biases are zero and consume no draws.
inline std::vector<LayerParams> init_params(const LadderConfig& cfg) {
  cfg.validate();
  const int gh = gate_count(cfg.kind) * cfg.hidden;
  const double range = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  std::vector<LayerParams> params(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams& p = params[l];
    p.w = Matrix(gh, cfg.input_width(l));
    p.r = Matrix(gh, cfg.hidden);
    p.bias.assign(static_cast<std::size_t>(gh), 0.0f);

    SplitMix64 wstream = split_stream(cfg.seed, 2ull * static_cast<std::uint64_t>(l));
    float* wd = p.w.data();
    for (std::size_t i = 0; i < p.w.size(); ++i) wd[i] = wstream.next_symmetric(range);

    SplitMix64 rstream = split_stream(cfg.seed, 2ull * static_cast<std::uint64_t>(l) + 1ull);
    float* rd = p.r.data();
    for (std::size_t i = 0; i < p.r.size(); ++i) rd[i] = rstream.next_symmetric(range);
  }
  return params;
}

/// Refreshes the transposed weight copies. Called once per forward or
/// backward pass at O4+, so the cost amortizes over all T steps of the pass.
inline void pretranspose(std::vector<LayerParams>& params) {
  for (LayerParams& p : params) {
    p.wt = transpose(p.w);
    p.rt = transpose(p.r);
    p.transposed = true;
  }
}

inline bool params_bitwise_equal(const std::vector<LayerParams>& a,
                                 const std::vector<LayerParams>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (!bitwise_equal(a[l].w, b[l].w) || !bitwise_equal(a[l].r, b[l].r)) return false;
    if (a[l].bias.size() != b[l].bias.size()) return false;
    if (std::memcmp(a[l].bias.data(), b[l].bias.data(),
                    a[l].bias.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace rnnwave
