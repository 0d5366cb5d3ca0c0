// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "rnnwave/config.hpp"
#include "rnnwave/params.hpp"

namespace rnnwave::io {

// Binary parameter file:
//   bytes 0..15   magic "RNNWAVE1" padded with eight zero bytes
//   bytes 16..35  five little-endian uint32 fields:
//                 kind (0 rnn-tanh, 1 rnn-relu, 2 gru, 3 lstm),
//                 layers, hidden, input, batch hint
//   then per layer: W ((G*H) x I_l), R ((G*H) x H), bias (G*H), each as raw
//   little-endian binary32 in column-major order.
// A save followed by a load restores the parameters bit for bit.

inline constexpr char kMagic[16] = {'R', 'N', 'N', 'W', 'A', 'V', 'E', '1',
                                    0,   0,   0,   0,   0,   0,   0,   0};

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; this platform is not");

struct ParamFileHeader {
  CellKind kind = CellKind::Lstm;
  int layers = 0;
  int hidden = 0;
  int input = 0;
  int batch_hint = 0;
};

inline std::uint64_t param_file_size(const ParamFileHeader& h) {
  const std::uint64_t gh =
      static_cast<std::uint64_t>(gate_count(h.kind)) * static_cast<std::uint64_t>(h.hidden);
  std::uint64_t total = 16 + 20;
  for (int l = 0; l < h.layers; ++l) {
    const std::uint64_t il = (l == 0) ? h.input : h.hidden;
    total += 4 * (gh * il + gh * h.hidden + gh);
  }
  return total;
}

namespace detail {

inline void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::ifstream& in, const std::string& what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("param file: truncated while reading " + what);
  return v;
}

inline void read_floats(std::ifstream& in, float* dst, std::size_t n, const std::string& what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw std::runtime_error("param file: truncated while reading " + what);
}

}  // namespace detail

inline void save_params(const std::string& path, const ParamFileHeader& header,
                        const std::vector<LayerParams>& params) {
  if (static_cast<int>(params.size()) != header.layers) {
    throw std::invalid_argument("save_params: header says " + std::to_string(header.layers) +
                                " layers, got " + std::to_string(params.size()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  detail::write_u32(out, static_cast<std::uint32_t>(header.kind));
  detail::write_u32(out, static_cast<std::uint32_t>(header.layers));
  detail::write_u32(out, static_cast<std::uint32_t>(header.hidden));
  detail::write_u32(out, static_cast<std::uint32_t>(header.input));
  detail::write_u32(out, static_cast<std::uint32_t>(header.batch_hint));
  for (const LayerParams& p : params) {
    out.write(reinterpret_cast<const char*>(p.w.data()),
              static_cast<std::streamsize>(p.w.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(p.r.data()),
              static_cast<std::streamsize>(p.r.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(p.bias.data()),
              static_cast<std::streamsize>(p.bias.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

struct LoadedParams {
  ParamFileHeader header;
  std::vector<LayerParams> params;
};

inline LoadedParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  char magic[16];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_params: " + path + " is not a parameter file (bad magic)");
  }
  LoadedParams out;
  const std::uint32_t kind_raw = detail::read_u32(in, "kind");
  if (kind_raw > 3) {
    throw std::runtime_error("load_params: unknown cell kind " + std::to_string(kind_raw));
  }
  out.header.kind = static_cast<CellKind>(kind_raw);
  out.header.layers = static_cast<int>(detail::read_u32(in, "layers"));
  out.header.hidden = static_cast<int>(detail::read_u32(in, "hidden"));
  out.header.input = static_cast<int>(detail::read_u32(in, "input"));
  out.header.batch_hint = static_cast<int>(detail::read_u32(in, "batch hint"));
  if (out.header.layers <= 0 || out.header.hidden <= 0 || out.header.input <= 0) {
    throw std::runtime_error("load_params: non-positive dimensions in header");
  }
  const int gh = gate_count(out.header.kind) * out.header.hidden;
  out.params.resize(static_cast<std::size_t>(out.header.layers));
  for (int l = 0; l < out.header.layers; ++l) {
    LayerParams& p = out.params[static_cast<std::size_t>(l)];
    const int il = (l == 0) ? out.header.input : out.header.hidden;
    p.w = Matrix(gh, il);
    p.r = Matrix(gh, out.header.hidden);
    p.bias.assign(static_cast<std::size_t>(gh), 0.0f);
    detail::read_floats(in, p.w.data(), p.w.size(), "layer " + std::to_string(l) + " W");
    detail::read_floats(in, p.r.data(), p.r.size(), "layer " + std::to_string(l) + " R");
    detail::read_floats(in, p.bias.data(), p.bias.size(), "layer " + std::to_string(l) + " bias");
  }
  return out;
}

/// Checks a loaded header against an expected configuration.
inline void check_matches(const ParamFileHeader& h, const LadderConfig& cfg) {
  auto fail = [](const std::string& what, int got, int want) {
    throw std::runtime_error("param file: " + what + " is " + std::to_string(got) +
                             " but the configuration expects " + std::to_string(want));
  };
  if (h.kind != cfg.kind) {
    throw std::runtime_error(std::string("param file: cell kind is ") + cell_name(h.kind) +
                             " but the configuration expects " + cell_name(cfg.kind));
  }
  if (h.layers != cfg.layers) fail("layer count", h.layers, cfg.layers);
  if (h.hidden != cfg.hidden) fail("hidden size", h.hidden, cfg.hidden);
  if (h.input != cfg.input) fail("input size", h.input, cfg.input);
}

}  // namespace rnnwave::io
