// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rnnwave {

enum class CellKind : std::uint32_t {
  RnnTanh = 0,
  RnnRelu = 1,
  Gru = 2,
  Lstm = 3,
};

inline int gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::RnnTanh:
    case CellKind::RnnRelu:
      return 1;
    case CellKind::Gru:
      return 3;
    case CellKind::Lstm:
      return 4;
  }
  throw std::invalid_argument("gate_count: unknown cell kind");
}

inline const char* cell_name(CellKind kind) {
  switch (kind) {
    case CellKind::RnnTanh:
      return "rnn-tanh";
    case CellKind::RnnRelu:
      return "rnn-relu";
    case CellKind::Gru:
      return "gru";
    case CellKind::Lstm:
      return "lstm";
  }
  return "?";
}

/// Network and execution hyperparameters for one ladder run. Layer 0 takes
/// input width `input`; every deeper layer takes the previous layer's hidden
/// output, so its input width is `hidden`.
struct LadderConfig {
  int layers = 1;
  int hidden = 1;
  int input = 1;
  int batch = 1;
  int steps = 1;
  CellKind kind = CellKind::Lstm;
  int opt_level = 0;
  int batch_steps = 1;  // step batching width s, honored at O5 and O6
  int workers = 1;
  std::uint64_t seed = 0;

  int input_width(int layer) const { return layer == 0 ? input : hidden; }

  /// Step batching is an O5+ feature; below that every block is one step.
  int effective_batch_steps() const {
    if (opt_level < 5) return 1;
    return std::min(batch_steps, steps);
  }

  int num_blocks() const {
    const int s = effective_batch_steps();
    return (steps + s - 1) / s;
  }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) {
        throw std::invalid_argument(std::string("LadderConfig: ") + name +
                                    " must be positive, got " + std::to_string(v));
      }
    };
    positive(layers, "layers");
    positive(hidden, "hidden");
    positive(input, "input");
    positive(batch, "batch");
    positive(steps, "steps");
    positive(batch_steps, "batch_steps");
    positive(workers, "workers");
    if (opt_level < 0 || opt_level > 6) {
      throw std::invalid_argument("LadderConfig: opt_level must be in 0..6, got " +
                                  std::to_string(opt_level));
    }
    if (batch_steps > steps) {
      throw std::invalid_argument("LadderConfig: batch_steps " + std::to_string(batch_steps) +
                                  " exceeds steps " + std::to_string(steps));
    }
  }
};

}  // namespace rnnwave
