// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "rnnwave/oracle.hpp"
#include "rnnwave/verify.hpp"

using namespace rnnwave;

TEST_CASE("zero parameters give zero outputs", "[oracle]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 2;
  cfg.hidden = 4;
  cfg.input = 3;
  cfg.batch = 2;
  cfg.steps = 3;
  cfg.seed = 1;
  auto params = init_params(cfg);
  for (auto& p : params) {
    p.w.fill(0.0f);
    p.r.fill(0.0f);
  }
  const oracle::Net net = oracle::widen(cfg, params);
  const Matrix x = verify::make_input(cfg);
  const oracle::Activations acts = oracle::forward(net, x, cfg.batch, cfg.steps);
  for (double v : acts.y) CHECK(v == 0.0);

  const Matrix dy0(cfg.hidden, cfg.batch * cfg.steps);
  const oracle::GradientResult g = oracle::gradient(net, x, dy0, cfg.batch, cfg.steps);
  for (const auto& t : g.dw) {
    for (double v : t) CHECK(v == 0.0);
  }
  for (double v : g.dx0) CHECK(v == 0.0);
}

TEST_CASE("scalar LSTM with unit initial cell state", "[oracle]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 1;
  cfg.hidden = 1;
  cfg.input = 1;
  cfg.batch = 1;
  cfg.steps = 1;
  cfg.seed = 0;
  auto params = init_params(cfg);
  for (auto& p : params) {
    p.w.fill(0.0f);
    p.r.fill(0.0f);
  }
  const oracle::Net net = oracle::widen(cfg, params);
  Matrix x(1, 1);
  x(0, 0) = 0.37f;  // irrelevant with zero weights
  const std::vector<std::vector<double>> c0 = {{1.0}};
  const std::vector<std::vector<double>> h0 = {{0.0}};
  const oracle::Activations acts = oracle::forward(net, x, 1, 1, &h0, &c0);
  const double expected = 0.5 * std::tanh(0.5);
  CHECK(std::abs(acts.y[0] - expected) < 1e-15);
}

TEST_CASE("zero upstream gradient zeroes every oracle gradient", "[oracle]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Gru;
  cfg.layers = 2;
  cfg.hidden = 6;
  cfg.input = 5;
  cfg.batch = 2;
  cfg.steps = 3;
  cfg.seed = 8;
  const auto params = init_params(cfg);
  const oracle::Net net = oracle::widen(cfg, params);
  const Matrix x = verify::make_input(cfg);
  const Matrix dy0(cfg.hidden, cfg.batch * cfg.steps);
  const oracle::GradientResult g = oracle::gradient(net, x, dy0, cfg.batch, cfg.steps);
  for (const auto& t : g.dw) {
    for (double v : t) CHECK(v == 0.0);
  }
  for (const auto& t : g.dr) {
    for (double v : t) CHECK(v == 0.0);
  }
  for (const auto& t : g.db) {
    for (double v : t) CHECK(v == 0.0);
  }
  for (double v : g.dx0) CHECK(v == 0.0);
}

TEST_CASE("analytic gradients match central finite differences", "[oracle]") {
  const auto res = verify::check_gradients_vs_fd(42);
  INFO(res.detail);
  CHECK(res.pass);
}

TEST_CASE("engine agrees with the oracle within tolerance", "[oracle]") {
  const auto res = verify::check_oracle_agreement(8, 20260809);
  INFO(res.detail);
  CHECK(res.pass);
}

TEST_CASE("oracle dx0 matches finite differences of the input", "[oracle]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.input = 8;
  cfg.batch = 2;
  cfg.steps = 4;
  cfg.seed = 77;
  const auto params = init_params(cfg);
  oracle::Net net = oracle::widen(cfg, params);
  Matrix x = verify::make_input(cfg);
  const Matrix dy = verify::make_dy(cfg);
  const oracle::GradientResult g = oracle::gradient(net, x, dy, cfg.batch, cfg.steps);

  auto loss = [&] {
    const oracle::Activations acts = oracle::forward(net, x, cfg.batch, cfg.steps);
    double e = 0.0;
    for (std::size_t i = 0; i < acts.y.size(); ++i) {
      const int row = static_cast<int>(i % static_cast<std::size_t>(cfg.hidden));
      const int col = static_cast<int>(i / static_cast<std::size_t>(cfg.hidden));
      e += acts.y[i] * static_cast<double>(dy(row, col));
    }
    return e;
  };

  const double eps = 1e-6;
  double worst = 0.0;
  // Spot-check a spread of input entries. The perturbed values round
  // through binary32, so divide by the actually realized step.
  for (std::size_t idx = 0; idx < x.size(); idx += 7) {
    const int r = static_cast<int>(idx % static_cast<std::size_t>(cfg.input));
    const int c = static_cast<int>(idx / static_cast<std::size_t>(cfg.input));
    const float save = x(r, c);
    const float xp = static_cast<float>(static_cast<double>(save) + eps);
    const float xm = static_cast<float>(static_cast<double>(save) - eps);
    x(r, c) = xp;
    const double ep = loss();
    x(r, c) = xm;
    const double em = loss();
    x(r, c) = save;
    const double fd = (ep - em) / (static_cast<double>(xp) - static_cast<double>(xm));
    const double analytic = g.dx0[static_cast<std::size_t>(c) * cfg.input + r];
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
    worst = std::max(worst, std::abs(analytic - fd) / denom);
  }
  CHECK(worst < 1e-4);
}
