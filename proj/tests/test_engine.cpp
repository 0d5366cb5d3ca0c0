// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "rnnwave/engine.hpp"
#include "rnnwave/oracle.hpp"
#include "rnnwave/verify.hpp"

using namespace rnnwave;

TEST_CASE("zero parameters give exactly zero outputs at every level", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 2;
  cfg.hidden = 6;
  cfg.input = 5;
  cfg.batch = 3;
  cfg.steps = 4;
  cfg.batch_steps = 2;
  cfg.workers = 2;
  cfg.seed = 3;
  const Matrix x = verify::make_input(cfg);
  for (int level = 0; level <= 6; ++level) {
    cfg.opt_level = level;
    auto params = init_params(cfg);
    for (auto& p : params) {
      p.w.fill(0.0f);
      p.r.fill(0.0f);
    }
    Engine engine(cfg);
    const ForwardResult res = engine.forward(params, x, false);
    INFO("level=" << level);
    for (std::size_t i = 0; i < res.y.size(); ++i) CHECK(res.y.data()[i] == 0.0f);
  }
}

TEST_CASE("cross-level forward outputs are bitwise identical", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 4;
  cfg.hidden = 64;
  cfg.input = 64;
  cfg.batch = 8;
  cfg.steps = 32;
  cfg.batch_steps = 2;
  cfg.seed = 42;
  const verify::PipelineOutputs ref = verify::run_pipeline(cfg, 0, 1);
  const verify::PipelineOutputs o6 = verify::run_pipeline(cfg, 6, 4);
  std::string what;
  INFO(what);
  CHECK(verify::outputs_bitwise_equal(ref, o6, &what));
}

TEST_CASE("scalar LSTM agrees with a hand recurrence", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 1;
  cfg.hidden = 1;
  cfg.input = 1;
  cfg.batch = 1;
  cfg.steps = 1;
  cfg.seed = 11;
  cfg.opt_level = 0;
  auto params = init_params(cfg);
  Engine engine(cfg);
  Matrix x(1, 1);
  x(0, 0) = 0.63f;
  const ForwardResult res = engine.forward(params, x, false);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double w_i = params[0].w(0, 0), w_f = params[0].w(1, 0), w_o = params[0].w(2, 0),
               w_c = params[0].w(3, 0);
  const double xv = 0.63f;
  const double iv = sig(w_i * xv);
  const double fv = sig(w_f * xv);
  const double ov = sig(w_o * xv);
  const double cb = std::tanh(w_c * xv);
  (void)fv;
  const double cv = iv * cb;  // c_prev = 0
  const double hv = ov * std::tanh(cv);
  CHECK(std::abs(static_cast<double>(res.y(0, 0)) - hv) < 1e-6);
}

TEST_CASE("zero upstream gradient gives exactly zero gradients", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Gru;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.input = 8;
  cfg.batch = 2;
  cfg.steps = 4;
  cfg.opt_level = 3;
  cfg.workers = 2;
  cfg.seed = 5;
  auto params = init_params(cfg);
  Engine engine(cfg);
  const Matrix x = verify::make_input(cfg);
  ForwardResult fwd = engine.forward(params, x, true);
  const Matrix dy0(cfg.hidden, cfg.batch * cfg.steps);
  BackwardState bwd = engine.backward_data(params, fwd.tape, dy0);
  const Gradients grads = engine.weight_update(fwd.tape, bwd);
  for (std::size_t i = 0; i < bwd.dx0.size(); ++i) CHECK(bwd.dx0.data()[i] == 0.0f);
  for (const Matrix& dw : grads.dw) {
    for (std::size_t i = 0; i < dw.size(); ++i) CHECK(dw.data()[i] == 0.0f);
  }
  for (const auto& db : grads.db) {
    for (float v : db) CHECK(v == 0.0f);
  }
}

TEST_CASE("engine gradients track the oracle on a small net", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.input = 6;
  cfg.batch = 2;
  cfg.steps = 4;
  cfg.opt_level = 4;
  cfg.workers = 2;
  cfg.seed = 17;
  auto params = init_params(cfg);
  Engine engine(cfg);
  const Matrix x = verify::make_input(cfg);
  const Matrix dy = verify::make_dy(cfg);
  ForwardResult fwd = engine.forward(params, x, true);
  BackwardState bwd = engine.backward_data(params, fwd.tape, dy);
  const Gradients grads = engine.weight_update(fwd.tape, bwd);

  const oracle::Net net = oracle::widen(cfg, params);
  const oracle::GradientResult ref = oracle::gradient(net, x, dy, cfg.batch, cfg.steps);

  CHECK(verify::max_abs_diff_float_double(bwd.dx0, ref.dx0) < 1e-3);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::size_t li = static_cast<std::size_t>(l);
    CHECK(verify::max_abs_diff_float_double(grads.dw[li], ref.dw[li]) < 1e-3);
    CHECK(verify::max_abs_diff_float_double(grads.dr[li], ref.dr[li]) < 1e-3);
    CHECK(verify::max_abs_diff_float_double(bwd.dh0[li], ref.dh0[li]) < 1e-3);
    CHECK(verify::max_abs_diff_float_double(bwd.dc0[li], ref.dc0[li]) < 1e-3);
  }
}

TEST_CASE("backward is bitwise identical between O1 and O6", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 4;
  cfg.hidden = 64;
  cfg.input = 64;
  cfg.batch = 8;
  cfg.steps = 32;
  cfg.batch_steps = 2;
  cfg.seed = 42;
  const verify::PipelineOutputs o1 = verify::run_pipeline(cfg, 1, 1);
  const verify::PipelineOutputs o6 = verify::run_pipeline(cfg, 6, 8);
  std::string what;
  INFO(what);
  CHECK(verify::outputs_bitwise_equal(o1, o6, &what));
}

TEST_CASE("supplied initial state matches the oracle", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 2;
  cfg.hidden = 4;
  cfg.input = 4;
  cfg.batch = 2;
  cfg.steps = 3;
  cfg.opt_level = 2;
  cfg.workers = 2;
  cfg.seed = 23;
  auto params = init_params(cfg);
  Engine engine(cfg);
  const Matrix x = verify::make_input(cfg);
  std::vector<Matrix> h0, c0;
  std::vector<std::vector<double>> oh0, oc0;
  for (int l = 0; l < cfg.layers; ++l) {
    h0.push_back(verify::random_matrix(cfg.hidden, cfg.batch, cfg.seed, 50 + l));
    c0.push_back(verify::random_matrix(cfg.hidden, cfg.batch, cfg.seed, 60 + l));
    oh0.emplace_back(h0.back().data(), h0.back().data() + h0.back().size());
    oc0.emplace_back(c0.back().data(), c0.back().data() + c0.back().size());
  }
  const ForwardResult res = engine.forward(params, x, false, &h0, &c0);
  const oracle::Net net = oracle::widen(cfg, params);
  const oracle::Activations acts = oracle::forward(net, x, cfg.batch, cfg.steps, &oh0, &oc0);
  CHECK(verify::max_abs_diff_float_double(res.y, acts.y) < 1e-4);
}

TEST_CASE("pretranspose populates caches only from O4 up", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Gru;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.input = 8;
  cfg.batch = 2;
  cfg.steps = 2;
  cfg.seed = 9;
  const Matrix x = verify::make_input(cfg);

  cfg.opt_level = 3;
  {
    auto params = init_params(cfg);
    Engine engine(cfg);
    engine.forward(params, x, false);
    CHECK_FALSE(params[0].transposed);
  }
  cfg.opt_level = 4;
  {
    auto params = init_params(cfg);
    Engine engine(cfg);
    engine.forward(params, x, false);
    CHECK(params[0].transposed);
    CHECK(bitwise_equal(transpose(params[0].wt), params[0].w));
  }
}

TEST_CASE("engine rejects malformed calls", "[engine]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 2;
  cfg.hidden = 4;
  cfg.input = 4;
  cfg.batch = 2;
  cfg.steps = 2;
  cfg.seed = 1;
  cfg.opt_level = 1;
  auto params = init_params(cfg);
  Engine engine(cfg);

  Matrix bad_x(3, 4);
  CHECK_THROWS_WITH(engine.forward(params, bad_x, false),
                    Catch::Matchers::ContainsSubstring("expected"));

  const Matrix x = verify::make_input(cfg);
  ForwardResult inference = engine.forward(params, x, false);
  const Matrix dy = verify::make_dy(cfg);
  CHECK_THROWS_WITH(engine.backward_data(params, inference.tape, dy),
                    Catch::Matchers::ContainsSubstring("training"));

  ForwardResult trained = engine.forward(params, x, true);
  LadderConfig other = cfg;
  other.hidden = 8;
  auto params2 = init_params(other);
  Engine engine2(other);
  CHECK_THROWS_WITH(engine2.backward_data(params2, trained.tape, dy),
                    Catch::Matchers::ContainsSubstring("stale tape"));

  CHECK_THROWS_AS([&] {
    LadderConfig bad = cfg;
    bad.opt_level = 7;
    return Engine(bad);
  }(), std::invalid_argument);
}

TEST_CASE("deterministic across repeated runs and worker counts", "[engine]") {
  const auto res = verify::check_determinism(314159);
  INFO(res.detail);
  CHECK(res.pass);
}

TEST_CASE("weight update equals the per-step loop bitwise", "[engine]") {
  const auto res = verify::check_weight_update_equivalence(42);
  INFO(res.detail);
  CHECK(res.pass);
}

TEST_CASE("pretranspose cost is a small fraction of a forward pass", "[engine][perf]") {
  LadderConfig cfg;
  cfg.kind = CellKind::Lstm;
  cfg.layers = 1;
  cfg.hidden = 512;
  cfg.input = 512;
  cfg.batch = 64;
  cfg.steps = 100;
  cfg.opt_level = 4;
  cfg.workers = 2;
  cfg.seed = 42;
  auto params = init_params(cfg);
  Engine engine(cfg);
  const Matrix x = verify::make_input(cfg);
  engine.forward(params, x, false);  // warm caches

  const auto t0 = std::chrono::steady_clock::now();
  pretranspose(params);
  const auto t1 = std::chrono::steady_clock::now();
  engine.forward(params, x, false);
  const auto t2 = std::chrono::steady_clock::now();

  const double transpose_us = std::chrono::duration<double, std::micro>(t1 - t0).count();
  const double forward_us = std::chrono::duration<double, std::micro>(t2 - t1).count();
  INFO("pretranspose " << transpose_us << "us vs forward " << forward_us << "us");
  CHECK(transpose_us < 0.05 * forward_us);
}
