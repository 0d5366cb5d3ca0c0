// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "rnnwave/param_io.hpp"
#include "rnnwave/params.hpp"

using namespace rnnwave;

namespace {

// Independent SplitMix64 replica, kept deliberately separate from the
// library implementation.
struct RefSplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

std::uint64_t ref_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

LadderConfig small_config(CellKind kind, std::uint64_t seed) {
  LadderConfig cfg;
  cfg.kind = kind;
  cfg.layers = 2;
  cfg.hidden = 4;
  cfg.input = 4;
  cfg.batch = 2;
  cfg.steps = 3;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("init_params is deterministic under the seed", "[params]") {
  const LadderConfig cfg = small_config(CellKind::Lstm, 42);
  const auto a = init_params(cfg);
  const auto b = init_params(cfg);
  CHECK(params_bitwise_equal(a, b));

  LadderConfig other = cfg;
  other.seed = 43;
  const auto c = init_params(other);
  CHECK_FALSE(params_bitwise_equal(a, c));
}

TEST_CASE("init_params draws regenerate from the documented stream scheme", "[params]") {
  const LadderConfig cfg = small_config(CellKind::Lstm, 42);
  const auto params = init_params(cfg);

  // Stream 2*layer + role, state mixed from seed + k * golden gamma; values
  // are (2u - 1) * 1/sqrt(H) rounded once to binary32.
  const double range = 1.0 / std::sqrt(4.0);
  RefSplitMix w0{ref_mix(42ull + 0ull * 0x9E3779B97F4A7C15ull)};
  const double u = static_cast<double>(w0.next() >> 11) * 0x1.0p-53;
  const float expected_first = static_cast<float>((2.0 * u - 1.0) * range);
  CHECK(params[0].w(0, 0) == expected_first);

  RefSplitMix r1{ref_mix(42ull + 3ull * 0x9E3779B97F4A7C15ull)};
  const double u2 = static_cast<double>(r1.next() >> 11) * 0x1.0p-53;
  const float expected_r1_first = static_cast<float>((2.0 * u2 - 1.0) * range);
  CHECK(params[1].r(0, 0) == expected_r1_first);

  for (const LayerParams& p : params) {
    for (float v : p.bias) CHECK(v == 0.0f);
    const double k = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    for (std::size_t i = 0; i < p.w.size(); ++i) {
      CHECK(std::abs(p.w.data()[i]) <= k);
    }
  }
}

TEST_CASE("pretranspose fills exact transposed copies", "[params]") {
  const LadderConfig cfg = small_config(CellKind::Gru, 5);
  auto params = init_params(cfg);
  CHECK_FALSE(params[0].transposed);
  pretranspose(params);
  for (const LayerParams& p : params) {
    CHECK(p.transposed);
    CHECK(bitwise_equal(transpose(p.wt), p.w));
    CHECK(bitwise_equal(transpose(p.rt), p.r));
  }
}

TEST_CASE("parameter file round trip is bitwise", "[params]") {
  const LadderConfig cfg = small_config(CellKind::Lstm, 42);
  const auto params = init_params(cfg);
  io::ParamFileHeader header;
  header.kind = cfg.kind;
  header.layers = cfg.layers;
  header.hidden = cfg.hidden;
  header.input = cfg.input;
  header.batch_hint = cfg.batch;

  const std::string path = (std::filesystem::temp_directory_path() / "rnnwave_params_test.bin")
                               .string();
  io::save_params(path, header, params);

  // File size: magic + fields + per layer 4*(G*H*I_l + G*H*H + G*H) bytes.
  const std::uintmax_t actual_size = std::filesystem::file_size(path);
  CHECK(actual_size == io::param_file_size(header));
  std::uint64_t expected = 16 + 20;
  const std::uint64_t gh = 4ull * cfg.hidden;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::uint64_t il = l == 0 ? cfg.input : cfg.hidden;
    expected += 4 * (gh * il + gh * cfg.hidden + gh);
  }
  CHECK(actual_size == expected);

  const io::LoadedParams loaded = io::load_params(path);
  CHECK(loaded.header.kind == cfg.kind);
  CHECK(loaded.header.layers == cfg.layers);
  CHECK(loaded.header.hidden == cfg.hidden);
  CHECK(loaded.header.input == cfg.input);
  CHECK(loaded.header.batch_hint == cfg.batch);
  CHECK(params_bitwise_equal(loaded.params, params));
  io::check_matches(loaded.header, cfg);

  std::filesystem::remove(path);
}

TEST_CASE("parameter file rejects corruption", "[params]") {
  const LadderConfig cfg = small_config(CellKind::Gru, 9);
  const auto params = init_params(cfg);
  io::ParamFileHeader header;
  header.kind = cfg.kind;
  header.layers = cfg.layers;
  header.hidden = cfg.hidden;
  header.input = cfg.input;
  header.batch_hint = cfg.batch;
  const auto tmp = std::filesystem::temp_directory_path();

  SECTION("corrupt magic") {
    const std::string path = (tmp / "rnnwave_bad_magic.bin").string();
    io::save_params(path, header, params);
    {
      std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(3);
      const char junk = 'x';
      f.write(&junk, 1);
    }
    CHECK_THROWS_WITH(io::load_params(path), Catch::Matchers::ContainsSubstring("magic"));
    std::filesystem::remove(path);
  }

  SECTION("truncated payload") {
    const std::string path = (tmp / "rnnwave_truncated.bin").string();
    io::save_params(path, header, params);
    std::filesystem::resize_file(path, io::param_file_size(header) - 17);
    CHECK_THROWS_WITH(io::load_params(path), Catch::Matchers::ContainsSubstring("truncated"));
    std::filesystem::remove(path);
  }

  SECTION("dimension mismatch against the expected configuration") {
    const std::string path = (tmp / "rnnwave_mismatch.bin").string();
    io::save_params(path, header, params);
    const io::LoadedParams loaded = io::load_params(path);
    LadderConfig wrong = cfg;
    wrong.hidden = cfg.hidden * 2;
    CHECK_THROWS_WITH(io::check_matches(loaded.header, wrong),
                      Catch::Matchers::ContainsSubstring("hidden"));
    std::filesystem::remove(path);
  }
}
