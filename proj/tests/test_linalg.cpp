// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "rnnwave/gemm.hpp"
#include "rnnwave/matrix.hpp"
#include "rnnwave/rng.hpp"

using namespace rnnwave;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.next_symmetric(1.0);
  return m;
}

// The contract in its plainest form: the output element is the accumulator,
// seeded with beta*C, products added in ascending k.
void naive_gemm(bool ta, bool tb, const Matrix& a, const Matrix& b, Matrix& c, float alpha,
                float beta) {
  const int k_count = ta ? a.rows() : a.cols();
  for (int j = 0; j < c.cols(); ++j) {
    for (int i = 0; i < c.rows(); ++i) {
      float acc = beta == 0.0f ? 0.0f : (beta == 1.0f ? c(i, j) : beta * c(i, j));
      for (int k = 0; k < k_count; ++k) {
        const float av = ta ? a(k, i) : a(i, k);
        const float bv = tb ? b(j, k) : b(k, j);
        if (alpha == 1.0f) {
          acc += av * bv;
        } else if (alpha != 0.0f) {
          acc += alpha * (av * bv);
        }
      }
      c(i, j) = acc;
    }
  }
}

}  // namespace

TEST_CASE("gemm identity and hand-checked cases", "[linalg]") {
  Matrix eye = Matrix::identity(2);
  Matrix b = Matrix::from_column_major(2, 1, {3.0f, 4.0f});
  Matrix c(2, 1);
  gemm(false, span(eye), span(b), span(c), 1.0f, 0.0f);
  CHECK(c(0, 0) == 3.0f);
  CHECK(c(1, 0) == 4.0f);

  // Column-major [[1,2],[3,4]]: columns (1,3) and (2,4).
  Matrix a = Matrix::from_column_major(2, 2, {1.0f, 3.0f, 2.0f, 4.0f});
  Matrix x = Matrix::from_column_major(2, 1, {5.0f, 6.0f});
  gemm(false, span(a), span(x), span(c), 1.0f, 0.0f);
  CHECK(c(0, 0) == 17.0f);
  CHECK(c(1, 0) == 39.0f);
}

TEST_CASE("gemm alpha=0 beta=1 leaves C unchanged", "[linalg]") {
  Matrix a = random_matrix(5, 4, 1);
  Matrix b = random_matrix(4, 3, 2);
  Matrix c = random_matrix(5, 3, 3);
  Matrix before = c;
  gemm(false, span(a), span(b), span(c), 0.0f, 1.0f);
  CHECK(bitwise_equal(c, before));
}

TEST_CASE("gemm matches the ascending-k triple loop bitwise", "[linalg]") {
  SplitMix64 rng(99);
  for (int iter = 0; iter < 60; ++iter) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 32);
    const int k = 1 + static_cast<int>(rng.next_u64() % 32);
    const int n = 1 + static_cast<int>(rng.next_u64() % 32);
    const bool ta = (rng.next_u64() & 1) != 0;
    const bool tb = (rng.next_u64() & 1) != 0;
    const float beta = (rng.next_u64() & 1) != 0 ? 1.0f : 0.0f;
    Matrix a = ta ? random_matrix(k, m, 1000 + iter) : random_matrix(m, k, 1000 + iter);
    Matrix b = tb ? random_matrix(n, k, 2000 + iter) : random_matrix(k, n, 2000 + iter);
    Matrix c = random_matrix(m, n, 3000 + iter);
    Matrix expected = c;
    naive_gemm(ta, tb, a, b, expected, 1.0f, beta);
    gemm(ta, tb, span(a), span(b), span(c), 1.0f, beta);
    INFO("m=" << m << " k=" << k << " n=" << n << " ta=" << ta << " tb=" << tb
              << " beta=" << beta);
    CHECK(bitwise_equal(c, expected));
  }
}

TEST_CASE("gemm is bitwise independent of tile sizes", "[linalg]") {
  Matrix a = random_matrix(150, 130, 7);
  Matrix b = random_matrix(130, 90, 8);
  Matrix ref(150, 90);
  gemm_tiled(false, false, span(a), span(b), span(ref), 1.0f, 0.0f, GemmTiles{64, 64, 64});
  for (GemmTiles tiles : {GemmTiles{16, 16, 16}, GemmTiles{128, 32, 48}, GemmTiles{17, 5, 3},
                          GemmTiles{256, 256, 256}}) {
    Matrix c(150, 90);
    gemm_tiled(false, false, span(a), span(b), span(c), 1.0f, 0.0f, tiles);
    CHECK(bitwise_equal(c, ref));
  }
}

TEST_CASE("gemm on big shapes still matches the triple loop", "[linalg]") {
  // Shapes straddle several panels in every dimension.
  Matrix a = random_matrix(100, 150, 11);
  Matrix b = random_matrix(150, 70, 12);
  Matrix c = random_matrix(100, 70, 13);
  Matrix expected = c;
  naive_gemm(false, false, a, b, expected, 1.0f, 1.0f);
  gemm(false, false, span(a), span(b), span(c), 1.0f, 1.0f);
  CHECK(bitwise_equal(c, expected));

  Matrix at = random_matrix(150, 100, 14);
  Matrix c2(100, 70);
  Matrix expected2(100, 70);
  naive_gemm(true, false, at, b, expected2, 1.0f, 0.0f);
  gemm(true, false, span(at), span(b), span(c2), 1.0f, 0.0f);
  CHECK(bitwise_equal(c2, expected2));

  Matrix bt = random_matrix(70, 150, 15);
  Matrix c3(100, 70);
  Matrix expected3(100, 70);
  naive_gemm(false, true, a, bt, expected3, 1.0f, 0.0f);
  gemm(false, true, span(a), span(bt), span(c3), 1.0f, 0.0f);
  CHECK(bitwise_equal(c3, expected3));
}

TEST_CASE("per-gate accumulation equals one grouped GEMM", "[linalg]") {
  // Row-sliced GEMMs with beta accumulation continue the same per-element
  // chain as a single stacked call.
  const int h = 6, in = 5, batch = 3, gates = 4;
  Matrix w = random_matrix(gates * h, in, 21);
  Matrix x = random_matrix(in, batch, 22);
  Matrix grouped(gates * h, batch);
  gemm(false, span(w), span(x), span(grouped), 1.0f, 0.0f);
  Matrix split(gates * h, batch);
  ConstSpan ws = span(w);
  Span ss = span(split);
  for (int g = 0; g < gates; ++g) {
    gemm(false, false, row_range(ws, g * h, h), span(x), row_range(ss, g * h, h), 1.0f, 0.0f);
  }
  CHECK(bitwise_equal(grouped, split));

  // And a transposed reduction accumulated gate by gate.
  Matrix dg = random_matrix(gates * h, batch, 23);
  Matrix dx_grouped(in, batch);
  gemm(true, false, span(w), span(dg), span(dx_grouped), 1.0f, 0.0f);
  Matrix dx_split(in, batch);
  ConstSpan dgs = span(dg);
  for (int g = 0; g < gates; ++g) {
    gemm(true, false, row_range(ws, g * h, h), row_range(dgs, g * h, h), span(dx_split), 1.0f,
         g == 0 ? 0.0f : 1.0f);
  }
  CHECK(bitwise_equal(dx_grouped, dx_split));
}

TEST_CASE("transposed-operand GEMM is bitwise equal to the plain orientation", "[linalg]") {
  Matrix w = random_matrix(24, 18, 31);
  Matrix x = random_matrix(18, 7, 32);
  Matrix direct(24, 7);
  gemm(false, span(w), span(x), span(direct), 1.0f, 0.0f);
  Matrix wt = transpose(w);
  Matrix via_t(24, 7);
  gemm(true, span(wt), span(x), span(via_t), 1.0f, 0.0f);
  CHECK(bitwise_equal(direct, via_t));
}

TEST_CASE("gemm dimension errors are descriptive", "[linalg]") {
  Matrix a(2, 3);
  Matrix b(4, 2);
  Matrix c(2, 2);
  CHECK_THROWS_WITH(gemm(false, span(a), span(b), span(c), 1.0f, 0.0f),
                    Catch::Matchers::ContainsSubstring("inner dimensions"));
  Matrix b2(3, 2);
  Matrix c2(3, 2);
  CHECK_THROWS_WITH(gemm(false, span(a), span(b2), span(c2), 1.0f, 0.0f),
                    Catch::Matchers::ContainsSubstring("C is"));
}

TEST_CASE("transpose by definition, involution, identity", "[linalg]") {
  Matrix a = Matrix::from_column_major(2, 2, {1.0f, 3.0f, 2.0f, 4.0f});
  Matrix t = transpose(a);
  CHECK(t(0, 0) == 1.0f);
  CHECK(t(0, 1) == 3.0f);
  CHECK(t(1, 0) == 2.0f);
  CHECK(t(1, 1) == 4.0f);

  Matrix r = random_matrix(7, 5, 40);
  CHECK(bitwise_equal(transpose(transpose(r)), r));

  Matrix eye = Matrix::identity(3);
  CHECK(bitwise_equal(transpose(eye), eye));
}

TEST_CASE("stack_rows concatenates in order", "[linalg]") {
  const int h = 3, in = 4;
  Matrix wi = random_matrix(h, in, 50);
  Matrix wf = random_matrix(h, in, 51);
  Matrix wo = random_matrix(h, in, 52);
  Matrix wc = random_matrix(h, in, 53);
  Matrix stacked = stack_rows({&wi, &wf, &wo, &wc});
  REQUIRE(stacked.rows() == 4 * h);
  REQUIRE(stacked.cols() == in);
  for (int c = 0; c < in; ++c) {
    for (int r = 0; r < h; ++r) {
      CHECK(stacked(r, c) == wi(r, c));
      CHECK(stacked(h + r, c) == wf(r, c));
      CHECK(stacked(2 * h + r, c) == wo(r, c));
      CHECK(stacked(3 * h + r, c) == wc(r, c));
    }
  }

  Matrix single = stack_rows({&wi});
  CHECK(bitwise_equal(single, wi));

  Matrix r1 = Matrix::from_column_major(1, 2, {1.0f, 2.0f});
  Matrix r2 = Matrix::from_column_major(1, 2, {3.0f, 4.0f});
  Matrix two = stack_rows({&r1, &r2});
  CHECK(two(0, 0) == 1.0f);
  CHECK(two(1, 0) == 3.0f);
  CHECK(two(0, 1) == 2.0f);
  CHECK(two(1, 1) == 4.0f);

  Matrix bad(2, 3);
  CHECK_THROWS_AS(stack_rows({&r1, &bad}), std::invalid_argument);
}

TEST_CASE("col_range aliases storage", "[linalg]") {
  Matrix x = random_matrix(4, 12, 60);

  Span full = col_range(x, 0, x.cols());
  CHECK(full.data == x.data());
  CHECK(full.cols == 12);

  // Time-major layout: step t of a H x (B*T) sequence is one column range.
  const int batch = 3;
  Span step2 = col_range(x, 2 * batch, batch);
  CHECK(step2.data == x.data() + 2 * batch * 4);

  // Writes through the view land in the base.
  step2.at(1, 0) = 123.5f;
  CHECK(x(1, 2 * batch) == 123.5f);

  CHECK_THROWS_AS(col_range(x, 10, 4), std::out_of_range);
  CHECK_THROWS_AS(col_range(x, -1, 2), std::out_of_range);
}
