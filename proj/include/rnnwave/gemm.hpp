// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "rnnwave/matrix.hpp"

namespace rnnwave {

// C <- alpha * op(A) * op(B) + beta * C, with a fixed accumulation order:
//
//   For every output element, the stored C value acts as the accumulator.
//   It starts at beta * C (0 when beta == 0, without reading C) and the
//   products op(A)(i,k) * op(B)(k,j) are added one at a time in strictly
//   ascending k, one multiply and one add per k (alpha == 1).
//
// Cache tiling below keeps that promise: k panels are visited in ascending
// order, each microkernel continues the per-element chain in registers, and
// flushing a partial sum to memory between panels is exact. Two calls with
// the same operands are therefore bitwise identical regardless of tile
// sizes, and a per-gate GEMM sequence accumulating into the same output is
// bitwise identical to one grouped GEMM over the stacked rows.

struct GemmTiles {
  int mc = 64;
  int nc = 64;
  int kc = 64;
};

namespace detail {

constexpr int kMr = 32;
constexpr int kNr = 4;

#if defined(__GNUC__) || defined(__clang__)
#define RNNWAVE_VECTOR_KERNEL 1
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wpsabi"
// 16-lane single-precision vector; lanes are independent output elements,
// so per-lane mul and add keep the per-element accumulation chain intact.
typedef float Vf16 __attribute__((vector_size(64)));
typedef Vf16 Vf16Unaligned __attribute__((aligned(4), may_alias));
typedef float Vf4 __attribute__((vector_size(16)));
typedef Vf4 Vf4Unaligned __attribute__((aligned(4), may_alias));
typedef int Vi4 __attribute__((vector_size(16)));

inline Vf16 load16(const float* p) {
  return *reinterpret_cast<const Vf16Unaligned*>(p);
}

inline void store16(float* p, Vf16 v) { *reinterpret_cast<Vf16Unaligned*>(p) = v; }

inline Vf4 load4(const float* p) { return *reinterpret_cast<const Vf4Unaligned*>(p); }
inline void store4(float* p, Vf4 v) { *reinterpret_cast<Vf4Unaligned*>(p) = v; }

/// Transposes a 4x4 block held in four row vectors (exact data movement).
inline void transpose4(Vf4& r0, Vf4& r1, Vf4& r2, Vf4& r3) {
  const Vf4 t0 = __builtin_shuffle(r0, r1, Vi4{0, 4, 1, 5});
  const Vf4 t1 = __builtin_shuffle(r0, r1, Vi4{2, 6, 3, 7});
  const Vf4 t2 = __builtin_shuffle(r2, r3, Vi4{0, 4, 1, 5});
  const Vf4 t3 = __builtin_shuffle(r2, r3, Vi4{2, 6, 3, 7});
  r0 = __builtin_shuffle(t0, t2, Vi4{0, 1, 4, 5});
  r1 = __builtin_shuffle(t0, t2, Vi4{2, 3, 6, 7});
  r2 = __builtin_shuffle(t1, t3, Vi4{0, 1, 4, 5});
  r3 = __builtin_shuffle(t1, t3, Vi4{2, 3, 6, 7});
}
#endif

/// Packs tile (k0..k0+kb, i0..i0+mb) of a K x M matrix into k-major rows of
/// width mb, i.e. a blocked transpose.
inline void pack_transposed_tile(ConstSpan a, int k0, int i0, int kb, int mb, float* dst) {
#ifdef RNNWAVE_VECTOR_KERNEL
  int i = 0;
  for (; i + 4 <= mb; i += 4) {
    const float* c0 = a.col(i0 + i) + k0;
    const float* c1 = a.col(i0 + i + 1) + k0;
    const float* c2 = a.col(i0 + i + 2) + k0;
    const float* c3 = a.col(i0 + i + 3) + k0;
    int k = 0;
    for (; k + 4 <= kb; k += 4) {
      Vf4 r0 = load4(c0 + k);
      Vf4 r1 = load4(c1 + k);
      Vf4 r2 = load4(c2 + k);
      Vf4 r3 = load4(c3 + k);
      transpose4(r0, r1, r2, r3);
      float* out = dst + static_cast<std::size_t>(k) * mb + i;
      store4(out, r0);
      store4(out + mb, r1);
      store4(out + 2 * static_cast<std::size_t>(mb), r2);
      store4(out + 3 * static_cast<std::size_t>(mb), r3);
    }
    for (; k < kb; ++k) {
      float* out = dst + static_cast<std::size_t>(k) * mb + i;
      out[0] = c0[k];
      out[1] = c1[k];
      out[2] = c2[k];
      out[3] = c3[k];
    }
  }
  for (; i < mb; ++i) {
    const float* src = a.col(i0 + i) + k0;
    for (int k = 0; k < kb; ++k) dst[static_cast<std::size_t>(k) * mb + i] = src[k];
  }
#else
  for (int i = 0; i < mb; ++i) {
    const float* src = a.col(i0 + i) + k0;
    for (int k = 0; k < kb; ++k) dst[static_cast<std::size_t>(k) * mb + i] = src[k];
  }
#endif
}

inline void gemm_check(bool trans_a, bool trans_b, ConstSpan a, ConstSpan b, Span c) {
  const int am = trans_a ? a.cols : a.rows;
  const int ak = trans_a ? a.rows : a.cols;
  const int bk = trans_b ? b.cols : b.rows;
  const int bn = trans_b ? b.rows : b.cols;
  if (ak != bk) {
    throw std::invalid_argument("gemm: op(A) is " + std::to_string(am) + "x" +
                                std::to_string(ak) + " but op(B) is " + std::to_string(bk) +
                                "x" + std::to_string(bn) + "; inner dimensions differ");
  }
  if (c.rows != am || c.cols != bn) {
    throw std::invalid_argument("gemm: C is " + std::to_string(c.rows) + "x" +
                                std::to_string(c.cols) + " but op(A)*op(B) is " +
                                std::to_string(am) + "x" + std::to_string(bn));
  }
}

inline float op_at(ConstSpan m, bool trans, int r, int c) {
  return trans ? m.at(c, r) : m.at(r, c);
}

// Per-element reference chain over the full k range. Used for the generic
// alpha path and for operand shapes the tiled kernels do not cover.
inline void gemm_scalar(bool trans_a, bool trans_b, ConstSpan a, ConstSpan b, Span c,
                        float alpha, int k_count) {
  for (int j = 0; j < c.cols; ++j) {
    for (int i = 0; i < c.rows; ++i) {
      float acc = c.at(i, j);
      if (alpha == 1.0f) {
        for (int k = 0; k < k_count; ++k) {
          acc += op_at(a, trans_a, i, k) * op_at(b, trans_b, k, j);
        }
      } else {
        for (int k = 0; k < k_count; ++k) {
          acc += alpha * (op_at(a, trans_a, i, k) * op_at(b, trans_b, k, j));
        }
      }
      c.at(i, j) = acc;
    }
  }
}

// acc tile += a_chunk (contiguous over i) times b values. The 32x4 register
// tile gives eight independent accumulation chains; every output element
// still receives exactly one multiply and one add per ascending k.
inline void micro_tile(const float* ap, int lda_step, const float* bp, int ldb_step, float* cp,
                       int ldc, int kb, int mr, int nr) {
#ifdef RNNWAVE_VECTOR_KERNEL
  if (mr == kMr && nr == kNr) {
    float* c0 = cp;
    float* c1 = cp + static_cast<std::size_t>(ldc);
    float* c2 = cp + 2 * static_cast<std::size_t>(ldc);
    float* c3 = cp + 3 * static_cast<std::size_t>(ldc);
    Vf16 acc00 = load16(c0), acc01 = load16(c0 + 16);
    Vf16 acc10 = load16(c1), acc11 = load16(c1 + 16);
    Vf16 acc20 = load16(c2), acc21 = load16(c2 + 16);
    Vf16 acc30 = load16(c3), acc31 = load16(c3 + 16);
    const float* arow = ap;
    const float* brow = bp;
    for (int k = 0; k < kb; ++k) {
      const Vf16 a0 = load16(arow);
      const Vf16 a1 = load16(arow + 16);
      const float b0 = brow[0], b1 = brow[1], b2 = brow[2], b3 = brow[3];
      acc00 = acc00 + a0 * b0;
      acc01 = acc01 + a1 * b0;
      acc10 = acc10 + a0 * b1;
      acc11 = acc11 + a1 * b1;
      acc20 = acc20 + a0 * b2;
      acc21 = acc21 + a1 * b2;
      acc30 = acc30 + a0 * b3;
      acc31 = acc31 + a1 * b3;
      arow += lda_step;
      brow += ldb_step;
    }
    store16(c0, acc00);
    store16(c0 + 16, acc01);
    store16(c1, acc10);
    store16(c1 + 16, acc11);
    store16(c2, acc20);
    store16(c2 + 16, acc21);
    store16(c3, acc30);
    store16(c3 + 16, acc31);
    return;
  }
#else
  if (mr == kMr && nr == kNr) {
    float acc[kNr][kMr];
    for (int j = 0; j < kNr; ++j) {
      const float* cc = cp + static_cast<std::size_t>(j) * ldc;
      for (int i = 0; i < kMr; ++i) acc[j][i] = cc[i];
    }
    const float* arow = ap;
    const float* brow = bp;
    for (int k = 0; k < kb; ++k) {
      for (int j = 0; j < kNr; ++j) {
        const float bv = brow[j];
        for (int i = 0; i < kMr; ++i) acc[j][i] += arow[i] * bv;
      }
      arow += lda_step;
      brow += ldb_step;
    }
    for (int j = 0; j < kNr; ++j) {
      float* cc = cp + static_cast<std::size_t>(j) * ldc;
      for (int i = 0; i < kMr; ++i) cc[i] = acc[j][i];
    }
    return;
  }
#endif
  for (int j = 0; j < nr; ++j) {
    float* cc = cp + static_cast<std::size_t>(j) * ldc;
    for (int i = 0; i < mr; ++i) {
      float acc = cc[i];
      const float* arow = ap + i;
      const float* brow = bp + j;
      for (int k = 0; k < kb; ++k) {
        acc += *arow * *brow;
        arow += lda_step;
        brow += ldb_step;
      }
      cc[i] = acc;
    }
  }
}

inline std::vector<float>& pack_buffer_a() {
  static thread_local std::vector<float> buf;
  return buf;
}
inline std::vector<float>& pack_buffer_b() {
  static thread_local std::vector<float> buf;
  return buf;
}

#ifdef RNNWAVE_VECTOR_KERNEL
#pragma GCC diagnostic pop
#endif

}  // namespace detail

inline void gemm_tiled(bool trans_a, bool trans_b, ConstSpan a, ConstSpan b, Span c,
                       float alpha, float beta, const GemmTiles& tiles) {
  detail::gemm_check(trans_a, trans_b, a, b, c);
  const int m = c.rows;
  const int n = c.cols;
  const int k_count = trans_a ? a.rows : a.cols;

  if (beta == 0.0f) {
    for (int j = 0; j < n; ++j) {
      float* cc = c.col(j);
      for (int i = 0; i < m; ++i) cc[i] = 0.0f;
    }
  } else if (beta != 1.0f) {
    for (int j = 0; j < n; ++j) {
      float* cc = c.col(j);
      for (int i = 0; i < m; ++i) cc[i] = beta * cc[i];
    }
  }
  if (alpha == 0.0f || k_count == 0) return;

  if (alpha != 1.0f || (trans_a && trans_b)) {
    detail::gemm_scalar(trans_a, trans_b, a, b, c, alpha, k_count);
    return;
  }

  const int mc = std::max(tiles.mc, detail::kMr);
  const int nc = std::max(tiles.nc, detail::kNr);
  const int kc = std::max(tiles.kc, 1);

  std::vector<float>& apack = detail::pack_buffer_a();
  std::vector<float>& bpack = detail::pack_buffer_b();

  for (int k0 = 0; k0 < k_count; k0 += kc) {
    const int kb = std::min(kc, k_count - k0);
    for (int j0 = 0; j0 < n; j0 += nc) {
      const int nb = std::min(nc, n - j0);

      const float* bsrc = nullptr;
      int b_step = 0;  // stride between consecutive k rows of the packed/native B tile
      if (!trans_b) {
        // B is K x N: gather the tile into k-major rows so the microkernel
        // streams it linearly.
        bpack.resize(static_cast<std::size_t>(kb) * nb);
        detail::pack_transposed_tile(b, k0, j0, kb, nb, bpack.data());
        bsrc = bpack.data();
        b_step = nb;
      } else {
        // B is N x K: row j of op(B) column k is already contiguous.
        bsrc = b.data + static_cast<std::size_t>(k0) * b.ld + j0;
        b_step = b.ld;
      }

      for (int i0 = 0; i0 < m; i0 += mc) {
        const int mb = std::min(mc, m - i0);

        // Pack the A tile k-major: the microkernel then streams one
        // contiguous i chunk per k instead of striding a full column.
        apack.resize(static_cast<std::size_t>(kb) * mb);
        if (!trans_a) {
          for (int k = 0; k < kb; ++k) {
            const float* src = a.col(k0 + k) + i0;
            std::memcpy(apack.data() + static_cast<std::size_t>(k) * mb, src,
                        static_cast<std::size_t>(mb) * sizeof(float));
          }
        } else {
          detail::pack_transposed_tile(a, k0, i0, kb, mb, apack.data());
        }
        const float* asrc = apack.data();
        const int a_step = mb;

        for (int jj = 0; jj < nb; jj += detail::kNr) {
          const int nr = std::min(detail::kNr, nb - jj);
          for (int ii = 0; ii < mb; ii += detail::kMr) {
            const int mr = std::min(detail::kMr, mb - ii);
            const float* ap = asrc + ii;
            const float* bp = bsrc + jj;
            float* cp = c.data + static_cast<std::size_t>(j0 + jj) * c.ld + (i0 + ii);
            detail::micro_tile(ap, a_step, bp, b_step, cp, c.ld, kb, mr, nr);
          }
        }
      }
    }
  }
}

inline void gemm(bool trans_a, bool trans_b, ConstSpan a, ConstSpan b, Span c, float alpha,
                 float beta) {
  gemm_tiled(trans_a, trans_b, a, b, c, alpha, beta, GemmTiles{});
}

/// op(A) * B convenience with op(B) = B.
inline void gemm(bool trans_a, ConstSpan a, ConstSpan b, Span c, float alpha, float beta) {
  gemm(trans_a, false, a, b, c, alpha, beta);
}

}  // namespace rnnwave
