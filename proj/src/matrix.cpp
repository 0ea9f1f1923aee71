#include "simnet/matrix.hpp"

#include <algorithm>

#include "simnet/error.hpp"

namespace simnet {
namespace {

constexpr std::size_t kLanes = 8;
constexpr std::size_t kTileA = 4;
constexpr std::size_t kTileB = 4;

inline double reduce_lanes(const double* lane) noexcept {
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
}

// Single output element. The tiled kernel below performs exactly this sequence
// of operations for each of its elements.
inline double dot_kernel(const double* a, const double* b, std::size_t k) noexcept {
  double lane[kLanes] = {};
  std::size_t kk = 0;
  for (; kk + kLanes <= k; kk += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lane[l] += a[kk + l] * b[kk + l];
  }
  double s = reduce_lanes(lane);
  for (; kk < k; ++kk) s += a[kk] * b[kk];
  return s;
}

void tile_kernel(const double* a, std::size_t lda, const double* b, std::size_t ldb, std::size_t k,
                 double* c, std::size_t ldc) noexcept {
  double lane[kTileA][kTileB][kLanes] = {};
  std::size_t kk = 0;
  for (; kk + kLanes <= k; kk += kLanes) {
    for (std::size_t i = 0; i < kTileA; ++i) {
      const double* ar = a + i * lda + kk;
      for (std::size_t j = 0; j < kTileB; ++j) {
        const double* br = b + j * ldb + kk;
        for (std::size_t l = 0; l < kLanes; ++l) lane[i][j][l] += ar[l] * br[l];
      }
    }
  }
  for (std::size_t i = 0; i < kTileA; ++i) {
    for (std::size_t j = 0; j < kTileB; ++j) {
      double s = reduce_lanes(lane[i][j]);
      for (std::size_t t = kk; t < k; ++t) s += a[i * lda + t] * b[j * ldb + t];
      c[i * ldc + j] = s;
    }
  }
}

}  // namespace

void transpose_into(const Matrix& src, Matrix& dst) {
  dst.resize(src.cols(), src.rows());
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < src.rows(); r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < src.cols(); c0 += kBlock) {
      const std::size_t r1 = std::min(src.rows(), r0 + kBlock);
      const std::size_t c1 = std::min(src.cols(), c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst(c, r) = src(r, c);
    }
  }
}

void gemm_abt(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) throw DimensionError("gemm_abt inner dimension", a.cols(), b.cols());
  const std::size_t m = a.rows();
  const std::size_t n = b.rows();
  const std::size_t k = a.cols();
  c.resize(m, n);
  const std::size_t m_tiled = m - m % kTileA;
  const std::size_t n_tiled = n - n % kTileB;
  // Blocks of b rows are reused across all a-row tiles while they sit in cache.
  constexpr std::size_t kBlockB = 64;
  for (std::size_t j0 = 0; j0 < n_tiled; j0 += kBlockB) {
    const std::size_t j1 = std::min(n_tiled, j0 + kBlockB);
    for (std::size_t i = 0; i < m_tiled; i += kTileA) {
      for (std::size_t j = j0; j < j1; j += kTileB) {
        tile_kernel(a.data() + i * k, k, b.data() + j * k, k, k, c.data() + i * n + j, n);
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j_begin = i < m_tiled ? n_tiled : 0;
    for (std::size_t j = j_begin; j < n; ++j) {
      c(i, j) = dot_kernel(a.data() + i * k, b.data() + j * k, k);
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot", a.size(), b.size());
  return dot_kernel(a.data(), b.data(), a.size());
}

}  // namespace simnet
