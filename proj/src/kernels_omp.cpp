// OpenMP product kernels. See linalg.hpp for the accumulation-order contract
// that keeps them bit-identical to kernels_serial.cpp.

#include <algorithm>

#include "vkd/error.hpp"
#include "vkd/linalg.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vkd::linalg {
namespace {

constexpr std::size_t kRowTile = 32;
constexpr std::size_t kDepthTile = 128;
constexpr std::size_t kColTile = 512;

thread_local std::uint64_t t_flops = 0;
int g_threads = 1;

void check_product(const Matrix& a, const Matrix& b, std::size_t inner_a, std::size_t inner_b,
                   const char* op) {
  if (inner_a != inner_b) {
    throw ShapeError(std::string(op) + ": inner dimensions differ for " + a.shape_str() + " and " +
                     b.shape_str());
  }
}

// c += a * b over tiles. For a fixed (i, j) the k loop still runs in
// ascending order across depth tiles, so the rounding sequence is the naive
// one.
void gemm_tiled(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows();
  const std::size_t depth = a.cols();
  const std::size_t n = b.cols();
  const std::size_t row_tiles = (m + kRowTile - 1) / kRowTile;
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();

#pragma omp parallel for schedule(static) num_threads(g_threads) if (g_threads > 1 && m * n * depth > 32768)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(row_tiles); ++t) {
    const std::size_t i0 = static_cast<std::size_t>(t) * kRowTile;
    const std::size_t i1 = std::min(m, i0 + kRowTile);
    for (std::size_t k0 = 0; k0 < depth; k0 += kDepthTile) {
      const std::size_t k1 = std::min(depth, k0 + kDepthTile);
      for (std::size_t j0 = 0; j0 < n; j0 += kColTile) {
        const std::size_t j1 = std::min(n, j0 + kColTile);
        for (std::size_t i = i0; i < i1; ++i) {
          double* crow = pc + i * n;
          const double* arow = pa + i * depth;
          for (std::size_t k = k0; k < k1; ++k) {
            const double aik = arow[k];
            const double* brow = pb + k * n;
            for (std::size_t j = j0; j < j1; ++j) crow[j] += aik * brow[j];
          }
        }
      }
    }
  }
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

std::uint64_t flop_count() { return t_flops; }
void reset_flop_count() { t_flops = 0; }
void add_flops(std::uint64_t n) { t_flops += n; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_product(a, b, a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  gemm_tiled(a, b, c);
  add_flops(2ULL * a.rows() * a.cols() * b.cols());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_product(a, b, a.rows(), b.rows(), "matmul_tn");
  return matmul(transpose(a), b);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_product(a, b, a.cols(), b.cols(), "matmul_nt");
  return matmul(a, transpose(b));
}

}  // namespace vkd::linalg
