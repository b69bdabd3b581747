#pragma once

#include <cstdint>
#include <vector>

#include "vkd/matrix.hpp"

namespace vkd::linalg {

// ---------------------------------------------------------------------------
// Products
//
// The kernels below parallelise over output rows with OpenMP. Each output
// element is accumulated in the same order (k ascending, starting from 0.0)
// as the single-threaded reference in linalg::serial, so results are
// bit-identical for any thread count.
// ---------------------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
}  // namespace serial

// Sets the OpenMP team size used by the kernels (clamped to >= 1).
void set_num_threads(int n);
int num_threads();

// Floating-point operation counter for the calling thread. Products count
// 2mnk, factorisations their textbook leading term.
std::uint64_t flop_count();
void reset_flop_count();
void add_flops(std::uint64_t n);

// ---------------------------------------------------------------------------
// Dense solves (LU with partial pivoting)
// ---------------------------------------------------------------------------

// Solves a x = b for x. Throws NumericError if a is singular to working
// precision.
Matrix solve(const Matrix& a, const Matrix& b);
double determinant(const Matrix& a);

// ---------------------------------------------------------------------------
// Matrix exponential
// ---------------------------------------------------------------------------

// Scaling-and-squaring with a diagonal Padé approximant. Order selection by
// the 1-norm of w:
//
//   order 7   when ||w||_1 <= 0.9504178996162932
//   order 9   when ||w||_1 <= 2.097847961257068
//   order 13  otherwise, after scaling by 2^-s so that ||w/2^s||_1 <= 5.371920351148152
//
// (Higham, "The scaling and squaring method for the matrix exponential
// revisited", 2005; orders 3 and 5 are not used.)
Matrix expm(const Matrix& w);

struct ExpmFrechet {
  Matrix expw;  // exp(w)
  Matrix l;     // L(w, e), the Fréchet derivative of exp at w applied to e
};

// Computes exp(w) together with its directional derivative in direction e,
// using the combined Padé recurrence of Al-Mohy & Higham (2009). Threshold
// table (1-norm of w): order 7 <= 0.783, order 9 <= 1.78, else order 13 after
// scaling to <= 4.74.
ExpmFrechet expm_frechet(const Matrix& w, const Matrix& e);

// Upper-right block of expm([[w, e], [0, w]]). Independent (and 8x more
// expensive) route to L(w, e), kept for verification.
Matrix expm_frechet_block(const Matrix& w, const Matrix& e);

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition and PSD inverse square roots
// ---------------------------------------------------------------------------

struct SymEig {
  std::vector<double> eigenvalues;  // ascending
  Matrix eigenvectors;              // column k pairs with eigenvalues[k]
};

// Input is symmetrised as (s + s^T)/2. Each eigenvector is signed so that its
// largest-magnitude entry is positive (first such entry on ties).
SymEig sym_eig(const Matrix& s);

struct InvSqrtMethod {
  enum class Kind { kEig, kNewtonSchulz };
  Kind kind = Kind::kEig;
  int iters = 15;  // Newton-Schulz only

  static InvSqrtMethod eig() { return {}; }
  static InvSqrtMethod newton_schulz(int iters = 15) { return {Kind::kNewtonSchulz, iters}; }
};

// R ~= (s + eps I)^{-1/2} for symmetric PSD s.
//
// kEig: V diag((lambda + eps)^{-1/2}) V^T. Eigenvalues in [-tol, 0) with
//   tol = 1e-8 * max(1, lambda_max) are clamped to zero; anything more
//   negative is rejected as "input not PSD".
// kNewtonSchulz: coupled iteration Y <- Y T, Z <- T Z, T = (3I - ZY)/2 on
//   (s + eps I)/trace, then rescaled. Accuracy depends on the conditioning and
//   the iteration count.
Matrix inv_sqrt_psd(const Matrix& s, double eps, InvSqrtMethod method = InvSqrtMethod::eig());

}  // namespace vkd::linalg
