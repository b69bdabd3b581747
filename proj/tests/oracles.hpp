#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the code under test except for Matrix storage.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "vkd/matrix.hpp"
#include "vkd/random.hpp"

namespace vkd::oracle {

using LdMatrix = std::vector<long double>;  // row-major n x n

inline LdMatrix ld_mul(const LdMatrix& a, const LdMatrix& b, std::size_t n) {
  LdMatrix c(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * n + k] * b[k * n + j];
  return c;
}

// exp(w) as (sum_{n<=terms} (w/2^s)^n / n!)^(2^s) in extended precision.
// s = 0 is the plain truncated series.
inline Matrix taylor_expm(const Matrix& w, int terms = 60, int squarings = 0) {
  const std::size_t n = w.rows();
  const long double scale = std::ldexp(1.0L, -squarings);
  LdMatrix x(n * n);
  for (std::size_t i = 0; i < n * n; ++i) x[i] = static_cast<long double>(w.data()[i]) * scale;
  LdMatrix sum(n * n, 0.0L);
  LdMatrix term(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i) sum[i * n + i] = term[i * n + i] = 1.0L;
  for (int k = 1; k <= terms; ++k) {
    term = ld_mul(term, x, n);
    for (auto& v : term) v /= static_cast<long double>(k);
    for (std::size_t i = 0; i < n * n; ++i) sum[i] += term[i];
  }
  for (int s = 0; s < squarings; ++s) sum = ld_mul(sum, sum, n);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n * n; ++i) out.data()[i] = static_cast<double>(sum[i]);
  return out;
}

// Plain triple loop, k innermost, single accumulator.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Central differences of a scalar function over every entry of x.
inline Matrix fd_gradient(Matrix x, const std::function<double(const Matrix&)>& f,
                          double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double down = f(x);
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = got.data()[i] - want.data()[i];
    num += d * d;
    den += want.data()[i] * want.data()[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline Matrix random_skew(std::size_t n, double stddev, Rng& rng) {
  Matrix a = random_normal(n, n, stddev, rng);
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) w(i, j) = a(i, j) - a(j, i);
  return w;
}

// Skew matrix rescaled to the given 1-norm.
inline Matrix random_skew_norm1(std::size_t n, double norm1, Rng& rng) {
  Matrix w = random_skew(n, 1.0, rng);
  double worst = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(w(i, j));
    worst = std::max(worst, s);
  }
  if (worst > 0.0) w *= norm1 / worst;
  return w;
}

// Gram-Schmidt on the columns of a random Gaussian matrix.
inline Matrix random_orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix q = random_normal(rows, cols, 1.0, rng);
  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double d = 0.0;
        for (std::size_t i = 0; i < rows; ++i) d += q(i, j) * q(i, p);
        for (std::size_t i = 0; i < rows; ++i) q(i, j) -= d * q(i, p);
      }
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < rows; ++i) q(i, j) /= nrm;
  }
  return q;
}

// Q diag(lambda) Q^T with eigenvalues log-spaced in [1, cond].
inline Matrix random_spd(std::size_t n, double cond, Rng& rng) {
  const Matrix q = random_orthonormal_columns(n, n, rng);
  Matrix s(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = n == 1 ? 1.0 : std::pow(cond, static_cast<double>(k) / (n - 1));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s(i, j) += lam * q(i, k) * q(j, k);
  }
  return s;
}

// Centres columns in place.
inline Matrix centre_columns(Matrix z) {
  for (std::size_t j = 0; j < z.cols(); ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) m += z(i, j);
    m /= static_cast<double>(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) z(i, j) -= m;
  }
  return z;
}

inline Matrix gram_tn(const Matrix& z) { return naive_matmul(transpose(z), z); }

}  // namespace vkd::oracle
