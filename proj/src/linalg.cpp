#include "vkd/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include "vkd/error.hpp"

namespace vkd::linalg {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_eigen(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

Matrix from_eigen(const RowMajor& e) {
  Matrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  std::copy(e.data(), e.data() + e.size(), m.data().begin());
  return m;
}

// a*x + b*y + c*z + d*I, any of the matrices may be absent.
Matrix lincomb(std::size_t n, double ca, const Matrix* a, double cb, const Matrix* b, double cc,
               const Matrix* c, double cid = 0.0) {
  Matrix out(n, n);
  auto acc = [&](double coef, const Matrix* m) {
    if (m == nullptr || coef == 0.0) return;
    auto dst = out.data();
    auto src = m->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += coef * src[i];
  };
  acc(ca, a);
  acc(cb, b);
  acc(cc, c);
  if (cid != 0.0)
    for (std::size_t i = 0; i < n; ++i) out(i, i) += cid;
  return out;
}

// Padé numerator coefficients b_0..b_m.
constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                          25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0,
                                           302702400.0,   30270240.0,   2162160.0,
                                           110880.0,      3960.0,       90.0,
                                           1.0};
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

struct Thresholds {
  double order7;
  double order9;
  double order13;
};

// Higham 2005 (backward error of exp alone).
constexpr Thresholds kExpmThresholds = {0.9504178996162932, 2.097847961257068, 5.371920351148152};
// Al-Mohy & Higham 2009 (backward error of exp and its Fréchet derivative).
constexpr Thresholds kFrechetThresholds = {7.83e-1, 1.78, 4.74};

struct PadeResult {
  Matrix r;
  std::optional<Matrix> l;
};

// Shared scaling-and-squaring driver. When e is given, the Fréchet derivative
// is carried through every stage alongside the exponential.
PadeResult pade_expm(const Matrix& w_in, const Matrix* e_in, const Thresholds& th) {
  const std::size_t n = w_in.rows();
  const double norm = norm_1(w_in);
  const Matrix ident = Matrix::identity(n);

  int squarings = 0;
  Matrix a = w_in;
  std::optional<Matrix> e;
  if (e_in != nullptr) e = *e_in;

  Matrix u, v, lu, lv;
  const bool want_l = e.has_value();

  if (norm <= th.order9) {
    const bool use7 = norm <= th.order7;
    const Matrix a2 = matmul(a, a);
    const Matrix a4 = matmul(a2, a2);
    const Matrix a6 = matmul(a2, a4);
    Matrix m2, m4, m6, m8, a8;
    if (want_l) {
      m2 = matmul(a, *e) + matmul(*e, a);
      m4 = matmul(a2, m2) + matmul(m2, a2);
      m6 = matmul(a4, m2) + matmul(m4, a2);
    }
    if (use7) {
      const auto& b = kPade7;
      const Matrix uinner = lincomb(n, b[7], &a6, b[5], &a4, b[3], &a2, b[1]);
      u = matmul(a, uinner);
      v = lincomb(n, b[6], &a6, b[4], &a4, b[2], &a2, b[0]);
      if (want_l) {
        lu = matmul(a, lincomb(n, b[7], &m6, b[5], &m4, b[3], &m2)) + matmul(*e, uinner);
        lv = lincomb(n, b[6], &m6, b[4], &m4, b[2], &m2);
      }
    } else {
      const auto& b = kPade9;
      a8 = matmul(a4, a4);
      if (want_l) m8 = matmul(a4, m4) + matmul(m4, a4);
      Matrix uinner = lincomb(n, b[9], &a8, b[7], &a6, b[5], &a4);
      uinner += lincomb(n, b[3], &a2, 0.0, nullptr, 0.0, nullptr, b[1]);
      u = matmul(a, uinner);
      v = lincomb(n, b[8], &a8, b[6], &a6, b[4], &a4);
      v += lincomb(n, b[2], &a2, 0.0, nullptr, 0.0, nullptr, b[0]);
      if (want_l) {
        Matrix luinner = lincomb(n, b[9], &m8, b[7], &m6, b[5], &m4);
        luinner += lincomb(n, b[3], &m2, 0.0, nullptr, 0.0, nullptr);
        lu = matmul(a, luinner) + matmul(*e, uinner);
        lv = lincomb(n, b[8], &m8, b[6], &m6, b[4], &m4);
        lv += lincomb(n, b[2], &m2, 0.0, nullptr, 0.0, nullptr);
      }
    }
  } else {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / th.order13))));
    const double scale = std::ldexp(1.0, -squarings);
    a *= scale;
    if (want_l) *e *= scale;

    const auto& b = kPade13;
    const Matrix a2 = matmul(a, a);
    const Matrix a4 = matmul(a2, a2);
    const Matrix a6 = matmul(a2, a4);
    const Matrix w1 = lincomb(n, b[13], &a6, b[11], &a4, b[9], &a2);
    const Matrix w2 = lincomb(n, b[7], &a6, b[5], &a4, b[3], &a2, b[1]);
    const Matrix z1 = lincomb(n, b[12], &a6, b[10], &a4, b[8], &a2);
    const Matrix z2 = lincomb(n, b[6], &a6, b[4], &a4, b[2], &a2, b[0]);
    const Matrix wsum = matmul(a6, w1) + w2;
    u = matmul(a, wsum);
    v = matmul(a6, z1) + z2;
    if (want_l) {
      const Matrix m2 = matmul(a, *e) + matmul(*e, a);
      const Matrix m4 = matmul(a2, m2) + matmul(m2, a2);
      const Matrix m6 = matmul(a4, m2) + matmul(m4, a2);
      const Matrix lw1 = lincomb(n, b[13], &m6, b[11], &m4, b[9], &m2);
      const Matrix lw2 = lincomb(n, b[7], &m6, b[5], &m4, b[3], &m2);
      const Matrix lz1 = lincomb(n, b[12], &m6, b[10], &m4, b[8], &m2);
      const Matrix lz2 = lincomb(n, b[6], &m6, b[4], &m4, b[2], &m2);
      const Matrix lw = matmul(a6, lw1) + matmul(m6, w1) + lw2;
      lu = matmul(a, lw) + matmul(*e, wsum);
      lv = matmul(a6, lz1) + matmul(m6, z1) + lz2;
    }
  }

  // r = (V - U)^{-1} (V + U);  l = (V - U)^{-1} (Lu + Lv + (Lu - Lv) r)
  const RowMajor q = as_eigen(v) - as_eigen(u);
  Eigen::PartialPivLU<RowMajor> lu_fact(q);
  add_flops(2ULL * n * n * n / 3);
  RowMajor p = as_eigen(v) + as_eigen(u);
  Matrix r = from_eigen(lu_fact.solve(p));
  add_flops(2ULL * n * n * n);
  std::optional<Matrix> l;
  if (want_l) {
    const Matrix rhs = lu + lv + matmul(lu - lv, r);
    l = from_eigen(lu_fact.solve(as_eigen(rhs)));
    add_flops(2ULL * n * n * n);
  }
  if (!r.all_finite()) throw NumericError("expm: Padé denominator is singular");

  for (int k = 0; k < squarings; ++k) {
    if (want_l) *l = matmul(r, *l) + matmul(*l, r);
    r = matmul(r, r);
  }
  return {std::move(r), std::move(l)};
}

}  // namespace

Matrix solve(const Matrix& a, const Matrix& b) {
  require_square(a, "solve");
  if (a.rows() != b.rows()) {
    throw ShapeError("solve: " + a.shape_str() + " system with " + b.shape_str() + " right side");
  }
  Eigen::PartialPivLU<RowMajor> lu(as_eigen(a));
  const std::size_t n = a.rows();
  add_flops(2ULL * n * n * n / 3 + 2ULL * n * n * b.cols());
  Matrix x = from_eigen(lu.solve(as_eigen(b)));
  if (!x.all_finite()) throw NumericError("solve: matrix is singular to working precision");
  return x;
}

double determinant(const Matrix& a) {
  require_square(a, "determinant");
  if (a.rows() == 0) return 1.0;
  return Eigen::PartialPivLU<RowMajor>(as_eigen(a)).determinant();
}

Matrix expm(const Matrix& w) {
  require_square(w, "expm");
  if (w.rows() == 0) return w;
  return pade_expm(w, nullptr, kExpmThresholds).r;
}

ExpmFrechet expm_frechet(const Matrix& w, const Matrix& e) {
  require_square(w, "expm_frechet");
  require_same_shape(w, e, "expm_frechet");
  if (w.rows() == 0) return {w, e};
  auto res = pade_expm(w, &e, kFrechetThresholds);
  return {std::move(res.r), std::move(*res.l)};
}

Matrix expm_frechet_block(const Matrix& w, const Matrix& e) {
  require_square(w, "expm_frechet_block");
  require_same_shape(w, e, "expm_frechet_block");
  const std::size_t n = w.rows();
  Matrix big(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      big(i, j) = w(i, j);
      big(i, n + j) = e(i, j);
      big(n + i, n + j) = w(i, j);
    }
  }
  return block(expm(big), 0, n, n, n);
}

SymEig sym_eig(const Matrix& s) {
  require_square(s, "sym_eig");
  const std::size_t n = s.rows();
  SymEig out;
  if (n == 0) return out;
  RowMajor sym = 0.5 * (as_eigen(s) + as_eigen(s).transpose());
  Eigen::SelfAdjointEigenSolver<RowMajor> solver(sym);
  add_flops(9ULL * n * n * n);
  if (solver.info() != Eigen::Success) {
    throw NumericError("sym_eig: eigensolver did not converge for " + s.shape_str() + " input");
  }
  out.eigenvalues.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  out.eigenvectors = Matrix(n, n);
  const auto& vecs = solver.eigenvectors();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::abs(vecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    const double sign =
        vecs(static_cast<Eigen::Index>(arg), static_cast<Eigen::Index>(k)) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      out.eigenvectors(i, k) =
          sign * vecs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
  return out;
}

Matrix inv_sqrt_psd(const Matrix& s, double eps, InvSqrtMethod method) {
  require_square(s, "inv_sqrt_psd");
  if (eps < 0.0) throw ConfigError("inv_sqrt_psd: eps must be >= 0");
  const std::size_t n = s.rows();
  if (n == 0) return s;

  if (method.kind == InvSqrtMethod::Kind::kEig) {
    const SymEig eig = sym_eig(s);
    const double top = std::max(1.0, std::abs(eig.eigenvalues.back()));
    const double tol = 1e-8 * top;
    if (eig.eigenvalues.front() < -tol) {
      throw NumericError("inv_sqrt_psd: input not PSD (eigenvalue " +
                         std::to_string(eig.eigenvalues.front()) + ")");
    }
    // V diag(f) V^T, built as (V diag(f)) V^T.
    Matrix scaled = eig.eigenvectors;
    for (std::size_t k = 0; k < n; ++k) {
      const double lam = std::max(eig.eigenvalues[k], 0.0) + eps;
      if (lam <= 0.0) throw NumericError("inv_sqrt_psd: singular input with eps = 0");
      const double f = 1.0 / std::sqrt(lam);
      for (std::size_t i = 0; i < n; ++i) scaled(i, k) *= f;
    }
    return matmul_nt(scaled, eig.eigenvectors);
  }

  if (method.iters < 1) throw ConfigError("inv_sqrt_psd: Newton-Schulz needs iters >= 1");
  Matrix shifted = s;
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += eps;
  const double c = trace(shifted);
  if (!(c > 0.0)) throw NumericError("inv_sqrt_psd: non-positive trace");
  Matrix y = (1.0 / c) * shifted;
  Matrix z = Matrix::identity(n);
  for (int it = 0; it < method.iters; ++it) {
    Matrix t = -0.5 * matmul(z, y);
    for (std::size_t i = 0; i < n; ++i) t(i, i) += 1.5;
    y = matmul(y, t);
    z = matmul(t, z);
  }
  z *= 1.0 / std::sqrt(c);
  if (!z.all_finite()) throw NumericError("inv_sqrt_psd: Newton-Schulz diverged");
  return z;
}

}  // namespace vkd::linalg
