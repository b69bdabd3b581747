#include "vkd/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "vkd/linalg.hpp"
#include "vkd/normalizer.hpp"
#include "vkd/objective.hpp"
#include "vkd/projector.hpp"
#include "vkd/random.hpp"

namespace vkd::checks {
namespace {

using projector::OrthMethod;
using projector::SkewParam;

std::size_t draw_dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Largest |sigma - 1| over the singular values of p (rows orthonormal).
double singular_value_error(const Matrix& p) {
  const auto eig = linalg::sym_eig(linalg::matmul_nt(p, p));
  double worst = 0.0;
  for (double lambda : eig.eigenvalues) {
    worst = std::max(worst, std::abs(std::sqrt(std::max(lambda, 0.0)) - 1.0));
  }
  return worst;
}

// Relative error of an analytic gradient against central differences of
// loss(a) = <upstream, P(a)>.
double skew_grad_fd_error(OrthMethod method, Rng& rng) {
  const std::size_t d_t = draw_dim(rng, 3, 7);
  const std::size_t d_s = draw_dim(rng, 1, d_t);
  SkewParam p = SkewParam::random(d_s, d_t, 0.3, rng);
  const Matrix g = random_normal(d_s, d_t, 1.0, rng);
  const Matrix analytic = method == OrthMethod::kExpm ? projector::grad_orthogonal(p, g)
                                                      : projector::grad_cayley(p, g);
  const double h = 1e-6;
  Matrix fd(d_t, d_t);
  for (std::size_t i = 0; i < p.a.size(); ++i) {
    const double saved = p.a.data()[i];
    p.a.data()[i] = saved + h;
    const double up = dot(g, projector::build_projection(p, method));
    p.a.data()[i] = saved - h;
    const double down = dot(g, projector::build_projection(p, method));
    p.a.data()[i] = saved;
    fd.data()[i] = (up - down) / (2.0 * h);
  }
  return frobenius_norm(analytic - fd) / std::max(frobenius_norm(analytic), 1e-12);
}

CheckResult worst_of(const std::string& name, double tolerance, std::size_t trials,
                     const std::function<double()>& trial) {
  CheckResult r{name, 0.0, tolerance, false};
  for (std::size_t t = 0; t < trials; ++t) r.residual = std::max(r.residual, trial());
  r.pass = std::isfinite(r.residual) && r.residual <= tolerance;
  return r;
}

}  // namespace

std::string format(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %s %.3e %.1e", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.residual, r.tolerance);
  return buf;
}

std::vector<CheckResult> run_all(std::uint64_t seed, std::size_t trials) {
  Rng rng = make_stream(seed, "check");
  std::vector<CheckResult> out;

  for (auto method : {OrthMethod::kExpm, OrthMethod::kCayley}) {
    out.push_back(worst_of("orthogonality_" + projector::to_string(method), 1e-8, trials, [&] {
      const std::size_t d_t = draw_dim(rng, 1, 64);
      const std::size_t d_s = draw_dim(rng, 1, d_t);
      const auto p = SkewParam::random(d_s, d_t, 0.1, rng);
      return projector::orthogonality_error(projector::build_projection(p, method));
    }));
  }

  out.push_back(worst_of("singular_values", 1e-7, trials, [&] {
    const std::size_t d_t = draw_dim(rng, 1, 32);
    const std::size_t d_s = draw_dim(rng, 1, d_t);
    return singular_value_error(
        projector::build_projection(SkewParam::random(d_s, d_t, 0.1, rng)));
  }));

  out.push_back(worst_of("gram_preservation", 1e-8, trials, [&] {
    const std::size_t d_t = draw_dim(rng, 2, 32);
    const std::size_t d_s = draw_dim(rng, 1, d_t);
    const Matrix z = random_normal(draw_dim(rng, 2, 32), d_s, 1.0, rng);
    const auto p = projector::build_projection(SkewParam::random(d_s, d_t, 0.1, rng));
    return objective::kernel_preservation_error(z, p);
  }));

  out.push_back(worst_of("frechet_fd", 1e-6, trials, [&] {
    const std::size_t d = draw_dim(rng, 2, 12);
    const Matrix w = projector::skew(random_normal(d, d, 0.5, rng));
    const Matrix e = random_normal(d, d, 1.0, rng);
    const double h = 1e-6;
    const Matrix fd = (1.0 / (2.0 * h)) * (linalg::expm(w + h * e) - linalg::expm(w - h * e));
    return relative_error(linalg::expm_frechet(w, e).l, fd);
  }));

  out.push_back(worst_of("frechet_block", 1e-10, trials, [&] {
    const std::size_t d = draw_dim(rng, 2, 12);
    const Matrix w = random_normal(d, d, 1.0, rng);
    const Matrix e = random_normal(d, d, 1.0, rng);
    return relative_error(linalg::expm_frechet(w, e).l, linalg::expm_frechet_block(w, e));
  }));

  out.push_back(worst_of("grad_orthogonal_fd", 1e-4, trials,
                         [&] { return skew_grad_fd_error(OrthMethod::kExpm, rng); }));
  out.push_back(worst_of("grad_cayley_fd", 1e-4, trials,
                         [&] { return skew_grad_fd_error(OrthMethod::kCayley, rng); }));

  out.push_back(worst_of("whitening_gram", 1e-3, trials, [&] {
    const Matrix z = norm::whiten(random_normal(64, 8, 1.0, rng), 1e-5);
    return frobenius_norm(linalg::matmul_tn(z, z) - Matrix::identity(8));
  }));

  out.push_back(worst_of("whitening_newton_schulz", 1e-2, trials, [&] {
    const Matrix x = random_normal(64, 8, 1.0, rng);
    return max_abs(norm::whiten(x, 1e-5, linalg::InvSqrtMethod::newton_schulz()) -
                   norm::whiten(x, 1e-5));
  }));

  // Half the trials put student column j next to teacher column j+1 so that
  // the short-pair branch of the bound is exercised as well.
  std::size_t violations = 0;
  for (std::size_t t = 0; t < 10 * trials; ++t) {
    const Matrix z_t = norm::whiten(random_normal(32, 8, 1.0, rng), 1e-5);
    Matrix z_s = random_normal(32, 8, t % 2 == 0 ? 1.0 : 0.05, rng);
    if (t % 2 == 1) {
      for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t j = 0; j < 8; ++j) z_s(r, j) += z_t(r, (j + 1) % 8);
    }
    if (!objective::diversity_bound(z_s, z_t).holds) ++violations;
  }
  out.push_back({"diversity_bound", static_cast<double>(violations), 0.0, violations == 0});
  return out;
}

}  // namespace vkd::checks
