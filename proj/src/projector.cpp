#include "vkd/projector.hpp"

#include <cmath>

#include "vkd/error.hpp"
#include "vkd/linalg.hpp"

namespace vkd::projector {
namespace {

using linalg::matmul;
using linalg::matmul_nt;
using linalg::matmul_tn;

// G (d_s x d_t) zero-padded to d_t x d_t.
Matrix pad_rows(const Matrix& g, std::size_t d_t) {
  Matrix out(d_t, d_t);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out(i, j) = g(i, j);
  return out;
}

void check_upstream(const SkewParam& p, const Matrix& upstream, const char* op) {
  p.validate();
  if (upstream.rows() != p.d_s || upstream.cols() != p.d_t) {
    throw ShapeError(std::string(op) + ": upstream gradient " + upstream.shape_str() +
                     " does not match projection " + std::to_string(p.d_s) + "x" +
                     std::to_string(p.d_t));
  }
}

Matrix add_bias(Matrix x, const Matrix& bias) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) += bias(0, j);
  return x;
}

Matrix column_sums(const Matrix& g) {
  Matrix s(1, g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) s(0, j) += g(i, j);
  return s;
}

void check_params(const ProjectorSpec& spec, std::span<const Matrix> params) {
  auto expect = [&](std::size_t idx, std::size_t r, std::size_t c) {
    if (params[idx].rows() != r || params[idx].cols() != c) {
      throw ShapeError("projector parameter " + std::to_string(idx) + " has shape " +
                       params[idx].shape_str() + ", expected " + std::to_string(r) + "x" +
                       std::to_string(c));
    }
  };
  switch (spec.kind) {
    case Kind::kOrthogonal:
      if (params.size() != 1) throw ShapeError("orthogonal projector takes one parameter");
      expect(0, spec.d_t, spec.d_t);
      break;
    case Kind::kLinear:
      if (params.size() != 1) throw ShapeError("linear projector takes one parameter");
      expect(0, spec.d_s, spec.d_t);
      break;
    case Kind::kMlp:
      if (params.size() != 4) throw ShapeError("mlp projector takes four parameters");
      expect(0, spec.d_s, spec.hidden());
      expect(1, 1, spec.hidden());
      expect(2, spec.hidden(), spec.d_t);
      expect(3, 1, spec.d_t);
      break;
    case Kind::kEnsemble:
      if (params.size() != spec.ensemble_n || spec.ensemble_n == 0) {
        throw ShapeError("ensemble projector takes ensemble_n >= 1 parameters");
      }
      for (std::size_t i = 0; i < params.size(); ++i) expect(i, spec.d_s, spec.d_t);
      break;
    case Kind::kSvdTarget:
      if (!params.empty()) throw ShapeError("svd_target projector has no parameters");
      break;
  }
}

}  // namespace

SkewParam SkewParam::zeros(std::size_t d_s, std::size_t d_t) {
  SkewParam p{Matrix(d_t, d_t), d_s, d_t};
  p.validate();
  return p;
}

SkewParam SkewParam::random(std::size_t d_s, std::size_t d_t, double stddev, Rng& rng) {
  SkewParam p{random_normal(d_t, d_t, stddev, rng), d_s, d_t};
  p.validate();
  return p;
}

void SkewParam::validate() const {
  if (d_s > d_t) {
    throw ConfigError("student wider than teacher unsupported (d_s=" + std::to_string(d_s) +
                      ", d_t=" + std::to_string(d_t) + ")");
  }
  if (a.rows() != d_t || a.cols() != d_t) {
    throw ShapeError("skew parameter must be " + std::to_string(d_t) + "x" + std::to_string(d_t) +
                     ", got " + a.shape_str());
  }
}

Matrix skew(const Matrix& a) {
  require_square(a, "skew");
  const std::size_t n = a.rows();
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) w(i, j) = a(i, j) - a(j, i);
  return w;
}

Matrix build_projection(const SkewParam& p, OrthMethod method) {
  p.validate();
  const Matrix w = skew(p.a);
  Matrix full;
  if (method == OrthMethod::kExpm) {
    full = linalg::expm(w);
  } else {
    // (I - W)(I + W)^{-1} = (I + W)^{-1}(I - W); I + W is never singular for
    // real skew W.
    const Matrix ident = Matrix::identity(p.d_t);
    full = linalg::solve(ident + w, ident - w);
  }
  return block(full, 0, 0, p.d_s, p.d_t);
}

Matrix project(const Matrix& z_s, const Matrix& p) {
  if (z_s.cols() != p.rows()) {
    throw ShapeError("project: features " + z_s.shape_str() + " incompatible with projection " +
                     p.shape_str());
  }
  return matmul(z_s, p);
}

Matrix grad_orthogonal(const SkewParam& p, const Matrix& upstream) {
  check_upstream(p, upstream, "grad_orthogonal");
  const Matrix g = pad_rows(upstream, p.d_t);
  const Matrix grad_w = linalg::expm_frechet(transpose(skew(p.a)), g).l;
  return grad_w - transpose(grad_w);
}

Matrix grad_cayley(const SkewParam& p, const Matrix& upstream) {
  check_upstream(p, upstream, "grad_cayley");
  const Matrix w = skew(p.a);
  const Matrix ident = Matrix::identity(p.d_t);
  const Matrix inv = linalg::solve(ident + w, ident);
  const Matrix full = matmul(inv, ident - w);
  // dP = -(I+W)^{-1} dW (P_full + I)  =>  grad_W = -(I+W)^{-T} G (P_full + I)^T
  const Matrix g = pad_rows(upstream, p.d_t);
  const Matrix grad_w = -matmul_nt(matmul_tn(inv, g), full + ident);
  return grad_w - transpose(grad_w);
}

double orthogonality_error(const Matrix& p) {
  Matrix gram = matmul_nt(p, p);
  for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) -= 1.0;
  return frobenius_norm(gram);
}

Matrix svd_teacher_target(const Matrix& z_t, std::size_t rank) {
  const std::size_t b = z_t.rows();
  const std::size_t d = z_t.cols();
  if (rank > std::min(b, d)) {
    throw ConfigError("svd target rank " + std::to_string(rank) + " exceeds min(b, d_t) = " +
                      std::to_string(std::min(b, d)));
  }
  Matrix centred = z_t;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < b; ++i) mean += z_t(i, j);
    mean /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) centred(i, j) -= mean;
  }
  const linalg::SymEig eig = linalg::sym_eig(matmul_tn(centred, centred));
  Matrix basis(d, rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t src = d - 1 - k;  // eigenvalues ascending
    for (std::size_t i = 0; i < d; ++i) basis(i, k) = eig.eigenvectors(i, src);
  }
  return matmul(centred, basis);
}

Kind parse_kind(const std::string& name) {
  if (name == "orthogonal") return Kind::kOrthogonal;
  if (name == "linear") return Kind::kLinear;
  if (name == "mlp") return Kind::kMlp;
  if (name == "ensemble") return Kind::kEnsemble;
  if (name == "svd_target" || name == "svd") return Kind::kSvdTarget;
  throw ConfigError("unknown projector '" + name + "'", ConfigError::Kind::kBadValue);
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::kOrthogonal:
      return "orthogonal";
    case Kind::kLinear:
      return "linear";
    case Kind::kMlp:
      return "mlp";
    case Kind::kEnsemble:
      return "ensemble";
    case Kind::kSvdTarget:
      return "svd_target";
  }
  return "orthogonal";
}

OrthMethod parse_method(const std::string& name) {
  if (name == "expm") return OrthMethod::kExpm;
  if (name == "cayley") return OrthMethod::kCayley;
  throw ConfigError("unknown orthogonal method '" + name + "'", ConfigError::Kind::kBadValue);
}

std::string to_string(OrthMethod method) {
  return method == OrthMethod::kExpm ? "expm" : "cayley";
}

std::vector<Matrix> init_params(const ProjectorSpec& spec, Rng& rng) {
  if (spec.d_s > spec.d_t) {
    throw ConfigError("student wider than teacher unsupported (d_s=" + std::to_string(spec.d_s) +
                      ", d_t=" + std::to_string(spec.d_t) + ")");
  }
  // Baselines use the usual U(-1/sqrt(fan_in), 1/sqrt(fan_in)) linear-layer init.
  auto uniform = [&](std::size_t r, std::size_t c, std::size_t fan_in) {
    Matrix m(r, c);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    fill_uniform(m, -bound, bound, rng);
    return m;
  };
  std::vector<Matrix> params;
  switch (spec.kind) {
    case Kind::kOrthogonal:
      params.push_back(random_normal(spec.d_t, spec.d_t, spec.init_stddev, rng));
      break;
    case Kind::kLinear:
      params.push_back(uniform(spec.d_s, spec.d_t, spec.d_s));
      break;
    case Kind::kMlp:
      params.push_back(uniform(spec.d_s, spec.hidden(), spec.d_s));
      params.push_back(uniform(1, spec.hidden(), spec.d_s));
      params.push_back(uniform(spec.hidden(), spec.d_t, spec.hidden()));
      params.push_back(uniform(1, spec.d_t, spec.hidden()));
      break;
    case Kind::kEnsemble:
      for (std::size_t i = 0; i < spec.ensemble_n; ++i)
        params.push_back(uniform(spec.d_s, spec.d_t, spec.d_s));
      break;
    case Kind::kSvdTarget:
      if (spec.rank() != spec.d_s) {
        throw ConfigError("svd_target needs rank == d_s so student features match the target");
      }
      break;
  }
  return params;
}

Matrix forward_baseline(const ProjectorSpec& spec, std::span<const Matrix> params,
                        const Matrix& z_s) {
  check_params(spec, params);
  if (z_s.cols() != spec.d_s) {
    throw ShapeError("projector input " + z_s.shape_str() + " does not have d_s = " +
                     std::to_string(spec.d_s) + " columns");
  }
  switch (spec.kind) {
    case Kind::kLinear:
      return matmul(z_s, params[0]);
    case Kind::kMlp: {
      Matrix h = add_bias(matmul(z_s, params[0]), params[1]);
      for (double& v : h.data()) v = activate(spec.mlp_activation, v);
      return add_bias(matmul(h, params[2]), params[3]);
    }
    case Kind::kEnsemble: {
      Matrix out(z_s.rows(), spec.d_t);
      for (const Matrix& p : params) out += matmul(z_s, p);
      out *= 1.0 / static_cast<double>(params.size());
      return out;
    }
    default:
      throw ConfigError("forward_baseline: " + to_string(spec.kind) + " is not a baseline");
  }
}

Projector::Projector(ProjectorSpec spec, std::vector<Matrix> params)
    : spec_(spec), params_(std::move(params)) {
  check_params(spec_, params_);
}

SkewParam Projector::skew_param() const { return SkewParam{params_[0], spec_.d_s, spec_.d_t}; }

Matrix Projector::forward(const Matrix& z_s) const {
  switch (spec_.kind) {
    case Kind::kOrthogonal:
      return project(z_s, build_projection(skew_param(), spec_.method));
    case Kind::kSvdTarget:
      if (z_s.cols() != spec_.d_s) throw ShapeError("svd_target: bad student feature width");
      return z_s;
    default:
      return forward_baseline(spec_, params_, z_s);
  }
}

Backward Projector::backward(const Matrix& z_s, const Matrix& grad_out) const {
  Backward out;
  switch (spec_.kind) {
    case Kind::kOrthogonal: {
      const SkewParam sp = skew_param();
      const Matrix grad_p = matmul_tn(z_s, grad_out);
      if (spec_.method == OrthMethod::kExpm) {
        // One combined evaluation: exp(W^T) = exp(W)^T comes out alongside
        // L(W^T, G), so P is not rebuilt here.
        const auto fr = linalg::expm_frechet(transpose(skew(sp.a)), pad_rows(grad_p, sp.d_t));
        const Matrix p = block(transpose(fr.expw), 0, 0, sp.d_s, sp.d_t);
        out.grad_input = matmul_nt(grad_out, p);
        out.grad_params.push_back(fr.l - transpose(fr.l));
      } else {
        out.grad_input = matmul_nt(grad_out, build_projection(sp, spec_.method));
        out.grad_params.push_back(grad_cayley(sp, grad_p));
      }
      break;
    }
    case Kind::kLinear:
      out.grad_input = matmul_nt(grad_out, params_[0]);
      out.grad_params.push_back(matmul_tn(z_s, grad_out));
      break;
    case Kind::kMlp: {
      const Matrix pre = add_bias(matmul(z_s, params_[0]), params_[1]);
      Matrix h = pre;
      for (double& v : h.data()) v = activate(spec_.mlp_activation, v);
      const Matrix grad_w2 = matmul_tn(h, grad_out);
      const Matrix grad_b2 = column_sums(grad_out);
      Matrix grad_h = matmul_nt(grad_out, params_[2]);
      for (std::size_t i = 0; i < grad_h.size(); ++i)
        grad_h.data()[i] *= activate_grad(spec_.mlp_activation, pre.data()[i]);
      out.grad_input = matmul_nt(grad_h, params_[0]);
      out.grad_params.push_back(matmul_tn(z_s, grad_h));
      out.grad_params.push_back(column_sums(grad_h));
      out.grad_params.push_back(grad_w2);
      out.grad_params.push_back(grad_b2);
      break;
    }
    case Kind::kEnsemble: {
      const double inv_n = 1.0 / static_cast<double>(params_.size());
      const Matrix shared = inv_n * matmul_tn(z_s, grad_out);
      out.grad_input = Matrix(z_s.rows(), z_s.cols());
      for (const Matrix& p : params_) {
        out.grad_input += matmul_nt(grad_out, p);
        out.grad_params.push_back(shared);
      }
      out.grad_input *= inv_n;
      break;
    }
    case Kind::kSvdTarget:
      out.grad_input = grad_out;
      break;
  }
  return out;
}

Matrix Projector::prepare_target(const Matrix& z_t) const {
  if (spec_.kind == Kind::kSvdTarget) return svd_teacher_target(z_t, spec_.rank());
  return z_t;
}

Matrix Projector::linear_map() const {
  switch (spec_.kind) {
    case Kind::kOrthogonal:
      return build_projection(skew_param(), spec_.method);
    case Kind::kLinear:
      return params_[0];
    case Kind::kEnsemble: {
      Matrix mean(spec_.d_s, spec_.d_t);
      for (const Matrix& p : params_) mean += p;
      mean *= 1.0 / static_cast<double>(params_.size());
      return mean;
    }
    default:
      return {};
  }
}

}  // namespace vkd::projector
