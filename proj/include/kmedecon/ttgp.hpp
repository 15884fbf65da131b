#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "kmedecon/common.hpp"
#include "kmedecon/dme.hpp"
#include "kmedecon/kernels.hpp"
#include "kmedecon/linalg.hpp"
#include "kmedecon/optim.hpp"

namespace kmedecon {

// Task transformed GP hyperparameters. With map_g the g-posterior is
// approximated by its mode, the noise covariance collapses to sigma^2 I, and
// the predictive mean coincides with the DME estimator at lambda = sigma^2/n,
// epsilon = sigma^2/m.
struct TtgpHyper {
  KernelSpec kernel_k;
  KernelSpec kernel_l;
  double sigma2 = 0.1;
  double beta2 = 1.0;   // prior weight variance for g (parametric mode)
  double gamma2 = 1.0;  // prior weight variance for f (parametric mode)
  bool map_g = true;

  void validate() const {
    kernel_k.validate();
    kernel_l.validate();
    if (sigma2 <= 0.0 || beta2 <= 0.0 || gamma2 <= 0.0) {
      throw DomainError("TtgpHyper: variances must be positive");
    }
  }

  double implied_lambda(Eigen::Index n) const {
    return sigma2 / static_cast<double>(n);
  }
  double implied_epsilon(Eigen::Index m) const {
    return sigma2 / static_cast<double>(m);
  }
};

struct TtgpTransform {
  Matrix A;      // n x m
  Matrix Sigma;  // m x m (sigma^2 I when map_g)
};

// A = (L + sigma^2 I)^{-1} L_tilde, Sigma = Ltt + sigma^2 I - Lt^T (L + s2 I)^{-1} Lt
// (full), or Sigma = sigma^2 I under the MAP simplification for g.
inline TtgpTransform build_transform(const Points& y, const Points& y_tilde,
                                     const KernelSpec& kernel_l, double sigma2,
                                     bool map_g) {
  if (sigma2 <= 0.0) throw DomainError("build_transform: sigma2 must be positive");
  const auto m = y_tilde.rows();
  Matrix L = gram(kernel_l, y, y);
  Matrix Lt = gram(kernel_l, y, y_tilde);
  TtgpTransform out;
  out.A = reg_solve(L, sigma2, Lt);
  if (map_g) {
    out.Sigma = sigma2 * Matrix::Identity(m, m);
  } else {
    Matrix Ltt = gram(kernel_l, y_tilde, y_tilde);
    out.Sigma = Ltt - Lt.transpose() * out.A;
    out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose());  // enforce symmetry
    out.Sigma.diagonal().array() += sigma2;
  }
  return out;
}

// p(z_tilde) = N(z_tilde; 0, A^T K A + Sigma).
inline double log_marginal_nonparametric(const TaskTransformedDataset& data,
                                         const TtgpHyper& hyper) {
  data.validate();
  hyper.validate();
  TtgpTransform t =
      build_transform(data.y, data.y_tilde, hyper.kernel_l, hyper.sigma2,
                      hyper.map_g);
  Matrix K = gram(hyper.kernel_k, data.x, data.x);
  Matrix cov = t.A.transpose() * K * t.A + t.Sigma;
  cov = 0.5 * (cov + cov.transpose());
  return gaussian_logpdf(data.z_tilde, Vector::Zero(data.m()), cov);
}

// Alternative marginal likelihood, valid under map_g:
// p(z_tilde) = N(z_tilde; 0, sigma^2 [I - A^T (K A A^T + sigma^2 I)^{-1} K A]^{-1}).
// Only n x n systems are factorized; the log-determinant uses
// det(I_m - A^T B K A / ...) = det(I_n - A A^T B) via Sylvester's identity.
inline double log_marginal_alternative(const TaskTransformedDataset& data,
                                       const TtgpHyper& hyper) {
  data.validate();
  hyper.validate();
  if (!hyper.map_g) {
    throw ContractViolation("log_marginal_alternative requires map_g");
  }
  const auto n = data.n();
  const auto m = data.m();
  const double s2 = hyper.sigma2;
  TtgpTransform t =
      build_transform(data.y, data.y_tilde, hyper.kernel_l, s2, true);
  Matrix K = gram(hyper.kernel_k, data.x, data.x);
  Matrix AAt = t.A * t.A.transpose();            // n x n
  Matrix KAAt = K * AAt;                         // n x n
  // B = (K A A^T + s2 I)^{-1} K
  Matrix B = lu_reg_solve(KAAt, s2, K);
  const Vector Az = t.A * data.z_tilde;          // n
  const double ztz = data.z_tilde.squaredNorm();
  const double quad = (ztz - Az.dot(B * Az)) / s2;
  Matrix M = Matrix::Identity(n, n) - AAt * B;
  Eigen::PartialPivLU<Matrix> lu(M);
  const double detM = lu.determinant();
  if (!(detM > 0.0)) {
    throw SingularSystemError("log_marginal_alternative: nonpositive determinant");
  }
  const double logdet_cov = static_cast<double>(m) * std::log(s2) - std::log(detM);
  return -0.5 * (quad + logdet_cov +
                 static_cast<double>(m) * std::log(2.0 * std::numbers::pi));
}

// Parametric marginal likelihood in precision form:
// p(z_tilde) = N(0, [Sigma^{-1} - Sigma^{-1} A^T Phi^T C Phi A Sigma^{-1}]^{-1})
// with C = [Phi A Sigma^{-1} A^T Phi^T + I/gamma^2]^{-1} and
// A = Psi^T (Psi Psi^T + sigma^2/beta^2 I)^{-1} Psi_tilde.
inline double log_marginal_parametric(const TaskTransformedDataset& data,
                                      const FeatureMap& feature_x,
                                      const FeatureMap& feature_y,
                                      const TtgpHyper& hyper) {
  data.validate();
  hyper.validate();
  const auto m = data.m();
  const double s2 = hyper.sigma2;
  Matrix Phi = feature_matrix(feature_x, data.x);
  Matrix Psi = feature_matrix(feature_y, data.y);
  Matrix PsiT = feature_matrix(feature_y, data.y_tilde);
  Matrix PsiPsiT = Psi * Psi.transpose();
  const double reg = s2 / hyper.beta2;
  Matrix S_inv_PsiT = reg_solve(PsiPsiT, reg, PsiT);
  Matrix A = Psi.transpose() * S_inv_PsiT;  // n x m
  Matrix Sigma;
  if (hyper.map_g) {
    Sigma = s2 * Matrix::Identity(m, m);
  } else {
    Sigma = s2 * PsiT.transpose() * S_inv_PsiT;
    Sigma = 0.5 * (Sigma + Sigma.transpose());
    Sigma.diagonal().array() += s2;
  }
  PsdFactorization sig(Sigma);
  Matrix Theta = Phi * A;                                   // p x m
  Matrix SinvThT = sig.solve(Theta.transpose());            // m x p
  Matrix Cinv = Theta * SinvThT;                            // p x p
  Cinv.diagonal().array() += 1.0 / hyper.gamma2;
  Matrix C_SinvThT_T = PsdFactorization(Cinv).solve(SinvThT.transpose());
  Matrix prec = sig.solve(Matrix::Identity(m, m)) - SinvThT * C_SinvThT_T;
  prec = 0.5 * (prec + prec.transpose());
  return gaussian_logpdf_precision(data.z_tilde, prec);
}

struct TtgpPosterior {
  Vector mean;        // over query points
  Matrix covariance;  // over query points
  double log_marginal = 0.0;
};

// Predictive distribution at query points: mean (K*)^T A S^{-1} z_tilde,
// covariance K** - (K*)^T A S^{-1} A^T K*, with S = A^T K A + Sigma.
inline TtgpPosterior posterior_predict(const TaskTransformedDataset& data,
                                       const TtgpHyper& hyper,
                                       const Points& x_query) {
  data.validate();
  hyper.validate();
  if (x_query.cols() != data.x.cols()) {
    throw DimensionError("posterior_predict: query dimensionality mismatch");
  }
  TtgpTransform t = build_transform(data.y, data.y_tilde, hyper.kernel_l,
                                    hyper.sigma2, hyper.map_g);
  Matrix K = gram(hyper.kernel_k, data.x, data.x);
  Matrix S = t.A.transpose() * K * t.A + t.Sigma;
  S = 0.5 * (S + S.transpose());
  PsdFactorization sfac(S);
  Matrix Kstar = gram(hyper.kernel_k, data.x, x_query);   // n x q
  Matrix Kss = gram(hyper.kernel_k, x_query, x_query);    // q x q
  Matrix AtKstar = t.A.transpose() * Kstar;               // m x q
  Matrix Sinv_AtKstar = sfac.solve(AtKstar);
  TtgpPosterior post;
  post.mean = AtKstar.transpose() * sfac.solve(Matrix(data.z_tilde));
  post.covariance = Kss - AtKstar.transpose() * Sinv_AtKstar;
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
  post.log_marginal =
      gaussian_logpdf(data.z_tilde, Vector::Zero(data.m()), S);
  return post;
}

// --- hyperparameter learning ---------------------------------------------

// Log-space packing of the nonparametric hyperparameters:
// [log ls_k..., log sv_k, log ls_l..., log sv_l, log sigma2].
inline Vector pack_hyper(const TtgpHyper& h) {
  const auto nk = h.kernel_k.lengthscales.size();
  const auto nl = h.kernel_l.lengthscales.size();
  Vector v(nk + nl + 3);
  Eigen::Index i = 0;
  for (Eigen::Index d = 0; d < nk; ++d) v(i++) = std::log(h.kernel_k.lengthscales(d));
  v(i++) = std::log(h.kernel_k.signal_variance);
  for (Eigen::Index d = 0; d < nl; ++d) v(i++) = std::log(h.kernel_l.lengthscales(d));
  v(i++) = std::log(h.kernel_l.signal_variance);
  v(i++) = std::log(h.sigma2);
  return v;
}

inline TtgpHyper unpack_hyper(const Vector& v, const TtgpHyper& like) {
  TtgpHyper h = like;
  const auto nk = h.kernel_k.lengthscales.size();
  const auto nl = h.kernel_l.lengthscales.size();
  if (v.size() != nk + nl + 3) {
    throw DimensionError("unpack_hyper: parameter length mismatch");
  }
  Eigen::Index i = 0;
  for (Eigen::Index d = 0; d < nk; ++d) h.kernel_k.lengthscales(d) = std::exp(v(i++));
  h.kernel_k.signal_variance = std::exp(v(i++));
  for (Eigen::Index d = 0; d < nl; ++d) h.kernel_l.lengthscales(d) = std::exp(v(i++));
  h.kernel_l.signal_variance = std::exp(v(i++));
  h.sigma2 = std::exp(v(i++));
  return h;
}

struct HyperBounds {
  Vector log_lower;  // empty = unbounded
  Vector log_upper;
};

struct OptimizeHyperResult {
  TtgpHyper hyper;
  double nlml = 0.0;
  std::vector<OptimTraceEntry> trace;
};

// Maximizes the TTGP marginal likelihood over log-hyperparameters with
// Nelder-Mead. The initial point is always evaluated first, so the returned
// hyperparameters never have a lower log-marginal than the input.
inline OptimizeHyperResult optimize_hyper(const TaskTransformedDataset& data,
                                          const TtgpHyper& init,
                                          const HyperBounds& bounds,
                                          int budget,
                                          bool use_alternative = false) {
  init.validate();
  auto nlml = [&](const Vector& v) {
    TtgpHyper h = unpack_hyper(v, init);
    return use_alternative ? -log_marginal_alternative(data, h)
                           : -log_marginal_nonparametric(data, h);
  };
  NelderMeadOptions opts;
  opts.budget = budget;
  opts.lower = bounds.log_lower;
  opts.upper = bounds.log_upper;
  OptimResult r = nelder_mead(nlml, pack_hyper(init), opts);
  OptimizeHyperResult out;
  out.hyper = budget >= 1 ? unpack_hyper(r.best, init) : init;
  out.nlml = r.best_value;
  out.trace = std::move(r.trace);
  return out;
}

struct InducingResult {
  Points inducing;  // n x d
  TtgpHyper hyper;
  double nlml = 0.0;
  std::vector<OptimTraceEntry> trace;
};

// Sparse representation learning: the transformation set degenerates to
// x = y = u (inducing points) and the alternative marginal likelihood is
// minimized over the inducing locations, jointly with the hyperparameters
// unless learn_hyper is false.
inline InducingResult learn_inducing(const Points& y_tilde,
                                     const Vector& z_tilde,
                                     const Points& init_points,
                                     const TtgpHyper& hyper, int budget,
                                     bool learn_hyper = true,
                                     const HyperBounds& hyper_bounds = {},
                                     bool bound_locations = true) {
  hyper.validate();
  if (!hyper.map_g) {
    throw ContractViolation("learn_inducing requires map_g");
  }
  const auto n = init_points.rows();
  const auto d = init_points.cols();
  const Eigen::Index nu = n * d;
  const Vector hyper0 = pack_hyper(hyper);
  const Eigen::Index nh = learn_hyper ? hyper0.size() : 0;

  auto make_dataset = [&](const Points& u) {
    TaskTransformedDataset data;
    data.x = u;
    data.y = u;
    data.y_tilde = y_tilde;
    data.z_tilde = z_tilde;
    return data;
  };

  auto objective = [&](const Vector& v) {
    Points u(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) u(i, j) = v(i * d + j);
    }
    TtgpHyper h = learn_hyper ? unpack_hyper(v.tail(nh), hyper) : hyper;
    return -log_marginal_alternative(make_dataset(u), h);
  };

  Vector v0(nu + nh);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) v0(i * d + j) = init_points(i, j);
  }
  if (nh > 0) v0.tail(nh) = hyper0;

  InducingResult out;
  if (budget < 1) {
    out.inducing = init_points;
    out.hyper = hyper;
    out.nlml = -log_marginal_alternative(make_dataset(init_points), hyper);
    return out;
  }
  NelderMeadOptions opts;
  opts.budget = budget;
  const bool have_hyper_box = learn_hyper &&
                              hyper_bounds.log_lower.size() == nh &&
                              hyper_bounds.log_upper.size() == nh;
  if (bound_locations || have_hyper_box) {
    opts.lower = Vector::Constant(nu + nh,
                                  -std::numeric_limits<double>::infinity());
    opts.upper = Vector::Constant(nu + nh,
                                  std::numeric_limits<double>::infinity());
    if (bound_locations) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double lo = y_tilde.col(j).minCoeff();
        const double hi = y_tilde.col(j).maxCoeff();
        for (Eigen::Index i = 0; i < n; ++i) {
          opts.lower(i * d + j) = lo;
          opts.upper(i * d + j) = hi;
        }
      }
    }
    if (have_hyper_box) {
      opts.lower.tail(nh) = hyper_bounds.log_lower;
      opts.upper.tail(nh) = hyper_bounds.log_upper;
    }
  }
  OptimResult r = nelder_mead(objective, v0, opts);
  out.inducing.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out.inducing(i, j) = r.best(i * d + j);
  }
  out.hyper = learn_hyper ? unpack_hyper(r.best.tail(nh), hyper) : hyper;
  out.nlml = r.best_value;
  out.trace = std::move(r.trace);
  return out;
}

}  // namespace kmedecon
