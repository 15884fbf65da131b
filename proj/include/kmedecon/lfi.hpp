#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "kmedecon/common.hpp"
#include "kmedecon/kernels.hpp"
#include "kmedecon/linalg.hpp"
#include "kmedecon/optim.hpp"

namespace kmedecon {

// Likelihood-free inference problem: recover the posterior over simulator
// parameters theta given an observed summary y, simulation pairs
// {theta_i, x_i}, prior samples {theta_tilde_j}, and a query grid.
struct LfiProblem {
  Vector observed_summary;  // y
  Points sim_theta;         // n x d_theta
  Points sim_summary;       // n x d_x
  Points prior_theta;       // m x d_theta
  Points query_grid;        // R x d_theta
  KernelSpec kernel_k;      // on summaries (gaussian, lengthscale epsilon)
  KernelSpec kernel_l;      // on parameters
  KernelSpec kernel_lprime; // herding kernel on parameters
  double lambda = 1e-3;
  double delta = 1e-3;      // regularizer for the deconditional inverse

  Eigen::Index n() const { return sim_theta.rows(); }
  Eigen::Index m() const { return prior_theta.rows(); }
  Eigen::Index R() const { return query_grid.rows(); }

  void validate() const {
    if (n() == 0 || m() == 0 || R() == 0) {
      throw DimensionError("LfiProblem: empty component");
    }
    if (sim_theta.rows() != sim_summary.rows()) {
      throw DimensionError("LfiProblem: simulation pairs misaligned");
    }
    if (sim_theta.cols() != prior_theta.cols() ||
        sim_theta.cols() != query_grid.cols()) {
      throw DimensionError("LfiProblem: theta dimensionality mismatch");
    }
    if (sim_summary.cols() != observed_summary.size()) {
      throw DimensionError("LfiProblem: summary dimensionality mismatch");
    }
  }

  Matrix transformation() const {
    Matrix L = gram(kernel_l, sim_theta, sim_theta);
    Matrix Lt = gram(kernel_l, sim_theta, prior_theta);
    return reg_solve(L, static_cast<double>(n()) * lambda, Lt);
  }
};

// Posterior embedding over the query grid:
// mu = (L_tilde_star)^T A^T [K A A^T + m*delta*I]^{-1} k(y).
inline Vector lfi_embedding(const LfiProblem& p,
                            bool allow_degenerate = false) {
  p.validate();
  if ((p.lambda <= 0.0 || p.delta <= 0.0) && !allow_degenerate) {
    throw DomainError("lfi_embedding: lambda and delta must be positive");
  }
  Matrix A = p.transformation();  // n x m
  Matrix K = gram(p.kernel_k, p.sim_summary, p.sim_summary);
  Matrix KAAt = K * (A * A.transpose());
  Vector ky = gram_vector(p.kernel_k, p.sim_summary, p.observed_summary);
  Vector v = lu_reg_solve(KAAt, static_cast<double>(p.m()) * p.delta, ky);
  Matrix LtStar = gram(p.kernel_l, p.prior_theta, p.query_grid);  // m x R
  Vector mu = LtStar.transpose() * (A.transpose() * v);
  if (!mu.allFinite()) {
    throw SingularSystemError("lfi_embedding: non-finite embedding");
  }
  return mu;
}

struct HerdingResult {
  Points super_samples;              // S x d_theta, rows are grid points
  std::vector<Eigen::Index> chosen_indices;
  Vector accumulator;                // final a vector over the grid
};

// Kernel herding on the embedding: at step s pick the grid point maximizing
// mu_r - a_r / s, then accumulate the herding-kernel column of the choice.
// Ties break on the lowest grid index.
inline HerdingResult kernel_herding(const Vector& mu, const Points& grid,
                                    const KernelSpec& kernel_lprime,
                                    Eigen::Index S) {
  if (S < 1) throw DomainError("kernel_herding: S must be >= 1");
  if (mu.size() != grid.rows()) {
    throw DimensionError("kernel_herding: mu length != grid size");
  }
  if (!mu.allFinite()) {
    throw DimensionError("kernel_herding: non-finite embedding entry");
  }
  const Eigen::Index R = grid.rows();
  Matrix Lp = gram(kernel_lprime, grid, grid);
  HerdingResult out;
  out.super_samples.resize(S, grid.cols());
  out.chosen_indices.reserve(S);
  Vector a = Vector::Zero(R);
  for (Eigen::Index s = 1; s <= S; ++s) {
    Eigen::Index best = 0;
    double best_val = mu(0) - a(0) / static_cast<double>(s);
    for (Eigen::Index r = 1; r < R; ++r) {
      const double val = mu(r) - a(r) / static_cast<double>(s);
      if (val > best_val) {
        best_val = val;
        best = r;
      }
    }
    out.chosen_indices.push_back(best);
    out.super_samples.row(s - 1) = grid.row(best);
    a += Lp.col(best);
  }
  out.accumulator = a;
  return out;
}

// Approximate marginal likelihood q_bar = (1/m) kappa_eps^T A 1_m, the
// hyperparameter-learning objective. kappa_eps is the normalized gaussian
// kernel evaluated between the observed summary and each simulated summary.
inline double approx_marginal_likelihood(const LfiProblem& p,
                                         bool allow_degenerate = false) {
  p.validate();
  if (p.lambda <= 0.0 && !allow_degenerate) {
    throw DomainError("approx_marginal_likelihood: lambda must be positive");
  }
  if (p.kernel_k.family != KernelFamily::Gaussian ||
      p.kernel_k.lengthscales.size() != 1) {
    throw DomainError("approx_marginal_likelihood: k must be isotropic gaussian");
  }
  const double eps = p.kernel_k.lengthscales(0);
  Vector kappa(p.n());
  for (Eigen::Index i = 0; i < p.n(); ++i) {
    kappa(i) = normalized_gaussian(eps, p.observed_summary, p.sim_summary.row(i));
  }
  Matrix A = p.transformation();
  return kappa.dot(A * Vector::Ones(p.m())) / static_cast<double>(p.m());
}

struct LfiHyperResult {
  KernelSpec kernel_k;
  KernelSpec kernel_l;
  double lambda = 0.0;
  double delta = 0.0;
  double q_bar = 0.0;
  std::vector<OptimTraceEntry> trace;
};

// Maximizes q_bar over the kernel lengthscales and, optionally, lambda;
// delta is then set by the proxy delta = (n/m) * lambda. The initial point is
// evaluated first, so the result never has lower q_bar than the input.
// Unconstrained search over lambda is degenerate (q_bar diverges as
// lambda -> 0), so callers usually fix lambda and bound the lengthscales.
inline LfiHyperResult learn_lfi_hyper(const LfiProblem& problem, int budget,
                                      bool learn_lambda = true,
                                      const Vector& log_lower = Vector(),
                                      const Vector& log_upper = Vector()) {
  problem.validate();
  if (budget < 1) throw DomainError("learn_lfi_hyper: budget must be >= 1");
  const auto nl = problem.kernel_l.lengthscales.size();
  const Eigen::Index np = 1 + nl + (learn_lambda ? 1 : 0);
  auto unpack = [&](const Vector& v) {
    LfiProblem p = problem;
    p.kernel_k.lengthscales = Vector::Constant(1, std::exp(v(0)));
    for (Eigen::Index d = 0; d < nl; ++d) {
      p.kernel_l.lengthscales(d) = std::exp(v(1 + d));
    }
    if (learn_lambda) p.lambda = std::exp(v(1 + nl));
    return p;
  };
  auto objective = [&](const Vector& v) {
    return -approx_marginal_likelihood(unpack(v));
  };
  Vector v0(np);
  v0(0) = std::log(problem.kernel_k.lengthscales(0));
  for (Eigen::Index d = 0; d < nl; ++d) {
    v0(1 + d) = std::log(problem.kernel_l.lengthscales(d));
  }
  if (learn_lambda) v0(1 + nl) = std::log(problem.lambda);
  NelderMeadOptions opts;
  opts.budget = budget;
  if (log_lower.size() == np && log_upper.size() == np) {
    opts.lower = log_lower;
    opts.upper = log_upper;
  }
  OptimResult r = nelder_mead(objective, v0, opts);
  LfiProblem best = unpack(r.best);
  LfiHyperResult out;
  out.kernel_k = best.kernel_k;
  out.kernel_l = best.kernel_l;
  out.lambda = learn_lambda ? best.lambda : problem.lambda;
  out.delta = out.lambda * static_cast<double>(problem.n()) /
              static_cast<double>(problem.m());
  out.q_bar = -r.best_value;
  out.trace = std::move(r.trace);
  return out;
}

// --- exponential-gamma benchmark ------------------------------------------

// Sample mean of n_obs exponential(rate theta) draws; the summary statistic.
inline double exp_gamma_simulate(double theta, int n_obs, unsigned seed) {
  if (theta <= 0.0) throw DomainError("exp_gamma_simulate: theta must be positive");
  if (n_obs < 1) throw DomainError("exp_gamma_simulate: n_obs must be >= 1");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expd(theta);
  double sum = 0.0;
  for (int i = 0; i < n_obs; ++i) sum += expd(rng);
  return sum / static_cast<double>(n_obs);
}

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;

  double mean() const { return shape / rate; }
};

// Conjugate update: Gamma(a0, b0) prior with n_obs exponential observations
// summing to sum_x gives Gamma(a0 + n_obs, b0 + sum_x).
inline GammaParams exp_gamma_true_posterior(double alpha0, double beta0,
                                            int n_obs, double sum_x) {
  if (alpha0 <= 0.0 || beta0 <= 0.0) {
    throw DomainError("exp_gamma_true_posterior: prior parameters must be positive");
  }
  if (n_obs < 0 || sum_x < 0.0) {
    throw DomainError("exp_gamma_true_posterior: invalid data summary");
  }
  return {alpha0 + static_cast<double>(n_obs), beta0 + sum_x};
}

struct ExpGammaConfig {
  double alpha0 = 1.0;      // prior Gamma shape
  double beta0 = 1.0;       // prior Gamma rate
  double theta_true = 2.0;  // rate generating the observed data
  int n_obs = 50;           // observations behind each summary
  Eigen::Index grid_size = 512;
  double lengthscale_l = 0.5;
  double epsilon = 0.05;    // lengthscale of k / width of kappa_eps
  double lambda = 1e-3;
};

inline double gamma_draw(double shape, double rate, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(shape, 1.0 / rate);
  return g(rng);
}

// Self-contained exponential-gamma LFI problem: simulations on prior-drawn
// parameters, fresh prior samples, and a uniform query grid spanning the
// prior samples expanded 10% each side.
inline LfiProblem build_exp_gamma_problem(Eigen::Index n, Eigen::Index m,
                                          const ExpGammaConfig& cfg,
                                          unsigned seed) {
  std::mt19937_64 rng(seed);
  LfiProblem p;
  p.observed_summary.resize(1);
  p.observed_summary(0) =
      exp_gamma_simulate(cfg.theta_true, cfg.n_obs, static_cast<unsigned>(rng()));
  p.sim_theta.resize(n, 1);
  p.sim_summary.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double theta = gamma_draw(cfg.alpha0, cfg.beta0, rng);
    p.sim_theta(i, 0) = theta;
    p.sim_summary(i, 0) =
        exp_gamma_simulate(theta, cfg.n_obs, static_cast<unsigned>(rng()));
  }
  p.prior_theta.resize(m, 1);
  for (Eigen::Index j = 0; j < m; ++j) {
    p.prior_theta(j, 0) = gamma_draw(cfg.alpha0, cfg.beta0, rng);
  }
  const double lo = p.prior_theta.col(0).minCoeff();
  const double hi = p.prior_theta.col(0).maxCoeff();
  const double pad = 0.1 * (hi - lo);
  p.query_grid.resize(cfg.grid_size, 1);
  for (Eigen::Index r = 0; r < cfg.grid_size; ++r) {
    p.query_grid(r, 0) =
        lo - pad + (hi - lo + 2.0 * pad) * static_cast<double>(r) /
                       static_cast<double>(cfg.grid_size - 1);
  }
  p.kernel_k = KernelSpec::gaussian(cfg.epsilon);
  p.kernel_l = KernelSpec::gaussian(cfg.lengthscale_l);
  p.kernel_lprime = p.kernel_l;
  p.lambda = cfg.lambda;
  p.delta = cfg.lambda * static_cast<double>(n) / static_cast<double>(m);
  return p;
}

// Regularized lower incomplete gamma P(a, x) by series/continued fraction.
inline double gamma_cdf(const GammaParams& g, double x) {
  if (x <= 0.0) return 0.0;
  const double a = g.shape;
  const double xr = x * g.rate;
  const double log_gamma_a = std::lgamma(a);
  if (xr < a + 1.0) {
    // series expansion
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 500; ++k) {
      term *= xr / (a + k);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    return sum * std::exp(-xr + a * std::log(xr) - log_gamma_a);
  }
  // continued fraction for Q(a, x)
  double b = xr + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  const double q = h * std::exp(-xr + a * std::log(xr) - log_gamma_a);
  return 1.0 - q;
}

}  // namespace kmedecon
