#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "kmedecon/common.hpp"
#include "kmedecon/dme.hpp"
#include "kmedecon/gpr.hpp"

namespace kmedecon {

// Synthetic task transformed regression data. The mediating map r is chosen
// non-invertible on [-6, 6] so that p(y|x) is multimodal, and f is a bumpy
// latent target:
//   r(y) = sin(0.75 y),   f(x) = x sin(3x) + x^2 / 2,
//   X_i = r(Y_i) + eta_i, Z_tilde_j = f(r(Y_tilde_j) + eta_j) + xi_j,
//   Y ~ U(-6, 6), noises N(0, noise_sd^2).
inline double ttr_mediating_map(double y) { return std::sin(0.75 * y); }

inline double ttr_latent_function(double x) {
  return x * std::sin(3.0 * x) + 0.5 * x * x;
}

struct SyntheticTtrDataset {
  TaskTransformedDataset data;
  std::function<double(double)> ground_truth_f;
  std::function<double(double)> mediating_r;
  unsigned seed = 0;
  double noise_sd = 0.25;
};

inline SyntheticTtrDataset generate_ttr(Eigen::Index n, Eigen::Index m,
                                        unsigned seed, double noise_sd = 0.25,
                                        bool noiseless = false) {
  if (n < 1 || m < 1) throw DomainError("generate_ttr: n, m must be >= 1");
  if (noise_sd <= 0.0 && !noiseless) {
    throw DomainError("generate_ttr: noise_sd must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uy(-6.0, 6.0);
  std::normal_distribution<double> noise(0.0, noiseless ? 0.0 : noise_sd);

  SyntheticTtrDataset out;
  out.seed = seed;
  out.noise_sd = noise_sd;
  out.ground_truth_f = ttr_latent_function;
  out.mediating_r = ttr_mediating_map;
  out.data.x.resize(n, 1);
  out.data.y.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = uy(rng);
    out.data.y(i, 0) = y;
    out.data.x(i, 0) = ttr_mediating_map(y) + (noiseless ? 0.0 : noise(rng));
  }
  out.data.y_tilde.resize(m, 1);
  out.data.z_tilde.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double y = uy(rng);
    out.data.y_tilde(j, 0) = y;
    const double x = ttr_mediating_map(y) + (noiseless ? 0.0 : noise(rng));
    out.data.z_tilde(j) =
        ttr_latent_function(x) + (noiseless ? 0.0 : noise(rng));
  }
  return out;
}

// Cascade baseline: GP-mean X->Y composed with GP-mean Y->Z, each tuned by
// its own marginal likelihood. Struggles when p(y|x) is multimodal.
struct CascadePredictor {
  GprModel x_to_y;
  GprModel y_to_z;

  Vector predict(const Eigen::Ref<const Points>& x_query) const {
    Vector y_hat = x_to_y.predict(x_query);
    Points yq(y_hat.size(), 1);
    yq.col(0) = y_hat;
    return y_to_z.predict(yq);
  }
};

inline CascadePredictor cascade_baseline(const TaskTransformedDataset& data,
                                         double init_lengthscale = 1.0,
                                         double init_sigma2 = 0.05,
                                         int budget = 120) {
  data.validate();
  CascadePredictor p{
      gpr_fit_tuned(data.x, data.y.col(0), KernelSpec::gaussian(init_lengthscale),
                    init_sigma2, budget),
      gpr_fit_tuned(data.y_tilde, data.z_tilde,
                    KernelSpec::gaussian(init_lengthscale), init_sigma2, budget)};
  return p;
}

// Impute baseline: GP Y->Z predicts fake targets at the transformation y's,
// then a GP X->Z is trained on (x, z_fake).
inline GprModel impute_baseline(const TaskTransformedDataset& data,
                                double init_lengthscale = 1.0,
                                double init_sigma2 = 0.05, int budget = 120) {
  data.validate();
  GprModel y_to_z =
      gpr_fit_tuned(data.y_tilde, data.z_tilde,
                    KernelSpec::gaussian(init_lengthscale), init_sigma2, budget);
  Vector z_fake = y_to_z.predict(data.y);
  return gpr_fit_tuned(data.x, z_fake, KernelSpec::gaussian(init_lengthscale),
                       init_sigma2, budget);
}

// Toy process for the sparse-representation experiment: a function that is
// exactly a GP posterior mean anchored at 5 fixed points, observed with
// N(0, 0.1^2) noise on uniformly sampled inputs.
struct ToyGpProcess {
  Points y_tilde;   // m x 1 inputs
  Vector z_tilde;   // m noisy targets
  Points anchors;   // 5 x 1
  Vector anchor_values;
  KernelSpec kernel;
  Vector anchor_weights;  // dual weights defining the true mean function
};

inline double toy_gp_mean(const ToyGpProcess& p, double y) {
  Vector q(1);
  q << y;
  return p.anchor_weights.dot(gram_vector(p.kernel, p.anchors, q));
}

inline ToyGpProcess toy_gp_process(Eigen::Index m, unsigned seed,
                                   bool noiseless = false) {
  if (m < 5) throw DomainError("toy_gp_process: m must be >= 5");
  ToyGpProcess p;
  p.anchors.resize(5, 1);
  p.anchors << -4.0, -2.0, 0.5, 2.5, 4.5;
  p.anchor_values.resize(5);
  p.anchor_values << -1.0, 1.5, 0.5, -0.8, 1.2;
  p.kernel = KernelSpec::gaussian(1.2);
  // The true function interpolates the anchor values exactly.
  Matrix G = gram(p.kernel, p.anchors, p.anchors);
  p.anchor_weights = PsdFactorization(G).solve(p.anchor_values);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uy(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, noiseless ? 0.0 : 0.1);
  p.y_tilde.resize(m, 1);
  p.z_tilde.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double y = uy(rng);
    p.y_tilde(j, 0) = y;
    p.z_tilde(j) = toy_gp_mean(p, y) + (noiseless ? 0.0 : noise(rng));
  }
  return p;
}

}  // namespace kmedecon
