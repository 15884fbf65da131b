#pragma once

#include <cmath>
#include <memory>
#include <numbers>

#include "kmedecon/common.hpp"
#include "kmedecon/kernels.hpp"
#include "kmedecon/linalg.hpp"
#include "kmedecon/optim.hpp"

namespace kmedecon {

// Plain GP regression mean (kernel ridge) used by the cascade and impute
// baselines. Not part of the deconditional machinery.
class GprModel {
 public:
  static GprModel fit(const Points& x, const Vector& z,
                      const KernelSpec& kernel, double sigma2) {
    if (x.rows() != z.size() || x.rows() == 0) {
      throw DimensionError("GprModel::fit: shape mismatch");
    }
    if (sigma2 <= 0.0) throw DomainError("GprModel::fit: sigma2 must be positive");
    GprModel m;
    m.anchors_ = x;
    m.kernel_ = kernel;
    m.sigma2_ = sigma2;
    Matrix K = gram(kernel, x, x);
    K.diagonal().array() += sigma2;
    PsdFactorization chol(K);
    m.alpha_ = chol.solve(z);
    const auto n = static_cast<double>(x.rows());
    m.log_marginal_ = -0.5 * (z.dot(m.alpha_) + chol.logdet() +
                              n * std::log(2.0 * std::numbers::pi));
    return m;
  }

  double predict_one(const Eigen::Ref<const Vector>& x) const {
    return alpha_.dot(gram_vector(kernel_, anchors_, x));
  }

  Vector predict(const Eigen::Ref<const Points>& x_query) const {
    Vector out(x_query.rows());
    for (Eigen::Index i = 0; i < x_query.rows(); ++i) {
      out(i) = predict_one(x_query.row(i));
    }
    return out;
  }

  double log_marginal() const { return log_marginal_; }
  const KernelSpec& kernel() const { return kernel_; }
  double sigma2() const { return sigma2_; }

 private:
  Points anchors_;
  KernelSpec kernel_;
  double sigma2_ = 0.0;
  Vector alpha_;
  double log_marginal_ = 0.0;
};

// Fit a GP regressor with marginal-likelihood-tuned gaussian kernel
// hyperparameters (lengthscale, signal variance) and noise.
inline GprModel gpr_fit_tuned(const Points& x, const Vector& z,
                              const KernelSpec& init_kernel,
                              double init_sigma2, int budget = 120) {
  auto objective = [&](const Vector& v) {
    KernelSpec k = init_kernel;
    k.lengthscales = Vector::Constant(1, std::exp(v(0)));
    k.signal_variance = std::exp(v(1));
    return -GprModel::fit(x, z, k, std::exp(v(2))).log_marginal();
  };
  Vector v0(3);
  v0 << std::log(init_kernel.lengthscales(0)),
      std::log(init_kernel.signal_variance), std::log(init_sigma2);
  NelderMeadOptions opts;
  opts.budget = budget;
  OptimResult r = nelder_mead(objective, v0, opts);
  KernelSpec k = init_kernel;
  k.lengthscales = Vector::Constant(1, std::exp(r.best(0)));
  k.signal_variance = std::exp(r.best(1));
  return GprModel::fit(x, z, k, std::exp(r.best(2)));
}

}  // namespace kmedecon
