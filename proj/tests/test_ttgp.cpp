#include <doctest.h>

#include <cmath>

#include <kmedecon/ttgp.hpp>

#include "oracles.hpp"

using namespace kmedecon;

namespace {

TaskTransformedDataset random_dataset(int n, int m, unsigned seed) {
  TaskTransformedDataset d;
  d.x = oracles::random_points(n, 1, seed);
  d.y = oracles::random_points(n, 1, seed + 1);
  d.y_tilde = oracles::random_points(m, 1, seed + 2);
  d.z_tilde = oracles::random_vector(m, seed + 3);
  return d;
}

TaskTransformedDataset scalar_dataset(double z) {
  TaskTransformedDataset d;
  d.x = Points::Zero(1, 1);
  d.y = Points::Zero(1, 1);
  d.y_tilde = Points::Zero(1, 1);
  d.z_tilde = Vector::Constant(1, z);
  return d;
}

TtgpHyper unit_hyper(bool map_g) {
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1e8);  // all gram entries effectively 1
  h.kernel_l = KernelSpec::gaussian(1e8);
  h.sigma2 = 1.0;
  h.map_g = map_g;
  return h;
}

}  // namespace

TEST_CASE("scalar hand case: transform and marginal") {
  auto d = scalar_dataset(0.0);
  auto t_full = build_transform(d.y, d.y_tilde, unit_hyper(false).kernel_l,
                                1.0, false);
  CHECK(t_full.A(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(t_full.Sigma(0, 0) == doctest::Approx(1.5).epsilon(1e-9));
  auto t_map =
      build_transform(d.y, d.y_tilde, unit_hyper(true).kernel_l, 1.0, true);
  CHECK(t_map.Sigma(0, 0) == doctest::Approx(1.0));

  // map covariance A^T K A + sigma^2 = 1.25
  CHECK(log_marginal_nonparametric(d, unit_hyper(true)) ==
        doctest::Approx(-1.0305103089).epsilon(1e-8));
  CHECK(log_marginal_alternative(d, unit_hyper(true)) ==
        doctest::Approx(-1.0305103089).epsilon(1e-8));
}

TEST_CASE("scalar hand case: posterior mean and variance") {
  auto d = scalar_dataset(1.0);
  auto post = posterior_predict(d, unit_hyper(true), Points::Zero(1, 1));
  CHECK(post.mean(0) == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(post.covariance(0, 0) == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("alternative marginal matches the standard one") {
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(0.8);
  h.sigma2 = 0.2;
  for (unsigned seed = 0; seed < 10; ++seed) {
    const int n = 5 + static_cast<int>(seed % 4);
    const int m = 8 + static_cast<int>(seed % 6);
    TaskTransformedDataset d = random_dataset(n, m, 10 * seed);
    const double std_lm = log_marginal_nonparametric(d, h);
    const double alt_lm = log_marginal_alternative(d, h);
    CHECK(std::abs(std_lm - alt_lm) <= 1e-6 * (1.0 + std::abs(std_lm)));
  }
}

TEST_CASE("alternative marginal requires the map simplification") {
  TtgpHyper h = unit_hyper(false);
  CHECK_THROWS_AS(log_marginal_alternative(scalar_dataset(0.0), h),
                  ContractViolation);
}

TEST_CASE("parametric and kernel-form marginals agree") {
  auto fx = FeatureMap::polynomial_explicit(1, 2);
  auto fy = FeatureMap::polynomial_explicit(1, 2);
  for (bool map_g : {true, false}) {
    for (unsigned seed = 0; seed < 10; ++seed) {
      TaskTransformedDataset d =
          random_dataset(6 + static_cast<int>(seed % 3),
                         9 + static_cast<int>(seed % 4), 200 + 10 * seed);
      TtgpHyper h;
      h.kernel_k = fx.induced_kernel();
      h.kernel_l = fy.induced_kernel();
      h.kernel_k.signal_variance = 0.7;  // gamma^2
      h.kernel_l.signal_variance = 1.3;  // beta^2
      h.sigma2 = 0.3;
      h.beta2 = 1.3;
      h.gamma2 = 0.7;
      h.map_g = map_g;
      const double kernel_lm = log_marginal_nonparametric(d, h);
      const double param_lm = log_marginal_parametric(d, fx, fy, h);
      CHECK(std::abs(kernel_lm - param_lm) <=
            1e-6 * (1.0 + std::abs(kernel_lm)));
    }
  }
}

TEST_CASE("predictive mean equals the deconditional estimator") {
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(0.8);
  h.sigma2 = 0.2;
  h.map_g = true;
  for (unsigned seed = 0; seed < 5; ++seed) {
    TaskTransformedDataset d = random_dataset(7, 11, 300 + 10 * seed);
    Points probe = oracles::random_points(6, 1, 301 + 10 * seed);
    auto post = posterior_predict(d, h, probe);
    auto dme = dme_fit(d, h.kernel_k, h.kernel_l, h.implied_lambda(d.n()),
                       h.implied_epsilon(d.m()), DmeForm::Standard);
    Vector mean_dme = dme.predict(probe);
    CHECK((post.mean - mean_dme).cwiseAbs().maxCoeff() <=
          1e-8 * (1.0 + mean_dme.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("predictive covariance stays positive semidefinite") {
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(1.0);
  h.sigma2 = 0.1;
  for (bool map_g : {true, false}) {
    h.map_g = map_g;
    for (unsigned seed = 0; seed < 5; ++seed) {
      TaskTransformedDataset d = random_dataset(6, 9, 400 + 10 * seed);
      Points probe = oracles::random_points(8, 1, 401 + 10 * seed);
      auto post = posterior_predict(d, h, probe);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(post.covariance);
      const double max_e = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * max_e);
    }
  }
}

TEST_CASE("marginal invariant under permutation of task pairs") {
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(1.0);
  h.sigma2 = 0.2;
  TaskTransformedDataset d = random_dataset(6, 9, 500);
  const double base = log_marginal_nonparametric(d, h);
  TaskTransformedDataset p = d;
  std::vector<int> idx = {4, 0, 8, 2, 6, 1, 7, 3, 5};
  for (int j = 0; j < 9; ++j) {
    p.y_tilde.row(j) = d.y_tilde.row(idx[static_cast<size_t>(j)]);
    p.z_tilde(j) = d.z_tilde(idx[static_cast<size_t>(j)]);
  }
  CHECK(std::abs(log_marginal_nonparametric(p, h) - base) <= 1e-10);
  CHECK(std::abs(log_marginal_alternative(p, h) -
                 log_marginal_alternative(d, h)) <= 1e-10);
}

TEST_CASE("hyperparameter search never regresses and is deterministic") {
  TtgpHyper init;
  init.kernel_k = KernelSpec::gaussian(3.0);
  init.kernel_l = KernelSpec::gaussian(3.0);
  init.sigma2 = 1.0;
  TaskTransformedDataset d = random_dataset(8, 12, 600);
  const double init_lm = log_marginal_nonparametric(d, init);
  HyperBounds bounds;
  auto r1 = optimize_hyper(d, init, bounds, 150);
  auto r2 = optimize_hyper(d, init, bounds, 150);
  CHECK(log_marginal_nonparametric(d, r1.hyper) >= init_lm - 1e-12);
  CHECK(r1.nlml == r2.nlml);
  CHECK(pack_hyper(r1.hyper) == pack_hyper(r2.hyper));
  CHECK(!r1.trace.empty());
}

TEST_CASE("hyperparameter search on a single point keeps a good init") {
  TaskTransformedDataset d = scalar_dataset(0.0);
  TtgpHyper init = unit_hyper(true);
  const double init_lm = log_marginal_nonparametric(d, init);
  auto r = optimize_hyper(d, init, HyperBounds{}, 40);
  CHECK(log_marginal_nonparametric(d, r.hyper) >= init_lm - 1e-12);
}

TEST_CASE("inducing-point learning: zero budget returns the init") {
  Points yt = oracles::random_points(20, 1, 700);
  Vector zt = oracles::random_vector(20, 701);
  Points u0 = oracles::random_points(4, 1, 702);
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(1.0);
  h.sigma2 = 0.2;
  auto r = learn_inducing(yt, zt, u0, h, 0);
  CHECK(r.inducing == u0);
  CHECK(pack_hyper(r.hyper) == pack_hyper(h));
}

TEST_CASE("inducing-point learning improves the objective") {
  Points yt = oracles::random_points(30, 1, 710);
  Vector zt(30);
  for (int j = 0; j < 30; ++j) zt(j) = std::sin(1.3 * yt(j, 0));
  Points u0 = oracles::random_points(4, 1, 712);
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(1.0);
  h.sigma2 = 0.1;
  auto r0 = learn_inducing(yt, zt, u0, h, 0);
  auto r = learn_inducing(yt, zt, u0, h, 250);
  CHECK(r.nlml <= r0.nlml + 1e-12);
}

TEST_CASE("full inducing set reproduces the dense deconditional mean") {
  Points yt = oracles::random_points(9, 1, 720);
  Vector zt = oracles::random_vector(9, 721);
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(1.0);
  h.kernel_l = KernelSpec::gaussian(1.0);
  h.sigma2 = 0.2;
  auto r = learn_inducing(yt, zt, yt, h, 0);
  TaskTransformedDataset d{r.inducing, r.inducing, yt, zt};
  Points probe = oracles::random_points(7, 1, 722);
  auto post = posterior_predict(d, h, probe);
  auto dme = dme_fit(d, h.kernel_k, h.kernel_l, h.implied_lambda(d.n()),
                     h.implied_epsilon(d.m()), DmeForm::Woodbury);
  CHECK((post.mean - dme.predict(probe)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("pack and unpack round trip") {
  TtgpHyper h;
  h.kernel_k = KernelSpec::gaussian(0.7, 1.4);
  h.kernel_l = KernelSpec::gaussian(2.2, 0.3);
  h.sigma2 = 0.05;
  TtgpHyper back = unpack_hyper(pack_hyper(h), h);
  CHECK(back.kernel_k.lengthscales(0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(back.kernel_k.signal_variance == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(back.kernel_l.lengthscales(0) == doctest::Approx(2.2).epsilon(1e-12));
  CHECK(back.sigma2 == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS(unpack_hyper(Vector::Zero(2), h), DimensionError);
}
