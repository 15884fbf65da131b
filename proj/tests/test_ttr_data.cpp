#include <doctest.h>

#include <cmath>

#include <kmedecon/ttr_data.hpp>

#include "oracles.hpp"

using namespace kmedecon;

TEST_CASE("noiseless generation follows the generative maps exactly") {
  auto d = generate_ttr(40, 30, 5, 0.25, true);
  for (Eigen::Index i = 0; i < 40; ++i) {
    CHECK(d.data.x(i, 0) ==
          doctest::Approx(ttr_mediating_map(d.data.y(i, 0))).epsilon(1e-14));
  }
  for (Eigen::Index j = 0; j < 30; ++j) {
    const double x = ttr_mediating_map(d.data.y_tilde(j, 0));
    CHECK(d.data.z_tilde(j) ==
          doctest::Approx(ttr_latent_function(x)).epsilon(1e-14));
  }
}

TEST_CASE("noise level is recovered empirically") {
  auto d = generate_ttr(20000, 10, 11);
  Vector resid(20000);
  for (Eigen::Index i = 0; i < 20000; ++i) {
    resid(i) = d.data.x(i, 0) - ttr_mediating_map(d.data.y(i, 0));
  }
  const double mean = resid.mean();
  const double sd = std::sqrt((resid.array() - mean).square().mean());
  CHECK(sd >= 0.2);
  CHECK(sd <= 0.3);
  CHECK(std::abs(mean) <= 0.01);
}

TEST_CASE("mediating inputs cover the uniform support") {
  auto d = generate_ttr(5000, 5000, 17);
  CHECK(d.data.y.minCoeff() >= -6.0);
  CHECK(d.data.y.maxCoeff() <= 6.0);
  CHECK(d.data.y.minCoeff() <= -5.5);
  CHECK(d.data.y.maxCoeff() >= 5.5);
  CHECK(d.data.y_tilde.minCoeff() >= -6.0);
  CHECK(d.data.y_tilde.maxCoeff() <= 6.0);
}

TEST_CASE("generation is deterministic in the seed") {
  auto a = generate_ttr(50, 40, 23);
  auto b = generate_ttr(50, 40, 23);
  auto c = generate_ttr(50, 40, 24);
  CHECK(a.data.x == b.data.x);
  CHECK(a.data.z_tilde == b.data.z_tilde);
  CHECK(a.data.x != c.data.x);
}

TEST_CASE("generation rejects invalid arguments") {
  CHECK_THROWS_AS(generate_ttr(0, 5, 1), DomainError);
  CHECK_THROWS_AS(generate_ttr(5, 5, 1, 0.0), DomainError);
}

TEST_CASE("cascade baseline recovers an easy invertible composition") {
  // y = 2x, z = y^2 / 4 + 1: both stages are smooth and unimodal
  const int n = 60, m = 60;
  TaskTransformedDataset d;
  d.x.resize(n, 1);
  d.y.resize(n, 1);
  d.y_tilde.resize(m, 1);
  d.z_tilde.resize(m);
  for (int i = 0; i < n; ++i) {
    d.x(i, 0) = -2.0 + 4.0 * i / (n - 1);
    d.y(i, 0) = 2.0 * d.x(i, 0);
  }
  for (int j = 0; j < m; ++j) {
    d.y_tilde(j, 0) = -4.0 + 8.0 * j / (m - 1);
    d.z_tilde(j) = 0.25 * d.y_tilde(j, 0) * d.y_tilde(j, 0) + 1.0;
  }
  auto cascade = cascade_baseline(d, 1.0, 1e-4, 80);
  Points probe(5, 1);
  probe << -1.5, -0.5, 0.0, 0.5, 1.5;
  Vector pred = cascade.predict(probe);
  for (int i = 0; i < 5; ++i) {
    const double truth = probe(i, 0) * probe(i, 0) + 1.0;
    CHECK(std::abs(pred(i) - truth) <= 0.1);
  }
}

TEST_CASE("impute baseline produces finite deterministic predictions") {
  auto d = generate_ttr(80, 80, 31);
  auto model_a = impute_baseline(d.data, 1.0, 0.05, 60);
  auto model_b = impute_baseline(d.data, 1.0, 0.05, 60);
  Points probe(7, 1);
  probe << -1.0, -0.6, -0.2, 0.0, 0.3, 0.7, 1.0;
  Vector pa = model_a.predict(probe);
  Vector pb = model_b.predict(probe);
  CHECK(pa.allFinite());
  CHECK(pa == pb);
}

TEST_CASE("toy process interpolates its anchors") {
  auto p = toy_gp_process(20, 3);
  for (int i = 0; i < 5; ++i) {
    CHECK(toy_gp_mean(p, p.anchors(i, 0)) ==
          doctest::Approx(p.anchor_values(i)).epsilon(1e-9));
  }
}

TEST_CASE("noiseless toy process targets lie on the mean function") {
  auto p = toy_gp_process(50, 7, true);
  for (Eigen::Index j = 0; j < 50; ++j) {
    CHECK(p.z_tilde(j) ==
          doctest::Approx(toy_gp_mean(p, p.y_tilde(j, 0))).epsilon(1e-12));
  }
}

TEST_CASE("toy process noise magnitude and validation") {
  auto p = toy_gp_process(20000, 13);
  Vector resid(20000);
  for (Eigen::Index j = 0; j < 20000; ++j) {
    resid(j) = p.z_tilde(j) - toy_gp_mean(p, p.y_tilde(j, 0));
  }
  const double sd = std::sqrt(resid.array().square().mean());
  CHECK(sd >= 0.08);
  CHECK(sd <= 0.12);
  CHECK_THROWS_AS(toy_gp_process(4, 1), DomainError);
}
