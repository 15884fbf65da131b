#pragma once

#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kmedecon/common.hpp"
#include "kmedecon/dme.hpp"
#include "kmedecon/embeddings.hpp"
#include "kmedecon/io.hpp"
#include "kmedecon/lfi.hpp"
#include "kmedecon/ttgp.hpp"
#include "kmedecon/ttr_data.hpp"

namespace kmedecon {

struct RunContext {
  std::filesystem::path out_dir = "out";
  unsigned seed = 0;
  bool dry_run = false;
  double perturb = 0.0;  // equivalence suite fault injection on alpha
};

namespace detail {

inline Points linspace_points(double lo, double hi, Eigen::Index count) {
  if (count < 2) throw ConfigError("probe grid needs at least 2 points");
  Points p(count, 1);
  for (Eigen::Index i = 0; i < count; ++i) {
    p(i, 0) = lo + (hi - lo) * static_cast<double>(i) /
                       static_cast<double>(count - 1);
  }
  return p;
}

inline double rmse(const Vector& a, const Vector& b) {
  return std::sqrt((a - b).array().square().mean());
}

inline void require_experiment(const Json& config, const std::string& expected) {
  const std::string got = get_string(config, "experiment", "config");
  if (got != expected) {
    throw ConfigError("config \"experiment\" is \"" + got + "\", expected \"" +
                      expected + "\"");
  }
}

inline void write_manifest(const Json& config, const RunContext& ctx,
                           const std::string& subcommand,
                           double wall_seconds) {
  Json m;
  m["subcommand"] = subcommand;
  m["seed"] = ctx.seed;
  m["config_hash"] = hex64(fnv1a64(config.dump()));
  m["wall_time_seconds"] = wall_seconds;
  write_text(ctx.out_dir / "manifest.json", m.dump(2) + "\n");
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

inline TtgpHyper hyper_from_config(const Json& config, const std::string& ctx) {
  TtgpHyper h;
  h.kernel_k = kernel_from_json(require_key(config, "kernel_k", ctx), ctx + ".kernel_k");
  h.kernel_l = kernel_from_json(require_key(config, "kernel_l", ctx), ctx + ".kernel_l");
  h.sigma2 = get_double(config, "sigma2_init", ctx);
  h.map_g = true;
  return h;
}

inline Matrix trace_to_matrix(const std::vector<OptimTraceEntry>& trace) {
  if (trace.empty()) return Matrix(0, 2);
  const auto d = trace.front().params.size();
  Matrix rows(static_cast<Eigen::Index>(trace.size()), d + 2);
  for (size_t i = 0; i < trace.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    rows(r, 0) = trace[i].eval_index;
    rows(r, d + 1) = trace[i].value;
    for (Eigen::Index j = 0; j < d; ++j) rows(r, 1 + j) = trace[i].params(j);
  }
  return rows;
}

inline std::vector<std::string> trace_header(Eigen::Index d,
                                             const std::string& value_name) {
  std::vector<std::string> h = {"eval_index"};
  for (Eigen::Index j = 0; j < d; ++j) h.push_back("log_param_" + std::to_string(j));
  h.push_back(value_name);
  return h;
}

}  // namespace detail

// --- task transformed regression (multimodal toy) ---------------------------

namespace detail {

// Natural-scale [lower, upper] pairs for the packed hyperparameters
// [ls_k, sv_k, ls_l, sv_l, sigma2], converted to the log-space box.
inline HyperBounds bounds_from_config(const Json& config,
                                      const std::string& ctx) {
  const std::vector<double> lo_default = {0.2, 0.05, 0.3, 0.05, 0.01};
  const std::vector<double> hi_default = {5.0, 5.0, 10.0, 5.0, 1.0};
  auto read = [&](const char* key, const std::vector<double>& dflt) {
    auto it = config.find(key);
    std::vector<double> vals = dflt;
    if (it != config.end()) {
      if (!it->is_array() || it->size() != 5) {
        throw ConfigError(ctx + ": \"" + key + "\" must be an array of 5 numbers");
      }
      vals = it->get<std::vector<double>>();
    }
    Vector v(5);
    for (int i = 0; i < 5; ++i) {
      if (vals[static_cast<size_t>(i)] <= 0.0) {
        throw ConfigError(ctx + ": \"" + key + "\" entries must be positive");
      }
      v(i) = std::log(vals[static_cast<size_t>(i)]);
    }
    return v;
  };
  HyperBounds b;
  b.log_lower = read("bounds_lower", lo_default);
  b.log_upper = read("bounds_upper", hi_default);
  return b;
}

}  // namespace detail

inline int run_ttr(const Json& config, const RunContext& ctx) {
  const std::string c = "ttr config";
  check_keys(config,
             {"experiment", "n", "m", "noise_sd", "probe_points", "probe_min",
              "probe_max", "kernel_k", "kernel_l", "sigma2_init", "budget",
              "baseline_budget", "bounds_lower", "bounds_upper",
              "restart_lengthscales_k", "restart_sigma2"},
             c);
  detail::require_experiment(config, "ttr");
  const long n = get_int(config, "n", c);
  const long m = get_int(config, "m", c);
  const double noise_sd = get_double_or(config, "noise_sd", 0.25, c);
  const long probe_points = get_int_or(config, "probe_points", 200, c);
  const double probe_min = get_double_or(config, "probe_min", -1.2, c);
  const double probe_max = get_double_or(config, "probe_max", 1.2, c);
  const long budget = get_int_or(config, "budget", 150, c);
  const long baseline_budget = get_int_or(config, "baseline_budget", 120, c);
  TtgpHyper init = detail::hyper_from_config(config, c);
  HyperBounds bounds = detail::bounds_from_config(config, c);
  std::vector<double> restart_lsk = {0.3, 1.0};
  std::vector<double> restart_s2 = {0.0625, 0.3};
  if (auto it = config.find("restart_lengthscales_k"); it != config.end()) {
    restart_lsk = it->get<std::vector<double>>();
  }
  if (auto it = config.find("restart_sigma2"); it != config.end()) {
    restart_s2 = it->get<std::vector<double>>();
  }
  if (n < 1 || m < 1 || budget < 1) {
    throw ConfigError(c + ": n, m, budget must be positive");
  }
  if (ctx.dry_run) return 0;

  detail::WallClock clock;
  auto synth = generate_ttr(n, m, ctx.seed, noise_sd);
  Points probe = detail::linspace_points(probe_min, probe_max, probe_points);

  auto post_init = posterior_predict(synth.data, init, probe);
  // restarted search: the configured init plus a small deterministic grid of
  // kernel-k lengthscales and noise levels
  auto learned = optimize_hyper(synth.data, init, bounds,
                                static_cast<int>(budget));
  for (double lsk : restart_lsk) {
    for (double s2 : restart_s2) {
      TtgpHyper h0 = init;
      h0.kernel_k = KernelSpec::gaussian(lsk);
      h0.kernel_l = KernelSpec::gaussian(1.0);
      h0.sigma2 = s2;
      auto r = optimize_hyper(synth.data, h0, bounds, static_cast<int>(budget));
      if (r.nlml < learned.nlml) learned = std::move(r);
    }
  }
  auto post_learned = posterior_predict(synth.data, learned.hyper, probe);
  auto cascade = cascade_baseline(synth.data, 1.0, 0.05,
                                  static_cast<int>(baseline_budget));
  auto impute = impute_baseline(synth.data, 1.0, 0.05,
                                static_cast<int>(baseline_budget));

  Vector f_true(probe.rows());
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    f_true(i) = ttr_latent_function(probe(i, 0));
  }
  Vector sd_init = post_init.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  Vector sd_learned =
      post_learned.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  Vector pred_cascade = cascade.predict(probe);
  Vector pred_impute = impute.predict(probe);

  Matrix rows(probe.rows(), 8);
  rows.col(0) = probe.col(0);
  rows.col(1) = f_true;
  rows.col(2) = post_init.mean;
  rows.col(3) = sd_init;
  rows.col(4) = post_learned.mean;
  rows.col(5) = sd_learned;
  rows.col(6) = pred_cascade;
  rows.col(7) = pred_impute;
  write_csv(ctx.out_dir / "ttr_probe.csv",
            {"x", "f_true", "dme_init_mean", "dme_init_sd", "dme_learned_mean",
             "dme_learned_sd", "cascade", "impute"},
            rows);
  write_csv(ctx.out_dir / "ttr_nlml_trace.csv",
            detail::trace_header(pack_hyper(init).size(), "nlml"),
            detail::trace_to_matrix(learned.trace));

  Json metrics;
  metrics["rmse_dme_init"] = detail::rmse(post_init.mean, f_true);
  metrics["rmse_dme_learned"] = detail::rmse(post_learned.mean, f_true);
  metrics["rmse_cascade"] = detail::rmse(pred_cascade, f_true);
  metrics["rmse_impute"] = detail::rmse(pred_impute, f_true);
  metrics["nlml_init"] = -log_marginal_nonparametric(synth.data, init);
  metrics["nlml_learned"] = learned.nlml;
  write_text(ctx.out_dir / "ttr_metrics.json", metrics.dump(2) + "\n");
  detail::write_manifest(config, ctx, "ttr", clock.seconds());
  return 0;
}

// --- sparse representation learning ------------------------------------------

inline int run_sparse(const Json& config, const RunContext& ctx) {
  const std::string c = "sparse config";
  check_keys(config,
             {"experiment", "m", "n_inducing", "budget", "restarts", "kernel_k",
              "kernel_l", "sigma2_init", "probe_points", "probe_min",
              "probe_max", "bounds_lower", "bounds_upper"},
             c);
  detail::require_experiment(config, "sparse");
  const long m = get_int(config, "m", c);
  const long n_inducing = get_int(config, "n_inducing", c);
  const long budget = get_int_or(config, "budget", 400, c);
  const long restarts = get_int_or(config, "restarts", 5, c);
  if (restarts < 1) throw ConfigError(c + ": restarts must be positive");
  const HyperBounds hyper_bounds = detail::bounds_from_config(config, c);
  const long probe_points = get_int_or(config, "probe_points", 200, c);
  const double probe_min = get_double_or(config, "probe_min", -5.0, c);
  const double probe_max = get_double_or(config, "probe_max", 5.0, c);
  TtgpHyper hyper = detail::hyper_from_config(config, c);
  if (m < 5 || n_inducing < 1 || n_inducing > m) {
    throw ConfigError(c + ": need m >= 5 and 1 <= n_inducing <= m");
  }
  if (ctx.dry_run) return 0;

  detail::WallClock clock;
  auto process = toy_gp_process(m, ctx.seed);
  std::mt19937_64 rng(ctx.seed + 1);
  std::uniform_real_distribution<double> u(process.y_tilde.minCoeff(),
                                           process.y_tilde.maxCoeff());
  auto draw_init = [&] {
    Points pts(n_inducing, 1);
    for (Eigen::Index i = 0; i < n_inducing; ++i) pts(i, 0) = u(rng);
    return pts;
  };
  Points u0 = draw_init();

  auto at_init = learn_inducing(process.y_tilde, process.z_tilde, u0, hyper, 0);
  auto joint = learn_inducing(process.y_tilde, process.z_tilde, u0, hyper,
                              static_cast<int>(budget), true, hyper_bounds);
  auto fixed = learn_inducing(process.y_tilde, process.z_tilde, u0, hyper,
                              static_cast<int>(budget), false);
  for (long r = 1; r < restarts; ++r) {
    Points ur = draw_init();
    auto joint_r = learn_inducing(process.y_tilde, process.z_tilde, ur, hyper,
                                  static_cast<int>(budget), true, hyper_bounds);
    if (joint_r.nlml < joint.nlml) joint = std::move(joint_r);
    auto fixed_r = learn_inducing(process.y_tilde, process.z_tilde, ur, hyper,
                                  static_cast<int>(budget), false);
    if (fixed_r.nlml < fixed.nlml) fixed = std::move(fixed_r);
  }

  Points probe = detail::linspace_points(probe_min, probe_max, probe_points);
  auto predict_with = [&](const Points& pts, const TtgpHyper& h) {
    TaskTransformedDataset d{pts, pts, process.y_tilde, process.z_tilde};
    return posterior_predict(d, h, probe).mean;
  };
  Vector truth(probe.rows());
  for (Eigen::Index i = 0; i < probe.rows(); ++i) {
    truth(i) = toy_gp_mean(process, probe(i, 0));
  }

  Matrix rows(probe.rows(), 5);
  rows.col(0) = probe.col(0);
  rows.col(1) = truth;
  rows.col(2) = predict_with(u0, hyper);
  rows.col(3) = predict_with(joint.inducing, joint.hyper);
  rows.col(4) = predict_with(fixed.inducing, fixed.hyper);
  write_csv(ctx.out_dir / "sparse_probe.csv",
            {"y", "true_mean", "pred_random", "pred_learned_joint",
             "pred_learned_fixed"},
            rows);

  Matrix locs(n_inducing, 4);
  locs.col(0) = Vector::LinSpaced(n_inducing, 0, static_cast<double>(n_inducing - 1));
  locs.col(1) = u0.col(0);
  locs.col(2) = joint.inducing.col(0);
  locs.col(3) = fixed.inducing.col(0);
  write_csv(ctx.out_dir / "sparse_inducing.csv",
            {"index", "random", "learned_joint", "learned_fixed"}, locs);
  write_csv(ctx.out_dir / "sparse_nlml_trace.csv",
            detail::trace_header(
                n_inducing + pack_hyper(hyper).size(), "nlml"),
            detail::trace_to_matrix(joint.trace));

  Json metrics;
  metrics["nlml_random"] = at_init.nlml;
  metrics["nlml_learned_joint"] = joint.nlml;
  metrics["nlml_learned_fixed"] = fixed.nlml;
  metrics["rmse_random"] = detail::rmse(rows.col(2), truth);
  metrics["rmse_learned_joint"] = detail::rmse(rows.col(3), truth);
  metrics["rmse_learned_fixed"] = detail::rmse(rows.col(4), truth);
  write_text(ctx.out_dir / "sparse_metrics.json", metrics.dump(2) + "\n");
  detail::write_manifest(config, ctx, "sparse", clock.seconds());
  return 0;
}

// --- likelihood-free inference -----------------------------------------------

inline int run_lfi(const Json& config, const RunContext& ctx) {
  const std::string c = "lfi config";
  check_keys(config,
             {"experiment", "n", "m", "S", "grid_size", "alpha0", "beta0",
              "theta_true", "n_obs", "epsilon", "lengthscale_l", "lambda",
              "learn_hyper", "budget", "histogram_bins"},
             c);
  detail::require_experiment(config, "lfi");
  const long n = get_int(config, "n", c);
  const long m = get_int(config, "m", c);
  const long S = get_int(config, "S", c);
  ExpGammaConfig eg;
  eg.grid_size = get_int_or(config, "grid_size", 512, c);
  eg.alpha0 = get_double_or(config, "alpha0", 1.0, c);
  eg.beta0 = get_double_or(config, "beta0", 1.0, c);
  eg.theta_true = get_double_or(config, "theta_true", 2.0, c);
  eg.n_obs = static_cast<int>(get_int(config, "n_obs", c));
  eg.epsilon = get_double_or(config, "epsilon", 0.05, c);
  eg.lengthscale_l = get_double_or(config, "lengthscale_l", 0.5, c);
  eg.lambda = get_double_or(config, "lambda", 1e-3, c);
  const bool learn = get_bool_or(config, "learn_hyper", false, c);
  const long budget = get_int_or(config, "budget", 150, c);
  const long bins = get_int_or(config, "histogram_bins", 40, c);
  if (n < 2 || m < 2 || S < 1 || eg.grid_size < 2 || bins < 1) {
    throw ConfigError(c + ": sizes must be positive");
  }
  if (ctx.dry_run) return 0;

  detail::WallClock clock;
  LfiProblem problem = build_exp_gamma_problem(n, m, eg, ctx.seed);

  Matrix qbar_rows;
  std::vector<std::string> qbar_header;
  if (learn) {
    // lambda stays fixed: q_bar diverges as lambda -> 0, so only the kernel
    // lengthscales are searched, inside a moderate box
    Vector log_lo(2), log_hi(2);
    log_lo << std::log(0.02), std::log(0.05);
    log_hi << std::log(0.5), std::log(2.0);
    auto tuned =
        learn_lfi_hyper(problem, static_cast<int>(budget), false, log_lo, log_hi);
    problem.kernel_k = tuned.kernel_k;
    problem.kernel_l = tuned.kernel_l;
    problem.kernel_lprime = tuned.kernel_l;
    problem.lambda = tuned.lambda;
    problem.delta = tuned.delta;
    qbar_rows = detail::trace_to_matrix(tuned.trace);
    // the optimizer minimizes -q_bar; report q_bar itself
    qbar_rows.col(qbar_rows.cols() - 1) = -qbar_rows.col(qbar_rows.cols() - 1);
    qbar_header = detail::trace_header(qbar_rows.cols() - 2, "q_bar");
  } else {
    qbar_rows.resize(1, 2);
    qbar_rows << 1.0, approx_marginal_likelihood(problem);
    qbar_header = {"eval_index", "q_bar"};
  }
  write_csv(ctx.out_dir / "lfi_qbar_trace.csv", qbar_header, qbar_rows);

  Vector mu = lfi_embedding(problem);
  auto herd = kernel_herding(mu, problem.query_grid, problem.kernel_lprime, S);

  Matrix samples(S, 2);
  for (Eigen::Index s = 0; s < S; ++s) {
    samples(s, 0) = static_cast<double>(s);
    samples(s, 1) = herd.super_samples(s, 0);
  }
  write_csv(ctx.out_dir / "lfi_super_samples.csv", {"sample_index", "theta"},
            samples);

  const double lo = problem.query_grid.minCoeff();
  const double hi = problem.query_grid.maxCoeff();
  const double width = (hi - lo) / static_cast<double>(bins);
  Matrix hist(bins, 3);
  for (long b = 0; b < bins; ++b) {
    const double left = lo + width * static_cast<double>(b);
    const double right = left + width;
    long count = 0;
    for (Eigen::Index s = 0; s < S; ++s) {
      const double t = herd.super_samples(s, 0);
      if (t >= left && (t < right || (b == bins - 1 && t <= right))) ++count;
    }
    hist(b, 0) = 0.5 * (left + right);
    hist(b, 1) = static_cast<double>(count);
    hist(b, 2) = static_cast<double>(count) /
                 (static_cast<double>(S) * width);
  }
  write_csv(ctx.out_dir / "lfi_histogram.csv",
            {"bin_center", "count", "density"}, hist);

  GammaParams post = exp_gamma_true_posterior(
      eg.alpha0, eg.beta0, eg.n_obs, eg.n_obs * problem.observed_summary(0));
  const double herded_mean = herd.super_samples.col(0).mean();
  double cdf_mae = 0.0;
  for (Eigen::Index r = 0; r < problem.R(); ++r) {
    const double g = problem.query_grid(r, 0);
    long below = 0;
    for (Eigen::Index s = 0; s < S; ++s) {
      if (herd.super_samples(s, 0) <= g) ++below;
    }
    const double empirical = static_cast<double>(below) / static_cast<double>(S);
    cdf_mae += std::abs(empirical - gamma_cdf(post, g));
  }
  cdf_mae /= static_cast<double>(problem.R());

  Json metrics;
  metrics["q_bar"] = approx_marginal_likelihood(problem);
  metrics["herded_posterior_mean"] = herded_mean;
  metrics["analytic_posterior_mean"] = post.mean();
  metrics["analytic_posterior_shape"] = post.shape;
  metrics["analytic_posterior_rate"] = post.rate;
  metrics["posterior_mean_relative_error"] =
      std::abs(herded_mean - post.mean()) / post.mean();
  metrics["cdf_mae"] = cdf_mae;
  metrics["lambda"] = problem.lambda;
  metrics["delta"] = problem.delta;
  metrics["epsilon"] = problem.kernel_k.lengthscales(0);
  metrics["lengthscale_l"] = problem.kernel_l.lengthscales(0);
  write_text(ctx.out_dir / "lfi_metrics.json", metrics.dump(2) + "\n");
  detail::write_manifest(config, ctx, "lfi", clock.seconds());
  return 0;
}

// --- equivalence suite ---------------------------------------------------

struct EquivalenceCheck {
  std::string name;
  double tolerance = 0.0;
  double max_deviation = 0.0;

  bool pass() const { return max_deviation <= tolerance; }
};

inline std::vector<EquivalenceCheck> equivalence_checks(int seeds,
                                                        double perturb) {
  auto kk = KernelSpec::gaussian(1.0);
  auto kl = KernelSpec::gaussian(0.8);
  std::vector<EquivalenceCheck> checks;
  EquivalenceCheck woodbury{"dme_standard_vs_woodbury", 1e-8, 0.0};
  EquivalenceCheck trick{"kernel_trick_parametric_vs_kernel", 1e-8, 0.0};
  EquivalenceCheck marg{"ttgp_standard_vs_alternative_marginal", 1e-6, 0.0};
  EquivalenceCheck pmarg{"ttgp_parametric_vs_kernel_marginal", 1e-6, 0.0};
  EquivalenceCheck mean{"ttgp_mean_vs_dme", 1e-8, 0.0};
  EquivalenceCheck chain{"chained_loss_gradient_at_minimizer", 1e-5, 0.0};
  EquivalenceCheck reduction{"dmo_degenerate_vs_reverse_cme", 1e-6, 0.0};
  EquivalenceCheck kbr{"kbr_degenerate_vs_reverse_cme", 1e-6, 0.0};

  auto fx = FeatureMap::polynomial_explicit(1, 2);
  auto fy = FeatureMap::polynomial_explicit(1, 2);

  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(1000 + seed));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const int n = 8 + seed % 5;
    const int md = 12 + seed % 7;
    TaskTransformedDataset d;
    d.x.resize(n, 1);
    d.y.resize(n, 1);
    d.y_tilde.resize(md, 1);
    d.z_tilde.resize(md);
    for (int i = 0; i < n; ++i) {
      d.x(i, 0) = u(rng);
      d.y(i, 0) = u(rng);
    }
    for (int j = 0; j < md; ++j) {
      d.y_tilde(j, 0) = u(rng);
      d.z_tilde(j) = u(rng);
    }
    Points probe(6, 1);
    for (int i = 0; i < 6; ++i) probe(i, 0) = u(rng);

    auto standard = dme_fit(d, kk, kl, 0.05, 0.05, DmeForm::Standard);
    auto wood = dme_fit(d, kk, kl, 0.05, 0.05, DmeForm::Woodbury);
    Vector ps = standard.predict(probe);
    Vector pw = wood.predict(probe);
    if (perturb != 0.0) pw.array() += perturb;
    const double scale = 1.0 + ps.cwiseAbs().maxCoeff();
    woodbury.max_deviation = std::max(
        woodbury.max_deviation, (ps - pw).cwiseAbs().maxCoeff() / scale);

    auto parametric = parametric_dme_fit(d, fx, fy, 0.05, 0.05);
    auto kernelized = dme_fit(d, fx.induced_kernel(), fy.induced_kernel(),
                              0.05, 0.05, DmeForm::Standard);
    Vector pp = parametric.predict(probe);
    Vector pk = kernelized.predict(probe);
    trick.max_deviation =
        std::max(trick.max_deviation,
                 (pp - pk).cwiseAbs().maxCoeff() /
                     (1.0 + pp.cwiseAbs().maxCoeff()));

    TtgpHyper h;
    h.kernel_k = kk;
    h.kernel_l = kl;
    h.sigma2 = 0.2;
    marg.max_deviation = std::max(
        marg.max_deviation, std::abs(log_marginal_nonparametric(d, h) -
                                     log_marginal_alternative(d, h)));
    TtgpHyper hp;
    hp.kernel_k = fx.induced_kernel();
    hp.kernel_l = fy.induced_kernel();
    hp.sigma2 = 0.3;
    pmarg.max_deviation = std::max(
        pmarg.max_deviation,
        std::abs(log_marginal_nonparametric(d, hp) -
                 log_marginal_parametric(d, fx, fy, hp)));

    auto post = posterior_predict(d, h, probe);
    auto mapped = dme_fit(d, h.kernel_k, h.kernel_l, h.implied_lambda(d.n()),
                          h.implied_epsilon(d.m()), DmeForm::Standard);
    mean.max_deviation = std::max(
        mean.max_deviation, (post.mean - mapped.predict(probe))
                                    .cwiseAbs()
                                    .maxCoeff() /
                                (1.0 + post.mean.cwiseAbs().maxCoeff()));

    const Vector& w = parametric.w_bar();
    const double hstep = 1e-6;
    Vector grad(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Vector wp = w, wm = w;
      wp(i) += hstep;
      wm(i) -= hstep;
      grad(i) = (chained_loss(d, fx, fy, 0.05, 0.05, wp) -
                 chained_loss(d, fx, fy, 0.05, 0.05, wm)) /
                (2.0 * hstep);
    }
    chain.max_deviation = std::max(chain.max_deviation, grad.norm());
  }

  // degenerate reductions on a fixed well-conditioned instance
  {
    const int n = 6;
    Points x(n, 1), y(n, 1);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.5 * i;
      y(i, 0) = -2.0 + 0.9 * i;
    }
    const double eps = 0.05;
    Matrix K = gram(kk, x, x);
    Matrix Kreg = K;
    Kreg.diagonal().array() += n * eps;
    Matrix cme_w = Kreg.lu().solve(Matrix::Identity(n, n));
    Matrix dmo = dmo_weights(x, y, y, kk, kl, 1e-12, eps);
    reduction.max_deviation = (dmo - cme_w).cwiseAbs().maxCoeff();
    for (auto variant : {KbrVariant::A1, KbrVariant::B1}) {
      auto model = kbr_fit(x, y, y, kk, kl, 1e-12, eps, variant);
      kbr.max_deviation = std::max(
          kbr.max_deviation,
          (model.weight_matrix() - cme_w).cwiseAbs().maxCoeff());
    }
    const double eps2 = 1e-9;
    Matrix Kreg2 = K;
    Kreg2.diagonal().array() += n * eps2;
    Matrix cme_w2 = Kreg2.lu().solve(Matrix::Identity(n, n));
    for (auto variant : {KbrVariant::A2, KbrVariant::B2}) {
      auto model = kbr_fit(x, y, y, kk, kl, 1e-12, eps2, variant);
      kbr.max_deviation = std::max(
          kbr.max_deviation,
          (model.weight_matrix() - cme_w2).cwiseAbs().maxCoeff());
    }
  }

  checks.push_back(woodbury);
  checks.push_back(trick);
  checks.push_back(marg);
  checks.push_back(pmarg);
  checks.push_back(mean);
  checks.push_back(chain);
  checks.push_back(reduction);
  checks.push_back(kbr);
  return checks;
}

inline int run_equivalence_suite(const Json& config, const RunContext& ctx) {
  const std::string c = "equivalence config";
  check_keys(config, {"experiment", "seeds"}, c);
  detail::require_experiment(config, "equivalence-suite");
  const long seeds = get_int_or(config, "seeds", 10, c);
  if (seeds < 1) throw ConfigError(c + ": seeds must be positive");
  if (ctx.dry_run) return 0;

  detail::WallClock clock;
  auto checks = equivalence_checks(static_cast<int>(seeds), ctx.perturb);
  bool all_pass = true;
  Json report = Json::array();
  for (const auto& ch : checks) {
    Json j;
    j["name"] = ch.name;
    j["tolerance"] = ch.tolerance;
    j["max_deviation"] = ch.max_deviation;
    j["pass"] = ch.pass();
    report.push_back(j);
    all_pass = all_pass && ch.pass();
  }
  Json out;
  out["checks"] = report;
  out["all_pass"] = all_pass;
  write_text(ctx.out_dir / "equivalence_report.json", out.dump(2) + "\n");
  detail::write_manifest(config, ctx, "equivalence-suite", clock.seconds());
  return all_pass ? 0 : 4;
}

}  // namespace kmedecon
