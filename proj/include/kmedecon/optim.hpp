#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "kmedecon/common.hpp"

namespace kmedecon {

struct OptimTraceEntry {
  int eval_index = 0;
  Vector params;
  double value = 0.0;
};

struct OptimResult {
  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  std::vector<OptimTraceEntry> trace;
};

struct NelderMeadOptions {
  int budget = 200;          // objective evaluations
  double initial_step = 0.5; // simplex edge length around the start point
  double ftol = 1e-9;
  Vector lower;  // optional box, empty = unbounded
  Vector upper;
};

// Derivative-free simplex minimization (Nelder-Mead) with the standard
// reflection/expansion/contraction/shrink coefficients. Deterministic: the
// best evaluated point is returned, so the result never regresses below the
// start point. Objectives may throw; failed evaluations count as +inf.
inline OptimResult nelder_mead(const std::function<double(const Vector&)>& f,
                               const Vector& start,
                               const NelderMeadOptions& opts = {}) {
  const Eigen::Index d = start.size();
  OptimResult result;
  result.best = start;

  auto clamp = [&](Vector p) {
    if (opts.lower.size() == d) p = p.cwiseMax(opts.lower);
    if (opts.upper.size() == d) p = p.cwiseMin(opts.upper);
    return p;
  };

  int evals = 0;
  auto eval = [&](const Vector& p) {
    if (evals >= opts.budget) return std::numeric_limits<double>::infinity();
    ++evals;
    double v;
    try {
      v = f(p);
      if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      v = std::numeric_limits<double>::infinity();
    }
    result.trace.push_back({evals, p, v});
    if (v < result.best_value) {
      result.best_value = v;
      result.best = p;
    }
    return v;
  };

  if (opts.budget < 1) {
    result.evaluations = 0;
    return result;
  }

  std::vector<Vector> simplex;
  std::vector<double> values;
  simplex.push_back(clamp(start));
  values.push_back(eval(simplex[0]));
  for (Eigen::Index i = 0; i < d && evals < opts.budget; ++i) {
    Vector p = start;
    p(i) += opts.initial_step;
    p = clamp(p);
    simplex.push_back(p);
    values.push_back(eval(p));
  }

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  while (evals < opts.budget && simplex.size() == static_cast<size_t>(d) + 1) {
    std::vector<size_t> order(simplex.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return values[a] < values[b]; });
    std::vector<Vector> sx;
    std::vector<double> sv;
    for (size_t i : order) {
      sx.push_back(simplex[i]);
      sv.push_back(values[i]);
    }
    simplex = sx;
    values = sv;

    if (std::isfinite(values.front()) && std::isfinite(values.back()) &&
        values.back() - values.front() < opts.ftol) {
      break;
    }

    Vector centroid = Vector::Zero(d);
    for (size_t i = 0; i + 1 < simplex.size(); ++i) centroid += simplex[i];
    centroid /= static_cast<double>(d);

    const Vector worst = simplex.back();
    Vector xr = clamp(centroid + alpha * (centroid - worst));
    double fr = eval(xr);

    if (fr < values.front()) {
      Vector xe = clamp(centroid + gamma * (centroid - worst));
      double fe = eval(xe);
      if (fe < fr) {
        simplex.back() = xe;
        values.back() = fe;
      } else {
        simplex.back() = xr;
        values.back() = fr;
      }
    } else if (fr < values[values.size() - 2]) {
      simplex.back() = xr;
      values.back() = fr;
    } else {
      Vector xc = clamp(centroid + rho * (worst - centroid));
      double fc = eval(xc);
      if (fc < values.back()) {
        simplex.back() = xc;
        values.back() = fc;
      } else {
        for (size_t i = 1; i < simplex.size(); ++i) {
          simplex[i] = clamp(simplex[0] + sigma * (simplex[i] - simplex[0]));
          values[i] = eval(simplex[i]);
        }
      }
    }
  }

  result.evaluations = evals;
  if (!std::isfinite(result.best_value)) {
    throw OptimizationFailure("nelder_mead: every evaluation failed");
  }
  return result;
}

}  // namespace kmedecon
