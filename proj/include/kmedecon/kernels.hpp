#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "kmedecon/common.hpp"

namespace kmedecon {

enum class KernelFamily { Gaussian, Linear, Polynomial };

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Linear: return "linear";
    case KernelFamily::Polynomial: return "polynomial";
  }
  return "?";
}

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "gaussian") return KernelFamily::Gaussian;
  if (s == "linear") return KernelFamily::Linear;
  if (s == "polynomial") return KernelFamily::Polynomial;
  throw ConfigError("unknown kernel family: " + s);
}

// A positive-definite kernel with named hyperparameters. Lengthscales are
// per input dimension (ARD); a single entry is broadcast isotropically.
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  Vector lengthscales = Vector::Ones(1);
  double signal_variance = 1.0;
  int degree = 2;  // polynomial only

  static KernelSpec gaussian(double lengthscale, double signal_variance = 1.0) {
    KernelSpec s;
    s.family = KernelFamily::Gaussian;
    s.lengthscales = Vector::Constant(1, lengthscale);
    s.signal_variance = signal_variance;
    return s;
  }

  static KernelSpec gaussian_ard(Vector lengthscales,
                                 double signal_variance = 1.0) {
    KernelSpec s;
    s.family = KernelFamily::Gaussian;
    s.lengthscales = std::move(lengthscales);
    s.signal_variance = signal_variance;
    return s;
  }

  static KernelSpec linear(double signal_variance = 1.0) {
    KernelSpec s;
    s.family = KernelFamily::Linear;
    s.signal_variance = signal_variance;
    return s;
  }

  static KernelSpec polynomial(int degree, double signal_variance = 1.0) {
    KernelSpec s;
    s.family = KernelFamily::Polynomial;
    s.degree = degree;
    s.signal_variance = signal_variance;
    return s;
  }

  void validate() const {
    if (signal_variance <= 0.0) {
      throw DomainError("KernelSpec: signal_variance must be positive");
    }
    if (family == KernelFamily::Gaussian) {
      if (lengthscales.size() < 1 || (lengthscales.array() <= 0.0).any()) {
        throw DomainError("KernelSpec: lengthscales must be positive");
      }
    }
    if (family == KernelFamily::Polynomial && degree < 1) {
      throw DomainError("KernelSpec: polynomial degree must be >= 1");
    }
  }

  double lengthscale_for(Eigen::Index dim) const {
    return lengthscales.size() == 1 ? lengthscales(0) : lengthscales(dim);
  }

  double operator()(const Eigen::Ref<const Vector>& a,
                    const Eigen::Ref<const Vector>& b) const {
    if (a.size() != b.size()) {
      throw DimensionError("kernel: input dimension mismatch");
    }
    switch (family) {
      case KernelFamily::Gaussian: {
        if (lengthscales.size() != 1 && lengthscales.size() != a.size()) {
          throw DimensionError("kernel: lengthscale dimension mismatch");
        }
        // Squared distances accumulated as sum((a-b)/l)^2 per dimension; no
        // norm-expansion shortcut, so identical inputs give exactly zero.
        double q = 0.0;
        for (Eigen::Index d = 0; d < a.size(); ++d) {
          const double u = (a(d) - b(d)) / lengthscale_for(d);
          q += u * u;
        }
        return signal_variance * std::exp(-0.5 * q);
      }
      case KernelFamily::Linear:
        return signal_variance * a.dot(b);
      case KernelFamily::Polynomial:
        return signal_variance * std::pow(1.0 + a.dot(b), degree);
    }
    return 0.0;
  }
};

// Gram matrix: entry (i,j) = kernel(A_i, B_j), points row-wise.
inline Matrix gram(const KernelSpec& spec, const Eigen::Ref<const Points>& A,
                   const Eigen::Ref<const Points>& B) {
  spec.validate();
  if (A.rows() == 0 || B.rows() == 0) {
    throw DimensionError("gram: empty point set");
  }
  if (A.cols() != B.cols()) {
    throw DimensionError("gram: point dimensionality mismatch");
  }
  require_finite(A, "gram A");
  require_finite(B, "gram B");
  Matrix G(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      G(i, j) = spec(A.row(i), B.row(j));
    }
  }
  return G;
}

inline Vector gram_vector(const KernelSpec& spec,
                          const Eigen::Ref<const Points>& A,
                          const Eigen::Ref<const Vector>& x) {
  Vector v(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    v(i) = spec(A.row(i), x);
  }
  return v;
}

// Normalized Gaussian kernel: the multivariate normal density N(y; x, eps^2 I).
// This is the epsilon-kernel used to compare observed and simulated summaries.
inline double normalized_gaussian(double epsilon,
                                  const Eigen::Ref<const Vector>& y,
                                  const Eigen::Ref<const Vector>& x) {
  if (epsilon <= 0.0) {
    throw DomainError("normalized_gaussian: epsilon must be positive");
  }
  if (y.size() != x.size()) {
    throw DimensionError("normalized_gaussian: dimension mismatch");
  }
  const auto d = static_cast<double>(y.size());
  double q = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double u = (y(i) - x(i)) / epsilon;
    q += u * u;
  }
  const double log_norm =
      -0.5 * d * std::log(2.0 * std::numbers::pi) - d * std::log(epsilon);
  return std::exp(log_norm - 0.5 * q);
}

inline double normalized_gaussian(const KernelSpec& spec,
                                  const Eigen::Ref<const Vector>& y,
                                  const Eigen::Ref<const Vector>& x) {
  if (spec.family != KernelFamily::Gaussian || spec.lengthscales.size() != 1) {
    throw DomainError("normalized_gaussian: spec must be isotropic gaussian");
  }
  return normalized_gaussian(spec.lengthscales(0), y, x);
}

enum class FeatureFamily { Identity, PolynomialExplicit };

namespace detail {

// Exponent vectors (k_0, k_1, ..., k_d) with sum = degree, where k_0 belongs
// to the bias term. Enumerated in a fixed lexicographic order.
inline void enumerate_exponents(int remaining, int slot, int total_slots,
                                std::vector<int>& current,
                                std::vector<std::vector<int>>& out) {
  if (slot == total_slots - 1) {
    current[slot] = remaining;
    out.push_back(current);
    return;
  }
  for (int k = remaining; k >= 0; --k) {
    current[slot] = k;
    enumerate_exponents(remaining - k, slot + 1, total_slots, current, out);
  }
}

inline double multinomial_coefficient(int n, const std::vector<int>& ks) {
  double log_c = std::lgamma(n + 1.0);
  for (int k : ks) log_c -= std::lgamma(k + 1.0);
  return std::exp(log_c);
}

}  // namespace detail

// Explicit finite-dimensional feature map. For the polynomial family the
// features expand (1 + x.x')^degree so that feature(x).feature(x') reproduces
// the polynomial kernel exactly.
struct FeatureMap {
  FeatureFamily family = FeatureFamily::Identity;
  int input_dim = 1;
  int degree = 2;  // polynomial only
  std::vector<std::vector<int>> exponents;  // polynomial term table

  static FeatureMap identity(int input_dim) {
    FeatureMap m;
    m.family = FeatureFamily::Identity;
    m.input_dim = input_dim;
    return m;
  }

  static FeatureMap polynomial_explicit(int input_dim, int degree) {
    if (degree < 1) throw DomainError("FeatureMap: degree must be >= 1");
    FeatureMap m;
    m.family = FeatureFamily::PolynomialExplicit;
    m.input_dim = input_dim;
    m.degree = degree;
    std::vector<int> current(static_cast<size_t>(input_dim) + 1, 0);
    detail::enumerate_exponents(degree, 0, input_dim + 1, current, m.exponents);
    return m;
  }

  int output_dim() const {
    return family == FeatureFamily::Identity
               ? input_dim
               : static_cast<int>(exponents.size());
  }

  // Kernel reproduced by feature(x).feature(x').
  KernelSpec induced_kernel() const {
    return family == FeatureFamily::Identity ? KernelSpec::linear()
                                             : KernelSpec::polynomial(degree);
  }

  Vector operator()(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != input_dim) {
      throw DimensionError("feature: input dimension mismatch");
    }
    if (family == FeatureFamily::Identity) return x;
    Vector out(output_dim());
    for (size_t t = 0; t < exponents.size(); ++t) {
      const auto& ks = exponents[t];
      double v = std::sqrt(detail::multinomial_coefficient(degree, ks));
      for (int d = 0; d < input_dim; ++d) {
        v *= std::pow(x(d), ks[static_cast<size_t>(d) + 1]);
      }
      out(static_cast<Eigen::Index>(t)) = v;
    }
    return out;
  }
};

inline Vector feature(const FeatureMap& map, const Eigen::Ref<const Vector>& x) {
  return map(x);
}

// Feature matrix with one column per point (p x n).
inline Matrix feature_matrix(const FeatureMap& map,
                             const Eigen::Ref<const Points>& X) {
  Matrix F(map.output_dim(), X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    F.col(i) = map(X.row(i));
  }
  return F;
}

}  // namespace kmedecon
