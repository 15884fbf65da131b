#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "kmedecon/common.hpp"

namespace kmedecon {

// Cholesky factorization of a symmetric PSD matrix with a deterministic
// jitter escalation: first no jitter, then 1e-12*trace/n doubled until
// 1e-4*trace/n. Jitter only absorbs floating-point PSD violations; model
// regularizers are added by the caller before factorizing.
class PsdFactorization {
 public:
  explicit PsdFactorization(const Eigen::Ref<const Matrix>& G) {
    if (G.rows() != G.cols()) {
      throw DimensionError("PsdFactorization: matrix must be square");
    }
    const Eigen::Index n = G.rows();
    const double scale = G.trace() / static_cast<double>(n);
    std::vector<double> trace;
    double jitter = 0.0;
    while (true) {
      trace.push_back(jitter);
      Matrix J = G;
      if (jitter > 0.0) J.diagonal().array() += jitter;
      llt_.compute(J);
      if (llt_.info() == Eigen::Success) {
        jitter_used_ = jitter;
        size_ = n;
        return;
      }
      if (scale <= 0.0) {
        throw SingularSystemError("PsdFactorization: nonpositive trace",
                                  std::move(trace));
      }
      if (jitter == 0.0) {
        jitter = 1e-12 * scale;
      } else if (jitter < 1e-4 * scale) {
        jitter = std::min(2.0 * jitter, 1e-4 * scale);
      } else {
        throw SingularSystemError(
            "PsdFactorization: failed at max jitter", std::move(trace));
      }
    }
  }

  Matrix solve(const Eigen::Ref<const Matrix>& B) const {
    if (B.rows() != size_) {
      throw DimensionError("PsdFactorization::solve: shape mismatch");
    }
    return llt_.solve(B);
  }

  double logdet() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  Matrix factor() const { return llt_.matrixL(); }
  double jitter_used() const { return jitter_used_; }
  Eigen::Index size() const { return size_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_used_ = 0.0;
  Eigen::Index size_ = 0;
};

// (G + cI)^{-1} B for symmetric G, via the jittered Cholesky policy.
inline Matrix reg_solve(const Eigen::Ref<const Matrix>& G, double c,
                        const Eigen::Ref<const Matrix>& B) {
  if (G.rows() != G.cols()) {
    throw DimensionError("reg_solve: G must be square");
  }
  if (c < 0.0) throw DomainError("reg_solve: c must be nonnegative");
  if (B.rows() != G.rows()) {
    throw DimensionError("reg_solve: B row count mismatch");
  }
  Matrix Gc = G;
  if (c > 0.0) Gc.diagonal().array() += c;
  return PsdFactorization(Gc).solve(B);
}

// General (non-symmetric) regularized solve: (G + cI)^{-1} B via partial-pivot
// LU. Used for the KD-style systems which are not symmetric.
inline Matrix lu_reg_solve(const Eigen::Ref<const Matrix>& G, double c,
                           const Eigen::Ref<const Matrix>& B) {
  if (G.rows() != G.cols() || B.rows() != G.rows()) {
    throw DimensionError("lu_reg_solve: shape mismatch");
  }
  Matrix Gc = G;
  Gc.diagonal().array() += c;
  Eigen::PartialPivLU<Matrix> lu(Gc);
  Matrix X = lu.solve(B);
  if (!X.allFinite()) {
    throw SingularSystemError("lu_reg_solve: singular system");
  }
  return X;
}

// Both sides of the push-through identity B(CB + cI)^{-1} = (BC + cI)^{-1}B.
// first: the small-side product B(CB + cI)^{-1}; second: (BC + cI)^{-1}B.
inline std::pair<Matrix, Matrix> woodbury_left(
    const Eigen::Ref<const Matrix>& B, const Eigen::Ref<const Matrix>& C,
    double c) {
  if (B.cols() != C.rows() || C.cols() != B.rows()) {
    throw DimensionError("woodbury_left: shapes not conformable");
  }
  if (c <= 0.0) throw DomainError("woodbury_left: c must be positive");
  Matrix CB = C * B;  // b x b
  CB.diagonal().array() += c;
  Matrix lhs = Eigen::PartialPivLU<Matrix>(Matrix(CB.transpose()))
                   .solve(Matrix(B.transpose()))
                   .transpose();
  Matrix BC = B * C;  // a x a
  BC.diagonal().array() += c;
  Matrix rhs = Eigen::PartialPivLU<Matrix>(BC).solve(Matrix(B));
  return {std::move(lhs), std::move(rhs)};
}

inline double gaussian_logpdf(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const Vector>& mean,
                              const Eigen::Ref<const Matrix>& cov) {
  if (x.size() != mean.size() || cov.rows() != x.size() ||
      cov.cols() != x.size()) {
    throw DimensionError("gaussian_logpdf: shape mismatch");
  }
  PsdFactorization chol(cov);
  const Vector r = x - mean;
  const Vector u = chol.solve(r);
  const auto m = static_cast<double>(x.size());
  return -0.5 * (r.dot(u) + chol.logdet() + m * std::log(2.0 * std::numbers::pi));
}

// log N(x; 0, P^{-1}) given the precision matrix P directly.
inline double gaussian_logpdf_precision(const Eigen::Ref<const Vector>& x,
                                        const Eigen::Ref<const Matrix>& prec) {
  if (prec.rows() != x.size() || prec.cols() != x.size()) {
    throw DimensionError("gaussian_logpdf_precision: shape mismatch");
  }
  PsdFactorization chol(prec);
  const auto m = static_cast<double>(x.size());
  return -0.5 * (x.dot(prec * x) - chol.logdet() +
                 m * std::log(2.0 * std::numbers::pi));
}

}  // namespace kmedecon
