#pragma once

#include <memory>
#include <string>

#include "kmedecon/common.hpp"
#include "kmedecon/kernels.hpp"
#include "kmedecon/linalg.hpp"

namespace kmedecon {

// Empirical conditional mean embedding over anchor pairs (x_i, y_i).
// Evaluation weights are (L + n*lambda*I)^{-1} l(y), so the estimated
// conditional mean of f is f_anchors . weights.
class CmeModel {
 public:
  static CmeModel fit(const Points& x, const Points& y,
                      const KernelSpec& kernel_l, double lambda,
                      bool allow_degenerate = false) {
    if (x.rows() != y.rows()) {
      throw DimensionError("cme_fit: |x| != |y|");
    }
    if (x.rows() < 1) throw DimensionError("cme_fit: empty dataset");
    if (lambda <= 0.0 && !allow_degenerate) {
      throw DomainError("cme_fit: lambda must be positive");
    }
    CmeModel m;
    m.anchors_x_ = x;
    m.anchors_y_ = y;
    m.kernel_l_ = kernel_l;
    m.lambda_ = lambda;
    Matrix L = gram(kernel_l, y, y);
    L.diagonal().array() += static_cast<double>(y.rows()) * lambda;
    m.solve_ = std::make_shared<PsdFactorization>(L);
    return m;
  }

  Vector weights_at(const Eigen::Ref<const Vector>& y) const {
    return solve_->solve(gram_vector(kernel_l_, anchors_y_, y));
  }

  double estimate(const Eigen::Ref<const Vector>& f_at_anchors,
                  const Eigen::Ref<const Vector>& y) const {
    if (f_at_anchors.size() != anchors_y_.rows()) {
      throw DimensionError("cme_estimate: f_at_anchors length mismatch");
    }
    return f_at_anchors.dot(weights_at(y));
  }

  const Points& anchors_x() const { return anchors_x_; }
  const Points& anchors_y() const { return anchors_y_; }
  double lambda() const { return lambda_; }

 private:
  Points anchors_x_, anchors_y_;
  KernelSpec kernel_l_;
  double lambda_ = 0.0;
  std::shared_ptr<const PsdFactorization> solve_;
};

inline CmeModel cme_fit(const Points& x, const Points& y,
                        const KernelSpec& kernel_l, double lambda,
                        bool allow_degenerate = false) {
  return CmeModel::fit(x, y, kernel_l, lambda, allow_degenerate);
}

enum class KbrVariant { A1, A2, B1, B2 };

inline KbrVariant kbr_variant_from_string(const std::string& s) {
  if (s == "kbr_a_1") return KbrVariant::A1;
  if (s == "kbr_a_2") return KbrVariant::A2;
  if (s == "kbr_b_1") return KbrVariant::B1;
  if (s == "kbr_b_2") return KbrVariant::B2;
  throw ConfigError("unknown KBR variant: " + s);
}

// Kernel Bayes' Rule posterior operator in its published computational forms.
// Variant (a) weights live on the prior anchors (y_tilde), variant (b) on the
// transformation anchors (y). The KD systems are not symmetric and are solved
// with LU.
class KbrModel {
 public:
  static KbrModel fit(const Points& x, const Points& y, const Points& y_tilde,
                      const KernelSpec& kernel_k, const KernelSpec& kernel_l,
                      double lambda, double epsilon, KbrVariant variant,
                      bool allow_degenerate = false) {
    if (x.rows() != y.rows()) throw DimensionError("kbr_fit: |x| != |y|");
    if ((lambda <= 0.0 || epsilon <= 0.0) && !allow_degenerate) {
      throw DomainError("kbr_fit: lambda and epsilon must be positive");
    }
    const auto n = x.rows();
    const auto m = y_tilde.rows();
    KbrModel model;
    model.variant_ = variant;
    model.epsilon_ = epsilon;
    Matrix L = gram(kernel_l, y, y);
    Matrix Lt = gram(kernel_l, y, y_tilde);
    model.A_ = reg_solve(L, static_cast<double>(n) * lambda, Lt);
    model.D_ = (model.A_ * Vector::Ones(m)).asDiagonal();
    Matrix K = gram(kernel_k, x, x);
    Matrix KD = K * model.D_;
    const double me = static_cast<double>(m) * epsilon;
    switch (variant) {
      case KbrVariant::A1:
        model.weight_matrix_ =
            lu_reg_solve(KD.transpose(), me, model.A_).transpose();
        break;
      case KbrVariant::A2: {
        Matrix KD2 = KD * KD;
        const double m2e = static_cast<double>(m) * me;
        model.weight_matrix_ =
            (lu_reg_solve(KD2.transpose(), m2e, model.A_).transpose() * KD);
        break;
      }
      case KbrVariant::B1:
        model.weight_matrix_ =
            model.D_ * lu_reg_solve(KD, me, Matrix::Identity(n, n));
        break;
      case KbrVariant::B2: {
        Matrix KD2 = KD * KD;
        const double m2e = static_cast<double>(m) * me;
        model.weight_matrix_ =
            model.D_ * (lu_reg_solve(KD2, m2e, Matrix::Identity(n, n)) * KD);
        break;
      }
    }
    model.anchors_x_ = x;
    model.kernel_k_ = kernel_k;
    model.K_ = std::move(K);
    return model;
  }

  // Posterior-embedding weights over the variant's anchor set at query x.
  Vector weights_at(const Eigen::Ref<const Vector>& x) const {
    return weight_matrix_ * gram_vector(kernel_k_, anchors_x_, x);
  }

  // Symmetric-inverse rewrite of the (b) variants using D = D^{1/2} D^{1/2}.
  // Agrees with the direct weight matrix when D is strictly positive.
  Matrix symmetric_form_weight_matrix() const {
    if (variant_ != KbrVariant::B1 && variant_ != KbrVariant::B2) {
      throw ContractViolation("kbr_b_symmetric_form: variant must be (b)");
    }
    if ((D_.diagonal().array() < 0.0).any()) {
      throw DomainError("kbr_b_symmetric_form: negative entry in D");
    }
    const auto n = D_.rows();
    const auto m = A_.cols();
    const double me = static_cast<double>(m) * epsilon_;
    Vector dsqrt = D_.diagonal().array().sqrt();
    Matrix Ds = dsqrt.asDiagonal();
    if (variant_ == KbrVariant::B1) {
      Matrix M = Ds * K_ * Ds;
      return Ds * reg_solve(M, me, Matrix(Ds));
    }
    Matrix KD = K_ * D_;
    Matrix M = Ds * KD * K_ * Ds;  // D^{1/2} K D K D^{1/2}
    return Ds * reg_solve(M, static_cast<double>(m) * me, Matrix(Ds * KD));
  }

  const Matrix& weight_matrix() const { return weight_matrix_; }
  const Matrix& A() const { return A_; }
  Vector D_diagonal() const { return D_.diagonal(); }
  KbrVariant variant() const { return variant_; }

 private:
  KbrVariant variant_ = KbrVariant::B1;
  Matrix A_;                      // n x m
  Eigen::DiagonalMatrix<double, Eigen::Dynamic> D_;
  Matrix weight_matrix_;          // anchors x n
  Points anchors_x_;
  KernelSpec kernel_k_;
  Matrix K_;
  double epsilon_ = 0.0;
};

inline KbrModel kbr_fit(const Points& x, const Points& y,
                        const Points& y_tilde, const KernelSpec& kernel_k,
                        const KernelSpec& kernel_l, double lambda,
                        double epsilon, KbrVariant variant,
                        bool allow_degenerate = false) {
  return KbrModel::fit(x, y, y_tilde, kernel_k, kernel_l, lambda, epsilon,
                       variant, allow_degenerate);
}

}  // namespace kmedecon
