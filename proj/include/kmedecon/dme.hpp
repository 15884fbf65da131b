#pragma once

#include <optional>
#include <string>
#include <utility>

#include "kmedecon/common.hpp"
#include "kmedecon/kernels.hpp"
#include "kmedecon/linalg.hpp"

namespace kmedecon {

// Transformation pairs {x_i, y_i} linking features to the mediating variable,
// and task pairs {y_tilde_j, z_tilde_j} carrying the observed targets.
struct TaskTransformedDataset {
  Points x;        // n x dx
  Points y;        // n x dy
  Points y_tilde;  // m x dy
  Vector z_tilde;  // m

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index m() const { return y_tilde.rows(); }

  void validate() const {
    if (x.rows() == 0 || y_tilde.rows() == 0) {
      throw DimensionError("TaskTransformedDataset: empty dataset");
    }
    if (x.rows() != y.rows()) {
      throw DimensionError("TaskTransformedDataset: |x| != |y|");
    }
    if (y.cols() != y_tilde.cols()) {
      throw DimensionError("TaskTransformedDataset: y dimensionality mismatch");
    }
    if (z_tilde.size() != y_tilde.rows()) {
      throw DimensionError("TaskTransformedDataset: |z_tilde| != |y_tilde|");
    }
  }
};

enum class DmeForm { Standard, Woodbury };

// Transformation matrix A = (L + n*lambda*I)^{-1} L_tilde.
inline Matrix dme_transformation(const Points& y, const Points& y_tilde,
                                 const KernelSpec& kernel_l, double lambda) {
  Matrix L = gram(kernel_l, y, y);
  Matrix Lt = gram(kernel_l, y, y_tilde);
  return reg_solve(L, static_cast<double>(y.rows()) * lambda, Lt);
}

// Deconditional posterior-embedding coefficients: the m x n matrix
// [A^T K A + m*eps*I]^{-1} A^T, so that the embedding weights over the
// y_tilde anchors at query x are weights * k(x).
inline Matrix dmo_weights(const Points& x, const Points& y,
                          const Points& y_tilde, const KernelSpec& kernel_k,
                          const KernelSpec& kernel_l, double lambda,
                          double epsilon, bool allow_degenerate = false) {
  if (x.rows() != y.rows()) throw DimensionError("dmo_weights: |x| != |y|");
  if ((lambda <= 0.0 || epsilon <= 0.0) && !allow_degenerate) {
    throw DomainError("dmo_weights: lambda and epsilon must be positive");
  }
  const auto m = y_tilde.rows();
  Matrix A = dme_transformation(y, y_tilde, kernel_l, lambda);
  Matrix K = gram(kernel_k, x, x);
  Matrix G = A.transpose() * K * A;
  return reg_solve(G, static_cast<double>(m) * epsilon, Matrix(A.transpose()));
}

// Fitted deconditional mean estimator. The standard form materializes the
// dual weights alpha = A [A^T K A + m*eps*I]^{-1} z_tilde with an m x m
// factorization; the woodbury form solves the transposed n x n system
// [K A A^T + m*eps*I]^T alpha = A z_tilde instead, keeping cost linear in m.
class DmeModel {
 public:
  static DmeModel fit(const TaskTransformedDataset& data,
                      const KernelSpec& kernel_k, const KernelSpec& kernel_l,
                      double lambda, double epsilon,
                      DmeForm form = DmeForm::Woodbury,
                      bool allow_degenerate = false) {
    data.validate();
    if ((lambda <= 0.0 || epsilon <= 0.0) && !allow_degenerate) {
      throw DomainError("dme_fit: lambda and epsilon must be positive");
    }
    DmeModel model;
    model.anchors_x_ = data.x;
    model.kernel_k_ = kernel_k;
    model.kernel_l_ = kernel_l;
    model.lambda_ = lambda;
    model.epsilon_ = epsilon;
    model.form_ = form;
    const double me = static_cast<double>(data.m()) * epsilon;
    Matrix A = dme_transformation(data.y, data.y_tilde, kernel_l, lambda);
    Matrix K = gram(kernel_k, data.x, data.x);
    if (form == DmeForm::Standard) {
      Matrix G = A.transpose() * K * A;  // m x m
      model.alpha_ = A * reg_solve(G, me, data.z_tilde);
    } else {
      Matrix KAAt = K * (A * A.transpose());  // n x n, not symmetric
      model.alpha_ = lu_reg_solve(KAAt.transpose(), me, Matrix(A * data.z_tilde));
    }
    return model;
  }

  // f_bar(x) = alpha . k(x)
  double predict_one(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != anchors_x_.cols()) {
      throw DimensionError("dme_predict: query dimensionality mismatch");
    }
    return alpha_.dot(gram_vector(kernel_k_, anchors_x_, x));
  }

  Vector predict(const Eigen::Ref<const Points>& x_query) const {
    Vector out(x_query.rows());
    for (Eigen::Index i = 0; i < x_query.rows(); ++i) {
      out(i) = predict_one(x_query.row(i));
    }
    return out;
  }

  const Vector& alpha() const { return alpha_; }
  const Points& anchors_x() const { return anchors_x_; }
  const KernelSpec& kernel_k() const { return kernel_k_; }
  const KernelSpec& kernel_l() const { return kernel_l_; }
  double lambda() const { return lambda_; }
  double epsilon() const { return epsilon_; }
  DmeForm form() const { return form_; }

 private:
  Points anchors_x_;
  KernelSpec kernel_k_, kernel_l_;
  double lambda_ = 0.0, epsilon_ = 0.0;
  DmeForm form_ = DmeForm::Woodbury;
  Vector alpha_;
};

inline DmeModel dme_fit(const TaskTransformedDataset& data,
                        const KernelSpec& kernel_k, const KernelSpec& kernel_l,
                        double lambda, double epsilon,
                        DmeForm form = DmeForm::Woodbury,
                        bool allow_degenerate = false) {
  return DmeModel::fit(data, kernel_k, kernel_l, lambda, epsilon, form,
                       allow_degenerate);
}

inline Vector dme_predict(const DmeModel& model,
                          const Eigen::Ref<const Points>& x_query) {
  return model.predict(x_query);
}

// Weight-space estimator over explicit finite features: w_bar =
// [Phi A A^T Phi^T + m*eps*I]^{-1} Phi A z_tilde with
// A = Psi^T (Psi Psi^T + n*lambda*I)^{-1} Psi_tilde.
class ParametricDmeModel {
 public:
  static ParametricDmeModel fit(const TaskTransformedDataset& data,
                                const FeatureMap& feature_x,
                                const FeatureMap& feature_y, double lambda,
                                double epsilon,
                                bool allow_degenerate = false) {
    data.validate();
    if ((lambda <= 0.0 || epsilon <= 0.0) && !allow_degenerate) {
      throw DomainError("parametric_dme_fit: lambda and epsilon must be positive");
    }
    ParametricDmeModel model;
    model.feature_x_ = feature_x;
    model.feature_y_ = feature_y;
    model.lambda_ = lambda;
    model.epsilon_ = epsilon;
    Matrix Phi = feature_matrix(feature_x, data.x);          // p x n
    Matrix Psi = feature_matrix(feature_y, data.y);          // q x n
    Matrix PsiT = feature_matrix(feature_y, data.y_tilde);   // q x m
    Matrix PsiPsiT = Psi * Psi.transpose();                  // q x q
    const double nl = static_cast<double>(data.n()) * lambda;
    model.A_ = Psi.transpose() * reg_solve(PsiPsiT, nl, PsiT);  // n x m
    Matrix Theta = Phi * model.A_;                           // p x m
    Matrix G = Theta * Theta.transpose();                    // p x p
    const double me = static_cast<double>(data.m()) * epsilon;
    Matrix rhs = Theta * data.z_tilde;
    Vector w = reg_solve(G, me, rhs);
    if (!w.allFinite()) {
      throw SingularSystemError("parametric_dme_fit: singular normal equations");
    }
    model.w_bar_ = std::move(w);
    return model;
  }

  double predict_one(const Eigen::Ref<const Vector>& x) const {
    return w_bar_.dot(feature_x_(x));
  }

  Vector predict(const Eigen::Ref<const Points>& x_query) const {
    Vector out(x_query.rows());
    for (Eigen::Index i = 0; i < x_query.rows(); ++i) {
      out(i) = predict_one(x_query.row(i));
    }
    return out;
  }

  const Vector& w_bar() const { return w_bar_; }
  const Matrix& A() const { return A_; }

 private:
  FeatureMap feature_x_, feature_y_;
  double lambda_ = 0.0, epsilon_ = 0.0;
  Matrix A_;
  Vector w_bar_;
};

inline ParametricDmeModel parametric_dme_fit(const TaskTransformedDataset& data,
                                             const FeatureMap& feature_x,
                                             const FeatureMap& feature_y,
                                             double lambda, double epsilon,
                                             bool allow_degenerate = false) {
  return ParametricDmeModel::fit(data, feature_x, feature_y, lambda, epsilon,
                                 allow_degenerate);
}

// Outer objective of the chained regularized least squares problem:
// (1/m) sum_j (z_tilde_j - v_hat[w] . psi(y_tilde_j))^2 + eps*||w||^2,
// where v_hat[w] = (Psi Psi^T + n*lambda*I)^{-1} Psi Phi^T w is the inner
// closed-form solution. Minimized by the parametric DME weights.
inline double chained_loss(const TaskTransformedDataset& data,
                           const FeatureMap& feature_x,
                           const FeatureMap& feature_y, double lambda,
                           double epsilon, const Eigen::Ref<const Vector>& w) {
  data.validate();
  Matrix Phi = feature_matrix(feature_x, data.x);
  Matrix Psi = feature_matrix(feature_y, data.y);
  Matrix PsiT = feature_matrix(feature_y, data.y_tilde);
  if (w.size() != Phi.rows()) {
    throw DimensionError("chained_loss: weight length mismatch");
  }
  Matrix PsiPsiT = Psi * Psi.transpose();
  const double nl = static_cast<double>(data.n()) * lambda;
  Vector v_hat = reg_solve(PsiPsiT, nl, Matrix(Psi * (Phi.transpose() * w)));
  Vector resid = data.z_tilde - PsiT.transpose() * v_hat;
  return resid.squaredNorm() / static_cast<double>(data.m()) +
         epsilon * w.squaredNorm();
}

}  // namespace kmedecon
