#ifndef PROXAL_LINALG_HPP
#define PROXAL_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "proxal/common.hpp"

namespace proxal {

// Cached symmetric factorization of (K + n*lambda*I). Cholesky with a single
// jittered retry; Gram matrices are PSD only up to roundoff.
class RidgeFactor {
 public:
  RidgeFactor(const Matrix& kernel, double sample_count, double lambda) {
    if (kernel.rows() != kernel.cols())
      throw DimensionMismatch("regularized solve: kernel matrix not square");
    if (!(lambda > 0.0))
      throw InvalidConfig("regularized solve: lambda must be positive");
    Matrix shifted = kernel;
    shifted.diagonal().array() += sample_count * lambda;
    llt_.compute(shifted);
    if (llt_.info() != Eigen::Success) {
      const double jitter = 1e-10 * kernel.diagonal().mean();
      shifted.diagonal().array() += jitter;
      llt_.compute(shifted);
      if (llt_.info() != Eigen::Success)
        throw FactorizationFailed(
            "regularized solve: matrix numerically indefinite");
    }
  }

  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }
  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }

 private:
  Eigen::LLT<Matrix> llt_;
};

// (K + n*lambda*I)^{-1} rhs
inline Matrix regularized_solve(const Matrix& kernel, const Matrix& rhs,
                                double sample_count, double lambda) {
  if (kernel.rows() != rhs.rows())
    throw DimensionMismatch("regularized solve: rhs row count mismatch");
  return RidgeFactor(kernel, sample_count, lambda).solve(rhs);
}

struct LoocvReport {
  std::vector<double> lambda_grid;
  std::vector<double> losses;
  std::size_t selected = 0;

  double selected_lambda() const { return lambda_grid[selected]; }
};

inline std::vector<double> log_lambda_grid(double lo = 5e-5, double hi = 1.0,
                                           int count = 25) {
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid[i] = lo * std::pow(hi / lo, f);
  }
  return grid;
}

// Closed-form LOOCV for kernel ridge regression with output Gram G:
//   loss(lambda) = (1/t) Tr(Htil^-1 H G H^T Htil^-T),
//   H = I - K (K + t*lambda*I)^-1,  Htil = diag(H).
// Evaluated through one eigendecomposition of K; H = t*lambda*(K+t*lambda*I)^-1
// so in the eigenbasis H = V diag(t*lambda/(e_i + t*lambda)) V^T.
inline LoocvReport loocv_closed_form(const Matrix& kernel_inputs,
                                     const Matrix& gram_outputs,
                                     const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw InvalidConfig("loocv: empty lambda grid");
  if (kernel_inputs.rows() != kernel_inputs.cols() ||
      gram_outputs.rows() != gram_outputs.cols() ||
      kernel_inputs.rows() != gram_outputs.rows())
    throw DimensionMismatch("loocv: input/output Gram shapes disagree");

  const Eigen::Index t = kernel_inputs.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(kernel_inputs);
  if (es.info() != Eigen::Success)
    throw FactorizationFailed("loocv: eigendecomposition failed");
  const Matrix& v = es.eigenvectors();
  const Vector& e = es.eigenvalues();
  const Matrix g_rot = v.transpose() * gram_outputs * v;
  const Matrix v_sq = v.cwiseProduct(v);

  LoocvReport report;
  report.lambda_grid = lambda_grid;
  report.losses.reserve(lambda_grid.size());
  for (const double lambda : lambda_grid) {
    const double tl = static_cast<double>(t) * lambda;
    const Vector d = tl * (e.array() + tl).inverse().matrix();
    const Vector h_diag = v_sq * d;
    for (Eigen::Index i = 0; i < t; ++i)
      if (std::abs(h_diag[i]) < 1e-14)
        throw DegenerateDiagonal(
            "loocv: hat-matrix diagonal vanished (lambda too small)");
    // diag(H G H^T) with H = V diag(d) V^T
    const Matrix m = d.asDiagonal() * g_rot * d.asDiagonal();
    const Vector hgh_diag = ((v * m).cwiseProduct(v)).rowwise().sum();
    const double loss =
        (hgh_diag.array() / h_diag.array().square()).sum() / t;
    report.losses.push_back(loss);
  }
  report.selected = std::min_element(report.losses.begin(),
                                     report.losses.end()) -
                    report.losses.begin();
  return report;
}

// Nystrom-approximated KRR coefficients: solves
//   (K_XS^T K_XS + n*lambda*K_SS) c = K_XS^T targets,
// prediction at x is c^T K_Sx.
inline Matrix nystrom_solve(const Matrix& k_xs, const Matrix& k_ss,
                            const Matrix& targets, double sample_count,
                            double lambda) {
  if (!(lambda > 0.0)) throw InvalidConfig("nystrom: lambda must be positive");
  if (k_xs.cols() != k_ss.rows() || k_ss.rows() != k_ss.cols())
    throw DimensionMismatch("nystrom: landmark Gram shape mismatch");
  if (k_xs.rows() != targets.rows())
    throw DimensionMismatch("nystrom: target row count mismatch");
  Matrix lhs = k_xs.transpose() * k_xs + sample_count * lambda * k_ss;
  const Matrix rhs = k_xs.transpose() * targets;
  Eigen::LLT<Matrix> llt(lhs);
  if (llt.info() != Eigen::Success) {
    lhs.diagonal().array() += 1e-10 * k_ss.diagonal().mean() * sample_count *
                              lambda;
    llt.compute(lhs);
    if (llt.info() != Eigen::Success) {
      // K_SS can be genuinely rank-deficient; fall back to LDLT before
      // declaring failure.
      Eigen::LDLT<Matrix> ldlt(lhs);
      if (ldlt.info() != Eigen::Success)
        throw FactorizationFailed("nystrom: system numerically indefinite");
      return ldlt.solve(rhs);
    }
  }
  return llt.solve(rhs);
}

// Uniform-without-replacement landmark draw, seeded.
inline std::vector<Eigen::Index> sample_landmarks(Eigen::Index total,
                                                  Eigen::Index count,
                                                  std::uint64_t seed) {
  if (count < 1 || count > total)
    throw InvalidConfig("landmark count must be in [1, t]");
  std::vector<Eigen::Index> idx(total);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_rng(seed);
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Ridge-regression weight maps w(q) such that predictions are targets^T w(q).
// Full mode: w = (K + n*lambda*I)^{-1} k_q. Nystrom mode with landmark subset
// S: w = K_:S (K_:S^T K_:S + n*lambda*K_SS)^{-1} k_q[S], which reduces the
// factorization from t x t to p x p.
class KrrWeightMap {
 public:
  static KrrWeightMap full(const Matrix& kernel, double sample_count,
                           double lambda) {
    KrrWeightMap m;
    m.full_ = std::make_shared<RidgeFactor>(kernel, sample_count, lambda);
    return m;
  }

  static KrrWeightMap nystrom(const Matrix& kernel,
                              const std::vector<Eigen::Index>& landmarks,
                              double sample_count, double lambda) {
    KrrWeightMap m;
    m.landmarks_ = landmarks;
    const auto p = static_cast<Eigen::Index>(landmarks.size());
    m.k_xs_.resize(kernel.rows(), p);
    Matrix k_ss(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      m.k_xs_.col(j) = kernel.col(landmarks[j]);
      for (Eigen::Index i = 0; i < p; ++i)
        k_ss(i, j) = kernel(landmarks[i], landmarks[j]);
    }
    Matrix lhs = m.k_xs_.transpose() * m.k_xs_ + sample_count * lambda * k_ss;
    lhs.diagonal().array() += 1e-10 * k_ss.diagonal().mean();
    m.nys_ = std::make_shared<Eigen::LDLT<Matrix>>(lhs);
    if (m.nys_->info() != Eigen::Success)
      throw FactorizationFailed("nystrom weight map: factorization failed");
    return m;
  }

  // k_query: kernel columns between all training points and the query
  // points (t x q). Returns the t x q weight matrix.
  Matrix weights(const Matrix& k_query) const {
    if (full_) return full_->solve(k_query);
    const auto p = static_cast<Eigen::Index>(landmarks_.size());
    Matrix k_sq(p, k_query.cols());
    for (Eigen::Index i = 0; i < p; ++i)
      k_sq.row(i) = k_query.row(landmarks_[i]);
    return k_xs_ * nys_->solve(k_sq);
  }

 private:
  std::shared_ptr<RidgeFactor> full_;
  std::shared_ptr<Eigen::LDLT<Matrix>> nys_;
  std::vector<Eigen::Index> landmarks_;
  Matrix k_xs_;
};

// Symmetric PSD square root by eigendecomposition; negative eigenvalues
// from roundoff are clipped to zero.
inline Matrix psd_sqrt(const Matrix& m) {
  if (m.rows() != m.cols()) throw NotSymmetric("psd_sqrt: matrix not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw NotSymmetric("psd_sqrt: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw FactorizationFailed("psd_sqrt: eigendecomposition failed");
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace proxal

#endif  // PROXAL_LINALG_HPP
