#ifndef PROXAL_KERNELS_HPP
#define PROXAL_KERNELS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "proxal/common.hpp"

namespace proxal {

enum class KernelFamily { Gaussian, ColumnwiseGaussian, MaternHalfInteger };

// Kernel family plus its bandwidth(s). ColumnwiseGaussian carries one
// lengthscale per input dimension; the Matern smoothness is nu = p + 1/2.
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  Vector lengthscales;   // size 1 except for ColumnwiseGaussian
  int smoothness_p = 0;  // Matern only

  static KernelSpec gaussian(double lengthscale) {
    KernelSpec s;
    s.family = KernelFamily::Gaussian;
    s.lengthscales = Vector::Constant(1, lengthscale);
    s.validate();
    return s;
  }

  static KernelSpec columnwise_gaussian(Vector lengthscales) {
    KernelSpec s;
    s.family = KernelFamily::ColumnwiseGaussian;
    s.lengthscales = std::move(lengthscales);
    s.validate();
    return s;
  }

  static KernelSpec matern(double lengthscale, int p) {
    KernelSpec s;
    s.family = KernelFamily::MaternHalfInteger;
    s.lengthscales = Vector::Constant(1, lengthscale);
    s.smoothness_p = p;
    s.validate();
    return s;
  }

  void validate() const {
    if (lengthscales.size() == 0)
      throw InvalidConfig("kernel spec has no lengthscale");
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
      const double l = lengthscales[i];
      if (!(l > 0.0) || !std::isfinite(l))
        throw InvalidConfig("lengthscales must be positive and finite");
    }
    if (family != KernelFamily::ColumnwiseGaussian && lengthscales.size() != 1)
      throw InvalidConfig("scalar-lengthscale family given a vector");
    if (smoothness_p < 0) throw InvalidConfig("Matern smoothness p must be >= 0");
  }
};

namespace detail {

// Closed-form half-integer Matern: polynomial-times-exponential in the
// scaled distance. p = 0 reduces to exp(-d / l).
inline double matern_half_integer(double dist, double lengthscale, int p) {
  const double nu = p + 0.5;
  const double s = std::sqrt(2.0 * nu) * dist / lengthscale;
  double poly = 0.0;
  // Gamma(p+1)/Gamma(2p+1) * sum_k (p+k)!/(k!(p-k)!) (2s)^(p-k)
  double ratio = std::tgamma(p + 1.0) / std::tgamma(2.0 * p + 1.0);
  for (int k = 0; k <= p; ++k) {
    const double coef = std::tgamma(p + k + 1.0) /
                        (std::tgamma(k + 1.0) * std::tgamma(p - k + 1.0));
    poly += coef * std::pow(2.0 * s, static_cast<double>(p - k));
  }
  return std::exp(-s) * ratio * poly;
}

// Pairwise squared Euclidean distances between row sets, clamped at zero
// against roundoff.
inline Matrix squared_distances(const Matrix& left, const Matrix& right) {
  const Vector ln = left.rowwise().squaredNorm();
  const Vector rn = right.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * left * right.transpose());
  d2.colwise() += ln;
  d2.rowwise() += rn.transpose();
  return d2.cwiseMax(0.0);
}

}  // namespace detail

// Gram matrix between two point sets (rows = points). Entry (i, j) is
// k(left_i, right_j).
inline Matrix gram(const KernelSpec& spec, const Matrix& left,
                   const Matrix& right) {
  spec.validate();
  if (left.cols() != right.cols())
    throw DimensionMismatch("gram: left/right point dimensions differ");
  if (spec.family == KernelFamily::ColumnwiseGaussian &&
      spec.lengthscales.size() != left.cols())
    throw DimensionMismatch(
        "gram: columnwise lengthscale count does not match input dimension");

  switch (spec.family) {
    case KernelFamily::Gaussian: {
      const double l = spec.lengthscales[0];
      return (detail::squared_distances(left, right) / (-2.0 * l * l))
          .array()
          .exp();
    }
    case KernelFamily::ColumnwiseGaussian: {
      // Product of per-dimension Gaussians = one Gaussian on inputs with
      // each column rescaled by its lengthscale.
      const Vector inv = spec.lengthscales.cwiseInverse();
      const Matrix ls = left * inv.asDiagonal();
      const Matrix rs = right * inv.asDiagonal();
      return (detail::squared_distances(ls, rs) / -2.0).array().exp();
    }
    case KernelFamily::MaternHalfInteger: {
      const double l = spec.lengthscales[0];
      const int p = spec.smoothness_p;
      return detail::squared_distances(left, right)
          .cwiseSqrt()
          .unaryExpr([l, p](double d) {
            return detail::matern_half_integer(d, l, p);
          });
    }
  }
  return Matrix();  // unreachable
}

inline Vector gram_vector(const KernelSpec& spec, const Matrix& left,
                          const Vector& point) {
  Matrix rp = point.transpose();
  return gram(spec, left, rp).col(0);
}

// Per-variable kernel choice shared by all estimation stages.
struct VariableKernels {
  KernelSpec a;
  KernelSpec z;
  KernelSpec w;
};

// Quantile of the pairwise squared distances over the strict upper triangle,
// halved and square-rooted. quantile = 0.5 is the usual median heuristic.
// Linear interpolation between order statistics; zero distances between
// distinct rows stay in the pool.
inline double median_heuristic(const Matrix& points, double quantile = 0.5) {
  if (points.rows() < 2)
    throw TooFewSamples("median_heuristic: need at least 2 points");
  if (!(quantile > 0.0 && quantile < 1.0))
    throw InvalidConfig("median_heuristic: quantile must be in (0, 1)");

  std::vector<double> sq;
  sq.reserve(static_cast<std::size_t>(points.rows()) * (points.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j)
      sq.push_back((points.row(i) - points.row(j)).squaredNorm());
  std::sort(sq.begin(), sq.end());
  if (sq.back() == 0.0)
    throw AllPointsIdentical("median_heuristic: all pairwise distances zero");

  const double pos = quantile * (static_cast<double>(sq.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  const double q = sq[lo] + frac * (sq[hi] - sq[lo]);
  return std::sqrt(q / 2.0);
}

// Per-column median heuristic, for the columnwise Gaussian kernel.
inline Vector columnwise_median_heuristic(const Matrix& points,
                                          double quantile = 0.5) {
  Vector ls(points.cols());
  for (Eigen::Index d = 0; d < points.cols(); ++d)
    ls[d] = median_heuristic(points.col(d), quantile);
  return ls;
}

}  // namespace proxal

#endif  // PROXAL_KERNELS_HPP
