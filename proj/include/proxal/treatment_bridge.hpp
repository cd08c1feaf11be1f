#ifndef PROXAL_TREATMENT_BRIDGE_HPP
#define PROXAL_TREATMENT_BRIDGE_HPP

#include <Eigen/LU>
#include <optional>

#include "proxal/dataset.hpp"
#include "proxal/kernels.hpp"
#include "proxal/linalg.hpp"
#include "proxal/outcome_bridge.hpp"  // NystromConfig

namespace proxal {

// Two-stage treatment bridge estimator:
//   B      = (K_W1W1 ⊙ K_A1A1 + n λ1 I)^-1 (K_W1W2 ⊙ K_A1A2)
//   Bt_:,j = (1/(m-1)) Σ_{l≠j} (K_W1W1 ⊙ K_A1A1 + n λ1 I)^-1 (K_W1w2_l ⊙ K_A1a2_j)
//   L      = [S, c] with S = B^T K_Z1Z1 B ⊙ K_A2A2, c = (B^T K_Z1Z1 Bt ⊙ K_A2A2)(1/m)1
//   M      = [c; (1/m²)1^T (Bt^T K_Z1Z1 Bt ⊙ K_A2A2) 1]
//   N      = [L; M^T]  ((m+1) x (m+1))
//   gamma  = ((1/m) L^T L + λ2 N)^-1 M
//   phi(z, a) = gamma_1:m^T [(B^T K_Z1z) ⊙ K_A2a]
//             + gamma_{m+1} (1/m) 1^T [(Bt^T K_Z1z) ⊙ K_A2a]
struct KapModel {
  Matrix w1, z1, a1;      // first-stage points (n rows)
  Matrix w2, a2;          // second-stage points (m rows)
  Vector y3;              // third-stage outcomes (t rows)
  Matrix z3, a3;          // third-stage points
  Matrix b;               // n x m
  Matrix b_tilde;         // n x m, leave-one-out averaged columns
  Vector gamma;           // m + 1
  VariableKernels kernels;
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  Eigen::Index stage1_count() const { return w1.rows(); }
  Eigen::Index stage2_count() const { return w2.rows(); }
  Eigen::Index stage3_count() const { return y3.size(); }
};

namespace detail {

// Everything the gamma solve and the lambda2 tuner share.
struct KapStage {
  Matrix k_stage1;  // K_W1W1 ⊙ K_A1A1
  Matrix k_z1z1;
  KrrWeightMap weight_map;
  Matrix b;        // n x m
  Matrix b_tilde;  // n x m
  Matrix l;        // m x (m+1)
  Vector m_vec;    // m + 1
  Matrix n_mat;    // (m+1) x (m+1)
};

inline KapStage kap_stage12(const ProxyDataset& ds1, const ProxyDataset& ds2,
                            const VariableKernels& kernels, double lambda1,
                            const std::optional<NystromConfig>& nystrom) {
  if (ds2.rows() < 2)
    throw TooFewStage2Samples(
        "kap: second stage needs >= 2 samples for the leave-one-out average");
  KapStage s{{}, {}, KrrWeightMap(), {}, {}, {}, {}, {}};
  s.k_stage1 = gram(kernels.w, ds1.w, ds1.w).cwiseProduct(
      gram(kernels.a, ds1.a, ds1.a));
  s.k_z1z1 = gram(kernels.z, ds1.z, ds1.z);
  const double n = static_cast<double>(ds1.rows());
  if (nystrom && nystrom->landmark_count < ds1.rows()) {
    const auto idx = sample_landmarks(ds1.rows(), nystrom->landmark_count,
                                      nystrom->seed);
    s.weight_map = KrrWeightMap::nystrom(s.k_stage1, idx, n, lambda1);
  } else {
    s.weight_map = KrrWeightMap::full(s.k_stage1, n, lambda1);
  }

  const Matrix k_w12 = gram(kernels.w, ds1.w, ds2.w);
  const Matrix k_a12 = gram(kernels.a, ds1.a, ds2.a);
  s.b = s.weight_map.weights(k_w12.cwiseProduct(k_a12));

  // Column j of the leave-one-out average needs Σ_{l≠j} K_W1w2_l, i.e. the
  // row sums of K_W1W2 minus column j; the treatment factor K_A1a2_j does
  // not vary with l, so it multiplies outside the sum.
  const double m = static_cast<double>(ds2.rows());
  const Vector row_sums = k_w12.rowwise().sum();
  const Matrix loo = (row_sums.replicate(1, ds2.rows()) - k_w12)
                         .cwiseProduct(k_a12) /
                     (m - 1.0);
  s.b_tilde = s.weight_map.weights(loo);

  const Matrix k_a2a2 = gram(kernels.a, ds2.a, ds2.a);
  const Matrix bt_kz = s.b.transpose() * s.k_z1z1;  // m x n
  const Matrix big_s = (bt_kz * s.b).cwiseProduct(k_a2a2);
  const Vector c = (bt_kz * s.b_tilde).cwiseProduct(k_a2a2).rowwise().mean();
  const double tail = (s.b_tilde.transpose() * s.k_z1z1 * s.b_tilde)
                          .cwiseProduct(k_a2a2)
                          .sum() /
                      (m * m);

  const auto mp1 = ds2.rows() + 1;
  s.l.resize(ds2.rows(), mp1);
  s.l.leftCols(ds2.rows()) = big_s;
  s.l.col(ds2.rows()) = c;
  s.m_vec.resize(mp1);
  s.m_vec.head(ds2.rows()) = c;
  s.m_vec[ds2.rows()] = tail;
  s.n_mat.resize(mp1, mp1);
  s.n_mat.topRows(ds2.rows()) = s.l;
  s.n_mat.row(ds2.rows()) = s.m_vec.transpose();
  return s;
}

inline Vector kap_gamma(const KapStage& s, double m, double lambda2) {
  const Matrix lhs = (s.l.transpose() * s.l) / m + lambda2 * s.n_mat;
  Eigen::PartialPivLU<Matrix> lu(lhs);
  Vector gamma = lu.solve(s.m_vec);
  // Discrete covariates duplicate rows of L, leaving the system singular in
  // floating point even though it stays consistent; fall back to the
  // minimum-norm least-squares solution when plain LU degrades.
  const double scale = s.m_vec.norm() + 1.0;
  if (!gamma.allFinite() || (lhs * gamma - s.m_vec).norm() > 1e-8 * scale)
    gamma = lhs.completeOrthogonalDecomposition().solve(s.m_vec);
  if (!gamma.allFinite())
    throw FactorizationFailed("kap: gamma solve produced non-finite values");
  return gamma;
}

}  // namespace detail

inline KapModel kap_fit(const ProxyDataset& ds, const StageSplit& split,
                        const VariableKernels& kernels, double lambda1,
                        double lambda2,
                        const std::optional<NystromConfig>& nystrom = {}) {
  if (!(lambda1 > 0.0 && lambda2 > 0.0))
    throw InvalidConfig("kap_fit: lambdas must be positive");
  const ProxyDataset ds1 = ds.select(split.first_stage);
  const ProxyDataset ds2 = ds.select(split.second_stage);
  const ProxyDataset ds3 = ds.select(split.third_stage);
  auto s = detail::kap_stage12(ds1, ds2, kernels, lambda1, nystrom);

  KapModel model;
  model.w1 = ds1.w;
  model.z1 = ds1.z;
  model.a1 = ds1.a;
  model.w2 = ds2.w;
  model.a2 = ds2.a;
  model.y3 = ds3.y;
  model.z3 = ds3.z;
  model.a3 = ds3.a;
  model.gamma = detail::kap_gamma(s, static_cast<double>(ds2.rows()), lambda2);
  model.b = std::move(s.b);
  model.b_tilde = std::move(s.b_tilde);
  model.kernels = kernels;
  model.lambda1 = lambda1;
  model.lambda2 = lambda2;
  return model;
}

// phi(z, a) for a batch of z points (rows) at one treatment a.
inline Vector kap_bridge_eval_many(const KapModel& model, const Matrix& z,
                                   const Vector& a) {
  const Matrix k_z = gram(model.kernels.z, model.z1, z);  // n x q
  const Vector ka = gram_vector(model.kernels.a, model.a2, a);
  const auto m = model.stage2_count();
  const Vector head = model.gamma.head(m).cwiseProduct(ka);
  const Vector tail = (model.gamma[m] / static_cast<double>(m)) * ka;
  return k_z.transpose() * (model.b * head + model.b_tilde * tail);
}

inline double kap_bridge_eval(const KapModel& model, const Vector& z,
                              const Vector& a) {
  Matrix zp = z.transpose();
  return kap_bridge_eval_many(model, zp, a)[0];
}

// theta2(a): phi paired with the ridge estimate of E[Y phi_Z(Z) | A = a]
// over the third-stage samples.
inline Vector kap_dose_response(const KapModel& model, const Matrix& a_grid,
                                double lambda3,
                                const std::optional<NystromConfig>& nystrom = {}) {
  if (!(lambda3 > 0.0))
    throw InvalidConfig("kap_dose_response: lambda3 must be positive");
  if (a_grid.rows() == 0) throw InvalidConfig("kap_dose_response: empty grid");
  const Matrix k_a3a3 = gram(model.kernels.a, model.a3, model.a3);
  const double t = static_cast<double>(model.stage3_count());
  KrrWeightMap vmap = KrrWeightMap::full(k_a3a3, t, lambda3);
  if (nystrom && nystrom->landmark_count < model.stage3_count()) {
    const auto idx = sample_landmarks(model.stage3_count(),
                                      nystrom->landmark_count, nystrom->seed);
    vmap = KrrWeightMap::nystrom(k_a3a3, idx, t, lambda3);
  }
  const Matrix k_grid = gram(model.kernels.a, model.a3, a_grid);  // t x G
  const Matrix v = vmap.weights(k_grid);                          // t x G
  const Matrix k_z13 = gram(model.kernels.z, model.z1, model.z3);
  const Matrix yv = model.y3.asDiagonal() * v;  // t x G
  const Matrix u1 = model.b.transpose() * (k_z13 * yv);        // m x G
  const Matrix u2 = model.b_tilde.transpose() * (k_z13 * yv);  // m x G

  const auto m = model.stage2_count();
  Vector out(a_grid.rows());
  for (Eigen::Index g = 0; g < a_grid.rows(); ++g) {
    const Vector ka = gram_vector(model.kernels.a, model.a2, a_grid.row(g).transpose());
    out[g] = model.gamma.head(m).dot(u1.col(g).cwiseProduct(ka)) +
             model.gamma[m] * u2.col(g).cwiseProduct(ka).mean();
  }
  return out;
}

// Validation-loss tuner for lambda2: scores candidates on the held-out
// first-stage triples through the closed-form loss
//   (1/n) gamma^T E E^T gamma - 2 gamma^T f + (2 sigma²/m) Tr((L^T L + m λ I)^-1 L^T L),
// where E maps coefficients to bridge predictions at the validation pairs
// (through C, the ridge smoother on the first stage) and f uses the
// leave-one-out smoother C-bar. Ties go to the smaller lambda.
inline double tune_lambda_phi2(const ProxyDataset& ds, const StageSplit& split,
                               const VariableKernels& kernels, double lambda1,
                               double sigma_phi,
                               const std::vector<double>& grid,
                               const std::optional<NystromConfig>& nystrom = {}) {
  if (grid.empty()) throw InvalidConfig("tune_lambda_phi2: empty grid");
  if (!(sigma_phi > 0.0))
    throw InvalidConfig("tune_lambda_phi2: sigma must be positive");
  const ProxyDataset ds1 = ds.select(split.first_stage);
  const ProxyDataset ds2 = ds.select(split.second_stage);
  auto s = detail::kap_stage12(ds1, ds2, kernels, lambda1, nystrom);

  const double n = static_cast<double>(ds1.rows());
  const double m = static_cast<double>(ds2.rows());
  const Matrix c = s.weight_map.weights(s.k_stage1);
  const Vector row_sums = s.k_stage1.rowwise().sum();
  // Leave-one-out smoother: same row-sum trick as b_tilde, but over the
  // first-stage pairs themselves (the smoothed-kernel factor here is the
  // joint (w, a) kernel, so the whole column sits inside the sum).
  const Matrix c_bar =
      s.weight_map.weights(
          (row_sums.replicate(1, ds1.rows()) - s.k_stage1)) /
      n;

  const Matrix k_a21 = gram(kernels.a, ds2.a, ds1.a);  // m x n
  const Matrix bt_kz = s.b.transpose() * s.k_z1z1;
  const Matrix btt_kz = s.b_tilde.transpose() * s.k_z1z1;
  const auto mp1 = ds2.rows() + 1;
  Matrix e(mp1, ds1.rows());
  e.topRows(ds2.rows()) = (bt_kz * c).cwiseProduct(k_a21);
  e.row(ds2.rows()) = (btt_kz * c).cwiseProduct(k_a21).colwise().mean();
  Vector f(mp1);
  f.head(ds2.rows()) = (bt_kz * c_bar).cwiseProduct(k_a21).rowwise().mean();
  f[ds2.rows()] = (btt_kz * c_bar).cwiseProduct(k_a21).mean();
  const Matrix ee = e * e.transpose();

  // Penalty trace per lambda through one eigendecomposition of L^T L.
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.l.transpose() * s.l);
  if (es.info() != Eigen::Success)
    throw FactorizationFailed("tune_lambda_phi2: eigendecomposition failed");
  const Vector eig = es.eigenvalues().cwiseMax(0.0);

  double best_loss = 0.0;
  double best_lambda = grid.front();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector gamma = detail::kap_gamma(s, m, grid[i]);
    const double penalty =
        (2.0 * sigma_phi * sigma_phi / m) *
        (eig.array() / (eig.array() + m * grid[i])).sum();
    const double loss = gamma.dot(ee * gamma) / n - 2.0 * gamma.dot(f) +
                        penalty;
    if (i == 0 || loss < best_loss) {
      best_loss = loss;
      best_lambda = grid[i];
    }
  }
  return best_lambda;
}

// Closed-form LOOCV for the first-stage smoother: inputs are the joint
// (w, a) kernel on the first stage, outputs the z Gram.
inline LoocvReport tune_lambda_phi1(const ProxyDataset& ds,
                                    const StageSplit& split,
                                    const VariableKernels& kernels,
                                    const std::vector<double>& grid) {
  const ProxyDataset ds1 = ds.select(split.first_stage);
  const Matrix k_in = gram(kernels.w, ds1.w, ds1.w).cwiseProduct(
      gram(kernels.a, ds1.a, ds1.a));
  return loocv_closed_form(k_in, gram(kernels.z, ds1.z, ds1.z), grid);
}

// Closed-form LOOCV for the third-stage regression of y * phi_Z(z) on a:
// inputs K_AA, outputs K_ZZ ⊙ y y^T.
inline LoocvReport tune_lambda_phi3(const ProxyDataset& ds,
                                    const VariableKernels& kernels,
                                    const std::vector<double>& grid) {
  const Matrix k_in = gram(kernels.a, ds.a, ds.a);
  const Matrix g_out = gram(kernels.z, ds.z, ds.z)
                           .cwiseProduct(Matrix(ds.y * ds.y.transpose()));
  return loocv_closed_form(k_in, g_out, grid);
}

}  // namespace proxal

#endif  // PROXAL_TREATMENT_BRIDGE_HPP
