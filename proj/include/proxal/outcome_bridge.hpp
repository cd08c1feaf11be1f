#ifndef PROXAL_OUTCOME_BRIDGE_HPP
#define PROXAL_OUTCOME_BRIDGE_HPP

#include <optional>

#include "proxal/dataset.hpp"
#include "proxal/kernels.hpp"
#include "proxal/linalg.hpp"

namespace proxal {

struct NystromConfig {
  Eigen::Index landmark_count = 0;
  std::uint64_t seed = 0;
};

// Two-stage outcome bridge estimator in the m-parameter form:
//   B = (K_A1A1 ⊙ K_Z1Z1 + n λ1 I)^-1 (K_A1A2 ⊙ K_Z1Z2)
//   M = K_A2A2 ⊙ (B^T K_W1W1 B)
//   alpha = (M + m λ2 I)^-1 y2
//   h(w, a) = alpha^T (K_A2a ⊙ (B^T K_W1w))
struct KpvModel {
  Matrix w1, z1, a1;  // first-stage points (n rows)
  Matrix a2;          // second-stage treatments (m rows)
  Matrix b;           // n x m
  Vector alpha;       // m
  VariableKernels kernels;
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  Eigen::Index stage1_count() const { return w1.rows(); }
  Eigen::Index stage2_count() const { return a2.rows(); }
};

namespace detail {

// Stage-1 CME pieces shared by kpv_fit and the lambda2 tuner.
struct KpvStage1 {
  Matrix k_stage1;  // K_A1A1 ⊙ K_Z1Z1
  Matrix k_w1w1;
  Matrix b;  // n x m
  KrrWeightMap weight_map;
};

inline KpvStage1 kpv_stage1(const ProxyDataset& ds1, const ProxyDataset& ds2,
                            const VariableKernels& kernels, double lambda1,
                            const std::optional<NystromConfig>& nystrom) {
  KpvStage1 s{{}, {}, {}, KrrWeightMap()};
  s.k_stage1 = gram(kernels.a, ds1.a, ds1.a).cwiseProduct(
      gram(kernels.z, ds1.z, ds1.z));
  s.k_w1w1 = gram(kernels.w, ds1.w, ds1.w);
  const double n = static_cast<double>(ds1.rows());
  if (nystrom && nystrom->landmark_count < ds1.rows()) {
    const auto idx = sample_landmarks(ds1.rows(), nystrom->landmark_count,
                                      nystrom->seed);
    s.weight_map = KrrWeightMap::nystrom(s.k_stage1, idx, n, lambda1);
  } else {
    s.weight_map = KrrWeightMap::full(s.k_stage1, n, lambda1);
  }
  const Matrix cross = gram(kernels.a, ds1.a, ds2.a).cwiseProduct(
      gram(kernels.z, ds1.z, ds2.z));
  s.b = s.weight_map.weights(cross);
  return s;
}

}  // namespace detail

inline KpvModel kpv_fit(const ProxyDataset& ds, const StageSplit& split,
                        const VariableKernels& kernels, double lambda1,
                        double lambda2,
                        const std::optional<NystromConfig>& nystrom = {}) {
  if (!(lambda1 > 0.0 && lambda2 > 0.0))
    throw InvalidConfig("kpv_fit: lambdas must be positive");
  const ProxyDataset ds1 = ds.select(split.first_stage);
  const ProxyDataset ds2 = ds.select(split.second_stage);
  auto s1 = detail::kpv_stage1(ds1, ds2, kernels, lambda1, nystrom);

  const Matrix k_a2a2 = gram(kernels.a, ds2.a, ds2.a);
  const Matrix m = k_a2a2.cwiseProduct(s1.b.transpose() * s1.k_w1w1 * s1.b);

  KpvModel model;
  model.w1 = ds1.w;
  model.z1 = ds1.z;
  model.a1 = ds1.a;
  model.a2 = ds2.a;
  model.b = std::move(s1.b);
  model.alpha = RidgeFactor(m, static_cast<double>(ds2.rows()), lambda2)
                    .solve(Vector(ds2.y));
  model.kernels = kernels;
  model.lambda1 = lambda1;
  model.lambda2 = lambda2;
  return model;
}

// h(w, a) for a batch of w points (rows) at one treatment a.
inline Vector kpv_bridge_eval_many(const KpvModel& model, const Matrix& w,
                                   const Vector& a) {
  const Matrix bt_kw = model.b.transpose() * gram(model.kernels.w, model.w1, w);
  const Vector ka = gram_vector(model.kernels.a, model.a2, a);
  return bt_kw.transpose() * ka.cwiseProduct(model.alpha);
}

inline double kpv_bridge_eval(const KpvModel& model, const Vector& w,
                              const Vector& a) {
  Matrix wp = w.transpose();
  return kpv_bridge_eval_many(model, wp, a)[0];
}

// theta1(a) = mean_i h(w_i, a) over the third-stage outcome proxies.
inline Vector kpv_dose_response(const KpvModel& model, const Matrix& third_w,
                                const Matrix& a_grid) {
  if (a_grid.rows() == 0) throw InvalidConfig("kpv_dose_response: empty grid");
  // mean over w's folds into one vector: theta(a) = alpha^T (K_A2a ⊙ c)
  const Vector c = (model.b.transpose() *
                    gram(model.kernels.w, model.w1, third_w))
                       .rowwise()
                       .mean();
  Vector out(a_grid.rows());
  for (Eigen::Index g = 0; g < a_grid.rows(); ++g) {
    const Vector ka = gram_vector(model.kernels.a, model.a2, a_grid.row(g).transpose());
    out[g] = model.alpha.dot(ka.cwiseProduct(c));
  }
  return out;
}

// Validation-loss tuner for lambda2: scores each candidate on the held-out
// first-stage triples (y1, z1, a1) and returns the minimizer, ties toward
// the smaller lambda.
inline double tune_lambda_h2(const ProxyDataset& ds, const StageSplit& split,
                             const VariableKernels& kernels, double lambda1,
                             const std::vector<double>& grid,
                             const std::optional<NystromConfig>& nystrom = {}) {
  if (grid.empty()) throw InvalidConfig("tune_lambda_h2: empty grid");
  const ProxyDataset ds1 = ds.select(split.first_stage);
  const ProxyDataset ds2 = ds.select(split.second_stage);
  auto s1 = detail::kpv_stage1(ds1, ds2, kernels, lambda1, nystrom);

  const Matrix k_a2a2 = gram(kernels.a, ds2.a, ds2.a);
  const Matrix m = k_a2a2.cwiseProduct(s1.b.transpose() * s1.k_w1w1 * s1.b);

  // Validation predictions: pred(z1_i, a1_i) = alpha^T (K_A2a1_i ⊙ B^T K_W1W1 beta_i)
  const Matrix c = s1.weight_map.weights(s1.k_stage1);  // beta at stage-1 pairs
  const Matrix pred_basis = gram(kernels.a, ds2.a, ds1.a)
                                .cwiseProduct(s1.b.transpose() * s1.k_w1w1 * c);

  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success)
    throw FactorizationFailed("tune_lambda_h2: eigendecomposition failed");
  const Vector vty = es.eigenvectors().transpose() * Vector(ds2.y);
  const double m_count = static_cast<double>(ds2.rows());

  double best_loss = 0.0;
  double best_lambda = grid.front();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector scaled =
        vty.array() / (es.eigenvalues().array().max(0.0) + m_count * grid[i]);
    const Vector alpha = es.eigenvectors() * scaled;
    const double loss =
        (Vector(ds1.y) - pred_basis.transpose() * alpha).squaredNorm() /
        static_cast<double>(ds1.rows());
    if (i == 0 || loss < best_loss) {
      best_loss = loss;
      best_lambda = grid[i];
    }
  }
  return best_lambda;
}

// Closed-form LOOCV for the first-stage smoother: inputs are the joint
// (a, z) kernel on the first stage, outputs the w Gram.
inline LoocvReport tune_lambda_h1(const ProxyDataset& ds,
                                  const StageSplit& split,
                                  const VariableKernels& kernels,
                                  const std::vector<double>& grid) {
  const ProxyDataset ds1 = ds.select(split.first_stage);
  const Matrix k_in = gram(kernels.a, ds1.a, ds1.a).cwiseProduct(
      gram(kernels.z, ds1.z, ds1.z));
  return loocv_closed_form(k_in, gram(kernels.w, ds1.w, ds1.w), grid);
}

// One-step MMR estimator:
//   L = K_AA ⊙ K_WW,  G = K_AA ⊙ K_ZZ
//   alpha = sqrt(G) (sqrt(G) L sqrt(G) + t λ I)^-1 sqrt(G) y
//   h(w, a) = alpha^T (K_Aa ⊙ K_Ww)
struct PmmrModel {
  Matrix w_train, z_train, a_train;
  Vector alpha;
  VariableKernels kernels;
  double lambda_mmr = 0.0;
};

inline PmmrModel pmmr_fit(const ProxyDataset& ds,
                          const VariableKernels& kernels, double lambda_mmr) {
  if (!(lambda_mmr > 0.0))
    throw InvalidConfig("pmmr_fit: lambda must be positive");
  const Matrix k_aa = gram(kernels.a, ds.a, ds.a);
  const Matrix l = k_aa.cwiseProduct(gram(kernels.w, ds.w, ds.w));
  const Matrix g = k_aa.cwiseProduct(gram(kernels.z, ds.z, ds.z));
  const Matrix root = psd_sqrt(g);
  const Matrix core = root * l * root;
  const Vector inner = RidgeFactor(core, static_cast<double>(ds.rows()),
                                   lambda_mmr)
                           .solve(Vector(root * ds.y));

  PmmrModel model;
  model.w_train = ds.w;
  model.z_train = ds.z;
  model.a_train = ds.a;
  model.alpha = root * inner;
  model.kernels = kernels;
  model.lambda_mmr = lambda_mmr;
  return model;
}

inline Vector pmmr_bridge_eval_many(const PmmrModel& model, const Matrix& w,
                                    const Vector& a) {
  const Matrix k_ww = gram(model.kernels.w, model.w_train, w);
  const Vector ka = gram_vector(model.kernels.a, model.a_train, a);
  return k_ww.transpose() * ka.cwiseProduct(model.alpha);
}

inline double pmmr_bridge_eval(const PmmrModel& model, const Vector& w,
                               const Vector& a) {
  Matrix wp = w.transpose();
  return pmmr_bridge_eval_many(model, wp, a)[0];
}

inline Vector pmmr_dose_response(const PmmrModel& model, const Matrix& third_w,
                                 const Matrix& a_grid) {
  if (a_grid.rows() == 0) throw InvalidConfig("pmmr_dose_response: empty grid");
  const Vector c =
      gram(model.kernels.w, model.w_train, third_w).rowwise().mean();
  Vector out(a_grid.rows());
  for (Eigen::Index g = 0; g < a_grid.rows(); ++g) {
    const Vector ka =
        gram_vector(model.kernels.a, model.a_train, a_grid.row(g).transpose());
    out[g] = model.alpha.dot(ka.cwiseProduct(c));
  }
  return out;
}

// Held-out tuner for lambda_MMR: refits on the retained fraction per
// candidate and scores squared bridge-prediction error on the holdout.
inline double tune_lambda_mmr(const ProxyDataset& ds,
                              const VariableKernels& kernels,
                              double holdout_fraction, std::uint64_t seed,
                              const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidConfig("tune_lambda_mmr: empty grid");
  const Eigen::Index t = ds.rows();
  const auto holdout_count = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(holdout_fraction * t)));
  if (holdout_count >= t)
    throw InvalidConfig("tune_lambda_mmr: holdout swallows the dataset");

  std::vector<Eigen::Index> idx(t);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::vector<Eigen::Index> hold(idx.begin(), idx.begin() + holdout_count);
  const std::vector<Eigen::Index> train(idx.begin() + holdout_count, idx.end());
  const ProxyDataset ds_train = ds.select(train);
  const ProxyDataset ds_hold = ds.select(hold);

  // The core matrix is fixed across candidates; diagonalize once.
  const Matrix k_aa = gram(kernels.a, ds_train.a, ds_train.a);
  const Matrix l = k_aa.cwiseProduct(gram(kernels.w, ds_train.w, ds_train.w));
  const Matrix g = k_aa.cwiseProduct(gram(kernels.z, ds_train.z, ds_train.z));
  const Matrix root = psd_sqrt(g);
  Eigen::SelfAdjointEigenSolver<Matrix> es(root * l * root);
  if (es.info() != Eigen::Success)
    throw FactorizationFailed("tune_lambda_mmr: eigendecomposition failed");
  const Vector vty = es.eigenvectors().transpose() * Vector(root * ds_train.y);
  const double n = static_cast<double>(ds_train.rows());

  const Matrix k_eval =
      gram(kernels.a, ds_train.a, ds_hold.a)
          .cwiseProduct(gram(kernels.w, ds_train.w, ds_hold.w));

  double best_loss = 0.0;
  double best_lambda = grid.front();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector scaled =
        vty.array() / (es.eigenvalues().array().max(0.0) + n * grid[i]);
    const Vector alpha = root * (es.eigenvectors() * scaled);
    const double loss =
        (Vector(ds_hold.y) - k_eval.transpose() * alpha).squaredNorm() /
        static_cast<double>(ds_hold.rows());
    if (i == 0 || loss < best_loss) {
      best_loss = loss;
      best_lambda = grid[i];
    }
  }
  return best_lambda;
}

}  // namespace proxal

#endif  // PROXAL_OUTCOME_BRIDGE_HPP
