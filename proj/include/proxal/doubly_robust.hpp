#ifndef PROXAL_DOUBLY_ROBUST_HPP
#define PROXAL_DOUBLY_ROBUST_HPP

#include <optional>
#include <string>
#include <variant>

#include "proxal/outcome_bridge.hpp"
#include "proxal/treatment_bridge.hpp"

namespace proxal {

enum class Method { Kpv, Pmmr, Kap, DrKpv, DrPmmr };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Kpv: return "KPV";
    case Method::Pmmr: return "PMMR";
    case Method::Kap: return "KAP";
    case Method::DrKpv: return "DRKPV";
    case Method::DrPmmr: return "DRPMMR";
  }
  return "?";
}

struct DoseResponseCurve {
  Vector a_grid;
  Vector theta1, theta2, theta3, theta_dr;
  Method method = Method::DrKpv;
};

using OutcomeModel = std::variant<KpvModel, PmmrModel>;

// Combines the outcome and treatment bridges with the slack correction:
//   theta_dr(a) = theta1(a) + theta2(a) - theta3(a),
//   theta3(a)   = Σ_i xi_i(a) phi(z_i, a) h(w_i, a),
//   xi(a)       = (K_AA + t λ_DR I)^-1 K_Aa.
// Kernel cross-Grams against the full dataset are cached at construction so
// each grid point costs O(t²) at most.
class DrEstimator {
 public:
  DrEstimator(const ProxyDataset& ds, OutcomeModel outcome,
              KapModel treatment, double lambda_dr, double lambda_phi3,
              const std::optional<NystromConfig>& nystrom = {})
      : outcome_(std::move(outcome)),
        treatment_(std::move(treatment)),
        lambda_dr_(lambda_dr),
        lambda_phi3_(lambda_phi3),
        nystrom_(nystrom) {
    if (!(lambda_dr > 0.0 && lambda_phi3 > 0.0))
      throw InvalidConfig("dr estimator: lambdas must be positive");
    a_full_ = ds.a;
    const Matrix k_aa = gram(a_kernel(), ds.a, ds.a);
    const double t = static_cast<double>(ds.rows());
    if (nystrom_ && nystrom_->landmark_count < ds.rows()) {
      const auto idx = sample_landmarks(ds.rows(), nystrom_->landmark_count,
                                        nystrom_->seed);
      xi_map_ = KrrWeightMap::nystrom(k_aa, idx, t, lambda_dr);
    } else {
      xi_map_ = KrrWeightMap::full(k_aa, t, lambda_dr);
    }

    if (const auto* kpv = std::get_if<KpvModel>(&outcome_)) {
      hw_ = kpv->b.transpose() * gram(kpv->kernels.w, kpv->w1, ds.w);
    } else {
      const auto& pmmr = std::get<PmmrModel>(outcome_);
      hw_ = gram(pmmr.kernels.w, pmmr.w_train, ds.w);
    }
    pz1_ = treatment_.b.transpose() *
           gram(treatment_.kernels.z, treatment_.z1, ds.z);
    pz2_ = treatment_.b_tilde.transpose() *
           gram(treatment_.kernels.z, treatment_.z1, ds.z);
  }

  const OutcomeModel& outcome_model() const { return outcome_; }
  const KapModel& treatment_model() const { return treatment_; }
  double lambda_dr() const { return lambda_dr_; }
  double lambda_phi3() const { return lambda_phi3_; }
  Method method() const {
    return std::holds_alternative<KpvModel>(outcome_) ? Method::DrKpv
                                                      : Method::DrPmmr;
  }

  // h(w_i, a) across the full dataset.
  Vector h_values(const Vector& a) const {
    if (const auto* kpv = std::get_if<KpvModel>(&outcome_)) {
      const Vector ka = gram_vector(kpv->kernels.a, kpv->a2, a);
      return hw_.transpose() * kpv->alpha.cwiseProduct(ka);
    }
    const auto& pmmr = std::get<PmmrModel>(outcome_);
    const Vector ka = gram_vector(pmmr.kernels.a, pmmr.a_train, a);
    return hw_.transpose() * pmmr.alpha.cwiseProduct(ka);
  }

  // phi(z_i, a) across the full dataset.
  Vector phi_values(const Vector& a) const {
    const Vector ka = gram_vector(treatment_.kernels.a, treatment_.a2, a);
    const auto m = treatment_.stage2_count();
    return pz1_.transpose() * treatment_.gamma.head(m).cwiseProduct(ka) +
           pz2_.transpose() *
               ((treatment_.gamma[m] / static_cast<double>(m)) * ka);
  }

  Vector xi(const Vector& a) const {
    const Matrix k_a = gram(a_kernel(), a_full_, Matrix(a.transpose()));
    return xi_map_.weights(k_a).col(0);
  }

  double slack_term(const Vector& a) const {
    return xi(a).dot(phi_values(a).cwiseProduct(h_values(a)));
  }

  DoseResponseCurve dose_response(const Vector& a_grid) const {
    if (a_grid.size() == 0)
      throw InvalidConfig("dr dose_response: empty grid");
    DoseResponseCurve curve;
    curve.a_grid = a_grid;
    curve.method = method();
    curve.theta1.resize(a_grid.size());
    curve.theta3.resize(a_grid.size());
    for (Eigen::Index g = 0; g < a_grid.size(); ++g) {
      const Vector a = Vector::Constant(1, a_grid[g]);
      curve.theta1[g] = h_values(a).mean();
      curve.theta3[g] = slack_term(a);
    }
    Matrix grid_pts = a_grid;
    curve.theta2 =
        kap_dose_response(treatment_, grid_pts, lambda_phi3_, nystrom_);
    curve.theta_dr = curve.theta1 + curve.theta2 - curve.theta3;
    return curve;
  }

 private:
  const KernelSpec& a_kernel() const {
    if (const auto* kpv = std::get_if<KpvModel>(&outcome_))
      return kpv->kernels.a;
    return std::get<PmmrModel>(outcome_).kernels.a;
  }

  OutcomeModel outcome_;
  KapModel treatment_;
  double lambda_dr_;
  double lambda_phi3_;
  std::optional<NystromConfig> nystrom_;
  Matrix a_full_;
  KrrWeightMap xi_map_;
  Matrix hw_;   // outcome-bridge basis at all w_i
  Matrix pz1_;  // treatment-bridge basis at all z_i
  Matrix pz2_;
};

inline double slack_term(const DrEstimator& est, const Vector& a) {
  return est.slack_term(a);
}

inline DoseResponseCurve dr_dose_response(const DrEstimator& est,
                                          const Vector& a_grid) {
  return est.dose_response(a_grid);
}

// Closed-form LOOCV for the slack-term smoother: inputs K_AA, outputs
// K_ZZ ⊙ K_WW.
inline LoocvReport tune_lambda_dr(const ProxyDataset& ds,
                                  const VariableKernels& kernels,
                                  const std::vector<double>& grid) {
  const Matrix k_in = gram(kernels.a, ds.a, ds.a);
  const Matrix g_out = gram(kernels.z, ds.z, ds.z).cwiseProduct(
      gram(kernels.w, ds.w, ds.w));
  return loocv_closed_form(k_in, g_out, grid);
}

namespace detail {

inline Vector jittered(const Vector& coef, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw InvalidConfig("jitter: sigma must be nonnegative");
  if (sigma == 0.0) return coef;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Vector out = coef;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += noise(rng);
  return out;
}

}  // namespace detail

// Coefficient perturbation for the misspecification experiment; sigma is the
// standard deviation of the added Gaussian noise. Returns a copy.
inline KpvModel jitter_bridge(const KpvModel& model, double sigma,
                              std::uint64_t seed) {
  KpvModel out = model;
  out.alpha = detail::jittered(model.alpha, sigma, seed);
  return out;
}

inline PmmrModel jitter_bridge(const PmmrModel& model, double sigma,
                               std::uint64_t seed) {
  PmmrModel out = model;
  out.alpha = detail::jittered(model.alpha, sigma, seed);
  return out;
}

inline KapModel jitter_bridge(const KapModel& model, double sigma,
                              std::uint64_t seed) {
  KapModel out = model;
  out.gamma = detail::jittered(model.gamma, sigma, seed);
  return out;
}

}  // namespace proxal

#endif  // PROXAL_DOUBLY_ROBUST_HPP
