#ifndef PROXAL_TOY_WORLD_HPP
#define PROXAL_TOY_WORLD_HPP

#include <array>
#include <cmath>

#include "proxal/dataset.hpp"

namespace proxal {

// Finite world with binary U, A, Z, W and deterministic outcome E[Y|u,a].
// The joint factors as p(u) p(a|u) p(z|u,a) p(w|u), which enforces the
// conditional independencies Y ⊥ Z | U,A and W ⊥ (Z,A) | U by construction.
// Bridge equations reduce to 2x2 linear systems, so exact bridge functions
// and exact dose-response values are available by enumeration.
class DiscreteToyWorld {
 public:
  using Table2 = std::array<std::array<double, 2>, 2>;

  static DiscreteToyWorld random(std::uint64_t seed) {
    DiscreteToyWorld w;
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> prob(0.05, 0.95);
    std::uniform_real_distribution<double> outcome(-1.0, 1.0);
    w.p_u_ = prob(rng);
    for (int u = 0; u < 2; ++u) {
      w.p_a1_given_u_[u] = prob(rng);
      w.p_w1_given_u_[u] = prob(rng);
      for (int a = 0; a < 2; ++a) {
        w.p_z1_given_ua_[u][a] = prob(rng);
        w.ey_[u][a] = outcome(rng);
      }
    }
    w.solve_bridges();
    return w;
  }

  // Y == c regardless of (u, a); h0 is then constant c.
  static DiscreteToyWorld constant_outcome(std::uint64_t seed, double c) {
    DiscreteToyWorld w = random(seed);
    for (int u = 0; u < 2; ++u)
      for (int a = 0; a < 2; ++a) w.ey_[u][a] = c;
    w.solve_bridges();
    return w;
  }

  // A independent of U: no confounding, phi0 is identically 1.
  static DiscreteToyWorld no_confounding(std::uint64_t seed) {
    DiscreteToyWorld w = random(seed);
    w.p_a1_given_u_[0] = w.p_a1_given_u_[1] = 0.5 * (w.p_a1_given_u_[0] +
                                                     w.p_a1_given_u_[1]);
    w.solve_bridges();
    return w;
  }

  double joint(int u, int a, int z, int w) const {
    return pu(u) * pa_given_u(a, u) * pz_given_ua(z, u, a) * pw_given_u(w, u);
  }

  double outcome(int u, int a) const { return ey_[u][a]; }

  double theta_ate(int a) const {
    return pu(0) * ey_[0][a] + pu(1) * ey_[1][a];
  }

  double exact_outcome_bridge(int w, int a) const { return h0_[w][a]; }
  double exact_treatment_bridge(int z, int a) const { return phi0_[z][a]; }

  // E[phi(Z,a)(Y - h(W,a)) | A=a] + E[h(W,a)] for arbitrary bridge tables
  // (indexed [value][a]), by exact enumeration.
  double dr_estimate(const Table2& h, const Table2& phi, int a) const {
    double correction = 0.0;
    const double pa = marginal_a(a);
    for (int u = 0; u < 2; ++u)
      for (int z = 0; z < 2; ++z)
        for (int w = 0; w < 2; ++w)
          correction += joint(u, a, z, w) / pa * phi[z][a] *
                        (ey_[u][a] - h[w][a]);
    return correction + mean_h(h, a);
  }

  double mean_h(const Table2& h, int a) const {
    double v = 0.0;
    for (int w = 0; w < 2; ++w) v += marginal_w(w) * h[w][a];
    return v;
  }

  // E[phi(Z,a) h(W,a) | A=a]
  double slack(const Table2& h, const Table2& phi, int a) const {
    double v = 0.0;
    const double pa = marginal_a(a);
    for (int u = 0; u < 2; ++u)
      for (int z = 0; z < 2; ++z)
        for (int w = 0; w < 2; ++w)
          v += joint(u, a, z, w) / pa * phi[z][a] * h[w][a];
    return v;
  }

  Table2 exact_h() const { return h0_; }
  Table2 exact_phi() const { return phi0_; }

  double marginal_a(int a) const {
    return pu(0) * pa_given_u(a, 0) + pu(1) * pa_given_u(a, 1);
  }
  double marginal_w(int w) const {
    return pu(0) * pw_given_u(w, 0) + pu(1) * pw_given_u(w, 1);
  }
  double joint_wa(int w, int a) const {
    return pu(0) * pa_given_u(a, 0) * pw_given_u(w, 0) +
           pu(1) * pa_given_u(a, 1) * pw_given_u(w, 1);
  }

  // i.i.d. draw from the joint, with supports mapped to real values {0, 1}.
  ProxyDataset sample(Eigen::Index t, std::uint64_t seed) const {
    if (t < 2) throw TooFewSamples("toy world sample: t >= 2 required");
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ProxyDataset ds;
    ds.y.resize(t);
    ds.a.resize(t, 1);
    ds.z.resize(t, 1);
    ds.w.resize(t, 1);
    for (Eigen::Index i = 0; i < t; ++i) {
      const int u = unif(rng) < p_u_ ? 1 : 0;
      const int a = unif(rng) < p_a1_given_u_[u] ? 1 : 0;
      const int z = unif(rng) < p_z1_given_ua_[u][a] ? 1 : 0;
      const int w = unif(rng) < p_w1_given_u_[u] ? 1 : 0;
      ds.y[i] = ey_[u][a];
      ds.a(i, 0) = a;
      ds.z(i, 0) = z;
      ds.w(i, 0) = w;
    }
    return ds;
  }

 private:
  double pu(int u) const { return u == 1 ? p_u_ : 1.0 - p_u_; }
  double pa_given_u(int a, int u) const {
    return a == 1 ? p_a1_given_u_[u] : 1.0 - p_a1_given_u_[u];
  }
  double pz_given_ua(int z, int u, int a) const {
    return z == 1 ? p_z1_given_ua_[u][a] : 1.0 - p_z1_given_ua_[u][a];
  }
  double pw_given_u(int w, int u) const {
    return w == 1 ? p_w1_given_u_[u] : 1.0 - p_w1_given_u_[u];
  }

  static std::array<double, 2> solve2(const std::array<std::array<double, 2>, 2>& m,
                                      const std::array<double, 2>& rhs) {
    const double det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if (std::abs(det) < 1e-8)
      throw SingularBridgeSystem("toy world: bridge system singular");
    return {(rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det};
  }

  void solve_bridges() {
    for (int a = 0; a < 2; ++a) {
      // Outcome bridge: sum_w h(w,a) p(w|z,a) = E[Y|z,a] for z in {0,1}.
      std::array<std::array<double, 2>, 2> coeff{};
      std::array<double, 2> rhs{};
      for (int z = 0; z < 2; ++z) {
        double pza = 0.0;
        for (int u = 0; u < 2; ++u)
          pza += pu(u) * pa_given_u(a, u) * pz_given_ua(z, u, a);
        for (int w = 0; w < 2; ++w) {
          double pzaw = 0.0;
          for (int u = 0; u < 2; ++u) pzaw += joint(u, a, z, w);
          coeff[z][w] = pzaw / pza;
        }
        double ey_za = 0.0;
        for (int u = 0; u < 2; ++u)
          ey_za += ey_[u][a] * pu(u) * pa_given_u(a, u) * pz_given_ua(z, u, a) /
                   pza;
        rhs[z] = ey_za;
      }
      const auto h = solve2(coeff, rhs);
      h0_[0][a] = h[0];
      h0_[1][a] = h[1];

      // Treatment bridge: sum_z phi(z,a) p(z|w,a) = p(w) p(a) / p(w,a).
      for (int w = 0; w < 2; ++w) {
        const double pwa = joint_wa(w, a);
        for (int z = 0; z < 2; ++z) {
          double pzwa = 0.0;
          for (int u = 0; u < 2; ++u) pzwa += joint(u, a, z, w);
          coeff[w][z] = pzwa / pwa;
        }
        rhs[w] = marginal_w(w) * marginal_a(a) / pwa;
      }
      const auto phi = solve2(coeff, rhs);
      phi0_[0][a] = phi[0];
      phi0_[1][a] = phi[1];
    }
  }

  double p_u_ = 0.5;
  std::array<double, 2> p_a1_given_u_{};
  std::array<double, 2> p_w1_given_u_{};
  Table2 p_z1_given_ua_{};
  Table2 ey_{};
  Table2 h0_{};
  Table2 phi0_{};
};

}  // namespace proxal

#endif  // PROXAL_TOY_WORLD_HPP
