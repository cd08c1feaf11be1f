#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "proxal/dataset.hpp"
#include "proxal/synthetic.hpp"
#include "proxal/toy_world.hpp"

using namespace proxal;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("dataset validation") {
  ProxyDataset ds = gen_synthetic_lowdim(10, 1);
  CHECK_NOTHROW(ds.validate());
  ds.y[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ds.validate(), InvalidConfig);
  ds = gen_synthetic_lowdim(10, 1);
  ds.a.conservativeResize(9, 1);
  CHECK_THROWS_AS(ds.validate(), DimensionMismatch);
}

TEST_CASE("stage split shapes and determinism") {
  SECTION("t = 10") {
    const StageSplit s = split_stages(10, 4);
    CHECK(s.first_stage.size() == 5);
    CHECK(s.second_stage.size() == 5);
    CHECK(s.third_stage.size() == 10);
    std::vector<Eigen::Index> joined = s.first_stage;
    joined.insert(joined.end(), s.second_stage.begin(), s.second_stage.end());
    std::sort(joined.begin(), joined.end());
    for (Eigen::Index i = 0; i < 10; ++i) CHECK(joined[i] == i);
  }
  SECTION("t = 5 floors") {
    const StageSplit s = split_stages(5, 4);
    CHECK(s.first_stage.size() == 2);
    CHECK(s.second_stage.size() == 3);
  }
  SECTION("deterministic") {
    const StageSplit a = split_stages(20, 9);
    const StageSplit b = split_stages(20, 9);
    CHECK(a.first_stage == b.first_stage);
    CHECK(a.second_stage == b.second_stage);
  }
  CHECK_THROWS_AS(split_stages(3, 0), TooFewSamples);
}

TEST_CASE("synthetic generator") {
  SECTION("deterministic and shaped") {
    const ProxyDataset a = gen_synthetic_lowdim(500, 7);
    const ProxyDataset b = gen_synthetic_lowdim(500, 7);
    CHECK(a.y == b.y);
    CHECK(a.a == b.a);
    CHECK(a.z == b.z);
    CHECK(a.w == b.w);
    CHECK(a.a.cols() == 1);
    CHECK(a.z.cols() == 2);
    CHECK(a.w.cols() == 2);
    // E[A] = E[U1] = 0.5; wide band at t = 500.
    CHECK(a.a.mean() > -0.2);
    CHECK(a.a.mean() < 1.2);
  }
  SECTION("tiny dataset allowed") {
    const ProxyDataset tiny = gen_synthetic_lowdim(2, 1);
    CHECK(tiny.rows() == 2);
    CHECK(tiny.z.cols() == 2);
    CHECK(tiny.w.cols() == 2);
  }
  CHECK_THROWS_AS(gen_synthetic_lowdim(1, 1), TooFewSamples);
}

TEST_CASE("true dose response") {
  Vector grid(3);
  grid << -1.0, 0.0, 1.0;
  const SyntheticTruth truth = true_dose_response(grid, 200000, 11);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(std::abs(truth.theta_true[i]) <= 3.0);
    CHECK(truth.standard_error[i] > 0.0);
    CHECK(truth.standard_error[i] < 0.02);
  }
  // Golden constants from independent adaptive quadrature over (U1, U2);
  // the Monte Carlo estimate must agree within a few standard errors.
  CHECK(truth.theta_true[0] == Catch::Approx(1.8458109219).margin(0.02));
  CHECK(truth.theta_true[1] == Catch::Approx(1.7591832649).margin(0.02));
  CHECK(truth.theta_true[2] == Catch::Approx(-1.5969315192).margin(0.02));
  CHECK_THROWS_AS(true_dose_response(grid, 100, 1), InvalidConfig);
}

TEST_CASE("csv round trip") {
  const ProxyDataset ds = gen_synthetic_lowdim(25, 13);
  const auto path = temp_file("proxal_roundtrip.csv");
  save_csv(path.string(), ds);
  const ProxyDataset back = load_csv(path.string(), default_schema(1, 2, 2));
  REQUIRE(back.rows() == ds.rows());
  CHECK((back.y - ds.y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.a - ds.a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.z - ds.z).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.w - ds.w).cwiseAbs().maxCoeff() < 1e-12);
  std::filesystem::remove(path);
}

TEST_CASE("csv error paths") {
  const auto path = temp_file("proxal_badcsv.csv");
  SECTION("missing column") {
    std::ofstream(path) << "y,a1,z1,w1\n1,2,3,4\n";
    CsvSchema schema = default_schema(1, 2, 1);
    CHECK_THROWS_AS(load_csv(path.string(), schema), MissingColumn);
  }
  SECTION("non-numeric cell carries its location") {
    std::ofstream(path) << "y,a1,z1,z2,w1\n1,2,3,4,5\nbad,2,3,4,5\n";
    try {
      load_csv(path.string(), default_schema(1, 2, 1));
      FAIL("expected NonNumericCell");
    } catch (const NonNumericCell& e) {
      CHECK(e.row == 2);
      CHECK(e.column == "y");
    }
  }
  SECTION("empty file") {
    std::ofstream(path) << "";
    CHECK_THROWS_AS(load_csv(path.string(), default_schema(1, 1, 1)),
                    EmptyFile);
    std::ofstream(path) << "y,a1,z1,w1\n";
    CHECK_THROWS_AS(load_csv(path.string(), default_schema(1, 1, 1)),
                    EmptyFile);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(load_csv("/nonexistent/nope.csv", default_schema(1, 1, 1)),
                    IoError);
  }
  SECTION("small explicit file shapes") {
    std::ofstream(path) << "y,a,z1,z2,w\n1,2,3,4,5\n6,7,8,9,10\n0,1,2,3,4\n";
    CsvSchema schema;
    schema.y = "y";
    schema.a = {"a"};
    schema.z = {"z1", "z2"};
    schema.w = {"w"};
    const ProxyDataset ds = load_csv(path.string(), schema);
    CHECK(ds.rows() == 3);
    CHECK(ds.z.cols() == 2);
    CHECK(ds.z(1, 1) == 9.0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("toy world structural identities") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const DiscreteToyWorld w = DiscreteToyWorld::random(seed);
    double total = 0.0;
    for (int u = 0; u < 2; ++u)
      for (int a = 0; a < 2; ++a)
        for (int z = 0; z < 2; ++z)
          for (int wv = 0; wv < 2; ++wv) {
            const double p = w.joint(u, a, z, wv);
            CHECK(p >= 0.0);
            total += p;
          }
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));

    // Exact bridges satisfy their defining moment equations.
    for (int a = 0; a < 2; ++a) {
      for (int z = 0; z < 2; ++z) {
        double pza = 0.0, lhs = 0.0, ey = 0.0;
        for (int u = 0; u < 2; ++u)
          for (int wv = 0; wv < 2; ++wv) {
            const double p = w.joint(u, a, z, wv);
            pza += p;
            lhs += p * w.exact_outcome_bridge(wv, a);
            ey += p * w.outcome(u, a);
          }
        CHECK(lhs / pza == Catch::Approx(ey / pza).margin(1e-10));
      }
      for (int wv = 0; wv < 2; ++wv) {
        double pwa = 0.0, lhs = 0.0;
        for (int u = 0; u < 2; ++u)
          for (int z = 0; z < 2; ++z) {
            const double p = w.joint(u, a, z, wv);
            pwa += p;
            lhs += p * w.exact_treatment_bridge(z, a);
          }
        const double target = w.marginal_w(wv) * w.marginal_a(a) / pwa;
        CHECK(lhs / pwa == Catch::Approx(target).margin(1e-10));
      }
    }
  }
}

TEST_CASE("toy world identification and double robustness") {
  Rng rng = make_rng(777);
  std::uniform_real_distribution<double> perturb(-1.0, 1.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const DiscreteToyWorld w = DiscreteToyWorld::random(seed);
    DiscreteToyWorld::Table2 h_bad = w.exact_h();
    DiscreteToyWorld::Table2 phi_bad = w.exact_phi();
    for (int v = 0; v < 2; ++v)
      for (int a = 0; a < 2; ++a) {
        h_bad[v][a] += perturb(rng);
        phi_bad[v][a] += perturb(rng);
      }
    for (int a = 0; a < 2; ++a) {
      const double target = w.theta_ate(a);
      CHECK(w.dr_estimate(w.exact_h(), w.exact_phi(), a) ==
            Catch::Approx(target).margin(1e-10));
      CHECK(w.dr_estimate(h_bad, w.exact_phi(), a) ==
            Catch::Approx(target).margin(1e-10));
      CHECK(w.dr_estimate(w.exact_h(), phi_bad, a) ==
            Catch::Approx(target).margin(1e-10));
      // Slack identity: E[phi0 h0 | A=a] equals the true effect.
      CHECK(w.slack(w.exact_h(), w.exact_phi(), a) ==
            Catch::Approx(target).margin(1e-10));
    }
  }
}

TEST_CASE("toy world special constructions") {
  SECTION("constant outcome") {
    const DiscreteToyWorld w = DiscreteToyWorld::constant_outcome(5, 0.37);
    for (int a = 0; a < 2; ++a) {
      CHECK(w.theta_ate(a) == Catch::Approx(0.37).margin(1e-12));
      for (int wv = 0; wv < 2; ++wv)
        CHECK(w.exact_outcome_bridge(wv, a) ==
              Catch::Approx(0.37).margin(1e-10));
    }
  }
  SECTION("no confounding makes phi0 constant one") {
    const DiscreteToyWorld w = DiscreteToyWorld::no_confounding(6);
    for (int a = 0; a < 2; ++a)
      for (int z = 0; z < 2; ++z)
        CHECK(w.exact_treatment_bridge(z, a) ==
              Catch::Approx(1.0).margin(1e-10));
  }
  SECTION("sampler is deterministic and on-support") {
    const DiscreteToyWorld w = DiscreteToyWorld::random(8);
    const ProxyDataset a = w.sample(200, 3);
    const ProxyDataset b = w.sample(200, 3);
    CHECK(a.y == b.y);
    CHECK(a.a == b.a);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      CHECK((a.a(i, 0) == 0.0 || a.a(i, 0) == 1.0));
      CHECK((a.z(i, 0) == 0.0 || a.z(i, 0) == 1.0));
      CHECK((a.w(i, 0) == 0.0 || a.w(i, 0) == 1.0));
    }
  }
}
