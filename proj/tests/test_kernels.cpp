#include <catch2/catch_amalgamated.hpp>

#include "proxal/kernels.hpp"
#include "proxal/synthetic.hpp"

using namespace proxal;

namespace {

Matrix random_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = gauss(rng);
  return x;
}

}  // namespace

TEST_CASE("gaussian kernel basics") {
  const auto spec = KernelSpec::gaussian(1.0);
  Matrix x(2, 1);
  x << 0.0, 1.0;
  const Matrix k = gram(spec, x, x);
  CHECK(k(0, 0) == Catch::Approx(1.0));
  CHECK(k(1, 1) == Catch::Approx(1.0));
  CHECK(k(0, 1) == Catch::Approx(std::exp(-0.5)).epsilon(1e-10));
  CHECK(k(0, 1) == Catch::Approx(0.606531).epsilon(1e-5));
}

TEST_CASE("matern half-integer closed forms") {
  // p = 0 reduces to the exponential kernel exp(-d / l).
  const auto p0 = KernelSpec::matern(1.0, 0);
  Matrix x(2, 1);
  x << 0.0, 1.0;
  CHECK(gram(p0, x, x)(0, 1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(gram(p0, x, x)(0, 1) == Catch::Approx(0.367879).epsilon(1e-5));
  for (double d : {0.1, 0.7, 2.3}) {
    Matrix y(2, 1);
    y << 0.0, d;
    const double l = 1.3;
    CHECK(gram(KernelSpec::matern(l, 0), y, y)(0, 1) ==
          Catch::Approx(std::exp(-d / l)).epsilon(1e-12));
    // p = 1: (1 + s) exp(-s) with s = sqrt(3) d / l.
    const double s = std::sqrt(3.0) * d / l;
    CHECK(gram(KernelSpec::matern(l, 1), y, y)(0, 1) ==
          Catch::Approx((1.0 + s) * std::exp(-s)).epsilon(1e-12));
  }
}

TEST_CASE("gram symmetry and psd for all families") {
  const Matrix x = random_points(50, 3, 7);
  const std::vector<KernelSpec> specs = {
      KernelSpec::gaussian(0.9),
      KernelSpec::columnwise_gaussian(Vector::Constant(3, 1.1)),
      KernelSpec::matern(1.2, 0), KernelSpec::matern(1.2, 1),
      KernelSpec::matern(1.2, 2), KernelSpec::matern(1.2, 3),
      KernelSpec::matern(1.2, 10)};
  for (const auto& spec : specs) {
    const Matrix k = gram(spec, x, x);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(k.maxCoeff() <= 1.0 + 1e-12);
    CHECK(k.minCoeff() >= 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    CHECK(es.eigenvalues().minCoeff() >=
          -1e-8 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("columnwise gaussian equals plain gaussian at equal lengthscales") {
  const Matrix x = random_points(20, 4, 11);
  const double l = 0.8;
  const Matrix plain = gram(KernelSpec::gaussian(l), x, x);
  const Matrix columnwise =
      gram(KernelSpec::columnwise_gaussian(Vector::Constant(4, l)), x, x);
  CHECK((plain - columnwise).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gram dimension checks") {
  const Matrix x = random_points(4, 2, 1);
  const Matrix y = random_points(4, 3, 2);
  CHECK_THROWS_AS(gram(KernelSpec::gaussian(1.0), x, y), DimensionMismatch);
  CHECK_THROWS_AS(
      gram(KernelSpec::columnwise_gaussian(Vector::Constant(3, 1.0)), x, x),
      DimensionMismatch);
  CHECK_THROWS_AS(KernelSpec::gaussian(0.0), InvalidConfig);
  CHECK_THROWS_AS(KernelSpec::gaussian(-1.0), InvalidConfig);
}

TEST_CASE("median heuristic hand cases") {
  Matrix two(2, 1);
  two << 0.0, 2.0;
  // single pairwise squared distance 4 -> l = sqrt(4/2) = sqrt(2)
  CHECK(median_heuristic(two) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-12));

  Matrix same = Matrix::Zero(3, 1);
  CHECK_THROWS_AS(median_heuristic(same), AllPointsIdentical);
  CHECK_THROWS_AS(median_heuristic(two.topRows(1)), TooFewSamples);
  CHECK_THROWS_AS(median_heuristic(two, 0.0), InvalidConfig);
  CHECK_THROWS_AS(median_heuristic(two, 1.0), InvalidConfig);
}

TEST_CASE("median heuristic matches brute-force sort oracle") {
  const ProxyDataset ds = gen_synthetic_lowdim(100, 3);
  for (double q : {0.25, 0.5, 0.75}) {
    std::vector<double> sq;
    for (Eigen::Index i = 0; i < ds.a.rows(); ++i)
      for (Eigen::Index j = i + 1; j < ds.a.rows(); ++j)
        sq.push_back((ds.a.row(i) - ds.a.row(j)).squaredNorm());
    std::sort(sq.begin(), sq.end());
    const double pos = q * (static_cast<double>(sq.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    const double quant =
        frac == 0.0 ? sq[lo] : sq[lo] + frac * (sq[lo + 1] - sq[lo]);
    CHECK(median_heuristic(ds.a, q) ==
          Catch::Approx(std::sqrt(quant / 2.0)).epsilon(1e-12));
  }
}

TEST_CASE("columnwise median heuristic is per-column") {
  const Matrix x = random_points(30, 2, 5);
  const Vector ls = columnwise_median_heuristic(x);
  CHECK(ls[0] == Catch::Approx(median_heuristic(x.col(0))).epsilon(1e-12));
  CHECK(ls[1] == Catch::Approx(median_heuristic(x.col(1))).epsilon(1e-12));
}
