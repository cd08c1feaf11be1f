#ifndef PROXAL_COMMON_HPP
#define PROXAL_COMMON_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace proxal {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Every failure mode named by the library derives from Error so callers can
// distinguish "bad input" from "numerics went wrong" at the catch site.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};
struct AllPointsIdentical : Error {
  using Error::Error;
};
struct FactorizationFailed : Error {
  using Error::Error;
};
struct DegenerateDiagonal : Error {
  using Error::Error;
};
struct NotSymmetric : Error {
  using Error::Error;
};
struct TooFewSamples : Error {
  using Error::Error;
};
struct TooFewStage2Samples : Error {
  using Error::Error;
};
struct SingularBridgeSystem : Error {
  using Error::Error;
};
struct GridMismatch : Error {
  using Error::Error;
};
struct MultiDimTreatmentNeedsExplicitGrid : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

struct MissingColumn : Error {
  explicit MissingColumn(const std::string& col)
      : Error("missing column: " + col), column(col) {}
  std::string column;
};

struct NonNumericCell : Error {
  NonNumericCell(std::size_t data_row, const std::string& col)
      : Error("non-numeric cell at row " + std::to_string(data_row) +
              ", column " + col),
        row(data_row),
        column(col) {}
  std::size_t row;
  std::string column;
};

struct EmptyFile : Error {
  using Error::Error;
};

// All randomness in the library flows through explicit 64-bit seeds.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace proxal

#endif  // PROXAL_COMMON_HPP
