#ifndef PROXAL_DATASET_HPP
#define PROXAL_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "proxal/common.hpp"

namespace proxal {

// Observations {y_i, a_i, z_i, w_i}. Rows are samples; a/z/w may be
// multi-dimensional.
struct ProxyDataset {
  Vector y;
  Matrix a;
  Matrix z;
  Matrix w;

  Eigen::Index rows() const { return y.size(); }

  void validate() const {
    const Eigen::Index t = y.size();
    if (t < 2) throw TooFewSamples("dataset needs at least 2 rows");
    if (a.rows() != t || z.rows() != t || w.rows() != t)
      throw DimensionMismatch("dataset arrays disagree on row count");
    auto finite = [](const auto& m) { return m.allFinite(); };
    if (!finite(y) || !finite(a) || !finite(z) || !finite(w))
      throw InvalidConfig("dataset contains NaN/Inf entries");
  }

  ProxyDataset select(const std::vector<Eigen::Index>& idx) const {
    ProxyDataset out;
    out.y.resize(idx.size());
    out.a.resize(idx.size(), a.cols());
    out.z.resize(idx.size(), z.cols());
    out.w.resize(idx.size(), w.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.y[r] = y[idx[r]];
      out.a.row(r) = a.row(idx[r]);
      out.z.row(r) = z.row(idx[r]);
      out.w.row(r) = w.row(idx[r]);
    }
    return out;
  }
};

// First and second stages are disjoint halves; the third stage reuses the
// full index set.
struct StageSplit {
  std::vector<Eigen::Index> first_stage;
  std::vector<Eigen::Index> second_stage;
  std::vector<Eigen::Index> third_stage;
};

inline StageSplit split_stages(Eigen::Index t, std::uint64_t seed) {
  if (t < 4) throw TooFewSamples("split_stages: need t >= 4");
  std::vector<Eigen::Index> idx(t);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  StageSplit split;
  const Eigen::Index n = t / 2;
  split.first_stage.assign(idx.begin(), idx.begin() + n);
  split.second_stage.assign(idx.begin() + n, idx.end());
  std::sort(split.first_stage.begin(), split.first_stage.end());
  std::sort(split.second_stage.begin(), split.second_stage.end());
  split.third_stage.resize(t);
  std::iota(split.third_stage.begin(), split.third_stage.end(),
            Eigen::Index{0});
  return split;
}

// Column-name schema for CSV ingestion. Multi-dimensional variables list
// one column per dimension, in order.
struct CsvSchema {
  std::string y;
  std::vector<std::string> a;
  std::vector<std::string> z;
  std::vector<std::string> w;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& text, std::size_t row,
                         const std::string& col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used])))
      ++used;
    if (used != text.size()) throw NonNumericCell(row, col);
    return v;
  } catch (const NonNumericCell&) {
    throw;
  } catch (const std::exception&) {
    throw NonNumericCell(row, col);
  }
}

}  // namespace detail

inline ProxyDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw EmptyFile("empty file: " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const std::vector<std::string> names = detail::split_csv_line(header);

  auto col_index = [&](const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw MissingColumn(name);
    return static_cast<std::size_t>(it - names.begin());
  };

  const std::size_t yi = col_index(schema.y);
  std::vector<std::size_t> ai, zi, wi;
  for (const auto& n : schema.a) ai.push_back(col_index(n));
  for (const auto& n : schema.z) zi.push_back(col_index(n));
  for (const auto& n : schema.w) wi.push_back(col_index(n));

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row_no;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != names.size())
      throw IoError(path + ": row " + std::to_string(row_no) +
                    " has wrong cell count");
    std::vector<double> parsed(names.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      parsed[c] = detail::parse_cell(cells[c], row_no, names[c]);
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw EmptyFile("no data rows in " + path);

  ProxyDataset ds;
  const Eigen::Index t = static_cast<Eigen::Index>(rows.size());
  ds.y.resize(t);
  ds.a.resize(t, static_cast<Eigen::Index>(ai.size()));
  ds.z.resize(t, static_cast<Eigen::Index>(zi.size()));
  ds.w.resize(t, static_cast<Eigen::Index>(wi.size()));
  for (Eigen::Index r = 0; r < t; ++r) {
    ds.y[r] = rows[r][yi];
    for (std::size_t c = 0; c < ai.size(); ++c) ds.a(r, c) = rows[r][ai[c]];
    for (std::size_t c = 0; c < zi.size(); ++c) ds.z(r, c) = rows[r][zi[c]];
    for (std::size_t c = 0; c < wi.size(); ++c) ds.w(r, c) = rows[r][wi[c]];
  }
  ds.validate();
  return ds;
}

// Full-precision CSV dump matching the load_csv schema conventions
// (header y,a1..,z1..,w1..).
inline void save_csv(const std::string& path, const ProxyDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "y";
  for (Eigen::Index c = 0; c < ds.a.cols(); ++c) out << ",a" << (c + 1);
  for (Eigen::Index c = 0; c < ds.z.cols(); ++c) out << ",z" << (c + 1);
  for (Eigen::Index c = 0; c < ds.w.cols(); ++c) out << ",w" << (c + 1);
  out << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    put(ds.y[r]);
    for (Eigen::Index c = 0; c < ds.a.cols(); ++c) out << ',', put(ds.a(r, c));
    for (Eigen::Index c = 0; c < ds.z.cols(); ++c) out << ',', put(ds.z(r, c));
    for (Eigen::Index c = 0; c < ds.w.cols(); ++c) out << ',', put(ds.w(r, c));
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline CsvSchema default_schema(Eigen::Index d_a, Eigen::Index d_z,
                                Eigen::Index d_w) {
  CsvSchema s;
  s.y = "y";
  for (Eigen::Index c = 0; c < d_a; ++c) s.a.push_back("a" + std::to_string(c + 1));
  for (Eigen::Index c = 0; c < d_z; ++c) s.z.push_back("z" + std::to_string(c + 1));
  for (Eigen::Index c = 0; c < d_w; ++c) s.w.push_back("w" + std::to_string(c + 1));
  return s;
}

}  // namespace proxal

#endif  // PROXAL_DATASET_HPP
