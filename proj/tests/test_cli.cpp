#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("PROXAL_CLI");
  REQUIRE(p != nullptr);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return (rc >> 8) & 0xff;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("proxal_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream(path) << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("cli generate writes dataset and truth") {
  const fs::path dir = scratch_dir("generate");
  write_file(dir / "cfg.json", R"({
    "data": {"synthetic": {"t": 100, "seed": 3}},
    "grid": {"n_points": 3},
    "truth": {"mc_samples": 20000}
  })");
  REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
              (dir / "out").string() + " generate") == 0);
  const auto data = read_csv(dir / "out" / "dataset.csv");
  REQUIRE(data.size() == 101);  // header + 100 rows
  CHECK(data[0] == std::vector<std::string>{"y", "a1", "z1", "z2", "w1", "w2"});
  const auto truth = read_csv(dir / "out" / "truth.csv");
  REQUIRE(truth.size() == 4);
  CHECK(truth[0][1] == "theta_true");

  SECTION("same seed reproduces byte-identical output") {
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "out2").string() + " generate") == 0);
    CHECK(read_file(dir / "out" / "dataset.csv") ==
          read_file(dir / "out2" / "dataset.csv"));
    CHECK(read_file(dir / "out" / "truth.csv") ==
          read_file(dir / "out2" / "truth.csv"));
  }
  SECTION("seed flag overrides the config") {
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "out3").string() + " --seed 4 generate") == 0);
    CHECK(read_file(dir / "out" / "dataset.csv") !=
          read_file(dir / "out3" / "dataset.csv"));
  }
  fs::remove_all(dir);
}

TEST_CASE("cli fit writes a curve and a report") {
  const fs::path dir = scratch_dir("fit");
  write_file(dir / "cfg.json", R"({
    "data": {"synthetic": {"t": 100, "seed": 5}},
    "grid": {"n_points": 4},
    "method": "drkpv",
    "lambdas": {"h1": 0.01, "h2": 0.01, "phi1": 0.01, "phi2": 0.01,
                "phi3": 0.01, "dr": 0.01}
  })");
  REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
              (dir / "out").string() + " fit") == 0);
  const auto curve = read_csv(dir / "out" / "curve.csv");
  REQUIRE(curve.size() == 5);
  CHECK(curve[0] == std::vector<std::string>{"a", "theta1", "theta2", "theta3",
                                             "theta_dr"});
  for (std::size_t i = 1; i < curve.size(); ++i) {
    // The combined column is the exact sum of the printed parts.
    const double t1 = std::stod(curve[i][1]);
    const double t2 = std::stod(curve[i][2]);
    const double t3 = std::stod(curve[i][3]);
    CHECK(std::stod(curve[i][4]) == t1 + t2 - t3);
  }
  const std::string report = read_file(dir / "out" / "report.json");
  CHECK(report.find("\"DRKPV\"") != std::string::npos);
  CHECK(report.find("lambda_h1") != std::string::npos);

  SECTION("fit on a round-tripped csv matches the synthetic source") {
    REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
                (dir / "gen").string() + " generate") == 0);
    write_file(dir / "cfg_csv.json", R"({
      "data": {"csv": {"path": ")" + (dir / "gen" / "dataset.csv").string() +
                                     R"(", "d_a": 1, "d_z": 2, "d_w": 2}},
      "grid": {"n_points": 4},
      "method": "drkpv",
      "lambdas": {"h1": 0.01, "h2": 0.01, "phi1": 0.01, "phi2": 0.01,
                  "phi3": 0.01, "dr": 0.01}
    })");
    REQUIRE(run("--config " + (dir / "cfg_csv.json").string() + " --out " +
                (dir / "out_csv").string() + " fit") == 0);
    CHECK(read_file(dir / "out" / "curve.csv") ==
          read_file(dir / "out_csv" / "curve.csv"));
  }
  fs::remove_all(dir);
}

TEST_CASE("cli benchmark writes summary and cell files") {
  const fs::path dir = scratch_dir("benchmark");
  write_file(dir / "cfg.json", R"({
    "method": "kpv",
    "data": {"synthetic": {"t": 60}},
    "benchmark": {"runs": 2, "grid_points": 3, "truth_mc_samples": 20000},
    "lambdas": {"h1": 0.01, "h2": 0.01}
  })");
  REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
              (dir / "out").string() + " benchmark") == 0);
  const auto summary = read_csv(dir / "out" / "summary.csv");
  REQUIRE(summary.size() == 3);
  CHECK(summary[0] == std::vector<std::string>{"method", "t", "seed", "mse",
                                               "wall_seconds"});
  CHECK(summary[1][0] == "KPV");
  CHECK(summary[1][1] == "60");
  CHECK(fs::exists(dir / "out" / "cell_KPV_t60_s1.json"));
  CHECK(fs::exists(dir / "out" / "cell_KPV_t60_s2.json"));
  fs::remove_all(dir);
}

TEST_CASE("cli misspecify with zero sigma reproduces the clean curve") {
  const fs::path dir = scratch_dir("misspecify");
  write_file(dir / "cfg.json", R"({
    "data": {"synthetic": {"t": 80, "seed": 2}},
    "grid": {"n_points": 3},
    "method": "drkpv",
    "truth": {"mc_samples": 20000},
    "jitter": {"sigma": 0.0, "runs": 1, "target": "outcome"},
    "lambdas": {"h1": 0.01, "h2": 0.01, "phi1": 0.01, "phi2": 0.01,
                "phi3": 0.01, "dr": 0.01}
  })");
  REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
              (dir / "out").string() + " misspecify") == 0);
  const auto rows = read_csv(dir / "out" / "misspecify.csv");
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][2] == rows[i][3]);          // dr_clean == dr_jittered
    CHECK(std::stod(rows[i][6]) == 0.0);      // zero spread with one run
  }
  fs::remove_all(dir);
}

TEST_CASE("cli tune reports a selection for every stage") {
  const fs::path dir = scratch_dir("tune");
  write_file(dir / "cfg.json", R"({
    "data": {"synthetic": {"t": 80, "seed": 7}},
    "grid": {"n_points": 3},
    "method": "drpmmr"
  })");
  REQUIRE(run("--config " + (dir / "cfg.json").string() + " --out " +
              (dir / "out").string() + " tune") == 0);
  const std::string report = read_file(dir / "out" / "tune.json");
  for (const char* key : {"lambda_mmr", "lambda_phi1", "lambda_phi2",
                          "lambda_phi3", "lambda_dr"})
    CHECK(report.find(key) != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli oracle-check passes on default worlds") {
  CHECK(run("oracle-check") == 0);
}

TEST_CASE("cli error handling") {
  const fs::path dir = scratch_dir("errors");
  SECTION("unknown method is a config error") {
    CHECK(run("--method bogus --t 50 --out " + (dir / "o").string() + " fit") ==
          2);
  }
  SECTION("unparseable config file") {
    write_file(dir / "bad.json", "{ not json");
    CHECK(run("--config " + (dir / "bad.json").string() + " fit") == 2);
  }
  SECTION("missing csv column") {
    write_file(dir / "short.csv", "y,a1,z1,w1\n1,2,3,4\n");
    write_file(dir / "cfg.json", R"({
      "data": {"csv": {"path": ")" + (dir / "short.csv").string() +
                                   R"(", "d_a": 1, "d_z": 2, "d_w": 2}},
      "method": "kpv"
    })");
    CHECK(run("--config " + (dir / "cfg.json").string() + " fit") == 2);
  }
  SECTION("missing subcommand") {
    CHECK(run("") == 2);
  }
  fs::remove_all(dir);
}
