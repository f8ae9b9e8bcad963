#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ltqr/error.hpp"
#include "ltqr/io.hpp"
#include "ltqr/simgen.hpp"

using namespace ltqr;
namespace fs = std::filesystem;

namespace {

LongitudinalDataset read(const std::string& lon, const std::string& cov, io::IngestReport* rep = nullptr) {
  std::istringstream a(lon), b(cov);
  return io::read_dataset(a, b, rep);
}

std::string error_of(const std::string& lon, const std::string& cov) {
  try {
    read(lon, cov);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ltqr_io_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const std::string kLon = "subject_id,time,y\nA,0,1\nA,1,2\nA,2,2.5\nB,0.5,0\nB,1.5,1\nB,2.5,3\n";
const std::string kCov = "subject_id,x1\nB,0.3\nA,-1\n";

}  // namespace

TEST_CASE("reads and joins the two files") {
  const LongitudinalDataset d = read(kLon, kCov);
  REQUIRE(d.size() == 2);
  CHECK(d.p() == 2);
  CHECK(d.coefficient_names() == std::vector<std::string>{"intercept", "x1"});
  CHECK(d.subjects()[0].id == "B");
  CHECK(d.subjects()[1].id == "A");
  CHECK(d.subjects()[1].x[1] == -1.0);
  CHECK(d.subjects()[1].delta == 1.0);
  CHECK(d.subjects()[0].times == std::vector<double>{0.5, 1.5, 2.5});
}

TEST_CASE("delta column is optional and validated") {
  const LongitudinalDataset d = read(kLon, "subject_id,x1,delta\nA,1,0.25\nB,2,4\n");
  CHECK(d.subjects()[0].delta == 0.25);
  CHECK(d.p() == 2);
  const std::string msg = error_of(kLon, "subject_id,x1,delta\nA,1,0.25\nB,2,0\n");
  CHECK(msg.find("delta must be positive") != std::string::npos);
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(error_of(kLon, "subject_id,x1,delta\nA,1,0.25\nB,2\n") != "");
}

TEST_CASE("join errors name the subjects") {
  const std::string msg = error_of(kLon + "C,0,1\n", kCov + "D,1\n");
  CHECK(msg.find("no covariates for: C") != std::string::npos);
  CHECK(msg.find("no observations for: D") != std::string::npos);
  try {
    read(kLon + "C,0,1\n", kCov);
  } catch (const Error& e) {
    CHECK(e.field() == "subject_id");
  }
}

TEST_CASE("malformed inputs") {
  CHECK(error_of("id,time,y\nA,0,1\n", kCov).find("header") != std::string::npos);
  CHECK(error_of(kLon, "id,x1\nA,1\n").find("header") != std::string::npos);
  CHECK(error_of("subject_id,time,y\nA,0,abc\n", kCov).find("line 2") != std::string::npos);
  CHECK(error_of("subject_id,time,y\nA,0,nan\n", kCov).find("non-finite") != std::string::npos);
  CHECK(error_of("subject_id,time,y\nA,0,1,4\n", kCov).find("expected 3 fields") != std::string::npos);
  CHECK(error_of(kLon, kCov + "A,2\n").find("duplicate subject_id") != std::string::npos);
  const std::string dup = error_of(kLon + "A,1,7\n", kCov);
  CHECK(dup.find("duplicate (subject, time)") != std::string::npos);
  CHECK(dup.find("lines 3 and 8") != std::string::npos);
  CHECK(error_of("", kCov).find("empty") != std::string::npos);
}

TEST_CASE("unsorted times are sorted with a warning") {
  io::IngestReport rep;
  const LongitudinalDataset d =
      read("subject_id,time,y\nA,2,5\nA,0,1\nA,1,3\nB,0,0\nB,1,1\n", "subject_id,x1\nA,0\nB,1\n", &rep);
  CHECK(d.subjects()[0].times == std::vector<double>{0, 1, 2});
  CHECK(d.subjects()[0].y == std::vector<double>{1, 3, 5});
  REQUIRE(rep.warnings.size() == 1);
  CHECK(rep.warnings[0] == "subject A: observation times sorted");
}

TEST_CASE("write then read is the identity up to canonical order") {
  SimScenario sc;
  sc.sim_case = SimCase::Case3;
  sc.n = 40;
  sc.seed = 9;
  const LongitudinalDataset orig = generate(sc).data;
  std::ostringstream lon, cov;
  io::write_dataset(orig, lon, cov);
  const LongitudinalDataset back = read(lon.str(), cov.str());
  const LongitudinalDataset canon = orig.canonical();
  REQUIRE(back.size() == canon.size());
  CHECK(back.coefficient_names() == canon.coefficient_names());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = back.subjects()[i];
    const auto& b = canon.subjects()[i];
    CHECK(a.id == b.id);
    CHECK(a.times == b.times);
    CHECK(a.y == b.y);
    CHECK(a.x == b.x);
    CHECK(a.delta == b.delta);
  }
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e308, 0.0, 123456789.125}) {
    const std::string s = io::format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("grid parsing") {
  const auto g = io::parse_grid("0.8:1.5:0.1", "h_grid");
  REQUIRE(g.size() == 8);
  CHECK(g.front() == 0.8);
  CHECK(g[3] == 1.1);
  CHECK(g.back() == 1.5);
  CHECK(io::parse_grid("0.1:0.9:0.1", "tau_grid").size() == 9);
  CHECK(io::parse_grid("0.1, 0.5,0.9", "tau_grid") == std::vector<double>{0.1, 0.5, 0.9});
  CHECK(io::parse_grid("0.5", "tau_grid") == std::vector<double>{0.5});
  CHECK_THROWS_AS(io::parse_grid("0.1:0.9", "tau_grid"), Error);
  CHECK_THROWS_AS(io::parse_grid("0.9:0.1:0.1", "tau_grid"), Error);
  CHECK_THROWS_AS(io::parse_grid("0.1:0.9:0", "tau_grid"), Error);
  CHECK_THROWS_AS(io::parse_grid("a,b", "tau_grid"), Error);
  try {
    io::parse_grid("x", "h_grid");
  } catch (const Error& e) {
    CHECK(e.field() == "h_grid");
  }
}

TEST_CASE("config parsing") {
  std::istringstream in("# comment\nk = 2\n\nh-grid = 0.4:1.2:0.2  # trailing\nseed=7\n");
  const auto cfg = io::parse_config(in);
  CHECK(cfg.size() == 3);
  CHECK(cfg.at("k") == "2");
  CHECK(cfg.at("h-grid") == "0.4:1.2:0.2");
  CHECK(cfg.at("seed") == "7");
  std::istringstream bad("k = 2\nnonsense\n");
  try {
    io::parse_config(bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("tables render as CSV and JSON") {
  io::Table t;
  t.columns = {"tau", "coef_name", "converged"};
  t.add_row({"0.5", "x1", "true"});
  t.add_row({"0.25", "intercept", "false"});
  CHECK_THROWS_AS(t.add_row({"1"}), Error);
  std::ostringstream csv;
  io::write_table(t, csv, io::Format::Csv);
  CHECK(csv.str() == "tau,coef_name,converged\n0.5,x1,true\n0.25,intercept,false\n");
  std::ostringstream js;
  io::write_table(t, js, io::Format::Json);
  CHECK(js.str().find("\"tau\": 0.5") != std::string::npos);
  CHECK(js.str().find("\"coef_name\": \"x1\"") != std::string::npos);
  CHECK(js.str().find("\"converged\": true") != std::string::npos);
  CHECK(io::parse_format("csv") == io::Format::Csv);
  CHECK_THROWS_AS(io::parse_format("xml"), Error);
}

TEST_CASE("draws sidecar round trip") {
  TempDir dir;
  ResampleDraws d;
  d.tau_grid = {0.25, 0.5, 0.75};
  d.alpha = 0.1;
  d.h = 0.8;
  d.seed = 0xfeedfacecafebeefull;
  d.beta_hat = Eigen::MatrixXd::Random(3, 3);
  for (int r = 0; r < 5; ++r) {
    d.beta_star.push_back(Eigen::MatrixXd::Random(3, 3));
    d.sigma2_star.push_back(1.0 + r / 7.0);
  }
  d.n_b_requested = 6;
  d.n_b_used = 5;
  d.n_b_dropped = 1;
  summarize_draws(d);
  const fs::path file = dir.path / "draws.bin";
  io::write_draws(d, {"intercept", "x1", "x2"}, file);
  const io::PersistedDraws back = io::read_draws(file);
  CHECK(back.coefficient_names == std::vector<std::string>{"intercept", "x1", "x2"});
  const ResampleDraws& b = back.draws;
  CHECK(b.tau_grid == d.tau_grid);
  CHECK(b.alpha == d.alpha);
  CHECK(b.h == d.h);
  CHECK(b.seed == d.seed);
  CHECK(b.n_b_requested == 6);
  CHECK(b.n_b_used == 5);
  CHECK(b.n_b_dropped == 1);
  CHECK(b.sigma2_star == d.sigma2_star);
  CHECK(b.beta_hat == d.beta_hat);
  for (int r = 0; r < 5; ++r) CHECK(b.beta_star[r] == d.beta_star[r]);
  CHECK(b.se == d.se);
  CHECK(b.pct_upper == d.pct_upper);

  const fs::path junk = dir.path / "junk.bin";
  std::ofstream(junk, std::ios::binary) << "NOTDRAWSxxxxxxxxxxxx";
  CHECK_THROWS_AS(io::read_draws(junk), Error);

  std::string bytes;
  {
    std::ifstream in(file, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[8] = 9;  // version field, little endian
  const fs::path future = dir.path / "future.bin";
  std::ofstream(future, std::ios::binary) << bytes;
  try {
    io::read_draws(future);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("version 9") != std::string::npos);
  }
  CHECK_THROWS_AS(io::read_draws(dir.path / "missing.bin"), Error);
}

TEST_CASE("file digest is FNV-1a 64") {
  TempDir dir;
  const fs::path a = dir.path / "a.txt";
  std::ofstream(a, std::ios::binary) << "a";
  CHECK(io::file_digest(a) == "af63dc4c8601ec8c");
  const fs::path empty = dir.path / "empty.txt";
  std::ofstream(empty, std::ios::binary).flush();
  CHECK(io::file_digest(empty) == "cbf29ce484222325");
}

TEST_CASE("file ingestion reports missing paths") {
  CHECK_THROWS_AS(io::ingest_csv("/nonexistent/lon.csv", "/nonexistent/cov.csv"), Error);
}
