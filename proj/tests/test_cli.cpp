#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* path = std::getenv("NEDSPEC_CLI");
  REQUIRE(path != nullptr);
  return path;
}

int run(const std::string& args) {
  std::string cmd = cli() + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nedspec_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("spectrum --config /nonexistent/missing.cfg") == 2);
  CHECK(run("bogus-subcommand") == 2);
  CHECK(run("spectrum") == 2);  // neither --config nor --example
}

TEST_CASE("example subcommand emits a loadable config") {
  TempDir dir;
  CHECK(run("example --example example1 --lambda0 -2 --a -1 --out " + dir.path.string()) == 0);
  auto j = nlohmann::json::parse(slurp(dir.path / "result.json"));
  CHECK(j["name"] == "example1");
  CHECK(j["reference_spectrum"][0][0] == -3.0);
  CHECK(fs::exists(dir.path / "config.cfg"));
  CHECK(fs::exists(dir.path / "run.log"));

  // the emitted config round-trips through the spectrum command
  TempDir dir2;
  CHECK(run("spectrum --config " + (dir.path / "config.cfg").string() + " --horizon 60 --out " +
            dir2.path.string()) == 0);
  auto spec = nlohmann::json::parse(slurp(dir2.path / "result.json"));
  REQUIRE(spec["intervals"].size() == 1);
}

TEST_CASE("spectrum run produces artifacts and reproducible output") {
  TempDir a, b;
  std::string args = "spectrum --example example1 --lambda0 -2 --a -1 --horizon 60 --seed 11";
  CHECK(run(args + " --out " + a.path.string()) == 0);
  CHECK(run(args + " --out " + b.path.string()) == 0);
  CHECK(slurp(a.path / "result.json") == slurp(b.path / "result.json"));
  CHECK(slurp(a.path / "sweep.csv") == slurp(b.path / "sweep.csv"));

  auto j = nlohmann::json::parse(slurp(a.path / "result.json"));
  double lo = j["intervals"][0][0], hi = j["intervals"][0][1];
  CHECK(lo == doctest::Approx(-3.0).epsilon(0.06));
  CHECK(hi == doctest::Approx(-1.0).epsilon(0.09));
}

TEST_CASE("dichotomy run writes a verdict") {
  TempDir dir;
  CHECK(run("dichotomy --example example1 --lambda0 -2 --a -1 --horizon 60 --lambda 0 --out " +
            dir.path.string()) == 0);
  auto j = nlohmann::json::parse(slurp(dir.path / "result.json"));
  CHECK(j["admits"] == true);
  CHECK(j["rank"] == 1);
}

TEST_CASE("contract run emits a passing certificate") {
  TempDir dir;
  CHECK(run("contract --example example1 --lambda0 -2 --a -1 --horizon 60 --delta 0.5 --out " +
            dir.path.string()) == 0);
  auto j = nlohmann::json::parse(slurp(dir.path / "certificate.json"));
  CHECK(j["all_pass"] == true);
  CHECK(j["delta"] == 0.5);
  CHECK(fs::exists(dir.path / "schedule_0_0.csv"));
  CHECK(fs::exists(dir.path / "contraction.csv"));
  CHECK(fs::exists(dir.path / "run.log"));
}
