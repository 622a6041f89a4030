#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wigner/cli.hpp"

namespace {

struct CliRun {
  int exit_code = 0;
  std::string out;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = wigner::cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json out_json(const CliRun& r) { return nlohmann::json::parse(r.out); }

std::string scenario_path(const std::string& name) {
  return std::string(WIGNER_SCENARIO_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("list prints the eight scenario names") {
  const auto r = run_cli({"list"});
  CHECK(r.exit_code == 0);
  std::istringstream lines(r.out);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(lines, line)) names.push_back(line);
  CHECK(names == std::vector<std::string>{"fr", "ghz", "counterfactual", "brukner", "eraser",
                                          "cut", "sealed", "concordant"});
}

TEST_CASE("run fr emits the halting probability") {
  const auto r = run_cli({"run", "fr", "--policy", "premeasure"});
  REQUIRE(r.exit_code == 0);
  const auto j = out_json(r);
  CHECK(j["schema"] == "wigner-lab/1");
  CHECK(j["all_passed"] == true);
  CHECK(std::abs(j["derived_quantities"]["p_ok_okbar"].get<double>() - 1.0 / 12.0) < 1e-9);
  CHECK(r.err.find("[PASS]") != std::string::npos);
}

TEST_CASE("run ghz at the perfect-correlation settings") {
  const auto r = run_cli({"run", "ghz", "--phi", "0,1.5707963267948966,1.5707963267948966"});
  REQUIRE(r.exit_code == 0);
  const auto j = out_json(r);
  CHECK(std::abs(j["derived_quantities"]["correlation"].get<double>() + 1.0) < 1e-9);
}

TEST_CASE("identical invocations produce byte-identical reports") {
  for (const std::vector<std::string> args :
       {std::vector<std::string>{"run", "eraser", "--phi", "0.4"},
        std::vector<std::string>{"run", "ghz"},
        std::vector<std::string>{"run", "counterfactual"}}) {
    const auto a = run_cli(args);
    const auto b = run_cli(args);
    REQUIRE(a.exit_code == 0);
    CHECK(a.out == b.out);
  }
}

TEST_CASE("run executes .wig protocol files") {
  const auto r = run_cli({"run", scenario_path("fr.wig")});
  REQUIRE(r.exit_code == 0);
  const auto j = out_json(r);
  CHECK(j["scenario"] == "fr.wig");
  CHECK(j["all_passed"] == true);

  SECTION("a failing assertion exits 1 and reports the delta") {
    const auto tmp = std::filesystem::temp_directory_path() / "bad_expect.wig";
    std::ofstream f(tmp);
    f << "register g qubit;"
         "basis c on g = { |0> label \"0\", |1> label \"1\" };"
         "apply hadamard on g;"
         "measure W : g in c;"
         "assert prob(W = \"0\") == 1/10 tol 1e-9;";
    f.close();
    const auto bad = run_cli({"run", tmp.string()});
    CHECK(bad.exit_code == 1);
    const auto j2 = out_json(bad);
    CHECK(j2["all_passed"] == false);
    CHECK(std::abs(j2["assertions"][0]["actual"].get<double>() - 0.5) < 1e-12);
    std::filesystem::remove(tmp);
  }

  SECTION("parse errors exit 2 with file:line:col diagnostics") {
    const auto tmp = std::filesystem::temp_directory_path() / "broken.wig";
    std::ofstream f(tmp);
    f << "register ;\n";
    f.close();
    const auto bad = run_cli({"run", tmp.string()});
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find(":1:") != std::string::npos);
    std::filesystem::remove(tmp);
  }

  SECTION("unreadable file exits 2") {
    const auto bad = run_cli({"run", "/nonexistent/path.wig"});
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("cannot read") != std::string::npos);
  }
}

TEST_CASE("usage errors exit 2") {
  CHECK(run_cli({"run", "nosuch"}).exit_code == 2);
  CHECK(run_cli({"frobnicate"}).exit_code == 2);
  CHECK(run_cli({"run"}).exit_code == 2);
  CHECK(run_cli({"run", "fr", "--policy", "bogus"}).exit_code == 2);
  CHECK(run_cli({"run", "concordant", "--format", "csv"}).exit_code == 2);
  CHECK(run_cli({"sweep", "fr"}).exit_code == 2);
}

TEST_CASE("cut sweep emits the documented CSV table") {
  const auto r = run_cli({"sweep", "cut", "--m-min", "1", "--m-max", "12", "--format", "csv"});
  REQUIRE(r.exit_code == 0);
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "m,p,visibility,seconds");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 12);
}

TEST_CASE("eraser sweep reports unit visibility with the filter on") {
  const auto r = run_cli({"sweep", "eraser", "--points", "25", "--filter", "on"});
  REQUIRE(r.exit_code == 0);
  const auto j = out_json(r);
  CHECK(j["derived_quantities"]["visibility"].get<double>() == 1.0);
  CHECK(j["tables"]["sweep"]["rows"].size() == 25);
}

TEST_CASE("bench checks the wall-clock budget") {
  const auto r = run_cli({"bench", "--m", "6", "--budget", "60"});
  REQUIRE(r.exit_code == 0);
  const auto j = out_json(r);
  CHECK(j["timings"]["seconds"].get<double>() < 60.0);
  CHECK(j["derived_quantities"]["visibility"].get<double>() == Catch::Approx(1.0).margin(1e-12));

  SECTION("an impossible budget fails through the exit code") {
    const auto bad = run_cli({"bench", "--m", "6", "--budget", "0"});
    CHECK(bad.exit_code == 1);
  }
}

TEST_CASE("--out writes the report to a file") {
  const auto tmp = std::filesystem::temp_directory_path() / "report.json";
  const auto r = run_cli({"run", "concordant", "--out", tmp.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.empty());
  std::ifstream f(tmp);
  REQUIRE(f.good());
  nlohmann::json j;
  f >> j;
  CHECK(j["scenario"] == "concordant");
  std::filesystem::remove(tmp);
}

TEST_CASE("timings are excluded unless requested") {
  const auto without = run_cli({"run", "cut", "--m", "3"});
  const auto with = run_cli({"run", "cut", "--m", "3", "--timings"});
  REQUIRE(without.exit_code == 0);
  REQUIRE(with.exit_code == 0);
  CHECK_FALSE(out_json(without).contains("timings"));
  CHECK(out_json(with).contains("timings"));
}
