#include "../../tools/io.hpp"
#include "schema.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lowrank_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run run(const std::string& args) {
  const fs::path base = fs::temp_directory_path() / "lowrank_cli_tests";
  fs::create_directories(base);
  const fs::path out = base / "stdout.txt";
  const fs::path err = base / "stderr.txt";
  const std::string cmd = std::string("\"") + LOWRANK_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const json& summary_schema() {
  static const json schema =
      testing::load_json(std::string(LOWRANK_SOURCE_DIR) + "/schemas/summary.schema.json");
  return schema;
}

json checked_summary(const fs::path& dir) {
  const json s = json::parse(slurp(dir / "summary.json"));
  const auto errors = testing::validate_schema(summary_schema(), s);
  for (const auto& e : errors) MESSAGE(e);
  CHECK(errors.empty());
  return s;
}

lowrank::Matrix read_matrix(const fs::path& path) {
  return lowrank::cli::read_numeric(path.string(), "NA").data.values();
}

// Small simulated input shared by several cases.
fs::path small_input(const std::string& name, int n = 30, int p = 12, int k = 2) {
  const fs::path dir = scratch(name);
  const Run r = run("simulate --n " + std::to_string(n) + " --p " + std::to_string(p) + " --k " +
                    std::to_string(k) + " --snr 2 --seed 5 --out \"" + dir.string() + "\"");
  REQUIRE(r.code == 0);
  return dir / "X.csv";
}

fs::path with_missing(const fs::path& complete, const std::string& name, int every = 7) {
  const lowrank::cli::CsvTable t = lowrank::cli::read_csv(complete.string());
  std::string text;
  for (std::size_t j = 0; j < t.header.size(); ++j) text += (j ? "," : "") + t.header[j];
  text += "\n";
  int cell = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.rows[i].size(); ++j, ++cell)
      text += (j ? "," : "") + ((cell % every == 3) ? std::string("NA") : t.rows[i][j]);
    text += "\n";
  }
  const fs::path path = scratch(name) / "X_na.csv";
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate") {
  const fs::path a = scratch("sim_a");
  const fs::path b = scratch("sim_b");
  REQUIRE(run("simulate --seed 11 --out \"" + a.string() + "\"").code == 0);
  REQUIRE(run("--threads 3 simulate --seed 11 --out \"" + b.string() + "\"").code == 0);
  const json meta = json::parse(slurp(a / "meta.json"));
  CHECK(meta["n"] == 200);
  CHECK(meta["p"] == 500);
  CHECK(meta["sigma"].get<double>() == doctest::Approx(7.906e-4).epsilon(1e-3));
  CHECK(slurp(a / "X.csv") == slurp(b / "X.csv"));
  CHECK(read_matrix(a / "X.csv").rows() == 200);
  CHECK(read_matrix(a / "mu.csv").cols() == 500);

  const Run bad = run("simulate --n 10 --p 5 --k 6 --out \"" + a.string() + "\"");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("error") != std::string::npos);
}

TEST_CASE("argument errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("denoise --bogus 1").code == 2);
  CHECK(run("simulate").code == 2);
  CHECK(run("--format xml simulate --out x").code == 2);
  const Run missing = run("denoise --input /nonexistent.csv --out /tmp/lowrank_never");
  CHECK(missing.code == 2);
  CHECK(missing.err.find("/nonexistent.csv") != std::string::npos);
}

TEST_CASE("denoise") {
  const fs::path input = small_input("den_in");
  const fs::path out = scratch("den_out");

  const Run r = run("denoise --input \"" + input.string() + "\" --out \"" + out.string() +
                    "\" --gamma-seq 1 --search-restarts 2");
  REQUIRE(r.code == 0);
  const json s = checked_summary(out);
  CHECK(s["method"] == "adashrink");
  CHECK(s["gamma"] == 1.0);
  CHECK(s["criterion"] == "gsure");
  CHECK(read_matrix(out / "mu_hat.csv").rows() == 30);
  CHECK(lowrank::cli::read_csv((out / "singval.csv").string()).rows.size() == 12);

  const Run surface = run("--format json denoise --input \"" + input.string() + "\" --out \"" +
                          out.string() + "\" --gamma-seq 1,2 --risk-surface --surface-points 5");
  REQUIRE(surface.code == 0);
  const json rs = json::parse(slurp(out / "risk_surface.json"));
  CHECK(rs["rows"].size() == 10);
  CHECK(fs::exists(out / "mu_hat.json"));

  const Run opt = run("denoise --input \"" + input.string() + "\" --out \"" + out.string() +
                      "\" --method optishrink --rule lownoise --k 2");
  REQUIRE(opt.code == 0);
  CHECK(checked_summary(out)["nb_eigen"] == 2);

  const Run sure_needs_sigma = run("denoise --input \"" + input.string() + "\" --out \"" +
                                   out.string() + "\" --criterion sure --gamma-seq 1 --sigma 0.05");
  CHECK(sure_needs_sigma.code == 0);

  const fs::path holes = with_missing(input, "den_na");
  const Run na = run("denoise --input \"" + holes.string() + "\" --out \"" + out.string() + "\"");
  CHECK(na.code == 2);
  CHECK(na.err.find("impute") != std::string::npos);

  const fs::path garbage = scratch("den_bad") / "bad.csv";
  std::ofstream(garbage) << "a,b\n1,2\n3,oops\n";
  const Run parse = run("denoise --input \"" + garbage.string() + "\" --out \"" + out.string() + "\"");
  CHECK(parse.code == 2);
  CHECK(parse.err.find("data row 2, column 2") != std::string::npos);
}

TEST_CASE("denoise with ISA and correspondence analysis") {
  const fs::path dir = scratch("isa_ca");
  std::string text = "a,b,c,d\n";
  for (int i = 0; i < 15; ++i)
    text += std::to_string(3 + i % 4) + "," + std::to_string(5 + (i * 3) % 7) + "," +
            std::to_string(2 + (i * 5) % 3) + "," + std::to_string(1 + i % 2 + (i > 7)) + "\n";
  std::ofstream(dir / "counts.csv") << text;
  const Run r = run("denoise --input \"" + (dir / "counts.csv").string() + "\" --out \"" +
                    dir.string() + "\" --method isa --noise binomial --transformation ca --delta 0.5");
  REQUIRE(r.code == 0);
  const json s = checked_summary(dir);
  CHECK(s["transformation"] == "ca");
  CHECK(fs::exists(dir / "ca_mu_hat.csv"));
  CHECK(fs::exists(dir / "ca_row_coords.csv"));
  CHECK(read_matrix(dir / "ca_mu_hat.csv").rows() == 15);

  std::ofstream(dir / "frac.csv") << "a,b\n1.5,2\n3,4\n";
  CHECK(run("denoise --input \"" + (dir / "frac.csv").string() + "\" --out \"" + dir.string() +
            "\" --method isa --noise binomial --delta 0.5")
            .code == 2);
}

TEST_CASE("estimate-noise") {
  const fs::path dir = scratch("noise");
  REQUIRE(run("simulate --n 100 --p 80 --k 5 --snr 2 --out \"" + dir.string() + "\"").code == 0);
  const std::string input = (dir / "X.csv").string();
  const double sigma = json::parse(slurp(dir / "meta.json"))["sigma"];

  const Run ln = run("estimate-noise --input \"" + input + "\" --method ln --k 5");
  REQUIRE(ln.code == 0);
  const json a = json::parse(ln.out);
  CHECK(a["method"] == "ln");
  CHECK(a["k"] == 5);
  CHECK(a["k_estimated"] == false);
  CHECK(a["sigma"].get<double>() == doctest::Approx(sigma).epsilon(0.1));

  const Run mad = run("estimate-noise --input \"" + input + "\" --method mad");
  REQUIRE(mad.code == 0);
  CHECK(json::parse(mad.out)["sigma"].get<double>() == doctest::Approx(sigma).epsilon(0.2));

  const Run cv = run("estimate-noise --input \"" + input + "\" --method ln --k-max 8 --nbsim 10");
  REQUIRE(cv.code == 0);
  const json c = json::parse(cv.out);
  CHECK(c["k_estimated"] == true);
  CHECK(c["k"] == 5);
}

TEST_CASE("impute") {
  const fs::path input = small_input("imp_in", 30, 10, 2);
  const fs::path holes = with_missing(input, "imp_na");
  const fs::path out = scratch("imp_out");

  const Run complete = run("impute --input \"" + input.string() + "\" --out \"" + out.string() +
                           "\" --lambda 0.01 --gamma 2");
  REQUIRE(complete.code == 0);
  CHECK(slurp(out / "completeObs.csv") == slurp(input));

  const Run fixed = run("impute --input \"" + holes.string() + "\" --out \"" + out.string() +
                        "\" --lambda 0.01 --gamma 2");
  REQUIRE(fixed.code == 0);
  const json f = checked_summary(out);
  CHECK(f["criterion"].is_null());
  CHECK(f["missing_cells"].get<int>() > 0);
  const lowrank::Matrix filled = read_matrix(out / "completeObs.csv");
  CHECK(filled.allFinite());

  const Run no_sigma = run("impute --input \"" + holes.string() + "\" --out \"" + out.string() +
                           "\" --method sure");
  CHECK(no_sigma.code == 2);
  CHECK(no_sigma.err.find("necessary to specify the variance") != std::string::npos);
  CHECK(run("impute --input \"" + holes.string() + "\" --out \"" + out.string() + "\" --method qut")
            .code == 2);

  const Run selected = run("impute --input \"" + holes.string() + "\" --out \"" + out.string() +
                           "\" --gamma-seq 1,2 --fd-cells 60 --search-evaluations 10 --search-restarts 2"
                           " --truth \"" + input.string() + "\"");
  REQUIRE(selected.code == 0);
  const json s = checked_summary(out);
  CHECK(s["criterion"] == "gsure");
  CHECK(s["msep"]["improved"] == true);
  CHECK(s["msep"]["imputed"].get<double>() < s["msep"]["mean_imputation"].get<double>());
}

TEST_CASE("experiments") {
  const fs::path dir = scratch("exp");
  std::ofstream(dir / "bias.ini") << "[bias]\nreps=2\nn=20\np=10\nk=2\nfd_tolerance=1e-6\n";
  const Run bias = run("experiment bias --config \"" + (dir / "bias.ini").string() + "\" --out \"" +
                       dir.string() + "\"");
  REQUIRE(bias.code == 0);
  const json b = checked_summary(dir);
  CHECK(b["name"] == "bias");
  CHECK(b["checks"].size() == 3);
  CHECK(fs::exists(dir / "report.csv"));

  std::ofstream(dir / "msep.ini")
      << "[experiment]\nreps=1\n[simulation1]\nn=50\np=30\nk=2\nsnr=1\nmechanisms=mcar\n"
         "gamma_seq=1,2\nlambda_grid=10\nfd_cells=50\nfd_tolerance=1e-6\n"
         "search_evaluations=10\nsearch_restarts=2\n";
  const auto start = std::chrono::steady_clock::now();
  const Run msep = run("experiment msep --config \"" + (dir / "msep.ini").string() + "\" --out \"" +
                       dir.string() + "\"");
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE(msep.code == 0);
  CHECK(seconds < 60.0);
  const json m = checked_summary(dir);
  CHECK(m["name"] == "msep");
  CHECK(m["checks"].size() == 1);
  CHECK(fs::exists(dir / "table.csv"));

  CHECK(run("experiment other --out \"" + dir.string() + "\"").code == 2);
  std::ofstream(dir / "typo.ini") << "[bias]\nrepz=2\n";
  CHECK(run("experiment bias --config \"" + (dir / "typo.ini").string() + "\" --out \"" +
            dir.string() + "\"")
            .code == 2);
}

}  // TEST_SUITE
