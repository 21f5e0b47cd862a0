#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetdemand/cli.hpp"
#include "hetdemand/report.hpp"
#include "hetdemand/synth.hpp"

using namespace hetdemand;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("hetdemand_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  [[nodiscard]] std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("json round trips preserve fits") {
  const auto d = generate(truth_preset("harvey-trumpet"), table1_grid(10), 1);
  const auto fit = fit_harvey_mle(d.demand(0), d.x());
  const auto back = harvey_fit_from_json(nlohmann::json::parse(to_json(fit).dump()));
  CHECK(back.beta == fit.beta);
  CHECK(back.gamma == fit.gamma);
  CHECK(back.beta_cov == fit.beta_cov);
  McmcProtocol protocol;
  protocol.iterations = 400;
  const auto post = fit_harvey_bayes(d.demand(0), d.x(), {}, {}, protocol, 3);
  const auto pback = harvey_posterior_from_json(nlohmann::json::parse(to_json(post).dump()));
  REQUIRE(pback.chains.size() == post.chains.size());
  CHECK(pback.chains[2] == post.chains[2]);
  CHECK(format_double(0.1) == "0.1");
  CHECK(hash_label(fnv1a64("")) == "fnv1a64:cbf29ce484222325");
  CHECK(hash_label(fnv1a64("a")) == "fnv1a64:af63dc4c8601ec8c");
}

TEST_CASE("generate writes data, metadata and truth") {
  TempDir dir;
  const auto r = run({"generate", "--preset", "paper-like", "--seed", "42", "-o", dir / "a.csv"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("2000 rows") != std::string::npos);
  CHECK(fs::exists(dir / "a.csv.truth.json"));
  CHECK(fs::exists(dir / "a.csv.meta.json"));
  run({"generate", "--preset", "paper-like", "--seed", "42", "-o", dir / "b.csv"});
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  const auto bad = run({"generate", "--preset", "nosuch", "-o", dir / "c.csv"});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("nosuch") != std::string::npos);
  CHECK(run({"generate", "--preset", "paper-like", "-o", dir / "missing_dir/x.csv"}).code == kExitIo);
  CHECK(run({"generate", "--truth", dir / "a.csv.truth.json", "--seed", "42", "-o", dir / "t.csv"}).code == kExitOk);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "t.csv"));
}

TEST_CASE("fit exit codes") {
  TempDir dir;
  run({"generate", "--preset", "harvey-trumpet", "--seed", "1", "-o", dir / "d.csv"});
  CHECK(run({"fit", "--model", "ols", "--data", dir / "d.csv", "-o", dir / "f.json"}).code == kExitOk);
  CHECK(run({"fit", "--model", "nope", "--data", dir / "d.csv", "-o", dir / "f.json"}).code == kExitUsage);
  CHECK(run({"fit", "--model", "ols", "--data", dir / "none.csv", "-o", dir / "f.json"}).code == kExitIo);
  CHECK(run({"fit", "--model", "ols", "--data", dir / "d.csv", "--demand", "2", "-o", dir / "f.json"}).code ==
        kExitUsage);
  CHECK(run({"fit", "--bogus-flag"}).code == kExitUsage);
  std::ofstream(dir / "one.csv") << "ln_im,edp\n0.1,0.2\n";
  const auto one = run({"fit", "--model", "ols", "--data", dir / "one.csv", "-o", dir / "g.json"});
  CHECK(one.code == kExitEstimation);
  CHECK(one.err.find("InsufficientData") != std::string::npos);
  std::ofstream(dir / "two.csv") << "ln_im,edp\n0.1,0.2\n0.2,0.3\n";
  CHECK(run({"fit", "--model", "ols", "--data", dir / "two.csv", "-o", dir / "g.json"}).code == kExitEstimation);
}

TEST_CASE("fit documents carry provenance and are byte-identical on rerun") {
  TempDir dir;
  run({"generate", "--preset", "harvey-trumpet", "--seed", "1", "--records", "20", "-o", dir / "d.csv"});
  const std::vector<std::string> args{"fit",    "--model", "harvey-bayes", "--data", dir / "d.csv", "--demand", "1",
                                      "--chains", "4",     "--iters",      "1000",   "--thin",     "10",      "--seed",
                                      "7"};
  auto a = args;
  a.insert(a.end(), {"-o", dir / "f1.json", "--draws", dir / "d1.csv"});
  auto b = args;
  b.insert(b.end(), {"-o", dir / "f2.json", "--draws", dir / "d2.csv"});
  CHECK(run(a).code == kExitOk);
  CHECK(run(b).code == kExitOk);
  CHECK(slurp(dir / "f1.json") == slurp(dir / "f2.json"));
  CHECK(slurp(dir / "d1.csv") == slurp(dir / "d2.csv"));
  const auto doc = read_json_file(dir / "f1.json");
  CHECK(doc.at("tool") == "hetdemand");
  CHECK(doc.at("version") == std::string(tool_version()));
  CHECK(doc.at("seed") == 7);
  CHECK(doc.at("input").at("hash") == file_hash(dir / "d.csv"));
  CHECK(doc.contains("warnings"));
  for (const auto& s : doc.at("result").at("summaries")) {
    CHECK(s.contains("r_hat"));
    CHECK(s.contains("mcse"));
  }
  CHECK(slurp(dir / "d1.csv").rfind("chain,iteration,beta0", 0) == 0);
}

TEST_CASE("test, predict, curves and ellipse") {
  TempDir dir;
  run({"generate", "--preset", "paper-like", "--seed", "3", "--records", "40", "-o", dir / "d.csv"});
  REQUIRE(run({"fit", "--model", "harvey-mle", "--data", dir / "d.csv", "--demand", "2", "-o", dir / "h.json"}).code ==
          kExitOk);
  const auto t = run({"test", "--method", "bp", "--fit", dir / "h.json", "--data", dir / "d.csv"});
  CHECK(t.code == kExitOk);
  const auto tj = nlohmann::json::parse(t.out);
  CHECK(tj.at("result").contains("statistic"));
  CHECK(tj.at("result").contains("dof"));
  CHECK(tj.at("result").contains("p_value"));
  CHECK(t.err.find("p-value") != std::string::npos);
  CHECK(run({"test", "--method", "white", "--fit", dir / "h.json", "--data", dir / "d.csv"}).code == kExitOk);
  CHECK(run({"test", "--method", "gq", "--fit", dir / "h.json", "--data", dir / "d.csv"}).code == kExitUsage);

  const auto p = run({"predict", "--fit", dir / "h.json", "--grid", "-2.3:0.1:0.1", "--level", "0.90"});
  CHECK(p.code == kExitOk);
  CHECK(std::count(p.out.begin(), p.out.end(), '\n') == 26);
  CHECK(p.out.rfind("grid_x,mean,sd,cred_lo,cred_hi,pred_lo,pred_hi\n-2.3,", 0) == 0);
  CHECK(run({"predict", "--fit", dir / "h.json", "--level", "1.5"}).code == kExitUsage);
  CHECK(run({"predict", "--fit", dir / "h.json", "--grid", "1:0:0.1"}).code == kExitUsage);

  REQUIRE(run({"fit", "--model", "covreg-em", "--data", dir / "d.csv", "--rank", "2", "-o", dir / "c.json"}).code ==
          kExitOk);
  const auto c = run({"curves", "--fit", dir / "c.json", "-o", dir / "curves.csv"});
  CHECK(c.code == kExitOk);
  CHECK(slurp(dir / "curves.csv").rfind("grid_x,rho_1_2_median,rho_1_2_lo,rho_1_2_hi", 0) == 0);
  CHECK(fs::exists(dir / "curves.csv.meta.json"));
  const auto e = run({"ellipse", "--fit", dir / "c.json", "--pair", "1,3", "--level", "0.90", "--at", "-1.0"});
  CHECK(e.code == kExitOk);
  CHECK(std::count(e.out.begin(), e.out.end(), '\n') == 2);
  CHECK(run({"ellipse", "--fit", dir / "c.json", "--pair", "1,4", "--at", "-1.0"}).code == kExitUsage);
  CHECK(run({"curves", "--fit", dir / "h.json"}).code == kExitUsage);
}

TEST_CASE("config file mirrors flags and flags win") {
  TempDir dir;
  run({"generate", "--preset", "harvey-trumpet", "--seed", "1", "--records", "10", "-o", dir / "d.csv"});
  std::ofstream(dir / "run.toml") << "[fit]\nmodel = \"ols\"\ndata = \"" << dir / "d.csv" << "\"\noutput = \""
                                  << dir / "a.json" << "\"\ndegree = 2\n";
  CHECK(run({"--config", dir / "run.toml", "fit"}).code == kExitOk);
  CHECK(read_json_file(dir / "a.json").at("spec").at("degree") == 2);
  CHECK(run({"--config", dir / "run.toml", "fit", "--degree", "1", "-o", dir / "b.json"}).code == kExitOk);
  CHECK(read_json_file(dir / "b.json").at("spec").at("degree") == 1);
}
