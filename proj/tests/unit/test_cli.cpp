// Apache License, Version 2.0, refer to LICENSE.txt

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowpred/commands.hpp"
#include "flowpred/model_io.hpp"
#include "flowpred/run_config.hpp"
#include "json.hpp"

using namespace flowpred;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "flowpred");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("flowpred_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const MixtureModel& labeled_model() {
  static const MixtureModel m = [] {
    const auto corpus = load_trajectories(fixtures::source_path("data/crosswalk_train.csv"));
    MixtureModel model = fit_labeled(corpus, DpgpConfig{});
    model.provenance = {corpus_hash(corpus), 5, 0};
    return model;
  }();
  return m;
}

}  // namespace

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("mixture file round trip") {
  const MixtureModel& m = labeled_model();
  std::ostringstream a;
  write_mixture(a, m);
  std::istringstream in(a.str());
  const MixtureModel back = read_mixture(in);
  REQUIRE(back.size() == m.size());
  CHECK(back.alpha == m.alpha);
  CHECK(back.priors == m.priors);
  CHECK(back.provenance.corpus_hash == m.provenance.corpus_hash);
  CHECK(back.provenance.seed == 5);
  for (std::size_t j = 0; j < m.size(); ++j) {
    const auto& p = m.patterns[j];
    const auto& q = back.patterns[j];
    CHECK(q.label == p.label);
    CHECK(q.members == p.members);
    CHECK(q.goal == p.goal);
    CHECK(q.gp_dx.hyper().length_scale_x == p.gp_dx.hyper().length_scale_x);
    CHECK(q.gp_dy.hyper().noise_variance == p.gp_dy.hyper().noise_variance);
    REQUIRE(q.samples.size() == p.samples.size());
    CHECK(q.samples.back().dy == p.samples.back().dy);
    CHECK(std::isinf(q.lrt_reference) == std::isinf(p.lrt_reference));
    // Refit GPs give the same predictive densities.
    CHECK(q.log_likelihood(p.samples) == doctest::Approx(p.log_likelihood(p.samples)).epsilon(1e-9));
  }
  std::ostringstream b;
  write_mixture(b, back);
  CHECK(a.str() == b.str());
}

TEST_CASE("mixture file errors") {
  std::istringstream garbage("{\"format\": \"something else\"}");
  CHECK_THROWS_AS(read_mixture(garbage), DataError);
  std::istringstream truncated("{\"format\": \"flowpred-mixture\", ");
  CHECK_THROWS_AS(read_mixture(truncated), DataError);
  CHECK_THROWS_AS(load_mixture("/nonexistent/model.json"), DataError);
}

TEST_CASE("run configuration round trip") {
  RunConfig c;
  c.dpgp.seed = 42;
  c.dpgp.alpha = 0.37;
  c.online.lrt.eta = 1.0 / 3.0;
  c.online.changepoint = false;
  c.risk.delta_s = 0.995;
  c.predictors = {PredictorKind::goal_directed, PredictorKind::dpgp};
  c.horizon = 15;
  std::ostringstream a;
  write_run_config(a, c);
  std::istringstream in(a.str());
  const RunConfig back = parse_run_config(in);
  std::ostringstream b;
  write_run_config(b, back);
  CHECK(a.str() == b.str());
  CHECK(back.online.lrt.eta == c.online.lrt.eta);
  CHECK(back.predictors == c.predictors);
  CHECK_FALSE(back.online.changepoint);

  std::istringstream shipped(slurp(fixtures::source_path("config/default.ini")));
  std::ostringstream d, e;
  write_run_config(d, parse_run_config(shipped));
  write_run_config(e, RunConfig{});
  CHECK(d.str() == e.str());
}

TEST_CASE("run configuration errors") {
  const auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_run_config(in);
  };
  CHECK(parse("").horizon == 20);
  CHECK(parse("[lrt]\neta = 2.5\n").online.lrt.eta == 2.5);
  CHECK_THROWS_AS(parse("[lrt]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[nowhere]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("eta = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[lrt]\neta = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse("[online]\nchangepoint = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse("[predict]\nhorizon = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[eval]\npredictors = kalman\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == exit_usage);
  CHECK(run({"frobnicate"}).code == exit_usage);

  const Result missing = run({"predict", "--trajectory", "x.csv"});
  CHECK(missing.code == exit_usage);
  CHECK(missing.err.find("--model") != std::string::npos);

  const fs::path dir = scratch("codes");
  const fs::path bad_ini = dir / "bad.ini";
  std::ofstream(bad_ini) << "[lrt]\nwidth = 3\n";
  CHECK(run({"train", "--in", fixtures::source_path("data/crosswalk_train.csv"), "--out",
             (dir / "m.json").string(), "--config", bad_ini.string()})
            .code == exit_usage);
  CHECK(run({"train", "--in", (dir / "none.csv").string(), "--out", (dir / "m.json").string()}).code == exit_data);

  const fs::path broken = dir / "broken.csv";
  std::ofstream(broken) << "id,t,x,y\na,0,1,1\na,0,2,2\n";
  const Result r = run({"train", "--in", broken.string(), "--out", (dir / "m.json").string()});
  CHECK(r.code == exit_data);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("train, eval and rerun") {
  const fs::path dir = scratch("pipeline");
  const fs::path model = dir / "model.json";
  const std::string train = fixtures::source_path("data/crosswalk_train.csv");
  const std::string test = (dir / "test.csv").string();

  REQUIRE(run({"generate", "--scenario", fixtures::source_path("scenarios/crosswalk.json"), "--out", test,
               "--per-behavior", "1", "--seed", "77"})
              .code == exit_ok);
  CHECK(load_trajectories(test).size() == 4);
  CHECK(fs::exists(test + ".manifest.json"));

  const Result t = run({"train", "--in", train, "--out", model.string(), "--mode", "labeled"});
  REQUIRE(t.code == exit_ok);
  CHECK(t.out.find("M=4") != std::string::npos);
  CHECK(load_mixture(model).provenance.corpus_hash == corpus_hash(load_trajectories(train)));

  const fs::path out1 = dir / "eval1";
  const Result e = run({"eval", "--model", model.string(), "--corpus", test, "--out-dir", out1.string(),
                        "--predictors", "changepoint_dpgp,constant_velocity", "--horizon", "10"});
  REQUIRE(e.code == exit_ok);
  const std::string intent = slurp(out1 / "intent_curve.csv");
  CHECK(intent.find("changepoint_dpgp,") != std::string::npos);
  // Constant velocity has no intent posterior, only an RMS curve.
  CHECK(intent.find("constant_velocity,") == std::string::npos);
  CHECK(slurp(out1 / "rms_curve.csv").find("constant_velocity,") != std::string::npos);
  CHECK(intent.find("goal_directed,") == std::string::npos);

  const auto manifest = nlohmann::json::parse(slurp(out1 / "manifest.json"));
  CHECK(manifest.at("command") == "eval");
  CHECK(manifest.at("inputs").size() == 2);
  CHECK(manifest.at("config").get<std::string>().find("horizon = 10") != std::string::npos);

  const fs::path out2 = dir / "eval2";
  REQUIRE(run({"rerun", "--manifest", (out1 / "manifest.json").string(), "--out-dir", out2.string()}).code == exit_ok);
  CHECK(slurp(out2 / "intent_curve.csv") == intent);
  CHECK(slurp(out2 / "rms_curve.csv") == slurp(out1 / "rms_curve.csv"));

  // Redirected output directory.
  const fs::path redirected = dir / "redirected";
  ::setenv("FLOWPRED_OUT_DIR", redirected.string().c_str(), 1);
  const Result p = run({"predict", "--model", model.string(), "--trajectory", test, "--at", "50", "--out-dir",
                        (dir / "ignored").string()});
  ::unsetenv("FLOWPRED_OUT_DIR");
  REQUIRE(p.code == exit_ok);
  CHECK(fs::exists(redirected / "prediction.csv"));
  CHECK(fs::exists(redirected / "events.ndjson"));
  CHECK_FALSE(fs::exists(dir / "ignored"));

  // A changed input invalidates the manifest.
  std::ofstream(test, std::ios::app) << "extra,0,1,1,B\nextra,0.1,1.1,1,B\n";
  CHECK(run({"rerun", "--manifest", (out1 / "manifest.json").string(), "--out-dir", out2.string()}).code ==
        exit_data);
  fs::remove_all(dir);
}
