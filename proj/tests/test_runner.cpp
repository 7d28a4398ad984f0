#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>

#include "fpp/config.hpp"
#include "fpp/io.hpp"
#include "fpp/runner.hpp"

using namespace fpp;
namespace fs = std::filesystem;

namespace {

ojson base_config(const std::string& kind) {
  return {{"schema_version", 1},
          {"kind", kind},
          {"seed", 7},
          {"dimension", 2},
          {"distribution", {{"type", "uniform"}, {"lo", 0.01}, {"hi", 0.0625}}},
          {"params", ojson::object()}};
}

ExperimentConfig parse(const ojson& j) { return parse_config_text(j.dump()); }

// One small, fast configuration per kind.
ojson small_config(const std::string& kind) {
  ojson c = base_config(kind);
  ojson& p = c["params"];
  if (kind == "mu") {
    c["n_samples"] = 4;
    p["N_list"] = {4, 8};
  } else if (kind == "chi" || kind == "xi") {
    c["n_samples"] = 30;
    p["N_list"] = {4, 8, 16};
  } else if (kind == "chi_u_excess") {
    c["n_samples"] = 30;
    p = {{"N_list", {4, 8, 16}}, {"chi_probe", 0.5}, {"mu_ref", 0.03}};
  } else if (kind == "tail") {
    c["n_samples"] = 50;
    p = {{"N", 8}, {"side", "upper"}, {"zeta", 0.01}, {"mu_ref", 0.03}};
  } else if (kind == "rate_curve") {
    c["n_samples"] = 50;
    p = {{"N", 8}, {"side", "upper"}, {"zeta_grid", {0.001, 0.002}}, {"mu_ref", 0.03}};
  } else if (kind == "slab_certify") {
    p = {{"N", 32}, {"a", 0.8}, {"M", 2}, {"mu_ref", 0.03}};
  } else if (kind == "bad_scan") {
    p = {{"N", 64}, {"M", 2}, {"m", 1}, {"a", 0.8}, {"b", 0.5}, {"K", 4}, {"chi_bar_eps", 0.4}, {"mu_ref", 0.03}};
  } else if (kind == "dark_scan") {
    p = {{"N", 16}, {"b", 0.5}, {"K_hat", 4}, {"A", 9}, {"mu_ref", 0.03}};
  } else if (kind == "face_profile") {
    p = {{"N", 16}, {"K", 4}, {"J", 2}, {"b_lo", 0.4}, {"L", 5}, {"window", 12}, {"mu_ref", 0.03}};
  } else if (kind == "block_chain_upper") {
    p = {{"N", 200}, {"zeta", 0.05}, {"mu_ref", 0.03}};
  } else if (kind == "block_chain_lower") {
    p = {{"N", 32}, {"a", 0.8}, {"mu_ref", 0.03}};
  } else if (kind == "exact_oracle") {
    c["distribution"] = {{"type", "two_point"}, {"low", 0.02}, {"high", 0.05}, {"p", 0.5}};
    p = {{"box_lo", {0, 0}}, {"box_hi", {2, 2}}};
  }
  return c;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

TEST(Config, SampleConfigsParse) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(FPP_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(parse_config_text(read_file(e.path()))) << e.path();
    ++n;
  }
  EXPECT_EQ(n, experiment_kinds().size());
}

TEST(Config, DefaultsAreFilledIn) {
  const auto c = parse(small_config("slab_certify"));
  EXPECT_EQ(c.params["eps"], 0.0);
  EXPECT_EQ(c.params["instances"], 1);
  EXPECT_EQ(c.direction, (std::vector<double>{1, 0}));
  EXPECT_EQ(c.workers, 1u);

  auto j = small_config("tail");
  j["params"].erase("mu_ref");
  const auto t = parse(j);
  EXPECT_EQ(t.params["mu_ref"], "estimate");
  EXPECT_EQ(t.params["mu_samples"], 50);
}

TEST(Config, DirectionIsNormalized) {
  auto j = small_config("mu");
  j["direction"] = {3, 4};
  const auto c = parse(j);
  EXPECT_DOUBLE_EQ(c.direction[0], 0.6);
  EXPECT_DOUBLE_EQ(c.direction[1], 0.8);
}

TEST(Config, Rejections) {
  const std::vector<std::pair<std::string, std::function<void(ojson&)>>> cases{
      {"unknown top-level key", [](ojson& j) { j["colour"] = "red"; }},
      {"unknown param", [](ojson& j) { j["params"]["Nlist"] = {4}; }},
      {"missing kind", [](ojson& j) { j.erase("kind"); }},
      {"unknown kind", [](ojson& j) { j["kind"] = "mu2"; }},
      {"schema version", [](ojson& j) { j["schema_version"] = 2; }},
      {"negative seed", [](ojson& j) { j["seed"] = -1; }},
      {"dimension 5", [](ojson& j) { j["dimension"] = 5; }},
      {"direction length", [](ojson& j) { j["direction"] = {1, 0, 0}; }},
      {"zero direction", [](ojson& j) { j["direction"] = {0, 0}; }},
      {"weight above w_max", [](ojson& j) { j["distribution"]["hi"] = 0.07; }},
      {"zero atom", [](ojson& j) { j["distribution"] = {{"type", "constant"}, {"value", 0.0}}; }},
      {"unknown distribution", [](ojson& j) { j["distribution"] = {{"type", "gamma"}}; }},
      {"p above one", [](ojson& j) {
         j["distribution"] = {{"type", "two_point"}, {"low", 0.01}, {"high", 0.02}, {"p", 1.5}};
       }},
      {"missing n_samples", [](ojson& j) { j.erase("n_samples"); }},
      {"zero workers", [](ojson& j) { j["workers"] = 0; }},
      {"non-integer N", [](ojson& j) { j["params"]["N_list"] = {4.5}; }},
      {"non-positive N", [](ojson& j) { j["params"]["N_list"] = {0, 4}; }},
      {"svg not bool", [](ojson& j) { j["svg"] = 1; }},
  };
  for (const auto& [what, mutate] : cases) {
    auto j = small_config("mu");
    j["n_samples"] = 4;
    mutate(j);
    EXPECT_THROW(parse(j), ConfigError) << what;
  }
  EXPECT_THROW(parse_config_text("{ not json"), ConfigError);
  EXPECT_THROW(parse_config_text("[1,2]"), ConfigError);
}

TEST(Config, MagnitudeMustBeExactlyOne) {
  auto j = small_config("tail");
  j["params"]["a"] = 0.8;
  EXPECT_THROW(parse(j), ConfigError);
  j["params"].erase("a");
  j["params"].erase("zeta");
  EXPECT_THROW(parse(j), ConfigError);
  auto l = small_config("block_chain_lower");
  l["params"]["zeta"] = 0.1;
  EXPECT_THROW(parse(l), ConfigError);
}

TEST(Config, KindSpecificRules) {
  auto j = small_config("exact_oracle");
  j["distribution"] = {{"type", "uniform"}, {"lo", 0.01}, {"hi", 0.02}};
  EXPECT_THROW(parse(j), ConfigError);
  j = small_config("exact_oracle");
  j["params"]["box_hi"] = {2, 2, 2};
  EXPECT_THROW(parse(j), ConfigError);
  j = small_config("tail");
  j["params"]["mu_ref"] = "estimate";
  j["params"]["mu_samples"] = 1;
  EXPECT_THROW(parse(j), ConfigError);
  j = small_config("tail");
  j["params"]["side"] = "both";
  EXPECT_THROW(parse(j), ConfigError);
  j = small_config("slab_certify");
  j["params"].erase("M");
  EXPECT_THROW(parse(j), ConfigError);
}

// ---------------------------------------------------------------------------
// Runner

TEST(Runner, ConstantFieldGivesExactMu) {
  auto j = small_config("mu");
  j["distribution"] = {{"type", "constant"}, {"value", 0.05}};
  const auto out = run_experiment(parse(j));
  EXPECT_DOUBLE_EQ(out.results["result"]["mu_hat"].get<double>(), 0.05);
  EXPECT_EQ(out.results["kind"], "mu");
  EXPECT_FALSE(out.results["config"].contains("workers"));
  EXPECT_FALSE(out.results["config"].contains("output_dir"));
}

TEST(Runner, ExactOraclePmfSumsToOne) {
  const auto out = run_experiment(parse(small_config("exact_oracle")));
  const auto& r = out.results["result"];
  double total = 0;
  for (const auto& x : r["pmf"]) total += x.get<double>();
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(r["edges"], 12);
  ASSERT_EQ(out.files.size(), 1u);
  EXPECT_EQ(out.files[0].first, "pmf.csv");
}

TEST(Runner, EveryKindEmitsItsTables) {
  const std::map<std::string, std::map<std::string, std::string>> expected{
      {"mu", {{"mu_per_scale.csv", "N,mean_T_over_N,stderr,n_samples,nonrandom_fluctuation"}}},
      {"chi", {{"chi_loglog.csv", "log_N,log_var"}, {"chi_fit.json", "{"}}},
      {"xi", {{"xi_loglog.csv", "log_N,log_mean_deviation"}, {"xi_fit.json", "{"}}},
      {"chi_u_excess", {{"chi_u_excess_loglog.csv", "log_N,log_mean_excess"}, {"chi_u_excess_fit.json", "{"}}},
      {"tail", {{"tail.csv", "side,N,magnitude_kind,magnitude,threshold,hits,n,p_hat,ci_lo,ci_hi"}}},
      {"rate_curve",
       {{"rate_curve.csv", "zeta,p_hat,ci_lo,ci_hi,neg_log_p_normalized"}, {"rate_curve_fit.json", "{"}}},
      {"slab_certify",
       {{"slab.csv", "instance,certified,m,pair,A_size,from_size,covered,to_size,direct_T,bound,rechecked"}}},
      {"bad_scan", {{"bad_witnesses.csv", "z,y,y_prime,restricted_time,threshold,class,rechecked"}}},
      {"dark_scan", {{"dark_witnesses.csv", "x,y,kind,time,threshold,rechecked"}}},
      {"face_profile", {{"face_times.csv", "i,time"}, {"face_deficits.csv", "b,threshold,deficit_count"}}},
      {"block_chain_upper",
       {{"block_chain_upper_blocks.csv", "instance,block,time,event"},
        {"block_chain_upper_summary.csv", "instance,implied_lower_bound,actual_T,hypotheses,violation"}}},
      {"block_chain_lower",
       {{"block_chain_lower_blocks.csv", "instance,block,time,event"},
        {"block_chain_lower_summary.csv", "instance,block_sum,actual_T,conjunction,violation"}}},
      {"exact_oracle", {{"pmf.csv", "time,probability"}}},
  };
  ASSERT_EQ(expected.size(), experiment_kinds().size());
  for (const auto& kind : experiment_kinds()) {
    SCOPED_TRACE(kind);
    const auto out = run_experiment(parse(small_config(kind)));
    const auto& want = expected.at(kind);
    ASSERT_EQ(out.files.size(), want.size());
    for (const auto& [name, content] : out.files) {
      ASSERT_TRUE(want.count(name)) << name;
      EXPECT_EQ(first_line(content), want.at(name)) << name;
    }
  }
}

TEST(Runner, SvgPanelsOnRequest) {
  auto j = small_config("chi");
  j["svg"] = true;
  const auto out = run_experiment(parse(j));
  bool found = false;
  for (const auto& [name, content] : out.files)
    if (name == "chi_loglog.svg") found = content.rfind("<svg", 0) == 0 || content.find("<svg") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Runner, EmptyResultsAreRejected) {
  EXPECT_THROW(emit_plotdata(ojson{{"kind", "mu"}}), EmptyResults);
  EXPECT_THROW(emit_plotdata(ojson{{"kind", "mu"}, {"result", nullptr}}), EmptyResults);
  EXPECT_THROW(emit_plotdata(ojson{{"kind", "mu"}, {"result", ojson::object()}}), EmptyResults);
  EXPECT_THROW(emit_plotdata(ojson::array()), EmptyResults);
}

TEST(Runner, EstimatedMuIsRecorded) {
  auto j = small_config("tail");
  j["params"]["mu_ref"] = "estimate";
  j["params"]["mu_samples"] = 4;
  const auto out = run_experiment(parse(j));
  const auto& r = out.results["result"];
  EXPECT_EQ(r["mu_ref_source"], "estimate");
  EXPECT_GT(r["mu_ref"].get<double>(), 0.01);
  EXPECT_LT(r["mu_ref"].get<double>(), 0.0625);
}

// ---------------------------------------------------------------------------
// IO

TEST(Io, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, CsvQuotingAndShape) {
  CsvTable t({"a", "b"});
  t.row().cell(std::string("x,y")).cell(0.5);
  t.row().cell(std::string("say \"hi\"")).cell(std::int64_t{-3});
  EXPECT_EQ(t.str(), "a,b\n\"x,y\",0.5\n\"say \"\"hi\"\"\",-3\n");
  CsvTable bad({"a", "b"});
  bad.row().cell(1);
  EXPECT_THROW(bad.str(), std::logic_error);
  EXPECT_EQ(format_number(0.1), "0.1");
}

// ---------------------------------------------------------------------------
// Command line

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fpp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const ojson& j) {
    const fs::path p = dir_ / name;
    write_file(p, j.dump(2));
    return p;
  }

  static int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(FPP_LAB_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  static ojson manifest(const fs::path& out) { return ojson::parse(read_file(out / "manifest.json")); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, ValidateAcceptsSampleConfig) {
  EXPECT_EQ(run("validate -c " + std::string(FPP_CONFIG_DIR) + "/mu.json"), 0);
}

TEST_F(Cli, ConfigErrorsWriteNothing) {
  auto j = small_config("mu");
  j["bogus"] = 1;
  const auto cfg = write_config("bad.json", j);
  const fs::path out = dir_ / "out";
  EXPECT_EQ(run("run -c " + cfg.string() + " -o " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  write_file(dir_ / "broken.json", "{");
  EXPECT_EQ(run("run -c " + (dir_ / "broken.json").string() + " -o " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("run"), 2);
  EXPECT_EQ(run("run -c " + (dir_ / "missing.json").string()), 2);
  EXPECT_EQ(run(""), 2);
  const auto cfg = write_config("mu.json", small_config("mu"));
  EXPECT_EQ(run("tail -c " + cfg.string() + " -o " + (dir_ / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(Cli, BudgetExhaustionExitsFour) {
  const auto cfg = write_config("mu.json", small_config("mu"));
  const fs::path out = dir_ / "out";
  EXPECT_EQ(run("mu -c " + cfg.string() + " -o " + out.string() + " --budget 3"), 4);
  EXPECT_EQ(manifest(out)["exit_code"], 4);
  EXPECT_FALSE(fs::exists(out / "results.json"));
}

TEST_F(Cli, ComputeFailureExitsThree) {
  auto j = small_config("exact_oracle");
  j["params"]["box_hi"] = {4, 4};  // 40 edges
  const auto cfg = write_config("big.json", j);
  const fs::path out = dir_ / "out";
  EXPECT_EQ(run("oracle -c " + cfg.string() + " -o " + out.string()), 3);
  EXPECT_EQ(manifest(out)["exit_code"], 3);
}

TEST_F(Cli, ManifestDigestsMatchFiles) {
  const auto cfg = write_config("oracle.json", small_config("exact_oracle"));
  const fs::path out = dir_ / "out";
  ASSERT_EQ(run("oracle -c " + cfg.string() + " -o " + out.string()), 0);
  const auto m = manifest(out);
  EXPECT_EQ(m["exit_code"], 0);
  EXPECT_EQ(m["config_sha256"], sha256_hex(read_file(cfg)));
  EXPECT_EQ(m["kind"], "exact_oracle");
  ASSERT_EQ(m["artifacts"].size(), 2u);
  for (const auto& a : m["artifacts"]) {
    const std::string content = read_file(out / a["name"].get<std::string>());
    EXPECT_EQ(a["sha256"], sha256_hex(content));
    EXPECT_EQ(a["bytes"], content.size());
  }
  EXPECT_TRUE(fs::exists(out / "run.log"));
}

TEST_F(Cli, OutputDirectoryPrecedence) {
  auto j = small_config("exact_oracle");
  j["output_dir"] = (dir_ / "from_config").string();
  const auto cfg = write_config("oracle.json", j);
  ASSERT_EQ(run("run -c " + cfg.string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "from_config" / "results.json"));
  ASSERT_EQ(run("run -c " + cfg.string(), "FPP_OUT_DIR=" + (dir_ / "from_env").string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "from_env" / "results.json"));
  ASSERT_EQ(run("run -c " + cfg.string() + " -o " + (dir_ / "from_flag").string(),
                "FPP_OUT_DIR=" + (dir_ / "from_env2").string()),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "from_flag" / "results.json"));
  EXPECT_FALSE(fs::exists(dir_ / "from_env2"));
}

TEST_F(Cli, ReproducibleAcrossRunsAndWorkers) {
  const auto cfg = write_config("chi.json", small_config("chi"));
  std::vector<std::map<std::string, std::string>> outputs;
  for (const auto& [name, workers] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
    const fs::path out = dir_ / name;
    ASSERT_EQ(run("run -c " + cfg.string() + " -o " + out.string() + " -w " + std::to_string(workers)), 0);
    std::map<std::string, std::string> files;
    const ojson m = manifest(out);
    for (const auto& a : m["artifacts"])
      files[a["name"].get<std::string>()] = read_file(out / a["name"].get<std::string>());
    outputs.push_back(std::move(files));
  }
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0], outputs[2]);
  EXPECT_FALSE(outputs[0].empty());
}
