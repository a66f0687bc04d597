#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "adiabatic/experiment.hpp"

using namespace adiabatic;
namespace fs = std::filesystem;

namespace {

class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("adiabatic_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  int lab(const std::string& args) const {
    const std::string cmd = std::string(ADIABATIC_LAB) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }

  fs::path dir_;
};

std::vector<std::string> diagnostics_for(const std::string& text) {
  try {
    return validate(parse_config(Json::parse(text)));
  } catch (const Error& e) {
    return {e.what()};
  }
}

bool mentions(const std::vector<std::string>& diags, const std::string& needle) {
  for (const std::string& d : diags) {
    if (d.find(needle) != std::string::npos) return true;
  }
  return false;
}

const char* kQdSweep = R"({
  "experiment": "qd_sweep",
  "model": {"kind": "rotating_two_level", "params": {"delta": 1.0, "tau": 1.0}},
  "schedule": {"kind": "natural"},
  "params": {"slowdowns": [3, 5, 9], "f": "square"}
})";

}  // namespace

TEST(Csv, SeventeenSignificantDigits) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(4.0), "4");
  std::ostringstream out;
  write_csv(out, {{"a", "b"}, {{1.0 / 3.0, -2.5}}});
  EXPECT_EQ(out.str(), "a,b\n0.33333333333333331,-2.5\n");
  EXPECT_THROW(write_csv(out, {{"a", "b"}, {{1.0}}}), InvalidArgument);
}

TEST(Config, ResolvesDefaults) {
  const ExperimentConfig c = parse_config(Json::parse(R"({
    "experiment": "counterexample_scaling",
    "model": {"kind": "three_level"}
  })"));
  const auto& p = std::get<CounterexampleParams>(c.params);
  ASSERT_EQ(p.lengths.size(), 10u);
  EXPECT_DOUBLE_EQ(p.lengths.front(), 10.0);
  EXPECT_NEAR(p.lengths.back(), 200.0, 1e-12);
  EXPECT_EQ(p.plateau_tolerance, 0.005);
  EXPECT_EQ(c.tolerances.quadrature, 1e-8);
  EXPECT_EQ(c.tolerances.integrator, 1e-9);
  EXPECT_EQ(c.output_dir, "results/counterexample_scaling");
  EXPECT_GE(c.jobs, 1);
}

TEST(Config, ResolvedConfigParsesBackToItself) {
  for (const char* text : {kQdSweep, R"({"experiment": "nogo_demo",
      "model": {"kind": "rescaled", "params": {
          "base": {"kind": "three_level", "params": {"delta": 2.0}},
          "factor": {"kind": "constant", "value": 3.0}}},
      "schedule": {"kind": "polynomial", "coefficients": [1.0, 0.5]},
      "params": {"pin": 0.25, "factor": {"kind": "table", "lambda": [0, 50], "values": [1, 2]}}})"}) {
    const Json resolved = parse_config(Json::parse(text)).to_json();
    EXPECT_EQ(parse_config(resolved).to_json(), resolved);
  }
}

TEST(Config, UnknownFieldsRejected) {
  const char* cases[] = {
      R"({"experiment": "path_length", "model": {"kind": "constant", "params": {"diagonal": [0, 1]}}, "extra": 1})",
      R"({"experiment": "path_length", "model": {"kind": "constant", "params": {"diagonal": [0, 1], "gap": 1}}})",
      R"({"experiment": "path_length", "model": {"kind": "constant", "params": {"diagonal": [0, 1]}, "note": "x"}})",
      R"({"experiment": "path_length", "model": {"kind": "constant", "params": {"diagonal": [0, 1]}}, "params": {"steps": 3}})",
      R"({"experiment": "path_length", "model": {"kind": "constant", "params": {"diagonal": [0, 1]}}, "tolerances": {"gauge": 1e-8}})",
      R"({"experiment": "qd_sweep", "model": {"kind": "rotating_two_level"}, "schedule": {"kind": "constant", "velocity": 1, "speed": 2}})",
  };
  for (const char* text : cases) {
    try {
      parse_config(Json::parse(text));
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("unknown field"), std::string::npos) << e.what();
    }
  }
}

TEST(Config, TypeAndRangeChecks) {
  auto with_tol = [](const std::string& tol) {
    return R"({"experiment": "path_length", "model": {"kind": "constant", "params": {"diagonal": [0, 1]}},
               "tolerances": )" + tol + "}";
  };
  EXPECT_NO_THROW(parse_config(Json::parse(with_tol(R"({"quadrature": 1e-12, "integrator": 1e-4})"))));
  EXPECT_THROW(parse_config(Json::parse(with_tol(R"({"quadrature": 1e-13})"))), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(with_tol(R"({"integrator": 2e-4})"))), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(with_tol(R"({"integrator": "1e-9"})"))), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"experiment": "path_length",
      "model": {"kind": "constant", "params": {"diagonal": [0, 1]}}, "params": {"samples": 1.5}})")),
               ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"experiment": "sweep", "model": {"kind": "three_level"}})")),
               ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"experiment": "path_length", "model": {"kind": "spiral"}})")),
               ConfigError);
  // experiments with a built-in model reject others
  EXPECT_THROW(parse_config(Json::parse(
                   R"({"experiment": "counterexample_scaling", "model": {"kind": "rotating_two_level"}})")),
               ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"experiment": "periodic_scaling",
      "model": {"kind": "rotating_two_level"}, "schedule": {"kind": "constant", "velocity": 2}})")),
               ConfigError);
  EXPECT_THROW(parse_config(Json::parse(
                   R"({"experiment": "qd_sweep", "model": {"kind": "three_level"}})")),
               ConfigError);
}

TEST(Validate, CleanConfigHasNoDiagnostics) {
  EXPECT_TRUE(diagnostics_for(kQdSweep).empty());
  EXPECT_TRUE(diagnostics_for(R"({"experiment": "path_length",
      "model": {"kind": "three_level", "params": {"parameter": "native"}}})").empty());
}

TEST(Validate, ZeroGapRotatingModelIsDegenerate) {
  const auto d = diagnostics_for(R"({"experiment": "periodic_scaling",
      "model": {"kind": "rotating_two_level", "params": {"delta": 0.0}}})");
  ASSERT_FALSE(d.empty());
  EXPECT_TRUE(mentions(d, "degenerate spectrum"));
  // also when the zero-gap block sits inside a direct sum
  EXPECT_TRUE(mentions(diagnostics_for(R"({"experiment": "path_length",
      "model": {"kind": "direct_sum", "params": {"parts": [
          {"kind": "rotating_two_level", "params": {"delta": 1.0}},
          {"kind": "rotating_two_level", "params": {"delta": 0.0}}]}}})"),
                       "degenerate spectrum"));
}

TEST(Validate, DegenerateProbeOnConstantModel) {
  EXPECT_TRUE(mentions(diagnostics_for(R"({"experiment": "path_length",
      "model": {"kind": "constant", "params": {"diagonal": [0.0, 1.0, 1.0]}}})"),
                       "degenerate spectrum"));
}

TEST(Validate, PinWithNonMonotoneFactor) {
  const auto d = diagnostics_for(R"({"experiment": "nogo_demo",
      "model": {"kind": "three_level"},
      "params": {"lengths": [4], "pin": 0.5,
                 "factor": {"kind": "table", "lambda": [0, 1, 2, 3, 4], "values": [1, 2, 1.5, 3, 4]}}})");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_TRUE(mentions(d, "monotonicity precondition"));
  // the same factor without a pin is fine
  EXPECT_TRUE(diagnostics_for(R"({"experiment": "nogo_demo",
      "model": {"kind": "three_level"}, "params": {"lengths": [4], "integrate": false,
                 "factor": {"kind": "table", "lambda": [0, 1, 2, 3, 4], "values": [1, 2, 1.5, 3, 4]}}})")
                  .empty());
}

TEST_F(Scratch, SampledPathFromCsv) {
  // rotating model sampled on s in [0, 1]; one period sweeps a great circle
  std::ostringstream csv;
  csv << "s,re00,im00,re01,im01,re10,im10,re11,im11\n";
  const RotatingTwoLevelParams p{1.0, 1.0};
  const HamiltonianPath ref = rotating_two_level_path(p);
  for (double s : uniform_grid(0.0, 1.0, 200)) {
    const Operator h = ref.eval(s);
    csv << format_number(s);
    for (Index r = 0; r < 2; ++r) {
      for (Index c = 0; c < 2; ++c) {
        csv << "," << format_number(h(r, c).real()) << "," << format_number(h(r, c).imag());
      }
    }
    csv << "\n";
  }
  write("ops.csv", csv.str());
  const fs::path cfg = write("sampled.json", R"({"experiment": "path_length",
      "model": {"kind": "sampled", "params": {"csv": "ops.csv", "dim": 2}}})");
  const ExperimentConfig c = load_config(cfg);
  EXPECT_TRUE(validate(c).empty());
  const RunResult r = run_experiment(c);
  ASSERT_EQ(r.table.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(r.table.rows[0][0], 1.0);
  EXPECT_NEAR(r.table.rows[0][1], kPi, 1e-4);

  write("short.csv", "0,1,0,0,0,0,0,-1,0\n1,1,0,0,0,0,0,-1,0\n");
  EXPECT_THROW(load_config(write("short.json", R"({"experiment": "path_length",
      "model": {"kind": "sampled", "params": {"csv": "short.csv", "dim": 2}}})")),
               ConfigError);
  write("ragged.csv", "0,1,0\n");
  EXPECT_THROW(load_config(write("ragged.json", R"({"experiment": "path_length",
      "model": {"kind": "sampled", "params": {"csv": "ragged.csv", "dim": 2}}})")),
               ConfigError);
}

TEST_F(Scratch, PathLengthOfConstantModelIsOneZeroRow) {
  const fs::path cfg = write("c.json", R"({"experiment": "path_length",
      "model": {"kind": "constant", "params": {"diagonal": [0.0, 1.0, 2.5]}}})");
  EXPECT_EQ(lab("run " + cfg.string() + " --out " + (dir_ / "out").string()), 0);
  EXPECT_EQ(slurp(dir_ / "out" / "results.csv"), "s,length\n1,0\n");
  EXPECT_TRUE(fs::exists(dir_ / "out" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "manifest.json"));
}

TEST_F(Scratch, MalformedJsonLeavesNoArtifacts) {
  const fs::path cfg = write("bad.json", R"({"experiment": "path_length", "model": )");
  EXPECT_EQ(lab("run " + cfg.string() + " --out " + (dir_ / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
  EXPECT_NE(slurp(dir_ / "stderr.txt").find("malformed JSON"), std::string::npos);
  EXPECT_EQ(lab("validate " + cfg.string()), 2);
}

TEST_F(Scratch, ConfigErrorsExitTwo) {
  const fs::path unknown = write("u.json", R"({"experiment": "path_length",
      "model": {"kind": "constant", "params": {"diagonal": [0, 1]}}, "colour": "red"})");
  EXPECT_EQ(lab("run " + unknown.string() + " --out " + (dir_ / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
  const fs::path zero = write("z.json", R"({"experiment": "periodic_scaling",
      "model": {"kind": "rotating_two_level", "params": {"delta": 0}}})");
  EXPECT_EQ(lab("validate " + zero.string()), 2);
  EXPECT_NE(slurp(dir_ / "stdout.txt").find("degenerate spectrum"), std::string::npos);
  EXPECT_EQ(lab("run " + zero.string() + " --out " + (dir_ / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir_ / "out"));
  EXPECT_EQ(lab("run " + (dir_ / "missing.json").string()), 2);
  EXPECT_EQ(lab("frobnicate"), 2);
  const fs::path ok = write("ok.json", kQdSweep);
  EXPECT_EQ(lab("validate " + ok.string()), 0);
  EXPECT_EQ(lab("run " + ok.string() + " --jobs 0 --out " + (dir_ / "out").string()), 2);
}

TEST_F(Scratch, NumericalFailureExitsThreeWithFlaggedArtifacts) {
  const fs::path cfg = write("f.json", R"({"experiment": "periodic_scaling",
      "model": {"kind": "rotating_two_level"},
      "params": {"eps_target": 1e-6, "cycles": [1, 2], "max_iterations": 1}})");
  EXPECT_EQ(lab("run " + cfg.string() + " --out " + (dir_ / "out").string()), 3);
  const Json summary = Json::parse(slurp(dir_ / "out" / "summary.json"));
  EXPECT_EQ(summary["status"], "numerical_failure");
  EXPECT_NE(summary["error"].get<std::string>().find("bracket"), std::string::npos);
  EXPECT_EQ(Json::parse(slurp(dir_ / "out" / "manifest.json"))["status"], "numerical_failure");
  EXPECT_EQ(slurp(dir_ / "out" / "results.csv").substr(0, 7), "cycles,");
}

TEST_F(Scratch, ResultsAreByteIdenticalAcrossRunsAndJobCounts) {
  const fs::path cfg = write("q.json", kQdSweep);
  EXPECT_EQ(lab("run " + cfg.string() + " --jobs 1 --out " + (dir_ / "a").string()), 0);
  EXPECT_EQ(lab("run " + cfg.string() + " --jobs 3 --out " + (dir_ / "b").string()), 0);
  EXPECT_EQ(lab("run " + cfg.string() + " --jobs 3 --out " + (dir_ / "c").string()), 0);
  const std::string a = slurp(dir_ / "a" / "results.csv");
  EXPECT_EQ(a.substr(0, 23), "slowdown,transit_time,q");
  EXPECT_EQ(a, slurp(dir_ / "b" / "results.csv"));
  EXPECT_EQ(a, slurp(dir_ / "c" / "results.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "summary.json"), slurp(dir_ / "b" / "summary.json"));
}

TEST_F(Scratch, ManifestRecordsEveryToleranceAndDefault) {
  const fs::path cfg = write("m.json", R"({"experiment": "path_length",
      "model": {"kind": "three_level", "params": {"parameter": "native"}},
      "tolerances": {"quadrature": 1e-10}, "params": {"s_end": 2, "samples": 2}})");
  EXPECT_EQ(lab("run " + cfg.string() + " --out " + (dir_ / "out").string()), 0);
  const Json m = Json::parse(slurp(dir_ / "out" / "manifest.json"));
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_EQ(m["config"]["tolerances"]["quadrature"], 1e-10);
  EXPECT_EQ(m["config"]["tolerances"]["integrator"], 1e-9);
  EXPECT_EQ(m["config"]["params"]["s_start"], 0.0);
  EXPECT_EQ(m["config"]["model"]["params"]["delta"], 1.0);
  EXPECT_EQ(m["config"]["model"]["params"]["tau"], 1.0);
  for (const char* key : {"quadrature_rel", "quadrature_abs", "quadrature_max_depth", "integrator",
                          "integrator_max_halvings", "integrator_max_phase_step",
                          "integrator_max_lambda_step", "frame_min_overlap"}) {
    EXPECT_TRUE(m["tolerances"].contains(key)) << key;
  }
  EXPECT_EQ(m["tolerances"]["quadrature_rel"], 1e-10);
  // the manifest config is itself a valid config
  EXPECT_NO_THROW(parse_config(m["config"]));
  const Json s = Json::parse(slurp(dir_ / "out" / "summary.json"));
  EXPECT_LE(s["max_relative_error_vs_closed_form"].get<double>(), 1e-8);
}

TEST(Run, NogoDemoRowsAndFits) {
  const ExperimentConfig c = parse_config(Json::parse(R"({"experiment": "nogo_demo",
      "model": {"kind": "three_level"},
      "schedule": {"kind": "constant", "velocity": 1.0},
      "params": {"lengths": [5, 10, 20, 40], "integrate": false, "pin": 0.5}, "jobs": 2})"));
  const RunResult r = run_experiment(c);
  ASSERT_EQ(r.table.rows.size(), 4u);
  ASSERT_EQ(r.table.header.back(), "leakage");
  for (const auto& row : r.table.rows) {
    EXPECT_NEAR(row[3], std::atan(row[0]) / row[0], 1e-8);
    EXPECT_NEAR(row[6], 0.5, 1e-10);
  }
  EXPECT_NEAR(r.summary["fit"]["exponent"].get<double>(), -0.94, 0.03);
  EXPECT_NEAR(r.summary["local_ratio_fit"]["exponent"].get<double>(), -1.98, 0.03);
  EXPECT_EQ(r.summary["status"], "ok");
}

TEST(Run, PinAboveGapIsAnInputError) {
  const ExperimentConfig c = parse_config(Json::parse(R"({"experiment": "nogo_demo",
      "model": {"kind": "three_level"}, "schedule": {"kind": "constant", "velocity": 1.0},
      "params": {"lengths": [3], "integrate": false, "pin": 1.5}})"));
  EXPECT_THROW(run_experiment(c), InvalidArgument);
}
