#include "cli.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::path(::testing::TempDir()) /
            ("mdet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }

  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  Outcome run(std::vector<std::string> args) const {
    std::ostringstream out, err;
    const int code = mdet::cli::run(args, out, err);
    return {code, out.str(), err.str()};
  }

  json manifest(const std::string& name) const {
    std::ifstream f(root_ / name / "manifest.json");
    return json::parse(f);
  }

  std::vector<std::string> lines(const std::string& file) const {
    std::ifstream f(root_ / file);
    std::vector<std::string> out;
    for (std::string l; std::getline(f, l);) out.push_back(l);
    return out;
  }

  std::vector<std::string> tiny_train(const std::string& out) const {
    return {"train",     "--set", "embed_dim=8",      "--set",  "n_layers=1", "--set", "n_heads=2", "--set",
            "n_rbf=4",   "--set", "n_fourier=4",      "--steps", "12",        "--warmup", "2", "--n-structures",
            "12",        "--conformers", "2",         "--seed", "5",          "--out", dir(out)};
  }

  fs::path root_;
};

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, mdet::cli::kExitOk);
  EXPECT_EQ(run({}).code, mdet::cli::kExitUsage);
  EXPECT_EQ(run({"simulate", "--precision", "16"}).code, mdet::cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, mdet::cli::kExitUsage);
  EXPECT_EQ(run({"simulate", "--steps", "ten", "--out", dir("nan")}).code, mdet::cli::kExitUsage);
}

TEST_F(Cli, UnknownKeysAreListedExhaustively) {
  const fs::path cfg = root_ / "bad.cfg";
  std::ofstream(cfg) << "steps = 10\nbogus = 1\nembed_dimm = 3\n# comment\n";
  const auto r = run({"simulate", "--config", cfg.string(), "--set", "zzz=1", "--out", dir("bad")});
  EXPECT_EQ(r.code, mdet::cli::kExitUsage);
  for (const char* key : {"bogus", "embed_dimm", "zzz"}) EXPECT_NE(r.err.find(key), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find("steps"), std::string::npos);
  const auto m = manifest("bad");
  EXPECT_EQ(m["status"], "usage_error");
  EXPECT_EQ(m["exit_code"], 1);
}

TEST_F(Cli, KeysValidPerSubcommandOnly) {
  // `window` belongs to spectrum, not simulate.
  EXPECT_EQ(run({"simulate", "--set", "window=hann", "--out", dir("w")}).code, mdet::cli::kExitUsage);
}

TEST_F(Cli, FlagsOverrideConfigFile) {
  const fs::path cfg = root_ / "sim.cfg";
  std::ofstream(cfg) << "steps = 500\ndt = 0.25\n";
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--steps", "20", "--out", dir("o")}).code, 0);
  const auto m = manifest("o");
  EXPECT_EQ(m["config"]["steps"], "20");
  EXPECT_EQ(m["config"]["dt"], "0.25");
  EXPECT_EQ(m["results"]["frames"], 21);
}

TEST_F(Cli, NveAndOffsetRotationsRecorded) {
  ASSERT_EQ(run({"simulate", "--nve", "--offset-rotations", "--steps", "50", "--out", dir("nve")}).code, 0);
  const auto m = manifest("nve");
  EXPECT_EQ(m["config"]["thermostat"], "none");
  EXPECT_EQ(m["config"]["offset_rotations"], "true");
  EXPECT_EQ(lines("nve/energy.csv").front(), "time,E_kin,E_pot,E_total,T,conserved");
  EXPECT_EQ(lines("nve/energy.csv").size(), 52u);
}

TEST_F(Cli, BlowUpIsNumericalAbortWithLastStableFrame) {
  const auto r = run({"simulate", "--set", "blowup_distance=1.5", "--temperature", "3000", "--steps", "2000", "--out",
                      dir("boom")});
  EXPECT_EQ(r.code, mdet::cli::kExitNumerical);
  EXPECT_NE(r.err.find("last stable step"), std::string::npos) << r.err;
  const auto m = manifest("boom");
  EXPECT_EQ(m["status"], "numerical_abort");
  EXPECT_TRUE(m["results"].contains("last_stable_frame"));
}

TEST_F(Cli, TrainIsByteReproducibleAndFeedsSimulateAndAudit) {
  ASSERT_EQ(run(tiny_train("a")).code, 0);
  ASSERT_EQ(run(tiny_train("b")).code, 0);
  const std::string ckpt = (root_ / "a" / "checkpoint.bin").string();
  EXPECT_EQ(read_file(ckpt), read_file(root_ / "b" / "checkpoint.bin"));
  EXPECT_EQ(lines("a/metrics.csv").front(), "step,lr,loss,val_mae");
  EXPECT_EQ(lines("a/metrics.csv").size(), 13u);

  for (const char* precision : {"32", "64"}) {
    const std::string out = std::string("sim") + precision;
    ASSERT_EQ(run({"simulate", "--checkpoint", ckpt, "--precision", precision, "--steps", "10", "--out", dir(out)}).code,
              0);
    EXPECT_EQ(manifest(out)["results"]["provider"], std::string("model/fp") + precision);
    EXPECT_EQ(manifest(out)["config"]["embed_dim"], "8");
  }
  ASSERT_EQ(run({"audit", "--checkpoint", ckpt, "--n-systems", "1", "--lambda-draws", "0", "--out", dir("aud")}).code, 0);
  const auto m = manifest("aud");
  EXPECT_GT(m["results"]["equivariance_error"].get<double>(), 0.0);
  EXPECT_GT(m["results"]["max_lambda"].get<double>(), 0.0);
}

TEST_F(Cli, PaperPresetEchoedIntoManifest) {
  ASSERT_EQ(run({"train", "--preset", "paper", "--dry-run", "--out", dir("paper")}).code, 0);
  const auto c = manifest("paper")["config"];
  EXPECT_EQ(std::stod(c["learning_rate"].get<std::string>()), 5e-4);
  EXPECT_EQ(c["n_layers"], "12");
  EXPECT_EQ(c["embed_dim"], "192");
  EXPECT_EQ(c["warmup_steps"], "5000");
  EXPECT_EQ(c["total_steps"], "880000");
  EXPECT_EQ(std::stod(c["min_lr"].get<std::string>()), 5e-8);
  EXPECT_EQ(c["batch_size"], "1024");
}

TEST_F(Cli, AuditOfAnalyticOracle) {
  ASSERT_EQ(run({"audit", "--n-systems", "3", "--out", dir("oracle")}).code, 0);
  const auto m = manifest("oracle");
  EXPECT_LE(m["results"]["equivariance_error"].get<double>(), 1e-10);
  EXPECT_LE(m["results"]["max_lambda"].get<double>(), 1e-8);
  EXPECT_NEAR(m["results"]["lambda_random_mean"].get<double>(), 0.7, 0.03);

  std::map<std::pair<std::string, std::string>, int> per_atom;
  const auto rows = lines("oracle/rotation_grid.csv");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    std::stringstream ss(rows[k]);
    std::string mode, system, atom;
    std::getline(ss, mode, ',');
    std::getline(ss, system, ',');
    std::getline(ss, atom, ',');
    ++per_atom[{system, atom}];
  }
  ASSERT_FALSE(per_atom.empty());
  for (const auto& [key, count] : per_atom) EXPECT_EQ(count, 60);
}

TEST_F(Cli, SpectrumOfSimulatedTrajectory) {
  ASSERT_EQ(run({"simulate", "--atoms", "2", "--steps", "2000", "--out", dir("traj")}).code, 0);
  const auto r = run({"spectrum", "--trajectory", (root_ / "traj" / "trajectory.xyz").string(), "--out", dir("spec")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = manifest("spec");
  EXPECT_GT(m["results"]["peak_wavenumber_cm"].get<double>(), 0.0);
  EXPECT_EQ(lines("spec/spectrum.csv").front(), "wavenumber_cm,power");
  EXPECT_EQ(run({"spectrum", "--out", dir("none")}).code, mdet::cli::kExitUsage);
}

TEST_F(Cli, BenchGridAndMemoryGrowth) {
  ASSERT_EQ(run({"bench", "--set", "embed_dim=8", "--set", "n_heads=2", "--set", "n_layers=1", "--sizes", "4,8,12",
                 "--repeats", "1", "--out", dir("bench")})
                .code,
            0);
  const auto rows = lines("bench/bench.csv");
  ASSERT_EQ(rows.size(), 10u);
  std::set<std::string> batches;
  std::map<std::string, std::map<int, long long>> memory;  // batch → N → bytes
  for (std::size_t k = 1; k < rows.size(); ++k) {
    std::stringstream ss(rows[k]);
    std::vector<std::string> f;
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    batches.insert(f[1]);
    memory[f[1]][std::stoi(f[0])] = std::stoll(f[4]);
  }
  EXPECT_EQ(batches, (std::set<std::string>{"1", "8", "64"}));
  for (const auto& [batch, by_n] : memory) {
    long long last = 0;
    for (const auto& [n, bytes] : by_n) {
      EXPECT_GT(bytes, last) << "batch " << batch << " N " << n;
      last = bytes;
    }
  }
}

TEST_F(Cli, SameSeedSameTrajectory) {
  ASSERT_EQ(run({"simulate", "--thermostat", "svr", "--steps", "100", "--seed", "9", "--out", dir("s1")}).code, 0);
  ASSERT_EQ(run({"simulate", "--thermostat", "svr", "--steps", "100", "--seed", "9", "--out", dir("s2")}).code, 0);
  EXPECT_EQ(read_file(root_ / "s1" / "trajectory.xyz"), read_file(root_ / "s2" / "trajectory.xyz"));
}
