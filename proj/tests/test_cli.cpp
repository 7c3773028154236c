#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "serrm/checkpoint.hpp"
#include "serrm/dataset_io.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(SERRM_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("serrm_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenIsDeterministicAndVerified) {
  const auto a = run("gen --task sudoku --size 4 --count 50 --seed 3 --out " + path("a.txt"));
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_NE(a.output.find("oracle-verified yes"), std::string::npos) << a.output;
  ASSERT_EQ(run("gen --task sudoku --size 4 --count 50 --seed 3 --out " + path("b.txt")).code, 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  const auto data = serrm::read_dataset(path("a.txt"));
  EXPECT_EQ(data.records.size(), 50u);
  EXPECT_EQ(data.kind, serrm::TaskKind::sudoku);
}

TEST_F(Cli, GenHolesZeroCopiesSolution) {
  ASSERT_EQ(run("gen --task sudoku --size 9 --count 3 --holes-min 0 --holes-max 0 --out " + path("z.txt")).code, 0);
  for (const auto& r : serrm::read_dataset(path("z.txt")).records) EXPECT_EQ(r.input, r.solution);
}

TEST_F(Cli, GenRecolor) {
  const auto r = run("gen --task recolor --count 4 --num-tasks 2 --examples-per-task 2 --task-ids --out " +
                     path("r.txt"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto data = serrm::read_dataset(path("r.txt"));
  ASSERT_EQ(data.records.size(), 4u);
  EXPECT_TRUE(data.records[0].task_type.has_value());
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("gen --task maze --out " + path("x.txt")).code, 1);
  EXPECT_EQ(run("eval --ckpt " + path("missing.ckpt") + " --data " + path("missing.txt")).code, 2);
  EXPECT_EQ(run("solve --grid 1,2,3").code, 1);
}

TEST_F(Cli, Solve) {
  auto r = run("solve --grid " + std::string(16, '.'));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("multiple solutions (≥2)"), std::string::npos) << r.output;
  r = run("solve --grid 1,2,3,4,3,4,1,2,2,1,4,3,4,3,2,0");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("4,3,2,1"), std::string::npos) << r.output;
  r = run("solve --grid 1230000400000000");
  EXPECT_NE(r.output.find("infeasible"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainResumeEvalSweep) {
  ASSERT_EQ(run("gen --task sudoku --size 4 --count 24 --seed 1 --out " + path("train.txt")).code, 0);
  const std::string common = " --data " + path("train.txt") +
                             " --set D=32 --set num_heads=2 --set batch_size=8 --set halting_p=0.5 --set epochs=1"
                             " --set eval_records=8 --set eval_steps=2 --seed 4 --quiet";
  auto r = run("train --out " + path("run") + common);
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"latest.ckpt", "best.ckpt", "config.txt", "train_log.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  std::ifstream log(dir_ / "run" / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "epoch", "lr", "loss", "segments", "elapsed_s"}) EXPECT_TRUE(j.contains(key)) << key;
    ++lines;
  }
  EXPECT_EQ(lines, 3);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "eval_log.jsonl"));

  // same seed, same bytes
  ASSERT_EQ(run("train --out " + path("again") + common).code, 0);
  EXPECT_EQ(slurp(dir_ / "run" / "latest.ckpt"), slurp(dir_ / "again" / "latest.ckpt"));

  r = run("train --out " + path("resumed") + common + " --set epochs=2 --resume " + path("run/latest.ckpt"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto first = serrm::load_checkpoint(path("run/latest.ckpt"));
  const auto second = serrm::load_checkpoint(path("resumed/latest.ckpt"));
  EXPECT_GT(std::stol(second.extra.at("train_step")), std::stol(first.extra.at("train_step")));
  EXPECT_EQ(second.extra.at("epoch"), "1");

  r = run("eval --ckpt " + path("run/best.ckpt") + " --data " + path("train.txt") + " --steps 2 --json " +
          path("report.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("FSR"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(report["n_puzzles"], 24);

  r = run("sweep --ckpt " + path("run/best.ckpt") + " --data " + path("train.txt") + " --steps 1,2,4 --csv " +
          path("sweep.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(path("sweep.csv"));
  EXPECT_EQ(csv.rfind("step,fsr,fsr_lo,fsr_hi,gpa", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  // a 9x9 dataset on the 4x4 SE checkpoint runs; on a vanilla one it is a data error
  ASSERT_EQ(run("gen --task sudoku --size 9 --count 2 --out " + path("nine.txt")).code, 0);
  EXPECT_EQ(run("eval --ckpt " + path("run/best.ckpt") + " --data " + path("nine.txt") + " --steps 1").code, 0);
  ASSERT_EQ(run("train --out " + path("van") + common + " --arch vanilla --set epochs=0").code, 0);
  const auto init = serrm::load_checkpoint(path("van/latest.ckpt"));
  serrm::ModelConfig fresh = init.config;
  EXPECT_EQ(serrm::serialize_checkpoint(serrm::make_checkpoint(serrm::Model<float>(fresh))),
            serrm::serialize_checkpoint(serrm::make_checkpoint(init.model())));
  r = run("eval --ckpt " + path("van/latest.ckpt") + " --data " + path("nine.txt") + " --steps 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("unseen symbols"), std::string::npos) << r.output;
}

TEST_F(Cli, AuditExitCodes) {
  const std::string base = "audit --set D=32 --set num_heads=4 --size 4 --inputs 4 --trials 8";
  auto r = run(base + " --mode symbol --json " + path("a.json"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(nlohmann::json::parse(slurp(path("a.json"))).contains("max_logit_deviation"));
  EXPECT_EQ(run(base + " --mode symbol --precision f64 --tol 1e-10").code, 0);
  EXPECT_EQ(run(base + " --mode symbol --set embedding_mode=per_symbol").code, 4);
  EXPECT_EQ(run(base + " --mode position --set rope_mode=none").code, 0);
  EXPECT_EQ(run(base + " --mode position --set rope_mode=none --set arch=vanilla").code, 0);
  EXPECT_EQ(run(base + " --mode position --set rope_mode=rope2d").code, 4);
}
