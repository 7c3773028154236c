#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "serrm/config.hpp"
#include "serrm/dataset_io.hpp"
#include "serrm/eval.hpp"

namespace serrm {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
  kExitAudit = 4,
};

// Thrown for bad flag combinations; maps to kExitUsage.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// --threads if positive, else SERRM_THREADS, else 1.
int resolve_threads(int flag_value);

struct GenOptions {
  std::string task = "sudoku";  // sudoku | recolor
  int size = 4;                 // sudoku side, or recolor grid side
  int count = 100;
  int holes_min = -1;  // -1: size default
  int holes_max = -1;
  std::uint64_t seed = 0;
  std::string out;
  // recolor only
  int palette = 6;
  int num_tasks = 0;  // 0: one task id per record group of examples_per_task
  int examples_per_task = 4;
  std::vector<int> square_colors;
  bool task_ids = false;
};

struct GenSummary {
  int count = 0;
  double mean_holes = 0.0;
  int shortfalls = 0;
  bool oracle_verified = false;
};

Dataset generate_dataset(const GenOptions& options, GenSummary* summary = nullptr);
int run_gen(const GenOptions& options, std::ostream& out);

struct TrainOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied after the file
  std::string data;
  std::string valid;
  std::string out_dir;
  std::string resume;
  std::optional<std::string> arch;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool quiet = false;
};

int run_train(const TrainOptions& options, std::ostream& out);

struct EvalCommandOptions {
  std::string ckpt;
  std::string data;
  DatasetFormat format = DatasetFormat::native;
  int steps = 16;
  std::vector<int> sweep_steps;
  std::string json;
  std::string csv;
  int batch_size = 64;
  int threads = 0;
};

int run_eval(const EvalCommandOptions& options, std::ostream& out);
int run_sweep(const EvalCommandOptions& options, std::ostream& out);

struct AuditCommandOptions {
  std::string ckpt;  // empty: fresh model from config/overrides
  std::string config_path;
  std::vector<std::string> overrides;
  std::string data;
  std::string mode = "symbol";  // symbol | position
  int trials = 100;
  double tol = 1e-4;
  int size = 9;     // random inputs when no data
  int inputs = 20;  // number of random inputs
  std::string precision = "f32";
  std::uint64_t seed = 0;
  int steps = 1;
  std::string json;
};

int run_audit(const AuditCommandOptions& options, std::ostream& out);

struct SolveOptions {
  std::string grid;  // comma separated cells, 0 or . for blanks
  int size = 0;      // side N
};

int run_solve(const SolveOptions& options, std::ostream& out);

std::vector<int> parse_int_list(const std::string& text);

}  // namespace serrm
