#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "serrm/commands.hpp"
#include "serrm/trainer.hpp"

using namespace serrm;

namespace {

DatasetFormat parse_format(const std::string& s) {
  if (s == "native") return DatasetFormat::native;
  if (s == "hrm81") return DatasetFormat::hrm81;
  throw UsageError("--format must be native or hrm81");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symbol-equivariant recurrent reasoning models: generate, train, evaluate, audit, solve"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (falls back to SERRM_THREADS, then 1)");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a dataset");
  gen_cmd->add_option("--task", gen.task, "sudoku or recolor")->check(CLI::IsMember({"sudoku", "recolor"}));
  auto* gen_size = gen_cmd->add_option("--size", gen.size, "Sudoku side (4, 9, 16, 25) or recolor grid side");
  gen_cmd->add_option("--count", gen.count, "Number of records");
  gen_cmd->add_option("--holes-min", gen.holes_min, "Minimum blanks per puzzle");
  gen_cmd->add_option("--holes-max", gen.holes_max, "Maximum blanks per puzzle");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();
  gen_cmd->add_option("--palette", gen.palette, "Recolor: number of colors");
  gen_cmd->add_option("--num-tasks", gen.num_tasks, "Recolor: number of task ids");
  gen_cmd->add_option("--examples-per-task", gen.examples_per_task, "Recolor: siblings per task id");
  std::string square_colors;
  gen_cmd->add_option("--colors", square_colors, "Recolor: allowed square colors, e.g. 2,3,4");
  gen_cmd->add_flag("--task-ids", gen.task_ids, "Recolor: keep task ids in the records");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model with deep supervision");
  train_cmd->add_option("--config", tr.config_path, "key=value config file");
  train_cmd->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
  train_cmd->add_option("--data", tr.data, "Training dataset")->required();
  train_cmd->add_option("--valid", tr.valid, "Validation dataset (default: head of the training set)");
  train_cmd->add_option("--arch", tr.arch, "se_rrm or vanilla")->check(CLI::IsMember({"se_rrm", "vanilla"}));
  train_cmd->add_option("--out", tr.out_dir, "Output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to resume from");
  train_cmd->add_option("--seed", tr.seed, "Seed for initialisation and data order");
  train_cmd->add_flag("--quiet", tr.quiet, "Only errors");

  EvalCommandOptions ev;
  std::string format = "native";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset")->required();
  eval_cmd->add_option("--format", format, "native or hrm81");
  eval_cmd->add_option("--steps", ev.steps, "Supervision steps at inference");
  eval_cmd->add_option("--json", ev.json, "Write the report as JSON");
  eval_cmd->add_option("--batch-size", ev.batch_size, "Records per forward pass");

  EvalCommandOptions sw;
  std::string sweep_steps = "1,2,4,8,16,32,64,128";
  std::string sweep_format = "native";
  auto* sweep_cmd = app.add_subcommand("sweep", "FSR/GPA as a function of inference steps");
  sweep_cmd->add_option("--ckpt", sw.ckpt, "Checkpoint")->required();
  sweep_cmd->add_option("--data", sw.data, "Dataset")->required();
  sweep_cmd->add_option("--format", sweep_format, "native or hrm81");
  sweep_cmd->add_option("--steps", sweep_steps, "Comma separated step budgets");
  sweep_cmd->add_option("--csv", sw.csv, "Write step,fsr,fsr_lo,fsr_hi,gpa CSV");
  sweep_cmd->add_option("--json", sw.json, "Write the sweep as JSON");
  sweep_cmd->add_option("--batch-size", sw.batch_size, "Records per forward pass");

  AuditCommandOptions au;
  auto* audit_cmd = app.add_subcommand("audit", "Equivariance audit");
  audit_cmd->add_option("--ckpt", au.ckpt, "Checkpoint (default: fresh random model)");
  audit_cmd->add_option("--config", au.config_path, "Config for a fresh model");
  audit_cmd->add_option("--set", au.overrides, "Config override key=value (repeatable)");
  audit_cmd->add_option("--data", au.data, "Inputs (default: random grids)");
  audit_cmd->add_option("--mode", au.mode, "symbol or position")->check(CLI::IsMember({"symbol", "position"}));
  audit_cmd->add_option("--trials", au.trials, "Number of random permutations");
  audit_cmd->add_option("--tol", au.tol, "Maximum allowed logit deviation");
  audit_cmd->add_option("--size", au.size, "Side of random input grids");
  audit_cmd->add_option("--inputs", au.inputs, "Number of inputs");
  audit_cmd->add_option("--precision", au.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  audit_cmd->add_option("--steps", au.steps, "Supervision steps per forward");
  audit_cmd->add_option("--seed", au.seed, "Seed for inputs and permutations");
  audit_cmd->add_option("--json", au.json, "Write stats as JSON");

  SolveOptions so;
  auto* solve_cmd = app.add_subcommand("solve", "Exact Sudoku solver");
  solve_cmd->add_option("--grid", so.grid, "Cells, comma separated (0 or . for blanks)")->required();
  solve_cmd->add_option("--size", so.size, "Grid side N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) {
      if (!gen_size->count() && gen.task == "recolor") gen.size = 6;
      if (!square_colors.empty()) gen.square_colors = parse_int_list(square_colors);
      return run_gen(gen, std::cout);
    }
    if (*train_cmd) {
      tr.threads = threads;
      return run_train(tr, std::cout);
    }
    if (*eval_cmd) {
      ev.threads = threads;
      ev.format = parse_format(format);
      return run_eval(ev, std::cout);
    }
    if (*sweep_cmd) {
      sw.threads = threads;
      sw.format = parse_format(sweep_format);
      sw.sweep_steps = parse_int_list(sweep_steps);
      return run_sweep(sw, std::cout);
    }
    if (*audit_cmd) return run_audit(au, std::cout);
    if (*solve_cmd) return run_solve(so, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const UnseenSymbolError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DatasetError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
