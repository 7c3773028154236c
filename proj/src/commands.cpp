#include "serrm/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "serrm/checkpoint.hpp"
#include "serrm/recolor.hpp"
#include "serrm/sudoku.hpp"

namespace serrm {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::pair<int, int> default_holes(int side) {
  switch (side) {
    case 4:
      return {6, 12};
    case 9:
      return {40, 60};
    default:
      return {side * side * 2 / 5, side * side / 2};
  }
}

bool recolor_consistent(const TaskRecord& rec, int background) {
  int a = 0, b = 0;
  for (int v : rec.input) {
    if (v == background || v == a || v == b) continue;
    if (a == 0) {
      a = v;
    } else if (b == 0) {
      b = v;
    } else {
      return false;
    }
  }
  for (std::size_t i = 0; i < rec.input.size(); ++i) {
    const int v = rec.input[i];
    const int want = v == a ? b : v == b ? a : v;
    if (rec.solution[i] != want) return false;
  }
  return a != 0 && b != 0;
}

std::string describe_geometry(const ModelConfig& m, const Dataset& data) {
  std::ostringstream os;
  os << "checkpoint: arch " << to_string(m.arch) << ", alphabet '" << m.alphabet.to_string() << "' (K=" << m.alphabet.size()
     << "), trained grid width " << m.rope.grid_width << "; dataset: " << data.rows << "x" << data.width
     << " grid (I=" << data.cells() << "), alphabet '" << data.symbols().to_string() << "' (K=" << data.symbols().size()
     << ")";
  return os.str();
}

void print_rate(std::ostream& out, const char* label, const Rate& r) {
  out << label << ' ' << std::fixed << std::setprecision(2) << 100.0 * r.value << "% [" << 100.0 * r.ci.lo << ", "
      << 100.0 * r.ci.hi << "] (" << r.successes << "/" << r.n << ")";
  out.unsetf(std::ios::floatfield);
}

template <typename T>
void run_training(Model<T>& model, const RunConfig& cfg, const Dataset& data, const Dataset& valid,
                  const TrainOptions& options, long start_step, int start_epoch, double best_fsr, std::ostream& out) {
  const fs::path dir(options.out_dir);
  const auto mode = start_step > 0 ? std::ios::app : std::ios::trunc;
  std::ofstream log(dir / "train_log.jsonl", mode);
  std::ofstream eval_log(dir / "eval_log.jsonl", mode);
  if (!log || !eval_log) throw std::runtime_error("cannot write training logs in '" + options.out_dir + "'");
  EvalOptions eval_options;
  eval_options.steps = cfg.eval_steps;
  eval_options.threads = resolve_threads(options.threads);

  TrainConfig tc = cfg.train;
  tc.epochs = std::max(0, cfg.train.epochs - start_epoch);
  if (start_step > 0) tc.seed = cfg.train.seed + static_cast<std::uint64_t>(start_step);

  TrainCallbacks<T> callbacks;
  callbacks.on_batch = [&](const TrainLogEntry& e) {
    nlohmann::json j = {{"step", e.step},     {"epoch", e.epoch + start_epoch}, {"lr", e.lr},
                        {"loss", e.loss},     {"segments", e.segments},         {"elapsed_s", e.elapsed_s}};
    log << j.dump() << '\n';
  };
  callbacks.on_epoch_end = [&](int epoch, const Model<T>& m, long step) {
    const int global_epoch = epoch + start_epoch;
    const EvalReport report = evaluate(m, valid, eval_options);
    const double fsr = report.fsr.value;
    std::map<std::string, std::string> extra = {{"train_step", std::to_string(step)},
                                                {"epoch", std::to_string(global_epoch)},
                                                {"valid_fsr", std::to_string(fsr)}};
    const bool improved = fsr > best_fsr || best_fsr < 0.0;
    if (improved) best_fsr = fsr;
    extra["best_fsr"] = std::to_string(best_fsr);
    const Checkpoint ckpt = make_checkpoint(m, extra);
    save_checkpoint(ckpt, (dir / "latest.ckpt").string());
    if (improved) save_checkpoint(ckpt, (dir / "best.ckpt").string());
    nlohmann::json j = {{"epoch", global_epoch}, {"step", step}, {"valid_fsr", fsr}, {"best_fsr", best_fsr}};
    eval_log << j.dump() << '\n';
    eval_log.flush();
    log.flush();
    if (!options.quiet) {
      out << "epoch " << global_epoch << " step " << step << " valid FSR " << fsr << (improved ? " (best)" : "")
          << '\n';
    }
  };
  const TrainSummary summary = train(model, data, tc, callbacks, start_step);
  if (tc.epochs == 0) {
    // nothing trained: the initial (or resumed) parameters are the result
    const Checkpoint ckpt = make_checkpoint(model, {{"train_step", std::to_string(start_step)},
                                                    {"epoch", std::to_string(start_epoch - 1)},
                                                    {"best_fsr", std::to_string(best_fsr)}});
    save_checkpoint(ckpt, (dir / "latest.ckpt").string());
    if (!fs::exists(dir / "best.ckpt")) save_checkpoint(ckpt, (dir / "best.ckpt").string());
  }
  if (!options.quiet) {
    out << "trained " << summary.steps - start_step << " steps in " << summary.elapsed_s << "s, final loss "
        << summary.final_loss << '\n';
  }
}

}  // namespace

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("SERRM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw UsageError("bad integer '" + item + "' in list '" + text + "'");
    }
    if (used != item.size()) throw UsageError("bad integer '" + item + "' in list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

Dataset generate_dataset(const GenOptions& o, GenSummary* summary) {
  if (o.count < 0) throw UsageError("--count must be non-negative");
  std::mt19937_64 rng(o.seed);
  Dataset data;
  GenSummary s;
  if (o.task == "sudoku") {
    const auto box = sudoku_box_for_side(o.size);
    if (!box || (o.size != 4 && o.size != 9 && o.size != 16 && o.size != 25)) {
      throw UsageError("sudoku --size must be one of 4, 9, 16, 25");
    }
    auto [lo, hi] = default_holes(o.size);
    if (o.holes_min >= 0) lo = o.holes_min;
    if (o.holes_max >= 0) hi = o.holes_max;
    if (lo > hi || hi >= o.size * o.size) throw UsageError("need 0 <= holes-min <= holes-max < N*N");
    data.kind = TaskKind::sudoku;
    data.rows = data.width = data.alphabet = o.size;
    std::uniform_int_distribution<int> holes(lo, hi);
    long total_holes = 0;
    s.oracle_verified = true;
    for (int i = 0; i < o.count; ++i) {
      GeneratedPuzzle p = generate_puzzle(*box, holes(rng), rng);
      if (p.holes_shortfall) ++s.shortfalls;
      for (int v : p.record.input) total_holes += v == 0;
      const SolveResult check = solve_sudoku(SudokuGrid(*box, p.record.input), 2);
      if (check.count != 1 || *check.first != p.record.solution) s.oracle_verified = false;
      data.records.push_back(std::move(p.record));
    }
    s.mean_holes = o.count > 0 ? static_cast<double>(total_holes) / o.count : 0.0;
  } else if (o.task == "recolor") {
    RecolorOptions ro;
    ro.rows = ro.width = o.size;
    ro.palette = o.palette;
    ro.square_colors = o.square_colors;
    const int per = std::max(1, o.examples_per_task);
    const int tasks = o.num_tasks > 0 ? o.num_tasks : (o.count + per - 1) / per;
    data.kind = TaskKind::generic;
    data.rows = data.width = o.size;
    data.alphabet = o.palette;
    data.records = make_recolor_family(rng, tasks, per, ro);
    if (static_cast<int>(data.records.size()) > o.count) data.records.resize(static_cast<std::size_t>(o.count));
    s.oracle_verified = true;
    for (auto& rec : data.records) {
      if (!recolor_consistent(rec, ro.background)) s.oracle_verified = false;
      if (!o.task_ids) rec.task_type.reset();
    }
  } else {
    throw UsageError("unknown --task '" + o.task + "' (expected sudoku or recolor)");
  }
  s.count = static_cast<int>(data.records.size());
  if (summary) *summary = s;
  return data;
}

int run_gen(const GenOptions& options, std::ostream& out) {
  if (options.out.empty()) throw UsageError("gen needs --out");
  GenSummary s;
  const Dataset data = generate_dataset(options, &s);
  write_dataset(data, options.out);
  out << "generated " << s.count << " " << options.task << " records (" << data.rows << "x" << data.width
      << ", mean holes " << s.mean_holes << ", shortfalls " << s.shortfalls
      << ", oracle-verified " << (s.oracle_verified ? "yes" : "no") << ") -> " << options.out << '\n';
  return s.oracle_verified ? kExitOk : kExitData;
}

int run_train(const TrainOptions& options, std::ostream& out) {
  if (options.data.empty() || options.out_dir.empty()) throw UsageError("train needs --data and --out");
  RunConfig cfg;
  if (!options.config_path.empty()) cfg = load_run_config(options.config_path);
  for (const auto& kv : options.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (options.arch) cfg.model.arch = parse_arch(*options.arch);
  if (options.seed) {
    cfg.model.seed = *options.seed;
    cfg.train.seed = *options.seed;
  }

  const Dataset data = read_dataset(options.data);
  if (data.records.empty()) throw DatasetError("training dataset is empty", 0);
  Dataset valid = options.valid.empty() ? data : read_dataset(options.valid);
  if (static_cast<int>(valid.records.size()) > cfg.eval_records) {
    valid.records.resize(static_cast<std::size_t>(std::max(1, cfg.eval_records)));
  }

  long start_step = 0;
  int start_epoch = 0;
  double best_fsr = -1.0;
  std::optional<Checkpoint> resumed;
  if (!options.resume.empty()) {
    resumed = load_checkpoint(options.resume);
    cfg.model = resumed->config;
    auto get = [&](const char* key, const std::string& fallback) {
      auto it = resumed->extra.find(key);
      return it == resumed->extra.end() ? fallback : it->second;
    };
    start_step = std::stol(get("train_step", "0"));
    start_epoch = std::stoi(get("epoch", "-1")) + 1;
    best_fsr = std::stod(get("best_fsr", "-1"));
  } else {
    cfg.model.alphabet = data.symbols();
    cfg.model.rope.grid_width = data.width;
  }
  if (data.symbols() != cfg.model.alphabet) {
    throw DatasetError("dataset alphabet '" + data.symbols().to_string() + "' does not match the model alphabet '" +
                           cfg.model.alphabet.to_string() + "'",
                       0);
  }
  cfg.model.validate();
  cfg.train.validate();

  fs::create_directories(options.out_dir);
  const std::string resolved = format_run_config(cfg);
  write_text((fs::path(options.out_dir) / "config.txt").string(), resolved);
  if (!options.quiet) out << "# resolved config\n" << resolved;

  if (cfg.train.grad_precision == GradPrecision::f64) {
    Model<double> model = resumed ? resumed->model().cast<double>() : Model<double>(cfg.model);
    run_training(model, cfg, data, valid, options, start_step, start_epoch, best_fsr, out);
  } else {
    Model<float> model = resumed ? resumed->model() : Model<float>(cfg.model);
    run_training(model, cfg, data, valid, options, start_step, start_epoch, best_fsr, out);
  }
  return kExitOk;
}

int run_eval(const EvalCommandOptions& options, std::ostream& out) {
  if (options.ckpt.empty() || options.data.empty()) throw UsageError("eval needs --ckpt and --data");
  if (options.steps < 1) throw UsageError("--steps must be at least 1");
  const Checkpoint ckpt = load_checkpoint(options.ckpt);
  const Model<float> model = ckpt.model();
  const Dataset data = read_dataset(options.data, options.format);
  EvalOptions eo;
  eo.steps = options.steps;
  eo.batch_size = options.batch_size;
  eo.threads = resolve_threads(options.threads);
  EvalReport report;
  try {
    report = evaluate(model, data, eo);
  } catch (const UnseenSymbolError& e) {
    throw UnseenSymbolError(std::string(e.what()) + " (" + describe_geometry(ckpt.config, data) + ")");
  }
  report.checkpoint = options.ckpt;
  report.dataset = options.data;
  print_rate(out, "FSR", report.fsr);
  if (report.gpa) {
    out << "  ";
    print_rate(out, "GPA", *report.gpa);
  }
  out << "  at " << report.steps << " steps over " << report.records << " puzzles\n";
  if (!options.json.empty()) write_text(options.json, to_json(report) + "\n");
  return kExitOk;
}

int run_sweep(const EvalCommandOptions& options, std::ostream& out) {
  if (options.ckpt.empty() || options.data.empty()) throw UsageError("sweep needs --ckpt and --data");
  std::vector<int> steps = options.sweep_steps;
  if (steps.empty()) throw UsageError("sweep needs a non-empty --steps list");
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  if (steps.front() < 1) throw UsageError("sweep steps must be at least 1");
  const Checkpoint ckpt = load_checkpoint(options.ckpt);
  const Model<float> model = ckpt.model();
  const Dataset data = read_dataset(options.data, options.format);
  EvalOptions eo;
  eo.batch_size = options.batch_size;
  eo.threads = resolve_threads(options.threads);
  std::vector<SweepRow> rows;
  try {
    rows = scaling_sweep(model, data, steps, eo);
  } catch (const UnseenSymbolError& e) {
    throw UnseenSymbolError(std::string(e.what()) + " (" + describe_geometry(ckpt.config, data) + ")");
  }
  const std::string csv = sweep_csv(rows);
  if (options.csv.empty()) {
    out << csv;
  } else {
    write_text(options.csv, csv);
    for (const auto& r : rows) {
      out << "steps " << std::setw(4) << r.steps << "  ";
      print_rate(out, "FSR", r.fsr);
      out << '\n';
    }
  }
  if (!options.json.empty()) {
    EvalReport report;
    report.checkpoint = options.ckpt;
    report.dataset = options.data;
    report.steps = rows.back().steps;
    report.records = static_cast<long>(data.records.size());
    report.fsr = rows.back().fsr;
    report.gpa = rows.back().gpa;
    report.sweep = rows;
    write_text(options.json, to_json(report) + "\n");
  }
  return kExitOk;
}

int run_audit(const AuditCommandOptions& options, std::ostream& out) {
  if (options.mode != "symbol" && options.mode != "position") {
    throw UsageError("--mode must be symbol or position");
  }
  if (options.precision != "f32" && options.precision != "f64") throw UsageError("--precision must be f32 or f64");
  std::vector<TaskRecord> records;
  int alphabet = 0;
  if (!options.data.empty()) {
    const Dataset data = read_dataset(options.data);
    records = data.records;
    alphabet = data.alphabet;
    if (static_cast<int>(records.size()) > options.inputs) records.resize(static_cast<std::size_t>(options.inputs));
  } else {
    if (options.size < 1) throw UsageError("--size must be positive");
    alphabet = options.size;
    records = random_inputs(options.size, options.size, options.size, options.inputs, 0.5, options.seed);
  }
  if (records.empty()) throw DatasetError("audit: no input records", 0);

  Model<float> model(ModelConfig{});
  if (!options.ckpt.empty()) {
    model = load_checkpoint(options.ckpt).model();
  } else {
    RunConfig cfg;
    if (!options.config_path.empty()) cfg = load_run_config(options.config_path);
    for (const auto& kv : options.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.model.alphabet = SymbolAlphabet::digits(alphabet);
    cfg.model.rope.grid_width = records.front().width;
    model = Model<float>(cfg.model);
  }

  AuditOptions ao;
  ao.trials = options.trials;
  ao.tolerance = options.tol;
  // top-two gaps inside twice the allowed deviation may flip either way
  ao.tie_margin = 2.0 * options.tol;
  ao.seed = options.seed;
  ao.steps = options.steps;
  EquivarianceStats stats;
  const bool symbol = options.mode == "symbol";
  if (options.precision == "f64") {
    const Model<double> m = model.cast<double>();
    stats = symbol ? audit_symbol_equivariance(m, records, alphabet, ao)
                   : audit_position_equivariance(m, records, alphabet, ao);
  } else {
    stats = symbol ? audit_symbol_equivariance(model, records, alphabet, ao)
                   : audit_position_equivariance(model, records, alphabet, ao);
  }
  const std::string json = to_json(stats);
  out << json << '\n';
  if (!stats.expected_equivariant) out << "note: this configuration is intentionally not " << options.mode
                                       << "-equivariant\n";
  if (!options.json.empty()) write_text(options.json, json + "\n");
  const bool pass = stats.max_logit_deviation <= options.tol && stats.argmax_mismatches == 0;
  return pass ? kExitOk : kExitAudit;
}

int run_solve(const SolveOptions& options, std::ostream& out) {
  std::vector<int> cells;
  std::string item;
  std::stringstream ss(options.grid);
  const bool compact = options.grid.find(',') == std::string::npos;
  if (compact) {
    for (char ch : options.grid) {
      if (ch == '.' || ch == '0') {
        cells.push_back(0);
      } else if (ch >= '1' && ch <= '9') {
        cells.push_back(ch - '0');
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        throw UsageError(std::string("malformed grid: unexpected character '") + ch + "'");
      }
    }
  } else {
    while (std::getline(ss, item, ',')) {
      const auto first = item.find_first_not_of(" \t");
      const auto last = item.find_last_not_of(" \t");
      const std::string t = first == std::string::npos ? "" : item.substr(first, last - first + 1);
      if (t == ".") {
        cells.push_back(0);
        continue;
      }
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(t, &used);
      } catch (const std::exception&) {
        throw UsageError("malformed grid: bad cell '" + item + "'");
      }
      if (used != t.size()) throw UsageError("malformed grid: bad cell '" + item + "'");
      cells.push_back(v);
    }
  }
  int side = options.size;
  if (side == 0) side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells.size()))));
  const auto box = sudoku_box_for_side(side);
  if (!box) throw UsageError("grid side " + std::to_string(side) + " is not a perfect square");
  if (static_cast<int>(cells.size()) != side * side) {
    throw UsageError("malformed grid: expected " + std::to_string(side * side) + " cells, got " +
                     std::to_string(cells.size()));
  }
  for (int v : cells) {
    if (v < 0 || v > side) throw UsageError("malformed grid: cell value " + std::to_string(v) + " out of range");
  }
  const SudokuGrid grid(*box, cells);
  if (!grid.is_valid()) {
    out << "infeasible\n";
    return kExitOk;
  }
  const SolveResult r = solve_sudoku(grid, 2);
  if (r.count == 0) {
    out << "infeasible\n";
  } else if (r.count > 1) {
    out << "multiple solutions (≥2)\n";
  } else {
    for (int row = 0; row < side; ++row) {
      for (int col = 0; col < side; ++col) {
        out << (*r.first)[static_cast<std::size_t>(row * side + col)] << (col + 1 < side ? "," : "\n");
      }
    }
  }
  return kExitOk;
}

}  // namespace serrm
