#include "serrm/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "serrm/sudoku.hpp"

namespace serrm {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(int n, int threads, Fn fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

nlohmann::json rate_json(const Rate& r) {
  return {{"value", r.value}, {"successes", r.successes}, {"n", r.n}, {"ci95", {r.ci.lo, r.ci.hi}}};
}

// Final-step logits for records, batched.
template <typename T>
std::vector<Tensor<T>> final_logits(const Model<T>& model, const std::vector<TaskRecord>& records, int data_alphabet,
                                    int steps, int batch_size) {
  std::vector<Tensor<T>> out;
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(batch_size));
    const Batch batch = model.encode(std::span<const TaskRecord>(records.data() + start, end - start), data_alphabet);
    out.push_back(std::move(model.infer(batch, steps).back()));
  }
  return out;
}

// Pointer to the [I, K] logit block of record r.
template <typename T>
const T* record_logits(const std::vector<Tensor<T>>& chunks, std::size_t r, int batch_size) {
  const Tensor<T>& t = chunks[r / static_cast<std::size_t>(batch_size)];
  const std::size_t per = static_cast<std::size_t>(t.dim(1)) * static_cast<std::size_t>(t.dim(2));
  return t.data() + (r % static_cast<std::size_t>(batch_size)) * per;
}

template <typename T>
int argmax_usual(const T* row, int num_usual, double* gap) {
  int best = 0;
  for (int c = 1; c < num_usual; ++c) {
    if (row[c] > row[best]) best = c;
  }
  double second = -INFINITY;
  for (int c = 0; c < num_usual; ++c) {
    if (c != best) second = std::max(second, static_cast<double>(row[c]));
  }
  *gap = static_cast<double>(row[best]) - second;
  return best;
}

struct TrialResult {
  double deviation = 0.0;
  long mismatches = 0;
  long ties = 0;
};

// Shared driver: transform(trial, rng) -> (record index, transformed record,
// slot map or cell map); compare(base, moved) -> TrialResult.
template <typename T, typename MakeTrial, typename Compare>
EquivarianceStats run_audit(const Model<T>& model, const std::vector<TaskRecord>& records, int data_alphabet,
                            const AuditOptions& options, const char* kind, MakeTrial make_trial, Compare compare) {
  require(!records.empty(), "audit: no input records");
  require(options.trials >= 1 && options.batch_size >= 1, "audit: trials and batch_size must be positive");
  const int k_batch = options.batch_size;
  const auto base = final_logits(model, records, data_alphabet, options.steps, k_batch);

  std::mt19937_64 rng(options.seed);
  EquivarianceStats stats;
  stats.kind = kind;
  stats.trials = options.trials;
  stats.tolerance = options.tolerance;
  for (int start = 0; start < options.trials; start += k_batch) {
    const int count = std::min(k_batch, options.trials - start);
    std::vector<TaskRecord> moved;
    std::vector<std::size_t> source;
    std::vector<std::vector<int>> maps;
    for (int t = start; t < start + count; ++t) {
      const std::size_t r = static_cast<std::size_t>(t) % records.size();
      auto [rec, map] = make_trial(records[r], rng);
      moved.push_back(std::move(rec));
      source.push_back(r);
      maps.push_back(std::move(map));
    }
    const auto logits = final_logits(model, moved, data_alphabet, options.steps, k_batch);
    for (int j = 0; j < count; ++j) {
      const TrialResult res = compare(record_logits(base, source[static_cast<std::size_t>(j)], k_batch),
                                      record_logits(logits, static_cast<std::size_t>(j), k_batch),
                                      maps[static_cast<std::size_t>(j)], logits.front().dim(1), logits.front().dim(2));
      stats.max_logit_deviation = std::max(stats.max_logit_deviation, res.deviation);
      if (!(res.deviation <= options.tolerance)) ++stats.trials_over_tolerance;
      stats.argmax_mismatches += res.mismatches;
      stats.near_ties += res.ties;
    }
  }
  return stats;
}

}  // namespace

Rate make_rate(long successes, long n) {
  Rate r;
  r.successes = successes;
  r.n = n;
  r.value = n > 0 ? static_cast<double>(successes) / static_cast<double>(n) : 0.0;
  if (n > 0) r.ci = wilson_ci(successes, n);
  return r;
}

template <typename T>
std::vector<std::vector<Grid>> predict_values(const Model<T>& model, const Dataset& data, const std::vector<int>& steps,
                                             const EvalOptions& options) {
  require(!data.records.empty(), "evaluate: empty dataset");
  require(!steps.empty() && steps.front() >= 1 && std::is_sorted(steps.begin(), steps.end()),
          "evaluate: steps must be ascending and at least 1");
  require(options.batch_size >= 1, "evaluate: batch_size must be at least 1");
  const int n = static_cast<int>(data.records.size());
  const int batches = (n + options.batch_size - 1) / options.batch_size;
  std::vector<std::vector<Grid>> out(steps.size(), std::vector<Grid>(static_cast<std::size_t>(n)));
  parallel_for(batches, options.threads, [&](int b) {
    const int start = b * options.batch_size;
    const int end = std::min(n, start + options.batch_size);
    const Batch batch = model.encode(
        std::span<const TaskRecord>(data.records.data() + start, static_cast<std::size_t>(end - start)), data.alphabet);
    const auto logits = model.infer(batch, steps.back());
    for (std::size_t s = 0; s < steps.size(); ++s) {
      const auto slots = predict_slots(logits[static_cast<std::size_t>(steps[s] - 1)], batch.num_usual);
      for (int r = start; r < end; ++r) {
        Grid& g = out[s][static_cast<std::size_t>(r)];
        g.resize(static_cast<std::size_t>(batch.positions));
        for (int i = 0; i < batch.positions; ++i) {
          g[static_cast<std::size_t>(i)] =
              model.slot_to_data_value(slots[static_cast<std::size_t>((r - start) * batch.positions + i)], data.alphabet);
        }
      }
    }
  });
  return out;
}

SweepRow score_predictions(int steps, const std::vector<Grid>& preds, const Dataset& data) {
  std::vector<Grid> targets, given;
  targets.reserve(data.records.size());
  given.reserve(data.records.size());
  for (const auto& rec : data.records) {
    targets.push_back(rec.solution);
    given.push_back(rec.input);
  }
  SweepRow row;
  row.steps = steps;
  row.fsr = make_rate(count_solved(preds, targets), static_cast<long>(preds.size()));
  const CellCounts cells = gpa_counts(preds, targets, given);
  if (cells.total > 0) row.gpa = make_rate(cells.correct, cells.total);
  return row;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, const EvalOptions& options) {
  const auto preds = predict_values(model, data, {options.steps}, options);
  const SweepRow row = score_predictions(options.steps, preds.front(), data);
  EvalReport report;
  report.steps = options.steps;
  report.records = static_cast<long>(data.records.size());
  report.fsr = row.fsr;
  report.gpa = row.gpa;
  return report;
}

template <typename T>
std::vector<SweepRow> scaling_sweep(const Model<T>& model, const Dataset& data, const std::vector<int>& steps,
                                    const EvalOptions& options) {
  const auto preds = predict_values(model, data, steps, options);
  std::vector<SweepRow> rows;
  for (std::size_t s = 0; s < steps.size(); ++s) rows.push_back(score_predictions(steps[s], preds[s], data));
  return rows;
}

template <typename T>
EquivarianceStats audit_symbol_equivariance(const Model<T>& model, const std::vector<TaskRecord>& records,
                                            int data_alphabet, const AuditOptions& options) {
  const int usual = data_alphabet;
  auto make_trial = [&](const TaskRecord& rec, std::mt19937_64& rng) {
    std::vector<int> rho(static_cast<std::size_t>(usual));
    std::iota(rho.begin(), rho.end(), 1);
    std::shuffle(rho.begin(), rho.end(), rng);
    return std::make_pair(augment_symbols(rec, rho), rho);
  };
  auto compare = [&](const T* base, const T* moved, const std::vector<int>& rho, int positions, int k) {
    TrialResult res;
    // Slot c of the original lands on slot to[c] after relabelling.
    std::vector<int> to(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) to[static_cast<std::size_t>(c)] = c < usual ? rho[static_cast<std::size_t>(c)] - 1 : c;
    for (int i = 0; i < positions; ++i) {
      const T* b = base + static_cast<std::ptrdiff_t>(i) * k;
      const T* m = moved + static_cast<std::ptrdiff_t>(i) * k;
      for (int c = 0; c < k; ++c) {
        const double d = std::abs(static_cast<double>(m[to[static_cast<std::size_t>(c)]]) - static_cast<double>(b[c]));
        res.deviation = std::max(res.deviation, std::isnan(d) ? INFINITY : d);
      }
      double gap = 0.0, unused = 0.0;
      const int pb = argmax_usual(b, usual, &gap);
      const int pm = argmax_usual(m, usual, &unused);
      if (gap <= options.tie_margin) {
        ++res.ties;
      } else if (pm != to[static_cast<std::size_t>(pb)]) {
        ++res.mismatches;
      }
    }
    return res;
  };
  EquivarianceStats stats = run_audit(model, records, data_alphabet, options, "symbol", make_trial, compare);
  stats.expected_equivariant =
      model.config().arch == Arch::se_rrm && model.config().embedding_mode == EmbeddingMode::equivariant;
  return stats;
}

template <typename T>
EquivarianceStats audit_position_equivariance(const Model<T>& model, const std::vector<TaskRecord>& records,
                                              int data_alphabet, const AuditOptions& options) {
  const int usual = model.config().arch == Arch::se_rrm ? data_alphabet : model.config().alphabet.num_usual();
  auto make_trial = [&](const TaskRecord& rec, std::mt19937_64& rng) {
    std::vector<int> pi(static_cast<std::size_t>(rec.cells()));
    std::iota(pi.begin(), pi.end(), 0);
    std::shuffle(pi.begin(), pi.end(), rng);
    TaskRecord out = rec;
    for (std::size_t i = 0; i < pi.size(); ++i) {
      out.input[i] = rec.input[static_cast<std::size_t>(pi[i])];
      out.solution[i] = rec.solution[static_cast<std::size_t>(pi[i])];
    }
    return std::make_pair(out, pi);
  };
  auto compare = [&](const T* base, const T* moved, const std::vector<int>& pi, int positions, int k) {
    TrialResult res;
    for (int i = 0; i < positions; ++i) {
      const T* b = base + static_cast<std::ptrdiff_t>(pi[static_cast<std::size_t>(i)]) * k;
      const T* m = moved + static_cast<std::ptrdiff_t>(i) * k;
      for (int c = 0; c < k; ++c) {
        const double d = std::abs(static_cast<double>(m[c]) - static_cast<double>(b[c]));
        res.deviation = std::max(res.deviation, std::isnan(d) ? INFINITY : d);
      }
      double gap = 0.0, unused = 0.0;
      const int pb = argmax_usual(b, usual, &gap);
      const int pm = argmax_usual(m, usual, &unused);
      if (gap <= options.tie_margin) {
        ++res.ties;
      } else if (pm != pb) {
        ++res.mismatches;
      }
    }
    return res;
  };
  EquivarianceStats stats = run_audit(model, records, data_alphabet, options, "position", make_trial, compare);
  stats.expected_equivariant = model.config().rope.mode == RopeMode::none;
  return stats;
}

std::vector<TaskRecord> random_inputs(int rows, int width, int alphabet, int count, double blank_fraction,
                                      std::uint64_t seed) {
  require(rows >= 1 && width >= 1 && alphabet >= 1 && count >= 0, "random_inputs: bad geometry");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> value(1, alphabet);
  std::bernoulli_distribution blank(blank_fraction);
  std::vector<TaskRecord> out;
  for (int r = 0; r < count; ++r) {
    TaskRecord rec;
    rec.rows = rows;
    rec.width = width;
    for (int i = 0; i < rows * width; ++i) {
      const int v = value(rng);
      rec.solution.push_back(v);
      rec.input.push_back(blank(rng) ? 0 : v);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::string to_json(const EquivarianceStats& s) {
  nlohmann::json j = {{"kind", s.kind},
                      {"trials", s.trials},
                      {"max_logit_deviation", s.max_logit_deviation},
                      {"tolerance", s.tolerance},
                      {"trials_over_tolerance", s.trials_over_tolerance},
                      {"argmax_mismatch_count", s.argmax_mismatches},
                      {"near_ties", s.near_ties},
                      {"expected_equivariant", s.expected_equivariant}};
  return j.dump(2);
}

std::string to_json(const EvalReport& r) {
  nlohmann::json j;
  if (!r.checkpoint.empty()) j["checkpoint"] = r.checkpoint;
  if (!r.dataset.empty()) j["dataset"] = r.dataset;
  j["steps"] = r.steps;
  j["n_puzzles"] = r.records;
  j["n_unfilled_cells"] = r.gpa ? r.gpa->n : 0;
  j["fsr"] = rate_json(r.fsr);
  j["gpa"] = r.gpa ? rate_json(*r.gpa) : nlohmann::json(nullptr);
  j["gpa_pooling"] = "pooled over unfilled cells";
  if (!r.sweep.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.sweep) {
      rows.push_back({{"steps", row.steps},
                      {"fsr", rate_json(row.fsr)},
                      {"gpa", row.gpa ? rate_json(*row.gpa) : nlohmann::json(nullptr)}});
    }
    j["sweep"] = rows;
  }
  if (r.symbol_audit || r.position_audit) {
    nlohmann::json eq;
    if (r.symbol_audit) eq["symbol"] = nlohmann::json::parse(to_json(*r.symbol_audit));
    if (r.position_audit) eq["position"] = nlohmann::json::parse(to_json(*r.position_audit));
    j["equivariance"] = eq;
  }
  return j.dump(2);
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "step,fsr,fsr_lo,fsr_hi,gpa\n";
  for (const auto& r : rows) {
    os << r.steps << ',' << r.fsr.value << ',' << r.fsr.ci.lo << ',' << r.fsr.ci.hi << ',';
    if (r.gpa) os << r.gpa->value;
    os << '\n';
  }
  return os.str();
}

#define SERRM_INSTANTIATE_EVAL(T)                                                                                    \
  template std::vector<std::vector<Grid>> predict_values(const Model<T>&, const Dataset&, const std::vector<int>&,  \
                                                         const EvalOptions&);                                        \
  template EvalReport evaluate(const Model<T>&, const Dataset&, const EvalOptions&);                                 \
  template std::vector<SweepRow> scaling_sweep(const Model<T>&, const Dataset&, const std::vector<int>&,            \
                                               const EvalOptions&);                                                  \
  template EquivarianceStats audit_symbol_equivariance(const Model<T>&, const std::vector<TaskRecord>&, int,        \
                                                       const AuditOptions&);                                         \
  template EquivarianceStats audit_position_equivariance(const Model<T>&, const std::vector<TaskRecord>&, int,      \
                                                         const AuditOptions&);

SERRM_INSTANTIATE_EVAL(float)
SERRM_INSTANTIATE_EVAL(double)

}  // namespace serrm
