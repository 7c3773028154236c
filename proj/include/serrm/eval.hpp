#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "serrm/metrics.hpp"
#include "serrm/model.hpp"
#include "serrm/task.hpp"

namespace serrm {

struct Rate {
  long successes = 0;
  long n = 0;
  double value = 0.0;
  Interval ci;
};

Rate make_rate(long successes, long n);

struct EvalOptions {
  int steps = 16;
  int batch_size = 64;
  // Worker threads over batches; results do not depend on it.
  int threads = 1;
};

// Predicted cell values (data alphabet) for every record after each of the
// listed supervision steps. steps must be ascending and >= 1.
template <typename T>
std::vector<std::vector<Grid>> predict_values(const Model<T>& model, const Dataset& data, const std::vector<int>& steps,
                                             const EvalOptions& options);

struct SweepRow {
  int steps = 0;
  Rate fsr;
  std::optional<Rate> gpa;  // absent when no cell is unfilled
};

struct EquivarianceStats {
  std::string kind;  // "symbol" or "position"
  int trials = 0;
  double max_logit_deviation = 0.0;
  // Trials whose own max deviation exceeds the tolerance.
  int trials_over_tolerance = 0;
  double tolerance = 0.0;
  long argmax_mismatches = 0;
  // Cells skipped in the argmax check because the top two logits were
  // within tie_margin of each other.
  long near_ties = 0;
  bool expected_equivariant = true;
};

struct EvalReport {
  std::string checkpoint;
  std::string dataset;
  int steps = 0;
  long records = 0;
  Rate fsr;
  std::optional<Rate> gpa;
  std::vector<SweepRow> sweep;
  std::optional<EquivarianceStats> symbol_audit;
  std::optional<EquivarianceStats> position_audit;
};

SweepRow score_predictions(int steps, const std::vector<Grid>& preds, const Dataset& data);

template <typename T>
EvalReport evaluate(const Model<T>& model, const Dataset& data, const EvalOptions& options);

// One inference pass carried to max(steps); scores after every listed step.
template <typename T>
std::vector<SweepRow> scaling_sweep(const Model<T>& model, const Dataset& data, const std::vector<int>& steps,
                                    const EvalOptions& options);

struct AuditOptions {
  int trials = 100;
  int steps = 1;
  double tolerance = 1e-4;
  double tie_margin = 1e-3;
  std::uint64_t seed = 0;
  int batch_size = 20;
};

// Relabels usual symbols by a random permutation rho per trial and checks
// logits(rho X)[i, rho c] == logits(X)[i, c]. Trials cycle over records.
template <typename T>
EquivarianceStats audit_symbol_equivariance(const Model<T>& model, const std::vector<TaskRecord>& records,
                                            int data_alphabet, const AuditOptions& options);

// Permutes cells by a random pi per trial and checks
// logits(X o pi)[i] == logits(X)[pi(i)].
template <typename T>
EquivarianceStats audit_position_equivariance(const Model<T>& model, const std::vector<TaskRecord>& records,
                                              int data_alphabet, const AuditOptions& options);

// Random complete-grid-shaped inputs with some blanks, for audits without data.
std::vector<TaskRecord> random_inputs(int rows, int width, int alphabet, int count, double blank_fraction,
                                      std::uint64_t seed);

std::string to_json(const EvalReport& report);
std::string to_json(const EquivarianceStats& stats);
// step,fsr,fsr_lo,fsr_hi,gpa
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace serrm
