#pragma once

#include <vector>

namespace serrm {

inline constexpr double kWilsonZ95 = 1.959964;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval for successes out of n, clamped to [0, 1].
Interval wilson_ci(long successes, long n, double z = kWilsonZ95);

using Grid = std::vector<int>;

// Fraction of records whose every cell matches.
double fsr(const std::vector<Grid>& preds, const std::vector<Grid>& targets);
long count_solved(const std::vector<Grid>& preds, const std::vector<Grid>& targets);

struct CellCounts {
  long correct = 0;
  long total = 0;
};

// Pooled over all records: correct unfilled cells / unfilled cells.
// given[r][i] != 0 marks a given cell, which is skipped.
CellCounts gpa_counts(const std::vector<Grid>& preds, const std::vector<Grid>& targets, const std::vector<Grid>& given);
double gpa(const std::vector<Grid>& preds, const std::vector<Grid>& targets, const std::vector<Grid>& given);

}  // namespace serrm
