#include "serrm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace serrm {

Interval wilson_ci(long successes, long n, double z) {
  if (n <= 0) throw std::invalid_argument("wilson_ci: n must be at least 1");
  if (successes < 0 || successes > n) throw std::invalid_argument("wilson_ci: successes must lie in [0, n]");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::clamp(centre - half, 0.0, 1.0), std::clamp(centre + half, 0.0, 1.0)};
}

long count_solved(const std::vector<Grid>& preds, const std::vector<Grid>& targets) {
  if (preds.size() != targets.size()) throw std::invalid_argument("fsr: prediction and target counts differ");
  long solved = 0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    if (preds[r].size() != targets[r].size()) throw std::invalid_argument("fsr: record length mismatch");
    if (preds[r] == targets[r]) ++solved;
  }
  return solved;
}

double fsr(const std::vector<Grid>& preds, const std::vector<Grid>& targets) {
  if (preds.empty()) throw std::invalid_argument("fsr: no records");
  return static_cast<double>(count_solved(preds, targets)) / static_cast<double>(preds.size());
}

CellCounts gpa_counts(const std::vector<Grid>& preds, const std::vector<Grid>& targets, const std::vector<Grid>& given) {
  if (preds.size() != targets.size() || preds.size() != given.size()) {
    throw std::invalid_argument("gpa: prediction, target and mask counts differ");
  }
  CellCounts c;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    if (preds[r].size() != targets[r].size() || given[r].size() != targets[r].size()) {
      throw std::invalid_argument("gpa: record length mismatch");
    }
    for (std::size_t i = 0; i < targets[r].size(); ++i) {
      if (given[r][i] != 0) continue;
      ++c.total;
      if (preds[r][i] == targets[r][i]) ++c.correct;
    }
  }
  return c;
}

double gpa(const std::vector<Grid>& preds, const std::vector<Grid>& targets, const std::vector<Grid>& given) {
  const CellCounts c = gpa_counts(preds, targets, given);
  if (c.total == 0) throw std::invalid_argument("gpa: no unfilled cells");
  return static_cast<double>(c.correct) / static_cast<double>(c.total);
}

}  // namespace serrm
