#include "serrm/sudoku.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <stdexcept>

namespace serrm {

namespace {

class Search {
 public:
  Search(int box, const std::vector<int>& cells) : box_(box), n_(box * box), cells_(cells) {
    if (n_ > 32) throw std::invalid_argument("sudoku side above 32 is not supported");
    full_ = n_ == 32 ? 0xffffffffu : ((1u << n_) - 1u);
    rows_.assign(n_, 0);
    cols_.assign(n_, 0);
    boxes_.assign(n_, 0);
    for (int i = 0; i < n_ * n_; ++i) {
      const int v = cells_[i];
      if (v == 0) continue;
      const std::uint32_t bit = 1u << (v - 1);
      const int r = i / n_, c = i % n_, b = box_index(r, c);
      if ((rows_[r] | cols_[c] | boxes_[b]) & bit) {
        consistent_ = false;
        continue;
      }
      rows_[r] |= bit;
      cols_[c] |= bit;
      boxes_[b] |= bit;
    }
  }

  bool consistent() const { return consistent_; }

  // Visits solutions in search order until `limit` are found. Candidate
  // digits are tried in ascending order unless shuffle_rng is set.
  void run(int limit, std::mt19937_64* shuffle_rng) {
    limit_ = limit;
    rng_ = shuffle_rng;
    recurse();
  }

  int found() const { return found_; }
  const std::optional<std::vector<int>>& first() const { return first_; }

 private:
  int box_index(int r, int c) const { return (r / box_) * box_ + c / box_; }

  void recurse() {
    if (found_ >= limit_) return;
    int best = -1;
    int best_count = n_ + 1;
    std::uint32_t best_mask = 0;
    for (int i = 0; i < n_ * n_; ++i) {
      if (cells_[i] != 0) continue;
      const int r = i / n_, c = i % n_;
      const std::uint32_t cand = full_ & ~(rows_[r] | cols_[c] | boxes_[box_index(r, c)]);
      const int count = std::popcount(cand);
      if (count < best_count) {
        best = i;
        best_count = count;
        best_mask = cand;
        if (count <= 1) break;
      }
    }
    if (best < 0) {
      ++found_;
      if (!first_) first_ = cells_;
      return;
    }
    if (best_count == 0) return;
    std::vector<int> digits;
    digits.reserve(static_cast<std::size_t>(best_count));
    for (std::uint32_t m = best_mask; m; m &= m - 1) digits.push_back(std::countr_zero(m) + 1);
    if (rng_) std::shuffle(digits.begin(), digits.end(), *rng_);
    const int r = best / n_, c = best % n_, b = box_index(r, c);
    for (int d : digits) {
      const std::uint32_t bit = 1u << (d - 1);
      cells_[best] = d;
      rows_[r] |= bit;
      cols_[c] |= bit;
      boxes_[b] |= bit;
      recurse();
      rows_[r] &= ~bit;
      cols_[c] &= ~bit;
      boxes_[b] &= ~bit;
      cells_[best] = 0;
      if (found_ >= limit_) return;
    }
  }

  int box_;
  int n_;
  std::uint32_t full_ = 0;
  std::vector<int> cells_;
  std::vector<std::uint32_t> rows_, cols_, boxes_;
  bool consistent_ = true;
  int limit_ = 1;
  int found_ = 0;
  std::mt19937_64* rng_ = nullptr;
  std::optional<std::vector<int>> first_;
};

int count_solutions(int box, const std::vector<int>& cells, int limit) {
  Search s(box, cells);
  if (!s.consistent()) return 0;
  s.run(limit, nullptr);
  return s.found();
}

}  // namespace

SudokuGrid::SudokuGrid(int box, std::vector<int> cells) : box_(box), cells_(std::move(cells)) {
  if (box < 1) throw std::invalid_argument("sudoku box side must be positive");
  const int n = side();
  if (cells_.size() != static_cast<std::size_t>(n * n)) {
    throw std::invalid_argument("sudoku grid of side " + std::to_string(n) + " needs " + std::to_string(n * n) +
                                " cells, got " + std::to_string(cells_.size()));
  }
  for (int v : cells_) {
    if (v < 0 || v > n) throw std::invalid_argument("sudoku cell value " + std::to_string(v) + " out of range");
  }
}

SudokuGrid SudokuGrid::empty(int box) { return SudokuGrid(box, std::vector<int>(static_cast<std::size_t>(box * box * box * box), 0)); }

bool SudokuGrid::is_valid() const { return Search(box_, cells_).consistent(); }

bool SudokuGrid::is_complete() const {
  return std::none_of(cells_.begin(), cells_.end(), [](int v) { return v == 0; });
}

std::optional<int> sudoku_box_for_side(int side) {
  for (int b = 1; b * b <= side; ++b) {
    if (b * b == side) return b;
  }
  return std::nullopt;
}

SolveResult solve_sudoku(const SudokuGrid& grid, int count_limit) {
  if (count_limit < 1) throw std::invalid_argument("count_limit must be at least 1");
  Search s(grid.box(), grid.cells());
  if (!s.consistent()) throw std::invalid_argument("invalid sudoku grid: duplicate digit in a row, column or box");
  s.run(count_limit, nullptr);
  return SolveResult{s.found(), s.first()};
}

GeneratedPuzzle generate_puzzle(int box, int holes, std::mt19937_64& rng) {
  const int n = box * box;
  const int cells = n * n;
  if (holes < 0 || holes >= cells) {
    throw std::invalid_argument("holes must lie in [0, " + std::to_string(cells) + ")");
  }
  constexpr int kRetries = 16;
  GeneratedPuzzle best;
  int best_holes = -1;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Search fill(box, std::vector<int>(static_cast<std::size_t>(cells), 0));
    fill.run(1, &rng);
    const std::vector<int> solution = *fill.first();
    std::vector<int> puzzle = solution;
    std::vector<int> order(static_cast<std::size_t>(cells));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    int removed = 0;
    for (int idx : order) {
      if (removed == holes) break;
      const int keep = puzzle[idx];
      puzzle[idx] = 0;
      if (count_solutions(box, puzzle, 2) == 1) {
        ++removed;
      } else {
        puzzle[idx] = keep;
      }
    }
    if (removed > best_holes) {
      best_holes = removed;
      best.record = TaskRecord{n, n, puzzle, solution, std::nullopt};
      best.holes_shortfall = removed < holes;
    }
    if (removed == holes) break;
  }
  return best;
}

TaskRecord augment_symbols(const TaskRecord& rec, const std::vector<int>& rho) {
  const int k = static_cast<int>(rho.size());
  std::vector<bool> hit(static_cast<std::size_t>(k) + 1, false);
  for (int v : rho) {
    if (v < 1 || v > k || hit[v]) throw std::invalid_argument("rho is not a permutation of 1.." + std::to_string(k));
    hit[v] = true;
  }
  auto map = [&](int v) {
    if (v == 0) return 0;
    if (v > k) throw std::invalid_argument("cell value " + std::to_string(v) + " outside rho's domain");
    return rho[static_cast<std::size_t>(v - 1)];
  };
  TaskRecord out = rec;
  std::transform(rec.input.begin(), rec.input.end(), out.input.begin(), map);
  std::transform(rec.solution.begin(), rec.solution.end(), out.solution.begin(), map);
  return out;
}

TaskRecord augment_dihedral(const TaskRecord& rec, int element) {
  if (rec.rows != rec.width) throw std::invalid_argument("dihedral augmentation needs a square grid");
  if (element < 0 || element > 7) throw std::invalid_argument("dihedral element must be in 0..7");
  const int n = rec.rows;
  auto apply = [&](const std::vector<int>& src) {
    std::vector<int> cur = src;
    if (element >= 4) {
      for (int r = 0; r < n; ++r) std::reverse(cur.begin() + r * n, cur.begin() + (r + 1) * n);
    }
    for (int q = 0; q < element % 4; ++q) {
      std::vector<int> next(cur.size());
      // Clockwise quarter turn: (r, c) -> (c, n - 1 - r).
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) next[static_cast<std::size_t>(c * n + (n - 1 - r))] = cur[static_cast<std::size_t>(r * n + c)];
      }
      cur = std::move(next);
    }
    return cur;
  };
  TaskRecord out = rec;
  out.input = apply(rec.input);
  out.solution = apply(rec.solution);
  return out;
}

}  // namespace serrm
