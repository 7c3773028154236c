#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "serrm/task.hpp"

namespace serrm {

// Square Sudoku with box side n and grid side N = n*n. Cells are row-major,
// 0 = blank, 1..N = digits.
class SudokuGrid {
 public:
  SudokuGrid(int box, std::vector<int> cells);
  static SudokuGrid empty(int box);

  int box() const { return box_; }
  int side() const { return box_ * box_; }
  const std::vector<int>& cells() const { return cells_; }
  int at(int row, int col) const { return cells_[static_cast<std::size_t>(row * side() + col)]; }

  // No duplicate digit in any row, column or box (blanks ignored).
  bool is_valid() const;
  bool is_complete() const;

 private:
  int box_;
  std::vector<int> cells_;
};

// Box side for a grid side N, or nullopt if N is not a perfect square.
std::optional<int> sudoku_box_for_side(int side);

struct SolveResult {
  // Number of solutions found, capped at count_limit.
  int count = 0;
  std::optional<std::vector<int>> first;
};

// Exhaustive backtracking, most-constrained cell first, digits tried in
// ascending order. Throws on an invalid grid.
SolveResult solve_sudoku(const SudokuGrid& grid, int count_limit);

struct GeneratedPuzzle {
  TaskRecord record;
  // Set when the requested hole count could not be reached; the record then
  // has fewer holes.
  bool holes_shortfall = false;
};

// Random complete grid, then cells removed in random order while the
// solution stays unique.
GeneratedPuzzle generate_puzzle(int box, int holes, std::mt19937_64& rng);

// rho[v - 1] is the image of digit v; 0 stays 0.
TaskRecord augment_symbols(const TaskRecord& rec, const std::vector<int>& rho);

// Element 0..7 of the dihedral group of the square: element e reflects
// columns when e >= 4, then rotates clockwise (e % 4) quarter turns.
TaskRecord augment_dihedral(const TaskRecord& rec, int element);

}  // namespace serrm
