#pragma once

#include <optional>
#include <string>
#include <vector>

#include "serrm/alphabet.hpp"

namespace serrm {

enum class TaskKind { sudoku, generic };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& s);

// One puzzle instance on a rows x width grid, cells row-major. Cell values
// are 1..K for the usual symbols and 0 for a blank (the MASK symbol).
struct TaskRecord {
  int rows = 0;
  int width = 0;
  std::vector<int> input;
  std::vector<int> solution;
  std::optional<int> task_type;

  int cells() const { return rows * width; }
  bool operator==(const TaskRecord&) const = default;
};

struct Dataset {
  TaskKind kind = TaskKind::generic;
  int rows = 0;
  int width = 0;
  // Number of usual symbols K; the symbol alphabet is digits(K).
  int alphabet = 0;
  std::vector<TaskRecord> records;

  SymbolAlphabet symbols() const { return SymbolAlphabet::digits(alphabet); }
  int cells() const { return rows * width; }
};

// Cell value <-> slot in digits(K): value v >= 1 maps to v - 1, blank maps
// to the MASK slot K.
inline int value_to_slot(int value, int num_usual) { return value == 0 ? num_usual : value - 1; }
inline int slot_to_value(int slot, int num_usual) { return slot >= num_usual ? 0 : slot + 1; }

}  // namespace serrm
