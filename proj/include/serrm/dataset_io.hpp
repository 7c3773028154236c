#pragma once

#include <stdexcept>
#include <string>

#include "serrm/task.hpp"

namespace serrm {

// Malformed or invalid dataset content; line is 1-based (0 if unknown).
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& msg, int line);
  int line() const { return line_; }

 private:
  int line_;
};

enum class DatasetFormat { native, hrm81 };

// Native format:
//   size=<rows> width=<W> alphabet=<K> [kind=sudoku|generic]
//   <input cells, comma separated>|<solution cells>[|task=<id>]
// Blanks are 0. Without kind=, a square grid whose side equals K and is a
// perfect square is read as Sudoku.
//
// hrm81: one puzzle per line as an 81-character string ('0' or '.' for
// blanks), optionally followed by its 81-character solution, separated by
// ',', '|' or whitespace. Lines without a puzzle string (CSV headers) are
// skipped; a missing solution is filled in by the exact solver.
Dataset read_dataset(const std::string& path, DatasetFormat format = DatasetFormat::native);
Dataset parse_dataset(const std::string& text, DatasetFormat format = DatasetFormat::native);

void write_dataset(const Dataset& data, const std::string& path);
std::string format_dataset(const Dataset& data);

// Throws DatasetError when a record breaks the dataset invariants.
void validate_record(const Dataset& data, const TaskRecord& rec, int line);

}  // namespace serrm
