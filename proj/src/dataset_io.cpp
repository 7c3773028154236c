#include "serrm/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "serrm/sudoku.hpp"

namespace serrm {

namespace {

int parse_int(std::string_view s, int line, const char* what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty()) {
    throw DatasetError("bad " + std::string(what) + " '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<int> parse_cells(std::string_view s, int expected, int line) {
  std::vector<int> cells;
  for (auto tok : split(s, ',')) cells.push_back(parse_int(trim(tok), line, "cell"));
  if (static_cast<int>(cells.size()) != expected) {
    throw DatasetError("expected " + std::to_string(expected) + " cells, got " + std::to_string(cells.size()), line);
  }
  return cells;
}

bool default_is_sudoku(int rows, int width, int alphabet) {
  return rows == width && rows == alphabet && sudoku_box_for_side(rows).has_value();
}

Dataset parse_native(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  Dataset data;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (!have_header) {
      int size = -1, width = -1, alphabet = -1;
      std::optional<TaskKind> kind;
      std::istringstream hs{std::string(line)};
      std::string field;
      while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw DatasetError("malformed header field '" + field + "'", line_no);
        const std::string key = field.substr(0, eq);
        const std::string_view value = std::string_view(field).substr(eq + 1);
        if (key == "size") {
          size = parse_int(value, line_no, "size");
        } else if (key == "width") {
          width = parse_int(value, line_no, "width");
        } else if (key == "alphabet") {
          alphabet = parse_int(value, line_no, "alphabet");
        } else if (key == "kind") {
          try {
            kind = parse_task_kind(std::string(value));
          } catch (const std::invalid_argument& e) {
            throw DatasetError(e.what(), line_no);
          }
        } else {
          throw DatasetError("unknown header field '" + key + "'", line_no);
        }
      }
      if (size < 1 || width < 1 || alphabet < 1) {
        throw DatasetError("header needs positive size=, width= and alphabet=", line_no);
      }
      data.rows = size;
      data.width = width;
      data.alphabet = alphabet;
      data.kind = kind.value_or(default_is_sudoku(size, width, alphabet) ? TaskKind::sudoku : TaskKind::generic);
      if (data.kind == TaskKind::sudoku && !default_is_sudoku(size, width, alphabet)) {
        throw DatasetError("inconsistent size header for a sudoku dataset", line_no);
      }
      have_header = true;
      continue;
    }
    const auto parts = split(line, '|');
    if (parts.size() < 2 || parts.size() > 3) {
      throw DatasetError("record needs '<input>|<solution>[|task=<id>]'", line_no);
    }
    TaskRecord rec;
    rec.rows = data.rows;
    rec.width = data.width;
    rec.input = parse_cells(parts[0], data.cells(), line_no);
    rec.solution = parse_cells(parts[1], data.cells(), line_no);
    if (parts.size() == 3) {
      const std::string_view t = trim(parts[2]);
      if (t.substr(0, 5) != "task=") throw DatasetError("expected task=<id>", line_no);
      rec.task_type = parse_int(t.substr(5), line_no, "task id");
      if (*rec.task_type < 0) throw DatasetError("negative task id", line_no);
    }
    validate_record(data, rec, line_no);
    data.records.push_back(std::move(rec));
  }
  if (!have_header) throw DatasetError("missing header line", 0);
  return data;
}

bool is_grid_string(std::string_view s) {
  if (s.size() != 81) return false;
  for (char c : s) {
    if (!(c == '.' || (c >= '0' && c <= '9'))) return false;
  }
  return true;
}

std::vector<int> grid_from_string(std::string_view s) {
  std::vector<int> cells;
  cells.reserve(81);
  for (char c : s) cells.push_back(c == '.' ? 0 : c - '0');
  return cells;
}

Dataset parse_hrm81(const std::string& text) {
  Dataset data;
  data.kind = TaskKind::sudoku;
  data.rows = 9;
  data.width = 9;
  data.alphabet = 9;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    for (char& c : line) {
      if (c == ',' || c == '|' || c == '\t' || c == '\r') c = ' ';
    }
    std::istringstream ls(line);
    std::vector<std::string> grids;
    std::string tok;
    while (ls >> tok) {
      if (is_grid_string(tok)) grids.push_back(tok);
    }
    if (grids.empty()) continue;
    TaskRecord rec;
    rec.rows = 9;
    rec.width = 9;
    rec.input = grid_from_string(grids[0]);
    if (grids.size() >= 2) {
      rec.solution = grid_from_string(grids[1]);
    } else {
      SudokuGrid grid(3, rec.input);
      if (!grid.is_valid()) throw DatasetError("invalid sudoku puzzle", line_no);
      const SolveResult res = solve_sudoku(grid, 2);
      if (res.count != 1) throw DatasetError("puzzle without a unique solution", line_no);
      rec.solution = *res.first;
    }
    validate_record(data, rec, line_no);
    data.records.push_back(std::move(rec));
  }
  return data;
}

}  // namespace

DatasetError::DatasetError(const std::string& msg, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}

std::string to_string(TaskKind kind) { return kind == TaskKind::sudoku ? "sudoku" : "generic"; }

TaskKind parse_task_kind(const std::string& s) {
  if (s == "sudoku") return TaskKind::sudoku;
  if (s == "generic") return TaskKind::generic;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

void validate_record(const Dataset& data, const TaskRecord& rec, int line) {
  if (rec.rows != data.rows || rec.width != data.width || static_cast<int>(rec.input.size()) != data.cells() ||
      static_cast<int>(rec.solution.size()) != data.cells()) {
    throw DatasetError("record geometry does not match the header", line);
  }
  for (std::size_t i = 0; i < rec.input.size(); ++i) {
    const int x = rec.input[i];
    const int y = rec.solution[i];
    if (x < 0 || x > data.alphabet || y < 0 || y > data.alphabet) {
      throw DatasetError("cell value outside 0.." + std::to_string(data.alphabet), line);
    }
    if (y == 0) throw DatasetError("solution has a blank cell", line);
    if (data.kind == TaskKind::sudoku && x != 0 && x != y) {
      throw DatasetError("solution disagrees with a given cell", line);
    }
  }
  if (data.kind == TaskKind::sudoku) {
    const int box = *sudoku_box_for_side(data.rows);
    if (!SudokuGrid(box, rec.solution).is_valid()) throw DatasetError("solution violates sudoku constraints", line);
  }
}

Dataset parse_dataset(const std::string& text, DatasetFormat format) {
  return format == DatasetFormat::hrm81 ? parse_hrm81(text) : parse_native(text);
}

Dataset read_dataset(const std::string& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), format);
}

std::string format_dataset(const Dataset& data) {
  std::ostringstream os;
  os << "size=" << data.rows << " width=" << data.width << " alphabet=" << data.alphabet
     << " kind=" << to_string(data.kind) << '\n';
  auto cells = [&](const std::vector<int>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  };
  for (const auto& rec : data.records) {
    cells(rec.input);
    os << '|';
    cells(rec.solution);
    if (rec.task_type) os << "|task=" << *rec.task_type;
    os << '\n';
  }
  return os.str();
}

void write_dataset(const Dataset& data, const std::string& path) {
  int line = 1;
  for (const auto& rec : data.records) validate_record(data, rec, ++line);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write dataset '" + path + "'", 0);
  out << format_dataset(data);
  if (!out) throw DatasetError("failed writing dataset '" + path + "'", 0);
}

}  // namespace serrm
