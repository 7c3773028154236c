#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "serrm/dataset_io.hpp"
#include "serrm/recolor.hpp"
#include "serrm/sudoku.hpp"

using namespace serrm;

namespace {

const std::vector<int> kSolved4 = {1, 2, 3, 4, 3, 4, 1, 2, 2, 1, 4, 3, 4, 3, 2, 1};

TaskRecord sudoku_record(std::vector<int> input, std::vector<int> solution) {
  TaskRecord r;
  r.rows = r.width = static_cast<int>(std::lround(std::sqrt(static_cast<double>(input.size()))));
  r.input = std::move(input);
  r.solution = std::move(solution);
  return r;
}

std::vector<int> inverse(const std::vector<int>& rho) {
  std::vector<int> inv(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) inv[static_cast<std::size_t>(rho[i] - 1)] = static_cast<int>(i) + 1;
  return inv;
}

std::vector<int> random_perm(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 1);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

TEST(Solver, SolvedGridHasOneSolution) {
  const auto r = solve_sudoku(SudokuGrid(2, kSolved4), 5);
  EXPECT_EQ(r.count, 1);
  EXPECT_EQ(*r.first, kSolved4);
}

TEST(Solver, Enumerates288Complete4x4Grids) {
  const auto r = solve_sudoku(SudokuGrid::empty(2), 300);
  EXPECT_EQ(r.count, 288);
  EXPECT_EQ(solve_sudoku(SudokuGrid::empty(2), 10).count, 10);
}

TEST(Solver, InvalidAndInfeasible) {
  std::vector<int> dup(16, 0);
  dup[0] = dup[1] = 1;
  EXPECT_THROW(solve_sudoku(SudokuGrid(2, dup), 2), std::invalid_argument);
  EXPECT_THROW(SudokuGrid(2, std::vector<int>(15, 0)), std::invalid_argument);
  EXPECT_THROW(SudokuGrid(2, std::vector<int>(16, 5)), std::invalid_argument);
  // valid as given, but cell (0,3) has no candidate left
  const std::vector<int> g = {1, 2, 3, 0, 0, 0, 0, 4, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(solve_sudoku(SudokuGrid(2, g), 2).count, 0);
}

TEST(Generator, HolesZeroIsSolution) {
  std::mt19937_64 rng(1);
  const auto p = generate_puzzle(2, 0, rng);
  EXPECT_EQ(p.record.input, p.record.solution);
  EXPECT_FALSE(p.holes_shortfall);
  EXPECT_THROW(generate_puzzle(2, 16, rng), std::invalid_argument);
}

TEST(Generator, EmittedPuzzlesAreUniqueAndConsistent) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto p = generate_puzzle(2, 10, rng);
    const auto& r = p.record;
    int holes = 0;
    for (std::size_t c = 0; c < r.input.size(); ++c) {
      if (r.input[c] == 0) {
        ++holes;
      } else {
        EXPECT_EQ(r.input[c], r.solution[c]);
      }
    }
    EXPECT_EQ(holes, p.holes_shortfall ? holes : 10);
    EXPECT_LE(holes, 10);
    const auto s = solve_sudoku(SudokuGrid(2, r.input), 2);
    ASSERT_EQ(s.count, 1);
    EXPECT_EQ(*s.first, r.solution);
    EXPECT_TRUE(SudokuGrid(2, r.solution).is_complete());
  }
}

TEST(Generator, NineByNineIsUnique) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto p = generate_puzzle(3, 45, rng);
    const auto s = solve_sudoku(SudokuGrid(3, p.record.input), 2);
    ASSERT_EQ(s.count, 1);
    EXPECT_EQ(*s.first, p.record.solution);
  }
}

TEST(Generator, DeterministicForSeed) {
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(generate_puzzle(3, 50, a).record, generate_puzzle(3, 50, b).record);
}

TEST(Augment, SymbolIdentityAndInverse) {
  std::mt19937_64 rng(4);
  const auto rec = generate_puzzle(3, 40, rng).record;
  EXPECT_EQ(augment_symbols(rec, {1, 2, 3, 4, 5, 6, 7, 8, 9}), rec);
  for (int t = 0; t < 20; ++t) {
    const auto rho = random_perm(9, rng);
    EXPECT_EQ(augment_symbols(augment_symbols(rec, rho), inverse(rho)), rec);
  }
  EXPECT_THROW(augment_symbols(rec, {1, 1, 3, 4, 5, 6, 7, 8, 9}), std::invalid_argument);
  EXPECT_THROW(augment_symbols(rec, {1, 2, 3}), std::invalid_argument);
}

TEST(Augment, SymbolComposition) {
  std::mt19937_64 rng(5);
  const auto rec = generate_puzzle(2, 8, rng).record;
  for (int t = 0; t < 20; ++t) {
    const auto r1 = random_perm(4, rng), r2 = random_perm(4, rng);
    std::vector<int> both(4);
    for (int v = 0; v < 4; ++v) both[v] = r2[r1[v] - 1];
    EXPECT_EQ(augment_symbols(augment_symbols(rec, r1), r2), augment_symbols(rec, both));
  }
}

TEST(Augment, SolverCommutesWithRelabelling) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto rec = generate_puzzle(3, 50, rng).record;
    const auto rho = random_perm(9, rng);
    const auto moved = augment_symbols(rec, rho);
    const auto s = solve_sudoku(SudokuGrid(3, moved.input), 2);
    ASSERT_EQ(s.count, 1);
    EXPECT_EQ(*s.first, moved.solution);
  }
}

TEST(Augment, DihedralGroupLaws) {
  std::mt19937_64 rng(7);
  const auto rec = generate_puzzle(3, 30, rng).record;
  EXPECT_EQ(augment_dihedral(rec, 0), rec);
  auto r = rec;
  for (int i = 0; i < 4; ++i) r = augment_dihedral(r, 1);
  EXPECT_EQ(r, rec);
  for (int e = 4; e < 8; ++e) EXPECT_EQ(augment_dihedral(augment_dihedral(rec, e), e), rec) << e;
  EXPECT_EQ(augment_dihedral(augment_dihedral(rec, 1), 1), augment_dihedral(rec, 2));
  std::set<std::vector<int>> images;
  for (int e = 0; e < 8; ++e) {
    const auto img = augment_dihedral(rec, e);
    images.insert(img.input);
    EXPECT_TRUE(SudokuGrid(3, img.solution).is_complete());
    const auto s = solve_sudoku(SudokuGrid(3, img.input), 2);
    ASSERT_EQ(s.count, 1);
    EXPECT_EQ(*s.first, img.solution);
  }
  EXPECT_EQ(images.size(), 8u);
  TaskRecord rect;
  rect.rows = 2;
  rect.width = 3;
  rect.input = rect.solution = {1, 2, 1, 2, 1, 2};
  EXPECT_THROW(augment_dihedral(rect, 1), std::invalid_argument);
  EXPECT_THROW(augment_dihedral(rec, 8), std::invalid_argument);
}

TEST(Augment, RotationMovesCellsClockwise) {
  TaskRecord r = sudoku_record(kSolved4, kSolved4);
  const auto rot = augment_dihedral(r, 1);
  // top row of the result is the left column read bottom to top
  EXPECT_EQ(std::vector<int>(rot.input.begin(), rot.input.begin() + 4), std::vector<int>({4, 2, 3, 1}));
}

TEST(Recolor, SwapsSquareColors) {
  std::mt19937_64 rng(8);
  RecolorOptions opts;
  const auto rec = make_recolor_instance(rng, opts, 3, 5);
  int a_in = 0, b_in = 0;
  for (std::size_t i = 0; i < rec.input.size(); ++i) {
    if (rec.input[i] == opts.background) {
      EXPECT_EQ(rec.solution[i], opts.background);
    } else if (rec.input[i] == 3) {
      ++a_in;
      EXPECT_EQ(rec.solution[i], 5);
    } else {
      ASSERT_EQ(rec.input[i], 5);
      ++b_in;
      EXPECT_EQ(rec.solution[i], 3);
    }
  }
  EXPECT_EQ(a_in, 4);
  EXPECT_EQ(b_in, 4);
  EXPECT_THROW(make_recolor_instance(rng, opts, 3, 3), std::invalid_argument);
  EXPECT_THROW(make_recolor_instance(rng, opts, 1, 3), std::invalid_argument);
}

TEST(Recolor, FamilyShape) {
  std::mt19937_64 rng(9);
  RecolorOptions opts;
  const auto fam = make_recolor_family(rng, 5, 3, opts);
  ASSERT_EQ(fam.size(), 15u);
  for (std::size_t i = 0; i < fam.size(); ++i) {
    EXPECT_EQ(fam[i].task_type, static_cast<int>(i / 3));
    std::set<int> colors(fam[i].input.begin(), fam[i].input.end());
    EXPECT_EQ(colors.size(), 3u);
    EXPECT_NE(fam[i].input, fam[i].solution);
  }
  opts.palette = 2;
  EXPECT_THROW(make_recolor_family(rng, 1, 1, opts), std::invalid_argument);
  RecolorOptions crowded;
  crowded.rows = crowded.width = 2;
  EXPECT_THROW(make_recolor_family(rng, 1, 1, crowded), std::runtime_error);
}

TEST(Recolor, RuleIsEquivariant) {
  std::mt19937_64 rng(10);
  RecolorOptions opts;
  for (int t = 0; t < 20; ++t) {
    const auto rec = make_recolor_family(rng, 1, 1, opts)[0];
    const auto rho = random_perm(opts.palette, rng);
    const auto moved = augment_symbols(rec, rho);
    // swapping the two square colours of moved.input gives moved.solution
    std::set<int> bg_free;
    for (std::size_t i = 0; i < moved.input.size(); ++i)
      if (moved.input[i] != rho[opts.background - 1]) bg_free.insert(moved.input[i]);
    ASSERT_EQ(bg_free.size(), 2u);
    const int a = *bg_free.begin(), b = *bg_free.rbegin();
    for (std::size_t i = 0; i < moved.input.size(); ++i) {
      const int v = moved.input[i];
      EXPECT_EQ(moved.solution[i], v == a ? b : v == b ? a : v);
    }
  }
}

TEST(DatasetIo, RoundTrip) {
  std::mt19937_64 rng(11);
  Dataset d;
  d.kind = TaskKind::sudoku;
  d.rows = d.width = 9;
  d.alphabet = 9;
  for (int i = 0; i < 5; ++i) d.records.push_back(generate_puzzle(3, 45, rng).record);
  const std::string text = format_dataset(d);
  const Dataset back = parse_dataset(text);
  EXPECT_EQ(back.records, d.records);
  EXPECT_EQ(back.kind, TaskKind::sudoku);
  EXPECT_EQ(format_dataset(back), text);

  Dataset r;
  r.rows = r.width = 6;
  r.alphabet = 6;
  r.records = make_recolor_family(rng, 2, 2, RecolorOptions{});
  const auto path = std::filesystem::temp_directory_path() / "serrm_recolor_roundtrip.txt";
  write_dataset(r, path.string());
  const Dataset rb = read_dataset(path.string());
  EXPECT_EQ(rb.records, r.records);
  EXPECT_EQ(rb.kind, TaskKind::generic);
  std::filesystem::remove(path);
}

TEST(DatasetIo, RejectsInvalidRecords) {
  const std::string header = "size=4 width=4 alphabet=4\n";
  auto join = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  std::vector<int> broken = kSolved4;
  std::swap(broken[0], broken[1]);
  broken[4] = broken[0];
  try {
    parse_dataset(header + join(kSolved4) + "|" + join(kSolved4) + "\n" + join(kSolved4) + "|" + join(broken) + "\n");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  EXPECT_THROW(parse_dataset(header + "1,2,3|1,2,3\n"), DatasetError);
  EXPECT_THROW(parse_dataset("size=4 width=4 alphabet=9 kind=sudoku\n"), DatasetError);
  EXPECT_THROW(parse_dataset(header + join(kSolved4) + "|" + join(kSolved4) + "|task=x\n"), DatasetError);
  EXPECT_THROW(parse_dataset(header + join(kSolved4) + "|" + join(kSolved4) + "|junk\n"), DatasetError);
}

TEST(DatasetIo, Hrm81Import) {
  std::mt19937_64 rng(12);
  const auto a = generate_puzzle(3, 45, rng).record;
  const auto b = generate_puzzle(3, 50, rng).record;
  auto str = [](const std::vector<int>& v, char blank) {
    std::string s;
    for (int x : v) s += x == 0 ? blank : static_cast<char>('0' + x);
    return s;
  };
  const std::string text = "source,question,answer,rating\n" + str(a.input, '0') + "," + str(a.solution, '0') + "\n" +
                           str(b.input, '.') + "\n";
  const Dataset d = parse_dataset(text, DatasetFormat::hrm81);
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_EQ(d.records[0], a);
  EXPECT_EQ(d.records[1], b);
  EXPECT_EQ(d.rows, 9);
  EXPECT_EQ(d.alphabet, 9);
  EXPECT_THROW(parse_dataset(str(a.input, '0') + "," + str(b.solution, '0') + "\n", DatasetFormat::hrm81),
               DatasetError);
}
