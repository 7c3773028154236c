#pragma once

#include <random>
#include <vector>

#include "serrm/task.hpp"

namespace serrm {

// Scenes of two axis-aligned squares on a uniform background; the output
// exchanges the two square colors.
struct RecolorOptions {
  int rows = 6;
  int width = 6;
  int square = 2;
  // Colors are 1..palette.
  int palette = 6;
  int background = 1;
  // Colors the squares may take; empty means every non-background color.
  std::vector<int> square_colors;
};

TaskRecord make_recolor_instance(std::mt19937_64& rng, const RecolorOptions& opts, int color_a, int color_b);

// num_tasks task ids, examples_per_task siblings each. Siblings share the
// task id and the swap rule and differ in placement and colors.
std::vector<TaskRecord> make_recolor_family(std::mt19937_64& rng, int num_tasks, int examples_per_task,
                                            const RecolorOptions& opts);

}  // namespace serrm
