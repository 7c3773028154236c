#include "serrm/recolor.hpp"

#include <stdexcept>

namespace serrm {

namespace {

std::vector<int> allowed_colors(const RecolorOptions& opts) {
  if (opts.palette < 3) throw std::invalid_argument("recolor palette needs at least 3 colors");
  if (opts.background < 1 || opts.background > opts.palette) {
    throw std::invalid_argument("recolor background color outside the palette");
  }
  std::vector<int> colors = opts.square_colors;
  if (colors.empty()) {
    for (int c = 1; c <= opts.palette; ++c) {
      if (c != opts.background) colors.push_back(c);
    }
  }
  for (int c : colors) {
    if (c < 1 || c > opts.palette || c == opts.background) {
      throw std::invalid_argument("square color " + std::to_string(c) + " is not a non-background palette color");
    }
  }
  if (colors.size() < 2) throw std::invalid_argument("recolor needs at least two square colors");
  return colors;
}

}  // namespace

TaskRecord make_recolor_instance(std::mt19937_64& rng, const RecolorOptions& opts, int color_a, int color_b) {
  if (color_a == color_b) throw std::invalid_argument("recolor squares need distinct colors");
  for (int c : {color_a, color_b}) {
    if (c < 1 || c > opts.palette || c == opts.background) {
      throw std::invalid_argument("recolor square color " + std::to_string(c) + " is outside the palette or equals the background");
    }
  }
  if (opts.square < 1 || opts.square > opts.rows || opts.square > opts.width) {
    throw std::invalid_argument("recolor square does not fit the grid");
  }
  std::uniform_int_distribution<int> row_dist(0, opts.rows - opts.square);
  std::uniform_int_distribution<int> col_dist(0, opts.width - opts.square);
  constexpr int kPlacementRetries = 200;
  for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
    const int r1 = row_dist(rng), c1 = col_dist(rng);
    const int r2 = row_dist(rng), c2 = col_dist(rng);
    const bool overlap = r1 < r2 + opts.square && r2 < r1 + opts.square && c1 < c2 + opts.square &&
                         c2 < c1 + opts.square;
    if (overlap) continue;
    TaskRecord rec;
    rec.rows = opts.rows;
    rec.width = opts.width;
    rec.input.assign(static_cast<std::size_t>(rec.cells()), opts.background);
    rec.solution = rec.input;
    auto paint = [&](int r0, int c0, int in_color, int out_color) {
      for (int r = r0; r < r0 + opts.square; ++r) {
        for (int c = c0; c < c0 + opts.square; ++c) {
          rec.input[static_cast<std::size_t>(r * opts.width + c)] = in_color;
          rec.solution[static_cast<std::size_t>(r * opts.width + c)] = out_color;
        }
      }
    };
    paint(r1, c1, color_a, color_b);
    paint(r2, c2, color_b, color_a);
    return rec;
  }
  throw std::runtime_error("could not place two disjoint squares on the grid");
}

std::vector<TaskRecord> make_recolor_family(std::mt19937_64& rng, int num_tasks, int examples_per_task,
                                            const RecolorOptions& opts) {
  if (num_tasks < 0 || examples_per_task < 0) throw std::invalid_argument("negative recolor family size");
  const std::vector<int> colors = allowed_colors(opts);
  std::uniform_int_distribution<std::size_t> pick(0, colors.size() - 1);
  std::vector<TaskRecord> out;
  out.reserve(static_cast<std::size_t>(num_tasks) * static_cast<std::size_t>(examples_per_task));
  for (int t = 0; t < num_tasks; ++t) {
    for (int e = 0; e < examples_per_task; ++e) {
      const int a = colors[pick(rng)];
      int b = a;
      while (b == a) b = colors[pick(rng)];
      TaskRecord rec = make_recolor_instance(rng, opts, a, b);
      rec.task_type = t;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace serrm
