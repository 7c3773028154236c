#include <gtest/gtest.h>

#include <cmath>

#include "serrm/checkpoint.hpp"
#include "serrm/sudoku.hpp"
#include "serrm/trainer.hpp"

using namespace serrm;

namespace {

ModelConfig tiny_model(int dim = 16) {
  ModelConfig c;
  c.dim = dim;
  c.num_heads = 2;
  c.h_cycles = 2;
  c.l_cycles = 2;
  c.alphabet = SymbolAlphabet::digits(4);
  c.seed = 5;
  return c;
}

Dataset tiny_sudoku(int count, std::uint64_t seed, int holes = 8) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.kind = TaskKind::sudoku;
  d.rows = d.width = 4;
  d.alphabet = 4;
  for (int i = 0; i < count; ++i) d.records.push_back(generate_puzzle(2, holes, rng).record);
  return d;
}

template <typename T>
std::map<std::string, Tensor<T>> snapshot(const Model<T>& m) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, v] : m.arrays()) out.emplace(name, v->value);
  return out;
}

}  // namespace

TEST(SampleHalt, DeterministicEnds) {
  std::mt19937_64 rng(1);
  for (int s = 1; s < 16; ++s) EXPECT_FALSE(sample_halt(rng, 0.0, s, 16));
  EXPECT_TRUE(sample_halt(rng, 0.0, 16, 16));
  EXPECT_TRUE(sample_halt(rng, 1.0, 1, 16));
}

TEST(SampleHalt, EmpiricalRate) {
  std::mt19937_64 rng(2024);
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) hits += sample_halt(rng, 0.05, 3, 16) ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.05, 0.005);
}

TEST(SampleHalt, SegmentCountsFollowTruncatedGeometric) {
  const int max_steps = 16;
  const double p = 0.05;
  const int batches = 10000;
  std::mt19937_64 rng(99);
  std::vector<int> counts(max_steps + 1, 0);
  for (int b = 0; b < batches; ++b) {
    int s = 1;
    while (!sample_halt(rng, p, s, max_steps)) ++s;
    ++counts[s];
  }
  double chi2 = 0.0;
  for (int k = 1; k <= max_steps; ++k) {
    const double prob = k < max_steps ? std::pow(1 - p, k - 1) * p : std::pow(1 - p, max_steps - 1);
    const double expected = prob * batches;
    chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  }
  // 99th percentile of chi-square with 15 degrees of freedom
  EXPECT_LT(chi2, 30.578);
}

TEST(AdamW, FirstStepFromZero) {
  TrainConfig c;
  Tensor<double> p({1}, 0.0), g({1}, 1.0), m({1}), v({1});
  adamw_update(p, g, m, v, 1, 0.1, 0.0, c);
  EXPECT_NEAR(p[0], -0.1 / (1 + 1e-8), 1e-15);
}

TEST(AdamW, ZeroGradientNoDecayLeavesParameters) {
  TrainConfig c;
  Tensor<float> p({3}, std::vector<float>{1.5f, -2.0f, 0.25f});
  const Tensor<float> before = p;
  Tensor<float> g({3}), m({3}), v({3});
  for (long t = 1; t <= 5; ++t) adamw_update(p, g, m, v, t, 0.01, 0.0, c);
  EXPECT_EQ(p, before);
}

TEST(AdamW, PureShrinkWithZeroGradient) {
  TrainConfig c;
  Tensor<double> p({2}, std::vector<double>{2.0, -4.0}), g({2}), m({2}), v({2});
  adamw_update(p, g, m, v, 1, 0.01, 1.0, c);
  EXPECT_DOUBLE_EQ(p[0], 2.0 * (1 - 0.01));
  EXPECT_DOUBLE_EQ(p[1], -4.0 * (1 - 0.01));
}

TEST(AdamW, ErrorsOnNanAndBadStep) {
  TrainConfig c;
  Tensor<float> p({1}), g({1}, std::nanf("")), m({1}), v({1});
  EXPECT_THROW(adamw_update(p, g, m, v, 1, 0.1, 0.0, c), NumericAbort);
  Tensor<float> ok({1}, 1.0f);
  EXPECT_THROW(adamw_update(p, ok, m, v, 0, 0.1, 0.0, c), std::invalid_argument);
}

TEST(LrSchedule, Examples) {
  TrainConfig c;
  c.lr = 5e-4;
  c.warmup_steps = 100;
  EXPECT_EQ(lr_at(100, c), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(50, c), 2.5e-4);
  EXPECT_EQ(lr_at(5000, c), 5e-4);
  c.schedule = LrSchedule::warmup_cosine;
  c.horizon_steps = 1000;
  EXPECT_NEAR(lr_at(1000, c), 0.0, 1e-12);
  EXPECT_NEAR(lr_at(550, c), 2.5e-4, 1e-12);
  EXPECT_THROW(lr_at(0, c), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.lr = 1e-3;
  c.halting_p = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.halting_p = 0.0;
  EXPECT_NO_THROW(c.validate());
}

TEST(Segment, DetachedCarryOver) {
  Model<double> model(tiny_model());
  const Dataset data = tiny_sudoku(2, 3);
  const Batch batch = model.encode(data.records, 4);
  TrainConfig tc;
  AdamW<double> opt(model, tc);
  const auto s1 = supervision_segment(model, batch, model.initial_state(batch), opt, 0.0);
  const auto s2 = supervision_segment(model, batch, s1.state, opt, 0.0);
  EXPECT_EQ(s1.tape_size, s2.tape_size);

  // same carried values, without segment one ever having run
  Model<double> fresh(tiny_model());
  AdamW<double> opt2(fresh, tc);
  RecurrentState<double> injected{constant(s1.state.y->value), constant(s1.state.z->value)};
  const auto direct = supervision_segment(fresh, batch, injected, opt2, 0.0);
  EXPECT_EQ(direct.loss, s2.loss);
  ASSERT_EQ(direct.grads.size(), s2.grads.size());
  for (const auto& [name, g] : s2.grads) EXPECT_EQ(direct.grads.at(name), g) << name;
}

TEST(Segment, ZeroLearningRateChangesNothing) {
  Model<float> model(tiny_model());
  const auto before = snapshot(model);
  const Dataset data = tiny_sudoku(3, 4);
  const Batch batch = model.encode(data.records, 4);
  TrainConfig tc;
  AdamW<float> opt(model, tc);
  const auto state = model.initial_state(batch);
  const double first = supervision_segment(model, batch, state, opt, 0.0).loss;
  for (int i = 0; i < 3; ++i) EXPECT_EQ(supervision_segment(model, batch, state, opt, 0.0).loss, first);
  EXPECT_EQ(snapshot(model), before);
}

TEST(Segment, OverfitsOnePuzzle) {
  Model<float> model(tiny_model(64));
  const Dataset data = tiny_sudoku(1, 5);
  const Batch batch = model.encode(data.records, 4);
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.weight_decay = 0.0;
  AdamW<float> opt(model, tc);
  auto state = model.initial_state(batch);
  double loss = 0.0;
  for (int s = 0; s < 200; ++s) {
    const auto seg = supervision_segment(model, batch, state, opt, tc.lr);
    loss = seg.loss;
    state = seg.state;
  }
  EXPECT_LT(loss, 0.01);
}

TEST(Segment, LossDecreasesOnFrozenBatchForMostSeeds) {
  const Dataset data = tiny_sudoku(4, 6);
  int good = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    ModelConfig mc = tiny_model();
    mc.seed = 100 + seed;
    Model<float> model(mc);
    const Batch batch = model.encode(data.records, 4);
    TrainConfig tc;
    tc.weight_decay = 0.0;
    AdamW<float> opt(model, tc);
    const auto state = model.initial_state(batch);
    const double first = supervision_segment(model, batch, state, opt, 1e-3).loss;
    double last = first;
    for (int s = 1; s < 50; ++s) last = supervision_segment(model, batch, state, opt, 1e-3).loss;
    good += last <= first ? 1 : 0;
  }
  EXPECT_GE(good, 9);
}

TEST(Train, ZeroEpochsKeepsInitialisation) {
  Model<float> model(tiny_model());
  const std::string init = serialize_checkpoint(make_checkpoint(model));
  TrainConfig tc;
  tc.epochs = 0;
  const auto summary = train(model, tiny_sudoku(4, 7), tc);
  EXPECT_EQ(summary.steps, 0);
  EXPECT_EQ(serialize_checkpoint(make_checkpoint(model)), init);
}

TEST(Train, SameSeedIsBitwiseDeterministic) {
  const Dataset data = tiny_sudoku(12, 8);
  auto run = [&] {
    Model<float> model(tiny_model());
    TrainConfig tc;
    tc.batch_size = 4;
    tc.halting_p = 0.3;
    tc.seed = 17;
    tc.augment_dihedral = true;
    std::vector<TrainLogEntry> log;
    TrainCallbacks<float> cb;
    cb.on_batch = [&](const TrainLogEntry& e) { log.push_back(e); };
    train(model, data, tc, cb);
    EXPECT_EQ(log.size(), 3u);
    for (const auto& e : log) EXPECT_GE(e.segments, 1);
    return serialize_checkpoint(make_checkpoint(model));
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, AlphabetMismatchErrors) {
  Model<float> model(tiny_model());
  Dataset data = tiny_sudoku(2, 9);
  data.alphabet = 9;
  EXPECT_THROW(train(model, data, TrainConfig{}), std::invalid_argument);
  EXPECT_THROW(train(model, Dataset{}, TrainConfig{}), std::invalid_argument);
}
