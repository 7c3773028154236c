#include "serrm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "serrm/sudoku.hpp"

namespace serrm {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::warmup_constant ? "warmup_constant" : "warmup_cosine"; }

LrSchedule parse_lr_schedule(const std::string& s) {
  if (s == "warmup_constant") return LrSchedule::warmup_constant;
  if (s == "warmup_cosine") return LrSchedule::warmup_cosine;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

std::string to_string(GradPrecision p) { return p == GradPrecision::f32 ? "f32" : "f64"; }

GradPrecision parse_grad_precision(const std::string& s) {
  if (s == "f32") return GradPrecision::f32;
  if (s == "f64") return GradPrecision::f64;
  throw std::invalid_argument("unknown grad_precision '" + s + "'");
}

void TrainConfig::validate() const {
  require(lr > 0.0, "lr must be positive");
  require(halting_p >= 0.0 && halting_p < 1.0, "halting_p must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  require(warmup_steps >= 0, "warmup_steps must be non-negative");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(epochs >= 0, "epochs must be non-negative");
}

bool sample_halt(std::mt19937_64& rng, double p, int step, int max_steps) {
  if (step >= max_steps) return true;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p;
}

double lr_at(long step, const TrainConfig& config) {
  require(step >= 1, "lr_at: step must be at least 1");
  const long warmup = config.warmup_steps;
  if (step < warmup) return config.lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (config.schedule == LrSchedule::warmup_constant) return config.lr;
  const long horizon = config.horizon_steps;
  if (horizon <= warmup) return step >= horizon && horizon > 0 ? 0.0 : config.lr;
  if (step >= horizon) return 0.0;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(horizon - warmup);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void adamw_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, long t, double lr,
                  double weight_decay, const TrainConfig& config) {
  require(t >= 1, "adamw: step must be at least 1");
  require(param.shape() == grad.shape(), "adamw: gradient shape " + shape_str(grad.shape()) +
                                             " does not match parameter " + shape_str(param.shape()));
  if (!grad.all_finite()) throw NumericAbort("non-finite gradient");
  if (m.size() != param.size()) m = Tensor<T>(param.shape());
  if (v.size() != param.size()) v = Tensor<T>(param.shape());
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double shrink = lr * weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double p = param[i];
    param[i] = static_cast<T>(p - shrink * p - lr * (mi / c1) / (std::sqrt(vi / c2) + config.adam_eps));
  }
}

template <typename T>
AdamW<T>::AdamW(const Model<T>& model, TrainConfig config) : config_(std::move(config)) {
  for (const auto& name : model.trainable_names()) {
    const Shape& shape = model.array(name)->value.shape();
    m_.emplace(name, Tensor<T>(shape));
    v_.emplace(name, Tensor<T>(shape));
  }
}

template <typename T>
void AdamW<T>::step(Model<T>& model, const GradientMap<T>& grads, double lr) {
  ++t_;
  for (const auto& [name, grad] : grads) {
    auto m = m_.find(name);
    if (m == m_.end()) continue;
    const double wd = excluded_from_weight_decay(name) ? 0.0 : config_.weight_decay;
    adamw_update(model.array(name)->value, grad, m->second, v_.at(name), t_, lr, wd, config_);
  }
}

template <typename T>
SegmentResult<T> supervision_segment(Model<T>& model, const Batch& batch, const RecurrentState<T>& state,
                                     AdamW<T>& optimizer, double lr) {
  std::vector<std::uint8_t> mask(batch.targets.size());
  std::vector<int> targets(batch.targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    mask[i] = batch.targets[i] >= 0 ? 1 : 0;
    targets[i] = std::max(batch.targets[i], 0);
  }
  SegmentResult<T> result;
  Tape<T> tape;
  const Var<T> embedding = model.embed(batch);
  SuperblockOutput<T> out = model.superblock_forward(embedding, state, batch.grid_width);
  const Var<T> loss = softmax_cross_entropy(out.logits, targets, mask);
  result.loss = static_cast<double>(loss->value[0]);
  if (!std::isfinite(result.loss)) throw NumericAbort("non-finite loss in supervision segment");
  result.tape_size = tape.size();
  result.grads = tape.backward(loss);
  optimizer.step(model, result.grads, lr);
  result.state = out.state;
  return result;
}

template <typename T>
TrainSummary train(Model<T>& model, const Dataset& data, const TrainConfig& config, const TrainCallbacks<T>& callbacks,
                   long start_step) {
  config.validate();
  require(!data.records.empty(), "train: empty dataset");
  if (data.symbols() != model.config().alphabet) {
    throw std::invalid_argument("dataset alphabet '" + data.symbols().to_string() +
                                "' does not match the model alphabet '" + model.config().alphabet.to_string() + "'");
  }
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(config.seed);
  const int n = static_cast<int>(data.records.size());
  const int batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  TrainConfig cfg = config;
  if (cfg.horizon_steps == 0) {
    // Expected segments per batch under the truncated geometric halting law.
    const int max_steps = model.config().max_supervision_steps;
    const double p = cfg.halting_p;
    const double expected = p > 0.0 ? (1.0 - std::pow(1.0 - p, max_steps)) / p : max_steps;
    cfg.horizon_steps = start_step + static_cast<long>(std::ceil(cfg.epochs * batches_per_epoch * expected));
  }
  AdamW<T> optimizer(model, cfg);
  optimizer.set_steps(start_step);

  TrainSummary summary;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<TaskRecord> chunk;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int b = 0; b < batches_per_epoch; ++b) {
      chunk.clear();
      for (int i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i) {
        const TaskRecord& rec = data.records[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (cfg.augment_dihedral && rec.rows == rec.width) {
          std::uniform_int_distribution<int> element(0, 7);
          chunk.push_back(augment_dihedral(rec, element(rng)));
        } else {
          chunk.push_back(rec);
        }
      }
      const Batch batch = model.encode(chunk, data.alphabet);
      RecurrentState<T> state = model.initial_state(batch);
      const int max_steps = model.config().max_supervision_steps;
      double loss_sum = 0.0;
      int segments = 0;
      double lr = 0.0;
      for (int s = 1; s <= max_steps; ++s) {
        lr = lr_at(optimizer.steps() + 1, cfg);
        SegmentResult<T> seg = supervision_segment(model, batch, state, optimizer, lr);
        state = seg.state;
        loss_sum += seg.loss;
        summary.final_loss = seg.loss;
        ++segments;
        if (sample_halt(rng, cfg.halting_p, s, max_steps)) break;
      }
      ++summary.batches;
      if (callbacks.on_batch) {
        TrainLogEntry entry;
        entry.step = optimizer.steps();
        entry.epoch = epoch;
        entry.lr = lr;
        entry.loss = loss_sum / segments;
        entry.segments = segments;
        entry.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        callbacks.on_batch(entry);
      }
    }
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch, model, optimizer.steps());
  }
  summary.steps = optimizer.steps();
  summary.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

template class AdamW<float>;
template class AdamW<double>;
template void adamw_update(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&, long, double, double,
                           const TrainConfig&);
template void adamw_update(Tensor<double>&, const Tensor<double>&, Tensor<double>&, Tensor<double>&, long, double,
                           double, const TrainConfig&);
template SegmentResult<float> supervision_segment(Model<float>&, const Batch&, const RecurrentState<float>&,
                                                  AdamW<float>&, double);
template SegmentResult<double> supervision_segment(Model<double>&, const Batch&, const RecurrentState<double>&,
                                                   AdamW<double>&, double);
template TrainSummary train(Model<float>&, const Dataset&, const TrainConfig&, const TrainCallbacks<float>&, long);
template TrainSummary train(Model<double>&, const Dataset&, const TrainConfig&, const TrainCallbacks<double>&, long);

}  // namespace serrm
