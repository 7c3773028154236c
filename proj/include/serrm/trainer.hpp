#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "serrm/model.hpp"
#include "serrm/task.hpp"

namespace serrm {

enum class LrSchedule { warmup_constant, warmup_cosine };
enum class GradPrecision { f32, f64 };

std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);
std::string to_string(GradPrecision p);
GradPrecision parse_grad_precision(const std::string& s);

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  int warmup_steps = 100;
  LrSchedule schedule = LrSchedule::warmup_constant;
  // Step at which the cosine schedule reaches 0; 0 lets train() estimate it.
  long horizon_steps = 0;
  int batch_size = 32;
  int epochs = 1;
  double halting_p = 0.05;
  std::uint64_t seed = 0;
  GradPrecision grad_precision = GradPrecision::f32;
  // Apply a random dihedral element to every training record (square grids).
  bool augment_dihedral = false;

  void validate() const;
};

// Raised when a loss or gradient turns non-finite.
class NumericAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SupervisionTrace {
  std::vector<double> losses;
  std::vector<bool> halted;
  int steps_executed = 0;
};

// True with probability p before the last step, always at step == max_steps.
bool sample_halt(std::mt19937_64& rng, double p, int step, int max_steps);

// Linear warmup 0 -> lr over warmup_steps, then constant or cosine decay
// reaching 0 at horizon_steps. step >= 1.
double lr_at(long step, const TrainConfig& config);

// One decoupled-weight-decay Adam update on a single array. t >= 1.
template <typename T>
void adamw_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, long t, double lr,
                  double weight_decay, const TrainConfig& config);

template <typename T>
class AdamW {
 public:
  AdamW(const Model<T>& model, TrainConfig config);

  // Applies one update to every trainable array with a gradient. Arrays
  // excluded from weight decay get the plain Adam step.
  void step(Model<T>& model, const GradientMap<T>& grads, double lr);
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }

 private:
  TrainConfig config_;
  long t_ = 0;
  std::map<std::string, Tensor<T>> m_;
  std::map<std::string, Tensor<T>> v_;
};

template <typename T>
struct SegmentResult {
  double loss = 0.0;
  RecurrentState<T> state;
  std::size_t tape_size = 0;
  GradientMap<T> grads;
};

// One supervision segment: superblock forward from the carried (detached)
// state, cross-entropy over every position with a target, backward through
// the final outer cycle, one optimizer step. Returns the detached state.
template <typename T>
SegmentResult<T> supervision_segment(Model<T>& model, const Batch& batch, const RecurrentState<T>& state,
                                     AdamW<T>& optimizer, double lr);

struct TrainLogEntry {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  int segments = 0;
  double elapsed_s = 0.0;
};

template <typename T>
struct TrainCallbacks {
  std::function<void(const TrainLogEntry&)> on_batch;
  std::function<void(int epoch, const Model<T>&, long step)> on_epoch_end;
};

struct TrainSummary {
  long steps = 0;
  int batches = 0;
  double final_loss = 0.0;
  double elapsed_s = 0.0;
};

// Epochs over shuffled batches; per batch, supervision segments from the
// initial state until sample_halt fires. start_step continues the optimizer
// step counter (and the schedule) of a resumed run.
template <typename T>
TrainSummary train(Model<T>& model, const Dataset& data, const TrainConfig& config,
                   const TrainCallbacks<T>& callbacks = {}, long start_step = 0);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace serrm
