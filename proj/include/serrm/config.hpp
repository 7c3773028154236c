#pragma once

#include <map>
#include <string>

#include "serrm/model.hpp"
#include "serrm/trainer.hpp"

namespace serrm {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  // Validation records scored after each epoch (best checkpoint by FSR).
  int eval_records = 256;
  int eval_steps = 16;
};

// key=value lines, '#' starts a comment. Keys:
//   arch D num_heads L_layers H_cycles L_cycles max_supervision_steps
//   embedding_mode rope_mode rope_base num_task_types
//   lr weight_decay beta1 beta2 adam_eps warmup_steps schedule horizon_steps
//   batch_size epochs halting_p grad_precision augment_dihedral
//   seed (model init and training order) eval_records eval_steps
// Unknown keys and malformed values throw std::invalid_argument.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);
void apply_config_text(RunConfig& config, const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string format_run_config(const RunConfig& config);

}  // namespace serrm
