#pragma once

#include <map>
#include <string>

#include "serrm/model.hpp"

namespace serrm {

// Container layout, all integers unsigned 32-bit little-endian:
//   "SERRMCKP" magic, manifest byte length, manifest (key=value lines),
//   array count, then per array in lexicographic name order:
//   name length, name bytes, rank, extents, values as f32 little-endian.
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig config;
  // Manifest entries beyond the model configuration (e.g. train_step).
  std::map<std::string, std::string> extra;
  std::map<std::string, Tensor<float>> arrays;

  Model<float> model() const { return Model<float>(config, arrays); }
};

template <typename T>
Checkpoint make_checkpoint(const Model<T>& model, std::map<std::string, std::string> extra = {});

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string manifest_text(const Checkpoint& ckpt);

}  // namespace serrm
