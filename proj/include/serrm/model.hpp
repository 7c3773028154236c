#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "serrm/alphabet.hpp"
#include "serrm/autodiff.hpp"
#include "serrm/ops.hpp"
#include "serrm/task.hpp"

namespace serrm {

enum class Arch { se_rrm, vanilla_rrm };
// equivariant: one shared vector d for every usual symbol. per_symbol: one
// vector per usual symbol, which breaks symbol equivariance on purpose.
enum class EmbeddingMode { equivariant, per_symbol };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& s);
std::string to_string(EmbeddingMode mode);
EmbeddingMode parse_embedding_mode(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::se_rrm;
  int dim = 64;  // D
  int num_heads = 4;
  int layers = 2;  // transformer layers per block application
  int h_cycles = 3;
  int l_cycles = 6;
  int max_supervision_steps = 16;
  EmbeddingMode embedding_mode = EmbeddingMode::equivariant;
  // grid_width here is the training geometry; forward passes use the
  // width of the batch they are given.
  RopeSpec rope{RopeMode::rope2d, 10000.0, 0};
  // 0 disables the task-type embedding.
  int num_task_types = 0;
  SymbolAlphabet alphabet = SymbolAlphabet::digits(4);
  std::uint64_t seed = 0;

  void validate() const;
};

// Raised when a vanilla model meets symbols it has no embedding for.
class UnseenSymbolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Encoded model input. tokens/targets hold one symbol slot per (record,
// position); targets are -1 where unknown.
struct Batch {
  int size = 0;
  int positions = 0;
  int grid_width = 0;
  int num_symbols = 0;  // K of the symbol axis (SE) or of the output head (vanilla)
  int num_usual = 0;
  std::vector<int> tokens;
  std::vector<int> targets;
  std::vector<int> task_ids;  // -1 = none
};

template <typename T>
struct RecurrentState {
  Var<T> y;
  Var<T> z;
};

template <typename T>
struct SuperblockOutput {
  RecurrentState<T> state;  // detached
  Var<T> logits;            // [B, I, K]
};

// Symbol-equivariant embedding h(X, c, i) over [B, I, K, D]: slot (i, c) is
// d (or the per-symbol vector) when x_i == c is usual, s_j when x_i == c is
// the j-th special symbol, zero otherwise. task_type ([T, K, D]) columns are
// broadcast-added along positions for records with a task id.
template <typename T>
Var<T> embed_task_se(const std::vector<int>& tokens, int batch, int positions, int num_symbols, int num_usual,
                     const Var<T>& d, const Var<T>& specials, const Var<T>& per_symbol, const Var<T>& task_type,
                     const std::vector<int>& task_ids);

// Vanilla embedding: row table[x_i] for every position, times scale,
// shaped [B, I, 1, D].
template <typename T>
Var<T> embed_task_vanilla(const std::vector<int>& tokens, int batch, int positions, const Var<T>& table, T scale);

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig config);
  Model(ModelConfig config, const std::map<std::string, Tensor<T>>& values);

  const ModelConfig& config() const { return config_; }
  // Every named array, trainable or not, ordered by name.
  const std::map<std::string, Var<T>>& arrays() const { return arrays_; }
  std::vector<std::string> trainable_names() const;
  bool is_trainable(const std::string& name) const;
  Var<T> array(const std::string& name) const;

  // Builds a batch from records over digits(data_alphabet). SE models accept
  // any alphabet with the same special symbols; vanilla models throw
  // UnseenSymbolError for symbols outside their alphabet.
  Batch encode(std::span<const TaskRecord> records, int data_alphabet) const;
  // Maps a predicted slot back to a cell value of the data alphabet; -1 if
  // the slot names a symbol the data does not have.
  int slot_to_data_value(int slot, int data_alphabet) const;

  Var<T> embed(const Batch& batch) const;
  RecurrentState<T> initial_state(const Batch& batch) const;
  Var<T> block_apply(const Var<T>& input_sum, int grid_width) const;
  SuperblockOutput<T> superblock_forward(const Var<T>& embedding, const RecurrentState<T>& state,
                                         int grid_width) const;
  Var<T> decode(const Var<T>& y) const;

  // Logits after each supervision step 1..steps, no gradients recorded.
  std::vector<Tensor<T>> infer(const Batch& batch, int steps) const;

  template <typename U>
  Model<U> cast() const {
    std::map<std::string, Tensor<U>> values;
    for (const auto& [name, v] : arrays_) values.emplace(name, v->value.template cast<U>());
    return Model<U>(config_, values);
  }

 private:
  void init_parameters();
  void add_array(const std::string& name, Tensor<T> value, bool trainable);
  AttentionParams<T> attention_params(int layer, const char* which) const;

  ModelConfig config_;
  std::map<std::string, Var<T>> arrays_;
  std::vector<std::string> buffers_;
};

// Argmax over the usual-symbol slots of [B, I, K] logits, lowest slot on
// ties. Returns B*I slots.
template <typename T>
std::vector<int> predict_slots(const Tensor<T>& logits, int num_usual);

// Parameters without weight decay: norm gains, d, s vectors and task-type tables.
bool excluded_from_weight_decay(const std::string& name);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace serrm
