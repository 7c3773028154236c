#include "serrm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace serrm {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
Tensor<T> truncated_normal(Shape shape, double sigma, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : t.values()) {
    double x = dist(rng);
    while (std::abs(x) > 2.0 * sigma) x = dist(rng);
    v = static_cast<T>(x);
  }
  return t;
}

std::string layer_name(int layer, const std::string& rest) { return "layers." + std::to_string(layer) + "." + rest; }

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::se_rrm ? "se_rrm" : "vanilla"; }

Arch parse_arch(const std::string& s) {
  if (s == "se_rrm") return Arch::se_rrm;
  if (s == "vanilla" || s == "vanilla_rrm") return Arch::vanilla_rrm;
  throw std::invalid_argument("unknown arch '" + s + "' (expected se_rrm or vanilla)");
}

std::string to_string(EmbeddingMode mode) {
  return mode == EmbeddingMode::equivariant ? "equivariant" : "per_symbol";
}

EmbeddingMode parse_embedding_mode(const std::string& s) {
  if (s == "equivariant") return EmbeddingMode::equivariant;
  if (s == "per_symbol") return EmbeddingMode::per_symbol;
  throw std::invalid_argument("unknown embedding_mode '" + s + "'");
}

void ModelConfig::validate() const {
  require(dim >= 1, "D must be positive");
  require(num_heads >= 1 && dim % num_heads == 0, "D must be divisible by num_heads");
  require(layers >= 1, "L_layers must be at least 1");
  require(h_cycles >= 1 && l_cycles >= 1, "H_cycles and L_cycles must be at least 1");
  require(max_supervision_steps >= 1, "max_supervision_steps must be at least 1");
  require(num_task_types >= 0, "num_task_types must be non-negative");
  require(alphabet.num_usual() >= 1, "alphabet needs a usual symbol");
  const int head_dim = dim / num_heads;
  if (rope.mode == RopeMode::rope1d) require(head_dim % 2 == 0, "rope1d needs an even head_dim");
  if (rope.mode == RopeMode::rope2d) require(head_dim % 4 == 0, "rope2d needs head_dim divisible by 4");
  if (arch == Arch::vanilla_rrm) {
    require(num_task_types == 0, "task-type embeddings are only implemented for se_rrm");
  }
}

bool excluded_from_weight_decay(const std::string& name) {
  return ends_with(name, ".gain") || name == "embed.d" || name == "embed.s" || name == "embed.task_type";
}

template <typename T>
Var<T> embed_task_se(const std::vector<int>& tokens, int batch, int positions, int num_symbols, int num_usual,
                     const Var<T>& d, const Var<T>& specials, const Var<T>& per_symbol, const Var<T>& task_type,
                     const std::vector<int>& task_ids) {
  require(static_cast<int>(tokens.size()) == batch * positions, "embed: token count mismatch");
  const bool shared = per_symbol == nullptr;
  const int dim = shared ? d->value.dim(0) : per_symbol->value.dim(1);
  const int num_special = num_symbols - num_usual;
  require(specials->value.shape() == Shape({num_special, dim}), "embed: special vectors must be [n, D]");
  if (!shared) require(per_symbol->value.dim(0) >= num_usual, "embed: per-symbol table too small");
  const bool use_task = task_type != nullptr;
  if (use_task) {
    require(task_type->value.rank() == 3 && task_type->value.dim(1) == num_symbols && task_type->value.dim(2) == dim,
            "embed: task-type table must be [T, K, D] with K matching the batch alphabet");
    require(static_cast<int>(task_ids.size()) == batch, "embed: one task id per record required");
  }
  Tensor<T> out(Shape{batch, positions, num_symbols, dim});
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < positions; ++i) {
      const int c = tokens[static_cast<std::size_t>(b * positions + i)];
      require(c >= 0 && c < num_symbols, "embed: symbol slot " + std::to_string(c) + " outside the alphabet");
      const T* src = c < num_usual ? (shared ? d->value.data() : per_symbol->value.data() + static_cast<std::size_t>(c) * dim)
                                   : specials->value.data() + static_cast<std::size_t>(c - num_usual) * dim;
      T* dst = out.data() + ((static_cast<std::size_t>(b) * positions + i) * num_symbols + c) * dim;
      std::copy(src, src + dim, dst);
    }
    if (use_task && task_ids[b] >= 0) {
      require(task_ids[b] < task_type->value.dim(0), "embed: unknown task id " + std::to_string(task_ids[b]));
      const T* tt = task_type->value.data() + static_cast<std::size_t>(task_ids[b]) * num_symbols * dim;
      for (int i = 0; i < positions; ++i) {
        T* dst = out.data() + (static_cast<std::size_t>(b) * positions + i) * num_symbols * dim;
        for (int j = 0; j < num_symbols * dim; ++j) dst[j] += tt[j];
      }
    }
  }
  std::vector<Var<T>> inputs{specials};
  inputs.push_back(shared ? d : per_symbol);
  if (use_task) inputs.push_back(task_type);
  return make_result<T>(
      std::move(out), std::move(inputs),
      [=](Node<T>& self) {
        Node<T>& sn = *self.inputs[0];
        Node<T>& un = *self.inputs[1];
        Node<T>* tn = use_task ? self.inputs[2].get() : nullptr;
        T* ds = sn.requires_grad ? sn.ensure_grad().data() : nullptr;
        T* du = un.requires_grad ? un.ensure_grad().data() : nullptr;
        T* dt = tn && tn->requires_grad ? tn->ensure_grad().data() : nullptr;
        for (int b = 0; b < batch; ++b) {
          for (int i = 0; i < positions; ++i) {
            const int c = tokens[static_cast<std::size_t>(b * positions + i)];
            const T* g = self.grad.data() + ((static_cast<std::size_t>(b) * positions + i) * num_symbols + c) * dim;
            T* dst = nullptr;
            if (c < num_usual) {
              if (du) dst = du + (shared ? 0 : static_cast<std::size_t>(c) * dim);
            } else if (ds) {
              dst = ds + static_cast<std::size_t>(c - num_usual) * dim;
            }
            if (dst) {
              for (int j = 0; j < dim; ++j) dst[j] += g[j];
            }
          }
          if (dt && task_ids[b] >= 0) {
            T* dst = dt + static_cast<std::size_t>(task_ids[b]) * num_symbols * dim;
            for (int i = 0; i < positions; ++i) {
              const T* g = self.grad.data() + (static_cast<std::size_t>(b) * positions + i) * num_symbols * dim;
              for (int j = 0; j < num_symbols * dim; ++j) dst[j] += g[j];
            }
          }
        }
      });
}

template <typename T>
Var<T> embed_task_vanilla(const std::vector<int>& tokens, int batch, int positions, const Var<T>& table, T scale) {
  require(table->value.rank() == 2, "embed: table must be [K, D]");
  require(static_cast<int>(tokens.size()) == batch * positions, "embed: token count mismatch");
  const int k = table->value.dim(0);
  const int dim = table->value.dim(1);
  Tensor<T> out(Shape{batch, positions, 1, dim});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int c = tokens[t];
    require(c >= 0 && c < k, "embed: symbol slot " + std::to_string(c) + " has no embedding row");
    const T* src = table->value.data() + static_cast<std::size_t>(c) * dim;
    for (int j = 0; j < dim; ++j) out[t * dim + j] = src[j] * scale;
  }
  return make_result<T>(std::move(out), {table}, [tokens, dim, scale](Node<T>& self) {
    Node<T>& tn = *self.inputs[0];
    if (!tn.requires_grad) return;
    T* g = tn.ensure_grad().data();
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      T* dst = g + static_cast<std::size_t>(tokens[t]) * dim;
      for (int j = 0; j < dim; ++j) dst[j] += self.grad[t * dim + j] * scale;
    }
  });
}

template <typename T>
Model<T>::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  init_parameters();
}

template <typename T>
Model<T>::Model(ModelConfig config, const std::map<std::string, Tensor<T>>& values) : Model(std::move(config)) {
  for (const auto& [name, var] : arrays_) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("missing parameter array '" + name + "'");
    if (it->second.shape() != var->value.shape()) {
      throw std::invalid_argument("parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                                  ", expected " + shape_str(var->value.shape()));
    }
    var->value = it->second;
  }
  for (const auto& [name, value] : values) {
    if (!arrays_.count(name)) throw std::invalid_argument("unexpected parameter array '" + name + "'");
  }
}

template <typename T>
void Model<T>::add_array(const std::string& name, Tensor<T> value, bool trainable) {
  if (trainable) {
    arrays_[name] = parameter(std::move(value), name);
  } else {
    arrays_[name] = constant(std::move(value));
    buffers_.push_back(name);
  }
}

template <typename T>
void Model<T>::init_parameters() {
  std::mt19937_64 rng(config_.seed);
  const int dim = config_.dim;
  const double unit = 1.0 / std::sqrt(static_cast<double>(dim));
  const int num_special = config_.alphabet.num_special();
  const int num_usual = config_.alphabet.num_usual();
  const bool se = config_.arch == Arch::se_rrm;

  if (se) {
    if (config_.embedding_mode == EmbeddingMode::equivariant) {
      add_array("embed.d", truncated_normal<T>({dim}, 1.0, rng), true);
    } else {
      add_array("embed.symbols", truncated_normal<T>({num_usual, dim}, 1.0, rng), true);
    }
    add_array("embed.s", truncated_normal<T>({num_special, dim}, 1.0, rng), true);
    if (config_.num_task_types > 0) {
      const int k = config_.alphabet.size();
      Tensor<T> table(Shape{config_.num_task_types, k, dim});
      for (int t = 0; t < config_.num_task_types; ++t) {
        const Tensor<T> column = truncated_normal<T>({dim}, unit, rng);
        for (int c = 0; c < k; ++c) {
          std::copy(column.data(), column.data() + dim, table.data() + (static_cast<std::size_t>(t) * k + c) * dim);
        }
      }
      add_array("embed.task_type", std::move(table), true);
    }
  } else {
    add_array("embed.table", truncated_normal<T>({config_.alphabet.size(), dim}, unit, rng), true);
  }

  const int hidden = swiglu_hidden(dim);
  auto attention = [&](int l, const std::string& which) {
    add_array(layer_name(l, which + ".qkv"), truncated_normal<T>({dim, 3 * dim}, unit, rng), true);
    add_array(layer_name(l, which + ".out"), truncated_normal<T>({dim, dim}, unit, rng), true);
  };
  for (int l = 0; l < config_.layers; ++l) {
    attention(l, "attn_pos");
    add_array(layer_name(l, "norm_pos.gain"), Tensor<T>({dim}, T(1)), true);
    if (se) {
      attention(l, "attn_sym");
      add_array(layer_name(l, "norm_sym.gain"), Tensor<T>({dim}, T(1)), true);
    }
    add_array(layer_name(l, "mlp.w_in"), truncated_normal<T>({dim, 2 * hidden}, unit, rng), true);
    add_array(layer_name(l, "mlp.w_out"),
              truncated_normal<T>({hidden, dim}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng), true);
    add_array(layer_name(l, "norm_mlp.gain"), Tensor<T>({dim}, T(1)), true);
  }

  if (se) {
    add_array("head.w", truncated_normal<T>({dim}, unit, rng), true);
    add_array("head.b", Tensor<T>(Shape{1}), true);
  } else {
    add_array("head.w", truncated_normal<T>({dim, config_.alphabet.size()}, unit, rng), true);
    add_array("head.b", Tensor<T>(Shape{config_.alphabet.size()}), true);
  }
  add_array("state.y0", truncated_normal<T>({dim}, unit, rng), false);
  add_array("state.z0", truncated_normal<T>({dim}, unit, rng), false);
}

template <typename T>
std::vector<std::string> Model<T>::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, v] : arrays_) {
    if (v->requires_grad) out.push_back(name);
  }
  return out;
}

template <typename T>
bool Model<T>::is_trainable(const std::string& name) const {
  return array(name)->requires_grad;
}

template <typename T>
Var<T> Model<T>::array(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw std::out_of_range("no parameter array '" + name + "'");
  return it->second;
}

template <typename T>
Batch Model<T>::encode(std::span<const TaskRecord> records, int data_alphabet) const {
  require(!records.empty(), "encode: empty batch");
  const SymbolAlphabet data_symbols = SymbolAlphabet::digits(data_alphabet);
  const SymbolAlphabet& model_symbols = config_.alphabet;
  Batch batch;
  batch.size = static_cast<int>(records.size());
  batch.positions = records.front().cells();
  batch.grid_width = records.front().width;
  const bool se = config_.arch == Arch::se_rrm;

  // Batch slot for each data slot.
  std::vector<int> slot_of(static_cast<std::size_t>(data_symbols.size()));
  if (se) {
    if (data_symbols.special() != model_symbols.special()) {
      throw UnseenSymbolError("special symbols differ: data has '" + data_symbols.to_string() + "', model has '" +
                              model_symbols.to_string() + "'");
    }
    if (config_.embedding_mode == EmbeddingMode::per_symbol && data_symbols.num_usual() > model_symbols.num_usual()) {
      throw UnseenSymbolError("unseen symbols: per-symbol model knows " + std::to_string(model_symbols.num_usual()) +
                              " usual symbols, data has " + std::to_string(data_symbols.num_usual()));
    }
    batch.num_symbols = data_symbols.size();
    batch.num_usual = data_symbols.num_usual();
    for (int s = 0; s < data_symbols.size(); ++s) slot_of[static_cast<std::size_t>(s)] = s;
  } else {
    std::string missing;
    for (int s = 0; s < data_symbols.size(); ++s) {
      auto idx = model_symbols.find(data_symbols.name(s));
      if (!idx) {
        missing += (missing.empty() ? "" : ",") + data_symbols.name(s);
        continue;
      }
      slot_of[static_cast<std::size_t>(s)] = *idx;
    }
    if (!missing.empty()) {
      throw UnseenSymbolError("unseen symbols {" + missing + "}: the vanilla model has no embedding for them (model alphabet " +
                              model_symbols.to_string() + ")");
    }
    batch.num_symbols = model_symbols.size();
    batch.num_usual = model_symbols.num_usual();
  }

  const bool use_task = config_.num_task_types > 0;
  for (const auto& rec : records) {
    require(rec.cells() == batch.positions && rec.width == batch.grid_width,
            "encode: records in a batch must share their geometry");
    for (int i = 0; i < rec.cells(); ++i) {
      const int x = rec.input[static_cast<std::size_t>(i)];
      require(x >= 0 && x <= data_alphabet, "encode: cell value outside the data alphabet");
      batch.tokens.push_back(slot_of[static_cast<std::size_t>(value_to_slot(x, data_alphabet))]);
      const int y = rec.solution.empty() ? 0 : rec.solution[static_cast<std::size_t>(i)];
      batch.targets.push_back(y == 0 ? -1 : slot_of[static_cast<std::size_t>(value_to_slot(y, data_alphabet))]);
    }
    int id = -1;
    if (use_task && rec.task_type) {
      if (*rec.task_type >= config_.num_task_types) {
        throw std::invalid_argument("unknown task id " + std::to_string(*rec.task_type));
      }
      id = *rec.task_type;
    }
    batch.task_ids.push_back(id);
  }
  return batch;
}

template <typename T>
int Model<T>::slot_to_data_value(int slot, int data_alphabet) const {
  if (config_.arch == Arch::se_rrm) return slot_to_value(slot, data_alphabet);
  const auto idx = SymbolAlphabet::digits(data_alphabet).find(config_.alphabet.name(slot));
  if (!idx) return -1;
  return slot_to_value(*idx, data_alphabet);
}

template <typename T>
Var<T> Model<T>::embed(const Batch& batch) const {
  if (config_.arch == Arch::vanilla_rrm) {
    return embed_task_vanilla(batch.tokens, batch.size, batch.positions, array("embed.table"),
                              static_cast<T>(std::sqrt(static_cast<double>(config_.dim))));
  }
  const bool shared = config_.embedding_mode == EmbeddingMode::equivariant;
  Var<T> task_type;
  if (config_.num_task_types > 0 && std::any_of(batch.task_ids.begin(), batch.task_ids.end(), [](int t) { return t >= 0; })) {
    task_type = array("embed.task_type");
  }
  return embed_task_se(batch.tokens, batch.size, batch.positions, batch.num_symbols, batch.num_usual,
                       shared ? array("embed.d") : Var<T>(), array("embed.s"),
                       shared ? Var<T>() : array("embed.symbols"), task_type, batch.task_ids);
}

template <typename T>
RecurrentState<T> Model<T>::initial_state(const Batch& batch) const {
  const int k = config_.arch == Arch::se_rrm ? batch.num_symbols : 1;
  const int dim = config_.dim;
  auto broadcast = [&](const std::string& name) {
    const Tensor<T>& v = array(name)->value;
    Tensor<T> out(Shape{batch.size, batch.positions, k, dim});
    const std::size_t slots = out.size() / static_cast<std::size_t>(dim);
    for (std::size_t s = 0; s < slots; ++s) std::copy(v.data(), v.data() + dim, out.data() + s * dim);
    return constant(std::move(out));
  };
  return {broadcast("state.y0"), broadcast("state.z0")};
}

template <typename T>
AttentionParams<T> Model<T>::attention_params(int layer, const char* which) const {
  const std::string base = std::string(which);
  return {array(layer_name(layer, base + ".qkv")), array(layer_name(layer, base + ".out")), config_.num_heads};
}

template <typename T>
Var<T> Model<T>::block_apply(const Var<T>& input_sum, int grid_width) const {
  const Tensor<T>& x = input_sum->value;
  require(x.rank() == 4 && x.dim(3) == config_.dim,
          "block: expected [B, I, K, D] with D=" + std::to_string(config_.dim) + ", got " + shape_str(x.shape()));
  const bool se = config_.arch == Arch::se_rrm;
  require(se || x.dim(2) == 1, "block: vanilla state must have a symbol extent of 1, got " + shape_str(x.shape()));
  RopeSpec rope = config_.rope;
  rope.grid_width = grid_width;
  Var<T> h = input_sum;
  for (int l = 0; l < config_.layers; ++l) {
    h = rms_norm(add(h, attention_along_axis(h, AttentionAxis::position, attention_params(l, "attn_pos"), rope)),
                 array(layer_name(l, "norm_pos.gain")));
    if (se) {
      h = rms_norm(add(h, attention_along_axis(h, AttentionAxis::symbol, attention_params(l, "attn_sym"), RopeSpec{})),
                   array(layer_name(l, "norm_sym.gain")));
    }
    h = rms_norm(add(h, swiglu(h, array(layer_name(l, "mlp.w_in")), array(layer_name(l, "mlp.w_out")))),
                 array(layer_name(l, "norm_mlp.gain")));
  }
  return h;
}

template <typename T>
Var<T> Model<T>::decode(const Var<T>& y) const {
  if (config_.arch == Arch::se_rrm) return decode_logits(y, array("head.w"), array("head.b"));
  return linear_head(y, array("head.w"), array("head.b"));
}

template <typename T>
SuperblockOutput<T> Model<T>::superblock_forward(const Var<T>& embedding, const RecurrentState<T>& state,
                                                 int grid_width) const {
  require(embedding->value.shape() == state.y->value.shape() && embedding->value.shape() == state.z->value.shape(),
          "superblock: embedding and state shapes differ");
  Var<T> y = state.y;
  Var<T> z = state.z;
  auto cycle = [&] {
    for (int l = 0; l < config_.l_cycles; ++l) z = block_apply(add(add(embedding, y), z), grid_width);
    y = block_apply(add(y, z), grid_width);
  };
  {
    NoGradGuard no_grad;
    for (int h = 0; h + 1 < config_.h_cycles; ++h) cycle();
  }
  cycle();
  SuperblockOutput<T> out;
  out.logits = decode(y);
  out.state = {detach(y), detach(z)};
  return out;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::infer(const Batch& batch, int steps) const {
  require(steps >= 1, "infer: steps must be at least 1");
  NoGradGuard no_grad;
  const Var<T> e = embed(batch);
  RecurrentState<T> state = initial_state(batch);
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    SuperblockOutput<T> step = superblock_forward(e, state, batch.grid_width);
    state = step.state;
    out.push_back(std::move(step.logits->value));
  }
  return out;
}

template <typename T>
std::vector<int> predict_slots(const Tensor<T>& logits, int num_usual) {
  const int k = logits.dim(-1);
  require(num_usual >= 1 && num_usual <= k, "predict: usual symbol count outside the logit axis");
  const std::size_t rows = logits.size() / static_cast<std::size_t>(k);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = logits.data() + r * k;
    int best = 0;
    for (int c = 1; c < num_usual; ++c) {
      if (x[c] > x[best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template std::vector<int> predict_slots(const Tensor<float>&, int);
template std::vector<int> predict_slots(const Tensor<double>&, int);
template Var<float> embed_task_se(const std::vector<int>&, int, int, int, int, const Var<float>&, const Var<float>&,
                                  const Var<float>&, const Var<float>&, const std::vector<int>&);
template Var<double> embed_task_se(const std::vector<int>&, int, int, int, int, const Var<double>&,
                                   const Var<double>&, const Var<double>&, const Var<double>&,
                                   const std::vector<int>&);
template Var<float> embed_task_vanilla(const std::vector<int>&, int, int, const Var<float>&, float);
template Var<double> embed_task_vanilla(const std::vector<int>&, int, int, const Var<double>&, double);

}  // namespace serrm
