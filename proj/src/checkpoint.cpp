#include "serrm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace serrm {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'R', 'R', 'M', 'C', 'K', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::map<std::string, std::string> parse_manifest(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed manifest line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const char* const kConfigKeys[] = {"format_version", "arch",          "D",         "num_heads",  "L_layers",
                                   "H_cycles",       "L_cycles",      "max_supervision_steps",   "embedding_mode",
                                   "alphabet",       "rope_mode",     "rope_base", "rope_grid_width",
                                   "num_task_types", "seed"};

}  // namespace

template <typename T>
Checkpoint make_checkpoint(const Model<T>& model, std::map<std::string, std::string> extra) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.extra = std::move(extra);
  for (const auto& [name, var] : model.arrays()) ckpt.arrays.emplace(name, var->value.template cast<float>());
  return ckpt;
}

std::string manifest_text(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.config;
  std::ostringstream os;
  os << "format_version=" << kCheckpointFormatVersion << '\n'
     << "arch=" << to_string(c.arch) << '\n'
     << "D=" << c.dim << '\n'
     << "num_heads=" << c.num_heads << '\n'
     << "L_layers=" << c.layers << '\n'
     << "H_cycles=" << c.h_cycles << '\n'
     << "L_cycles=" << c.l_cycles << '\n'
     << "max_supervision_steps=" << c.max_supervision_steps << '\n'
     << "embedding_mode=" << to_string(c.embedding_mode) << '\n'
     << "alphabet=" << c.alphabet.to_string() << '\n'
     << "rope_mode=" << to_string(c.rope.mode) << '\n'
     << "rope_base=" << format_double(c.rope.base) << '\n'
     << "rope_grid_width=" << c.rope.grid_width << '\n'
     << "num_task_types=" << c.num_task_types << '\n'
     << "seed=" << c.seed << '\n';
  for (const auto& [k, v] : ckpt.extra) {
    for (const char* key : kConfigKeys) {
      if (k == key) throw std::invalid_argument("extra manifest key '" + k + "' shadows a config key");
    }
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("manifest entries may not contain '=' in keys or newlines");
    }
    os << k << '=' << v << '\n';
  }
  return os.str();
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  const std::string manifest = manifest_text(ckpt);
  put_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out += manifest;
  put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  Reader r(bytes);
  r.take(sizeof(kMagic));
  const std::uint32_t manifest_len = r.u32();
  auto kv = parse_manifest(r.take(manifest_len));
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(std::string("checkpoint manifest lacks '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  Checkpoint ckpt;
  if (std::stoi(get("format_version")) != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version");
  }
  ModelConfig& c = ckpt.config;
  c.arch = parse_arch(get("arch"));
  c.dim = std::stoi(get("D"));
  c.num_heads = std::stoi(get("num_heads"));
  c.layers = std::stoi(get("L_layers"));
  c.h_cycles = std::stoi(get("H_cycles"));
  c.l_cycles = std::stoi(get("L_cycles"));
  c.max_supervision_steps = std::stoi(get("max_supervision_steps"));
  c.embedding_mode = parse_embedding_mode(get("embedding_mode"));
  c.alphabet = SymbolAlphabet::parse(get("alphabet"));
  c.rope.mode = parse_rope_mode(get("rope_mode"));
  c.rope.base = std::stod(get("rope_base"));
  c.rope.grid_width = std::stoi(get("rope_grid_width"));
  c.num_task_types = std::stoi(get("num_task_types"));
  c.seed = std::stoull(get("seed"));
  ckpt.extra = std::move(kv);

  const std::uint32_t count = r.u32();
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::string name = r.take(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > static_cast<std::uint32_t>(kMaxRank)) throw std::runtime_error("array '" + name + "' has rank > 4");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(r.u32()));
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(r.u32());
    if (!ckpt.arrays.emplace(name, Tensor<float>(std::move(shape), std::move(values))).second) {
      throw std::runtime_error("duplicate array '" + name + "' in checkpoint");
    }
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint arrays");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

template Checkpoint make_checkpoint(const Model<float>&, std::map<std::string, std::string>);
template Checkpoint make_checkpoint(const Model<double>&, std::map<std::string, std::string>);

}  // namespace serrm
