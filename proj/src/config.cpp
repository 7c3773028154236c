#include "serrm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace serrm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("bad value '" + value + "' for " + key + " (expected true/false)");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  ModelConfig& m = c.model;
  TrainConfig& t = c.train;
  if (key == "arch") {
    m.arch = parse_arch(value);
  } else if (key == "D") {
    m.dim = parse_number<int>(key, value);
  } else if (key == "num_heads") {
    m.num_heads = parse_number<int>(key, value);
  } else if (key == "L_layers") {
    m.layers = parse_number<int>(key, value);
  } else if (key == "H_cycles") {
    m.h_cycles = parse_number<int>(key, value);
  } else if (key == "L_cycles") {
    m.l_cycles = parse_number<int>(key, value);
  } else if (key == "max_supervision_steps") {
    m.max_supervision_steps = parse_number<int>(key, value);
  } else if (key == "embedding_mode") {
    m.embedding_mode = parse_embedding_mode(value);
  } else if (key == "rope_mode") {
    m.rope.mode = parse_rope_mode(value);
  } else if (key == "rope_base") {
    m.rope.base = parse_number<double>(key, value);
  } else if (key == "num_task_types") {
    m.num_task_types = parse_number<int>(key, value);
  } else if (key == "lr") {
    t.lr = parse_number<double>(key, value);
  } else if (key == "weight_decay") {
    t.weight_decay = parse_number<double>(key, value);
  } else if (key == "beta1") {
    t.beta1 = parse_number<double>(key, value);
  } else if (key == "beta2") {
    t.beta2 = parse_number<double>(key, value);
  } else if (key == "adam_eps") {
    t.adam_eps = parse_number<double>(key, value);
  } else if (key == "warmup_steps") {
    t.warmup_steps = parse_number<int>(key, value);
  } else if (key == "schedule") {
    t.schedule = parse_lr_schedule(value);
  } else if (key == "horizon_steps") {
    t.horizon_steps = parse_number<long>(key, value);
  } else if (key == "batch_size") {
    t.batch_size = parse_number<int>(key, value);
  } else if (key == "epochs") {
    t.epochs = parse_number<int>(key, value);
  } else if (key == "halting_p") {
    t.halting_p = parse_number<double>(key, value);
  } else if (key == "grad_precision") {
    t.grad_precision = parse_grad_precision(value);
  } else if (key == "augment_dihedral") {
    t.augment_dihedral = parse_bool(key, value);
  } else if (key == "seed") {
    m.seed = parse_number<std::uint64_t>(key, value);
    t.seed = m.seed;
  } else if (key == "eval_records") {
    c.eval_records = parse_number<int>(key, value);
  } else if (key == "eval_steps") {
    c.eval_steps = parse_number<int>(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    try {
      apply_config_entry(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig config;
  apply_config_text(config, ss.str());
  return config;
}

std::string format_run_config(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  std::ostringstream os;
  os << "arch=" << to_string(m.arch) << '\n'
     << "D=" << m.dim << '\n'
     << "num_heads=" << m.num_heads << '\n'
     << "L_layers=" << m.layers << '\n'
     << "H_cycles=" << m.h_cycles << '\n'
     << "L_cycles=" << m.l_cycles << '\n'
     << "max_supervision_steps=" << m.max_supervision_steps << '\n'
     << "embedding_mode=" << to_string(m.embedding_mode) << '\n'
     << "rope_mode=" << to_string(m.rope.mode) << '\n'
     << "rope_base=" << format_double(m.rope.base) << '\n'
     << "num_task_types=" << m.num_task_types << '\n'
     << "lr=" << format_double(t.lr) << '\n'
     << "weight_decay=" << format_double(t.weight_decay) << '\n'
     << "beta1=" << format_double(t.beta1) << '\n'
     << "beta2=" << format_double(t.beta2) << '\n'
     << "adam_eps=" << format_double(t.adam_eps) << '\n'
     << "warmup_steps=" << t.warmup_steps << '\n'
     << "schedule=" << to_string(t.schedule) << '\n'
     << "horizon_steps=" << t.horizon_steps << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "epochs=" << t.epochs << '\n'
     << "halting_p=" << format_double(t.halting_p) << '\n'
     << "grad_precision=" << to_string(t.grad_precision) << '\n'
     << "augment_dihedral=" << (t.augment_dihedral ? "true" : "false") << '\n'
     << "seed=" << m.seed << '\n'
     << "eval_records=" << c.eval_records << '\n'
     << "eval_steps=" << c.eval_steps << '\n';
  return os.str();
}

}  // namespace serrm
