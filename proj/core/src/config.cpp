#include "metasd/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace metasd {

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::Dynamic: return "dynamic";
    case MaskMode::Frozen: return "frozen";
    case MaskMode::RandomFrozen: return "random_frozen";
  }
  return "?";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "dynamic") return MaskMode::Dynamic;
  if (s == "frozen") return MaskMode::Frozen;
  if (s == "random_frozen") return MaskMode::RandomFrozen;
  throw ConfigError("unknown mask_mode: " + s);
}

void TrainConfig::validate() const {
  loss.validate();
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ConfigError("gamma must be in [0, 1)");
  if (!(lambda > 0.0))
    throw ConfigError("lambda must be positive");
  if (!(mu > 0.0))
    throw ConfigError("mu must be positive");
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  if (dim < 1)
    throw ConfigError("dim must be >= 1");
  if (!(hvp_epsilon_scale > 0.0))
    throw ConfigError("hvp_epsilon_scale must be positive");
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": " + v);
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw ConfigError("invalid value for " + key + ": " + v);
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

} // namespace

void apply_override(TrainConfig& c, const std::string& key,
                    const std::string& v) {
  if (key == "backbone") c.backbone = backbone_from_string(v);
  else if (key == "dim") c.dim = parse_num<std::size_t>(v, key);
  else if (key == "init_scale") c.init_scale = parse_num<double>(v, key);
  else if (key == "alpha") c.loss.alpha = parse_num<double>(v, key);
  else if (key == "beta") c.loss.beta = parse_num<double>(v, key);
  else if (key == "temperature") c.loss.temperature = parse_num<double>(v, key);
  else if (key == "rp_weight") c.loss.rp_weight = parse_num<double>(v, key);
  else if (key == "n3_weight") c.loss.n3_weight = parse_num<double>(v, key);
  else if (key == "kd_direction") {
    if (v == "student_to_teacher")
      c.loss.kd_direction = KdDirection::StudentToTeacher;
    else if (v == "teacher_to_student")
      c.loss.kd_direction = KdDirection::TeacherToStudent;
    else
      throw ConfigError("invalid kd_direction: " + v);
  } else if (key == "gamma") c.gamma = parse_num<double>(v, key);
  else if (key == "lambda") c.lambda = parse_num<double>(v, key);
  else if (key == "mu") c.mu = parse_num<double>(v, key);
  else if (key == "epochs") c.epochs = parse_num<std::size_t>(v, key);
  else if (key == "batch_size") c.batch_size = parse_num<std::size_t>(v, key);
  else if (key == "quiz_size") c.quiz_size = parse_num<std::size_t>(v, key);
  else if (key == "quiz_batch_size")
    c.quiz_batch_size = parse_num<std::size_t>(v, key);
  else if (key == "quiz_overlap") c.quiz_overlap = parse_bool(v, key);
  else if (key == "hvp_epsilon_scale")
    c.hvp_epsilon_scale = parse_num<double>(v, key);
  else if (key == "mask_mode") c.mask_mode = mask_mode_from_string(v);
  else if (key == "mask_scope") {
    if (v == "global") c.mask_scope = MaskScope::Global;
    else if (v == "per_tensor") c.mask_scope = MaskScope::PerTensor;
    else throw ConfigError("invalid mask_scope: " + v);
  } else if (key == "mask_refresh") {
    if (v == "epoch") c.mask_refresh = RefreshMode::Epoch;
    else if (v == "step") c.mask_refresh = RefreshMode::Step;
    else throw ConfigError("invalid mask_refresh: " + v);
  } else if (key == "meta_enabled") c.meta_enabled = parse_bool(v, key);
  else if (key == "student_storage") {
    if (v == "shared") c.student_storage_separate = false;
    else if (v == "separate") c.student_storage_separate = true;
    else throw ConfigError("invalid student_storage: " + v);
  } else if (key == "optimizer") {
    if (v == "adagrad") c.optimizer = OptimizerKind::Adagrad;
    else if (v == "sgd") c.optimizer = OptimizerKind::Sgd;
    else throw ConfigError("invalid optimizer: " + v);
  } else if (key == "grad_clip") c.grad_clip = parse_num<double>(v, key);
  else if (key == "seed") c.seed = parse_num<std::uint64_t>(v, key);
  else if (key == "threads") c.threads = parse_num<std::size_t>(v, key);
  else if (key == "eval_every") c.eval_every = parse_num<std::size_t>(v, key);
  else if (key == "checkpoint_every")
    c.checkpoint_every = parse_num<std::size_t>(v, key);
  else
    throw ConfigError("unknown config key: " + key);
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line = line.substr(0, hash);
    // trim
    auto b = line.find_first_not_of(" \t\r");
    auto e = line.find_last_not_of(" \t\r");
    if (b == std::string::npos)
      continue;
    line = line.substr(b, e - b + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    auto trim = [](std::string s) {
      auto b2 = s.find_first_not_of(" \t");
      auto e2 = s.find_last_not_of(" \t");
      return b2 == std::string::npos ? std::string()
                                     : s.substr(b2, e2 - b2 + 1);
    };
    apply_override(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config_file(const std::filesystem::path& path,
                             TrainConfig base) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), base);
}

std::vector<std::pair<std::string, std::string>> config_items(
    const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("backbone", to_string(c.backbone));
  kv.emplace_back("dim", std::to_string(c.dim));
  kv.emplace_back("init_scale", fmt_double(c.init_scale));
  kv.emplace_back("alpha", fmt_double(c.loss.alpha));
  kv.emplace_back("beta", fmt_double(c.loss.beta));
  kv.emplace_back("temperature", fmt_double(c.loss.temperature));
  kv.emplace_back("rp_weight", fmt_double(c.loss.rp_weight));
  kv.emplace_back("n3_weight", fmt_double(c.loss.n3_weight));
  kv.emplace_back("kd_direction",
                  c.loss.kd_direction == KdDirection::StudentToTeacher
                      ? "student_to_teacher"
                      : "teacher_to_student");
  kv.emplace_back("gamma", fmt_double(c.gamma));
  kv.emplace_back("lambda", fmt_double(c.lambda));
  kv.emplace_back("mu", fmt_double(c.mu));
  kv.emplace_back("epochs", std::to_string(c.epochs));
  kv.emplace_back("batch_size", std::to_string(c.batch_size));
  kv.emplace_back("quiz_size", std::to_string(c.quiz_size));
  kv.emplace_back("quiz_batch_size", std::to_string(c.quiz_batch_size));
  kv.emplace_back("quiz_overlap", bool_str(c.quiz_overlap));
  kv.emplace_back("hvp_epsilon_scale", fmt_double(c.hvp_epsilon_scale));
  kv.emplace_back("mask_mode", to_string(c.mask_mode));
  kv.emplace_back("mask_scope",
                  c.mask_scope == MaskScope::Global ? "global" : "per_tensor");
  kv.emplace_back("mask_refresh",
                  c.mask_refresh == RefreshMode::Epoch ? "epoch" : "step");
  kv.emplace_back("meta_enabled", bool_str(c.meta_enabled));
  kv.emplace_back("student_storage",
                  c.student_storage_separate ? "separate" : "shared");
  kv.emplace_back("optimizer",
                  c.optimizer == OptimizerKind::Adagrad ? "adagrad" : "sgd");
  kv.emplace_back("grad_clip", fmt_double(c.grad_clip));
  kv.emplace_back("seed", std::to_string(c.seed));
  kv.emplace_back("threads", std::to_string(c.threads));
  kv.emplace_back("eval_every", std::to_string(c.eval_every));
  kv.emplace_back("checkpoint_every", std::to_string(c.checkpoint_every));
  return kv;
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  for (const auto& [k, v] : config_items(c))
    os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_digest(const TrainConfig& cfg) {
  std::string text = config_to_text(cfg);
  return fnv1a64(text.data(), text.size());
}

TrainConfig preset_config(const std::string& name, TrainConfig base) {
  if (name == "fb15k237-paper" || name == "wn18rr-paper") {
    base.backbone = Backbone::ComplEx;
    base.dim = 2000;
    base.gamma = 0.9;
    base.loss.alpha = 0.5;
    base.loss.beta = 0.5;
    base.lambda = 1e-1;
    base.mu = 1e-4;
    base.optimizer = OptimizerKind::Adagrad;
    base.quiz_size = 1000;
    base.epochs = 100;
    base.mask_mode = MaskMode::Dynamic;
    base.meta_enabled = true;
  } else if (name == "toy-smoke") {
    base.dim = 16;
    base.gamma = 0.5;
    base.epochs = 5;
    base.batch_size = 64;
    base.quiz_size = 64;
    base.eval_every = 1;
  } else if (name == "wo-prune") {
    base.mask_mode = MaskMode::RandomFrozen;
    base.meta_enabled = true;
  } else if (name == "wo-meta") {
    base.mask_mode = MaskMode::Dynamic;
    base.meta_enabled = false;
  } else if (name == "wo-prune-meta") {
    base.mask_mode = MaskMode::RandomFrozen;
    base.meta_enabled = false;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return base;
}

std::vector<std::string> preset_names() {
  return {"fb15k237-paper", "wn18rr-paper", "toy-smoke",
          "wo-prune",       "wo-meta",      "wo-prune-meta"};
}

} // namespace metasd
