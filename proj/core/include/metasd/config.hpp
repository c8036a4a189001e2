#pragma once
// Training configuration: every hyperparameter of the training loop, a
// flat key=value text representation (the config-file format), presets
// and override handling.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metasd/objectives.hpp"
#include "metasd/optimizer.hpp"
#include "metasd/params.hpp"
#include "metasd/pruner.hpp"

namespace metasd {

enum class MaskMode { Dynamic, Frozen, RandomFrozen };

std::string to_string(MaskMode m);
MaskMode mask_mode_from_string(const std::string& s);

struct TrainConfig {
  Backbone backbone = Backbone::ComplEx;
  std::size_t dim = 200;
  double init_scale = 1e-3;

  LossConfig loss; // alpha, beta, temperature, rp_weight, n3_weight

  double gamma = 0.9;   // pruning rate
  double lambda = 1e-1; // inner learning rate (student / actual steps)
  double mu = 1e-4;     // meta learning rate (teacher meta step)

  std::size_t epochs = 100;
  std::size_t batch_size = 512;
  std::size_t quiz_size = 1000;
  std::size_t quiz_batch_size = 0; // 0 = batch_size
  bool quiz_overlap = false;

  double hvp_epsilon_scale = 0.01;

  MaskMode mask_mode = MaskMode::Dynamic;
  MaskScope mask_scope = MaskScope::Global;
  RefreshMode mask_refresh = RefreshMode::Epoch;
  bool meta_enabled = true;
  bool student_storage_separate = false;

  OptimizerKind optimizer = OptimizerKind::Adagrad;
  double grad_clip = 0.0; // 0 = off

  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::size_t eval_every = 1;       // validate every N epochs (0 = never)
  std::size_t checkpoint_every = 0; // 0 = final only

  std::size_t effective_quiz_batch() const {
    return quiz_batch_size == 0 ? batch_size : quiz_batch_size;
  }

  void validate() const;
};

// key=value text, one per line, '#' comments.  Unknown keys raise
// ConfigError naming the key.
TrainConfig parse_config_text(const std::string& text,
                              TrainConfig base = {});
TrainConfig load_config_file(const std::filesystem::path& path,
                             TrainConfig base = {});
void apply_override(TrainConfig& cfg, const std::string& key,
                    const std::string& value);
std::string config_to_text(const TrainConfig& cfg);
std::vector<std::pair<std::string, std::string>> config_items(
    const TrainConfig& cfg);

// FNV-1a 64 over the canonical text form.
std::uint64_t config_digest(const TrainConfig& cfg);
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

// Named presets: fb15k237-paper, wn18rr-paper, toy-smoke, wo-prune,
// wo-meta, wo-prune-meta.
TrainConfig preset_config(const std::string& name, TrainConfig base = {});
std::vector<std::string> preset_names();

} // namespace metasd
