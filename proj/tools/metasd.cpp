// metasd command line: train / eval / export / data-stats / gen-toy.
// Errors print a single "error: <code>: <text>" line and exit nonzero.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "metasd/config.hpp"
#include "metasd/evaluator.hpp"
#include "metasd/meta_distiller.hpp"
#include "metasd/toygen.hpp"

using json = nlohmann::ordered_json;
using namespace metasd;

namespace {

constexpr const char* kVersion = "0.1.0";

[[noreturn]] void die(const std::string& code, const std::string& msg) {
  std::cerr << "error: " << code << ": " << msg << "\n";
  std::exit(1);
}

std::filesystem::path resolve_data_dir(const std::string& arg) {
  std::filesystem::path p = arg;
  if (std::filesystem::exists(p / "train.txt"))
    return p;
  if (const char* env = std::getenv("METASD_DATA_DIR")) {
    std::filesystem::path alt = std::filesystem::path(env) / arg;
    if (std::filesystem::exists(alt / "train.txt"))
      return alt;
  }
  die("dataset", "no dataset at '" + arg + "' (checked the path and "
      "METASD_DATA_DIR)");
}

std::uint64_t file_digest(const std::filesystem::path& p,
                          std::uint64_t seed) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = seed;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

std::uint64_t dataset_digest(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* f : {"train.txt", "valid.txt", "test.txt"})
    h = file_digest(dir / f, h);
  return h;
}

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
  return buf;
}

struct ConfigCli {
  std::string config_file;
  std::string preset;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "config file (key=value lines)");
    app->add_option("--preset", preset, "named preset")
        ->check(CLI::IsMember(preset_names()));
    for (const char* key :
         {"gamma", "alpha", "beta", "lambda", "mu", "dim", "backbone",
          "epochs", "batch_size", "quiz_size", "seed", "threads",
          "mask_mode", "mask_scope", "mask_refresh", "optimizer",
          "init_scale", "eval_every",
          "temperature", "rp_weight", "n3_weight", "grad_clip",
          "quiz_batch_size", "meta_enabled", "hvp_epsilon_scale"}) {
      std::string k = key;
      std::string flag = "--" + k;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option_function<std::string>(
             flag, [this, k](const std::string& v) { overrides[k] = v; },
             "override config key " + k)
          ->type_name("VALUE");
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    try {
      if (!config_file.empty())
        cfg = load_config_file(config_file, cfg);
      if (!preset.empty())
        cfg = preset_config(preset, cfg);
      for (const auto& [k, v] : overrides)
        apply_override(cfg, k, v);
      cfg.validate();
    } catch (const ConfigError& e) {
      die("config", e.what());
    }
    return cfg;
  }
};

json config_json(const TrainConfig& cfg) {
  json j;
  for (const auto& [k, v] : config_items(cfg))
    j[k] = v;
  return j;
}

json report_json(const EvalReport& r) {
  json j;
  j["split"] = r.split;
  j["model"] = r.model_view;
  j["mrr"] = r.mrr;
  for (const auto& [k, v] : r.hits)
    j["hits@" + std::to_string(k)] = v;
  j["queries"] = r.query_count;
  for (const auto& [name, sub] : r.subsets)
    j["subsets"][name] = report_json(sub);
  return j;
}

int cmd_train(const std::string& data_arg, const ConfigCli& cc,
              const std::string& out_arg) {
  const auto data_dir = resolve_data_dir(data_arg);
  TrainConfig cfg = cc.resolve();

  const std::filesystem::path out =
      out_arg.empty() ? std::filesystem::path("out/run")
                      : std::filesystem::path(out_arg);
  std::filesystem::create_directories(out);

  Dataset ds = load_dataset(data_dir);

  json manifest;
  manifest["code_version"] = kVersion;
  manifest["started_at"] = now_iso8601();
  manifest["dataset"] = data_dir.string();
  manifest["dataset_digest"] =
      (std::ostringstream() << std::hex << dataset_digest(data_dir)).str();
  manifest["output_dir"] = out.string();
  manifest["config"] = config_json(cfg);
  manifest["config_digest"] =
      (std::ostringstream() << std::hex << config_digest(cfg)).str();
  std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";

  std::ofstream metrics(out / "metrics.jsonl");
  auto on_epoch = [&](const EpochMetrics& m) {
    json j;
    j["epoch"] = m.epoch;
    j["student_loss"] = m.student_train.total;
    for (const auto& [k, v] : m.student_train.components)
      j["student_" + k] = v;
    j["teacher_loss"] = m.teacher_train.total;
    for (const auto& [k, v] : m.teacher_train.components)
      j["teacher_" + k] = v;
    j["quiz_ce"] = m.quiz_ce;
    j["sparsity"] = m.sparsity;
    j["mask_changed"] = m.mask_changed;
    if (m.valid_student_mrr) {
      j["valid_student_mrr"] = *m.valid_student_mrr;
      j["valid_student_hits1"] = *m.valid_student_hits1;
      j["valid_student_hits3"] = *m.valid_student_hits3;
      j["valid_student_hits10"] = *m.valid_student_hits10;
      j["valid_teacher_mrr"] = *m.valid_teacher_mrr;
      j["valid_teacher_hits1"] = *m.valid_teacher_hits1;
      j["valid_teacher_hits3"] = *m.valid_teacher_hits3;
      j["valid_teacher_hits10"] = *m.valid_teacher_hits10;
    }
    metrics << j.dump() << "\n";
    metrics.flush();
    std::printf("epoch %zu  student %.4f  teacher %.4f  quiz %.4f  "
                "sparsity %.3f",
                m.epoch, m.student_train.total, m.teacher_train.total,
                m.quiz_ce, m.sparsity);
    if (m.valid_student_mrr)
      std::printf("  valid MRR s=%.4f t=%.4f", *m.valid_student_mrr,
                  *m.valid_teacher_mrr);
    std::printf("\n");
    std::fflush(stdout);
  };

  try {
    Trainer trainer(ds, cfg);
    trainer.run(on_epoch);
    Checkpoint ck = trainer.make_checkpoint();
    save_checkpoint(out / "model.msdk", ck);
    export_sparse(ck.params, ck.mask, out / "student.msds",
                  config_digest(cfg));
    SparsityStats stats = sparsity_stats(ck.params, ck.mask);
    std::printf("done: %llu epochs, %zu params, %zu effective "
                "(sparsity %.3f)\n",
                static_cast<unsigned long long>(trainer.epochs_done()),
                stats.total, stats.effective_params(), stats.sparsity());
    std::printf("artifacts: %s\n", (out / "model.msdk").string().c_str());
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: diverged: " << e.what()
              << " (partial artifacts kept in " << out.string() << ")\n";
    return 2;
  } catch (const ConfigError& e) {
    die("config", e.what());
  }
  return 0;
}

int cmd_eval(const std::string& data_arg, const std::string& checkpoint,
             const std::string& sparse, bool student, bool teacher,
             std::size_t long_tail, const std::string& split,
             const std::string& out_file) {
  const auto data_dir = resolve_data_dir(data_arg);
  Dataset ds = load_dataset(data_dir);
  const std::size_t rc = ds.relation_count();
  const auto& raw = split == "valid" ? ds.splits.valid : ds.splits.test;
  auto eval_aug = augment_reciprocal(raw, rc);

  SplitData aug;
  aug.train = augment_reciprocal(ds.splits.train, rc);
  aug.valid = augment_reciprocal(ds.splits.valid, rc);
  aug.test = augment_reciprocal(ds.splits.test, rc);
  FilterIndex filter = build_filter_index(aug);

  struct Target {
    std::string name;
    ParamStore store;
    std::optional<PruneMask> mask;
  };
  std::vector<Target> targets;
  try {
    if (!checkpoint.empty()) {
      Checkpoint ck = load_checkpoint(checkpoint);
      if (teacher || !student)
        targets.push_back({"teacher", ck.params, std::nullopt});
      if (student || !teacher) {
        const ParamStore& sp =
            ck.student_params ? *ck.student_params : ck.params;
        targets.push_back({"student", sp, ck.mask});
      }
    }
    if (!sparse.empty())
      targets.push_back({"student-sparse", load_sparse(sparse),
                         std::nullopt});
  } catch (const IoError& e) {
    die("checkpoint", e.what());
  }
  if (targets.empty())
    die("usage", "nothing to evaluate: pass --checkpoint and/or --sparse");

  json out = json::array();
  for (const auto& t : targets) {
    ModelView view(t.store, t.mask ? &*t.mask : nullptr);
    EvalReport rep = long_tail > 0
                         ? long_tail_report(view, ds.splits.train, eval_aug,
                                            filter, long_tail, t.name)
                         : evaluate(view, eval_aug, filter, nullptr, split,
                                    t.name);
    std::size_t effective = t.store.param_count();
    if (t.mask)
      effective = sparsity_stats(t.store, *t.mask).effective_params();
    std::printf("%s", rep.to_text().c_str());
    std::printf("effective_params=%zu\n\n", effective);
    json j = report_json(rep);
    j["effective_params"] = effective;
    out.push_back(j);
  }
  if (!out_file.empty())
    std::ofstream(out_file) << out.dump(2) << "\n";
  return 0;
}

int cmd_export(const std::string& checkpoint, const std::string& out_file) {
  try {
    Checkpoint ck = load_checkpoint(checkpoint);
    export_sparse(ck.params, ck.mask, out_file, config_digest(ck.config));
    ParamStore back = load_sparse(out_file);
    std::size_t nnz = 0;
    for (const auto& t : back.tensors)
      nnz += static_cast<std::size_t>((t.data.array() != 0.0).count());
    std::printf("wrote %s: %zu of %zu weights kept\n", out_file.c_str(),
                nnz, ck.params.param_count());
  } catch (const IoError& e) {
    die("checkpoint", e.what());
  }
  return 0;
}

int cmd_data_stats(const std::string& data_arg, std::size_t threshold) {
  const auto data_dir = resolve_data_dir(data_arg);
  Dataset ds;
  try {
    ds = load_dataset(data_dir);
  } catch (const IoError& e) {
    die("dataset", e.what());
  } catch (const ParseError& e) {
    die("parse", e.what());
  }
  std::printf("dataset=%s\n", data_dir.string().c_str());
  std::printf("entities=%zu\n", ds.entity_count());
  std::printf("relations=%zu\n", ds.relation_count());
  std::printf("train=%zu\nvalid=%zu\ntest=%zu\n", ds.splits.train.size(),
              ds.splits.valid.size(), ds.splits.test.size());
  std::printf("duplicates_dropped=%zu\n", ds.duplicates_dropped);

  auto tail = long_tail_relations(ds.splits.train, threshold);
  std::printf("long_tail_threshold=%zu\n", threshold);
  std::printf("long_tail_relations=%zu\n", tail.size());
  std::size_t tail_triples = 0;
  for (const Triple& t : ds.splits.train)
    if (tail.count(t.rel))
      ++tail_triples;
  std::printf("long_tail_train_triples=%zu (%.1f%%)\n", tail_triples,
              ds.splits.train.empty()
                  ? 0.0
                  : 100.0 * static_cast<double>(tail_triples) /
                        static_cast<double>(ds.splits.train.size()));

  // Histogram of relation frequencies by decade.
  std::map<RelationId, std::size_t> counts;
  for (const Triple& t : ds.splits.train)
    ++counts[t.rel];
  std::map<int, std::size_t> hist;
  for (const auto& [r, c] : counts) {
    int bucket = 0;
    for (std::size_t x = c; x >= 10; x /= 10)
      ++bucket;
    ++hist[bucket];
  }
  for (const auto& [b, n] : hist) {
    std::size_t lo = 1;
    for (int i = 0; i < b; ++i)
      lo *= 10;
    std::printf("relations_with_%zu_to_%zu_triples=%zu\n", lo, lo * 10 - 1,
                n);
  }
  return 0;
}

int cmd_gen_toy(const std::string& out_dir, const ToyKgSpec& spec) {
  Dataset ds = generate_toy_kg(spec);
  std::filesystem::create_directories(out_dir);
  write_toy_kg(ds, out_dir);
  std::printf("wrote toy KG to %s: %zu entities, %zu relations, "
              "%zu/%zu/%zu triples\n",
              out_dir.c_str(), ds.entity_count(), ds.relation_count(),
              ds.splits.train.size(), ds.splits.valid.size(),
              ds.splits.test.size());
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph embedding trainer with magnitude pruning "
               "and meta-distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string data_arg, out_arg, checkpoint, sparse, split = "test";
  std::string out_file;
  bool student = false, teacher = false;
  std::size_t long_tail = 0, threshold = 1000;
  ConfigCli cc;

  auto* train = app.add_subcommand("train", "train on a dataset directory");
  train->add_option("--data", data_arg, "dataset directory")->required();
  train->add_option("--out", out_arg, "output directory (default out/run)");
  cc.attach(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--data", data_arg, "dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (.msdk)");
  eval->add_option("--sparse", sparse, "sparse export file (.msds)");
  eval->add_flag("--student", student, "masked student view only");
  eval->add_flag("--teacher", teacher, "teacher view only");
  eval->add_option("--long-tail", long_tail,
                   "restrict to relations with fewer train instances");
  eval->add_option("--split", split, "test or valid")
      ->check(CLI::IsMember({"test", "valid"}));
  eval->add_option("--out", out_file, "also write reports as JSON");

  auto* exp = app.add_subcommand("export", "write the sparse student model");
  exp->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  exp->add_option("--out", out_file, "output .msds path")->required();

  auto* stats = app.add_subcommand("data-stats", "dataset statistics");
  stats->add_option("--data", data_arg, "dataset directory")->required();
  stats->add_option("--long-tail", threshold, "long-tail threshold");

  ToyKgSpec spec;
  auto* toy = app.add_subcommand("gen-toy", "generate a synthetic KG");
  toy->add_option("--out", out_arg, "output directory")->required();
  toy->add_option("--entities", spec.entities);
  toy->add_option("--relations", spec.relations);
  toy->add_option("--groups", spec.groups);
  toy->add_option("--train", spec.train_triples);
  toy->add_option("--valid", spec.valid_triples);
  toy->add_option("--test", spec.test_triples);
  toy->add_option("--noise", spec.noise);
  toy->add_option("--seed", spec.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return cmd_train(data_arg, cc, out_arg);
    if (eval->parsed())
      return cmd_eval(data_arg, checkpoint, sparse, student, teacher,
                      long_tail, split, out_file);
    if (exp->parsed())
      return cmd_export(checkpoint, out_file);
    if (stats->parsed())
      return cmd_data_stats(data_arg, threshold);
    if (toy->parsed())
      return cmd_gen_toy(out_arg, spec);
  } catch (const std::exception& e) {
    die("internal", e.what());
  }
  return 0;
}
