#pragma once
// The training loop: per batch, refresh the prune mask, take a virtual
// student step, update the teacher through the student's one-step quiz
// response (finite-difference Hessian-vector product), then commit the
// mutual student/teacher update.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "metasd/backbone.hpp"
#include "metasd/config.hpp"
#include "metasd/graph_store.hpp"
#include "metasd/objectives.hpp"
#include "metasd/optimizer.hpp"
#include "metasd/params.hpp"
#include "metasd/pruner.hpp"
#include "metasd/rng.hpp"

namespace metasd {

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One virtual student step (Virtual-Train): the update direction g_S and
// the lookahead weights theta'_S = theta_S - lambda * g_S, kept as an
// overlay; the actual weights are untouched.
struct VirtualStep {
  SparseGrad g_student;     // masked gradient of L_S at theta_S
  SparseGrad virtual_delta; // -lambda * g_student (the overlay delta)
  LossValue loss;
};

VirtualStep virtual_train_step(const ModelView& student,
                               const ModelView& teacher,
                               std::span<const Triple> batch,
                               const TrainConfig& config);

// Meta-Train: hypergradient of the quiz CE at the virtual student with
// respect to the teacher, approximated by a central finite difference of
// the teacher-partial gradient of L_S along the quiz gradient direction.
// Returns the applied hypergradient (empty when skipped) and the quiz CE.
struct MetaStep {
  bool skipped = false; // ||v|| == 0
  double quiz_ce = 0.0;
  SparseGrad hypergrad;
};

// Computes the hypergradient only; `trainer state` free so it is unit- and
// oracle-testable.  student/teacher views are of the *unmodified* store.
MetaStep meta_hypergradient(const ModelView& student,
                            const ModelView& teacher,
                            const VirtualStep& virtual_step,
                            std::span<const Triple> train_batch,
                            std::span<const Triple> quiz_batch,
                            const TrainConfig& config);

// Actual-Train: committed mutual update, student step first (masked,
// surviving weights only), then the teacher step on the full store.
// When `reuse` is given it is taken as the already-computed student
// gradient/loss at the current weights (valid when the teacher did not
// move since it was computed).
struct ActualStepResult {
  LossValue student;
  LossValue teacher;
};

struct ReusableStudentGrad {
  SparseGrad grad;
  LossValue loss;
};

ActualStepResult actual_train_step(ParamStore& params,
                                   ParamStore* separate_student,
                                   const PruneMask& mask, AdagradState& opt,
                                   std::span<const Triple> batch,
                                   const TrainConfig& config,
                                   ReusableStudentGrad* reuse = nullptr);

struct EpochMetrics {
  std::size_t epoch = 0;
  LossValue student_train;
  LossValue teacher_train;
  double quiz_ce = 0.0;
  double sparsity = 0.0;
  bool mask_changed = false;
  // Filled when validation ran this epoch.
  std::optional<double> valid_student_mrr, valid_teacher_mrr;
  std::optional<double> valid_student_hits1, valid_student_hits3,
      valid_student_hits10;
  std::optional<double> valid_teacher_hits1, valid_teacher_hits3,
      valid_teacher_hits10;
};

struct Checkpoint {
  ParamStore params;
  std::optional<ParamStore> student_params; // separate-storage mode only
  PruneMask mask;
  AdagradState opt_state;
  TrainConfig config;
  std::uint64_t epoch = 0;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
  ParamStore params;
  std::optional<ParamStore> student_params;
  PruneMask mask;
  AdagradState opt_state;
  std::vector<EpochMetrics> log;
};

// Called after every epoch's metrics record is appended; may be empty.
using EpochCallback = std::function<void(const EpochMetrics&)>;

class Trainer {
 public:
  // `dataset` holds original (non-augmented) splits; quiz sampling and
  // reciprocal augmentation happen inside.
  Trainer(const Dataset& dataset, TrainConfig config);

  // Resume from a checkpoint (must match the dataset shape).
  Trainer(const Dataset& dataset, Checkpoint ck);

  // Runs remaining epochs; deterministic under (config, seed).
  TrainResult run(const EpochCallback& on_epoch = {});

  Checkpoint make_checkpoint() const;
  const ParamStore& params() const { return params_; }
  const PruneMask& mask() const { return mask_; }
  const std::vector<Triple>& quiz_stream() const { return quiz_aug_; }
  std::uint64_t epochs_done() const { return epoch_; }

  ModelView student_view() const;
  ModelView teacher_view() const;

 private:
  void refresh_mask_if_due(std::uint64_t step_in_epoch);
  std::vector<Triple> sample_quiz_batch(std::uint64_t step_global);
  void train_epoch(EpochMetrics& m);

  const Dataset& dataset_;
  TrainConfig config_;
  std::vector<Triple> train_aug_; // reciprocal-augmented training stream
  std::vector<Triple> quiz_aug_;  // reciprocal-augmented fixed quiz set
  std::vector<Triple> valid_aug_;
  FilterIndex filter_;

  ParamStore params_;
  std::optional<ParamStore> student_params_;
  PruneMask mask_;
  AdagradState opt_;
  std::uint64_t epoch_ = 0;
  Rng rng_;
};

} // namespace metasd
