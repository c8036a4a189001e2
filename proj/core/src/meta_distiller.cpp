#include "metasd/meta_distiller.hpp"

#include <cmath>

#include "metasd/evaluator.hpp"

namespace metasd {

namespace {

void clip_grad(SparseGrad& g, double clip) {
  if (clip <= 0.0)
    return;
  const double norm = std::sqrt(g.squared_norm());
  if (norm > clip)
    g.scale(clip / norm);
}

} // namespace

VirtualStep virtual_train_step(const ModelView& student,
                               const ModelView& teacher,
                               std::span<const Triple> batch,
                               const TrainConfig& config) {
  StudentLossOpts opts;
  opts.want_teacher_grad = false;
  StudentLossResult sl =
      student_loss(batch, student, teacher, config.loss, opts);
  VirtualStep vs;
  vs.loss = sl.value;
  vs.virtual_delta = sl.g_student;
  vs.virtual_delta.scale(-config.lambda);
  vs.g_student = std::move(sl.g_student);
  return vs;
}

MetaStep meta_hypergradient(const ModelView& student,
                            const ModelView& teacher,
                            const VirtualStep& virtual_step,
                            std::span<const Triple> train_batch,
                            std::span<const Triple> quiz_batch,
                            const TrainConfig& config) {
  MetaStep out;

  // Quiz gradient at the virtual student theta'_S.
  ModelView virt = student;
  virt.delta = &virtual_step.virtual_delta;
  virt.delta_scale = 1.0;
  CeLossResult quiz = ce_loss(quiz_batch, virt);
  out.quiz_ce = quiz.loss;

  const double vnorm = std::sqrt(quiz.grad.squared_norm());
  if (vnorm == 0.0) {
    out.skipped = true;
    return out;
  }
  const double eps = config.hvp_epsilon_scale / vnorm;

  // Teacher-partial gradient of L_S at theta_S +- eps*v.
  StudentLossOpts opts;
  opts.want_student_grad = false;
  opts.want_teacher_grad = true;

  ModelView plus = student;
  plus.delta = &quiz.grad;
  plus.delta_scale = eps;
  SparseGrad g_plus =
      student_loss(train_batch, plus, teacher, config.loss, opts).g_teacher;

  ModelView minus = student;
  minus.delta = &quiz.grad;
  minus.delta_scale = -eps;
  SparseGrad g_minus =
      student_loss(train_batch, minus, teacher, config.loss, opts).g_teacher;

  g_plus.add_scaled(g_minus, -1.0);
  g_plus.scale(-config.lambda / (2.0 * eps));
  if (!g_plus.all_finite())
    throw TrainingDiverged("non-finite hypergradient in meta step");
  out.hypergrad = std::move(g_plus);
  return out;
}

ActualStepResult actual_train_step(ParamStore& params,
                                   ParamStore* separate_student,
                                   const PruneMask& mask, AdagradState& opt,
                                   std::span<const Triple> batch,
                                   const TrainConfig& config,
                                   ReusableStudentGrad* reuse) {
  ParamStore& student_store = separate_student ? *separate_student : params;
  ModelView student(student_store, &mask);
  ModelView teacher(params);

  ActualStepResult out;
  SparseGrad g_student;
  if (reuse) {
    g_student = std::move(reuse->grad);
    out.student = reuse->loss;
  } else {
    StudentLossOpts opts;
    opts.want_teacher_grad = false;
    StudentLossResult sl =
        student_loss(batch, student, teacher, config.loss, opts);
    g_student = std::move(sl.g_student);
    out.student = sl.value;
  }
  if (!std::isfinite(out.student.total))
    throw TrainingDiverged("non-finite student loss");
  clip_grad(g_student, config.grad_clip);
  apply_update(student_store, opt, UpdatePath::Student, config.optimizer,
               g_student, config.lambda, &mask);

  TeacherLossResult tl = teacher_loss(batch, student, teacher, config.loss);
  if (!std::isfinite(tl.value.total))
    throw TrainingDiverged("non-finite teacher loss");
  clip_grad(tl.g_teacher, config.grad_clip);
  apply_update(params, opt, UpdatePath::Teacher, config.optimizer,
               tl.g_teacher, config.lambda);
  out.teacher = tl.value;
  return out;
}

// ---- Trainer -------------------------------------------------------------

Trainer::Trainer(const Dataset& dataset, TrainConfig config)
    : dataset_(dataset), config_(std::move(config)),
      rng_(derive_seed(config_.seed, 't')) {
  config_.validate();
  if (config_.meta_enabled && config_.quiz_size == 0)
    throw ConfigError("meta_enabled requires quiz_size > 0");

  const std::size_t rc = dataset_.relation_count();
  SplitData qs = sample_quiz(dataset_.splits.train, config_.quiz_size,
                             config_.seed, config_.quiz_overlap);
  train_aug_ = augment_reciprocal(qs.train, rc);
  quiz_aug_ = augment_reciprocal(qs.quiz, rc);
  valid_aug_ = augment_reciprocal(dataset_.splits.valid, rc);

  SplitData all;
  all.train = augment_reciprocal(dataset_.splits.train, rc);
  all.valid = valid_aug_;
  all.test = augment_reciprocal(dataset_.splits.test, rc);
  filter_ = build_filter_index(all);

  params_ = init_params(config_.backbone, config_.dim, dataset_.vocab,
                        config_.seed, config_.init_scale);
  switch (config_.mask_mode) {
    case MaskMode::Dynamic:
    case MaskMode::Frozen:
      mask_ = compute_mask(params_, config_.gamma, config_.mask_scope);
      break;
    case MaskMode::RandomFrozen:
      mask_ = random_mask(params_, config_.gamma, config_.seed,
                          config_.mask_scope);
      break;
  }
  if (config_.student_storage_separate)
    student_params_ = params_;
  opt_ = AdagradState::zeros(params_);
}

Trainer::Trainer(const Dataset& dataset, Checkpoint ck)
    : Trainer(dataset, ck.config) {
  params_ = std::move(ck.params);
  student_params_ = std::move(ck.student_params);
  mask_ = std::move(ck.mask);
  opt_ = std::move(ck.opt_state);
  epoch_ = ck.epoch;
  rng_.load_state(ck.rng_state);
}

ModelView Trainer::student_view() const {
  return ModelView(config_.student_storage_separate ? *student_params_
                                                    : params_,
                   &mask_);
}

ModelView Trainer::teacher_view() const { return ModelView(params_); }

void Trainer::refresh_mask_if_due(std::uint64_t step_in_epoch) {
  if (config_.mask_mode != MaskMode::Dynamic)
    return;
  if (!refresh_due(step_in_epoch, config_.mask_refresh))
    return;
  mask_ = compute_mask(params_, config_.gamma, config_.mask_scope);
  mask_.refreshed_at = epoch_;
  // Literal separate-model reading: re-sync the student to the freshly
  // masked teacher at every refresh.
  if (config_.student_storage_separate) {
    student_params_ = params_;
    for (std::size_t t = 0; t < params_.tensors.size(); ++t)
      student_params_->tensors[t].data =
          params_.tensors[t].data.cwiseProduct(mask_.bits[t]);
  }
}

std::vector<Triple> Trainer::sample_quiz_batch(std::uint64_t step_global) {
  Rng rng(derive_seed(config_.seed, 'z', step_global));
  const std::size_t n = config_.effective_quiz_batch();
  std::vector<Triple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(quiz_aug_[rng.uniform_below(quiz_aug_.size())]);
  return out;
}

void Trainer::train_epoch(EpochMetrics& m) {
  auto epoch_batches =
      batches(train_aug_, config_.batch_size, config_.seed, epoch_);
  const std::uint64_t steps_per_epoch = epoch_batches.size();

  LossValue s_sum, t_sum;
  double quiz_sum = 0.0;
  std::size_t quiz_n = 0;
  PruneMask before = mask_;

  for (std::uint64_t step = 0; step < steps_per_epoch; ++step) {
    const auto& batch = epoch_batches[step];
    refresh_mask_if_due(step);

    VirtualStep vs = virtual_train_step(student_view(), teacher_view(),
                                        batch, config_);
    if (!std::isfinite(vs.loss.total))
      throw TrainingDiverged("non-finite student loss");

    bool teacher_moved = false;
    if (config_.meta_enabled) {
      std::vector<Triple> quiz_batch =
          sample_quiz_batch(epoch_ * steps_per_epoch + step);
      MetaStep ms = meta_hypergradient(student_view(), teacher_view(), vs,
                                       batch, quiz_batch, config_);
      if (!ms.skipped) {
        clip_grad(ms.hypergrad, config_.grad_clip);
        apply_update(params_, opt_, UpdatePath::Teacher, config_.optimizer,
                     ms.hypergrad, config_.mu);
        teacher_moved = true;
        quiz_sum += ms.quiz_ce;
        ++quiz_n;
      }
    }

    // Actual-Train, student then teacher.  The virtual gradient is exact
    // for the student step unless the meta update moved the teacher.
    ReusableStudentGrad reuse{std::move(vs.g_student), vs.loss};
    ActualStepResult ar = actual_train_step(
        params_,
        config_.student_storage_separate ? &*student_params_ : nullptr,
        mask_, opt_, batch, config_, teacher_moved ? nullptr : &reuse);

    s_sum.total += ar.student.total;
    for (const auto& [k, v] : ar.student.components)
      s_sum.components[k] += v;
    t_sum.total += ar.teacher.total;
    for (const auto& [k, v] : ar.teacher.components)
      t_sum.components[k] += v;
  }

  const double inv = steps_per_epoch > 0
                         ? 1.0 / static_cast<double>(steps_per_epoch)
                         : 0.0;
  m.student_train.total = s_sum.total * inv;
  for (const auto& [k, v] : s_sum.components)
    m.student_train.components[k] = v * inv;
  m.teacher_train.total = t_sum.total * inv;
  for (const auto& [k, v] : t_sum.components)
    m.teacher_train.components[k] = v * inv;
  m.quiz_ce = quiz_n > 0 ? quiz_sum / static_cast<double>(quiz_n) : 0.0;
  m.mask_changed = !(mask_ == before);
  m.sparsity = sparsity_stats(params_, mask_).sparsity();
}

TrainResult Trainer::run(const EpochCallback& on_epoch) {
  TrainResult res;
  while (epoch_ < config_.epochs) {
    EpochMetrics m;
    m.epoch = epoch_;
    train_epoch(m);

    if (config_.eval_every > 0 && !valid_aug_.empty() &&
        (epoch_ + 1) % config_.eval_every == 0) {
      EvalReport st = evaluate(student_view(), valid_aug_, filter_, nullptr,
                               "valid", "student");
      EvalReport te = evaluate(teacher_view(), valid_aug_, filter_, nullptr,
                               "valid", "teacher");
      m.valid_student_mrr = st.mrr;
      m.valid_student_hits1 = st.hits[1];
      m.valid_student_hits3 = st.hits[3];
      m.valid_student_hits10 = st.hits[10];
      m.valid_teacher_mrr = te.mrr;
      m.valid_teacher_hits1 = te.hits[1];
      m.valid_teacher_hits3 = te.hits[3];
      m.valid_teacher_hits10 = te.hits[10];
    }
    ++epoch_;
    res.log.push_back(m);
    if (on_epoch)
      on_epoch(m);
  }
  res.params = params_;
  res.student_params = student_params_;
  res.mask = mask_;
  res.opt_state = opt_;
  return res;
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck;
  ck.params = params_;
  ck.student_params = student_params_;
  ck.mask = mask_;
  ck.opt_state = opt_;
  ck.config = config_;
  ck.epoch = epoch_;
  ck.rng_state = rng_.save_state();
  return ck;
}

} // namespace metasd
