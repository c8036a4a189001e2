#include "metasd/objectives.hpp"

#include <cmath>
#include <set>

namespace metasd {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("alpha must be in [0,1]");
  if (!(beta >= 0.0 && beta <= 1.0))
    throw ConfigError("beta must be in [0,1]");
  if (!(temperature > 0.0))
    throw ConfigError("temperature must be positive");
  if (rp_weight < 0.0 || n3_weight < 0.0)
    throw ConfigError("loss weights must be non-negative");
}

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  Eigen::VectorXd p = (x.array() - x.maxCoeff()).exp();
  return p / p.sum();
}

double log_sum_exp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

} // namespace

std::pair<double, Eigen::VectorXd> softmax_ce(const Eigen::VectorXd& logits,
                                              Eigen::Index target) {
  if (target < 0 || target >= logits.size())
    throw NumericError("softmax_ce: target out of range");
  if (!logits.allFinite())
    throw NumericError("softmax_ce: non-finite logits");
  const double loss = log_sum_exp(logits) - logits[target];
  Eigen::VectorXd d = softmax(logits);
  d[target] -= 1.0;
  return {loss, std::move(d)};
}

KlResult kl_div(const Eigen::VectorXd& student_logits,
                const Eigen::VectorXd& teacher_logits, double temperature) {
  if (student_logits.size() != teacher_logits.size())
    throw NumericError("kl_div: length mismatch");
  const double tau = temperature;
  Eigen::VectorXd p = softmax(student_logits / tau);
  Eigen::VectorXd q = softmax(teacher_logits / tau);
  // log(p/q) computed from logits directly for stability.
  Eigen::VectorXd lp =
      (student_logits / tau).array() - log_sum_exp(student_logits / tau);
  Eigen::VectorXd lq =
      (teacher_logits / tau).array() - log_sum_exp(teacher_logits / tau);
  Eigen::VectorXd lr = lp - lq;
  const double loss = p.dot(lr);

  KlResult res;
  res.loss = loss;
  res.d_student = (p.array() * (lr.array() - loss)).matrix() / tau;
  res.d_teacher = (q - p) / tau;
  return res;
}

std::pair<double, SparseGrad> n3_reg(const ModelView& view,
                                     std::span<const Triple> batch) {
  const ParamStore& s = *view.store;
  SparseGrad g(s);
  std::set<std::pair<std::size_t, std::size_t>> rows;
  for (const Triple& t : batch) {
    rows.insert({s.head_entity_tensor(), t.head});
    rows.insert({s.tail_entity_tensor(), t.tail});
    rows.insert({s.relation_tensor(), t.rel});
  }
  double loss = 0.0;
  for (auto [tensor, row] : rows) {
    Eigen::RowVectorXd w = s.tensors[tensor].data.row(row);
    if (view.mask)
      w = w.cwiseProduct(view.mask->bits[tensor].row(row));
    loss += w.array().abs().cube().sum();
    Eigen::RowVectorXd d =
        3.0 * w.array().square() * w.array().sign();
    g.add_row(tensor, row, d);
  }
  if (view.mask)
    g.apply_mask(*view.mask);
  return {loss, std::move(g)};
}

namespace {

// Shared machinery for the two mutual-distillation losses.
struct BatchCe {
  double mean_loss = 0.0;
  MatrixRM dlogits; // d(mean CE)/d logits, batch x C (unscaled by weights)
};

BatchCe batch_ce(const MatrixRM& logits,
                 const std::vector<Eigen::Index>& targets) {
  BatchCe out;
  const auto n = logits.rows();
  out.dlogits.resize(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [loss, d] = softmax_ce(logits.row(i).transpose(), targets[i]);
    out.mean_loss += loss;
    out.dlogits.row(i) = d.transpose();
  }
  out.mean_loss /= static_cast<double>(n);
  out.dlogits /= static_cast<double>(n);
  return out;
}

void check_batch(std::span<const Triple> batch) {
  if (batch.empty())
    throw ConfigError("empty batch");
}

} // namespace

CeLossResult ce_loss(std::span<const Triple> batch, const ModelView& view) {
  check_batch(batch);
  TailBatch fwd = score_tails_batch(view, batch);
  std::vector<Eigen::Index> targets;
  targets.reserve(batch.size());
  for (const Triple& t : batch)
    targets.push_back(t.tail);
  BatchCe ce = batch_ce(fwd.logits, targets);
  SparseGrad g(*view.store);
  backward_tails_batch(view, batch, fwd, ce.dlogits, g);
  return {ce.mean_loss, std::move(g)};
}

StudentLossResult student_loss(std::span<const Triple> batch,
                               const ModelView& student,
                               const ModelView& teacher,
                               const LossConfig& config,
                               const StudentLossOpts& opts) {
  check_batch(batch);
  config.validate();
  const ParamStore& store = *student.store;
  const auto n = static_cast<double>(batch.size());

  StudentLossResult res;
  res.g_student = SparseGrad(store);
  res.g_teacher = SparseGrad(store);

  TailBatch sfwd = score_tails_batch(student, batch);
  std::vector<Eigen::Index> tails;
  tails.reserve(batch.size());
  for (const Triple& t : batch)
    tails.push_back(t.tail);
  BatchCe ce = batch_ce(sfwd.logits, tails);

  MatrixRM d_student = config.alpha * ce.dlogits;
  double kd_sum = 0.0;

  if (config.alpha < 1.0) {
    TailBatch tfwd = score_tails_batch(teacher, batch);
    MatrixRM d_teacher(sfwd.logits.rows(), sfwd.logits.cols());
    for (Eigen::Index i = 0; i < sfwd.logits.rows(); ++i) {
      Eigen::VectorXd sl = sfwd.logits.row(i).transpose();
      Eigen::VectorXd tl = tfwd.logits.row(i).transpose();
      KlResult kl =
          config.kd_direction == KdDirection::StudentToTeacher
              ? kl_div(sl, tl, config.temperature)
              : kl_div(tl, sl, config.temperature);
      kd_sum += kl.loss;
      if (config.kd_direction == KdDirection::StudentToTeacher) {
        d_student.row(i) += (1.0 - config.alpha) / n * kl.d_student.transpose();
        d_teacher.row(i) = (1.0 - config.alpha) / n * kl.d_teacher.transpose();
      } else {
        d_student.row(i) += (1.0 - config.alpha) / n * kl.d_teacher.transpose();
        d_teacher.row(i) = (1.0 - config.alpha) / n * kl.d_student.transpose();
      }
    }
    if (opts.want_teacher_grad)
      backward_tails_batch(teacher, batch, tfwd, d_teacher, res.g_teacher);
  }
  const double kd = kd_sum / n;

  double rp = 0.0;
  RelBatch rfwd;
  MatrixRM d_rel;
  if (config.rp_weight > 0.0) {
    rfwd = score_relations_batch(student, batch);
    std::vector<Eigen::Index> rels;
    rels.reserve(batch.size());
    for (const Triple& t : batch)
      rels.push_back(t.rel);
    BatchCe rce = batch_ce(rfwd.logits, rels);
    rp = rce.mean_loss;
    d_rel = config.rp_weight * rce.dlogits;
  }

  double n3 = 0.0;
  if (config.n3_weight > 0.0) {
    auto [n3v, n3g] = n3_reg(student, batch);
    n3 = n3v / n;
    if (opts.want_student_grad)
      res.g_student.add_scaled(n3g, config.n3_weight / n);
  }
  if (opts.want_student_grad) {
    backward_tails_batch(student, batch, sfwd, d_student, res.g_student);
    if (config.rp_weight > 0.0)
      backward_relations_batch(student, batch, rfwd, d_rel, res.g_student);
  }

  res.value.components["ce"] = ce.mean_loss;
  res.value.components["kd"] = kd;
  if (config.rp_weight > 0.0)
    res.value.components["rp"] = rp;
  if (config.n3_weight > 0.0)
    res.value.components["n3"] = n3;
  res.value.total = config.alpha * ce.mean_loss +
                    (1.0 - config.alpha) * kd + config.rp_weight * rp +
                    config.n3_weight * n3;
  return res;
}

TeacherLossResult teacher_loss(std::span<const Triple> batch,
                               const ModelView& student,
                               const ModelView& teacher,
                               const LossConfig& config) {
  check_batch(batch);
  config.validate();
  const ParamStore& store = *teacher.store;
  const auto n = static_cast<double>(batch.size());

  TeacherLossResult res;
  res.g_teacher = SparseGrad(store);

  TailBatch tfwd = score_tails_batch(teacher, batch);
  std::vector<Eigen::Index> tails;
  tails.reserve(batch.size());
  for (const Triple& t : batch)
    tails.push_back(t.tail);
  BatchCe ce = batch_ce(tfwd.logits, tails);

  MatrixRM d_teacher = config.beta * ce.dlogits;
  double kd_sum = 0.0;
  if (config.beta < 1.0) {
    TailBatch sfwd = score_tails_batch(student, batch);
    for (Eigen::Index i = 0; i < tfwd.logits.rows(); ++i) {
      Eigen::VectorXd sl = sfwd.logits.row(i).transpose();
      Eigen::VectorXd tl = tfwd.logits.row(i).transpose();
      KlResult kl =
          config.kd_direction == KdDirection::StudentToTeacher
              ? kl_div(sl, tl, config.temperature)
              : kl_div(tl, sl, config.temperature);
      kd_sum += kl.loss;
      if (config.kd_direction == KdDirection::StudentToTeacher)
        d_teacher.row(i) += (1.0 - config.beta) / n * kl.d_teacher.transpose();
      else
        d_teacher.row(i) += (1.0 - config.beta) / n * kl.d_student.transpose();
    }
  }
  const double kd = kd_sum / n;

  double rp = 0.0;
  if (config.rp_weight > 0.0) {
    RelBatch rfwd = score_relations_batch(teacher, batch);
    std::vector<Eigen::Index> rels;
    rels.reserve(batch.size());
    for (const Triple& t : batch)
      rels.push_back(t.rel);
    BatchCe rce = batch_ce(rfwd.logits, rels);
    rp = rce.mean_loss;
    MatrixRM d_rel = config.rp_weight * rce.dlogits;
    backward_relations_batch(teacher, batch, rfwd, d_rel, res.g_teacher);
  }

  backward_tails_batch(teacher, batch, tfwd, d_teacher, res.g_teacher);

  double n3 = 0.0;
  if (config.n3_weight > 0.0) {
    auto [n3v, n3g] = n3_reg(teacher, batch);
    n3 = n3v / n;
    res.g_teacher.add_scaled(n3g, config.n3_weight / n);
  }

  res.value.components["ce"] = ce.mean_loss;
  res.value.components["kd"] = kd;
  if (config.rp_weight > 0.0)
    res.value.components["rp"] = rp;
  if (config.n3_weight > 0.0)
    res.value.components["n3"] = n3;
  res.value.total = config.beta * ce.mean_loss + (1.0 - config.beta) * kd +
                    config.rp_weight * rp + config.n3_weight * n3;
  return res;
}

} // namespace metasd
