#pragma once
// Scalar losses and their gradients: full-candidate softmax cross-entropy,
// KL distillation between student and teacher output distributions, the
// combined mutual-distillation losses, the relation-prediction auxiliary
// and the optional N3 regularizer.

#include <Eigen/Core>
#include <map>
#include <span>
#include <string>

#include "metasd/backbone.hpp"
#include "metasd/types.hpp"

namespace metasd {

enum class KdDirection { StudentToTeacher, TeacherToStudent };

struct LossConfig {
  double alpha = 0.5;       // student CE vs KD balance
  double beta = 0.5;        // teacher CE vs KD balance
  double temperature = 1.0; // KD softmax temperature
  double rp_weight = 0.05;  // relation-prediction auxiliary weight
  double n3_weight = 0.0;   // N3 regularizer weight
  // KL(S||T) as printed in the source formulation; the reversed direction
  // is available as a switch.
  KdDirection kd_direction = KdDirection::StudentToTeacher;

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components; // ce, kd, rp, n3

  double component(const std::string& k) const {
    auto it = components.find(k);
    return it == components.end() ? 0.0 : it->second;
  }
};

// loss = -log softmax(logits)[target]; dlogits = softmax(logits) - onehot.
std::pair<double, Eigen::VectorXd> softmax_ce(const Eigen::VectorXd& logits,
                                              Eigen::Index target);

// KL(p||q) with p = softmax(student/tau), q = softmax(teacher/tau).
// Returns (loss, d/d student_logits, d/d teacher_logits).
struct KlResult {
  double loss;
  Eigen::VectorXd d_student;
  Eigen::VectorXd d_teacher;
};
KlResult kl_div(const Eigen::VectorXd& student_logits,
                const Eigen::VectorXd& teacher_logits, double temperature);

// N3: sum |w|^3 over the head/relation/tail rows used by the batch (at
// the view's effective weights); gradient 3|w|^2 sign(w).
std::pair<double, SparseGrad> n3_reg(const ModelView& view,
                                     std::span<const Triple> batch);

struct StudentLossResult {
  LossValue value;
  SparseGrad g_student; // w.r.t. the masked student view
  SparseGrad g_teacher; // partial through the KD term only
};

struct TeacherLossResult {
  LossValue value;
  SparseGrad g_teacher;
};

// Options controlling which gradients are produced (the meta HVP needs
// only the teacher partial).
struct StudentLossOpts {
  bool want_student_grad = true;
  bool want_teacher_grad = true;
};

// Mean over the batch of
//   alpha*CE(student) + (1-alpha)*KL(S||T) + rp_weight*CE_rel(student)
//   + n3_weight*N3(student rows).
// Teacher outputs are constants for the student gradient; g_teacher is the
// partial through the KD term.
StudentLossResult student_loss(std::span<const Triple> batch,
                               const ModelView& student,
                               const ModelView& teacher,
                               const LossConfig& config,
                               const StudentLossOpts& opts = {});

// Mean over the batch of
//   beta*CE(teacher) + (1-beta)*KL(S||T) (teacher side only)
//   + rp_weight*CE_rel(teacher) + n3_weight*N3(teacher rows).
TeacherLossResult teacher_loss(std::span<const Triple> batch,
                               const ModelView& student,
                               const ModelView& teacher,
                               const LossConfig& config);

// Plain mean CE of tail prediction under `view`; used for the quiz loss.
struct CeLossResult {
  double loss;
  SparseGrad grad;
};
CeLossResult ce_loss(std::span<const Triple> batch, const ModelView& view);

} // namespace metasd
