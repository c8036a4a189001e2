#pragma once
// Sparse Adagrad / SGD updates over touched gradient rows.

#include <vector>

#include "metasd/grad.hpp"
#include "metasd/params.hpp"
#include "metasd/pruner.hpp"

namespace metasd {

enum class OptimizerKind { Adagrad, Sgd };

// Squared-gradient accumulators, one tensor set per update path so the
// student and teacher streams keep separate statistics.
struct AdagradState {
  std::vector<MatrixRM> student_acc;
  std::vector<MatrixRM> teacher_acc;
  double epsilon = 1e-10;

  static AdagradState zeros(const ParamStore& shape);
};

enum class UpdatePath { Student, Teacher };

// For each touched entry: G += g^2; w -= lr * g / (sqrt(G) + eps).
// SGD mode: w -= lr * g, accumulators untouched.  Entries with mask bit 0
// are left unchanged.  Throws NumericError on non-finite gradients.
void apply_update(ParamStore& params, AdagradState& state, UpdatePath path,
                  OptimizerKind kind, const SparseGrad& grads, double lr,
                  const PruneMask* mask = nullptr);

} // namespace metasd
