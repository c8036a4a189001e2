#include "metasd/optimizer.hpp"

namespace metasd {

AdagradState AdagradState::zeros(const ParamStore& shape) {
  AdagradState st;
  for (const Tensor& t : shape.tensors) {
    st.student_acc.push_back(MatrixRM::Zero(t.data.rows(), t.data.cols()));
    st.teacher_acc.push_back(MatrixRM::Zero(t.data.rows(), t.data.cols()));
  }
  return st;
}

void apply_update(ParamStore& params, AdagradState& state, UpdatePath path,
                  OptimizerKind kind, const SparseGrad& grads, double lr,
                  const PruneMask* mask) {
  if (!grads.all_finite())
    throw NumericError("non-finite gradient in optimizer step");
  auto& acc = path == UpdatePath::Student ? state.student_acc
                                          : state.teacher_acc;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& w = params.tensors[t].data;
    const auto& touched = grads.touched_rows(t);
    for (std::size_t r = 0; r < touched.size(); ++r) {
      if (!touched[r])
        continue;
      Eigen::RowVectorXd g = grads.buffer(t).row(r);
      if (mask)
        g = g.cwiseProduct(mask->bits[t].row(r));
      if (kind == OptimizerKind::Adagrad) {
        acc[t].row(r) += g.cwiseProduct(g);
        w.row(r) -= lr * g.cwiseQuotient(
                             (acc[t].row(r).cwiseSqrt().array() +
                              state.epsilon)
                                 .matrix());
      } else {
        w.row(r) -= lr * g;
      }
    }
  }
}

} // namespace metasd
