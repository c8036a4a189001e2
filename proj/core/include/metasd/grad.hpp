#pragma once
// Sparse per-row gradient carrier.  Buffers are dense per tensor but only
// touched rows participate in updates, norms and serialization.

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "metasd/params.hpp"

namespace metasd {

struct PruneMask;

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class SparseGrad {
 public:
  SparseGrad() = default;
  explicit SparseGrad(const ParamStore& shape);

  std::size_t tensor_count() const { return bufs_.size(); }

  // Accumulators; row ids must be in range.
  void add_row(std::size_t tensor, std::size_t row,
               const Eigen::Ref<const Eigen::RowVectorXd>& g);
  // G_t += m, marking every row touched.
  void add_matrix(std::size_t tensor, const Eigen::Ref<const MatrixRM>& m);
  void touch_all(std::size_t tensor) {
    std::fill(touched_[tensor].begin(), touched_[tensor].end(), 1);
  }

  bool touched(std::size_t tensor, std::size_t row) const {
    return touched_[tensor][row] != 0;
  }
  const MatrixRM& buffer(std::size_t tensor) const { return bufs_[tensor]; }
  MatrixRM& buffer(std::size_t tensor) { return bufs_[tensor]; }
  const std::vector<std::uint8_t>& touched_rows(std::size_t tensor) const {
    return touched_[tensor];
  }

  void scale(double s);
  // this += s * other; touched set becomes the union.
  void add_scaled(const SparseGrad& other, double s);
  // Zero entries where the mask bit is 0 (mask congruent with the store).
  void apply_mask(const PruneMask& mask);

  double squared_norm() const;
  double dot(const SparseGrad& other) const;
  bool all_finite() const;
  bool empty() const; // no touched rows

 private:
  std::vector<MatrixRM> bufs_;
  std::vector<std::vector<std::uint8_t>> touched_;
};

} // namespace metasd
