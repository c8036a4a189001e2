#pragma once
// Parameter storage shared by the ComplEx / CP / RESCAL backbones.  One
// store holds the teacher weights; the student is a masked view of it.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "metasd/types.hpp"

namespace metasd {

enum class Backbone { ComplEx, CP, RESCAL };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

// Row-major table of doubles.  Rows are the sparse-update granularity
// (one row per entity / relation).
struct Tensor {
  std::string name;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data;

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(data.cols()); }
  std::size_t size() const { return rows() * cols(); }
};

// Tensor layout per backbone (R' = original relation count, rows >= R'
// are reciprocal relations):
//   ComplEx: entity  E x 2d (real half | imaginary half), relation 2R' x 2d
//   CP:      entity_head E x d, entity_tail E x d, relation 2R' x d
//   RESCAL:  entity  E x d, relation 2R' x d*d (row-major d x d blocks)
struct ParamStore {
  Backbone backbone = Backbone::ComplEx;
  std::size_t dim = 0;            // rank d
  std::size_t entity_count = 0;
  std::size_t relation_count = 0; // original R'
  std::vector<Tensor> tensors;

  std::size_t param_count() const;
  std::size_t tensor_count() const { return tensors.size(); }

  // Index of the tensor holding tail-role entity rows / relation rows.
  std::size_t tail_entity_tensor() const;
  std::size_t head_entity_tensor() const { return 0; }
  std::size_t relation_tensor() const { return tensors.size() - 1; }

  bool all_finite() const;
};

// i.i.d. uniform [-init_scale, init_scale], deterministic under seed.
ParamStore init_params(Backbone backbone, std::size_t dim, const Vocab& vocab,
                       std::uint64_t seed, double init_scale);
ParamStore init_params(Backbone backbone, std::size_t dim,
                       std::size_t entity_count, std::size_t relation_count,
                       std::uint64_t seed, double init_scale);

} // namespace metasd
