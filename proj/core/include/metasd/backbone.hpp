#pragma once
// Scoring and analytic backward passes for the bilinear backbones.  All
// entry points take a ModelView: base weights, optional prune mask
// (student view) and optional additive row delta (virtual / perturbed
// weights).  Effective weight = (base + delta_scale * delta) .* mask.

#include <Eigen/Core>
#include <span>
#include <vector>

#include "metasd/grad.hpp"
#include "metasd/params.hpp"
#include "metasd/pruner.hpp"
#include "metasd/types.hpp"

namespace metasd {

struct ModelView {
  const ParamStore* store = nullptr;
  const PruneMask* mask = nullptr;
  const SparseGrad* delta = nullptr;
  double delta_scale = 0.0;

  ModelView() = default;
  explicit ModelView(const ParamStore& s, const PruneMask* m = nullptr)
      : store(&s), mask(m) {}
};

// ---- single-query API -------------------------------------------------

double score_triple(const ModelView& view, const Triple& t);

// Component e = score of (head, rel, e); one matrix-vector product.
Eigen::VectorXd score_all_tails(const ModelView& view, EntityId head,
                                RelationId rel);

// Component r = score of (head, r, tail) over all 2R' relation rows.
Eigen::VectorXd score_all_relations(const ModelView& view, EntityId head,
                                    EntityId tail);

// d(dlogits . tail_logits)/d(params), restricted to touched rows; grads at
// masked positions are zeroed when the view carries a mask.
SparseGrad backward_tails(const ModelView& view, EntityId head,
                          RelationId rel, const Eigen::VectorXd& dlogits);

// ---- batched API (used by the trainer; one GEMM per stage) ------------

struct TailBatch {
  MatrixRM combined; // per-query combined head*rel factor, batch x k
  MatrixRM logits;   // batch x entity_count
};

TailBatch score_tails_batch(const ModelView& view,
                            std::span<const Triple> triples);

// Accumulates into `out`.  `dlogits` is batch x entity_count.
void backward_tails_batch(const ModelView& view,
                          std::span<const Triple> triples,
                          const TailBatch& fwd, const MatrixRM& dlogits,
                          SparseGrad& out);

struct RelBatch {
  MatrixRM combined; // per-query head*tail factor, batch x k
  MatrixRM logits;   // batch x 2R'
};

RelBatch score_relations_batch(const ModelView& view,
                               std::span<const Triple> triples);

void backward_relations_batch(const ModelView& view,
                              std::span<const Triple> triples,
                              const RelBatch& fwd, const MatrixRM& dlogits,
                              SparseGrad& out);

// Convenience overloads matching the (params, mask, ...) call shape.
inline double score_triple(const ParamStore& p, const PruneMask* m,
                           const Triple& t) {
  return score_triple(ModelView(p, m), t);
}
inline Eigen::VectorXd score_all_tails(const ParamStore& p,
                                       const PruneMask* m, EntityId h,
                                       RelationId r) {
  return score_all_tails(ModelView(p, m), h, r);
}
inline Eigen::VectorXd score_all_relations(const ParamStore& p,
                                           const PruneMask* m, EntityId h,
                                           EntityId t) {
  return score_all_relations(ModelView(p, m), h, t);
}
inline SparseGrad backward_tails(const ParamStore& p, const PruneMask* m,
                                 EntityId h, RelationId r,
                                 const Eigen::VectorXd& dl) {
  return backward_tails(ModelView(p, m), h, r, dl);
}

} // namespace metasd
