#include "metasd/backbone.hpp"

#include <cmath>

namespace metasd {

// ---- SparseGrad --------------------------------------------------------

SparseGrad::SparseGrad(const ParamStore& shape) {
  bufs_.resize(shape.tensors.size());
  touched_.resize(shape.tensors.size());
  for (std::size_t t = 0; t < shape.tensors.size(); ++t) {
    bufs_[t].setZero(shape.tensors[t].data.rows(),
                     shape.tensors[t].data.cols());
    touched_[t].assign(shape.tensors[t].rows(), 0);
  }
}

void SparseGrad::add_row(std::size_t tensor, std::size_t row,
                         const Eigen::Ref<const Eigen::RowVectorXd>& g) {
  bufs_[tensor].row(row) += g;
  touched_[tensor][row] = 1;
}

void SparseGrad::add_matrix(std::size_t tensor,
                            const Eigen::Ref<const MatrixRM>& m) {
  bufs_[tensor] += m;
  std::fill(touched_[tensor].begin(), touched_[tensor].end(), 1);
}

void SparseGrad::scale(double s) {
  for (auto& b : bufs_)
    b *= s;
}

void SparseGrad::add_scaled(const SparseGrad& other, double s) {
  for (std::size_t t = 0; t < bufs_.size(); ++t) {
    const auto& ot = other.touched_[t];
    for (std::size_t r = 0; r < ot.size(); ++r) {
      if (ot[r]) {
        bufs_[t].row(r) += s * other.bufs_[t].row(r);
        touched_[t][r] = 1;
      }
    }
  }
}

void SparseGrad::apply_mask(const PruneMask& mask) {
  for (std::size_t t = 0; t < bufs_.size(); ++t) {
    for (std::size_t r = 0; r < touched_[t].size(); ++r)
      if (touched_[t][r])
        bufs_[t].row(r) =
            bufs_[t].row(r).cwiseProduct(mask.bits[t].row(r));
  }
}

double SparseGrad::squared_norm() const {
  double n = 0;
  for (std::size_t t = 0; t < bufs_.size(); ++t)
    for (std::size_t r = 0; r < touched_[t].size(); ++r)
      if (touched_[t][r])
        n += bufs_[t].row(r).squaredNorm();
  return n;
}

double SparseGrad::dot(const SparseGrad& other) const {
  double n = 0;
  for (std::size_t t = 0; t < bufs_.size(); ++t)
    for (std::size_t r = 0; r < touched_[t].size(); ++r)
      if (touched_[t][r] && other.touched_[t][r])
        n += bufs_[t].row(r).dot(other.bufs_[t].row(r));
  return n;
}

bool SparseGrad::all_finite() const {
  for (std::size_t t = 0; t < bufs_.size(); ++t)
    for (std::size_t r = 0; r < touched_[t].size(); ++r)
      if (touched_[t][r] && !bufs_[t].row(r).allFinite())
        return false;
  return true;
}

bool SparseGrad::empty() const {
  for (const auto& tv : touched_)
    for (auto f : tv)
      if (f)
        return false;
  return true;
}

// ---- views -------------------------------------------------------------

namespace {

// Effective weights of one tensor; copies only when the view modifies it.
struct Materialized {
  MatrixRM copy;
  const MatrixRM* base = nullptr; // set when no copy was needed
  const MatrixRM& get() const { return base ? *base : copy; }
};

Materialized materialize(const ModelView& v, std::size_t t) {
  Materialized m;
  const MatrixRM& base = v.store->tensors[t].data;
  const bool has_delta = v.delta != nullptr && v.delta_scale != 0.0;
  if (!v.mask && !has_delta) {
    m.base = &base;
    return m;
  }
  m.copy = base;
  if (has_delta) {
    const auto& touched = v.delta->touched_rows(t);
    for (std::size_t r = 0; r < touched.size(); ++r)
      if (touched[r])
        m.copy.row(r) += v.delta_scale * v.delta->buffer(t).row(r);
  }
  if (v.mask)
    m.copy = m.copy.cwiseProduct(v.mask->bits[t]);
  return m;
}

// Effective single row, as a dense copy.
Eigen::RowVectorXd view_row(const ModelView& v, std::size_t t,
                            std::size_t r) {
  Eigen::RowVectorXd row = v.store->tensors[t].data.row(r);
  if (v.delta != nullptr && v.delta_scale != 0.0 && v.delta->touched(t, r))
    row += v.delta_scale * v.delta->buffer(t).row(r);
  if (v.mask)
    row = row.cwiseProduct(v.mask->bits[t].row(r));
  return row;
}

void check_triple(const ParamStore& s, const Triple& t) {
  if (t.head >= s.entity_count || t.tail >= s.entity_count ||
      t.rel >= 2 * s.relation_count)
    throw std::out_of_range("triple id out of range");
}

// Combined head*rel factor c such that tail logits = c . tail_row.
Eigen::RowVectorXd combine_head_rel(const ParamStore& s,
                                    const Eigen::RowVectorXd& h,
                                    const Eigen::RowVectorXd& r) {
  const auto d = static_cast<Eigen::Index>(s.dim);
  switch (s.backbone) {
    case Backbone::ComplEx: {
      Eigen::RowVectorXd c(2 * d);
      c.head(d) = h.head(d).cwiseProduct(r.head(d)) -
                  h.tail(d).cwiseProduct(r.tail(d));
      c.tail(d) = h.head(d).cwiseProduct(r.tail(d)) +
                  h.tail(d).cwiseProduct(r.head(d));
      return c;
    }
    case Backbone::CP:
      return h.cwiseProduct(r);
    case Backbone::RESCAL: {
      Eigen::Map<const MatrixRM> W(r.data(), d, d);
      return h * W; // c_j = sum_i h_i W_ij
    }
  }
  throw std::logic_error("unreachable");
}

// Combined head*tail factor u such that relation logits = u . rel_row.
Eigen::RowVectorXd combine_head_tail(const ParamStore& s,
                                     const Eigen::RowVectorXd& h,
                                     const Eigen::RowVectorXd& t) {
  const auto d = static_cast<Eigen::Index>(s.dim);
  switch (s.backbone) {
    case Backbone::ComplEx: {
      Eigen::RowVectorXd u(2 * d);
      u.head(d) = h.head(d).cwiseProduct(t.head(d)) +
                  h.tail(d).cwiseProduct(t.tail(d));
      u.tail(d) = h.head(d).cwiseProduct(t.tail(d)) -
                  h.tail(d).cwiseProduct(t.head(d));
      return u;
    }
    case Backbone::CP:
      return h.cwiseProduct(t);
    case Backbone::RESCAL: {
      Eigen::RowVectorXd u(d * d);
      Eigen::Map<MatrixRM> U(u.data(), d, d);
      U = h.transpose() * t; // vec(h t^T), row-major
      return u;
    }
  }
  throw std::logic_error("unreachable");
}

} // namespace

// ---- forward -----------------------------------------------------------

TailBatch score_tails_batch(const ModelView& view,
                            std::span<const Triple> triples) {
  const ParamStore& s = *view.store;
  const std::size_t te = s.tail_entity_tensor();
  const std::size_t th = s.head_entity_tensor();
  const std::size_t tr = s.relation_tensor();

  TailBatch out;
  const auto k = s.tensors[te].data.cols();
  out.combined.resize(static_cast<Eigen::Index>(triples.size()), k);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    check_triple(s, triples[i]);
    out.combined.row(static_cast<Eigen::Index>(i)) = combine_head_rel(
        s, view_row(view, th, triples[i].head),
        view_row(view, tr, triples[i].rel));
  }
  Materialized tails = materialize(view, te);
  out.logits.noalias() = out.combined * tails.get().transpose();
  return out;
}

void backward_tails_batch(const ModelView& view,
                          std::span<const Triple> triples,
                          const TailBatch& fwd, const MatrixRM& dlogits,
                          SparseGrad& out) {
  const ParamStore& s = *view.store;
  if (dlogits.rows() != static_cast<Eigen::Index>(triples.size()) ||
      dlogits.cols() != static_cast<Eigen::Index>(s.entity_count))
    throw NumericError("dlogits shape mismatch");
  const std::size_t te = s.tail_entity_tensor();
  const std::size_t th = s.head_entity_tensor();
  const std::size_t tr = s.relation_tensor();
  const auto d = static_cast<Eigen::Index>(s.dim);

  // Tail-table gradient: rank-batch update.
  out.buffer(te).noalias() += dlogits.transpose() * fwd.combined;
  out.touch_all(te);

  // Gradient w.r.t. the combined factor.
  Materialized tails = materialize(view, te);
  MatrixRM dc = dlogits * tails.get();

  for (std::size_t i = 0; i < triples.size(); ++i) {
    const Triple& tp = triples[i];
    const Eigen::RowVectorXd h = view_row(view, th, tp.head);
    const Eigen::RowVectorXd r = view_row(view, tr, tp.rel);
    const Eigen::RowVectorXd cgrad = dc.row(static_cast<Eigen::Index>(i));
    switch (s.backbone) {
      case Backbone::ComplEx: {
        Eigen::RowVectorXd dh(2 * d), dr(2 * d);
        auto s_re = cgrad.head(d), s_im = cgrad.tail(d);
        dh.head(d) = r.head(d).cwiseProduct(s_re) +
                     r.tail(d).cwiseProduct(s_im);
        dh.tail(d) = -r.tail(d).cwiseProduct(s_re) +
                     r.head(d).cwiseProduct(s_im);
        dr.head(d) = h.head(d).cwiseProduct(s_re) +
                     h.tail(d).cwiseProduct(s_im);
        dr.tail(d) = -h.tail(d).cwiseProduct(s_re) +
                     h.head(d).cwiseProduct(s_im);
        out.add_row(th, tp.head, dh);
        out.add_row(tr, tp.rel, dr);
        break;
      }
      case Backbone::CP:
        out.add_row(th, tp.head, r.cwiseProduct(cgrad));
        out.add_row(tr, tp.rel, h.cwiseProduct(cgrad));
        break;
      case Backbone::RESCAL: {
        Eigen::Map<const MatrixRM> W(r.data(), d, d);
        out.add_row(th, tp.head, cgrad * W.transpose()); // dh = W c'
        Eigen::RowVectorXd dw(d * d);
        Eigen::Map<MatrixRM> dW(dw.data(), d, d);
        dW = h.transpose() * cgrad; // dW = h c'^T
        out.add_row(tr, tp.rel, dw);
        break;
      }
    }
  }
  if (view.mask)
    out.apply_mask(*view.mask);
}

RelBatch score_relations_batch(const ModelView& view,
                               std::span<const Triple> triples) {
  const ParamStore& s = *view.store;
  const std::size_t th = s.head_entity_tensor();
  const std::size_t te = s.tail_entity_tensor();
  const std::size_t tr = s.relation_tensor();

  RelBatch out;
  const auto k = s.tensors[tr].data.cols();
  out.combined.resize(static_cast<Eigen::Index>(triples.size()), k);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    check_triple(s, triples[i]);
    out.combined.row(static_cast<Eigen::Index>(i)) = combine_head_tail(
        s, view_row(view, th, triples[i].head),
        view_row(view, te, triples[i].tail));
  }
  Materialized rels = materialize(view, tr);
  out.logits.noalias() = out.combined * rels.get().transpose();
  return out;
}

void backward_relations_batch(const ModelView& view,
                              std::span<const Triple> triples,
                              const RelBatch& fwd, const MatrixRM& dlogits,
                              SparseGrad& out) {
  const ParamStore& s = *view.store;
  if (dlogits.rows() != static_cast<Eigen::Index>(triples.size()) ||
      dlogits.cols() != static_cast<Eigen::Index>(2 * s.relation_count))
    throw NumericError("relation dlogits shape mismatch");
  const std::size_t th = s.head_entity_tensor();
  const std::size_t te = s.tail_entity_tensor();
  const std::size_t tr = s.relation_tensor();
  const auto d = static_cast<Eigen::Index>(s.dim);

  out.buffer(tr).noalias() += dlogits.transpose() * fwd.combined;
  out.touch_all(tr);

  Materialized rels = materialize(view, tr);
  MatrixRM du = dlogits * rels.get();

  for (std::size_t i = 0; i < triples.size(); ++i) {
    const Triple& tp = triples[i];
    const Eigen::RowVectorXd h = view_row(view, th, tp.head);
    const Eigen::RowVectorXd t = view_row(view, te, tp.tail);
    const Eigen::RowVectorXd ugrad = du.row(static_cast<Eigen::Index>(i));
    switch (s.backbone) {
      case Backbone::ComplEx: {
        Eigen::RowVectorXd dh(2 * d), dt(2 * d);
        auto s_re = ugrad.head(d), s_im = ugrad.tail(d);
        dh.head(d) = t.head(d).cwiseProduct(s_re) +
                     t.tail(d).cwiseProduct(s_im);
        dh.tail(d) = t.tail(d).cwiseProduct(s_re) -
                     t.head(d).cwiseProduct(s_im);
        dt.head(d) = h.head(d).cwiseProduct(s_re) -
                     h.tail(d).cwiseProduct(s_im);
        dt.tail(d) = h.tail(d).cwiseProduct(s_re) +
                     h.head(d).cwiseProduct(s_im);
        out.add_row(th, tp.head, dh);
        out.add_row(te, tp.tail, dt);
        break;
      }
      case Backbone::CP:
        out.add_row(th, tp.head, t.cwiseProduct(ugrad));
        out.add_row(te, tp.tail, h.cwiseProduct(ugrad));
        break;
      case Backbone::RESCAL: {
        Eigen::Map<const MatrixRM> M(ugrad.data(), d, d);
        out.add_row(th, tp.head, t * M.transpose()); // dh_i = sum_j M_ij t_j
        out.add_row(te, tp.tail, h * M);             // dt_j = sum_i h_i M_ij
        break;
      }
    }
  }
  if (view.mask)
    out.apply_mask(*view.mask);
}

// ---- single-query wrappers ----------------------------------------------

double score_triple(const ModelView& view, const Triple& t) {
  check_triple(*view.store, t);
  const ParamStore& s = *view.store;
  Eigen::RowVectorXd c =
      combine_head_rel(s, view_row(view, s.head_entity_tensor(), t.head),
                       view_row(view, s.relation_tensor(), t.rel));
  return c.dot(view_row(view, s.tail_entity_tensor(), t.tail));
}

Eigen::VectorXd score_all_tails(const ModelView& view, EntityId head,
                                RelationId rel) {
  const ParamStore& s = *view.store;
  check_triple(s, {head, rel, 0});
  Eigen::RowVectorXd c =
      combine_head_rel(s, view_row(view, s.head_entity_tensor(), head),
                       view_row(view, s.relation_tensor(), rel));
  Materialized tails = materialize(view, s.tail_entity_tensor());
  return tails.get() * c.transpose();
}

Eigen::VectorXd score_all_relations(const ModelView& view, EntityId head,
                                    EntityId tail) {
  const ParamStore& s = *view.store;
  check_triple(s, {head, 0, tail});
  Eigen::RowVectorXd u =
      combine_head_tail(s, view_row(view, s.head_entity_tensor(), head),
                        view_row(view, s.tail_entity_tensor(), tail));
  Materialized rels = materialize(view, s.relation_tensor());
  return rels.get() * u.transpose();
}

SparseGrad backward_tails(const ModelView& view, EntityId head,
                          RelationId rel, const Eigen::VectorXd& dlogits) {
  const ParamStore& s = *view.store;
  const Triple t{head, rel, 0};
  std::span<const Triple> one(&t, 1);
  TailBatch fwd = score_tails_batch(view, one);
  SparseGrad g(s);
  MatrixRM dl(1, dlogits.size());
  dl.row(0) = dlogits.transpose();
  backward_tails_batch(view, one, fwd, dl, g);
  return g;
}

} // namespace metasd
