#include <doctest.h>

#include <complex>

#include "metasd/backbone.hpp"
#include "metasd/pruner.hpp"
#include "test_util.hpp"

using namespace metasd;
using namespace testutil;

namespace {

const Backbone kBackbones[] = {Backbone::ComplEx, Backbone::CP,
                               Backbone::RESCAL};

ParamStore tiny_store(Backbone b, std::uint64_t seed, std::size_t d = 4,
                      std::size_t E = 5, std::size_t R = 2,
                      double scale = 0.7) {
  return init_params(b, d, E, R, seed, scale);
}

} // namespace

TEST_CASE("all-zero parameters score zero") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 1, 4, 5, 2, 0.0);
    CHECK(score_triple(p, nullptr, {0, 0, 1}) == 0.0);
    CHECK(score_triple(p, nullptr, {4, 3, 2}) == 0.0);
  }
}

TEST_CASE("ComplEx identity case d=1") {
  ParamStore p = init_params(Backbone::ComplEx, 1, 2, 1, 0, 0.0);
  // h = r = t = 1 + 0i.
  p.tensors[0].data.row(0) << 1.0, 0.0;
  p.tensors[0].data.row(1) << 1.0, 0.0;
  p.tensors[1].data.row(0) << 1.0, 0.0;
  CHECK(score_triple(p, nullptr, {0, 0, 1}) == doctest::Approx(1.0));
}

TEST_CASE("ComplEx matches a complex-arithmetic expansion") {
  ParamStore p = tiny_store(Backbone::ComplEx, 42);
  const std::size_t d = p.dim;
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    Triple t{static_cast<EntityId>(rng.uniform_below(5)),
             static_cast<RelationId>(rng.uniform_below(4)),
             static_cast<EntityId>(rng.uniform_below(5))};
    std::complex<double> s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      std::complex<double> h(p.tensors[0].data(t.head, k),
                             p.tensors[0].data(t.head, d + k));
      std::complex<double> r(p.tensors[1].data(t.rel, k),
                             p.tensors[1].data(t.rel, d + k));
      std::complex<double> e(p.tensors[0].data(t.tail, k),
                             p.tensors[0].data(t.tail, d + k));
      s += h * r * std::conj(e);
    }
    CHECK(score_triple(p, nullptr, t) == doctest::Approx(s.real()));
  }
}

TEST_CASE("score_all_tails equals the per-entity loop") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 3);
    for (RelationId r = 0; r < 4; ++r) {
      Eigen::VectorXd v = score_all_tails(p, nullptr, 2, r);
      REQUIRE(v.size() == 5);
      for (EntityId e = 0; e < 5; ++e)
        CHECK(v[e] == doctest::Approx(score_triple(p, nullptr, {2, r, e}))
                          .epsilon(1e-12));
    }
  }
}

TEST_CASE("score_all_tails degenerate single entity") {
  ParamStore p = init_params(Backbone::CP, 3, 1, 1, 2, 0.5);
  Eigen::VectorXd v = score_all_tails(p, nullptr, 0, 1);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == doctest::Approx(score_triple(p, nullptr, {0, 1, 0})));
}

TEST_CASE("mask changes scores when it hits participating weights") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 4);
    PruneMask m = compute_mask(p, 0.5);
    Eigen::VectorXd full = score_all_tails(p, nullptr, 0, 0);
    Eigen::VectorXd masked = score_all_tails(p, &m, 0, 0);
    CHECK(full != masked);

    // The masked score equals scoring a store with pruned weights zeroed.
    ParamStore zeroed = p;
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
      zeroed.tensors[t].data = p.tensors[t].data.cwiseProduct(m.bits[t]);
    Eigen::VectorXd direct = score_all_tails(zeroed, nullptr, 0, 0);
    CHECK(masked.isApprox(direct, 1e-14));
  }
}

TEST_CASE("score_all_relations equals the per-relation loop") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 6);
    Eigen::VectorXd v = score_all_relations(p, nullptr, 1, 3);
    REQUIRE(v.size() == 4); // 2R'
    for (RelationId r = 0; r < 4; ++r)
      CHECK(v[r] == doctest::Approx(score_triple(p, nullptr, {1, r, 3}))
                        .epsilon(1e-12));
  }
}

TEST_CASE("score_all_relations zero relation table") {
  ParamStore p = tiny_store(Backbone::RESCAL, 4);
  p.tensors[p.relation_tensor()].data.setZero();
  Eigen::VectorXd v = score_all_relations(p, nullptr, 0, 1);
  CHECK(v.isZero(0.0));
}

TEST_CASE("backward_tails zero cotangent gives zero gradient") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 5);
    Eigen::VectorXd dl = Eigen::VectorXd::Zero(5);
    SparseGrad g = backward_tails(p, nullptr, 0, 1, dl);
    CHECK(g.squared_norm() == 0.0);
  }
}

TEST_CASE("backward_tails matches finite differences") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 17);
    Rng rng(4);
    Eigen::VectorXd dl(5);
    for (int i = 0; i < 5; ++i)
      dl[i] = rng.uniform_sym(1.0);
    const EntityId h = 1;
    const RelationId r = 2;
    SparseGrad g = backward_tails(p, nullptr, h, r, dl);
    auto f = [&] { return dl.dot(score_all_tails(p, nullptr, h, r)); };
    CHECK(max_grad_rel_err(p, g, f) < 1e-6);
  }
}

TEST_CASE("backward_tails respects the mask exactly") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 23);
    PruneMask m = compute_mask(p, 0.5);
    Eigen::VectorXd dl = Eigen::VectorXd::Ones(5);
    SparseGrad g = backward_tails(p, &m, 0, 1, dl);
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
      const auto& buf = g.buffer(t);
      for (Eigen::Index i = 0; i < buf.rows(); ++i)
        for (Eigen::Index j = 0; j < buf.cols(); ++j)
          if (m.bits[t](i, j) == 0.0)
            CHECK(buf(i, j) == 0.0);
    }
    // And the masked gradient matches finite differences of the masked
    // score (moves of pruned weights never reach the output).
    auto f = [&] { return score_all_tails(p, &m, 0, 1).sum(); };
    CHECK(max_grad_rel_err(p, g, f) < 1e-6);
  }
}

TEST_CASE("batched tails API agrees with single queries") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 31);
    PruneMask m = compute_mask(p, 0.3);
    ModelView view(p, &m);
    Rng rng(9);
    auto batch = random_triples(rng, 12, 5, 4);

    TailBatch fwd = score_tails_batch(view, batch);
    REQUIRE(fwd.logits.rows() == 12);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Eigen::VectorXd single =
          score_all_tails(view, batch[i].head, batch[i].rel);
      CHECK(fwd.logits.row(i).transpose().isApprox(single, 1e-12));
    }

    MatrixRM dl(12, 5);
    for (Eigen::Index i = 0; i < dl.size(); ++i)
      dl(i / 5, i % 5) = rng.uniform_sym(1.0);
    SparseGrad batched(p);
    backward_tails_batch(view, batch, fwd, dl, batched);

    SparseGrad looped(p);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      SparseGrad one = backward_tails(view, batch[i].head, batch[i].rel,
                                      dl.row(i).transpose());
      looped.add_scaled(one, 1.0);
    }
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
      CHECK(batched.buffer(t).isApprox(looped.buffer(t), 1e-12));
  }
}

TEST_CASE("batched relations API agrees with single queries") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 37);
    ModelView view(p);
    Rng rng(10);
    auto batch = random_triples(rng, 8, 5, 4);

    RelBatch fwd = score_relations_batch(view, batch);
    REQUIRE(fwd.logits.rows() == 8);
    REQUIRE(fwd.logits.cols() == 4);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Eigen::VectorXd single =
          score_all_relations(view, batch[i].head, batch[i].tail);
      CHECK(fwd.logits.row(i).transpose().isApprox(single, 1e-12));
    }

    MatrixRM dl(8, 4);
    for (Eigen::Index i = 0; i < dl.size(); ++i)
      dl(i / 4, i % 4) = rng.uniform_sym(1.0);
    SparseGrad g(p);
    backward_relations_batch(view, batch, fwd, dl, g);

    ParamStore& mut = p;
    auto f = [&] {
      double s = 0.0;
      RelBatch fb = score_relations_batch(ModelView(mut), batch);
      for (Eigen::Index i = 0; i < fb.logits.rows(); ++i)
        s += dl.row(i).dot(fb.logits.row(i));
      return s;
    };
    CHECK(max_grad_rel_err(p, g, f) < 1e-6);
  }
}

TEST_CASE("delta overlay shifts the scored weights") {
  for (Backbone b : kBackbones) {
    ParamStore p = tiny_store(b, 41);
    SparseGrad delta(p);
    Rng rng(12);
    for (std::size_t t = 0; t < p.tensors.size(); ++t) {
      MatrixRM d(p.tensors[t].data.rows(), p.tensors[t].data.cols());
      for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = 0; j < d.cols(); ++j)
          d(i, j) = rng.uniform_sym(0.1);
      delta.add_matrix(t, d);
    }
    ModelView view(p);
    view.delta = &delta;
    view.delta_scale = 0.5;

    ParamStore shifted = p;
    for (std::size_t t = 0; t < p.tensors.size(); ++t)
      shifted.tensors[t].data += 0.5 * delta.buffer(t);

    Eigen::VectorXd a = score_all_tails(view, 1, 2);
    Eigen::VectorXd c = score_all_tails(shifted, nullptr, 1, 2);
    CHECK(a.isApprox(c, 1e-12));
  }
}

TEST_CASE("out-of-range triples are rejected") {
  ParamStore p = tiny_store(Backbone::ComplEx, 2);
  CHECK_THROWS_AS(score_triple(p, nullptr, {5, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS(score_triple(p, nullptr, {0, 4, 0}), std::out_of_range);
  CHECK_THROWS_AS(score_triple(p, nullptr, {0, 0, 7}), std::out_of_range);
}

TEST_CASE("init_params determinism and scale") {
  for (Backbone b : kBackbones) {
    ParamStore a = tiny_store(b, 99);
    ParamStore c = tiny_store(b, 99);
    CHECK(stores_equal(a, c));
    ParamStore d = tiny_store(b, 100);
    CHECK_FALSE(stores_equal(a, d));

    ParamStore z = init_params(b, 4, 5, 2, 1, 0.0);
    CHECK(z.param_count() > 0);
    for (const auto& t : z.tensors)
      CHECK(t.data.isZero(0.0));
  }
}

TEST_CASE("parameter count formula at paper scale") {
  // ComplEx entity table E x 2d plus relation table 2R' x 2d.
  const std::size_t E = 14541, R = 237, d = 2000;
  const std::size_t total = E * 2 * d + 2 * R * 2 * d;
  CHECK(total == 60060000u); // the "60M" full model
  ParamStore small = init_params(Backbone::ComplEx, 4, 5, 2, 1, 0.1);
  CHECK(small.param_count() == 5 * 8 + 4 * 8);
}
