#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "metasd/backbone.hpp"
#include "metasd/pruner.hpp"
#include "test_util.hpp"

using namespace metasd;
using namespace testutil;

namespace {

ParamStore five_weight_store() {
  ParamStore p;
  p.backbone = Backbone::CP;
  p.dim = 5;
  p.entity_count = 1;
  p.relation_count = 0;
  Tensor t;
  t.name = "w";
  t.data.resize(1, 5);
  t.data << 0.5, -0.1, 0.3, -0.7, 0.2;
  p.tensors.push_back(std::move(t));
  return p;
}

} // namespace

TEST_CASE("gamma=0 keeps everything") {
  ParamStore p = init_params(Backbone::ComplEx, 4, 6, 2, 1, 0.5);
  PruneMask m = compute_mask(p, 0.0);
  CHECK(m.zero_count() == 0);
  CHECK(m.total_count() == p.param_count());
  for (const auto& bits : m.bits)
    CHECK(bits.isOnes(0.0));
}

TEST_CASE("hand-sorted magnitude case") {
  ParamStore p = five_weight_store();
  PruneMask m = compute_mask(p, 0.4); // k = floor(0.4 * 5) = 2
  CHECK(m.zero_count() == 2);
  Eigen::RowVectorXd expect(5);
  expect << 1, 0, 1, 1, 0;
  CHECK(m.bits[0].row(0) == expect);
}

TEST_CASE("zero count is exactly floor(gamma * P)") {
  for (Backbone b : {Backbone::ComplEx, Backbone::CP, Backbone::RESCAL}) {
    ParamStore p = init_params(b, 5, 7, 3, 17, 0.8);
    const double P = static_cast<double>(p.param_count());
    for (double gamma : {0.0, 0.3, 0.9, 0.123}) {
      PruneMask m = compute_mask(p, gamma);
      CHECK(m.zero_count() ==
            static_cast<std::size_t>(std::floor(gamma * P)));
    }
  }
}

TEST_CASE("magnitude dominance up to ties") {
  ParamStore p = init_params(Backbone::ComplEx, 6, 8, 3, 23, 0.9);
  PruneMask m = compute_mask(p, 0.6);
  double max_pruned = 0.0;
  double min_kept = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    const auto& w = p.tensors[t].data;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        if (m.bits[t](i, j) == 0.0)
          max_pruned = std::max(max_pruned, std::abs(w(i, j)));
        else
          min_kept = std::min(min_kept, std::abs(w(i, j)));
      }
  }
  CHECK(max_pruned <= min_kept);
}

TEST_CASE("mask recomputation is idempotent on unchanged weights") {
  ParamStore p = init_params(Backbone::CP, 4, 9, 2, 5, 0.7);
  PruneMask a = compute_mask(p, 0.9);
  PruneMask b = compute_mask(p, 0.9);
  CHECK(a == b);
}

TEST_CASE("tie-breaking is deterministic by flat index") {
  ParamStore p = five_weight_store();
  p.tensors[0].data << 0.2, 0.2, 0.2, 0.2, 0.2;
  PruneMask m = compute_mask(p, 0.4);
  Eigen::RowVectorXd expect(5);
  expect << 0, 0, 1, 1, 1; // earliest flat indices pruned first
  CHECK(m.bits[0].row(0) == expect);
}

TEST_CASE("per-tensor scope prunes each tensor at the rate") {
  ParamStore p = init_params(Backbone::ComplEx, 5, 11, 3, 29, 0.8);
  PruneMask m = compute_mask(p, 0.9, MaskScope::PerTensor);
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    const auto& bits = m.bits[t];
    const auto total = static_cast<std::size_t>(bits.size());
    const auto zeros =
        total - static_cast<std::size_t>(bits.sum());
    CHECK(zeros == static_cast<std::size_t>(std::floor(0.9 * total)));
  }
}

TEST_CASE("invalid gamma is rejected") {
  ParamStore p = five_weight_store();
  CHECK_THROWS_AS(compute_mask(p, 1.0), ConfigError);
  CHECK_THROWS_AS(compute_mask(p, -0.1), ConfigError);
}

TEST_CASE("full_mask and congruence") {
  ParamStore p = init_params(Backbone::RESCAL, 3, 4, 2, 3, 0.5);
  PruneMask m = full_mask(p);
  CHECK(m.zero_count() == 0);
  CHECK(m.congruent_with(p));
  ParamStore other = init_params(Backbone::RESCAL, 4, 4, 2, 3, 0.5);
  CHECK_FALSE(m.congruent_with(other));
}

TEST_CASE("random_mask has the same cardinality and is seeded") {
  ParamStore p = init_params(Backbone::ComplEx, 5, 9, 3, 37, 0.8);
  PruneMask ref = compute_mask(p, 0.9);
  PruneMask a = random_mask(p, 0.9, 123);
  PruneMask b = random_mask(p, 0.9, 123);
  PruneMask c = random_mask(p, 0.9, 124);
  CHECK(a.zero_count() == ref.zero_count());
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK_FALSE(a == ref); // vanishingly unlikely to coincide
}

TEST_CASE("refresh policy") {
  CHECK(refresh_due(0, RefreshMode::Epoch));
  CHECK_FALSE(refresh_due(1, RefreshMode::Epoch));
  CHECK_FALSE(refresh_due(57, RefreshMode::Epoch));
  CHECK(refresh_due(0, RefreshMode::Step));
  CHECK(refresh_due(57, RefreshMode::Step));
}

TEST_CASE("sparsity accounting") {
  ParamStore p = init_params(Backbone::CP, 6, 10, 3, 41, 0.8);
  SUBCASE("all-ones mask") {
    SparsityStats s = sparsity_stats(p, full_mask(p));
    CHECK(s.sparsity() == 0.0);
    CHECK(s.effective_params() == p.param_count());
  }
  SUBCASE("gamma=0.9") {
    SparsityStats s = sparsity_stats(p, compute_mask(p, 0.9));
    CHECK(s.total == p.param_count());
    CHECK(std::abs(static_cast<double>(s.zeros) - 0.9 * s.total) <= 1.0);
    CHECK(s.per_tensor.size() == p.tensors.size());
    std::size_t z = 0, tot = 0;
    for (const auto& [name, zt] : s.per_tensor) {
      z += zt.first;
      tot += zt.second;
    }
    CHECK(z == s.zeros);
    CHECK(tot == s.total);
  }
}

TEST_CASE("sparse export round trip") {
  ParamStore p = init_params(Backbone::ComplEx, 4, 8, 3, 53, 0.8);
  PruneMask m = compute_mask(p, 0.9);
  TempDir dir;
  const auto path = dir.file("student.msds");
  export_sparse(p, m, path, 0xdeadbeefULL);

  std::uint64_t digest = 0;
  ParamStore back = load_sparse(path, &digest);
  CHECK(digest == 0xdeadbeefULL);
  CHECK(back.backbone == p.backbone);
  CHECK(back.dim == p.dim);
  CHECK(back.entity_count == p.entity_count);
  CHECK(back.relation_count == p.relation_count);

  // Pruned entries come back exactly zero, survivors at f32 precision.
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    const auto& orig = p.tensors[t].data;
    const auto& got = back.tensors[t].data;
    for (Eigen::Index i = 0; i < orig.rows(); ++i)
      for (Eigen::Index j = 0; j < orig.cols(); ++j) {
        if (m.bits[t](i, j) == 0.0)
          CHECK(got(i, j) == 0.0);
        else
          CHECK(got(i, j) ==
                static_cast<double>(static_cast<float>(orig(i, j))));
      }
  }

  // Scores from the reloaded store match the masked view at f32 precision.
  Eigen::VectorXd masked = score_all_tails(p, &m, 0, 1);
  Eigen::VectorXd reloaded = score_all_tails(back, nullptr, 0, 1);
  CHECK((masked - reloaded).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("sparse export stores only surviving entries") {
  ParamStore p = init_params(Backbone::CP, 2, 2, 1, 9, 0.5);
  PruneMask m = compute_mask(p, 0.5);
  TempDir dir;
  export_sparse(p, m, dir.file("s.msds"));
  ParamStore back = load_sparse(dir.file("s.msds"));
  std::size_t nnz = 0;
  for (const auto& t : back.tensors)
    nnz += static_cast<std::size_t>((t.data.array() != 0.0).count());
  CHECK(nnz == p.param_count() - m.zero_count());
}

TEST_CASE("sparse load rejects truncated and foreign files") {
  ParamStore p = init_params(Backbone::CP, 3, 5, 2, 7, 0.5);
  PruneMask m = compute_mask(p, 0.5);
  TempDir dir;
  const auto path = dir.file("s.msds");
  export_sparse(p, m, path);

  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_sparse(path), IoError);

  write_file(dir.file("junk.bin"), "not a model");
  CHECK_THROWS_AS(load_sparse(dir.file("junk.bin")), IoError);
}
