#include <doctest.h>

#include <set>

#include "metasd/graph_store.hpp"
#include "metasd/toygen.hpp"
#include "test_util.hpp"

using namespace metasd;
using namespace testutil;

TEST_CASE("toy generator is deterministic and sized as requested") {
  ToyKgSpec spec;
  Dataset a = generate_toy_kg(spec);
  Dataset b = generate_toy_kg(spec);
  CHECK(a.splits.train == b.splits.train);
  CHECK(a.splits.valid == b.splits.valid);
  CHECK(a.splits.test == b.splits.test);

  CHECK(a.splits.train.size() == spec.train_triples);
  CHECK(a.splits.valid.size() == spec.valid_triples);
  CHECK(a.splits.test.size() == spec.test_triples);
  CHECK(a.entity_count() == spec.entities);
  CHECK(a.relation_count() == spec.relations);

  spec.seed = 8;
  Dataset c = generate_toy_kg(spec);
  CHECK(a.splits.train != c.splits.train);
}

TEST_CASE("toy splits are disjoint and ids are in range") {
  ToyKgSpec spec;
  spec.train_triples = 800;
  spec.valid_triples = 100;
  spec.test_triples = 100;
  Dataset ds = generate_toy_kg(spec);

  std::set<Triple> seen;
  for (const auto* split :
       {&ds.splits.train, &ds.splits.valid, &ds.splits.test})
    for (const Triple& t : *split) {
      CHECK(t.head < spec.entities);
      CHECK(t.tail < spec.entities);
      CHECK(t.rel < spec.relations);
      CHECK(seen.insert(t).second); // no duplicates anywhere
    }
}

TEST_CASE("relation frequencies have a long tail") {
  ToyKgSpec spec;
  Dataset ds = generate_toy_kg(spec);
  auto tail = long_tail_relations(ds.splits.train,
                                  ds.splits.train.size() / spec.relations);
  CHECK(!tail.empty());
  CHECK(tail.size() < spec.relations);
}

TEST_CASE("write_toy_kg round-trips through load_dataset") {
  ToyKgSpec spec;
  spec.entities = 30;
  spec.relations = 6;
  spec.groups = 3;
  spec.train_triples = 300;
  spec.valid_triples = 40;
  spec.test_triples = 40;
  Dataset ds = generate_toy_kg(spec);

  TempDir dir;
  write_toy_kg(ds, dir.path());
  Dataset back = load_dataset(dir.path());
  CHECK(back.entity_count() == ds.entity_count());
  CHECK(back.relation_count() == ds.relation_count());
  CHECK(back.splits.train.size() == ds.splits.train.size());

  // Interned ids may be permuted by appearance order; compare by name.
  auto names = [&](const Dataset& d, const Triple& t) {
    return d.vocab.entity_names[t.head] + "|" +
           d.vocab.relation_names[t.rel] + "|" + d.vocab.entity_names[t.tail];
  };
  std::multiset<std::string> x, y;
  for (const Triple& t : ds.splits.train)
    x.insert(names(ds, t));
  for (const Triple& t : back.splits.train)
    y.insert(names(back, t));
  CHECK(x == y);
}

TEST_CASE("impossible spec is rejected") {
  ToyKgSpec spec;
  spec.entities = 4;
  spec.relations = 2;
  spec.groups = 2;
  spec.train_triples = 100000;
  CHECK_THROWS_AS(generate_toy_kg(spec), ConfigError);
}
