#include "metasd/toygen.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "metasd/rng.hpp"

namespace metasd {

namespace {

std::uint64_t key_of(const Triple& t) {
  return (std::uint64_t(t.head) << 40) | (std::uint64_t(t.rel) << 20) |
         t.tail;
}

} // namespace

Dataset generate_toy_kg(const ToyKgSpec& spec) {
  const std::size_t E = spec.entities;
  const std::size_t R = spec.relations;
  Rng rng(derive_seed(spec.seed, 'g'));

  // Each relation is a pair of cyclic translations (tail = head + offset
  // mod E), which every bilinear backbone here can represent; relation
  // draw frequencies follow a zipf-like profile so a long tail exists.
  std::vector<std::array<std::size_t, 2>> offsets(R);
  for (std::size_t r = 0; r < R; ++r) {
    offsets[r][0] = 1 + rng.uniform_below(E - 1);
    offsets[r][1] = 1 + rng.uniform_below(E - 1);
  }
  std::vector<double> cum(R);
  double acc = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    acc += 1.0 / std::pow(static_cast<double>(r + 1), 1.1);
    cum[r] = acc;
  }
  auto draw_relation = [&]() -> std::size_t {
    const double u = rng.uniform01() * acc;
    return static_cast<std::size_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  };

  const std::size_t want =
      spec.train_triples + spec.valid_triples + spec.test_triples;
  std::vector<Triple> pool;
  std::unordered_set<std::uint64_t> seen;
  std::size_t guard = 0;
  while (pool.size() < want && guard < want * 200) {
    ++guard;
    Triple t;
    if (rng.uniform01() < spec.noise) {
      t = {static_cast<EntityId>(rng.uniform_below(E)),
           static_cast<RelationId>(rng.uniform_below(R)),
           static_cast<EntityId>(rng.uniform_below(E))};
    } else {
      const std::size_t r = std::min(draw_relation(), R - 1);
      const std::size_t h = rng.uniform_below(E);
      const std::size_t o = offsets[r][rng.uniform_below(2)];
      t = {static_cast<EntityId>(h), static_cast<RelationId>(r),
           static_cast<EntityId>((h + o) % E)};
    }
    if (seen.insert(key_of(t)).second)
      pool.push_back(t);
  }
  if (pool.size() < want)
    throw ConfigError("toy generator could not produce enough unique "
                      "triples; enlarge entities/relations");

  rng.shuffle(pool);

  Dataset ds;
  for (std::size_t e = 0; e < E; ++e) {
    ds.vocab.entity_to_id.emplace("e" + std::to_string(e),
                                  static_cast<EntityId>(e));
    ds.vocab.entity_names.push_back("e" + std::to_string(e));
  }
  for (std::size_t r = 0; r < R; ++r) {
    ds.vocab.relation_to_id.emplace("r" + std::to_string(r),
                                    static_cast<RelationId>(r));
    ds.vocab.relation_names.push_back("r" + std::to_string(r));
  }
  auto it = pool.begin();
  ds.splits.train.assign(it, it + spec.train_triples);
  it += spec.train_triples;
  ds.splits.valid.assign(it, it + spec.valid_triples);
  it += spec.valid_triples;
  ds.splits.test.assign(it, it + spec.test_triples);
  return ds;
}

void write_toy_kg(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* file, const std::vector<Triple>& triples) {
    std::ofstream os(dir / file);
    if (!os)
      throw IoError("cannot write " + (dir / file).string());
    for (const Triple& t : triples)
      os << ds.vocab.entity_names[t.head] << '\t'
         << ds.vocab.relation_names[t.rel] << '\t'
         << ds.vocab.entity_names[t.tail] << '\n';
  };
  write("train.txt", ds.splits.train);
  write("valid.txt", ds.splits.valid);
  write("test.txt", ds.splits.test);
}

} // namespace metasd
