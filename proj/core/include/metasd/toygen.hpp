#pragma once
// Synthetic knowledge-graph generator with planted relational structure,
// used by the desk-scale end-to-end experiments.  Entities belong to
// latent groups; each relation connects a fixed (source group, target
// group) pair, so a factorization model can recover the pattern.

#include <cstdint>
#include <filesystem>

#include "metasd/graph_store.hpp"

namespace metasd {

struct ToyKgSpec {
  std::size_t entities = 150;
  std::size_t relations = 40;
  std::size_t groups = 10;
  std::size_t train_triples = 5000;
  std::size_t valid_triples = 500;
  std::size_t test_triples = 500;
  double noise = 0.05; // fraction of uniformly random triples
  std::uint64_t seed = 7;
};

// Generates splits directly (ids already dense); vocab names are
// synthetic ("e<i>", "r<j>").
Dataset generate_toy_kg(const ToyKgSpec& spec);

// Writes train.txt/valid.txt/test.txt in the dataset directory layout.
void write_toy_kg(const Dataset& ds, const std::filesystem::path& dir);

} // namespace metasd
