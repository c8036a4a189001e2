#pragma once
// Triple ingestion, vocabularies, reciprocal augmentation, filter indexes,
// quiz sampling, long-tail selection and deterministic batching.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metasd/types.hpp"

namespace metasd {

// Reads one tab-separated triple per line.  In strict mode unseen names
// raise VocabError; otherwise the vocab is extended in first-appearance
// order (deterministic across platforms).
std::vector<Triple> load_triples(const std::filesystem::path& path,
                                 Vocab& vocab, bool strict = false);

// Appends (t, r + relation_count, h) for every (h, r, t); originals keep
// their order, inverses follow in the same order.
std::vector<Triple> augment_reciprocal(const std::vector<Triple>& triples,
                                       std::size_t relation_count);

// answers[(h,r)] = { t : (h,r,t) in train ∪ valid ∪ test }.  Inputs are
// expected reciprocal-augmented so head queries are covered too.
FilterIndex build_filter_index(const SplitData& splits);

// Draws `size` distinct triples uniformly without replacement.  When
// overlap=false the drawn triples are removed from the returned train
// stream.  Identical (seed, size) gives an identical quiz set.
SplitData sample_quiz(const std::vector<Triple>& train, std::size_t size,
                      std::uint64_t seed, bool overlap);

// Relations with fewer than `threshold` instances in the (pre-reciprocal)
// train split.
std::set<RelationId> long_tail_relations(const std::vector<Triple>& train,
                                         std::size_t threshold);

// (seed, epoch)-keyed permutation of `triples`, chunked into batches of
// batch_size (last may be short).
std::vector<std::vector<Triple>> batches(const std::vector<Triple>& triples,
                                         std::size_t batch_size,
                                         std::uint64_t seed,
                                         std::uint64_t epoch);

// A dataset directory: train.txt / valid.txt / test.txt, pre-augmentation.
struct Dataset {
  Vocab vocab;
  SplitData splits;              // original (non-augmented) triples
  std::size_t duplicates_dropped = 0;

  std::size_t relation_count() const { return vocab.relation_count(); }
  std::size_t entity_count() const { return vocab.entity_count(); }
};

// Loads the three split files, deduplicating within each split.
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace metasd
