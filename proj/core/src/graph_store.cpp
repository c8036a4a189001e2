#include "metasd/graph_store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_set>

#include "metasd/rng.hpp"

namespace metasd {

EntityId Vocab::entity_id(const std::string& name) const {
  auto it = entity_to_id.find(name);
  if (it == entity_to_id.end())
    throw VocabError("unknown entity: " + name);
  return it->second;
}

RelationId Vocab::relation_id(const std::string& name) const {
  auto it = relation_to_id.find(name);
  if (it == relation_to_id.end())
    throw VocabError("unknown relation: " + name);
  return it->second;
}

namespace {

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    return mix64((std::uint64_t(t.head) << 40) ^ (std::uint64_t(t.rel) << 20) ^
                 t.tail);
  }
};

} // namespace

std::vector<Triple> load_triples(const std::filesystem::path& path,
                                 Vocab& vocab, bool strict) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open triple file: " + path.string());

  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    auto tab1 = line.find('\t');
    auto tab2 = tab1 == std::string::npos ? std::string::npos
                                          : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos ||
        line.find('\t', tab2 + 1) != std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected 3 tab-separated fields");
    }
    std::string h = line.substr(0, tab1);
    std::string r = line.substr(tab1 + 1, tab2 - tab1 - 1);
    std::string t = line.substr(tab2 + 1);

    auto intern_entity = [&](const std::string& name) -> EntityId {
      auto it = vocab.entity_to_id.find(name);
      if (it != vocab.entity_to_id.end())
        return it->second;
      if (strict)
        throw VocabError(path.string() + ":" + std::to_string(lineno) +
                         ": unseen entity '" + name + "' in strict mode");
      EntityId id = static_cast<EntityId>(vocab.entity_names.size());
      vocab.entity_to_id.emplace(name, id);
      vocab.entity_names.push_back(name);
      return id;
    };
    auto intern_relation = [&](const std::string& name) -> RelationId {
      auto it = vocab.relation_to_id.find(name);
      if (it != vocab.relation_to_id.end())
        return it->second;
      if (strict)
        throw VocabError(path.string() + ":" + std::to_string(lineno) +
                         ": unseen relation '" + name + "' in strict mode");
      RelationId id = static_cast<RelationId>(vocab.relation_names.size());
      vocab.relation_to_id.emplace(name, id);
      vocab.relation_names.push_back(name);
      return id;
    };

    out.push_back({intern_entity(h), intern_relation(r), intern_entity(t)});
  }
  return out;
}

std::vector<Triple> augment_reciprocal(const std::vector<Triple>& triples,
                                       std::size_t relation_count) {
  std::vector<Triple> out;
  out.reserve(triples.size() * 2);
  out = triples;
  for (const Triple& t : triples) {
    out.push_back({t.tail,
                   static_cast<RelationId>(t.rel + relation_count), t.head});
  }
  return out;
}

FilterIndex build_filter_index(const SplitData& splits) {
  FilterIndex idx;
  for (const auto* split : {&splits.train, &splits.valid, &splits.test}) {
    for (const Triple& t : *split)
      idx.answers[{t.head, t.rel}].insert(t.tail);
  }
  return idx;
}

SplitData sample_quiz(const std::vector<Triple>& train, std::size_t size,
                      std::uint64_t seed, bool overlap) {
  if (size > train.size())
    throw ConfigError("quiz size " + std::to_string(size) +
                      " exceeds train size " + std::to_string(train.size()));
  // Partial Fisher-Yates over an index permutation: first `size` slots.
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  Rng rng(derive_seed(seed, 'q', size));
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t j = i + rng.uniform_below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }

  SplitData out;
  out.quiz.reserve(size);
  std::vector<bool> taken(train.size(), false);
  for (std::size_t i = 0; i < size; ++i) {
    out.quiz.push_back(train[idx[i]]);
    taken[idx[i]] = true;
  }
  if (overlap) {
    out.train = train;
  } else {
    out.train.reserve(train.size() - size);
    for (std::size_t i = 0; i < train.size(); ++i)
      if (!taken[i])
        out.train.push_back(train[i]);
  }
  return out;
}

std::set<RelationId> long_tail_relations(const std::vector<Triple>& train,
                                         std::size_t threshold) {
  std::map<RelationId, std::size_t> counts;
  for (const Triple& t : train)
    ++counts[t.rel];
  std::set<RelationId> out;
  for (const auto& [rel, n] : counts)
    if (n < threshold)
      out.insert(rel);
  return out;
}

std::vector<std::vector<Triple>> batches(const std::vector<Triple>& triples,
                                         std::size_t batch_size,
                                         std::uint64_t seed,
                                         std::uint64_t epoch) {
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  std::vector<Triple> perm = triples;
  Rng rng(derive_seed(seed, 'b', epoch));
  rng.shuffle(perm);

  std::vector<std::vector<Triple>> out;
  for (std::size_t i = 0; i < perm.size(); i += batch_size) {
    std::size_t end = std::min(i + batch_size, perm.size());
    out.emplace_back(perm.begin() + i, perm.begin() + end);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  for (const char* f : {"train.txt", "valid.txt", "test.txt"}) {
    if (!std::filesystem::exists(dir / f))
      throw IoError("dataset file missing: " + (dir / f).string());
  }
  Dataset ds;
  auto dedup = [&ds](std::vector<Triple> v) {
    std::unordered_set<Triple, TripleHash> seen;
    std::vector<Triple> out;
    out.reserve(v.size());
    for (const Triple& t : v) {
      if (seen.insert(t).second)
        out.push_back(t);
      else
        ++ds.duplicates_dropped;
    }
    return out;
  };
  ds.splits.train = dedup(load_triples(dir / "train.txt", ds.vocab));
  ds.splits.valid = dedup(load_triples(dir / "valid.txt", ds.vocab));
  ds.splits.test = dedup(load_triples(dir / "test.txt", ds.vocab));
  return ds;
}

} // namespace metasd
