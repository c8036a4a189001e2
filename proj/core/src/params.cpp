#include "metasd/params.hpp"

#include "metasd/rng.hpp"

namespace metasd {

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::ComplEx: return "complex";
    case Backbone::CP: return "cp";
    case Backbone::RESCAL: return "rescal";
  }
  return "?";
}

Backbone backbone_from_string(const std::string& s) {
  if (s == "complex") return Backbone::ComplEx;
  if (s == "cp") return Backbone::CP;
  if (s == "rescal") return Backbone::RESCAL;
  throw ConfigError("unknown backbone: " + s);
}

std::size_t ParamStore::param_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors)
    n += t.size();
  return n;
}

std::size_t ParamStore::tail_entity_tensor() const {
  return backbone == Backbone::CP ? 1 : 0;
}

bool ParamStore::all_finite() const {
  for (const Tensor& t : tensors)
    if (!t.data.allFinite())
      return false;
  return true;
}

ParamStore init_params(Backbone backbone, std::size_t dim, const Vocab& vocab,
                       std::uint64_t seed, double init_scale) {
  return init_params(backbone, dim, vocab.entity_count(),
                     vocab.relation_count(), seed, init_scale);
}

ParamStore init_params(Backbone backbone, std::size_t dim,
                       std::size_t entity_count, std::size_t relation_count,
                       std::uint64_t seed, double init_scale) {
  if (dim < 1)
    throw ConfigError("dim must be >= 1");
  ParamStore s;
  s.backbone = backbone;
  s.dim = dim;
  s.entity_count = entity_count;
  s.relation_count = relation_count;

  const std::size_t r2 = 2 * relation_count;
  auto make = [&](const std::string& name, std::size_t rows,
                  std::size_t cols) {
    Tensor t;
    t.name = name;
    t.data.resize(rows, cols);
    s.tensors.push_back(std::move(t));
  };
  switch (backbone) {
    case Backbone::ComplEx:
      make("entity", entity_count, 2 * dim);
      make("relation", r2, 2 * dim);
      break;
    case Backbone::CP:
      make("entity_head", entity_count, dim);
      make("entity_tail", entity_count, dim);
      make("relation", r2, dim);
      break;
    case Backbone::RESCAL:
      make("entity", entity_count, dim);
      make("relation", r2, dim * dim);
      break;
  }

  Rng rng(derive_seed(seed, 'i'));
  for (Tensor& t : s.tensors) {
    double* p = t.data.data();
    for (std::size_t i = 0; i < t.size(); ++i)
      p[i] = rng.uniform_sym(init_scale);
  }
  return s;
}

} // namespace metasd
