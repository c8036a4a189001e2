#include "metasd/evaluator.hpp"

#include <sstream>

namespace metasd {

double filtered_rank(const Eigen::VectorXd& scores, EntityId target,
                     const std::set<EntityId>* known_true) {
  if (target >= scores.size())
    throw std::out_of_range("filtered_rank: target out of range");
  const double st = scores[static_cast<Eigen::Index>(target)];
  std::size_t greater = 0, equal = 0;
  for (Eigen::Index e = 0; e < scores.size(); ++e) {
    if (static_cast<EntityId>(e) == target)
      continue;
    if (known_true &&
        known_true->count(static_cast<EntityId>(e)) != 0)
      continue;
    if (scores[e] > st)
      ++greater;
    else if (scores[e] == st)
      ++equal;
  }
  return 1.0 + static_cast<double>(greater) +
         static_cast<double>(equal) / 2.0;
}

namespace {

struct Accum {
  double inv_rank_sum = 0.0;
  double h1 = 0.0, h3 = 0.0, h10 = 0.0;
  std::size_t n = 0;

  void add(double rank) {
    inv_rank_sum += 1.0 / rank;
    h1 += rank <= 1.0 ? 1.0 : 0.0;
    h3 += rank <= 3.0 ? 1.0 : 0.0;
    h10 += rank <= 10.0 ? 1.0 : 0.0;
    ++n;
  }
  EvalReport report(std::string split, std::string model) const {
    EvalReport r;
    r.split = std::move(split);
    r.model_view = std::move(model);
    r.query_count = n;
    if (n > 0) {
      r.mrr = inv_rank_sum / static_cast<double>(n);
      r.hits[1] = h1 / static_cast<double>(n);
      r.hits[3] = h3 / static_cast<double>(n);
      r.hits[10] = h10 / static_cast<double>(n);
    }
    return r;
  }
};

} // namespace

EvalReport evaluate(const ModelView& view,
                    std::span<const Triple> eval_triples,
                    const FilterIndex& filter,
                    const std::map<std::string, std::set<RelationId>>*
                        subsets,
                    std::string split_name, std::string model_name) {
  if (eval_triples.empty())
    throw ConfigError("evaluate: empty split");
  const std::size_t rcount = view.store->relation_count;

  Accum total;
  std::map<std::string, Accum> sub;

  // Chunked so the tail-table GEMM amortizes across queries.
  constexpr std::size_t kChunk = 256;
  for (std::size_t base = 0; base < eval_triples.size(); base += kChunk) {
    const std::size_t end =
        std::min(base + kChunk, eval_triples.size());
    std::span<const Triple> chunk =
        eval_triples.subspan(base, end - base);
    TailBatch fwd = score_tails_batch(view, chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const Triple& t = chunk[i];
      Eigen::VectorXd scores =
          fwd.logits.row(static_cast<Eigen::Index>(i)).transpose();
      const double rank =
          filtered_rank(scores, t.tail, filter.find(t.head, t.rel));
      total.add(rank);
      if (subsets) {
        const RelationId orig =
            t.rel < rcount ? t.rel
                           : static_cast<RelationId>(t.rel - rcount);
        for (const auto& [name, rels] : *subsets)
          if (rels.count(orig))
            sub[name].add(rank);
      }
    }
  }

  EvalReport rep = total.report(split_name, model_name);
  if (subsets)
    for (const auto& [name, acc] : sub)
      rep.subsets[name] = acc.report(split_name + "/" + name, model_name);
  return rep;
}

EvalReport long_tail_report(const ModelView& view,
                            const std::vector<Triple>& original_train,
                            std::span<const Triple> eval_triples,
                            const FilterIndex& filter, std::size_t threshold,
                            std::string model_name) {
  std::set<RelationId> tail_rels =
      long_tail_relations(original_train, threshold);
  const std::size_t rcount = view.store->relation_count;

  std::vector<Triple> subset;
  for (const Triple& t : eval_triples) {
    const RelationId orig =
        t.rel < rcount ? t.rel : static_cast<RelationId>(t.rel - rcount);
    if (tail_rels.count(orig))
      subset.push_back(t);
  }
  if (subset.empty())
    throw ConfigError("long_tail_report: empty subset");
  return evaluate(view, subset, filter, nullptr, "long-tail",
                  std::move(model_name));
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "split = " << split << "\n";
  os << "model = " << model_view << "\n";
  os << "queries = " << query_count << "\n";
  os.precision(6);
  os << "mrr = " << mrr << "\n";
  for (const auto& [k, v] : hits)
    os << "hits@" << k << " = " << v << "\n";
  for (const auto& [name, sub] : subsets) {
    os << "[subset " << name << "]\n";
    os << "queries = " << sub.query_count << "\n";
    os << "mrr = " << sub.mrr << "\n";
    for (const auto& [k, v] : sub.hits)
      os << "hits@" << k << " = " << v << "\n";
  }
  return os.str();
}

} // namespace metasd
