#pragma once
// Filtered link-prediction evaluation: per-query filtered rank with the
// mean tie convention, MRR / Hits@{1,3,10}, per-relation-subset reports.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>

#include "metasd/backbone.hpp"
#include "metasd/graph_store.hpp"
#include "metasd/types.hpp"

namespace metasd {

struct EvalReport {
  std::string split;
  std::string model_view; // "teacher" or "student"
  double mrr = 0.0;
  std::map<int, double> hits; // k in {1,3,10}
  std::size_t query_count = 0;
  std::map<std::string, EvalReport> subsets;

  std::string to_text() const;
};

// Rank of `target` among candidates after dropping known_true \ {target};
// ties count half: rank = 1 + #{s > s_t} + #{s == s_t}/2.
double filtered_rank(const Eigen::VectorXd& scores, EntityId target,
                     const std::set<EntityId>* known_true);

// `eval_triples` must be reciprocal-augmented (each direction is one
// query).  Subsets select by original relation id (rel mod R').
EvalReport evaluate(const ModelView& view,
                    std::span<const Triple> eval_triples,
                    const FilterIndex& filter,
                    const std::map<std::string, std::set<RelationId>>*
                        subsets = nullptr,
                    std::string split_name = "test",
                    std::string model_name = "model");

// evaluate() restricted to test triples whose original relation has fewer
// than `threshold` train instances.
EvalReport long_tail_report(const ModelView& view,
                            const std::vector<Triple>& original_train,
                            std::span<const Triple> eval_triples,
                            const FilterIndex& filter,
                            std::size_t threshold = 1000,
                            std::string model_name = "model");

} // namespace metasd
