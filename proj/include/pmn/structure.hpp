#pragma once

#include "pmn/prmodel.hpp"
#include "pmn/solver.hpp"

#include <set>
#include <vector>

namespace pmn {

/// Blocks with nonzero norm.
struct SupportSet {
  std::set<std::size_t> active;

  std::size_t size() const { return active.size(); }
  bool contains(std::size_t t) const { return active.count(t) != 0; }
  friend bool operator==(const SupportSet&, const SupportSet&) = default;
};

SupportSet extract_support(const ParamBlocks& theta_hat);

/// Support given as variable pairs; throws IndexError for a pair outside the index.
SupportSet support_from_pairs(const PairIndex& index, const std::vector<VariablePair>& pairs);

/// Either rate is NaN when undefined (empty truth support for TPR, full truth support for TNR).
struct EvalReport {
  double tpr = 0.0;
  double tnr = 0.0;
  bool tpr_defined() const;
  bool tnr_defined() const;
};

/// universe = number of blocks in the index.
EvalReport tpr_tnr(const SupportSet& estimated, const SupportSet& truth, std::size_t universe);

/// Same rates with both supports and the universe restricted to cross-group blocks.
EvalReport tpr_tnr_cross_group(const SupportSet& estimated, const SupportSet& truth, const PairIndex& index,
                               const Partition& partition);

struct RocPoint {
  double tnr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<double> lambdas;     // one per path entry
  std::vector<RocPoint> raw;       // one per path entry, path order
  std::vector<RocPoint> envelope;  // endpoints added, sorted by decreasing TNR, TPR made non-decreasing
  double auc = 0.0;                // trapezoid area under TPR against 1 - TNR
};

/// Appends (TNR, TPR) = (1, 0) and (0, 1), keeps the best TPR per TNR and integrates by trapezoid.
RocCurve roc_curve(const std::vector<SupportSet>& path_supports, const std::vector<double>& lambdas,
                   const SupportSet& truth, std::size_t universe);
RocCurve roc_curve(const PathResult& path, const SupportSet& truth);

struct Edge {
  int u = 0;
  int v = 0;
  double weight = 0.0;  // block norm
  int sign = 0;         // sign of the largest-magnitude coordinate
};

struct EdgeList {
  enum class Scope { cross_group_only, all };
  std::vector<Edge> edges;  // weight descending, then (u, v) ascending
  Scope scope = Scope::cross_group_only;
};

EdgeList cross_group_edges(const SupportSet& support, const ParamBlocks& theta_hat, const Partition& partition,
                           EdgeList::Scope scope = EdgeList::Scope::cross_group_only);

}  // namespace pmn
