#include "pmn/structure.hpp"

#include "pmn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace pmn {

SupportSet extract_support(const ParamBlocks& theta_hat) {
  SupportSet s;
  for (std::size_t t = 0; t < theta_hat.index().size(); ++t) {
    if (!theta_hat.block(t).isZero(0.0)) s.active.insert(t);
  }
  return s;
}

SupportSet support_from_pairs(const PairIndex& index, const std::vector<VariablePair>& pairs) {
  SupportSet s;
  for (const auto& p : pairs) {
    const auto t = index.find(p.u, p.v);
    if (!t) throw IndexError("support: pair (" + std::to_string(p.u) + ", " + std::to_string(p.v) + ") not in index");
    s.active.insert(*t);
  }
  return s;
}

bool EvalReport::tpr_defined() const { return !std::isnan(tpr); }
bool EvalReport::tnr_defined() const { return !std::isnan(tnr); }

namespace {

EvalReport rates(const SupportSet& estimated, const SupportSet& truth, const std::vector<std::size_t>& universe) {
  std::size_t pos = 0, neg = 0, hit = 0, rejected = 0;
  for (auto t : universe) {
    if (truth.contains(t)) {
      ++pos;
      hit += estimated.contains(t) ? 1 : 0;
    } else {
      ++neg;
      rejected += estimated.contains(t) ? 0 : 1;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {pos ? static_cast<double>(hit) / static_cast<double>(pos) : nan,
          neg ? static_cast<double>(rejected) / static_cast<double>(neg) : nan};
}

}  // namespace

EvalReport tpr_tnr(const SupportSet& estimated, const SupportSet& truth, std::size_t universe) {
  for (const auto* s : {&estimated, &truth}) {
    if (!s->active.empty() && *s->active.rbegin() >= universe) throw IndexError("tpr_tnr: block outside the universe");
  }
  std::vector<std::size_t> all(universe);
  for (std::size_t t = 0; t < universe; ++t) all[t] = t;
  return rates(estimated, truth, all);
}

EvalReport tpr_tnr_cross_group(const SupportSet& estimated, const SupportSet& truth, const PairIndex& index,
                               const Partition& partition) {
  std::vector<std::size_t> cross;
  for (std::size_t t = 0; t < index.size(); ++t) {
    const auto [u, v] = index.pair(t);
    if (partition.crosses(u, v)) cross.push_back(t);
  }
  return rates(estimated, truth, cross);
}

RocCurve roc_curve(const std::vector<SupportSet>& path_supports, const std::vector<double>& lambdas,
                   const SupportSet& truth, std::size_t universe) {
  if (path_supports.empty()) throw ConfigError("roc_curve: empty path");
  RocCurve roc;
  roc.lambdas = lambdas;
  for (const auto& s : path_supports) {
    const auto r = tpr_tnr(s, truth, universe);
    if (!r.tpr_defined() || !r.tnr_defined()) throw ConfigError("roc_curve: TPR/TNR undefined for this truth support");
    roc.raw.push_back({r.tnr, r.tpr});
  }
  // Best TPR per distinct TNR, endpoints included.
  std::map<double, double, std::greater<>> best{{1.0, 0.0}, {0.0, 1.0}};
  for (const auto& p : roc.raw) {
    auto [it, inserted] = best.emplace(p.tnr, p.tpr);
    if (!inserted) it->second = std::max(it->second, p.tpr);
  }
  double running = 0.0;
  for (const auto& [tnr, tpr] : best) {
    running = std::max(running, tpr);
    roc.envelope.push_back({tnr, running});
  }
  for (std::size_t i = 1; i < roc.envelope.size(); ++i) {
    const auto& a = roc.envelope[i - 1];
    const auto& b = roc.envelope[i];
    roc.auc += (a.tnr - b.tnr) * 0.5 * (a.tpr + b.tpr);
  }
  return roc;
}

RocCurve roc_curve(const PathResult& path, const SupportSet& truth) {
  if (path.entries.empty()) throw ConfigError("roc_curve: empty path");
  std::vector<SupportSet> supports;
  std::vector<double> lambdas;
  for (const auto& e : path.entries) {
    supports.push_back(extract_support(e.fit.theta_hat));
    lambdas.push_back(e.lambda);
  }
  return roc_curve(supports, lambdas, truth, path.entries.front().fit.theta_hat.index().size());
}

EdgeList cross_group_edges(const SupportSet& support, const ParamBlocks& theta_hat, const Partition& partition,
                           EdgeList::Scope scope) {
  EdgeList out;
  out.scope = scope;
  const auto& index = theta_hat.index();
  for (auto t : support.active) {
    const auto [u, v] = index.pair(t);
    if (scope == EdgeList::Scope::cross_group_only && !partition.crosses(u, v)) continue;
    const auto blk = theta_hat.block(t);
    Eigen::Index arg = 0;
    blk.cwiseAbs().maxCoeff(&arg);
    const int sign = blk(arg) > 0 ? 1 : (blk(arg) < 0 ? -1 : 0);
    out.edges.push_back({u, v, blk.stableNorm(), sign});
  }
  std::sort(out.edges.begin(), out.edges.end(), [](const Edge& a, const Edge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });
  return out;
}

}  // namespace pmn
