#pragma once

#include "pmn/core.hpp"
#include "pmn/prmodel.hpp"

#include <cmath>

namespace oracle {

using namespace pmn;

// Plain loops over feature_eval, no factorization and no log-sum-exp.
inline double naive_score(const ParamBlocks& theta, const Eigen::VectorXd& x, const FeatureMap& f) {
  double s = 0;
  for (std::size_t t = 0; t < theta.index().size(); ++t) s += theta.block(t).dot(feature_eval(f, x, theta.index().pair(t)));
  return s;
}

inline double naive_nll(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f, bool per_sample) {
  double sum = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) sum += naive_score(theta, data.samples().row(i).transpose(), f);
  double norm = 0;
  int count = 0;
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    for (Eigen::Index k = 0; k < data.n(); ++k) {
      if (j == k) continue;
      norm += std::exp(naive_score(theta, permuted_pair(data, j, k).value, f));
      ++count;
    }
  }
  const double n = static_cast<double>(data.n());
  return -(per_sample ? sum / n : sum) + std::log(norm / count);
}

inline Eigen::VectorXd naive_gradient(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f) {
  const auto& idx = theta.index();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(idx.param_length());
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(idx.param_length());
  auto features = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(idx.param_length());
    for (std::size_t t = 0; t < idx.size(); ++t) out.segment(idx.offset(t), idx.block_dim()) = feature_eval(f, x, idx.pair(t));
    return out;
  };
  for (Eigen::Index i = 0; i < data.n(); ++i) mean += features(data.samples().row(i).transpose());
  mean /= static_cast<double>(data.n());
  double total = 0;
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    for (Eigen::Index k = 0; k < data.n(); ++k) {
      if (j == k) continue;
      const auto x = permuted_pair(data, j, k).value;
      const double w = std::exp(naive_score(theta, x, f));
      weighted += w * features(x);
      total += w;
    }
  }
  return weighted / total - mean;
}

}  // namespace oracle
