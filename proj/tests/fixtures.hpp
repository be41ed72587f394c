#pragma once

#include "pmn/core.hpp"
#include "pmn/prmodel.hpp"

#include <random>

namespace fx {

inline pmn::Dataset random_continuous(int n, int m, int m1, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd x(n, m);
  for (int i = 0; i < n; ++i)
    for (int u = 0; u < m; ++u) x(i, u) = normal(rng);
  return pmn::Dataset(x, pmn::Partition::contiguous(m1, m - m1));
}

inline pmn::Dataset random_categorical(int n, int m, int m1, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, k - 1);
  Eigen::MatrixXd x(n, m);
  for (int i = 0; i < n; ++i)
    for (int u = 0; u < m; ++u) x(i, u) = pick(rng);
  return pmn::Dataset(x, pmn::Partition::contiguous(m1, m - m1), pmn::Domain::categorical(k));
}

inline pmn::ParamBlocks random_theta(const pmn::PairIndex& index, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd flat(index.param_length());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = normal(rng);
  return pmn::ParamBlocks(index, flat);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(1.0, std::max(a.norm(), b.norm()));
}

}  // namespace fx
