#include "pmn/synth.hpp"

#include "pmn/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

namespace pmn {

GaussianSpec build_gaussian_spec(double rho, int m1, int m2, int passage_size, int eig_rank) {
  if (!(rho > 0 && rho < 1)) throw SpecError("gaussian spec: rho must lie in (0, 1), got " + std::to_string(rho));
  if (m1 < 1 || m2 < 1) throw SpecError("gaussian spec: both groups need at least one variable");
  if (passage_size < 0 || passage_size > std::min(m1, m2)) {
    throw SpecError("gaussian spec: passage_size must lie in [0, min(m1, m2)]");
  }
  const int m = m1 + m2;
  if (eig_rank < 1 || eig_rank > m) throw SpecError("gaussian spec: eig_rank must lie in [1, m]");

  GaussianSpec spec;
  spec.m = m;
  spec.m1 = m1;
  spec.m2 = m2;
  spec.rho = rho;
  spec.passage_size = passage_size;
  spec.eig_rank = eig_rank;
  spec.precision = Eigen::MatrixXd::Zero(m, m);
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= m; ++j) {
      if ((i <= m1) == (j <= m1)) {
        spec.precision(i - 1, j - 1) = std::pow(rho, std::abs(i - j)) * std::sqrt(static_cast<double>(i) * j);
      }
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(spec.precision, Eigen::EigenvaluesOnly);
  spec.lambda_fill = eig.eigenvalues()(eig_rank - 1);  // ascending order
  for (int p = 0; p < passage_size; ++p) {
    const int u = m1 - passage_size + p;
    const int v = m1 + p;
    spec.precision(u, v) = spec.lambda_fill;
    spec.precision(v, u) = spec.lambda_fill;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(spec.precision, Eigen::EigenvaluesOnly);
  if (!(check.eigenvalues()(0) > 0)) {
    std::ostringstream os;
    os << "gaussian spec: precision is not positive definite for rho=" << rho << " (min eigenvalue "
       << check.eigenvalues()(0) << ")";
    throw SpecError(os.str());
  }
  return spec;
}

Dataset sample_gaussian(const GaussianSpec& spec, Eigen::Index n, std::uint64_t seed) {
  const Eigen::LLT<Eigen::MatrixXd> llt(spec.precision);
  if (llt.info() != Eigen::Success) throw NumericError("sample_gaussian: Cholesky factorization of the precision failed");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z(spec.m, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int u = 0; u < spec.m; ++u) z(u, i) = normal(rng);
  }
  // precision = L L^T, so x = L^{-T} z has covariance precision^{-1}.
  const Eigen::MatrixXd x = llt.matrixU().solve(z);
  return Dataset(x.transpose(), spec.partition());
}

std::vector<VariablePair> truth_pairs(const GaussianSpec& spec, bool cross_only) {
  std::vector<VariablePair> pairs;
  const auto part = spec.partition();
  for (int u = 0; u < spec.m; ++u) {
    for (int v = u + 1; v < spec.m; ++v) {
      if (spec.precision(u, v) == 0.0) continue;
      if (cross_only && !part.crosses(u, v)) continue;
      pairs.push_back({u, v});
    }
  }
  return pairs;
}

SupportSet truth_support(const GaussianSpec& spec, const PairIndex& index, bool cross_only) {
  return support_from_pairs(index, truth_pairs(spec, cross_only));
}

void DiamondSpec::validate() const {
  if (blocks < 1) throw SpecError("diamond spec: blocks must be >= 1");
  if (burn_in < 1 || thinning < 1) throw SpecError("diamond spec: burn_in and thinning must be >= 1");
  if (!(base_variance > 0) || !(proposal_std > 0)) throw SpecError("diamond spec: variances must be positive");
}

Partition DiamondSpec::partition() const {
  std::vector<int> g1, g2;
  for (int i = 0; i < blocks; ++i) {
    g1.push_back(4 * i);
    for (int c = 1; c < 4; ++c) g2.push_back(4 * i + c);
  }
  return Partition(std::move(g1), std::move(g2));
}

std::vector<VariablePair> DiamondSpec::truth_pairs() const {
  std::vector<VariablePair> pairs;
  for (int i = 0; i < blocks; ++i) pairs.push_back({4 * i, 4 * i + 1});
  return pairs;
}

double diamond_log_density(const DiamondSpec& spec, const Eigen::Vector4d& x) {
  const double a = x(0), b = x(1), c = x(2), d = x(3);
  return -spec.rho * a * a * b * b - 0.5 * b * c - 0.5 * b * d - x.squaredNorm() / (2.0 * spec.base_variance);
}

DiamondSample sample_diamond(const DiamondSpec& spec, Eigen::Index n) {
  spec.validate();
  if (n < 1) throw InvalidDimension("sample_diamond: n must be >= 1");
  Eigen::MatrixXd samples(n, 4 * spec.blocks);
  std::vector<double> acceptance;
  std::vector<std::string> warnings;
  for (int blk = 0; blk < spec.blocks; ++blk) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(blk)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    Eigen::Vector4d x = Eigen::Vector4d::Zero();
    double logp = diamond_log_density(spec, x);
    long accepted = 0, proposed = 0;
    auto advance = [&] {
      Eigen::Vector4d prop;
      for (int c = 0; c < 4; ++c) prop(c) = x(c) + spec.proposal_std * normal(rng);
      const double lp = diamond_log_density(spec, prop);
      ++proposed;
      if (std::log(unif(rng)) < lp - logp) {
        x = prop;
        logp = lp;
        ++accepted;
      }
    };
    for (int s = 0; s < spec.burn_in; ++s) advance();
    const long burn_accepted = accepted;
    const long burn_proposed = proposed;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int s = 0; s < spec.thinning; ++s) advance();
      samples.block(i, 4 * blk, 1, 4) = x.transpose();
    }
    const double burn_rate = static_cast<double>(burn_accepted) / static_cast<double>(burn_proposed);
    const double rate = static_cast<double>(accepted) / static_cast<double>(proposed);
    acceptance.push_back(rate);
    if (burn_rate < 0.1 || burn_rate > 0.7) {
      std::ostringstream os;
      os << "diamond block " << blk << ": acceptance rate " << burn_rate << " over the burn-in window is outside [0.1, 0.7]";
      warnings.push_back(os.str());
    }
  }
  return {Dataset(std::move(samples), spec.partition()), std::move(acceptance), std::move(warnings)};
}

Eigen::VectorXd finite_difference_gradient(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f, double h,
                                           Scaling scaling, const PairPolicy& policy) {
  if (!(h > 0)) throw ConfigError("finite differences: h must be positive");
  const Objective obj(data, f, theta.index(), policy);
  Eigen::VectorXd x = theta.flat();
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = obj.value(x, scaling);
    x(i) = keep - h;
    const double down = obj.value(x, scaling);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

double normalizer_enumeration_oracle(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f) {
  if (data.n() > 64) throw SizeError("normalizer oracle: n=" + std::to_string(data.n()) + " exceeds 64");
  double total = 0;
  long count = 0;
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    for (Eigen::Index k = 0; k < data.n(); ++k) {
      if (j == k) continue;
      total += std::exp(unnormalized_log_ratio(theta, permuted_pair(data, j, k).value, f));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace pmn
