#pragma once

#include "pmn/prmodel.hpp"
#include "pmn/structure.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pmn {

/// Gaussian with a dense within-group precision and a diagonal passage block between the groups.
struct GaussianSpec {
  int m = 50;
  int m1 = 40;
  int m2 = 10;
  double rho = 0.5;
  int passage_size = 10;
  int eig_rank = 15;
  double lambda_fill = 0.0;  // eig_rank-th smallest eigenvalue of the block-diagonal matrix
  Eigen::MatrixXd precision;

  Partition partition() const { return Partition::contiguous(m1, m2); }
};

/// Builds the precision matrix in two steps:
///   1. Theta_ij = rho^|i-j| sqrt(i j) (1-based i, j) when i and j are in the same group, else 0.
///   2. The last `passage_size` group1 variables and the first `passage_size` group2 variables are
///      coupled through Lambda * I, Lambda the eig_rank-th smallest eigenvalue of the step-1 matrix.
/// Throws SpecError if rho is outside (0, 1), the shape is inconsistent or the result is not positive definite.
GaussianSpec build_gaussian_spec(double rho, int m1 = 40, int m2 = 10, int passage_size = 10, int eig_rank = 15);

/// n zero-mean draws with covariance precision^{-1}. Deterministic per seed.
Dataset sample_gaussian(const GaussianSpec& spec, Eigen::Index n, std::uint64_t seed);

/// Pairs u < v with a nonzero precision entry, optionally restricted to cross-group pairs.
std::vector<VariablePair> truth_pairs(const GaussianSpec& spec, bool cross_only = true);
SupportSet truth_support(const GaussianSpec& spec, const PairIndex& index, bool cross_only = true);

/// Concatenation of independent 4-variable blocks (a, b, c, d) with density
///   exp(-rho a^2 b^2 - .5 b c - .5 b d) * N(0, base_variance * I4).
struct DiamondSpec {
  int blocks = 13;
  double rho = 1.0;
  double base_variance = 0.5;
  int burn_in = 5000;
  int thinning = 50;
  double proposal_std = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  /// Each block's a-coordinate in group1; b, c, d in group2.
  Partition partition() const;
  /// The planted a <-> b pair of every block.
  std::vector<VariablePair> truth_pairs() const;
};

struct DiamondSample {
  Dataset data;
  std::vector<double> acceptance;  // per block
  std::vector<std::string> warnings;
};

/// Random-walk Metropolis per block, blocks seeded independently from spec.seed.
DiamondSample sample_diamond(const DiamondSpec& spec, Eigen::Index n);

/// Log of the unnormalized diamond block density.
double diamond_log_density(const DiamondSpec& spec, const Eigen::Vector4d& x);

/// Central differences of the negative log-likelihood, one coordinate at a time.
Eigen::VectorXd finite_difference_gradient(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                                           double h = 1e-5, Scaling scaling = Scaling::per_sample,
                                           const PairPolicy& policy = PairPolicy::all_ordered());

/// Plain mean of exp(score) over every ordered j != k. Throws SizeError when n > 64.
double normalizer_enumeration_oracle(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f);

}  // namespace pmn
