#pragma once

#include "pmn/core.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace pmn {

/// Grouped parameter vector: one block of length b per pair of the index.
class ParamBlocks {
 public:
  ParamBlocks() = default;
  explicit ParamBlocks(PairIndex index);
  ParamBlocks(PairIndex index, Eigen::VectorXd flat);
  ParamBlocks(std::shared_ptr<const PairIndex> index, Eigen::VectorXd flat);

  const PairIndex& index() const { return *index_; }
  const std::shared_ptr<const PairIndex>& shared_index() const { return index_; }
  const Eigen::VectorXd& flat() const { return flat_; }
  Eigen::VectorXd& flat() { return flat_; }

  Eigen::VectorXd::ConstSegmentReturnType block(std::size_t t) const {
    return flat_.segment(index_->offset(t), index_->block_dim());
  }
  Eigen::VectorXd::SegmentReturnType block(std::size_t t) { return flat_.segment(index_->offset(t), index_->block_dim()); }
  double block_norm(std::size_t t) const { return block(t).stableNorm(); }

 private:
  std::shared_ptr<const PairIndex> index_;
  Eigen::VectorXd flat_;
};

/// Which ordered (j, k), j != k, enter the U-statistic.
struct PairPolicy {
  enum class Kind { all_ordered, subsample, automatic };
  Kind kind = Kind::automatic;
  std::uint64_t seed = 0;
  std::size_t cap = 40000;
  Eigen::Index threshold = 200;  // automatic: all ordered pairs while n <= threshold

  static PairPolicy all_ordered() { return {Kind::all_ordered, 0, 0, 0}; }
  static PairPolicy subsample(std::uint64_t seed, std::size_t cap) { return {Kind::subsample, seed, cap, 0}; }
  static PairPolicy automatic(std::uint64_t seed = 0, Eigen::Index threshold = 200, std::size_t cap = 40000) {
    return {Kind::automatic, seed, cap, threshold};
  }
};

struct OrderedPair {
  int j = 0;
  int k = 0;
  friend bool operator==(const OrderedPair&, const OrderedPair&) = default;
};

/// All n(n-1) ordered pairs, or `cap` pairs drawn uniformly with replacement from a seeded stream.
/// A subsample whose cap reaches n(n-1) returns the full set.
std::vector<OrderedPair> select_permuted_pairs(Eigen::Index n, const PairPolicy& policy);

struct NormalizerEstimate {
  double value = 1.0;
  std::size_t pair_count = 0;
  double log_value = 0.0;
};

/// raw:        -sum_i score(x_i) + log N(theta)
/// per_sample: -(1/n) sum_i score(x_i) + log N(theta)   (the solver's objective)
enum class Scaling { raw, per_sample };

/// Negative log-likelihood of the pairwise partitioned-ratio model, bound to one dataset, feature
/// map and permuted-pair set. Construction precomputes everything that does not depend on theta.
class Objective {
 public:
  Objective(Dataset data, FeatureMap feature, PairIndex index, PairPolicy policy = {});

  struct Evaluation {
    double mean_score = 0.0;      // (1/n) sum_i score(x_i)
    double log_normalizer = 0.0;  // log N-hat
    Eigen::VectorXd gradient;     // per-sample scaling; empty unless requested
    double value(Scaling s, Eigen::Index n) const {
      return s == Scaling::raw ? -static_cast<double>(n) * mean_score + log_normalizer : -mean_score + log_normalizer;
    }
  };

  Evaluation evaluate(const Eigen::VectorXd& theta, bool with_gradient) const;
  double value(const Eigen::VectorXd& theta, Scaling s = Scaling::per_sample) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta, Scaling s = Scaling::per_sample) const;
  NormalizerEstimate normalizer(const Eigen::VectorXd& theta) const;

  /// Unnormalized log-ratio of each selected permuted pair, in pairs() order.
  Eigen::VectorXd pair_scores(const Eigen::VectorXd& theta) const;
  /// Unnormalized log-ratio of each original row.
  Eigen::VectorXd sample_scores(const Eigen::VectorXd& theta) const;

  /// Weighted feature covariance between two block sets, weights proportional to the ratio over
  /// permuted pairs. With rows == cols this is the Hessian of the per-sample objective.
  Eigen::MatrixXd weighted_covariance(const Eigen::VectorXd& theta, std::span<const std::size_t> row_blocks,
                                      std::span<const std::size_t> col_blocks) const;

  /// Throws NumericError naming the first block and permuted pair whose score is not finite.
  void check_finite(const Eigen::VectorXd& theta) const;

  const Dataset& data() const { return data_; }
  const FeatureMap& feature() const { return feature_; }
  const PairIndex& index() const { return *index_; }
  const std::shared_ptr<const PairIndex>& shared_index() const { return index_; }
  const std::vector<OrderedPair>& pairs() const { return pairs_; }
  const Eigen::VectorXd& mean_features() const { return mean_features_; }
  Eigen::Index n() const { return data_.n(); }
  Eigen::Index dim() const { return index_->param_length(); }

 private:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  struct WithinTerm {
    std::size_t block;
    int u;
    int v;
  };
  struct CrossTerm {
    std::size_t block;
    int pos1;  // position in group1
    int pos2;  // position in group2
  };
  // Orientation 0: pair.u is the group1 variable; orientation 1: pair.u is in group2.
  struct CrossSide {
    std::vector<CrossTerm> terms;
    Eigen::MatrixXd lifted1;  // n x (Q * m1), column q * m1 + a
    RowMatrix lifted2;        // n x (Q * m2), column q * m2 + c
  };
  struct Scores {
    Eigen::VectorXd row1;  // within-group1 score per row
    Eigen::VectorXd row2;  // within-group2 score per row
    std::array<RowMatrix, 2> cross;  // lifted1 * Theta_q per orientation, empty when inactive
    Eigen::MatrixXd dense;           // n x n cross-group score, only with dense_pairs_
  };

  Scores prepare(const Eigen::VectorXd& theta) const;
  Evaluation evaluate_dense(const Eigen::VectorXd& theta, const Scores& s, bool with_gradient) const;
  Eigen::VectorXd finish_gradient(const Eigen::VectorXd& first, const Eigen::VectorXd& second,
                                  const Eigen::MatrixXd* weights, const Eigen::VectorXd* pair_weights) const;
  double score(const Scores& s, Eigen::Index j, Eigen::Index k) const;
  void check_dim(const Eigen::VectorXd& theta) const;

  Dataset data_;
  FeatureMap feature_;
  std::shared_ptr<const PairIndex> index_;
  std::vector<OrderedPair> pairs_;
  std::array<std::vector<WithinTerm>, 2> within_;
  std::array<Eigen::MatrixXd, 2> within_features_;  // n x (terms * b), empty when too large
  bool dense_pairs_ = false;
  bool all_pairs_ = false;  // pairs_ is every ordered j != k
  std::array<CrossSide, 2> cross_;
  int factors_ = 1;
  Eigen::VectorXd mean_features_;
};

/// sum_t <theta_t, psi(x_t)>.
double unnormalized_log_ratio(const ParamBlocks& theta, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const FeatureMap& f);

NormalizerEstimate normalizer_hat(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                                  const PairPolicy& policy = PairPolicy::all_ordered());

/// exp(score(x) - log N-hat).
double ratio_hat(const ParamBlocks& theta, const Eigen::Ref<const Eigen::VectorXd>& x, const NormalizerEstimate& norm,
                 const FeatureMap& f);

double negative_log_likelihood(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                               Scaling scaling = Scaling::raw, const PairPolicy& policy = {});

Eigen::VectorXd gradient(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                         Scaling scaling = Scaling::per_sample, const PairPolicy& policy = {});

/// Hessian of the per-sample objective restricted to `restrict` blocks (all blocks when empty).
/// Throws SizeError when the restricted dimension exceeds `cap`.
Eigen::MatrixXd hessian(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                        std::optional<std::vector<std::size_t>> restrict = std::nullopt, std::size_t cap = 2000,
                        const PairPolicy& policy = {});

/// Largest ||psi||_inf and ||psi||_2 per block over dataset rows and the selected permuted pairs.
FeatureBounds empirical_feature_bounds(const Objective& objective);

struct DiagnosticsReport {
  double lambda_min = 0.0;
  bool degenerate = false;               // restricted Hessian numerically singular
  double incoherence_margin = 1.0;       // 1 - max_{t in S^c} ||H_{t,S} H_{S,S}^{-1}||_1 (entrywise)
  std::optional<std::size_t> worst_block;  // arg max of the incoherence term
  FeatureBounds feature_bounds;
  bool feature_bounds_declared = false;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  std::size_t support_size = 0;
};

/// Dependency, incoherence and boundedness diagnostics evaluated at theta_star for support S.
/// Throws ConfigError for an empty support and SizeError when |S| * b exceeds `cap`.
DiagnosticsReport diagnostics(const ParamBlocks& theta_star, const Dataset& data, const FeatureMap& f,
                              const std::vector<std::size_t>& support, const PairPolicy& policy = {},
                              std::size_t cap = 2000);

}  // namespace pmn
