#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pmn {

/// Two-group split of the variable set {0..m-1}. Group order is preserved as given.
class Partition {
 public:
  Partition() = default;
  /// Throws SpecError unless the groups are disjoint, nonempty and cover {0..m-1}.
  Partition(std::vector<int> group1, std::vector<int> group2);

  /// Groups {0..m1-1} and {m1..m1+m2-1}.
  static Partition contiguous(int m1, int m2);

  const std::vector<int>& group1() const { return group1_; }
  const std::vector<int>& group2() const { return group2_; }
  int m() const { return static_cast<int>(side_.size()); }

  /// 0 for group1, 1 for group2.
  int side(int u) const { return side_.at(static_cast<std::size_t>(u)); }
  /// Position of variable u inside its own group.
  int position(int u) const { return position_.at(static_cast<std::size_t>(u)); }
  bool crosses(int u, int v) const { return side(u) != side(v); }

  friend bool operator==(const Partition& a, const Partition& b) {
    return a.group1_ == b.group1_ && a.group2_ == b.group2_;
  }

 private:
  std::vector<int> group1_;
  std::vector<int> group2_;
  std::vector<int> side_;
  std::vector<int> position_;
};

struct Domain {
  enum class Kind { continuous, categorical };
  Kind kind = Kind::continuous;
  int categories = 0;  // only meaningful for categorical

  static Domain continuous() { return {}; }
  static Domain categorical(int k) { return {Kind::categorical, k}; }
  bool is_categorical() const { return kind == Kind::categorical; }
  std::string to_string() const;

  friend bool operator==(const Domain&, const Domain&) = default;
};

/// n joint samples of m variables. Immutable after construction.
class Dataset {
 public:
  /// Throws InvalidDimension (n < 2, width mismatch) or DomainError (categorical range).
  Dataset(Eigen::MatrixXd samples, Partition partition, Domain domain = Domain::continuous());

  const Eigen::MatrixXd& samples() const { return samples_; }
  const Partition& partition() const { return partition_; }
  const Domain& domain() const { return domain_; }
  Eigen::Index n() const { return samples_.rows(); }
  int m() const { return static_cast<int>(samples_.cols()); }

  /// Subset of rows in the given order.
  Dataset select_rows(std::span<const int> rows) const;

 private:
  Eigen::MatrixXd samples_;
  Partition partition_;
  Domain domain_;
};

struct VariablePair {
  int u = 0;
  int v = 0;
  friend auto operator<=>(const VariablePair&, const VariablePair&) = default;
};

/// Lexicographic pair list with one contiguous parameter slice of length block_dim per pair.
class PairIndex {
 public:
  PairIndex() = default;
  PairIndex(int m, bool include_diagonal, int block_dim);

  int m() const { return m_; }
  bool include_diagonal() const { return include_diagonal_; }
  int block_dim() const { return block_dim_; }
  std::size_t size() const { return pairs_.size(); }
  Eigen::Index param_length() const { return static_cast<Eigen::Index>(pairs_.size()) * block_dim_; }

  const std::vector<VariablePair>& pairs() const { return pairs_; }
  const VariablePair& pair(std::size_t t) const { return pairs_.at(t); }
  Eigen::Index offset(std::size_t t) const { return static_cast<Eigen::Index>(t) * block_dim_; }

  /// Inverse of offset(): block whose slice contains flat coordinate i.
  std::size_t block_of(Eigen::Index i) const;
  /// Block id for (u, v) in either order, if present.
  std::optional<std::size_t> find(int u, int v) const;

  friend bool operator==(const PairIndex& a, const PairIndex& b) {
    return a.m_ == b.m_ && a.include_diagonal_ == b.include_diagonal_ && a.block_dim_ == b.block_dim_;
  }

 private:
  int m_ = 0;
  bool include_diagonal_ = false;
  int block_dim_ = 1;
  std::vector<VariablePair> pairs_;
};

PairIndex build_pair_index(int m, bool include_diagonal, int block_dim);

struct PermutedSample {
  Eigen::Index source_j = 0;
  Eigen::Index source_k = 0;
  Eigen::VectorXd value;
};

/// (x1 of row j, x2 of row k). Throws IndexError when j == k or either is out of range.
PermutedSample permuted_pair(const Dataset& data, Eigen::Index j, Eigen::Index k);

/// Writes the permuted sample into `out` (length m) without allocating.
void assemble_permuted(const Dataset& data, Eigen::Index j, Eigen::Index k, Eigen::Ref<Eigen::VectorXd> out);

struct FeatureBounds {
  double bound_inf = 0.0;
  double bound_l2 = 0.0;
};

/// Pairwise feature psi: R^2 -> R^b.
///
/// Every built-in map admits a finite factorisation
///   psi_l(a, c) = sum_r left_r(a) * right_r(c),
/// which the model uses to score cross-group permuted pairs with small dense products.
/// Factor q belongs to component factor_component(q).
class FeatureMap {
 public:
  enum class Kind { product, squared_product, kronecker_delta, table };

  static FeatureMap product();
  static FeatureMap squared_product();
  static FeatureMap kronecker_delta(int categories);
  /// values[(a * k + c) * block_dim + l] = psi_l(a, c) for categorical codes a, c in [0, k).
  static FeatureMap table(int categories, int block_dim, std::vector<double> values);
  /// Parses "product", "sq"/"squared_product", "delta"/"kronecker_delta".
  static FeatureMap from_name(const std::string& name, int categories = 0);

  Kind kind() const { return kind_; }
  int block_dim() const { return block_dim_; }
  int categories() const { return categories_; }
  bool categorical() const { return kind_ == Kind::kronecker_delta || kind_ == Kind::table; }
  bool symmetric() const { return symmetric_; }
  std::string name() const;

  /// Throws DomainError for a categorical value outside [0, k).
  void eval(double a, double c, std::span<double> out) const;
  double eval_scalar(double a, double c) const;

  int factor_count() const;
  int factor_component(int q) const;
  double left_factor(int q, double a) const;
  double right_factor(int q, double c) const;

  /// Declared bounds, if any. Diagnostics fall back to empirical bounds otherwise.
  const std::optional<FeatureBounds>& declared_bounds() const { return bounds_; }
  FeatureMap with_bounds(FeatureBounds b) const;

 private:
  FeatureMap(Kind kind, int block_dim, int categories);
  int code(double a) const;

  Kind kind_ = Kind::product;
  int block_dim_ = 1;
  int categories_ = 0;
  bool symmetric_ = true;
  std::vector<double> table_;
  std::optional<FeatureBounds> bounds_;
};

/// psi(x_u, x_v) for pair (u, v) of an m-vector.
Eigen::VectorXd feature_eval(const FeatureMap& f, const Eigen::Ref<const Eigen::VectorXd>& x, VariablePair pair);

}  // namespace pmn
