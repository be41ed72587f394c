#include "pmn/core.hpp"

#include "pmn/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pmn {

Partition::Partition(std::vector<int> group1, std::vector<int> group2)
    : group1_(std::move(group1)), group2_(std::move(group2)) {
  if (group1_.empty() || group2_.empty()) {
    throw SpecError("partition: both groups must be nonempty");
  }
  const auto m = group1_.size() + group2_.size();
  side_.assign(m, -1);
  position_.assign(m, -1);
  auto place = [&](const std::vector<int>& group, int side) {
    for (std::size_t p = 0; p < group.size(); ++p) {
      const int u = group[p];
      if (u < 0 || static_cast<std::size_t>(u) >= m) {
        throw SpecError("partition: variable " + std::to_string(u) + " outside 0.." + std::to_string(m - 1));
      }
      if (side_[static_cast<std::size_t>(u)] != -1) {
        throw SpecError("partition: variable " + std::to_string(u) + " appears more than once");
      }
      side_[static_cast<std::size_t>(u)] = side;
      position_[static_cast<std::size_t>(u)] = static_cast<int>(p);
    }
  };
  place(group1_, 0);
  place(group2_, 1);
}

Partition Partition::contiguous(int m1, int m2) {
  std::vector<int> g1(static_cast<std::size_t>(std::max(m1, 0)));
  std::vector<int> g2(static_cast<std::size_t>(std::max(m2, 0)));
  for (int i = 0; i < m1; ++i) g1[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < m2; ++i) g2[static_cast<std::size_t>(i)] = m1 + i;
  return Partition(std::move(g1), std::move(g2));
}

std::string Domain::to_string() const {
  return is_categorical() ? "categorical(" + std::to_string(categories) + ")" : "continuous";
}

Dataset::Dataset(Eigen::MatrixXd samples, Partition partition, Domain domain)
    : samples_(std::move(samples)), partition_(std::move(partition)), domain_(domain) {
  if (samples_.rows() < 2) {
    throw InvalidDimension("dataset: need at least 2 samples, got " + std::to_string(samples_.rows()));
  }
  if (samples_.cols() != partition_.m()) {
    throw InvalidDimension("dataset: rows have " + std::to_string(samples_.cols()) +
                           " entries but the partition covers " + std::to_string(partition_.m()));
  }
  if (domain_.is_categorical()) {
    if (domain_.categories < 1) throw DomainError("dataset: categorical domain needs k >= 1");
    for (Eigen::Index i = 0; i < samples_.rows(); ++i) {
      for (Eigen::Index u = 0; u < samples_.cols(); ++u) {
        const double x = samples_(i, u);
        if (x != std::floor(x) || x < 0 || x >= domain_.categories) {
          throw DomainError("dataset: cell (" + std::to_string(i) + ", " + std::to_string(u) +
                            ") = " + std::to_string(x) + " outside categorical range [0, " +
                            std::to_string(domain_.categories) + ")");
        }
      }
    }
  } else if (!samples_.allFinite()) {
    throw DomainError("dataset: non-finite sample value");
  }
}

Dataset Dataset::select_rows(std::span<const int> rows) const {
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), samples_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= samples_.rows()) throw IndexError("dataset: row out of range");
    sub.row(static_cast<Eigen::Index>(i)) = samples_.row(rows[i]);
  }
  return Dataset(std::move(sub), partition_, domain_);
}

PairIndex::PairIndex(int m, bool include_diagonal, int block_dim)
    : m_(m), include_diagonal_(include_diagonal), block_dim_(block_dim) {
  if (m < 2) throw InvalidDimension("pair index: m must be >= 2, got " + std::to_string(m));
  if (block_dim < 1) throw InvalidDimension("pair index: block_dim must be >= 1");
  const std::size_t count = include_diagonal ? static_cast<std::size_t>(m) * (m + 1) / 2
                                             : static_cast<std::size_t>(m) * (m - 1) / 2;
  pairs_.reserve(count);
  for (int u = 0; u < m; ++u) {
    for (int v = include_diagonal ? u : u + 1; v < m; ++v) pairs_.push_back({u, v});
  }
}

std::size_t PairIndex::block_of(Eigen::Index i) const {
  if (i < 0 || i >= param_length()) throw IndexError("pair index: coordinate out of range");
  return static_cast<std::size_t>(i / block_dim_);
}

std::optional<std::size_t> PairIndex::find(int u, int v) const {
  if (u > v) std::swap(u, v);
  if (u < 0 || v >= m_ || (u == v && !include_diagonal_)) return std::nullopt;
  // Rows before u contribute (m - r) pairs each with diagonal, (m - r - 1) without.
  std::size_t t = 0;
  const std::size_t mm = static_cast<std::size_t>(m_);
  const std::size_t uu = static_cast<std::size_t>(u);
  if (include_diagonal_) {
    t = uu * mm - uu * (uu - 1) / 2 + static_cast<std::size_t>(v - u);
  } else {
    t = uu * (mm - 1) - uu * (uu - 1) / 2 + static_cast<std::size_t>(v - u - 1);
  }
  return t;
}

PairIndex build_pair_index(int m, bool include_diagonal, int block_dim) {
  return PairIndex(m, include_diagonal, block_dim);
}

void assemble_permuted(const Dataset& data, Eigen::Index j, Eigen::Index k, Eigen::Ref<Eigen::VectorXd> out) {
  const auto& x = data.samples();
  for (int u : data.partition().group1()) out(u) = x(j, u);
  for (int v : data.partition().group2()) out(v) = x(k, v);
}

PermutedSample permuted_pair(const Dataset& data, Eigen::Index j, Eigen::Index k) {
  if (j == k) throw IndexError("permuted pair: j and k must differ");
  if (j < 0 || k < 0 || j >= data.n() || k >= data.n()) {
    throw IndexError("permuted pair: index out of range [0, " + std::to_string(data.n()) + ")");
  }
  PermutedSample s{j, k, Eigen::VectorXd(data.m())};
  assemble_permuted(data, j, k, s.value);
  return s;
}

Eigen::VectorXd feature_eval(const FeatureMap& f, const Eigen::Ref<const Eigen::VectorXd>& x, VariablePair pair) {
  if (pair.u < 0 || pair.v < 0 || pair.u >= x.size() || pair.v >= x.size()) {
    throw InvalidDimension("feature_eval: pair outside the vector");
  }
  Eigen::VectorXd out(f.block_dim());
  f.eval(x(pair.u), x(pair.v), {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

}  // namespace pmn
