#include "pmn/prmodel.hpp"

#include "pmn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace pmn {

ParamBlocks::ParamBlocks(PairIndex index)
    : index_(std::make_shared<const PairIndex>(std::move(index))),
      flat_(Eigen::VectorXd::Zero(index_->param_length())) {}

ParamBlocks::ParamBlocks(PairIndex index, Eigen::VectorXd flat)
    : ParamBlocks(std::make_shared<const PairIndex>(std::move(index)), std::move(flat)) {}

ParamBlocks::ParamBlocks(std::shared_ptr<const PairIndex> index, Eigen::VectorXd flat)
    : index_(std::move(index)), flat_(std::move(flat)) {
  if (flat_.size() != index_->param_length()) {
    throw InvalidDimension("param blocks: expected length " + std::to_string(index_->param_length()) + ", got " +
                           std::to_string(flat_.size()));
  }
}

std::vector<OrderedPair> select_permuted_pairs(Eigen::Index n, const PairPolicy& policy) {
  if (n < 2) throw InvalidDimension("permuted pairs: need n >= 2");
  const auto total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1);
  bool all = policy.kind == PairPolicy::Kind::all_ordered;
  if (policy.kind == PairPolicy::Kind::automatic) all = n <= policy.threshold;
  if (!all && policy.cap >= total) all = true;
  std::vector<OrderedPair> pairs;
  if (all) {
    pairs.reserve(total);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        if (j != k) pairs.push_back({j, k});
      }
    }
    return pairs;
  }
  if (policy.cap == 0) throw ConfigError("permuted pairs: subsample cap must be positive");
  std::mt19937_64 rng(policy.seed);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  std::uniform_int_distribution<Eigen::Index> second(0, n - 2);
  pairs.reserve(policy.cap);
  for (std::size_t i = 0; i < policy.cap; ++i) {
    const auto j = first(rng);
    auto k = second(rng);
    if (k >= j) ++k;
    pairs.push_back({static_cast<int>(j), static_cast<int>(k)});
  }
  return pairs;
}

Objective::Objective(Dataset data, FeatureMap feature, PairIndex index, PairPolicy policy)
    : data_(std::move(data)),
      feature_(std::move(feature)),
      index_(std::make_shared<const PairIndex>(std::move(index))),
      pairs_(select_permuted_pairs(data_.n(), policy)) {
  if (index_->m() != data_.m()) {
    throw InvalidDimension("objective: pair index built for m=" + std::to_string(index_->m()) + " but data has m=" +
                           std::to_string(data_.m()));
  }
  if (index_->block_dim() != feature_.block_dim()) {
    throw InvalidDimension("objective: block_dim does not match the feature map");
  }
  const auto& part = data_.partition();
  for (std::size_t t = 0; t < index_->size(); ++t) {
    const auto [u, v] = index_->pair(t);
    if (part.crosses(u, v)) {
      const int o = (part.side(u) == 0 || feature_.symmetric()) ? 0 : 1;
      const int g1 = part.side(u) == 0 ? u : v;
      const int g2 = part.side(u) == 0 ? v : u;
      cross_[o].terms.push_back({t, part.position(g1), part.position(g2)});
    } else {
      within_[part.side(u)].push_back({t, u, v});
    }
  }

  factors_ = feature_.factor_count();
  const auto n = data_.n();
  const auto m1 = static_cast<Eigen::Index>(part.group1().size());
  const auto m2 = static_cast<Eigen::Index>(part.group2().size());
  const auto& x = data_.samples();
  for (int o = 0; o < 2; ++o) {
    auto& side = cross_[o];
    if (side.terms.empty()) continue;
    side.lifted1.resize(n, factors_ * m1);
    side.lifted2.resize(n, factors_ * m2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int q = 0; q < factors_; ++q) {
        for (Eigen::Index a = 0; a < m1; ++a) {
          const double val = x(i, part.group1()[static_cast<std::size_t>(a)]);
          side.lifted1(i, q * m1 + a) = o == 0 ? feature_.left_factor(q, val) : feature_.right_factor(q, val);
        }
        for (Eigen::Index c = 0; c < m2; ++c) {
          const double val = x(i, part.group2()[static_cast<std::size_t>(c)]);
          side.lifted2(i, q * m2 + c) = o == 0 ? feature_.right_factor(q, val) : feature_.left_factor(q, val);
        }
      }
    }
  }

  const int b = index_->block_dim();
  std::vector<double> fbuf(static_cast<std::size_t>(b));
  for (int side = 0; side < 2; ++side) {
    const auto cols = static_cast<Eigen::Index>(within_[side].size()) * b;
    if (cols == 0 || n * cols > (Eigen::Index{1} << 22)) continue;
    auto& fw = within_features_[side];
    fw.resize(n, cols);
    for (std::size_t t = 0; t < within_[side].size(); ++t) {
      const auto& term = within_[side][t];
      for (Eigen::Index i = 0; i < n; ++i) {
        feature_.eval(x(i, term.u), x(i, term.v), fbuf);
        for (int l = 0; l < b; ++l) fw(i, static_cast<Eigen::Index>(t) * b + l) = fbuf[static_cast<std::size_t>(l)];
      }
    }
  }
  // a full n x n score matrix pays off once the pair set is dense enough
  dense_pairs_ = n <= 2000 && n * n <= 8 * static_cast<Eigen::Index>(pairs_.size());
  all_pairs_ = static_cast<Eigen::Index>(pairs_.size()) == n * (n - 1);

  mean_features_ = Eigen::VectorXd::Zero(index_->param_length());
  std::vector<double> buf(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < index_->size(); ++t) {
      const auto [u, v] = index_->pair(t);
      feature_.eval(x(i, u), x(i, v), buf);
      for (int l = 0; l < b; ++l) mean_features_(index_->offset(t) + l) += buf[static_cast<std::size_t>(l)];
    }
  }
  mean_features_ /= static_cast<double>(n);
}

void Objective::check_dim(const Eigen::VectorXd& theta) const {
  if (theta.size() != index_->param_length()) {
    throw InvalidDimension("objective: theta has length " + std::to_string(theta.size()) + ", expected " +
                           std::to_string(index_->param_length()));
  }
}

Objective::Scores Objective::prepare(const Eigen::VectorXd& theta) const {
  check_dim(theta);
  const auto n = data_.n();
  const int b = index_->block_dim();
  const auto& x = data_.samples();
  Scores s;
  std::vector<double> buf(static_cast<std::size_t>(b));
  for (int side = 0; side < 2; ++side) {
    Eigen::VectorXd& row = side == 0 ? s.row1 : s.row2;
    row = Eigen::VectorXd::Zero(n);
    if (within_features_[side].size() != 0) {
      Eigen::VectorXd tw(within_features_[side].cols());
      for (std::size_t t = 0; t < within_[side].size(); ++t) {
        tw.segment(static_cast<Eigen::Index>(t) * b, b) = theta.segment(index_->offset(within_[side][t].block), b);
      }
      if (!tw.isZero(0.0)) row.noalias() = within_features_[side] * tw;
      continue;
    }
    for (const auto& term : within_[side]) {
      const auto blk = theta.segment(index_->offset(term.block), b);
      if (blk.isZero(0.0)) continue;
      for (Eigen::Index i = 0; i < n; ++i) {
        feature_.eval(x(i, term.u), x(i, term.v), buf);
        double acc = 0;
        for (int l = 0; l < b; ++l) acc += blk(l) * buf[static_cast<std::size_t>(l)];
        row(i) += acc;
      }
    }
  }

  const auto& part = data_.partition();
  const auto m1 = static_cast<Eigen::Index>(part.group1().size());
  const auto m2 = static_cast<Eigen::Index>(part.group2().size());
  for (int o = 0; o < 2; ++o) {
    const auto& side = cross_[o];
    bool active = false;
    for (const auto& term : side.terms) active = active || !theta.segment(index_->offset(term.block), b).isZero(0.0);
    if (!active) continue;
    RowMatrix& z = s.cross[o];
    z.resize(n, factors_ * m2);
    Eigen::MatrixXd coef(m1, m2);
    for (int q = 0; q < factors_; ++q) {
      const int l = feature_.factor_component(q);
      coef.setZero();
      for (const auto& term : side.terms) coef(term.pos1, term.pos2) = theta(index_->offset(term.block) + l);
      z.middleCols(q * m2, m2).noalias() = side.lifted1.middleCols(q * m1, m1) * coef;
    }
    if (dense_pairs_) {
      if (s.dense.size() == 0) s.dense = Eigen::MatrixXd::Zero(n, n);
      s.dense.noalias() += z * side.lifted2.transpose();
    }
  }
  return s;
}

double Objective::score(const Scores& s, Eigen::Index j, Eigen::Index k) const {
  double total = s.row1(j) + s.row2(k);
  if (dense_pairs_) return s.dense.size() ? total + s.dense(j, k) : total;
  for (int o = 0; o < 2; ++o) {
    if (s.cross[o].size() == 0) continue;
    total += s.cross[o].row(j).dot(cross_[o].lifted2.row(k));
  }
  return total;
}

Eigen::VectorXd Objective::pair_scores(const Eigen::VectorXd& theta) const {
  const Scores s = prepare(theta);
  Eigen::VectorXd out(static_cast<Eigen::Index>(pairs_.size()));
  for (std::size_t p = 0; p < pairs_.size(); ++p) out(static_cast<Eigen::Index>(p)) = score(s, pairs_[p].j, pairs_[p].k);
  return out;
}

Eigen::VectorXd Objective::sample_scores(const Eigen::VectorXd& theta) const {
  const Scores s = prepare(theta);
  Eigen::VectorXd out(data_.n());
  for (Eigen::Index i = 0; i < data_.n(); ++i) out(i) = score(s, i, i);
  return out;
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double hi = v.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((v.array() - hi).exp().sum());
}

}  // namespace

Objective::Evaluation Objective::evaluate(const Eigen::VectorXd& theta, bool with_gradient) const {
  const Scores s = prepare(theta);
  if (dense_pairs_ && all_pairs_) return evaluate_dense(theta, s, with_gradient);
  const auto count = static_cast<Eigen::Index>(pairs_.size());
  Eigen::VectorXd scores(count);
  for (Eigen::Index p = 0; p < count; ++p) {
    scores(p) = score(s, pairs_[static_cast<std::size_t>(p)].j, pairs_[static_cast<std::size_t>(p)].k);
  }
  const double lse = log_sum_exp(scores);

  Evaluation out;
  out.mean_score = theta.dot(mean_features_);
  out.log_normalizer = lse - std::log(static_cast<double>(count));
  if (!with_gradient) return out;

  const auto n = data_.n();
  const Eigen::VectorXd w = (scores.array() - lse).exp();
  Eigen::VectorXd first = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(n);
  for (Eigen::Index p = 0; p < count; ++p) {
    first(pairs_[static_cast<std::size_t>(p)].j) += w(p);
    second(pairs_[static_cast<std::size_t>(p)].k) += w(p);
  }
  out.gradient = finish_gradient(first, second, nullptr, &w);
  return out;
}

// Every ordered pair: the full n x n score matrix with the diagonal masked out.
Objective::Evaluation Objective::evaluate_dense(const Eigen::VectorXd& theta, const Scores& s, bool with_gradient) const {
  const auto n = data_.n();
  Eigen::MatrixXd scores = s.dense.size() ? s.dense : Eigen::MatrixXd::Zero(n, n);
  scores.colwise() += s.row1;
  scores.rowwise() += s.row2.transpose();
  scores.diagonal().setConstant(-std::numeric_limits<double>::infinity());
  const double hi = scores.maxCoeff();
  Evaluation out;
  out.mean_score = theta.dot(mean_features_);
  if (!std::isfinite(hi)) {
    out.log_normalizer = hi;
    if (with_gradient) out.gradient = Eigen::VectorXd::Constant(dim(), std::numeric_limits<double>::quiet_NaN());
    return out;
  }
  Eigen::MatrixXd w = (scores.array() - hi).exp().matrix();
  const double total = w.sum();
  const double lse = hi + std::log(total);
  out.log_normalizer = lse - std::log(static_cast<double>(pairs_.size()));
  if (!with_gradient) return out;
  w /= total;
  const Eigen::VectorXd first = w.rowwise().sum();
  const Eigen::VectorXd second = w.colwise().sum().transpose();
  out.gradient = finish_gradient(first, second, &w, nullptr);
  return out;
}

// Ratio-weighted feature means minus the sample means, given the weight marginals over the first
// (group1 source) and second (group2 source) row of each pair.
Eigen::VectorXd Objective::finish_gradient(const Eigen::VectorXd& first, const Eigen::VectorXd& second,
                                           const Eigen::MatrixXd* weights, const Eigen::VectorXd* pair_weights) const {
  const auto n = data_.n();
  const int b = index_->block_dim();
  const auto& x = data_.samples();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(index_->param_length());
  std::vector<double> buf(static_cast<std::size_t>(b));
  for (int side = 0; side < 2; ++side) {
    const Eigen::VectorXd& marginal = side == 0 ? first : second;
    if (within_features_[side].size() != 0) {
      const Eigen::VectorXd gw = within_features_[side].transpose() * marginal;
      for (std::size_t t = 0; t < within_[side].size(); ++t) {
        grad.segment(index_->offset(within_[side][t].block), b) += gw.segment(static_cast<Eigen::Index>(t) * b, b);
      }
      continue;
    }
    for (const auto& term : within_[side]) {
      auto g = grad.segment(index_->offset(term.block), b);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (marginal(i) == 0.0) continue;
        feature_.eval(x(i, term.u), x(i, term.v), buf);
        for (int l = 0; l < b; ++l) g(l) += marginal(i) * buf[static_cast<std::size_t>(l)];
      }
    }
  }

  const auto& part = data_.partition();
  const auto m1 = static_cast<Eigen::Index>(part.group1().size());
  const auto m2 = static_cast<Eigen::Index>(part.group2().size());
  for (int o = 0; o < 2; ++o) {
    const auto& side = cross_[o];
    if (side.terms.empty()) continue;
    RowMatrix acc;
    if (weights) {
      acc.noalias() = *weights * side.lifted2;
    } else {
      acc = RowMatrix::Zero(n, factors_ * m2);
      for (std::size_t p = 0; p < pairs_.size(); ++p) {
        acc.row(pairs_[p].j).noalias() += (*pair_weights)(static_cast<Eigen::Index>(p)) * side.lifted2.row(pairs_[p].k);
      }
    }
    for (int q = 0; q < factors_; ++q) {
      const int l = feature_.factor_component(q);
      const Eigen::MatrixXd moment = side.lifted1.middleCols(q * m1, m1).transpose() * acc.middleCols(q * m2, m2);
      for (const auto& term : side.terms) grad(index_->offset(term.block) + l) += moment(term.pos1, term.pos2);
    }
  }
  return grad - mean_features_;
}

double Objective::value(const Eigen::VectorXd& theta, Scaling s) const {
  return evaluate(theta, false).value(s, data_.n());
}

Eigen::VectorXd Objective::gradient(const Eigen::VectorXd& theta, Scaling s) const {
  Evaluation e = evaluate(theta, true);
  if (s == Scaling::raw) e.gradient -= static_cast<double>(data_.n() - 1) * mean_features_;
  return e.gradient;
}

NormalizerEstimate Objective::normalizer(const Eigen::VectorXd& theta) const {
  const double log_value = evaluate(theta, false).log_normalizer;
  return {std::exp(log_value), pairs_.size(), log_value};
}

Eigen::MatrixXd Objective::weighted_covariance(const Eigen::VectorXd& theta, std::span<const std::size_t> row_blocks,
                                               std::span<const std::size_t> col_blocks) const {
  const Eigen::VectorXd scores = pair_scores(theta);
  const double lse = log_sum_exp(scores);
  const int b = index_->block_dim();
  const auto rows = static_cast<Eigen::Index>(row_blocks.size()) * b;
  const auto cols = static_cast<Eigen::Index>(col_blocks.size()) * b;
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd mean_r = Eigen::VectorXd::Zero(rows);
  Eigen::VectorXd mean_c = Eigen::VectorXd::Zero(cols);
  Eigen::VectorXd fr(rows), fc(cols), xjk(data_.m());
  auto fill = [&](std::span<const std::size_t> blocks, Eigen::VectorXd& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto [u, v] = index_->pair(blocks[i]);
      feature_.eval(xjk(u), xjk(v), {out.data() + static_cast<Eigen::Index>(i) * b, static_cast<std::size_t>(b)});
    }
  };
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    const double w = std::exp(scores(static_cast<Eigen::Index>(p)) - lse);
    assemble_permuted(data_, pairs_[p].j, pairs_[p].k, xjk);
    fill(row_blocks, fr);
    fill(col_blocks, fc);
    mean_r += w * fr;
    mean_c += w * fc;
    second.noalias() += (w * fr) * fc.transpose();
  }
  return second - mean_r * mean_c.transpose();
}

void Objective::check_finite(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd scores = pair_scores(theta);
  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    if (std::isfinite(scores(static_cast<Eigen::Index>(p)))) continue;
    Eigen::VectorXd xjk(data_.m());
    assemble_permuted(data_, pairs_[p].j, pairs_[p].k, xjk);
    std::vector<double> buf(static_cast<std::size_t>(index_->block_dim()));
    for (std::size_t t = 0; t < index_->size(); ++t) {
      const auto [u, v] = index_->pair(t);
      feature_.eval(xjk(u), xjk(v), buf);
      double acc = 0;
      for (int l = 0; l < index_->block_dim(); ++l) acc += theta(index_->offset(t) + l) * buf[static_cast<std::size_t>(l)];
      if (!std::isfinite(acc)) {
        throw NumericError("non-finite objective: block (" + std::to_string(u) + ", " + std::to_string(v) +
                           ") overflows on permuted sample [" + std::to_string(pairs_[p].j) + ", " +
                           std::to_string(pairs_[p].k) + "]");
      }
    }
    throw NumericError("non-finite objective: score of permuted sample [" + std::to_string(pairs_[p].j) + ", " +
                       std::to_string(pairs_[p].k) + "] overflows");
  }
  const double v = value(theta);
  if (!std::isfinite(v)) throw NumericError("non-finite objective value");
}

double unnormalized_log_ratio(const ParamBlocks& theta, const Eigen::Ref<const Eigen::VectorXd>& x, const FeatureMap& f) {
  const auto& index = theta.index();
  if (x.size() != index.m()) throw InvalidDimension("unnormalized_log_ratio: x has the wrong length");
  if (index.block_dim() != f.block_dim()) throw InvalidDimension("unnormalized_log_ratio: block_dim mismatch");
  std::vector<double> buf(static_cast<std::size_t>(f.block_dim()));
  double total = 0;
  for (std::size_t t = 0; t < index.size(); ++t) {
    const auto [u, v] = index.pair(t);
    f.eval(x(u), x(v), buf);
    for (int l = 0; l < f.block_dim(); ++l) total += theta.flat()(index.offset(t) + l) * buf[static_cast<std::size_t>(l)];
  }
  return total;
}

NormalizerEstimate normalizer_hat(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                                  const PairPolicy& policy) {
  return Objective(data, f, theta.index(), policy).normalizer(theta.flat());
}

double ratio_hat(const ParamBlocks& theta, const Eigen::Ref<const Eigen::VectorXd>& x, const NormalizerEstimate& norm,
                 const FeatureMap& f) {
  return std::exp(unnormalized_log_ratio(theta, x, f) - norm.log_value);
}

double negative_log_likelihood(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f, Scaling scaling,
                               const PairPolicy& policy) {
  return Objective(data, f, theta.index(), policy).value(theta.flat(), scaling);
}

Eigen::VectorXd gradient(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f, Scaling scaling,
                         const PairPolicy& policy) {
  return Objective(data, f, theta.index(), policy).gradient(theta.flat(), scaling);
}

Eigen::MatrixXd hessian(const ParamBlocks& theta, const Dataset& data, const FeatureMap& f,
                        std::optional<std::vector<std::size_t>> restrict, std::size_t cap, const PairPolicy& policy) {
  std::vector<std::size_t> blocks;
  if (restrict && !restrict->empty()) {
    blocks = *restrict;
  } else {
    blocks.resize(theta.index().size());
    for (std::size_t t = 0; t < blocks.size(); ++t) blocks[t] = t;
  }
  const auto dim = blocks.size() * static_cast<std::size_t>(f.block_dim());
  if (dim > cap) {
    throw SizeError("hessian: restricted dimension " + std::to_string(dim) + " exceeds cap " + std::to_string(cap));
  }
  for (auto t : blocks) {
    if (t >= theta.index().size()) throw IndexError("hessian: block " + std::to_string(t) + " out of range");
  }
  const Objective obj(data, f, theta.index(), policy);
  return obj.weighted_covariance(theta.flat(), blocks, blocks);
}

}  // namespace pmn
