#include "pmn/error.hpp"
#include "pmn/prmodel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace pmn {

FeatureBounds empirical_feature_bounds(const Objective& objective) {
  const auto& data = objective.data();
  const auto& index = objective.index();
  const auto& f = objective.feature();
  FeatureBounds bounds;
  Eigen::VectorXd buf(f.block_dim());
  Eigen::VectorXd x(data.m());
  auto scan = [&](const Eigen::VectorXd& row) {
    for (const auto& [u, v] : index.pairs()) {
      f.eval(row(u), row(v), {buf.data(), static_cast<std::size_t>(buf.size())});
      bounds.bound_inf = std::max(bounds.bound_inf, buf.lpNorm<Eigen::Infinity>());
      bounds.bound_l2 = std::max(bounds.bound_l2, buf.norm());
    }
  };
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    x = data.samples().row(i).transpose();
    scan(x);
  }
  for (const auto& p : objective.pairs()) {
    assemble_permuted(data, p.j, p.k, x);
    scan(x);
  }
  return bounds;
}

DiagnosticsReport diagnostics(const ParamBlocks& theta_star, const Dataset& data, const FeatureMap& f,
                              const std::vector<std::size_t>& support, const PairPolicy& policy, std::size_t cap) {
  if (support.empty()) throw ConfigError("diagnostics: support must be nonempty");
  const auto& index = theta_star.index();
  const int b = f.block_dim();
  if (support.size() * static_cast<std::size_t>(b) > cap) {
    throw SizeError("diagnostics: |S| * b = " + std::to_string(support.size() * static_cast<std::size_t>(b)) +
                    " exceeds cap " + std::to_string(cap));
  }
  std::vector<bool> in_support(index.size(), false);
  for (auto t : support) {
    if (t >= index.size()) throw IndexError("diagnostics: block " + std::to_string(t) + " out of range");
    in_support[t] = true;
  }
  std::vector<std::size_t> complement;
  for (std::size_t t = 0; t < index.size(); ++t) {
    if (!in_support[t]) complement.push_back(t);
  }

  const Objective obj(data, f, index, policy);
  const Eigen::VectorXd& theta = theta_star.flat();
  DiagnosticsReport report;
  report.support_size = support.size();

  const Eigen::MatrixXd h_ss = obj.weighted_covariance(theta, support, support);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h_ss);
  report.lambda_min = eig.eigenvalues().minCoeff();
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  report.degenerate = report.lambda_min <= 1e-12 * scale;

  if (complement.empty()) {
    report.incoherence_margin = 1.0;
  } else {
    const Eigen::MatrixXd h_cs = obj.weighted_covariance(theta, complement, support);
    // Pseudo-inverse keeps the report defined when H_SS is singular; the degenerate flag says so.
    const Eigen::MatrixXd inv = eig.eigenvectors() *
                                eig.eigenvalues()
                                    .unaryExpr([&](double l) { return l > 1e-12 * scale ? 1.0 / l : 0.0; })
                                    .asDiagonal() *
                                eig.eigenvectors().transpose();
    const Eigen::MatrixXd prod = h_cs * inv;
    double worst = -1.0;
    for (std::size_t c = 0; c < complement.size(); ++c) {
      const double norm1 = prod.middleRows(static_cast<Eigen::Index>(c) * b, b).cwiseAbs().sum();
      if (norm1 > worst) {
        worst = norm1;
        report.worst_block = complement[c];
      }
    }
    report.incoherence_margin = 1.0 - worst;
  }

  if (f.declared_bounds()) {
    report.feature_bounds = *f.declared_bounds();
    report.feature_bounds_declared = true;
  } else {
    report.feature_bounds = empirical_feature_bounds(obj);
  }

  const double log_norm = obj.evaluate(theta, false).log_normalizer;
  const Eigen::VectorXd pair_ratio = (obj.pair_scores(theta).array() - log_norm).exp();
  const Eigen::VectorXd sample_ratio = (obj.sample_scores(theta).array() - log_norm).exp();
  report.ratio_min = std::min(pair_ratio.minCoeff(), sample_ratio.minCoeff());
  report.ratio_max = std::max(pair_ratio.maxCoeff(), sample_ratio.maxCoeff());
  return report;
}

}  // namespace pmn
