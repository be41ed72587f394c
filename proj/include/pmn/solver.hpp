#pragma once

#include "pmn/prmodel.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pmn {

struct SolverConfig {
  int max_iter = 2000;
  double tol_rel_obj = 1e-8;
  double tol_kkt = 1e-6;
  double shrink = 0.5;                // backtracking factor
  double sufficient_decrease = 1e-4;  // slack removed from the quadratic upper bound
  std::optional<double> fixed_step;   // disables backtracking
  bool accelerate = true;             // FISTA momentum, restarted whenever the objective would rise
  std::uint64_t seed = 0;             // permuted-pair subsampling
  PairPolicy pairs = PairPolicy::automatic();
  bool include_diagonal = false;

  /// Throws ConfigError on non-positive tolerances, max_iter < 1 or shrink outside (0, 1).
  void validate() const;
  PairPolicy pair_policy() const;
};

struct KktReport {
  Eigen::VectorXd residual;  // one entry per block
  double max_residual = 0.0;
};

struct FitResult {
  ParamBlocks theta_hat;
  double lambda = 0.0;
  std::vector<double> objective_trace;  // penalized per-sample objective after each iteration
  KktReport kkt;
  int iterations = 0;
  bool converged = false;
  double step = 0.0;  // last accepted step size
};

/// Proximal map of tau * ||.||: zero when ||block|| <= tau, else block * (1 - tau / ||block||).
Eigen::VectorXd group_soft_threshold(const Eigen::Ref<const Eigen::VectorXd>& block, double tau);

/// sum_t ||theta_t||.
double group_penalty(const Eigen::VectorXd& theta, const PairIndex& index);

/// Smallest lambda whose solution is zero: max_t ||grad_t l(0)||.
double lambda_max(const Objective& objective);

/// Per-block optimality residuals from a fresh gradient evaluation.
/// Zero block: max(0, ||g_t|| - lambda). Active block: ||g_t + lambda * theta_t / ||theta_t||||.
KktReport kkt_check(const Objective& objective, const Eigen::VectorXd& theta, double lambda);

/// Minimizes l(theta) + lambda * sum_t ||theta_t|| with l the per-sample objective.
/// Throws NumericError if the objective is not finite at the starting point.
FitResult fit(const Objective& objective, double lambda, const SolverConfig& cfg,
              const std::optional<ParamBlocks>& warm_start = std::nullopt, std::optional<double> initial_step = std::nullopt);

FitResult fit(const Dataset& data, const FeatureMap& f, double lambda, const SolverConfig& cfg = {},
              const std::optional<ParamBlocks>& warm_start = std::nullopt);

struct Schedule {
  enum class Kind { geometric, until_support };
  Kind kind = Kind::geometric;
  std::optional<double> start;  // geometric: defaults to lambda_max; until_support: defaults to 10
  double factor = 0.8;
  int count = 20;               // geometric only
  std::size_t cap_k = 15;       // until_support: stop once |S| > cap_k
  int max_steps = 200;          // until_support guard

  static Schedule geometric(int count, double factor, std::optional<double> start = std::nullopt);
  /// Geometric grid of `count` points spanning [ratio * lambda_max, lambda_max].
  static Schedule geometric_span(int count, double ratio);
  static Schedule until_support(std::size_t cap_k, double start = 10.0, double factor = 0.8);
  /// "geom:COUNT[:FACTOR]", "span:COUNT[:RATIO]" or "until:K[:START[:FACTOR]]".
  static Schedule parse(const std::string& text);
  std::string to_string() const;

  // Set by geometric_span.
  std::optional<double> span_ratio;
};

struct PathEntry {
  double lambda = 0.0;
  FitResult fit;
  std::size_t support_size = 0;
};

enum class StopReason { grid_exhausted, support_cap_reached };
std::string to_string(StopReason r);

struct PathResult {
  std::vector<PathEntry> entries;  // strictly decreasing lambda
  StopReason stop_reason = StopReason::grid_exhausted;
  double lambda_max0 = 0.0;
};

/// Warm-started descending-lambda solves.
PathResult lambda_path(const Objective& objective, const Schedule& schedule, const SolverConfig& cfg);
PathResult lambda_path(const Dataset& data, const FeatureMap& f, const Schedule& schedule, const SolverConfig& cfg = {});

/// `count` geometric points from lambda_max0 down to ratio * lambda_max0.
std::vector<double> default_lambda_grid(double lambda_max0, int count = 20, double ratio = 1e-3);

struct CrossValidation {
  double best_lambda = 0.0;
  std::vector<double> lambdas;                  // descending
  std::vector<double> mean_scores;              // held-out per-sample NLL, averaged over folds
  std::vector<std::vector<double>> fold_scores;  // [lambda][fold]
};

/// K-fold CV of the held-out per-sample NLL; each validation fold builds N-hat from its own permuted
/// pairs. Ties go to the largest lambda. An empty `lambdas` uses default_lambda_grid on the full data.
CrossValidation cross_validate(const Dataset& data, const FeatureMap& f, std::vector<double> lambdas, int folds,
                               const SolverConfig& cfg, std::uint64_t seed);

/// 24 (2 - alpha) / alpha * sqrt(M log((m^2 + m) / 2) / n): the regularization level above which the
/// support-recovery guarantee applies, for user-supplied constants alpha and M.
double theory_lambda_bound(double alpha, double M, int m, Eigen::Index n);

}  // namespace pmn
