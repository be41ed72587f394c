#include "pmn/solver.hpp"

#include "pmn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace pmn {

void SolverConfig::validate() const {
  if (max_iter < 1) throw ConfigError("solver: max_iter must be >= 1");
  if (!(tol_rel_obj > 0) || !(tol_kkt > 0)) throw ConfigError("solver: tolerances must be positive");
  if (!(shrink > 0 && shrink < 1)) throw ConfigError("solver: shrink must lie in (0, 1)");
  if (!(sufficient_decrease >= 0 && sufficient_decrease < 1)) {
    throw ConfigError("solver: sufficient_decrease must lie in [0, 1)");
  }
  if (fixed_step && !(*fixed_step > 0)) throw ConfigError("solver: fixed step must be positive");
}

PairPolicy SolverConfig::pair_policy() const {
  PairPolicy p = pairs;
  p.seed = seed;
  return p;
}

Eigen::VectorXd group_soft_threshold(const Eigen::Ref<const Eigen::VectorXd>& block, double tau) {
  if (tau < 0) throw ConfigError("group_soft_threshold: tau must be >= 0");
  const double norm = block.norm();
  if (norm <= tau) return Eigen::VectorXd::Zero(block.size());
  return block * (1.0 - tau / norm);
}

double group_penalty(const Eigen::VectorXd& theta, const PairIndex& index) {
  double total = 0;
  for (std::size_t t = 0; t < index.size(); ++t) total += theta.segment(index.offset(t), index.block_dim()).norm();
  return total;
}

namespace {

double block_grad_max(const Eigen::VectorXd& g, const PairIndex& index) {
  double hi = 0;
  for (std::size_t t = 0; t < index.size(); ++t) hi = std::max(hi, g.segment(index.offset(t), index.block_dim()).norm());
  return hi;
}

KktReport kkt_from_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& theta, const PairIndex& index,
                            double lambda) {
  KktReport r;
  r.residual.resize(static_cast<Eigen::Index>(index.size()));
  const int b = index.block_dim();
  for (std::size_t t = 0; t < index.size(); ++t) {
    const auto gt = g.segment(index.offset(t), b);
    const auto th = theta.segment(index.offset(t), b);
    const double norm = th.stableNorm();
    const double res = norm == 0.0 ? std::max(0.0, gt.norm() - lambda) : (gt + lambda * th / norm).norm();
    r.residual(static_cast<Eigen::Index>(t)) = res;
  }
  r.max_residual = r.residual.size() ? r.residual.maxCoeff() : 0.0;
  return r;
}

void prox_step(const Eigen::VectorXd& y, const Eigen::VectorXd& g, double step, double lambda, const PairIndex& index,
               Eigen::VectorXd& out) {
  out = y - step * g;
  const int b = index.block_dim();
  const double tau = step * lambda;
  for (std::size_t t = 0; t < index.size(); ++t) {
    auto blk = out.segment(index.offset(t), b);
    const double norm = blk.norm();
    if (norm <= tau) {
      blk.setZero();
    } else {
      blk *= 1.0 - tau / norm;
    }
  }
}

// Inverse of a secant curvature estimate along the gradient; backtracking corrects overshoot.
double initial_step_estimate(const Objective& obj, const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  const double gn = g.norm();
  if (!(gn > 0)) return 1.0;
  const double h = 1e-4 / gn * std::max(1.0, x.norm());
  const Eigen::VectorXd g2 = obj.evaluate(x - h * g, true).gradient;
  const double curvature = (g2 - g).norm() / (h * gn);
  if (!(curvature > 0) || !std::isfinite(curvature)) return 1.0;
  return 1.0 / curvature;
}

}  // namespace

double lambda_max(const Objective& objective) {
  const Eigen::VectorXd g = objective.evaluate(Eigen::VectorXd::Zero(objective.dim()), true).gradient;
  return block_grad_max(g, objective.index());
}

KktReport kkt_check(const Objective& objective, const Eigen::VectorXd& theta, double lambda) {
  return kkt_from_gradient(objective.evaluate(theta, true).gradient, theta, objective.index(), lambda);
}

FitResult fit(const Objective& obj, double lambda, const SolverConfig& cfg, const std::optional<ParamBlocks>& warm_start,
              std::optional<double> initial_step) {
  cfg.validate();
  if (!(lambda >= 0)) throw ConfigError("fit: lambda must be >= 0");
  const auto& index = obj.index();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(obj.dim());
  if (warm_start) {
    if (warm_start->flat().size() != obj.dim()) throw InvalidDimension("fit: warm start has the wrong length");
    x = warm_start->flat();
  }
  obj.check_finite(x);

  auto ex = obj.evaluate(x, true);
  double fx = ex.value(Scaling::per_sample, obj.n()) + lambda * group_penalty(x, index);

  FitResult res;
  res.lambda = lambda;
  double step = cfg.fixed_step.value_or(initial_step.value_or(0.0));
  if (!(step > 0)) step = initial_step_estimate(obj, x, ex.gradient);

  // Fast exit when the start already satisfies the optimality conditions.
  KktReport kkt = kkt_from_gradient(ex.gradient, x, index, lambda);

  Eigen::VectorXd y = x, x_prev = x, z(obj.dim()), gy = ex.gradient;
  double fy_smooth = ex.value(Scaling::per_sample, obj.n());
  bool have_gy = true;  // gy and fy_smooth belong to the current y
  double t = 1.0;
  int it = 0;
  res.converged = kkt.max_residual <= cfg.tol_kkt;
  while (!res.converged && it < cfg.max_iter) {
    ++it;
    if (!have_gy) {
      auto ey = obj.evaluate(y, true);
      fy_smooth = ey.value(Scaling::per_sample, obj.n());
      gy = std::move(ey.gradient);
    }
    double fz_smooth = 0;
    std::optional<Objective::Evaluation> ez;
    for (;;) {
      prox_step(y, gy, step, lambda, index, z);
      const Eigen::VectorXd d = z - y;
      ez.reset();
      fz_smooth = obj.value(z);
      if (cfg.fixed_step) break;
      const double quad = (1.0 - cfg.sufficient_decrease) * d.squaredNorm() / (2.0 * step);
      const double model = fy_smooth + gy.dot(d) + quad;
      if (std::isfinite(fz_smooth) && fz_smooth <= model) break;
      // Near the optimum the value test drowns in rounding; for convex l,
      // l(z) - l(y) - <g(y), d> <= <g(z) - g(y), d> gives a sharper certificate.
      if (std::isfinite(fz_smooth) && fz_smooth - model <= 1e-12 * std::max(1.0, std::abs(fy_smooth))) {
        ez = obj.evaluate(z, true);
        if ((ez->gradient - gy).dot(d) <= quad) break;
      }
      step *= cfg.shrink;
      if (step < 1e-300) throw NumericError("fit: step size underflow during backtracking");
    }
    const double fz = fz_smooth + lambda * group_penalty(z, index);
    const double f_old = fx;
    const bool plain = y == x;  // a backtracked plain proximal step always descends
    if (std::isfinite(fz) && (fz <= fx || plain)) {
      // gradient-mapping restart: momentum that points uphill is dropped
      const bool uphill = cfg.accelerate && !plain && (y - z).dot(z - x) > 0.0;
      x_prev.swap(x);
      x = z;
      fx = std::min(fx, fz);
      if (uphill) {
        t = 1.0;
        y = x;
      } else if (cfg.accelerate) {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x + ((t - 1.0) / t_next) * (x - x_prev);
        t = t_next;
      } else {
        y = x;
      }
      have_gy = false;
      if (ez && y == x) {
        fy_smooth = fz_smooth;
        gy = std::move(ez->gradient);
        have_gy = true;
      }
    } else {
      // Restart: drop momentum and take a plain proximal step from x next time.
      t = 1.0;
      y = x;
      have_gy = false;
    }
    res.objective_trace.push_back(fx);
    const double rel = std::abs(f_old - fx) / std::max(1.0, std::abs(fx));
    if (rel <= cfg.tol_rel_obj) {
      auto check = obj.evaluate(x, true);
      kkt = kkt_from_gradient(check.gradient, x, index, lambda);
      if (kkt.max_residual <= cfg.tol_kkt) res.converged = true;
      if (y == x) {
        fy_smooth = check.value(Scaling::per_sample, obj.n());
        gy = std::move(check.gradient);
        have_gy = true;
      }
    }
  }
  if (!res.converged) kkt = kkt_check(obj, x, lambda);
  if (!std::isfinite(fx)) obj.check_finite(x);
  res.theta_hat = ParamBlocks(obj.shared_index(), std::move(x));
  res.kkt = std::move(kkt);
  res.iterations = it;
  res.step = step;
  return res;
}

FitResult fit(const Dataset& data, const FeatureMap& f, double lambda, const SolverConfig& cfg,
              const std::optional<ParamBlocks>& warm_start) {
  const Objective obj(data, f, build_pair_index(data.m(), cfg.include_diagonal, f.block_dim()), cfg.pair_policy());
  return fit(obj, lambda, cfg, warm_start);
}

Schedule Schedule::geometric(int count, double factor, std::optional<double> start) {
  Schedule s;
  s.kind = Kind::geometric;
  s.count = count;
  s.factor = factor;
  s.start = start;
  return s;
}

Schedule Schedule::geometric_span(int count, double ratio) {
  if (count < 1) throw ConfigError("schedule: count must be >= 1");
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("schedule: span ratio must lie in (0, 1)");
  Schedule s = geometric(count, count > 1 ? std::pow(ratio, 1.0 / (count - 1)) : 0.5);
  s.span_ratio = ratio;
  return s;
}

Schedule Schedule::until_support(std::size_t cap_k, double start, double factor) {
  Schedule s;
  s.kind = Kind::until_support;
  s.cap_k = cap_k;
  s.start = start;
  s.factor = factor;
  return s;
}

Schedule Schedule::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts.at(i), &used);
      if (used != parts[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("schedule '" + text + "': field " + std::to_string(i) + " is not a number");
    }
  };
  if (parts.size() < 2) throw ConfigError("schedule '" + text + "': expected geom:COUNT, span:COUNT or until:K");
  if (parts[0] == "geom" && parts.size() <= 3) {
    return geometric(static_cast<int>(num(1)), parts.size() > 2 ? num(2) : 0.8);
  }
  if (parts[0] == "span" && parts.size() <= 3) {
    return geometric_span(static_cast<int>(num(1)), parts.size() > 2 ? num(2) : 1e-3);
  }
  if (parts[0] == "until" && parts.size() <= 4) {
    return until_support(static_cast<std::size_t>(num(1)), parts.size() > 2 ? num(2) : 10.0,
                         parts.size() > 3 ? num(3) : 0.8);
  }
  throw ConfigError("schedule '" + text + "': unknown form");
}

std::string Schedule::to_string() const {
  std::ostringstream os;
  os.precision(17);
  if (kind == Kind::until_support) {
    os << "until:" << cap_k << ':' << start.value_or(10.0) << ':' << factor;
  } else if (span_ratio) {
    os << "span:" << count << ':' << *span_ratio;
  } else {
    os << "geom:" << count << ':' << factor;
    if (start) os << " start=" << *start;
  }
  return os.str();
}

std::string to_string(StopReason r) {
  return r == StopReason::grid_exhausted ? "grid_exhausted" : "support_cap_reached";
}

namespace {

std::size_t support_size(const ParamBlocks& theta) {
  std::size_t count = 0;
  for (std::size_t t = 0; t < theta.index().size(); ++t) count += theta.block(t).isZero(0.0) ? 0 : 1;
  return count;
}

}  // namespace

PathResult lambda_path(const Objective& obj, const Schedule& schedule, const SolverConfig& cfg) {
  if (!(schedule.factor > 0 && schedule.factor < 1)) throw ConfigError("lambda_path: factor must lie in (0, 1)");
  PathResult path;
  path.lambda_max0 = lambda_max(obj);
  std::optional<ParamBlocks> warm;
  std::optional<double> step;
  auto solve = [&](double lam) {
    FitResult r = fit(obj, lam, cfg, warm, step);
    warm = r.theta_hat;
    step = r.step / cfg.shrink;  // let the next lambda try a longer step
    const auto size = support_size(r.theta_hat);
    path.entries.push_back({lam, std::move(r), size});
    return size;
  };

  if (schedule.kind == Schedule::Kind::geometric) {
    if (schedule.count < 1) throw ConfigError("lambda_path: count must be >= 1");
    double lam = schedule.start.value_or(path.lambda_max0);
    if (!(lam > 0)) lam = 1.0;
    for (int i = 0; i < schedule.count; ++i, lam *= schedule.factor) solve(lam);
    path.stop_reason = StopReason::grid_exhausted;
    return path;
  }

  double lam = schedule.start.value_or(10.0);
  if (!(lam > 0)) throw ConfigError("lambda_path: start must be positive");
  for (int i = 0; i < schedule.max_steps; ++i, lam *= schedule.factor) {
    if (solve(lam) > schedule.cap_k) {
      path.stop_reason = StopReason::support_cap_reached;
      return path;
    }
  }
  path.stop_reason = StopReason::grid_exhausted;
  return path;
}

PathResult lambda_path(const Dataset& data, const FeatureMap& f, const Schedule& schedule, const SolverConfig& cfg) {
  const Objective obj(data, f, build_pair_index(data.m(), cfg.include_diagonal, f.block_dim()), cfg.pair_policy());
  return lambda_path(obj, schedule, cfg);
}

std::vector<double> default_lambda_grid(double lambda_max0, int count, double ratio) {
  if (count < 1) throw ConfigError("lambda grid: count must be >= 1");
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double frac = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
    grid[static_cast<std::size_t>(i)] = lambda_max0 * std::pow(ratio, frac);
  }
  return grid;
}

CrossValidation cross_validate(const Dataset& data, const FeatureMap& f, std::vector<double> lambdas, int folds,
                               const SolverConfig& cfg, std::uint64_t seed) {
  const auto n = data.n();
  if (folds < 2) throw ConfigError("cross_validate: folds must be >= 2");
  if (n < 2 * static_cast<Eigen::Index>(folds)) {
    throw ConfigError("cross_validate: " + std::to_string(folds) + " folds need n >= " + std::to_string(2 * folds) +
                      " (each validation fold needs at least 2 samples), got n=" + std::to_string(n));
  }
  const auto index = build_pair_index(data.m(), cfg.include_diagonal, f.block_dim());
  if (lambdas.empty()) {
    lambdas = default_lambda_grid(lambda_max(Objective(data, f, index, cfg.pair_policy())));
  }
  for (double l : lambdas) {
    if (!(l >= 0)) throw ConfigError("cross_validate: lambdas must be >= 0");
  }
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CrossValidation cv;
  cv.lambdas = lambdas;
  cv.fold_scores.assign(lambdas.size(), std::vector<double>(static_cast<std::size_t>(folds), 0.0));
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<int> train, valid;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (static_cast<int>(i % static_cast<std::size_t>(folds)) == fold ? valid : train).push_back(order[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
    if (valid.size() < 2 || train.size() < 2) throw ConfigError("cross_validate: fold too small for a U-statistic");
    const Objective train_obj(data.select_rows(train), f, index, cfg.pair_policy());
    const Objective valid_obj(data.select_rows(valid), f, index, cfg.pair_policy());
    std::optional<ParamBlocks> warm;
    std::optional<double> step;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      FitResult r = fit(train_obj, lambdas[i], cfg, warm, step);
      cv.fold_scores[i][static_cast<std::size_t>(fold)] = valid_obj.value(r.theta_hat.flat());
      step = r.step / cfg.shrink;
      warm = std::move(r.theta_hat);
    }
  }
  cv.mean_scores.resize(lambdas.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    double sum = 0;
    for (double s : cv.fold_scores[i]) sum += s;
    cv.mean_scores[i] = sum / folds;
    const double tie = 1e-12 * std::max(1.0, std::abs(cv.mean_scores[best]));
    if (cv.mean_scores[i] < cv.mean_scores[best] - tie) best = i;
  }
  cv.best_lambda = lambdas[best];
  return cv;
}

double theory_lambda_bound(double alpha, double M, int m, Eigen::Index n) {
  if (!(alpha > 0 && alpha <= 1)) throw ConfigError("theory bound: alpha must lie in (0, 1]");
  if (!(M > 0) || n < 1 || m < 2) throw ConfigError("theory bound: need M > 0, n >= 1, m >= 2");
  const double pairs = (static_cast<double>(m) * m + m) / 2.0;
  return 24.0 * (2.0 - alpha) / alpha * std::sqrt(M * std::log(pairs) / static_cast<double>(n));
}

}  // namespace pmn
