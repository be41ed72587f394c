#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "pmn/error.hpp"
#include "pmn/synth.hpp"

#include <Eigen/Eigenvalues>

#include <numeric>

using namespace pmn;
using namespace oracle;

namespace {

FeatureMap pick_feature(int which, int k) {
  switch (which) {
    case 0: return FeatureMap::product();
    case 1: return FeatureMap::squared_product();
    default: return FeatureMap::kronecker_delta(k);
  }
}

Dataset pick_data(int which, int n, int m, int m1, std::uint64_t seed) {
  return which == 2 ? fx::random_categorical(n, m, m1, 3, seed) : fx::random_continuous(n, m, m1, seed, which == 1 ? 0.7 : 1.0);
}

}  // namespace

TEST_CASE("unnormalized log ratio") {
  const auto idx = build_pair_index(2, false, 1);
  Eigen::VectorXd x(2);
  x << 1, 3;
  CHECK(unnormalized_log_ratio(ParamBlocks(idx), x, FeatureMap::product()) == 0);
  CHECK(unnormalized_log_ratio(ParamBlocks(idx, Eigen::VectorXd::Constant(1, 2.0)), x, FeatureMap::product()) == 6);

  const auto idx4 = build_pair_index(4, true, 1);
  const auto theta = fx::random_theta(idx4, 5);
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, -1, 2);
  double manual = 0;
  for (int u = 0; u < 4; ++u)
    for (int v = u; v < 4; ++v) manual += theta.flat()(static_cast<Eigen::Index>(*idx4.find(u, v))) * y(u) * y(v);
  CHECK(unnormalized_log_ratio(theta, y, FeatureMap::product()) == doctest::Approx(manual).epsilon(1e-14));

  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(unnormalized_log_ratio(theta, wrong, FeatureMap::product()), InvalidDimension);
}

TEST_CASE("normalizer") {
  const auto data = fx::random_continuous(6, 4, 2, 1);
  const auto idx = build_pair_index(4, false, 1);
  const auto zero = normalizer_hat(ParamBlocks(idx), data, FeatureMap::product());
  CHECK(zero.value == 1.0);
  CHECK(zero.log_value == 0.0);
  CHECK(zero.pair_count == 30);

  const auto small = fx::random_continuous(3, 2, 1, 2);
  const auto idx2 = build_pair_index(2, false, 1);
  const auto theta = fx::random_theta(idx2, 3, 0.8);
  double manual = 0;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      if (j != k) manual += std::exp(theta.flat()(0) * small.samples()(j, 0) * small.samples()(k, 1));
  CHECK(normalizer_hat(theta, small, FeatureMap::product()).value == doctest::Approx(manual / 6).epsilon(1e-13));

  // group2 constant across rows: permuting has no effect
  Eigen::MatrixXd x = data.samples();
  x.col(2).setConstant(0.4);
  x.col(3).setConstant(-1.1);
  const Dataset flat2(x, data.partition());
  const auto th = fx::random_theta(idx, 8);
  double rows = 0;
  for (int i = 0; i < 6; ++i) rows += std::exp(unnormalized_log_ratio(th, x.row(i).transpose(), FeatureMap::product()));
  CHECK(normalizer_hat(th, flat2, FeatureMap::product()).value == doctest::Approx(rows / 6).epsilon(1e-12));
}

TEST_CASE("normalizer is deterministic under subsampling") {
  const auto data = fx::random_continuous(40, 4, 2, 4);
  const auto idx = build_pair_index(4, false, 1);
  const auto th = fx::random_theta(idx, 9);
  const auto a = normalizer_hat(th, data, FeatureMap::product(), PairPolicy::subsample(7, 300));
  const auto b = normalizer_hat(th, data, FeatureMap::product(), PairPolicy::subsample(7, 300));
  CHECK(a.value == b.value);
  CHECK(a.pair_count == 300);
  CHECK(std::exp(a.log_value) == doctest::Approx(a.value).epsilon(1e-15));
  const auto c = normalizer_hat(th, data, FeatureMap::product(), PairPolicy::subsample(8, 300));
  CHECK(a.value != c.value);
}

TEST_CASE("pair selection policies") {
  CHECK(select_permuted_pairs(5, PairPolicy::all_ordered()).size() == 20);
  CHECK(select_permuted_pairs(5, PairPolicy::subsample(1, 100)).size() == 20);
  CHECK(select_permuted_pairs(150, PairPolicy::automatic()).size() == 150 * 149);
  const auto sub = select_permuted_pairs(300, PairPolicy::automatic(3));
  CHECK(sub.size() == 40000);
  for (const auto& p : sub) {
    CHECK(p.j != p.k);
    if (p.j == p.k) break;
  }
}

TEST_CASE("ratio hat self-normalizes") {
  for (int rep = 0; rep < 5; ++rep) {
    const auto data = fx::random_continuous(7, 4, 2, 20 + rep);
    const auto idx = build_pair_index(4, false, 1);
    const auto th = fx::random_theta(idx, 30 + rep, 0.5);
    const auto f = FeatureMap::product();
    const auto norm = normalizer_hat(th, data, f);
    double mean = 0;
    int count = 0;
    for (int j = 0; j < 7; ++j)
      for (int k = 0; k < 7; ++k)
        if (j != k) {
          const auto x = permuted_pair(data, j, k).value;
          const double r = ratio_hat(th, x, norm, f);
          CHECK(r == doctest::Approx(std::exp(unnormalized_log_ratio(th, x, f)) / norm.value).epsilon(1e-12));
          mean += r;
          ++count;
        }
    CHECK(std::abs(mean / count - 1.0) <= 1e-12);
  }
  const auto idx = build_pair_index(3, false, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
  CHECK(ratio_hat(ParamBlocks(idx), x, NormalizerEstimate{}, FeatureMap::product()) == 1.0);
}

TEST_CASE("negative log likelihood matches the formula") {
  for (int which = 0; which < 3; ++which) {
    const auto f = pick_feature(which, 3);
    const auto data = pick_data(which, 3, 2, 1, 40 + which);
    const auto idx = build_pair_index(2, false, 1);
    const auto th = fx::random_theta(idx, 50 + which, 0.7);
    CHECK(negative_log_likelihood(ParamBlocks(idx), data, f) == 0.0);
    CHECK(negative_log_likelihood(th, data, f, Scaling::raw) == doctest::Approx(naive_nll(th, data, f, false)).epsilon(1e-12));
    CHECK(negative_log_likelihood(th, data, f, Scaling::per_sample) ==
          doctest::Approx(naive_nll(th, data, f, true)).epsilon(1e-12));
  }
  // larger instances, diagonal on and off
  for (bool diag : {false, true}) {
    const auto data = fx::random_continuous(9, 5, 3, 77);
    const auto idx = build_pair_index(5, diag, 1);
    const auto th = fx::random_theta(idx, 78);
    CHECK(negative_log_likelihood(th, data, FeatureMap::product(), Scaling::per_sample) ==
          doctest::Approx(naive_nll(th, data, FeatureMap::product(), true)).epsilon(1e-12));
  }
}

TEST_CASE("dead features leave the likelihood unchanged") {
  auto data = fx::random_continuous(6, 3, 2, 5);
  Eigen::MatrixXd x = data.samples();
  x.col(2).setZero();
  const Dataset dead(x, data.partition());
  const auto idx = build_pair_index(3, false, 1);
  auto th = fx::random_theta(idx, 6);
  const double before = negative_log_likelihood(th, dead, FeatureMap::product());
  th.flat()(static_cast<Eigen::Index>(*idx.find(0, 2))) += 3.7;
  th.flat()(static_cast<Eigen::Index>(*idx.find(1, 2))) -= 1.2;
  CHECK(negative_log_likelihood(th, dead, FeatureMap::product()) == doctest::Approx(before).epsilon(1e-13));
}

TEST_CASE("gradient") {
  SUBCASE("zero at theta = 0 when sample and permuted means agree") {
    // every row and every permuted pair has mean product 0
    Eigen::MatrixXd y(4, 2);
    y << 1, 1, 1, -1, -1, 1, -1, -1;
    const Dataset data(y, Partition::contiguous(1, 1));
    const auto g = gradient(ParamBlocks(build_pair_index(2, false, 1)), data, FeatureMap::product());
    CHECK(std::abs(g(0)) < 1e-15);
  }
  SUBCASE("matches a naive enumeration and finite differences") {
    for (int which = 0; which < 3; ++which) {
      for (bool diag : {false, true}) {
        const auto f = pick_feature(which, 3);
        const auto data = pick_data(which, 4, 3, 2, 60 + which);
        const auto idx = build_pair_index(3, diag, 1);
        const auto th = fx::random_theta(idx, 70 + which);
        const auto g = gradient(th, data, f);
        CHECK(fx::rel_err(g, naive_gradient(th, data, f)) < 1e-12);
        CHECK(fx::rel_err(g, finite_difference_gradient(th, data, f)) < 1e-6);
        const auto raw = gradient(th, data, f, Scaling::raw);
        CHECK(fx::rel_err(raw, finite_difference_gradient(th, data, f, 1e-5, Scaling::raw)) < 1e-6);
      }
    }
  }
  SUBCASE("table features with b > 1") {
    std::vector<double> table(3 * 3 * 2);
    for (std::size_t i = 0; i < table.size(); ++i) table[i] = std::cos(0.3 * static_cast<double>(i * i));
    const auto f = FeatureMap::table(3, 2, table);
    const auto data = fx::random_categorical(6, 4, 2, 3, 91);
    const auto idx = build_pair_index(4, false, 2);
    const auto th = fx::random_theta(idx, 92);
    CHECK(fx::rel_err(gradient(th, data, f), naive_gradient(th, data, f)) < 1e-12);
  }
  SUBCASE("group2 constant across rows") {
    auto data = fx::random_continuous(5, 3, 2, 17);
    Eigen::MatrixXd x = data.samples();
    x.col(2).setConstant(0.8);
    const Dataset flat2(x, data.partition());
    const auto idx = build_pair_index(3, false, 1);
    const auto th = fx::random_theta(idx, 18);
    CHECK(fx::rel_err(gradient(th, flat2, FeatureMap::product()), naive_gradient(th, flat2, FeatureMap::product())) < 1e-12);
  }
}

TEST_CASE("directional derivative and convexity") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 10; ++rep) {
    const auto data = fx::random_continuous(6, 4, 2, 100 + rep);
    const auto idx = build_pair_index(4, rep % 2 == 1, 1);
    const auto a = fx::random_theta(idx, 200 + rep);
    const auto b = fx::random_theta(idx, 300 + rep);
    const auto f = FeatureMap::product();
    Eigen::VectorXd dir(idx.param_length());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = normal(rng);
    const double h = 1e-5;
    const double up = negative_log_likelihood(ParamBlocks(idx, a.flat() + h * dir), data, f, Scaling::per_sample);
    const double down = negative_log_likelihood(ParamBlocks(idx, a.flat() - h * dir), data, f, Scaling::per_sample);
    const double analytic = gradient(a, data, f).dot(dir);
    CHECK(fx::rel_err((up - down) / (2 * h), analytic) < 1e-5);

    const ParamBlocks mid(idx, 0.5 * (a.flat() + b.flat()));
    CHECK(negative_log_likelihood(mid, data, f) <=
          0.5 * negative_log_likelihood(a, data, f) + 0.5 * negative_log_likelihood(b, data, f) + 1e-10);
  }
}

TEST_CASE("row permutation invariance") {
  const auto data = fx::random_continuous(8, 4, 2, 12);
  std::vector<int> order(8);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  const auto shuffled = data.select_rows(order);
  const auto idx = build_pair_index(4, false, 1);
  const auto th = fx::random_theta(idx, 13);
  const auto f = FeatureMap::product();
  CHECK(negative_log_likelihood(th, data, f) == doctest::Approx(negative_log_likelihood(th, shuffled, f)).epsilon(1e-13));
  CHECK(normalizer_hat(th, data, f).value == doctest::Approx(normalizer_hat(th, shuffled, f).value).epsilon(1e-13));
  CHECK(fx::rel_err(gradient(th, data, f, Scaling::per_sample, PairPolicy::all_ordered()),
                    gradient(th, shuffled, f, Scaling::per_sample, PairPolicy::all_ordered())) < 1e-13);
}

TEST_CASE("hessian") {
  const auto data = fx::random_continuous(6, 4, 2, 21);
  const auto idx = build_pair_index(4, false, 1);
  const auto f = FeatureMap::product();

  SUBCASE("uniform weights at theta = 0") {
    const auto h = hessian(ParamBlocks(idx), data, f);
    // unweighted covariance over the 30 permuted pairs
    Eigen::MatrixXd feats(30, idx.param_length());
    int r = 0;
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k)
        if (j != k) {
          const auto x = permuted_pair(data, j, k).value;
          for (std::size_t t = 0; t < idx.size(); ++t) feats(r, static_cast<Eigen::Index>(t)) = feature_eval(f, x, idx.pair(t))(0);
          ++r;
        }
    const Eigen::MatrixXd centered = feats.rowwise() - feats.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / 30.0;
    CHECK((h - cov).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("symmetric, PSD and the Jacobian of the gradient") {
    const auto th = fx::random_theta(idx, 22);
    const auto h = hessian(th, data, f);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    const double step = 1e-5;
    for (Eigen::Index i = 0; i < idx.param_length(); ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(idx.param_length());
      e(i) = step;
      const Eigen::VectorXd col = (gradient(ParamBlocks(idx, th.flat() + e), data, f, Scaling::per_sample, PairPolicy::all_ordered()) -
                                   gradient(ParamBlocks(idx, th.flat() - e), data, f, Scaling::per_sample, PairPolicy::all_ordered())) /
                                  (2 * step);
      CHECK((col - h.col(i)).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
  SUBCASE("restriction and size guard") {
    const auto th = fx::random_theta(idx, 23);
    const auto full = hessian(th, data, f);
    const auto sub = hessian(th, data, f, std::vector<std::size_t>{4, 1});
    CHECK(sub(0, 0) == doctest::Approx(full(4, 4)).epsilon(1e-12));
    CHECK(sub(0, 1) == doctest::Approx(full(4, 1)).epsilon(1e-12));
    CHECK(hessian(th, data, f, std::vector<std::size_t>{2})(0, 0) >= 0);
    CHECK_THROWS_AS(hessian(th, data, f, std::nullopt, 3), SizeError);
  }
}

TEST_CASE("non-finite scores name the pair") {
  Eigen::MatrixXd x(3, 2);
  x << 1e200, 1e200, 1, 1, 2, 2;
  const Dataset data(x, Partition::contiguous(1, 1));
  const auto idx = build_pair_index(2, false, 1);
  const Objective obj(data, FeatureMap::product(), idx);
  try {
    obj.check_finite(Eigen::VectorXd::Constant(1, 1e200));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("(0, 1)") != std::string::npos);
  }
}

TEST_CASE("diagnostics") {
  SUBCASE("one-block support on independent groups") {
    const auto data = fx::random_continuous(10, 3, 2, 31);
    const auto idx = build_pair_index(3, false, 1);
    const auto f = FeatureMap::product();
    const ParamBlocks zero(idx);
    const std::vector<std::size_t> support{1};
    const auto rep = diagnostics(zero, data, f, support, PairPolicy::all_ordered());
    const auto h = hessian(zero, data, f, std::nullopt, 2000, PairPolicy::all_ordered());
    const double worst = std::max(std::abs(h(0, 1)), std::abs(h(2, 1))) / h(1, 1);
    CHECK(rep.incoherence_margin == doctest::Approx(1.0 - worst).epsilon(1e-12));
    CHECK(rep.lambda_min == doctest::Approx(h(1, 1)).epsilon(1e-12));
    CHECK(rep.ratio_min == doctest::Approx(1.0));
    CHECK(rep.ratio_max == doctest::Approx(1.0));
    CHECK_FALSE(rep.feature_bounds_declared);
    CHECK(rep.feature_bounds.bound_inf > 0);
  }
  SUBCASE("full support is vacuous") {
    const auto data = fx::random_continuous(8, 3, 2, 32);
    const auto idx = build_pair_index(3, false, 1);
    const auto rep = diagnostics(fx::random_theta(idx, 1), data, FeatureMap::product(), {0, 1, 2});
    CHECK(rep.incoherence_margin == 1.0);
    CHECK_FALSE(rep.worst_block.has_value());
    CHECK(rep.lambda_min >= -1e-10);
    CHECK(rep.ratio_min > 0);
  }
  SUBCASE("singular restricted Hessian is flagged") {
    Eigen::MatrixXd x(4, 3);
    x << 1, 1, 0, 2, 2, 0, 3, 3, 0, 4, 4, 0;  // the last column carries no signal
    const Dataset data(x, Partition::contiguous(2, 1));
    const auto idx = build_pair_index(3, false, 1);
    const auto rep = diagnostics(ParamBlocks(idx), data, FeatureMap::product(), {1});
    CHECK(rep.degenerate);
    CHECK(std::abs(rep.lambda_min) < 1e-10);
  }
  SUBCASE("declared bounds and empty support") {
    const auto data = fx::random_continuous(8, 3, 2, 33);
    const auto idx = build_pair_index(3, false, 1);
    const auto f = FeatureMap::product().with_bounds({2.0, 2.0});
    CHECK(diagnostics(ParamBlocks(idx), data, f, {0}).feature_bounds_declared);
    CHECK_THROWS_AS(diagnostics(ParamBlocks(idx), data, f, {}), ConfigError);
  }
}

TEST_CASE("empirical feature bounds hold on every row") {
  const auto data = fx::random_continuous(12, 4, 2, 34);
  const auto idx = build_pair_index(4, false, 1);
  const Objective obj(data, FeatureMap::squared_product(), idx);
  const auto bounds = empirical_feature_bounds(obj);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    for (const auto& p : idx.pairs()) {
      const auto psi = feature_eval(obj.feature(), data.samples().row(i).transpose(), p);
      CHECK(psi.lpNorm<Eigen::Infinity>() <= bounds.bound_inf);
      CHECK(psi.norm() <= bounds.bound_l2);
    }
}

TEST_CASE("dense and per-pair evaluation agree with a naive sum over the selected pairs") {
  const auto data = fx::random_continuous(50, 6, 4, 71, 0.9);
  const auto f = FeatureMap::product();
  const auto theta = fx::random_theta(build_pair_index(6, false, 1), 72);
  // caps chosen to hit the gather path, the dense-score gather and the full pair set
  for (std::size_t cap : {200u, 1500u, 2450u}) {
    const Objective obj(data, f, theta.index(), PairPolicy::subsample(9, cap));
    const auto& idx = theta.index();
    double norm = 0;
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(idx.param_length());
    for (const auto& p : obj.pairs()) {
      const auto x = permuted_pair(data, p.j, p.k).value;
      const double w = std::exp(naive_score(theta, x, f));
      norm += w;
      for (std::size_t t = 0; t < idx.size(); ++t) weighted.segment(idx.offset(t), 1) += w * feature_eval(f, x, idx.pair(t));
    }
    const auto e = obj.evaluate(theta.flat(), true);
    CHECK(e.log_normalizer == doctest::Approx(std::log(norm / static_cast<double>(obj.pairs().size()))).epsilon(1e-12));
    CHECK(fx::rel_err(e.gradient, Eigen::VectorXd(weighted / norm - obj.mean_features())) < 1e-12);
  }
}
