#include "doctest.h"
#include "fixtures.hpp"

#include "pmn/error.hpp"

using namespace pmn;

TEST_CASE("pair index shapes") {
  const auto idx = build_pair_index(3, false, 1);
  REQUIRE(idx.size() == 3);
  CHECK(idx.pair(0) == VariablePair{0, 1});
  CHECK(idx.pair(1) == VariablePair{0, 2});
  CHECK(idx.pair(2) == VariablePair{1, 2});
  CHECK(idx.param_length() == 3);

  const auto diag = build_pair_index(3, true, 1);
  CHECK(diag.size() == 6);
  CHECK(diag.param_length() == 6);

  CHECK(build_pair_index(50, false, 1).size() == 50 * 49 / 2);
  CHECK_THROWS_AS(build_pair_index(1, false, 1), InvalidDimension);
}

TEST_CASE("pair index round trip") {
  for (bool diag : {false, true}) {
    for (int b : {1, 3}) {
      const auto idx = build_pair_index(7, diag, b);
      Eigen::Index covered = 0;
      for (std::size_t t = 0; t < idx.size(); ++t) {
        CHECK(idx.offset(t) == covered);
        for (int l = 0; l < b; ++l) CHECK(idx.block_of(idx.offset(t) + l) == t);
        const auto p = idx.pair(t);
        CHECK(idx.find(p.u, p.v) == t);
        CHECK(idx.find(p.v, p.u) == t);
        covered += b;
      }
      CHECK(covered == idx.param_length());
    }
  }
  CHECK_FALSE(build_pair_index(4, false, 1).find(2, 2).has_value());
}

TEST_CASE("partition validation") {
  CHECK_NOTHROW(Partition({0, 2}, {1, 3}));
  CHECK_THROWS_AS(Partition({0, 1}, {1, 2}), SpecError);
  CHECK_THROWS_AS(Partition({}, {0, 1}), SpecError);
  CHECK_THROWS_AS(Partition({0}, {2}), SpecError);
  const Partition p({3, 0}, {1, 2});
  CHECK(p.side(3) == 0);
  CHECK(p.position(3) == 0);
  CHECK(p.position(0) == 1);
  CHECK(p.crosses(0, 1));
  CHECK_FALSE(p.crosses(1, 2));
}

TEST_CASE("dataset invariants") {
  CHECK_THROWS_AS(Dataset(Eigen::MatrixXd::Zero(1, 2), Partition::contiguous(1, 1)), InvalidDimension);
  CHECK_THROWS_AS(Dataset(Eigen::MatrixXd::Zero(3, 3), Partition::contiguous(1, 1)), InvalidDimension);
  Eigen::MatrixXd bad(2, 2);
  bad << 0, 1, 2, 3;
  CHECK_THROWS_AS(Dataset(bad, Partition::contiguous(1, 1), Domain::categorical(3)), DomainError);
  CHECK_NOTHROW(Dataset(bad, Partition::contiguous(1, 1), Domain::categorical(4)));
}

TEST_CASE("permuted pair") {
  const auto data = fx::random_continuous(4, 3, 2, 11);
  CHECK_THROWS_AS(permuted_pair(data, 1, 1), IndexError);
  CHECK_THROWS_AS(permuted_pair(data, 0, 4), IndexError);
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) {
      if (j == k) continue;
      const auto ps = permuted_pair(data, j, k);
      CHECK(ps.value(0) == data.samples()(j, 0));
      CHECK(ps.value(1) == data.samples()(j, 1));
      CHECK(ps.value(2) == data.samples()(k, 2));
    }
  }

  Eigen::MatrixXd x = data.samples();
  x(1, 2) = x(0, 2);
  const Dataset same(x, data.partition());
  CHECK(permuted_pair(same, 0, 1).value == same.samples().row(0).transpose());
}

TEST_CASE("permuted pair swap property") {
  const auto data = fx::random_continuous(5, 4, 2, 3);
  for (int j = 0; j < 5; ++j) {
    for (int jp = 0; jp < 5; ++jp) {
      if (j == jp) continue;
      Eigen::MatrixXd x = data.samples();
      x.row(j).tail(2).swap(x.row(jp).tail(2));
      const Dataset swapped(x, data.partition());
      CHECK(permuted_pair(data, j, jp).value == swapped.samples().row(j).transpose());
      CHECK(permuted_pair(swapped, j, jp).value == data.samples().row(j).transpose());
    }
  }
}

TEST_CASE("feature evaluation") {
  Eigen::VectorXd x(2);
  x << 2, 3;
  CHECK(feature_eval(FeatureMap::product(), x, {0, 1})(0) == 6);
  CHECK(feature_eval(FeatureMap::squared_product(), x, {0, 1})(0) == 36);

  const std::string alphabet = "ACDEFGHIKLMNPQRSTVWY";
  const auto code = [&](char c) { return static_cast<double>(alphabet.find(c)); };
  const auto delta = FeatureMap::kronecker_delta(20);
  Eigen::VectorXd vv(2), vl(2);
  vv << code('V'), code('V');
  vl << code('V'), code('L');
  CHECK(feature_eval(delta, vv, {0, 1})(0) == 1);
  CHECK(feature_eval(delta, vl, {0, 1})(0) == 0);

  Eigen::VectorXd out_of_range(2);
  out_of_range << 0, 20;
  CHECK_THROWS_AS(feature_eval(delta, out_of_range, {0, 1}), DomainError);
}

TEST_CASE("feature factorization reproduces evaluation") {
  std::vector<double> table(3 * 3 * 2);
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = std::sin(1.0 + static_cast<double>(i));
  const std::vector<FeatureMap> maps = {FeatureMap::product(), FeatureMap::squared_product(),
                                        FeatureMap::kronecker_delta(3), FeatureMap::table(3, 2, table)};
  for (const auto& f : maps) {
    std::vector<double> vals = f.categorical() ? std::vector<double>{0, 1, 2} : std::vector<double>{-1.5, 0.0, 0.7, 2.0};
    for (double a : vals) {
      for (double c : vals) {
        std::vector<double> direct(static_cast<std::size_t>(f.block_dim()));
        f.eval(a, c, direct);
        std::vector<double> factored(direct.size(), 0.0);
        for (int q = 0; q < f.factor_count(); ++q) {
          factored[static_cast<std::size_t>(f.factor_component(q))] += f.left_factor(q, a) * f.right_factor(q, c);
        }
        for (std::size_t l = 0; l < direct.size(); ++l) CHECK(factored[l] == doctest::Approx(direct[l]).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("feature names") {
  CHECK(FeatureMap::from_name("sq").kind() == FeatureMap::Kind::squared_product);
  CHECK(FeatureMap::from_name("delta", 4).categories() == 4);
  CHECK_THROWS(FeatureMap::from_name("cubic"));
}
