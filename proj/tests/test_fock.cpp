#include "gapless/fock.hpp"
#include "gapless/models.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace gapless;

namespace {

double binomial(int n, int k) {
  return std::round(std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                             std::lgamma(n - k + 1.0)));
}

}  // namespace

TEST_CASE("basis_sizes_match_binomial") {
  CHECK(enumerate_basis(3, 2)->size() == 6);
  CHECK(enumerate_basis(1, 5)->size() == 1);
  CHECK(enumerate_basis(1, 5)->state(0) == OccupationState{5});
  CHECK(enumerate_basis(3, 60)->size() == 1891);
  for (int k = 1; k <= 4; ++k) {
    for (int n = 0; n <= 7; ++n) {
      CHECK(enumerate_basis(k, n)->size() == binomial(n + k - 1, k - 1));
    }
  }
}

TEST_CASE("basis_order_is_lexicographic_descending") {
  auto b = enumerate_basis(3, 2);
  const std::vector<OccupationState> expected{
      {2, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 2, 0}, {0, 1, 1}, {0, 0, 2}};
  CHECK(b->states() == expected);
  auto big = enumerate_basis(4, 5);
  for (std::size_t i = 1; i < big->size(); ++i) {
    CHECK(big->state(i - 1) > big->state(i));
  }
}

TEST_CASE("basis_index_is_a_bijection") {
  auto b = enumerate_basis(4, 6);
  for (std::size_t i = 0; i < b->size(); ++i) {
    CHECK(b->index(b->state(i)) == i);
    int sum = 0;
    for (int n : b->state(i)) sum += n;
    CHECK(sum == 6);
    CHECK(b->state(i).size() == 4);
  }
  CHECK_FALSE(b->find({7, 0, 0, 0}).has_value());
  CHECK_THROWS(b->index({7, 0, 0, 0}));
}

TEST_CASE("basis_rejects_bad_sizes") {
  CHECK_THROWS_AS(enumerate_basis(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_basis(2, -1), std::invalid_argument);
}

TEST_CASE("filtered_basis_keeps_order") {
  auto b = enumerate_basis(3, 4, [](const OccupationState& s) { return s[0] == s[2]; });
  const std::vector<OccupationState> expected{{2, 0, 2}, {1, 2, 1}, {0, 4, 0}};
  CHECK(b->states() == expected);
}

TEST_CASE("apply_term_examples") {
  auto r = apply_term(Term{1.0, {0}, {0}}, {2, 0, 0});
  REQUIRE(r);
  CHECK(r->first == 2.0);
  CHECK(r->second == OccupationState{2, 0, 0});

  r = apply_term(Term{1.0, {1}, {0}}, {1, 0, 0});
  REQUIRE(r);
  CHECK(r->first == 1.0);
  CHECK(r->second == OccupationState{0, 1, 0});

  CHECK_FALSE(apply_term(Term{1.0, {}, {0}}, {0, 3, 0}).has_value());
  CHECK_THROWS_AS(apply_term(Term{1.0, {3}, {0}}, {1, 0, 0}), std::out_of_range);
}

TEST_CASE("apply_term_uses_ladder_factors") {
  // a_1^dag a_1^dag a_0 a_2 on (3, 1, 2): sqrt(2) sqrt(3) then sqrt(2) sqrt(3)
  auto r = apply_term(Term{0.5, {1, 1}, {0, 2}}, {3, 1, 2});
  REQUIRE(r);
  CHECK(r->second == OccupationState{2, 3, 1});
  CHECK(r->first == Catch::Approx(0.5 * std::sqrt(2.0 * 3.0) * std::sqrt(2.0 * 3.0)));
}

TEST_CASE("apply_term_adjointness_on_all_pairs") {
  auto b = enumerate_basis(3, 3);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> mode(0, 2);
  for (int trial = 0; trial < 40; ++trial) {
    Term t{1.0 + trial, {mode(rng), mode(rng)}, {mode(rng), mode(rng)}};
    const Term ta = adjoint(t);
    for (const auto& s : b->states()) {
      auto fwd = apply_term(t, s);
      if (!fwd) continue;
      auto back = apply_term(ta, fwd->second);
      REQUIRE(back);
      CHECK(back->second == s);
      CHECK(back->first == Catch::Approx(fwd->first).epsilon(1e-14));
    }
  }
}

TEST_CASE("build_operator_free_dirichlet_is_kinetic_diagonal") {
  auto b = enumerate_basis(3, 2);
  const auto op = build_operator(dirichlet3_terms(0.0), b);
  const Eigen::MatrixXd h = op.dense();
  for (std::size_t i = 0; i < b->size(); ++i) {
    const auto& s = b->state(i);
    CHECK(h(i, i) == (1.0 * s[0] + 4.0 * s[1] + 9.0 * s[2]) / 4.0);
  }
  CHECK((h - Eigen::MatrixXd(h.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_operator_dirichlet_diagonal_entry") {
  auto b = enumerate_basis(3, 2);
  const auto op = build_operator(dirichlet3_terms(0.1), b);
  CHECK(op.dense()(b->index({2, 0, 0}), b->index({2, 0, 0})) ==
        Catch::Approx(0.425).epsilon(1e-15));
}

TEST_CASE("build_operator_is_exactly_symmetric") {
  auto b = enumerate_basis(3, 4);
  for (double alpha : {0.0, 0.13, 0.7, 2.1}) {
    const Eigen::MatrixXd h = build_operator(dirichlet3_terms(alpha), b).dense();
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  auto p = enumerate_basis(5, 4);
  const Eigen::MatrixXd hp = build_operator(periodic_terms(2, 0.3), p).dense();
  CHECK((hp - hp.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_operator_rejects_invalid_terms") {
  auto b = enumerate_basis(2, 2);
  CHECK_THROWS_AS(build_operator({Term{1.0, {0}, {}}}, b), std::invalid_argument);
  // A lone hopping term is not Hermitian.
  CHECK_THROWS_AS(build_operator({Term{1.0, {0}, {1}}}, b), std::invalid_argument);
  CHECK_NOTHROW(build_operator({Term{1.0, {0}, {1}}, Term{1.0, {1}, {0}}}, b));
}

TEST_CASE("expectation_examples") {
  auto b = enumerate_basis(3, 2);
  const auto n2 = number_operator(1, b);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(b->size());
  v[b->index({0, 2, 0})] = 1.0;
  CHECK(expectation(n2, v) == 2.0);

  const auto h = build_operator(dirichlet3_terms(0.37), b);
  const Eigen::MatrixXd d = h.dense();
  for (std::size_t i = 0; i < b->size(); ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(b->size());
    e[i] = 1.0;
    CHECK(expectation(h, e) == Catch::Approx(d(i, i)).epsilon(1e-15));
  }

  // Uniform superposition: sum of all entries / dim.
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(b->size(), 1.0 / std::sqrt(6.0));
  double brute = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) brute += d(i, j);
  }
  CHECK(expectation(h, u) == Catch::Approx(brute / 6.0).epsilon(1e-13));
  CHECK_THROWS_AS(expectation(h, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("operators_commute_with_total_number") {
  auto b = enumerate_basis(3, 5);
  const auto h = build_operator(dirichlet3_terms(0.4), b);
  // Every column stays in the fixed-N basis; total number is N on every state.
  for (int k = 0; k < h.matrix().outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(h.matrix(), k); it; ++it) {
      int sum = 0;
      for (int n : b->state(it.col())) sum += n;
      CHECK(sum == 5);
    }
  }
}
