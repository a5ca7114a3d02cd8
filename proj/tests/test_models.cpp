#include "gapless/dynamics.hpp"
#include "gapless/fock.hpp"
#include "gapless/models.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using namespace gapless;

namespace {

double max_abs_diff(const ManyBodyOperator& a, const ManyBodyOperator& b) {
  return (a.dense() - b.dense()).cwiseAbs().maxCoeff();
}

double coefficient_of(const std::vector<Term>& terms, std::vector<int> cr,
                      std::vector<int> an) {
  std::sort(cr.begin(), cr.end());
  std::sort(an.begin(), an.end());
  double sum = 0.0;
  for (auto t : terms) {
    std::sort(t.creators.begin(), t.creators.end());
    std::sort(t.annihilators.begin(), t.annihilators.end());
    if (t.creators == cr && t.annihilators == an) sum += t.coefficient;
  }
  return sum;
}

std::size_t quartic_count(const std::vector<Term>& terms) {
  return std::count_if(terms.begin(), terms.end(),
                       [](const Term& t) { return t.creators.size() == 2; });
}

}  // namespace

TEST_CASE("model_params_lambda") {
  const ModelParams p(0.05, 60);
  CHECK(p.lambda() == 0.05 * 60);
  CHECK(ModelParams::from_lambda(2.083, 60).alpha() == Catch::Approx(2.083 / 60));
  CHECK_THROWS_AS(ModelParams(-0.1, 5), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.1, 0), std::invalid_argument);
}

TEST_CASE("dirichlet3_has_eighteen_quartic_terms") {
  const auto terms = dirichlet3_terms(0.2);
  CHECK(quartic_count(terms) == 18);
  CHECK(terms.size() == 21);
}

TEST_CASE("dirichlet3_coefficient_signs") {
  const double alpha = 0.3;
  const auto terms = dirichlet3_terms(alpha);
  CHECK(coefficient_of(terms, {0, 0}, {0, 2}) == Catch::Approx(2.0 * alpha / 8.0));
  CHECK(coefficient_of(terms, {0, 0}, {0, 0}) == Catch::Approx(-3.0 * alpha / 8.0));
  CHECK(coefficient_of(terms, {0, 1}, {0, 1}) == Catch::Approx(-8.0 * alpha / 8.0));
}

TEST_CASE("dirichlet3_free_ground_energy") {
  auto b = enumerate_basis(3, 2);
  const auto d = diagonalize(build_operator(dirichlet3_terms(0.0), b));
  CHECK(d.energies[0] == Catch::Approx(0.5).epsilon(1e-14));
  std::vector<double> diag;
  for (const auto& s : b->states()) diag.push_back((s[0] + 4.0 * s[1] + 9.0 * s[2]) / 4.0);
  std::sort(diag.begin(), diag.end());
  for (std::size_t i = 0; i < diag.size(); ++i) CHECK(d.energies[i] == Catch::Approx(diag[i]));
}

TEST_CASE("dirichlet_full_three_modes_matches_truncation") {
  for (int n = 0; n <= 6; ++n) {
    auto b = enumerate_basis(3, n);
    for (double alpha : {0.0, 0.11, 0.9}) {
      const auto full = build_operator(dirichlet_full_terms(3, alpha), b);
      const auto trunc = build_operator(dirichlet3_terms(alpha), b);
      CHECK(max_abs_diff(full, trunc) <= 1e-14);
    }
  }
}

TEST_CASE("dirichlet_full_single_mode") {
  const double alpha = 0.4;
  const auto terms = dirichlet_full_terms(1, alpha);
  CHECK(quartic_count(terms) == 1);
  CHECK(coefficient_of(terms, {0, 0}, {0, 0}) == Catch::Approx(-3.0 * alpha / 8.0));
  CHECK(coefficient_of(terms, {0}, {0}) == Catch::Approx(0.25));
  CHECK(quartic_count(dirichlet_full_terms(4, 0.0)) == 0);
  CHECK(dirichlet_full_terms(4, 0.0).size() == 4);
}

TEST_CASE("dirichlet_full_is_hermitian_for_larger_cutoffs") {
  auto b = enumerate_basis(5, 4);
  const Eigen::MatrixXd h = build_operator(dirichlet_full_terms(5, 0.2), b).dense();
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("periodic_conserves_momentum") {
  for (int k_max : {1, 2}) {
    auto b = enumerate_basis(2 * k_max + 1, 4);
    const auto h = build_operator(periodic_terms(k_max, 0.3), b);
    auto momentum = [&](std::size_t i) {
      int p = 0;
      for (int m = 0; m < 2 * k_max + 1; ++m) p += (m - k_max) * b->state(i)[m];
      return p;
    };
    for (int r = 0; r < h.matrix().outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(h.matrix(), r); it; ++it) {
        CHECK(momentum(it.row()) == momentum(it.col()));
      }
    }
  }
}

TEST_CASE("periodic_condensed_state_energy") {
  const double alpha = 0.17;
  const int n = 4;
  auto b = enumerate_basis(3, n);
  const Eigen::MatrixXd h = build_operator(periodic_terms(1, alpha), b).dense();
  const auto i = b->index({0, n, 0});
  CHECK(h(i, i) == Catch::Approx(-alpha / 4.0 * n * (n - 1)));

  const Eigen::MatrixXd h0 = build_operator(periodic_terms(1, 0.0), b).dense();
  for (std::size_t j = 0; j < b->size(); ++j) {
    const auto& s = b->state(j);
    CHECK(h0(j, j) == s[0] + s[2]);
  }
}

TEST_CASE("master_mode_toy_degeneracy") {
  const double alpha = 0.25;
  const std::vector<double> e{0.7, 1.3, 2.1};
  auto b = enumerate_basis(3, 8);
  const Eigen::MatrixXd h = build_operator(master_mode_toy_terms(e, alpha), b).dense();
  // n_0 = 1 / alpha = 4 for every distribution of the rest.
  for (std::size_t i = 0; i < b->size(); ++i) {
    const auto& s = b->state(i);
    if (s[0] == 4) CHECK(h(i, i) == Catch::Approx(e[0] / alpha));
  }
  auto c = enumerate_basis(3, 6);
  const Eigen::MatrixXd hc = build_operator(master_mode_toy_terms(e, alpha), c).dense();
  const double with = hc(c->index({5, 1, 0}), c->index({5, 1, 0}));
  // Same n_0, one particle moved out of mode 2: compare against the n_0 = 5 state without it.
  auto d = enumerate_basis(3, 5);
  const Eigen::MatrixXd hd = build_operator(master_mode_toy_terms(e, alpha), d).dense();
  const double without = hd(d->index({5, 0, 0}), d->index({5, 0, 0}));
  CHECK(with - without == Catch::Approx(toy_effective_gap(e[1], alpha, 5)));
  CHECK(toy_effective_gap(e[1], alpha, 5) == Catch::Approx(e[1] * (1.0 - alpha * 5)));
  CHECK(microstate_entropy(7, 3) == Catch::Approx(7.0 * std::log(3.0)));
}

TEST_CASE("neural_rewriting_is_operator_identical") {
  for (int n = 0; n <= 6; ++n) {
    auto b = enumerate_basis(3, n);
    for (double alpha : {0.0, 0.07, 0.5, 1.3}) {
      const auto w = build_operator(neural_synapse_terms(alpha), b);
      const auto h = build_operator(dirichlet3_terms(alpha), b);
      CHECK(max_abs_diff(w, h) <= 1e-14);
    }
  }
}

TEST_CASE("neural_w11_contribution") {
  const double alpha = 0.2;
  auto b = enumerate_basis(3, 2);
  const Eigen::MatrixXd h = build_operator(neural_synapse_terms(alpha), b).dense();
  const auto i = b->index({2, 0, 0});
  CHECK(h(i, i) == Catch::Approx(0.5 - 3.0 * alpha / 4.0));
  const Eigen::MatrixXd h0 = build_operator(neural_synapse_terms(0.0), b).dense();
  CHECK((h0 - Eigen::MatrixXd(h0.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("external_probe_closed_form_limits") {
  const ExternalProbeParams decoupled(0.1, 0.3, 0.0, 1.5);
  for (double t : {0.0, 1.0, 17.0}) {
    CHECK(external_probe_closed_form(decoupled, t).nc == Catch::Approx(2.25));
    CHECK(external_probe_closed_form(decoupled, t).nb == 0.0);
  }
  const ExternalProbeParams resonant(0.4, 0.4, 1.0, 1.0);
  for (double t : {0.3, 2.0, 5.5}) {
    CHECK(external_probe_closed_form(resonant, t).nb ==
          Catch::Approx(std::pow(std::sin(t / 2.0), 2)));
  }
  const ExternalProbeParams degenerate(0.2, 0.2, 0.0, 2.0);
  CHECK(external_probe_closed_form(degenerate, 3.0).nc == 4.0);
  CHECK(external_probe_closed_form(degenerate, 3.0).nb == 0.0);
}

TEST_CASE("external_probe_conserves_occupation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> t(0.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const ExternalProbeParams p(u(rng), u(rng), u(rng), u(rng));
    CHECK(p.delta_g() >= std::abs(p.g()));
    CHECK(p.delta_g() >= std::abs(p.e_gamma() - p.delta_e()));
    const auto o = external_probe_closed_form(p, t(rng));
    CHECK(o.nc + o.nb == Catch::Approx(p.gamma() * p.gamma()).epsilon(1e-14).margin(1e-14));
  }
}

TEST_CASE("external_probe_matches_two_mode_evolution") {
  const ExternalProbeParams p(0.1, 0.12, 0.05, 2.0);
  const auto exact = probe_occupations_exact(p, {7.0});
  const auto closed = external_probe_closed_form(p, 7.0);
  CHECK(std::abs(exact[0].nb - closed.nb) <= 1e-8);
  CHECK(std::abs(exact[0].nc - closed.nc) <= 1e-8);
}

TEST_CASE("probe_cutoff_tail") {
  for (double g : {0.5, 1.0, 2.0, 3.0}) {
    const int cut = probe_cutoff(g);
    CHECK(cut >= static_cast<int>(std::ceil(g * g + 8.0 * g)));
    double tail = 0.0;
    for (int m = cut + 1; m < cut + 400; ++m) {
      tail += m * std::exp(m * std::log(g * g) - g * g - std::lgamma(m + 1.0));
    }
    CHECK(tail <= 1e-14);
  }
}
