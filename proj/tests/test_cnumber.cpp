#include "gapless/cnumber.hpp"
#include "gapless/fock.hpp"
#include "gapless/models.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace gapless;

namespace {

constexpr double kPi = std::numbers::pi;

double generic_per_particle(const CNumberPoint& p, double lambda, double n) {
  return h_bog_generic(dirichlet3_terms(lambda / n), 0, fluctuation_amplitudes(p, n), n) / n;
}

}  // namespace

TEST_CASE("h_bog_closed_form_examples") {
  for (double lambda : {0.0, 1.0, 2.5}) {
    CHECK(h_bog({0.0, 0.0, 0.0, 0.0}, lambda) == Catch::Approx(0.25 - 3.0 * lambda / 8.0));
    CHECK(h_bog({1.0, 0.7, 0.0, 0.0}, lambda) == Catch::Approx(1.0 - 3.0 * lambda / 8.0));
  }
}

TEST_CASE("h_bog_matches_generic_substitution") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::uniform_real_distribution<double> ut(0.0, kPi / 2.0);
  std::uniform_real_distribution<double> ud(-kPi, kPi);
  std::uniform_real_distribution<double> ul(0.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const CNumberPoint p{ux(rng), ut(rng), ud(rng), ud(rng)};
    const double lambda = ul(rng);
    CHECK(std::abs(h_bog(p, lambda) - generic_per_particle(p, lambda, 1.0)) <= 1e-12);
  }
  CHECK(std::abs(h_bog({0.3, 0.4, 0.0, 0.0}, 2.0) -
                 generic_per_particle({0.3, 0.4, 0.0, 0.0}, 2.0, 60.0)) <= 1e-12);
}

TEST_CASE("h_bog_generic_periodic_condensate") {
  const double alpha = 0.02;
  const double n = 50.0;
  const double v = h_bog_generic(periodic_terms(1, alpha), 1, Eigen::VectorXcd::Zero(2), n);
  CHECK(v == Catch::Approx(-alpha / 4.0 * n * n));
  CHECK_THROWS_AS(h_bog_generic(periodic_terms(1, alpha), 1,
                                Eigen::VectorXcd::Constant(2, 6.0), n),
                  std::domain_error);
}

TEST_CASE("coherent_state_expectation_is_c_number_energy") {
  // Product coherent state over all particle sectors; H is block diagonal in N.
  const Eigen::Vector3cd a{cdouble(0.8, 0.1), cdouble(-0.3, 0.5), cdouble(0.2, -0.4)};
  const auto terms = dirichlet3_terms(0.3);
  double total = 0.0;
  double norm = 0.0;
  for (int n = 0; n <= 40; ++n) {
    auto b = enumerate_basis(3, n);
    Eigen::VectorXcd psi(b->size());
    for (std::size_t i = 0; i < b->size(); ++i) {
      cdouble c = std::exp(-0.5 * a.squaredNorm());
      for (int m = 0; m < 3; ++m) {
        const int k = b->state(i)[m];
        c *= std::pow(a[m], k) / std::sqrt(std::tgamma(k + 1.0));
      }
      psi[i] = c;
    }
    const Eigen::MatrixXd h = build_operator(terms, b).dense();
    total += (psi.adjoint() * h.cast<cdouble>() * psi)(0, 0).real();
    norm += psi.squaredNorm();
  }
  CHECK(norm == Catch::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(total - c_number_energy(terms, a)) <= 1e-12);
}

TEST_CASE("gradient_hessian_matches_finite_differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ux(0.02, 0.95);
  std::uniform_real_distribution<double> ut(0.02, kPi / 2.0 - 0.02);
  std::uniform_real_distribution<double> ul(0.0, 5.0);
  const double h = 1e-5;
  for (int i = 0; i < 200; ++i) {
    const CNumberPoint p{ux(rng), ut(rng), 0.0, 0.0};
    const double lambda = ul(rng);
    auto f = [&](double dx, double dt) {
      return h_bog({p.x + dx, p.theta + dt, 0.0, 0.0}, lambda);
    };
    Eigen::Vector2d g;
    g << (f(h, 0) - f(-h, 0)) / (2 * h), (f(0, h) - f(0, -h)) / (2 * h);
    Eigen::Matrix2d hs;
    const double h2 = 1e-4;
    hs(0, 0) = (f(h2, 0) - 2 * f(0, 0) + f(-h2, 0)) / (h2 * h2);
    hs(1, 1) = (f(0, h2) - 2 * f(0, 0) + f(0, -h2)) / (h2 * h2);
    hs(0, 1) = hs(1, 0) =
        (f(h2, h2) - f(h2, -h2) - f(-h2, h2) + f(-h2, -h2)) / (4 * h2 * h2);
    const auto gh = gradient_hessian(p, lambda);
    CHECK(oracle::rel_err(gh.grad, g) <= 1e-6);
    CHECK(oracle::rel_err(gh.hess, hs) <= 1e-5);
  }
}

TEST_CASE("gradient_examples_at_origin") {
  const auto g0 = gradient_hessian({0.0, 0.0, 0.0, 0.0}, 0.0);
  CHECK(g0.grad[0] == Catch::Approx(0.75));
  for (double lambda : {0.5, 2.0}) {
    const double h = 1e-6;
    const double fd = (h_bog({0.0, h, 0.0, 0.0}, lambda) - h_bog({0.0, -h, 0.0, 0.0}, lambda)) /
                      (2 * h);
    CHECK(gradient_hessian({0.0, 0.0, 0.0, 0.0}, lambda).grad[1] ==
          Catch::Approx(fd).margin(1e-8));
  }
  CHECK_THROWS_AS(gradient_hessian({0.3, 0.2, 0.1, 0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("amplitude_expansion_matches_finite_differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ul(0.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    CNumberPoint p = oracle::random_interior(rng);
    p.delta2 = 0.3 * i;
    p.delta3 = -0.2 * i;
    const double lambda = ul(rng);
    const auto terms = dirichlet3_terms(lambda);
    const Eigen::VectorXcd a = fluctuation_amplitudes(p, 1.0);
    const auto exact = expand_amplitudes(terms, 0, a, 1.0);
    const auto fd = oracle::wirtinger_fd(
        [&](const Eigen::VectorXcd& v) { return h_bog_generic(terms, 0, v, 1.0); }, a, 1e-4);
    CHECK(exact.value == Catch::Approx(h_bog(p, lambda)).margin(1e-12));
    CHECK(oracle::rel_err(exact.gradient, fd.gradient) <= 1e-6);
    CHECK(oracle::rel_err(exact.hessian.A, fd.A) <= 1e-5);
    CHECK(oracle::rel_err(exact.hessian.B, fd.B) <= 1e-5);
    CHECK(oracle::rel_err(exact.hessian.A, exact.hessian.A.adjoint().eval()) <= 1e-14);
    CHECK(oracle::rel_err(exact.hessian.B, exact.hessian.B.transpose().eval()) <= 1e-15);
  }
}

TEST_CASE("hessian_block_composite_is_hermitian") {
  const HessianBlock h = dirichlet_hessian_block({0.3, 0.2, 0.0, 0.0}, 2.0);
  const Eigen::MatrixXcd m = h.M();
  CHECK((m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((m.topLeftCorner(2, 2) - h.B.conjugate()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.topRightCorner(2, 2) - h.A).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("landscape_single_minimum_below_transition") {
  const auto r = scan_landscape(1.0);
  REQUIRE(r.minima.size() == 1);
  CHECK(r.minima[0].point.x == 0.0);
  CHECK(r.marginal_curve.size() == 400);
  bool monotone = true;
  for (std::size_t i = 1; i < r.marginal_curve.size(); ++i) {
    if (r.marginal_curve[i].second < r.marginal_curve[i - 1].second - 1e-12) monotone = false;
  }
  CHECK(monotone);
}

TEST_CASE("landscape_minima_are_stationary_and_convex") {
  for (double lambda : {1.0, 2.0, 3.0, 3.5, 4.5}) {
    const auto r = scan_landscape(lambda);
    REQUIRE_FALSE(r.minima.empty());
    for (std::size_t i = 1; i < r.minima.size(); ++i) {
      CHECK(r.minima[0].energy <= r.minima[i].energy);
    }
    for (const auto& m : r.minima) {
      // Phase preference: delta2 = 0 and delta3 in {0, pi}.
      CHECK(m.point.delta2 == 0.0);
      CHECK((m.point.delta3 == 0.0 || m.point.delta3 == kPi));
      if (m.point.x > 0.0) {
        const auto gs = expand_amplitudes(dirichlet3_terms(lambda), 0,
                                          fluctuation_amplitudes(m.point, 1.0), 1.0);
        CHECK(gs.gradient.norm() <= 1e-9);
        const auto k = gs.hessian.A.rows();
        Eigen::MatrixXcd big(2 * k, 2 * k);
        big << gs.hessian.A, gs.hessian.B.conjugate(), gs.hessian.B, gs.hessian.A.conjugate();
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(big).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-9);
      }
      for (double d : {-0.01, 0.01}) {
        CNumberPoint q = m.point;
        q.delta2 += d;
        CHECK(h_bog(q, lambda) >= m.energy - 1e-12);
      }
    }
  }
}

TEST_CASE("landscape_above_transition_prefers_interior") {
  const auto r = scan_landscape(4.5);
  REQUIRE_FALSE(r.minima.empty());
  CHECK(r.minima[0].point.x > 0.3);
  const auto two = scan_landscape(3.5);
  CHECK(two.minima.size() == 2);
}

TEST_CASE("lambda_gs_location") {
  const double lgs = find_lambda_gs();
  CHECK(std::abs(lgs - 3.5) <= 0.05);
  const auto b = boundary_minimum(lgs);
  const auto i = interior_minimum(lgs);
  REQUIRE(b);
  REQUIRE(i);
  CHECK(std::abs(b->energy - i->energy) <= 1e-8);
  const auto b2 = boundary_minimum(lgs + 0.1);
  const auto i2 = interior_minimum(lgs + 0.1);
  REQUIRE(b2);
  REQUIRE(i2);
  CHECK(i2->energy < b2->energy);
  CHECK(find_lambda_gs() == lgs);
}

TEST_CASE("lambda_lm_fold_point") {
  const FoldPoint f = find_lambda_lm_dirichlet();
  CHECK(std::abs(f.lambda - 1.792) <= 0.002);
  CHECK(std::abs(f.point.x - 0.32) <= 0.01);
  const auto ex = expand_amplitudes(dirichlet3_terms(f.lambda), 0,
                                    fluctuation_amplitudes(f.point, 1.0), 1.0);
  CHECK(std::abs(ex.hessian.M().determinant()) <= 1e-6);
  CHECK(ex.gradient.norm() <= 1e-9);

  const Eigen::Vector3cd a = pattern_vector(f.point, 60.0);
  CHECK(std::norm(a[0]) / 60.0 == Catch::Approx(0.67).margin(0.01));
  CHECK(std::norm(a[1]) / 60.0 == Catch::Approx(0.32).margin(0.01));
  CHECK(std::norm(a[2]) / 60.0 == Catch::Approx(0.01).margin(0.01));
  CHECK(interior_stationary_points(f.lambda - 0.05).empty());
  CHECK_FALSE(interior_stationary_points(f.lambda + 0.05).empty());
  const FoldPoint again = find_lambda_lm_dirichlet();
  CHECK(again.lambda == f.lambda);
}

TEST_CASE("periodic_inflection_is_at_one") {
  CHECK(find_lambda_lm_periodic() == 1.0);
  CHECK(periodic_hessian_at_origin(0.5).M().determinant().real() == Catch::Approx(-2.0));
  for (double lambda : {0.0, 0.6, 1.0, 1.7}) {
    CHECK(periodic_hessian_at_origin(lambda).M().determinant().real() ==
          Catch::Approx(4.0 * (lambda - 1.0)).margin(1e-12));
    const auto ex = expand_amplitudes(periodic_terms(1, lambda), 1, Eigen::VectorXcd::Zero(2), 1.0);
    CHECK(ex.gradient.norm() == 0.0);
  }
}

TEST_CASE("pattern_vector_examples") {
  const Eigen::Vector3cd a = pattern_vector({0.0, 0.0, 0.0, 0.0}, 100.0);
  CHECK(a[0] == cdouble(10.0, 0.0));
  CHECK(a[1] == cdouble(0.0, 0.0));
  CHECK(a[2] == cdouble(0.0, 0.0));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    CNumberPoint p = oracle::random_interior(rng);
    p.delta2 = 0.1 * i;
    p.delta3 = 0.2 * i;
    CHECK(pattern_vector(p, 37.0).squaredNorm() == Catch::Approx(37.0));
    CHECK(pattern_vector(p, 37.0, false).imag().norm() == 0.0);
  }
}

TEST_CASE("coherent_overlap_examples") {
  Eigen::VectorXcd a(2);
  a << cdouble(0.3, 0.1), cdouble(-1.0, 0.0);
  CHECK(coherent_overlap(a, a) == 1.0);
  Eigen::VectorXcd x(1);
  Eigen::VectorXcd y(1);
  x << 0.0;
  y << cdouble(0.6, 0.8);
  CHECK(coherent_overlap(x, y) == Catch::Approx(std::exp(-1.0)));
  Eigen::VectorXcd z(2);
  Eigen::VectorXcd w(2);
  z << 0.0, 0.0;
  w << 3.0, 0.0;
  CHECK(distinguishable(z, w, 9.0));
  w << 2.9, 0.0;
  CHECK_FALSE(distinguishable(z, w, 9.0));
  CHECK_THROWS_AS(coherent_overlap(z, x), std::invalid_argument);
}
