#include "gapless/bogoliubov.hpp"

#include "gapless/models.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gapless {

int BogoliubovResult::zero_mode_count() const {
  return static_cast<int>(std::count(zero_mode.begin(), zero_mode.end(), true));
}

QuadraticForm expand_quadratic(const std::vector<Term>& terms,
                               int condensate_mode,
                               const Eigen::VectorXcd& amplitudes,
                               double particles) {
  if (particles - amplitudes.squaredNorm() <= 0.0) {
    throw std::domain_error("condensate mode is empty; expansion is singular");
  }
  auto e = expand_amplitudes(terms, condensate_mode, amplitudes, particles);
  QuadraticForm q;
  q.constant = e.value;
  q.linear = e.gradient;
  q.A = e.hessian.A;
  q.B = e.hessian.B;
  return q;
}

QuadraticForm expand_quadratic(const std::vector<Term>& terms,
                               const CNumberPoint& point, double particles) {
  const double c = std::cos(point.theta);
  if ((1.0 - point.x) * c * c <= 1e-14) {
    throw std::domain_error("condensate mode is empty; expansion is singular");
  }
  return expand_quadratic(terms, 0, fluctuation_amplitudes(point, particles),
                          particles);
}

QuadraticForm dirichlet_quadratic_closed_form(const CNumberPoint& point,
                                              double l, double particles) {
  if (point.delta2 != 0.0 || point.delta3 != 0.0) {
    throw std::invalid_argument("closed forms need vanishing phases");
  }
  const double x = point.x;
  const double t = point.theta;
  const double s = std::sin(t);
  const double co = std::cos(t);
  const double y = 1.0 - x;
  const double cc = y * co * co;
  if (cc <= 1e-14) {
    throw std::domain_error("condensate mode is empty; expansion is singular");
  }
  const double rc = std::sqrt(cc);
  const double ry = std::sqrt(y);
  const double rx = std::sqrt(x);
  const double sec = 1.0 / co;
  const double tn = std::tan(t);
  const double c2 = std::cos(2.0 * t);
  const double c4 = std::cos(4.0 * t);

  QuadraticForm q;
  q.constant = particles * h_bog(point, l);

  const double l2 =
      6.0 * rx *
      (3.0 * l * y * ry * s * s * s + l * ry * (4.0 * x - 3.0) * s +
       (l * (2.0 * x - 1.0) + 1.0) * rc + l * tn * tn * cc * rc);
  const double l3 = l * y * y * c4 + l * (7.0 * x - 1.0) * (x - 1.0) * c2 +
                    std::sqrt(4.0 - 4.0 * x) * s * rc *
                        (3.0 * l * (x - 1.0) * c2 + 8.0);
  const double pre = std::sqrt(particles) / (8.0 * rc);
  q.linear = Eigen::Vector2cd(pre * l2, pre * l3);

  const double p = 128.0 * cc * rc;
  const double b22 =
      16.0 * l *
      (ry * ((23.0 - 16.0 * x) * x - 4.0) * s +
       4.0 * (4.0 * x - 1.0) * cc * rc -
       y * ry * s * s * s * (2.0 * (x - 1.0) * c2 + 21.0 * x - 6.0));
  const double a22 =
      16.0 *
      (2.0 * sec * sec * (l * (10.0 * x - 1.0) + 3.0) * cc * rc +
       s * (-14.0 * l * y * y * ry * std::pow(s, 4) -
            7.0 * l * y * ry * (7.0 * x - 4.0) * s * s -
            6.0 * l * tn * tn * tn * sec * cc * cc * rc +
            l * ry * ((49.0 - 32.0 * x) * x - 14.0) -
            2.0 * tn * sec * (l * (13.0 * x - 4.0) + 3.0) * cc * rc));
  const double b23 = 16.0 * l * rx * cc *
                     (8.0 * (x - 1.0) * c2 + 3.0 * x * sec * sec +
                      10.0 * ry * s * rc - x + 1.0);
  const double a23 = 16.0 * l * rx * cc *
                     (10.0 * (x - 1.0) * c2 + 3.0 * x * sec * sec +
                      2.0 * ry * s * rc + x - 1.0);
  const double b33 =
      l * (x - 1.0) *
      (32.0 * c2 * rc + 32.0 * x * rc + 32.0 * c4 * sec * sec * cc * rc -
       6.0 * ry * s *
           (4.0 * (3.0 * x - 2.0) * c2 + 3.0 * (x - 1.0) * c4 + 17.0 * x -
            5.0));
  const double a33 =
      16.0 * cc * sec * sec *
      (2.0 * (l * (3.0 * x - 1.0) + 8.0) * rc +
       s * (s * (l * s *
                     (5.0 * (x - 1.0) * s * (3.0 * ry * s + 4.0 * rc) +
                      9.0 * ry * (3.0 - 4.0 * x)) -
                 2.0 * (l * (13.0 * x - 11.0) + 8.0) * rc) +
            12.0 * l * ry * (2.0 * x - 1.0)));
  q.A.resize(2, 2);
  q.B.resize(2, 2);
  q.A << a22 / p, a23 / p, a23 / p, a33 / p;
  q.B << b22 / p, b23 / p, b23 / p, b33 / p;
  return q;
}

namespace {

Eigen::MatrixXcd bdg_matrix(const QuadraticForm& q) {
  const auto k = q.A.rows();
  Eigen::MatrixXcd h(2 * k, 2 * k);
  h << q.A, q.B.conjugate(), q.B, q.A.conjugate();
  return h;
}

Eigen::VectorXd metric(Eigen::Index k) {
  Eigen::VectorXd j(2 * k);
  j << Eigen::VectorXd::Ones(k), -Eigen::VectorXd::Ones(k);
  return j;
}

Eigen::MatrixXcd full_transform(const Eigen::MatrixXcd& u,
                                const Eigen::MatrixXcd& v) {
  const auto k = u.rows();
  const auto m = u.cols();
  Eigen::MatrixXcd t(2 * k, 2 * m);
  t << v, u.conjugate(), u, v.conjugate();
  return t;
}

void fill_residuals(const QuadraticForm& q, BogoliubovResult& r) {
  const auto k = q.A.rows();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!r.zero_mode[i]) keep.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXcd u(k, m);
  Eigen::MatrixXcd v(k, m);
  Eigen::VectorXd e(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    u.col(c) = r.U.col(keep[c]);
    v.col(c) = r.V.col(keep[c]);
    e[c] = r.energies[keep[c]];
  }
  const Eigen::MatrixXcd t = full_transform(u, v);
  const Eigen::VectorXd jk = metric(k);
  const Eigen::VectorXd jm = metric(m);
  Eigen::MatrixXcd gram = t.adjoint() * jk.asDiagonal() * t;
  gram -= jm.cast<cdouble>().asDiagonal();
  r.symplectic_residual = m > 0 ? gram.cwiseAbs().maxCoeff() : 0.0;
  if (m == k) {
    Eigen::MatrixXcd tjt = t * jk.asDiagonal() * t.adjoint();
    tjt -= jk.cast<cdouble>().asDiagonal();
    r.symplectic_residual =
        std::max(r.symplectic_residual, tjt.cwiseAbs().maxCoeff());
  }
  if (m > 0) {
    Eigen::VectorXd ee(2 * m);
    ee << e, e;
    Eigen::MatrixXcd d = t.adjoint() * bdg_matrix(q) * t;
    d -= ee.cast<cdouble>().asDiagonal();
    r.diagonal_residual = d.cwiseAbs().maxCoeff();
  }
}

void sort_by_energy(BogoliubovResult& r) {
  const auto k = r.energies.size();
  std::vector<Eigen::Index> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return r.energies[a] < r.energies[b];
  });
  BogoliubovResult s = r;
  for (Eigen::Index i = 0; i < k; ++i) {
    s.energies[i] = r.energies[order[i]];
    s.U.col(i) = r.U.col(order[i]);
    s.V.col(i) = r.V.col(order[i]);
    s.zero_mode[i] = r.zero_mode[order[i]];
  }
  r = std::move(s);
}

bool try_colpa(const QuadraticForm& q, BogoliubovResult& r) {
  const auto k = q.A.rows();
  const Eigen::MatrixXcd h = bdg_matrix(q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hs(h, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, hs.eigenvalues().cwiseAbs().maxCoeff());
  if (hs.eigenvalues().minCoeff() <= 1e-10 * scale) return false;
  Eigen::LLT<Eigen::MatrixXcd> llt(h);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXcd l = llt.matrixL();
  const Eigen::VectorXd j = metric(k);
  const Eigen::MatrixXcd w = l.adjoint() * j.asDiagonal() * l;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ws(w);
  // Ascending order: the last k eigenvalues are the positive branch.
  const Eigen::VectorXd eps = ws.eigenvalues().tail(k);
  Eigen::MatrixXcd x = ws.eigenvectors().rightCols(k);
  for (Eigen::Index i = 0; i < k; ++i) x.col(i) *= std::sqrt(eps[i]);
  const Eigen::MatrixXcd t = l.adjoint().triangularView<Eigen::Upper>().solve(x);
  r.V = t.topRows(k);
  r.U = t.bottomRows(k);
  r.energies = eps;
  r.zero_mode.assign(k, false);
  r.colpa = true;
  return true;
}

void general_path(const QuadraticForm& q, const SymplecticOptions& opt,
                  BogoliubovResult& r) {
  const auto k = q.A.rows();
  const Eigen::VectorXd j = metric(k);
  const Eigen::MatrixXcd d = j.asDiagonal() * bdg_matrix(q);
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(d);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("eigen-decomposition of J*M failed");
  }
  struct Mode {
    double energy;
    Eigen::VectorXcd vec;
  };
  std::vector<Mode> positive;
  std::vector<double> zeros;
  for (Eigen::Index i = 0; i < 2 * k; ++i) {
    const cdouble w = es.eigenvalues()[i];
    const Eigen::VectorXcd v = es.eigenvectors().col(i);
    const double norm = (v.adjoint() * j.asDiagonal() * v)(0, 0).real();
    // A defective pair has vanishing symplectic norm and cannot be
    // normalized; rounding splits it by about sqrt(eps), so small
    // eigenvalues of that kind are zero modes at working precision.
    const bool defective = std::abs(norm) < 1e-6 && std::abs(w) < 1e-6 * scale;
    if (std::abs(w) < opt.zero_tol || defective) {
      zeros.push_back(std::abs(w));
      continue;
    }
    if (std::abs(w.imag()) > opt.instability_tol * std::max(1.0, std::abs(w.real()))) {
      throw UnstableExpansion("unstable expansion point: complex excitation energy");
    }
    if (std::abs(norm) < 1e-6) throw std::runtime_error("symplectic norm vanishes");
    if (norm > 0.0) positive.push_back({w.real(), v / std::sqrt(norm)});
  }
  std::stable_sort(positive.begin(), positive.end(),
                   [](const Mode& a, const Mode& b) { return a.energy < b.energy; });
  // Symplectic Gram-Schmidt inside degenerate clusters.
  for (std::size_t a = 0; a < positive.size(); ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      const double tol = 1e-8 * std::max(1.0, std::abs(positive[a].energy));
      if (std::abs(positive[a].energy - positive[b].energy) > tol) continue;
      const cdouble proj =
          (positive[b].vec.adjoint() * j.asDiagonal() * positive[a].vec)(0, 0);
      positive[a].vec -= proj * positive[b].vec;
    }
    const double n =
        (positive[a].vec.adjoint() * j.asDiagonal() * positive[a].vec)(0, 0).real();
    positive[a].vec /= std::sqrt(n);
  }
  const auto p = static_cast<Eigen::Index>(positive.size());
  if (p > k) throw std::runtime_error("symplectic pairing failed");
  std::sort(zeros.begin(), zeros.end());
  r.U = Eigen::MatrixXcd::Zero(k, k);
  r.V = Eigen::MatrixXcd::Zero(k, k);
  r.energies.resize(k);
  r.zero_mode.assign(k, false);
  for (Eigen::Index i = 0; i < p; ++i) {
    r.V.col(i) = positive[i].vec.head(k);
    r.U.col(i) = positive[i].vec.tail(k);
    r.energies[i] = positive[i].energy;
  }
  for (Eigen::Index i = p; i < k; ++i) {
    const std::size_t z = static_cast<std::size_t>(2 * (i - p) + 1);
    r.energies[i] = z < zeros.size() ? zeros[z] : 0.0;
    r.zero_mode[i] = true;
  }
  r.colpa = false;
}

}  // namespace

BogoliubovResult symplectic_diagonalize(const QuadraticForm& q,
                                        const SymplecticOptions& opt) {
  const auto k = q.A.rows();
  if (q.A.cols() != k || q.B.rows() != k || q.B.cols() != k) {
    throw std::invalid_argument("A and B must be square of equal size");
  }
  if (q.linear.size() != 0 && q.linear.norm() > opt.linear_tol) {
    throw std::invalid_argument("expansion point is not stationary");
  }
  const double scale = std::max(1.0, q.A.cwiseAbs().maxCoeff());
  if ((q.A - q.A.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale ||
      (q.B - q.B.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("A must be Hermitian and B symmetric");
  }
  BogoliubovResult r;
  if (!try_colpa(q, r)) general_path(q, opt, r);
  sort_by_energy(r);
  fill_residuals(q, r);
  return r;
}

int hessian_nullity(const HessianBlock& h, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h.M());
  const auto& s = svd.singularValues();
  const double cut = tol * std::max(1.0, s.maxCoeff());
  return static_cast<int>((s.array() <= cut).count());
}

int periodic_mode_index(int k, int k_max) {
  if (k == 0 || std::abs(k) > k_max) throw std::out_of_range("momentum");
  return k < 0 ? k + k_max : k_max + k - 1;
}

QuadraticForm periodic_quadratic(double lambda, int k_max) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  const int n = 2 * k_max;
  QuadraticForm q;
  q.linear = Eigen::VectorXcd::Zero(n);
  q.A = Eigen::MatrixXcd::Zero(n, n);
  q.B = Eigen::MatrixXcd::Zero(n, n);
  for (int k = 1; k <= k_max; ++k) {
    const int p = periodic_mode_index(k, k_max);
    const int m = periodic_mode_index(-k, k_max);
    q.A(p, p) = k * k - lambda / 2.0;
    q.A(m, m) = k * k - lambda / 2.0;
    q.B(p, m) = -lambda / 2.0;
    q.B(m, p) = -lambda / 2.0;
  }
  return q;
}

double periodic_epsilon(int k, double lambda) {
  const double k2 = static_cast<double>(k) * k;
  return std::sqrt(k2 * (k2 - lambda));
}

double periodic_u2(int k, double lambda) {
  const double k2 = static_cast<double>(k) * k;
  return 0.5 * (1.0 + (k2 - lambda / 2.0) / periodic_epsilon(k, lambda));
}

double periodic_v2(int k, double lambda) {
  const double k2 = static_cast<double>(k) * k;
  return 0.5 * ((k2 - lambda / 2.0) / periodic_epsilon(k, lambda) - 1.0);
}

GapPoint dirichlet_gap_at(const CNumberPoint& point, double lambda) {
  GapPoint g;
  g.lambda = lambda;
  g.point = point;
  g.has_point = true;
  const QuadraticForm q = expand_quadratic(dirichlet3_terms(lambda), point, 1.0);
  g.det_m = q.hessian().M().determinant().real();
  try {
    const BogoliubovResult r = symplectic_diagonalize(q);
    g.gap = r.energies.minCoeff();
    g.stable = true;
  } catch (const UnstableExpansion&) {
    g.stable = false;
    g.gap = std::numeric_limits<double>::quiet_NaN();
  }
  return g;
}

std::vector<GapPoint> dirichlet_gap_curve(
    const std::vector<double>& lambda_grid) {
  std::vector<GapPoint> out;
  out.reserve(lambda_grid.size());
  for (double l : lambda_grid) {
    auto m = interior_minimum(l);
    if (!m) {
      GapPoint g;
      g.lambda = l;
      g.gap = std::numeric_limits<double>::quiet_NaN();
      g.det_m = std::numeric_limits<double>::quiet_NaN();
      out.push_back(g);
      continue;
    }
    out.push_back(dirichlet_gap_at(m->point, l));
  }
  return out;
}

}  // namespace gapless
