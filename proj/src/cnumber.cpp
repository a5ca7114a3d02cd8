#include "gapless/cnumber.hpp"

#include "gapless/models.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gapless {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;

// Value, first and second Wirtinger derivatives in (a_1..a_K, a_1*..a_K*).
struct Jet {
  cdouble v;
  Eigen::VectorXcd g;
  Eigen::MatrixXcd h;

  static Jet constant(cdouble c, int n) {
    return {c, Eigen::VectorXcd::Zero(n), Eigen::MatrixXcd::Zero(n, n)};
  }
  static Jet variable(cdouble value, int slot, int n) {
    Jet j = constant(value, n);
    j.g[slot] = 1.0;
    return j;
  }
};

Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.v = a.v * b.v;
  r.g = a.g * b.v + b.g * a.v;
  r.h = a.h * b.v + b.h * a.v + a.g * b.g.transpose() +
        b.g * a.g.transpose();
  return r;
}

Jet condensate_jet(const Eigen::VectorXcd& amps, double particles) {
  const int k = static_cast<int>(amps.size());
  const int n = 2 * k;
  double rest = particles - amps.squaredNorm();
  if (rest < 0.0) {
    throw std::domain_error("condensate depletion exceeds N");
  }
  Eigen::VectorXcd rg(n);
  Eigen::MatrixXcd rh = Eigen::MatrixXcd::Zero(n, n);
  for (int j = 0; j < k; ++j) {
    rg[j] = -std::conj(amps[j]);
    rg[k + j] = -amps[j];
    rh(j, k + j) = -1.0;
    rh(k + j, j) = -1.0;
  }
  const double s = std::sqrt(rest);
  Jet out = Jet::constant(s, n);
  if (s > 0.0) {
    out.g = rg / (2.0 * s);
    out.h = rh / (2.0 * s) - rg * rg.transpose() / (4.0 * s * s * s);
  } else {
    out.g.setConstant(std::numeric_limits<double>::quiet_NaN());
    out.h.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

Jet substitute(const std::vector<Term>& terms, int condensate_mode,
               const Eigen::VectorXcd& amps, double particles) {
  const int k = static_cast<int>(amps.size());
  const int n = 2 * k;
  const Jet s = condensate_jet(amps, particles);
  auto slot = [&](int mode) {
    if (mode < 0 || mode > k) throw std::out_of_range("mode index");
    return mode < condensate_mode ? mode : mode - 1;
  };
  Jet total = Jet::constant(0.0, n);
  for (const auto& t : terms) {
    Jet m = Jet::constant(t.coefficient, n);
    for (int c : t.creators) {
      if (c == condensate_mode) {
        m = m * s;
      } else {
        int j = slot(c);
        m = m * Jet::variable(std::conj(amps[j]), k + j, n);
      }
    }
    for (int a : t.annihilators) {
      if (a == condensate_mode) {
        m = m * s;
      } else {
        int j = slot(a);
        m = m * Jet::variable(amps[j], j, n);
      }
    }
    total.v += m.v;
    total.g += m.g;
    total.h += m.h;
  }
  return total;
}

}  // namespace

double h_bog(const CNumberPoint& p, double lambda) {
  const double x = p.x;
  const double t = p.theta;
  const double d2 = p.delta2;
  const double d3 = p.delta3;
  const double ct = std::cos(t);
  const double st = std::sin(t);
  const double s2t = std::sin(2.0 * t);
  const double y = 1.0 - x;
  const double kinetic = 0.25 * (1.0 + 3.0 * x + 8.0 * y * st * st);
  const double bracket =
      s2t * s2t * y * y * (0.5 + std::cos(2.0 * d3)) + 3.0 + 2.0 * x -
      2.0 * x * x +
      4.0 * x * y *
          (std::cos(2.0 * d2) * ct * ct +
           std::cos(2.0 * d2 - 2.0 * d3) * st * st) +
      2.0 * s2t * y *
          (x * std::cos(2.0 * d2 - d3) +
           std::cos(d3) * (2.0 * x - y * ct * ct));
  return kinetic - lambda / 8.0 * bracket;
}

double c_number_energy(const std::vector<Term>& terms,
                       const Eigen::VectorXcd& amplitudes) {
  cdouble total = 0.0;
  const auto k = amplitudes.size();
  for (const auto& t : terms) {
    cdouble m = t.coefficient;
    for (int c : t.creators) {
      if (c < 0 || c >= k) throw std::out_of_range("mode index");
      m *= std::conj(amplitudes[c]);
    }
    for (int a : t.annihilators) {
      if (a < 0 || a >= k) throw std::out_of_range("mode index");
      m *= amplitudes[a];
    }
    total += m;
  }
  return total.real();
}

double h_bog_generic(const std::vector<Term>& terms, int condensate_mode,
                     const Eigen::VectorXcd& amplitudes, double particles) {
  const int k = static_cast<int>(amplitudes.size());
  if (condensate_mode < 0 || condensate_mode > k) {
    throw std::out_of_range("condensate mode index");
  }
  const double rest = particles - amplitudes.squaredNorm();
  if (rest < 0.0) throw std::domain_error("condensate depletion exceeds N");
  Eigen::VectorXcd full(k + 1);
  for (int m = 0, j = 0; m <= k; ++m) {
    full[m] = (m == condensate_mode) ? cdouble(std::sqrt(rest)) : amplitudes[j++];
  }
  return c_number_energy(terms, full);
}

Eigen::MatrixXcd HessianBlock::M() const {
  const auto k = A.rows();
  Eigen::MatrixXcd m(2 * k, 2 * k);
  m << B.conjugate(), A, A.transpose(), B;
  return m;
}

AmplitudeExpansion expand_amplitudes(const std::vector<Term>& terms,
                                     int condensate_mode,
                                     const Eigen::VectorXcd& amplitudes,
                                     double particles) {
  const int k = static_cast<int>(amplitudes.size());
  if (condensate_mode < 0 || condensate_mode > k) {
    throw std::out_of_range("condensate mode index");
  }
  Jet j = substitute(terms, condensate_mode, amplitudes, particles);
  AmplitudeExpansion out;
  out.value = j.v.real();
  out.gradient = j.g.head(k);
  out.hessian.A = j.h.block(k, 0, k, k);
  out.hessian.B = j.h.block(0, 0, k, k);
  return out;
}

GradientHessian gradient_hessian(const CNumberPoint& p, double l) {
  if (p.delta2 != 0.0 || p.delta3 != 0.0) {
    throw std::invalid_argument("closed forms need vanishing phases");
  }
  const double x = p.x;
  const double t = p.theta;
  const double s2 = std::sin(2.0 * t);
  const double c2 = std::cos(2.0 * t);
  const double s4 = std::sin(4.0 * t);
  const double c4 = std::cos(4.0 * t);
  GradientHessian r;
  r.grad[0] = (-16.0 * l * s2 - 2.0 * l * s4 + 16.0 * c2 - 9.0 * l +
               28.0 * l * x * s2 + 2.0 * l * x * s4 +
               3.0 * l * (x - 1.0) * c4 + 21.0 * l * x - 4.0) /
              16.0;
  r.grad[1] = (x - 1.0) / 4.0 *
              (-8.0 * s2 + l * (x - 1.0) * c4 -
               l * c2 * (3.0 * (x - 1.0) * s2 - 7.0 * x + 1.0));
  r.hess(0, 0) = l * (28.0 * s2 + 2.0 * s4 + 3.0 * c4 + 21.0) / 16.0;
  r.hess(0, 1) = (-8.0 * s2 + 2.0 * l * (7.0 * x - 4.0) * c2 +
                  l * (x - 1.0) * (2.0 * c4 - 3.0 * s4)) /
                 4.0;
  r.hess(1, 0) = r.hess(0, 1);
  r.hess(1, 1) = 0.5 * (1.0 - x) *
                 (8.0 * c2 + l * ((7.0 * x - 1.0) * s2 +
                                  2.0 * (x - 1.0) * s4 +
                                  3.0 * (x - 1.0) * c4));
  return r;
}

Eigen::Vector3cd pattern_vector(const CNumberPoint& p, double particles,
                                bool include_phases) {
  const double rn = std::sqrt(particles);
  const double y = std::sqrt(1.0 - p.x);
  const double d2 = include_phases ? p.delta2 : 0.0;
  const double d3 = include_phases ? p.delta3 : 0.0;
  return {rn * y * std::cos(p.theta), std::polar(rn * std::sqrt(p.x), d2),
          std::polar(rn * y * std::sin(p.theta), d3)};
}

Eigen::VectorXcd fluctuation_amplitudes(const CNumberPoint& p,
                                        double particles) {
  Eigen::Vector3cd a = pattern_vector(p, particles, true);
  return a.tail(2);
}

HessianBlock dirichlet_hessian_block(const CNumberPoint& p, double lambda) {
  return expand_amplitudes(dirichlet3_terms(lambda), 0,
                           fluctuation_amplitudes(p, 1.0), 1.0)
      .hessian;
}

CNumberPoint from_signed_angle(double x, double signed_theta) {
  CNumberPoint p;
  p.x = x;
  p.theta = std::abs(signed_theta);
  p.delta3 = signed_theta < 0.0 ? kPi : 0.0;
  return p;
}

double signed_angle(const CNumberPoint& p) {
  if (p.delta3 == 0.0) return p.theta;
  if (p.delta3 == kPi) return -p.theta;
  throw std::invalid_argument("landscape branch needs delta3 in {0, pi}");
}

namespace {

double h_signed(double x, double t, double lambda) {
  CNumberPoint p;
  p.x = x;
  p.theta = t;
  return h_bog(p, lambda);
}

GradientHessian gh_signed(double x, double t, double lambda) {
  CNumberPoint p;
  p.x = x;
  p.theta = t;
  return gradient_hessian(p, lambda);
}

double polish_theta(double x, double t, double lambda) {
  for (int it = 0; it < 8; ++it) {
    auto d = gh_signed(x, t, lambda);
    if (!(d.hess(1, 1) > 0.0)) break;
    double step = d.grad[1] / d.hess(1, 1);
    double next = std::clamp(t - step, -kHalfPi, kHalfPi);
    if (std::abs(gh_signed(x, next, lambda).grad[1]) >= std::abs(d.grad[1])) {
      break;
    }
    if (std::abs(next - t) < 1e-16) {
      t = next;
      break;
    }
    t = next;
  }
  return t;
}

template <class F>
double bracket_root(F f, double lo, double hi, double flo, double fhi) {
  boost::uintmax_t iters = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(52);
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace

std::pair<double, double> valley(double x, double lambda) {
  constexpr int kGrid = 64;
  int best = 0;
  double best_e = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    double t = -kHalfPi + kPi * i / kGrid;
    double e = h_signed(x, t, lambda);
    if (e < best_e) {
      best_e = e;
      best = i;
    }
  }
  double lo = -kHalfPi + kPi * std::max(best - 1, 0) / kGrid;
  double hi = -kHalfPi + kPi * std::min(best + 1, kGrid) / kGrid;
  auto r = boost::math::tools::brent_find_minima(
      [&](double t) { return h_signed(x, t, lambda); }, lo, hi,
      std::numeric_limits<double>::digits / 2);
  double t = polish_theta(x, r.first, lambda);
  return {h_signed(x, t, lambda), t};
}

double valley_slope(double x, double lambda) {
  const double t = valley(x, lambda).second;
  return gh_signed(x, t, lambda).grad[0];
}

double valley_curvature(double x, double lambda) {
  const double t = valley(x, lambda).second;
  auto d = gh_signed(x, t, lambda);
  return d.hess(0, 0) - d.hess(0, 1) * d.hess(0, 1) / d.hess(1, 1);
}

Minimum local_minimize(double x0, double t0, double lambda) {
  Eigen::Vector2d p(std::clamp(x0, 0.0, 1.0),
                    std::clamp(t0, -kHalfPi, kHalfPi));
  const Eigen::Vector2d lo(0.0, -kHalfPi);
  const Eigen::Vector2d hi(1.0, kHalfPi);
  auto f = [&](const Eigen::Vector2d& q) { return h_signed(q[0], q[1], lambda); };
  double fp = f(p);
  for (int it = 0; it < 500; ++it) {
    auto d = gh_signed(p[0], p[1], lambda);
    std::array<bool, 2> active{};
    for (int i = 0; i < 2; ++i) {
      active[i] = (p[i] <= lo[i] && d.grad[i] > 0.0) ||
                  (p[i] >= hi[i] && d.grad[i] < 0.0);
    }
    Eigen::Vector2d pg = d.grad;
    for (int i = 0; i < 2; ++i) {
      if (active[i]) pg[i] = 0.0;
    }
    if (pg.norm() <= 1e-14) break;

    Eigen::Vector2d dir = -pg;
    if (!active[0] && !active[1]) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(d.hess);
      if (es.eigenvalues().minCoeff() > 0.0) dir = -d.hess.ldlt().solve(pg);
    } else {
      int i = active[0] ? 1 : 0;
      if (!active[i] && d.hess(i, i) > 0.0) dir[i] = -pg[i] / d.hess(i, i);
    }
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::Vector2d q = (p + step * dir).cwiseMax(lo).cwiseMin(hi);
      double fq = f(q);
      if (fq <= fp + 1e-4 * d.grad.dot(q - p)) {
        moved = (q - p).norm() > 0.0;
        p = q;
        fp = fq;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {from_signed_angle(p[0], p[1]), fp};
}

std::vector<double> interior_stationary_points(double lambda) {
  constexpr int kGrid = 400;
  std::vector<double> xs(kGrid);
  std::vector<double> slope(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    xs[i] = (i + 0.5) / kGrid;
    slope[i] = valley_slope(xs[i], lambda);
  }
  std::vector<double> roots;
  for (int i = 0; i + 1 < kGrid; ++i) {
    if ((slope[i] < 0.0) == (slope[i + 1] < 0.0)) continue;
    auto g = [&](double x) { return valley_slope(x, lambda); };
    double r = bracket_root(g, xs[i], xs[i + 1], slope[i], slope[i + 1]);
    // Sign flips at the branch kink are not stationary points.
    if (std::abs(g(r)) < 1e-8) roots.push_back(r);
  }
  return roots;
}

std::optional<double> inflection_x(double lambda) {
  constexpr double kLo = 0.01;
  constexpr double kHi = 0.99;
  constexpr int kGrid = 196;
  double prev_x = kLo;
  double prev = valley_curvature(prev_x, lambda);
  for (int i = 1; i <= kGrid; ++i) {
    double x = kLo + (kHi - kLo) * i / kGrid;
    double c = valley_curvature(x, lambda);
    if (prev < 0.0 && c >= 0.0) {
      auto g = [&](double z) { return valley_curvature(z, lambda); };
      return bracket_root(g, prev_x, x, prev, c);
    }
    prev_x = x;
    prev = c;
  }
  return std::nullopt;
}

std::optional<Minimum> boundary_minimum(double lambda) {
  auto [e, t] = valley(0.0, lambda);
  if (gh_signed(0.0, t, lambda).grad[0] < 0.0) return std::nullopt;
  return Minimum{from_signed_angle(0.0, t), e};
}

std::optional<Minimum> interior_minimum(double lambda) {
  std::optional<Minimum> best;
  for (double x : interior_stationary_points(lambda)) {
    if (valley_curvature(x, lambda) <= 0.0) continue;
    double t = valley(x, lambda).second;
    Minimum m = local_minimize(x, t, lambda);
    if (m.point.x <= 0.0 || m.point.x >= 1.0) continue;
    if (!best || m.energy < best->energy) best = m;
  }
  return best;
}

LandscapeResult scan_landscape(double lambda) {
  LandscapeResult out;
  out.lambda = lambda;

  std::vector<Minimum> candidates;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double x0 = (i + 0.5) / 4.0;
      double t0 = -kHalfPi + kPi * (j + 0.5) / 4.0;
      candidates.push_back(local_minimize(x0, t0, lambda));
    }
  }
  if (auto m = boundary_minimum(lambda)) candidates.push_back(*m);
  if (auto m = interior_minimum(lambda)) candidates.push_back(*m);

  for (const auto& c : candidates) {
    // The x = 1 edge is a flat line where the condensate is empty.
    if (c.point.x >= 1.0 - 1e-9) continue;
    const double tc = signed_angle(c.point);
    if (c.point.x > 0.0) {
      auto d = gh_signed(c.point.x, tc, lambda);
      if (d.grad.norm() > 1e-9) continue;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(d.hess);
      if (es.eigenvalues().minCoeff() < -1e-9) continue;
    }
    bool dup = false;
    for (const auto& m : out.minima) {
      if (std::abs(m.point.x - c.point.x) < 1e-6 &&
          std::abs(signed_angle(m.point) - tc) < 1e-6) {
        dup = true;
      }
    }
    if (!dup) out.minima.push_back(c);
  }
  std::stable_sort(out.minima.begin(), out.minima.end(),
                   [](const Minimum& a, const Minimum& b) {
                     return a.energy < b.energy;
                   });

  if (auto xi = inflection_x(lambda)) {
    double t = valley(*xi, lambda).second;
    CNumberPoint p = from_signed_angle(*xi, t);
    out.inflection =
        Inflection{p, dirichlet_hessian_block(p, lambda).M().determinant().real()};
  }

  constexpr int kCurve = 400;
  out.marginal_curve.reserve(kCurve);
  for (int i = 0; i < kCurve; ++i) {
    double x = static_cast<double>(i) / (kCurve - 1);
    out.marginal_curve.emplace_back(x, valley(x, lambda).first);
  }
  return out;
}

std::vector<LandscapeResult> ground_state_scan(
    const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw std::invalid_argument("empty lambda grid");
  std::vector<LandscapeResult> out;
  out.reserve(lambda_grid.size());
  for (double l : lambda_grid) out.push_back(scan_landscape(l));
  return out;
}

double find_lambda_gs() {
  auto gap = [](double l) {
    auto b = boundary_minimum(l);
    auto i = interior_minimum(l);
    if (!b || !i) throw std::runtime_error("minimum branch missing");
    return b->energy - i->energy;
  };
  double lo = 2.5;
  double hi = 5.0;
  double flo = gap(lo);
  double fhi = gap(hi);
  if (!(flo < 0.0 && fhi > 0.0)) {
    throw std::runtime_error("lambda_gs is not bracketed by [2.5, 5]");
  }
  return bracket_root(gap, lo, hi, flo, fhi);
}

FoldPoint find_lambda_lm_dirichlet() {
  auto slope_at_inflection = [](double l) {
    auto x = inflection_x(l);
    if (!x) throw std::runtime_error("no valley inflection");
    return valley_slope(*x, l);
  };
  // Walk down from 2.5 until the valley becomes monotonic.
  double hi = 2.5;
  double fhi = slope_at_inflection(hi);
  double lo = hi;
  double flo = fhi;
  while (flo <= 0.0) {
    hi = lo;
    fhi = flo;
    lo -= 0.05;
    if (lo < 1.0) throw std::runtime_error("lambda_lm is not bracketed");
    flo = slope_at_inflection(lo);
  }
  double l = bracket_root(slope_at_inflection, lo, hi, flo, fhi);

  double x = *inflection_x(l);
  double t = valley(x, l).second;
  Eigen::Vector3d z(x, t, l);
  auto fold = [](const Eigen::Vector3d& v) {
    auto d = gh_signed(v[0], v[1], v[2]);
    return Eigen::Vector3d(d.grad[0], d.grad[1], d.hess.determinant());
  };
  for (int it = 0; it < 20; ++it) {
    Eigen::Vector3d f = fold(z);
    if (f.cwiseAbs().maxCoeff() < 1e-15) break;
    Eigen::Matrix3d jac;
    for (int i = 0; i < 3; ++i) {
      Eigen::Vector3d h = Eigen::Vector3d::Zero();
      h[i] = 1e-6;
      jac.col(i) = (fold(z + h) - fold(z - h)) / 2e-6;
    }
    Eigen::Vector3d step = jac.fullPivLu().solve(f);
    z -= step;
    if (step.norm() < 1e-15) break;
  }
  return {z[2], from_signed_angle(z[0], z[1])};
}

double periodic_h_bog(cdouble a1, double alpha, double particles) {
  const double n1 = std::norm(a1);
  const cdouble s = a1 + std::conj(a1);
  const cdouble q = 3.0 * n1 + 2.0 * a1 * a1 + 2.0 * std::conj(a1 * a1);
  const cdouble v = particles * particles + 2.0 * particles * s * s -
                    2.0 * n1 * q;
  return (2.0 * n1 - alpha / 4.0 * v).real();
}

HessianBlock periodic_hessian_at_origin(double lambda) {
  HessianBlock h;
  h.A = Eigen::MatrixXcd::Constant(1, 1, 2.0 - lambda);
  h.B = Eigen::MatrixXcd::Constant(1, 1, -lambda);
  return h;
}

double find_lambda_lm_periodic() {
  // det M is affine in lambda.
  const double d0 = periodic_hessian_at_origin(0.0).M().determinant().real();
  const double d2 = periodic_hessian_at_origin(2.0).M().determinant().real();
  return -2.0 * d0 / (d2 - d0);
}

double coherent_overlap(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("length mismatch");
  return std::exp(-(a - b).squaredNorm());
}

bool distinguishable(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b,
                     double threshold) {
  if (a.size() != b.size()) throw std::invalid_argument("length mismatch");
  return (a - b).squaredNorm() >= threshold;
}

}  // namespace gapless
