#pragma once

#include "gapless/cnumber.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace gapless::oracle {

// Central finite differences of a real function of complex amplitudes,
// converted to Wirtinger derivatives.
struct Expansion {
  Eigen::VectorXcd gradient;  // df / da_k
  Eigen::MatrixXcd A;         // d^2 f / da_k^* da_j
  Eigen::MatrixXcd B;         // d^2 f / da_k da_j
};

inline Expansion wirtinger_fd_raw(
    const std::function<double(const Eigen::VectorXcd&)>& f,
    const Eigen::VectorXcd& a, double h) {
  const auto k = a.size();
  const auto n = 2 * k;
  auto shifted = [&](Eigen::Index i, double d) {
    Eigen::VectorXcd b = a;
    if (i < k) {
      b[i] += d;
    } else {
      b[i - k] += cdouble(0.0, d);
    }
    return b;
  };
  Eigen::VectorXd g(n);
  Eigen::MatrixXd hr(n, n);
  const double f0 = f(a);
  for (Eigen::Index i = 0; i < n; ++i) {
    g[i] = (f(shifted(i, h)) - f(shifted(i, -h))) / (2.0 * h);
    hr(i, i) = (f(shifted(i, h)) - 2.0 * f0 + f(shifted(i, -h))) / (h * h);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      auto both = [&](double di, double dj) {
        Eigen::VectorXcd b = shifted(i, di);
        const Eigen::VectorXcd c = shifted(j, dj);
        b += c - a;
        return f(b);
      };
      hr(i, j) = hr(j, i) =
          (both(h, h) - both(h, -h) - both(-h, h) + both(-h, -h)) / (4.0 * h * h);
    }
  }
  Expansion e;
  e.gradient.resize(k);
  e.A.resize(k, k);
  e.B.resize(k, k);
  for (Eigen::Index p = 0; p < k; ++p) {
    e.gradient[p] = 0.5 * cdouble(g[p], -g[p + k]);
    for (Eigen::Index q = 0; q < k; ++q) {
      const double uu = hr(p, q);
      const double vv = hr(p + k, q + k);
      const double uv = hr(p, q + k);
      const double vu = hr(p + k, q);
      e.A(p, q) = 0.25 * cdouble(uu + vv, vu - uv);
      e.B(p, q) = 0.25 * cdouble(uu - vv, -(uv + vu));
    }
  }
  return e;
}

// Richardson extrapolation of two step sizes removes the h^2 error.
inline Expansion wirtinger_fd(
    const std::function<double(const Eigen::VectorXcd&)>& f,
    const Eigen::VectorXcd& a, double h) {
  const Expansion c = wirtinger_fd_raw(f, a, h);
  const Expansion d = wirtinger_fd_raw(f, a, 0.5 * h);
  return {(4.0 * d.gradient - c.gradient) / 3.0, (4.0 * d.A - c.A) / 3.0,
          (4.0 * d.B - c.B) / 3.0};
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

template <class M1, class M2>
double rel_err(const M1& a, const M2& b) {
  const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Random interior point of the Dirichlet landscape at vanishing phases,
// kept away from the x = 1 and cos(theta) = 0 singular edges.
inline CNumberPoint random_interior(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(0.05, 0.9);
  std::uniform_real_distribution<double> ut(0.02, 1.3);
  CNumberPoint p;
  p.x = ux(rng);
  p.theta = ut(rng);
  return p;
}

}  // namespace gapless::oracle
