#pragma once

#include "gapless/fock.hpp"

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <utility>
#include <vector>

namespace gapless {

using cdouble = std::complex<double>;

// Condensate parametrization of the three-mode Dirichlet model.
struct CNumberPoint {
  double x = 0.0;
  double theta = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

// Energy per particle of the three-mode Dirichlet landscape.
double h_bog(const CNumberPoint& p, double lambda);

// <a|H|a> for a coherent state with the given amplitude for every mode.
double c_number_energy(const std::vector<Term>& terms,
                       const Eigen::VectorXcd& amplitudes);

// Same, with the condensate mode fixed by sqrt(N - sum |a_k|^2). The
// amplitudes cover the remaining modes in index order.
double h_bog_generic(const std::vector<Term>& terms, int condensate_mode,
                     const Eigen::VectorXcd& amplitudes, double particles);

struct HessianBlock {
  Eigen::MatrixXcd A;  // d^2 H / da_k^* da_j
  Eigen::MatrixXcd B;  // d^2 H / da_k da_j
  Eigen::MatrixXcd M() const;
};

// Exact Wirtinger derivatives of h_bog_generic up to second order.
struct AmplitudeExpansion {
  double value = 0.0;
  Eigen::VectorXcd gradient;  // dH / da_k
  HessianBlock hessian;
};

AmplitudeExpansion expand_amplitudes(const std::vector<Term>& terms,
                                     int condensate_mode,
                                     const Eigen::VectorXcd& amplitudes,
                                     double particles);

struct GradientHessian {
  Eigen::Vector2d grad;  // (d/dx, d/dtheta)
  Eigen::Matrix2d hess;
};

// Closed-form derivatives per particle at delta2 = delta3 = 0.
GradientHessian gradient_hessian(const CNumberPoint& p, double lambda);

Eigen::Vector3cd pattern_vector(const CNumberPoint& p, double particles,
                                bool include_phases = true);

// Amplitudes of modes 2 and 3 for the Dirichlet fluctuation space.
Eigen::VectorXcd fluctuation_amplitudes(const CNumberPoint& p,
                                        double particles);

// Stationary inflection conditions in complex amplitudes at a point.
HessianBlock dirichlet_hessian_block(const CNumberPoint& p, double lambda);

struct Minimum {
  CNumberPoint point;
  double energy = 0.0;
};

struct Inflection {
  CNumberPoint point;
  double det_m = 0.0;
};

struct LandscapeResult {
  double lambda = 0.0;
  std::vector<Minimum> minima;  // global minimum first
  std::optional<Inflection> inflection;
  std::vector<std::pair<double, double>> marginal_curve;
};

// The landscape is explored with a signed angle: theta < 0 at delta3 = 0 is
// the same point as |theta| at delta3 = pi.
CNumberPoint from_signed_angle(double x, double signed_theta);
double signed_angle(const CNumberPoint& p);

// min over theta and delta3 of h_bog at fixed x; returns (energy, signed theta)
std::pair<double, double> valley(double x, double lambda);

// Second derivative of the valley curve E_min(x).
double valley_curvature(double x, double lambda);
double valley_slope(double x, double lambda);

Minimum local_minimize(double x0, double signed_theta0, double lambda);

LandscapeResult scan_landscape(double lambda);
std::vector<LandscapeResult> ground_state_scan(
    const std::vector<double>& lambda_grid);

// x > 0 points where the valley slope vanishes.
std::vector<double> interior_stationary_points(double lambda);
std::optional<double> inflection_x(double lambda);

std::optional<Minimum> boundary_minimum(double lambda);
std::optional<Minimum> interior_minimum(double lambda);

double find_lambda_gs();

struct FoldPoint {
  double lambda = 0.0;
  CNumberPoint point;
};
FoldPoint find_lambda_lm_dirichlet();

// Periodic three-mode landscape with a_{-1} = a_1 and a_0 eliminated.
double periodic_h_bog(cdouble a1, double alpha, double particles);
HessianBlock periodic_hessian_at_origin(double lambda);
double find_lambda_lm_periodic();

double coherent_overlap(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);
bool distinguishable(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b,
                     double threshold = 9.0);

}  // namespace gapless
