#pragma once

#include "gapless/cnumber.hpp"
#include "gapless/fock.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace gapless {

// H0 + (linear . alpha + h.c.) + alpha^dag A alpha + (alpha B alpha + h.c.)/2
struct QuadraticForm {
  double constant = 0.0;
  Eigen::VectorXcd linear;
  Eigen::MatrixXcd A;
  Eigen::MatrixXcd B;

  HessianBlock hessian() const { return {A, B}; }
};

class UnstableExpansion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// alpha = V beta + conj(U) beta^dag, one column per excitation.
struct BogoliubovResult {
  Eigen::MatrixXcd U;
  Eigen::MatrixXcd V;
  Eigen::VectorXd energies;  // ascending
  std::vector<bool> zero_mode;
  double symplectic_residual = 0.0;
  double diagonal_residual = 0.0;
  bool colpa = false;

  int zero_mode_count() const;
};

QuadraticForm expand_quadratic(const std::vector<Term>& terms,
                               int condensate_mode,
                               const Eigen::VectorXcd& amplitudes,
                               double particles);

// Three-mode Dirichlet model with mode 1 eliminated; fluctuations in 2, 3.
QuadraticForm expand_quadratic(const std::vector<Term>& terms,
                               const CNumberPoint& point, double particles);

// Hand-derived expansion at vanishing phases.
QuadraticForm dirichlet_quadratic_closed_form(const CNumberPoint& point,
                                              double lambda,
                                              double particles);

struct SymplecticOptions {
  double zero_tol = 1e-8;
  double instability_tol = 1e-8;
  double linear_tol = 1e-6;
};

BogoliubovResult symplectic_diagonalize(const QuadraticForm& q,
                                        const SymplecticOptions& opt = {});

// Ranks M with singular values at or below tol * max(1, sigma_max).
int hessian_nullity(const HessianBlock& h, double tol = 1e-8);

// Modes ordered k = -k_max..-1, 1..k_max.
QuadraticForm periodic_quadratic(double lambda, int k_max);
int periodic_mode_index(int k, int k_max);
double periodic_epsilon(int k, double lambda);
double periodic_u2(int k, double lambda);
double periodic_v2(int k, double lambda);

struct GapPoint {
  double lambda = 0.0;
  bool has_point = false;
  bool stable = false;
  double gap = 0.0;
  double det_m = 0.0;
  CNumberPoint point;
};

// Smallest excitation at an arbitrary landscape point.
GapPoint dirichlet_gap_at(const CNumberPoint& point, double lambda);
std::vector<GapPoint> dirichlet_gap_curve(
    const std::vector<double>& lambda_grid);

}  // namespace gapless
