#pragma once

#include "gapless/fock.hpp"
#include "gapless/models.hpp"

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gapless {

// Eigenpairs of the operator restricted to a subset of basis states.
struct SpectralDecomposition {
  Eigen::VectorXd energies;  // ascending
  Eigen::MatrixXd vectors;   // rows follow `indices`
  std::shared_ptr<const FockBasis> basis;
  std::vector<std::size_t> indices;
};

constexpr std::size_t kDefaultDenseCap = 20000;

SpectralDecomposition diagonalize(const ManyBodyOperator& op,
                                  std::size_t cap = kDefaultDenseCap);
// The block must be invariant under the operator.
SpectralDecomposition diagonalize_block(const ManyBodyOperator& op,
                                        const std::vector<std::size_t>& indices,
                                        std::size_t cap = kDefaultDenseCap);

// Full dense spectrum through LAPACK dsyevd; `a` is overwritten.
Eigen::VectorXd dense_eigensystem(Eigen::MatrixXd& a);

struct Eigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;
};

// Restarted Lanczos with full reorthogonalization.
Eigenpair lowest_eigenpair(const SparseMatrix& m, const Eigen::VectorXd& start,
                           double tol = 1e-10);
Eigenpair ground_state(const ManyBodyOperator& op, std::uint64_t seed = 0);

// States whose n_mode has the given parity.
std::vector<std::size_t> parity_sector(const FockBasis& basis, int mode,
                                       int parity);

std::vector<std::array<double, 3>> ground_state_occupations(
    const std::vector<double>& lambda_grid, int particles);

enum class ConstraintMethod { multiplier, penalty, none };

class ConstraintError : public std::runtime_error {
 public:
  ConstraintError(const std::string& what, double violation)
      : std::runtime_error(what), m_violation(violation) {}
  double violation() const { return m_violation; }

 private:
  double m_violation;
};

struct InflectionStateSpec {
  double x_target = 0.0;
  std::array<double, 3> windows{0.4, 0.375, 0.225};
  std::array<double, 3> center{1.0, 0.0, 0.0};
  ConstraintMethod method = ConstraintMethod::multiplier;
  double tolerance = 1e-3;
  // Parity of n_2 imposed on the subspace; empty keeps both sectors.
  std::optional<int> parity;
  std::uint64_t seed = 0;
};

InflectionStateSpec inflection_spec_for(double lambda);

// Parity of the integer closest to x_target * particles.
int nearest_parity(double x_target, int particles);

// Parity of n_2 opposite to that of N / 2 for even N; nearest_parity for odd N.
int half_n_parity(double x_target, int particles);

struct InflectionState {
  Eigen::VectorXd amplitudes;  // full basis
  double n2_rel = 0.0;
  double multiplier = 0.0;
  std::size_t subspace_dim = 0;
};

std::vector<std::size_t> window_states(const FockBasis& basis,
                                       const InflectionStateSpec& spec);
InflectionState build_inflection_state(const InflectionStateSpec& spec,
                                       const ManyBodyOperator& op);

struct EvolutionTrace {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<double> values;
  double f_mean = 0.0;
  double t_coh = 0.0;
};

// <psi(t)| diag(observable) |psi(t)> from the spectral representation.
EvolutionTrace evolve_observable(const Eigen::VectorXd& state,
                                 const SpectralDecomposition& decomp,
                                 const Eigen::VectorXd& observable,
                                 const std::vector<double>& times,
                                 double keep_tol = 1e-10);

Eigen::VectorXcd evolve_state(const Eigen::VectorXd& state,
                              const SpectralDecomposition& decomp, double t);

std::vector<double> uniform_times(double t_end, std::size_t samples);

struct FrequencySummary {
  double f_mean = 0.0;
  double t_coh = 0.0;
};

// c_i for frequencies i * f1, i = 1..n_max, over one period of f1 after
// removing the mean. The FFT is used when the grid allows it.
std::vector<std::complex<double>> fourier_coefficients(
    const std::vector<double>& values, double dt, double f1, int n_max,
    bool allow_fft = true);

// Mean frequency weighted by |c_i|^2 at frequencies i * f1, i = 1..n_max.
FrequencySummary mean_frequency(const std::vector<double>& values, double dt,
                                double f1, int n_max);
void mean_frequency(EvolutionTrace& trace, double f1, int n_max);

// Which n_2 parity sector hosts the initial state.
enum class ParityRule { half_n, nearest, odd, even, both };

struct CoherenceOptions {
  double f1 = 1.0 / 3000.0;
  int n_max = 12000;
  std::size_t samples = 24000;
  ConstraintMethod method = ConstraintMethod::multiplier;
  ParityRule parity = ParityRule::half_n;
  // Eigencomponents of the initial state below this magnitude are dropped.
  double keep_tol = 1e-4;
  bool keep_trace = false;
  std::uint64_t seed = 0;
};

struct CoherenceResult {
  int particles = 0;
  double lambda = 0.0;
  double x_target = 0.0;
  double n2_rel = 0.0;
  std::size_t subspace_dim = 0;
  std::size_t sector_dim = 0;
  double f_mean = 0.0;
  double t_coh = 0.0;
  std::optional<EvolutionTrace> trace;
};

CoherenceResult coherence_time(int particles, double lambda,
                               const CoherenceOptions& opt = {});

struct PeakSearch {
  double coarse_step = 0.0025;
  double fine_step = 0.0005;
  double fine_halfwidth = 0.005;
  int threads = 1;
};

struct PeakResult {
  double lambda_peak = 0.0;
  std::vector<CoherenceResult> samples;  // sorted by lambda
};

// Coarse scan, fine scan around the coarse argmax, parabolic vertex.
PeakResult locate_coherence_peak(int particles, double lo, double hi,
                                 const CoherenceOptions& opt = {},
                                 const PeakSearch& search = {});

double parabolic_vertex(double x0, double y0, double x1, double y1, double x2,
                        double y2);

struct FitPoint {
  double particles;
  double lambda_n;
};

struct FitResult {
  double lambda_lm = 0.0;
  double a = 0.0;
  double b = 0.0;
  double residual = 0.0;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, FitResult last)
      : std::runtime_error(what), m_last(last) {}
  const FitResult& last() const { return m_last; }

 private:
  FitResult m_last;
};

// lambda_N = lambda_lm + a N^-b; lambda_lm is held when fixed is given.
FitResult fit_lambda_scaling(const std::vector<FitPoint>& points,
                             std::optional<double> fixed_lambda_lm = {});

// <a_k^dag a_l>; mode index i is Dirichlet momentum i + 1.
Eigen::MatrixXd one_body_density(const FockBasis& basis,
                                 const Eigen::VectorXd& state);
std::vector<double> position_density(const FockBasis& basis,
                                     const Eigen::VectorXd& state,
                                     const std::vector<double>& z_grid);

// Zero-momentum sector of the periodic k = -1, 0, 1 truncation.
std::shared_ptr<const FockBasis> periodic_zero_momentum_basis(int particles);

struct PeriodicPoint {
  double lambda = 0.0;
  double n0_rel = 0.0;
  double n1_rel = 0.0;
  double gap = 0.0;
};

std::vector<PeriodicPoint> periodic_finite_n_checks(
    int particles, const std::vector<double>& lambda_grid);

struct GapMinimum {
  double lambda = 0.0;
  double gap = 0.0;
};
GapMinimum periodic_gap_minimum(int particles, double lo = 0.8,
                                double hi = 1.5);

// Linear regression slope of log(gap_min) against log(N), negated.
double gap_scaling_exponent(const std::vector<int>& particles,
                            const std::vector<GapMinimum>& minima);

int probe_cutoff(double gamma);
std::vector<ProbeOccupations> probe_occupations_exact(
    const ExternalProbeParams& p, const std::vector<double>& times);

}  // namespace gapless
