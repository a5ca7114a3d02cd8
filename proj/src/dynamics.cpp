#include "gapless/dynamics.hpp"

#include "gapless/cnumber.hpp"
#include "gapless/parallel.hpp"

#include <boost/math/tools/minima.hpp>
#include <fftw3.h>
#include <lapacke.h>
#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>

namespace gapless {

namespace {

constexpr std::size_t kDenseSmall = 256;

double max_row_sum(const SparseMatrix& m) {
  double best = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    double row = 0.0;
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) row += std::abs(it.value());
    best = std::max(best, row);
  }
  return best;
}

SparseMatrix submatrix(const SparseMatrix& m,
                       const std::vector<std::size_t>& indices,
                       bool require_invariant) {
  std::vector<int> pos(m.rows(), -1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    pos[indices[i]] = static_cast<int>(i);
  }
  std::vector<Eigen::Triplet<double>> coo;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (SparseMatrix::InnerIterator it(m, static_cast<int>(indices[i])); it; ++it) {
      const int j = pos[it.col()];
      if (j < 0) {
        if (require_invariant && it.value() != 0.0) {
          throw std::logic_error("block is not invariant under the operator");
        }
        continue;
      }
      coo.emplace_back(static_cast<int>(i), j, it.value());
    }
  }
  SparseMatrix s(indices.size(), indices.size());
  s.setFromTriplets(coo.begin(), coo.end());
  return s;
}

Eigen::VectorXd canonical_sign(Eigen::VectorXd v) {
  Eigen::Index i = 0;
  v.cwiseAbs().maxCoeff(&i);
  if (v[i] < 0.0) v = -v;
  return v;
}

Eigen::VectorXd start_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v.normalized();
}

// Unit vector in span{a, b} with w^T diag(n2) w = x and the lowest energy.
std::optional<Eigen::VectorXd> superpose_at_crossing(const SparseMatrix& h,
                                                     const Eigen::VectorXd& n2,
                                                     const Eigen::VectorXd& a,
                                                     const Eigen::VectorXd& b,
                                                     double x) {
  const Eigen::VectorXd e1 = a.normalized();
  Eigen::VectorXd e2 = b - e1.dot(b) * e1;
  if (e2.norm() < 1e-8) return std::nullopt;
  e2.normalize();
  const double n11 = e1.cwiseAbs2().dot(n2);
  const double n22 = e2.cwiseAbs2().dot(n2);
  const double n12 = e1.cwiseProduct(e2).dot(n2);
  // <n2>(phi) = m + r cos(2 phi - p)
  const double m = 0.5 * (n11 + n22);
  const double r = std::hypot(0.5 * (n11 - n22), n12);
  if (r == 0.0 || std::abs(x - m) > r) return std::nullopt;
  const double p = std::atan2(n12, 0.5 * (n11 - n22));
  const double d = std::acos((x - m) / r);
  std::optional<Eigen::VectorXd> best;
  double best_e = std::numeric_limits<double>::infinity();
  for (double sign : {1.0, -1.0}) {
    const double phi = 0.5 * (p + sign * d);
    const Eigen::VectorXd w = std::cos(phi) * e1 + std::sin(phi) * e2;
    const double e = w.dot(h * w);
    if (e < best_e) {
      best_e = e;
      best = w;
    }
  }
  return best;
}

}  // namespace

Eigen::VectorXd dense_eigensystem(Eigen::MatrixXd& a) {
  const auto n = static_cast<lapack_int>(a.rows());
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data());
  if (info != 0) {
    throw std::runtime_error("dsyevd failed with info " + std::to_string(info));
  }
  return w;
}

SpectralDecomposition diagonalize_block(const ManyBodyOperator& op,
                                        const std::vector<std::size_t>& indices,
                                        std::size_t cap) {
  if (indices.size() > cap) {
    throw std::length_error("dimension " + std::to_string(indices.size()) +
                            " exceeds the dense cap; use the iterative "
                            "ground-state path");
  }
  Eigen::MatrixXd a = Eigen::MatrixXd(submatrix(op.matrix(), indices, true));
  SpectralDecomposition d;
  d.energies = dense_eigensystem(a);
  d.vectors = std::move(a);
  d.basis = op.basis_ptr();
  d.indices = indices;
  return d;
}

SpectralDecomposition diagonalize(const ManyBodyOperator& op, std::size_t cap) {
  std::vector<std::size_t> all(op.dim());
  std::iota(all.begin(), all.end(), 0);
  return diagonalize_block(op, all, cap);
}

Eigenpair lowest_eigenpair(const SparseMatrix& m, const Eigen::VectorXd& start,
                           double tol) {
  const Eigen::Index n = m.rows();
  if (n == 0) throw std::invalid_argument("empty matrix");
  if (static_cast<std::size_t>(n) <= kDenseSmall) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(m)};
    return {es.eigenvalues()[0], canonical_sign(es.eigenvectors().col(0))};
  }
  const double scale = std::max(1.0, max_row_sum(m));
  const Eigen::Index kmax = std::min<Eigen::Index>(n, 160);
  Eigen::VectorXd x = start.normalized();
  Eigen::MatrixXd q(n, kmax);
  for (int restart = 0; restart < 200; ++restart) {
    std::vector<double> alpha;
    std::vector<double> beta;
    q.col(0) = x;
    Eigen::Index steps = 0;
    double theta = 0.0;
    Eigen::VectorXd y;
    for (Eigen::Index j = 0; j < kmax; ++j) {
      Eigen::VectorXd w = m * q.col(j);
      alpha.push_back(q.col(j).dot(w));
      for (int pass = 0; pass < 2; ++pass) {
        w -= q.leftCols(j + 1) * (q.leftCols(j + 1).transpose() * w);
      }
      steps = j + 1;
      const double b = w.norm();
      const bool last = (j + 1 == kmax) || b < 1e-13 * scale;
      if (last || steps % 20 == 0) {
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
        for (Eigen::Index i = 0; i < steps; ++i) {
          t(i, i) = alpha[i];
          if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        theta = es.eigenvalues()[0];
        y = es.eigenvectors().col(0);
        if (last || b * std::abs(y[steps - 1]) < 0.1 * tol * scale) break;
      }
      beta.push_back(b);
      q.col(j + 1) = w / b;
    }
    x = (q.leftCols(steps) * y).normalized();
    const double res = (m * x - theta * x).norm();
    if (res <= tol * scale) return {theta, canonical_sign(x)};
  }
  throw std::runtime_error("Lanczos did not converge");
}

Eigenpair ground_state(const ManyBodyOperator& op, std::uint64_t seed) {
  return lowest_eigenpair(op.matrix(), start_vector(op.dim(), seed));
}

std::vector<std::size_t> parity_sector(const FockBasis& basis, int mode,
                                       int parity) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    if (basis.state(i)[mode] % 2 == parity) out.push_back(i);
  }
  return out;
}

std::vector<std::array<double, 3>> ground_state_occupations(
    const std::vector<double>& lambda_grid, int particles) {
  auto basis = enumerate_basis(3, particles);
  std::array<Eigen::VectorXd, 3> n;
  for (int k = 0; k < 3; ++k) n[k] = basis->occupations(k);
  std::vector<std::array<double, 3>> out;
  // A warm start would follow the metastable branch across the first-order
  // transition, so every lambda starts from the same generic vector.
  const Eigen::VectorXd start = start_vector(basis->size(), 0);
  for (double l : lambda_grid) {
    auto op = build_operator(dirichlet3_terms(l / particles), basis);
    Eigenpair g = lowest_eigenpair(op.matrix(), start);
    std::array<double, 3> occ{};
    for (int k = 0; k < 3; ++k) {
      occ[k] = g.vector.cwiseAbs2().dot(n[k]) / particles;
    }
    out.push_back(occ);
  }
  return out;
}

int nearest_parity(double x_target, int particles) {
  return static_cast<int>(std::llround(x_target * particles) % 2);
}

int half_n_parity(double x_target, int particles) {
  if (particles % 2) return nearest_parity(x_target, particles);
  return (particles / 2 + 1) % 2;
}

InflectionStateSpec inflection_spec_for(double lambda) {
  auto x = inflection_x(lambda);
  if (!x) throw std::domain_error("landscape has no inflection point");
  const double t = valley(*x, lambda).second;
  const double c2 = std::cos(t) * std::cos(t);
  InflectionStateSpec spec;
  spec.x_target = *x;
  spec.center = {(1.0 - *x) * c2, *x, (1.0 - *x) * (1.0 - c2)};
  return spec;
}

std::vector<std::size_t> window_states(const FockBasis& basis,
                                       const InflectionStateSpec& spec) {
  const double n = basis.particles();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const auto& s = basis.state(i);
    if (spec.parity && s[1] % 2 != *spec.parity) continue;
    bool inside = true;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(s[k] / n - spec.center[k]) > spec.windows[k] + 1e-12) {
        inside = false;
      }
    }
    if (inside) out.push_back(i);
  }
  return out;
}

InflectionState build_inflection_state(const InflectionStateSpec& spec,
                                       const ManyBodyOperator& op) {
  const FockBasis& basis = op.basis();
  if (basis.modes() != 3) throw std::invalid_argument("three-mode basis needed");
  for (double w : spec.windows) {
    if (!(w > 0.0)) throw std::invalid_argument("windows must be positive");
  }
  const auto idx = window_states(basis, spec);
  if (idx.empty()) throw std::invalid_argument("restricted subspace is empty");

  const SparseMatrix h = submatrix(op.matrix(), idx, false);
  Eigen::VectorXd n2(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    n2[i] = static_cast<double>(basis.state(idx[i])[1]) / basis.particles();
  }
  // The random component keeps every symmetry sector in the Krylov space.
  const Eigen::VectorXd seed_vec = start_vector(idx.size(), spec.seed);
  Eigen::VectorXd guess = seed_vec;
  auto solve = [&](const Eigen::VectorXd& diag) {
    SparseMatrix shifted = h;
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
      shifted.coeffRef(i, i) += diag[i];
    }
    Eigenpair g = lowest_eigenpair(shifted, guess);
    guess = (g.vector + 0.1 * seed_vec).normalized();
    return g.vector;
  };

  Eigen::VectorXd v;
  double multiplier = 0.0;
  auto violation = [&](const Eigen::VectorXd& u) {
    return u.cwiseAbs2().dot(n2) - spec.x_target;
  };

  switch (spec.method) {
    case ConstraintMethod::none:
      v = solve(Eigen::VectorXd::Zero(idx.size()));
      break;
    case ConstraintMethod::penalty: {
      // Stationary points of <H> + mu (<n2> - x)^2 are ground states of
      // H - nu n2 with nu = -2 mu (<n2> - x); phi below is increasing in nu.
      const double step = std::max(1.0, static_cast<double>(basis.particles()));
      double err = 0.0;
      bool ok = false;
      for (double mu = 1e2; mu <= 1e6 * 1.0001; mu *= 10.0) {
        auto phi = [&](double nu) {
          v = solve(-nu * n2);
          err = violation(v);
          return nu + 2.0 * mu * err;
        };
        double lo = 0.0;
        double plo = phi(0.0);
        if (plo != 0.0) {
          const double dir = plo < 0.0 ? 1.0 : -1.0;
          double hi = dir * step;
          double phi_hi = phi(hi);
          for (int i = 0; i < 60 && (phi_hi < 0.0) == (plo < 0.0); ++i) {
            lo = hi;
            plo = phi_hi;
            hi *= 2.0;
            phi_hi = phi(hi);
          }
          for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            const double pm = phi(mid);
            if ((pm < 0.0) == (plo < 0.0)) {
              lo = mid;
              plo = pm;
            } else {
              hi = mid;
            }
          }
        }
        multiplier = mu;
        if (std::abs(err) <= spec.tolerance) {
          ok = true;
          break;
        }
      }
      if (!ok) throw ConstraintError("penalty did not meet the constraint", err);
      break;
    }
    case ConstraintMethod::multiplier: {
      // <n2> of the ground state of H - nu n2 / N is non-decreasing in nu.
      auto f = [&](double nu) {
        v = solve(-nu * n2);
        return violation(v);
      };
      const double step = std::max(1.0, static_cast<double>(basis.particles()));
      double lo = 0.0;
      double hi = 0.0;
      double flo = f(0.0);
      Eigen::VectorXd v_lo = v;
      Eigen::VectorXd v_hi = v;
      double fhi = flo;
      if (std::abs(flo) > 1e-12) {
        const double dir = flo < 0.0 ? 1.0 : -1.0;
        double span = step;
        for (int i = 0; i < 60; ++i) {
          hi = dir * span;
          fhi = f(hi);
          v_hi = v;
          if ((fhi < 0.0) != (flo < 0.0)) break;
          lo = hi;
          flo = fhi;
          v_lo = v;
          span *= 2.0;
        }
        if ((fhi < 0.0) == (flo < 0.0)) {
          throw ConstraintError("constraint target outside reachable range", flo);
        }
        for (int i = 0; i < 200; ++i) {
          const double mid = 0.5 * (lo + hi);
          if (mid == lo || mid == hi) break;
          const double fm = f(mid);
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
            v_lo = v;
          } else {
            hi = mid;
            fhi = fm;
            v_hi = v;
          }
          if (std::abs(fm) <= 1e-10) break;
        }
      }
      const bool lo_better = std::abs(flo) <= std::abs(fhi);
      v = lo_better ? v_lo : v_hi;
      double err = lo_better ? flo : fhi;
      multiplier = lo_better ? lo : hi;
      if (std::abs(err) > 1e-10) {
        // The bracket closed on a level crossing of H - nu n2: the
        // constrained minimum is a superposition of the two ground states.
        const auto mixed = superpose_at_crossing(h, n2, v_lo, v_hi, spec.x_target);
        if (mixed) {
          v = *mixed;
          err = violation(v);
        }
      }
      if (std::abs(err) > spec.tolerance) {
        throw ConstraintError("multiplier did not meet the constraint", err);
      }
      break;
    }
  }

  InflectionState out;
  out.amplitudes = Eigen::VectorXd::Zero(basis.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out.amplitudes[idx[i]] = v[i];
  out.n2_rel = v.cwiseAbs2().dot(n2);
  out.multiplier = multiplier;
  out.subspace_dim = idx.size();
  return out;
}

std::vector<double> uniform_times(double t_end, std::size_t samples) {
  std::vector<double> t(samples);
  const double dt = t_end / static_cast<double>(samples);
  for (std::size_t i = 0; i < samples; ++i) t[i] = dt * static_cast<double>(i);
  return t;
}

namespace {

Eigen::VectorXd restrict_state(const Eigen::VectorXd& state,
                               const SpectralDecomposition& d) {
  if (static_cast<std::size_t>(state.size()) != d.basis->size()) {
    throw std::invalid_argument("state dimension does not match basis");
  }
  Eigen::VectorXd s(d.indices.size());
  for (std::size_t i = 0; i < d.indices.size(); ++i) s[i] = state[d.indices[i]];
  if (state.squaredNorm() - s.squaredNorm() > 1e-12) {
    throw std::invalid_argument("state has weight outside the decomposed block");
  }
  return s;
}

}  // namespace

EvolutionTrace evolve_observable(const Eigen::VectorXd& state,
                                 const SpectralDecomposition& decomp,
                                 const Eigen::VectorXd& observable,
                                 const std::vector<double>& times,
                                 double keep_tol) {
  const Eigen::VectorXd s = restrict_state(state, decomp);
  const Eigen::VectorXd c_all = decomp.vectors.transpose() * s;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < c_all.size(); ++j) {
    if (std::abs(c_all[j]) > keep_tol) keep.push_back(j);
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  const auto dim = static_cast<Eigen::Index>(decomp.indices.size());
  Eigen::MatrixXd vs(dim, k);
  Eigen::VectorXd c(k);
  Eigen::VectorXd e(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    vs.col(j) = decomp.vectors.col(keep[j]);
    c[j] = c_all[keep[j]];
    e[j] = decomp.energies[keep[j]];
  }
  if (k > 0) e.array() -= e.mean();
  Eigen::VectorXd o(dim);
  for (Eigen::Index i = 0; i < dim; ++i) o[i] = observable[decomp.indices[i]];

  // Observable in the kept eigenbasis.
  Eigen::MatrixXd mo(k, k);
  mo.noalias() = vs.transpose() * (o.asDiagonal() * vs);

  EvolutionTrace tr;
  tr.times = times;
  tr.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  tr.values.assign(times.size(), 0.0);
  constexpr std::size_t kChunk = 256;
  Eigen::MatrixXd x(k, 2 * kChunk);
  Eigen::MatrixXd g(k, 2 * kChunk);
  for (std::size_t t0 = 0; t0 < times.size(); t0 += kChunk) {
    const auto cols = static_cast<Eigen::Index>(std::min(kChunk, times.size() - t0));
    for (Eigen::Index t = 0; t < cols; ++t) {
      const double tt = times[t0 + t];
      for (Eigen::Index j = 0; j < k; ++j) {
        x(j, 2 * t) = c[j] * std::cos(e[j] * tt);
        x(j, 2 * t + 1) = c[j] * std::sin(e[j] * tt);
      }
    }
    g.leftCols(2 * cols).noalias() = mo * x.leftCols(2 * cols);
    for (Eigen::Index t = 0; t < cols; ++t) {
      tr.values[t0 + t] = x.col(2 * t).dot(g.col(2 * t)) +
                          x.col(2 * t + 1).dot(g.col(2 * t + 1));
    }
  }
  return tr;
}

Eigen::VectorXcd evolve_state(const Eigen::VectorXd& state,
                              const SpectralDecomposition& decomp, double t) {
  const Eigen::VectorXd s = restrict_state(state, decomp);
  const Eigen::VectorXd c = decomp.vectors.transpose() * s;
  Eigen::VectorXcd phased(c.size());
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    phased[j] = c[j] * std::polar(1.0, -decomp.energies[j] * t);
  }
  const Eigen::VectorXcd sub = decomp.vectors.cast<cdouble>() * phased;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(state.size());
  for (std::size_t i = 0; i < decomp.indices.size(); ++i) {
    out[decomp.indices[i]] = sub[i];
  }
  return out;
}

std::vector<std::complex<double>> fourier_coefficients(
    const std::vector<double>& values, double dt, double f1, int n_max,
    bool allow_fft) {
  if (!(dt > 0.0) || !(f1 > 0.0) || n_max < 1) {
    throw std::invalid_argument("dt, f1 and n_max must be positive");
  }
  const double period = 1.0 / f1;
  const auto window = static_cast<std::size_t>(std::llround(period / dt));
  if (window < 2 || window > values.size() ||
      std::abs(window * dt - period) > 1e-9 * period) {
    throw std::invalid_argument("trace must cover one period of f1 on its grid");
  }
  std::vector<double> y(values.begin(), values.begin() + window);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / window;
  double peak = 0.0;
  double size = 0.0;
  for (double& v : y) {
    size = std::max(size, std::abs(v));
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  if (peak <= 1e-13 * std::max(1.0, size)) {
    throw std::domain_error("trace is constant after mean removal");
  }

  std::vector<std::complex<double>> c(n_max);
  if (allow_fft && static_cast<std::size_t>(n_max) <= window / 2) {
    static std::mutex planner;
    const std::size_t bins = window / 2 + 1;
    fftw_complex* out = fftw_alloc_complex(bins);
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(planner);
      plan = fftw_plan_dft_r2c_1d(static_cast<int>(window), y.data(), out,
                                  FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    for (int i = 1; i <= n_max; ++i) c[i - 1] = {out[i][0], out[i][1]};
    {
      std::lock_guard<std::mutex> lock(planner);
      fftw_destroy_plan(plan);
    }
    fftw_free(out);
    return c;
  }
  for (int i = 1; i <= n_max; ++i) {
    const double w = -2.0 * std::numbers::pi * i * f1 * dt;
    std::complex<double> acc = 0.0;
    for (std::size_t s = 0; s < window; ++s) {
      acc += y[s] * std::polar(1.0, w * static_cast<double>(s));
    }
    c[i - 1] = acc;
  }
  return c;
}

FrequencySummary mean_frequency(const std::vector<double>& values, double dt,
                                double f1, int n_max) {
  const auto c = fourier_coefficients(values, dt, f1, n_max);
  double num = 0.0;
  double den = 0.0;
  for (int i = 1; i <= n_max; ++i) {
    const double p = std::norm(c[i - 1]);
    num += i * p;
    den += p;
  }
  if (!(den > 0.0)) throw std::domain_error("no spectral weight below n_max");
  FrequencySummary s;
  s.f_mean = f1 * num / den;
  s.t_coh = 1.0 / s.f_mean;
  return s;
}

void mean_frequency(EvolutionTrace& trace, double f1, int n_max) {
  const auto s = mean_frequency(trace.values, trace.dt, f1, n_max);
  trace.f_mean = s.f_mean;
  trace.t_coh = s.t_coh;
}

CoherenceResult coherence_time(int particles, double lambda,
                               const CoherenceOptions& opt) {
  InflectionStateSpec spec = inflection_spec_for(lambda);
  spec.method = opt.method;
  switch (opt.parity) {
    case ParityRule::half_n:
      spec.parity = half_n_parity(spec.x_target, particles);
      break;
    case ParityRule::nearest:
      spec.parity = nearest_parity(spec.x_target, particles);
      break;
    case ParityRule::odd:
      spec.parity = 1;
      break;
    case ParityRule::even:
      spec.parity = 0;
      break;
    case ParityRule::both:
      spec.parity.reset();
      break;
  }
  spec.seed = opt.seed;
  auto basis = enumerate_basis(3, particles);
  const auto op = build_operator(dirichlet3_terms(lambda / particles), basis);
  const InflectionState st = build_inflection_state(spec, op);

  // The Hamiltonian conserves the parity of n_2, so only the parity block
  // carrying the state contributes to the evolution.
  const auto even = parity_sector(*basis, 1, 0);
  double even_weight = 0.0;
  for (std::size_t i : even) even_weight += st.amplitudes[i] * st.amplitudes[i];
  std::vector<std::size_t> block;
  if (even_weight > 1.0 - 1e-12) {
    block = even;
  } else if (even_weight < 1e-12) {
    block = parity_sector(*basis, 1, 1);
  } else {
    block.resize(basis->size());
    std::iota(block.begin(), block.end(), 0);
  }
  const auto decomp = diagonalize_block(op, block);
  const Eigen::VectorXd n2 = basis->occupations(1) / particles;
  const auto times = uniform_times(1.0 / opt.f1, opt.samples);
  EvolutionTrace tr = evolve_observable(st.amplitudes, decomp, n2, times, opt.keep_tol);
  mean_frequency(tr, opt.f1, opt.n_max);

  CoherenceResult r;
  r.particles = particles;
  r.lambda = lambda;
  r.x_target = spec.x_target;
  r.n2_rel = st.n2_rel;
  r.subspace_dim = st.subspace_dim;
  r.sector_dim = block.size();
  r.f_mean = tr.f_mean;
  r.t_coh = tr.t_coh;
  if (opt.keep_trace) r.trace = std::move(tr);
  return r;
}

double parabolic_vertex(double x0, double y0, double x1, double y1, double x2,
                        double y2) {
  const double d = (x0 - x1) * (x0 - x2) * (x1 - x2);
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d;
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) +
                    x0 * x0 * (y1 - y2)) / d;
  if (!(a < 0.0)) return x1;
  return -b / (2.0 * a);
}

PeakResult locate_coherence_peak(int particles, double lo, double hi,
                                 const CoherenceOptions& opt,
                                 const PeakSearch& search) {
  if (!(hi > lo)) throw std::invalid_argument("empty lambda range");
  std::map<long long, CoherenceResult> done;
  auto key = [](double l) { return std::llround(l * 1e9); };
  auto run = [&](const std::vector<double>& grid) {
    std::vector<double> todo;
    for (double l : grid) {
      if (!done.count(key(l))) todo.push_back(l);
    }
    auto res = parallel_map(todo.size(), search.threads, [&](std::size_t i) {
      return coherence_time(particles, todo[i], opt);
    });
    for (auto& r : res) done[key(r.lambda)] = std::move(r);
  };
  auto grid = [](double a, double b, double step) {
    std::vector<double> g;
    const auto n = static_cast<long long>(std::floor((b - a) / step + 1e-9));
    for (long long i = 0; i <= n; ++i) g.push_back(a + step * static_cast<double>(i));
    return g;
  };
  auto argmax = [&] {
    return std::max_element(done.begin(), done.end(), [](auto& a, auto& b) {
      return a.second.t_coh < b.second.t_coh;
    });
  };

  run(grid(lo, hi, search.coarse_step));
  const double centre = argmax()->second.lambda;
  const double flo = std::max(lo, centre - search.fine_halfwidth);
  const double fhi = std::min(hi, centre + search.fine_halfwidth);
  std::vector<double> fine;
  for (double l : grid(centre, fhi, search.fine_step)) fine.push_back(l);
  for (double l : grid(flo, centre, search.fine_step)) fine.push_back(l);
  run(fine);

  PeakResult out;
  for (auto& [k, r] : done) out.samples.push_back(r);
  auto it = argmax();
  auto pos = std::distance(done.begin(), it);
  out.lambda_peak = it->second.lambda;
  if (pos > 0 && pos + 1 < static_cast<long>(out.samples.size())) {
    const auto& a = out.samples[pos - 1];
    const auto& b = out.samples[pos];
    const auto& c = out.samples[pos + 1];
    const double v = parabolic_vertex(a.lambda, a.t_coh, b.lambda, b.t_coh,
                                      c.lambda, c.t_coh);
    if (v > a.lambda && v < c.lambda) out.lambda_peak = v;
  }
  return out;
}

namespace {

struct ScalingFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  ScalingFunctor(const std::vector<FitPoint>& pts, std::optional<double> fixed)
      : points(pts), fixed_lm(fixed) {}

  int inputs() const { return fixed_lm ? 2 : 3; }
  int values() const { return static_cast<int>(points.size()); }

  FitResult unpack(const Eigen::VectorXd& p) const {
    FitResult r;
    r.lambda_lm = fixed_lm ? *fixed_lm : p[0];
    r.a = fixed_lm ? p[0] : p[1];
    r.b = fixed_lm ? p[1] : p[2];
    return r;
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    const FitResult r = unpack(p);
    for (std::size_t i = 0; i < points.size(); ++i) {
      f[i] = r.lambda_lm + r.a * std::pow(points[i].particles, -r.b) -
             points[i].lambda_n;
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& j) const {
    const FitResult r = unpack(p);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double n = points[i].particles;
      const double pw = std::pow(n, -r.b);
      int c = 0;
      if (!fixed_lm) j(i, c++) = 1.0;
      j(i, c++) = pw;
      j(i, c) = -r.a * pw * std::log(n);
    }
    return 0;
  }

  std::vector<FitPoint> points;
  std::optional<double> fixed_lm;
};

// Log-linear least squares for (a, b) at a given lambda_lm.
std::optional<std::pair<double, double>> loglinear(
    const std::vector<FitPoint>& pts, double lm) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : pts) {
    const double d = p.lambda_n - lm;
    if (!(d > 0.0)) return std::nullopt;
    const double x = std::log(p.particles);
    const double y = std::log(d);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(pts.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icpt = (sy - slope * sx) / n;
  return std::make_pair(std::exp(icpt), -slope);
}

double sum_squares(const std::vector<FitPoint>& pts, double lm, double a,
                   double b) {
  double s = 0.0;
  for (const auto& p : pts) {
    const double r = lm + a * std::pow(p.particles, -b) - p.lambda_n;
    s += r * r;
  }
  return s;
}

}  // namespace

FitResult fit_lambda_scaling(const std::vector<FitPoint>& points,
                             std::optional<double> fixed_lambda_lm) {
  if (points.size() < 3) throw std::invalid_argument("need at least 3 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (points[i].particles == points[j].particles) {
        throw std::invalid_argument("particle numbers must be distinct");
      }
    }
  }
  double lm0 = 0.0;
  double a0 = 1.0;
  double b0 = 0.5;
  if (fixed_lambda_lm) {
    lm0 = *fixed_lambda_lm;
    if (auto ab = loglinear(points, lm0)) std::tie(a0, b0) = *ab;
  } else {
    double lowest = points[0].lambda_n;
    for (const auto& p : points) lowest = std::min(lowest, p.lambda_n);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= 400; ++i) {
      const double lm = lowest - 2.0 * i / 400.0;
      auto ab = loglinear(points, lm);
      if (!ab) continue;
      const double s = sum_squares(points, lm, ab->first, ab->second);
      if (s < best) {
        best = s;
        lm0 = lm;
        std::tie(a0, b0) = *ab;
      }
    }
  }

  ScalingFunctor functor(points, fixed_lambda_lm);
  Eigen::VectorXd p(functor.inputs());
  if (fixed_lambda_lm) {
    p << a0, b0;
  } else {
    p << lm0, a0, b0;
  }
  Eigen::LevenbergMarquardt<ScalingFunctor> lm(functor);
  lm.parameters.xtol = 1e-15;
  lm.parameters.ftol = 1e-15;
  lm.parameters.maxfev = 10000;
  const auto status = lm.minimize(p);
  FitResult r = functor.unpack(p);
  Eigen::VectorXd f(points.size());
  functor(p, f);
  r.residual = f.norm();
  using Status = Eigen::LevenbergMarquardtSpace::Status;
  const bool converged =
      status == Status::RelativeReductionTooSmall ||
      status == Status::RelativeErrorTooSmall ||
      status == Status::RelativeErrorAndReductionTooSmall ||
      status == Status::CosinusTooSmall || status == Status::FtolTooSmall ||
      status == Status::XtolTooSmall || status == Status::GtolTooSmall;
  if (!converged || !std::isfinite(r.residual)) {
    throw FitError("Levenberg-Marquardt did not converge", r);
  }
  if (!(r.a > 0.0 && r.b > 0.0)) {
    throw FitError("fit left the a > 0, b > 0 domain", r);
  }
  return r;
}

Eigen::MatrixXd one_body_density(const FockBasis& basis,
                                 const Eigen::VectorXd& state) {
  const int k = basis.modes();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      const Term t{1.0, {a}, {b}};
      double acc = 0.0;
      for (std::size_t j = 0; j < basis.size(); ++j) {
        if (state[j] == 0.0) continue;
        auto r = apply_term(t, basis.state(j));
        if (!r) continue;
        acc += state[basis.index(r->second)] * r->first * state[j];
      }
      d(a, b) = acc;
    }
  }
  return d;
}

std::vector<double> position_density(const FockBasis& basis,
                                     const Eigen::VectorXd& state,
                                     const std::vector<double>& z_grid) {
  const Eigen::MatrixXd d = one_body_density(basis, state);
  const int k = basis.modes();
  std::vector<double> rho;
  rho.reserve(z_grid.size());
  for (double z : z_grid) {
    Eigen::VectorXd s(k);
    for (int m = 0; m < k; ++m) s[m] = std::sin((m + 1) * z / 2.0);
    rho.push_back(s.dot(d * s) / std::numbers::pi);
  }
  return rho;
}

std::shared_ptr<const FockBasis> periodic_zero_momentum_basis(int particles) {
  return enumerate_basis(3, particles, [](const OccupationState& s) {
    return s[0] == s[2];
  });
}

namespace {

PeriodicPoint periodic_point(const std::shared_ptr<const FockBasis>& basis,
                             double lambda) {
  const int n = basis->particles();
  const auto op = build_operator(periodic_terms(1, lambda / n), basis);
  Eigen::MatrixXd a = op.dense();
  const Eigen::VectorXd e = dense_eigensystem(a);
  PeriodicPoint p;
  p.lambda = lambda;
  const Eigen::VectorXd w = a.col(0).cwiseAbs2();
  p.n0_rel = w.dot(basis->occupations(1)) / n;
  p.n1_rel = w.dot(basis->occupations(2)) / n;
  p.gap = e.size() > 1 ? e[1] - e[0] : 0.0;
  return p;
}

}  // namespace

std::vector<PeriodicPoint> periodic_finite_n_checks(
    int particles, const std::vector<double>& lambda_grid) {
  auto basis = periodic_zero_momentum_basis(particles);
  std::vector<PeriodicPoint> out;
  for (double l : lambda_grid) out.push_back(periodic_point(basis, l));
  return out;
}

GapMinimum periodic_gap_minimum(int particles, double lo, double hi) {
  auto basis = periodic_zero_momentum_basis(particles);
  const double step = 0.01;
  double best_l = lo;
  double best_g = std::numeric_limits<double>::infinity();
  for (double l = lo; l <= hi + 1e-12; l += step) {
    const double g = periodic_point(basis, l).gap;
    if (g < best_g) {
      best_g = g;
      best_l = l;
    }
  }
  auto r = boost::math::tools::brent_find_minima(
      [&](double l) { return periodic_point(basis, l).gap; },
      std::max(lo, best_l - step), std::min(hi, best_l + step),
      std::numeric_limits<double>::digits / 2);
  return {r.first, r.second};
}

double gap_scaling_exponent(const std::vector<int>& particles,
                            const std::vector<GapMinimum>& minima) {
  if (particles.size() != minima.size() || particles.size() < 2) {
    throw std::invalid_argument("need matching N and gap lists");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const double x = std::log(static_cast<double>(particles[i]));
    const double y = std::log(minima[i].gap);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(particles.size());
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

int probe_cutoff(double gamma) {
  const double g2 = gamma * gamma;
  int cut = static_cast<int>(std::ceil(g2 + 8.0 * gamma));
  if (g2 == 0.0) return std::max(cut, 0);
  // Extend until the neglected mean occupation is below 1e-14.
  auto tail = [&](int n) {
    double s = 0.0;
    for (int m = n + 1; m < n + 400; ++m) {
      s += m * std::exp(m * std::log(g2) - g2 - std::lgamma(m + 1.0));
    }
    return s;
  };
  while (tail(cut) > 1e-14) ++cut;
  return cut;
}

std::vector<ProbeOccupations> probe_occupations_exact(
    const ExternalProbeParams& p, const std::vector<double>& times) {
  const double g = p.gamma();
  const int cut = probe_cutoff(std::abs(g));
  const auto terms = external_probe_terms(p);
  std::vector<ProbeOccupations> out(times.size(), {0.0, 0.0});
  for (int n = 0; n <= cut; ++n) {
    const double logw = (n == 0 ? 0.0 : n * std::log(std::abs(g))) -
                        0.5 * g * g - 0.5 * std::lgamma(n + 1.0);
    const double w = (g == 0.0 && n > 0) ? 0.0 : std::exp(logw);
    if (w == 0.0) continue;
    auto basis = enumerate_basis(2, n);
    const auto op = build_operator(terms, basis);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.dense());
    // All n quanta start in the external mode c.
    const std::size_t start = basis->index({0, n});
    const Eigen::VectorXd c = es.eigenvectors().row(start).transpose();
    const Eigen::VectorXd nb = basis->occupations(0);
    const Eigen::VectorXd nc = basis->occupations(1);
    for (std::size_t i = 0; i < times.size(); ++i) {
      Eigen::VectorXcd phased(c.size());
      for (Eigen::Index j = 0; j < c.size(); ++j) {
        phased[j] = c[j] * std::polar(1.0, -es.eigenvalues()[j] * times[i]);
      }
      const Eigen::VectorXd prob =
          (es.eigenvectors().cast<cdouble>() * phased).cwiseAbs2();
      out[i].nb += w * w * prob.dot(nb);
      out[i].nc += w * w * prob.dot(nc);
    }
  }
  return out;
}

}  // namespace gapless
