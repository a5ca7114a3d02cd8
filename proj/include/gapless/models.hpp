#pragma once

#include "gapless/fock.hpp"

#include <vector>

namespace gapless {

// Units: L = 2*pi, hbar = 2m = 1, energies in 4 pi^2 hbar^2 / (2 m L^2).
class ModelParams {
 public:
  ModelParams(double alpha, int particles);
  static ModelParams from_lambda(double lambda, int particles);

  double alpha() const { return m_alpha; }
  int particles() const { return m_particles; }
  double lambda() const { return m_alpha * m_particles; }

 private:
  double m_alpha;
  int m_particles;
};

// Dirichlet box, mode k (1-based momentum) lives at index k - 1.
std::vector<Term> dirichlet_full_terms(int k_max, double alpha);
std::vector<Term> dirichlet3_terms(double alpha);

// Periodic ring, momentum k in -k_max..k_max lives at index k + k_max.
std::vector<Term> periodic_terms(int k_max, double alpha);

// energies[0] is the master mode.
std::vector<Term> master_mode_toy_terms(const std::vector<double>& energies,
                                        double alpha);
double toy_effective_gap(double energy, double alpha, double master_occupation);
double microstate_entropy(int modes, int levels);

// Kinetic thresholds minus a_k^dag W_kj a_j with the synaptic matrix W.
std::vector<Term> neural_synapse_terms(double alpha);

class ExternalProbeParams {
 public:
  ExternalProbeParams(double delta_e, double e_gamma, double g, double gamma);

  double delta_e() const { return m_delta_e; }
  double e_gamma() const { return m_e_gamma; }
  double g() const { return m_g; }
  double gamma() const { return m_gamma; }
  double delta_g() const;

 private:
  double m_delta_e;
  double m_e_gamma;
  double m_g;
  double m_gamma;
};

struct ProbeOccupations {
  double nc;
  double nb;
};

ProbeOccupations external_probe_closed_form(const ExternalProbeParams& p,
                                            double t);

// Mode 0 is the Bogoliubov mode b, mode 1 the external mode c.
std::vector<Term> external_probe_terms(const ExternalProbeParams& p);

}  // namespace gapless
