#include "gapless/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace gapless {

ModelParams::ModelParams(double alpha, int particles)
    : m_alpha(alpha), m_particles(particles) {
  if (alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  if (particles < 1) throw std::invalid_argument("N must be positive");
}

ModelParams ModelParams::from_lambda(double lambda, int particles) {
  if (particles < 1) throw std::invalid_argument("N must be positive");
  return ModelParams(lambda / particles, particles);
}

namespace {

using Key = std::pair<std::vector<int>, std::vector<int>>;

// Integer weights keyed by the normal-ordered (sorted) operator string.
class QuarticAccumulator {
 public:
  void add(std::vector<int> creators, std::vector<int> annihilators,
           int weight) {
    std::sort(creators.begin(), creators.end());
    std::sort(annihilators.begin(), annihilators.end());
    m_weights[{std::move(creators), std::move(annihilators)}] += weight;
  }

  void emit(double prefactor, std::vector<Term>& out) const {
    for (const auto& [key, w] : m_weights) {
      if (w == 0) continue;
      out.push_back(Term{prefactor * w, key.first, key.second});
    }
  }

 private:
  std::map<Key, int> m_weights;
};

void add_kinetic(std::vector<Term>& out, int index, double energy) {
  out.push_back(Term{energy, {index}, {index}});
}

}  // namespace

std::vector<Term> dirichlet_full_terms(int k_max, double alpha) {
  if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
  std::vector<Term> terms;
  for (int k = 1; k <= k_max; ++k) add_kinetic(terms, k - 1, k * k / 4.0);

  auto in_range = [k_max](int q) { return q >= 1 && q <= k_max; };
  QuarticAccumulator acc;
  for (int k = 1; k <= k_max; ++k) {
    for (int l = 1; l <= k_max; ++l) {
      for (int m = 1; m <= k_max; ++m) {
        if (int q = k + l - m; in_range(q)) {
          acc.add({k - 1, l - 1}, {m - 1, q - 1}, 1);
        }
        if (int q = k - l + m; in_range(q)) {
          acc.add({k - 1, l - 1}, {m - 1, q - 1}, 2);
        }
        if (int q = l + m + k; in_range(q)) {
          acc.add({q - 1, l - 1}, {m - 1, k - 1}, -2);
        }
        if (int q = k + l + m; in_range(q)) {
          acc.add({k - 1, l - 1}, {m - 1, q - 1}, -2);
        }
      }
    }
  }
  if (alpha != 0.0) acc.emit(-alpha / 8.0, terms);
  return terms;
}

std::vector<Term> dirichlet3_terms(double alpha) {
  std::vector<Term> terms;
  for (int k = 1; k <= 3; ++k) add_kinetic(terms, k - 1, k * k / 4.0);

  struct Entry {
    int weight;
    std::vector<int> creators;
    std::vector<int> annihilators;
  };
  // Mode labels are 1-based here and shifted below.
  const std::vector<Entry> bracket = {
      {3, {1, 1}, {1, 1}},  {8, {1, 2}, {1, 2}},  {2, {1, 1}, {2, 2}},
      {2, {2, 2}, {1, 1}},  {8, {1, 3}, {1, 3}},  {2, {1, 1}, {3, 3}},
      {2, {3, 3}, {1, 1}},  {-2, {1, 1}, {1, 3}}, {-2, {1, 3}, {1, 1}},
      {4, {1, 2}, {2, 3}},  {4, {2, 3}, {1, 2}},  {2, {1, 3}, {2, 2}},
      {2, {2, 2}, {1, 3}},  {3, {2, 2}, {2, 2}},  {8, {2, 3}, {2, 3}},
      {2, {2, 2}, {3, 3}},  {2, {3, 3}, {2, 2}},  {3, {3, 3}, {3, 3}},
  };
  for (const auto& e : bracket) {
    Term t{-alpha * e.weight / 8.0, e.creators, e.annihilators};
    for (int& m : t.creators) --m;
    for (int& m : t.annihilators) --m;
    terms.push_back(std::move(t));
  }
  return terms;
}

std::vector<Term> periodic_terms(int k_max, double alpha) {
  if (k_max < 0) throw std::invalid_argument("k_max must be non-negative");
  std::vector<Term> terms;
  for (int k = -k_max; k <= k_max; ++k) {
    if (k != 0) add_kinetic(terms, k + k_max, static_cast<double>(k * k));
  }
  auto in_range = [k_max](int q) { return q >= -k_max && q <= k_max; };
  QuarticAccumulator acc;
  for (int k = -k_max; k <= k_max; ++k) {
    for (int l = -k_max; l <= k_max; ++l) {
      for (int m = -2 * k_max; m <= 2 * k_max; ++m) {
        if (!in_range(m + k) || !in_range(l - m)) continue;
        acc.add({k + k_max, l + k_max}, {m + k + k_max, l - m + k_max}, 1);
      }
    }
  }
  if (alpha != 0.0) acc.emit(-alpha / 4.0, terms);
  return terms;
}

std::vector<Term> master_mode_toy_terms(const std::vector<double>& energies,
                                        double alpha) {
  if (energies.empty()) throw std::invalid_argument("need the master mode");
  std::vector<Term> terms;
  add_kinetic(terms, 0, energies[0]);
  for (std::size_t k = 1; k < energies.size(); ++k) {
    const int i = static_cast<int>(k);
    add_kinetic(terms, i, energies[k]);
    // n_0 n_k = a_0^dag a_k^dag a_0 a_k for distinct modes.
    terms.push_back(Term{-alpha * energies[k], {0, i}, {0, i}});
  }
  return terms;
}

double toy_effective_gap(double energy, double alpha,
                         double master_occupation) {
  return energy * (1.0 - alpha * master_occupation);
}

double microstate_entropy(int modes, int levels) {
  return modes * std::log(static_cast<double>(levels));
}

std::vector<Term> neural_synapse_terms(double alpha) {
  std::vector<Term> terms;
  for (int k = 1; k <= 3; ++k) add_kinetic(terms, k - 1, k * k / 4.0);

  // W_kj as a list of bilinears a_m^dag a_n with coefficient c * alpha / 8.
  struct Bilinear {
    double c;
    int m;
    int n;
  };
  using Element = std::vector<Bilinear>;
  Element w[3][3];
  for (int k = 1; k <= 3; ++k) w[k - 1][k - 1] = {{3.0, k, k}};
  w[0][1] = {{4.0, 2, 1}, {2.0, 1, 2}, {4.0 / 3.0, 2, 3}, {1.0, 3, 2}};
  w[0][2] = {{4.0, 3, 1}, {2.0, 1, 3}, {4.0 / 3.0, 2, 2}, {-2.0, 1, 1}};
  w[1][2] = {{4.0, 3, 2}, {2.0, 2, 3}, {4.0 / 3.0, 1, 2}, {1.0, 2, 1}};
  // Hermiticity: W_jk is W_kj with every bilinear conjugated.
  for (int k = 0; k < 3; ++k) {
    for (int j = k + 1; j < 3; ++j) {
      for (const auto& b : w[k][j]) w[j][k].push_back({b.c, b.n, b.m});
    }
  }
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) {
      for (const auto& b : w[k][j]) {
        // a_k^dag (a_m^dag a_n) a_j is already normal ordered.
        terms.push_back(
            Term{-alpha * b.c / 8.0, {k, b.m - 1}, {b.n - 1, j}});
      }
    }
  }
  return terms;
}

ExternalProbeParams::ExternalProbeParams(double delta_e, double e_gamma,
                                         double g, double gamma)
    : m_delta_e(delta_e), m_e_gamma(e_gamma), m_g(g), m_gamma(gamma) {}

double ExternalProbeParams::delta_g() const {
  return std::hypot(m_e_gamma - m_delta_e, m_g);
}

ProbeOccupations external_probe_closed_form(const ExternalProbeParams& p,
                                            double t) {
  if (t < 0.0) throw std::invalid_argument("time must be non-negative");
  const double g2 = p.gamma() * p.gamma();
  const double dg = p.delta_g();
  if (dg == 0.0) return {g2, 0.0};
  const double s = std::sin(dg * t / 2.0);
  const double transfer = (p.g() * p.g()) / (dg * dg) * s * s;
  const double nb = g2 * transfer;
  return {g2 - nb, nb};
}

std::vector<Term> external_probe_terms(const ExternalProbeParams& p) {
  return {
      Term{p.delta_e(), {0}, {0}},
      Term{p.e_gamma(), {1}, {1}},
      Term{p.g() / 2.0, {0}, {1}},
      Term{p.g() / 2.0, {1}, {0}},
  };
}

}  // namespace gapless
