#include "gapless/fock.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gapless {

std::size_t OccupationHash::operator()(
    const OccupationState& s) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (int n : s) {
    h ^= static_cast<std::size_t>(n) + 0x9e3779b97f4a7c15ull + (h << 6) +
         (h >> 2);
  }
  return h;
}

FockBasis::FockBasis(int modes, int particles,
                     std::vector<OccupationState> states)
    : m_modes(modes), m_particles(particles), m_states(std::move(states)) {
  m_index.reserve(m_states.size());
  for (std::size_t i = 0; i < m_states.size(); ++i) {
    m_index.emplace(m_states[i], i);
  }
}

std::optional<std::size_t> FockBasis::find(const OccupationState& s) const {
  auto it = m_index.find(s);
  if (it == m_index.end()) return std::nullopt;
  return it->second;
}

std::size_t FockBasis::index(const OccupationState& s) const {
  auto i = find(s);
  if (!i) throw std::out_of_range("state not in basis");
  return *i;
}

Eigen::VectorXd FockBasis::occupations(int mode) const {
  if (mode < 0 || mode >= m_modes) throw std::out_of_range("mode index");
  Eigen::VectorXd n(size());
  for (std::size_t i = 0; i < size(); ++i) n[i] = m_states[i][mode];
  return n;
}

namespace {

void fill(int mode, int remaining, OccupationState& current,
          const std::function<bool(const OccupationState&)>& keep,
          std::vector<OccupationState>& out) {
  const int K = static_cast<int>(current.size());
  if (mode == K - 1) {
    current[mode] = remaining;
    if (!keep || keep(current)) out.push_back(current);
    return;
  }
  for (int n = remaining; n >= 0; --n) {
    current[mode] = n;
    fill(mode + 1, remaining - n, current, keep, out);
  }
}

}  // namespace

std::shared_ptr<const FockBasis> enumerate_basis(
    int modes, int particles,
    const std::function<bool(const OccupationState&)>& keep) {
  if (modes < 1) throw std::invalid_argument("basis needs at least one mode");
  if (particles < 0) throw std::invalid_argument("negative particle number");
  std::vector<OccupationState> states;
  OccupationState current(modes, 0);
  fill(0, particles, current, keep, states);
  return std::make_shared<const FockBasis>(modes, particles,
                                           std::move(states));
}

std::shared_ptr<const FockBasis> enumerate_basis(int modes, int particles) {
  return enumerate_basis(modes, particles, nullptr);
}

Term adjoint(const Term& t) {
  Term a;
  a.coefficient = t.coefficient;
  a.creators.assign(t.annihilators.rbegin(), t.annihilators.rend());
  a.annihilators.assign(t.creators.rbegin(), t.creators.rend());
  return a;
}

std::optional<std::pair<double, OccupationState>> apply_term(
    const Term& term, const OccupationState& state) {
  const int K = static_cast<int>(state.size());
  auto check = [K](int m) {
    if (m < 0 || m >= K) {
      throw std::out_of_range("mode index " + std::to_string(m) +
                              " outside 0.." + std::to_string(K - 1));
    }
  };
  OccupationState out = state;
  // Integer product of ladder factors, exact in double; one sqrt at the end.
  double prod = 1.0;
  // Rightmost operator acts first.
  for (auto it = term.annihilators.rbegin(); it != term.annihilators.rend();
       ++it) {
    check(*it);
    if (out[*it] == 0) return std::nullopt;
    prod *= out[*it];
    --out[*it];
  }
  for (auto it = term.creators.rbegin(); it != term.creators.rend(); ++it) {
    check(*it);
    ++out[*it];
    prod *= out[*it];
  }
  return std::make_pair(term.coefficient * std::sqrt(prod), std::move(out));
}

ManyBodyOperator build_operator(const std::vector<Term>& terms,
                                std::shared_ptr<const FockBasis> basis) {
  for (const auto& t : terms) {
    if (t.creators.size() != t.annihilators.size()) {
      throw std::invalid_argument("term does not conserve particle number");
    }
  }
  const std::size_t dim = basis->size();
  std::vector<Eigen::Triplet<double>> coo;
  coo.reserve(dim * terms.size() / 2 + 1);
  for (std::size_t j = 0; j < dim; ++j) {
    for (const auto& t : terms) {
      auto r = apply_term(t, basis->state(j));
      if (!r || r->first == 0.0) continue;
      auto i = basis->find(r->second);
      if (!i) throw std::logic_error("term leaves the basis sector");
      coo.emplace_back(static_cast<int>(*i), static_cast<int>(j), r->first);
    }
  }
  SparseMatrix h(dim, dim);
  h.setFromTriplets(coo.begin(), coo.end());

  SparseMatrix ht = h.transpose();
  SparseMatrix diff = h - ht;
  double scale = 1.0;
  for (int k = 0; k < h.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(h, k); it; ++it) {
      scale = std::max(scale, std::abs(it.value()));
    }
  }
  for (int k = 0; k < diff.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it) {
      if (std::abs(it.value()) > 1e-12 * scale) {
        throw std::invalid_argument("term list is not Hermitian");
      }
    }
  }
  SparseMatrix sym = 0.5 * (h + ht);
  sym.prune(0.0);
  sym.makeCompressed();
  return ManyBodyOperator(std::move(basis), std::move(sym));
}

ManyBodyOperator number_operator(int mode,
                                 std::shared_ptr<const FockBasis> basis) {
  return build_operator({Term{1.0, {mode}, {mode}}}, std::move(basis));
}

double expectation(const ManyBodyOperator& op, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != op.dim()) {
    throw std::invalid_argument("vector dimension does not match basis");
  }
  return v.dot(op.matrix() * v);
}

}  // namespace gapless
