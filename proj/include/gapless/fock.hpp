#pragma once

#include <Eigen/Sparse>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gapless {

// Particle count per mode.
using OccupationState = std::vector<int>;

struct OccupationHash {
  std::size_t operator()(const OccupationState& s) const noexcept;
};

class FockBasis {
 public:
  FockBasis(int modes, int particles, std::vector<OccupationState> states);

  int modes() const { return m_modes; }
  int particles() const { return m_particles; }
  std::size_t size() const { return m_states.size(); }

  const OccupationState& state(std::size_t i) const { return m_states[i]; }
  const std::vector<OccupationState>& states() const { return m_states; }

  std::optional<std::size_t> find(const OccupationState& s) const;
  std::size_t index(const OccupationState& s) const;

  // Occupation of one mode for every basis state, as a dense vector.
  Eigen::VectorXd occupations(int mode) const;

 private:
  int m_modes;
  int m_particles;
  std::vector<OccupationState> m_states;
  std::unordered_map<OccupationState, std::size_t, OccupationHash> m_index;
};

// All states with sum N over K modes, lexicographically descending.
std::shared_ptr<const FockBasis> enumerate_basis(int modes, int particles);

// Same ordering, keeping only states accepted by the predicate.
std::shared_ptr<const FockBasis> enumerate_basis(
    int modes, int particles,
    const std::function<bool(const OccupationState&)>& keep);

// coefficient * a^dag_{c1} a^dag_{c2} ... a_{a1} a_{a2} ...
struct Term {
  double coefficient = 0.0;
  std::vector<int> creators;
  std::vector<int> annihilators;
};

Term adjoint(const Term& t);

std::optional<std::pair<double, OccupationState>> apply_term(
    const Term& term, const OccupationState& state);

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class ManyBodyOperator {
 public:
  ManyBodyOperator(std::shared_ptr<const FockBasis> basis, SparseMatrix m)
      : m_basis(std::move(basis)), m_matrix(std::move(m)) {}

  const FockBasis& basis() const { return *m_basis; }
  std::shared_ptr<const FockBasis> basis_ptr() const { return m_basis; }
  const SparseMatrix& matrix() const { return m_matrix; }
  std::size_t dim() const { return m_basis->size(); }

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_matrix); }

 private:
  std::shared_ptr<const FockBasis> m_basis;
  SparseMatrix m_matrix;
};

ManyBodyOperator build_operator(const std::vector<Term>& terms,
                                std::shared_ptr<const FockBasis> basis);

ManyBodyOperator number_operator(int mode,
                                 std::shared_ptr<const FockBasis> basis);

double expectation(const ManyBodyOperator& op, const Eigen::VectorXd& v);

}  // namespace gapless
