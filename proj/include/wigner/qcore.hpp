#pragma once

// Dense complex linear algebra over labeled multi-qudit registers: pure
// states, density operators, unitaries, measurement bases, Born statistics.
// Register order is big-endian: the first register carries the most
// significant index. All values are immutable after construction; the free
// functions below are pure (by-value parameters are moved through).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace wigner::qcore {

using complexd = std::complex<double>;

// Construction checks use 1e-10, equality assertions 1e-12; the gap leaves
// headroom for long Kronecker chains (up to ~24 qubits).
inline constexpr double kConstructTol = 1e-10;
inline constexpr double kEqualTol = 1e-12;

struct Register {
  std::string label;
  std::size_t dimension = 2;

  bool operator==(const Register&) const = default;
};

inline Register qubit(std::string label) { return Register{std::move(label), 2}; }

namespace detail {

inline std::size_t checked_total_dimension(std::span<const Register> regs) {
  std::size_t dim = 1;
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (regs[i].dimension < 2) {
      throw std::invalid_argument("register '" + regs[i].label + "' has dimension < 2");
    }
    for (std::size_t j = i + 1; j < regs.size(); ++j) {
      if (regs[i].label == regs[j].label) {
        throw std::invalid_argument("duplicate register label '" + regs[i].label + "'");
      }
    }
    if (dim > (std::size_t{1} << 58) / regs[i].dimension) {
      throw std::invalid_argument("register system dimension overflow");
    }
    dim *= regs[i].dimension;
  }
  return dim;
}

// Big-endian strides: stride of register i is the product of dimensions of
// all registers after it.
inline std::vector<std::size_t> strides(std::span<const Register> regs) {
  std::vector<std::size_t> s(regs.size(), 1);
  for (std::size_t i = regs.size(); i-- > 1;) {
    s[i - 1] = s[i] * regs[i].dimension;
  }
  return s;
}

inline std::size_t find_register(std::span<const Register> regs, const std::string& label) {
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (regs[i].label == label) return i;
  }
  throw std::invalid_argument("unknown register '" + label + "'");
}

// Offsets of every multi-index combination over the given (dims, strides),
// enumerated big-endian. For empty dims returns {0}.
inline std::vector<std::size_t> index_offsets(std::span<const std::size_t> dims,
                                              std::span<const std::size_t> strides) {
  std::size_t count = 1;
  for (std::size_t d : dims) count *= d;
  std::vector<std::size_t> offs(count, 0);
  std::size_t block = count;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    block /= dims[k];
    for (std::size_t i = 0; i < count; ++i) {
      offs[i] += ((i / block) % dims[k]) * strides[k];
    }
  }
  return offs;
}

// Applies a dt x dt matrix (row-major) to the target slots of a strided flat
// array, looping over all complementary indices. Identity rows and zero
// entries are skipped, which makes permutation-like gates (basis copies,
// CNOT fans) run at memory speed.
inline void apply_matrix_strided(complexd* data, const std::vector<complexd>& m,
                                 std::size_t dt, const std::vector<std::size_t>& target_offsets,
                                 const std::vector<std::size_t>& rest_dims,
                                 const std::vector<std::size_t>& rest_strides) {
  struct Row {
    bool identity;
    std::vector<std::pair<std::uint32_t, complexd>> terms;
  };
  std::vector<Row> rows(dt);
  for (std::size_t r = 0; r < dt; ++r) {
    bool ident = true;
    for (std::size_t c = 0; c < dt; ++c) {
      const complexd& z = m[r * dt + c];
      if (std::abs(z) > 0.0) {
        rows[r].terms.emplace_back(static_cast<std::uint32_t>(c), z);
      }
      const complexd want = (r == c) ? complexd{1.0, 0.0} : complexd{0.0, 0.0};
      if (z != want) ident = false;
    }
    rows[r].identity = ident;
  }

  const std::vector<std::size_t> rest_offsets = index_offsets(rest_dims, rest_strides);
  std::vector<complexd> in(dt);
  for (std::size_t base : rest_offsets) {
    for (std::size_t k = 0; k < dt; ++k) in[k] = data[base + target_offsets[k]];
    for (std::size_t r = 0; r < dt; ++r) {
      if (rows[r].identity) continue;
      complexd acc{0.0, 0.0};
      for (const auto& [c, z] : rows[r].terms) acc += z * in[c];
      data[base + target_offsets[r]] = acc;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Unitary

class Unitary {
 public:
  Unitary(std::size_t dim, std::vector<complexd> matrix) : dim_(dim), m_(std::move(matrix)) {
    if (m_.size() != dim_ * dim_) {
      throw std::invalid_argument("unitary matrix size does not match dimension");
    }
    // U†U = I within construction tolerance.
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) {
        complexd acc{0.0, 0.0};
        for (std::size_t k = 0; k < dim_; ++k) acc += std::conj(m_[k * dim_ + i]) * m_[k * dim_ + j];
        const complexd want = (i == j) ? complexd{1.0, 0.0} : complexd{0.0, 0.0};
        if (std::abs(acc - want) > kConstructTol) {
          throw std::invalid_argument("matrix is not unitary (U†U deviates from identity)");
        }
      }
    }
  }

  static Unitary identity(std::size_t dim) {
    std::vector<complexd> m(dim * dim, complexd{0.0, 0.0});
    for (std::size_t i = 0; i < dim; ++i) m[i * dim + i] = 1.0;
    return Unitary(dim, std::move(m));
  }

  std::size_t dimension() const { return dim_; }
  const std::vector<complexd>& matrix() const { return m_; }
  complexd at(std::size_t r, std::size_t c) const { return m_[r * dim_ + c]; }

  Unitary dagger() const {
    std::vector<complexd> m(dim_ * dim_);
    for (std::size_t r = 0; r < dim_; ++r) {
      for (std::size_t c = 0; c < dim_; ++c) m[r * dim_ + c] = std::conj(m_[c * dim_ + r]);
    }
    return Unitary(dim_, std::move(m));
  }

 private:
  std::size_t dim_;
  std::vector<complexd> m_;  // row-major
};

// Block unitary acting as `u` on the subspace where the control register
// holds `active_value`, identity elsewhere. Control is the leading factor.
inline Unitary controlled(std::size_t control_dim, std::size_t active_value, const Unitary& u) {
  if (active_value >= control_dim) throw std::invalid_argument("control value out of range");
  const std::size_t dt = u.dimension(), d = control_dim * dt;
  std::vector<complexd> m(d * d, complexd{0.0, 0.0});
  for (std::size_t v = 0; v < control_dim; ++v) {
    for (std::size_t r = 0; r < dt; ++r) {
      for (std::size_t c = 0; c < dt; ++c) {
        m[(v * dt + r) * d + (v * dt + c)] =
            (v == active_value) ? u.at(r, c) : (r == c ? complexd{1.0, 0.0} : complexd{0.0, 0.0});
      }
    }
  }
  return Unitary(d, std::move(m));
}

inline Unitary hadamard() {
  const double s = 1.0 / std::sqrt(2.0);
  return Unitary(2, {s, s, s, -s});
}

inline Unitary phase_gate(double phi) {
  return Unitary(2, {complexd{1.0, 0.0}, 0.0, 0.0, std::polar(1.0, phi)});
}

inline Unitary pauli_x() { return Unitary(2, {0.0, 1.0, 1.0, 0.0}); }

inline Unitary cnot() { return controlled(2, 1, pauli_x()); }

// ---------------------------------------------------------------------------
// Basis

class Basis {
 public:
  Basis(std::size_t dim, std::vector<std::vector<complexd>> vectors,
        std::vector<std::string> labels, std::vector<double> eigenvalues = {},
        bool partial = false)
      : dim_(dim),
        vectors_(std::move(vectors)),
        labels_(std::move(labels)),
        eigenvalues_(std::move(eigenvalues)),
        partial_(partial) {
    if (vectors_.empty()) throw std::invalid_argument("basis has no vectors");
    if (labels_.size() != vectors_.size()) {
      throw std::invalid_argument("basis label count does not match vector count");
    }
    if (!eigenvalues_.empty() && eigenvalues_.size() != vectors_.size()) {
      throw std::invalid_argument("basis eigenvalue count does not match vector count");
    }
    if (vectors_.size() > dim_) throw std::invalid_argument("basis has more vectors than dimension");
    if (vectors_.size() < dim_ && !partial_) {
      throw std::invalid_argument("basis does not span the space and is not flagged partial");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      for (std::size_t j = i + 1; j < labels_.size(); ++j) {
        if (labels_[i] == labels_[j]) throw std::invalid_argument("duplicate outcome label '" + labels_[i] + "'");
      }
    }
    for (const auto& v : vectors_) {
      if (v.size() != dim_) throw std::invalid_argument("basis vector dimension mismatch");
    }
    for (std::size_t i = 0; i < vectors_.size(); ++i) {
      for (std::size_t j = i; j < vectors_.size(); ++j) {
        complexd ip{0.0, 0.0};
        for (std::size_t k = 0; k < dim_; ++k) ip += std::conj(vectors_[i][k]) * vectors_[j][k];
        const complexd want = (i == j) ? complexd{1.0, 0.0} : complexd{0.0, 0.0};
        if (std::abs(ip - want) > kConstructTol) {
          throw std::invalid_argument("basis vectors are not orthonormal");
        }
      }
    }
  }

  static Basis computational(std::size_t dim, std::vector<std::string> labels = {}) {
    if (labels.empty()) {
      for (std::size_t i = 0; i < dim; ++i) labels.push_back(std::to_string(i));
    }
    std::vector<std::vector<complexd>> vecs(dim, std::vector<complexd>(dim, complexd{0.0, 0.0}));
    for (std::size_t i = 0; i < dim; ++i) vecs[i][i] = 1.0;
    return Basis(dim, std::move(vecs), std::move(labels));
  }

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  bool is_partial() const { return partial_; }
  const std::vector<complexd>& vector(std::size_t i) const { return vectors_[i]; }
  const std::string& label(std::size_t i) const { return labels_[i]; }
  const std::vector<std::string>& labels() const { return labels_; }
  bool has_eigenvalues() const { return !eigenvalues_.empty(); }
  double eigenvalue(std::size_t i) const {
    if (eigenvalues_.empty()) throw std::invalid_argument("basis has no outcome eigenvalues");
    return eigenvalues_[i];
  }

  std::optional<std::size_t> index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == label) return i;
    }
    return std::nullopt;
  }

 private:
  std::size_t dim_;
  std::vector<std::vector<complexd>> vectors_;
  std::vector<std::string> labels_;
  std::vector<double> eigenvalues_;
  bool partial_;
};

// ---------------------------------------------------------------------------
// StateVector / DensityOperator

// Map from register label to the number of decoherence events that have
// touched it; undo bookkeeping in the measurement layer compares these marks.
using DecoherenceMarks = std::map<std::string, std::uint64_t>;

class StateVector {
 public:
  StateVector(std::vector<Register> regs, std::vector<complexd> amplitudes,
              DecoherenceMarks marks = {})
      : regs_(std::move(regs)), amp_(std::move(amplitudes)), marks_(std::move(marks)) {
    const std::size_t dim = detail::checked_total_dimension(regs_);
    if (amp_.size() != dim) throw std::invalid_argument("amplitude count does not match register dimensions");
    if (std::abs(norm() - 1.0) > kConstructTol) {
      throw std::invalid_argument("state vector is not normalized");
    }
  }

  static StateVector zero_state(std::vector<Register> regs) {
    const std::size_t dim = detail::checked_total_dimension(regs);
    std::vector<complexd> amp(dim, complexd{0.0, 0.0});
    amp[0] = 1.0;
    return StateVector(std::move(regs), std::move(amp));
  }

  static StateVector basis_state(std::vector<Register> regs, std::span<const std::size_t> indices) {
    const std::size_t dim = detail::checked_total_dimension(regs);
    if (indices.size() != regs.size()) throw std::invalid_argument("basis_state index count mismatch");
    const auto st = detail::strides(regs);
    std::size_t flat = 0;
    for (std::size_t i = 0; i < regs.size(); ++i) {
      if (indices[i] >= regs[i].dimension) throw std::invalid_argument("basis_state index out of range");
      flat += indices[i] * st[i];
    }
    std::vector<complexd> amp(dim, complexd{0.0, 0.0});
    amp[flat] = 1.0;
    return StateVector(std::move(regs), std::move(amp));
  }

  // Single-register convenience: a normalized qudit state.
  static StateVector single(Register reg, std::vector<complexd> amplitudes) {
    return StateVector({std::move(reg)}, std::move(amplitudes));
  }

  const std::vector<Register>& registers() const { return regs_; }
  const std::vector<complexd>& amplitudes() const { return amp_; }
  std::size_t dimension() const { return amp_.size(); }
  const DecoherenceMarks& decoherence_marks() const { return marks_; }

  double norm() const {
    double n2 = 0.0;
    for (const complexd& a : amp_) n2 += std::norm(a);
    return std::sqrt(n2);
  }

  friend StateVector apply_unitary(StateVector state, const Unitary& u,
                                   const std::vector<std::string>& targets);
  friend class DensityOperator;

 private:
  struct Unchecked {};
  StateVector(Unchecked, std::vector<Register> regs, std::vector<complexd> amp, DecoherenceMarks marks)
      : regs_(std::move(regs)), amp_(std::move(amp)), marks_(std::move(marks)) {}

  std::vector<Register> regs_;
  std::vector<complexd> amp_;
  DecoherenceMarks marks_;
};

class DensityOperator {
 public:
  DensityOperator(std::vector<Register> regs, std::vector<complexd> matrix,
                  DecoherenceMarks marks = {})
      : regs_(std::move(regs)), m_(std::move(matrix)), marks_(std::move(marks)) {
    dim_ = detail::checked_total_dimension(regs_);
    if (m_.size() != dim_ * dim_) throw std::invalid_argument("density matrix size mismatch");
    double tr = 0.0;
    double herm_dev = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
      tr += m_[r * dim_ + r].real();
      herm_dev = std::max(herm_dev, std::abs(m_[r * dim_ + r].imag()));
      for (std::size_t c = r + 1; c < dim_; ++c) {
        herm_dev = std::max(herm_dev, std::abs(m_[r * dim_ + c] - std::conj(m_[c * dim_ + r])));
      }
    }
    if (herm_dev > kConstructTol) throw std::invalid_argument("density matrix is not Hermitian");
    if (std::abs(tr - 1.0) > kConstructTol) throw std::invalid_argument("density matrix trace is not 1");
  }

  const std::vector<Register>& registers() const { return regs_; }
  const std::vector<complexd>& matrix() const { return m_; }
  std::size_t dimension() const { return dim_; }
  const DecoherenceMarks& decoherence_marks() const { return marks_; }
  complexd at(std::size_t r, std::size_t c) const { return m_[r * dim_ + c]; }

  double trace() const {
    double tr = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) tr += m_[r * dim_ + r].real();
    return tr;
  }

  // Eigenvalue positivity is an invariant of every physical construction
  // path; it is checked on demand (O(dim^3)) rather than per construction.
  std::vector<double> eigenvalues() const;
  double min_eigenvalue() const;

  friend DensityOperator apply_unitary(DensityOperator state, const Unitary& u,
                                       const std::vector<std::string>& targets);

 private:
  std::vector<Register> regs_;
  std::vector<complexd> m_;  // row-major dim x dim
  DecoherenceMarks marks_;
  std::size_t dim_ = 0;
};

inline DensityOperator to_density(const StateVector& psi) {
  const std::size_t d = psi.dimension();
  std::vector<complexd> m(d * d);
  const auto& a = psi.amplitudes();
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) m[r * d + c] = a[r] * std::conj(a[c]);
  }
  return DensityOperator(psi.registers(), std::move(m), psi.decoherence_marks());
}

namespace detail {

struct TargetView {
  std::vector<std::size_t> positions;      // register positions of targets, in target order
  std::vector<std::size_t> target_dims;
  std::vector<std::size_t> target_strides;
  std::vector<std::size_t> rest_dims;
  std::vector<std::size_t> rest_strides;
  std::size_t target_dim = 1;
};

inline TargetView make_target_view(std::span<const Register> regs,
                                   const std::vector<std::string>& targets) {
  TargetView v;
  if (targets.empty()) throw std::invalid_argument("no target registers given");
  const auto st = strides(regs);
  for (const auto& label : targets) {
    const std::size_t p = find_register(regs, label);
    if (std::find(v.positions.begin(), v.positions.end(), p) != v.positions.end()) {
      throw std::invalid_argument("target register '" + label + "' listed twice");
    }
    v.positions.push_back(p);
    v.target_dims.push_back(regs[p].dimension);
    v.target_strides.push_back(st[p]);
    v.target_dim *= regs[p].dimension;
  }
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (std::find(v.positions.begin(), v.positions.end(), i) == v.positions.end()) {
      v.rest_dims.push_back(regs[i].dimension);
      v.rest_strides.push_back(st[i]);
    }
  }
  return v;
}

}  // namespace detail

inline StateVector apply_unitary(StateVector state, const Unitary& u,
                                 const std::vector<std::string>& targets) {
  auto v = detail::make_target_view(state.regs_, targets);
  if (v.target_dim != u.dimension()) {
    throw std::invalid_argument("unitary dimension does not match target registers");
  }
  const auto toffs = detail::index_offsets(v.target_dims, v.target_strides);
  detail::apply_matrix_strided(state.amp_.data(), u.matrix(), v.target_dim, toffs, v.rest_dims,
                               v.rest_strides);
  return state;
}


inline DensityOperator apply_unitary(DensityOperator state, const Unitary& u,
                                     const std::vector<std::string>& targets) {
  auto v = detail::make_target_view(state.regs_, targets);
  if (v.target_dim != u.dimension()) {
    throw std::invalid_argument("unitary dimension does not match target registers");
  }
  const std::size_t d = state.dim_;

  // rho -> U rho: act on row indices, the unscaled column index joins the
  // complementary loop.
  {
    std::vector<std::size_t> tstr = v.target_strides;
    for (auto& s : tstr) s *= d;
    std::vector<std::size_t> rdims = v.rest_dims;
    std::vector<std::size_t> rstr = v.rest_strides;
    for (auto& s : rstr) s *= d;
    rdims.push_back(d);
    rstr.push_back(1);
    const auto toffs = detail::index_offsets(v.target_dims, tstr);
    detail::apply_matrix_strided(state.m_.data(), u.matrix(), v.target_dim, toffs, rdims, rstr);
  }
  // (U rho) -> (U rho) U†: act on column indices with conj(U).
  {
    std::vector<complexd> uc = u.matrix();
    for (auto& z : uc) z = std::conj(z);
    std::vector<std::size_t> rdims = v.rest_dims;
    std::vector<std::size_t> rstr = v.rest_strides;
    rdims.push_back(d);
    rstr.push_back(d);
    const auto toffs = detail::index_offsets(v.target_dims, v.target_strides);
    detail::apply_matrix_strided(state.m_.data(), uc, v.target_dim, toffs, rdims, rstr);
  }
  return state;
}


// ---------------------------------------------------------------------------
// tensor / partial_trace / reordering

inline StateVector tensor(const StateVector& a, const StateVector& b) {
  std::vector<Register> regs = a.registers();
  regs.insert(regs.end(), b.registers().begin(), b.registers().end());
  std::vector<complexd> amp(a.dimension() * b.dimension());
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    for (std::size_t j = 0; j < b.dimension(); ++j) {
      amp[i * b.dimension() + j] = a.amplitudes()[i] * b.amplitudes()[j];
    }
  }
  DecoherenceMarks marks = a.decoherence_marks();
  marks.insert(b.decoherence_marks().begin(), b.decoherence_marks().end());
  return StateVector(std::move(regs), std::move(amp), std::move(marks));
}

inline DensityOperator tensor(const DensityOperator& a, const DensityOperator& b) {
  std::vector<Register> regs = a.registers();
  regs.insert(regs.end(), b.registers().begin(), b.registers().end());
  const std::size_t da = a.dimension(), db = b.dimension(), d = da * db;
  std::vector<complexd> m(d * d);
  for (std::size_t ra = 0; ra < da; ++ra)
    for (std::size_t rb = 0; rb < db; ++rb)
      for (std::size_t ca = 0; ca < da; ++ca)
        for (std::size_t cb = 0; cb < db; ++cb)
          m[(ra * db + rb) * d + (ca * db + cb)] = a.at(ra, ca) * b.at(rb, cb);
  DecoherenceMarks marks = a.decoherence_marks();
  marks.insert(b.decoherence_marks().begin(), b.decoherence_marks().end());
  return DensityOperator(std::move(regs), std::move(m), std::move(marks));
}

namespace detail {

struct KeepSplit {
  std::vector<Register> kept;           // in original register order
  std::vector<std::size_t> keep_offsets;
  std::vector<std::size_t> trace_offsets;
  std::size_t keep_dim = 1;
};

inline KeepSplit make_keep_split(std::span<const Register> regs, const std::vector<std::string>& keep) {
  if (keep.empty()) throw std::invalid_argument("empty keep set");
  std::vector<bool> is_kept(regs.size(), false);
  for (const auto& label : keep) is_kept[find_register(regs, label)] = true;
  const auto st = strides(regs);
  std::vector<std::size_t> kdims, kstr, tdims, tstr;
  KeepSplit ks;
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (is_kept[i]) {
      ks.kept.push_back(regs[i]);
      kdims.push_back(regs[i].dimension);
      kstr.push_back(st[i]);
      ks.keep_dim *= regs[i].dimension;
    } else {
      tdims.push_back(regs[i].dimension);
      tstr.push_back(st[i]);
    }
  }
  ks.keep_offsets = index_offsets(kdims, kstr);
  ks.trace_offsets = index_offsets(tdims, tstr);
  return ks;
}

}  // namespace detail

// Kept registers retain their original relative order regardless of the
// order of the `keep` argument.
inline DensityOperator partial_trace(const DensityOperator& rho, const std::vector<std::string>& keep) {
  const auto ks = detail::make_keep_split(rho.registers(), keep);
  const std::size_t d = rho.dimension(), dk = ks.keep_dim;
  std::vector<complexd> m(dk * dk, complexd{0.0, 0.0});
  for (std::size_t a = 0; a < dk; ++a) {
    for (std::size_t b = 0; b < dk; ++b) {
      complexd acc{0.0, 0.0};
      for (std::size_t t : ks.trace_offsets) {
        acc += rho.matrix()[(ks.keep_offsets[a] + t) * d + ks.keep_offsets[b] + t];
      }
      m[a * dk + b] = acc;
    }
  }
  DecoherenceMarks marks;
  for (const auto& r : ks.kept) {
    auto it = rho.decoherence_marks().find(r.label);
    if (it != rho.decoherence_marks().end()) marks.insert(*it);
  }
  return DensityOperator(ks.kept, std::move(m), std::move(marks));
}


// Reduced density operator of a pure state without materializing the full
// projector; the workhorse for reading small subsystems of large states.
inline DensityOperator reduced_density(const StateVector& psi, const std::vector<std::string>& keep) {
  const auto ks = detail::make_keep_split(psi.registers(), keep);
  const std::size_t dk = ks.keep_dim;
  std::vector<complexd> m(dk * dk, complexd{0.0, 0.0});
  const auto& a = psi.amplitudes();
  for (std::size_t i = 0; i < dk; ++i) {
    for (std::size_t j = 0; j < dk; ++j) {
      complexd acc{0.0, 0.0};
      for (std::size_t t : ks.trace_offsets) {
        acc += a[ks.keep_offsets[i] + t] * std::conj(a[ks.keep_offsets[j] + t]);
      }
      m[i * dk + j] = acc;
    }
  }
  DecoherenceMarks marks;
  for (const auto& r : ks.kept) {
    auto it = psi.decoherence_marks().find(r.label);
    if (it != psi.decoherence_marks().end()) marks.insert(*it);
  }
  return DensityOperator(ks.kept, std::move(m), std::move(marks));
}


namespace detail {

inline std::vector<std::size_t> permutation_map(std::span<const Register> from,
                                                const std::vector<std::string>& order) {
  if (order.size() != from.size()) throw std::invalid_argument("register reorder must list every register");
  std::vector<std::size_t> perm;
  for (const auto& label : order) perm.push_back(find_register(from, label));
  std::vector<bool> seen(from.size(), false);
  for (std::size_t p : perm) {
    if (seen[p]) throw std::invalid_argument("register reorder lists a register twice");
    seen[p] = true;
  }
  return perm;
}

// flat-index translation table old -> new under a register permutation
inline std::vector<std::size_t> flat_permutation(std::span<const Register> from,
                                                 std::span<const std::size_t> perm) {
  std::vector<Register> to;
  for (std::size_t p : perm) to.push_back(from[p]);
  const auto from_strides = strides(from);
  const auto to_strides = strides(to);
  std::size_t dim = 1;
  for (const auto& r : from) dim *= r.dimension;
  std::vector<std::size_t> map(dim, 0);
  // decompose old flat index over `from`, recompose over `to`
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const std::size_t src = perm[k];
    const std::size_t d = from[src].dimension;
    const std::size_t s_from = from_strides[src];
    const std::size_t s_to = to_strides[k];
    for (std::size_t i = 0; i < dim; ++i) map[i] += ((i / s_from) % d) * s_to;
  }
  return map;
}

}  // namespace detail

inline StateVector reorder_registers(const StateVector& psi, const std::vector<std::string>& order) {
  const auto perm = detail::permutation_map(psi.registers(), order);
  const auto map = detail::flat_permutation(psi.registers(), perm);
  std::vector<Register> regs;
  for (std::size_t p : perm) regs.push_back(psi.registers()[p]);
  std::vector<complexd> amp(psi.dimension());
  for (std::size_t i = 0; i < psi.dimension(); ++i) amp[map[i]] = psi.amplitudes()[i];
  return StateVector(std::move(regs), std::move(amp), psi.decoherence_marks());
}

inline DensityOperator reorder_registers(const DensityOperator& rho, const std::vector<std::string>& order) {
  const auto perm = detail::permutation_map(rho.registers(), order);
  const auto map = detail::flat_permutation(rho.registers(), perm);
  std::vector<Register> regs;
  for (std::size_t p : perm) regs.push_back(rho.registers()[p]);
  const std::size_t d = rho.dimension();
  std::vector<complexd> m(d * d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) m[map[r] * d + map[c]] = rho.at(r, c);
  }
  return DensityOperator(std::move(regs), std::move(m), rho.decoherence_marks());
}

// ---------------------------------------------------------------------------
// Born probabilities

struct Outcome {
  std::string label;
  double probability = 0.0;
};

struct OutcomeDistribution {
  std::vector<Outcome> outcomes;
  bool partial = false;
  double outside = 0.0;  // residual probability outside a partial basis

  double probability(const std::string& label) const {
    for (const auto& o : outcomes) {
      if (o.label == label) return o.probability;
    }
    throw std::invalid_argument("no outcome labeled '" + label + "'");
  }

  double total() const {
    double t = outside;
    for (const auto& o : outcomes) t += o.probability;
    return t;
  }
};

namespace detail {

inline double born_one_pure(const StateVector& psi, const std::vector<complexd>& v,
                            const std::vector<std::size_t>& toffs,
                            const std::vector<std::size_t>& roffs) {
  const auto& a = psi.amplitudes();
  double p = 0.0;
  for (std::size_t base : roffs) {
    complexd amp{0.0, 0.0};
    for (std::size_t t = 0; t < v.size(); ++t) amp += std::conj(v[t]) * a[base + toffs[t]];
    p += std::norm(amp);
  }
  return p;
}

inline double born_one_mixed(const DensityOperator& rho, const std::vector<complexd>& v,
                             const std::vector<std::size_t>& toffs,
                             const std::vector<std::size_t>& roffs) {
  const std::size_t d = rho.dimension();
  const auto& m = rho.matrix();
  complexd p{0.0, 0.0};
  for (std::size_t base : roffs) {
    for (std::size_t t = 0; t < v.size(); ++t) {
      for (std::size_t t2 = 0; t2 < v.size(); ++t2) {
        p += std::conj(v[t]) * m[(base + toffs[t]) * d + base + toffs[t2]] * v[t2];
      }
    }
  }
  return p.real();
}

}  // namespace detail

template <class State>
OutcomeDistribution born_probabilities(const State& state, const Basis& basis,
                                       const std::vector<std::string>& targets) {
  const auto tv = detail::make_target_view(state.registers(), targets);
  if (tv.target_dim != basis.dimension()) {
    throw std::invalid_argument("basis dimension does not match target registers");
  }
  const auto toffs = detail::index_offsets(tv.target_dims, tv.target_strides);
  const auto roffs = detail::index_offsets(tv.rest_dims, tv.rest_strides);
  OutcomeDistribution dist;
  dist.partial = basis.is_partial();
  double sum = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    double p;
    if constexpr (std::is_same_v<State, StateVector>) {
      p = detail::born_one_pure(state, basis.vector(i), toffs, roffs);
    } else {
      p = detail::born_one_mixed(state, basis.vector(i), toffs, roffs);
    }
    p = std::max(p, 0.0);
    dist.outcomes.push_back({basis.label(i), p});
    sum += p;
  }
  if (basis.is_partial()) {
    dist.outside = std::max(1.0 - sum, 0.0);
  }
  return dist;
}


// ---------------------------------------------------------------------------
// Hermitian eigensystem (cyclic Jacobi) and fidelity

struct EigenSystem {
  std::vector<double> values;             // ascending
  std::vector<std::vector<complexd>> vectors;  // vectors[k] is the k-th eigenvector
};

inline EigenSystem hermitian_eigensystem(std::vector<complexd> a, std::size_t n) {
  std::vector<complexd> v(n * n, complexd{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = r + 1; c < n; ++c) s += std::norm(a[r * n + c]);
    return s;
  };

  for (int sweep = 0; sweep < 100 && off_norm() > 1e-28; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const complexd apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[p * n + p].real();
        const double aqq = a[q * n + q].real();
        const complexd phase = apq / std::abs(apq);
        const double theta = 0.5 * std::atan2(2.0 * std::abs(apq), app - aqq);
        const double c = std::cos(theta), s = std::sin(theta);
        const complexd sp = s * std::conj(phase);  // J[q][p]; J[p][q] = -conj(sp)
        // A <- A J, then A <- J† A; V accumulates V J.
        for (std::size_t k = 0; k < n; ++k) {
          const complexd akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp + sp * akq;
          a[k * n + q] = -std::conj(sp) * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const complexd apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk + std::conj(sp) * aqk;
          a[q * n + k] = -sp * apk + c * aqk;
        }
        a[p * n + q] = std::conj(a[q * n + p]);  // keep exact Hermiticity at the pivot
        for (std::size_t k = 0; k < n; ++k) {
          const complexd vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp + sp * vkq;
          v[k * n + q] = -std::conj(sp) * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return a[i * n + i].real() < a[j * n + j].real(); });
  EigenSystem es;
  for (std::size_t k : order) {
    es.values.push_back(a[k * n + k].real());
    std::vector<complexd> vec(n);
    for (std::size_t r = 0; r < n; ++r) vec[r] = v[r * n + k];
    es.vectors.push_back(std::move(vec));
  }
  return es;
}

inline std::vector<double> DensityOperator::eigenvalues() const {
  return hermitian_eigensystem(m_, dim_).values;
}

inline double DensityOperator::min_eigenvalue() const {
  const auto vals = eigenvalues();
  return vals.empty() ? 0.0 : vals.front();
}

namespace detail {

inline void check_same_registers(std::span<const Register> a, std::span<const Register> b) {
  if (a.size() != b.size()) throw std::invalid_argument("register mismatch");
  for (const auto& ra : a) {
    bool found = false;
    for (const auto& rb : b) {
      if (ra.label == rb.label) {
        if (ra.dimension != rb.dimension) throw std::invalid_argument("register mismatch");
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("register mismatch");
  }
}

inline std::vector<std::string> labels_of(std::span<const Register> regs) {
  std::vector<std::string> out;
  for (const auto& r : regs) out.push_back(r.label);
  return out;
}

}  // namespace detail

inline double fidelity(const StateVector& a, const StateVector& b) {
  detail::check_same_registers(a.registers(), b.registers());
  const StateVector bb = reorder_registers(b, detail::labels_of(a.registers()));
  complexd ip{0.0, 0.0};
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    ip += std::conj(a.amplitudes()[i]) * bb.amplitudes()[i];
  }
  return std::min(std::norm(ip), 1.0);
}

inline double fidelity(const StateVector& psi, const DensityOperator& rho) {
  detail::check_same_registers(psi.registers(), rho.registers());
  const DensityOperator rr = reorder_registers(rho, detail::labels_of(psi.registers()));
  complexd f{0.0, 0.0};
  const std::size_t d = psi.dimension();
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      f += std::conj(psi.amplitudes()[r]) * rr.at(r, c) * psi.amplitudes()[c];
    }
  }
  return std::clamp(f.real(), 0.0, 1.0);
}

inline double fidelity(const DensityOperator& rho, const StateVector& psi) {
  return fidelity(psi, rho);
}

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const DensityOperator& rho, const DensityOperator& sigma) {
  detail::check_same_registers(rho.registers(), sigma.registers());
  const DensityOperator s = reorder_registers(sigma, detail::labels_of(rho.registers()));
  const std::size_t d = rho.dimension();
  const auto er = hermitian_eigensystem(rho.matrix(), d);
  // sqrt(rho)
  std::vector<complexd> sq(d * d, complexd{0.0, 0.0});
  for (std::size_t k = 0; k < d; ++k) {
    const double lam = std::sqrt(std::max(er.values[k], 0.0));
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        sq[r * d + c] += lam * er.vectors[k][r] * std::conj(er.vectors[k][c]);
      }
    }
  }
  auto matmul = [d](const std::vector<complexd>& x, const std::vector<complexd>& y) {
    std::vector<complexd> z(d * d, complexd{0.0, 0.0});
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t k = 0; k < d; ++k) {
        const complexd xrk = x[r * d + k];
        if (xrk == complexd{0.0, 0.0}) continue;
        for (std::size_t c = 0; c < d; ++c) z[r * d + c] += xrk * y[k * d + c];
      }
    return z;
  };
  const auto inner = matmul(matmul(sq, s.matrix()), sq);
  const auto ei = hermitian_eigensystem(inner, d);
  double tr = 0.0;
  for (double lam : ei.values) tr += std::sqrt(std::max(lam, 0.0));
  return std::clamp(tr * tr, 0.0, 1.0);
}

// Elementwise max deviation after aligning register order; density operators
// carry no global phase so this is a faithful equality measure for them.
inline double max_abs_diff(const DensityOperator& a, const DensityOperator& b) {
  detail::check_same_registers(a.registers(), b.registers());
  const DensityOperator bb = reorder_registers(b, detail::labels_of(a.registers()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.matrix().size(); ++i) {
    m = std::max(m, std::abs(a.matrix()[i] - bb.matrix()[i]));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Debug serialization

inline nlohmann::json registers_json(std::span<const Register> regs) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : regs) j.push_back({{"label", r.label}, {"dimension", r.dimension}});
  return j;
}

inline nlohmann::json to_debug_json(const StateVector& psi) {
  nlohmann::json amps = nlohmann::json::array();
  for (const auto& a : psi.amplitudes()) amps.push_back({a.real(), a.imag()});
  return {{"registers", registers_json(psi.registers())}, {"amplitudes", amps}};
}

inline nlohmann::json to_debug_json(const DensityOperator& rho) {
  nlohmann::json rows = nlohmann::json::array();
  const std::size_t d = rho.dimension();
  for (std::size_t r = 0; r < d; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < d; ++c) row.push_back({rho.at(r, c).real(), rho.at(r, c).imag()});
    rows.push_back(row);
  }
  return {{"registers", registers_json(rho.registers())}, {"matrix", rows}};
}

}  // namespace wigner::qcore
