#pragma once

// Measurement theory on top of qcore: reversible pre-measurements (basis
// copies into pointer/friend registers), irreversible decoherence through a
// fresh environment register, full measurements (pre-measure + decohere +
// Born readout), undo of pre-measurements, and the measurement bases used by
// the scenario layer (mutually unbiased qubit bases, phase/plane bases,
// dressed system+friend bases, lab superposition bases).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wigner/qcore.hpp"

namespace wigner::meas {

using qcore::Basis;
using qcore::complexd;
using qcore::DensityOperator;
using qcore::OutcomeDistribution;
using qcore::Register;
using qcore::StateVector;
using qcore::Unitary;

inline constexpr std::uint64_t kDefaultSeed = 42;

enum class FriendPolicy { PreMeasure, FullMeasure };

inline const char* to_string(FriendPolicy p) {
  return p == FriendPolicy::PreMeasure ? "premeasure" : "fullmeasure";
}

// Thrown when an undo is requested after decoherence touched an involved
// register: the environment record cannot be recalled.
class IrreversibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Deterministic completion of a partial orthonormal set to a full basis:
// Gram-Schmidt over computational candidates.
inline std::vector<std::vector<complexd>> complete_vectors(
    std::vector<std::vector<complexd>> vecs, std::size_t dim) {
  for (std::size_t cand = 0; cand < dim && vecs.size() < dim; ++cand) {
    std::vector<complexd> v(dim, complexd{0.0, 0.0});
    v[cand] = 1.0;
    for (const auto& u : vecs) {
      complexd ip{0.0, 0.0};
      for (std::size_t k = 0; k < dim; ++k) ip += std::conj(u[k]) * v[k];
      for (std::size_t k = 0; k < dim; ++k) v[k] -= ip * u[k];
    }
    double n2 = 0.0;
    for (const auto& z : v) n2 += std::norm(z);
    if (n2 < 0.25) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& z : v) z *= inv;
    vecs.push_back(std::move(v));
  }
  if (vecs.size() != dim) throw std::logic_error("basis completion failed");
  return vecs;
}

// Copy gate on (system x ancilla): for system basis vector i, shift the
// ancilla computational value by record(i) modulo the ancilla dimension. On
// ancillas prepared in |0> this writes the record state |record(i)>.
inline Unitary copy_gate(const std::vector<std::vector<complexd>>& sys_vectors,
                         std::size_t sys_dim, std::size_t anc_dim,
                         const std::vector<std::size_t>& record) {
  const std::size_t d = sys_dim * anc_dim;
  std::vector<complexd> m(d * d, complexd{0.0, 0.0});
  for (std::size_t i = 0; i < sys_vectors.size(); ++i) {
    const auto& b = sys_vectors[i];
    for (std::size_t x = 0; x < sys_dim; ++x) {
      for (std::size_t y = 0; y < sys_dim; ++y) {
        const complexd pxy = b[x] * std::conj(b[y]);
        if (pxy == complexd{0.0, 0.0}) continue;
        for (std::size_t a = 0; a < anc_dim; ++a) {
          const std::size_t a2 = (a + record[i]) % anc_dim;
          m[(x * anc_dim + a2) * d + (y * anc_dim + a)] += pxy;
        }
      }
    }
  }
  return Unitary(d, std::move(m));
}

inline std::string fresh_label(const std::vector<Register>& regs, const std::string& base) {
  auto taken = [&](const std::string& l) {
    for (const auto& r : regs) {
      if (r.label == l) return true;
    }
    return false;
  };
  if (!taken(base)) return base;
  for (int k = 1;; ++k) {
    const std::string l = base + "#" + std::to_string(k);
    if (!taken(l)) return l;
  }
}

template <class State>
double probability_of_index(const State& state, const std::string& label, std::size_t dim,
                            std::size_t index) {
  const auto dist = qcore::born_probabilities(state, Basis::computational(dim), {label});
  return dist.outcomes[index].probability;
}

// P(all listed registers read 0): only the zero slice is touched, so the
// check is cheap even on large states.
template <class State>
double all_zero_probability(const State& state, const std::vector<std::string>& registers) {
  const auto tv = qcore::detail::make_target_view(state.registers(), registers);
  const auto roffs = qcore::detail::index_offsets(tv.rest_dims, tv.rest_strides);
  double p = 0.0;
  if constexpr (std::is_same_v<State, StateVector>) {
    for (std::size_t base : roffs) p += std::norm(state.amplitudes()[base]);
  } else {
    const std::size_t d = state.dimension();
    for (std::size_t base : roffs) p += state.matrix()[base * d + base].real();
  }
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pre-measurement

class PremeasurementRecord {
 public:
  PremeasurementRecord(std::string system, Basis basis, std::vector<std::string> ancillas,
                       Unitary gate, qcore::DecoherenceMarks marks_at_creation)
      : system_(std::move(system)),
        basis_(std::move(basis)),
        ancillas_(std::move(ancillas)),
        gate_(std::move(gate)),
        marks_(std::move(marks_at_creation)) {}

  const std::string& system_register() const { return system_; }
  const Basis& copied_basis() const { return basis_; }
  const std::vector<std::string>& ancilla_registers() const { return ancillas_; }
  const Unitary& copy_gate() const { return gate_; }

  std::vector<std::string> involved_registers() const {
    std::vector<std::string> all{system_};
    all.insert(all.end(), ancillas_.begin(), ancillas_.end());
    return all;
  }

  // True iff no decoherence event has touched any involved register since
  // the pre-measurement was applied to the given state.
  template <class State>
  bool inverse_available(const State& state) const {
    for (const auto& label : involved_registers()) {
      const auto then = marks_.find(label);
      const auto now = state.decoherence_marks().find(label);
      const std::uint64_t a = (then == marks_.end()) ? 0 : then->second;
      const std::uint64_t b = (now == state.decoherence_marks().end()) ? 0 : now->second;
      if (a != b) return false;
    }
    return true;
  }

 private:
  std::string system_;
  Basis basis_;
  std::vector<std::string> ancillas_;
  Unitary gate_;
  qcore::DecoherenceMarks marks_;
};

// Entangles `system` with each ancilla in the given basis:
//   sum_i a_i |b_i>|0...0>  ->  sum_i a_i |b_i>|i...i>.
// Ancillas must be prepared in their initial state |0> and have dimension
// equal to the basis size. Reversible; the returned record drives
// undo_premeasure.
template <class State>
std::pair<State, PremeasurementRecord> premeasure(State state, const std::string& system,
                                                  const Basis& basis,
                                                  const std::vector<std::string>& ancillas) {
  const auto& regs = state.registers();
  const std::size_t sys_pos = qcore::detail::find_register(regs, system);
  const std::size_t sys_dim = regs[sys_pos].dimension;
  if (basis.dimension() != sys_dim || basis.size() != sys_dim) {
    throw std::invalid_argument("premeasure requires a complete basis over the system register");
  }
  if (ancillas.empty()) throw std::invalid_argument("premeasure requires at least one ancilla");
  for (const auto& anc : ancillas) {
    const std::size_t pos = qcore::detail::find_register(regs, anc);
    if (regs[pos].dimension != basis.size()) {
      throw std::invalid_argument("ancilla '" + anc + "' dimension does not match basis size");
    }
    if (anc == system) throw std::invalid_argument("ancilla cannot be the system register");
  }
  if (std::abs(detail::all_zero_probability(state, ancillas) - 1.0) > qcore::kConstructTol) {
    for (const auto& anc : ancillas) {
      const std::size_t pos = qcore::detail::find_register(regs, anc);
      const double p0 = detail::probability_of_index(state, anc, regs[pos].dimension, 0);
      if (std::abs(p0 - 1.0) > qcore::kConstructTol) {
        throw std::invalid_argument("ancilla '" + anc + "' is not in its initial state");
      }
    }
    throw std::invalid_argument("ancillas are not jointly in their initial state");
  }

  std::vector<std::vector<complexd>> vecs;
  std::vector<std::size_t> record;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    vecs.push_back(basis.vector(i));
    record.push_back(i);
  }
  const Unitary gate = detail::copy_gate(vecs, sys_dim, basis.size(), record);

  qcore::DecoherenceMarks snapshot;
  auto copy_mark = [&](const std::string& label) {
    auto it = state.decoherence_marks().find(label);
    if (it != state.decoherence_marks().end()) snapshot.insert(*it);
  };
  copy_mark(system);
  for (const auto& anc : ancillas) copy_mark(anc);

  for (const auto& anc : ancillas) {
    state = qcore::apply_unitary(std::move(state), gate, {system, anc});
  }
  PremeasurementRecord rec(system, basis, ancillas, gate, std::move(snapshot));
  return {std::move(state), std::move(rec)};
}

// Inverse of premeasure. Refuses to run if decoherence has touched any
// involved register since the record was made: the interaction with the lost
// environment cannot be undone.
template <class State>
State undo_premeasure(State state, const PremeasurementRecord& record) {
  if (!record.inverse_available(state)) {
    throw IrreversibleError("undo_premeasure: irreversible decoherence has touched register(s) "
                            "involved in the pre-measurement");
  }
  const Unitary inverse = record.copy_gate().dagger();
  const auto& ancillas = record.ancilla_registers();
  for (auto it = ancillas.rbegin(); it != ancillas.rend(); ++it) {
    state = qcore::apply_unitary(std::move(state), inverse, {record.system_register(), *it});
  }
  if (std::abs(detail::all_zero_probability(state, ancillas) - 1.0) > 1e-9) {
    throw std::logic_error("undo_premeasure: ancillas did not return to their initial state");
  }
  return state;
}

// ---------------------------------------------------------------------------
// Decoherence

// Appends a fresh environment register, copies the pointer value into it
// unitarily, and traces it out. With strength 1 (the default) the result is
// exactly block-diagonal in the pointer basis; with strength s in [0,1] the
// off-diagonal blocks are scaled by (1-s). Diagonal blocks are unchanged.
//
// The environment records are chi_i = sqrt(1-s)|0> + sqrt(s)|i+1> in a
// (n+1)-dimensional environment, so <chi_i|chi_j> = 1-s for i != j.
template <class State>
DensityOperator decohere(const State& state, const std::vector<std::string>& pointer,
                         const Basis& pointer_basis, double strength = 1.0) {
  if (strength < 0.0 || strength > 1.0) throw std::invalid_argument("decohere strength outside [0,1]");
  const auto tv = qcore::detail::make_target_view(state.registers(), pointer);
  if (tv.target_dim != pointer_basis.dimension() || pointer_basis.size() != tv.target_dim) {
    throw std::invalid_argument("pointer basis must span the pointer registers");
  }
  const std::size_t n = pointer_basis.size();
  const std::size_t env_dim = n + 1;

  // Environment record states and their unitary completions W_i (W_i|0> = chi_i).
  const std::size_t d = tv.target_dim * env_dim;
  std::vector<complexd> m(d * d, complexd{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<complexd> chi(env_dim, complexd{0.0, 0.0});
    chi[0] = std::sqrt(1.0 - strength);
    chi[i + 1] = std::sqrt(strength);
    const auto wi = detail::complete_vectors({chi}, env_dim);
    const auto& b = pointer_basis.vector(i);
    for (std::size_t x = 0; x < tv.target_dim; ++x) {
      for (std::size_t y = 0; y < tv.target_dim; ++y) {
        const complexd pxy = b[x] * std::conj(b[y]);
        if (pxy == complexd{0.0, 0.0}) continue;
        for (std::size_t r = 0; r < env_dim; ++r) {
          for (std::size_t c = 0; c < env_dim; ++c) {
            // W_i stored column-wise: wi[c][r] is entry (r,c).
            m[(x * env_dim + r) * d + (y * env_dim + c)] += pxy * wi[c][r];
          }
        }
      }
    }
  }
  const Unitary interaction(d, std::move(m));

  const std::string env_label = detail::fresh_label(state.registers(), "env");
  const Register env{env_label, env_dim};
  std::vector<std::string> targets = pointer;
  targets.push_back(env_label);
  std::vector<std::string> keep;
  for (const auto& r : state.registers()) keep.push_back(r.label);

  DensityOperator reduced = [&] {
    if constexpr (std::is_same_v<State, StateVector>) {
      auto joint = qcore::tensor(state, StateVector::zero_state({env}));
      joint = qcore::apply_unitary(std::move(joint), interaction, targets);
      return qcore::reduced_density(joint, keep);
    } else {
      std::vector<complexd> env0(env_dim * env_dim, complexd{0.0, 0.0});
      env0[0] = 1.0;
      auto joint = qcore::tensor(state, DensityOperator({env}, std::move(env0)));
      joint = qcore::apply_unitary(std::move(joint), interaction, targets);
      return qcore::partial_trace(joint, keep);
    }
  }();

  qcore::DecoherenceMarks marks = reduced.decoherence_marks();
  for (const auto& label : pointer) ++marks[label];
  return DensityOperator(reduced.registers(), reduced.matrix(), std::move(marks));
}

// ---------------------------------------------------------------------------
// Measurement readout

struct MeasurementOutcome {
  std::string label;
  double probability = 0.0;
  DensityOperator post_state;  // normalized when probability > 0
};

inline constexpr const char* kOutsideLabel = "outside";

namespace detail {

// <v_i| rho_block |v_j> sandwich over the target slots; returns the
// unnormalized projected matrix |v_i><v_i| rho |v_j><v_j| and its trace
// contribution when i == j.
inline std::pair<std::vector<complexd>, double> sandwich(
    const DensityOperator& rho, const std::vector<complexd>& vi, const std::vector<complexd>& vj,
    const std::vector<std::size_t>& toffs, const std::vector<std::size_t>& roffs) {
  const std::size_t d = rho.dimension();
  std::vector<complexd> proj(d * d, complexd{0.0, 0.0});
  double p = 0.0;
  for (std::size_t br : roffs) {
    for (std::size_t bc : roffs) {
      complexd acc{0.0, 0.0};
      for (std::size_t t = 0; t < vi.size(); ++t) {
        for (std::size_t t2 = 0; t2 < vj.size(); ++t2) {
          acc += std::conj(vi[t]) * rho.matrix()[(br + toffs[t]) * d + bc + toffs[t2]] * vj[t2];
        }
      }
      for (std::size_t t = 0; t < vi.size(); ++t) {
        for (std::size_t t2 = 0; t2 < vj.size(); ++t2) {
          proj[(br + toffs[t]) * d + bc + toffs[t2]] += vi[t] * acc * std::conj(vj[t2]);
        }
      }
      if (br == bc) p += acc.real();
    }
  }
  return {std::move(proj), p};
}

}  // namespace detail

// Projective readout as a channel: Born probabilities plus normalized
// post-measurement states. A partial basis contributes an extra "outside"
// branch for the orthogonal complement when it carries any probability.
template <class State>
std::vector<MeasurementOutcome> measure_channel(const State& state,
                                                const std::vector<std::string>& targets,
                                                const Basis& basis) {
  const auto tv = qcore::detail::make_target_view(state.registers(), targets);
  if (tv.target_dim != basis.dimension()) {
    throw std::invalid_argument("basis dimension does not match measurement targets");
  }
  const auto toffs = qcore::detail::index_offsets(tv.target_dims, tv.target_strides);
  const auto roffs = qcore::detail::index_offsets(tv.rest_dims, tv.rest_strides);

  const DensityOperator rho = [&] {
    if constexpr (std::is_same_v<State, StateVector>) {
      return qcore::to_density(state);
    } else {
      return state;
    }
  }();

  std::vector<MeasurementOutcome> out;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    auto [proj, p] = detail::sandwich(rho, basis.vector(i), basis.vector(i), toffs, roffs);
    p = std::max(p, 0.0);
    if (p > 1e-15) {
      for (auto& z : proj) z /= p;
      out.push_back({basis.label(i), p,
                     DensityOperator(rho.registers(), std::move(proj), rho.decoherence_marks())});
    } else {
      out.push_back({basis.label(i), p, rho});  // placeholder post state at (numerical) zero weight
    }
  }

  if (basis.is_partial()) {
    double p_in = 0.0;
    for (const auto& o : out) p_in += o.probability;
    const double p_out = std::max(1.0 - p_in, 0.0);
    if (p_out > 1e-12) {
      std::vector<std::vector<complexd>> vecs;
      for (std::size_t i = 0; i < basis.size(); ++i) vecs.push_back(basis.vector(i));
      const auto completed = detail::complete_vectors(std::move(vecs), basis.dimension());
      const std::size_t d = rho.dimension();
      std::vector<complexd> acc_m(d * d, complexd{0.0, 0.0});
      // Pi_out rho Pi_out expands over all pairs of complement vectors.
      for (std::size_t j = basis.size(); j < completed.size(); ++j) {
        for (std::size_t j2 = basis.size(); j2 < completed.size(); ++j2) {
          const auto [proj, unused] = detail::sandwich(rho, completed[j], completed[j2], toffs, roffs);
          (void)unused;
          for (std::size_t k = 0; k < acc_m.size(); ++k) acc_m[k] += proj[k];
        }
      }
      for (auto& z : acc_m) z /= p_out;
      out.push_back({kOutsideLabel, p_out,
                     DensityOperator(rho.registers(), std::move(acc_m), rho.decoherence_marks())});
    }
  }
  return out;
}

inline std::size_t sample_outcome(const std::vector<MeasurementOutcome>& ensemble,
                                  std::mt19937_64& rng) {
  double total = 0.0;
  for (const auto& o : ensemble) total += o.probability;
  std::uniform_real_distribution<double> u(0.0, total);
  double x = u(rng);
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    x -= ensemble[i].probability;
    if (x <= 0.0) return i;
  }
  return ensemble.size() - 1;
}

struct FullMeasureResult {
  std::vector<MeasurementOutcome> ensemble;
  std::size_t sampled_index = 0;

  const MeasurementOutcome& sampled() const { return ensemble[sampled_index]; }
};

// The full measurement process: pre-measure the (possibly multi-register)
// system into the ancilla pointer(s), decohere the pointers, then read out.
// A partial basis is completed internally; complement outcomes are recorded
// coarsely as a single extra pointer value and reported as "outside".
// Ancilla dimension must equal the basis size (plus one when partial).
template <class State>
FullMeasureResult full_measure(const State& state, const std::vector<std::string>& system,
                               const Basis& basis, const std::vector<std::string>& ancillas,
                               std::uint64_t seed = kDefaultSeed) {
  const auto tv = qcore::detail::make_target_view(state.registers(), system);
  if (tv.target_dim != basis.dimension()) {
    throw std::invalid_argument("basis dimension does not match system registers");
  }
  const std::size_t n_out = basis.size();
  const std::size_t anc_dim_needed = n_out + (basis.is_partial() ? 1 : 0);
  if (ancillas.empty()) throw std::invalid_argument("full_measure requires at least one ancilla");
  for (const auto& anc : ancillas) {
    const std::size_t pos = qcore::detail::find_register(state.registers(), anc);
    if (state.registers()[pos].dimension != anc_dim_needed) {
      throw std::invalid_argument("ancilla '" + anc + "' dimension must be " +
                                  std::to_string(anc_dim_needed));
    }
  }
  if (std::abs(detail::all_zero_probability(state, ancillas) - 1.0) > qcore::kConstructTol) {
    throw std::invalid_argument("full_measure ancillas are not in their initial state");
  }

  std::vector<std::vector<complexd>> vecs;
  std::vector<std::size_t> record;
  for (std::size_t i = 0; i < n_out; ++i) {
    vecs.push_back(basis.vector(i));
    record.push_back(i);
  }
  if (basis.is_partial()) {
    vecs = detail::complete_vectors(std::move(vecs), basis.dimension());
    record.resize(vecs.size(), n_out);  // complement lumps into one pointer value
  }
  const Unitary gate = detail::copy_gate(vecs, tv.target_dim, anc_dim_needed, record);

  DensityOperator rho = [&] {
    auto s = state;
    for (const auto& anc : ancillas) {
      std::vector<std::string> targets = system;
      targets.push_back(anc);
      s = qcore::apply_unitary(std::move(s), gate, targets);
    }
    return decohere(s, ancillas, Basis::computational(
                                     [&] {
                                       std::size_t p = 1;
                                       for (std::size_t k = 0; k < ancillas.size(); ++k) p *= anc_dim_needed;
                                       return p;
                                     }()),
                    1.0);
  }();

  // Pointer readout from the first ancilla.
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n_out; ++i) labels.push_back(basis.label(i));
  if (basis.is_partial()) labels.push_back(kOutsideLabel);
  FullMeasureResult result;
  result.ensemble =
      measure_channel(rho, {ancillas.front()}, Basis::computational(anc_dim_needed, labels));
  std::mt19937_64 rng(seed);
  result.sampled_index = sample_outcome(result.ensemble, rng);
  return result;
}

// ---------------------------------------------------------------------------
// Bases

// Mutually unbiased qubit bases. n=1 is computational; n=2 has vectors
// (|0> + e^{i l pi} |1>)/sqrt(2); n=3 has (|0> + e^{i(pi/2 + l pi)} |1>)/sqrt(2).
// Outcome eigenvalues are (-1)^l.
inline Basis mub_basis(int n) {
  const double isq2 = 1.0 / std::sqrt(2.0);
  switch (n) {
    case 1:
      return Basis(2, {{1.0, 0.0}, {0.0, 1.0}}, {"+1", "-1"}, {1.0, -1.0});
    case 2:
    case 3: {
      std::vector<std::vector<complexd>> vecs;
      for (int l = 0; l < 2; ++l) {
        const double phi = (n == 3 ? std::numbers::pi / 2 : 0.0) + l * std::numbers::pi;
        vecs.push_back({isq2, isq2 * std::polar(1.0, phi)});
      }
      return Basis(2, std::move(vecs), {"+1", "-1"}, {1.0, -1.0});
    }
    default:
      throw std::invalid_argument("mub_basis index must be 1, 2 or 3");
  }
}

// Equatorial qubit basis |+-1, phi> = (|0> +- e^{i phi} |1>)/sqrt(2).
// phi = 0 coincides with mub_basis(2), phi = pi/2 with mub_basis(3).
inline Basis phase_basis(double phi) {
  const double isq2 = 1.0 / std::sqrt(2.0);
  return Basis(2,
               {{isq2, isq2 * std::polar(1.0, phi)}, {isq2, -isq2 * std::polar(1.0, phi)}},
               {"+1", "-1"}, {1.0, -1.0});
}

// Qubit basis along the direction at polar angle theta in the x-z plane:
// eigenvectors of cos(theta) sigma_z + sin(theta) sigma_x.
inline Basis plane_basis(double theta) {
  const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
  return Basis(2, {{c, s}, {s, -c}}, {"+1", "-1"}, {1.0, -1.0});
}

// Super-Wigner dressed basis on system x friend. After a pre-measurement
// copied `premeasure_basis` into the friend register, measuring these two
// (of four) joint vectors reproduces the amplitudes of a direct
// `wigner_basis` measurement on the bare system:
//   |j; W> = sum_k <k_pre | j_wig> |k_pre> |k>_F.
inline Basis dressed_basis(const Register& system, const Register& friend_reg,
                           const Basis& premeasure_basis, const Basis& wigner_basis) {
  if (premeasure_basis.dimension() != system.dimension ||
      premeasure_basis.size() != system.dimension) {
    throw std::invalid_argument("premeasure basis must span the system register");
  }
  if (wigner_basis.dimension() != system.dimension || wigner_basis.size() != system.dimension) {
    throw std::invalid_argument("wigner basis must span the system register");
  }
  if (friend_reg.dimension != premeasure_basis.size()) {
    throw std::invalid_argument("friend register dimension must match the premeasure basis size");
  }
  const std::size_t ds = system.dimension;
  const std::size_t df = friend_reg.dimension;
  std::vector<std::vector<complexd>> vecs;
  std::vector<double> eigs;
  for (std::size_t j = 0; j < wigner_basis.size(); ++j) {
    std::vector<complexd> v(ds * df, complexd{0.0, 0.0});
    for (std::size_t k = 0; k < premeasure_basis.size(); ++k) {
      complexd overlap{0.0, 0.0};  // <k_pre | j_wig>
      for (std::size_t x = 0; x < ds; ++x) {
        overlap += std::conj(premeasure_basis.vector(k)[x]) * wigner_basis.vector(j)[x];
      }
      for (std::size_t x = 0; x < ds; ++x) {
        v[x * df + k] += overlap * premeasure_basis.vector(k)[x];
      }
    }
    vecs.push_back(std::move(v));
    if (wigner_basis.has_eigenvalues()) eigs.push_back(wigner_basis.eigenvalue(j));
  }
  return Basis(ds * df, std::move(vecs), wigner_basis.labels(), std::move(eigs), true);
}

// Lab branch vector |X>_L = |b_X> |X>^{(x) n_records} for a two-outcome system
// basis with computational pointer records.
namespace detail {

inline std::vector<complexd> lab_branch(const Basis& system_basis, std::size_t n_records,
                                        std::size_t branch) {
  const std::size_t ds = system_basis.dimension();
  std::size_t dim = ds;
  for (std::size_t k = 0; k < n_records; ++k) dim *= system_basis.size();
  std::vector<complexd> v(dim, complexd{0.0, 0.0});
  // record part: all ancillas hold the branch index
  std::size_t rec_flat = 0;
  for (std::size_t k = 0; k < n_records; ++k) rec_flat = rec_flat * system_basis.size() + branch;
  const std::size_t rec_dim = dim / ds;
  for (std::size_t x = 0; x < ds; ++x) {
    v[x * rec_dim + rec_flat] = system_basis.vector(branch)[x];
  }
  return v;
}

}  // namespace detail

// Partial basis {(|0_L> +- e^{i phi} |1_L>)/sqrt(2)} over system + n record
// registers; the super-Wigner interference basis on a pre-measured lab.
inline Basis lab_phase_basis(const Basis& system_basis, std::size_t n_records, double phi) {
  if (system_basis.size() != 2) {
    throw std::invalid_argument("lab_phase_basis requires a two-outcome system basis");
  }
  const auto b0 = detail::lab_branch(system_basis, n_records, 0);
  const auto b1 = detail::lab_branch(system_basis, n_records, 1);
  const double isq2 = 1.0 / std::sqrt(2.0);
  const complexd ph = std::polar(1.0, phi);
  std::vector<complexd> plus(b0.size()), minus(b0.size());
  for (std::size_t i = 0; i < b0.size(); ++i) {
    plus[i] = isq2 * (b0[i] + ph * b1[i]);
    minus[i] = isq2 * (b0[i] - ph * b1[i]);
  }
  const bool partial = b0.size() > 2;
  return Basis(b0.size(), {std::move(plus), std::move(minus)}, {"+", "-"}, {1.0, -1.0}, partial);
}

// Partial basis {|0_L>, |1_L>}: the Wigner measurement concurrent with the
// lab's own pointer records.
inline Basis lab_pointer_basis(const Basis& system_basis, std::size_t n_records) {
  if (system_basis.size() != 2) {
    throw std::invalid_argument("lab_pointer_basis requires a two-outcome system basis");
  }
  const auto b0 = detail::lab_branch(system_basis, n_records, 0);
  const auto b1 = detail::lab_branch(system_basis, n_records, 1);
  const bool partial = b0.size() > 2;
  return Basis(b0.size(), {b0, b1}, {system_basis.label(0), system_basis.label(1)}, {},
               partial);
}

// Product basis over concatenated station targets; labels join with ",",
// eigenvalues multiply when every factor carries them, partial if any factor
// is partial.
inline Basis product_basis(const std::vector<Basis>& factors) {
  if (factors.empty()) throw std::invalid_argument("product_basis needs at least one factor");
  std::vector<std::vector<complexd>> vecs{{complexd{1.0, 0.0}}};
  std::vector<std::string> labels{""};
  std::vector<double> eigs{1.0};
  bool partial = false;
  bool all_eigs = true;
  std::size_t dim = 1;
  for (const auto& f : factors) {
    partial = partial || f.is_partial();
    all_eigs = all_eigs && f.has_eigenvalues();
    dim *= f.dimension();
    std::vector<std::vector<complexd>> nv;
    std::vector<std::string> nl;
    std::vector<double> ne;
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      for (std::size_t j = 0; j < f.size(); ++j) {
        std::vector<complexd> v;
        v.reserve(vecs[i].size() * f.dimension());
        for (const auto& a : vecs[i]) {
          for (std::size_t k = 0; k < f.dimension(); ++k) v.push_back(a * f.vector(j)[k]);
        }
        nv.push_back(std::move(v));
        nl.push_back(labels[i].empty() ? f.label(j) : labels[i] + "," + f.label(j));
        if (all_eigs) ne.push_back(eigs[i] * f.eigenvalue(j));
      }
    }
    vecs = std::move(nv);
    labels = std::move(nl);
    if (all_eigs) {
      eigs = std::move(ne);
    } else {
      eigs.clear();
    }
  }
  partial = partial || vecs.size() < dim;
  return Basis(dim, std::move(vecs), std::move(labels), std::move(eigs), partial);
}

// ---------------------------------------------------------------------------
// JSON for outcome ensembles

inline nlohmann::json to_json(const std::vector<MeasurementOutcome>& ensemble) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& o : ensemble) j.push_back({{"label", o.label}, {"probability", o.probability}});
  return j;
}

inline nlohmann::json to_json(const OutcomeDistribution& dist) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& o : dist.outcomes) j.push_back({{"label", o.label}, {"probability", o.probability}});
  if (dist.partial) j.push_back({{"label", kOutsideLabel}, {"probability", dist.outside}});
  return j;
}

}  // namespace wigner::meas
