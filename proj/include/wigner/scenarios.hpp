#pragma once

// The gedankenexperiments as named, parameterized protocols: the
// Frauchiger-Renner two-lab chain, GHZ correlations with Friend stations and
// dressed super-Wigner bases, the counterfactual-assignment search, the
// Brukner-style CHSH comparison, the polarization quantum eraser, Heisenberg
// cut interference scaling, the sealed three-exit lab, and the concordant
// Wigner reading.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wigner/meas.hpp"
#include "wigner/qcore.hpp"

namespace wigner::scenarios {

using meas::FriendPolicy;
using qcore::Basis;
using qcore::complexd;
using qcore::DensityOperator;
using qcore::Register;
using qcore::StateVector;
using qcore::Unitary;
using qcore::qubit;

inline constexpr double kPi = std::numbers::pi;

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"fr",     "ghz", "counterfactual", "brukner",
                                              "eraser", "cut", "sealed",         "concordant"};
  return names;
}

namespace detail {

inline Basis ht_basis() { return Basis::computational(2, {"H", "T"}); }
inline Basis s_basis() { return Basis::computational(2, {"-1", "+1"}); }

// |+-)_s = (|-1> +- |+1>)/sqrt(2); "-" is the Wigner "ok"-type outcome.
inline Basis s_pm_basis() {
  const double isq2 = 1.0 / std::sqrt(2.0);
  return Basis(2, {{isq2, isq2}, {isq2, -isq2}}, {"+", "-"}, {1.0, -1.0});
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> xs;
  if (n == 1) {
    xs.push_back(lo);
    return xs;
  }
  for (std::size_t k = 0; k < n; ++k) xs.push_back(lo + (hi - lo) * static_cast<double>(k) / (n - 1));
  return xs;
}

inline double visibility_of(const std::vector<double>& values) {
  double lo = values.front(), hi = values.front();
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return (hi + lo) > 0.0 ? (hi - lo) / (hi + lo) : 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frauchiger-Renner

struct FRBranch {
  std::string wg;
  std::string ws;
  double probability = 0.0;
};

struct FRReport {
  FriendPolicy policy = FriendPolicy::PreMeasure;
  double p_ok_okbar = 0.0;             // P(W_g = "-", W_s = "-")
  double p_wg_minus = 0.0;             // P(W_g = "-")
  double p_ok_given_okbar = 0.0;       // P(W_s = "-" | W_g = "-")
  double p_T_and_ok = 0.0;             // P(F_g record T and s reads "-") before lab s acts
  double p_ws_ok_given_record_T = 0.0; // P(W_s = "-" | F_g record T)
  std::vector<FRBranch> table;         // joint Wigner outcome distribution
};

// The two-lab chain built from the entangled-state form: coin g pre-measured
// inside lab g, system s emitted in correlation with the coin, pre-measured
// inside lab s, then both super-Wigners perform full measurements in the lab
// superposition bases. The policy decides whether the Friends' own actions
// decohere.
inline FRReport run_fr(FriendPolicy policy, std::uint64_t seed = meas::kDefaultSeed) {
  FRReport report;
  report.policy = policy;

  const double a = std::sqrt(1.0 / 3.0), b = std::sqrt(2.0 / 3.0);
  const double isq2 = 1.0 / std::sqrt(2.0);

  auto coin = StateVector::single(qubit("g"), {a, b});
  auto state0 = qcore::tensor(
      qcore::tensor(qcore::tensor(coin, StateVector::zero_state({qubit("Dg")})),
                    StateVector::zero_state({qubit("Fg")})),
      qcore::tensor(qcore::tensor(StateVector::zero_state({qubit("s")}),
                                  StateVector::zero_state({qubit("Ds")})),
                    StateVector::zero_state({qubit("Fs")})));

  auto [pre_g, rec_g] = meas::premeasure(std::move(state0), "g", detail::ht_basis(), {"Dg", "Fg"});

  // Lab g emits s: on the T branch the emitted system is |+>_s instead of |-1>_s.
  const Unitary emit = qcore::controlled(2, 1, Unitary(2, {isq2, -isq2, isq2, isq2}));

  // The exclusion quantity of the complementary situation: P(record T and a
  // direct |+->_s readout giving "-"), evaluated before lab s touches s.
  const auto exclusion_basis =
      meas::product_basis({Basis::computational(2, {"H", "T"}), detail::s_pm_basis()});

  auto wigner_stage = [&](auto labs_state) {
    // W_g then W_s, both as full measurements with their own pointers.
    auto staged = qcore::tensor(std::move(labs_state),
                                qcore::to_density(StateVector::zero_state({Register{"Pg", 3}})));
    const auto fm_g = meas::full_measure(staged, {"g", "Dg", "Fg"},
                                         meas::lab_phase_basis(detail::ht_basis(), 2, 0.0), {"Pg"},
                                         seed);
    for (const auto& branch_g : fm_g.ensemble) {
      if (branch_g.probability < 1e-15) continue;
      auto with_ps = qcore::tensor(branch_g.post_state,
                                   qcore::to_density(StateVector::zero_state({Register{"Ps", 3}})));
      const auto fm_s = meas::full_measure(with_ps, {"s", "Ds", "Fs"},
                                           meas::lab_phase_basis(detail::s_basis(), 2, 0.0),
                                           {"Ps"}, seed);
      for (const auto& branch_s : fm_s.ensemble) {
        const double p = branch_g.probability * branch_s.probability;
        if (branch_s.label == meas::kOutsideLabel && p < 1e-12) continue;
        report.table.push_back({branch_g.label, branch_s.label, p});
      }
    }
  };

  auto conditional_ws = [&](auto post_friends_state) {
    // Condition on the Friend record T, then ask for W_s = "-".
    const auto branches = meas::measure_channel(post_friends_state, {"Fg"},
                                                Basis::computational(2, {"H", "T"}));
    for (const auto& br : branches) {
      if (br.label == "T" && br.probability > 1e-15) {
        const auto dist = qcore::born_probabilities(
            br.post_state, meas::lab_phase_basis(detail::s_basis(), 2, 0.0), {"s", "Ds", "Fs"});
        return dist.probability("-");
      }
    }
    return 0.0;
  };

  if (policy == FriendPolicy::PreMeasure) {
    auto state = qcore::apply_unitary(std::move(pre_g), emit, {"g", "s"});
    report.p_T_and_ok =
        qcore::born_probabilities(state, exclusion_basis, {"Fg", "s"}).probability("T,-");
    auto [pre_s, rec_s] = meas::premeasure(std::move(state), "s", detail::s_basis(), {"Ds", "Fs"});
    report.p_ws_ok_given_record_T = conditional_ws(pre_s);
    wigner_stage(qcore::to_density(pre_s));
  } else {
    auto rho = meas::decohere(pre_g, {"Fg"}, detail::ht_basis());
    rho = qcore::apply_unitary(std::move(rho), emit, {"g", "s"});
    report.p_T_and_ok =
        qcore::born_probabilities(rho, exclusion_basis, {"Fg", "s"}).probability("T,-");
    auto [pre_s, rec_s] = meas::premeasure(std::move(rho), "s", detail::s_basis(), {"Ds", "Fs"});
    auto rho2 = meas::decohere(pre_s, {"Fs"}, detail::s_basis());
    report.p_ws_ok_given_record_T = conditional_ws(rho2);
    wigner_stage(std::move(rho2));
  }

  for (const auto& row : report.table) {
    if (row.wg == "-" && row.ws == "-") report.p_ok_okbar += row.probability;
    if (row.wg == "-") report.p_wg_minus += row.probability;
  }
  report.p_ok_given_okbar = report.p_wg_minus > 0.0 ? report.p_ok_okbar / report.p_wg_minus : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// GHZ with Friend stations

enum class StationAgent { Wigner, Friend };

struct GHZSettings {
  std::array<double, 3> phi{0.0, 0.0, 0.0};
  std::array<StationAgent, 3> agents{StationAgent::Wigner, StationAgent::Wigner,
                                     StationAgent::Wigner};
};

struct GHZOutcome {
  std::string labels;  // "r,s,t" with entries +1/-1
  double eigenvalue_product = 1.0;
  double probability = 0.0;
};

struct GHZReport {
  GHZSettings settings;
  std::vector<GHZOutcome> joint;
  double outside = 0.0;
  double correlation = 0.0;
};

// Three qubits in the GHZ state. A Wigner station measures its qubit
// directly in the equatorial basis at phi_m. A Friend station first
// pre-measures its qubit in basis n=3 and the super-Wigner then measures the
// joint qubit+friend pair in the dressed basis built from the same phi_m,
// which reproduces the direct amplitudes.
inline GHZReport run_ghz(const GHZSettings& settings) {
  for (double phi : settings.phi) {
    if (!std::isfinite(phi)) throw std::invalid_argument("GHZ station phase must be finite");
  }
  GHZReport report;
  report.settings = settings;

  const double isq2 = 1.0 / std::sqrt(2.0);
  std::vector<complexd> amps(8, complexd{0.0, 0.0});
  amps[0] = isq2;
  amps[7] = isq2;
  auto state = StateVector({qubit("s1"), qubit("s2"), qubit("s3")}, std::move(amps));

  std::vector<Basis> station_bases;
  std::vector<std::string> targets;
  for (int m = 0; m < 3; ++m) {
    const std::string sm = "s" + std::to_string(m + 1);
    if (settings.agents[m] == StationAgent::Friend) {
      const std::string fm = "F" + std::to_string(m + 1);
      state = qcore::tensor(std::move(state), StateVector::zero_state({qubit(fm)}));
      auto [pre, rec] = meas::premeasure(std::move(state), sm, meas::mub_basis(3), {fm});
      state = std::move(pre);
      station_bases.push_back(meas::dressed_basis(qubit(sm), qubit(fm), meas::mub_basis(3),
                                                  meas::phase_basis(settings.phi[m])));
      targets.push_back(sm);
      targets.push_back(fm);
    } else {
      station_bases.push_back(meas::phase_basis(settings.phi[m]));
      targets.push_back(sm);
    }
  }

  const auto joint_basis = meas::product_basis(station_bases);
  const auto dist = qcore::born_probabilities(state, joint_basis, targets);
  report.outside = dist.outside;
  for (std::size_t i = 0; i < dist.outcomes.size(); ++i) {
    GHZOutcome o;
    o.labels = dist.outcomes[i].label;
    o.eigenvalue_product = joint_basis.eigenvalue(i);
    o.probability = dist.outcomes[i].probability;
    report.correlation += o.eigenvalue_product * o.probability;
    report.joint.push_back(std::move(o));
  }
  return report;
}

inline double run_ghz_correlation(const GHZSettings& settings) { return run_ghz(settings).correlation; }

// ---------------------------------------------------------------------------
// Counterfactual assignments

// Variables are ordered (w1, w2, w3, f1, f2, f3); bit i of `mask` selects
// variable i into the product, which must equal `target` (+1 or -1).
struct ProductConstraint {
  unsigned mask = 0;
  int target = 1;
};

struct CounterfactualAssignment {
  std::array<int, 6> values{};  // each +1 or -1

  int w(int station) const { return values[station - 1]; }
  int f(int station) const { return values[station + 2]; }
};

// The four product relations forced by the GHZ perfect correlations when
// counterfactual Friend outcomes are admitted alongside the Wigner results.
inline std::vector<ProductConstraint> ghz_reductio_constraints() {
  return {{0b000111u, +1}, {0b110001u, -1}, {0b101010u, -1}, {0b011100u, -1}};
}

// Exhaustive search over all 64 sign assignments.
inline std::vector<CounterfactualAssignment> counterfactual_search(
    const std::vector<ProductConstraint>& constraints) {
  for (const auto& c : constraints) {
    if (c.mask == 0 || c.mask >= 64 || (c.target != 1 && c.target != -1)) {
      throw std::invalid_argument("malformed constraint");
    }
  }
  std::vector<CounterfactualAssignment> found;
  for (unsigned bits = 0; bits < 64; ++bits) {
    CounterfactualAssignment asg;
    for (int i = 0; i < 6; ++i) asg.values[i] = (bits >> i) & 1u ? -1 : +1;
    bool ok = true;
    for (const auto& c : constraints) {
      int prod = 1;
      for (int i = 0; i < 6; ++i) {
        if ((c.mask >> i) & 1u) prod *= asg.values[i];
      }
      if (prod != c.target) {
        ok = false;
        break;
      }
    }
    if (ok) found.push_back(asg);
  }
  return found;
}

// ---------------------------------------------------------------------------
// Brukner-style CHSH

struct CHSHReport {
  FriendPolicy policy = FriendPolicy::PreMeasure;
  std::array<double, 2> alice_angles{0.0, kPi / 2};
  std::array<double, 2> bob_angles{kPi / 4, -kPi / 4};
  double e_ab = 0.0, e_abp = 0.0, e_apb = 0.0, e_apbp = 0.0;
  double s_value = 0.0;
  int grid_step_deg = 10;
  std::optional<double> grid_max;  // max CHSH value over the planar angle grid
};

namespace detail {

template <class State>
double chsh_correlator(const State& state, FriendPolicy policy, double theta_a, double theta_b) {
  std::vector<Basis> stations;
  std::vector<std::string> targets;
  if (policy == FriendPolicy::PreMeasure) {
    stations.push_back(meas::dressed_basis(qubit("sa"), qubit("Fa"), Basis::computational(2),
                                           meas::plane_basis(theta_a)));
    stations.push_back(meas::dressed_basis(qubit("sb"), qubit("Fb"), Basis::computational(2),
                                           meas::plane_basis(theta_b)));
    targets = {"sa", "Fa", "sb", "Fb"};
  } else {
    stations.push_back(meas::plane_basis(theta_a));
    stations.push_back(meas::plane_basis(theta_b));
    targets = {"sa", "sb"};
  }
  const auto basis = meas::product_basis(stations);
  const auto dist = qcore::born_probabilities(state, basis, targets);
  double e = 0.0;
  for (std::size_t i = 0; i < dist.outcomes.size(); ++i) {
    e += basis.eigenvalue(i) * dist.outcomes[i].probability;
  }
  return e;
}

}  // namespace detail

// Singlet pair, Friends pre-measure the computational axis at both stations.
// PreMeasure: the Wigners measure dressed bases, recovering the singlet
// statistics. FullMeasure: Friend decoherence leaves a separable mixture and
// the Wigners measure the bare qubits; no setting grid can beat 2.
inline CHSHReport run_brukner_chsh(FriendPolicy policy, int grid_step_deg = 10,
                                   bool with_grid = true) {
  if (grid_step_deg <= 0 || 360 % grid_step_deg != 0) {
    throw std::invalid_argument("grid step must divide 360 degrees");
  }
  CHSHReport report;
  report.policy = policy;
  report.grid_step_deg = grid_step_deg;

  const double isq2 = 1.0 / std::sqrt(2.0);
  auto singlet = StateVector({qubit("sa"), qubit("sb")}, {0.0, isq2, -isq2, 0.0});
  auto state0 = qcore::tensor(qcore::tensor(std::move(singlet), StateVector::zero_state({qubit("Fa")})),
                              StateVector::zero_state({qubit("Fb")}));
  auto [pre_a, rec_a] = meas::premeasure(std::move(state0), "sa", Basis::computational(2), {"Fa"});
  auto [pre_b, rec_b] = meas::premeasure(std::move(pre_a), "sb", Basis::computational(2), {"Fb"});

  auto evaluate = [&](auto&& state) {
    const auto [a, ap] = report.alice_angles;
    const auto [b, bp] = report.bob_angles;
    report.e_ab = detail::chsh_correlator(state, policy, a, b);
    report.e_abp = detail::chsh_correlator(state, policy, a, bp);
    report.e_apb = detail::chsh_correlator(state, policy, ap, b);
    report.e_apbp = detail::chsh_correlator(state, policy, ap, bp);
    report.s_value = std::abs(report.e_ab + report.e_abp + report.e_apb - report.e_apbp);

    if (with_grid) {
      const int n = 360 / grid_step_deg;
      std::vector<double> table(static_cast<std::size_t>(n) * n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          table[i * n + j] = detail::chsh_correlator(state, policy, i * grid_step_deg * kPi / 180.0,
                                                     j * grid_step_deg * kPi / 180.0);
        }
      }
      double best = 0.0;
      for (int ia = 0; ia < n; ++ia)
        for (int iap = 0; iap < n; ++iap)
          for (int ib = 0; ib < n; ++ib)
            for (int ibp = 0; ibp < n; ++ibp) {
              const double s = std::abs(table[ia * n + ib] + table[ia * n + ibp] +
                                        table[iap * n + ib] - table[iap * n + ibp]);
              best = std::max(best, s);
            }
      report.grid_max = best;
    }
  };

  if (policy == FriendPolicy::PreMeasure) {
    evaluate(pre_b);
  } else {
    auto rho = meas::decohere(pre_b, {"Fa"}, Basis::computational(2));
    rho = meas::decohere(rho, {"Fb"}, Basis::computational(2));
    evaluate(std::move(rho));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Quantum eraser

struct EraserReport {
  double phi = 0.0;
  bool filter_on = false;
  bool record_path = false;
  double p_detector1 = 0.0;
  double visibility = 0.0;
  std::vector<std::pair<double, double>> sweep;  // (phi, p_detector1)
};

namespace detail {

template <class State>
double eraser_detection(State state, double phi, bool filter_on) {
  const double isq2 = 1.0 / std::sqrt(2.0);
  // phase shifter in arm 1, then the symmetric exit beamsplitter
  state = qcore::apply_unitary(std::move(state), Unitary(2, {std::polar(1.0, phi), 0.0, 0.0, 1.0}),
                               {"path"});
  state = qcore::apply_unitary(
      std::move(state), Unitary(2, {isq2, complexd{0.0, isq2}, complexd{0.0, isq2}, isq2}),
      {"path"});
  if (filter_on) {
    const Basis diag(2, {{isq2, isq2}, {isq2, -isq2}}, {"d", "a"});
    const auto joint = meas::product_basis({diag, Basis::computational(2, {"1", "2"})});
    return qcore::born_probabilities(state, joint, {"pol", "path"}).probability("d,1");
  }
  return qcore::born_probabilities(state, Basis::computational(2, {"1", "2"}), {"path"})
      .probability("1");
}

}  // namespace detail

// Mach-Zehnder with a polarizing front splitter: the polarization marks the
// path. Without the diagonal filter the detection rate is flat in phi; the
// filter erases the marking and restores full-visibility fringes. A
// which-path record (decohering the path before the exit splitter) destroys
// them for good.
inline EraserReport run_eraser(double phi, bool filter_on, bool record_path = false,
                               std::size_t sweep_points = 25) {
  EraserReport report;
  report.phi = phi;
  report.filter_on = filter_on;
  report.record_path = record_path;

  const double isq2 = 1.0 / std::sqrt(2.0);
  auto prepared = [&] {
    auto photon = qcore::tensor(StateVector::single(qubit("pol"), {isq2, isq2}),
                                StateVector::zero_state({qubit("path")}));
    // polarizing splitter: v goes to arm 2
    return qcore::apply_unitary(std::move(photon), qcore::controlled(2, 1, qcore::pauli_x()),
                                {"pol", "path"});
  };

  auto detection = [&](double phase) {
    if (record_path) {
      const auto marked = meas::decohere(prepared(), {"path"}, Basis::computational(2));
      return detail::eraser_detection(marked, phase, filter_on);
    }
    return detail::eraser_detection(prepared(), phase, filter_on);
  };

  report.p_detector1 = detection(phi);
  std::vector<double> values;
  for (double x : detail::linspace(0.0, 2.0 * kPi, sweep_points)) {
    const double p = detection(x);
    report.sweep.emplace_back(x, p);
    values.push_back(p);
  }
  report.visibility = detail::visibility_of(values);
  return report;
}

// ---------------------------------------------------------------------------
// Heisenberg cut scaling

struct CutScalingConfig {
  std::size_t m = 1;                  // Friend qubit count
  double leak = 0.0;                  // per-Friend-qubit dephasing strength
  std::vector<double> phi_grid;       // defaults to 13 points over [0, 2pi]
  std::size_t max_state_bytes = std::size_t{3} << 30;
};

struct CutScalingResult {
  std::size_t m = 0;
  double leak = 0.0;
  double visibility = 0.0;
  double seconds = 0.0;
  std::vector<std::pair<double, double>> sweep;  // (phi, P(g = +))
};

// Lab with an m-qubit Friend: g is pre-measured into the pointer D and all
// Friend qubits, a phase phi rides on the T branch, each Friend qubit leaks
// to its own environment qubit with strength `leak`, Wigner disentangles the
// records back onto g and measures |+->_g. With leak = 0 the fringes are
// perfect for any m; with leak p the visibility drops to (1-p)^m.
//
// The leak keeps the environment registers in a pure global state rather
// than tracing them out, so the m <= 12 regime stays within memory; the g
// statistics are identical either way.
inline CutScalingResult run_cut_scaling(const CutScalingConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  CutScalingResult result;
  result.m = config.m;
  result.leak = config.leak;

  if (config.leak < 0.0 || config.leak > 1.0) {
    throw std::invalid_argument("leak strength outside [0,1]");
  }
  const std::size_t n_qubits = 2 + config.m + (config.leak > 0.0 ? config.m : 0);
  if (n_qubits >= 63 ||
      (std::size_t{1} << n_qubits) > config.max_state_bytes / sizeof(complexd)) {
    throw std::invalid_argument("m exceeds the configured memory cap");
  }

  std::vector<Register> regs{qubit("g"), qubit("D")};
  std::vector<std::string> friends;
  for (std::size_t i = 1; i <= config.m; ++i) {
    friends.push_back("F" + std::to_string(i));
    regs.push_back(qubit(friends.back()));
  }

  auto state = StateVector::zero_state(regs);
  state = qcore::apply_unitary(std::move(state), qcore::hadamard(), {"g"});
  std::vector<std::string> ancillas{"D"};
  ancillas.insert(ancillas.end(), friends.begin(), friends.end());
  auto [pre, rec] = meas::premeasure(std::move(state), "g", detail::ht_basis(), ancillas);
  state = std::move(pre);

  if (config.leak > 0.0) {
    // per-qubit partial copy into a fresh environment qubit, kept pure
    const double p = config.leak;
    const Unitary w1(2, {1.0 - p, -std::sqrt(p * (2.0 - p)), std::sqrt(p * (2.0 - p)), 1.0 - p});
    const Unitary leak_gate = qcore::controlled(2, 1, w1);
    for (std::size_t i = 1; i <= config.m; ++i) {
      const std::string env = "E" + std::to_string(i);
      state = qcore::tensor(std::move(state), StateVector::zero_state({qubit(env)}));
      state = qcore::apply_unitary(std::move(state), leak_gate, {"F" + std::to_string(i), env});
    }
  }

  // Wigner's disentangling step: conditioned on g = T, return every record
  // qubit to H.
  for (const auto& target : ancillas) {
    state = qcore::apply_unitary(std::move(state), qcore::cnot(), {"g", target});
  }

  const std::vector<double> grid =
      config.phi_grid.empty() ? detail::linspace(0.0, 2.0 * kPi, 13) : config.phi_grid;
  std::vector<double> values;
  double applied = 0.0;
  for (double phi : grid) {
    state = qcore::apply_unitary(std::move(state), qcore::phase_gate(phi - applied), {"g"});
    applied = phi;
    const double p_plus =
        qcore::born_probabilities(state, meas::phase_basis(0.0), {"g"}).probability("+1");
    result.sweep.emplace_back(phi, p_plus);
    values.push_back(p_plus);
  }
  result.visibility = detail::visibility_of(values);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

struct CutSweepReport {
  double leak = 0.0;
  double threshold = 0.5;
  std::vector<CutScalingResult> points;
  std::optional<std::size_t> m_threshold;  // smallest m with visibility below threshold
};

inline CutSweepReport run_cut_sweep(std::size_t m_min, std::size_t m_max,
                                    const CutScalingConfig& base, double threshold = 0.5) {
  CutSweepReport report;
  report.leak = base.leak;
  report.threshold = threshold;
  for (std::size_t m = m_min; m <= m_max; ++m) {
    CutScalingConfig c = base;
    c.m = m;
    report.points.push_back(run_cut_scaling(c));
    if (!report.m_threshold && report.points.back().visibility < threshold) {
      report.m_threshold = m;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sealed lab (three-exit box)

struct SealedLabSetting {
  double alpha = 0.0;
  double phi = 0.0;
  DensityOperator input_polarization =
      DensityOperator({qubit("pol")}, {0.5, 0.0, 0.0, 0.5});  // unpolarized light by default
};

struct SealedLabReport {
  double alpha = 0.0;
  double phi = 0.0;
  double p_exit_h = 0.0;
  double p_exit_v = 0.0;
  double p_no_measurement = 0.0;
  double exit_h_polarization_fidelity = 0.0;  // against pure |h>
  double exit_v_polarization_fidelity = 0.0;  // against pure |v>
};

// The Friend's universal polarizer: U†(alpha,phi) in front of an h/v
// splitter feeding exits h and v; a third fiber flags runs without a
// pre-measurement. Photons of polarization U(alpha,phi)|h> leave through
// exit h carrying polarization h, and an unpolarized input gives 1/2 per
// exit for every setting.
inline SealedLabReport run_sealed_lab(const SealedLabSetting& setting) {
  SealedLabReport report;
  report.alpha = setting.alpha;
  report.phi = setting.phi;

  if (setting.input_polarization.dimension() != 2) {
    throw std::invalid_argument("input polarization must be a qubit density operator");
  }

  const Register path{"path", 3};  // 0: exit h, 1: exit v, 2: inbound fiber
  std::vector<complexd> path_in(9, complexd{0.0, 0.0});
  path_in[2 * 3 + 2] = 1.0;
  auto rho = qcore::tensor(DensityOperator({qubit("pol")}, setting.input_polarization.matrix()),
                           DensityOperator({path}, std::move(path_in)));

  const double c = std::cos(setting.alpha), s = std::sin(setting.alpha);
  const complexd eip = std::polar(1.0, setting.phi);
  // U†: |h> -> cos a |h> + e^{i phi} sin a |v>, |v> -> -e^{-i phi} sin a |h> + cos a |v>
  const Unitary u_dag(2, {c, -std::conj(eip) * s, eip * s, c});
  rho = qcore::apply_unitary(std::move(rho), u_dag, {"pol"});

  // splitter: (h, in) <-> (h, exit h), (v, in) <-> (v, exit v)
  std::vector<complexd> split(36, complexd{0.0, 0.0});
  auto set = [&](std::size_t to, std::size_t from) { split[to * 6 + from] = 1.0; };
  set(0 * 3 + 0, 0 * 3 + 2);  // |h,in> -> |h,exit h>
  set(0 * 3 + 2, 0 * 3 + 0);
  set(0 * 3 + 1, 0 * 3 + 1);
  set(1 * 3 + 1, 1 * 3 + 2);  // |v,in> -> |v,exit v>
  set(1 * 3 + 2, 1 * 3 + 1);
  set(1 * 3 + 0, 1 * 3 + 0);
  rho = qcore::apply_unitary(std::move(rho), Unitary(6, std::move(split)), {"pol", "path"});

  const auto exits = Basis::computational(3, {"h", "v", "no-measurement"});
  const auto branches = meas::measure_channel(rho, {"path"}, exits);
  for (const auto& br : branches) {
    if (br.label == "h") {
      report.p_exit_h = br.probability;
      if (br.probability > 1e-15) {
        report.exit_h_polarization_fidelity =
            qcore::fidelity(StateVector::single(qubit("pol"), {1.0, 0.0}),
                            qcore::partial_trace(br.post_state, {"pol"}));
      }
    } else if (br.label == "v") {
      report.p_exit_v = br.probability;
      if (br.probability > 1e-15) {
        report.exit_v_polarization_fidelity =
            qcore::fidelity(StateVector::single(qubit("pol"), {0.0, 1.0}),
                            qcore::partial_trace(br.post_state, {"pol"}));
      }
    } else {
      report.p_no_measurement = br.probability;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Concordant Wigner

struct ConcordantReport {
  double p_record_h = 0.0;
  double agreement = 0.0;  // P(Wigner reading equals the Friend's record)
  std::vector<FRBranch> table;  // (record, wigner reading, probability)
};

// The relation E.P. Wigner assumed: the Friend performs a full measurement
// and Wigner reads the lab in the concordant pointer basis, confirming the
// record with certainty.
inline ConcordantReport run_concordant_wigner(complexd alpha = complexd{1.0 / std::sqrt(2.0), 0.0},
                                              complexd beta = complexd{1.0 / std::sqrt(2.0), 0.0},
                                              std::uint64_t seed = meas::kDefaultSeed) {
  ConcordantReport report;
  auto coin = StateVector::single(qubit("g"), {alpha, beta});
  auto state = qcore::tensor(qcore::tensor(std::move(coin), StateVector::zero_state({qubit("D")})),
                             StateVector::zero_state({qubit("F")}));
  const auto friend_measurement =
      meas::full_measure(state, {"g"}, detail::ht_basis(), {"D", "F"}, seed);
  report.p_record_h = friend_measurement.ensemble[0].probability;

  const auto concordant = meas::lab_pointer_basis(detail::ht_basis(), 2);
  for (const auto& branch : friend_measurement.ensemble) {
    if (branch.probability < 1e-15) continue;
    const auto dist = qcore::born_probabilities(branch.post_state, concordant, {"g", "D", "F"});
    for (const auto& o : dist.outcomes) {
      const double p = branch.probability * o.probability;
      report.table.push_back({branch.label, o.label, p});
      if (o.label == branch.label) report.agreement += p;
    }
  }
  return report;
}

}  // namespace wigner::scenarios
