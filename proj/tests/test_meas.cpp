#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "test_util.hpp"
#include "wigner/meas.hpp"
#include "wigner/qcore.hpp"

using namespace wigner::qcore;
using namespace wigner::meas;
using testutil::make_rng;
using testutil::random_state;
using testutil::random_unitary;

namespace {

const double isq2 = 1.0 / std::sqrt(2.0);
const double pi = std::numbers::pi;

Basis ht_basis() { return Basis::computational(2, {"H", "T"}); }

Basis basis_from_unitary(const Unitary& u, const std::vector<std::string>& labels) {
  std::vector<std::vector<complexd>> vecs;
  for (std::size_t i = 0; i < u.dimension(); ++i) {
    std::vector<complexd> v(u.dimension());
    for (std::size_t k = 0; k < u.dimension(); ++k) v[k] = u.at(k, i);
    vecs.push_back(std::move(v));
  }
  return Basis(u.dimension(), std::move(vecs), labels);
}

double entropy_bits(const std::vector<double>& eigs) {
  double h = 0.0;
  for (double l : eigs) {
    if (l > 1e-12) h -= l * std::log2(l);
  }
  return h;
}

StateVector coin_with_ancillas(double alpha, double beta) {
  auto g = StateVector::single(qubit("g"), {alpha, beta});
  return tensor(tensor(g, StateVector::zero_state({qubit("D")})),
                StateVector::zero_state({qubit("F")}));
}

}  // namespace

TEST_CASE("premeasure copies the basis into every ancilla") {
  const double a = std::sqrt(1.0 / 3.0), b = std::sqrt(2.0 / 3.0);
  auto [state, rec] = premeasure(coin_with_ancillas(a, b), "g", ht_basis(), {"D", "F"});

  // alpha|H,0,0> + beta|T,1,1>
  CHECK(std::abs(state.amplitudes()[0] - complexd{a, 0.0}) < kEqualTol);
  CHECK(std::abs(state.amplitudes()[7] - complexd{b, 0.0}) < kEqualTol);
  for (std::size_t i : {1, 2, 3, 4, 5, 6}) CHECK(std::abs(state.amplitudes()[i]) < kEqualTol);
  CHECK(rec.system_register() == "g");
  CHECK(rec.ancilla_registers() == std::vector<std::string>{"D", "F"});
  CHECK(rec.inverse_available(state));

  SECTION("single-branch input stays a product state") {
    auto [s1, r1] = premeasure(coin_with_ancillas(1.0, 0.0), "g", ht_basis(), {"D", "F"});
    CHECK(std::abs(s1.amplitudes()[0] - complexd{1.0, 0.0}) < kEqualTol);
  }

  SECTION("balanced coin leaves the system in a 1-bit mixed state") {
    auto [s2, r2] = premeasure(coin_with_ancillas(isq2, isq2), "g", ht_basis(), {"D", "F"});
    const auto eigs = reduced_density(s2, {"g"}).eigenvalues();
    CHECK(entropy_bits(eigs) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("preconditions") {
    auto dirty = apply_unitary(coin_with_ancillas(isq2, isq2), pauli_x(), {"D"});
    CHECK_THROWS_AS(premeasure(dirty, "g", ht_basis(), {"D", "F"}), std::invalid_argument);
    auto st = coin_with_ancillas(isq2, isq2);
    CHECK_THROWS_AS(premeasure(st, "g", Basis::computational(4), {"D"}), std::invalid_argument);
    CHECK_THROWS_AS(premeasure(st, "g", ht_basis(), std::vector<std::string>{}),
                    std::invalid_argument);
  }
}

TEST_CASE("premeasure followed by undo is the identity channel") {
  auto rng = make_rng(11);
  for (int round = 0; round < 100; ++round) {
    // random system state entangled with a bystander, random premeasure basis
    auto sys = random_state({qubit("s"), qubit("w")}, rng);
    auto state = tensor(tensor(sys, StateVector::zero_state({qubit("D")})),
                        StateVector::zero_state({qubit("F")}));
    const Basis basis = basis_from_unitary(random_unitary(2, rng), {"0", "1"});
    auto [pre, rec] = premeasure(state, "s", basis, {"D", "F"});
    const auto restored = undo_premeasure(pre, rec);
    REQUIRE(fidelity(restored, state) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("undo on an untouched basis-state record is the identity") {
    auto st = coin_with_ancillas(1.0, 0.0);
    auto [pre, rec] = premeasure(st, "g", ht_basis(), {"D", "F"});
    const auto back = undo_premeasure(pre, rec);
    CHECK(fidelity(back, st) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("decohere produces the pointer-basis mixture") {
  const double a = 0.6, b = 0.8;
  auto [state, rec] = premeasure(coin_with_ancillas(a, b), "g", ht_basis(), {"D", "F"});
  const auto rho = decohere(state, {"F"}, ht_basis());

  SECTION("diagonal blocks carry |alpha|^2 and |beta|^2, off-diagonals vanish") {
    CHECK(std::abs(rho.at(0, 0) - complexd{a * a, 0.0}) < 1e-12);
    CHECK(std::abs(rho.at(7, 7) - complexd{b * b, 0.0}) < 1e-12);
    CHECK(std::abs(rho.at(0, 7)) < 1e-12);
    CHECK(std::abs(rho.at(7, 0)) < 1e-12);
    const auto dist = born_probabilities(rho, lab_pointer_basis(ht_basis(), 2), {"g", "D", "F"});
    CHECK(dist.probability("H") == Catch::Approx(a * a).margin(1e-12));
    CHECK(dist.probability("T") == Catch::Approx(b * b).margin(1e-12));
  }

  SECTION("idempotence and diagonal preservation") {
    const auto again = decohere(rho, {"F"}, ht_basis());
    CHECK(max_abs_diff(again, rho) < 1e-12);
  }

  SECTION("a state already diagonal in the pointer basis is unchanged") {
    const auto once = decohere(rho, {"g"}, ht_basis());
    CHECK(max_abs_diff(once, rho) < 1e-12);
  }

  SECTION("decoherence marks invalidate the record") {
    CHECK(rec.inverse_available(state));
    CHECK_FALSE(rec.inverse_available(rho));
    CHECK_THROWS_AS(undo_premeasure(rho, rec), IrreversibleError);
  }

  SECTION("forcing the inverse on the mixture leaves system fidelity 1/2") {
    auto [plus_state, rec2] =
        premeasure(coin_with_ancillas(isq2, isq2), "g", ht_basis(), {"D", "F"});
    auto mixed = decohere(plus_state, {"F"}, ht_basis());
    auto forced = mixed;
    const Unitary inv = rec2.copy_gate().dagger();
    forced = apply_unitary(std::move(forced), inv, {"g", "F"});
    forced = apply_unitary(std::move(forced), inv, {"g", "D"});
    const auto sys = partial_trace(forced, {"g"});
    const auto plus = StateVector::single(qubit("g"), {isq2, isq2});
    CHECK(fidelity(plus, sys) == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("decohere preserves pointer-basis probabilities on random states") {
  auto rng = make_rng(12);
  for (int round = 0; round < 25; ++round) {
    const auto psi = random_state({qubit("a"), qubit("b")}, rng);
    const Basis basis = basis_from_unitary(random_unitary(2, rng), {"0", "1"});
    const auto rho = decohere(psi, {"b"}, basis);
    const auto before = born_probabilities(psi, basis, {"b"});
    const auto after = born_probabilities(rho, basis, {"b"});
    for (std::size_t i = 0; i < before.outcomes.size(); ++i) {
      CHECK(std::abs(before.outcomes[i].probability - after.outcomes[i].probability) < 1e-12);
    }
    const auto rho2 = decohere(rho, {"b"}, basis);
    CHECK(max_abs_diff(rho2, rho) < 1e-12);
  }
}

TEST_CASE("partial decoherence scales off-diagonal blocks by (1 - strength)") {
  auto rng = make_rng(13);
  const auto psi = random_state({qubit("a"), qubit("b")}, rng);
  const double strength = 0.3;
  const auto rho_full = to_density(psi);
  const auto rho = decohere(psi, {"a"}, Basis::computational(2), strength);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      const bool same_block = (r / 2) == (c / 2);
      const complexd want = rho_full.at(r, c) * (same_block ? 1.0 : (1.0 - strength));
      CHECK(std::abs(rho.at(r, c) - want) < 1e-12);
    }
  }
}

TEST_CASE("the decohered symmetric lab gives random Wigner-basis results") {
  auto [state, rec] = premeasure(coin_with_ancillas(isq2, isq2), "g", ht_basis(), {"D", "F"});
  const auto rho = decohere(state, {"F"}, ht_basis());
  auto rng = make_rng(14);
  std::uniform_real_distribution<double> u(0.0, 2.0 * pi);
  for (double phi : {0.0, pi / 4, pi / 2, u(rng), u(rng), u(rng)}) {
    const auto dist = born_probabilities(rho, lab_phase_basis(ht_basis(), 2, phi), {"g", "D", "F"});
    CHECK(dist.probability("+") == Catch::Approx(0.5).margin(1e-12));
    CHECK(dist.probability("-") == Catch::Approx(0.5).margin(1e-12));
    CHECK(dist.outside == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("full_measure composes premeasure, decoherence and readout") {
  const double a = std::sqrt(1.0 / 3.0), b = std::sqrt(2.0 / 3.0);

  SECTION("ensemble carries the Born weights") {
    const auto result = full_measure(coin_with_ancillas(a, b), {"g"}, ht_basis(), {"D", "F"});
    REQUIRE(result.ensemble.size() == 2);
    CHECK(result.ensemble[0].label == "H");
    CHECK(result.ensemble[0].probability == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(result.ensemble[1].label == "T");
    CHECK(result.ensemble[1].probability == Catch::Approx(2.0 / 3.0).margin(1e-12));
    // post states are the collapsed lab branches
    const auto& post_h = result.ensemble[0].post_state;
    CHECK(std::abs(post_h.at(0, 0) - complexd{1.0, 0.0}) < 1e-10);
  }

  SECTION("deterministic input yields a certain outcome") {
    const auto result = full_measure(coin_with_ancillas(1.0, 0.0), {"g"}, ht_basis(), {"D", "F"});
    CHECK(result.ensemble[0].probability == Catch::Approx(1.0).margin(1e-12));
    CHECK(result.sampled().label == "H");
  }

  SECTION("sampled frequencies match the ensemble within 3 sigma") {
    const auto result = full_measure(coin_with_ancillas(a, b), {"g"}, ht_basis(), {"D", "F"});
    auto rng = make_rng(15);
    const int n = 100000;
    int heads = 0;
    for (int k = 0; k < n; ++k) {
      if (sample_outcome(result.ensemble, rng) == 0) ++heads;
    }
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(n * p * (1.0 - p));
    CHECK(std::abs(heads - n * p) < 3.0 * sigma);
  }

  SECTION("same seed, same sample") {
    const auto r1 = full_measure(coin_with_ancillas(isq2, isq2), {"g"}, ht_basis(), {"D", "F"}, 7);
    const auto r2 = full_measure(coin_with_ancillas(isq2, isq2), {"g"}, ht_basis(), {"D", "F"}, 7);
    CHECK(r1.sampled_index == r2.sampled_index);
  }
}

TEST_CASE("full_measure on a partial lab basis reports outside coarsely") {
  auto [state, rec] = premeasure(coin_with_ancillas(isq2, isq2), "g", ht_basis(), {"D", "F"});
  auto with_pointer = tensor(state, StateVector::zero_state({Register{"P", 3}}));
  const auto result = full_measure(with_pointer, {"g", "D", "F"},
                                   lab_phase_basis(ht_basis(), 2, 0.0), {"P"});
  REQUIRE(result.ensemble.size() >= 2);
  CHECK(result.ensemble[0].label == "+");
  CHECK(result.ensemble[0].probability == Catch::Approx(1.0).margin(1e-12));
  CHECK(result.ensemble[1].probability == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("mutually unbiased bases") {
  SECTION("n=1 is computational") {
    const auto b = mub_basis(1);
    CHECK(std::abs(b.vector(0)[0] - complexd{1.0, 0.0}) < kEqualTol);
    CHECK(std::abs(b.vector(1)[1] - complexd{1.0, 0.0}) < kEqualTol);
    CHECK(b.eigenvalue(0) == 1.0);
    CHECK(b.eigenvalue(1) == -1.0);
  }

  SECTION("|0^(3)> = (|0> + i|1>)/sqrt(2)") {
    const auto b = mub_basis(3);
    CHECK(std::abs(b.vector(0)[0] - complexd{isq2, 0.0}) < kEqualTol);
    CHECK(std::abs(b.vector(0)[1] - complexd{0.0, isq2}) < kEqualTol);
  }

  SECTION("all cross overlaps have squared magnitude 1/2") {
    for (int a = 1; a <= 3; ++a) {
      for (int b = 1; b <= 3; ++b) {
        if (a == b) continue;
        for (std::size_t l = 0; l < 2; ++l) {
          for (std::size_t k = 0; k < 2; ++k) {
            complexd ip{0.0, 0.0};
            for (std::size_t x = 0; x < 2; ++x) {
              ip += std::conj(mub_basis(a).vector(l)[x]) * mub_basis(b).vector(k)[x];
            }
            CHECK(std::norm(ip) == Catch::Approx(0.5).margin(1e-12));
          }
        }
      }
    }
  }

  SECTION("phase bases coincide with the mub family") {
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t x = 0; x < 2; ++x) {
        CHECK(std::abs(phase_basis(0.0).vector(l)[x] - mub_basis(2).vector(l)[x]) < kEqualTol);
        CHECK(std::abs(phase_basis(pi / 2).vector(l)[x] - mub_basis(3).vector(l)[x]) < kEqualTol);
      }
    }
  }

  SECTION("out of range") {
    CHECK_THROWS_AS(mub_basis(0), std::invalid_argument);
    CHECK_THROWS_AS(mub_basis(4), std::invalid_argument);
  }
}

TEST_CASE("dressed basis reproduces direct measurement amplitudes") {
  const Register s = qubit("s"), f = qubit("F");
  const auto dressed = dressed_basis(s, f, mub_basis(3), mub_basis(2));
  REQUIRE(dressed.size() == 2);
  REQUIRE(dressed.is_partial());

  SECTION("amplitude identity <j;W|(premeasured |l1>)> = <j2|l1>") {
    for (std::size_t l = 0; l < 2; ++l) {
      auto input = tensor(StateVector::basis_state({s}, std::vector<std::size_t>{l}),
                          StateVector::zero_state({f}));
      auto [pre, rec] = premeasure(input, "s", mub_basis(3), {"F"});
      for (std::size_t j = 0; j < 2; ++j) {
        complexd lhs{0.0, 0.0};
        for (std::size_t x = 0; x < 4; ++x) {
          lhs += std::conj(dressed.vector(j)[x]) * pre.amplitudes()[x];
        }
        complexd rhs{0.0, 0.0};
        for (std::size_t x = 0; x < 2; ++x) {
          rhs += std::conj(mub_basis(2).vector(j)[x]) *
                 StateVector::basis_state({s}, std::vector<std::size_t>{l}).amplitudes()[x];
        }
        CHECK(std::abs(lhs - rhs) < 1e-12);
      }
    }
  }

  SECTION("MUB pair gives flat outcome probabilities") {
    for (std::size_t l = 0; l < 2; ++l) {
      auto input = tensor(StateVector::basis_state({s}, std::vector<std::size_t>{l}),
                          StateVector::zero_state({f}));
      auto [pre, rec] = premeasure(input, "s", mub_basis(3), {"F"});
      const auto dist = born_probabilities(pre, dressed, {"s", "F"});
      CHECK(dist.probability("+1") == Catch::Approx(0.5).margin(1e-12));
      CHECK(dist.probability("-1") == Catch::Approx(0.5).margin(1e-12));
      CHECK(dist.outside == Catch::Approx(0.0).margin(1e-12));
    }
  }

  SECTION("sequential protocol equals direct measurement for random wigner bases") {
    auto rng = make_rng(16);
    for (int round = 0; round < 10; ++round) {
      const Basis wig = basis_from_unitary(random_unitary(2, rng), {"0", "1"});
      const Basis pre_basis = basis_from_unitary(random_unitary(2, rng), {"0", "1"});
      const auto dr = dressed_basis(s, f, pre_basis, wig);
      const auto sys_state = random_state({qubit("s")}, rng);
      const auto direct = born_probabilities(sys_state, wig, {"s"});
      auto joint = tensor(sys_state, StateVector::zero_state({f}));
      auto [pre, rec] = premeasure(joint, "s", pre_basis, {"F"});
      const auto sequential = born_probabilities(pre, dr, {"s", "F"});
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(direct.outcomes[j].probability - sequential.outcomes[j].probability) <
              1e-12);
      }
    }
  }
}

TEST_CASE("outcome ensembles serialize as label/probability lists") {
  const auto result =
      full_measure(coin_with_ancillas(0.6, 0.8), {"g"}, ht_basis(), {"D", "F"});
  const auto j = to_json(result.ensemble);
  REQUIRE(j.size() == 2);
  CHECK(j[0]["label"] == "H");
  CHECK(j[0]["probability"] == Catch::Approx(0.36).margin(1e-12));
  CHECK(j[1]["label"] == "T");

  const auto dist = born_probabilities(coin_with_ancillas(0.6, 0.8), ht_basis(), {"g"});
  const auto jd = to_json(dist);
  CHECK(jd[0]["probability"] == Catch::Approx(0.36).margin(1e-12));
}

TEST_CASE("product basis multiplies labels and eigenvalues") {
  const auto prod = product_basis({phase_basis(0.0), phase_basis(pi / 2)});
  REQUIRE(prod.size() == 4);
  CHECK(prod.label(0) == "+1,+1");
  CHECK(prod.eigenvalue(0) == 1.0);
  CHECK(prod.eigenvalue(1) == -1.0);
  CHECK(prod.eigenvalue(3) == 1.0);
  const StateVector bell({qubit("a"), qubit("b")}, {isq2, 0.0, 0.0, isq2});
  const auto dist = born_probabilities(bell, prod, {"a", "b"});
  double total = 0.0;
  for (const auto& o : dist.outcomes) total += o.probability;
  CHECK(total == Catch::Approx(1.0).margin(1e-12));
}
