"""Acceptance gate: end-to-end checks with hard numeric tolerances.

Each class pins one deliverable property of the package — exact-solution
agreement, adiabatic-elimination accuracy, dark-state structure, the leak
closed form, the two parameter sweeps, circuit derivation, dispersive phase
error, trajectory convergence, and the protocol diagnostics.  Budgets on
wall time are part of the contract and are asserted where stated.

The chiral-register equator transfer (TestChiralRegister) asserts the
headline fidelity target for that protocol; the collective-decay model as
specified does not reach it (the equator encoding leaks through the ring's
symmetric channel), so that single test documents the gap rather than
papering over it.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np
import pytest

from aqst.cqed import (
    derive_static,
    ideal_transfer_model,
    reference_circuit,
)
from aqst.diagnostics import check_dark_manifold, check_orthogonality, fit_decay_rate
from aqst.dynamics import (
    evolve_master,
    evolve_no_jump,
    trajectory_average,
)
from aqst.harness import sweep_fig2c, sweep_fig3c, sweep_fig3c_inset
from aqst.hilbert import partial_trace, trace_distance
from aqst.oracles import cascaded_infidelity, convergence_rate, minimal_rho
from aqst.protocols import (
    build_bilinear,
    build_cascaded,
    build_minimal_jump,
    build_minimal_reservoir,
    cascaded_dark_state,
    cyclic_permutation_operator,
)

DATA_DIR = Path(__file__).parent / "data"
TWO_PI = 2.0 * np.pi


def pure_fidelity(rho, ket) -> float:
    """⟨ψ|ρ|ψ⟩ for a normalized pure target."""
    v = ket.amplitudes
    return float(np.real(np.vdot(v, rho.matrix @ v)))


# --- 1. master equation vs exact minimal solution --------------------------------


class TestExactSolutionAgreement:
    def test_trace_distance_and_budget(self):
        inst = build_minimal_jump(1.0)
        grid = np.linspace(0.0, 10.0, 200)
        rho0 = inst.encode(1, 1).to_density_matrix()
        start = time.perf_counter()
        states = evolve_master(inst.model, rho0, grid)
        worst = max(
            trace_distance(s, minimal_rho(t, 1.0, 1.0, 1.0))
            for t, s in zip(grid, states)
        )
        elapsed = time.perf_counter() - start
        assert worst <= 1e-8
        assert elapsed < 1.0


# --- 2. reservoir model reduces to the minimal jump -------------------------------


class TestAdiabaticElimination:
    def test_deep_adiabatic_matches_minimal_jump(self):
        # gamma/Omega = 50; the eliminated model has kappa = 4 Omega^2 / gamma.
        res = build_minimal_reservoir(1.0, 50.0)
        mini = build_minimal_jump(4.0 / 50.0)
        grid = np.linspace(0.0, 150.0, 80)
        full = evolve_master(res.model, res.encode(1, 1).to_density_matrix(), grid)
        reduced = evolve_master(mini.model, mini.encode(1, 1).to_density_matrix(), grid)
        for rho_f, rho_r in zip(full, reduced):
            assert trace_distance(partial_trace(rho_f, ("A", "B")), rho_r) <= 0.02

    @pytest.mark.parametrize("ratio", [2.0, 4.0, 8.0, 50.0])
    def test_fitted_convergence_rate(self, ratio):
        inst = build_minimal_reservoir(1.0, ratio)
        expected = convergence_rate(1.0, ratio)
        grid = np.linspace(0.0, 40.0 / expected, 4001)
        states = evolve_master(inst.model, inst.encode(1, 1).to_density_matrix(), grid)
        target = inst.target(1, 1)
        infid = np.array([1.0 - pure_fidelity(s, target) for s in states])
        fitted = fit_decay_rate(grid, infid)
        assert abs(fitted / expected - 1.0) <= 0.02


# --- 3. dressed dark state of the cascaded chain ----------------------------------


class TestDressedDarkState:
    LAM, KA, KB, GAMMA = 0.01, 1.0, 1.0, 50.0

    @pytest.mark.parametrize("logical", [(1, 0), (0, 1), (1, 1)])
    def test_waveguide_dark_and_reservoir_rate(self, logical):
        inst = build_cascaded(
            self.LAM, self.KA, self.KB, np.sqrt(self.KB * self.GAMMA) / 2.0, self.GAMMA
        )
        phi = cascaded_dark_state(
            inst, self.LAM, self.KA, self.KB, self.GAMMA, *logical
        ).amplitudes
        jumps = dict(inst.model.jumps)
        budget = 4.0 * self.LAM**2 / self.KA
        wg = sum(
            np.linalg.norm(jumps[f"waveguide_{k}"].matrix @ phi) ** 2 for k in (0, 1)
        )
        assert wg <= 1e-6 * budget
        reservoir_rate = np.linalg.norm(jumps["reservoir"].matrix @ phi) ** 2
        assert abs(reservoir_rate / budget - 1.0) <= 0.01


# --- 4. total leak matches exactly one closed form --------------------------------


class TestLeakClosedForm:
    LAM, GAMMA = 0.02, 50.0
    HORIZON, POINTS = 80.0, 60
    REGRESSION = DATA_DIR / "cascaded_leak_regression.csv"

    def _numerical_leak(self) -> float:
        inst = build_cascaded(
            self.LAM, 1.0, 1.0, np.sqrt(self.GAMMA) / 2.0, self.GAMMA
        )
        grid = np.linspace(0.0, self.HORIZON, self.POINTS)
        record = evolve_no_jump(inst.model, inst.encode(1, 1), grid)
        return float(
            record.channel_leak["waveguide_0"][-1]
            + record.channel_leak["waveguide_1"][-1]
        )

    def test_exactly_one_candidate_matches(self):
        start = time.perf_counter()
        leak = self._numerical_leak()
        elapsed = time.perf_counter() - start
        forms = cascaded_infidelity(self.LAM, 1.0, 1.0, self.GAMMA)
        candidates = {
            "stiff_limit": forms.stiff_limit,
            "stiff_limit_quarter": forms.stiff_limit_quarter,
        }
        matches = sorted(
            name for name, v in candidates.items() if abs(leak / v - 1.0) <= 0.05
        )
        assert matches == ["stiff_limit"]
        assert elapsed < 10.0

    def test_regression_pin(self):
        with open(self.REGRESSION, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        pin = rows[0]
        assert float(pin["lam_over_kappa_b"]) == self.LAM
        assert float(pin["gamma_over_kappa_b"]) == self.GAMMA
        assert float(pin["horizon_kappa_b_t"]) == self.HORIZON
        assert int(pin["grid_points"]) == self.POINTS
        leak = self._numerical_leak()
        assert abs(leak / float(pin["leak_numerical"]) - 1.0) <= 1e-6
        assert pin["matching_form"] == "stiff_limit"
        expected = cascaded_infidelity(self.LAM, 1.0, 1.0, self.GAMMA).stiff_limit
        assert abs(float(pin["closed_form_value"]) / expected - 1.0) <= 1e-12


# --- 5. impedance-matched transfer sweep ------------------------------------------


@pytest.fixture(scope="module")
def fig2c_result():
    start = time.perf_counter()
    result = sweep_fig2c(threads=4)
    return result, time.perf_counter() - start


class TestImpedanceSweep:
    def test_budget(self, fig2c_result):
        _, elapsed = fig2c_result
        assert elapsed < 1800.0

    def test_row_at_lam_015(self, fig2c_result):
        result, _ = fig2c_result
        idx = int(np.argmin(np.abs(result.lam_ratios - 0.15)))
        assert abs(result.lam_ratios[idx] - 0.15) <= 1e-12
        row = result.fidelity[idx]
        assert row.shape == (len(result.gamma_over_omega),)
        assert np.all(row > 0.99)

    def test_peak_location(self, fig2c_result):
        result, _ = fig2c_result
        idx = int(np.argmin(np.abs(result.lam_ratios - 0.15)))
        row = result.fidelity[idx]
        gamma_over_kb = result.gamma_over_omega**2 / 4.0
        peak = gamma_over_kb[int(np.argmax(row))]
        optimum = 2.0 * np.sqrt(2.0) - 1.0
        assert 0.8 * optimum <= peak <= 1.2 * optimum


# --- 6. static circuit derivation --------------------------------------------------


class TestStaticDerivation:
    def test_headline_rates(self):
        derived = derive_static(reference_circuit(0.0141))
        for value, expected in (
            (derived.alpha_a, 78.0),
            (derived.alpha_r, 210.0),
            (derived.chi_ar, 4.0),
            (derived.chi_br, 0.82),
        ):
            assert abs(value / TWO_PI / expected - 1.0) <= 0.05

    def test_coupling_span_lower_endpoint(self):
        # The weak operating point is quoted to two decimals (0.03); the
        # derivation lands at 0.026, inside that printed resolution.
        derived = derive_static(reference_circuit(0.0025))
        assert abs(derived.chi_br / TWO_PI - 0.03) <= 0.005


# --- 7. dispersive phase error of the transfer ------------------------------------


def equator_infidelity(omega: float, chi_b: float, corrected: bool = False) -> float:
    """1 − best equator fidelity of the ideal model at kappa = 1."""
    inst = ideal_transfer_model(omega, 1.0, chi_b)
    rate = 4.0 * omega**2 / (1.0 + chi_b**2)
    grid = np.linspace(0.0, 20.0 / rate, 240)
    rho0 = inst.encode(1, 1).to_density_matrix()
    if corrected:
        eta = chi_b / 2.0
        target = inst.target(np.exp(1j * eta), np.exp(-1j * eta))
    else:
        target = inst.target(1, 1)
    states = evolve_master(inst.model, rho0, grid)
    return 1.0 - max(pure_fidelity(s, target) for s in states)


class TestDispersivePhaseError:
    @pytest.mark.parametrize("chi", [0.05, 0.1, 0.2, 0.3])
    @pytest.mark.parametrize("omega", [0.05, 0.2])
    def test_infidelity_tracks_half_chi_squared(self, omega, chi):
        infid = equator_infidelity(omega, chi)
        assert abs(infid / (chi**2 / 2.0) - 1.0) <= 0.10

    def test_log_log_slope(self):
        inset = sweep_fig3c_inset()
        assert abs(inset.slope + 2.0) <= 0.1

    @pytest.mark.parametrize("chi", [0.05, 0.1, 0.3])
    def test_phase_corrected_target_quarter_law(self, chi):
        infid = equator_infidelity(0.05, chi, corrected=True)
        assert abs(infid / (chi**2 / 4.0) - 1.0) <= 0.15


# --- 8. loaded operating points ----------------------------------------------------


@pytest.fixture(scope="module")
def fig3c_result():
    start = time.perf_counter()
    result = sweep_fig3c(threads=3)
    return result, time.perf_counter() - start


class TestLoadedOperatingPoints:
    def test_peaks_in_band(self, fig3c_result):
        result, _ = fig3c_result
        assert len(result.sets) == 3
        for info in result.sets:
            assert 0.87 <= info["peak_average_fidelity"] <= 0.95
            assert info["peak_time_us"] <= 10.0

    def test_sets_span_coupling_range(self, fig3c_result):
        result, _ = fig3c_result
        chis = sorted(abs(info["chi_b"]) / TWO_PI for info in result.sets)
        assert chis[0] <= 0.035
        assert chis[-1] >= 0.80

    def test_budget(self, fig3c_result):
        _, elapsed = fig3c_result
        assert elapsed < 3 * 60.0


# --- 9. chiral register: symmetry structure and equator transfer ------------------


@pytest.fixture(scope="module")
def bilinear():
    return build_bilinear(0.0, 1.0, 0.02, 0.08)


class TestChiralRegister:
    KAPPA = 0.08

    def test_permutation_commutes(self, bilinear):
        t = cyclic_permutation_operator(bilinear.model.layout).matrix
        h = bilinear.model.hamiltonian.matrix
        l_b = bilinear.model.jumps[0][1].matrix
        assert np.max(np.abs(h @ t - t @ h)) <= 1e-12
        assert np.max(np.abs(l_b @ t - t @ l_b)) <= 1e-12

    def test_collective_decay_ladder(self, bilinear):
        l_b = bilinear.model.jumps[0][1].matrix
        aux = bilinear.aux_states
        rt_k = np.sqrt(self.KAPPA)
        for src, dst, coef in (
            ("R2_B", "R1_B", -rt_k),
            ("L2_B", "L1_B", -rt_k),
            ("S1_B", "vacuum", np.sqrt(3.0) * rt_k),
        ):
            np.testing.assert_allclose(
                l_b @ aux[src].amplitudes, coef * aux[dst].amplitudes, atol=1e-12
            )
        for dark in ("L1_B", "R1_B"):
            assert np.linalg.norm(l_b @ aux[dark].amplitudes) <= 1e-12

    def test_equator_transfer_fidelity(self, bilinear):
        rate = 4.0 * 0.02**2 / self.KAPPA
        grid = np.linspace(0.0, 20.0 / rate, 120)
        rho0 = bilinear.encode(1, 1).to_density_matrix()
        states = evolve_master(bilinear.model, rho0, grid)
        target = bilinear.target(1, 1)
        best = max(pure_fidelity(s, target) for s in states)
        assert best >= 0.99, (
            f"equator transfer peaks at {best:.4f}; the symmetric ring channel "
            "dephases the stored superposition before the chiral component arrives"
        )


# --- 10. trajectory unraveling converges to the master equation -------------------


class TestTrajectoryConvergence:
    N = 2000
    BOUND = 3.0 / np.sqrt(2000)

    def test_minimal_model(self):
        inst = build_minimal_jump(1.0)
        grid = np.linspace(0.0, 8.0, 33)
        ket0 = inst.encode(1, 1)
        averaged = trajectory_average(inst.model, ket0, self.N, grid, seed=20260815)
        exact = evolve_master(inst.model, ket0.to_density_matrix(), grid)
        for avg, ref in zip(averaged, exact):
            assert trace_distance(avg, ref) <= self.BOUND

    def test_transfer_model(self):
        inst = ideal_transfer_model(0.2, 1.0, 0.1)
        grid = np.linspace(0.0, 60.0, 31)
        ket0 = inst.encode(1, 1)
        averaged = trajectory_average(inst.model, ket0, self.N, grid, seed=104729)
        exact = evolve_master(inst.model, ket0.to_density_matrix(), grid)
        for avg, ref in zip(averaged, exact):
            assert trace_distance(avg, ref) <= self.BOUND

    def test_identical_seed_identical_aggregate(self):
        inst = build_minimal_jump(1.0)
        grid = np.linspace(0.0, 6.0, 25)
        ket0 = inst.encode(1, 1)
        first = trajectory_average(inst.model, ket0, 64, grid, seed=7)
        second = trajectory_average(inst.model, ket0, 64, grid, seed=7)
        for a, b in zip(first, second):
            assert np.array_equal(a.matrix, b.matrix)


# --- 11. diagnostics across the protocol family -----------------------------------


def _protocol_cases():
    matched_omega = np.sqrt(50.0) / 2.0
    return [
        pytest.param(build_minimal_jump(1.0), "transfer", 4.0, id="minimal_jump"),
        pytest.param(
            build_minimal_reservoir(1.0, 8.0), "reservoir", 8.0, id="minimal_reservoir"
        ),
        pytest.param(
            build_cascaded(0.05, 1.0, 1.0, matched_omega, 50.0),
            "reservoir",
            40.0,
            id="cascaded",
        ),
        pytest.param(ideal_transfer_model(0.2, 1.0, 0.1), "reservoir", 40.0, id="cqed"),
    ]


class TestProtocolDiagnostics:
    LOGICALS = [(1, 0), (0, 1), (1, 1), (1, -1j)]

    @pytest.mark.parametrize("inst,channel,horizon", _protocol_cases())
    def test_targets_are_dark(self, inst, channel, horizon):
        targets = [inst.target(a, b) for a, b in self.LOGICALS]
        report = check_dark_manifold(inst.model, targets, tol=1e-10)
        assert all(state.passes for state in report.states)

    @pytest.mark.parametrize("inst,channel,horizon", _protocol_cases())
    def test_initial_states_are_not(self, inst, channel, horizon):
        initials = [inst.encode(a, b) for a, b in self.LOGICALS]
        report = check_dark_manifold(inst.model, initials, tol=1e-10)
        assert not any(state.passes for state in report.states)

    @pytest.mark.parametrize("inst,channel,horizon", _protocol_cases())
    def test_orthogonality_survives_engineered_jumps(self, inst, channel, horizon):
        pair = (inst.encode(1, 1), inst.encode(1, -1))
        grid = np.linspace(0.0, horizon, 81)
        schedule = [(0.4 * horizon, channel)]
        overlaps = check_orthogonality(inst.model, pair, grid, schedule)
        assert np.max(overlaps) <= 1e-8

    def test_leg_imbalance_breaks_orthogonality(self):
        broken = build_minimal_reservoir(1.0, 8.0, leg_imbalance=0.3)
        pair = (broken.encode(1, 1), broken.encode(1, -1))
        overlaps = check_orthogonality(broken.model, pair, np.linspace(0.0, 6.0, 61))
        assert np.max(overlaps) > 1e-3
