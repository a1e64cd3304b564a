"""Dark-manifold, orthogonality, separability and rate-estimator checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqst.cqed import ideal_transfer_model
from aqst.diagnostics import (
    check_dark_manifold,
    check_orthogonality,
    fit_decay_rate,
    logical_position_decomposition,
)
from aqst.dynamics import evolve_master
from aqst.errors import ConfigError
from aqst.hilbert import Operator, basis_ket
from aqst.oracles import convergence_rate, minimal_rho
from aqst.protocols import build_cascaded, build_minimal_jump, build_minimal_reservoir


def projector(lay, kets):
    m = sum(np.outer(k.amplitudes, k.amplitudes.conj()) for k in kets)
    return Operator(lay, m)


class TestDarkManifold:
    def test_minimal_targets_pass(self):
        inst = build_minimal_jump(1.0)
        rep = check_dark_manifold(inst.model, [inst.target(1, 0), inst.target(0, 1)])
        assert rep.verdict
        for s in rep.states:
            assert s.hamiltonian_residual == 0.0
            assert all(n == 0.0 for n in s.jump_norms.values())

    def test_minimal_initials_fail(self):
        inst = build_minimal_jump(1.0)
        rep = check_dark_manifold(inst.model, [inst.encode(1, 0), inst.encode(0, 1)])
        assert not rep.verdict
        # the Hamiltonian is fine (zero); the jump reveals the state
        assert all(s.hamiltonian_residual <= 1e-10 for s in rep.states)
        assert all(s.jump_norms["transfer"] > 0.9 for s in rep.states)

    def test_cascaded_targets_pass(self):
        inst = build_cascaded(0.05, 1.0, 1.0, np.sqrt(50.0) / 2, 50.0)
        rep = check_dark_manifold(inst.model, [inst.target(1, 0), inst.target(0, 1)])
        assert rep.verdict

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_verdict_invariant_under_remixing(self, seed):
        # any unitary recombination of a dark pair is equally dark
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q, _ = np.linalg.qr(z)
        inst = build_minimal_jump(1.0)
        t0, t1 = inst.target(1, 0), inst.target(0, 1)
        mixed = [
            inst.target(q[0, 0], q[1, 0]),
            inst.target(q[0, 1], q[1, 1]),
        ]
        assert check_dark_manifold(inst.model, mixed).verdict
        assert check_dark_manifold(inst.model, [t0, t1]).verdict

    def test_layout_mismatch_rejected(self):
        inst = build_minimal_jump(1.0)
        other = build_minimal_reservoir(1.0, 8.0)
        with pytest.raises(ConfigError):
            check_dark_manifold(inst.model, [other.target(1, 0)])


class TestOrthogonality:
    def test_minimal_with_scheduled_jump(self):
        inst = build_minimal_jump(1.0)
        pair = (inst.encode(1, 1), inst.encode(1, -1))
        ts = np.linspace(0.0, 5.0, 60)
        ov = check_orthogonality(inst.model, pair, ts, jump_schedule=[(1.3, "transfer")])
        assert ov.max() <= 1e-10

    def test_broken_model_negative_control(self):
        broken = build_minimal_reservoir(1.0, 8.0, leg_imbalance=0.3)
        pair = (broken.encode(1, 1), broken.encode(1, -1))
        ov = check_orthogonality(broken.model, pair, np.linspace(0.0, 6.0, 50))
        assert ov.max() > 1e-3

    def test_jump_free_model_exact(self):
        # pure Hamiltonian evolution: orthogonality preserved to solver noise
        from aqst.dynamics import LindbladModel
        from aqst.protocols import build_bilinear

        bl = build_bilinear(0.0, 1.0, 0.02, 0.08)
        h_only = LindbladModel(bl.model.layout, bl.model.hamiltonian, ())
        pair = (bl.aux_states["S1_B"], bl.aux_states["L1_B"])
        ov = check_orthogonality(h_only, pair, np.linspace(0.0, 10.0, 40))
        assert ov.max() <= 1e-12

    def test_rejects_nonorthogonal_pair(self):
        inst = build_minimal_jump(1.0)
        with pytest.raises(ConfigError, match="orthogonal"):
            check_orthogonality(
                inst.model, (inst.encode(1, 0), inst.encode(1, 0.1)), np.linspace(0, 1, 10)
            )

    def test_rejects_unknown_channel(self):
        inst = build_minimal_jump(1.0)
        pair = (inst.encode(1, 0), inst.encode(0, 1))
        with pytest.raises(ConfigError, match="sink"):
            check_orthogonality(
                inst.model, pair, np.linspace(0, 1, 10), jump_schedule=[(0.5, "sink")]
            )

    def test_grid_point_on_jump_time_is_post_jump(self):
        inst = build_minimal_jump(1.0)
        pair = (inst.encode(1, 1), inst.encode(1, -1))
        ts = np.array([0.0, 0.5, 1.0])
        ov = check_orthogonality(inst.model, pair, ts, jump_schedule=[(0.5, "transfer")])
        assert ov.shape == (3,)


class TestPositionDecomposition:
    def test_minimal_half_transferred_is_separable(self):
        inst = build_minimal_jump(1.0)
        lay = inst.model.layout
        rho = minimal_rho(np.log(2.0), 1.0, 0.6, 0.8)
        sender = (inst.encode(1, 0), inst.encode(0, 1))
        receiver = (inst.target(1, 0), inst.target(0, 1))
        rep = logical_position_decomposition(
            rho,
            [("sender", projector(lay, sender)), ("receiver", projector(lay, receiver))],
            {"sender": sender, "receiver": receiver},
        )
        assert rep.verdict
        assert rep.probabilities == pytest.approx([0.5, 0.5], abs=1e-12)
        assert rep.min_pairwise_fidelity == pytest.approx(1.0, abs=1e-12)

    def test_product_state_single_position(self):
        inst = build_minimal_jump(1.0)
        lay = inst.model.layout
        sender = (inst.encode(1, 0), inst.encode(0, 1))
        receiver = (inst.target(1, 0), inst.target(0, 1))
        rep = logical_position_decomposition(
            inst.encode(0.6, 0.8j).to_density_matrix(),
            [("sender", projector(lay, sender)), ("receiver", projector(lay, receiver))],
            {"sender": sender, "receiver": receiver},
        )
        assert rep.verdict
        assert rep.skipped == ("receiver",)
        assert rep.probabilities == pytest.approx([1.0])

    def test_cqed_mid_transfer_not_separable(self):
        # the in-flight and arrived components acquire different phases when
        # the intermediate levels are split; fails at tight tolerance
        inst = ideal_transfer_model(0.05, 1.0, 0.1)
        lay = inst.model.layout
        rate = 4 * 0.05**2
        rho = evolve_master(
            inst.model,
            inst.encode(1, 1).to_density_matrix(),
            np.linspace(0.0, 1.0 / rate, 6),
        )[-1]
        sender = (inst.encode(1, 0), inst.encode(0, 1))
        receiver = (inst.target(1, 0), inst.target(0, 1))
        inflight = (basis_ket(lay, (0, 1, 1)), basis_ket(lay, (0, 0, 1)))
        rep = logical_position_decomposition(
            rho,
            [
                ("sender", projector(lay, sender)),
                ("receiver", projector(lay, receiver)),
                ("inflight", projector(lay, inflight)),
            ],
            {"sender": sender, "receiver": receiver, "inflight": inflight},
            tol=1e-4,
        )
        assert not rep.verdict
        phases = {p.label: np.angle(p.logical_state[0, 1]) for p in rep.positions}
        gap = phases["receiver"] - phases["sender"]
        assert 0.1 < gap < 0.4  # of order 2 chi_b / kappa = 0.2

    def test_overlapping_projectors_rejected(self):
        inst = build_minimal_jump(1.0)
        lay = inst.model.layout
        sender = (inst.encode(1, 0), inst.encode(0, 1))
        p = projector(lay, sender)
        with pytest.raises(ConfigError, match="overlap"):
            logical_position_decomposition(
                minimal_rho(0.5, 1.0, 1, 0),
                [("a", p), ("b", p)],
                {"a": sender, "b": sender},
            )

    def test_non_idempotent_rejected(self):
        inst = build_minimal_jump(1.0)
        lay = inst.model.layout
        bad = Operator(lay, 0.5 * np.eye(9))
        with pytest.raises(ConfigError, match="idempotent"):
            logical_position_decomposition(
                minimal_rho(0.5, 1.0, 1, 0), [("half", bad)], {}
            )


class TestDecayRateEstimator:
    @pytest.mark.parametrize("ratio", [2.0, 4.0, 8.0, 50.0])
    def test_reservoir_convergence_rates(self, ratio):
        omega = 1.0
        exact = convergence_rate(omega, ratio * omega)
        inst = build_minimal_reservoir(omega, ratio * omega)
        ts = np.linspace(0.0, 40.0 / exact, 4001)
        states = evolve_master(
            inst.model, inst.encode(1.0, 0.0).to_density_matrix(), ts
        )
        tv = inst.target(1.0, 0.0).amplitudes
        infid = np.array([1 - np.real(tv.conj() @ s.matrix @ tv) for s in states])
        est = fit_decay_rate(ts, infid)
        assert est == pytest.approx(exact, rel=0.02)

    def test_pure_exponential(self):
        ts = np.linspace(0.0, 20.0, 500)
        assert fit_decay_rate(ts, np.exp(-0.37 * ts)) == pytest.approx(0.37, rel=1e-3)

    def test_exponential_with_power_prefactor(self):
        # Richardson stage removes 1/t-type bias from t^2 e^{-rt} data
        ts = np.linspace(0.1, 60.0, 2000)
        vals = ts**2 * np.exp(-0.5 * ts)
        assert fit_decay_rate(ts, vals) == pytest.approx(0.5, rel=5e-3)

    def test_oscillatory_envelope(self):
        ts = np.linspace(0.0, 30.0, 3000)
        vals = np.exp(-0.8 * ts) * (1.02 + np.cos(2.7 * ts))
        assert fit_decay_rate(ts, vals) == pytest.approx(0.8, rel=0.02)

    def test_rejects_short_input(self):
        with pytest.raises(ConfigError):
            fit_decay_rate(np.linspace(0, 1, 5), np.ones(5))
