"""Executable forms of the general transfer-correctness conditions.

Three checks: target manifolds are stationary and dark (no jump can reveal
which logical state is stored), logical superpositions stay orthogonal along
any no-jump trajectory interleaved with scheduled jumps, and the global state
factorizes into a position label times one common logical state.  A small
decay-rate estimator used by the convergence tests lives here too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import LindbladModel, effective_hamiltonian
from .errors import ConfigError, NumericalError
from .hilbert import DensityMatrix, Ket, Operator

__all__ = [
    "StateDarkReport",
    "ManifoldReport",
    "check_dark_manifold",
    "check_orthogonality",
    "PositionReport",
    "DecompositionReport",
    "logical_position_decomposition",
    "fit_decay_rate",
]


@dataclass(frozen=True)
class StateDarkReport:
    """Dark-state residuals for one candidate manifold member."""

    eigenvalue: complex
    hamiltonian_residual: float
    jump_norms: Mapping[str, float]
    passes: bool


@dataclass(frozen=True)
class ManifoldReport:
    states: tuple[StateDarkReport, ...]
    tol: float

    @property
    def verdict(self) -> bool:
        return all(s.passes for s in self.states)


def check_dark_manifold(
    model: LindbladModel, states: Sequence[Ket], tol: float = 1e-10
) -> ManifoldReport:
    """Verify each state is a Hamiltonian eigenstate annihilated by every jump.

    The Hamiltonian residual is ‖H|φ⟩ − ⟨φ|H|φ⟩|φ⟩‖, i.e. deviation from
    eigenstate-ness at the state's own Rayleigh quotient; jump norms are
    ‖L_μ|φ⟩‖ per channel.  A state passes when all residuals are ≤ tol.
    """
    h = model.hamiltonian.matrix
    reports = []
    for ket in states:
        if ket.layout != model.layout:
            raise ConfigError("state layout does not match the model")
        v = ket.amplitudes
        hv = h @ v
        ev = complex(np.vdot(v, hv))
        h_res = float(np.linalg.norm(hv - ev * v))
        norms = {
            label: float(np.linalg.norm(op.matrix @ v)) for label, op in model.jumps
        }
        passes = h_res <= tol and all(n <= tol for n in norms.values())
        reports.append(
            StateDarkReport(
                eigenvalue=ev,
                hamiltonian_residual=h_res,
                jump_norms=norms,
                passes=passes,
            )
        )
    return ManifoldReport(states=tuple(reports), tol=tol)


def check_orthogonality(
    model: LindbladModel,
    pair: tuple[Ket, Ket],
    t_grid: np.ndarray,
    jump_schedule: Sequence[tuple[float, str]] | None = None,
    tol: float = 1e-10,
) -> np.ndarray:
    """Overlap magnitude of two states along one shared trajectory.

    Both states follow the same no-jump evolution, interrupted by the same
    scheduled jumps (channel applied to both, no renormalization); the
    returned series is the raw |⟨φ₀(t)|φ₁(t)⟩| at each grid time.  On a
    correct transfer model this stays at zero for any schedule built from
    the engineered channels — stored superpositions never dephase into
    distinguishability.  Grid points coinciding with a scheduled time record
    the post-jump value.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be strictly increasing with >= 2 points")
    phi0, phi1 = pair
    if phi0.layout != model.layout or phi1.layout != model.layout:
        raise ConfigError("pair layout does not match the model")
    if abs(np.vdot(phi0.amplitudes, phi1.amplitudes)) > tol:
        raise ConfigError(f"pair must be orthogonal at t = 0 (tol {tol:g})")
    labels = dict(model.jumps)
    schedule = sorted(jump_schedule or [], key=lambda e: e[0])
    for t_jump, channel in schedule:
        if channel not in labels:
            raise ConfigError(
                f"scheduled channel {channel!r} is not one of {sorted(labels)}"
            )
        if not t_grid[0] < t_jump <= t_grid[-1]:
            raise ConfigError("scheduled jump times must lie inside the grid span")

    heff = effective_hamiltonian(model).matrix
    dim = model.layout.total_dim

    def rhs(_, y):
        pair_mat = y.reshape(2, dim)
        return (-1j * (pair_mat @ heff.T)).ravel()

    y = np.concatenate([phi0.amplitudes, phi1.amplitudes]).astype(complex)
    overlaps = np.empty(len(t_grid))
    overlaps[0] = abs(np.vdot(y[:dim], y[dim:]))
    cursor = 1  # next grid index to fill
    t_now = t_grid[0]
    breakpoints = [*schedule, (t_grid[-1], None)]
    for t_stop, channel in breakpoints:
        inside = [t for t in t_grid[cursor:] if t_now < t < t_stop]
        eval_times = np.array([*inside, t_stop])
        if t_stop > t_now:
            sol = solve_ivp(
                rhs,
                (t_now, t_stop),
                y,
                method="RK45",
                t_eval=eval_times,
                rtol=1e-10,
                atol=1e-12,
            )
            if not sol.success:
                raise NumericalError(f"no-jump segment failed: {sol.message}")
            for k in range(len(inside)):
                col = sol.y[:, k]
                overlaps[cursor] = abs(np.vdot(col[:dim], col[dim:]))
                cursor += 1
            y = sol.y[:, -1]
        if channel is not None:
            op = labels[channel].matrix
            y = np.concatenate([op @ y[:dim], op @ y[dim:]])
        while cursor < len(t_grid) and t_grid[cursor] <= t_stop:
            overlaps[cursor] = abs(np.vdot(y[:dim], y[dim:]))
            cursor += 1
        t_now = t_stop
    return overlaps


@dataclass(frozen=True)
class PositionReport:
    """Conditional logical state extracted at one position sector."""

    label: str
    probability: float
    logical_state: np.ndarray  # 2x2, unit trace
    purity: float
    capture: float  # weight of the conditional state inside the logical span


@dataclass(frozen=True)
class DecompositionReport:
    positions: tuple[PositionReport, ...]
    skipped: tuple[str, ...]
    min_pairwise_fidelity: float
    tol: float
    verdict: bool

    @property
    def probabilities(self) -> list[float]:
        return [p.probability for p in self.positions]


def _qubit_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    # closed form for 2x2 states: F = tr(ab) + 2 sqrt(det a . det b)
    t = float(np.trace(a @ b).real)
    da = max(float(np.linalg.det(a).real), 0.0)
    db = max(float(np.linalg.det(b).real), 0.0)
    return min(1.0, t + 2.0 * np.sqrt(da * db))


def logical_position_decomposition(
    rho: DensityMatrix,
    position_projectors: Sequence[tuple[str, Operator]],
    logical_bases: Mapping[str, tuple[Ket, Ket]],
    tol: float = 1e-6,
) -> DecompositionReport:
    """Test whether ρ factorizes as (position mixture) ⊗ (one logical state).

    For every projector with occupation above 1e−9, the conditional state is
    expressed in that position's two-dimensional logical basis.  The verdict
    is separable when each conditional state lies inside its logical span,
    is pure, and all of them agree pairwise in fidelity — all at ``1 − tol``.
    Unpopulated positions are skipped rather than failed.
    """
    d = rho.layout.total_dim
    mats = []
    for label, proj in position_projectors:
        if proj.layout != rho.layout:
            raise ConfigError(f"projector {label!r} layout mismatch")
        p = proj.matrix
        if np.max(np.abs(p @ p - p)) > 1e-9:
            raise ConfigError(f"projector {label!r} is not idempotent")
        mats.append((label, p))
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            if np.max(np.abs(mats[i][1] @ mats[j][1])) > 1e-10:
                raise ConfigError(
                    f"projectors {mats[i][0]!r} and {mats[j][0]!r} overlap"
                )
    total = sum(p for _, p in mats)
    if np.max(np.linalg.eigvalsh(total - np.eye(d))) > 1e-9:
        raise ConfigError("projectors exceed the identity")

    positions = []
    skipped = []
    for label, p in mats:
        prob = float(np.real(np.trace(p @ rho.matrix)))
        if prob <= 1e-9:
            skipped.append(label)
            continue
        if label not in logical_bases:
            raise ConfigError(f"no logical basis given for populated position {label!r}")
        b0, b1 = logical_bases[label]
        basis = np.column_stack([b0.amplitudes, b1.amplitudes])
        conditional = p @ rho.matrix @ p / prob
        m = basis.conj().T @ conditional @ basis
        capture = float(np.trace(m).real)
        m_norm = m / capture if capture > 0 else m
        purity = float(np.trace(m_norm @ m_norm).real)
        positions.append(
            PositionReport(
                label=label,
                probability=prob,
                logical_state=m_norm,
                purity=purity,
                capture=capture,
            )
        )

    min_fid = 1.0
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            min_fid = min(
                min_fid,
                _qubit_fidelity(positions[i].logical_state, positions[j].logical_state),
            )
    verdict = (
        all(p.capture >= 1 - tol and p.purity >= 1 - tol for p in positions)
        and min_fid >= 1 - tol
    )
    return DecompositionReport(
        positions=tuple(positions),
        skipped=tuple(skipped),
        min_pairwise_fidelity=min_fid,
        tol=tol,
        verdict=verdict,
    )


def fit_decay_rate(times: np.ndarray, values: np.ndarray) -> float:
    """Asymptotic decay rate of a decaying observable, oscillation-tolerant.

    Underdamped observables decay as exponential × periodic; the log-ratio
    across an integer number of detected oscillation periods cancels the
    periodic factor exactly.  Periods are located as pronounced dips of the
    centered log-derivative (parabolically refined).  Monotone data instead
    get a two-stage Richardson extrapolation of the log-derivative at
    anchors (t₀, 2t₀, 4t₀), cancelling 1/t and 1/t² prefactor bias.
    """
    ts = np.asarray(times, dtype=float)
    ns = np.asarray(values, dtype=float)
    if ts.ndim != 1 or ts.shape != ns.shape or len(ts) < 16:
        raise ConfigError("need matching 1-d arrays with at least 16 samples")
    if np.any(np.diff(ts) <= 0):
        raise ConfigError("times must be strictly increasing")
    if ns[0] <= 0:
        raise ConfigError("observable must start positive")

    # clean window: drop the relative-noise-floor tail
    keep = ns > ns.max() * 1e-8
    hi = len(ns) - int(np.argmax(keep[::-1]))
    ts, ns = ts[:hi], ns[:hi]

    lnn = np.log(ns)
    sd = -(lnn[2:] - lnn[:-2]) / (ts[2:] - ts[:-2])
    tm = ts[1:-1]
    dips = [i for i in range(1, len(sd) - 1) if sd[i] <= sd[i - 1] and sd[i] < sd[i + 1]]
    dips = [i for i in dips if sd[i] < 0.5 * np.median(sd)]
    if len(dips) >= 2:
        t_dip = []
        for i in dips:
            y0, y1, y2 = sd[i - 1 : i + 2]
            denom = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom else 0.0
            t_dip.append(tm[i] + shift * (tm[i] - tm[i - 1]))
        period = float(np.median(np.diff(t_dip)))
        t_a = t_dip[0]
        m = int((ts[-1] - t_a) / period)
        if m >= 1:
            n_a = np.interp(t_a, ts, ns)
            n_b = np.interp(t_a + m * period, ts, ns)
            return float(np.log(n_a / n_b) / (m * period))

    t0 = ts[-1] / 4.6
    d = 0.02 * t0

    def slope(tc):
        n_a = np.interp(tc - d, ts, ns)
        n_b = np.interp(tc + d, ts, ns)
        return np.log(n_a / n_b) / (2 * d)

    a = 2 * slope(2 * t0) - slope(t0)
    b = 2 * slope(4 * t0) - slope(2 * t0)
    return float((4 * b - a) / 3)
