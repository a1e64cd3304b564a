"""Time evolution of Lindblad models.

Three solvers share one model type:

- :func:`evolve_master` integrates the full master equation
  dρ/dt = −i[H,ρ] + Σ_μ (L_μ ρ L_μ† − ½{L_μ†L_μ, ρ}) on a time grid.
- :func:`evolve_no_jump` propagates an unnormalized pure state under the
  non-Hermitian effective Hamiltonian H − (i/2)Σ L†L, accumulating the
  per-channel leak integrals ∫⟨φ|L†L|φ⟩dt alongside the state.
- :func:`sample_trajectory` / :func:`trajectory_average` unravel the master
  equation into stochastic pure-state trajectories using the norm-threshold
  method (draw u ~ U(0,1), integrate no-jump until ‖φ‖² = u, jump).

The default integrator is adaptive RK45 at rtol 1e-10 / atol 1e-12; a
fixed-step classical RK4 fallback with dt ≤ 0.01/(largest rate) is available
through ``stepper="fixed"``.  Times are microseconds and all rates angular
(rad/μs) throughout.

Every solver first projects the problem onto the subspace actually reachable
from the initial state (Krylov closure under H and the jump operators).  For
the transfer protocols this cuts an O(100)-dimensional space down to a
handful of states and is what keeps full parameter sweeps cheap.  The
reduction is exact — the closure is run until no generator leaves the
subspace — and can be disabled per call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, NumericalError
from .hilbert import DensityMatrix, HilbertLayout, Ket, Operator

__all__ = [
    "LindbladModel",
    "NoJumpRecord",
    "JumpRecord",
    "effective_hamiltonian",
    "lindblad_rhs",
    "evolve_master",
    "evolve_no_jump",
    "sample_trajectory",
    "trajectory_average",
]

DEFAULT_TOL = 1e-10
FIXED_STEP_SAFETY = 0.01  # dt <= this / (largest rate)


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian (rad/μs) plus labeled jump operators on one layout."""

    layout: HilbertLayout
    hamiltonian: Operator
    jumps: tuple[tuple[str, Operator], ...]

    def __init__(self, layout, hamiltonian, jumps):
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "hamiltonian", hamiltonian)
        object.__setattr__(self, "jumps", tuple((str(l), op) for l, op in jumps))
        if hamiltonian.layout != layout:
            raise ConfigError("hamiltonian layout does not match model layout")
        h = hamiltonian.matrix
        dev = float(np.max(np.abs(h - h.conj().T)))
        scale = max(1.0, float(np.max(np.abs(h))))
        if dev > 1e-10 * scale:
            raise ConfigError(f"hamiltonian not Hermitian: max deviation {dev:.3e}")
        labels = [l for l, _ in self.jumps]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate jump labels: {labels}")
        for l, op in self.jumps:
            if op.layout != layout:
                raise ConfigError(f"jump {l!r} layout does not match model layout")

    @property
    def jump_labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.jumps)

    @cached_property
    def max_rate(self) -> float:
        """Largest rate scale: max of ‖H‖₂ and the ‖L‖₂² decay rates."""
        rates = [float(np.linalg.norm(self.hamiltonian.matrix, 2))]
        rates += [float(np.linalg.norm(op.matrix, 2)) ** 2 for _, op in self.jumps]
        return max(rates) if rates else 0.0


@dataclass(frozen=True)
class NoJumpRecord:
    """No-jump evolution: unnormalized kets plus cumulative channel leaks.

    Invariants checked at construction: ‖φ(t)‖ is non-increasing (within
    1e-8) and 1 − ‖φ(t)‖² equals the summed channel leaks to 1e-6 at every
    grid point.
    """

    times: np.ndarray
    kets: tuple[Ket, ...]
    channel_leak: dict[str, np.ndarray]

    def __post_init__(self):
        norms = np.array([k.norm for k in self.kets])
        growth = float(np.max(np.diff(norms), initial=-np.inf))
        if growth > 1e-8:
            raise NumericalError(f"no-jump norm increased by {growth:.3e} between grid points")
        total_leak = sum(self.channel_leak.values()) if self.channel_leak else 0.0
        budget = np.abs(1.0 - norms**2 - total_leak)
        worst = float(np.max(budget))
        if worst > 1e-6:
            raise NumericalError(
                f"leak bookkeeping violated: |1 - ||phi||^2 - sum(leaks)| = {worst:.3e}"
            )

    @property
    def norms_squared(self) -> np.ndarray:
        return np.array([k.norm**2 for k in self.kets])

    @property
    def total_leak(self) -> np.ndarray:
        if not self.channel_leak:
            return np.zeros_like(self.times)
        return sum(self.channel_leak.values())


@dataclass(frozen=True)
class JumpRecord:
    """One stochastic trajectory: its jumps, final state, and seed.

    ``truncated`` is set when a further jump was still pending at ``t_max``
    (the surviving state still leaks into at least one channel); it is False
    when the trajectory ended in a dark state.
    """

    events: tuple[tuple[float, str], ...]
    final_ket: Ket
    seed: int
    truncated: bool = False

    def __post_init__(self):
        times = [t for t, _ in self.events]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise NumericalError(f"jump times not strictly increasing: {times}")


def effective_hamiltonian(model: LindbladModel) -> Operator:
    """Non-Hermitian H_eff = H − (i/2) Σ_μ L_μ†L_μ.

    The anti-Hermitian part is −(1/2)Σ L†L, which is negative semidefinite
    by construction; this is asserted (cheaply) rather than trusted.
    """
    h = model.hamiltonian.matrix.astype(complex, copy=True)
    for _, op in model.jumps:
        l = op.matrix
        h = h - 0.5j * (l.conj().T @ l)
    anti = (h - h.conj().T) / 2j  # Hermitian; must be <= 0
    top = float(np.linalg.eigvalsh(anti)[-1]) if model.jumps else 0.0
    if top > 1e-10 * max(1.0, float(np.max(np.abs(h)))):
        raise NumericalError(f"anti-Hermitian part of H_eff not <= 0 (max eig {top:.3e})")
    return Operator(model.layout, h)


def lindblad_rhs(model: LindbladModel, rho: DensityMatrix) -> DensityMatrix:
    """Right-hand side of the master equation applied to ρ (traceless)."""
    if rho.layout != model.layout:
        raise ConfigError("state layout does not match model layout")
    h = model.hamiltonian.matrix
    r = rho.matrix
    out = -1j * (h @ r - r @ h)
    for _, op in model.jumps:
        l = op.matrix
        ldl = l.conj().T @ l
        out += l @ r @ l.conj().T - 0.5 * (ldl @ r + r @ ldl)
    out = (out + out.conj().T) / 2  # exact Hermitization of roundoff
    return DensityMatrix(model.layout, out, physical=False)


# --- reachable-subspace reduction --------------------------------------------


def _closure_basis(
    seeds: Sequence[np.ndarray], generators: Sequence[np.ndarray], rel_tol: float = 1e-9
) -> np.ndarray:
    """Orthonormal basis of the smallest generator-invariant space containing the seeds.

    Greedy Krylov closure with doubly-applied Gram–Schmidt.  A new direction
    is kept when its orthogonal residual exceeds ``rel_tol`` times the norm
    of the generated vector, so structurally zero couplings are dropped but
    weak physical couplings (any rate above ~1e-9 of the generator scale)
    are kept.
    """
    dim = len(seeds[0])
    basis: list[np.ndarray] = []

    def orthogonalize(w: np.ndarray) -> np.ndarray:
        for b in basis:
            w = w - b * np.vdot(b, w)
        return w

    def add(w: np.ndarray) -> None:
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return
        w = orthogonalize(orthogonalize(w))
        res = float(np.linalg.norm(w))
        if res > rel_tol * nw:
            basis.append(w / res)

    for s in seeds:
        add(np.asarray(s, dtype=complex))
    i = 0
    while i < len(basis) and len(basis) < dim:
        v = basis[i]
        for g in generators:
            add(g @ v)
        i += 1
    return np.column_stack(basis)


def _reduced_space(
    model: LindbladModel, seeds: Sequence[np.ndarray], include_jumps: bool
) -> np.ndarray | None:
    """Column basis V of the reachable subspace, or None if no reduction pays off."""
    gens = [model.hamiltonian.matrix]
    for _, op in model.jumps:
        l = op.matrix
        gens.append(l.conj().T @ l)
        if include_jumps:
            gens.append(l)
    v = _closure_basis(seeds, gens)
    if v.shape[1] >= model.layout.total_dim:
        return None
    return v


def _seed_vectors_from_rho(rho: DensityMatrix) -> list[np.ndarray]:
    w, v = np.linalg.eigh(rho.matrix)
    return [v[:, i] for i in range(len(w)) if w[i] > 1e-14]


# --- master equation ----------------------------------------------------------


def _liouvillian(h: np.ndarray, ls: list[np.ndarray]) -> np.ndarray:
    """Dense superoperator for row-major vec(ρ)."""
    d = h.shape[0]
    eye = np.eye(d)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for l in ls:
        ldl = l.conj().T @ l
        sup += np.kron(l, l.conj())
        sup -= 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
    return sup


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0):
        raise ConfigError("t_grid must be a strictly increasing 1-d array of length >= 2")
    return t


def _solve_linear_ode(
    rhs_matrix: np.ndarray,
    y0: np.ndarray,
    t_grid: np.ndarray,
    tol: float,
    stepper: str,
    max_rate: float,
) -> np.ndarray:
    """Integrate ẏ = M y on the grid; returns array of shape (len(t_grid), len(y0))."""
    if stepper == "fixed":
        dt_max = FIXED_STEP_SAFETY / max_rate if max_rate > 0 else np.inf
        out = np.empty((len(t_grid), len(y0)), dtype=complex)
        out[0] = y = np.array(y0, dtype=complex)
        for i in range(1, len(t_grid)):
            span = t_grid[i] - t_grid[i - 1]
            n = max(1, int(math.ceil(span / dt_max))) if np.isfinite(dt_max) else 1
            h = span / n
            for _ in range(n):
                k1 = rhs_matrix @ y
                k2 = rhs_matrix @ (y + 0.5 * h * k1)
                k3 = rhs_matrix @ (y + 0.5 * h * k2)
                k4 = rhs_matrix @ (y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            out[i] = y
        return out
    if stepper != "adaptive":
        raise ConfigError(f"unknown stepper {stepper!r}; use 'adaptive' or 'fixed'")
    sol = solve_ivp(
        lambda t, y: rhs_matrix @ y,
        (t_grid[0], t_grid[-1]),
        np.asarray(y0, dtype=complex),
        method="RK45",
        t_eval=t_grid,
        rtol=tol,
        atol=tol * 1e-2,
    )
    if not sol.success:
        last = sol.t[-1] if len(sol.t) else t_grid[0]
        raise NumericalError(f"integration failed at t = {last:.6g} us: {sol.message}")
    return sol.y.T


def evolve_master(
    model: LindbladModel,
    rho0: DensityMatrix,
    t_grid,
    tol: float = DEFAULT_TOL,
    stepper: str = "adaptive",
    reduce: bool = True,
) -> list[DensityMatrix]:
    """Master-equation evolution of ``rho0`` on ``t_grid`` (state at t_grid[0]).

    Parameters
    ----------
    tol:
        Relative integrator tolerance (absolute is ``tol * 1e-2``).
    stepper:
        "adaptive" (RK45) or "fixed" (RK4 with dt ≤ 0.01 / largest rate).
    reduce:
        Project onto the subspace reachable from ``rho0`` before
        integrating.  Exact; disable only for debugging.

    Returns the evolved density matrices; trace, Hermiticity, and positivity
    are re-validated at every grid point by the DensityMatrix constructor.
    """
    if rho0.layout != model.layout:
        raise ConfigError("initial state layout does not match model layout")
    t = _check_grid(t_grid)
    h = model.hamiltonian.matrix
    ls = [op.matrix for _, op in model.jumps]
    v = _reduced_space(model, _seed_vectors_from_rho(rho0), include_jumps=True) if reduce else None
    r0 = rho0.matrix
    if v is not None:
        h = v.conj().T @ h @ v
        ls = [v.conj().T @ l @ v for l in ls]
        r0 = v.conj().T @ r0 @ v
    k = h.shape[0]
    sup = _liouvillian(h, ls)
    ys = _solve_linear_ode(sup, r0.reshape(-1), t, tol, stepper, model.max_rate)
    out = []
    for y in ys:
        m = y.reshape(k, k)
        m = v @ m @ v.conj().T if v is not None else m
        dev = float(np.max(np.abs(m - m.conj().T)))
        if dev > max(1e-10, 50.0 * tol):
            raise NumericalError(f"evolved state lost Hermiticity: deviation {dev:.3e}")
        out.append(DensityMatrix(model.layout, (m + m.conj().T) / 2))
    return out


# --- no-jump propagation -------------------------------------------------------


def evolve_no_jump(
    model: LindbladModel,
    ket0: Ket,
    t_grid,
    tol: float = DEFAULT_TOL,
    stepper: str = "adaptive",
    reduce: bool = True,
) -> NoJumpRecord:
    """Propagate |φ(t)⟩ under H_eff, accumulating per-channel leak integrals.

    The leak integrals ride along as extra ODE components, so they carry the
    same quadrature order as the state itself.
    """
    if ket0.layout != model.layout:
        raise ConfigError("initial ket layout does not match model layout")
    if abs(ket0.norm - 1.0) > 1e-9:
        raise ConfigError(f"initial ket must be normalized (norm = {ket0.norm!r})")
    t = _check_grid(t_grid)
    h = model.hamiltonian.matrix
    ldls = [op.matrix.conj().T @ op.matrix for _, op in model.jumps]
    v = _reduced_space(model, [ket0.amplitudes], include_jumps=False) if reduce else None
    phi0 = ket0.amplitudes
    if v is not None:
        h = v.conj().T @ h @ v
        ldls = [v.conj().T @ m @ v for m in ldls]
        phi0 = v.conj().T @ phi0
    heff = h - 0.5j * sum(ldls) if ldls else h
    k = heff.shape[0]
    m = len(ldls)

    def rhs(t_, y):
        phi = y[:k]
        dphi = -1j * (heff @ phi)
        dleak = [np.real(np.vdot(phi, ldl @ phi)) for ldl in ldls]
        return np.concatenate([dphi, dleak])

    y0 = np.concatenate([phi0, np.zeros(m)])
    if stepper == "fixed":
        # Reuse the linear fixed stepper by augmenting the system is not
        # possible (leaks are quadratic), so step RK4 on the nonlinear rhs.
        dt_max = FIXED_STEP_SAFETY / model.max_rate if model.max_rate > 0 else np.inf
        ys = np.empty((len(t), len(y0)), dtype=complex)
        ys[0] = y = y0.astype(complex)
        for i in range(1, len(t)):
            span = t[i] - t[i - 1]
            n = max(1, int(math.ceil(span / dt_max))) if np.isfinite(dt_max) else 1
            hstep = span / n
            tt = t[i - 1]
            for _ in range(n):
                k1 = rhs(tt, y)
                k2 = rhs(tt + hstep / 2, y + 0.5 * hstep * k1)
                k3 = rhs(tt + hstep / 2, y + 0.5 * hstep * k2)
                k4 = rhs(tt + hstep, y + hstep * k3)
                y = y + (hstep / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                tt += hstep
            ys[i] = y
    else:
        sol = solve_ivp(
            rhs, (t[0], t[-1]), y0.astype(complex), method="RK45",
            t_eval=t, rtol=tol, atol=tol * 1e-2,
        )
        if not sol.success:
            last = sol.t[-1] if len(sol.t) else t[0]
            raise NumericalError(f"no-jump integration failed at t = {last:.6g} us: {sol.message}")
        ys = sol.y.T
    kets = []
    for y in ys:
        phi = y[:k]
        full = v @ phi if v is not None else phi
        kets.append(Ket(model.layout, full))
    leaks = {
        label: np.real(ys[:, k + j]) for j, (label, _) in enumerate(model.jumps)
    }
    return NoJumpRecord(times=t, kets=tuple(kets), channel_leak=leaks)


# --- quantum trajectories -------------------------------------------------------


class _ReducedModel:
    """Model projected on its reachable subspace, shared across trajectories."""

    def __init__(self, model: LindbladModel, ket0: Ket):
        if ket0.layout != model.layout:
            raise ConfigError("initial ket layout does not match model layout")
        if abs(ket0.norm - 1.0) > 1e-9:
            raise ConfigError(f"initial ket must be normalized (norm = {ket0.norm!r})")
        v = _reduced_space(model, [ket0.amplitudes], include_jumps=True)
        self.v = v
        self.layout = model.layout
        h = model.hamiltonian.matrix
        self.labels = list(model.jump_labels)
        ls = [op.matrix for _, op in model.jumps]
        if v is not None:
            h = v.conj().T @ h @ v
            ls = [v.conj().T @ l @ v for l in ls]
        self.ls = ls
        self.ldls = [l.conj().T @ l for l in ls]
        self.heff = h - (0.5j * sum(self.ldls) if self.ldls else 0.0)
        self.phi0 = v.conj().T @ ket0.amplitudes if v is not None else ket0.amplitudes.copy()
        self.max_rate = model.max_rate

    def to_full(self, phi: np.ndarray) -> np.ndarray:
        return self.v @ phi if self.v is not None else phi


def _run_trajectory(
    red: _ReducedModel, t_grid: np.ndarray, rng: np.random.Generator, tol: float
):
    """One norm-threshold trajectory sampled on t_grid (normalized states)."""
    k = red.heff.shape[0]
    nchan = len(red.ls)
    states = np.empty((len(t_grid), k), dtype=complex)
    states[0] = red.phi0
    events: list[tuple[float, str]] = []
    t_end = t_grid[-1]
    t_cur = t_grid[0]
    phi = red.phi0.copy()
    next_idx = 1  # first grid index still to fill

    def rhs(t_, y):
        return -1j * (red.heff @ y)

    while True:
        u = rng.uniform()

        def hit_threshold(t_, y, u=u):
            return float(np.real(np.vdot(y, y))) - u

        hit_threshold.terminal = True
        hit_threshold.direction = -1
        sol = solve_ivp(
            rhs, (t_cur, t_end), phi, method="RK45", dense_output=True,
            events=[hit_threshold] if nchan else None, rtol=tol, atol=tol * 1e-2,
        )
        if not sol.success:
            raise NumericalError(f"trajectory integration failed at t = {sol.t[-1]:.6g} us")
        seg_end = sol.t[-1]
        while next_idx < len(t_grid) and t_grid[next_idx] <= seg_end + 1e-15:
            y = sol.sol(min(t_grid[next_idx], seg_end))
            states[next_idx] = y / np.linalg.norm(y)
            next_idx += 1
        if nchan and sol.t_events[0].size:
            t_jump = float(sol.t_events[0][0])
            phi_j = sol.sol(t_jump)
            weights = np.array([np.real(np.vdot(phi_j, ldl @ phi_j)) for ldl in red.ldls])
            total = weights.sum()
            if total <= 0:
                raise NumericalError(f"jump triggered with zero leak rate at t = {t_jump:.6g}")
            ch = int(rng.choice(nchan, p=weights / total))
            phi = red.ls[ch] @ phi_j
            phi = phi / np.linalg.norm(phi)
            events.append((t_jump, red.labels[ch]))
            t_cur = t_jump
            continue
        # reached t_end without hitting the threshold
        phi = sol.y[:, -1]
        leak_rate = sum(np.real(np.vdot(phi, ldl @ phi)) for ldl in red.ldls)
        truncated = bool(leak_rate > 1e-12 * max(red.max_rate, 1.0) * np.real(np.vdot(phi, phi)))
        return events, states, phi / np.linalg.norm(phi), truncated


def sample_trajectory(
    model: LindbladModel, ket0: Ket, t_max: float, seed: int, tol: float = DEFAULT_TOL
) -> JumpRecord:
    """Sample one quantum trajectory up to ``t_max``; deterministic given seed."""
    if t_max <= 0:
        raise ConfigError("t_max must be positive")
    red = _ReducedModel(model, ket0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    events, _, phi, truncated = _run_trajectory(
        red, np.array([0.0, t_max]), rng, tol
    )
    final = Ket(model.layout, red.to_full(phi)).unit()
    return JumpRecord(events=tuple(events), final_ket=final, seed=int(seed), truncated=truncated)


def trajectory_average(
    model: LindbladModel,
    ket0: Ket,
    n: int,
    t_grid,
    seed: int,
    tol: float = DEFAULT_TOL,
    progress: Callable[[int], None] | None = None,
) -> list[DensityMatrix]:
    """Empirical average of |φ(t)⟩⟨φ(t)| over ``n`` trajectories.

    Sub-seeds are spawned deterministically from ``seed``, so the aggregate
    is reproducible and independent of any execution interleaving.
    """
    if n < 1:
        raise ConfigError("need at least one trajectory")
    t = _check_grid(t_grid)
    red = _ReducedModel(model, ket0)
    k = red.heff.shape[0]
    acc = np.zeros((len(t), k, k), dtype=complex)
    children = np.random.SeedSequence(seed).spawn(n)
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        _, states, _, _ = _run_trajectory(red, t, rng, tol)
        acc += states[:, :, None] * states[:, None, :].conj()
        if progress is not None:
            progress(i + 1)
    acc /= n
    out = []
    for m in acc:
        full = red.v @ m @ red.v.conj().T if red.v is not None else m
        out.append(DensityMatrix(model.layout, (full + full.conj().T) / 2))
    return out
