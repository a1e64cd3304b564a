"""Composite-Hilbert-space algebra.

Dense tensor construction, operator embedding, partial trace, expectation
values and Uhlmann fidelity.  Every other module builds on the three value
types defined here (:class:`Operator`, :class:`Ket`, :class:`DensityMatrix`),
all of which carry a :class:`HilbertLayout` describing the ordered mode
structure of the composite space.

Everything is dense and immutable; the largest model in the package is
162-dimensional, so there is no need for sparse or tensor-network
representations (total dimensions are capped at 1024).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigError

__all__ = [
    "HilbertLayout",
    "Operator",
    "Ket",
    "DensityMatrix",
    "basis_ket",
    "tensor",
    "embed",
    "partial_trace",
    "uhlmann_fidelity",
    "expectation",
    "trace_distance",
]

MAX_TOTAL_DIM = 1024

# Construction-time tolerances for the physical-state checks.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered list of tensor factors ("modes") making up a composite space.

    Parameters
    ----------
    modes:
        Sequence of ``(label, dim)`` pairs.  Labels must be unique and every
        dimension at least 2.  The order fixes the tensor-factor order of all
        matrices and vectors built on this layout.
    """

    modes: tuple[tuple[str, int], ...]

    def __init__(self, modes: Iterable[tuple[str, int]]):
        object.__setattr__(self, "modes", tuple((str(l), int(d)) for l, d in modes))
        labels = [l for l, _ in self.modes]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate mode labels in layout: {labels}")
        for l, d in self.modes:
            if d < 2:
                raise ConfigError(f"mode {l!r} has dim {d}; every mode needs dim >= 2")
        if self.total_dim > MAX_TOTAL_DIM:
            raise ConfigError(
                f"total dimension {self.total_dim} exceeds supported cap {MAX_TOTAL_DIM}"
            )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.modes)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims)) if self.modes else 1

    def axis(self, label: str) -> int:
        """Position of ``label`` in the mode list."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigError(f"unknown mode label {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.axis(label)]

    def basis_index(self, occupation: Sequence[int]) -> int:
        """Flat index of a product basis state given one index per mode."""
        if len(occupation) != len(self.modes):
            raise ConfigError(
                f"need {len(self.modes)} occupation numbers, got {len(occupation)}"
            )
        return int(np.ravel_multi_index(tuple(occupation), self.dims))

    def __add__(self, other: "HilbertLayout") -> "HilbertLayout":
        collisions = set(self.labels) & set(other.labels)
        if collisions:
            raise ConfigError(f"label collision between layouts: {sorted(collisions)}")
        return HilbertLayout(self.modes + other.modes)

    def __repr__(self) -> str:
        inner = ", ".join(f"{l}:{d}" for l, d in self.modes)
        return f"HilbertLayout({inner})"


def _check_layout_match(a, b, what: str) -> None:
    if a.layout != b.layout:
        raise ConfigError(f"layout mismatch in {what}: {a.layout} vs {b.layout}")


@dataclass(frozen=True)
class Operator:
    """Dense square matrix on a composite space."""

    layout: HilbertLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = _frozen(self.matrix)
        n = self.layout.total_dim
        if m.shape != (n, n):
            raise ConfigError(f"operator shape {m.shape} does not match layout dim {n}")
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_layout_match(self, other, "operator product")
        return Operator(self.layout, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        _check_layout_match(self, other, "operator sum")
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_layout_match(self, other, "operator difference")
        return Operator(self.layout, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.layout, self.matrix * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Ket:
    """Dense state vector.

    The ``normalized`` flag is an assertion by the constructor's caller;
    when set, the norm is checked to 1e-12.  Unnormalized kets (no-jump
    trajectory states, scratch vectors) simply leave it unset.
    """

    layout: HilbertLayout
    amplitudes: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        v = _frozen(self.amplitudes).reshape(-1)
        n = self.layout.total_dim
        if v.shape != (n,):
            raise ConfigError(f"ket length {v.shape[0]} does not match layout dim {n}")
        if self.normalized and abs(np.vdot(v, v).real - 1.0) >= 1e-12:
            raise ConfigError(
                f"ket flagged normalized but ||psi||^2 = {np.vdot(v, v).real!r}"
            )
        object.__setattr__(self, "amplitudes", v)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def unit(self) -> "Ket":
        """Return the normalized copy of this ket."""
        n = self.norm
        if n == 0.0:
            raise ConfigError("cannot normalize the zero ket")
        return Ket(self.layout, self.amplitudes / n, normalized=True)

    def to_density_matrix(self) -> "DensityMatrix":
        v = self.unit().amplitudes
        return DensityMatrix(self.layout, np.outer(v, v.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Dense Hermitian density matrix.

    Construction enforces Hermiticity (1e-10 in max-norm) and, for physical
    states, unit trace to 1e-9 and positivity down to -1e-9 on the minimum
    eigenvalue.  Violations are reported as errors, never clipped: a negative
    eigenvalue at the 1e-6 level is an integrator bug, not noise to hide.
    """

    layout: HilbertLayout
    matrix: np.ndarray = field(repr=False)
    physical: bool = True

    def __post_init__(self):
        m = _frozen(self.matrix)
        n = self.layout.total_dim
        if m.shape != (n, n):
            raise ConfigError(f"density matrix shape {m.shape} does not match dim {n}")
        herm_dev = float(np.max(np.abs(m - m.conj().T)))
        if herm_dev >= HERMITICITY_TOL:
            raise ConfigError(f"density matrix not Hermitian: max deviation {herm_dev:.3e}")
        if self.physical:
            tr = m.trace()
            if abs(tr - 1.0) >= TRACE_TOL:
                raise ConfigError(f"density matrix trace {tr!r} is not 1 within {TRACE_TOL}")
            lo = float(np.linalg.eigvalsh(m)[0])
            if lo < -POSITIVITY_TOL:
                raise ConfigError(
                    f"density matrix has negative eigenvalue {lo:.3e} beyond -{POSITIVITY_TOL}"
                )
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> complex:
        return complex(self.matrix.trace())


State = Union[Ket, DensityMatrix]


def basis_ket(layout: HilbertLayout, occupation: Sequence[int]) -> Ket:
    """Product basis state with the given per-mode indices."""
    v = np.zeros(layout.total_dim, dtype=complex)
    v[layout.basis_index(occupation)] = 1.0
    return Ket(layout, v, normalized=True)


def tensor(a, b):
    """Kronecker product of two operators (or two kets) on disjoint layouts.

    The result lives on the concatenated layout ``a.layout + b.layout``;
    label collisions are rejected with both offending labels named.
    """
    layout = a.layout + b.layout
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(layout, np.kron(a.matrix, b.matrix))
    if isinstance(a, Ket) and isinstance(b, Ket):
        return Ket(
            layout,
            np.kron(a.amplitudes, b.amplitudes),
            normalized=a.normalized and b.normalized,
        )
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def embed(op: np.ndarray | Operator, target_label: str, layout: HilbertLayout) -> Operator:
    """Embed a single-mode operator into ``layout``, identity elsewhere.

    Parameters
    ----------
    op:
        Square matrix (or single-mode :class:`Operator`) acting on the mode
        named ``target_label``.
    target_label:
        Which mode of ``layout`` the operator acts on.
    layout:
        The composite layout of the result.

    Returns
    -------
    Operator
        ``I ⊗ ... ⊗ op ⊗ ... ⊗ I`` respecting the layout's mode order.
    """
    m = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    axis = layout.axis(target_label)
    d = layout.dims[axis]
    if m.shape != (d, d):
        raise ConfigError(
            f"operator shape {m.shape} does not match mode {target_label!r} of dim {d}"
        )
    left = int(np.prod(layout.dims[:axis])) if axis else 1
    right = int(np.prod(layout.dims[axis + 1 :])) if axis + 1 < len(layout.dims) else 1
    full = np.kron(np.kron(np.eye(left), m), np.eye(right))
    return Operator(layout, full)


def partial_trace(rho: DensityMatrix, keep_labels: Sequence[str]) -> DensityMatrix:
    """Reduced density matrix on ``keep_labels``, in layout order.

    The kept modes appear in the order they occupy in the original layout
    regardless of the order given in ``keep_labels``.  Trace is preserved.
    """
    layout = rho.layout
    keep_axes = sorted(layout.axis(l) for l in keep_labels)
    if len(set(keep_axes)) != len(keep_labels):
        raise ConfigError(f"duplicate labels in keep_labels: {list(keep_labels)}")
    dims = layout.dims
    nmodes = len(dims)
    t = rho.matrix.reshape(dims + dims)
    # Trace out the complementary axes pairwise, highest axis first so the
    # remaining axis numbers stay valid.
    for ax in sorted(set(range(nmodes)) - set(keep_axes), reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + (t.ndim // 2))
    kept = HilbertLayout([layout.modes[ax] for ax in keep_axes])
    d = kept.total_dim
    return DensityMatrix(kept, t.reshape(d, d), physical=rho.physical)


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Matrix square root of a PSD Hermitian matrix via eigendecomposition."""
    w, v = np.linalg.eigh(m)
    if w[0] < -POSITIVITY_TOL:
        raise ConfigError(f"matrix not positive semidefinite: min eigenvalue {w[0]:.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _purity_vector(rho: DensityMatrix) -> np.ndarray | None:
    """Return the state vector if rho is pure (to high accuracy), else None."""
    w, v = np.linalg.eigh(rho.matrix)
    if w[-1] > 1.0 - 1e-12 and abs(w[:-1]).max(initial=0.0) < 1e-12:
        return v[:, -1]
    return None


def uhlmann_fidelity(rho: State, sigma: State) -> float:
    """Uhlmann fidelity F(ρ,σ) = [Tr √(√ρ σ √ρ)]², in [0, 1].

    Kets are accepted for either argument and treated as pure states, in
    which case the general formula reduces to ⟨φ|ρ|φ⟩ (or |⟨φ|ψ⟩|² for two
    kets) and is evaluated that way directly.
    """
    _check_layout_match(rho, sigma, "uhlmann_fidelity")
    if isinstance(rho, Ket) and isinstance(sigma, Ket):
        a, b = rho.unit().amplitudes, sigma.unit().amplitudes
        return min(1.0, float(abs(np.vdot(a, b)) ** 2))
    if isinstance(rho, Ket):
        rho, sigma = sigma, rho
    if isinstance(sigma, Ket):
        phi = sigma.unit().amplitudes
        val = float(np.real(phi.conj() @ rho.matrix @ phi))
        return min(1.0, max(0.0, val))
    # Both mixed; try the pure shortcut before paying for two eigh calls.
    phi = _purity_vector(sigma)
    if phi is None:
        phi = _purity_vector(rho)
        if phi is not None:
            rho, sigma = sigma, rho
    if phi is not None:
        val = float(np.real(phi.conj() @ rho.matrix @ phi))
        return min(1.0, max(0.0, val))
    sr = _sqrtm_psd(rho.matrix)
    inner = _sqrtm_psd(sr @ sigma.matrix @ sr)
    val = float(np.real(inner.trace())) ** 2
    return min(1.0, max(0.0, val))


def expectation(state: State, op: Operator) -> complex:
    """⟨ψ|op|ψ⟩ for a ket, Tr(op ρ) for a density matrix."""
    _check_layout_match(state, op, "expectation")
    if isinstance(state, Ket):
        v = state.amplitudes
        return complex(np.vdot(v, op.matrix @ v))
    return complex((op.matrix @ state.matrix).trace())


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """T(ρ,σ) = ½‖ρ − σ‖₁, evaluated from the eigenvalues of ρ − σ."""
    _check_layout_match(rho, sigma, "trace_distance")
    w = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(0.5 * np.sum(np.abs(w)))
