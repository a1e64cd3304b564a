"""Builders for the autonomous-transfer protocols.

Each builder turns scalar rates into a :class:`ProtocolInstance`: a
LindbladModel together with the logical encoding (``encode`` puts the qubit
in the sender, ``target`` is where it must end up) and a few named auxiliary
states.

Conventions, fixed once here:

- Sender/receiver qutrits use level order (|0⟩, |1⟩, |vac⟩) = indices
  (0, 1, 2).
- The cascaded chain orders its modes A, a, b, B, R; the intermediate cavity
  modes a and b use level order (vac, photon-0, photon-1) = (0, 1, 2).
- Two-level reservoirs use (g, e) = (0, 1), with lowering operator
  r̂ = |g⟩⟨e|.
- The six-qubit bilinear model orders its sites A1 A2 A3 B1 B2 B3 with
  (g, e) = (0, 1) per site.

All rates are angular (rad/μs).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dynamics import LindbladModel
from .errors import ConfigError
from .hilbert import HilbertLayout, Ket, Operator, basis_ket, embed

__all__ = [
    "ProtocolInstance",
    "build_minimal_jump",
    "build_minimal_reservoir",
    "build_cascaded",
    "cascaded_dark_state",
    "build_bilinear",
    "cyclic_permutation_operator",
]

# Qutrit level indices for information-carrying modes.
LVL0, LVL1, VAC = 0, 1, 2


def _logical_pair(alpha: complex, beta: complex) -> tuple[complex, complex]:
    a, b = complex(alpha), complex(beta)
    n = abs(a) ** 2 + abs(b) ** 2
    if n == 0.0:
        raise ConfigError("logical amplitudes (alpha, beta) must not both be zero")
    s = 1.0 / np.sqrt(n)
    return a * s, b * s


@dataclass(frozen=True)
class ProtocolInstance:
    """A concrete transfer protocol: model plus logical encoding.

    ``encode(α, β)`` returns the initial state carrying the logical qubit in
    the sender; ``target(α, β)`` the intended final state.  Both normalize
    the amplitude pair.  ``warnings`` collects out-of-regime notes from the
    builder (never silently clamped parameters).
    """

    name: str
    model: LindbladModel
    encode: Callable[[complex, complex], Ket]
    target: Callable[[complex, complex], Ket]
    aux_states: Mapping[str, Ket] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def layout(self) -> HilbertLayout:
        return self.model.layout


def _superpose(k0: Ket, k1: Ket, alpha: complex, beta: complex) -> Ket:
    a, b = _logical_pair(alpha, beta)
    return Ket(k0.layout, a * k0.amplitudes + b * k1.amplitudes, normalized=True)


def _pair_encoder(k0: Ket, k1: Ket) -> Callable[[complex, complex], Ket]:
    return lambda alpha, beta: _superpose(k0, k1, alpha, beta)


def _ketbra(layout: HilbertLayout, bra_occ, ket_occ) -> np.ndarray:
    m = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    m[layout.basis_index(bra_occ), layout.basis_index(ket_occ)] = 1.0
    return m


# --- minimal models -----------------------------------------------------------


def build_minimal_jump(kappa: float) -> ProtocolInstance:
    """Two qutrits with a single engineered jump moving the qubit A → B.

    The jump L̂ = √κ (|vac,0⟩⟨0,vac| + |vac,1⟩⟨1,vac|) fires exactly once
    per trajectory and transfers both logical components coherently; H = 0.
    """
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    lay = HilbertLayout([("A", 3), ("B", 3)])
    l = np.sqrt(kappa) * (
        _ketbra(lay, (VAC, LVL0), (LVL0, VAC)) + _ketbra(lay, (VAC, LVL1), (LVL1, VAC))
    )
    model = LindbladModel(
        lay,
        Operator(lay, np.zeros((9, 9))),
        [("transfer", Operator(lay, l))],
    )
    enc0, enc1 = basis_ket(lay, (LVL0, VAC)), basis_ket(lay, (LVL1, VAC))
    tgt0, tgt1 = basis_ket(lay, (VAC, LVL0)), basis_ket(lay, (VAC, LVL1))
    return ProtocolInstance(
        name="minimal_jump",
        model=model,
        encode=_pair_encoder(enc0, enc1),
        target=_pair_encoder(tgt0, tgt1),
        aux_states={"vacuum": basis_ket(lay, (VAC, VAC))},
    )


def build_minimal_reservoir(
    omega: float, gamma: float, leg_imbalance: float = 0.0
) -> ProtocolInstance:
    """Transfer mediated by a lossy two-level reservoir R.

    H = Ω(Â₀B̂₀† + Â₁B̂₁†)r̂† + h.c. with the single loss channel √γ r̂.
    ``leg_imbalance`` scales the logical-1 leg's coupling by (1 + ε); the
    intact protocol has ε = 0, and a nonzero value is the deliberate
    negative control for the orthogonality diagnostics.
    """
    if omega < 0 or gamma <= 0:
        raise ConfigError("omega must be >= 0 and gamma > 0")
    lay = HilbertLayout([("A", 3), ("B", 3), ("R", 2)])
    h = np.zeros((18, 18), dtype=complex)
    for sigma, scale in ((LVL0, 1.0), (LVL1, 1.0 + leg_imbalance)):
        # |sigma_A, vac_B, g> -> |vac_A, sigma_B, e>
        term = omega * scale * _ketbra(lay, (VAC, sigma, 1), (sigma, VAC, 0))
        h += term + term.conj().T
    r = embed(np.array([[0, 1], [0, 0]]), "R", lay)
    model = LindbladModel(
        lay, Operator(lay, h), [("reservoir", Operator(lay, np.sqrt(gamma) * r.matrix))]
    )
    enc0, enc1 = basis_ket(lay, (LVL0, VAC, 0)), basis_ket(lay, (LVL1, VAC, 0))
    tgt0, tgt1 = basis_ket(lay, (VAC, LVL0, 0)), basis_ket(lay, (VAC, LVL1, 0))
    return ProtocolInstance(
        name="minimal_reservoir",
        model=model,
        encode=_pair_encoder(enc0, enc1),
        target=_pair_encoder(tgt0, tgt1),
        aux_states={"vacuum": basis_ket(lay, (VAC, VAC, 0))},
    )


# --- cascaded chain -------------------------------------------------------------


def _cascaded_layout() -> HilbertLayout:
    return HilbertLayout([("A", 3), ("a", 3), ("b", 3), ("B", 3), ("R", 2)])


def build_cascaded(
    lam: float, kappa_a: float, kappa_b: float, omega: float, gamma: float
) -> ProtocolInstance:
    """Directional chain: sender A → cavity a → waveguide → cavity b → B.

    The waveguide is eliminated into the cascaded jump operators
    L̂_σ = √κ_a â_σ + √κ_b b̂_σ, one per logical component σ; receiving uses
    the same reservoir scheme as the minimal model (rate Ω, loss γ).  The
    interference term H_ab = (i/2)√(κ_aκ_b) Σ_σ (â_σ†b̂_σ − â_σb̂_σ†) makes
    the coupling strictly one-way, which is asserted by the stationarity of
    target states.

    Total excitation number is conserved by H and lowered by the jumps, so
    the two-photon ancilla levels are unreachable from the logical manifold;
    this is asserted at build time rather than assumed.
    """
    if lam < 0:
        raise ConfigError("lam must be non-negative (zero freezes the sender)")
    if min(kappa_a, kappa_b, omega, gamma) <= 0:
        raise ConfigError("kappa_a, kappa_b, omega, gamma must be positive")
    lay = _cascaded_layout()
    d = lay.total_dim

    def mode_lower(label: str, photon_level: int) -> np.ndarray:
        # |vac><photon| on one ancilla mode, embedded
        m = np.zeros((3, 3), dtype=complex)
        m[0, photon_level] = 1.0
        return embed(m, label, lay).matrix

    h = np.zeros((d, d), dtype=complex)
    ls = {}
    for sigma in (LVL0, LVL1):
        pl = sigma + 1  # ancilla level holding photon sigma
        a_low = mode_lower("a", pl)
        b_low = mode_lower("b", pl)
        # sender: lambda (a_sigma^dag A_sigma + h.c.)
        asig = np.zeros((3, 3), dtype=complex)
        asig[VAC, sigma] = 1.0  # |vac><sigma| on A
        term = lam * (a_low.conj().T @ embed(asig, "A", lay).matrix)
        h += term + term.conj().T
        # waveguide interference: (i/2) sqrt(ka kb) (a^dag b - a b^dag)
        h += 0.5j * np.sqrt(kappa_a * kappa_b) * (
            a_low.conj().T @ b_low - a_low @ b_low.conj().T
        )
        # receiver: Omega (b_sigma B_sigma^dag r^dag + h.c.)
        bsig_raise = np.zeros((3, 3), dtype=complex)
        bsig_raise[sigma, VAC] = 1.0  # |sigma><vac| on B
        r_raise = np.array([[0, 0], [1, 0]], dtype=complex)
        term = omega * (
            embed(bsig_raise, "B", lay).matrix
            @ embed(r_raise, "R", lay).matrix
            @ b_low
        )
        h += term + term.conj().T
        ls[f"waveguide_{sigma}"] = np.sqrt(kappa_a) * a_low + np.sqrt(kappa_b) * b_low
    r_low = embed(np.array([[0, 1], [0, 0]]), "R", lay).matrix
    ls["reservoir"] = np.sqrt(gamma) * r_low

    # Excitation bookkeeping: logical levels, ancilla photons and loaded B all
    # carry one excitation; H must conserve it and every jump lower it by <= 1.
    n_info = np.diag([1.0, 1.0, 0.0])
    n_photon = np.diag([0.0, 1.0, 1.0])
    n_op = (
        embed(n_info, "A", lay).matrix
        + embed(n_photon, "a", lay).matrix
        + embed(n_photon, "b", lay).matrix
        + embed(n_info, "B", lay).matrix
    )
    if np.max(np.abs(h @ n_op - n_op @ h)) > 1e-12 * max(1.0, np.max(np.abs(h))):
        raise ConfigError("cascaded Hamiltonian does not conserve excitation number")
    eye = np.eye(d)
    for label, l in ls.items():
        drop = 1.0 if label.startswith("waveguide") else 0.0
        if np.max(np.abs(n_op @ l - l @ (n_op - drop * eye))) > 1e-12:
            raise ConfigError(f"jump {label!r} breaks excitation bookkeeping")

    model = LindbladModel(
        lay,
        Operator(lay, h),
        [(lbl, Operator(lay, m)) for lbl, m in ls.items()],
    )
    vac_rest = (VAC, 0, 0, VAC, 0)
    enc0 = basis_ket(lay, (LVL0, 0, 0, VAC, 0))
    enc1 = basis_ket(lay, (LVL1, 0, 0, VAC, 0))
    tgt0 = basis_ket(lay, (VAC, 0, 0, LVL0, 0))
    tgt1 = basis_ket(lay, (VAC, 0, 0, LVL1, 0))
    return ProtocolInstance(
        name="cascaded",
        model=model,
        encode=_pair_encoder(enc0, enc1),
        target=_pair_encoder(tgt0, tgt1),
        aux_states={"vacuum": basis_ket(lay, vac_rest)},
    )


def cascaded_dark_state(
    instance: ProtocolInstance,
    lam: float,
    kappa_a: float,
    kappa_b: float,
    gamma: float,
    alpha: complex,
    beta: complex,
) -> Ket:
    """Meta-stable state the cascaded chain converges into before the final jump.

    Per logical component: amplitude 1 on the sender level, −2iλ/κ_a on the
    a-photon, 2iλ/√(κ_aκ_b) on the b-photon, and 2λ/√(κ_aγ) on the loaded
    receiver with the reservoir excited.  Dark to both waveguide channels to
    first order in λ; leaks only through the reservoir at rate 4λ²/κ_a.
    Valid for λ ≪ κ_a (warns above λ/κ_a = 0.2); normalized.
    """
    if lam / kappa_a > 0.2:
        warnings.warn(
            f"cascaded dark state requested at lambda/kappa_a = {lam / kappa_a:.3g} > 0.2; "
            "the leading-order coefficients degrade there",
            stacklevel=2,
        )
    lay = instance.model.layout
    c1 = -2j * lam / kappa_a
    c2 = 2j * lam / np.sqrt(kappa_a * kappa_b)
    c3 = 2 * lam / np.sqrt(kappa_a * gamma)
    a, b = _logical_pair(alpha, beta)
    v = np.zeros(lay.total_dim, dtype=complex)
    for sigma, amp in ((LVL0, a), (LVL1, b)):
        pl = sigma + 1
        v[lay.basis_index((sigma, 0, 0, VAC, 0))] += amp
        v[lay.basis_index((VAC, pl, 0, VAC, 0))] += amp * c1
        v[lay.basis_index((VAC, 0, pl, VAC, 0))] += amp * c2
        v[lay.basis_index((VAC, 0, 0, sigma, 1))] += amp * c3
    return Ket(lay, v).unit()


# --- bilinear six-qubit model ----------------------------------------------------


_BILINEAR_LABELS = ("A1", "A2", "A3", "B1", "B2", "B3")
_OMEGA3 = np.exp(2j * np.pi / 3)
# Chirality amplitude patterns over sites (1, 2, 3), unnormalized.
_CHIRAL = {
    "S": (1.0, 1.0, 1.0),
    "L": (1.0, _OMEGA3, _OMEGA3.conjugate()),
    "R": (1.0, _OMEGA3.conjugate(), _OMEGA3),
}


def _bilinear_layout() -> HilbertLayout:
    return HilbertLayout([(l, 2) for l in _BILINEAR_LABELS])


def _register_ket(lay: HilbertLayout, register: str, kind: str, n_exc: int) -> Ket:
    """Chiral register state (S/L/R, one or two excitations), other register ground.

    Single-excitation states put the pattern on the excited site; the
    two-excitation states carry the same pattern on the *hole* (the one
    ground site), e.g. |R2⟩ ∝ Σ_i ω^{...}_i |hole at i⟩.
    """
    offset = 0 if register == "A" else 3
    weights = _CHIRAL[kind]
    v = np.zeros(lay.total_dim, dtype=complex)
    for site, w in enumerate(weights):
        occ = [0] * 6
        if n_exc == 1:
            occ[offset + site] = 1
        else:
            for other in range(3):
                if other != site:
                    occ[offset + other] = 1
        v[lay.basis_index(occ)] += w
    return Ket(lay, v / np.sqrt(3), normalized=True)


def build_bilinear(omega: float, j_coupling: float, g: float, kappa: float) -> ProtocolInstance:
    """Three-plus-three qubit transfer by collective decay of chiral states.

    Built directly in the frame rotating at the qubit frequency ``omega``
    (accepted for the record; its Σσ_z term vanishes there).  The receiver
    ring carries the exchange coupling J between all B pairs; the sender is
    coupled site-by-site with strength g via Q = Σ_i σ⁻_Ai σ⁺_Bi, and the
    single collective loss is L̂_B = √κ(σ⁻_B1 + σ⁻_B2 + σ⁻_B3).

    The off-resonant g-terms are kept, not dropped: the model itself should
    exhibit (or violate) the g ≪ J rotating-wave argument numerically.
    Builds outside g/J ≤ 0.1 carry a warning in the instance metadata.
    """
    if j_coupling <= 0 or g < 0 or kappa <= 0:
        raise ConfigError("bilinear model needs J, kappa > 0 and g >= 0")
    notes: tuple[str, ...] = ()
    if g > 0.1 * j_coupling:
        notes = (f"g/J = {g / j_coupling:.3g} exceeds the dispersive regime bound 0.1",)
        warnings.warn(notes[0], stacklevel=2)
    lay = _bilinear_layout()
    d = lay.total_dim
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    lowers = {l: embed(sm, l, lay).matrix for l in _BILINEAR_LABELS}
    h = np.zeros((d, d), dtype=complex)
    for i in range(3):
        for k in range(i + 1, 3):
            term = j_coupling * (lowers[f"B{i + 1}"].conj().T @ lowers[f"B{k + 1}"])
            h += term + term.conj().T
    for i in range(1, 4):
        term = g * (lowers[f"A{i}"] @ lowers[f"B{i}"].conj().T)
        h += term + term.conj().T
    l_b = np.sqrt(kappa) * sum(lowers[f"B{i}"] for i in (1, 2, 3))
    model = LindbladModel(lay, Operator(lay, h), [("collective_B", Operator(lay, l_b))])

    r1_b = _register_ket(lay, "B", "R", 1)
    enc0 = Ket(lay, _overlay(lay, _register_ket(lay, "A", "S", 1), r1_b), normalized=True)
    enc1 = Ket(lay, _overlay(lay, _register_ket(lay, "A", "R", 1), r1_b), normalized=True)
    tgt0 = r1_b
    tgt1 = _register_ket(lay, "B", "L", 1)
    aux = {
        "vacuum": basis_ket(lay, (0,) * 6),
        "S1_B": _register_ket(lay, "B", "S", 1),
        "L1_B": _register_ket(lay, "B", "L", 1),
        "R1_B": r1_b,
        "S2_B": _register_ket(lay, "B", "S", 2),
        "L2_B": _register_ket(lay, "B", "L", 2),
        "R2_B": _register_ket(lay, "B", "R", 2),
        "S1_A": _register_ket(lay, "A", "S", 1),
        "L1_A": _register_ket(lay, "A", "L", 1),
        "R1_A": _register_ket(lay, "A", "R", 1),
    }
    return ProtocolInstance(
        name="bilinear",
        model=model,
        encode=_pair_encoder(enc0, enc1),
        target=_pair_encoder(tgt0, tgt1),
        aux_states=aux,
        warnings=notes,
    )


def _overlay(lay: HilbertLayout, ket_a: Ket, ket_b: Ket) -> np.ndarray:
    """Combine an A-register state (B ground) with a B-register state (A ground)."""
    ta = ket_a.amplitudes.reshape((2,) * 6)
    tb = ket_b.amplitudes.reshape((2,) * 6)
    # A-register amplitudes live in the B-ground slice and vice versa.
    out = np.tensordot(
        ta[:, :, :, 0, 0, 0].reshape(-1), tb[0, 0, 0].reshape(-1), axes=0
    )
    return out.reshape(-1)


def cyclic_permutation_operator(layout: HilbertLayout) -> Operator:
    """Unitary T cycling the site labels 1→2→3 within A and within B.

    T³ = I; it commutes with the bilinear H and L̂_B, and the chiral states
    are its eigenstates (|L1⟩ picks up e^{i2π/3}).
    """
    if layout.labels != _BILINEAR_LABELS or layout.dims != (2,) * 6:
        raise ConfigError("cyclic permutation is defined on the six-qubit bilinear layout")
    d = layout.total_dim
    m = np.zeros((d, d))
    axes = (1, 2, 0, 4, 5, 3)
    for col in range(d):
        v = np.zeros(d)
        v[col] = 1.0
        m[:, col] = np.transpose(v.reshape((2,) * 6), axes).reshape(-1)
    return Operator(layout, m)
