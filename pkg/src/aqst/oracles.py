"""Closed-form references for the transfer dynamics.

Everything here is analytic (or exact term-by-term integration of analytic
expressions) and independent of the ODE solvers, so these functions serve as
test oracles for the dynamics module and as fast stand-ins during parameter
scans.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, NumericalError
from .hilbert import DensityMatrix
from .protocols import build_minimal_jump

__all__ = [
    "minimal_rho",
    "convergence_rate",
    "CascadedCoefficients",
    "cascaded_coefficients",
    "CascadedInfidelity",
    "cascaded_infidelity",
    "cqed_phase_and_infidelity",
    "cqed_quasi_steady",
    "RemovableDegeneracyError",
]


class RemovableDegeneracyError(NumericalError):
    """Exponents of the cascaded closed form collide (measure-zero parameter set).

    The partial-fraction solution is singular when κ_a/2 equals κ′ or γ′ (or
    the damping is exactly critical).  Perturb γ by ~1e-6 relative and retry.
    """


def minimal_rho(t: float, kappa: float, alpha: complex, beta: complex) -> DensityMatrix:
    """Exact mixed-state evolution of the minimal jump-only transfer.

    ρ(t) = e^{−κt} ρ_initial + (1 − e^{−κt}) ρ_target on the [A:3, B:3]
    layout, with the usual level convention (|0⟩,|1⟩,|vac⟩).
    """
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    inst = build_minimal_jump(kappa)
    rho_i = inst.encode(alpha, beta).to_density_matrix().matrix
    rho_f = inst.target(alpha, beta).to_density_matrix().matrix
    p = np.exp(-kappa * float(t))
    return DensityMatrix(inst.model.layout, p * rho_i + (1.0 - p) * rho_f)


def convergence_rate(omega: float, gamma: float) -> float:
    """Slowest relaxation rate of the reservoir-mediated transfer.

    Re[γ − √(γ² − 16Ω²)]/2: equals γ/2 in the underdamped/critical regime
    (γ ≤ 4Ω) and approaches the adiabatic-elimination value 4Ω²/γ for
    γ ≫ Ω.
    """
    if omega <= 0 or gamma <= 0:
        raise ConfigError("omega and gamma must be positive")
    disc = np.lib.scimath.sqrt(gamma**2 - 16.0 * omega**2)
    return float(np.real(gamma - disc) / 2.0)


@dataclass(frozen=True)
class CascadedCoefficients:
    """Closed-form mode amplitudes of the cascaded chain's no-jump evolution.

    The three amplitude functions (sender coherence C₁ on cavity a, C₂ on
    cavity b, C₃ on the loaded receiver) are sums of three decaying
    exponentials with rates κ_a/2, κ′, γ′.  ``regime`` classifies the
    receiver damping by the sign of (κ_b+γ)² − 8γκ_b; the x/y/z amplitudes
    obey the sum rules x+y+z = 1 enforced at construction.
    """

    lam: float
    kappa_a: float
    kappa_b: float
    gamma: float
    kappa_prime: complex
    gamma_prime: complex
    x2: complex
    y2: complex
    z2: complex
    x3: complex
    y3: complex
    z3: complex
    regime: str

    def __post_init__(self):
        for x, y, z, tag in ((self.x2, self.y2, self.z2, "2"), (self.x3, self.y3, self.z3, "3")):
            dev = abs(x + y + z - 1.0)
            if dev > 1e-10:
                raise NumericalError(f"sum rule x{tag}+y{tag}+z{tag} = 1 violated by {dev:.3e}")

    def c1(self, t):
        t = np.asarray(t, dtype=float)
        return -2j * self.lam / self.kappa_a * (1.0 - np.exp(-self.kappa_a * t / 2.0))

    def c2(self, t):
        t = np.asarray(t, dtype=float)
        pre = 2j * self.lam / np.sqrt(self.kappa_a * self.kappa_b)
        return pre * (
            1.0
            - self.x2 * np.exp(-self.kappa_a * t / 2.0)
            - self.y2 * np.exp(-self.kappa_prime * t)
            - self.z2 * np.exp(-self.gamma_prime * t)
        )

    def c3(self, t):
        t = np.asarray(t, dtype=float)
        pre = 2.0 * self.lam / np.sqrt(self.kappa_a * self.gamma)
        return pre * (
            1.0
            - self.x3 * np.exp(-self.kappa_a * t / 2.0)
            - self.y3 * np.exp(-self.kappa_prime * t)
            - self.z3 * np.exp(-self.gamma_prime * t)
        )

    def waveguide_leak_rate(self, t):
        """|√κ_a C₁ + √κ_b C₂|²: instantaneous leak into one waveguide channel."""
        return np.abs(
            np.sqrt(self.kappa_a) * self.c1(t) + np.sqrt(self.kappa_b) * self.c2(t)
        ) ** 2


def cascaded_coefficients(
    lam: float, kappa_a: float, kappa_b: float, gamma: float
) -> CascadedCoefficients:
    """Closed-form solution of the cascaded chain's three-amplitude ODE system.

    Assumes impedance matching Ω = √(κ_bγ)/2.  Raises
    :class:`RemovableDegeneracyError` when the exponents collide (κ_a/2
    within 1e-9 relative of κ′ or γ′, or exactly critical damping), in which
    case the caller should perturb γ by ~1e-6 relative.
    """
    if min(lam, kappa_a, kappa_b, gamma) <= 0:
        raise ConfigError("all rates must be positive")
    s = kappa_b + gamma
    disc_sq = s * s - 8.0 * gamma * kappa_b
    if disc_sq > 0:
        regime = "overdamped"
    elif disc_sq < 0:
        regime = "underdamped"
    else:
        regime = "critical"
    disc = np.lib.scimath.sqrt(disc_sq)
    kappa_prime = (s - disc) / 4.0
    gamma_prime = (s + disc) / 4.0
    if abs(disc) <= 1e-9 * s:
        raise RemovableDegeneracyError(
            "critically damped receiver: kappa' = gamma'; perturb gamma by ~1e-6 relative"
        )
    for rate, name in ((kappa_prime, "kappa'"), (gamma_prime, "gamma'")):
        if abs(kappa_a / 2.0 - rate) <= 1e-9 * abs(rate):
            raise RemovableDegeneracyError(
                f"kappa_a/2 collides with {name}; perturb gamma by ~1e-6 relative"
            )
    den = 2.0 * kappa_b * gamma + kappa_a**2 - kappa_a * kappa_b - kappa_a * gamma
    if den == 0.0:
        raise RemovableDegeneracyError(
            "kappa_a/2 collides with an exponent pair; perturb gamma by ~1e-6 relative"
        )
    x2 = 2.0 * kappa_b * (gamma - kappa_a) / den
    x3 = 2.0 * kappa_b * gamma / den
    coeffs = {}
    for x, tag in ((x2, "2"), (x3, "3")):
        ratio = (s + (2.0 * kappa_a - s) * x) / disc
        coeffs[f"y{tag}"] = 0.5 * ((1.0 - x) + ratio)
        coeffs[f"z{tag}"] = 0.5 * ((1.0 - x) - ratio)
    return CascadedCoefficients(
        lam=lam,
        kappa_a=kappa_a,
        kappa_b=kappa_b,
        gamma=gamma,
        kappa_prime=complex(kappa_prime),
        gamma_prime=complex(gamma_prime),
        x2=complex(x2),
        y2=complex(coeffs["y2"]),
        z2=complex(coeffs["z2"]),
        x3=complex(x3),
        y3=complex(coeffs["y3"]),
        z3=complex(coeffs["z3"]),
        regime=regime,
    )


@dataclass(frozen=True)
class CascadedInfidelity:
    """Transfer infidelity of the cascaded chain, four ways.

    ``analytic`` integrates the closed-form waveguide leak exactly term by
    term; ``quadrature`` is the adaptive-quadrature cross-check of the same
    integrand.  ``stiff_limit`` is the γ ≫ Ω closed form
    2λ²/(κ_b(κ_a+2κ_b)); ``stiff_limit_quarter`` is the competing variant
    smaller by exactly 4×, kept because both are in circulation — the exact
    integral arbitrates between them (it approaches ``stiff_limit``).
    """

    analytic: float
    quadrature: float
    stiff_limit: float
    stiff_limit_quarter: float


def cascaded_infidelity(
    lam: float, kappa_a: float, kappa_b: float, gamma: float
) -> CascadedInfidelity:
    """Total waveguide-leak probability ∫|√κ_a C₁ + √κ_b C₂|² dt.

    The integrand is the single-component leak rate at unit amplitude; both
    logical channels leak identically, so for a normalized logical pair the
    total is (|α|²+|β|²) = 1 times this integral.
    """
    co = cascaded_coefficients(lam, kappa_a, kappa_b, gamma)
    # sqrt(ka) C1 + sqrt(kb) C2 = (2i lam/sqrt(ka)) * sum_i c_i exp(-r_i t)
    cs = np.array([1.0 - co.x2, -co.y2, -co.z2], dtype=complex)
    rs = np.array([kappa_a / 2.0, co.kappa_prime, co.gamma_prime], dtype=complex)
    pair_sums = cs[:, None] * cs.conj()[None, :] / (rs[:, None] + rs.conj()[None, :])
    analytic = float(4.0 * lam**2 / kappa_a * np.real(pair_sums.sum()))
    slowest = min(np.real(r) for r in rs)
    if slowest <= 0:
        raise NumericalError("non-decaying exponent in cascaded closed form")
    t_cut = 60.0 / slowest
    quadrature, _ = quad(lambda t: co.waveguide_leak_rate(t), 0.0, t_cut, limit=400)
    stiff = 2.0 * lam**2 / (kappa_b * (kappa_a + 2.0 * kappa_b))
    return CascadedInfidelity(
        analytic=analytic,
        quadrature=float(quadrature),
        stiff_limit=stiff,
        stiff_limit_quarter=stiff / 4.0,
    )


class CqedPhaseInfidelity(NamedTuple):
    eta_avg: float
    infidelity_raw: float
    infidelity_corrected: float


def cqed_phase_and_infidelity(
    chi_b: float, kappa: float, omega: float | None = None
) -> CqedPhaseInfidelity:
    """Jump-timing phase error of the dispersive transfer, in closed form.

    The logical components ride intermediate levels split by χ_b, so the
    relative phase of the transferred superposition depends on when the
    reservoir jump happened.  Averaged over jump times the phase is
    η̄ = χ_b/2κ, the raw equator infidelity is χ_b²/2κ², and re-centering
    the target by η̄ leaves χ_b²/4κ².  Ω is accepted for signature
    compatibility but the result is Ω-independent.
    """
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    if chi_b < 0:
        raise ConfigError("chi_b must be non-negative")
    if chi_b >= kappa:
        warnings.warn(
            f"chi_b/kappa = {chi_b / kappa:.3g} >= 1: outside the dispersive expansion",
            stacklevel=2,
        )
    r = chi_b / kappa
    return CqedPhaseInfidelity(r / 2.0, r**2 / 2.0, r**2 / 4.0)


class QuasiSteadyAmplitudes(NamedTuple):
    """No-jump amplitudes of an equator state in the Ω ≪ κ limit.

    ``source_0/1`` are the sender components, ``intermediate_0/1`` the
    reservoir-excited components they feed; each pair carries the complex
    rate 2Ω²/(κ ∓ iχ_b) whose imaginary part is the jump-phase drift.
    """

    source_0: complex
    source_1: complex
    intermediate_0: complex
    intermediate_1: complex


def cqed_quasi_steady(t, omega: float, kappa: float, chi_b: float) -> QuasiSteadyAmplitudes:
    """Quasi-steady no-jump solution for an initial equator superposition.

    After the fast transient (∼1/κ) each intermediate amplitude locks to
    ∓2iΩ/(κ ∓ iχ_b) times its slowly decaying source; the logical-0 branch
    sits at phase +χ_b/κ relative to −i, the logical-1 branch mirrored.
    Warns when Ω/κ > 0.2, where the adiabatic elimination degrades.
    """
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    if omega / kappa > 0.2:
        warnings.warn(
            f"Omega/kappa = {omega / kappa:.3g} > 0.2: quasi-steady limit degraded",
            stacklevel=2,
        )
    t = np.asarray(t, dtype=float)
    amps = []
    for sign in (+1.0, -1.0):
        pole = kappa - 1j * sign * chi_b
        source = np.exp(-2.0 * omega**2 * t / pole) / np.sqrt(2.0)
        inter = source * (-2j * omega / pole) * (1.0 - np.exp(-pole * t / 2.0))
        amps.extend([source, inter])
    return QuasiSteadyAmplitudes(amps[0], amps[2], amps[1], amps[3])
