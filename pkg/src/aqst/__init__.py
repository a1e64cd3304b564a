"""Autonomous quantum state transfer by engineered dissipation.

Subpackages by responsibility:

- :mod:`aqst.hilbert` — composite-space algebra (tensor, embed, partial
  trace, fidelity).
- :mod:`aqst.dynamics` — Lindblad master equation, non-Hermitian no-jump
  propagation and quantum-trajectory sampling.
- :mod:`aqst.protocols` — builders for the transfer protocols (minimal jump
  and reservoir models, the cascaded waveguide chain, the bilinear-coupling
  variant).
- :mod:`aqst.cqed` — circuit-QED realization: parameter derivation from
  junction participations and the reduced two-qutrit-plus-readout model.
- :mod:`aqst.oracles` — closed-form references the numerics are tested
  against.
- :mod:`aqst.diagnostics` — dark-manifold checks, orthogonality tracking,
  separability decomposition, decay-rate fitting.
- :mod:`aqst.harness` — run configs, sweeps, file emission; :mod:`aqst.cli`
  is the command-line front end.
"""

from .hilbert import (
    DensityMatrix,
    HilbertLayout,
    Ket,
    Operator,
    basis_ket,
    embed,
    expectation,
    partial_trace,
    tensor,
    trace_distance,
    uhlmann_fidelity,
)

__version__ = "0.1.0"

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
    "__version__",
]
