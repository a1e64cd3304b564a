"""Command-line front end: runs, figure sweeps, derivation and diagnostics.

Every subcommand reads one JSON configuration document (``--config``), writes
through :func:`aqst.harness.emit` when ``--out`` is given, and otherwise
prints a JSON payload to stdout.  Exit codes: 0 success, 1 invalid
configuration, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .cqed import derive_drives, reference_circuit
from .diagnostics import (
    check_dark_manifold,
    check_orthogonality,
    logical_position_decomposition,
)
from .dynamics import evolve_master
from .errors import ConfigError, NumericalError
from .harness import (
    FORMATS,
    RunConfig,
    _build,
    _parse_plain,
    _parse_rate,
    emit,
    rate_from_angular,
    run,
    sweep_fig2c,
    sweep_fig3c,
    sweep_fig3c_inset,
)
from .hilbert import Operator
from .oracles import (
    cascaded_coefficients,
    cascaded_infidelity,
    convergence_rate,
    cqed_phase_and_infidelity,
    minimal_rho,
)
from .protocols import build_minimal_jump

#: jump labels that implement the transfer on purpose — the ones a stored
#: superposition must survive (waveguide and loss channels are excluded
#: from orthogonality schedules because leaking is *supposed* to entangle
#: the logical state with the environment)
ENGINEERED_CHANNELS = ("transfer", "reservoir")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are config errors, exit code 1
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="aqst", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aqst {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_config in (
        ("run", _cmd_run, True),
        ("sweep-fig2c", _cmd_fig2c, False),
        ("sweep-fig3c", _cmd_fig3c, False),
        ("derive", _cmd_derive, False),
        ("oracle", _cmd_oracle, False),
        ("diagnose", _cmd_diagnose, True),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--format", type=str, default=None, choices=FORMATS)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.set_defaults(func=func, needs_config=needs_config)
    return parser


def _load_config(args, default: Mapping[str, Any] | None = None) -> dict[str, Any]:
    if args.config is None:
        if args.needs_config:
            raise ConfigError(f"{args.command}: --config <path> is required")
        return dict(default or {})
    if args.config.lstrip().startswith("{"):
        # inline JSON, same convention as harness.load_record
        text = args.config
    else:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise OSError(f"cannot read {args.config}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{args.config}: top level must be a JSON object")
    return dict(doc)


def _deliver(result, args, default_format: str) -> None:
    if args.out is None:
        print(json.dumps(result.payload(), indent=2))
        return
    fmt = args.format
    if fmt is None:
        suffix = Path(args.out).suffix.lstrip(".").lower()
        fmt = suffix if suffix in FORMATS else default_format
    emit(result, fmt, args.out)


def _cmd_run(args) -> None:
    doc = _load_config(args)
    if args.seed is not None:
        doc["seed"] = args.seed
    record = run(RunConfig.from_document(doc), threads=max(1, args.threads))
    _deliver(record, args, "json")


def _cmd_fig2c(args) -> None:
    doc = _load_config(args)
    known = {"lam_over_kappa_b", "gamma_over_omega"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"sweep-fig2c: unknown key(s) {unknown}; accepted: {sorted(known)}")
    sweep = sweep_fig2c(
        lam_ratios=doc.get("lam_over_kappa_b"),
        gamma_over_omega=doc.get("gamma_over_omega"),
        seed=args.seed if args.seed is not None else 0,
        threads=max(1, args.threads),
    )
    _deliver(sweep, args, "csv")


def _cmd_fig3c(args) -> None:
    doc = _load_config(args)
    known = {"inset", "ratios", "omega_over_kappa", "param_sets", "grid_points"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"sweep-fig3c: unknown key(s) {unknown}; accepted: {sorted(known)}")
    if doc.get("inset"):
        sweep = sweep_fig3c_inset(
            ratios=doc.get("ratios"),
            omega_over_kappa=doc.get("omega_over_kappa", 0.05),
        )
    else:
        sets = doc.get("param_sets")
        if sets is not None:
            parsed = []
            for k, entry in enumerate(sets):
                if not isinstance(entry, Mapping):
                    raise ConfigError(f"param_sets[{k}]: expected an object")
                out: dict[str, Any] = {}
                for key, value in entry.items():
                    if key in ("chi_b", "omega", "kappa", "gamma_up"):
                        out[key] = _parse_rate(f"param_sets[{k}].{key}", value)
                    elif key in ("t1_a", "t1_b"):
                        out[key] = _parse_plain(f"param_sets[{k}].{key}", value)
                    elif key == "label":
                        out[key] = str(value)
                    else:
                        raise ConfigError(f"param_sets[{k}]: unknown key {key!r}")
                parsed.append(out)
            sets = parsed
        sweep = sweep_fig3c(
            param_sets=sets,
            grid_points=doc.get("grid_points", 200),
            threads=max(1, args.threads),
        )
    _deliver(sweep, args, "csv")


class _TablePayload:
    """Adapter so plain dict reports flow through ``emit``/stdout."""

    def __init__(self, doc: Mapping[str, Any]):
        self.doc = dict(doc)

    def payload(self) -> dict[str, Any]:
        return self.doc


def _cmd_derive(args) -> None:
    doc = _load_config(args, default={})
    known = {"phi_bi", "kappa", "xi1", "target_omega"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"derive: unknown key(s) {unknown}; accepted: {sorted(known)}")
    kappa = _parse_rate("kappa", doc["kappa"]) if "kappa" in doc else 2.0 * np.pi
    circuit = reference_circuit(
        phi_bi=doc.get("phi_bi", 0.0141),
        kappa=kappa,
        xi1=doc.get("xi1", 0.3),
    )
    target = doc.get("target_omega", "auto")
    if isinstance(target, str) and target != "auto":
        target = _parse_rate("target_omega", target)
    derived = derive_drives(circuit, target_omega=target)

    rows: list[tuple[str, Any]] = []
    mhz = lambda x: rate_from_angular(float(np.real(x)), "MHz/2pi")
    for name in ("alpha_a", "alpha_b", "alpha_r", "chi_ab", "chi_ar", "chi_br",
                 "stark_a", "stark_b", "stark_r", "omega_rabi_1", "omega_rabi_2",
                 "drive_freq_1", "drive_freq_2", "detuning_1", "detuning_2"):
        rows.append((name, mhz(getattr(derived, name))))
    rows.append(("xi2_solved", abs(derived.xi2_solved)))
    rows.append(("kappa", mhz(circuit.kappa)))
    rows.append(("t1_a_us", circuit.t1_a))
    rows.append(("t1_b_us", circuit.t1_b))

    if args.out is None:
        width = max(len(n) for n, _ in rows)
        print(f"# derived circuit parameters (MHz/2pi unless noted), phi_bi={circuit.phi_b[0]}")
        for name, value in rows:
            print(f"{name:<{width}}  {value: .9g}")
    else:
        _deliver(_TablePayload(dict(rows)), args, "json")


_ORACLE_DEFAULTS = {
    "minimal": {"kappa": "1.0 rad/us", "t": float(np.log(2.0))},
    "reservoir": {"omega": "1.0 rad/us", "gamma": "50.0 rad/us"},
    "cascaded": {
        "lam": "0.02 rad/us",
        "kappa_a": "1.0 rad/us",
        "kappa_b": "1.0 rad/us",
        "gamma": "50.0 rad/us",
    },
    "cqed": {"chi_b": "0.1 rad/us", "kappa": "1.0 rad/us"},
}


def _oracle_values(which: str, doc: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(_ORACLE_DEFAULTS[which])
    merged.update(doc)
    if which == "minimal":
        kappa = _parse_rate("kappa", merged["kappa"])
        t = _parse_plain("t", merged["t"])
        alpha = _parse_plain("alpha", merged.get("alpha", 1.0))
        beta = _parse_plain("beta", merged.get("beta", 0.0))
        rho = minimal_rho(t, kappa, alpha, beta)
        tv = build_minimal_jump(kappa).target(alpha, beta).amplitudes
        return {
            "fidelity": float(np.real(tv.conj() @ rho.matrix @ tv)),
            "survival": float(np.exp(-kappa * t)),
        }
    if which == "reservoir":
        omega = _parse_rate("omega", merged["omega"])
        gamma = _parse_rate("gamma", merged["gamma"])
        return {
            "convergence_rate_rad_us": convergence_rate(omega, gamma),
            "kappa_eff_rad_us": 4.0 * omega**2 / gamma,
        }
    if which == "cascaded":
        lam = _parse_rate("lam", merged["lam"])
        ka = _parse_rate("kappa_a", merged["kappa_a"])
        kb = _parse_rate("kappa_b", merged["kappa_b"])
        gamma = _parse_rate("gamma", merged["gamma"])
        coeff = cascaded_coefficients(lam, ka, kb, gamma)
        infid = cascaded_infidelity(lam, ka, kb, gamma)
        return {
            "regime": coeff.regime,
            "kappa_prime": _complex_or_float(coeff.kappa_prime),
            "gamma_prime": _complex_or_float(coeff.gamma_prime),
            "analytic_infidelity": infid.analytic,
            "quadrature_infidelity": infid.quadrature,
            "stiff_limit": infid.stiff_limit,
            "stiff_limit_quarter": infid.stiff_limit_quarter,
        }
    chi_b = _parse_rate("chi_b", merged["chi_b"])
    kappa = _parse_rate("kappa", merged["kappa"])
    est = cqed_phase_and_infidelity(chi_b, kappa)
    return {
        "average_phase": est.eta_avg,
        "infidelity_raw": est.infidelity_raw,
        "infidelity_corrected": est.infidelity_corrected,
    }


def _complex_or_float(z) -> Any:
    z = complex(z)
    return z.real if z.imag == 0.0 else [z.real, z.imag]


def _cmd_oracle(args) -> None:
    doc = _load_config(args, default={})
    which = doc.pop("which", None)
    if which is None:
        report = {name: _oracle_values(name, {}) for name in _ORACLE_DEFAULTS}
    elif which in _ORACLE_DEFAULTS:
        report = {which: _oracle_values(which, doc)}
    else:
        raise ConfigError(
            f"oracle: unknown family {which!r}; accepted: {sorted(_ORACLE_DEFAULTS)}"
        )
    _deliver(_TablePayload(report), args, "json")


def _cmd_diagnose(args) -> None:
    doc = _load_config(args)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = RunConfig.from_document(doc)
    inst, slowest = _build(config)
    t_max = config.t_max if config.t_max is not None else 20.0 / slowest

    targets = [inst.target(1.0, 0.0), inst.target(0.0, 1.0)]
    initials = [inst.encode(1.0, 0.0), inst.encode(0.0, 1.0)]
    dark_t = check_dark_manifold(inst.model, targets)
    dark_i = check_dark_manifold(inst.model, initials)

    grid = np.linspace(0.0, t_max, 64)
    engineered = [lbl for lbl, _ in inst.model.jumps if lbl in ENGINEERED_CHANNELS]
    schedule = [(t_max * (k + 1) / (len(engineered) + 1), lbl)
                for k, lbl in enumerate(engineered)]
    pair = (inst.encode(1.0, 1.0), inst.encode(1.0, -1.0))
    overlaps = check_orthogonality(inst.model, pair, grid, jump_schedule=schedule)

    alpha, beta = config.initial_logical
    rho = evolve_master(
        inst.model, inst.encode(alpha, beta).to_density_matrix(),
        np.linspace(0.0, t_max, 40),
    )[-1]
    sender = (inst.encode(1.0, 0.0), inst.encode(0.0, 1.0))
    receiver = (inst.target(1.0, 0.0), inst.target(0.0, 1.0))
    decomp = logical_position_decomposition(
        rho,
        [("sender", _projector(inst, sender)), ("receiver", _projector(inst, receiver))],
        {"sender": sender, "receiver": receiver},
    )

    report = {
        "protocol": config.protocol,
        "t_max_us": float(t_max),
        "dark_manifold": {
            "targets_pass": dark_t.verdict,
            "initials_pass": dark_i.verdict,
            "target_jump_norms": [
                {k: float(v) for k, v in s.jump_norms.items()} for s in dark_t.states
            ],
        },
        "orthogonality": {
            "max_overlap": float(np.max(overlaps)),
            "schedule": [[float(t), lbl] for t, lbl in schedule],
        },
        "decomposition": {
            "verdict": decomp.verdict,
            "min_pairwise_fidelity": decomp.min_pairwise_fidelity,
            "positions": [
                {
                    "label": p.label,
                    "probability": p.probability,
                    "purity": p.purity,
                    "capture": p.capture,
                }
                for p in decomp.positions
            ],
            "skipped": list(decomp.skipped),
        },
    }
    _deliver(_TablePayload(report), args, "json")


def _projector(inst, kets) -> Operator:
    m = sum(np.outer(k.amplitudes, k.amplitudes.conj()) for k in kets)
    return Operator(inst.model.layout, m)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        args.func(args)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
