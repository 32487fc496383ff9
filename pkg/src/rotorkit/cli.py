"""Command-line front end: every pipeline as a subcommand.

JSON results go to stdout with 17-significant-digit floats; commands that
produce a data table (``husimi``, ``propagate``) write CSV to --out.  A JSON
config file may supply any option; explicit flags win.  Exit codes: 0 on
success, 2 for bad options or config, 3 when a numerical error surfaces (the
error is serialized as JSON).
"""

from __future__ import annotations

import argparse
import cmath
import json
import math
import os
import re
import sys
import tempfile

import numpy as np

from .errors import NumericalError, ValidationError
from .lattice import GaussSumParams, gauss_lattice_sum, theta3, theta3_zero
from .states import (
    PhasePoint,
    Representation,
    StateVector,
    coherent_state,
    expect_exp_iphi,
    expect_p,
    ladder_apply,
    norm_squared,
    overlap,
    uncertainty_product,
)
from . import husimi as hus
from . import semiclassics as sc

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# formatting and atomic output


def format_float(x) -> str:
    """17 significant digits: exact round-trip for doubles."""
    return "%.17g" % float(x)


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file and rename; no partial files on failure."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".rotorkit-")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _dump(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return "[" + format_float(obj.real) + ", " + format_float(obj.imag) + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [_dump(v, indent + 1) for v in obj]
        if not items:
            return "[]"
        body = ",\n".join("  " * (indent + 1) + it for it in items)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = []
        for key, val in obj.items():
            rows.append("  " * (indent + 1) + json.dumps(str(key)) + ": "
                        + _dump(val, indent + 1))
        return "{\n" + ",\n".join(rows) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def json_text(payload: dict) -> str:
    return _dump(payload) + "\n"


# ---------------------------------------------------------------------------
# value parsing (pi tokens, complex pairs)

_PI_TOKEN = re.compile(
    r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)?)\s*pi\s*(?:/\s*(\d+\.?\d*|\.\d+))?\s*$",
    re.IGNORECASE)


def parse_real(value) -> float:
    """Float, or a pi token: 'pi', '-pi', '2pi', 'pi/2', '1.5pi/4'."""
    if isinstance(value, bool):
        raise ValidationError(f"expected a real number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    if "pi" in text.lower():
        m = _PI_TOKEN.match(text)
        if not m:
            raise ValidationError(f"cannot parse real value {value!r}")
        head = m.group(1)
        if head in (None, "", "+"):
            factor = 1.0
        elif head == "-":
            factor = -1.0
        else:
            factor = float(head)
        out = factor * math.pi
        if m.group(2):
            out /= float(m.group(2))
        return out
    try:
        return float(text)
    except ValueError as exc:
        raise ValidationError(f"cannot parse real value {value!r}") from exc


def parse_complex(value) -> complex:
    """'re,im' pair (pi tokens allowed per part) or a [re, im] list."""
    if isinstance(value, complex):
        return value
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValidationError(f"complex values are [re, im]: {value!r}")
        return complex(parse_real(value[0]), parse_real(value[1]))
    parts = str(value).split(",")
    if len(parts) != 2:
        raise ValidationError(f"complex values are 're,im': {value!r}")
    return complex(parse_real(parts[0]), parse_real(parts[1]))


def parse_windings(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(n) for n in value)
    parts = [p.strip() for p in str(value).split(",") if p.strip()]
    if not parts:
        raise ValidationError(f"empty winding list: {value!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"windings must be integers: {value!r}") from exc


_CONVERTERS = {
    "real": parse_real,
    "complex": parse_complex,
    "int": lambda v: int(str(v)),
    "path": str,
    "windings": parse_windings,
    "kind": str,
}


# ---------------------------------------------------------------------------
# option tables: name -> (kind, default, help)

_REP = {
    "delta": ("real", 0.0, "representation shift delta in [0,1)"),
    "s": ("real", 0.5, "squeezing width s > 0"),
    "hbar": ("real", 1.0, "Planck constant"),
}
_STATE = {
    "state": ("path", None, "StateVector JSON file"),
    "phi": ("real", None, "coherent-state angle (pi tokens allowed)"),
    "p": ("real", 0.0, "coherent-state momentum"),
    "state_tol": ("real", 1e-16, "coherent coefficient cutoff"),
}

OPTION_TABLES = {
    "overlap": {
        **_REP,
        "zI": ("complex", None, "initial label phi + i p/hbar as 're,im'"),
        "zF": ("complex", None, "final label as 're,im'"),
    },
    "expect": {**_REP, **_STATE},
    "husimi": {
        **_REP, **_STATE,
        "phi_count": ("int", 128, "angle grid size"),
        "p_min": ("real", -2.0, "momentum grid lower edge"),
        "p_max": ("real", 2.0, "momentum grid upper edge"),
        "p_count": ("int", 81, "momentum grid size"),
        "band_accuracy": ("real", 1e-11, "safe-band accuracy target"),
    },
    "zeros": {
        **_REP, **_STATE,
        "im_cutoff": ("real", 3.0, "strip half-height searched for zeros"),
        "tol": ("real", 1e-9, "zero location tolerance"),
        "band_accuracy": ("real", 1e-11, "safe-band accuracy target"),
    },
    "reconstruct": {
        **_REP, **_STATE,
        "im_cutoff": ("real", 3.0, "strip half-height searched for zeros"),
        "tol": ("real", 1e-9, "zero location tolerance"),
        "band_accuracy": ("real", 1e-11, "safe-band accuracy target"),
        "samples": ("int", 100, "comparison sample count"),
        "seed": ("int", 0, "sample RNG seed"),
    },
    "propagate": {
        **_REP,
        "zI": ("complex", None, "initial label as 're,im'"),
        "zF": ("complex", None, "final label as 're,im'"),
        "tau": ("real", None, "propagation time"),
        "kind": ("kind", "free_rotor", "free_rotor or pendulum"),
        "k_pend": ("real", 0.0, "pendulum coupling"),
        "steps": ("int", 400, "integrator steps"),
        "windings": ("windings", None, "explicit winding list 'n1,n2,...'"),
    },
    "validate": {},
}

REQUIRED = {
    "overlap": ("zI", "zF"),
    "expect": (),
    "husimi": (),
    "zeros": (),
    "reconstruct": (),
    "propagate": ("zI", "zF", "tau"),
    "validate": (),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, metavar="PATH",
                        help="JSON config; flags override its keys")
    common.add_argument("--out", default=None, metavar="PATH",
                        help="output file (CSV for husimi/propagate, JSON otherwise)")
    common.add_argument("--threads", type=int, default=1, metavar="K",
                        help="worker threads for the propagator winding sum")

    parser = argparse.ArgumentParser(
        prog="rotorkit",
        description="Coherent states on the circle: overlaps, Husimi fields, "
                    "strip zeros, Hadamard reconstruction, semiclassical propagation.")
    sub = parser.add_subparsers(dest="command", required=True)
    summaries = {
        "overlap": "coherent-state overlap and its normalized value",
        "expect": "expectation values for a state or coherent point",
        "husimi": "Husimi field on a cylinder grid (CSV)",
        "zeros": "Bargmann strip zeros as a JSON zero set",
        "reconstruct": "zero-based reconstruction round-trip report",
        "propagate": "semiclassical propagator branch table and summary",
        "validate": "run the invariant battery and report residuals",
    }
    for name, table in OPTION_TABLES.items():
        p = sub.add_parser(name, parents=[common], help=summaries[name])
        for opt, (kind, default, text) in table.items():
            flag = "--" + opt.replace("_", "-")
            p.add_argument(flag, dest=opt, default=None, metavar=kind.upper(),
                           help=f"{text} (default {default!r})")
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge config-file values under explicit flags; reject unknown keys."""
    table = OPTION_TABLES[args.command]
    config = {}
    if args.config is not None:
        try:
            with open(args.config) as handle:
                config = json.load(handle)
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed config JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(config) - set(table)
        if unknown:
            raise ValidationError(
                f"unknown config keys for {args.command}: {sorted(unknown)}")
    out = {}
    for name, (kind, default, _) in table.items():
        raw = getattr(args, name)
        if raw is None:
            raw = config.get(name, default)
        out[name] = None if raw is None else _CONVERTERS[kind](raw)
    missing = [n for n in REQUIRED[args.command] if out[n] is None]
    if missing:
        raise ValidationError(f"missing required options: {missing}")
    return out


# ---------------------------------------------------------------------------
# shared pieces


def _representation(opts) -> Representation:
    return Representation(opts["delta"], opts["s"], opts["hbar"])


def _load_state(opts, rep: Representation) -> StateVector:
    if opts["state"] is not None:
        try:
            with open(opts["state"]) as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ValidationError(f"cannot read state file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed state JSON: {exc}") from exc
        return StateVector.from_dict(data)
    if opts["phi"] is None:
        raise ValidationError("provide --state FILE or --phi (with optional --p)")
    point = PhasePoint(opts["phi"], opts["p"])
    return coherent_state(rep, point, tol=opts["state_tol"])


def _zero_pipeline(opts):
    """(rep, f, zeros with l and C filled) shared by zeros/reconstruct."""
    rep = _representation(opts)
    psi = _load_state(opts, rep)
    f = hus.BargmannFunction(rep, psi, band_accuracy=opts["band_accuracy"])
    zeros = hus.find_strip_zeros(f, opts["im_cutoff"], tol=opts["tol"])
    zeros.l = hus.determine_l(f)
    zeros.C = hus.fit_log_constant(zeros, f)
    return rep, f, zeros


# ---------------------------------------------------------------------------
# command handlers: each returns the stdout payload


def cmd_overlap(opts, out_path, threads) -> dict:
    rep = _representation(opts)
    initial = PhasePoint.from_label(opts["zI"], rep.hbar)
    final = PhasePoint.from_label(opts["zF"], rep.hbar)
    ov = overlap(rep, final, initial)
    scale = math.sqrt(norm_squared(rep, final) * norm_squared(rep, initial))
    normalized = ov / scale
    return {
        "overlap": ov,
        "normalized": normalized,
        "normalized_abs": abs(normalized),
    }


def cmd_expect(opts, out_path, threads) -> dict:
    rep = _representation(opts)
    psi = _load_state(opts, rep)
    payload = {
        "norm_sq": psi.norm_sq(),
        "exp_iphi": expect_exp_iphi(rep, psi),
        "exp_p": expect_p(rep, psi),
    }
    if opts["state"] is None:
        point = PhasePoint(opts["phi"], opts["p"])
        product, half_comm = uncertainty_product(rep, point)
        payload["uncertainty"] = {
            "product": product,
            "half_commutator": half_comm,
            "relative_gap": abs(product - half_comm) / half_comm,
        }
    return payload


def cmd_husimi(opts, out_path, threads) -> dict:
    if out_path is None:
        raise ValidationError("husimi writes a CSV field file: --out is required")
    rep = _representation(opts)
    psi = _load_state(opts, rep)
    f = hus.BargmannFunction(rep, psi, band_accuracy=opts["band_accuracy"])
    grid = hus.CylinderGrid(opts["phi_count"], opts["p_min"], opts["p_max"],
                            opts["p_count"])
    field = hus.husimi_field(f, grid)
    hus.write_husimi_csv(out_path, grid, field)
    k = int(np.argmax(field))
    i, j = divmod(k, grid.p_count)
    return {
        "out": out_path,
        "rows": grid.phi_count * grid.p_count,
        "mass": hus.husimi_mass(grid, field, rep.hbar),
        "argmax": {"phi": grid.phi_values()[i], "p": grid.p_values()[j],
                   "value": field[i, j]},
    }


def cmd_zeros(opts, out_path, threads) -> dict:
    _, _, zeros = _zero_pipeline(opts)
    return zeros.to_dict()


def cmd_reconstruct(opts, out_path, threads) -> dict:
    rep, f, zeros = _zero_pipeline(opts)
    recon = hus.hadamard_reconstruct(zeros, rep)
    rng = np.random.default_rng(opts["seed"])
    band_lo, band_hi = f.im_band()
    lo = 0.8 * max(-opts["im_cutoff"], band_lo)
    hi = 0.8 * min(opts["im_cutoff"], band_hi)
    n = opts["samples"]
    pts = rng.uniform(0.0, TWO_PI, n) + 1j * rng.uniform(lo, hi, n)
    worst = 0.0
    total = 0.0
    for z in pts:
        exact = hus.bargmann_eval(f, complex(z))
        err = abs(recon(complex(z)) - exact) / abs(exact)
        worst = max(worst, err)
        total += err
    return {
        "samples": n,
        "sample_band": [lo, hi],
        "max_rel_error": worst,
        "mean_rel_error": total / n,
        "zero_set": zeros.to_dict(),
    }


def cmd_propagate(opts, out_path, threads) -> dict:
    rep = _representation(opts)
    if opts["kind"] not in ("free_rotor", "pendulum"):
        raise ValidationError(f"unknown Hamiltonian kind {opts['kind']!r}")
    H = sc.HolomorphicHamiltonian(opts["kind"], k_pend=opts["k_pend"])
    sc_opts = sc.PropagatorOptions(steps=opts["steps"], windings=opts["windings"],
                                   threads=threads)
    result = sc.semiclassical_propagator(H, rep, opts["zI"], opts["zF"],
                                         opts["tau"], sc_opts)
    branches = sorted(result.branches,
                      key=lambda b: (b.winding_n, b.branch_index))
    if out_path is not None:
        lines = ["n,nu,re_contrib,im_contrib,re_S,im_S,prefactor_abs,prefactor_arg"]
        for br in branches:
            traj = br.trajectory
            pref = traj.sqrt_prefactor
            lines.append(",".join((
                str(br.winding_n), str(br.branch_index),
                format_float(br.contribution.real),
                format_float(br.contribution.imag),
                format_float(traj.S.real), format_float(traj.S.imag),
                format_float(abs(pref)), format_float(cmath.phase(pref)))))
        atomic_write_text(out_path, "\n".join(lines) + "\n")
    summary = {
        "value": result.value,
        "branch_count": len(branches),
        "truncation_report": result.truncation_report,
        "solver": {
            "steps": max((b.trajectory.steps for b in branches), default=0),
            "max_boundary_residual": max(
                (b.trajectory.boundary_residual for b in branches), default=0.0),
        },
    }
    if out_path is not None:
        summary["out"] = out_path
    return summary


# ---------------------------------------------------------------------------
# invariant battery


def _state_gap(a: StateVector, b: StateVector) -> float:
    """l2 norm of (a - b) over the union index window."""
    lo = min(a.n_min, b.n_min)
    hi = max(a.n_max, b.n_max)
    va = np.zeros(hi - lo + 1, dtype=np.complex128)
    vb = np.zeros_like(va)
    va[a.n_min - lo:a.n_min - lo + a.coeffs.size] = a.coeffs
    vb[b.n_min - lo:b.n_min - lo + b.coeffs.size] = b.coeffs
    return float(np.linalg.norm(va - vb))


def _check(name: str, residual: float, tolerance: float) -> dict:
    return {"name": name, "residual": float(residual),
            "tolerance": float(tolerance), "ok": bool(residual <= tolerance)}


def _battery(threads: int) -> list:
    checks = []

    # dual-route lattice sums on a fixed stencil
    cases = [(0.07, 1.3 + 0.4j, 0.3), (0.3, -2.0 + 1.0j, 0.0),
             (1.7, 0.5 - 0.3j, 0.5), (4.2, 3.0 + 0.0j, 0.3),
             (0.9, 0.2 + 6.0j, 0.0)]
    worst = 0.0
    for alpha, beta, delta in cases:
        params = GaussSumParams(alpha, beta, delta)
        for k in range(3):
            d = gauss_lattice_sum(params, deriv_order=k, route="direct")
            p = gauss_lattice_sum(params, deriv_order=k, route="poisson")
            worst = max(worst, abs(d - p) / max(abs(d), abs(p), 1e-300))
    checks.append(_check("lattice_dual_route", worst, 1e-12))

    # norm plateau at p = 0
    s = 0.5
    rep = Representation(0.3, s)
    flat = math.sqrt(math.pi) / s
    tail = math.exp(-math.pi**2 / s**2)
    dev = abs(norm_squared(rep, PhasePoint(0.7, 0.0)) - flat) / flat
    checks.append(_check("norm_plateau", dev, 3.0 * tail / (1.0 - tail)))

    # ladder eigenrelation g|z> = e^{iz}|z>
    rep = Representation(0.3, 0.7)
    point = PhasePoint(0.4, 0.3 * rep.hbar)
    psi = coherent_state(rep, point)
    shifted = ladder_apply(rep, psi)
    target = StateVector(psi.n_min,
                         psi.coeffs * cmath.exp(1j * point.label(rep.hbar)))
    gap = _state_gap(shifted, target) / math.sqrt(psi.norm_sq())
    checks.append(_check("ladder_eigenrelation", gap, 1e-11))

    # Heisenberg saturation
    rep = Representation(0.25, 0.6)
    product, half_comm = uncertainty_product(rep, PhasePoint(0.7, 0.2))
    checks.append(_check("uncertainty_saturation",
                         abs(product - half_comm) / half_comm, 1e-10))

    # theta zero residual (relative to the central value)
    tau = 1j
    w0 = theta3_zero(tau)
    checks.append(_check("theta_zero_residual",
                         abs(theta3(w0, tau)) / abs(theta3(0.0, tau)), 1e-12))

    # strip-zero round trip on a fixed 3-term state
    rep = Representation(0.0, 0.5)
    psi = StateVector(0, [1.0, 0.6, 0.25j])
    f = hus.BargmannFunction(rep, psi)
    zeros = hus.find_strip_zeros(f, 6.0, tol=1e-11)
    zeros.l = hus.determine_l(f)
    zeros.C = hus.fit_log_constant(zeros, f)
    recon = hus.hadamard_reconstruct(zeros, rep)
    worst = 0.0
    for k in range(12):
        z = complex(0.37 + 0.523 * k, 1.4 * math.cos(1.0 + k))
        exact = hus.bargmann_eval(f, z)
        worst = max(worst, abs(recon(z) - exact) / abs(exact))
    checks.append(_check("hadamard_roundtrip", worst, 1e-6))

    # branch-corrected log product identity
    a_list = [math.pi + 1j, math.pi - 1j, 0.4 + 0.8j, 5.9 - 2.2j]
    lhs = 1.0 + 0j
    for a in a_list:
        lhs *= -cmath.exp(math.pi * cmath.cos(0.5 * a) / cmath.sin(0.5 * a))
    rhs = cmath.exp(hus.branch_corrected_log_product(a_list))
    checks.append(_check("branch_log_product", abs(lhs - rhs) / abs(lhs), 1e-12))

    # winding symmetry n <-> -n at z_I = z_F = 0, delta = 0
    rep = Representation(0.0, 0.3)
    H = sc.HolomorphicHamiltonian("free_rotor")
    opts = sc.PropagatorOptions(steps=200, windings=(-2, -1, 0, 1, 2),
                                threads=threads)
    result = sc.semiclassical_propagator(H, rep, 0j, 0j, 0.4, opts)
    by_n = {}
    for br in result.branches:
        by_n[br.winding_n] = by_n.get(br.winding_n, 0j) + br.contribution
    worst = max(abs(by_n[n] - by_n[-n]) / abs(by_n[n]) for n in (1, 2))
    checks.append(_check("winding_symmetry", worst, 1e-9))

    # tau -> 0 consistency against the overlap
    rep = Representation(0.3, 0.3)
    z_i, z_f = 0.1 + 0j, 0.524 + 0j
    result = sc.semiclassical_propagator(
        H, rep, z_i, z_f, 1e-3, sc.PropagatorOptions(steps=200, threads=threads))
    ov = overlap(rep, PhasePoint.from_label(z_f), PhasePoint.from_label(z_i))
    checks.append(_check("tau_to_zero", abs(result.value - ov) / abs(ov), 1e-3))

    # action derivative dS/dtau = -H(endpoint)
    rep = Representation(0.3, 0.3)
    H = sc.HolomorphicHamiltonian("pendulum", k_pend=0.1)
    z_i, z_f, tau, step = 0.3 + 0.1j, 0.8 - 0.2j, 0.4, 1e-5
    traj = sc.solve_complex_bvp(H, rep, z_i, z_f, 0, tau,
                                seeds=[z_i.conjugate()])[0]
    plus = sc.solve_complex_bvp(H, rep, z_i, z_f, 0, tau + step,
                                seeds=[traj.v0])[0]
    minus = sc.solve_complex_bvp(H, rep, z_i, z_f, 0, tau - step,
                                 seeds=[traj.v0])[0]
    fd = (plus.S - minus.S) / (2.0 * step)
    h_end = sc.h_matrix_element(H, traj.v[-1], traj.u[-1], rep)
    checks.append(_check("action_dtau", abs(fd + h_end) / abs(h_end), 1e-6))

    return checks


def cmd_validate(opts, out_path, threads) -> dict:
    checks = _battery(threads)
    return {"passed": all(c["ok"] for c in checks), "checks": checks}


HANDLERS = {
    "overlap": cmd_overlap,
    "expect": cmd_expect,
    "husimi": cmd_husimi,
    "zeros": cmd_zeros,
    "reconstruct": cmd_reconstruct,
    "propagate": cmd_propagate,
    "validate": cmd_validate,
}

# commands whose --out is the CSV table rather than a JSON copy of stdout
_CSV_COMMANDS = {"husimi", "propagate"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_path = args.out
    try:
        opts = resolve_options(args)
        payload = HANDLERS[args.command](opts, out_path, max(1, args.threads))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        text = json_text({"error": {"type": type(exc).__name__,
                                    "message": str(exc)}})
        sys.stdout.write(text)
        if out_path is not None:
            atomic_write_text(out_path, text)
        return 3
    text = json_text(payload)
    sys.stdout.write(text)
    if out_path is not None and args.command not in _CSV_COMMANDS:
        atomic_write_text(out_path, text)
    if args.command == "validate" and not payload["passed"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
