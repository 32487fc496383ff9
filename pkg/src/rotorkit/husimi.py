"""Bargmann evaluation, Husimi fields, strip zeros, and reconstruction.

The Bargmann transform of a state is the entire quasiperiodic function
psi(z) = <psi|z> = sum_n conj(c_n) exp(-(n+delta)^2 s^2/2 - i(n+delta)z).
Everything here works with that function: evaluating it (in a factored form
that cannot overflow), painting its Husimi density on a cylinder grid,
locating its zeros in the fundamental strip by the argument principle, and
rebuilding the function from those zeros as a periodic Hadamard product

    psi(z) = e^{C + i(l_eff - delta) z} [sin(z/2) e^{-iz/2}]^m
             prod_k [sin((z-a_k)/2) / sin(-a_k/2)] e^{-nu_k i z / 2}.

The serialized integer l is the total phase-growth exponent measured from the
function's downward asymptotics (l = -n0 for finite support); the product
convention above absorbs one power of e^{iz} per nu=-1 zero, so the exponent
uses l_eff = l - #[nu=-1].  Both conventions describe the same function; the
growth integer is the one measurable without knowing the zeros.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (BoundaryZeroError, CotangentPole, EvaluationBandError,
                     UndeterminedExponent, ValidationError, ZeroCountMismatch)
from .lattice import TWO_PI
from .states import Representation, StateVector

__all__ = [
    "BargmannFunction",
    "CylinderGrid",
    "StripZeros",
    "bargmann_eval",
    "husimi_field",
    "husimi_mass",
    "write_husimi_csv",
    "find_strip_zeros",
    "determine_l",
    "fit_log_constant",
    "hadamard_reconstruct",
    "branch_corrected_log_product",
    "sin_hadamard_truncated",
]

# |f|/local-scale below this anywhere on a contour → the contour is perturbed
CONTOUR_FLOOR = 1e-12

# cell size at which a winding region is handed to Newton polishing
ISOLATE_SIZE = 0.17

# cells holding more than one zero are split further, down to this size,
# before the content is accepted as one multiple zero
MULTIPLE_SIZE = 1e-5

AXIS_SNAP = 1e-8


class BargmannFunction:
    """Evaluator for psi(z) = <psi|z>.

    Parameters
    ----------
    rep : Representation
    psi : StateVector
        Coefficients <n|psi> on a finite window.
    complete : bool
        True if the window is the entire support of the state (evaluation is
        then valid at every z).  False marks a truncation of a longer series
        (e.g. a windowed coherent state); evaluations are then restricted to
        the band of Im z where the discarded tail is negligible, and points
        outside raise :class:`~rotorkit.errors.EvaluationBandError`.
    band_accuracy : float
        Relative tail error defining the safe band of a truncated window.
    """

    def __init__(self, rep: Representation, psi: StateVector, complete: bool = True,
                 band_accuracy: float = 1e-11):
        self.rep = rep
        self.psi = psi
        self.complete = bool(complete)
        self.band_accuracy = float(band_accuracy)
        occupied = psi.trimmed()
        x = occupied.indices() + rep.delta
        self._x = x
        self._b = np.conj(occupied.coeffs) * np.exp(-0.5 * (x * rep.s) ** 2)
        with np.errstate(divide="ignore"):
            self._log_b = np.log(np.abs(self._b))
        self.max_frequency = float(np.max(np.abs(x)))

    def im_band(self) -> tuple:
        """Safe band (lo, hi) of Im z; infinite for complete windows."""
        if self.complete:
            return (-math.inf, math.inf)
        s = self.rep.s
        margin = math.sqrt(2.0 * math.log(1.0 / self.band_accuracy)) / s
        lo = s * s * (self._x[0] + margin)
        hi = s * s * (self._x[-1] - margin)
        return (lo, hi)

    def _check_band(self, y_min: float, y_max: float) -> None:
        lo, hi = self.im_band()
        if y_min < lo or y_max > hi:
            raise EvaluationBandError(
                f"Im z in [{y_min:.6g}, {y_max:.6g}] leaves the safe band "
                f"[{lo:.6g}, {hi:.6g}] of this truncated window")

    def _factored(self, z: np.ndarray, enforce_band: bool = True):
        """Relative values and the per-point log scale.

        Returns (f_rel, fprime_rel, scale_rel, log_peak) with
        f(z) = f_rel * exp(log_peak) and |f_rel| <= scale_rel, where
        scale_rel = sum of |terms| / exp(log_peak) >= 1 measures headroom for
        cancellation.
        """
        z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
        y = z.imag
        if not self.complete and enforce_band and z.size:
            self._check_band(float(np.min(y)), float(np.max(y)))
        # log magnitude of each term: log|b_n| + x_n * y
        log_mag = self._log_b[:, None] + self._x[:, None] * y[None, :]
        log_peak = np.max(log_mag, axis=0)
        expo = -1j * self._x[:, None] * z[None, :] - log_peak[None, :]
        terms = self._b[:, None] * np.exp(expo)
        f_rel = terms.sum(axis=0)
        fprime_rel = (-1j * self._x[:, None] * terms).sum(axis=0)
        scale_rel = np.abs(terms).sum(axis=0)
        return f_rel, fprime_rel, scale_rel, log_peak

    def eval_factored(self, z):
        """(f_rel, log_peak) with f(z) = f_rel * exp(log_peak), |f_rel| = O(1)."""
        f_rel, _, _, log_peak = self._factored(z)
        return f_rel, log_peak

    def __call__(self, z):
        scalar = np.isscalar(z) or (isinstance(z, complex))
        f_rel, _, _, log_peak = self._factored(z)
        if np.any(log_peak > 700.0):
            raise EvaluationBandError(
                "value exceeds the float64 range; use eval_factored for the "
                "log-scaled form")
        out = f_rel * np.exp(log_peak)
        return complex(out[0]) if scalar else out

    def derivative(self, z):
        scalar = np.isscalar(z) or (isinstance(z, complex))
        _, fp_rel, _, log_peak = self._factored(z)
        if np.any(log_peak > 700.0):
            raise EvaluationBandError(
                "value exceeds the float64 range; use eval_factored for the "
                "log-scaled form")
        out = fp_rel * np.exp(log_peak)
        return complex(out[0]) if scalar else out


def bargmann_eval(f: BargmannFunction, z) -> complex:
    """Functional form of f(z)."""
    return f(z)


@dataclass(frozen=True)
class CylinderGrid:
    """Uniform phi x p evaluation grid on the cylinder."""

    phi_count: int
    p_min: float
    p_max: float
    p_count: int

    def __post_init__(self):
        if self.phi_count < 1 or self.p_count < 1:
            raise ValidationError("grid counts must be positive")
        if not (self.p_min <= self.p_max):
            raise ValidationError("p_min must not exceed p_max")

    def phi_values(self) -> np.ndarray:
        return np.linspace(-math.pi, math.pi, self.phi_count, endpoint=False)

    def p_values(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.p_count)


def husimi_field(f: BargmannFunction, grid: CylinderGrid) -> np.ndarray:
    """field(phi, p) = e^{-p^2/(s hbar)^2} |psi(phi + i p/hbar)|^2 / (sqrt(pi) s hbar <psi|psi>).

    Returned with shape (phi_count, p_count).  The weight is the
    identity-resolution measure, so the integral of the field against
    dphi dp / (2 pi hbar) tends to 1 on a generous grid.
    """
    rep = f.rep
    norm = f.psi.norm_sq()
    if norm <= 0.0:
        raise ValidationError("state has zero norm")
    phis = grid.phi_values()
    ps = grid.p_values()
    out = np.empty((grid.phi_count, grid.p_count))
    log_const = math.log(math.sqrt(math.pi) * rep.s * rep.hbar * norm)
    for j, p in enumerate(ps):
        z = phis + 1j * (p / rep.hbar)
        f_rel, _, _, log_peak = f._factored(z)
        expo = 2.0 * log_peak - (p / (rep.s * rep.hbar)) ** 2 - log_const
        out[:, j] = np.abs(f_rel) ** 2 * np.exp(expo)
    return out


def husimi_mass(grid: CylinderGrid, field: np.ndarray, hbar: float = 1.0) -> float:
    """Quadrature of the field against dphi dp / (2 pi hbar)."""
    dphi = TWO_PI / grid.phi_count
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    per_phi = trapezoid(field, grid.p_values(), axis=1)
    return float(per_phi.sum() * dphi / (TWO_PI * hbar))


def write_husimi_csv(path: str, grid: CylinderGrid, field: np.ndarray) -> None:
    from .cli import atomic_write_text, format_float  # shared formatting

    lines = ["phi,p,value"]
    phis = grid.phi_values()
    ps = grid.p_values()
    for i in range(grid.phi_count):
        for j in range(grid.p_count):
            lines.append(",".join(
                (format_float(phis[i]), format_float(ps[j]), format_float(field[i, j]))))
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class StripZeros:
    """Zero data of a Bargmann function in the fundamental strip.

    a_list holds the nonzero strip zeros (Re in [0, 2pi), multiplicity by
    repetition), m the multiplicity of the zero at z = 0, l the phase-growth
    integer (None until determined), C the log-normalization constant (None
    until fitted).  nu_list is derived: sgn Im a_k with sgn 0 := +1.
    """

    a_list: list
    m: int = 0
    l: int | None = None
    C: complex | None = None
    nu_list: list = field(default_factory=list)

    def __post_init__(self):
        self.a_list = [complex(a) for a in self.a_list]
        for a in self.a_list:
            if not (0.0 <= a.real < TWO_PI) or a == 0:
                raise ValidationError(
                    f"strip zero {a} must satisfy Re in [0, 2pi) and a != 0")
        derived = [1 if a.imag >= 0.0 else -1 for a in self.a_list]
        if self.nu_list:
            if list(self.nu_list) != derived:
                raise ValidationError("nu_list inconsistent with sgn Im a_k (sgn 0 := +1)")
        else:
            self.nu_list = derived
        if self.m < 0:
            raise ValidationError("m must be nonnegative")

    def n_minus(self) -> int:
        return sum(1 for nu in self.nu_list if nu < 0)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "l": self.l,
            "C": None if self.C is None else [self.C.real, self.C.imag],
            "zeros": [[a.real, a.imag] for a in self.a_list],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StripZeros":
        extra = set(d) - {"m", "l", "C", "zeros"}
        if extra:
            raise ValidationError(f"unknown zero-set keys: {sorted(extra)}")
        try:
            zeros = [complex(re, im) for re, im in d.get("zeros", [])]
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed zeros: {exc}") from exc
        c = d.get("C")
        return cls(zeros, m=int(d.get("m", 0)),
                   l=None if d.get("l") is None else int(d["l"]),
                   C=None if c is None else complex(c[0], c[1]))


class _ContourTrouble(Exception):
    """Internal: a zero sits on (or too near) the current contour."""


def _edge_arg_change(f: BargmannFunction, z0: complex, z1: complex) -> float:
    """Continuous argument change of f along the segment [z0, z1]."""
    length = abs(z1 - z0)
    n0 = int(length * (f.max_frequency + 1.0) * 1.5) + 12
    t = np.linspace(0.0, 1.0, min(n0, 20000))
    z = z0 + (z1 - z0) * t
    v, _, scale, _ = f._factored(z)
    if np.min(np.abs(v) / scale) < CONTOUR_FLOOR:
        raise _ContourTrouble
    for _ in range(24):
        steps = np.angle(v[1:] / v[:-1])
        bad = np.abs(steps) > 1.2
        if not bad.any():
            return float(steps.sum())
        tm = 0.5 * (t[:-1][bad] + t[1:][bad])
        zm = z0 + (z1 - z0) * tm
        vm, _, sm, _ = f._factored(zm)
        if np.min(np.abs(vm) / sm) < CONTOUR_FLOOR:
            raise _ContourTrouble
        t = np.concatenate([t, tm])
        order = np.argsort(t, kind="stable")
        t = t[order]
        v = np.concatenate([v, vm])[order]
    raise _ContourTrouble


def _rect_winding(f: BargmannFunction, rect: tuple) -> int:
    x0, x1, y0, y1 = rect
    corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
    total = 0.0
    for i in range(4):
        total += _edge_arg_change(f, corners[i], corners[(i + 1) % 4])
    w = total / TWO_PI
    wi = round(w)
    if abs(w - wi) > 0.2:
        raise _ContourTrouble
    return int(wi)


def _polish(f: BargmannFunction, z: complex, mult: int, tol: float) -> complex:
    for _ in range(80):
        fv, fp, scale, _ = f._factored(np.array([z]))
        fv, fp, scale = complex(fv[0]), complex(fp[0]), float(scale[0])
        if fp == 0:
            break
        step = mult * fv / fp
        z = z - step
        if abs(step) < 1e-14 * (1.0 + abs(z)):
            break
    fv, _, scale, _ = f._factored(np.array([z]))
    if abs(complex(fv[0])) > tol * float(scale[0]):
        raise ZeroCountMismatch(
            f"Newton polishing failed near z = {z:.12g}: residual "
            f"{abs(complex(fv[0])):.3g} exceeds {tol:.3g} x local scale")
    return z


def _collect_zeros(f: BargmannFunction, rect: tuple, winding: int, tol: float,
                   depth: int = 0) -> list:
    if winding == 0:
        return []
    x0, x1, y0, y1 = rect
    w_size, h_size = x1 - x0, y1 - y0
    size = max(w_size, h_size)
    if (winding == 1 and size <= ISOLATE_SIZE) or size <= MULTIPLE_SIZE:
        center = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
        z = _polish(f, center, winding, tol)
        if abs(z - center) > 2.0 * size + 10 * ISOLATE_SIZE * (winding > 1):
            raise ZeroCountMismatch(
                f"polished zero {z:.9g} escaped its isolating cell around {center:.9g}")
        return [(z, winding)]
    if depth > 80:
        raise ZeroCountMismatch(f"subdivision depth exhausted near {rect}")
    split_x = w_size >= h_size
    for frac in (0.5, 0.53819, 0.46181, 0.55279):
        try:
            if split_x:
                xm = x0 + w_size * frac
                r1, r2 = (x0, xm, y0, y1), (xm, x1, y0, y1)
            else:
                ym = y0 + h_size * frac
                r1, r2 = (x0, x1, y0, ym), (x0, x1, ym, y1)
            w1 = _rect_winding(f, r1)
            w2 = _rect_winding(f, r2)
        except _ContourTrouble:
            continue
        if w1 + w2 != winding or w1 < 0 or w2 < 0:
            continue  # the cut line is unreliable here; shift it
        return (_collect_zeros(f, r1, w1, tol, depth + 1)
                + _collect_zeros(f, r2, w2, tol, depth + 1))
    raise BoundaryZeroError(
        f"could not place a reliable cut through {rect}; a zero hugs every "
        "candidate contour")


def find_strip_zeros(f: BargmannFunction, im_cutoff: float, tol: float = 1e-9) -> StripZeros:
    """All zeros of f in [0, 2pi) x i(-im_cutoff, im_cutoff).

    The count (with multiplicity) is certified by the argument principle on
    the outer rectangle; zeros are isolated by recursive bisection of winding
    rectangles and polished by Newton iteration with the analytic derivative.
    A zero at z = 0 (equivalently 2pi) is reported through the multiplicity
    field m; everything else lands in a_list.

    Parameters
    ----------
    f : BargmannFunction
    im_cutoff : float
        Half-height of the search band.  For truncated windows it must lie
        inside the safe evaluation band.
    tol : float
        Residual tolerance relative to the local term scale.
    """
    if not (im_cutoff > 0.0):
        raise ValidationError("im_cutoff must be positive")
    lo, hi = f.im_band()
    if -im_cutoff < lo or im_cutoff > hi:
        raise EvaluationBandError(
            f"band +-{im_cutoff:.6g} exceeds the safe evaluation band "
            f"[{lo:.6g}, {hi:.6g}]")

    x_lo = -0.5669
    trouble = None
    for shift_x, pad_y in ((0.0, 0.0), (0.0131, 0.0077), (-0.0257, 0.0191)):
        rect = (x_lo + shift_x, x_lo + shift_x + TWO_PI,
                -im_cutoff - pad_y, im_cutoff + pad_y)
        try:
            total = _rect_winding(f, rect)
            found = _collect_zeros(f, rect, total, tol)
            break
        except _ContourTrouble as exc:
            trouble = exc
            continue
    else:
        raise BoundaryZeroError(
            "a zero sits on the search contour even after two perturbations; "
            f"band +-{im_cutoff:.6g}") from trouble

    if sum(mult for _, mult in found) != total:
        raise ZeroCountMismatch(
            f"collected multiplicities do not match the outer winding {total}")

    # merge polished duplicates, fold into [0, 2pi), split off the axis zero
    merged: list = []
    for z, mult in sorted(found, key=lambda t: (t[0].imag, t[0].real)):
        for k, (zk, mk) in enumerate(merged):
            if abs(z - zk) < 1e-9:
                merged[k] = (zk, mk + mult)
                break
        else:
            merged.append((z, mult))

    m_axis = 0
    a_list: list = []
    for z, mult in merged:
        re = z.real % TWO_PI
        a = complex(re, z.imag)
        if abs(complex(re, z.imag)) < AXIS_SNAP or abs(complex(re - TWO_PI, z.imag)) < AXIS_SNAP:
            m_axis += mult
        else:
            a_list.extend([a] * mult)
    a_list.sort(key=lambda a: (a.imag, a.real))
    return StripZeros(a_list, m=m_axis)


def _support_polynomial(f: BargmannFunction):
    """(n0, b) with psi(z) = e^{-i(n0+delta)z} sum_j b_j chi^j, chi = e^{-iz}."""
    psi = f.psi.trimmed()
    x = psi.indices() + f.rep.delta
    b = np.conj(psi.coeffs) * np.exp(-0.5 * (x * f.rep.s) ** 2)
    return psi.n_min, b


def _phase_growth(f: BargmannFunction, y_probe: float, samples: int = 512) -> float:
    x0 = 0.2341
    z = x0 + np.linspace(0.0, TWO_PI, samples + 1) + 1j * y_probe
    v, _, scale, _ = f._factored(z, enforce_band=False)
    ratios = v[1:] / v[:-1]
    if np.any(~np.isfinite(ratios)) or np.min(np.abs(v) / scale) < 1e-13:
        raise UndeterminedExponent(
            f"phase-growth line Im z = {y_probe:.6g} passes through a zero")
    steps = np.angle(ratios)
    if np.max(np.abs(steps)) > 1.2:
        raise UndeterminedExponent(
            "phase-growth sampling too coarse; asymptotic regime not reached")
    return float(steps.sum()) / TWO_PI


def determine_l(f: BargmannFunction) -> int:
    """Phase-growth integer l of the factorization; -n0 for finite support.

    Measured as the continuous argument change of f over one period along a
    horizontal line below the strip zeros, divided by 2 pi, plus delta.  For
    a complete window the shortcut l = -(lowest occupied index) is used and
    cross-checked against the measurement.
    """
    if f.complete:
        n0, b = _support_polynomial(f)
        shortcut = -n0
        # Cauchy bound: all polynomial roots chi satisfy
        # |chi| >= 1 / (1 + max|b_j| / |b_0|), i.e. Im z >= -log(...)
        with np.errstate(divide="ignore"):
            root_floor = -math.log(1.0 + float(np.max(np.abs(b)) / abs(b[0])))
        y_probe = root_floor - 0.7
    else:
        lo, hi = f.im_band()
        if not math.isfinite(lo):
            raise UndeterminedExponent("truncated window with empty band")
        y_probe = lo
        shortcut = None

    kappa = _phase_growth(f, y_probe)
    l_float = kappa + f.rep.delta
    l_int = round(l_float)
    if abs(l_float - l_int) > 0.08:
        raise UndeterminedExponent(
            f"measured growth {l_float:.6g} is not near an integer")
    if shortcut is not None and l_int != shortcut:
        raise UndeterminedExponent(
            f"growth measurement {l_int} contradicts the support shortcut {shortcut}")
    return int(l_int)


class ReconstructedBargmann:
    """Evaluator of the periodic Hadamard product for a StripZeros record."""

    def __init__(self, zeros: StripZeros, rep: Representation):
        if zeros.l is None:
            raise ValidationError("reconstruction requires the integer l (determine_l)")
        self.zeros = zeros
        self.rep = rep
        self._a = np.array(zeros.a_list, dtype=np.complex128)
        self._nu = np.array(zeros.nu_list, dtype=np.float64)
        self._l_eff = zeros.l - zeros.n_minus()
        self._c = 0j if zeros.C is None else complex(zeros.C)
        # normalizers sin(-a/2) are nonzero by the a != 0 strip invariant
        self._inv_norm = 1.0 / np.sin(-0.5 * self._a)

    def __call__(self, z):
        scalar = np.isscalar(z) or isinstance(z, complex)
        z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
        out = np.exp(self._c + 1j * (self._l_eff - self.rep.delta) * z)
        if self.zeros.m:
            out = out * (np.sin(0.5 * z) * np.exp(-0.5j * z)) ** self.zeros.m
        if self._a.size:
            zz = z[:, None]
            factors = (np.sin(0.5 * (zz - self._a[None, :])) * self._inv_norm[None, :]
                       * np.exp(-0.5j * self._nu[None, :] * zz))
            out = out * factors.prod(axis=1)
        return complex(out[0]) if scalar else out


def hadamard_reconstruct(zeros: StripZeros, rep: Representation) -> ReconstructedBargmann:
    """Evaluator for the factorization; zeros.C = None means 'up to constant'."""
    return ReconstructedBargmann(zeros, rep)


def fit_log_constant(zeros: StripZeros, f: BargmannFunction, samples: int = 256) -> complex:
    """C such that the reconstruction matches f, fitted at the best real point.

    The reference point is the real-axis sample maximizing |f| (best
    conditioning).  Returns C; the caller stores it on the record.
    """
    base = StripZeros(list(zeros.a_list), m=zeros.m, l=zeros.l, C=None)
    recon = ReconstructedBargmann(base, rep=f.rep)
    phi = np.linspace(0.0, TWO_PI, samples, endpoint=False)
    f_rel, _, _, log_peak = f._factored(phi.astype(np.complex128))
    k = int(np.argmax(np.abs(f_rel)))
    z_ref = complex(phi[k])
    target = cmath.log(complex(f_rel[k])) + complex(log_peak[k])
    raw = recon(z_ref)
    if raw == 0:
        raise ValidationError("reference point sits on a reconstruction zero")
    return target - cmath.log(raw)


def branch_corrected_log_product(a_list) -> complex:
    """sum_k pi (cot(a_k/2) + i nu_k), the log of prod_k [-e^{pi cot(a_k/2)}].

    nu_k = sgn Im a_k with sgn 0 := +1.  Each term's imaginary correction
    i pi nu_k replaces the factor -1 by a branch-consistent logarithm.
    """
    total = 0j
    for a in a_list:
        a = complex(a)
        sa = cmath.sin(0.5 * a)
        if abs(sa) < 1e-12:
            raise CotangentPole(f"cot(a/2) pole at a = {a}")
        nu = 1.0 if a.imag >= 0.0 else -1.0
        total += math.pi * (cmath.cos(0.5 * a) / sa + 1j * nu)
    return total


def sin_hadamard_truncated(z: complex, a: complex, n_terms: int) -> complex:
    """Truncated product form of sin((z-a)/2) over the zero lattice a + 2 pi n.

    -sin(a/2) (1 - z/a) prod_{n=1..N} (1 - z/(a+2 pi n)) (1 - z/(a-2 pi n));
    converges like 1/N.  Requires a not a multiple of 2 pi (else the n=0
    factor degenerates: pole error).
    """
    if n_terms < 1:
        raise ValidationError("n_terms must be >= 1")
    a = complex(a)
    z = complex(z)
    if abs(cmath.sin(0.5 * a)) < 1e-12:
        raise CotangentPole(f"product form degenerates at a = {a} (2 pi multiple)")
    n = np.arange(1, n_terms + 1)
    factors = (1.0 - z / (a + TWO_PI * n)) * (1.0 - z / (a - TWO_PI * n))
    return complex(-cmath.sin(0.5 * a) * (1.0 - z / a) * np.prod(factors))
