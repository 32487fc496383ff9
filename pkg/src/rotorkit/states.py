"""Coherent states on the circle: norms, overlaps, ladder action, moments.

States live in the delta-representation Hilbert space with basis |n>_delta,
n integer.  A coherent state labeled by z = phi + i p/hbar has coefficients

    <n|z> = exp(-(n+delta)^2 s^2 / 2 - i (n+delta) z)

which makes every inner product a Gaussian lattice sum handled by
:mod:`rotorkit.lattice`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError, WindowOverflow
from .lattice import TWO_PI, GaussSumParams, gauss_lattice_sum

__all__ = [
    "Representation",
    "PhasePoint",
    "StateVector",
    "QuadratureSpec",
    "coherent_state",
    "coherent_coefficients",
    "norm_squared",
    "overlap",
    "expect_exp_iphi",
    "expect_p",
    "ladder_apply",
    "ladder_weights",
    "identity_resolution_residual",
    "uncertainty_product",
]

DEFAULT_WINDOW_TOL = 1e-16
MAX_WINDOW = 4096


@dataclass(frozen=True)
class Representation:
    """Representation label delta, squeezing s, and the scale hbar."""

    delta: float
    s: float
    hbar: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.delta < 1.0):
            raise ValidationError(f"delta must lie in [0,1), got {self.delta}")
        if not (self.s > 0.0 and math.isfinite(self.s)):
            raise ValidationError(f"s must be positive, got {self.s}")
        if not (self.hbar > 0.0 and math.isfinite(self.hbar)):
            raise ValidationError(f"hbar must be positive, got {self.hbar}")

    def to_dict(self) -> dict:
        return {"delta": self.delta, "s": self.s, "hbar": self.hbar}

    @classmethod
    def from_dict(cls, d: dict) -> "Representation":
        extra = set(d) - {"delta", "s", "hbar"}
        if extra:
            raise ValidationError(f"unknown representation keys: {sorted(extra)}")
        if "delta" not in d or "s" not in d:
            raise ValidationError("representation requires 'delta' and 's'")
        return cls(float(d["delta"]), float(d["s"]), float(d.get("hbar", 1.0)))


@dataclass(frozen=True)
class PhasePoint:
    """Phase-space label (phi, p); the complex label is z = phi + i p/hbar.

    phi is stored reduced to [-pi, pi).  Note p is the *label* momentum; the
    state built at this point peaks at physical momentum p/s^2 (see
    :meth:`peak_momentum`), and conflating the two is a classic mistake.
    """

    phi: float
    p: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.phi) and math.isfinite(self.p)):
            raise ValidationError(f"phase point must be finite, got {self}")
        # reduce into [-pi, pi)
        phi = math.remainder(self.phi, TWO_PI)
        if phi >= math.pi:
            phi -= TWO_PI
        object.__setattr__(self, "phi", phi)

    def label(self, hbar: float = 1.0) -> complex:
        return complex(self.phi, self.p / hbar)

    @classmethod
    def from_label(cls, z: complex, hbar: float = 1.0) -> "PhasePoint":
        z = complex(z)
        return cls(z.real, z.imag * hbar)

    def peak_momentum(self, rep: Representation) -> float:
        """Physical momentum where the coherent state at this label peaks."""
        return self.p / rep.s**2

    @classmethod
    def at_peak_momentum(cls, rep: Representation, phi: float, momentum: float) -> "PhasePoint":
        """Build the label whose coherent state peaks at the given momentum."""
        return cls(phi, momentum * rep.s**2)


@dataclass
class StateVector:
    """Finite coefficient window: coeffs[j] = <n_min+j | psi>."""

    n_min: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 1 or c.size == 0:
            raise ValidationError("coeffs must be a nonempty 1-d array")
        if not np.all(np.isfinite(c)):
            raise ValidationError("coeffs must be finite")
        self.coeffs = c
        self.n_min = int(self.n_min)

    @property
    def n_max(self) -> int:
        return self.n_min + self.coeffs.size - 1

    def indices(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_min + self.coeffs.size)

    def norm_sq(self) -> float:
        return float(np.vdot(self.coeffs, self.coeffs).real)

    def inner(self, other: "StateVector") -> complex:
        """<self|other> over the common index window."""
        lo = max(self.n_min, other.n_min)
        hi = min(self.n_max, other.n_max)
        if hi < lo:
            return 0j
        a = self.coeffs[lo - self.n_min: hi - self.n_min + 1]
        b = other.coeffs[lo - other.n_min: hi - other.n_min + 1]
        return complex(np.vdot(a, b))

    def trimmed(self) -> "StateVector":
        """Drop exactly-zero leading and trailing coefficients."""
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            raise ValidationError("state vector is identically zero")
        return StateVector(self.n_min + int(nz[0]), self.coeffs[nz[0]: nz[-1] + 1].copy())

    def to_dict(self) -> dict:
        return {"n_min": self.n_min,
                "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "StateVector":
        extra = set(d) - {"n_min", "coeffs"}
        if extra:
            raise ValidationError(f"unknown state keys: {sorted(extra)}")
        try:
            coeffs = np.array([complex(re, im) for re, im in d["coeffs"]], dtype=np.complex128)
        except (TypeError, ValueError, KeyError) as exc:
            raise ValidationError(f"malformed state coefficients: {exc}") from exc
        return cls(int(d["n_min"]), coeffs)


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite rule in p crossed with a periodic trapezoid rule in phi."""

    p_points: int = 64
    phi_points: int = 128

    def __post_init__(self):
        if self.p_points < 1 or self.phi_points < 1:
            raise ValidationError("quadrature sizes must be positive")


def coherent_coefficients(rep: Representation, z: complex, indices: np.ndarray) -> np.ndarray:
    """Coefficients <n|z> for an explicit index array (no windowing)."""
    x = indices + rep.delta
    return np.exp(-0.5 * (x * rep.s) ** 2 - 1j * x * z)


def coherent_state(rep: Representation, point: PhasePoint, tol: float = DEFAULT_WINDOW_TOL,
                   max_window: int = MAX_WINDOW) -> StateVector:
    """Coefficient window of |z>, cut where |c_n| < tol * max|c_n|.

    Parameters
    ----------
    rep : Representation
    point : PhasePoint
        Label z = phi + i p/hbar.
    tol : float
        Relative coefficient cutoff defining the window.
    max_window : int
        Budget on the window size; beyond it
        :class:`~rotorkit.errors.WindowOverflow` is raised.
    """
    if not (tol > 0.0):
        raise ValidationError(f"tol must be positive, got {tol}")
    z = point.label(rep.hbar)
    center = point.p / (rep.hbar * rep.s**2)  # peak of n + delta
    half = math.sqrt(-2.0 * math.log(tol)) / rep.s
    n_lo = math.ceil(center - half - rep.delta)
    n_hi = math.floor(center + half - rep.delta)
    if n_hi < n_lo:
        n_hi = n_lo = round(center - rep.delta)
    size = n_hi - n_lo + 1
    if size > max_window:
        raise WindowOverflow(
            f"coherent-state window needs {size} indices, budget is {max_window}")
    idx = np.arange(n_lo, n_hi + 1)
    return StateVector(n_lo, coherent_coefficients(rep, z, idx))


def norm_squared(rep: Representation, point: PhasePoint) -> float:
    """<z|z> via the lattice sum; close to sqrt(pi/s^2) exp(p^2/(s hbar)^2)."""
    beta = complex(2.0 * point.p / rep.hbar, 0.0)
    val = gauss_lattice_sum(GaussSumParams(rep.s**2, beta, rep.delta))
    return val.real


def overlap(rep: Representation, left: PhasePoint, right: PhasePoint) -> complex:
    """<z_left|z_right>; Hermitian under argument swap."""
    zl = left.label(rep.hbar)
    zr = right.label(rep.hbar)
    beta = 1j * (zl.conjugate() - zr)
    return gauss_lattice_sum(GaussSumParams(rep.s**2, beta, rep.delta))


def _nonzero_norm(psi: StateVector) -> float:
    n2 = psi.norm_sq()
    if n2 <= 0.0:
        raise ValidationError("state has zero norm")
    return n2


def expect_exp_iphi(rep: Representation, psi: StateVector) -> complex:
    """<e^{i phi-hat}> = sum conj(c_{n+1}) c_n / sum |c_n|^2."""
    n2 = _nonzero_norm(psi)
    c = psi.coeffs
    if c.size < 2:
        return 0j
    return complex(np.vdot(c[1:], c[:-1])) / n2


def expect_p(rep: Representation, psi: StateVector) -> float:
    """<p-hat> = hbar sum (n+delta)|c_n|^2 / sum |c_n|^2."""
    n2 = _nonzero_norm(psi)
    x = psi.indices() + rep.delta
    w = np.abs(psi.coeffs) ** 2
    return float(rep.hbar * np.dot(x, w) / n2)


def ladder_weights(rep: Representation, indices: np.ndarray) -> np.ndarray:
    """Factors w_n with g|n> = w_n |n+1>: w_n = exp(s^2((n+d)^2-(n+d+1)^2)/2)."""
    x = indices + rep.delta
    return np.exp(0.5 * rep.s**2 * (x**2 - (x + 1.0) ** 2))


def ladder_apply(rep: Representation, psi: StateVector, adjoint: bool = False) -> StateVector:
    """Apply the ladder operator g (or its adjoint) to a coefficient window.

    g shifts each |n> to |n+1> with weight w_n; the adjoint shifts down with
    the weight of the lower rung.  Windows grow by one index; nothing is
    truncated.
    """
    idx = psi.indices()
    if not adjoint:
        return StateVector(psi.n_min + 1, psi.coeffs * ladder_weights(rep, idx))
    return StateVector(psi.n_min - 1, psi.coeffs * ladder_weights(rep, idx - 1))


def uncertainty_product(rep: Representation, point: PhasePoint) -> tuple:
    """(Delta Q * Delta P, |<[Q,P]>|/2) for the coherent state at ``point``.

    Q = (g + g†)/2 and P = (g - g†)/(2i) built from the ladder operator; a
    g-eigenvector saturates the Heisenberg bound, so the two entries agree.
    """
    psi = coherent_state(rep, point, tol=1e-18)
    n2 = _nonzero_norm(psi)

    g1 = ladder_apply(rep, psi)
    g2 = ladder_apply(rep, g1)
    gd = ladder_apply(rep, psi, adjoint=True)

    a1 = psi.inner(g1) / n2          # <g>
    a2 = psi.inner(g2) / n2          # <g^2>
    b = g1.norm_sq() / n2            # <g† g>
    c = gd.norm_sq() / n2            # <g g†>

    q_mean = a1.real
    p_mean = a1.imag
    q2 = (2.0 * a2.real + b + c) / 4.0
    p2 = (b + c - 2.0 * a2.real) / 4.0
    var_q = q2 - q_mean**2
    var_p = p2 - p_mean**2
    product = math.sqrt(max(var_q, 0.0) * max(var_p, 0.0))
    half_comm = abs(b - c) / 4.0
    return (product, half_comm)


def identity_resolution_residual(rep: Representation, n_window: tuple,
                                 quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Max |M - 1| for M_mn = integral dmu <m|z><z|n> over the index window.

    The measure is dphi dp e^{-p^2/(s hbar)^2} / (2 pi hbar * sqrt(pi) s hbar),
    the unique weight making the coherent family resolve the identity.  The
    p-integral is Gauss-Hermite (exactly matched weight); the phi-integral is
    the periodic trapezoid rule, exact for the trigonometric integrand as soon
    as the rule size exceeds the window span.

    Parameters
    ----------
    rep : Representation
    n_window : tuple
        Inclusive index range (n_lo, n_hi).
    quad : QuadratureSpec
        p_points Gauss-Hermite nodes and phi_points trapezoid nodes.
    """
    n_lo, n_hi = int(n_window[0]), int(n_window[1])
    if n_hi < n_lo:
        raise ValidationError(f"empty index window {n_window}")
    span = n_hi - n_lo
    if quad.phi_points <= span:
        raise ValidationError(
            f"phi rule of {quad.phi_points} points cannot resolve a window of span {span}; "
            "the periodic trapezoid rule is exact only beyond the span")

    idx = np.arange(n_lo, n_hi + 1)
    x = idx + rep.delta

    nodes, weights = np.polynomial.hermite.hermgauss(quad.p_points)
    # G[i, j] = exp(-(x_i s)^2/2 + x_i s t_j) at Hermite nodes t_j
    g = np.exp(-0.5 * (x[:, None] * rep.s) ** 2 + np.outer(x, rep.s * nodes))
    m = (g * (weights / math.sqrt(math.pi))) @ g.T

    # phi average of e^{-i(m-n)phi} over the uniform grid
    phi = np.linspace(-math.pi, math.pi, quad.phi_points, endpoint=False)
    diff = x[:, None] - x[None, :]
    phase = np.exp(-1j * diff[..., None] * phi).mean(axis=-1)

    resolved = m * phase
    return float(np.max(np.abs(resolved - np.eye(idx.size))))
