"""Gaussian sums over a shifted integer lattice, and the Jacobi theta sum.

The central object is

    L_k(alpha, beta, delta) = sum_n (n+delta)^k exp(-(n+delta)^2 alpha + (n+delta) beta)

for integer n, real alpha > 0, complex beta, delta in [0, 1).  Two evaluation
routes are provided: the direct sum (fast for alpha >= 1) and the Fourier-dual
sum obtained by Poisson resummation (fast for small alpha, where the dual
terms decay like exp(-pi^2 m^2 / alpha)).  Both truncate symmetrically around
their dominant term and both factor that dominant exponent out, so the
relative terms stay O(1) and the dominant image of the dual sum is reproduced
exactly when the corrections underflow.

The dual sum reads

    L_k = sqrt(pi/alpha) sum_m e^{2 pi i m delta} P_k(u_m) exp((beta - 2 pi i m)^2 / (4 alpha))

with u_m = (beta - 2 pi i m)/(2 alpha) and polynomials generated by
P_0 = 1, P_{j+1}(u) = u P_j(u) + P_j'(u)/(2 alpha).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import LatticeSumDivergence, ValidationError

__all__ = [
    "GaussSumParams",
    "gauss_lattice_sum",
    "theta3",
    "theta3_zero",
    "TERM_BUDGET",
]

TWO_PI = 2.0 * math.pi

# Lattice points examined before a sum is declared non-convergent.
TERM_BUDGET = 10_000

# A ring of terms this small relative to the running maximum ends the sum.
RELATIVE_CUTOFF = 1e-16

# Maximum moment order; matches the highest derivative the propagator needs.
MAX_DERIV_ORDER = 4


@dataclass(frozen=True)
class GaussSumParams:
    """Parameters (alpha, beta, delta) of a shifted Gaussian lattice sum.

    Parameters
    ----------
    alpha : float
        Gaussian width parameter, strictly positive.
    beta : complex
        Linear coefficient in the exponent.
    delta : float
        Lattice shift, in [0, 1).
    """

    alpha: float
    beta: complex
    delta: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0.0) or not math.isfinite(self.alpha):
            raise ValidationError(f"alpha must be positive and finite, got {self.alpha}")
        if not (0.0 <= self.delta < 1.0):
            raise ValidationError(f"delta must lie in [0, 1), got {self.delta}")
        b = complex(self.beta)
        if not (math.isfinite(b.real) and math.isfinite(b.imag)):
            raise ValidationError(f"beta must be finite, got {self.beta}")


class _Stack:
    """Factored moments L_0..L_kmax of one lattice sum.

    ``value(k) = sqrt_factor * exp(exp_log) * rels[k]``.  Keeping the pieces
    separate lets ratio-type consumers cancel the exponential parts without
    ever forming values that overflow float64.
    """

    __slots__ = ("sqrt_factor", "exp_log", "rels", "scale", "route")

    def __init__(self, sqrt_factor, exp_log, rels, scale, route):
        self.sqrt_factor = sqrt_factor
        self.exp_log = exp_log
        self.rels = rels
        self.scale = scale  # max |relative term| seen in the k=0 accumulation
        self.route = route

    def value(self, k: int) -> complex:
        return self.sqrt_factor * cmath.exp(self.exp_log) * self.rels[k]


def _direct_stack(alpha: complex, beta: complex, delta: float, kmax: int,
                  term_budget: int) -> _Stack:
    # Shift Im(beta) by the nearest multiple of 2*pi: exact identity
    # L(alpha, beta, delta) = e^{2 pi i M delta} L(alpha, beta - 2 pi i M, delta).
    # Keeps the term phases slow, which caps the cancellation noise.
    im_shift = round(beta.imag / TWO_PI)
    beta = complex(beta.real, beta.imag - TWO_PI * im_shift)

    # Peak of |exp(-x^2 alpha + x beta)| over real x, snapped to the lattice.
    ar = alpha.real if isinstance(alpha, complex) else alpha
    nstar = round(beta.real / (2.0 * ar) - delta)
    x0 = nstar + delta

    sums = [0j] * (kmax + 1)
    maxabs = [0.0] * (kmax + 1)
    ring = [0.0] * (kmax + 1)

    def add_point(j: int) -> None:
        # exponent difference e(x0+j) - e(x0), exact zero at j = 0
        x = x0 + j
        expo = cmath.exp(-j * (2.0 * x0 + j) * alpha + j * beta)
        pw = 1.0
        for k in range(kmax + 1):
            t = pw * expo
            sums[k] += t
            a = abs(t)
            if a > maxabs[k]:
                maxabs[k] = a
            if a > ring[k]:
                ring[k] = a
            pw *= x

    add_point(0)
    points = 1
    j = 1
    while True:
        for k in range(kmax + 1):
            ring[k] = 0.0
        add_point(j)
        add_point(-j)
        points += 2
        # each moment order must individually fall below its own running peak
        if j >= 2 and all(ring[k] <= RELATIVE_CUTOFF * maxabs[k] and maxabs[k] > 0.0
                          for k in range(kmax + 1)):
            break
        if points >= term_budget:
            raise LatticeSumDivergence("direct", points)
        j += 1

    e_peak = -x0 * x0 * alpha + x0 * beta + TWO_PI * 1j * im_shift * delta
    return _Stack(1.0 + 0j, e_peak, sums, max(maxabs[0], 1e-300), "direct")


def _poisson_polys(u: complex, c: complex, kmax: int) -> list:
    # P_k(u) with c = 1/(2 alpha); recursion P_{k+1} = u P_k + P_k'/(2 alpha)
    vals = [1.0 + 0j]
    if kmax >= 1:
        vals.append(u)
    if kmax >= 2:
        u2 = u * u
        vals.append(u2 + c)
    if kmax >= 3:
        vals.append(u * (u * u + 3.0 * c))
    if kmax >= 4:
        u2 = u * u
        vals.append(u2 * u2 + 6.0 * c * u2 + 3.0 * c * c)
    return vals[: kmax + 1]


def _poisson_stack(alpha: float, beta: complex, delta: float, kmax: int,
                   term_budget: int) -> _Stack:
    mstar = round(beta.imag / TWO_PI)
    c = 1.0 / (2.0 * alpha)

    sums = [0j] * (kmax + 1)
    maxabs = [0.0] * (kmax + 1)
    ring = [0.0] * (kmax + 1)

    def add_image(m: int) -> None:
        dm = m - mstar
        # g(m) - g(mstar), exact zero at m = mstar
        dg = -math.pi * 1j * dm * (beta - math.pi * 1j * (m + mstar)) / alpha
        w = cmath.exp(dg + TWO_PI * 1j * dm * delta)
        u = (beta - TWO_PI * 1j * m) * c
        polys = _poisson_polys(u, c, kmax)
        for k in range(kmax + 1):
            t = polys[k] * w
            sums[k] += t
            a = abs(t)
            if a > maxabs[k]:
                maxabs[k] = a
            if a > ring[k]:
                ring[k] = a

    add_image(mstar)
    points = 1
    j = 1
    while True:
        for k in range(kmax + 1):
            ring[k] = 0.0
        add_image(mstar + j)
        add_image(mstar - j)
        points += 2
        if j >= 2 and all(ring[k] <= RELATIVE_CUTOFF * maxabs[k] and maxabs[k] > 0.0
                          for k in range(kmax + 1)):
            break
        if points >= term_budget:
            raise LatticeSumDivergence("poisson", points)
        j += 1

    g_peak = (beta - TWO_PI * 1j * mstar) ** 2 / (4.0 * alpha)
    exp_log = g_peak + TWO_PI * 1j * mstar * delta
    sqrt_factor = complex(math.sqrt(math.pi / alpha), 0.0)
    return _Stack(sqrt_factor, exp_log, sums, max(maxabs[0], 1e-300), "poisson")


def _stack(alpha: float, beta: complex, delta: float, kmax: int,
           route: str = "auto", term_budget: int = TERM_BUDGET) -> _Stack:
    if route == "auto":
        route = "direct" if alpha >= 1.0 else "poisson"
    if route == "direct":
        return _direct_stack(alpha, complex(beta), delta, kmax, term_budget)
    if route == "poisson":
        return _poisson_stack(alpha, complex(beta), delta, kmax, term_budget)
    raise ValidationError(f"unknown route {route!r}; expected auto, direct or poisson")


def gauss_lattice_sum(params: GaussSumParams, deriv_order: int = 0,
                      route: str = "auto", term_budget: int = TERM_BUDGET) -> complex:
    """Evaluate L_k(alpha, beta, delta) for k = ``deriv_order``.

    Parameters
    ----------
    params : GaussSumParams
        Sum parameters.
    deriv_order : int
        Moment order k, 0 through 4.  L_k is the k-th beta-derivative of L_0.
    route : str
        "auto" (direct for alpha >= 1, Poisson-resummed below), "direct", or
        "poisson".  Both routes give the same value to ~1e-14 relative; the
        keyword exists so the agreement itself can be tested.
    term_budget : int
        Lattice points examined before raising
        :class:`~rotorkit.errors.LatticeSumDivergence`.

    Returns
    -------
    complex
    """
    if deriv_order not in range(MAX_DERIV_ORDER + 1):
        raise ValidationError(f"deriv_order must be 0..{MAX_DERIV_ORDER}, got {deriv_order}")
    st = _stack(params.alpha, params.beta, params.delta, deriv_order, route, term_budget)
    return st.value(deriv_order)


def theta3(w: complex, tau: complex, term_budget: int = TERM_BUDGET) -> complex:
    """Jacobi theta sum  theta_3(w, tau) = sum_n exp(i pi n^2 tau + 2 pi i n w).

    Parameters
    ----------
    w : complex
        Argument; the sum is 1-periodic in w and quasi-periodic under w -> w+tau.
    tau : complex
        Lattice parameter with Im(tau) > 0.

    Returns
    -------
    complex

    Notes
    -----
    Zeros form the lattice w = (k + 1/2) + (m + 1/2) tau; see
    :func:`theta3_zero`.
    """
    tau = complex(tau)
    if not tau.imag > 0.0:
        raise ValidationError(f"theta3 requires Im(tau) > 0, got {tau}")
    w = complex(w)
    # exp(i pi n^2 tau + 2 pi i n w) = exp(-n^2 a + n b)
    a = -1j * math.pi * tau   # Re(a) = pi Im(tau) > 0
    b = TWO_PI * 1j * w
    st = _direct_stack(a, b, 0.0, 0, term_budget)
    return st.value(0)


def theta3_zero(tau: complex, k: int = 0, m: int = 0) -> complex:
    """Zero of theta3(., tau) indexed by integers (k, m)."""
    return (k + 0.5) + (m + 0.5) * complex(tau)
