"""Semiclassical coherent-state propagator on the cylinder.

The propagator between coherent-state labels z_I and z_F over time tau is
approximated by a sum over winding numbers n and trajectory branches nu of

    K = sqrt(pi/s^2) sum_{n,nu} e^{2 pi i n delta} * dv(tau)^{-1/2}
        * exp{ s^2 (i/hbar) int d12 dt  +  (i/hbar) S  -  [z_I^2 + B_n^2]/(4 s^2) }

with B_n = conj(z_F) - 2 pi n.  Each branch is a complexified Hamilton
trajectory of the holomorphic symbol H(w, z) = <wbar|Hhat|z> / <wbar|z>:

    du/dt = -2 s^2 (i/hbar) d1 H(v, u),   u(0) = z_I,
    dv/dt = +2 s^2 (i/hbar) d2 H(v, u),   v(tau) = B_n,

found by single shooting in v(0) with a Newton iteration whose Jacobian
dv(tau) comes from the linearized flow integrated alongside.  dv(tau)^{-1/2}
uses the continuously tracked phase of dv(t) from dv(0) = 1, so no separate
branch index is needed.  The overall constant is pinned by the tau -> 0 limit,
where the winding sum collapses onto the coherent-state overlap.

The module also carries the exact oracles the approximation is judged
against: spectral diagonalization on a coefficient window, the closed-form
free-particle propagator on the line, and the angle-basis propagator obtained
by quadrature over the identity-resolution measure.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (BvpConvergenceError, CausticError, NearZeroDenominator,
                     SpectralWindowError, StepResolutionError, ValidationError)
from .lattice import TWO_PI, _stack
from .states import QuadratureSpec, Representation, coherent_coefficients

__all__ = [
    "HolomorphicHamiltonian",
    "HPartials",
    "ComplexTrajectory",
    "PropagatorBranch",
    "PropagatorResult",
    "PropagatorOptions",
    "h_matrix_element",
    "h_partials",
    "solve_complex_bvp",
    "stability_X",
    "complex_action",
    "semiclassical_propagator",
    "exact_propagator_spectral",
    "line_free_propagator",
    "angle_propagator",
    "angle_spectral_sum",
]

HAMILTONIAN_KINDS = ("free_rotor", "pendulum")

NEWTON_RUNAWAY = 50.0
RICCATI_LIMIT = 1e12
DENOMINATOR_FLOOR = 1e-280
MERGE_TOL = 1e-5


@dataclass(frozen=True)
class HolomorphicHamiltonian:
    """Band-limited Hamiltonian H = p^2/2 - k_pend cos(phi).

    kind "free_rotor" forces k_pend = 0; "pendulum" takes any real coupling.
    Matrix elements in the index basis: diagonal (n+delta)^2 hbar^2 / 2,
    off-diagonal -k_pend/2 on the two adjacent bands.
    """

    kind: str
    k_pend: float = 0.0

    def __post_init__(self):
        if self.kind not in HAMILTONIAN_KINDS:
            raise ValidationError(
                f"unknown Hamiltonian kind {self.kind!r}; expected one of {HAMILTONIAN_KINDS}")
        if not math.isfinite(self.k_pend):
            raise ValidationError("k_pend must be finite")
        if self.kind == "free_rotor" and self.k_pend != 0.0:
            raise ValidationError("free_rotor is structurally k_pend = 0")

    @property
    def coupling(self) -> float:
        return self.k_pend


class HPartials(NamedTuple):
    d1: complex   # dH/dw
    d2: complex   # dH/dz
    d11: complex  # d2H/dw2
    d22: complex  # d2H/dz2
    d12: complex  # d2H/dwdz


def _h_core(H: HolomorphicHamiltonian, w: complex, z: complex, rep: Representation):
    """Symbol value and all partials through second order at (w, z).

    Assembled from lattice-sum stacks in shared relative units (the b = 0
    stack's peak exponential), so the unbounded Gaussian prefactors cancel
    before anything is exponentiated.
    """
    s2 = rep.s * rep.s
    hb = rep.hbar
    w = complex(w)
    z = complex(z)
    beta0 = 1j * (w - z)
    st0 = _stack(s2, beta0, rep.delta, 4)
    L = st0.rels

    if abs(L[0]) < DENOMINATOR_FLOOR * st0.scale:
        raise NearZeroDenominator(
            f"<wbar|z> vanishes at w={w:.9g}, z={z:.9g} (theta zero of the overlap)")

    # six-slot tuples: (value, d_w, d_z, d_ww, d_wz, d_zz), all in st0 units
    half_h2 = 0.5 * hb * hb
    num = [half_h2 * L[2], half_h2 * 1j * L[3], -half_h2 * 1j * L[3],
           -half_h2 * L[4], half_h2 * L[4], -half_h2 * L[4]]
    den = (L[0], 1j * L[1], -1j * L[1], -L[2], L[2], -L[2])

    k = H.coupling
    if k != 0.0:
        for b in (1, -1):
            stb = _stack(s2, beta0 - b * s2, rep.delta, 2)
            # e_b L_k^b re-expressed in st0 units; the exponent difference is
            # O(|beta0|) even when both exponents are individually huge
            wgt = cmath.exp(stb.exp_log - st0.exp_log + 1j * b * w - 0.5 * b * b * s2)
            p0 = wgt * stb.rels[0]
            p1 = wgt * stb.rels[1]
            p2 = wgt * stb.rels[2]
            c = -0.5 * k
            num[0] += c * p0
            num[1] += c * 1j * (b * p0 + p1)
            num[2] += c * (-1j) * p1
            num[3] += c * (-(b * b) * p0 - 2.0 * b * p1 - p2)
            num[4] += c * (b * p1 + p2)
            num[5] += c * (-p2)

    d = den[0]
    f = num[0] / d
    f_w = (num[1] - f * den[1]) / d
    f_z = (num[2] - f * den[2]) / d
    f_ww = (num[3] - 2.0 * f_w * den[1] - f * den[3]) / d
    f_wz = (num[4] - f_w * den[2] - f_z * den[1] - f * den[4]) / d
    f_zz = (num[5] - 2.0 * f_z * den[2] - f * den[5]) / d
    return f, HPartials(f_w, f_z, f_ww, f_zz, f_wz)


def h_matrix_element(H: HolomorphicHamiltonian, w: complex, z: complex,
                     rep: Representation) -> complex:
    """H(w, z) = <wbar|Hhat|z> / <wbar|z>, holomorphic in both arguments."""
    return _h_core(H, w, z, rep)[0]


def h_partials(H: HolomorphicHamiltonian, w: complex, z: complex,
               rep: Representation) -> HPartials:
    """(d1, d2, d11, d22, d12): analytic partials of the symbol at (w, z)."""
    return _h_core(H, w, z, rep)[1]


@dataclass
class ComplexTrajectory:
    """One complexified Hamilton trajectory with its assembled factors.

    u, v solve the flow with u(0) = z_I and v(tau) = B = conj(z_F) - 2 pi n;
    du, dv are the linearized solutions with du(0) = 0, dv(0) = 1; X is the
    stability ratio du/(4 s^2 dv) on the same grid (X(0) = 0); S the complex
    action including boundary terms; prefactor_ratio = dv(0)/dv(tau);
    sqrt_prefactor its square root on the branch tracked continuously from
    t = 0; cross_term = s^2 (i/hbar) int d12 dt.
    """

    winding_n: int
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    X: np.ndarray
    S: complex
    prefactor_ratio: complex
    sqrt_prefactor: complex
    cross_term: complex
    v0: complex
    endpoint: complex
    boundary_residual: float
    steps: int


class PropagatorBranch(NamedTuple):
    winding_n: int
    branch_index: int
    contribution: complex
    trajectory: ComplexTrajectory


@dataclass
class PropagatorResult:
    value: complex
    branches: list
    truncation_report: dict


@dataclass(frozen=True)
class PropagatorOptions:
    """Solver budget and winding policy for semiclassical_propagator.

    seeds per winding: conj(z_I), the endpoint B_n, and ring_seeds points on
    a circle of seed_radius (default 0.5 s) around conj(z_I).  The heuristic
    is documented as incomplete: branches it misses are not found.  windings,
    when given, bypasses the Gaussian-bound truncation entirely.
    """

    steps: int = 400
    newton_tol: float = 1e-10
    max_newton: int = 50
    seed_radius: float | None = None
    ring_seeds: int = 8
    dedupe_tol: float = 1e-8
    merge_tol: float = 1e-5
    resolution_tol: float = 1e-9
    max_halvings: int = 4
    winding_rel_cutoff: float = 1e-12
    max_windings: int = 12
    windings: tuple | None = None
    skip_failed_branches: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.steps < 2:
            raise ValidationError("steps must be at least 2")
        if self.max_newton < 1 or self.max_halvings < 0:
            raise ValidationError("iteration budgets must be positive")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")


def _flow_rhs(H, rep, c, y):
    u, v, du, dv = y
    hp = _h_core(H, v, u, rep)[1]
    return (-c * hp.d1,
            c * hp.d2,
            -c * (hp.d11 * dv + hp.d12 * du),
            c * (hp.d12 * dv + hp.d22 * du))


def _integrate_flow(H, rep, z_I, v0, tau, steps):
    """Fixed-step RK4 of (u, v, du, dv) from (z_I, v0, 0, 1)."""
    c = 2.0 * rep.s * rep.s * 1j / rep.hbar
    h = tau / steps
    y = (complex(z_I), complex(v0), 0j, 1.0 + 0j)
    out = np.empty((4, steps + 1), dtype=np.complex128)
    out[:, 0] = y
    for k in range(steps):
        k1 = _flow_rhs(H, rep, c, y)
        y2 = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
        k2 = _flow_rhs(H, rep, c, y2)
        y3 = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
        k3 = _flow_rhs(H, rep, c, y3)
        y4 = tuple(a + h * b for a, b in zip(y, k3))
        k4 = _flow_rhs(H, rep, c, y4)
        y = tuple(a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                  for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
        out[:, k + 1] = y
    return out


def _simpson(values: np.ndarray, h: float) -> complex:
    n = values.size - 1
    if n % 2:
        raise ValidationError("Simpson quadrature needs an even step count")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return complex((h / 3.0) * np.dot(w, values))


def _even(n: int) -> int:
    return n if n % 2 == 0 else n + 1


def _node_partials(H, rep, traj_u, traj_v):
    vals = np.empty(traj_u.size, dtype=np.complex128)
    d1 = np.empty_like(vals)
    d2 = np.empty_like(vals)
    d12 = np.empty_like(vals)
    for k in range(traj_u.size):
        f, hp = _h_core(H, traj_v[k], traj_u[k], rep)
        vals[k] = f
        d1[k] = hp.d1
        d2[k] = hp.d2
        d12[k] = hp.d12
    return vals, d1, d2, d12


def complex_action(traj: ComplexTrajectory, H: HolomorphicHamiltonian,
                   rep: Representation) -> complex:
    """S = int [i hbar (u' v - v' u)/(4 s^2) - H(v,u)] dt - i hbar (uv|_0 + uv|_tau)/(4 s^2).

    On shell the integrand reduces to (d1 v + d2 u)/2 - H, which is what is
    integrated (Simpson on the trajectory grid).
    """
    h = float(traj.times[1] - traj.times[0])
    vals, d1, d2, _ = _node_partials(H, rep, traj.u, traj.v)
    integrand = 0.5 * (d1 * traj.v + d2 * traj.u) - vals
    s_int = _simpson(integrand, h)
    s2 = rep.s * rep.s
    boundary = -1j * rep.hbar * (traj.u[0] * traj.v[0] + traj.u[-1] * traj.v[-1]) / (4.0 * s2)
    return s_int + boundary


def _cross_term(traj_u, traj_v, H, rep, h):
    _, _, _, d12 = _node_partials(H, rep, traj_u, traj_v)
    return rep.s * rep.s * (1j / rep.hbar) * _simpson(d12, h)


def _tracked_sqrt_prefactor(dv: np.ndarray):
    """(ratio, sqrt) for dv(0)/dv(tau) with the phase of dv tracked from t=0.

    Adjacent phase steps must stay below pi/2; the caller refines the grid
    until they do, so the half-phase is branch-unambiguous.
    """
    steps = np.angle(dv[1:] / dv[:-1])
    if np.max(np.abs(steps)) >= 0.5 * math.pi:
        return None, None
    theta = float(steps.sum())
    mag = abs(dv[-1])
    if mag == 0.0:
        raise CausticError("dv(tau) = 0: degenerate prefactor (caustic)")
    ratio = dv[0] / dv[-1]
    root = math.sqrt(1.0 / mag) * cmath.exp(-0.5j * theta)
    return ratio, root


def _newton_shoot(H, rep, z_I, B, tau, seed, steps, tol, max_iter, known):
    """Newton iteration on v(0); returns (v0, sol) or None.

    Iterates merging into a known root (within merge distance) are abandoned
    early; iterates running away from both the seed and the endpoint are
    abandoned as failed.
    """
    v0 = complex(seed)
    for _ in range(max_iter):
        for r, _sol in known:
            if abs(v0 - r) < MERGE_TOL:
                return None
        sol = _integrate_flow(H, rep, z_I, v0, tau, steps)
        resid = sol[1, -1] - B
        if not (cmath.isfinite(resid) and cmath.isfinite(sol[3, -1])):
            return None
        if abs(resid) <= tol:
            return (v0, sol)
        dv_end = sol[3, -1]
        if dv_end == 0:
            return None
        v0 = v0 - resid / dv_end
        if min(abs(v0 - seed), abs(v0 - B)) > NEWTON_RUNAWAY:
            return None
    return None


def solve_complex_bvp(H: HolomorphicHamiltonian, rep: Representation,
                      z_I: complex, z_F: complex, winding_n: int, tau: float,
                      seeds, steps: int = 400, newton_tol: float = 1e-10,
                      max_newton: int = 50, dedupe_tol: float = 1e-8,
                      resolution_tol: float = 1e-9, max_halvings: int = 4) -> list:
    """All boundary-value trajectories found from the given v(0) seeds.

    Each returned trajectory satisfies |v(tau) - (conj(z_F) - 2 pi n)| below
    newton_tol, passes the step-halving resolution check (v(tau) moves less
    than resolution_tol when the step is halved), and carries its action,
    stability ratio, and prefactor factors.  Roots closer than dedupe_tol in
    v(0) are merged; branch order follows seed order.
    """
    if not (tau > 0.0):
        raise ValidationError("tau must be positive")
    seeds = [complex(s) for s in seeds]
    if not seeds:
        raise ValidationError("at least one seed is required")
    steps = _even(int(steps))
    B = z_F.conjugate() - TWO_PI * winding_n

    roots: list = []
    for seed in seeds:
        hit = _newton_shoot(H, rep, z_I, B, tau, seed, steps, newton_tol,
                            max_newton, roots)
        if hit is None:
            continue
        v0, sol = hit
        if all(abs(v0 - r) >= dedupe_tol for r, _ in roots):
            roots.append((v0, sol))
    if not roots:
        raise BvpConvergenceError(
            f"no seed converged for winding n={winding_n}, tau={tau:g} "
            f"({len(seeds)} seeds, {max_newton} Newton iterations)")

    out = []
    for v0, sol in roots:
        traj = _resolve_and_assemble(H, rep, z_I, B, v0, tau, winding_n, sol,
                                     steps, newton_tol, max_newton,
                                     resolution_tol, max_halvings)
        out.append(traj)
    return out


def _resolve_and_assemble(H, rep, z_I, B, v0, tau, winding_n, sol, steps,
                          newton_tol, max_newton, resolution_tol, max_halvings):
    """Step-halving acceptance, then factor assembly for one root."""
    n_now = steps
    for _ in range(max_halvings + 1):
        fine = _integrate_flow(H, rep, z_I, v0, tau, 2 * n_now)
        drift = abs(fine[1, -1] - sol[1, -1])
        ratio, root = _tracked_sqrt_prefactor(sol[3])
        if drift <= resolution_tol and ratio is not None:
            break
        # re-converge on the finer grid and retry
        n_now = 2 * n_now
        hit = _newton_shoot(H, rep, z_I, B, tau, v0, n_now, newton_tol,
                            max_newton, [])
        if hit is None:
            raise BvpConvergenceError(
                f"root near v0={v0:.9g} lost while refining the step (n={n_now})")
        v0, sol = hit
    else:
        raise StepResolutionError(
            f"v(tau) still moves {drift:.3g} > {resolution_tol:g} after "
            f"{max_halvings} step halvings (winding {winding_n})")

    s2 = rep.s * rep.s
    times = np.linspace(0.0, tau, n_now + 1)
    u, v, du, dv = sol
    small = np.abs(dv) < 1.0 / RICCATI_LIMIT
    if small.any():
        k = int(np.argmax(small))
        raise CausticError(
            f"stability ratio blows up at t={times[k]:.6g} (dv -> 0)")
    X = du / (4.0 * s2 * dv)
    if np.max(np.abs(X)) > RICCATI_LIMIT:
        k = int(np.argmax(np.abs(X) > RICCATI_LIMIT))
        raise CausticError(f"|X| exceeds {RICCATI_LIMIT:g} at t={times[k]:.6g}")

    traj = ComplexTrajectory(
        winding_n=winding_n, times=times, u=u, v=v, du=du, dv=dv, X=X,
        S=0j, prefactor_ratio=ratio, sqrt_prefactor=root, cross_term=0j,
        v0=v0, endpoint=B, boundary_residual=abs(v[-1] - B), steps=n_now)
    traj.S = complex_action(traj, H, rep)
    traj.cross_term = _cross_term(u, v, H, rep, float(times[1] - times[0]))
    return traj


def stability_X(traj: ComplexTrajectory, H: HolomorphicHamiltonian,
                rep: Representation) -> np.ndarray:
    """X(t) by direct Riccati integration along the trajectory.

    Xdot = -(i/2 hbar) d11 - 4 s^2 (i/hbar) X d12 - 8 s^4 (i/hbar) X^2 d22,
    X(0) = 0, integrated jointly with (u, v) on the trajectory's grid.  The
    result agrees with the stored linearized-route X to the integration
    accuracy; |X| > 1e12 raises the caustic error with the blow-up time.
    """
    s2 = rep.s * rep.s
    hb = rep.hbar
    c = 2.0 * s2 * 1j / hb
    steps = traj.steps
    h = float(traj.times[1] - traj.times[0])

    def rhs(y):
        u, v, x = y
        hp = _h_core(H, v, u, rep)[1]
        xdot = (-(0.5j / hb) * hp.d11 - 4.0 * s2 * (1j / hb) * x * hp.d12
                - 8.0 * s2 * s2 * (1j / hb) * x * x * hp.d22)
        return (-c * hp.d1, c * hp.d2, xdot)

    y = (complex(traj.u[0]), complex(traj.v[0]), 0j)
    out = np.empty(steps + 1, dtype=np.complex128)
    out[0] = 0j
    for k in range(steps):
        k1 = rhs(y)
        k2 = rhs(tuple(a + 0.5 * h * b for a, b in zip(y, k1)))
        k3 = rhs(tuple(a + 0.5 * h * b for a, b in zip(y, k2)))
        k4 = rhs(tuple(a + h * b for a, b in zip(y, k3)))
        y = tuple(a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                  for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
        if abs(y[2]) > RICCATI_LIMIT:
            raise CausticError(
                f"Riccati |X| exceeds {RICCATI_LIMIT:g} at t={(k + 1) * h:.6g}")
        out[k + 1] = y[2]
    return out


def _winding_candidates(rep, z_I, z_F, tau, opts):
    """(ordered windings, bounds) honoring the Gaussian truncation rule.

    The magnitude scale of a winding contribution is the free-rotor one,
    exp(-Re[(B_n - z_I)^2 / (4 s^2 lambda)]) with lambda = 1 + i hbar tau/(2 s^2):
    the tau = 0 Gaussian overlap tail widened by the quantum spreading.  The
    spreading factor matters: at tau comparable to s^2 the bare overlap tail
    underestimates outer windings by hundreds of orders of magnitude and
    would truncate contributions of O(10%) weight.
    """
    s2 = rep.s * rep.s
    if opts.windings is not None:
        ns = [int(n) for n in opts.windings]
        return ns, {n: None for n in ns}, {}

    n_star = round((z_F.conjugate() - z_I).real / TWO_PI)
    cands = [n_star]
    for k in range(1, opts.max_windings + 1):
        cands.extend((n_star + k, n_star - k))
    lam = 1.0 + 1j * rep.hbar * tau / (2.0 * s2)

    def log_bound(n):
        d = z_F.conjugate() - TWO_PI * n - z_I
        return -((d * d) / (4.0 * s2 * lam)).real

    cands.sort(key=lambda n: abs(z_F.conjugate() - TWO_PI * n - z_I))
    kept, dropped = [], {}
    run_max = -math.inf
    log_cut = math.log(opts.winding_rel_cutoff)
    for n in cands:
        lb = log_bound(n)
        run_max = max(run_max, lb)
        if lb < run_max + log_cut:
            dropped[n] = lb
            break
        kept.append(n)
    bounds = {n: log_bound(n) for n in kept}
    return kept, bounds, dropped


def semiclassical_propagator(H: HolomorphicHamiltonian, rep: Representation,
                             z_I: complex, z_F: complex, tau: float,
                             opts: PropagatorOptions | None = None) -> PropagatorResult:
    """Winding-and-branch sum for K(z_F, z_I; tau).

    Windings are visited in order of increasing |conj(z_F) - 2 pi n - z_I|
    and truncated when the Gaussian endpoint bound falls below
    winding_rel_cutoff of the running maximum bound.  Branch solves are
    independent; with opts.threads > 1 the windings are solved concurrently
    and reduced in deterministic order.
    """
    if opts is None:
        opts = PropagatorOptions()
    z_I = complex(z_I)
    z_F = complex(z_F)
    ns, bounds, dropped = _winding_candidates(rep, z_I, z_F, tau, opts)
    s2 = rep.s * rep.s
    radius = 0.5 * rep.s if opts.seed_radius is None else opts.seed_radius
    ring = [z_I.conjugate() + radius * cmath.exp(2j * math.pi * k / opts.ring_seeds)
            for k in range(opts.ring_seeds)]

    def solve_one(n):
        seeds = [z_I.conjugate(), z_F.conjugate() - TWO_PI * n] + ring
        try:
            trajs = solve_complex_bvp(
                H, rep, z_I, z_F, n, tau, seeds, steps=opts.steps,
                newton_tol=opts.newton_tol, max_newton=opts.max_newton,
                dedupe_tol=opts.dedupe_tol, resolution_tol=opts.resolution_tol,
                max_halvings=opts.max_halvings)
        except (BvpConvergenceError, StepResolutionError, CausticError):
            if opts.skip_failed_branches:
                return n, None
            raise
        return n, trajs

    if opts.threads > 1 and len(ns) > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            solved = dict(pool.map(solve_one, ns))
    else:
        solved = dict(solve_one(n) for n in ns)

    front = math.sqrt(math.pi / s2)
    branches = []
    failed = []
    value = 0j
    for n in ns:
        trajs = solved[n]
        if trajs is None:
            failed.append(n)
            continue
        phase_n = cmath.exp(TWO_PI * 1j * n * rep.delta)
        b = z_F.conjugate() - TWO_PI * n
        end_gauss = -(z_I * z_I + b * b) / (4.0 * s2)
        for idx, traj in enumerate(trajs):
            expo = traj.cross_term + (1j / rep.hbar) * traj.S + end_gauss
            contrib = front * phase_n * traj.sqrt_prefactor * cmath.exp(expo)
            branches.append(PropagatorBranch(n, idx, contrib, traj))
            value += contrib

    report = {
        "n_star": round((z_F.conjugate() - z_I).real / TWO_PI),
        "included": list(ns),
        "log_bounds": {str(n): bounds[n] for n in ns},
        "dropped": {str(n): lb for n, lb in dropped.items()},
        "largest_dropped_bound": (math.exp(max(dropped.values()))
                                  if dropped else None),
        "failed": failed,
        "branch_count": len(branches),
    }
    return PropagatorResult(value=value, branches=branches, truncation_report=report)


def _auto_window(rep, labels, tol=1e-18, pad=8):
    half = math.sqrt(-2.0 * math.log(tol)) / rep.s
    centers = [z.imag / (rep.s * rep.s * rep.hbar) * rep.hbar for z in labels]
    lo = math.floor(min(centers) - half - rep.delta) - pad
    hi = math.ceil(max(centers) + half - rep.delta) + pad
    return lo, hi


def _hamiltonian_matrix(H, rep, indices):
    x = indices + rep.delta
    mat = np.diag(0.5 * (rep.hbar * x) ** 2)
    if H.coupling != 0.0:
        off = -0.5 * H.coupling * np.ones(indices.size - 1)
        mat += np.diag(off, 1) + np.diag(off, -1)
    return mat


def exact_propagator_spectral(H: HolomorphicHamiltonian, rep: Representation,
                              z_I: complex, z_F: complex, tau: float,
                              window: tuple | None = None) -> complex:
    """<z_F| exp(-i Hhat tau / hbar) |z_I> by windowed diagonalization.

    The window is grown (doubling) until the coherent coefficients of both
    endpoints are below 1e-14 of their maximum at the edges; a window that
    would exceed 4096 indices raises the window error.
    """
    z_I = complex(z_I)
    z_F = complex(z_F)
    if window is None:
        window = _auto_window(rep, (z_I, z_F))
    lo, hi = int(window[0]), int(window[1])
    while True:
        if hi - lo + 1 > 4096:
            raise SpectralWindowError(
                f"window [{lo}, {hi}] exceeds 4096 indices without meeting "
                "the edge criterion")
        idx = np.arange(lo, hi + 1)
        c_i = coherent_coefficients(rep, z_I, idx)
        c_f = coherent_coefficients(rep, z_F, idx)
        edge = max(abs(c_i[0]), abs(c_i[-1]), abs(c_f[0]), abs(c_f[-1]))
        peak = max(np.max(np.abs(c_i)), np.max(np.abs(c_f)))
        if edge <= 1e-14 * peak:
            break
        width = hi - lo + 1
        lo -= (width + 1) // 2
        hi += (width + 1) // 2
    evals, vecs = np.linalg.eigh(_hamiltonian_matrix(H, rep, idx))
    a = vecs.T @ np.conj(c_f)
    b = vecs.T @ c_i
    return complex(np.sum(a * np.exp(-1j * evals * tau / rep.hbar) * b))


def line_free_propagator(rep: Representation, z_I: complex, z_F: complex,
                         tau: float) -> complex:
    """Closed-form free-particle coherent-state propagator on the real line.

    K = sqrt(pi/s^2) lambda^{-1/2} exp(-(conj(z_F) - z_I)^2 / (4 s^2 lambda)),
    lambda = 1 + i hbar tau / (2 s^2), principal square root.  Serves as the
    per-winding reference in the decomposition-ratio test.
    """
    s2 = rep.s * rep.s
    lam = 1.0 + 1j * rep.hbar * tau / (2.0 * s2)
    d = z_F.conjugate() - complex(z_I)
    return math.sqrt(math.pi / s2) / cmath.sqrt(lam) * cmath.exp(
        -d * d / (4.0 * s2 * lam))


def angle_spectral_sum(H: HolomorphicHamiltonian, rep: Representation,
                       phi_I: float, phi_F: float, tau: float,
                       window: tuple) -> complex:
    """Direct spectral angle propagator (1/2pi) sum e^{i x_m phi_F} U_mn e^{-i x_n phi_I}."""
    lo, hi = int(window[0]), int(window[1])
    idx = np.arange(lo, hi + 1)
    x = idx + rep.delta
    evals, vecs = np.linalg.eigh(_hamiltonian_matrix(H, rep, idx))
    a = vecs.T @ np.exp(1j * x * phi_F)
    b = vecs.T @ np.exp(-1j * x * phi_I)
    return complex(np.sum(a * np.exp(-1j * evals * tau / rep.hbar) * b) / TWO_PI)


def angle_propagator(H: HolomorphicHamiltonian, rep: Representation,
                     phi_I: float, phi_F: float, tau: float,
                     quad: QuadratureSpec, kernel: str = "spectral",
                     window: tuple | None = None,
                     opts: PropagatorOptions | None = None) -> complex:
    """<phi_F| exp(-i Hhat tau/hbar) |phi_I> by identity-resolution quadrature.

    Both endpoints are smeared over coherent labels z = phi_j + i s x_k
    (uniform phi, Gauss-Hermite x, weights w_k/(sqrt(pi) J)) and the chosen
    kernel is convolved between them: "spectral" uses the windowed exact
    propagator in factorized form, "semiclassical" evaluates the full winding
    sum per node pair (quadratically many solves; keep quad small).
    Angle wavefunctions carry the 1/sqrt(2 pi) normalization, so the result
    converges to angle_spectral_sum on the same window.
    """
    if kernel not in ("spectral", "semiclassical"):
        raise ValidationError(f"unknown kernel {kernel!r}")
    s = rep.s
    nodes_x, nodes_w = np.polynomial.hermite.hermgauss(quad.p_points)
    phis = np.linspace(-math.pi, math.pi, quad.phi_points, endpoint=False)
    z_nodes = (phis[:, None] + 1j * s * nodes_x[None, :]).ravel()
    wts = np.broadcast_to(nodes_w[None, :] / (math.sqrt(math.pi) * quad.phi_points),
                          (quad.phi_points, quad.p_points)).ravel()

    if window is None:
        window = _auto_window(rep, (complex(z) for z in
                                    (np.min(z_nodes.imag) * 1j, np.max(z_nodes.imag) * 1j)))
    lo, hi = int(window[0]), int(window[1])
    idx = np.arange(lo, hi + 1)
    x = idx + rep.delta
    span = hi - lo
    if quad.phi_points <= span:
        raise ValidationError(
            f"phi_points={quad.phi_points} must exceed the window span {span} "
            "for the periodic trapezoid rule to be exact")

    # coefficient matrix c[m, node] and angle wavefunctions at the nodes
    cmat = np.exp(-0.5 * (x[:, None] * s) ** 2 - 1j * x[:, None] * z_nodes[None, :])
    bra_f = np.exp(1j * x * phi_F) / math.sqrt(TWO_PI)   # <phi_F|m>
    ket_i = np.exp(-1j * x * phi_I) / math.sqrt(TWO_PI)  # <n|phi_I>
    # <phi_F|z> = sum_m <phi_F|m> c_m(z), <z|phi_I> = sum_n conj(c_n(z)) <n|phi_I>
    phi_f_at = bra_f @ cmat
    phi_i_at = ket_i @ np.conj(cmat)

    if kernel == "spectral":
        evals, vecs = np.linalg.eigh(_hamiltonian_matrix(H, rep, idx))
        a = vecs.T @ (np.conj(cmat) @ (wts * phi_f_at))
        b = vecs.T @ (cmat @ (wts * phi_i_at))
        return complex(np.sum(a * np.exp(-1j * evals * tau / rep.hbar) * b))

    total = 0j
    for zf, wf, af in zip(z_nodes, wts, phi_f_at):
        for zi, wi, bi in zip(z_nodes, wts, phi_i_at):
            k_val = semiclassical_propagator(H, rep, zi, zf, tau, opts).value
            total += wf * wi * af * k_val * bi
    return complex(total)
