"""Husimi layer: Bargmann evaluation, fields, strip zeros, reconstruction."""

import cmath
import math

import numpy as np
import pytest

from rotorkit import (
    BargmannFunction,
    CotangentPole,
    CylinderGrid,
    EvaluationBandError,
    PhasePoint,
    Representation,
    StateVector,
    StripZeros,
    ValidationError,
    bargmann_eval,
    branch_corrected_log_product,
    coherent_state,
    determine_l,
    find_strip_zeros,
    fit_log_constant,
    hadamard_reconstruct,
    husimi_field,
    husimi_mass,
    sin_hadamard_truncated,
)

from oracles import brute_bargmann, companion_strip_roots

TWO_PI = 2.0 * math.pi


def random_state(rng, support):
    n_min = int(rng.integers(-4, 1))
    coeffs = rng.standard_normal(support) + 1j * rng.standard_normal(support)
    # keep the polynomial degree exact: no tiny end coefficients
    for k in (0, support - 1):
        if abs(coeffs[k]) < 0.1:
            coeffs[k] += 0.5 * (1.0 + 1j)
    return StateVector(n_min, coeffs)


def test_bargmann_matches_direct_sum():
    rng = np.random.default_rng(2)
    rep = Representation(0.3, 0.7)
    psi = random_state(rng, 6)
    f = BargmannFunction(rep, psi)
    for _ in range(20):
        z = complex(rng.uniform(0.0, TWO_PI), rng.uniform(-2.0, 2.0))
        ref = brute_bargmann(psi, rep, z)
        assert abs(f(z) - ref) <= 1e-13 * abs(ref)


def test_band_guard_on_truncated_windows():
    rep = Representation(0.0, 0.5)
    psi = coherent_state(rep, PhasePoint(0.0, 0.0), tol=1e-16)
    f = BargmannFunction(rep, psi, complete=False)
    lo, hi = f.im_band()
    assert lo < 0.0 < hi
    f(0.5 * hi * 1j)  # inside: fine
    with pytest.raises(EvaluationBandError):
        f(2.0 * hi * 1j)


def test_husimi_mass_close_to_one():
    rep = Representation(0.0, 0.5)
    psi = coherent_state(rep, PhasePoint(0.5, 0.25), tol=1e-30)
    f = BargmannFunction(rep, psi)
    grid = CylinderGrid(96, -2.0, 2.5, 121)
    field = husimi_field(f, grid)
    assert np.all(field >= 0.0)
    assert abs(husimi_mass(grid, field) - 1.0) < 1e-4


def test_husimi_peak_sits_at_the_label():
    rep = Representation(0.0, 0.5)
    psi = coherent_state(rep, PhasePoint(math.pi / 2.0, 0.5))
    f = BargmannFunction(rep, psi)
    grid = CylinderGrid(128, -2.0, 2.0, 81)
    field = husimi_field(f, grid)
    i, j = np.unravel_index(np.argmax(field), field.shape)
    assert abs(grid.phi_values()[i] - math.pi / 2.0) < TWO_PI / 128
    assert abs(grid.p_values()[j] - 0.5) < 4.0 / 80 + 1e-12


def test_two_term_zero_closed_form():
    """c (1 + e^{-iz}) has its lone strip zero at pi + i s^2/2 and the
    fitted constant is log(1 + e^{-s^2/2})."""
    rep = Representation(0.0, 0.5)
    psi = StateVector(0, [1.0, 1.0])
    f = BargmannFunction(rep, psi)
    zeros = find_strip_zeros(f, 2.0, tol=1e-12)
    assert zeros.m == 0 and len(zeros.a_list) == 1
    assert abs(zeros.a_list[0] - (math.pi + 0.125j)) < 1e-12
    zeros.l = determine_l(f)
    assert zeros.l == 0
    zeros.C = fit_log_constant(zeros, f)
    assert abs(zeros.C - math.log(1.0 + math.exp(-0.125))) < 1e-12


def test_basis_state_exponent():
    rep = Representation(0.3, 0.6)
    for n0, l_expect in ((2, -2), (-1, 1)):
        psi = StateVector(n0, [1.0])
        f = BargmannFunction(rep, psi)
        assert determine_l(f) == l_expect
        zeros = find_strip_zeros(f, 3.0)
        assert zeros.m == 0 and not zeros.a_list


def test_zero_count_matches_companion_oracle():
    rng = np.random.default_rng(7)
    rep = Representation(0.25, 0.8)
    for _ in range(25):
        psi = random_state(rng, int(rng.integers(2, 6)))
        expected = companion_strip_roots(psi, rep)
        cutoff = max(abs(z.imag) for z in expected) + 0.75
        f = BargmannFunction(rep, psi)
        zeros = find_strip_zeros(f, cutoff, tol=1e-10)
        found = sorted(zeros.a_list, key=lambda z: (z.imag, z.real))
        assert zeros.m == 0
        assert len(found) == len(expected)
        for a, b in zip(found, expected):
            assert abs(a - b) < 1e-9


def test_nonbasis_states_have_strip_zeros():
    # every non-basis state carries at least one zero; sample the claim
    rng = np.random.default_rng(17)
    rep = Representation(0.1, 0.9)
    for _ in range(300):
        psi = random_state(rng, int(rng.integers(2, 5)))
        expected = companion_strip_roots(psi, rep)
        cutoff = max(abs(z.imag) for z in expected) + 0.5
        zeros = find_strip_zeros(BargmannFunction(rep, psi), cutoff)
        assert zeros.m + len(zeros.a_list) >= 1


def test_round_trip_reconstruction():
    rng = np.random.default_rng(4)
    rep = Representation(0.4, 0.7)
    for _ in range(10):
        psi = random_state(rng, int(rng.integers(3, 9)))
        f = BargmannFunction(rep, psi)
        bound = max(abs(z.imag) for z in companion_strip_roots(psi, rep))
        zeros = find_strip_zeros(f, bound + 1.0, tol=1e-11)
        zeros.l = determine_l(f)
        zeros.C = fit_log_constant(zeros, f)
        recon = hadamard_reconstruct(zeros, rep)
        for _ in range(20):
            z = complex(rng.uniform(0.0, TWO_PI), rng.uniform(-2.0, 2.0))
            ref = bargmann_eval(f, z)
            assert abs(recon(z) - ref) <= 1e-6 * abs(ref)


def test_reconstruction_quasiperiod_factor():
    rep = Representation(0.3, 0.6)
    psi = StateVector(-1, [0.7, 1.0, -0.4 + 0.2j])
    f = BargmannFunction(rep, psi)
    zeros = find_strip_zeros(f, 8.0)
    zeros.l = determine_l(f)
    recon = hadamard_reconstruct(zeros, rep)
    for z in (0.3 + 0.4j, 2.0 - 1.0j):
        ratio = recon(z + TWO_PI) / recon(z)
        assert abs(ratio - cmath.exp(-2j * math.pi * rep.delta)) < 1e-10


def test_zero_at_origin_multiplicity():
    # coefficients summing to zero put a zero exactly at z = 0
    rep = Representation(0.0, 0.5)
    w = math.exp(-0.125)  # makes b_0 + b_1 = 0 at delta = 0
    psi = StateVector(0, [1.0, -1.0 / w])
    zeros = find_strip_zeros(BargmannFunction(rep, psi), 1.5)
    assert zeros.m == 1 and not zeros.a_list


def test_strip_zeros_validation():
    with pytest.raises(ValidationError):
        StripZeros([0j])
    with pytest.raises(ValidationError):
        StripZeros([-1.0 + 0.5j])
    with pytest.raises(ValidationError):
        StripZeros([1.0 + 0.5j], nu_list=[-1])
    with pytest.raises(ValidationError):
        StripZeros.from_dict({"zeros": [], "bogus": 1})


def test_branch_corrected_log_product_identity():
    rng = np.random.default_rng(9)
    for _ in range(40):
        k = int(rng.integers(1, 8))
        a_list = [complex(rng.uniform(0.3, TWO_PI - 0.3),
                          rng.uniform(0.5, 4.0) * rng.choice([-1.0, 1.0]))
                  for _ in range(k)]
        lhs = 1.0 + 0j
        for a in a_list:
            lhs *= -cmath.exp(math.pi * cmath.cos(0.5 * a) / cmath.sin(0.5 * a))
        rhs = cmath.exp(branch_corrected_log_product(a_list))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_branch_product_conjugate_pair_is_real():
    total = branch_corrected_log_product([math.pi + 1j, math.pi - 1j])
    assert abs(total.imag) < 1e-14


def test_branch_product_pole():
    with pytest.raises(CotangentPole):
        branch_corrected_log_product([1e-15 + 0j])


def test_sin_hadamard_truncation():
    a = 2.0 + 0.5j
    assert sin_hadamard_truncated(0j, a, 50) == -cmath.sin(0.5 * a)
    assert sin_hadamard_truncated(a, a, 50) == 0j
    z = 1.0 + 1.0j
    ref = cmath.sin(0.5 * (z - a))
    errs = [abs(sin_hadamard_truncated(z, a, n) - ref) for n in (100, 1000, 10000)]
    order = math.log10(errs[0] / errs[2]) / 2.0
    assert 0.8 < order < 1.2
