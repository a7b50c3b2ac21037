import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonbell.exceptions import DomainError, TailMassTooLarge
from photonbell.fock import (
    TmsvParams,
    TwoModeDensityMatrix,
    as_setting,
    correlated_state,
    displacement_element,
    displacement_matrix,
    displacement_matrix_oracle,
    eps_family_state,
    fock_product,
    suggest_cutoff,
    tmsv_cutoff,
    tmsv_state,
    tmsv_tail_mass,
    two_mode_state,
)

complexes = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)


# ------------------------------------------------------------ oracles

def test_frozen_elements():
    # frozen from the closed form; cross-checked against expm below
    assert displacement_element(2, 1, 0.3 + 0.4j) == pytest.approx(0.32761026070168797 + 0.43681368093558404j, abs=1e-15)
    assert displacement_element(0, 3, -0.7 + 0.2j) == pytest.approx(0.08112152403543887 + 0.0895782080082453j, abs=1e-15)


@pytest.mark.parametrize("delta", [0.3 + 0.4j, -0.7 + 0.2j, 1.5j, -2.0, 1.2 - 1.1j])
def test_element_matches_matrix_exponential(delta):
    ref = displacement_matrix_oracle(6, delta, work_cutoff=80)
    got = np.array([[displacement_element(i, m, delta) for m in range(7)] for i in range(7)])
    assert np.abs(got - ref).max() < 1e-12


def test_low_order_closed_forms():
    d = 0.6 - 0.25j
    g = math.exp(-abs(d) ** 2 / 2)
    assert displacement_element(0, 0, d) == pytest.approx(g)
    assert displacement_element(1, 0, d) == pytest.approx(d * g)
    assert displacement_element(0, 1, d) == pytest.approx(-d.conjugate() * g)
    assert displacement_element(1, 1, d) == pytest.approx((1 - abs(d) ** 2) * g)


@pytest.mark.parametrize("delta", [0.0, 0.4 + 0.1j, -1.3j, 2.5 + 0.5j])
def test_matrix_matches_elements(delta):
    m = displacement_matrix(8, delta)
    ref = np.array([[displacement_element(i, k, delta) for k in range(9)] for i in range(9)])
    assert np.abs(m - ref).max() < 1e-12


def test_matrix_stable_at_large_index():
    # the literal finite sum cancels catastrophically here; the matrix must not
    delta = 2.5 + 1.0j
    ref = displacement_matrix_oracle(70, delta, work_cutoff=260)
    assert np.abs(displacement_matrix(70, delta) - ref).max() < 1e-10


def test_rectangular_shape():
    m = displacement_matrix(10, 0.3, cols=2)
    assert m.shape == (11, 3)
    assert np.allclose(m, displacement_matrix(10, 0.3)[:, :3])


def test_identity_and_adjoint():
    assert np.array_equal(displacement_matrix(5, 0.0), np.eye(6, dtype=complex))
    d, n = 0.8 - 0.3j, 30
    big = displacement_matrix(n + 40, d)
    adj = displacement_matrix(n + 40, -d)
    assert np.allclose(big.conj().T[: n + 1, : n + 1], adj[: n + 1, : n + 1], atol=1e-13)
    # D(d) D(-d) = 1 on the leading block once enough rows are kept
    prod = displacement_matrix(n + 40, -d)[: n + 1, :] @ big[:, : n + 1]
    assert np.allclose(prod, np.eye(n + 1), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(complexes)
def test_columns_are_normalised(delta):
    cols = 4
    m = displacement_matrix(suggest_cutoff(cols, delta), delta, cols=cols)
    assert np.allclose(np.sum(np.abs(m) ** 2, axis=0), 1.0, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(complexes, st.floats(0, 2 * math.pi))
def test_phase_covariance(delta, t):
    # D(e^{it} d) = R(t) D(d) R(-t) with R = exp(i t n)
    rot = cmath.exp(1j * t)
    n = np.arange(6)
    lhs = displacement_matrix(5, rot * delta)
    rhs = np.exp(1j * t * n)[:, None] * displacement_matrix(5, delta) * np.exp(-1j * t * n)[None, :]
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_negative_order_rejected():
    with pytest.raises(DomainError):
        displacement_element(-1, 0, 0.1)
    with pytest.raises(DomainError):
        displacement_matrix(-1, 0.1)


@pytest.mark.parametrize("bad", [float("nan"), complex("inf"), "0.3", None])
def test_setting_validation(bad):
    with pytest.raises(DomainError):
        as_setting(bad)


def test_suggest_cutoff_grows_with_displacement():
    assert suggest_cutoff(0, 0.0) == 30
    assert suggest_cutoff(2, 2.0) > suggest_cutoff(2, 1.0) > suggest_cutoff(2, 0.0)


# ------------------------------------------------------------ states

def test_tmsv_params():
    p = TmsvParams(0.5, 7.0)
    assert p.phi == pytest.approx(7.0 - 2 * math.pi)
    with pytest.raises(DomainError):
        TmsvParams(-0.1)


def test_tmsv_coefficients_and_tail():
    p = TmsvParams(0.74, 0.3)
    s = tmsv_state(p, 40)
    lam = -cmath.exp(0.3j) * math.tanh(0.74)
    expected = np.array([lam**n for n in range(41)]) / math.cosh(0.74)
    assert np.allclose(np.diag(s.coeffs), expected / np.linalg.norm(expected))
    assert s.tail_mass == pytest.approx(math.tanh(0.74) ** 82)
    assert s.mean_photons() == pytest.approx((math.sinh(0.74) ** 2,) * 2, rel=1e-9)


def test_tmsv_cutoff_and_error():
    n = tmsv_cutoff(1.0, 1e-10)
    assert tmsv_tail_mass(1.0, n) <= 1e-10 < tmsv_tail_mass(1.0, n - 1)
    with pytest.raises(TailMassTooLarge):
        tmsv_state(TmsvParams(1.0), 5)


def test_eps_family():
    s = eps_family_state(0.25)
    assert np.allclose(s.coeffs, [[math.sqrt(0.75), 0], [0, 0.5]])
    with pytest.raises(DomainError):
        eps_family_state(1.5)


def test_state_normalisation_and_padding():
    s = two_mode_state([[1.0, 1.0, 1.0]])
    assert s.coeffs.shape == (3, 3)
    assert np.sum(np.abs(s.coeffs) ** 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        s.coeffs[0, 0] = 2.0
    assert fock_product(2, 0).coeffs[2, 0] == 1.0
    assert correlated_state([3.0, 4.0]).coeffs[1, 1] == pytest.approx(0.8)


def test_density_matrix_checks():
    dm = eps_family_state(0.5).density_matrix()
    rho = dm.rho
    assert dm.trace == pytest.approx(1.0)
    w, comps = dm.pure_components()
    assert w.sum() == pytest.approx(1.0) and comps.shape[1:] == (2, 2)
    bad = rho.copy()
    bad[0, 1] += 0.3
    with pytest.raises(DomainError):
        TwoModeDensityMatrix(bad)
    with pytest.raises(DomainError):
        TwoModeDensityMatrix(-rho)
