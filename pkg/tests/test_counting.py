import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from photonbell.counting import (
    CountTable,
    LossSpec,
    Placement,
    apply_detector_loss,
    apply_source_loss,
    count_marginal,
    joint_counts,
    lossy_joint_counts,
    lossy_marginal,
    parity_correlator,
    q_marginal,
    q_value,
    tmsv_q,
    tmsv_q_marginal,
    tmsv_wigner,
    vacuum_probabilities,
    wigner_value,
)
from photonbell.exceptions import DomainError, TailMassTooLarge
from photonbell.fock import TmsvParams, eps_family_state, fock_product, tmsv_state, two_mode_state

amp = st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False)
etas = st.floats(0.0, 1.0)


def random_state(seed, dim=3):
    rng = np.random.default_rng(seed)
    return two_mode_state(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))


# ------------------------------------------------------------ Q and Wigner oracles

@pytest.mark.parametrize("a,b", [(0, 0), (0.3 + 0.2j, -0.4), (1.1j, 0.7 - 0.5j)])
def test_vacuum_q_is_gaussian(a, b):
    vac = fock_product(0, 0)
    assert q_value(vac, a, b) == pytest.approx(math.exp(-abs(a) ** 2 - abs(b) ** 2))
    assert wigner_value(vac, a, b) == pytest.approx(math.exp(-2 * abs(a) ** 2 - 2 * abs(b) ** 2), abs=1e-9)


@pytest.mark.parametrize("g,phi", [(0.3, 0.0), (0.74, 0.9), (1.2, -2.0)])
def test_tmsv_closed_forms_match_fock_sums(g, phi):
    p = TmsvParams(g, phi)
    s = tmsv_state(p, 80)
    for a, b in [(0.2 + 0.1j, -0.3), (-0.5j, 0.4 + 0.4j)]:
        assert tmsv_q(p, a, b) == pytest.approx(q_value(s, a, b), abs=1e-12)
        assert tmsv_q_marginal(p, a) == pytest.approx(q_marginal(s, "A", a), abs=1e-12)
        assert tmsv_q_marginal(p, b) == pytest.approx(q_marginal(s, "B", b), abs=1e-12)
        assert tmsv_wigner(p, a, b) == pytest.approx(wigner_value(s, a, b), abs=1e-8)


def test_frozen_tmsv_values():
    p = TmsvParams(0.74, 0.3)
    assert tmsv_q(p, 0.2 + 0.1j, -0.3) == pytest.approx(0.5708617708817304, rel=1e-13)
    assert tmsv_wigner(p, 0.2 + 0.1j, -0.3) == pytest.approx(0.9089063409871412, rel=1e-13)


def test_q_value_is_zero_count_entry():
    s = random_state(1)
    t = joint_counts(s, 0.3 - 0.2j, 0.5j)
    assert t.p(0, 0) == pytest.approx(q_value(s, 0.3 - 0.2j, 0.5j), abs=1e-14)


def test_vacuum_probabilities_batch():
    s = apply_source_loss(random_state(2), 0.7)
    alice, bob = [0.1, -0.4j, 0.9], [0.3 + 0.3j, -0.2]
    joint, ma, mb = vacuum_probabilities(s, alice, bob)
    for x, a in enumerate(alice):
        assert ma[x] == pytest.approx(q_marginal(s, "A", a), abs=1e-14)
        for y, b in enumerate(bob):
            assert joint[x, y] == pytest.approx(q_value(s, a, b), abs=1e-14)
    for y, b in enumerate(bob):
        assert mb[y] == pytest.approx(q_marginal(s, "B", b), abs=1e-14)


# ------------------------------------------------------------ tables

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), amp, amp)
def test_tables_normalised(seed, a, b):
    t = joint_counts(random_state(seed), a, b)
    assert t.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert t.total == pytest.approx(1.0, abs=1e-12)
    assert t.probs.min() >= 0


def test_marginals_agree():
    s = random_state(3)
    t = joint_counts(s, 0.4, -0.1j, cutoff=40)
    pa, _ = count_marginal(s, "A", 0.4, cutoff=40)
    pb, _ = count_marginal(s, "B", -0.1j, cutoff=40)
    assert np.allclose(t.marginal_a(), pa, atol=1e-13)
    assert np.allclose(t.marginal_b(), pb, atol=1e-13)
    assert np.allclose(t.transpose().probs, t.probs.T)


def test_coarse_tables_sum_to_one():
    t = joint_counts(random_state(4), 0.6, 0.2)
    for k in (2, 3):
        c = t.coarse(k)
        assert c.shape == (k, k)
        assert c.sum() == pytest.approx(1.0, abs=1e-12)
        assert c[0, 0] == pytest.approx(t.p(0, 0))


def test_tail_raises_when_cutoff_too_small():
    with pytest.raises(TailMassTooLarge):
        joint_counts(random_state(5), 1.5, 1.5, cutoff=2)


def test_count_table_clamps_only_roundoff():
    t = CountTable(np.array([[0.5, -1e-16], [0.25, 0.25]]))
    assert t.probs.min() == 0.0 and t.clamped_mass == pytest.approx(1e-16)
    with pytest.raises(DomainError):
        CountTable(np.array([[1.1, -0.1], [0.0, 0.0]]))


def test_parity_of_fock_products():
    for m, n in [(0, 0), (1, 0), (1, 2), (2, 2)]:
        t = joint_counts(fock_product(m, n), 0.0, 0.0)
        assert parity_correlator(t) == pytest.approx((-1) ** (m + n))


def test_bad_party_name():
    with pytest.raises(DomainError):
        q_marginal(fock_product(0, 0), "C", 0.1)


# ------------------------------------------------------------ loss

def test_loss_spec():
    assert LossSpec.from_loss(0.25).eta == 0.75
    assert LossSpec(0.5, "source").placement is Placement.SOURCE
    assert LossSpec().lossless and LossSpec(0.9).loss == pytest.approx(0.1)
    with pytest.raises(DomainError):
        LossSpec(1.2)
    with pytest.raises(ValueError):
        LossSpec(0.5, "sideways")


@pytest.mark.parametrize("eta", [0.0, 0.3, 0.85, 1.0])
def test_detector_loss_on_fock_product_is_binomial(eta):
    t = apply_detector_loss(joint_counts(fock_product(3, 2), 0.0, 0.0), eta)
    expect = np.outer(binom.pmf(np.arange(t.cutoff + 1), 3, eta), binom.pmf(np.arange(t.cutoff + 1), 2, eta))
    assert np.allclose(t.probs, expect, atol=1e-14)


@pytest.mark.parametrize("eta", [0.2, 0.6, 0.95])
def test_source_loss_on_fock_product_is_binomial(eta):
    rho = apply_source_loss(fock_product(2, 1), eta)
    t = joint_counts(rho, 0.0, 0.0)
    expect = np.outer(binom.pmf(np.arange(t.cutoff + 1), 2, eta), binom.pmf(np.arange(t.cutoff + 1), 1, eta))
    assert np.allclose(t.probs, expect, atol=1e-14)
    assert rho.trace == pytest.approx(1.0)


def test_source_loss_decoheres_the_bell_state():
    rho = apply_source_loss(eps_family_state(0.5), 0.64).rho
    # coherence |00><11| shrinks by eta, population of |11> by eta^2
    assert rho[0, 0, 1, 1] == pytest.approx(0.5 * 0.64)
    assert rho[1, 1, 1, 1] == pytest.approx(0.5 * 0.64**2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), amp, amp, st.floats(0.05, 1.0))
def test_detector_loss_equals_source_loss_at_scaled_settings(seed, a, b, eta):
    # loss after D(a) is the same channel as loss before D(a sqrt(eta))
    s = random_state(seed)
    det = lossy_joint_counts(s, a, b, LossSpec(eta, "detector"), cutoff=45)
    r = math.sqrt(eta)
    src = lossy_joint_counts(s, r * a, r * b, LossSpec(eta, "source"), cutoff=45)
    assert np.abs(det.probs - src.probs).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_loss_composes(seed, e1, e2):
    s = random_state(seed)
    t = joint_counts(s, 0.3, -0.2j)
    twice = apply_detector_loss(apply_detector_loss(t, e1), e2)
    assert np.abs(twice.probs - apply_detector_loss(t, e1 * e2).probs).max() < 1e-12
    rho2 = apply_source_loss(apply_source_loss(s, e1), e2)
    assert np.abs(rho2.rho - apply_source_loss(s, e1 * e2).rho).max() < 1e-12


def test_lossy_marginal_thins():
    s = fock_product(2, 0)
    p, _ = lossy_marginal(s, "A", 0.0, LossSpec(0.5))
    assert p[:3] == pytest.approx([0.25, 0.5, 0.25])
    p, _ = lossy_marginal(s, "A", 0.0, LossSpec(0.5, "source"))
    assert p[:3] == pytest.approx([0.25, 0.5, 0.25])


def test_loss_rejects_bad_eta():
    t = joint_counts(fock_product(0, 0), 0, 0)
    with pytest.raises(DomainError):
        apply_detector_loss(t, -0.1)
    with pytest.raises(DomainError):
        apply_source_loss(fock_product(0, 0), 1.5)
