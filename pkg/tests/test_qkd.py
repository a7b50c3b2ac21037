import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonbell.counting import LossSpec, lossy_joint_counts
from photonbell.exceptions import DomainError
from photonbell.fock import eps_family_state
from photonbell.inequalities import ChshSettings, chsh_zero_nonzero
from photonbell.optimize import OptimizerConfig
from photonbell.qkd import (
    BinaryJoint,
    KeySettings,
    binary_entropy,
    conditional_entropy,
    delta_positivity,
    eve_entropy,
    key_rate,
    key_rate_qber_bound,
    key_rate_sweep,
    optimize_key_rate,
    protocol_key_rate,
)

TINY = OptimizerConfig(population=12, de_generations=25, nm_max_iters=800, nm_top=2, sa_restarts=1, seed=3)
KS = KeySettings(0.05 - 0.3j, 0.2, -0.5 + 0.1j, 0.15 - 0.05j, -0.6j)

tables = st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: np.array(v).reshape(2, 2) / sum(v)
)


# ------------------------------------------------------------ entropies

@pytest.mark.parametrize("x,h", [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0), (0.25, 0.8112781244591328), (0.11, 0.499915958164528)])
def test_binary_entropy_values(x, h):
    assert binary_entropy(x) == pytest.approx(h, abs=1e-10)


def test_binary_entropy_domain():
    assert binary_entropy(-1e-13) == 0.0
    with pytest.raises(DomainError):
        binary_entropy(1.1)


@pytest.mark.parametrize("b,h", [(2.0, 1.0), (0.0, 1.0), (-1.5, 1.0), (2 * math.sqrt(2), 0.0)])
def test_eve_entropy_endpoints(b, h):
    assert eve_entropy(b) == pytest.approx(h, abs=1e-7)


def test_eve_entropy_monotone_and_bounded():
    vals = [eve_entropy(b) for b in np.linspace(2.0, 2 * math.sqrt(2), 50)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        eve_entropy(2.9)


def test_key_rate_values():
    assert key_rate(2.5, 0.1) == pytest.approx(0.3564355568004036, abs=1e-13)
    assert key_rate(2 * math.sqrt(2), 0.0) == pytest.approx(1.0, abs=1e-7)
    assert key_rate(2.0, 0.3) == pytest.approx(-0.3)
    with pytest.raises(DomainError):
        key_rate(2.5, 1.5)


def test_frozen_delta():
    assert delta_positivity(BinaryJoint.from_entries(0.4, 0.1, 0.2, 0.3)) == pytest.approx(0.034851554559677256, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(tables)
def test_chain_rule(p):
    # H(A|B) + H(B) = H(A, B) = H(B|A) + H(A)
    def h(v):
        v = v[v > 0]
        return float(-(v * np.log2(v)).sum())

    assert conditional_entropy(p) + h(p.sum(axis=0)) == pytest.approx(h(p.ravel()), abs=1e-9)
    assert conditional_entropy(p, "B_given_A") + h(p.sum(axis=1)) == pytest.approx(h(p.ravel()), abs=1e-9)


def test_delta_positivity_on_random_tables():
    rng = np.random.default_rng(11)
    ps = rng.dirichlet(np.full(4, 0.7), size=100_000)
    gaps = np.array([delta_positivity(p.reshape(2, 2)) for p in ps])
    assert gaps.min() >= -1e-12
    rates = [(key_rate_qber_bound(2.6, BinaryJoint(p.reshape(2, 2)).qber), key_rate(2.6, conditional_entropy(p.reshape(2, 2), "B_given_A")))
             for p in ps[:2000]]
    assert all(weak <= strong + 1e-12 for weak, strong in rates)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 0.5))
def test_delta_vanishes_on_symmetric_channels(pa, flip):
    # equal flip probabilities from both inputs
    p = np.array([[pa * (1 - flip), pa * flip], [(1 - pa) * flip, (1 - pa) * (1 - flip)]])
    j = BinaryJoint(p)
    assert j.delta == pytest.approx(0.0, abs=1e-15)
    assert delta_positivity(j) == pytest.approx(0.0, abs=1e-12)


def test_binary_joint_validation():
    with pytest.raises(DomainError):
        BinaryJoint(np.array([[0.5, 0.5], [0.5, 0.0]]))
    with pytest.raises(DomainError):
        BinaryJoint(np.array([[1.1, -0.1], [0.0, 0.0]]))
    with pytest.raises(DomainError):
        conditional_entropy(np.eye(2) / 2, "sideways")
    assert BinaryJoint(np.eye(2) / 2).qber == 0.0


# ------------------------------------------------------------ protocol

def test_protocol_doc_example():
    r = protocol_key_rate(0.0, None, KeySettings(0, 0, 0, 0, 0))
    assert r.chsh == 2.0 and r.rate == 0.0


def test_vacuum_keying_gives_minus_entropy():
    # the vacuum has |B| <= 2 for every setting, so K = -H
    r = protocol_key_rate(0.0, None, KS)
    assert abs(r.chsh) <= 2.0
    assert r.rate == pytest.approx(-r.cond_entropy, abs=1e-14)


@pytest.mark.parametrize("loss", [None, LossSpec(0.8), LossSpec(0.8, "source")])
@pytest.mark.parametrize("direction", ["A_given_B", "B_given_A"])
def test_protocol_matches_count_tables(loss, direction):
    r = protocol_key_rate(0.5, loss, KS, direction)
    # Bell block from the general count-table path
    ref = chsh_zero_nonzero(eps_family_state(0.5), KS.chsh_block(), loss).value
    assert r.chsh == pytest.approx(ref, abs=1e-12)
    # keying table from the coarse-grained (a0, b1) counts
    tab = lossy_joint_counts(eps_family_state(0.5), KS.a0, KS.b1, loss or LossSpec()).coarse(2)
    assert np.allclose(r.table.P, tab, atol=1e-12)
    assert r.cond_entropy == pytest.approx(conditional_entropy(tab, direction), abs=1e-12)
    assert r.rate == pytest.approx(1 - eve_entropy(r.chsh) - r.cond_entropy, abs=1e-14)
    assert r.qber == pytest.approx(tab[0, 1] + tab[1, 0])


def test_settings_round_trip():
    assert KeySettings.from_array(KS.to_array()) == KS
    k = KeySettings.from_chsh(ChshSettings(1, 2, 3, 4))
    assert k.a0 == k.a1 == 1
    with pytest.raises(DomainError):
        KeySettings.from_array(np.zeros(8))


def test_optimized_rate_positive_without_loss():
    r = optimize_key_rate(None, TINY, eps=0.5, direction="B_given_A")
    assert r.rate > 0.2
    assert abs(r.chsh) > 2.3
    assert r.rate == pytest.approx(1 - eve_entropy(r.chsh) - r.cond_entropy, abs=1e-14)
    again = optimize_key_rate(None, TINY, eps=0.5, direction="B_given_A")
    assert again.rate == r.rate


def test_sweep_rates_fall_with_loss():
    rates = [r.rate for r in key_rate_sweep([0.0, 0.04, 0.2], TINY, eps=0.5, direction="B_given_A")]
    assert rates[0] > rates[1] > 0 > rates[2] - 1e-9


def test_bad_direction():
    with pytest.raises(DomainError):
        protocol_key_rate(0.5, None, KS, "A_to_B")
    with pytest.raises(DomainError):
        optimize_key_rate(None, TINY, direction="x")
