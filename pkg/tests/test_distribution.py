import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydqec.channel import DecayParameters, jaksch_waveform
from rydqec.channel.plaquette import plaquette_channel
from rydqec.distribution import (PlaquetteErrorDistribution, nishimori_coupling_independent, nishimori_couplings,
                                 nishimori_temperature, walsh_coupling)
from rydqec.exceptions import NishimoriError, ValidationError

rates = st.floats(1e-4, 0.45)


@given(rates)
def test_independent_nishimori_matches_closed_form(p):
    d = PlaquetteErrorDistribution.independent(p)
    assert nishimori_couplings(d)["data"] == pytest.approx(0.5 * math.log((1 - p) / p), rel=1e-9)
    assert nishimori_coupling_independent(p) == pytest.approx(0.5 * math.log((1 - p) / p))


@given(rates, st.floats(0, 0.9), st.floats(0, 0.9))
def test_erasure_factor_cancels(p, r1, r2):
    d = PlaquetteErrorDistribution.independent(p, q=p / 2)
    assert nishimori_temperature(d, r1) == pytest.approx(nishimori_temperature(d, r2), rel=1e-9)
    a, b = nishimori_couplings(d, r1), nishimori_couplings(d, r2)
    assert a["measurement"] == pytest.approx(b["measurement"], rel=1e-9)


def test_limits():
    assert nishimori_temperature(PlaquetteErrorDistribution.independent(0.5)) == math.inf
    assert nishimori_temperature(PlaquetteErrorDistribution.clean()) == 0.0
    ts = [nishimori_temperature(PlaquetteErrorDistribution.independent(p)) for p in (1e-1, 1e-3, 1e-6)]
    assert ts[0] > ts[1] > ts[2]


def test_zero_probability_needs_floor():
    phi = np.array([1.0, 0.0])
    with pytest.raises(NishimoriError):
        walsh_coupling(phi)
    assert np.isfinite(walsh_coupling(phi, floor=1e-12)).all()


def test_shared_bond_rate():
    # two independent contributions of rate m give 2 m (1 - m)
    probs = PlaquetteErrorDistribution.independent(0.1).probs
    d = PlaquetteErrorDistribution(probs, sharing=2)
    assert d.bond_rate() == pytest.approx(2 * 0.1 * 0.9)
    assert nishimori_couplings(d)["data"] == pytest.approx(nishimori_coupling_independent(0.18))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=32, max_size=32).filter(lambda v: sum(v) > 0.1), st.floats(0, 0.5))
def test_grouped_is_marginal(v, e):
    p = np.array(v).reshape(16, 2)
    p /= p.sum()
    d = PlaquetteErrorDistribution(p, erasure_weight=e)
    g = d.grouped
    assert sum(g.values()) == pytest.approx(1.0, abs=1e-10)
    for k in range(5):
        assert d.congruent(k) == 4 - k
    assert d.joint().sum() + d.erasure_weight == pytest.approx(1.0)
    assert PlaquetteErrorDistribution.from_dict(d.to_dict()).digest() == d.digest()


def test_validation():
    with pytest.raises(ValidationError):
        PlaquetteErrorDistribution(np.ones((16, 2)))
    with pytest.raises(ValidationError):
        PlaquetteErrorDistribution(np.ones((3, 2)) / 6)


def test_product_detection():
    assert PlaquetteErrorDistribution.independent(0.1, 0.02).is_product()
    d = plaquette_channel(jaksch_waveform(), DecayParameters(1e-2))
    assert not d.is_product()
