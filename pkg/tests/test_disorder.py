import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydqec.disorder import (DisorderSample, ErasureParameters, effective_erasure, erased_plaquettes,
                             erasure_rate, sample_disorder, star_to_bonds)
from rydqec.distribution import PlaquetteErrorDistribution
from rydqec.exceptions import ValidationError
from rydqec.rbim import SpinLattice2D
from rydqec.rpgm import GaugeLattice3D


def test_erasure_rate_examples():
    assert erasure_rate(ErasureParameters(f_int=0.0)) == 0.0
    assert erasure_rate(ErasureParameters(f_int=1.0)) == pytest.approx(2 * np.pi * 840)
    assert erasure_rate(ErasureParameters(f_int=0.0, t_trap=10.0)) == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        ErasureParameters(f_int=1.5)


@given(st.floats(0, 1e3), st.floats(0, 1.0), st.integers(0, 10 ** 4))
def test_effective_erasure_bounds(w, tau, c):
    r = effective_erasure(w, tau, c)
    assert 0 <= r < 1 or (r == 1.0 and w * tau * c > 30)
    assert effective_erasure(w, tau, c + 1) >= r


def test_effective_erasure_examples():
    assert effective_erasure(5.0, 1e-3, 0) == 0.0
    assert effective_erasure(np.log(2), 1.0, 1) == pytest.approx(0.5)


def test_clean_lattice():
    s = sample_disorder(PlaquetteErrorDistribution.clean(), 0.0, (8, 8), seed=1)
    assert (s.bond_signs == 1).all() and not s.erased_edges.any()


def test_single_cell_mapping():
    # every star flips only its 'up' qubit: each vertical bond is hit exactly once
    p = np.zeros((16, 2))
    p[0b0001, 0] = 1.0
    s = sample_disorder(PlaquetteErrorDistribution(p), 0.0, (6, 6), seed=3, floor=0)
    assert (s.bond_signs[0] == 1).all() and (s.bond_signs[1] == -1).all()
    # up and down from neighbouring stars cancel on the shared bond
    p = np.zeros((16, 2))
    p[0b0101, 0] = 1.0
    s = sample_disorder(PlaquetteErrorDistribution(p), 0.0, (6, 6), seed=3, floor=0)
    assert (s.bond_signs == 1).all()


def test_star_to_bonds_single_star():
    masks = np.zeros((4, 4), dtype=int)
    masks[1, 2] = 0b1111
    f = star_to_bonds(masks)
    assert f.sum() == 4
    assert f[1, 1, 2] and f[0, 1, 2] and f[1, 1, 1] and f[0, 0, 2]


def test_determinism_and_serialization():
    d = PlaquetteErrorDistribution.independent(0.1, 0.05)
    for shape in ((8, 8), (4, 4, 4)):
        a = sample_disorder(d, 0.1, shape, seed=7)
        b = sample_disorder(d, 0.1, shape, seed=7)
        assert a.to_bytes() == b.to_bytes()
        c = DisorderSample.from_bytes(a.to_bytes())
        assert c.to_bytes() == a.to_bytes()
        assert sample_disorder(d, 0.1, shape, seed=8).to_bytes() != a.to_bytes()


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 0.6), st.integers(0, 10 ** 6), st.sampled_from(["no-refresh", "refresh"]))
def test_site_erasure_closure(r, seed, scenario):
    s = sample_disorder(PlaquetteErrorDistribution.independent(0.05), r, (6, 6), seed=seed, scenario=scenario)
    sites = s.erased_sites
    e = s.erased_edges
    assert (e[0][sites]).all() and (e[1][sites]).all()
    assert e[0][np.roll(sites, -1, 0)].all() and e[1][np.roll(sites, -1, 1)].all()
    assert (s.bond_signs[e] == 0).all() and (s.bond_signs[~e] != 0).all()
    if scenario == "refresh":
        assert not sites.any()


def test_3d_erasure_is_static_and_consistent():
    s = sample_disorder(PlaquetteErrorDistribution.independent(0.05, 0.05), 0.2, (5, 5, 5), seed=2)
    e = s.erased_edges
    assert (e == e[..., :1]).all()
    dead = erased_plaquettes(e)
    assert (s.plaquette_signs[dead] == 0).all() and (s.plaquette_signs[~dead] != 0).all()
    # last round has no syndrome flips
    assert (s.plaquette_signs[0, ..., -1][~dead[0, ..., -1]] == 1).all()


def test_binomial_wrong_sign_fraction():
    p = 0.1
    s = sample_disorder(PlaquetteErrorDistribution.independent(p), 0.0, (32, 32), seed=11)
    n = 2 * 32 * 32
    frac = (s.bond_signs == -1).mean()
    assert abs(frac - p) < 3 * np.sqrt(p * (1 - p) / n)
    assert s.effective_p == pytest.approx(frac)


def test_marginal_consistency():
    """Per-cell error frequencies over many cells match the distribution (4 sigma)."""
    from rydqec.disorder import _draw_categories
    from rydqec.rng import make_generator
    rng = np.random.default_rng(0)
    p = rng.random(32) ** 3
    p /= p.sum()
    d = PlaquetteErrorDistribution(p.reshape(16, 2))
    cat = _draw_categories(make_generator(5), d.probs.sum(1), (200, 200))
    counts = np.bincount(cat.ravel(), minlength=16)
    n = cat.size
    pm = d.probs.sum(1)
    assert (np.abs(counts / n - pm) <= 4 * np.sqrt(pm * (1 - pm) / n) + 1e-12).all()


def test_gauge_invariance_2d_energy():
    d = PlaquetteErrorDistribution.independent(0.15)
    rng = np.random.default_rng(1)
    for k in range(100):
        s = sample_disorder(d, 0.05, (6, 6), seed=k)
        lat = SpinLattice2D.from_sample(s)
        lat.spins[:] = np.where(rng.random((6, 6)) < 0.5, -1, 1)
        lat.spins[~lat.active] = 1
        sigma = np.where(rng.random((6, 6)) < 0.5, -1, 1)
        assert lat.gauge(sigma).energy() == pytest.approx(lat.energy())


def test_gauge_invariance_3d_energy():
    d = PlaquetteErrorDistribution.independent(0.1, 0.1)
    rng = np.random.default_rng(2)
    for k in range(20):
        s = sample_disorder(d, 0.0, (4, 4, 4), seed=k)
        lat = GaugeLattice3D.from_sample(s, ratio=0.8)
        lat.spins[:] = np.where(rng.random(lat.spins.shape) < 0.5, -1, 1)
        sigma = np.where(rng.random((4, 4, 4)) < 0.5, -1, 1)
        assert lat.gauge(sigma).energy() == pytest.approx(lat.energy())
        assert lat.edge_gauge(1, 2, 3, 0).energy() == pytest.approx(lat.energy())
