import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_plaquette_z_probs, drain_superop, lindblad_pair_superop, twirled_pair
from rydqec.channel import (ControlWaveform, DecayParameters, Slice, apply_measurement_drain,
                            extract_chi_diagonal, jaksch_waveform, load_waveform, pair_channel,
                            propagate_gamma, save_waveform, time_optimal_waveform)
from rydqec.channel.plaquette import compose_plaquette_channel, plaquette_channel, plaquette_chi
from rydqec.channel.pulse import COMPUTATIONAL, PlaquetteGeometry, decay_kraus
from rydqec.exceptions import StepSizeError, ValidationError, WaveformError


def _chi(wf, g, w):
    return extract_chi_diagonal(pair_channel(wf, DecayParameters(g, w)))


def test_jaksch_is_cz_up_to_signs():
    g = propagate_gamma(jaksch_waveform(), DecayParameters())
    u = g.unitary[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    assert np.allclose(u, np.diag([1, -1, -1, -1]), atol=1e-12)


@pytest.mark.parametrize("make", [jaksch_waveform, time_optimal_waveform])
def test_cz_up_to_local_phases(make):
    g = propagate_gamma(make(), DecayParameters())
    u = g.unitary[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    d = np.diag(u)
    assert np.allclose(np.abs(u - np.diag(d)), 0, atol=1e-10)
    # controlled phase = arg(u11 u00 / (u01 u10)) = pi
    ph = np.angle(d[3] * d[0] / (d[1] * d[2]))
    assert abs(abs(ph) - np.pi) < 1e-6


@pytest.mark.parametrize("g,w", list(itertools.product([0.0, 1e-3, 1e-2], repeat=2)))
def test_normalization_grid(g, w):
    for wf in (jaksch_waveform(), time_optimal_waveform()):
        c = _chi(wf, g, w)
        assert abs(c.total - 1) < 1e-10


def test_noiseless_identity():
    for wf in (jaksch_waveform(), time_optimal_waveform()):
        c = _chi(wf, 0.0, 0.0)
        assert c.tv_distance(c.identity()) < 1e-10


@pytest.mark.parametrize("g,w", [(1e-2, 0.0), (1e-2, 1e-2), (0.0, 1e-2), (1e-3, 1e-3)])
def test_lindblad_oracle_jaksch(g, w):
    wf = jaksch_waveform()
    s = drain_superop(g, w) @ lindblad_pair_superop(wf, g, w)
    probs, lost = twirled_pair(s, wf)
    c = _chi(wf, g, w)
    tv = 0.5 * (sum(abs(c.probs[k] - probs[k]) for k in probs) + abs(c.erasure_weight - lost))
    assert tv < 1e-3


def test_trotter_converges_to_lindblad():
    wf = jaksch_waveform()
    g, w = 1e-2, 1e-2
    s = drain_superop(g, w) @ lindblad_pair_superop(wf, g, w)
    probs, lost = twirled_pair(s, wf)
    errs = []
    for n in (20, 80, 320):
        c = _chi(jaksch_waveform(steps=n), g, w)
        errs.append(sum(abs(c.probs[k] - probs[k]) for k in probs))
    assert errs[2] < errs[1] < errs[0]


def test_step_size_precondition():
    with pytest.raises(StepSizeError):
        decay_kraus(0.5, 0.6, 1.0)
    with pytest.raises(StepSizeError):
        pair_channel(jaksch_waveform(steps=3), DecayParameters(0.5, 0.5))


def test_waveform_validation_names_slice():
    with pytest.raises(WaveformError, match="slice 1"):
        ControlWaveform((Slice(1.0, (0.5, 0.5)), Slice(1.0, (2.0, 0.0))), (1, 1), omega_max=1.0)
    with pytest.raises(WaveformError, match="slice 0"):
        ControlWaveform((Slice(-1.0, (0.5, 0.5)),), (1,))


def test_waveform_roundtrip(tmp_path):
    wf = time_optimal_waveform()
    save_waveform(wf, tmp_path / "w.txt")
    back = load_waveform(tmp_path / "w.txt")
    assert back.steps == wf.steps
    assert np.array_equal(back.table(), wf.table())


def test_gamma_entries_are_reshuffle():
    g = pair_channel(jaksch_waveform(), DecayParameters(1e-2, 1e-2))
    e = g.entries
    # reshuffling twice is the identity and preserves the Frobenius norm
    assert np.isclose(np.linalg.norm(e), np.linalg.norm(g.superop))
    s = e.reshape(9, 9, 9, 9).transpose(0, 3, 2, 1).reshape(81, 81)
    assert np.allclose(s, g.superop)
    # the reshuffled matrix is hermitian (a Choi-type operator)
    ch = g.superop.reshape(9, 9, 9, 9).transpose(0, 2, 1, 3).reshape(81, 81)
    assert np.allclose(ch, ch.conj().T)


def test_leak_functional_accounts_for_trace():
    g = pair_channel(jaksch_waveform(), DecayParameters(1e-2, 3e-2))
    rng = np.random.default_rng(0)
    a = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    assert np.isclose(g.trace_deficit(rho), g.leaked(rho), atol=1e-12)


def test_drain_flag():
    g = propagate_gamma(jaksch_waveform(), DecayParameters(1e-2))
    with pytest.raises(ValidationError):
        apply_measurement_drain(g, DecayParameters(1e-2, measurement_drain=False))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2e-2), st.floats(0, 2e-2))
def test_chi_nonnegative_and_normalized(g, w):
    c = _chi(jaksch_waveform(), g, w)
    assert min(c.probs.values()) > -1e-12
    assert abs(c.total - 1) < 1e-10


def test_plaquette_matches_dense_oracle():
    wf = jaksch_waveform()
    chi, _ = plaquette_chi(wf, DecayParameters(2e-2, 1e-2))
    ref = dense_plaquette_z_probs(wf, 2e-2, 1e-2)
    for (a, data), v in ref.items():
        s = a << 4
        for q, b in enumerate(data):
            s |= b << (3 - q)
        assert abs(chi[s] - v) < 1e-10


def test_plaquette_noiseless_and_normalized():
    for wf in (jaksch_waveform(), time_optimal_waveform()):
        d = plaquette_channel(wf, DecayParameters())
        assert d.probs[0, 0] == pytest.approx(1.0, abs=1e-10)
        d = plaquette_channel(wf, DecayParameters(1e-3, 1e-3))
        assert abs(d.probs.sum() - 1) < 1e-10
        assert 0 < d.erasure_weight < 0.05


def test_x_and_z_plaquettes_agree():
    wf = jaksch_waveform()
    dz = plaquette_channel(wf, DecayParameters(1e-3), stabilizer_type="Z")
    dx = plaquette_channel(wf, DecayParameters(1e-3), stabilizer_type="X")
    assert np.array_equal(dz.probs, dx.probs)
    assert dx.error_type == "X"


def test_pairwise_route_agrees_with_coherent_route():
    """Two independent constructions of the plaquette table agree to leading order."""
    g = 1e-3
    wf = jaksch_waveform()
    geom = PlaquetteGeometry()
    pairs = [extract_chi_diagonal(pair_channel(wf, DecayParameters(g), geom, j)) for j in range(4)]
    a = compose_plaquette_channel(pairs, geom)
    b = plaquette_channel(wf, DecayParameters(g), geom, inter_gate_drain=True)
    ga, gb = a.grouped, b.grouped
    for key in ga:
        assert abs(ga[key] - gb[key]) < 5 * g ** 2


def test_decay_rate_monotone():
    p = [plaquette_channel(jaksch_waveform(), DecayParameters(g)).bond_rate() for g in (1e-4, 1e-3, 1e-2)]
    assert p[0] < p[1] < p[2]
