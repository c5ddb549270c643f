"""Trotterized open-system propagation of a two-qutrit pulse.

Each atom is a qutrit {|0>, |1>, |r>}; the pair basis index is 3*a + d
with a the ancilla and d the data atom.  Channels are stored as Liouville
superoperators acting on row-major vectorized density matrices, so that
vec(K rho K^dag) = (K kron conj(K)) vec(rho).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ..exceptions import StepSizeError, ValidationError, WaveformError
from .waveform import ControlWaveform

DIM = 9
RR = 8  # |rr>
COMPUTATIONAL = (0, 1, 3, 4)

K1R = np.zeros((3, 3))
K1R[1, 2] = 1.0  # |1><r|
N_R = np.diag([0.0, 0.0, 1.0])
I3 = np.eye(3)


def on_atom(m, atom):
    return np.kron(m, I3) if atom == 0 else np.kron(I3, m)


def superop(k):
    return np.kron(k, k.conj())


@dataclass(frozen=True)
class PlaquetteGeometry:
    n_data: int = 4
    pair_order: tuple[int, ...] = (0, 1, 2, 3)
    c6: float = 1.0
    distances: tuple[float, ...] = (0.5, 0.5, 0.5, 0.5)
    blockade_regime: bool = True

    def __post_init__(self):
        if self.n_data not in (2, 4):
            raise ValidationError(f"n_data must be 2 or 4, got {self.n_data}")
        if sorted(self.pair_order) != list(range(self.n_data)):
            raise ValidationError(f"pair_order {self.pair_order} is not a permutation of 0..{self.n_data - 1}")
        if len(self.distances) != self.n_data or min(self.distances) <= 0:
            raise ValidationError("need one positive ancilla-data distance per data qubit")

    def interaction(self, pair: int = 0) -> float:
        return self.c6 / self.distances[self.pair_order[pair]] ** 6


@dataclass(frozen=True)
class DecayParameters:
    gamma: float = 0.0
    omega_leak: float = 0.0
    measurement_drain: bool = True

    def __post_init__(self):
        if self.gamma < 0 or self.omega_leak < 0:
            raise ValidationError("decay rates must be non-negative")


def hamiltonian(rabi, phase, detuning, v: float | None = None) -> np.ndarray:
    """Pair Hamiltonian for one slice.

    v=None means perfect blockade: |rr> is projected out, which leaves it
    as a decoupled zero-energy level.
    """
    h = np.zeros((DIM, DIM), dtype=complex)
    for atom in (0, 1):
        up = rabi[atom] / 2 * np.exp(1j * phase[atom]) * K1R
        h += on_atom(up + up.conj().T + detuning[atom] * N_R, atom)
    if v is None:
        h[RR, :] = 0.0
        h[:, RR] = 0.0
    else:
        h[RR, RR] += v
    return h


def build_step_propagator(waveform: ControlWaveform, geometry: PlaquetteGeometry | None = None,
                          slice_index: int = 0, pair: int = 0) -> np.ndarray:
    """exp(-i H dt) for one Trotter step of the given slice."""
    geometry = geometry or PlaquetteGeometry()
    if not 0 <= slice_index < len(waveform.slices):
        raise WaveformError(f"slice index {slice_index} out of range")
    sl = waveform.slices[slice_index]
    dt = sl.duration / waveform.steps[slice_index]
    v = None if geometry.blockade_regime else geometry.interaction(pair)
    return expm(-1j * dt * hamiltonian(sl.rabi, sl.phase, sl.detuning, v))


def decay_kraus(gamma, omega, dt):
    """Single-atom Kraus pair for one step; the leakage branch is dropped."""
    rate = (gamma + omega) * dt
    if rate >= 1:
        raise StepSizeError(f"(gamma + omega) * dt = {rate:.3g} >= 1; use more Trotter steps")
    e1 = np.diag([1.0, 1.0, np.sqrt(1 - rate)])
    e2 = np.sqrt(gamma * dt) * K1R
    return e1, e2


def pair_kraus(gamma, omega, dt):
    e = decay_kraus(gamma, omega, dt)
    return [np.kron(a, b) for a in e for b in e]


def _trace_functional(m):
    # Tr(M rho) as a row vector acting on vec(rho)
    return m.T.reshape(-1)


@dataclass
class GammaMatrix:
    """Two-qutrit channel in the lab frame plus its noiseless reference.

    superop: Liouville matrix of the trace non-increasing channel.
    unitary: noiseless pair evolution over the same pulse.
    leak: linear functional giving the weight dropped into the erased flag.
    rydberg_time: functional giving the summed time both atoms spend in |r>.
    """

    superop: np.ndarray
    unitary: np.ndarray
    leak: np.ndarray
    rydberg_time: np.ndarray
    drained: bool = False
    params: dict = field(default_factory=dict)

    dim = DIM

    @property
    def entries(self) -> np.ndarray:
        """Sum_mu D_mu kron D_mu^dag, a reshuffle of the superoperator."""
        s = self.superop.reshape(DIM, DIM, DIM, DIM)  # [a, c, b, d] = K[a,b] conj(K[c,d])
        return s.transpose(0, 3, 2, 1).reshape(DIM * DIM, DIM * DIM)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.superop @ rho.reshape(-1)).reshape(DIM, DIM)

    def leaked(self, rho: np.ndarray) -> float:
        return float(np.real(self.leak @ rho.reshape(-1)))

    def trace_deficit(self, rho: np.ndarray) -> float:
        return float(np.real(np.trace(rho) - np.trace(self.apply(rho))))

    def relative(self) -> np.ndarray:
        """Channel with the noiseless evolution divided out on the input side."""
        u = self.unitary
        return self.superop @ np.kron(u.conj().T, u.T)


def propagate_gamma(waveform: ControlWaveform, decay: DecayParameters,
                    geometry: PlaquetteGeometry | None = None, pair: int = 0) -> GammaMatrix:
    """Unitary step followed by the decay Kraus map, repeated over all steps."""
    geometry = geometry or PlaquetteGeometry()
    s = np.eye(DIM * DIM, dtype=complex)
    u_tot = np.eye(DIM, dtype=complex)
    leak = np.zeros(DIM * DIM, dtype=complex)
    ryd = np.zeros(DIM * DIM, dtype=complex)
    n_tot = on_atom(N_R, 0) + on_atom(N_R, 1)
    for i, n in enumerate(waveform.steps):
        dt = waveform.slices[i].duration / n
        u = build_step_propagator(waveform, geometry, i, pair)
        ks = pair_kraus(decay.gamma, decay.omega_leak, dt)
        step = sum(superop(k @ u) for k in ks)
        kept = sum(k.conj().T @ k for k in ks)
        leak_step = _trace_functional(u.conj().T @ (np.eye(DIM) - kept) @ u)
        ryd_step = _trace_functional(dt * u.conj().T @ n_tot @ u)
        for _ in range(n):
            leak = leak + leak_step @ s
            ryd = ryd + ryd_step @ s
            s = step @ s
        u_tot = np.linalg.matrix_power(u, n) @ u_tot
    return GammaMatrix(s, u_tot, leak, ryd, params={
        "gamma": decay.gamma, "omega_leak": decay.omega_leak,
        "steps": waveform.total_steps, "protocol": waveform.name})


def drain_superop(gamma: float, omega: float, n_atoms: int = 2):
    """Long-time decay of every |r>: to |1> with weight gamma/(gamma+omega), else erased."""
    frac = 1.0 if gamma + omega == 0 else gamma / (gamma + omega)
    e = (np.diag([1.0, 1.0, 0.0]), np.sqrt(frac) * K1R)
    ks = [np.ones((1, 1))]
    for _ in range(n_atoms):
        ks = [np.kron(k, ei) for k in ks for ei in e]
    sup = sum(superop(k) for k in ks)
    kept = sum(k.conj().T @ k for k in ks)
    return sup, _trace_functional(np.eye(kept.shape[0]) - kept)


def apply_measurement_drain(gamma_matrix: GammaMatrix, decay: DecayParameters) -> GammaMatrix:
    if not decay.measurement_drain:
        raise ValidationError("measurement_drain is off for these decay parameters")
    sup, leak = drain_superop(decay.gamma, decay.omega_leak)
    g = gamma_matrix
    return GammaMatrix(sup @ g.superop, g.unitary, g.leak + leak @ g.superop, g.rydberg_time,
                       drained=True, params=dict(g.params))


def pair_channel(waveform: ControlWaveform, decay: DecayParameters,
                 geometry: PlaquetteGeometry | None = None, pair: int = 0) -> GammaMatrix:
    g = propagate_gamma(waveform, decay, geometry, pair)
    if decay.measurement_drain:
        g = apply_measurement_drain(g, decay)
    return g
