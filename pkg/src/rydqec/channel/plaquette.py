"""Stabilizer-plaquette error distributions.

Two routes are provided.  ``plaquette_channel`` propagates the ancilla and
all data atoms together as qutrits through the whole sequence of pair
pulses, so Rydberg population left on the ancilla by one pulse is carried
into the next.  ``compose_plaquette_channel`` instead combines independent
twirled pair channels by Clifford propagation, which is exact only when
every pulse ends with all atoms back in the qubit subspace.

All pulses, decay and drains preserve, atom by atom, whether it sits in
|0>.  The noisy part of the circuit is therefore a Schur multiplier on the
qubit density matrix and its twirl only contains Z strings, which become
data errors and (on the ancilla, after the closing Hadamard) a flipped
syndrome bit.
"""
from __future__ import annotations

import numpy as np

from ..distribution import PlaquetteErrorDistribution
from ..exceptions import ValidationError
from .chi import LABELS2, ChiDiagonal
from .pulse import DecayParameters, PlaquetteGeometry, build_step_propagator, decay_kraus
from .waveform import ControlWaveform


def _axes_slice(n2, sel):
    idx = [slice(None)] * n2
    for ax, v in sel.items():
        idx[ax] = v
    return tuple(idx)


class _State:
    """Density matrix of n qutrits as a tensor with n ket and n bra axes."""

    def __init__(self, n):
        self.n = n
        self.rho = np.zeros((3,) * (2 * n), dtype=complex)
        self.rho[(slice(0, 2),) * (2 * n)] = 1.0 / 2 ** n  # |+><+| on every qubit
        self.rydberg_time = np.zeros(n)

    def unitary(self, u, i, j):
        n = self.n
        u4 = u.reshape(3, 3, 3, 3)
        r = np.tensordot(u4, self.rho, axes=([2, 3], [i, j]))
        r = np.moveaxis(r, [0, 1], [i, j])
        r = np.tensordot(u4.conj(), r, axes=([2, 3], [n + i, n + j]))
        self.rho = np.moveaxis(r, [0, 1], [n + i, n + j])

    def kraus_atom(self, diag, lower, atom):
        # rho -> E1 rho E1^dag + lower^2 |1><r| rho |r><1| on one atom
        n2 = 2 * self.n
        rr = self.rho[_axes_slice(n2, {atom: 2, self.n + atom: 2})].copy()
        shape = [1] * n2
        shape[atom] = 3
        self.rho = self.rho * diag.reshape(shape)
        shape = [1] * n2
        shape[self.n + atom] = 3
        self.rho = self.rho * diag.reshape(shape)
        if lower:
            self.rho[_axes_slice(n2, {atom: 1, self.n + atom: 1})] += lower * rr

    def decay_all(self, gamma, omega, dt):
        e1, _ = decay_kraus(gamma, omega, dt)
        for a in range(self.n):
            self.kraus_atom(np.diag(e1), gamma * dt, a)

    def idle(self, gamma, omega, t):
        s = np.exp(-(gamma + omega) * t)
        frac = 0.0 if gamma + omega == 0 else gamma / (gamma + omega)
        for a in range(self.n):
            self.kraus_atom(np.array([1.0, 1.0, np.sqrt(s)]), frac * (1 - s), a)

    def drain(self, gamma, omega):
        frac = 1.0 if gamma + omega == 0 else gamma / (gamma + omega)
        for a in range(self.n):
            self.kraus_atom(np.array([1.0, 1.0, 0.0]), frac, a)

    def rydberg_population(self):
        n = self.n
        diag = np.real(np.einsum(self._diag_subscripts(), self.rho))
        return np.array([diag.take(2, axis=a).sum() for a in range(n)])

    def _diag_subscripts(self):
        letters = "abcdefghij"[: self.n]
        return letters + letters + "->" + letters

    def qubit_block(self):
        n = self.n
        return self.rho[(slice(0, 2),) * (2 * n)].reshape(2 ** n, 2 ** n)


def _walsh(n):
    h = np.array([[1.0]])
    for _ in range(n):
        h = np.kron(h, np.array([[1.0, 1.0], [1.0, -1.0]]))
    return h


def _run_circuit(waveform, decay, geometry, inter_gate_drain, idle_time):
    n = geometry.n_data + 1
    st = _State(n)
    steps = []
    for j in range(geometry.n_data):
        props = [build_step_propagator(waveform, geometry, i, j) for i in range(len(waveform.slices))]
        steps.append(props)
    for j, q in enumerate(geometry.pair_order):
        for i, nsteps in enumerate(waveform.steps):
            dt = waveform.slices[i].duration / nsteps
            u = steps[j][i]
            for _ in range(nsteps):
                st.unitary(u, 0, 1 + q)
                if decay.gamma or decay.omega_leak:
                    st.decay_all(decay.gamma, decay.omega_leak, dt)
                st.rydberg_time += dt * st.rydberg_population()
        if j < geometry.n_data - 1:
            if idle_time > 0:
                st.idle(decay.gamma, decay.omega_leak, idle_time)
            if inter_gate_drain:
                st.drain(decay.gamma, decay.omega_leak)
    if decay.measurement_drain:
        st.drain(decay.gamma, decay.omega_leak)
    return st


def plaquette_chi(waveform: ControlWaveform, decay: DecayParameters,
                  geometry: PlaquetteGeometry | None = None, *, inter_gate_drain: bool = False,
                  idle_time: float = 0.0) -> tuple[np.ndarray, dict]:
    """Twirled Z-string probabilities of the full plaquette circuit.

    Returns the vector over 2**(n_data+1) strings, indexed with the
    ancilla as the most significant bit and data position q at bit
    (n_data - 1 - q), together with diagnostics.
    """
    geometry = geometry or PlaquetteGeometry()
    ideal = _run_circuit(waveform, DecayParameters(0.0, 0.0, True), geometry, inter_gate_drain, 0.0)
    noisy = _run_circuit(waveform, decay, geometry, inter_gate_drain, idle_time)
    n = geometry.n_data + 1
    dim = 2 ** n
    m0 = dim * ideal.qubit_block()
    m = dim * noisy.qubit_block()
    mod = np.abs(m0)
    if mod.min() < 0.5:
        raise ValidationError("noiseless circuit is far from a diagonal unitary; check the waveform")
    rel = m * np.conj(m0 / mod)
    h = _walsh(n)
    chi = np.einsum("sx,xy,sy->s", h, rel, h).real / dim ** 2
    survive = float(np.real(np.trace(noisy.qubit_block())))
    diag = {
        "erasure_weight": max(0.0, 1.0 - survive),
        "rydberg_time": float(noisy.rydberg_time.sum()),
        "rydberg_time_atoms": noisy.rydberg_time.tolist(),
        "noiseless_infidelity": float(1 - mod.mean()),
        "pauli_mass": float(chi.sum()),
    }
    return chi, diag


def distribution_from_z_strings(chi: np.ndarray, n_data: int, erasure_weight: float,
                                error_type: str = "Z", metadata: dict | None = None) -> PlaquetteErrorDistribution:
    dim = 2 ** (n_data + 1)
    chi = np.clip(np.asarray(chi, dtype=float), 0.0, None)
    probs = np.zeros((2 ** n_data, 2))
    for s in range(dim):
        flag = s >> n_data
        mask = 0
        for qpos in range(n_data):
            if (s >> (n_data - 1 - qpos)) & 1:
                mask |= 1 << qpos
        probs[mask, flag] += chi[s]
    probs /= probs.sum()
    return PlaquetteErrorDistribution(probs, erasure_weight, error_type, sharing=2, metadata=metadata or {})


def plaquette_channel(waveform: ControlWaveform, decay: DecayParameters,
                      geometry: PlaquetteGeometry | None = None, stabilizer_type: str = "Z", *,
                      inter_gate_drain: bool = False, idle_time: float = 0.0) -> PlaquetteErrorDistribution:
    """Error distribution of one plaquette from the coherent multi-atom propagation.

    X-type plaquettes differ only by Hadamards on the data atoms, which
    turn every data Z error into an X error, so the table is the same.
    """
    geometry = geometry or PlaquetteGeometry()
    if stabilizer_type not in ("X", "Z"):
        raise ValidationError("stabilizer_type must be X or Z")
    chi, diag = plaquette_chi(waveform, decay, geometry, inter_gate_drain=inter_gate_drain,
                              idle_time=idle_time)
    meta = {"protocol": waveform.name, "gamma": decay.gamma, "omega_leak": decay.omega_leak,
            "steps": waveform.total_steps, "route": "coherent", **diag}
    return distribution_from_z_strings(chi, geometry.n_data, diag["erasure_weight"], stabilizer_type, meta)


# symplectic Clifford propagation for the pairwise route

def _propagate(x, z, later, n):
    """Push a Pauli (bit arrays over ancilla + data) through later CZ(a, d)."""
    x = x.copy()
    z = z.copy()
    for q in later:
        d = 1 + q
        z[0] ^= x[d]
        z[d] ^= x[0]
    return x, z


def compose_plaquette_channel(pair_channels: list[ChiDiagonal], geometry: PlaquetteGeometry | None = None,
                              stabilizer_type: str = "Z") -> PlaquetteErrorDistribution:
    """Combine independent pair channels gate by gate.

    Each pair error is pushed through the remaining CZ gates; the ancilla's
    X component after the closing Hadamard is the syndrome flip and the
    data Z components (turned into X by the data Hadamards for X-type
    plaquettes) are the data errors.  Data errors of the other type are
    dropped, their weight recorded as a diagnostic.
    """
    geometry = geometry or PlaquetteGeometry()
    n = geometry.n_data
    if len(pair_channels) != n:
        raise ValidationError(f"need {n} pair channels, got {len(pair_channels)}")
    if stabilizer_type not in ("X", "Z"):
        raise ValidationError("stabilizer_type must be X or Z")
    total = np.zeros((2 ** n, 2))
    total[0, 0] = 1.0
    survive = 1.0
    dropped = 0.0
    order = list(geometry.pair_order)
    for j, ch in enumerate(pair_channels):
        q = order[j]
        w = 1.0 - ch.erasure_weight
        survive *= w
        gate = np.zeros((2 ** n, 2))
        for lb in LABELS2:
            p = ch.probs.get(lb, 0.0)
            if p == 0:
                continue
            x = np.zeros(n + 1, dtype=np.uint8)
            z = np.zeros(n + 1, dtype=np.uint8)
            for pos, c in zip((0, 1 + q), lb):
                x[pos] = c in "XY"
                z[pos] = c in "ZY"
            x, z = _propagate(x, z, order[j + 1:], n)
            if x[1:].any():
                dropped += p / w
            mask = sum(1 << qq for qq in range(n) if z[1 + qq])
            gate[mask, flag_after_h(x[0], z[0])] += p / w
        total = _xor_convolve(total, gate)
    dist = PlaquetteErrorDistribution(total / total.sum(), 1.0 - survive, stabilizer_type, 2,
                                      {"route": "pairwise", "dropped_other_type": dropped})
    return dist


def flag_after_h(xa, za) -> int:
    """Readout flip of a Z-basis measurement after the closing Hadamard.

    H maps the ancilla's Z component onto X, which flips the outcome.
    """
    return int(za)


def _xor_convolve(a, b):
    n = a.shape[0]
    out = np.zeros_like(a)
    for m1 in range(n):
        for f1 in (0, 1):
            if a[m1, f1] == 0:
                continue
            for m2 in range(n):
                out[m1 ^ m2, f1] += a[m1, f1] * b[m2, 0]
                out[m1 ^ m2, f1 ^ 1] += a[m1, f1] * b[m2, 1]
    return out
