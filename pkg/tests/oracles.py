"""Reference implementations used only by the tests.

They are deliberately written in the most direct dense form and share no
code with the package beyond reading waveform tables.
"""
import itertools
from collections import deque

import numpy as np
from scipy.linalg import expm

# single qutrit {0, 1, r}
K1R = np.zeros((3, 3))
K1R[1, 2] = 1.0
NR = np.diag([0.0, 0.0, 1.0])
PAULI = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]], dtype=complex),
         "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.diag([1.0, -1.0]).astype(complex)}


def _embed(op, site, n):
    mats = [np.eye(3)] * n
    mats = list(mats)
    mats[site] = op
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


def _pair_hamiltonian(rabi, phase, detuning):
    h = np.zeros((9, 9), dtype=complex)
    for s in range(2):
        lower = K1R * np.exp(-1j * phase[s])
        h += _embed(rabi[s] / 2 * (lower + lower.conj().T) + detuning[s] * NR, s, 2)
    keep = np.ones(9)
    keep[8] = 0.0          # perfect blockade: |rr> never populated
    return np.diag(keep) @ h @ np.diag(keep)


def lindblad_pair_superop(waveform, gamma, omega):
    """Exact Liouvillian propagation of the pair master equation, row-major vec."""
    i9 = np.eye(9)
    jumps = [np.sqrt(gamma) * _embed(K1R, s, 2) for s in range(2)]
    leak = [omega * _embed(NR, s, 2) for s in range(2)]
    s_tot = np.eye(81, dtype=complex)
    for sl in waveform.slices:
        h = _pair_hamiltonian(sl.rabi, sl.phase, sl.detuning)
        lv = -1j * (np.kron(h, i9) - np.kron(i9, h.T))
        for l in jumps:
            ld = l.conj().T @ l
            lv += np.kron(l, l.conj()) - 0.5 * np.kron(ld, i9) - 0.5 * np.kron(i9, ld.T)
        for g in leak:
            lv += -0.5 * np.kron(g, i9) - 0.5 * np.kron(i9, g.T)
        s_tot = expm(lv * sl.duration) @ s_tot
    return s_tot


def drain_superop(gamma, omega):
    f = 1.0 if gamma + omega == 0 else gamma / (gamma + omega)
    e1 = np.diag([1.0, 1.0, 0.0])
    e2 = np.sqrt(f) * K1R
    ks = [np.kron(a, b) for a in (e1, e2) for b in (e1, e2)]
    return sum(np.kron(k, k.conj()) for k in ks)


def twirled_pair(superop, waveform):
    """Pauli probabilities (labels ancilla, data) and erasure of a 9-level pair superoperator."""
    comp = [0, 1, 3, 4]
    u = np.eye(9, dtype=complex)
    for sl in waveform.slices:
        u = expm(-1j * _pair_hamiltonian(sl.rabi, sl.phase, sl.detuning) * sl.duration) @ u
    uq = u[np.ix_(comp, comp)]
    probs = {}
    # chi_mu = (1/16) sum_ij <i| P U^dag E(|i><j|) U P |j> ... written via explicit basis action
    for a, b in itertools.product("IXYZ", repeat=2):
        p = np.kron(PAULI[a], PAULI[b])
        k = uq @ p           # noiseless gate followed by this Pauli error, in the relative frame
        acc = 0.0
        for i in range(4):
            for j in range(4):
                rho = np.zeros((9, 9), dtype=complex)
                rho[comp[i], comp[j]] = 1.0
                out = (superop @ rho.reshape(-1)).reshape(9, 9)[np.ix_(comp, comp)]
                acc += np.conj(k[:, i]) @ out @ k[:, j]
        probs[a + b] = float(np.real(acc)) / 16
    lost = 0.0
    for i in range(4):
        rho = np.zeros((9, 9), dtype=complex)
        rho[comp[i], comp[i]] = 1.0
        out = (superop @ rho.reshape(-1)).reshape(9, 9)
        lost += 1 - np.real(np.trace(out))
    return probs, lost / 4


def dense_plaquette_z_probs(waveform, gamma, omega, pair_order=(0, 1, 2, 3)):
    """Twirled Z-string probabilities of the 5-atom circuit as a 243x243 density matrix.

    Returned as a dict keyed by (ancilla bit, data bits tuple in plaquette order).
    """
    n = 5
    dim = 3 ** n
    def pair_u(sl, q):
        # gate between atom 0 (ancilla) and atom q, as a full operator
        h1 = np.zeros((dim, dim), dtype=complex)
        for s, atom in ((0, 0), (1, q)):
            lower = K1R * np.exp(-1j * sl.phase[s])
            h1 += _embed(sl.rabi[s] / 2 * (lower + lower.conj().T) + sl.detuning[s] * NR, atom, n)
        # blockade between the two driven atoms
        both = _embed(NR, 0, n) @ _embed(NR, q, n)
        keep = np.eye(dim) - both
        return keep @ h1 @ keep
    def decay_kraus_all(rho, dt):
        for a in range(n):
            e1 = _embed(np.diag([1.0, 1.0, np.sqrt(1 - (gamma + omega) * dt)]), a, n)
            e2 = _embed(np.sqrt(gamma * dt) * K1R, a, n)
            rho = e1 @ rho @ e1.conj().T + e2 @ rho @ e2.conj().T
        return rho
    def drain(rho):
        f = 1.0 if gamma + omega == 0 else gamma / (gamma + omega)
        for a in range(n):
            e1 = _embed(np.diag([1.0, 1.0, 0.0]), a, n)
            e2 = _embed(np.sqrt(f) * K1R, a, n)
            rho = e1 @ rho @ e1.conj().T + e2 @ rho @ e2.conj().T
        return rho
    def run(g_on):
        plus = np.zeros(3)
        plus[:2] = 1 / np.sqrt(2)
        psi = np.ones(1)
        for _ in range(n):
            psi = np.kron(psi, plus)
        rho = np.outer(psi, psi).astype(complex)
        for q in pair_order:
            for sl, nsteps in zip(waveform.slices, waveform.steps):
                dt = sl.duration / nsteps
                u = expm(-1j * pair_u(sl, 1 + q) * dt)
                for _ in range(nsteps):
                    rho = u @ rho @ u.conj().T
                    if g_on:
                        rho = decay_kraus_all(rho, dt)
        if g_on:
            rho = drain(rho)
        return rho
    qubit = [i for i in range(dim) if all((i // 3 ** k) % 3 < 2 for k in range(n))]
    ideal = run(False)[np.ix_(qubit, qubit)]
    noisy = run(True)[np.ix_(qubit, qubit)]
    # ideal output is U|+><+|U^dag; projecting the noisy output onto U Z_s |+>
    vals = np.linalg.eigh(ideal)
    u_plus = vals[1][:, -1]
    out = {}
    zs = [np.diag([1.0, -1.0])] * n
    for bits in itertools.product((0, 1), repeat=n):
        # qubit ordering of `qubit` list is base-3 digits with atom 0 most significant
        zdiag = np.ones(1)
        for b in bits:
            zdiag = np.kron(zdiag, np.array([1.0, -1.0]) if b else np.ones(2))
        v = zdiag * u_plus
        out[(bits[0], bits[1:])] = float(np.real(np.conj(v) @ noisy @ v))
    return out


# lattice oracles

def ising_exact(jx, jy, T):
    """Exact <E>, <m^2> and <|M_0|^2>/N of a small periodic Ising lattice by enumeration."""
    L = jx.shape[0]
    n = L * L
    es, m2, c0, w = [], [], [], []
    for k in range(2 ** n):
        s = np.array([1 if (k >> i) & 1 else -1 for i in range(n)], dtype=float).reshape(L, L)
        e = -(jx * s * np.roll(s, -1, 0)).sum() - (jy * s * np.roll(s, -1, 1)).sum()
        es.append(e)
        m2.append((s.mean()) ** 2)
        c0.append(s.sum() ** 2 / n)
    es = np.array(es)
    w = np.exp(-(es - es.min()) / T)
    z = w.sum()
    return {"E": float((w * es).sum() / z), "m2": float((w * np.array(m2)).sum() / z),
            "chi0": float((w * np.array(c0)).sum() / z)}


def wraps_by_cover(site_ok, bond_ok):
    """Wrapping test on the 2L x 2L cover: a cluster wraps iff some site meets its own image."""
    L = site_ok.shape[0]
    M = 2 * L
    def ok_site(x, y):
        return site_ok[x % L, y % L]
    def nbrs(x, y):
        out = []
        if bond_ok[0, x % L, y % L]:
            out.append(((x + 1) % M, y))
        if bond_ok[0, (x - 1) % L, y % L]:
            out.append(((x - 1) % M, y))
        if bond_ok[1, x % L, y % L]:
            out.append((x, (y + 1) % M))
        if bond_ok[1, x % L, (y - 1) % L]:
            out.append((x, (y - 1) % M))
        return [p for p in out if ok_site(*p)]
    seen = set()
    for x0 in range(L):
        for y0 in range(L):
            if not site_ok[x0, y0] or (x0, y0) in seen:
                continue
            comp = {(x0, y0)}
            dq = deque([(x0, y0)])
            while dq:
                p = dq.popleft()
                for q in nbrs(*p):
                    if q not in comp:
                        comp.add(q)
                        dq.append(q)
            for (x, y) in comp:
                if x < L and y < L:
                    seen.add((x, y))
            for dx, dy in ((L, 0), (0, L), (L, L)):
                if ((x0 + dx) % M, (y0 + dy) % M) in comp:
                    return True
    return False


def dense_commutator(op1, op2):
    m1 = np.ones((1, 1))
    m2 = np.ones((1, 1))
    for a, b in zip(op1, op2):
        m1 = np.kron(m1, PAULI[a])
        m2 = np.kron(m2, PAULI[b])
    return float(np.real(np.trace(m1 @ m2 @ m1.conj().T @ m2.conj().T))) / m1.shape[0]
