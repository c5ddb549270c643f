"""Joint error distribution of one stabilizer plaquette and its Nishimori couplings."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .exceptions import NishimoriError, ValidationError


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x = x >> 1
    return c


@dataclass
class PlaquetteErrorDistribution:
    """Probabilities over (data-error mask, measurement flag).

    probs[mask, flag] is conditional on the plaquette not being erased and
    sums to one; erasure_weight is kept separately.  Bit j of mask is the
    data qubit at clockwise position j (up, right, down, left for a
    4-plaquette).  sharing=2 means every data qubit receives contributions
    from the two plaquettes touching it (the toric layout); sharing=1 means
    each bit already is the full error of one lattice bond.
    """

    probs: np.ndarray
    erasure_weight: float = 0.0
    error_type: str = "Z"
    sharing: int = 2
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] not in (4, 16):
            raise ValidationError(f"probs must have shape (2**n, 2) with n in (2, 4), got {p.shape}")
        if p.min() < -1e-12:
            raise ValidationError("negative probability")
        if abs(p.sum() - 1) > 1e-10:
            raise ValidationError(f"probabilities sum to {p.sum():.12f}, expected 1")
        if not 0 <= self.erasure_weight <= 1:
            raise ValidationError("erasure weight outside [0, 1]")
        if self.error_type not in ("X", "Z"):
            raise ValidationError("error_type must be X or Z")
        if self.sharing not in (1, 2):
            raise ValidationError("sharing must be 1 or 2")
        self.probs = np.clip(p, 0.0, None)

    @property
    def n_data(self) -> int:
        return int(np.log2(self.probs.shape[0]))

    @property
    def grouped(self) -> dict:
        k = popcount(np.arange(self.probs.shape[0]))
        out = {}
        for kk in range(self.n_data + 1):
            for f in (0, 1):
                out[(kk, f)] = float(self.probs[k == kk, f].sum())
        return out

    def congruent(self, k: int) -> int:
        """Error count related to k by multiplying with the stabilizer itself."""
        return self.n_data - k

    @property
    def q(self) -> float:
        return float(self.probs[:, 1].sum())

    def data_marginals(self) -> np.ndarray:
        masks = np.arange(self.probs.shape[0])
        pm = self.probs.sum(1)
        return np.array([pm[(masks >> j) & 1 == 1].sum() for j in range(self.n_data)])

    def bond_rate(self) -> float:
        """Flip probability of one lattice bond built from independent contributions."""
        m = float(self.data_marginals().mean())
        return 0.5 * (1 - (1 - 2 * m) ** self.sharing)

    def joint(self) -> np.ndarray:
        return self.probs * (1 - self.erasure_weight)

    def truncated(self, floor: float) -> "PlaquetteErrorDistribution":
        p = np.where(self.probs < floor, 0.0, self.probs)
        return self._with(p / p.sum())

    def _with(self, probs):
        return PlaquetteErrorDistribution(probs, self.erasure_weight, self.error_type, self.sharing,
                                          dict(self.metadata))

    @classmethod
    def clean(cls, n_data: int = 4) -> "PlaquetteErrorDistribution":
        p = np.zeros((2 ** n_data, 2))
        p[0, 0] = 1.0
        return cls(p)

    @classmethod
    def independent(cls, p: float, q: float = 0.0, n_data: int = 4,
                    sharing: int = 1) -> "PlaquetteErrorDistribution":
        """Product distribution with per-bit rate p and flag rate q."""
        masks = np.arange(2 ** n_data)
        k = popcount(masks)
        pd = p ** k * (1 - p) ** (n_data - k)
        probs = np.stack([pd * (1 - q), pd * q], axis=1)
        return cls(probs, sharing=sharing, metadata={"model": "independent", "p": p, "q": q})

    def is_product(self, tol: float = 1e-12) -> bool:
        n = self.n_data
        m = self.data_marginals()
        masks = np.arange(2 ** n)
        pd = np.ones(2 ** n)
        for j in range(n):
            b = (masks >> j) & 1
            pd *= np.where(b, m[j], 1 - m[j])
        ref = np.stack([pd * (1 - self.q), pd * self.q], axis=1)
        return bool(np.abs(ref - self.probs).max() < tol)

    def to_dict(self) -> dict:
        return {"n_data": self.n_data, "probs": self.probs.tolist(), "erasure_weight": self.erasure_weight,
                "error_type": self.error_type, "sharing": self.sharing,
                "grouped": {f"{k},{f}": v for (k, f), v in self.grouped.items()},
                "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> "PlaquetteErrorDistribution":
        return cls(np.array(d["probs"], dtype=float), float(d.get("erasure_weight", 0.0)),
                   d.get("error_type", "Z"), int(d.get("sharing", 2)), dict(d.get("metadata", {})))

    def digest(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.probs).tobytes())
        h.update(json.dumps([self.erasure_weight, self.error_type, self.sharing]).encode())
        return h.hexdigest()[:16]


def walsh_coupling(phi: np.ndarray, floor: float | None = None) -> np.ndarray:
    """Fourier coefficients of ln(phi) over the local Z-error group.

    phi is indexed by a bitmask over the local error positions.  Returns
    beta*J for every parity pattern sigma:
        (1/|G|) sum_tau ln phi(tau) (-1)^(sigma . tau).
    """
    phi = np.asarray(phi, dtype=float)
    if floor is not None:
        phi = np.maximum(phi, floor)
    if phi.min() <= 0:
        raise NishimoriError("zero probability in the support; set a floor to regularize")
    n = phi.size
    taus = np.arange(n)
    sign = np.array([(-1.0) ** popcount(taus & s) for s in range(n)])
    return sign @ np.log(phi) / n


def nishimori_couplings(dist: PlaquetteErrorDistribution, r: float = 0.0,
                        floor: float | None = None) -> dict:
    """Data-bond and measurement couplings beta*J on the Nishimori sheet.

    The local distribution is first reduced to what a single lattice bond
    and a single syndrome bit see: the grouped data distribution averaged
    over positions for sharing=1, or the independent bond rate for
    overlapping plaquettes.  The erasure factor (1 - r) multiplies every
    entry of phi, so it only shifts the trivial sigma=0 coefficient.
    """
    if not 0 <= r < 1:
        raise ValidationError("r must lie in [0, 1)")
    n = dist.n_data
    if dist.sharing == 1:
        grouped = dist.grouped
        # symmetrize over positions: phi(tau) depends on |tau| and flag only
        phi = np.zeros((2 ** n, 2))
        for mask in range(2 ** n):
            k = bin(mask).count("1")
            for f in (0, 1):
                phi[mask, f] = grouped[(k, f)] / comb(n, k)
        phi = phi * (1 - r)
        if dist.q == 0 and floor is None:
            # perfect measurements: the flag carries no disorder
            k_data = float(walsh_coupling(phi[:, 0], floor)[1])
            k_meas = np.inf
        else:
            flat = phi.T.reshape(-1)  # index = flag * 2**n + mask
            coeff = walsh_coupling(flat, floor)
            k_data = float(coeff[1])
            k_meas = float(coeff[2 ** n])
    else:
        p = dist.bond_rate()
        q = dist.q
        k_data = float(walsh_coupling(np.array([1 - p, p]) * (1 - r), floor)[1])
        k_meas = float(walsh_coupling(np.array([1 - q, q]) * (1 - r), floor)[1]) if (q > 0 or floor) else np.inf
    return {"data": k_data, "measurement": k_meas}


def nishimori_temperature(dist: PlaquetteErrorDistribution, r: float = 0.0,
                          floor: float | None = None) -> float:
    """T = J / (beta J) for the data bonds with J = 1."""
    if dist.bond_rate() == 0 and floor is None:
        return 0.0
    k = nishimori_couplings(dist, r, floor)["data"]
    if k == 0:
        return np.inf
    return 1.0 / k


def nishimori_coupling_independent(p: float) -> float:
    return 0.5 * np.log((1 - p) / p)
