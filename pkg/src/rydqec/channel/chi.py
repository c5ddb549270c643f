"""Pauli-twirled diagonal of the process matrix of a pair channel."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .. import pauli
from ..exceptions import PropagationError
from .pulse import COMPUTATIONAL, DIM, GammaMatrix

LABELS2 = pauli.labels(2)
_IDX = [a * DIM + b for a in COMPUTATIONAL for b in COMPUTATIONAL]


def _chi_basis():
    # row (mu, nu) holds conj(vec(P_mu kron conj(P_nu))) / 16
    mats = [pauli.matrix(lb) for lb in LABELS2]
    rows = [np.kron(p, q.conj()).conj().reshape(-1) / 16 for p in mats for q in mats]
    return np.array(rows)


_BASIS = _chi_basis()


@dataclass
class ChiDiagonal:
    """Twirled pair channel.  Labels are (ancilla, data)."""

    probs: dict
    erasure_weight: float
    discarded_offdiag: float = 0.0
    qubit_roles: tuple = ("ancilla", "data")
    metadata: dict = field(default_factory=dict)

    def vector(self) -> np.ndarray:
        return np.array([self.probs.get(lb, 0.0) for lb in LABELS2])

    @property
    def total(self) -> float:
        return float(sum(self.probs.values()) + self.erasure_weight)

    def tv_distance(self, other: "ChiDiagonal") -> float:
        d = np.abs(self.vector() - other.vector()).sum() + abs(self.erasure_weight - other.erasure_weight)
        return 0.5 * float(d)

    @classmethod
    def identity(cls) -> "ChiDiagonal":
        return cls({lb: (1.0 if lb == "II" else 0.0) for lb in LABELS2}, 0.0)

    def to_dict(self) -> dict:
        return {"probs": {k: float(v) for k, v in self.probs.items()},
                "erasure_weight": float(self.erasure_weight),
                "discarded_offdiag": float(self.discarded_offdiag),
                "qubit_roles": list(self.qubit_roles),
                **{k: v for k, v in self.metadata.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def chi_matrix(srel4: np.ndarray) -> np.ndarray:
    """Full 16x16 process matrix from a 16x16 qubit-block superoperator."""
    return (_BASIS @ srel4.reshape(-1)).reshape(16, 16)


def extract_chi_diagonal(gamma_matrix: GammaMatrix, ideal_unitary: np.ndarray | None = None,
                         tol: float = 1e-9) -> ChiDiagonal:
    """Diagonal chi in the frame of ``ideal_unitary`` (4x4, qubit block).

    Defaults to the pulse's own noiseless evolution, so single-qubit phases
    picked up by the gate are not counted as errors.
    """
    if ideal_unitary is None:
        ideal_unitary = gamma_matrix.unitary[np.ix_(COMPUTATIONAL, COMPUTATIONAL)]
    u = np.asarray(ideal_unitary, dtype=complex)
    if u.shape != (4, 4):
        raise ValueError(f"ideal unitary must be 4x4, got {u.shape}")
    s4 = gamma_matrix.superop[np.ix_(_IDX, _IDX)]
    srel = s4 @ np.kron(u.conj().T, u.T)
    chi = chi_matrix(srel)
    diag = np.real(np.diag(chi))
    if diag.min() < -tol:
        raise PropagationError(f"negative chi entry {diag.min():.3e}")
    off = float(np.abs(chi).sum() - np.abs(np.diag(chi)).sum())
    # leakage averaged over the four computational inputs
    leak = float(np.real(gamma_matrix.leak.reshape(DIM, DIM)[COMPUTATIONAL, COMPUTATIONAL].sum()) / 4)
    ryd = float(np.real(gamma_matrix.rydberg_time.reshape(DIM, DIM)[COMPUTATIONAL, COMPUTATIONAL].sum()) / 4)
    probs = {lb: float(max(v, 0.0)) for lb, v in zip(LABELS2, diag)}
    meta = dict(gamma_matrix.params)
    meta["rydberg_time"] = ryd
    meta["residual"] = 1.0 - sum(probs.values()) - leak
    return ChiDiagonal(probs, leak, off, metadata=meta)
