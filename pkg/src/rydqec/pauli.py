"""Pauli strings in symplectic form."""
from __future__ import annotations

import itertools

import numpy as np

PAULI_LETTERS = "IXYZ"

# (x, z) bits per letter
_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_LETTER = {v: k for k, v in _XZ.items()}

MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def labels(n: int) -> list[str]:
    return ["".join(t) for t in itertools.product(PAULI_LETTERS, repeat=n)]


def to_symplectic(label: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        xz = np.array([_XZ[c] for c in label.upper()], dtype=np.uint8).reshape(-1, 2)
    except KeyError as exc:
        raise ValueError(f"not a Pauli string: {label!r}") from exc
    return xz[:, 0], xz[:, 1]


def from_symplectic(x, z) -> str:
    return "".join(_LETTER[(int(a), int(b))] for a, b in zip(x, z))


def matrix(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in label.upper():
        out = np.kron(out, MATRICES[c])
    return out


def scalar_commutator(op1: str, op2: str) -> int:
    """+1 if the two Pauli strings commute, -1 if they anticommute.

    Counts sites where the letters anticommute; no matrices involved.
    """
    if len(op1) != len(op2):
        raise ValueError(f"length mismatch: {len(op1)} vs {len(op2)}")
    x1, z1 = to_symplectic(op1)
    x2, z2 = to_symplectic(op2)
    s = int(np.sum(x1 & z2) + np.sum(z1 & x2)) & 1
    return -1 if s else 1


def weight(label: str) -> int:
    return sum(c != "I" for c in label)
