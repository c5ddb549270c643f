"""Erasure bookkeeping and lattice-wide disorder realizations.

2D layout on an L x L torus: sites (x, y) carry the spins, bond array
index [0, x, y] joins (x, y)-(x+1, y) and [1, x, y] joins (x, y)-(x, y+1).
A plaquette circuit centred on site (x, y) touches, clockwise, the bonds
up [1, x, y], right [0, x, y], down [1, x, y-1] and left [0, x-1, y].

3D layout on d x d x T: edge spins [mu, x, y, t] with mu = 0, 1, 2 for
the x, y, t directions; plaquettes [plane, x, y, t] with plane 0 = xy,
1 = xt, 2 = yt, each anchored at its lowest corner.  Timelike plaquettes
(xt, yt) carry data errors of round t, spacelike ones (xy) the syndrome
flips of round t.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .distribution import PlaquetteErrorDistribution
from .exceptions import ValidationError
from .rng import make_generator

SCENARIOS = ("no-refresh", "refresh")
GAMMA_BBR = 2 * math.pi * 840.0  # rad/s


@dataclass(frozen=True)
class ErasureParameters:
    gamma_bbr: float = GAMMA_BBR
    t_trap: float = math.inf
    tau_meas: float = 1e-3
    f_int: float = 0.0
    cycles: int = 1

    def __post_init__(self):
        if min(self.gamma_bbr, self.t_trap, self.tau_meas) < 0 or self.cycles < 0:
            raise ValidationError("erasure rates and times must be non-negative")
        if not 0 <= self.f_int <= 1:
            raise ValidationError("f_int must lie in [0, 1]")


def erasure_rate(params: ErasureParameters) -> float:
    trap = 0.0 if math.isinf(params.t_trap) else 1.0 / params.t_trap
    return params.f_int * params.gamma_bbr + trap


def effective_erasure(omega: float, tau_meas: float, cycles: float) -> float:
    if omega < 0 or tau_meas < 0 or cycles < 0:
        raise ValidationError("inputs must be non-negative")
    return float(-math.expm1(-omega * tau_meas * cycles))


@dataclass
class DisorderSample:
    shape: tuple
    bond_signs: np.ndarray | None
    plaquette_signs: np.ndarray | None
    erased_edges: np.ndarray
    erased_sites: np.ndarray
    seed: int
    r_bar: float = 0.0
    scenario: str = "no-refresh"
    dist_digest: str = ""
    effective_p: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def is_3d(self) -> bool:
        return len(self.shape) == 3

    def to_bytes(self) -> bytes:
        header = {"shape": list(self.shape), "seed": int(self.seed), "r_bar": self.r_bar,
                  "scenario": self.scenario, "dist": self.dist_digest, "effective_p": self.effective_p}
        buf = io.BytesIO()
        buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        signs = self.plaquette_signs if self.is_3d else self.bond_signs
        for arr in (signs.astype(np.int8), self.erased_edges.astype(np.uint8), self.erased_sites.astype(np.uint8)):
            buf.write(np.ascontiguousarray(arr).tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DisorderSample":
        head, body = data.split(b"\n", 1)
        h = json.loads(head)
        shape = tuple(h["shape"])
        if len(shape) == 3:
            ns = (3,) + shape
            es, ss = (3,) + shape, shape
        else:
            ns = (2,) + shape
            es, ss = ns, shape
        a = int(np.prod(ns))
        b = int(np.prod(es))
        signs = np.frombuffer(body[:a], np.int8).reshape(ns).copy()
        edges = np.frombuffer(body[a:a + b], np.uint8).reshape(es).astype(bool)
        sites = np.frombuffer(body[a + b:], np.uint8).reshape(ss).astype(bool)
        kw = dict(plaquette_signs=signs, bond_signs=None) if len(shape) == 3 else dict(bond_signs=signs, plaquette_signs=None)
        return cls(shape, erased_edges=edges, erased_sites=sites, seed=h["seed"], r_bar=h["r_bar"],
                   scenario=h["scenario"], dist_digest=h["dist"], effective_p=h["effective_p"], **kw)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _draw_categories(rng, probs: np.ndarray, size) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right")


def star_to_bonds(masks: np.ndarray) -> np.ndarray:
    """XOR each site's 4-bit data pattern onto its incident bonds."""
    L = masks.shape[0]
    flips = np.zeros((2, L, L) + masks.shape[2:], dtype=np.uint8)
    b = [(masks >> j) & 1 for j in range(4)]
    flips[1] ^= b[0].astype(np.uint8)                       # up
    flips[0] ^= b[1].astype(np.uint8)                       # right
    flips[1] ^= np.roll(b[2], -1, axis=1).astype(np.uint8)  # down: bond [1, x, y-1] of site (x, y)
    flips[0] ^= np.roll(b[3], -1, axis=0).astype(np.uint8)  # left: bond [0, x-1, y]
    return flips


def _bond_flips(rng, dist: PlaquetteErrorDistribution, L: int, extra=()):
    if dist.sharing == 1:
        if not dist.is_product(1e-6):
            raise ValidationError("per-bond sampling needs a product distribution")
        p = float(dist.data_marginals().mean())
        return (rng.random((2, L, L) + extra) < p).astype(np.uint8)
    if dist.n_data != 4:
        raise ValidationError("toric layout needs 4-plaquettes")
    cat = _draw_categories(rng, dist.probs.sum(1), (L, L) + extra)
    return star_to_bonds(cat)


def _erasure_2d(rng, L, r_bar, scenario):
    edges = rng.random((2, L, L)) < r_bar
    if scenario == "refresh":
        sites = np.zeros((L, L), dtype=bool)
    else:
        sites = rng.random((L, L)) < r_bar
    # a lost site takes its four bonds with it
    edges = edges | sites[None] | np.stack([np.roll(sites, -1, 0), np.roll(sites, -1, 1)])
    return edges, sites


def sample_disorder(dist: PlaquetteErrorDistribution, r_bar: float, shape, seed: int, *,
                    scenario: str = "no-refresh", floor: float = 1e-8) -> DisorderSample:
    if scenario not in SCENARIOS:
        raise ValidationError(f"scenario must be one of {SCENARIOS}")
    if not 0 <= r_bar <= 1:
        raise ValidationError("r_bar must lie in [0, 1]")
    shape = tuple(int(s) for s in shape)
    if len(shape) == 2 and shape[0] != shape[1] or len(shape) == 3 and shape[0] != shape[1]:
        raise ValidationError("spatial extent must be square")
    if len(shape) not in (2, 3) or min(shape) < 2:
        raise ValidationError(f"bad lattice shape {shape}")
    if floor:
        dist = dist.truncated(floor)
    rng = make_generator(seed)
    L = shape[0]
    edges2, sites2 = _erasure_2d(rng, L, r_bar, scenario)
    if len(shape) == 2:
        flips = _bond_flips(rng, dist, L)
        signs = np.where(flips == 1, -1, 1).astype(np.int8)
        signs[edges2] = 0
        live = ~edges2
        eff = float(flips[live].mean()) if live.any() else 0.0
        return DisorderSample(shape, signs, None, edges2, sites2, seed, r_bar, scenario, dist.digest(), eff)
    T = shape[2]
    flips = _bond_flips(rng, dist, L, (T,))                   # (2, L, L, T)
    q = dist.q
    flags = (rng.random((L, L, T)) < q).astype(np.uint8)
    flags[..., T - 1] = 0                                       # final round is perfect
    plaq = np.empty((3, L, L, T), dtype=np.int8)
    plaq[0] = np.where(flags == 1, -1, 1)
    plaq[1] = np.where(flips[0] == 1, -1, 1)
    plaq[2] = np.where(flips[1] == 1, -1, 1)
    edges = np.zeros((3, L, L, T), dtype=bool)
    edges[0] = edges2[0][..., None]
    edges[1] = edges2[1][..., None]
    edges[2] = sites2[..., None]
    sites = np.repeat(sites2[..., None], T, axis=2)
    dead = erased_plaquettes(edges)
    plaq[dead] = 0
    live = ~dead[1:]
    data = np.stack([flips[0], flips[1]])
    eff = float(data[live].mean()) if live.any() else 0.0
    return DisorderSample(shape, None, plaq, edges, sites, seed, r_bar, scenario, dist.digest(), eff,
                          meta={"q": q})


def plaquette_edges(plane: int):
    """Edge offsets (mu, dx, dy, dt) of the four edges of a plaquette."""
    a, b = ((0, 1), (0, 2), (1, 2))[plane]
    ea = [0, 0, 0]
    eb = [0, 0, 0]
    ea[a] = 1
    eb[b] = 1
    return [(a, 0, 0, 0), (b, *ea), (a, *eb), (b, 0, 0, 0)]


def erased_plaquettes(edges: np.ndarray) -> np.ndarray:
    dead = np.zeros_like(edges)
    for plane in range(3):
        for mu, dx, dy, dt in plaquette_edges(plane):
            dead[plane] |= np.roll(edges[mu], (-dx, -dy, -dt), axis=(0, 1, 2))
    return dead
