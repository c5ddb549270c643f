"""Erasure percolation on the L x L torus.

At zero Pauli-error rate the ordered phase of the bond model survives only
if the live bonds still form a cluster that wraps the torus.  Wrapping is
detected with a union-find that stores each site's displacement from its
root: joining two sites already in one cluster with a nonzero net
displacement closes a non-contractible loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import ValidationError
from .rng import make_generator
from .stats import linear_crossings

MODES = ("bond", "site-bond")


@njit(cache=True)
def _find(par, dx, dy, i):
    x = 0
    y = 0
    r = i
    while par[r] != r:
        x += dx[r]
        y += dy[r]
        r = par[r]
    cx = x
    cy = y
    j = i
    while par[j] != j:
        nj = par[j]
        ox = dx[j]
        oy = dy[j]
        par[j] = r
        dx[j] = cx
        dy[j] = cy
        cx -= ox
        cy -= oy
        j = nj
    return r, x, y


@njit(cache=True)
def _wraps(site_ok, bond_ok):
    """(wraps along x, wraps along y) for live bonds between live sites.

    bond_ok[0, x, y] joins (x, y)-(x+1, y); bond_ok[1, x, y] joins (x, y)-(x, y+1).
    """
    L = site_ok.shape[0]
    n = L * L
    par = np.arange(n)
    dx = np.zeros(n, np.int64)
    dy = np.zeros(n, np.int64)
    wx = False
    wy = False
    for x in range(L):
        for y in range(L):
            if not site_ok[x, y]:
                continue
            a = x * L + y
            for d in range(2):
                if not bond_ok[d, x, y]:
                    continue
                if d == 0:
                    bx = (x + 1) % L
                    by = y
                    ex = 1
                    ey = 0
                else:
                    bx = x
                    by = (y + 1) % L
                    ex = 0
                    ey = 1
                if not site_ok[bx, by]:
                    continue
                b = bx * L + by
                ra, xa, ya = _find(par, dx, dy, a)
                rb, xb, yb = _find(par, dx, dy, b)
                if ra != rb:
                    par[rb] = ra
                    dx[rb] = xa + ex - xb
                    dy[rb] = ya + ey - yb
                else:
                    if xa + ex - xb != 0:
                        wx = True
                    if ya + ey - yb != 0:
                        wy = True
    return wx, wy


def percolates(site_ok: np.ndarray, bond_ok: np.ndarray, rule: str = "either") -> bool:
    """True if the live subgraph has a cluster wrapping the torus.

    rule "either" needs one wrapping direction, "both" needs the two.
    """
    site_ok = np.asarray(site_ok, dtype=bool)
    bond_ok = np.asarray(bond_ok, dtype=bool)
    L = site_ok.shape[0]
    if site_ok.shape != (L, L) or bond_ok.shape != (2, L, L):
        raise ValidationError("expected site mask (L, L) and bond mask (2, L, L)")
    wx, wy = _wraps(site_ok, bond_ok)
    if rule == "either":
        return bool(wx or wy)
    if rule == "both":
        return bool(wx and wy)
    raise ValidationError("rule must be 'either' or 'both'")


def draw_masks(rng, L: int, r: float, mode: str):
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    bond_ok = rng.random((2, L, L)) >= r
    if mode == "bond":
        site_ok = np.ones((L, L), dtype=bool)
    else:
        site_ok = rng.random((L, L)) >= r
    return site_ok, bond_ok


@dataclass
class SurvivalCurve:
    sizes: list
    r_grid: np.ndarray
    survival: dict            # L -> wrapping probability on the grid
    trials: int
    mode: str
    threshold: float | None
    threshold_err: float | None
    crossings: list


def survival_curve(sizes, r_grid, trials: int = 2000, mode: str = "bond", seed: int = 0,
                   rule: str = "either", n_boot: int = 200) -> SurvivalCurve:
    """Wrapping probability against erasure rate, and its finite-size crossing.

    The threshold is the crossing of the largest and smallest sizes; the
    error comes from resampling trials.
    """
    sizes = sorted(int(L) for L in sizes)
    r_grid = np.asarray(sorted(r_grid), dtype=float)
    if np.any((r_grid < 0) | (r_grid > 1)):
        raise ValidationError("erasure rates must lie in [0, 1]")
    if trials < 1:
        raise ValidationError("need at least one trial")
    hits = {}
    for i, L in enumerate(sizes):
        h = np.zeros((len(r_grid), trials), dtype=bool)
        for j, r in enumerate(r_grid):
            rng = make_generator(seed, 1, i, j)
            for t in range(trials):
                s, b = draw_masks(rng, L, r, mode)
                h[j, t] = percolates(s, b, rule)
        hits[L] = h
    surv = {L: hits[L].mean(1) for L in sizes}
    lo, hi = sizes[0], sizes[-1]
    cr = linear_crossings(r_grid, surv[hi], surv[lo])
    th = float(np.mean(cr)) if cr else None
    err = None
    if th is not None and n_boot > 1:
        rng = make_generator(seed, 2)
        boots = []
        for _ in range(n_boot):
            a = hits[hi][:, rng.integers(0, trials, trials)].mean(1)
            b = hits[lo][:, rng.integers(0, trials, trials)].mean(1)
            c = linear_crossings(r_grid, a, b)
            if c:
                boots.append(np.mean(c))
        err = float(np.std(boots, ddof=1)) if len(boots) > 1 else None
    return SurvivalCurve(sizes, r_grid, surv, trials, mode, th, err, cr)
