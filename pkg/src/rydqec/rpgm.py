"""(2+1)D random-plaquette Z2 gauge model.

H = -sum_P J_P tau_P prod_{e in P} s_e  on a d x d x T periodic lattice, with
edge spins s[mu, x, y, t] and plaquettes [plane, x, y, t] laid out as in
``disorder`` (plane 0 = xy, 1 = xt, 2 = yt).  J_P is 1 on timelike (data)
plaquettes and a fixed ratio on spacelike (syndrome) plaquettes, so the
anisotropic couplings of the Nishimori sheet are carried by one temperature.
Erased edges are frozen at +1 and erased plaquettes carry zero coupling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .disorder import DisorderSample, erased_plaquettes, sample_disorder
from .exceptions import BracketError, ValidationError
from .rng import make_generator, next_uniform, stream_states
from .stats import jackknife, linear_crossings

PLANES = {"xy": 0, "xt": 1, "yt": 2}
_PLANE_AXES = ((0, 1), (0, 2), (1, 2))


@dataclass
class GaugeLattice3D:
    spins: np.ndarray          # (3, d, d, T) int8
    coupling: np.ndarray       # (3, d, d, T) J_P * tau_P, zero where erased
    erased_edges: np.ndarray   # (3, d, d, T) bool

    @property
    def shape(self):
        return self.spins.shape[1:]

    @classmethod
    def from_sample(cls, sample: DisorderSample | None, shape=None, ratio: float = 1.0,
                    start: str = "cold", rng=None) -> "GaugeLattice3D":
        """ratio = J(spacelike) / J(timelike)."""
        if sample is None:
            if shape is None:
                raise ValidationError("need a disorder sample or a shape")
            tau = np.ones((3,) + tuple(shape), dtype=np.int8)
            edges = np.zeros(tau.shape, dtype=bool)
        else:
            if not sample.is_3d:
                raise ValidationError("need a 3D disorder sample")
            tau = sample.plaquette_signs
            edges = sample.erased_edges
        j = np.ones(tau.shape)
        j[0] = ratio
        if start == "hot":
            rng = rng or make_generator(0)
            spins = np.where(rng.random(tau.shape) < 0.5, -1, 1).astype(np.int8)
            spins[edges] = 1
        else:
            spins = np.ones(tau.shape, dtype=np.int8)
        return cls(spins, j * tau, edges.copy())

    def plaquette_products(self) -> np.ndarray:
        return plaquette_products(self.spins)

    def energy(self) -> float:
        return float(-(self.coupling * self.plaquette_products()).sum())

    def gauge(self, sigma: np.ndarray) -> "GaugeLattice3D":
        """Vertex gauge transformation: each edge picks up sigma at both ends.

        Leaves every plaquette product unchanged.  Frozen edges are only
        consistent if sigma is +1 on all their endpoints.
        """
        sg = sigma.astype(np.int8)
        s = self.spins.copy()
        for mu in range(3):
            s[mu] = s[mu] * sg * np.roll(sg, -1, axis=mu)
        return GaugeLattice3D(s, self.coupling.copy(), self.erased_edges.copy())

    def edge_gauge(self, mu: int, x: int, y: int, t: int) -> "GaugeLattice3D":
        """Flip one edge spin together with the couplings of its four plaquettes."""
        s = self.spins.copy()
        c = self.coupling.copy()
        s[mu, x, y, t] *= -1
        dims = np.array(self.shape)
        o = np.array([x, y, t])
        for nu in range(3):
            if nu == mu:
                continue
            plane = mu + nu - 1
            e = np.zeros(3, dtype=int)
            e[nu] = 1
            for orig in (o, o - e):
                ox, oy, ot = orig % dims
                c[plane, ox, oy, ot] *= -1
        return GaugeLattice3D(s, c, self.erased_edges.copy())


def plaquette_products(spins: np.ndarray) -> np.ndarray:
    out = np.empty(spins.shape, dtype=np.int8)
    for plane, (a, b) in enumerate(_PLANE_AXES):
        out[plane] = spins[a] * np.roll(spins[b], -1, axis=a) * np.roll(spins[a], -1, axis=b) * spins[b]
    return out


@njit(cache=True)
def _sweep(s, coup, frozen, beta, state, n_sweeps):
    R, _, d0, d1, d2 = s.shape
    for r in range(R):
        b = beta[r]
        for _ in range(n_sweeps):
            for mu in range(3):
                for x in range(d0):
                    for y in range(d1):
                        for t in range(d2):
                            if frozen[r, mu, x, y, t]:
                                continue
                            h = 0.0
                            for nu in range(3):
                                if nu == mu:
                                    continue
                                pl = mu + nu - 1
                                # forward plaquette, origin at the site
                                x1 = x; y1 = y; t1 = t
                                if mu == 0:
                                    x1 = (x + 1) % d0
                                elif mu == 1:
                                    y1 = (y + 1) % d1
                                else:
                                    t1 = (t + 1) % d2
                                x2 = x; y2 = y; t2 = t
                                if nu == 0:
                                    x2 = (x + 1) % d0
                                elif nu == 1:
                                    y2 = (y + 1) % d1
                                else:
                                    t2 = (t + 1) % d2
                                h += coup[r, pl, x, y, t] * s[r, nu, x1, y1, t1] * s[r, mu, x2, y2, t2] * s[r, nu, x, y, t]
                                # backward plaquette, origin one step down nu
                                x3 = x; y3 = y; t3 = t
                                if nu == 0:
                                    x3 = (x - 1) % d0
                                elif nu == 1:
                                    y3 = (y - 1) % d1
                                else:
                                    t3 = (t - 1) % d2
                                x4 = x3; y4 = y3; t4 = t3
                                if mu == 0:
                                    x4 = (x3 + 1) % d0
                                elif mu == 1:
                                    y4 = (y3 + 1) % d1
                                else:
                                    t4 = (t3 + 1) % d2
                                h += coup[r, pl, x3, y3, t3] * s[r, nu, x4, y4, t4] * s[r, mu, x3, y3, t3] * s[r, nu, x3, y3, t3]
                            de = 2.0 * s[r, mu, x, y, t] * h
                            if de <= 0.0 or next_uniform(state, r) < math.exp(-b * de):
                                s[r, mu, x, y, t] = -s[r, mu, x, y, t]


@njit(cache=True)
def _loops(s, ax_a, ax_b, sizes, valid, out):
    """Add the position average of each bare rectangle product to out[r, k]."""
    R = s.shape[0]
    d0, d1, d2 = s.shape[2], s.shape[3], s.shape[4]
    c = np.empty(3, np.int64)
    dims = np.array([d0, d1, d2])
    for r in range(R):
        for k in range(sizes.shape[0]):
            la = sizes[k, 0]
            lb = sizes[k, 1]
            acc = 0.0
            cnt = 0
            for x in range(d0):
                for y in range(d1):
                    for t in range(d2):
                        if not valid[r, k, x, y, t]:
                            continue
                        p = 1
                        for i in range(la):
                            c[0] = x; c[1] = y; c[2] = t
                            c[ax_a] = (c[ax_a] + i) % dims[ax_a]
                            p *= s[r, ax_a, c[0], c[1], c[2]]
                            c[ax_b] = (c[ax_b] + lb) % dims[ax_b]
                            p *= s[r, ax_a, c[0], c[1], c[2]]
                        for j in range(lb):
                            c[0] = x; c[1] = y; c[2] = t
                            c[ax_b] = (c[ax_b] + j) % dims[ax_b]
                            p *= s[r, ax_b, c[0], c[1], c[2]]
                            c[ax_a] = (c[ax_a] + la) % dims[ax_a]
                            p *= s[r, ax_b, c[0], c[1], c[2]]
                        acc += p
                        cnt += 1
            if cnt > 0:
                out[r, k] += acc / cnt


@njit(cache=True)
def _polyakov(s, frozen, acc):
    """Second moments of straight spacelike lines that wrap the torus.

    x-lines are labelled by (y, t) and Fourier transformed along y, y-lines
    by (x, t) along x.  Adds |M(0)|^2 / n and |M(2 pi / d)|^2 / n, averaged
    over the two orientations.  Lines through a frozen edge are skipped.
    """
    R = s.shape[0]
    d = s.shape[2]
    T = s.shape[4]
    for r in range(R):
        for mu in range(2):
            m0 = 0.0
            mr = 0.0
            mi = 0.0
            for a in range(d):
                ca = math.cos(2 * math.pi * a / d)
                sa = math.sin(2 * math.pi * a / d)
                for t in range(T):
                    p = 1
                    dead = False
                    for b in range(d):
                        if mu == 0:
                            p *= s[r, 0, b, a, t]
                            dead = dead or frozen[r, 0, b, a, t]
                        else:
                            p *= s[r, 1, a, b, t]
                            dead = dead or frozen[r, 1, a, b, t]
                    if dead:
                        continue
                    m0 += p
                    mr += p * ca
                    mi += p * sa
            acc[r, 0] += 0.5 * m0 * m0 / (d * T)
            acc[r, 1] += 0.5 * (mr * mr + mi * mi) / (d * T)


@dataclass
class LoopSpec:
    plane: str = "xy"
    sizes: tuple = ((1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 4), (4, 4))

    def __post_init__(self):
        if self.plane not in PLANES:
            raise ValidationError(f"loop plane must be one of {tuple(PLANES)}")
        if not self.sizes or any(min(s) < 1 for s in self.sizes):
            raise ValidationError("loop sides must be positive")


def loop_geometry(erased_edges: np.ndarray, spec: LoopSpec):
    """Allowed loop positions and erasure-corrected enclosed areas.

    A loop is allowed when none of its perimeter edges is erased.  Its area
    is the Euclidean area minus the erased plaquettes it encloses.
    Returns (valid[k, x, y, t], area[k, x, y, t]).
    """
    plane = PLANES[spec.plane]
    a, b = _PLANE_AXES[plane]
    dead_p = erased_plaquettes(erased_edges)[plane].astype(float)
    shape = erased_edges.shape[1:]
    nk = len(spec.sizes)
    valid = np.ones((nk,) + shape, dtype=bool)
    area = np.zeros((nk,) + shape)
    ea, eb = erased_edges[a], erased_edges[b]
    for k, (la, lb) in enumerate(spec.sizes):
        bad = np.zeros(shape, dtype=bool)
        for i in range(la):
            bad |= np.roll(ea, -i, axis=a)
            bad |= np.roll(np.roll(ea, -i, axis=a), -lb, axis=b)
        for j in range(lb):
            bad |= np.roll(eb, -j, axis=b)
            bad |= np.roll(np.roll(eb, -j, axis=b), -la, axis=a)
        valid[k] = ~bad
        enclosed = np.zeros(shape)
        for i in range(la):
            for j in range(lb):
                enclosed += np.roll(np.roll(dead_p, -i, axis=a), -j, axis=b)
        area[k] = la * lb - enclosed
    return valid, area


@dataclass
class WilsonLoopSet:
    sizes: list                    # (la, lb)
    perimeter: np.ndarray
    area: np.ndarray               # erasure-corrected mean enclosed area
    w: np.ndarray                  # disorder and thermal mean
    w_err: np.ndarray
    plane: str = "xy"
    rejected: np.ndarray | None = None   # fraction of positions excluded by erasure

    def euclidean_area(self) -> np.ndarray:
        return np.array([a * b for a, b in self.sizes], dtype=float)


def classify_phase(wilson: WilsonLoopSet, n_sigma: float = 2.0) -> str:
    """Perimeter law -> 'ordered', area law -> 'disordered', else 'undetermined'.

    Weighted least squares of -ln W = c + a |perimeter| + b S.  The constant
    absorbs corner terms; without it a pure perimeter law shows up as a
    spurious area coefficient on small loops.
    """
    w = np.asarray(wilson.w, dtype=float)
    err = np.asarray(wilson.w_err, dtype=float)
    if len(w) < 3:
        raise ValidationError("need at least three loop sizes")
    # loops that have decayed into the noise carry no shape information; their
    # vanishing is itself the signature of fast (area) decay
    ok = np.isfinite(w) & np.isfinite(err) & (w > n_sigma * err) & (w > 0)
    if ok.sum() < 3:
        return "disordered" if ok.any() and np.any(~ok & np.isfinite(w)) else "undetermined"
    w, err = w[ok], err[ok]
    y = -np.log(w)
    sig = np.maximum(err / w, 1e-12)
    X = np.column_stack([np.ones_like(y), np.asarray(wilson.perimeter)[ok], np.asarray(wilson.area)[ok]])
    if ok.sum() < 4 or np.linalg.matrix_rank(X) < 3:
        X = X[:, 1:]
    Xw = X / sig[:, None]
    coef, *_ = np.linalg.lstsq(Xw, y / sig, rcond=None)
    resid = (y - X @ coef) / sig
    dof = max(len(y) - X.shape[1], 1)
    scale = max(1.0, float(resid @ resid) / dof)
    se = np.sqrt(np.diag(np.linalg.pinv(Xw.T @ Xw)) * scale)
    a, b = coef[-2], coef[-1]
    sb = se[-1]
    if b > 0 and b >= n_sigma * sb:
        return "disordered"
    if abs(b) <= n_sigma * sb and a > 0:
        return "ordered"
    return "undetermined"


@dataclass
class AnnealSchedule:
    temperatures: tuple            # measurement ladder, strictly ascending
    n_eq: int = 1000
    n_meas: int = 1000
    every: int = 2

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=float)
        if len(t) == 0 or np.any(~(t > 0)) or np.any(np.diff(t) <= 0):
            raise ValidationError("temperature ladder must be positive and strictly ascending")
        if self.n_eq < 0 or self.n_meas < 1 or self.every < 1:
            raise ValidationError("sweep counts must be positive")


@dataclass
class RungResult:
    temperature: float
    energy: np.ndarray            # per replica thermal mean
    energy_series: np.ndarray     # replica-averaged time series
    wilson: np.ndarray            # (replica, loop) thermal means
    poly: np.ndarray              # (replica, 2) Polyakov second moments


def gauge_sweep(lattice: GaugeLattice3D, T: float, state: np.ndarray, n: int = 1) -> GaugeLattice3D:
    """n Metropolis sweeps of one lattice in place; state is a one-element uint64 array."""
    if not T > 0:
        raise ValidationError("temperature must be positive")
    s = lattice.spins[None].copy()
    _sweep(s, lattice.coupling[None], lattice.erased_edges[None], np.array([1.0 / T]), state, n)
    lattice.spins[:] = s[0]
    return lattice


def _energies(spins, coup):
    return np.array([-(coup[r] * plaquette_products(spins[r])).sum() for r in range(spins.shape[0])])


def anneal_run(lattices, schedule: AnnealSchedule, seed: int = 0,
               loops: LoopSpec | None = None) -> list[RungResult]:
    """Heat a batch of lattices up the ladder and measure on every rung.

    Each rung starts from the configurations left by the previous one, so a
    cold start gives an ordered-to-disordered anneal.
    """
    if isinstance(lattices, GaugeLattice3D):
        lattices = [lattices]
    spins = np.stack([l.spins for l in lattices])
    coup = np.stack([l.coupling for l in lattices])
    frozen = np.stack([l.erased_edges for l in lattices])
    R = spins.shape[0]
    state = stream_states(seed, R)
    loops = loops or LoopSpec()
    a, b = _PLANE_AXES[PLANES[loops.plane]]
    sizes = np.array(loops.sizes, dtype=np.int64)
    valid = np.stack([loop_geometry(l.erased_edges, loops)[0] for l in lattices])
    out = []
    for t in schedule.temperatures:
        beta = np.full(R, 1.0 / t)
        _sweep(spins, coup, frozen, beta, state, schedule.n_eq)
        n = max(schedule.n_meas // schedule.every, 1)
        w = np.zeros((R, len(sizes)))
        poly = np.zeros((R, 2))
        series = np.zeros(n)
        e_acc = np.zeros(R)
        for i in range(n):
            _sweep(spins, coup, frozen, beta, state, schedule.every)
            _loops(spins, a, b, sizes, valid, w)
            _polyakov(spins, frozen, poly)
            e = _energies(spins, coup)
            e_acc += e
            series[i] = e.mean()
        out.append(RungResult(float(t), e_acc / n, series, w / n, poly / n))
    for l, s in zip(lattices, spins):
        l.spins[:] = s
    return out


def wilson_average(rung: RungResult, lattices, loops: LoopSpec | None = None) -> WilsonLoopSet:
    """Disorder average of thermal Wilson loops, with jackknife errors over samples."""
    loops = loops or LoopSpec()
    geo = [loop_geometry(l.erased_edges, loops) for l in lattices]
    valid = np.stack([g[0] for g in geo])
    area = np.stack([g[1] for g in geo])
    nvalid = valid.sum(axis=(2, 3, 4))
    rejected = 1.0 - nvalid.mean(0) / np.prod(valid.shape[2:])
    nk = len(loops.sizes)
    mean_area = np.array([area[:, k][valid[:, k]].mean() if valid[:, k].any() else np.nan for k in range(nk)])
    m = np.full(nk, np.nan)
    e = np.full(nk, np.nan)
    for k in range(nk):
        col = rung.wilson[nvalid[:, k] > 0, k]
        if len(col):
            mm, ee = jackknife(col)
            m[k], e[k] = float(mm), float(ee)
    perim = np.array([2 * (la + lb) for la, lb in loops.sizes], dtype=float)
    return WilsonLoopSet(list(loops.sizes), perim, mean_area, m, e, loops.plane, rejected)


def _xi(m) -> float:
    c0, ck = m[0], m[1]
    if ck <= 0:
        return math.inf
    return math.sqrt(max(c0 / ck - 1, 0.0)) / (2 * math.pi)


def polyakov_xi_over_L(rung: RungResult, idx=None):
    """Second-moment correlation length of spacelike lines over L, with jackknife error."""
    p = rung.poly if idx is None else rung.poly[idx]
    return jackknife(p, _xi)


def nishimori_lattices(dist, r_bar: float, d: int, n_samples: int, seed: int, *, T: int | None = None,
                       scenario: str = "no-refresh"):
    """Disorder samples on the Nishimori sheet.  Returns (lattices, temperature)."""
    from .distribution import nishimori_couplings
    k = nishimori_couplings(dist)
    if not math.isfinite(k["measurement"]):
        raise ValidationError("perfect syndrome measurement: use the two-dimensional model")
    if not k["data"] > 0:
        raise ValidationError("no data errors: the Nishimori temperature is zero")
    ratio = k["measurement"] / k["data"]
    lats = []
    for i in range(n_samples):
        s = sample_disorder(dist, r_bar, (d, d, T or d), seed=seed * 1_000_003 + i, scenario=scenario)
        lats.append(GaugeLattice3D.from_sample(s, ratio=ratio))
    return lats, 1.0 / k["data"]


@dataclass
class GaugeThresholdResult:
    p_th: float
    p_err: float | None
    grid: np.ndarray
    sizes: list
    xi_over_L: dict
    xi_err: dict
    crossings: list
    status: str = "crossing"


def gauge_threshold_scan(dist_family, grid, sizes=(6, 8), seed: int = 0, *, n_samples: int = 100,
                         n_eq: int = 1000, n_meas: int = 2000, every: int = 2,
                         scenario: str = "no-refresh", n_boot: int = 200) -> GaugeThresholdResult:
    """Threshold from the crossing of Polyakov-line xi/L on the Nishimori sheet.

    dist_family(x) returns a distribution or (distribution, r_bar).  xi/L of
    the largest size minus the smallest must go from positive to negative
    across the grid, otherwise BracketError.
    """
    grid = np.asarray(sorted(grid), dtype=float)
    sizes = sorted(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValidationError("need at least two sizes")
    rungs = {L: [] for L in sizes}
    for i, x in enumerate(grid):
        out = dist_family(x)
        dist, r_bar = out if isinstance(out, tuple) else (out, 0.0)
        for j, L in enumerate(sizes):
            lats, tn = nishimori_lattices(dist, r_bar, L, n_samples, seed + 7919 * i + 101 * j, scenario=scenario)
            sched = AnnealSchedule((tn,), n_eq, n_meas, every)
            rungs[L].append(anneal_run(lats, sched, seed=seed + 31 * i + j, loops=LoopSpec(sizes=((1, 1),)))[0])
    xi, xe = {}, {}
    for L in sizes:
        v = [polyakov_xi_over_L(r) for r in rungs[L]]
        xi[L] = np.array([float(a) for a, _ in v])
        xe[L] = np.array([float(e) for _, e in v])
    lo, hi = sizes[0], sizes[-1]
    cr = linear_crossings(grid, xi[hi], xi[lo])
    if not cr:
        raise BracketError(f"grid [{grid[0]}, {grid[-1]}] does not bracket the gauge-model threshold")
    p_th = float(np.mean(cr))
    rng = make_generator(seed, 13)
    boots = []
    for _ in range(n_boot):
        a = [_xi(r.poly[rng.integers(0, len(r.poly), len(r.poly))].mean(0)) for r in rungs[hi]]
        b = [_xi(r.poly[rng.integers(0, len(r.poly), len(r.poly))].mean(0)) for r in rungs[lo]]
        c = linear_crossings(grid, a, b)
        if c:
            boots.append(np.mean(c))
    p_err = float(np.std(boots, ddof=1)) if len(boots) > 1 else None
    return GaugeThresholdResult(p_th, p_err, grid, sizes, xi, xe, cr)
