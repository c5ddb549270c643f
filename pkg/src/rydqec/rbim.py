"""Two-dimensional random-bond Ising model on the torus.

Energy  E = -sum_<ij> J_ij s_i s_j  with J_ij = J * eta_ij, eta in {-1, 0, +1}
(0 for an erased bond).  Erased sites are frozen at +1 and all their bonds
are zero, so they never contribute.  Disorder samples and temperatures are
batched into one replica axis so a whole sweep over (sample, T) runs in a
single compiled loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .disorder import DisorderSample
from .distribution import PlaquetteErrorDistribution, nishimori_temperature
from .exceptions import BracketError, NoCrossingError, ValidationError
from .rng import make_generator, next_uniform, stream_states
from .stats import jackknife, linear_crossings

T_ONSAGER = 2.0 / math.log(1.0 + math.sqrt(2.0))

# accumulator columns
E, E2, M2, M4, CHI0, CHIK, MABS, LINK = range(8)
N_ACC = 8


@dataclass
class SpinLattice2D:
    spins: np.ndarray            # (L, L) int8
    jx: np.ndarray               # (L, L) coupling of bond (x, y)-(x+1, y)
    jy: np.ndarray               # (L, L) coupling of bond (x, y)-(x, y+1)
    active: np.ndarray           # (L, L) bool

    @property
    def L(self) -> int:
        return self.spins.shape[0]

    @classmethod
    def from_sample(cls, sample: DisorderSample | None, L: int | None = None, J: float = 1.0,
                    start: str = "cold", rng=None) -> "SpinLattice2D":
        if sample is None:
            jx = np.full((L, L), J)
            jy = np.full((L, L), J)
            active = np.ones((L, L), dtype=bool)
        else:
            if sample.is_3d:
                raise ValidationError("need a 2D disorder sample")
            L = sample.shape[0]
            jx = J * sample.bond_signs[0].astype(float)
            jy = J * sample.bond_signs[1].astype(float)
            active = ~sample.erased_sites
        if start == "cold":
            spins = np.ones((L, L), dtype=np.int8)
        else:
            rng = rng or np.random.default_rng(0)
            spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=(L, L))
        spins[~active] = 1
        return cls(spins, jx.copy(), jy.copy(), active.copy())

    def energy(self) -> float:
        s = self.spins.astype(float)
        return float(-(self.jx * s * np.roll(s, -1, 0)).sum() - (self.jy * s * np.roll(s, -1, 1)).sum())

    def gauge(self, sigma: np.ndarray) -> "SpinLattice2D":
        """Apply s_i -> sigma_i s_i, J_ij -> sigma_i sigma_j J_ij."""
        sg = sigma.astype(np.int8)
        return SpinLattice2D(self.spins * sg, self.jx * sg * np.roll(sg, -1, 0),
                             self.jy * sg * np.roll(sg, -1, 1), self.active.copy())


@dataclass
class ThermalTrace:
    temperature: float
    energy: np.ndarray
    magnetization: np.ndarray
    fourier0: np.ndarray          # |sum_j s_j|^2 / L^2
    fourierk: np.ndarray          # |sum_j s_j e^{i k.r}|^2 / L^2, k = 2 pi / L along x and y, averaged
    equilibration_steps: int
    sample_steps: int
    wilson: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.energy) != self.sample_steps:
            raise ValidationError("sample count must equal sample_steps")


@njit(cache=True)
def _sweep_batch(spins, jx, jy, active, beta, state, n_sweeps, random_site):
    R, L, _ = spins.shape
    for r in range(R):
        b = beta[r]
        for _ in range(n_sweeps):
            for idx in range(L * L):
                if random_site:
                    k = int(next_uniform(state, r) * L * L)
                    if k >= L * L:
                        k = L * L - 1
                    x = k // L
                    y = k % L
                else:
                    x = idx // L
                    y = idx % L
                if not active[r, x, y]:
                    continue
                xp = x + 1 if x + 1 < L else 0
                xm = x - 1 if x > 0 else L - 1
                yp = y + 1 if y + 1 < L else 0
                ym = y - 1 if y > 0 else L - 1
                h = (jx[r, x, y] * spins[r, xp, y] + jx[r, xm, y] * spins[r, xm, y]
                     + jy[r, x, y] * spins[r, x, yp] + jy[r, x, ym] * spins[r, x, ym])
                de = 2.0 * spins[r, x, y] * h
                if de <= 0.0 or next_uniform(state, r) < math.exp(-b * de):
                    spins[r, x, y] = -spins[r, x, y]


@njit(cache=True)
def _measure_batch(spins, jx, jy, active, cosx, sinx, acc):
    R, L, _ = spins.shape
    n = L * L
    for r in range(R):
        e = 0.0
        link = 0.0
        nb = 0
        m0 = 0.0
        nact = 0
        cxr = 0.0
        cxi = 0.0
        cyr = 0.0
        cyi = 0.0
        for x in range(L):
            xp = x + 1 if x + 1 < L else 0
            for y in range(L):
                yp = y + 1 if y + 1 < L else 0
                s = spins[r, x, y]
                a = jx[r, x, y] * s * spins[r, xp, y]
                c = jy[r, x, y] * s * spins[r, x, yp]
                e -= a + c
                if jx[r, x, y] != 0.0:
                    link += a / abs(jx[r, x, y])
                    nb += 1
                if jy[r, x, y] != 0.0:
                    link += c / abs(jy[r, x, y])
                    nb += 1
                if active[r, x, y]:
                    m0 += s
                    nact += 1
                    cxr += s * cosx[x]
                    cxi += s * sinx[x]
                    cyr += s * cosx[y]
                    cyi += s * sinx[y]
        m = m0 / nact if nact > 0 else 0.0
        acc[r, 0] += e
        acc[r, 1] += e * e
        acc[r, 2] += m * m
        acc[r, 3] += m * m * m * m
        acc[r, 4] += m0 * m0 / n
        acc[r, 5] += 0.5 * (cxr * cxr + cxi * cxi + cyr * cyr + cyi * cyi) / n
        acc[r, 6] += abs(m)
        acc[r, 7] += link / nb if nb > 0 else 0.0


def _fourier_tables(L):
    x = np.arange(L)
    return np.cos(2 * np.pi * x / L), np.sin(2 * np.pi * x / L)


def metropolis_sweep(lattice: SpinLattice2D, T: float, state: np.ndarray, n: int = 1,
                     random_site: bool = False) -> SpinLattice2D:
    """One attempted flip per site (in place); state is a length-1 uint64 array."""
    if not T > 0:
        raise ValidationError("temperature must be positive")
    s = lattice.spins[None]
    _sweep_batch(s, lattice.jx[None], lattice.jy[None], lattice.active[None],
                 np.array([1.0 / T]), state, n, random_site)
    lattice.spins[:] = s[0]
    return lattice


def sample_trace(lattice: SpinLattice2D, T: float, n_eq: int, n_meas: int, seed: int = 0,
                 every: int = 1) -> ThermalTrace:
    """Single-lattice run keeping the full time series."""
    state = stream_states(seed, 1)
    metropolis_sweep(lattice, T, state, n_eq)
    cosx, sinx = _fourier_tables(lattice.L)
    rows = np.zeros((n_meas, N_ACC))
    acc = np.zeros((1, N_ACC))
    for i in range(n_meas):
        metropolis_sweep(lattice, T, state, every)
        acc[:] = 0
        _measure_batch(lattice.spins[None], lattice.jx[None], lattice.jy[None], lattice.active[None],
                       cosx, sinx, acc)
        rows[i] = acc[0]
    n_act = lattice.active.sum()
    mags = np.sign(rows[:, MABS]) * np.sqrt(rows[:, M2])
    return ThermalTrace(T, rows[:, E], mags, rows[:, CHI0], rows[:, CHIK], n_eq, n_meas)


def susceptibility(trace: ThermalTrace, k: str = "zero", n_bins: int = 20):
    """chi(k) = <|sum_j s_j e^{ik.r_j}|^2> / L^2 with a binned jackknife error."""
    series = trace.fourier0 if k == "zero" else trace.fourierk
    if len(series) == 0:
        raise ValidationError("empty trace")
    from .stats import binned_jackknife
    return binned_jackknife(series, min(n_bins, len(series)))


def correlation_length(chi0: float, chik: float, L: int) -> float:
    """Second-moment length xi = L / (2 pi) sqrt(chi0 / chik - 1)."""
    if chik <= 0:
        return math.inf
    return L / (2 * math.pi) * math.sqrt(max(chi0 / chik - 1.0, 0.0))


def _xi_over_L(chi0, chik):
    ratio = np.asarray(chi0) / np.asarray(chik)
    return np.sqrt(np.clip(ratio - 1.0, 0.0, None)) / (2 * np.pi)


@dataclass
class EnsembleRun:
    """Per-replica thermal averages for a batch of (sample, temperature) pairs."""

    L: int
    temperatures: np.ndarray
    acc: np.ndarray            # (n_samples, n_T, N_ACC), thermal means
    n_eq: int
    n_meas: int

    def xi_over_L(self, idx=None):
        a = self.acc if idx is None else self.acc[idx]
        return _xi_over_L(a[..., CHI0].mean(0), a[..., CHIK].mean(0))

    def xi_over_L_jackknife(self):
        def f(m):
            return _xi_over_L(m[:, 0], m[:, 1])
        vals = self.acc[..., [CHI0, CHIK]]
        return jackknife(vals, f)


@dataclass
class EnsembleState:
    """Everything needed to continue an interrupted ensemble run."""

    spins: np.ndarray
    rng_state: np.ndarray
    acc: np.ndarray
    sweeps_done: int
    meas_done: int


def simulate_ensemble(samples: list, temperatures, n_eq: int, n_meas: int, seed: int, *,
                      L: int | None = None, every: int = 1, J: float = 1.0, start: str = "cold",
                      resume: EnsembleState | None = None, checkpoint=None, chunk: int = 1000,
                      random_site: bool = False) -> EnsembleRun:
    """Thermal averages for every (sample, T) pair.

    samples: list of 2D DisorderSample, or an int for that many clean replicas
    of size L.  checkpoint, if given, is called with an EnsembleState after
    every chunk of sweeps.
    """
    temps = np.asarray(temperatures, dtype=float)
    if np.any(temps <= 0):
        raise ValidationError("temperatures must be positive")
    if isinstance(samples, int):
        lats = [SpinLattice2D.from_sample(None, L, J) for _ in range(samples)]
    else:
        lats = [SpinLattice2D.from_sample(s, J=J) for s in samples]
    if not lats:
        raise ValidationError("empty ensemble")
    L = lats[0].L
    S, nT = len(lats), len(temps)
    R = S * nT
    jx = np.repeat(np.stack([l.jx for l in lats]), nT, axis=0)
    jy = np.repeat(np.stack([l.jy for l in lats]), nT, axis=0)
    active = np.repeat(np.stack([l.active for l in lats]), nT, axis=0)
    beta = np.tile(1.0 / temps, S)
    if resume is None:
        spins = np.repeat(np.stack([l.spins for l in lats]), nT, axis=0)
        if start == "hot":
            g = make_generator(seed, 1)
            spins = np.where(g.random(spins.shape) < 0.5, -1, 1).astype(np.int8)
            spins[~active] = 1
        state = stream_states(seed, R)
        acc = np.zeros((R, N_ACC))
        done, mdone = 0, 0
    else:
        spins, state, acc = resume.spins.copy(), resume.rng_state.copy(), resume.acc.copy()
        done, mdone = resume.sweeps_done, resume.meas_done
    cosx, sinx = _fourier_tables(L)
    while done < n_eq:
        n = min(chunk, n_eq - done)
        _sweep_batch(spins, jx, jy, active, beta, state, n, random_site)
        done += n
        if checkpoint:
            checkpoint(EnsembleState(spins, state, acc, done, mdone))
    while mdone < n_meas:
        n = min(max(chunk // every, 1), n_meas - mdone)
        for _ in range(n):
            _sweep_batch(spins, jx, jy, active, beta, state, every, random_site)
            _measure_batch(spins, jx, jy, active, cosx, sinx, acc)
        mdone += n
        done += n * every
        if checkpoint:
            checkpoint(EnsembleState(spins, state, acc, done, mdone))
    means = (acc / max(n_meas, 1)).reshape(S, nT, N_ACC)
    return EnsembleRun(L, temps, means, n_eq, n_meas)


@dataclass
class FssCurve:
    sizes: list
    temperatures: np.ndarray
    xi_over_L: dict                # L -> array over T
    xi_err: dict
    crossings: dict                # (L1, L2) -> T or None
    tc: float | None
    tc_err: float | None
    tc_ci: tuple | None
    nu: float | None = None
    runs: dict = field(default_factory=dict, repr=False)


def _pair_crossing(T, a, b):
    c = linear_crossings(T, b, a)  # larger lattice above below T_c
    return float(np.mean(c)) if c else None


def _slope_at(T, y, t0):
    i = int(np.clip(np.searchsorted(T, t0) - 1, 0, len(T) - 2))
    return (y[i + 1] - y[i]) / (T[i + 1] - T[i])


def crossing_analysis(runs: dict, n_boot: int = 200, seed: int = 0) -> FssCurve:
    sizes = sorted(runs)
    T = runs[sizes[0]].temperatures
    xi, err = {}, {}
    for L in sizes:
        xi[L], err[L] = runs[L].xi_over_L_jackknife()
    cross = {}
    for L1, L2 in zip(sizes[:-1], sizes[1:]):
        cross[(L1, L2)] = _pair_crossing(T, xi[L1], xi[L2])
    found = [c for c in cross.values() if c is not None]
    if not found:
        return FssCurve(sizes, T, xi, err, cross, None, None, None, runs=runs)
    tc = float(np.mean(found))
    rng = make_generator(seed, 7)
    boots = []
    for _ in range(n_boot):
        cs = []
        for L1, L2 in zip(sizes[:-1], sizes[1:]):
            a = runs[L1].xi_over_L(rng.integers(0, runs[L1].acc.shape[0], runs[L1].acc.shape[0]))
            b = runs[L2].xi_over_L(rng.integers(0, runs[L2].acc.shape[0], runs[L2].acc.shape[0]))
            c = _pair_crossing(T, a, b)
            if c is not None:
                cs.append(c)
        if cs:
            boots.append(np.mean(cs))
    boots = np.array(boots)
    tc_err = float(boots.std(ddof=1)) if len(boots) > 1 else None
    ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))) if len(boots) > 1 else None
    nu = None
    L1, L2 = sizes[0], sizes[-1]
    s1, s2 = _slope_at(T, xi[L1], tc), _slope_at(T, xi[L2], tc)
    if s1 < 0 and s2 < 0 and s2 != s1:
        nu = float(math.log(L2 / L1) / math.log(s2 / s1))
    return FssCurve(sizes, T, xi, err, cross, tc, tc_err, ci, nu, runs)


def find_tc(disorder_ensemble: dict, sizes, temperatures, *, n_eq: int = 25000, n_meas: int = 25000,
            seed: int = 0, every: int = 1, n_boot: int = 200, raise_on_none: bool = True) -> FssCurve:
    """Crossing temperature of xi/L curves.

    disorder_ensemble maps L to a list of DisorderSample (or an int count
    of clean replicas).
    """
    sizes = sorted(sizes)
    if len(sizes) < 2:
        raise ValidationError("need at least two sizes")
    if len(temperatures) < 5:
        raise ValidationError("need at least five temperatures")
    runs = {}
    for i, L in enumerate(sizes):
        runs[L] = simulate_ensemble(disorder_ensemble[L], temperatures, n_eq, n_meas, seed=seed + 1000 * i,
                                    L=L, every=every)
    curve = crossing_analysis(runs, n_boot, seed)
    if curve.tc is None and raise_on_none:
        raise NoCrossingError(f"xi/L curves for L={sizes} do not cross in T=[{min(temperatures)}, {max(temperatures)}]")
    return curve


@dataclass
class ThresholdResult:
    status: str                    # "crossing", "no-transition", "percolation"
    p_th: float | None
    p_err: float | None
    grid: np.ndarray
    nishimori_T: np.ndarray
    xi_over_L: dict = field(default_factory=dict)
    xi_err: dict = field(default_factory=dict)
    note: str = ""


def _family_point(family, x):
    out = family(x)
    if isinstance(out, tuple):
        return out
    return out, 0.0


def threshold_scan(dist_family, grid, sizes, seed: int = 0, *, n_samples: int = 200, n_eq: int = 4000,
                   n_meas: int = 4000, every: int = 1, scenario: str = "no-refresh", n_boot: int = 200,
                   percolation_trials: int = 2000) -> ThresholdResult:
    """Locate where xi/L at the Nishimori temperature stops growing with L.

    At every grid point the model is simulated on the Nishimori line; above
    threshold the larger lattice has the smaller xi/L.  The crossing of
    xi/L(L_max) - xi/L(L_min) through zero is the point where the Nishimori
    line meets the ferromagnetic phase boundary.  Families without Pauli
    errors have T_N = 0, where long-range order reduces to the existence of
    a wrapping cluster, and are handed to the percolation module.
    """
    from .disorder import sample_disorder

    grid = np.asarray(sorted(grid), dtype=float)
    sizes = sorted(sizes)
    points = [_family_point(dist_family, x) for x in grid]
    tn = np.array([nishimori_temperature(d) if d.bond_rate() > 0 else 0.0 for d, _ in points])
    if np.all(tn == 0):
        rbars = np.array([r for _, r in points])
        if np.all(rbars == 0):
            return ThresholdResult("no-transition", None, None, grid, tn,
                                   note="family is error free at every grid point: ordered everywhere")
        from .percolation import survival_curve
        mode = "bond" if scenario == "refresh" else "site-bond"
        res = survival_curve(sizes, rbars, percolation_trials, mode, seed)
        if res.threshold is None:
            raise BracketError("erasure grid does not bracket the percolation threshold")
        return ThresholdResult("percolation", res.threshold, res.threshold_err, grid, tn,
                               note=f"T_N = 0 for every member; {mode} percolation")
    runs = {L: [] for L in sizes}
    for i, ((dist, rbar), t) in enumerate(zip(points, tn)):
        for j, L in enumerate(sizes):
            samples = [sample_disorder(dist, rbar, (L, L), seed=int(seed * 7919 + 100003 * i + 1009 * j + k),
                                       scenario=scenario) for k in range(n_samples)]
            t_use = t if t > 0 else 1e-3
            runs[L].append(simulate_ensemble(samples, [t_use], n_eq, n_meas, seed=seed + 31 * i + j,
                                             every=every))
    xi = {L: np.array([r.xi_over_L()[0] for r in runs[L]]) for L in sizes}
    xe = {L: np.array([r.xi_over_L_jackknife()[1][0] for r in runs[L]]) for L in sizes}
    lo, hi = sizes[0], sizes[-1]
    diff = xi[hi] - xi[lo]
    if not (diff[0] > 0 and diff[-1] < 0):
        raise BracketError(f"grid [{grid[0]}, {grid[-1]}] does not bracket the threshold "
                           f"(xi/L difference {diff[0]:.3g} .. {diff[-1]:.3g})")
    c = linear_crossings(grid, xi[hi], xi[lo])
    p_th = float(np.mean(c))
    rng = make_generator(seed, 11)
    boots = []
    for _ in range(n_boot):
        a = np.array([r.xi_over_L(rng.integers(0, n_samples, n_samples))[0] for r in runs[hi]])
        b = np.array([r.xi_over_L(rng.integers(0, n_samples, n_samples))[0] for r in runs[lo]])
        cc = linear_crossings(grid, a, b)
        if cc:
            boots.append(np.mean(cc))
    p_err = float(np.std(boots, ddof=1)) if len(boots) > 1 else None
    return ThresholdResult("crossing", p_th, p_err, grid, tn, xi, xe)
