"""Channel -> distribution -> Nishimori sheet -> Monte Carlo, over (gamma, r_bar).

Every grid point is classified by comparing a finite-size correlation
ratio at the Nishimori temperature on two lattice sizes: if xi/L grows with
L the point is ordered (error correction works), otherwise it is not.
Points without Pauli errors reduce to percolation.  Points whose syndrome
flip rate is below ``q_floor`` use the 2D bond model instead of the gauge
model.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .channel import DecayParameters, PlaquetteGeometry, jaksch_waveform, load_waveform, time_optimal_waveform
from .channel.plaquette import plaquette_channel, plaquette_chi
from .disorder import GAMMA_BBR, ErasureParameters, effective_erasure, erasure_rate, sample_disorder
from .distribution import PlaquetteErrorDistribution, nishimori_couplings, nishimori_temperature
from .exceptions import ConfigError, RydqecError, ValidationError
from .pauli import scalar_commutator  # noqa: F401  (part of the pipeline API)
from .rng import derive_seed

PROTOCOLS = ("jaksch", "time-optimal", "time-optimal-file")
CLASSES = ("QEC", "QEC-with-refresh", "no-QEC", "undetermined")

PRESETS = {
    "desk": dict(rbim_sizes=(8, 16), rbim_samples=100, rbim_eq=2000, rbim_meas=2000,
                 gauge_sizes=(6, 8), gauge_samples=100, gauge_eq=1000, gauge_meas=2000,
                 perc_sizes=(32, 64), perc_trials=2000),
    "paper": dict(rbim_sizes=(16, 32), rbim_samples=2500, rbim_eq=20000, rbim_meas=20000,
                  gauge_sizes=(8, 12), gauge_samples=1000, gauge_eq=5000, gauge_meas=10000,
                  perc_sizes=(64, 128), perc_trials=10000),
    # only for tests and smoke runs
    "tiny": dict(rbim_sizes=(4, 6), rbim_samples=4, rbim_eq=50, rbim_meas=50,
                 gauge_sizes=(3, 4), gauge_samples=3, gauge_eq=20, gauge_meas=20,
                 perc_sizes=(8, 16), perc_trials=50),
}


def _scenario(name: str) -> str:
    if name in ("refresh", "stabilizer-refresh"):
        return "refresh"
    if name == "no-refresh":
        return name
    raise ConfigError(f"unknown scenario '{name}'", "scenario")


def protocol_waveform(protocol: str, path=None, steps: int = 20):
    if protocol == "jaksch":
        return jaksch_waveform(steps=steps)
    if protocol == "time-optimal":
        return time_optimal_waveform(steps=steps) if path is None else load_waveform(path, steps)
    if protocol == "time-optimal-file":
        if path is None:
            raise ConfigError("time-optimal-file protocol needs a waveform file", "waveform")
        return load_waveform(path, steps)
    raise ConfigError(f"unknown protocol '{protocol}'", "protocol")


@functools.lru_cache(maxsize=256)
def _point_distribution(protocol, gamma, omega, path, steps):
    wf = protocol_waveform(protocol, path, steps)
    return plaquette_channel(wf, DecayParameters(gamma, omega))


def point_distribution(protocol: str, gamma: float, omega: float = 0.0, path=None,
                       steps: int = 20) -> PlaquetteErrorDistribution:
    """Plaquette error distribution of a protocol at decay rate gamma (units of Omega)."""
    return _point_distribution(protocol, float(gamma), float(omega), None if path is None else str(path), steps)


def nishimori_sheet(dist: PlaquetteErrorDistribution, r_grid) -> dict:
    """Nishimori temperature at each erasure rate (the erasure factor cancels)."""
    return {float(r): (nishimori_temperature(dist, r) if dist.bond_rate() > 0 else 0.0) for r in r_grid}


def rydberg_time_per_cycle(protocol: str, atoms: str = "both", path=None, steps: int = 20) -> float:
    """Integrated Rydberg population of one noiseless plaquette circuit, in units of 1/Omega.

    atoms="both" sums the ancilla and the four data atoms, "data" only the data atoms.
    """
    wf = protocol_waveform(protocol, path, steps)
    _, diag = plaquette_chi(wf, DecayParameters(0.0, 0.0))
    t = np.asarray(diag["rydberg_time_atoms"])
    if atoms == "both":
        return float(t.sum())
    if atoms == "data":
        return float(t[1:].sum())
    raise ValidationError("atoms must be 'both' or 'data'")


def f_int_from_protocol(protocol: str, omega_phys: float, tau_meas: float, atoms: str = "both",
                        path=None) -> float:
    """Fraction of one cycle spent in the Rydberg state; omega_phys in rad/s."""
    if omega_phys <= 0 or tau_meas <= 0:
        raise ValidationError("omega_phys and tau_meas must be positive")
    return rydberg_time_per_cycle(protocol, atoms, path) / omega_phys / tau_meas


# point classification

@dataclass
class PointResult:
    gamma: float
    r_bar: float
    scenario: str
    model: str                 # "gauge", "bond", "percolation", "trivial"
    temperature: float         # Nishimori temperature used (0 for percolation)
    ordered: bool | None
    score: float               # xi/L(large) - xi/L(small), or r_th - r_bar for percolation
    sigma: float
    p_eff: float
    p_eff_spread: float
    note: str = ""


def _xi_gauge(dist, r_bar, L, n, seed, scenario, n_eq, n_meas):
    from .rpgm import AnnealSchedule, LoopSpec, anneal_run, nishimori_lattices, polyakov_xi_over_L
    lats, tn = nishimori_lattices(dist, r_bar, L, n, seed, scenario=scenario)
    rung = anneal_run(lats, AnnealSchedule((tn,), n_eq, n_meas, 2), seed=seed, loops=LoopSpec(sizes=((1, 1),)))[0]
    x, e = polyakov_xi_over_L(rung)
    return float(x), float(e), tn


def _xi_bond(dist, r_bar, L, n, seed, scenario, n_eq, n_meas):
    from .rbim import simulate_ensemble
    tn = nishimori_temperature(dist)
    samples = [sample_disorder(dist, r_bar, (L, L), seed=seed * 1_000_003 + k, scenario=scenario) for k in range(n)]
    run = simulate_ensemble(samples, [tn], n_eq, n_meas, seed=seed)
    x, e = run.xi_over_L_jackknife()
    return float(x[0]), float(e[0]), tn


@functools.lru_cache(maxsize=8)
def percolation_threshold(scenario: str, sizes=(32, 64), trials: int = 2000, seed: int = 0):
    from .percolation import survival_curve
    mode = "bond" if scenario == "refresh" else "site-bond"
    grid = np.arange(0.40, 0.601, 0.02) if mode == "bond" else np.arange(0.17, 0.331, 0.02)
    c = survival_curve(list(sizes), grid, trials, mode, seed)
    if c.threshold is None:
        raise RydqecError(f"{mode} percolation curves do not cross on {grid[0]:.2f}..{grid[-1]:.2f}")
    return c.threshold, c.threshold_err or 0.0


def classify_point(dist: PlaquetteErrorDistribution, r_bar: float, scenario: str, preset: dict, seed: int,
                   q_floor: float = 1e-4, gamma: float = math.nan) -> PointResult:
    scenario = _scenario(scenario)
    if dist.bond_rate() <= 0:
        if r_bar <= 0:
            return PointResult(gamma, r_bar, scenario, "trivial", 0.0, True, math.inf, 0.0, 0.0, 0.0)
        r_th, r_err = percolation_threshold(scenario, tuple(preset["perc_sizes"]), preset["perc_trials"])
        return PointResult(gamma, r_bar, scenario, "percolation", 0.0, r_bar < r_th, r_th - r_bar, r_err, 0.0, 0.0)
    if r_bar > 0:
        # past the wrapping threshold no logical operator survives, whatever the Pauli rate
        r_th, r_err = percolation_threshold(scenario, tuple(preset["perc_sizes"]), preset["perc_trials"])
        if r_bar >= r_th:
            return PointResult(gamma, r_bar, scenario, "percolation", 0.0, False, r_th - r_bar, r_err,
                               math.nan, 0.0)
    if dist.q < q_floor:
        sizes, fn = preset["rbim_sizes"], _xi_bond
        n, n_eq, n_meas, model = preset["rbim_samples"], preset["rbim_eq"], preset["rbim_meas"], "bond"
    else:
        sizes, fn = preset["gauge_sizes"], _xi_gauge
        n, n_eq, n_meas, model = preset["gauge_samples"], preset["gauge_eq"], preset["gauge_meas"], "gauge"
    lo, hi = min(sizes), max(sizes)
    x_lo, e_lo, tn = fn(dist, r_bar, lo, n, derive_seed(seed, 1), scenario, n_eq, n_meas)
    x_hi, e_hi, _ = fn(dist, r_bar, hi, n, derive_seed(seed, 2), scenario, n_eq, n_meas)
    dims = (hi, hi) if model == "bond" else (hi, hi, hi)
    effs = np.array([sample_disorder(dist, r_bar, dims, seed=derive_seed(seed, 3, k), scenario=scenario).effective_p
                     for k in range(8)])
    score = x_hi - x_lo
    sigma = math.hypot(e_lo if math.isfinite(e_lo) else 0.0, e_hi if math.isfinite(e_hi) else 0.0)
    if not math.isfinite(score):
        ordered = True if math.isinf(x_hi) and not math.isinf(x_lo) else None
    else:
        ordered = bool(score > 0)
    return PointResult(gamma, r_bar, scenario, model, tn, ordered, score, sigma,
                       float(effs.mean()), float(effs.std()))


# sweeps

@dataclass
class SweepConfig:
    protocol: str = "jaksch"
    gammas: tuple = (1e-3,)
    r_bars: tuple = (0.0,)
    preset: str = "desk"
    scenario: str = "no-refresh"     # the scenario listed first; the other is tried if this one fails
    seed: int = 0
    waveform: str | None = None
    steps: int = 20
    q_floor: float = 1e-4
    leak: str = "decoupled"          # "coupled" adds Rydberg leakage at gamma_bbr / omega_phys
    omega_phys: float = 2 * math.pi * 10e6

    def __post_init__(self):
        self.gammas = tuple(float(g) for g in self.gammas)
        self.r_bars = tuple(float(r) for r in self.r_bars)
        if not self.gammas or not self.r_bars:
            raise ConfigError("grids must be nonempty", "gammas" if not self.gammas else "r_bars")
        if list(self.gammas) != sorted(self.gammas) or list(self.r_bars) != sorted(self.r_bars):
            raise ConfigError("grids must be sorted ascending", "gammas")
        if min(self.gammas) < 0:
            raise ConfigError("gamma must be non-negative", "gammas")
        if min(self.r_bars) < 0 or max(self.r_bars) > 1:
            raise ConfigError("r_bar must lie in [0, 1]", "r_bars")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {tuple(PRESETS)}", "preset")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}", "protocol")
        if self.protocol == "time-optimal-file" and not self.waveform:
            raise ConfigError("time-optimal-file protocol needs a waveform file", "waveform")
        if self.leak not in ("coupled", "decoupled"):
            raise ConfigError("leak must be 'coupled' or 'decoupled'", "leak")
        _scenario(self.scenario)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def omega_leak(self) -> float:
        return GAMMA_BBR / self.omega_phys if self.leak == "coupled" else 0.0


@dataclass
class PhaseBoundary:
    points: list                      # rows: (gamma, r_bar, class, T, score, sigma)
    boundary: list                    # polyline [(gamma, r_bar)]
    anchors: dict                     # scenario -> (r_th, err)
    gamma_th: float | None
    protocol: str = ""
    failures: list = field(default_factory=list)

    def r_boundary(self, gamma: float) -> float:
        """Erasure rate on the fitted boundary at gamma (0 beyond the Pauli threshold)."""
        if not self.boundary:
            raise ValidationError("empty boundary")
        g = np.array([p[0] for p in self.boundary])
        r = np.array([p[1] for p in self.boundary])
        if gamma < g[0] or gamma > g[-1] and r[-1] > 0:
            raise ValidationError(f"gamma={gamma} outside the diagram domain [{g[0]}, {g[-1]}]")
        if gamma >= g[-1]:
            return 0.0
        if len(g) == 1:
            return float(r[0])
        return float(max(PchipInterpolator(g, r)(gamma), 0.0))

    def classification(self, gamma: float, r_bar: float) -> str:
        for row in self.points:
            if row[0] == gamma and row[1] == r_bar:
                return row[2]
        raise KeyError((gamma, r_bar))


def _isotonic_decreasing(y, w):
    """Pool-adjacent-violators fit of a nonincreasing sequence."""
    blocks = [[float(v), float(wt), 1] for v, wt in zip(y, w)]
    i = 0
    while i < len(blocks) - 1:
        if blocks[i][0] < blocks[i + 1][0]:
            a, b = blocks[i], blocks.pop(i + 1)
            wt = a[1] + b[1]
            a[0] = (a[0] * a[1] + b[0] * b[1]) / wt
            a[1] = wt
            a[2] += b[2]
            i = max(i - 1, 0)
        else:
            i += 1
    out = []
    for v, _, n in blocks:
        out += [v] * n
    return np.array(out)


def fit_boundary(gammas, r_bars, ordered: np.ndarray, anchor: float, gamma_th: float | None = None):
    """Monotone polyline through the per-column order/disorder edges.

    ordered[i, j] for gammas[i], r_bars[j]; the column edge is the midpoint
    between the last ordered and first disordered r_bar.  gamma = 0 is
    pinned to the percolation anchor and, if known, (gamma_th, 0) closes
    the curve.
    """
    gammas = np.asarray(gammas, dtype=float)
    r_bars = np.asarray(r_bars, dtype=float)
    edge = []
    for i in range(len(gammas)):
        col = ordered[i]
        if not col[0]:
            edge.append(0.0)
            continue
        j = int(np.argmin(col)) if not col.all() else len(col)
        if j == len(col):
            edge.append(float(r_bars[-1]))
        else:
            edge.append(0.5 * (r_bars[j - 1] + r_bars[j]))
    g = list(gammas)
    e = list(edge)
    if g[0] > 0:
        g.insert(0, 0.0)
        e.insert(0, anchor)
    else:
        e[0] = anchor
    if gamma_th is not None and gamma_th > g[-1]:
        g.append(gamma_th)
        e.append(0.0)
    e = np.clip(_isotonic_decreasing(e, np.ones(len(e))), 0.0, 1.0)
    return [(float(a), float(b)) for a, b in zip(g, e)]


def run_sweep(config: SweepConfig, checkpoint: str | Path | None = None, resume: bool = False,
              gamma_th: float | None = None, log=None) -> PhaseBoundary:
    """Classify every (gamma, r_bar) grid point and fit the QEC boundary.

    Each point is first tried without stabiliser refresh; if it is not
    ordered there, it is retried with refresh.  Point seeds derive from the
    master seed and the point index, so a resumed sweep reproduces an
    uninterrupted one.  Failed points are recorded as undetermined.
    """
    from .io import read_checkpoint, write_checkpoint
    preset = PRESETS[config.preset]
    done = {}
    if resume and checkpoint and Path(checkpoint).exists():
        _, meta = read_checkpoint(checkpoint, "sweep")
        if meta.get("config") != json.loads(json.dumps(config.to_dict())):
            from .exceptions import CheckpointError
            raise CheckpointError("checkpoint was written for a different sweep configuration")
        done = {tuple(k): v for k, v in meta["points"]}
    first = _scenario(config.scenario)
    order = [first] + [s for s in ("no-refresh", "refresh") if s != first]
    failures = []
    for i, g in enumerate(config.gammas):
        try:
            dist = point_distribution(config.protocol, g, config.omega_leak, config.waveform, config.steps)
        except RydqecError as e:
            dist = None
            err = str(e)
        for j, r in enumerate(config.r_bars):
            if (i, j) in done:
                continue
            rec = {"gamma": g, "r_bar": r, "class": "undetermined", "T": math.nan, "score": math.nan,
                   "sigma": math.nan, "model": "", "p_eff": math.nan, "p_eff_spread": math.nan, "note": ""}
            if dist is None:
                rec["note"] = err
            else:
                try:
                    for k, sc in enumerate(order):
                        res = classify_point(dist, r, sc, preset, derive_seed(config.seed, i, j, k),
                                             config.q_floor, g)
                        rec.update(T=res.temperature, score=res.score, sigma=res.sigma, model=res.model,
                                   p_eff=res.p_eff, p_eff_spread=res.p_eff_spread)
                        if res.ordered is None:
                            break
                        if res.ordered:
                            rec["class"] = "QEC" if sc == "no-refresh" else "QEC-with-refresh"
                            break
                        if sc == order[-1]:
                            rec["class"] = "no-QEC"
                except RydqecError as e:
                    rec["note"] = f"{type(e).__name__}: {e}"
            if rec["class"] == "undetermined":
                failures.append((g, r, rec["note"]))
            done[(i, j)] = rec
            if log:
                log(f"gamma={g:g} r_bar={r:g} -> {rec['class']}")
            if checkpoint:
                write_checkpoint(checkpoint, "sweep", None,
                                 {"config": config.to_dict(),
                                  "points": [[list(k), v] for k, v in sorted(done.items())]})
    anchors = {sc: percolation_threshold(sc, tuple(preset["perc_sizes"]), preset["perc_trials"])
               for sc in ("no-refresh", "refresh")}
    rows = [done[(i, j)] for i in range(len(config.gammas)) for j in range(len(config.r_bars))]
    ordered = np.array([[done[(i, j)]["class"] in ("QEC",) for j in range(len(config.r_bars))]
                        for i in range(len(config.gammas))])
    boundary = fit_boundary(config.gammas, config.r_bars, ordered, anchors[first][0], gamma_th)
    points = [(r["gamma"], r["r_bar"], r["class"], r["T"], r["score"], r["sigma"]) for r in rows]
    return PhaseBoundary(points, boundary, anchors, gamma_th, config.protocol, failures)


def gamma_threshold(protocol: str, gammas, seed: int = 0, preset: str = "desk", path=None, steps: int = 20,
                    omega: float = 0.0, n_boot: int = 200):
    """Pauli threshold in gamma at r_bar = 0 from the gauge-model crossing."""
    from .rpgm import gauge_threshold_scan
    p = PRESETS[preset]

    def family(g):
        return point_distribution(protocol, g, omega, path, steps)

    return gauge_threshold_scan(family, gammas, p["gauge_sizes"], seed, n_samples=p["gauge_samples"],
                                n_eq=p["gauge_eq"], n_meas=p["gauge_meas"], n_boot=n_boot)


@dataclass
class LifetimeEstimate:
    cycles: float                 # c*
    mechanism: str                # "BBR", "trap" or "Pauli"
    r_threshold: float
    omega: float
    inputs: dict


def lifetime_estimate(params: ErasureParameters, gamma: float, boundary: PhaseBoundary | float) -> LifetimeEstimate:
    """Largest number of cycles before the final-slice erasure leaves the QEC region.

    boundary is a PhaseBoundary or directly the boundary erasure rate at gamma.
    """
    r_th = boundary.r_boundary(gamma) if isinstance(boundary, PhaseBoundary) else float(boundary)
    w = erasure_rate(params)
    inputs = {"gamma_bbr": params.gamma_bbr, "t_trap": params.t_trap, "tau_meas": params.tau_meas,
              "f_int": params.f_int, "gamma": gamma}
    if r_th <= 0:
        return LifetimeEstimate(0.0, "Pauli", r_th, w, inputs)
    bbr = params.f_int * params.gamma_bbr
    trap = 0.0 if math.isinf(params.t_trap) else 1.0 / params.t_trap
    mech = "BBR" if bbr >= trap else "trap"
    if w <= 0:
        return LifetimeEstimate(math.inf, mech, r_th, w, inputs)
    c = -math.log1p(-r_th) / (w * params.tau_meas)
    assert effective_erasure(w, params.tau_meas, c) <= r_th + 1e-12
    return LifetimeEstimate(c, mech, r_th, w, inputs)
