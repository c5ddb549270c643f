"""Piecewise-constant laser controls for one two-atom entangling pulse.

Time is measured in units of 1/Omega_max and angular frequencies in units
of Omega_max.  Qubit 0 of every pulse is the plaquette ancilla and qubit 1
the data atom it is paired with.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..exceptions import WaveformError

ANCILLA, DATA = 0, 1
COLUMNS = ("duration", "omega_a", "phase_a", "detuning_a", "omega_d", "phase_d", "detuning_d")


@dataclass(frozen=True)
class Slice:
    duration: float
    rabi: tuple[float, float]
    phase: tuple[float, float] = (0.0, 0.0)
    detuning: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ControlWaveform:
    slices: tuple[Slice, ...]
    steps: tuple[int, ...]
    name: str = "custom"
    omega_max: float = 1.0
    delta_max: float = math.inf
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.slices) == 0:
            raise WaveformError("waveform has no slices")
        if len(self.steps) != len(self.slices):
            raise WaveformError("need one Trotter step count per slice")
        for i, (sl, n) in enumerate(zip(self.slices, self.steps)):
            if not (sl.duration > 0 and math.isfinite(sl.duration)):
                raise WaveformError(f"duration must be positive, got {sl.duration}", i)
            if int(n) < 1:
                raise WaveformError(f"Trotter steps must be >= 1, got {n}", i)
            for q in (0, 1):
                om, de = sl.rabi[q], sl.detuning[q]
                if not 0.0 <= om <= self.omega_max * (1 + 1e-12):
                    raise WaveformError(f"Rabi amplitude {om} outside [0, {self.omega_max}] on qubit {q}", i)
                if abs(de) > self.delta_max * (1 + 1e-12):
                    raise WaveformError(f"detuning {de} outside +-{self.delta_max} on qubit {q}", i)

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.slices))

    @property
    def total_steps(self) -> int:
        return int(sum(self.steps))

    def with_steps(self, n_total: int) -> "ControlWaveform":
        """Spread n_total Trotter steps over the slices, proportional to duration."""
        return replace(self, steps=distribute_steps([s.duration for s in self.slices], n_total))

    def table(self) -> np.ndarray:
        rows = []
        for s in self.slices:
            rows.append([s.duration, s.rabi[0], s.phase[0], s.detuning[0],
                         s.rabi[1], s.phase[1], s.detuning[1]])
        return np.array(rows, dtype=float)


def distribute_steps(durations, n_total: int) -> tuple[int, ...]:
    durations = np.asarray(durations, dtype=float)
    if n_total < len(durations):
        raise WaveformError(f"{n_total} Trotter steps cannot cover {len(durations)} slices")
    # largest-remainder rounding, at least one step per slice
    ideal = durations / durations.sum() * n_total
    steps = np.maximum(np.floor(ideal).astype(int), 1)
    while steps.sum() < n_total:
        steps[np.argmax(ideal - steps)] += 1
    while steps.sum() > n_total:
        cand = np.where(steps > 1, steps - ideal, -np.inf)
        steps[np.argmax(cand)] -= 1
    return tuple(int(s) for s in steps)


def jaksch_waveform(omega_max: float = 1.0, steps: int = 20) -> ControlWaveform:
    """Resonant pi / 2pi / pi pulse.

    The data atom is the control (outer pi pulses) and the ancilla the
    target, so a control decay never leaves the ancilla in |r>.
    """
    if not omega_max > 0:
        raise WaveformError("omega_max must be positive")
    t = math.pi / omega_max
    slices = (
        Slice(t, (0.0, omega_max)),
        Slice(2 * t, (omega_max, 0.0)),
        Slice(t, (0.0, omega_max)),
    )
    durations = [t, 2 * t, t]
    return ControlWaveform(slices, distribute_steps(durations, steps), name="jaksch",
                           omega_max=omega_max, delta_max=0.0)


def _parse_header(lines):
    meta = {}
    for ln in lines:
        s = ln.strip()
        if s.startswith("#") and ":" in s:
            k, v = s[1:].split(":", 1)
            meta[k.strip().lower()] = v.strip()
    return meta


def load_waveform(source, steps: int | None = None) -> ControlWaveform:
    """Read a waveform table.

    Header lines ``# key: value`` carry ``name``, ``omega_max``, ``delta_max``
    and optionally ``steps`` (Trotter steps for the whole pulse).  Each data
    row is one slice with the columns in ``COLUMNS``.  When no step count
    is given anywhere each slice gets a single step.
    """
    path = Path(source)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise WaveformError(f"cannot read {path}: {exc}") from exc
    text = raw.decode("utf-8", errors="replace")
    lines = text.splitlines()
    meta = _parse_header(lines)
    rows = []
    for lineno, ln in enumerate(lines, 1):
        s = ln.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            vals = [float(v) for v in s.replace(",", " ").split()]
        except ValueError as exc:
            raise WaveformError(f"{path}:{lineno}: unparsable row {s!r}") from exc
        if len(vals) != len(COLUMNS):
            raise WaveformError(f"{path}:{lineno}: expected {len(COLUMNS)} columns, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise WaveformError(f"{path}: no slices")
    try:
        omega_max = float(meta.get("omega_max", 1.0))
        delta_max = float(meta.get("delta_max", "inf"))
    except ValueError as exc:
        raise WaveformError(f"{path}: bad bound in header") from exc
    slices = tuple(Slice(r[0], (r[1], r[4]), (r[2], r[5]), (r[3], r[6])) for r in rows)
    for i, sl in enumerate(slices):
        if not sl.duration > 0:
            raise WaveformError(f"non-positive duration {sl.duration}", i)
    if steps is None and "steps" in meta:
        steps = int(meta["steps"])
    step_tuple = distribute_steps([s.duration for s in slices], steps) if steps else (1,) * len(slices)
    metadata = {
        "protocol": meta.get("name", path.stem),
        "source": str(path),
        "sha256": hashlib.sha256(raw).hexdigest(),
    }
    return ControlWaveform(slices, step_tuple, name=metadata["protocol"], omega_max=omega_max,
                           delta_max=delta_max, metadata=metadata)


def save_waveform(wf: ControlWaveform, path, comment: str = "") -> None:
    with open(path, "w") as fh:
        if comment:
            for ln in comment.splitlines():
                fh.write(f"# {ln}\n")
        fh.write(f"# name: {wf.name}\n")
        fh.write(f"# omega_max: {wf.omega_max!r}\n")
        fh.write(f"# delta_max: {wf.delta_max!r}\n")
        fh.write(f"# steps: {wf.total_steps}\n")
        fh.write("# units: time 1/omega_max, rates omega_max, phases rad\n")
        fh.write("# columns: " + " ".join(COLUMNS) + "\n")
        for r in wf.table():
            fh.write(" ".join(f"{v:.17g}" for v in r) + "\n")


def time_optimal_waveform(steps: int = 20) -> ControlWaveform:
    """The tabulated time-optimal pulse shipped with the package."""
    return load_waveform(Path(__file__).parent / "data" / "time_optimal.txt", steps=steps)
