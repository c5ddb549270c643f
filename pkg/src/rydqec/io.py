"""Checkpoints, run manifests, output tables and config files.

Checkpoint layout (all byte-deterministic):

    RYDQEC-CHECKPOINT\n
    <one line of JSON: version, kind, sha256, arrays [{name, dtype, shape, offset, nbytes}], meta>\n
    <raw little-endian array bytes, concatenated in header order>

The digest covers the payload and the canonical JSON of (kind, arrays, meta),
so truncation or any edit fails closed with CheckpointError.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import CheckpointError, ConfigError
from .rng import ALGORITHM

MAGIC = b"RYDQEC-CHECKPOINT\n"
CHECKPOINT_VERSION = 1
SCHEMA_VERSION = 1
OUT_ENV = "RYDQEC_OUT"


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest(kind, arrays_meta, meta, payload: bytes) -> str:
    h = hashlib.sha256()
    h.update(_canon({"kind": kind, "arrays": arrays_meta, "meta": meta}).encode())
    h.update(payload)
    return h.hexdigest()


def encode_checkpoint(kind: str, arrays: dict | None = None, meta: dict | None = None) -> bytes:
    arrays = arrays or {}
    meta = meta or {}
    parts, desc, off = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
        raw = a.astype(dt, copy=False).tobytes()
        desc.append({"name": name, "dtype": dt.str, "shape": list(a.shape), "offset": off, "nbytes": len(raw)})
        parts.append(raw)
        off += len(raw)
    payload = b"".join(parts)
    header = {"version": CHECKPOINT_VERSION, "tool": __version__, "kind": kind, "arrays": desc, "meta": meta,
              "sha256": _digest(kind, desc, meta, payload)}
    return MAGIC + _canon(header).encode() + b"\n" + payload


def decode_checkpoint(data: bytes, kind: str | None = None):
    """Returns (arrays, meta).  Raises CheckpointError on any inconsistency."""
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    rest = data[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(rest[:nl])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {header.get('version')} != {CHECKPOINT_VERSION}")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"checkpoint holds '{header.get('kind')}', expected '{kind}'")
    payload = rest[nl + 1:]
    want = header.get("sha256")
    got = _digest(header["kind"], header["arrays"], header["meta"], payload)
    if got != want:
        raise CheckpointError(f"checkpoint digest mismatch: header {want}, content {got}")
    arrays = {}
    for d in header["arrays"]:
        raw = payload[d["offset"]:d["offset"] + d["nbytes"]]
        arrays[d["name"]] = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()
    return arrays, header["meta"]


def _atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def write_checkpoint(path, kind: str, arrays: dict | None = None, meta: dict | None = None):
    _atomic_write(path, encode_checkpoint(kind, arrays, meta))


def read_checkpoint(path, kind: str | None = None):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    return decode_checkpoint(data, kind)


def ensemble_state_arrays(state) -> dict:
    return {"spins": state.spins, "rng_state": state.rng_state, "acc": state.acc,
            "counters": np.array([state.sweeps_done, state.meas_done], dtype=np.int64)}


def ensemble_state_from_arrays(arrays):
    from .rbim import EnsembleState
    c = arrays["counters"]
    return EnsembleState(arrays["spins"], arrays["rng_state"], arrays["acc"], int(c[0]), int(c[1]))


# tables

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ("nan" if np.isnan(v) else ("inf" if v > 0 else "-inf"))
    if v is None:
        return "nan"
    return str(v)


def write_table(path, columns, units, rows, comment: str = ""):
    """Whitespace separated text table with '#' header lines for names and units."""
    if len(columns) != len(units):
        raise ValueError("one unit per column")
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append("# columns: " + " ".join(columns))
    lines.append("# units: " + " ".join(units))
    for r in rows:
        if len(r) != len(columns):
            raise ValueError("row length does not match header")
        lines.append(" ".join(format_value(v) for v in r))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_table(path):
    """Returns (columns, units, rows as lists of strings)."""
    cols, units, rows = None, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# columns:"):
            cols = line.split(":", 1)[1].split()
        elif line.startswith("# units:"):
            units = line.split(":", 1)[1].split()
        elif line.startswith("#") or not line.strip():
            continue
        else:
            rows.append(line.split())
    return cols, units, rows


def write_json(path, doc):
    _atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n").encode())


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# config

def read_config(path, section: str) -> dict:
    """Key-value config ('key = value' under [section]) with a schema_version key.

    Values are returned as strings; callers coerce them.
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            cp.read_file(f)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot parse config {path}: {e}", "") from None
    if section not in cp:
        raise ConfigError(f"config has no [{section}] section", section)
    out = dict(cp[section])
    v = out.pop("schema_version", None)
    if v is None:
        raise ConfigError("missing schema_version", f"{section}.schema_version")
    if v.strip() != str(SCHEMA_VERSION):
        raise ConfigError(f"schema_version {v} not supported (expected {SCHEMA_VERSION})",
                          f"{section}.schema_version")
    return out


def write_config(path, section: str, values: dict):
    lines = [f"[{section}]", f"schema_version = {SCHEMA_VERSION}"]
    for k in sorted(values):
        v = values[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(format_value(x) for x in v)
        lines.append(f"{k} = {format_value(v)}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    tool_version: str = __version__
    rng: str = ALGORITHM
    outputs: dict = field(default_factory=dict)      # name -> sha256
    inputs: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    steps: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(_canon({"command": self.command, "config": self.config,
                                      "seed": self.seed}).encode()).hexdigest()

    def add_output(self, path):
        self.outputs[Path(path).name] = file_digest(path)

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "config_hash": self.config_hash,
                "seed": self.seed, "tool_version": self.tool_version, "rng": self.rng,
                "inputs": self.inputs, "outputs": self.outputs, "wall_seconds": self.wall_seconds,
                "steps": self.steps}

    def write(self, out_dir):
        write_json(Path(out_dir) / "manifest.json", self.to_dict())


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "rydqec-out"))
