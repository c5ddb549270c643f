"""Command line entry point: ``rydqec <subcommand> [options]``.

Every subcommand accepts --config FILE (an ini-style file whose section is
named after the subcommand), --seed, --preset, --resume and --out.  Flags
override config values.  Results go to --out (default $RYDQEC_OUT or
./rydqec-out) together with manifest.json.  Errors are printed to stderr
as one JSON record and mapped to exit codes 1 (validation), 2 (runtime),
3 (undetermined result).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import (BracketError, CheckpointError, ConfigError, NoCrossingError, RydqecError,
                         UndeterminedError, ValidationError)
from .io import (RunManifest, Timer, default_out_dir, ensemble_state_arrays, ensemble_state_from_arrays,
                 read_checkpoint, read_config, write_checkpoint, write_json, write_table)


def _floats(s):
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


# (name, type, default) per subcommand; type is used for config coercion too
OPTIONS = {
    "chi": [("protocol", str, "jaksch"), ("gamma", float, 1e-3), ("omega", float, 0.0), ("steps", int, 20),
            ("waveform", str, None), ("route", str, "pair")],
    "rbim": [("p", float, 0.0), ("sizes", _ints, None), ("temperatures", _floats, None), ("samples", int, None),
             ("n_eq", int, None), ("n_meas", int, None), ("r_bar", float, 0.0), ("scenario", str, "no-refresh")],
    "rpgm": [("p", float, 0.05), ("q", float, None), ("size", int, 6), ("samples", int, 10),
             ("temperatures", _floats, None), ("n_eq", int, 500), ("n_meas", int, 500), ("r_bar", float, 0.0),
             ("plane", str, "xy"), ("protocol", str, None), ("gamma", float, None)],
    "percolation": [("mode", str, "bond"), ("sizes", _ints, [32, 64]), ("trials", int, 2000),
                    ("grid", _floats, None)],
    "phase-diagram": [("protocol", str, "jaksch"), ("gammas", _floats, [1e-3]), ("r_bars", _floats, [0.0]),
                      ("scenario", str, "no-refresh"), ("waveform", str, None), ("leak", str, "decoupled")],
    "lifetime": [("protocol", str, "time-optimal"), ("gamma", float, 0.0), ("t_trap", float, math.inf),
                 ("tau_meas", float, 1e-3), ("omega_phys", float, 2 * math.pi * 10e6), ("atoms", str, "both"),
                 ("r_threshold", float, None), ("scenario", str, "no-refresh")],
}

RBIM_PRESETS = {"desk": dict(sizes=[8, 16, 32], samples=32, n_eq=2000, n_meas=8000),
                "paper": dict(sizes=[16, 32, 64], samples=2500, n_eq=50000, n_meas=50000)}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rydqec", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--preset", choices=("desk", "paper", "tiny"), default=None)
        p.add_argument("--resume", type=Path, default=None, metavar="CHECKPOINT")
        p.add_argument("--out", type=Path, default=None)
        for key, typ, _ in opts:
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    return ap


def resolve(args) -> dict:
    """Defaults < config file < command-line flags."""
    vals = {k: d for k, _, d in OPTIONS[args.command]}
    vals.update(seed=0, preset="desk")
    if args.config:
        raw = read_config(args.config, args.command)
        known = {k: t for k, t, _ in OPTIONS[args.command]}
        known.update(seed=int, preset=str)
        for k, v in raw.items():
            if k not in known:
                raise ConfigError(f"unknown key '{k}'", f"{args.command}.{k}")
            try:
                vals[k] = known[k](v)
            except ValueError as e:
                raise ConfigError(f"bad value for '{k}': {e}", f"{args.command}.{k}") from None
    for k in list(vals) + ["seed", "preset"]:
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    return vals


def _cmd_chi(v, out, man):
    from .channel import DecayParameters, extract_chi_diagonal, pair_channel
    from .channel.plaquette import plaquette_channel
    from .pipeline import protocol_waveform
    wf = protocol_waveform(v["protocol"], v["waveform"], v["steps"])
    decay = DecayParameters(v["gamma"], v["omega"])
    if v["route"] == "pair":
        chi = extract_chi_diagonal(pair_channel(wf, decay))
        doc = chi.to_dict()
        rows = sorted(doc["probs"].items()) + [("erasure", chi.erasure_weight)]
    elif v["route"] == "plaquette":
        dist = plaquette_channel(wf, decay)
        doc = dist.to_dict()
        rows = [(f"{m:04b}:{f}", float(dist.probs[m, f])) for m in range(dist.probs.shape[0]) for f in (0, 1)]
        rows.append(("erasure", dist.erasure_weight))
    else:
        raise ConfigError("route must be 'pair' or 'plaquette'", "chi.route")
    write_json(out / "channel.json", doc)
    write_table(out / "channel.txt", ["error", "probability"], ["-", "1"], rows)
    return ["channel.json", "channel.txt"]


def _cmd_rbim(v, out, man, resume):
    from .disorder import sample_disorder
    from .distribution import PlaquetteErrorDistribution, nishimori_temperature
    from .rbim import crossing_analysis, simulate_ensemble
    pre = RBIM_PRESETS.get(v["preset"], RBIM_PRESETS["desk"])
    sizes = v["sizes"] or pre["sizes"]
    n = v["samples"] or pre["samples"]
    n_eq, n_meas = v["n_eq"] or pre["n_eq"], v["n_meas"] or pre["n_meas"]
    p = v["p"]
    if v["temperatures"]:
        temps = v["temperatures"]
    elif p == 0:
        temps = list(np.linspace(2.17, 2.37, 7))
    else:
        tn = nishimori_temperature(PlaquetteErrorDistribution.independent(p))
        temps = list(np.linspace(0.85 * tn, 1.15 * tn, 7))
    dist = PlaquetteErrorDistribution.independent(p) if p > 0 else PlaquetteErrorDistribution.independent(0.0)
    runs = {}
    ck = out / "rbim.ckpt"
    state = {}
    if resume:
        arrays, meta = read_checkpoint(resume, "rbim")
        state = {"L": meta["L"], "finished": meta["finished"], "arrays": arrays}
    finished = {}
    if state:
        for L, acc in state["finished"].items():
            finished[int(L)] = np.array(acc)
    for i, L in enumerate(sizes):
        samples = [sample_disorder(dist, v["r_bar"], (L, L), seed=v["seed"] * 1_000_003 + 7919 * i + k,
                                   scenario="refresh" if v["scenario"] != "no-refresh" else "no-refresh")
                   for k in range(n)]
        from .rbim import EnsembleRun
        if L in finished:
            runs[L] = EnsembleRun(L, np.asarray(temps), finished[L].reshape(n, len(temps), -1), n_eq, n_meas)
            continue
        res = None
        if state and state["L"] == L and "spins" in state["arrays"]:
            res = ensemble_state_from_arrays(state["arrays"])

        def save(st, L=L):
            write_checkpoint(ck, "rbim", ensemble_state_arrays(st),
                             {"L": L, "finished": {str(k): r.acc.ravel().tolist() for k, r in runs.items()}})

        runs[L] = simulate_ensemble(samples, temps, n_eq, n_meas, seed=v["seed"] + 1000 * i, resume=res,
                                    checkpoint=save)
        write_checkpoint(ck, "rbim", {}, {"L": None, "finished": {str(k): r.acc.ravel().tolist()
                                                                   for k, r in runs.items()}})
    curve = crossing_analysis(runs, 200, v["seed"])
    rows = []
    for L in sizes:
        x, e = runs[L].xi_over_L_jackknife()
        rows += [(L, t, a, b) for t, a, b in zip(temps, x, e)]
    write_table(out / "xi_over_L.txt", ["L", "T", "xi_over_L", "sigma"], ["sites", "J", "1", "1"], rows)
    doc = {"p": p, "sizes": sizes, "samples": n, "temperatures": list(map(float, temps)), "tc": curve.tc,
           "tc_err": curve.tc_err, "nu": curve.nu,
           "crossings": {f"{a}-{b}": c for (a, b), c in curve.crossings.items()}}
    write_json(out / "rbim.json", doc)
    man.steps = {"n_eq": n_eq, "n_meas": n_meas}
    if curve.tc is None:
        raise NoCrossingError("xi/L curves do not cross in the temperature window")
    return ["xi_over_L.txt", "rbim.json"]


def _cmd_rpgm(v, out, man):
    from .disorder import sample_disorder
    from .distribution import PlaquetteErrorDistribution, nishimori_couplings
    from .rpgm import (AnnealSchedule, GaugeLattice3D, LoopSpec, anneal_run, classify_phase, polyakov_xi_over_L,
                       wilson_average)
    if v["protocol"]:
        from .pipeline import point_distribution
        dist = point_distribution(v["protocol"], v["gamma"] or 1e-3)
    else:
        q = v["p"] if v["q"] is None else v["q"]
        dist = PlaquetteErrorDistribution.independent(v["p"], q)
    k = nishimori_couplings(dist)
    ratio = k["measurement"] / k["data"] if math.isfinite(k["measurement"]) and k["data"] > 0 else 1.0
    d = v["size"]
    lats = [GaugeLattice3D.from_sample(sample_disorder(dist, v["r_bar"], (d, d, d), seed=v["seed"] * 1_000_003 + s),
                                       ratio=ratio) for s in range(v["samples"])]
    tn = 1.0 / k["data"] if k["data"] > 0 else math.inf
    temps = v["temperatures"] or ([0.8, 1.0, 1.2, 1.4, 1.6, 1.8])
    loops = LoopSpec(plane=v["plane"])
    rungs = anneal_run(lats, AnnealSchedule(tuple(temps), v["n_eq"], v["n_meas"]), seed=v["seed"], loops=loops)
    rows, classes = [], []
    for r in rungs:
        w = wilson_average(r, lats, loops)
        c = classify_phase(w)
        x, e = polyakov_xi_over_L(r)
        classes.append({"T": r.temperature, "class": c, "xi_over_L": float(x)})
        rows += [(r.temperature, f"{a}x{b}", ww, ee, s) for (a, b), ww, ee, s in zip(w.sizes, w.w, w.w_err, w.area)]
    write_table(out / "wilson.txt", ["T", "loop", "W", "sigma", "area"], ["J", "edges", "1", "1", "plaquettes"], rows)
    write_json(out / "rpgm.json", {"nishimori_T": tn, "coupling_ratio": ratio, "size": d, "phases": classes})
    man.steps = {"n_eq": v["n_eq"], "n_meas": v["n_meas"]}
    return ["wilson.txt", "rpgm.json"]


def _cmd_percolation(v, out, man):
    from .percolation import survival_curve
    if v["mode"] not in ("bond", "site-bond"):
        raise ConfigError("mode must be 'bond' or 'site-bond'", "percolation.mode")
    grid = v["grid"] or (list(np.arange(0.46, 0.541, 0.02)) if v["mode"] == "bond"
                         else list(np.arange(0.21, 0.291, 0.02)))
    c = survival_curve(v["sizes"], grid, v["trials"], v["mode"], v["seed"])
    rows = [(L, r, s) for L in c.sizes for r, s in zip(c.r_grid, c.survival[L])]
    write_table(out / "survival.txt", ["L", "r", "wrapping_probability"], ["sites", "1", "1"], rows)
    write_json(out / "percolation.json", {"mode": c.mode, "sizes": c.sizes, "trials": c.trials,
                                          "threshold": c.threshold, "threshold_err": c.threshold_err})
    if c.threshold is None:
        raise NoCrossingError("survival curves do not cross on the grid")
    return ["survival.txt", "percolation.json"]


def _cmd_phase(v, out, man, resume):
    from .pipeline import SweepConfig, run_sweep
    cfg = SweepConfig(protocol=v["protocol"], gammas=tuple(v["gammas"]), r_bars=tuple(v["r_bars"]),
                      preset=v["preset"], scenario=v["scenario"], seed=v["seed"], waveform=v["waveform"],
                      leak=v["leak"])
    ck = resume or (out / "sweep.ckpt")
    pb = run_sweep(cfg, checkpoint=ck, resume=resume is not None)
    write_table(out / "phase_points.txt", ["gamma", "r_bar", "class", "T", "score", "sigma"],
                ["Omega", "1", "-", "J", "1", "1"], pb.points)
    write_table(out / "boundary.txt", ["gamma", "r_bar"], ["Omega", "1"], pb.boundary)
    write_json(out / "phase.json", {"config": cfg.to_dict(), "anchors": pb.anchors, "boundary": pb.boundary,
                                    "failures": pb.failures})
    return ["phase_points.txt", "boundary.txt", "phase.json"]


def _cmd_lifetime(v, out, man):
    from .disorder import ErasureParameters
    from .pipeline import f_int_from_protocol, lifetime_estimate, percolation_threshold
    f = f_int_from_protocol(v["protocol"], v["omega_phys"], v["tau_meas"], v["atoms"])
    r_th = v["r_threshold"]
    if r_th is None:
        r_th = percolation_threshold("refresh" if v["scenario"] != "no-refresh" else "no-refresh")[0]
    params = ErasureParameters(t_trap=v["t_trap"], tau_meas=v["tau_meas"], f_int=min(f, 1.0))
    est = lifetime_estimate(params, v["gamma"], r_th)
    write_json(out / "lifetime.json", {"cycles": est.cycles, "mechanism": est.mechanism,
                                       "r_threshold": est.r_threshold, "omega": est.omega, "inputs": est.inputs,
                                       "omega_phys": v["omega_phys"], "protocol": v["protocol"]})
    return ["lifetime.json"]


def _error(e: Exception, code: int) -> int:
    rec = {"error": type(e).__name__, "message": str(e), "exit_code": code}
    field = getattr(e, "field", None)
    if field:
        rec["field"] = field
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        v = resolve(args)
        out = args.out or default_out_dir()
        out.mkdir(parents=True, exist_ok=True)
        cfg = {k: (None if isinstance(x, float) and math.isinf(x) else x) for k, x in v.items()}
        man = RunManifest(args.command, cfg, v["seed"])
        if args.config:
            from .io import file_digest
            man.inputs[str(args.config)] = file_digest(args.config)
        with Timer() as t:
            cmd = args.command
            if cmd == "chi":
                files = _cmd_chi(v, out, man)
            elif cmd == "rbim":
                files = _cmd_rbim(v, out, man, args.resume)
            elif cmd == "rpgm":
                files = _cmd_rpgm(v, out, man)
            elif cmd == "percolation":
                files = _cmd_percolation(v, out, man)
            elif cmd == "phase-diagram":
                files = _cmd_phase(v, out, man, args.resume)
            else:
                files = _cmd_lifetime(v, out, man)
        man.wall_seconds = round(t.seconds, 3)
        for f in files:
            man.add_output(out / f)
        man.write(out)
        return 0
    except (ValidationError, ConfigError) as e:
        return _error(e, 1)
    except (NoCrossingError, BracketError, UndeterminedError) as e:
        return _error(e, 3)
    except CheckpointError as e:
        return _error(e, 2)
    except RydqecError as e:
        return _error(e, getattr(e, "exit_code", 2))
    except (OSError, ValueError) as e:
        return _error(e, 2)


if __name__ == "__main__":
    sys.exit(main())
