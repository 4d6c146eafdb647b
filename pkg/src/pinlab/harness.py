"""Reproducible experiment runner.

A single JSON config fully determines every output file; re-running a
config produces byte-identical results.  Manifests record the config, tool
versions and seeds (never wall-clock times).  Exit status is 0 iff every
requested check passed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, kernels
from . import continuum as cont
from . import discrete_barrier as dbar
from . import discrete_dynamics as ddyn
from . import distributions as dists
from . import percolation as perc
from . import supersolution as ssol
from . import svgplot
from .obstacles import BumpShape, ForceField, ObstacleSet
from .rng import EnvironmentSeed, Stream

__all__ = ["CONFIG_SCHEMA", "load_config", "run", "sweep", "ConfigError"]


class ConfigError(ValueError):
    pass


_DIST_SCHEMA = {
    "type": "object",
    "properties": {"kind": {"type": "string"}},
    "required": ["kind"],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "experiment": {
            "enum": [
                "discrete-sim",
                "m-stat",
                "barrier",
                "percolation",
                "pipeline",
                "continuum-verify",
                "containment",
                "tail-probe",
            ]
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "distribution": _DIST_SCHEMA,
        "window": {"type": "integer", "minimum": 4},
        "F": {"type": "number", "minimum": 0},
        "rate_function": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["clamp", "tanh"]},
                "lam_max": {"type": "number", "exclusiveMinimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["kind"],
        },
        "max_events": {"type": "integer", "minimum": 1},
        "max_time": {"type": "number", "exclusiveMinimum": 0},
        "record_every": {"type": "integer", "minimum": 0},
        "truncations": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "n_samples": {"type": "integer", "minimum": 1},
        "strategy": {"enum": ["lipschitz_surface", "parabolic_bridge"]},
        "budget": {"type": "object"},
        "kmc_check": {
            "type": "object",
            "properties": {
                "runs": {"type": "integer", "minimum": 1},
                "events": {"type": "integer", "minimum": 1},
            },
        },
        "n": {"type": "integer", "enum": [1, 2]},
        "base_width": {"type": "integer", "minimum": 2},
        "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "height_budget": {"type": "integer", "minimum": 1},
        "lam": {"type": "number", "exclusiveMinimum": 0},
        "r0": {"type": "number", "exclusiveMinimum": 0},
        "r1": {"type": "number", "exclusiveMinimum": 0},
        "planner": {"enum": ["proof", "desk"]},
        "F_list": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "n_boxes": {"type": "integer", "minimum": 2},
        "levels": {"type": "integer", "minimum": 1},
        "dx_divisor": {"type": "integer", "minimum": 4},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "tol_factor": {"type": "number", "exclusiveMinimum": 0},
        "plateau_tol": {"type": "number", "exclusiveMinimum": 0},
        "exponents": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "x_grid": {
            "type": "object",
            "properties": {
                "start": {"type": "number", "exclusiveMinimum": 0},
                "stop": {"type": "number", "exclusiveMinimum": 0},
                "points": {"type": "integer", "minimum": 2},
            },
            "required": ["start", "stop", "points"],
        },
        "sweep": {
            "type": "object",
            "properties": {
                "parameter": {"type": "string"},
                "values": {"type": "array", "minItems": 1},
            },
            "required": ["parameter", "values"],
        },
    },
    "required": ["experiment"],
}


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e
    validate_config(cfg, str(path))
    return cfg


def validate_config(cfg: dict, origin: str = "<config>") -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{origin}: field '{path}': {e.message}")
        raise ConfigError("\n".join(lines))


def _dist_from(cfg) -> dists.StrengthDistribution:
    try:
        return dists.StrengthDistribution.from_config(cfg["distribution"])
    except KeyError:
        raise ConfigError("missing 'distribution' section")
    except dists.InvalidDistributionError as e:
        raise ConfigError(f"field 'distribution': {e}")


def _rate_from(cfg) -> ddyn.RateFunction:
    rf = cfg.get("rate_function", {"kind": "clamp", "lam_max": 1.0})
    if rf["kind"] == "clamp":
        return ddyn.RateFunction.clamp(rf.get("lam_max", 1.0))
    return ddyn.RateFunction.tanh_scaled(rf.get("beta", 1.0), rf.get("lam_max", 1.0))


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_json(path: Path, obj):
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _manifest(cfg: dict, extra=None) -> dict:
    man = {
        "config": cfg,
        "versions": {
            "pinlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "kernel_backend": kernels.backend_name(),
        "seeds": cfg.get("seeds", []),
    }
    if extra:
        man.update(extra)
    return man


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PINLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _map_seeds(fn, seeds, cfg):
    nw = _workers()
    if nw > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(fn, [(s, cfg) for s in seeds]))
    else:
        results = [fn((s, cfg)) for s in seeds]
    return sorted(results, key=lambda r: r["seed"])


# ---------------------------------------------------------------------------
# experiment implementations (module-level for picklability)


def _one_discrete_sim(args):
    seed, cfg = args
    dist = _dist_from(cfg)
    field = ddyn.QuenchedField(EnvironmentSeed(seed, Stream.STRENGTH), dist)
    lam = _rate_from(cfg)
    W = cfg.get("window", 256)
    stop = ddyn.StopRule(max_events=cfg.get("max_events", 10000), max_time=cfg.get("max_time"))
    traj = ddyn.run_until(
        ddyn.InterfaceState.flat(W), field, lam, int(cfg.get("F", 0)), stop,
        record_every=cfg.get("record_every", max(1, cfg.get("max_events", 10000) // 256)),
    )
    return {
        "seed": seed,
        "stop": traj.stop_reason,
        "events": int(traj.final_state.event_count),
        "time": traj.final_state.time,
        "max_height": int(traj.series_max[-1]),
        "mean_height": float(traj.series_mean[-1]),
        "series": [
            (float(t), int(m), float(mn), int(e))
            for t, m, mn, e in zip(traj.series_t, traj.series_max, traj.series_mean, traj.series_ev)
        ],
        "snapshot": [int(x) for x in traj.final_state.heights],
        "ok": True,
    }


def _run_discrete_sim(cfg, out: Path) -> bool:
    seeds = cfg.get("seeds", [0])
    results = _map_seeds(_one_discrete_sim, seeds, cfg)
    rows = [(r["seed"], r["stop"], r["events"], r["time"], r["max_height"], r["mean_height"])
            for r in results]
    _write_text(out / "summary.csv",
                _csv_text(["seed", "stop", "events", "time", "max_height", "mean_height"], rows))
    for r in results:
        _write_text(
            out / f"trajectory_seed{r['seed']}.csv",
            _csv_text(["time", "max_height", "mean_height", "events"], r["series"]),
        )
    _write_json(out / "snapshot_last_seed.json", results[-1]["snapshot"])
    first = results[0]
    xs = list(range(len(first["snapshot"])))
    _write_text(out / "interface.svg",
                svgplot.line_plot([(xs, first["snapshot"])], title="final interface"))
    return True


def _run_m_stat(cfg, out: Path) -> bool:
    dist = _dist_from(cfg)
    seeds = cfg.get("seeds", [0])
    js = cfg.get("truncations", [100])
    n = cfg.get("n_samples", 10000)
    rows = []
    for seed in seeds:
        env = EnvironmentSeed(seed, Stream.MSTAT)
        samples = dbar.sample_m_batch(dist, js, n, env)
        for k, J in enumerate(sorted(js)):
            exact = dbar.m_statistic_mean_exact(dist, J)
            mc = float(samples[:, k].mean())
            rows.append((seed, J, exact, mc, n))
    _write_text(out / "mstat.csv",
                _csv_text(["seed", "J", "exact_mean", "mc_mean", "n_samples"], rows))
    return True


def _one_barrier(args):
    seed, cfg = args
    dist = _dist_from(cfg)
    field = ddyn.QuenchedField(EnvironmentSeed(seed, Stream.STRENGTH), dist)
    F = int(cfg.get("F", 1))
    W = cfg.get("window", 1024)
    budget = dbar.BarrierSearchBudget(**cfg["budget"]) if "budget" in cfg else None
    cert = dbar.build_barrier(field, F, cfg.get("strategy", "parabolic_bridge"), W, budget)
    res = {"seed": seed, "found": cert is not None, "ok": cert is not None}
    if cert is None:
        return res
    res["cert"] = cert.to_json_dict()
    res["vmax"] = int(cert.v.max())
    kc = cfg.get("kmc_check")
    if kc:
        lam = _rate_from(cfg)
        violations = 0
        frozen = 0
        for run in range(kc.get("runs", 10)):
            traj = ddyn.run_until(
                ddyn.InterfaceState.flat(W), field, lam, F,
                ddyn.StopRule(max_events=kc.get("events", 100000), barrier=cert.v),
                dynamics_seed=(seed << 20) + run,
            )
            if traj.stop_reason == "violation":
                violations += 1
            if traj.stop_reason == "frozen":
                frozen += 1
        res["kmc_violations"] = violations
        res["kmc_frozen"] = frozen
        res["ok"] = violations == 0
    return res


def _run_barrier(cfg, out: Path) -> bool:
    seeds = cfg.get("seeds", [0])
    results = _map_seeds(_one_barrier, seeds, cfg)
    rows = []
    for r in results:
        rows.append((r["seed"], r["found"], r.get("vmax", ""),
                     r.get("kmc_violations", ""), r.get("ok", False)))
        if r.get("cert"):
            _write_json(out / f"certificate_seed{r['seed']}.json", r["cert"])
    _write_text(out / "barriers.csv",
                _csv_text(["seed", "found", "vmax", "kmc_violations", "ok"], rows))
    found = [r for r in results if r.get("cert")]
    if found:
        v = found[0]["cert"]["v"]
        _write_text(out / "barrier.svg",
                    svgplot.line_plot([(list(range(len(v))), v)], title="barrier certificate"))
    return all(r["ok"] for r in results)


def _one_percolation(args):
    seed, cfg = args
    env = EnvironmentSeed(seed, Stream.OPENNESS)
    n = cfg.get("n", 1)
    width = cfg.get("base_width", 128)
    shape = (width,) if n == 1 else (width, width)
    field = perc.SiteField(
        base_shape=shape,
        height_cap=cfg.get("height_budget", 1000),
        j_min=1,
        p=cfg.get("p", 0.95),
        env=env,
    )
    surf = perc.find_minimal_surface(field)
    res = {"seed": seed, "found": surf is not None, "ok": True}
    if surf is not None:
        ok, violations = perc.surface_check(surf, field)
        res["check"] = ok
        res["ok"] = ok
        res["max_height"] = int(surf.heights.max())
        res["heights"] = surf.heights.reshape(-1).tolist()
    return res


def _run_percolation(cfg, out: Path) -> bool:
    seeds = cfg.get("seeds", [0])
    results = _map_seeds(_one_percolation, seeds, cfg)
    rows = [(r["seed"], r["found"], r.get("max_height", ""), r.get("check", "")) for r in results]
    _write_text(out / "surfaces.csv",
                _csv_text(["seed", "found", "max_height", "check_passed"], rows))
    found = [r for r in results if r["found"]]
    frac = len(found) / len(results)
    _write_json(out / "summary.json",
                {"found_fraction": frac, "n_seeds": len(results), "p": cfg.get("p", 0.95)})
    if found and cfg.get("n", 1) == 1:
        hs = found[0]["heights"]
        _write_text(out / "surface.svg",
                    svgplot.line_plot([(list(range(len(hs))), hs)], title="Lipschitz surface"))
    return all(r["ok"] for r in results)


def _run_pipeline(cfg, out: Path) -> bool:
    dist = _dist_from(cfg)
    fs = cfg.get("F_list", [cfg.get("F", 1.0)])
    planner = cfg.get("planner", "proof")
    rows = []
    all_ok = True
    reports = {}
    for F in fs:
        try:
            if planner == "proof":
                p = ssol.plan_parameters(
                    F, cfg.get("n", 1), cfg.get("lam", 1.0), cfg.get("r0", 0.5),
                    cfg.get("r1", 1.5), dist,
                )
            else:
                p = ssol.plan_desk_parameters(
                    F, cfg.get("n", 1), cfg.get("lam", 1.0), cfg.get("r0", 0.5),
                    cfg.get("r1", 1.5), dist,
                )
            checks_pass = all(
                v["pass"] for k, v in p.checks.items()
                if not (planner == "desk" and k == "open_box")
            )
            all_ok &= checks_pass
            reports[repr(float(F))] = p.to_json_dict()
            rows.append((F, p.K, p.M, p.m, p.l, p.d, p.h, p.r_out, p.force_ceiling, checks_pass))
        except (ssol.HypothesisNotWitnessedError, RuntimeError) as e:
            all_ok = False
            rows.append((F, "", "", "", "", "", "", "", "", f"error: {e}"))
    _write_json(out / "params.json", reports)
    _write_text(out / "pipeline.csv",
                _csv_text(["F", "K", "M", "m", "l", "d", "h", "r_out", "ceiling", "checks_pass"],
                          rows))
    return all_ok


def _build_assembly(cfg):
    dist = _dist_from(cfg)
    seed = cfg.get("seeds", [0])[0]
    return ssol.build_desk_assembly(
        float(cfg.get("F", 1.0)), cfg.get("lam", 1.0), cfg.get("r0", 0.5),
        cfg.get("r1", 1.5), dist, seed,
        n_boxes=cfg.get("n_boxes", 8), levels=cfg.get("levels", 3),
    )


def _profile_svg(asm) -> str:
    prof = asm.profile
    rs = np.linspace(0, prof.r_out, 512)
    vals = np.asarray(prof.value(rs))
    slopes = np.asarray(prof.d1(rs))
    return svgplot.line_plot(
        [(rs, vals), (rs, slopes)],
        title="local profile: value and slope",
        labels=["v_local", "v_local'"],
    )


def _run_continuum_verify(cfg, out: Path) -> bool:
    asm, ff, obs = _build_assembly(cfg)
    rep = ssol.verify_supersolution(asm, ff, float(cfg.get("F", 1.0)),
                                    dx_divisor=cfg.get("dx_divisor", 32))
    _write_json(out / "assembly.json", asm.to_json_dict())
    _write_json(out / "field.json", obs.to_json_dict())
    _write_json(out / "report.json", rep.to_json_dict())
    xs = np.arange(rep.n_grid) * rep.dx
    vv = asm.value(xs)
    _write_text(out / "cross_section.csv",
                _csv_text(["x", "v"], list(zip(xs.tolist(), vv.tolist()))))
    _write_text(out / "supersolution.svg",
                svgplot.line_plot([(xs, vv)], title="assembled supersolution"))
    _write_text(out / "profiles.svg", _profile_svg(asm))
    return rep.passed


def _run_containment(cfg, out: Path) -> bool:
    asm, ff, obs = _build_assembly(cfg)
    F = float(cfg.get("F", 1.0))
    rep = cont.containment_run(
        ff, F, asm, horizon=cfg.get("horizon", 10.0),
        dx_divisor=cfg.get("dx_divisor", 32),
        tol_factor=cfg.get("tol_factor", 10.0),
        plateau_tol=cfg.get("plateau_tol", 1e-3),
    )
    _write_json(out / "assembly.json", asm.to_json_dict())
    _write_json(out / "field.json", obs.to_json_dict())
    _write_json(out / "report.json", rep.to_json_dict())
    rows = list(zip(rep.series_t.tolist(), rep.series_max.tolist(),
                    rep.series_mean.tolist(), rep.series_sup.tolist()))
    _write_text(out / "trajectory.csv",
                _csv_text(["t", "max_u", "mean_u", "sup_u_minus_v"], rows))
    _write_text(out / "heights.svg",
                svgplot.line_plot([(rep.series_t, rep.series_max)],
                                  title="max height vs time"))
    return rep.passed


def _run_tail_probe(cfg, out: Path) -> bool:
    dist = _dist_from(cfg)
    g = cfg.get("x_grid", {"start": 10.0, "stop": 1e6, "points": 6})
    xs = np.geomspace(g["start"], g["stop"], g["points"])
    rows = []
    for a in cfg.get("exponents", [1.5]):
        probe = dists.tail_divergence_probe(dist, a, xs)
        for x, val in zip(xs, probe):
            rows.append((a, float(x), float(val)))
    _write_text(out / "probe.csv", _csv_text(["exponent", "x", "x^a_tail"], rows))
    rows2 = [(int(k), float(dist.alpha(k))) for k in range(1, 64)]
    _write_text(out / "alpha.csv", _csv_text(["k", "alpha_k"], rows2))
    return True


_RUNNERS = {
    "discrete-sim": _run_discrete_sim,
    "m-stat": _run_m_stat,
    "barrier": _run_barrier,
    "percolation": _run_percolation,
    "pipeline": _run_pipeline,
    "continuum-verify": _run_continuum_verify,
    "containment": _run_containment,
    "tail-probe": _run_tail_probe,
}


def run(cfg: dict, out_dir) -> int:
    """Execute one experiment config; returns a process exit status."""
    validate_config(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", _manifest(cfg))
    ok = _RUNNERS[cfg["experiment"]](cfg, out)
    _write_json(out / "status.json", {"passed": bool(ok)})
    return 0 if ok else 1


def sweep(cfg: dict, out_dir) -> int:
    """Run the base experiment across a parameter grid, one row per value.

    Partial failures are recorded per row and the sweep continues.
    """
    validate_config(cfg)
    if "sweep" not in cfg:
        raise ConfigError("sweep config needs a 'sweep' section")
    param = cfg["sweep"]["parameter"]
    values = cfg["sweep"]["values"]
    if not values:
        raise ConfigError("sweep values must be non-empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", _manifest(cfg))
    rows = []
    all_ok = True
    for k, val in enumerate(values):
        sub = {k2: v2 for k2, v2 in cfg.items() if k2 != "sweep"}
        sub[param] = val
        sub_out = out / f"{param}_{k}"
        try:
            status = run(sub, sub_out)
            rows.append((param, val, status, ""))
            all_ok &= status == 0
        except Exception as e:  # recorded, sweep continues
            rows.append((param, val, -1, f"{type(e).__name__}: {e}"))
            all_ok = False
    _write_text(out / "sweep.csv", _csv_text(["parameter", "value", "status", "error"], rows))
    return 0 if all_ok else 1


def verify_files(assembly_path, field_path, F=None) -> int:
    """pinlab verify: re-check a serialized assembly against a field file."""
    with open(assembly_path) as fh:
        asm = ssol.SupersolutionAssembly.from_json_dict(json.load(fh))
    with open(field_path) as fh:
        obs = ObstacleSet.from_json_dict(json.load(fh))
    bump = BumpShape(r0=asm.params.r0, r1=asm.params.r1, n=asm.params.n)
    ff = ForceField(obs, bump)
    F = asm.params.F if F is None else float(F)
    rep = ssol.verify_supersolution(asm, ff, F)
    print(json.dumps(rep.to_json_dict(), sort_keys=True, indent=2))
    return 0 if rep.passed else 1
