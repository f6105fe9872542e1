"""Command line driver.

Subcommands ``build-profile``, ``find-torus``, ``simulate``, ``detect`` and
``validate`` share one output directory per experiment::

    config.ini  profile.csv  certificate.json  torus.json  torus.csv
    barriers.json  run.csv  run.jsonl  run.json  nesting.json
    disjointness.json  epochs.json  snapshots/NNNNNN.axfl

Exit codes: 0 success, 2 validation failure, 3 numerical abort, 4 bad
configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import profilekit as pk
from . import shrinkerlab as sl
from .axiflow import Grid2D, InstabilityError, RunRecord, Schedule, Sphere, evolve, rasterize, resume_field
from .config import ConfigError, ExperimentConfig, GridSection, parse_overrides
from .epochscope import (
    DisjointnessMonitor,
    FieldDigest,
    NestingMonitor,
    TopologyObserver,
    detect_epochs,
    write_epoch_report,
)

log = logging.getLogger("pinchlab")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 4

TORUS_SAMPLES = 4000


class CommandError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def provenance(cfg: ExperimentConfig) -> dict:
    import numba
    import scipy
    import skimage

    return {
        "config_hash": cfg.digest(),
        "versions": {
            "pinchlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "scikit-image": skimage.__version__,
        },
    }


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def smoke_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Coarse chain grid (h = 1/256) for quick runs."""
    h = 1.0 / 256.0
    eps0 = cfg.profile.eps0 if cfg.profile.eps0 is not None else 0.12
    g = GridSection.covering(-6 * h, 3.0 + 6 * h, eps0 + 8 * h, h)
    return cfg.replace(grid=g)


def load_config(args) -> ExperimentConfig:
    overrides = parse_overrides(args.set)
    if args.config:
        cfg = ExperimentConfig.load(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_ini("", overrides)
    if getattr(args, "smoke", False) and args.command != "validate":
        cfg = smoke_config(cfg)
    return cfg


def output_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.output or cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_config(cfg: ExperimentConfig, out: Path) -> None:
    cfg.save(out / "config.ini")


def load_or_find_torus(cfg: ExperimentConfig, out: Path) -> sl.TorusProfile:
    j, c = out / "torus.json", out / "torus.csv"
    if j.exists() and c.exists():
        tor = sl.TorusProfile.read(j, c)
        if tor.n == cfg.profile.n:
            return tor
    return _find_torus(cfg, out)


def _find_torus(cfg: ExperimentConfig, out: Path) -> sl.TorusProfile:
    n = cfg.profile.n
    try:
        tor = sl.find_torus(n, num_samples=TORUS_SAMPLES)
    except (ValueError, RuntimeError) as err:
        raise CommandError(f"find-torus: {err}", EXIT_NUMERICAL) from None
    params = ex.construction_params(cfg, tor)
    _, _, cert = sl.scale_and_pick_delta0(tor, params.eps0, n, cfg.profile.margin,
                                          require_sphere_bound=params.regime == "certified")
    extra = {"barrier_certificate": cert, "eps0": params.eps0, "regime": params.regime,
             "provenance": provenance(cfg)}
    tor.write(out / "torus.json", out / "torus.csv", extra=_json_safe(extra))
    return tor


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_profile(cfg: ExperimentConfig, out: Path) -> int:
    _save_config(cfg, out)
    torus = load_or_find_torus(cfg, out) if cfg.profile.regime == "certified" else None
    try:
        params, prof, cert = ex.build_profile(cfg, torus)
    except ValueError as err:
        raise CommandError(f"build-profile: {err}", EXIT_CONFIG) from None
    pk.write_profile_csv(prof, out / "profile.csv")
    extra = {
        "one_plus_M_eps0_sq": (1.0 + params.M) * params.eps0**2,
        "self_similarity_residual": pk.check_self_similarity(prof, 10_000, cfg.profile.seed),
        "provenance": provenance(cfg),
    }
    cert.to_json(out / "certificate.json", extra=_json_safe(extra))
    print(f"certificate: pass={cert.passed} minH={cert.minH:.6g} at x={cert.argminH:.6g} "
          f"maxFF''={cert.maxFFpp:.6g} (1+M)eps0^2={extra['one_plus_M_eps0_sq']:.6g}")
    if not cert.passed:
        reason = []
        if not cert.minH > 0:
            reason.append(f"min mean curvature {cert.minH!r} <= 0 at x={cert.argminH!r}")
        if cert.regime == "certified" and not cert.maxFFpp < 1:
            reason.append(f"max F F'' = {cert.maxFFpp!r} >= 1")
        if cert.analytic_bound is not None and not cert.analytic_bound < 1.0 / cert.eps0:
            reason.append(f"(1+M) eps0 = {cert.analytic_bound!r} >= 1/eps0")
        raise CommandError("certification failed: " + "; ".join(reason), EXIT_VALIDATION)
    return EXIT_OK


def cmd_find_torus(cfg: ExperimentConfig, out: Path) -> int:
    _save_config(cfg, out)
    tor = _find_torus(cfg, out)
    print(f"torus n={tor.n}: a*={tor.a_star!r} residual={tor.residual:.3g} "
          f"hole={tor.hole_radius:.6g} thickness={tor.thickness:.6g} outer={tor.outer_radius:.6g}")
    return EXIT_OK


def _rows_from_jsonl(path: Path):
    rows = []
    if path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _restore_nan(row: dict) -> dict:
    # JSON has no nan; extinct necks were stored as null
    return {k: (math.nan if v is None else v) for k, v in row.items()}


def cmd_simulate(cfg: ExperimentConfig, out: Path, resume: str | None = None) -> int:
    _save_config(cfg, out)
    n = cfg.profile.n
    torus = load_or_find_torus(cfg, out)
    try:
        params = ex.construction_params(cfg, torus)
    except ValueError as err:
        raise CommandError(str(err), EXIT_CONFIG) from None
    sched = ex.schedule_of(cfg)
    snaps = out / "snapshots"
    shape = cfg.run.shape
    barriers = sl.place_barriers(params, torus, cfg.profile.beads_k_max, margin=cfg.profile.margin)
    sl.write_barriers_json(barriers, out / "barriers.json")

    if shape == "sphere":
        grid = ex.sphere_grid(ex.config_grid(cfg).h, cfg.run.sphere_radius)
        stations = [0.0]
        make_field = lambda: rasterize(Sphere(0.0, cfg.run.sphere_radius), grid)  # noqa: E731
        profile = None
    else:
        grid = ex.config_grid(cfg)
        k = cfg.profile.beads_k_max if shape == "chain" else 0
        profile = ex.chain_profile(params, k)
        stations = profile.neck_stations()
        make_field = lambda: rasterize(profile, grid)  # noqa: E731

    old_rows = []
    if resume:
        f0, eps = resume_field(resume, grid)
        sched = Schedule(t_end=sched.t_end, cfl=sched.cfl, reinit_every=sched.reinit_every,
                         snapshot_every=sched.snapshot_every, eps_reg=eps,
                         checkpoint_every=sched.checkpoint_every)
        old_rows = [r for r in _rows_from_jsonl(out / "run.jsonl") if r["t"] < f0.t]
        log.info("resuming from %s at t=%r", resume, f0.t)
    else:
        f0 = make_field()
        for p in snaps.glob("*.axfl") if snaps.exists() else ():
            p.unlink()

    recorders = {}
    if cfg.run.joint_barriers and shape != "sphere":
        dough = [b for b in barriers if b.kind == "doughnut"]
        recorders = ex.run_barrier_recorders(dough, torus, grid, n, sched)

    topo = TopologyObserver(stations, n)
    nest = NestingMonitor(1)
    monitors = {k: DisjointnessMonitor(r, f"doughnut{k}") for k, r in recorders.items()}
    observers = [topo, FieldDigest(), nest, *monitors.values()]
    meta = {"shape": shape, "stations": stations, "provenance": provenance(cfg)}
    try:
        rec = evolve(f0, sched, n, observers=observers, checkpoint_dir=snaps, meta=meta)
    except InstabilityError as err:
        write_json(out / "run.json", {"terminated": "unstable", "error": str(err), "t": err.t,
                                      "last_checkpoint": err.last_checkpoint, **meta})
        raise CommandError(f"numerical abort: {err} (last good checkpoint: {err.last_checkpoint})",
                           EXIT_NUMERICAL) from None

    rows = old_rows + [{"t": t, "step": s, **r} for t, s, r in zip(rec.times, rec.steps, rec.rows)]
    # one canonical form (sorted keys, null for nan) for fresh and resumed rows
    lines = [json.dumps(_json_safe(r), sort_keys=True) for r in rows]
    rows = [json.loads(line) for line in lines]
    (out / "run.jsonl").write_text("".join(line + "\n" for line in lines))
    full = RunRecord(grid, n, rec.dt, times=[r["t"] for r in rows],
                     steps=[r["step"] for r in rows],
                     rows=[{k: v for k, v in _restore_nan(r).items() if k not in ("t", "step")}
                           for r in rows])
    full.to_csv(out / "run.csv")
    write_json(out / "run.json", {
        "terminated": rec.terminated,
        "dt": rec.dt,
        "eps_reg": rec.meta["eps_reg"],
        "n": n,
        "grid": {"z_min": grid.z_min, "h": grid.h, "nz": grid.nz, "nr": grid.nr, "z_bc": grid.z_bc},
        "snapshots": sorted(p.name for p in snaps.glob("*.axfl")),
        "resumed_from": str(resume) if resume else None,
        **meta,
    })
    write_json(out / "nesting.json", {**nest.report().to_dict(), "provenance": provenance(cfg),
                                      "note": "pairs after the resume point only" if resume else ""})
    if monitors:
        write_json(out / "disjointness.json", {
            "barriers": {f"doughnut{k}": m.report().to_dict() for k, m in monitors.items()},
            "provenance": provenance(cfg),
        })
    vol = full.column("volume")
    print(f"simulate: {len(rows)} snapshots, terminated={rec.terminated}, t={rec.times[-1]:.6g}, "
          f"components {int(full.column('n_components')[0])}->{int(full.column('n_components')[-1])}, "
          f"volume {vol[0]:.6g}->{vol[-1]:.6g}")
    return EXIT_OK


def load_run(out: Path) -> RunRecord:
    meta = json.loads((out / "run.json").read_text())
    g = meta["grid"]
    grid = Grid2D(g["z_min"], g["h"], g["nz"], g["nr"], g["z_bc"])
    rows = [_restore_nan(r) for r in _rows_from_jsonl(out / "run.jsonl")]
    rec = RunRecord(grid, meta["n"], meta["dt"], meta=meta, terminated=meta["terminated"])
    for r in rows:
        rec.times.append(r.pop("t"))
        rec.steps.append(r.pop("step"))
        r["component_volumes"] = [v for v in r.get("component_volumes", [])]
        r["component_centroids"] = [math.nan if c is None else c for c in r.get("component_centroids", [])]
        rec.rows.append(r)
    return rec


def load_barriers(out: Path):
    p = out / "barriers.json"
    if not p.exists():
        return []
    return [sl.Barrier(**d) for d in json.loads(p.read_text())]


def cmd_detect(cfg: ExperimentConfig, out: Path) -> int:
    if not (out / "run.json").exists():
        raise CommandError(f"no run artifacts in {out}", EXIT_CONFIG)
    if json.loads((out / "run.json").read_text()).get("terminated") == "unstable":
        raise CommandError("run aborted on instability; nothing to detect", EXIT_NUMERICAL)
    rec = load_run(out)
    barriers = load_barriers(out)
    params_eps0 = json.loads((out / "torus.json").read_text()).get("eps0") if (out / "torus.json").exists() \
        else cfg.profile.eps0
    stations = rec.meta.get("stations")
    epochs = detect_epochs(rec, barriers, eps0=params_eps0, n=rec.n, stations=stations) if len(rec) >= 2 else []
    extra = {"provenance": provenance(cfg), "eps0": params_eps0, "n": rec.n}
    if rec.meta.get("shape") == "sphere":
        R = cfg.run.sphere_radius
        ext = [e for e in epochs if e.kind == "extinction"]
        exact = R * R / (2 * rec.n)
        extra["sphere_exact_extinction"] = exact
        if ext:
            extra["sphere_extinction_rel_err"] = abs(ext[0].t_hi - exact) / exact
    doc = write_epoch_report(epochs, out / "epochs.json", _json_safe(extra))
    s = doc["summary"]
    print(f"detect: {s['pinches']} pinch ({s['neck_pinches']} at neck stations) and {s['extinctions']} "
          f"extinction epochs; {s['pinches_within_144n_bound']} of {s['neck_pinches']} neck pinches satisfy "
          f"t_hi < eps0^2/(144 n 4^k); {s['pinches_within_barrier_bound']} of {s['neck_pinches']} precede "
          f"the doughnut barrier extinction")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, out: Path, smoke: bool, only=None) -> int:
    from . import acceptance

    results = acceptance.run_criteria(cfg, smoke=smoke, only=only, workdir=out, echo=print)
    write_json(out / "validation.json", {
        "smoke": smoke,
        "criteria": [r.to_dict() for r in results],
        "provenance": provenance(cfg),
    })
    failed = [r.cid for r in results if not r.passed]
    tag = " (smoke mode, relaxed tolerances)" if smoke else ""
    print(f"validate{tag}: {len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_VALIDATION if failed else EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override section.key (repeatable)")
    common.add_argument("--output", metavar="DIR", help="output directory (default: run.output)")
    common.add_argument("--smoke", action="store_true", help="reduced grid / relaxed suite")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pinchlab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"pinchlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build-profile", parents=[common], help="construct and certify the profile")
    sub.add_parser("find-torus", parents=[common], help="shoot for the shrinking doughnut")
    sp = sub.add_parser("simulate", parents=[common], help="evolve the configured body")
    sp.add_argument("--resume", metavar="SNAPSHOT", help="continue from a stored snapshot")
    sub.add_parser("detect", parents=[common], help="topology epochs of a finished run")
    vp = sub.add_parser("validate", parents=[common], help="acceptance suite")
    vp.add_argument("--only", metavar="IDS", help="comma separated criteria, e.g. C1,C6")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = output_dir(args, cfg)
        if args.command == "build-profile":
            return cmd_build_profile(cfg, out)
        if args.command == "find-torus":
            return cmd_find_torus(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.resume)
        if args.command == "detect":
            return cmd_detect(cfg, out)
        if args.command == "validate":
            only = [s.strip() for s in args.only.split(",")] if args.only else None
            return cmd_validate(cfg, out, args.smoke, only)
    except ConfigError as err:
        print(f"error: bad configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
