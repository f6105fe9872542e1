"""Reference experiments shared by the command line, the acceptance gate and
the demo scripts.

Every function returns plain data (dataclasses of floats and lists) so the
callers decide what to print or persist.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import profilekit as pk
from . import shrinkerlab as sl
from .axiflow import (
    EmptyZeroSetError,
    Field,
    Grid2D,
    ScaledTorus,
    Schedule,
    Sphere,
    evolve,
    hausdorff_zero_sets,
    rasterize,
)
from .config import ExperimentConfig
from .epochscope import (
    DisjointnessMonitor,
    FieldDigest,
    InsideMaskRecorder,
    NestingMonitor,
    TopologyObserver,
    check_disjointness,
    detect_epochs,
    neck_key,
    neck_radius,
    pinch_times,
)

__all__ = [
    "SphereResult",
    "run_sphere",
    "convergence_order",
    "CylinderResult",
    "run_cylinder",
    "TorusTrackResult",
    "run_torus_tracking",
    "construction_params",
    "build_profile",
    "chain_profile",
    "config_grid",
    "chain_grid",
    "ChainResult",
    "run_chain",
    "barrier_grid",
    "run_barrier_recorders",
    "sphere_pair_disjointness",
]


# ---------------------------------------------------------------------------
# exact self-shrinkers


def sphere_grid(h: float, R0: float = 1.0) -> Grid2D:
    # quarter domain, the plane z = 0 is a mirror
    return Grid2D.covering(0.0, R0 + 6 * h, R0 + 6 * h, h, z_bc="reflect")


@dataclass
class SphereResult:
    h: float
    R0: float
    n: int
    t_ext: float  # midpoint of the last step
    t_lo: float
    t_hi: float
    exact: float
    radius_rel_err: float  # max over snapshots with exact radius >= r_stop
    times: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def rel_err(self) -> float:
        return abs(self.t_ext - self.exact) / self.exact


def run_sphere(h: float, R0: float = 1.0, n: int = 2, reinit_every: int = 10,
               snapshot_every: int = 10, r_stop: float = 0.2, cfl: float = 0.4) -> SphereResult:
    """Shrink a round sphere to extinction.

    The run stops on the first empty step, so the extinction bracket is one
    time step wide regardless of the snapshot cadence.
    """
    g = sphere_grid(h, R0)
    exact = R0 * R0 / (2 * n)
    sched = Schedule(t_end=1.2 * exact, cfl=cfl, reinit_every=reinit_every, snapshot_every=snapshot_every)
    obs = TopologyObserver([0.0], n, components=True)
    t0 = time.perf_counter()
    rec = evolve(rasterize(Sphere(0.0, R0), g), sched, n, observers=[obs])
    runtime = time.perf_counter() - t0
    if rec.terminated != "empty":
        raise RuntimeError("sphere did not vanish before 1.2 R^2/(2n)")
    t_hi = rec.times[-1]
    t_lo = t_hi - rec.dt
    radii = rec.column(neck_key(0.0))
    times = np.array(rec.times)
    exact_r = np.zeros_like(times)
    early = times <= exact
    exact_r[early] = sl.sphere_radius(R0, n, times[early])
    keep = np.isfinite(radii) & (exact_r >= r_stop)
    err = float(np.max(np.abs(radii[keep] - exact_r[keep]) / exact_r[keep])) if keep.any() else math.nan
    return SphereResult(h, R0, n, 0.5 * (t_lo + t_hi), t_lo, t_hi, exact, err,
                        list(times), list(radii), detect_epochs(rec, n=n), runtime)


def convergence_order(hs, errors) -> tuple[float, list]:
    """Least-squares slope of ``log e`` against ``log h`` and the pairwise
    orders between successive resolutions."""
    lh = np.log(np.asarray(hs, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    slope = float(np.polyfit(lh, le, 1)[0])
    pair = [float((le[i] - le[i + 1]) / (lh[i] - lh[i + 1])) for i in range(len(hs) - 1)]
    return slope, pair


@dataclass
class CylinderResult:
    h: float
    R0: float
    n: int
    max_rel_err: float
    times: list
    radii: list
    runtime: float


def run_cylinder(h: float, R0: float = 1.0, n: int = 2, r_stop: float = 0.2, nz: int = 8,
                 snapshot_every: int = 50) -> CylinderResult:
    """Round cylinder on a short periodic column, compared with
    ``r(t)^2 = R0^2 - 2 (n - 1) t`` until ``r = r_stop``."""
    nr = math.ceil((R0 + 6 * h) / h) + 1
    g = Grid2D(0.0, h, nz, nr, "periodic")
    _, R = g.mesh()
    fld = Field(g, R - R0, 0.0)
    t_stop = (R0 * R0 - r_stop * r_stop) / (2.0 * (n - 1))
    sched = Schedule(t_end=t_stop, snapshot_every=snapshot_every)
    t0 = time.perf_counter()
    rec = evolve(fld, sched, n, observers=[lambda f: {"r": neck_radius(f, 0.0)}])
    runtime = time.perf_counter() - t0
    times = np.array(rec.times)
    r = np.array([np.nan if v is None else v for v in rec.column("r")])
    exact = sl.cylinder_radius(R0, n, times)
    err = float(np.max(np.abs(r - exact) / exact))
    return CylinderResult(h, R0, n, err, list(times), list(r), runtime)


@dataclass
class TorusTrackResult:
    h: float
    lam: float
    times: list
    hausdorff: list
    runtime: float

    @property
    def max_over_h(self) -> float:
        return max(self.hausdorff) / self.h


def run_torus_tracking(torus: sl.TorusProfile, h: float, lam: float = 1.0, frac: float = 0.8,
                       num_checks: int = 40) -> TorusTrackResult:
    """Evolve ``lam * gamma`` and measure the Hausdorff distance to the exact
    self-similar solution ``sqrt(1 - t / (lam^2 T)) lam gamma``."""
    n = torus.n
    T = lam * lam * torus.extinction_time
    g = Grid2D.covering(0.0, lam * torus.thickness / 2 + 8 * h, lam * torus.outer_radius + 8 * h, h,
                        z_bc="reflect")
    sched = Schedule(t_end=frac * T)
    every = max(1, int(round(frac * T / num_checks / sched.dt(h, n))))
    sched = Schedule(t_end=frac * T, snapshot_every=every)
    times, dist = [], []

    def track(f):
        s = math.sqrt(max(1.0 - f.t / T, 0.0))
        ref = rasterize(ScaledTorus(torus, lam * s, 0.0), g)
        try:
            d = hausdorff_zero_sets(f, ref)
        except EmptyZeroSetError:
            d = math.inf
        times.append(f.t)
        dist.append(d)
        return {"hausdorff": d}

    t0 = time.perf_counter()
    evolve(rasterize(ScaledTorus(torus, lam, 0.0), g), sched, n, observers=[track])
    return TorusTrackResult(h, lam, times, dist, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# construction and the bead chain


def construction_params(cfg: ExperimentConfig, torus: sl.TorusProfile | None = None,
                        M: float | None = None) -> pk.ConstructionParams:
    p = cfg.profile
    if M is None:
        M = pk.sup_abs_phi0_second(pk.BumpSpec())
    if p.regime == "simulation":
        return pk.select_params(M, p.n, "simulation", p.safety, eps0=p.eps0, delta0=p.delta0)
    return pk.select_params(M, p.n, "certified", p.safety, torus=torus, margin=p.margin)


def build_profile(cfg: ExperimentConfig, torus=None):
    """Parameters, full profile and its mean-convexity certificate."""
    params = construction_params(cfg, torus)
    prof = pk.Profile.full(params)
    cert = pk.certify_mean_convex(prof, (cfg.run.certify_lo, cfg.run.certify_hi))
    return params, prof, cert


def chain_profile(params: pk.ConstructionParams, beads_k_max: int, cap=None) -> pk.Profile:
    """Truncated chain with beads ``k = 0..beads_k_max`` (necks at
    ``3 * 2^-(k+1)``)."""
    return pk.Profile.truncated(params, beads_k_max + 1, cap)


def config_grid(cfg: ExperimentConfig) -> Grid2D:
    g = cfg.grid
    h = g.r_max / (g.nr - 1)
    return Grid2D(g.z_min, h, g.nz, g.nr, g.z_bc)


def chain_grid(h: float, eps0: float) -> Grid2D:
    return Grid2D.covering(-6 * h, 3.0 + 6 * h, eps0 + 8 * h, h)


def schedule_of(cfg: ExperimentConfig, t_end: float | None = None) -> Schedule:
    s = cfg.schedule
    return Schedule(t_end=s.t_end if t_end is None else t_end, cfl=s.cfl, reinit_every=s.reinit_every,
                    snapshot_every=s.snapshot_every, eps_reg=s.eps_reg, checkpoint_every=s.checkpoint_every)


def barrier_grid(barrier: sl.Barrier, torus: sl.TorusProfile, h: float) -> Grid2D:
    s = barrier.scale
    half = s * torus.thickness / 2.0
    return Grid2D.covering(barrier.center_axial - half - 8 * h, barrier.center_axial + half + 8 * h,
                           s * torus.outer_radius + 8 * h, h)


def run_barrier_recorders(barriers, torus: sl.TorusProfile, target: Grid2D, n: int,
                          schedule: Schedule) -> dict:
    """Evolve every doughnut barrier on its own grid and record its inside
    set on the window shared with ``target``.  Returns ``{level: recorder}``."""
    out = {}
    for b in barriers:
        if b.kind != "doughnut":
            continue
        g = barrier_grid(b, torus, target.h)
        rec = InsideMaskRecorder(target, g)
        sched = Schedule(t_end=min(schedule.t_end, 1.05 * b.extinction), cfl=schedule.cfl,
                         reinit_every=schedule.reinit_every, snapshot_every=schedule.snapshot_every)
        evolve(rasterize(ScaledTorus(torus, b.scale, b.center_axial), g), sched, n, observers=[rec])
        out[b.level] = rec
    return out


@dataclass
class ChainResult:
    record: object
    epochs: list
    nesting: object
    disjointness: dict
    volume_decreasing: bool
    runtime: float

    @property
    def pinches(self) -> dict:
        return pinch_times(self.epochs)


def run_chain(profile: pk.Profile, grid: Grid2D, schedule: Schedule, n: int, barriers=(),
              recorders=None, checkpoint_dir=None, keep_snapshots=False, stop=None,
              field0: Field | None = None, extra_observers=()) -> ChainResult:
    """Rasterize and evolve a bead chain with topology, nesting, digest and
    (optional) barrier-disjointness observers."""
    topo = TopologyObserver(profile.neck_stations(), n)
    nest = NestingMonitor(1)
    monitors = {k: DisjointnessMonitor(r, f"doughnut{k}") for k, r in (recorders or {}).items()}
    observers = [topo, FieldDigest(), nest, *monitors.values(), *extra_observers]
    f0 = rasterize(profile, grid) if field0 is None else field0
    t0 = time.perf_counter()
    rec = evolve(f0, schedule, n, observers=observers, checkpoint_dir=checkpoint_dir,
                 keep_snapshots=keep_snapshots, stop=stop)
    runtime = time.perf_counter() - t0
    epochs = detect_epochs(rec, barriers, eps0=profile.params.eps0, n=n) if len(rec) >= 2 else []
    vol = rec.column("volume")
    live = vol > 0
    dec = bool(np.all(np.diff(vol[live]) < 0)) if live.sum() > 1 else True
    return ChainResult(rec, epochs, nest.report(), {k: m.report() for k, m in monitors.items()},
                       dec, runtime)


def first_pinch_stop(stations):
    """Stop rule: the first neck station has closed."""
    key = neck_key(max(stations))

    def stop(row):
        return not np.isfinite(row.get(key, math.nan))

    return stop


# ---------------------------------------------------------------------------
# avoidance with two spheres


def sphere_pair_disjointness(h: float = 1 / 64, radii=(0.5, 0.3), gap: float = 0.2, n: int = 2):
    """Two disjoint spheres on the axis, evolved separately on one grid."""
    ra, rb = radii
    cb = ra + gap + rb
    g = Grid2D.covering(-ra - 6 * h, cb + rb + 6 * h, max(ra, rb) + 6 * h, h)
    t_end = min(ra, rb) ** 2 / (2 * n) * 1.05
    sched = Schedule(t_end=t_end, snapshot_every=20)
    runs = [evolve(rasterize(Sphere(c, r), g), sched, n, keep_snapshots=True, stop_when_empty=False)
            for c, r in ((0.0, ra), (cb, rb))]
    return check_disjointness(*runs)
