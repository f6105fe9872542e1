"""Explicit level-set mean curvature flow on the (z, r) half-plane."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from . import kernels
from .snapshot import read_snapshot, write_snapshot

__all__ = [
    "Grid2D",
    "Field",
    "Schedule",
    "RunRecord",
    "InstabilityError",
    "curvature_speed",
    "speed",
    "step",
    "reinitialize",
    "evolve",
    "enclosed_volume",
    "sphere_area_constant",
    "resume_field",
]


class InstabilityError(RuntimeError):
    """Raised when one explicit step moves ``u`` by more than ``10 dt / h``."""

    def __init__(self, msg, t=None, last_checkpoint=None):
        super().__init__(msg)
        self.t = t
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class Grid2D:
    """Uniform node grid: ``z_i = z_min + i h`` and ``r_j = j h``.

    ``z_bc`` selects the axial ghost rule: ``"extrapolate"`` (linear),
    ``"reflect"`` (mirror plane through the boundary node) or ``"periodic"``
    (period ``nz h``).
    """

    z_min: float
    h: float
    nz: int
    nr: int
    z_bc: str = "extrapolate"

    def __post_init__(self):
        if self.z_bc not in kernels.ZBC:
            raise ValueError(f"unknown z boundary rule {self.z_bc!r}")
        if self.nz < 3 or self.nr < 3:
            raise ValueError("grid needs at least 3 nodes per direction")

    @classmethod
    def covering(cls, z_lo: float, z_hi: float, r_hi: float, h: float, z_bc: str = "extrapolate"):
        """Smallest grid with nodes on integer multiples of ``h`` covering
        ``[z_lo, z_hi] x [0, r_hi]``."""
        i0 = math.floor(z_lo / h + 1e-9)
        i1 = math.ceil(z_hi / h - 1e-9)
        nr = math.ceil(r_hi / h - 1e-9) + 1
        return cls(i0 * h, h, i1 - i0 + 1, nr, z_bc)

    @property
    def z_max(self) -> float:
        return self.z_min + (self.nz - 1) * self.h

    @property
    def r_max(self) -> float:
        return (self.nr - 1) * self.h

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.h * np.arange(self.nz)

    @property
    def r(self) -> np.ndarray:
        return self.h * np.arange(self.nr)

    @property
    def zbc_code(self) -> int:
        return kernels.ZBC[self.z_bc]

    def mesh(self):
        return np.meshgrid(self.z, self.r, indexing="ij")

    def index_of(self, z: float) -> int:
        return int(round((z - self.z_min) / self.h))


@dataclass
class Field:
    """Level-set function on a grid, negative inside the body."""

    grid: Grid2D
    u: np.ndarray
    t: float = 0.0

    def copy(self) -> "Field":
        return Field(self.grid, self.u.copy(), self.t)

    @property
    def empty(self) -> bool:
        return not bool(np.any(self.u < 0.0))


@dataclass(frozen=True)
class Schedule:
    """Time stepping plan; ``dt = cfl h^2 / (4 + (n - 1))``."""

    t_end: float
    cfl: float = 0.4
    reinit_every: int = 10
    snapshot_every: int = 10
    eps_reg: float | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.cfl > 0.0:
            raise ValueError("cfl must be positive")
        if self.reinit_every < 0 or self.snapshot_every < 1 or self.checkpoint_every < 0:
            raise ValueError("bad cadence")

    def dt(self, h: float, n: int) -> float:
        return self.cfl * h * h / (4.0 + (n - 1))


def sphere_area_constant(n: int) -> float:
    """Area of the unit (n-1)-sphere, the ring factor of revolved volumes."""
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def default_eps_reg(u: np.ndarray) -> float:
    return 1e-8 * float(np.max(np.abs(u)))


def curvature_speed(field: Field, i: int, j: int, n: int, eps_reg: float | None = None) -> float:
    """``u_t`` at node ``(i, j)``."""
    eps = default_eps_reg(field.u) if eps_reg is None else eps_reg
    g = field.grid
    return float(kernels.cell_speed(field.u, i, j, g.h, n, eps * eps, g.zbc_code))


def speed(field: Field, n: int, eps_reg: float | None = None) -> np.ndarray:
    eps = default_eps_reg(field.u) if eps_reg is None else eps_reg
    g = field.grid
    return kernels.speed_field(field.u, g.h, n, eps * eps, g.zbc_code)


def step(field: Field, dt: float, n: int, eps_reg: float | None = None, out: np.ndarray | None = None) -> Field:
    """One explicit Euler step of the level-set equation.

    Raises
    ------
    InstabilityError
        If ``max |u' - u| > 10 dt / h``.
    """
    g = field.grid
    eps = default_eps_reg(field.u) if eps_reg is None else eps_reg
    if out is None:
        out = np.empty_like(field.u)
    rowmax = np.empty(g.nz)
    kernels.euler_step(field.u, dt, g.h, n, eps * eps, g.zbc_code, out, rowmax)
    jump = float(rowmax.max())
    if not jump <= 10.0 * dt / g.h:
        i = int(np.argmax(rowmax))
        raise InstabilityError(
            f"unstable update at t={field.t + dt:.6g}: max|du|={jump:.3g} > 10 dt/h "
            f"(row z={g.z[i]:.4g})",
            t=field.t + dt,
        )
    return Field(g, out, field.t + dt)


def reinitialize(field: Field, band_width: float = math.inf) -> Field:
    """Signed-distance reinitialization keeping the zero set."""
    g = field.grid
    u = kernels.reinit(field.u, g.h, g.zbc_code, float(band_width))
    return Field(g, u, field.t)


def enclosed_volume(field: Field, n: int) -> float:
    """Volume of the revolved inside set ``{u < 0}`` in R^(n+1)."""
    g = field.grid
    frac = kernels.fraction_inside(field.u, g.h, g.zbc_code)
    r = g.r
    lo = np.maximum(r - g.h / 2.0, 0.0)
    hi = r + g.h / 2.0
    ring = sphere_area_constant(n) * (hi**n - lo**n) / n  # per unit axial length
    return float(np.sum(frac.sum(axis=0) * ring) * g.h)


# ---------------------------------------------------------------------------
# runs


Observer = Callable[[Field], dict]


@dataclass
class RunRecord:
    """Observables at snapshot times plus references to stored snapshots."""

    grid: Grid2D
    n: int
    dt: float
    times: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    terminated: str = ""

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return np.array([row.get(name, np.nan) for row in self.rows], dtype=float)

    def snapshot(self, k: int) -> Field:
        s = self.snapshots[k]
        if isinstance(s, Field):
            return s
        return read_snapshot(s, grid=self.grid)

    def iter_snapshots(self):
        for k in range(len(self.snapshots)):
            yield self.snapshot(k)

    def scalar_columns(self) -> list[str]:
        cols = []
        for row in self.rows:
            for k, v in row.items():
                if k not in cols and isinstance(v, (int, float, np.integer, np.floating)):
                    cols.append(k)
        return cols

    def to_csv(self, path) -> None:
        cols = ["t"] + [c for c in self.scalar_columns() if c != "t"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for t, row in zip(self.times, self.rows):
                w.writerow([repr(float(t))] + [_fmt(row.get(c, math.nan)) for c in cols[1:]])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def evolve(
    field0: Field,
    schedule: Schedule,
    n: int,
    observers: Sequence[Observer] = (),
    checkpoint_dir=None,
    keep_snapshots: bool = False,
    stop_when_empty: bool = True,
    band_width: float = math.inf,
    meta: dict | None = None,
    stop: Callable[[dict], bool] | None = None,
) -> RunRecord:
    """Run the flow from ``field0`` up to ``schedule.t_end``.

    The global step counter is ``round(t / dt)`` so a run resumed from a
    checkpoint keeps the same reinitialization cadence and reproduces the
    uninterrupted run bit for bit.  Observers are called on every snapshot
    (every ``snapshot_every`` steps, the first and the last state) and their
    dicts are merged into ``RunRecord.rows``.  ``stop(row)`` returning true
    on a recorded row ends the run early (``terminated == "stopped"``).
    """
    g = field0.grid
    dt = schedule.dt(g.h, n)
    eps_reg = schedule.eps_reg if schedule.eps_reg is not None else default_eps_reg(field0.u)
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(g, n, dt, meta=dict(meta or {}))
    rec.meta.update({"eps_reg": eps_reg, "dt": dt, "n": n})

    k = int(round(field0.t / dt))
    cur = field0.copy()
    last_ckpt = None

    def record(fld: Field, step_index: int, final: bool = False):
        nonlocal last_ckpt
        row = {"t": fld.t}
        for obs in observers:
            row.update(obs(fld))
        rec.times.append(fld.t)
        rec.steps.append(step_index)
        rec.rows.append(row)
        every = schedule.snapshot_every * schedule.checkpoint_every
        if ckpt is not None and every and (step_index % every == 0 or final):
            path = ckpt / f"{step_index:06d}.axfl"
            write_snapshot(path, fld, eps_reg)
            last_ckpt = path
            rec.snapshots.append(path)
        elif keep_snapshots:
            rec.snapshots.append(fld.copy())

    record(cur, k)
    if stop_when_empty and cur.empty:
        rec.terminated = "empty"
        return rec

    buf = np.empty_like(cur.u)
    while cur.t + 0.5 * dt < schedule.t_end:
        try:
            nxt = step(cur, dt, n, eps_reg, out=buf)
        except InstabilityError as err:
            err.last_checkpoint = last_ckpt
            raise
        buf = cur.u
        cur = nxt
        k += 1
        if schedule.reinit_every and k % schedule.reinit_every == 0:
            cur = Field(g, kernels.reinit(cur.u, g.h, g.zbc_code, float(band_width)), cur.t)
            buf = np.empty_like(cur.u)
        done = cur.t + 0.5 * dt >= schedule.t_end
        empty = stop_when_empty and cur.empty
        if k % schedule.snapshot_every == 0 or done or empty:
            record(cur, k, final=done or empty)
        if empty:
            rec.terminated = "empty"
            return rec
        if stop is not None and rec.steps[-1] == k and stop(rec.rows[-1]):
            rec.terminated = "stopped"
            return rec
    rec.terminated = "t_end"
    return rec


def resume_field(path, grid: Grid2D) -> tuple[Field, float]:
    """Load a checkpoint onto ``grid``; returns the field and the stored
    regularization (pass it back through ``Schedule.eps_reg``)."""
    return read_snapshot(path, with_eps=True, grid=grid)


def with_time(field: Field, t: float) -> Field:
    return replace(field, t=t)
