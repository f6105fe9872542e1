"""Topology observers on level-set runs.

Connected components of the inside set, neck radii at fixed axial stations,
singular-epoch detection with barrier verdicts, and the monotone nesting and
disjointness monitors.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .axiflow import Field, Grid2D, RunRecord, enclosed_volume, kernels
from .axiflow.solver import sphere_area_constant
from .axiflow.raster import distance_to_polyline, zero_set_segments

__all__ = [
    "inside_components",
    "neck_radius",
    "component_summary",
    "component_spans",
    "TopologyObserver",
    "FieldDigest",
    "NestingMonitor",
    "EpochRecord",
    "NestingReport",
    "DisjointnessReport",
    "DisjointnessMonitor",
    "InsideMaskRecorder",
    "detect_epochs",
    "check_monotone_nesting",
    "check_disjointness",
    "nesting_violation",
    "write_epoch_report",
    "neck_key",
]

_FOUR = ndimage.generate_binary_structure(2, 1)


def inside_components(field: Field):
    """Label the inside set ``{u < 0}`` with 4-connectivity.

    Two extra merge rules: cells of the axis row that touch diagonally are
    joined (the revolved solid is connected through the axis there), and
    with a periodic axial rule the first and last rows are glued.

    Returns
    -------
    count : int
    labels : ndarray of int, 0 outside, 1..count inside
    """
    mask = field.u < 0.0
    labels, count = ndimage.label(mask, structure=_FOUR)
    if count < 2:
        return int(count), labels
    pairs = []
    # axis cell (i, 0) touching (i +- 1, 1)
    for lo, hi in ((labels[:-1, 0], labels[1:, 1]), (labels[1:, 0], labels[:-1, 1])):
        both = (lo > 0) & (hi > 0) & (lo != hi)
        pairs.extend(zip(lo[both], hi[both]))
    if field.grid.z_bc == "periodic":
        lo, hi = labels[0], labels[-1]
        both = (lo > 0) & (hi > 0) & (lo != hi)
        pairs.extend(zip(lo[both], hi[both]))
    if not pairs:
        return int(count), labels
    parent = np.arange(count + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(count + 1)])
    uniq, relabel = np.unique(roots, return_inverse=True)
    # root 0 stays background
    return int(len(uniq) - 1), relabel[labels]


def neck_radius(field: Field, z_station: float):
    """Smallest positive ``r`` with ``u(z_station, r) = 0``, or ``None``.

    ``u`` is interpolated linearly in ``z`` between the two nearest columns
    and the root is located by linear interpolation along the column.
    ``None`` means the column is entirely outside the body.
    """
    g = field.grid
    s = (z_station - g.z_min) / g.h
    if s < -1e-9 or s > g.nz - 1 + 1e-9:
        raise ValueError(f"station z={z_station} outside the grid")
    i0 = min(max(int(math.floor(s + 1e-9)), 0), g.nz - 1)
    w = s - i0
    if w <= 1e-9 or i0 == g.nz - 1:
        col = field.u[i0]
    else:
        col = (1.0 - w) * field.u[i0] + w * field.u[i0 + 1]
    if not np.any(col <= 0.0):
        return None
    if col[0] == 0.0:
        return 0.0
    sign = np.signbit(col)
    idx = np.flatnonzero(sign[1:] != sign[:-1])
    if idx.size == 0:
        # inside all the way to the outer boundary
        return float(g.r_max)
    j = int(idx[0])
    a, b = col[j], col[j + 1]
    return float(g.h * (j + a / (a - b)))


def neck_key(z: float) -> str:
    return f"neck_r[{z:.6g}]"


def component_summary(field: Field, n: int, labels=None, count=None):
    """Volume and axial centroid of every inside component."""
    if labels is None:
        count, labels = inside_components(field)
    g = field.grid
    if count == 0:
        return [], []
    frac = kernels.fraction_inside(field.u, g.h, g.zbc_code)
    r = g.r
    lo = np.maximum(r - g.h / 2.0, 0.0)
    hi = r + g.h / 2.0
    ring = sphere_area_constant(n) * (hi**n - lo**n) / n * g.h
    w = frac * ring[None, :]
    # fractional cells just outside a component are attributed to its
    # nearest labelled cell so that small components keep their volume
    _, (ii, jj) = ndimage.distance_transform_cdt(labels == 0, return_indices=True)
    owner = labels[ii, jj]
    vols = ndimage.sum_labels(w, owner, index=np.arange(1, count + 1))
    z = g.z[:, None] * np.ones((1, g.nr))
    zc = ndimage.sum_labels(w * z, owner, index=np.arange(1, count + 1))
    cent = np.where(vols > 0, zc / np.where(vols > 0, vols, 1.0), np.nan)
    return [float(v) for v in vols], [float(c) for c in cent]


def component_spans(field: Field, labels) -> list:
    """Axial extent ``[z_first, z_last]`` of the nodes of every component."""
    z = field.grid.z
    return [[float(z[sl[0].start]), float(z[sl[0].stop - 1])] for sl in ndimage.find_objects(labels)
            if sl is not None]


def _gaps(spans) -> list:
    """Midpoints of the axial gaps between components, left to right."""
    sp = sorted(spans)
    return [0.5 * (a[1] + b[0]) for a, b in zip(sp[:-1], sp[1:]) if b[0] > a[1]]


def _new_gaps(row_lo: dict, row_hi: dict, tol: float) -> list:
    old = _gaps(row_lo.get("component_zspans", []))
    return [g for g in _gaps(row_hi.get("component_zspans", [])) if all(abs(g - o) > tol for o in old)]


class TopologyObserver:
    """Observer returning the component count, volume and neck radii.

    Extinct necks are reported as ``nan`` so the CSV stays rectangular.
    """

    def __init__(self, stations=(), n: int = 2, components: bool = True):
        self.stations = list(stations)
        self.n = n
        self.components = components

    def __call__(self, field: Field) -> dict:
        count, labels = inside_components(field)
        row = {"n_components": count, "volume": enclosed_volume(field, self.n)}
        for z in self.stations:
            r = neck_radius(field, z)
            row[neck_key(z)] = math.nan if r is None else r
        if self.components:
            vols, cents = component_summary(field, self.n, labels, count)
            row["component_volumes"] = vols
            row["component_centroids"] = cents
            row["component_zspans"] = component_spans(field, labels)
        return row


class FieldDigest:
    """Observer storing a SHA-256 digest of the raw field bytes."""

    def __call__(self, field: Field) -> dict:
        return {"digest": hashlib.sha256(np.ascontiguousarray(field.u).tobytes()).hexdigest()}


def nesting_violation(u_prev: np.ndarray, u_next: np.ndarray, tolerance_cells: int = 1):
    """First cell where ``{u_next <= 0}`` leaves the dilated ``{u_prev < 0}``.

    The dilation uses a square of half-width ``tolerance_cells``.  Returns
    ``None`` when nested.
    """
    inside = u_prev < 0.0
    if tolerance_cells > 0:
        st = np.ones((2 * tolerance_cells + 1,) * 2, dtype=bool)
        inside = ndimage.binary_dilation(inside, structure=st)
    bad = (u_next <= 0.0) & ~inside
    if not bad.any():
        return None
    i, j = np.argwhere(bad)[0]
    return int(i), int(j)


class NestingMonitor:
    """Streaming nesting check usable as an observer.

    Keeps a copy of the previous snapshot only, so long runs need not store
    their snapshots.
    """

    def __init__(self, tolerance_cells: int = 1):
        self.tolerance_cells = tolerance_cells
        self.prev = None
        self.pairs = 0
        self.first_violation = None

    def __call__(self, field: Field) -> dict:
        if self.prev is not None and self.first_violation is None:
            cell = nesting_violation(self.prev, field.u, self.tolerance_cells)
            if cell is not None:
                self.first_violation = (field.t, cell)
        if self.prev is not None:
            self.pairs += 1
        self.prev = field.u.copy()
        return {}

    def report(self) -> "NestingReport":
        return NestingReport(self.first_violation is None, self.first_violation,
                             self.tolerance_cells, self.pairs)


@dataclass
class NestingReport:
    passed: bool
    first_violation: tuple | None
    tolerance_cells: int
    pairs_checked: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


@dataclass
class EpochRecord:
    t_lo: float
    t_hi: float
    kind: str  # "pinch" or "extinction"
    z_location: float
    k_guess: int | None = None
    bound_barrier: bool | None = None
    barrier_extinction: float | None = None
    bound_144n: bool | None = None
    bound_144n_value: float | None = None

    def __post_init__(self):
        if not self.t_lo < self.t_hi:
            raise ValueError("epoch bracket must satisfy t_lo < t_hi")
        if self.kind not in ("pinch", "extinction"):
            raise ValueError(f"unknown epoch kind {self.kind!r}")

    @property
    def bound_ok(self) -> bool | None:
        return self.bound_barrier

    def to_dict(self) -> dict:
        return asdict(self)


def level_of_station(z: float) -> int:
    """Dyadic level k of the neck station ``3 * 2^-(k+1)`` nearest to ``z``."""
    return max(0, int(round(math.log2(3.0 / (2.0 * z))))) if z > 0 else 0


def _match_vanished(cents_lo, cents_hi):
    """Centroids at the earlier time with no counterpart at the later time."""
    lo = [c for c in cents_lo if np.isfinite(c)]
    hi = [c for c in cents_hi if np.isfinite(c)]
    gone = []
    for c in sorted(lo, key=lambda c: min((abs(c - d) for d in hi), default=math.inf), reverse=True):
        if len(gone) >= len(lo) - len(hi):
            break
        gone.append(c)
    return gone


def detect_epochs(run: RunRecord, barriers=(), eps0: float | None = None, n: int | None = None,
                  stations=None) -> list[EpochRecord]:
    """Topology-change epochs between consecutive snapshots.

    A pinch (count increases) is placed at the neck station whose radius was
    finite at ``t_lo`` and extinct at ``t_hi``; an extinction (count drops)
    at the centroid of the vanished component.  Every epoch of level ``k`` is
    checked against the extinction time of the level-``k`` doughnut barrier
    and, when ``eps0`` is given, against ``eps0^2 / (144 n 4^k)``.
    """
    if len(run) < 2:
        raise ValueError("need at least two snapshots")
    n = run.n if n is None else n
    counts = run.column("n_components")
    if stations is None:
        stations = [float(c[len("neck_r["):-1]) for c in run.scalar_columns() if c.startswith("neck_r[")]
    dough = {b.level: b for b in barriers if b.kind == "doughnut"}
    h = run.grid.h
    near = 5.0 * h  # a pinch belongs to a neck station within this distance
    out = []
    for a in range(len(run) - 1):
        b = a + 1
        dc = int(counts[b] - counts[a])
        if dc == 0:
            continue
        t_lo, t_hi = run.times[a], run.times[b]
        row_lo, row_hi = run.rows[a], run.rows[b]
        if dc > 0:
            closed = [z for z in stations
                      if np.isfinite(row_lo.get(neck_key(z), math.nan))
                      and not np.isfinite(row_hi.get(neck_key(z), math.nan))]
            # splits away from every closed station (e.g. a thin cylinder
            # breaking up) are placed at the new gap between components
            locs = list(closed)
            for gz in _new_gaps(row_lo, row_hi, 2.0 * h):
                if all(abs(gz - z) > near for z in closed):
                    locs.append(gz)
            if not locs:
                radii = [(row_lo.get(neck_key(z), math.nan), z) for z in stations]
                radii = [p for p in radii if np.isfinite(p[0])]
                locs = [min(radii)[1]] if radii else [math.nan]
            locs = sorted(locs, reverse=True)
            locs = (locs + [locs[0]] * dc)[:dc]
            kinds = ["pinch"] * dc
        else:
            locs = _match_vanished(row_lo.get("component_centroids", []), row_hi.get("component_centroids", []))
            locs = (locs + [math.nan] * -dc)[:-dc]
            kinds = ["extinction"] * -dc
        for z, kind in zip(locs, kinds):
            k = None
            if kind == "pinch" and np.isfinite(z) and any(abs(z - st) <= near for st in stations):
                k = level_of_station(z)
            rec = EpochRecord(t_lo, t_hi, kind, float(z), k)
            if k is not None:
                if k in dough:
                    rec.barrier_extinction = dough[k].extinction
                    rec.bound_barrier = bool(t_hi < dough[k].extinction)
                if eps0 is not None:
                    rec.bound_144n_value = eps0**2 / (144.0 * n * 4.0**k)
                    rec.bound_144n = bool(t_hi < rec.bound_144n_value)
            out.append(rec)
    return out


def pinch_times(epochs) -> dict:
    """Upper bracket time of the first pinch at each level."""
    out = {}
    for e in epochs:
        if e.kind == "pinch" and e.k_guess is not None and e.k_guess not in out:
            out[e.k_guess] = e.t_hi
    return dict(sorted(out.items()))


def write_epoch_report(epochs, path, extra: dict | None = None) -> dict:
    """JSON report: one entry per epoch plus a summary of the bound verdicts."""
    items = []
    for e in epochs:
        items.append({
            "k_guess": e.k_guess,
            "t_lo": e.t_lo,
            "t_hi": e.t_hi,
            "kind": e.kind,
            "z_location": e.z_location,
            "bound_144n": e.bound_144n,
            "bound_barrier": e.bound_barrier,
            "barrier_extinction": e.barrier_extinction,
            "bound_144n_value": e.bound_144n_value,
        })
    pinches = [e for e in epochs if e.kind == "pinch"]
    summary = {
        "pinches": len(pinches),
        "neck_pinches": sum(e.k_guess is not None for e in pinches),
        "extinctions": len(epochs) - len(pinches),
        "pinches_within_144n_bound": sum(bool(e.bound_144n) for e in pinches),
        "pinches_within_barrier_bound": sum(bool(e.bound_barrier) for e in pinches),
    }
    doc = {"epochs": items, "summary": summary}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def check_monotone_nesting(run: RunRecord, tolerance_cells: int = 1) -> NestingReport:
    """Check ``{u(t2) <= 0}`` inside the dilated ``{u(t1) < 0}`` for every
    consecutive pair of stored snapshots."""
    prev = None
    pairs = 0
    for fld in run.iter_snapshots():
        if fld.grid != run.grid:
            raise ValueError("snapshots must share the run grid")
        if prev is not None:
            pairs += 1
            cell = nesting_violation(prev.u, fld.u, tolerance_cells)
            if cell is not None:
                return NestingReport(False, (fld.t, cell), tolerance_cells, pairs)
        prev = fld
    return NestingReport(True, None, tolerance_cells, pairs)


@dataclass
class DisjointnessReport:
    passed: bool
    first_overlap: tuple | None
    times: list = field(default_factory=list)
    separation: list = field(default_factory=list)
    min_separation: float = math.inf
    checked_until: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def zero_set_separation(a: Field, b: Field) -> float:
    """Distance between the interpolated zero sets (inf if one is empty)."""
    return _polyline_gap(zero_set_segments(a), zero_set_segments(b))


def _overlap(ga: Grid2D, gb: Grid2D):
    """Index windows of the common nodes of two grids on one lattice."""
    if ga == gb:
        full = (slice(None), slice(None))
        return full, full
    if ga.h != gb.h or ga.z_bc != gb.z_bc:
        raise ValueError("runs must share a grid (or at least spacing and boundary rule)")
    shift = (gb.z_min - ga.z_min) / ga.h
    di = int(round(shift))
    if abs(shift - di) > 1e-6:
        raise ValueError("grids are not node aligned")
    ia0, ib0 = max(di, 0), max(-di, 0)
    m = min(ga.nz - ia0, gb.nz - ib0)
    nr = min(ga.nr, gb.nr)
    if m <= 0:
        return None
    return (slice(ia0, ia0 + m), slice(0, nr)), (slice(ib0, ib0 + m), slice(0, nr))


def check_disjointness(run_a: RunRecord, run_b: RunRecord) -> DisjointnessReport:
    """Verify that the closed inside sets never share a node.

    The runs normally share a grid.  Grids with the same spacing whose nodes
    coincide are also accepted: each body lies inside its own grid, so a
    common node can only occur in the overlap window, which is what gets
    compared.  Checking stops once either body is empty.  Raises
    ``ValueError`` if the runs are not comparable or already overlap at the
    first snapshot.
    """
    win = _overlap(run_a.grid, run_b.grid)
    na, nb = len(run_a.snapshots), len(run_b.snapshots)
    if na == 0 or nb == 0:
        raise ValueError("runs carry no snapshots")
    rep = DisjointnessReport(True, None)
    for k in range(min(na, nb)):
        fa, fb = run_a.snapshot(k), run_b.snapshot(k)
        if abs(fa.t - fb.t) > 1e-12 * max(1.0, abs(fa.t)):
            raise ValueError("runs must share snapshot times")
        if win is not None:
            both = (fa.u[win[0]] <= 0.0) & (fb.u[win[1]] <= 0.0)
            if both.any():
                i, j = (int(c) for c in np.argwhere(both)[0])
                cell = (i + (win[0][0].start or 0), j)
                if k == 0:
                    raise ValueError("initial sets are not disjoint")
                rep.passed = False
                rep.first_overlap = (fa.t, cell)
                break
        sep = zero_set_separation(fa, fb)
        rep.times.append(fa.t)
        rep.separation.append(sep)
        rep.checked_until = fa.t
        if fa.empty or fb.empty:
            break
    finite = [s for s in rep.separation if np.isfinite(s)]
    rep.min_separation = min(finite) if finite else math.inf
    return rep


class InsideMaskRecorder:
    """Observer keeping the closed inside set of a run, cut to the window it
    shares with ``target`` (bit packed), plus its zero-set polylines.

    Used to compare a barrier evolved on its own grid with a body evolved on
    ``target`` without storing full snapshots.
    """

    def __init__(self, target: Grid2D, grid: Grid2D):
        self.target = target
        self.grid = grid
        self.window = _overlap(target, grid)
        self.masks = {}
        self.segments = {}
        self.empty_at = None

    def __call__(self, fld: Field) -> dict:
        if self.window is not None:
            m = fld.u[self.window[1]] <= 0.0
            self.masks[fld.t] = (np.packbits(m, axis=None), m.shape)
        self.segments[fld.t] = zero_set_segments(fld)
        if self.empty_at is None and fld.empty:
            self.empty_at = fld.t
        return {}

    def mask(self, t: float):
        packed, shape = self.masks[t]
        return np.unpackbits(packed, count=shape[0] * shape[1]).reshape(shape).astype(bool)


def _polyline_gap(pa, pb) -> float:
    if not pa or not pb:
        return math.inf
    va = np.vstack(pa)
    return float(min(distance_to_polyline(va, p).min() if len(p) > 1
                     else np.hypot(*(va - p[0]).T).min() for p in pb))


class DisjointnessMonitor:
    """Streaming counterpart of :func:`check_disjointness`.

    Attach to the run on the ``target`` grid of ``recorder`` (which must have
    been filled first, with the same time step and snapshot cadence).  Times
    missing from the recorder are skipped.  Checking stops after either body
    is empty.
    """

    def __init__(self, recorder: InsideMaskRecorder, label: str = "barrier"):
        self.rec = recorder
        self.label = label
        self.report_ = DisjointnessReport(True, None)
        self.initial_overlap = False
        self._done = False
        self._first = True

    def __call__(self, fld: Field) -> dict:
        if self._done or fld.t not in self.rec.segments:
            return {}
        first, self._first = self._first, False
        rep = self.report_
        if self.rec.window is not None and fld.t in self.rec.masks:
            both = self.rec.mask(fld.t) & (fld.u[self.rec.window[0]] <= 0.0)
            if both.any():
                i, j = (int(c) for c in np.argwhere(both)[0])
                cell = (i + (self.rec.window[0][0].start or 0), j)
                self.initial_overlap = first
                rep.passed = False
                rep.first_overlap = (fld.t, cell)
                self._done = True
                return {}
        sep = _polyline_gap(zero_set_segments(fld), self.rec.segments[fld.t])
        rep.times.append(fld.t)
        rep.separation.append(sep)
        rep.checked_until = fld.t
        if fld.empty or (self.rec.empty_at is not None and fld.t >= self.rec.empty_at):
            self._done = True
        return {f"sep[{self.label}]": sep}

    def report(self) -> DisjointnessReport:
        rep = self.report_
        finite = [s for s in rep.separation if np.isfinite(s)]
        rep.min_separation = min(finite) if finite else math.inf
        return rep
