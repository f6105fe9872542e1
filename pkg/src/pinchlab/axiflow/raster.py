"""Signed distance initialization and zero-set comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage.measure import find_contours, points_in_poly

from ..profilekit import Profile, profile_curve
from ..shrinkerlab import TorusProfile
from .solver import Field, Grid2D

__all__ = [
    "ShapeOutOfBoundsError",
    "EmptyZeroSetError",
    "Sphere",
    "ScaledTorus",
    "rasterize",
    "distance_to_polyline",
    "zero_set_segments",
    "hausdorff_zero_sets",
]

MARGIN_CELLS = 5


class ShapeOutOfBoundsError(ValueError):
    pass


class EmptyZeroSetError(ValueError):
    """One of the compared fields has no zero crossing (extinct body)."""


@dataclass(frozen=True)
class Sphere:
    center: float
    radius: float


@dataclass(frozen=True)
class ScaledTorus:
    """``scale * gamma`` translated to ``center`` on the axis."""

    torus: TorusProfile
    scale: float
    center: float


def distance_to_polyline(points: np.ndarray, poly: np.ndarray, k: int = 8) -> np.ndarray:
    """Unsigned distance from ``points`` (m x 2) to the open polyline ``poly``.

    The ``k`` nearest vertices are looked up with a KD-tree and the two
    segments adjacent to each are projected onto.
    """
    tree = cKDTree(poly)
    k = min(k, len(poly))
    _, idx = tree.query(points, k=k)
    idx = np.atleast_2d(idx.T).T if k == 1 else idx
    best = np.full(len(points), np.inf)
    last = len(poly) - 1
    for col in range(idx.shape[1]):
        v = idx[:, col]
        for a_idx, b_idx in ((np.maximum(v - 1, 0), v), (v, np.minimum(v + 1, last))):
            a = poly[a_idx]
            b = poly[b_idx]
            ab = b - a
            L2 = np.einsum("ij,ij->i", ab, ab)
            t = np.where(L2 > 0, np.einsum("ij,ij->i", points - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0)
            t = np.clip(t, 0.0, 1.0)
            proj = a + t[:, None] * ab
            d = np.hypot(points[:, 0] - proj[:, 0], points[:, 1] - proj[:, 1])
            best = np.minimum(best, d)
    return best


def _check_bounds(grid: Grid2D, z_lo: float, z_hi: float, r_hi: float):
    # reflecting and periodic ends are symmetry planes, a body may cross them
    m = MARGIN_CELLS * grid.h
    z_bad = grid.z_bc == "extrapolate" and (z_lo - m < grid.z_min - 1e-12 or z_hi + m > grid.z_max + 1e-12)
    if z_bad or r_hi + m > grid.r_max + 1e-12:
        raise ShapeOutOfBoundsError(
            f"shape [{z_lo:.4g}, {z_hi:.4g}] x [0, {r_hi:.4g}] needs a {MARGIN_CELLS}h margin "
            f"inside grid [{grid.z_min:.4g}, {grid.z_max:.4g}] x [0, {grid.r_max:.4g}]"
        )


def rasterize(shape, grid: Grid2D, t: float = 0.0, spacing: float | None = None) -> Field:
    """Signed distance (negative inside) to the revolved surface of ``shape``.

    ``shape`` is a :class:`Sphere`, a :class:`ScaledTorus` or a
    :class:`~pinchlab.profilekit.Profile` (graph revolved about the axis).
    Distances are measured in the (z, r) half-plane to the generating curve,
    which equals the distance to the revolved surface.
    """
    Z, R = grid.mesh()
    if isinstance(shape, Sphere):
        _check_bounds(grid, shape.center - shape.radius, shape.center + shape.radius, shape.radius)
        u = np.hypot(Z - shape.center, R) - shape.radius
        return Field(grid, u, t)

    pts = np.column_stack([Z.ravel(), R.ravel()])
    spacing = grid.h / 16.0 if spacing is None else spacing
    if isinstance(shape, ScaledTorus):
        poly = shape.torus.scaled(shape.scale, shape.center)
        poly = _densify(poly, spacing)
        _check_bounds(grid, poly[:, 0].min(), poly[:, 0].max(), poly[:, 1].max())
        d = distance_to_polyline(pts, poly)
        inside = points_in_poly(pts, poly)
    elif isinstance(shape, Profile):
        poly = profile_curve(shape, spacing)
        _check_bounds(grid, 0.0, 3.0, poly[:, 1].max())
        d = distance_to_polyline(pts, poly)
        F = shape(pts[:, 0])[0]
        inside = (pts[:, 0] > 0.0) & (pts[:, 0] < 3.0) & (pts[:, 1] < F)
    else:
        raise TypeError(f"cannot rasterize {type(shape).__name__}")
    u = np.where(inside, -d, d).reshape(Z.shape)
    return Field(grid, u, t)


def _densify(poly: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.hypot(*np.diff(poly, axis=0).T)
    parts = []
    for i, L in enumerate(seg):
        m = max(1, int(math.ceil(L / spacing)))
        s = np.arange(m) / m
        parts.append(poly[i] + s[:, None] * (poly[i + 1] - poly[i]))
    parts.append(poly[-1:])
    return np.vstack(parts)


def zero_set_segments(field: Field) -> list[np.ndarray]:
    """Marching-squares polylines of ``{u = 0}`` in (z, r) coordinates."""
    g = field.grid
    out = []
    for c in find_contours(field.u, 0.0):
        out.append(np.column_stack([g.z_min + g.h * c[:, 0], g.h * c[:, 1]]))
    return out


def _directed(points: np.ndarray, polys: list[np.ndarray]) -> float:
    best = np.full(len(points), np.inf)
    for poly in polys:
        if len(poly) == 1:
            best = np.minimum(best, np.hypot(*(points - poly[0]).T))
        else:
            best = np.minimum(best, distance_to_polyline(points, poly))
    return float(best.max())


def hausdorff_zero_sets(a: Field, b: Field) -> float:
    """Symmetric Hausdorff distance between the interpolated zero sets.

    Raises
    ------
    EmptyZeroSetError
        If either field has no zero crossing.
    """
    if a.grid != b.grid:
        raise ValueError("fields must share a grid")
    pa = zero_set_segments(a)
    pb = zero_set_segments(b)
    if not pa or not pb:
        raise EmptyZeroSetError("empty zero set")
    va = np.vstack(pa)
    vb = np.vstack(pb)
    return max(_directed(va, pb), _directed(vb, pa))
