"""Numba kernels for the axisymmetric level-set equation.

Grid layout: ``u[i, j]`` with ``i`` the axial index and ``j`` the radial
index, ``j = 0`` on the axis.  Ghost values:

* ``j = -1``   : ``u[i, 1]`` (even reflection across the axis)
* ``j = nr``   : linear extrapolation
* ``i`` out of range: per ``zbc`` (0 extrapolate, 1 reflect, 2 periodic)
"""

import math
import os

import numpy as np
from numba import config, njit, prange

# row updates are independent, so any layer gives identical results; prefer
# OpenMP to avoid probing an outdated TBB
if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

ZBC = {"extrapolate": 0, "reflect": 1, "periodic": 2}
BAND_CELLS = 4


@njit(cache=True, inline="always")
def _vz(u, i, j, zbc):
    nz = u.shape[0]
    if i >= 0 and i < nz:
        return u[i, j]
    if zbc == 2:
        return u[i % nz, j]
    if zbc == 1:
        if i < 0:
            return u[-i, j]
        return u[2 * (nz - 1) - i, j]
    if i < 0:
        return 2.0 * u[0, j] - u[1, j]
    return 2.0 * u[nz - 1, j] - u[nz - 2, j]


@njit(cache=True, inline="always")
def _v(u, i, j, zbc):
    nr = u.shape[1]
    if j < 0:
        j = -j
    if j >= nr:
        return 2.0 * _vz(u, i, nr - 1, zbc) - _vz(u, i, nr - 2, zbc)
    return _vz(u, i, j, zbc)


@njit(cache=True, inline="always")
def _speed(c, zm, zp, rm, rp, mm, mp, pm, pp, r, h, n, eps2):
    inv2h = 0.5 / h
    invh2 = 1.0 / (h * h)
    uz = (zp - zm) * inv2h
    ur = (rp - rm) * inv2h
    uzz = (zp - 2.0 * c + zm) * invh2
    urr = (rp - 2.0 * c + rm) * invh2
    uzr = (pp - pm - mp + mm) * (0.25 * invh2)
    g2 = uz * uz + ur * ur
    s = (uzz * ur * ur - 2.0 * uz * ur * uzr + urr * uz * uz) / (g2 + eps2)
    if r > 0.0:
        s += (n - 1) * ur / r
    else:
        s += (n - 1) * urr
    return s


@njit(cache=True)
def cell_speed(u, i, j, h, n, eps2, zbc):
    return _speed(
        _v(u, i, j, zbc),
        _v(u, i - 1, j, zbc), _v(u, i + 1, j, zbc),
        _v(u, i, j - 1, zbc), _v(u, i, j + 1, zbc),
        _v(u, i - 1, j - 1, zbc), _v(u, i - 1, j + 1, zbc),
        _v(u, i + 1, j - 1, zbc), _v(u, i + 1, j + 1, zbc),
        j * h, h, n, eps2,
    )


@njit(cache=True, parallel=True)
def speed_field(u, h, n, eps2, zbc):
    nz, nr = u.shape
    out = np.empty_like(u)
    for i in prange(nz):
        for j in range(nr):
            out[i, j] = cell_speed(u, i, j, h, n, eps2, zbc)
    return out


@njit(cache=True, parallel=True)
def euler_step(u, dt, h, n, eps2, zbc, out, rowmax):
    """``out = u + dt * speed``; ``rowmax[i]`` receives max |out - u| of row i.

    Every cell reads only ``u`` and writes only its own ``out`` entry, so the
    result does not depend on how rows are split between threads.
    """
    nz, nr = u.shape
    for i in prange(nz):
        m = 0.0
        inner_i = i >= 1 and i <= nz - 2
        for j in range(nr):
            if inner_i and j >= 1 and j <= nr - 2:
                s = _speed(
                    u[i, j], u[i - 1, j], u[i + 1, j], u[i, j - 1], u[i, j + 1],
                    u[i - 1, j - 1], u[i - 1, j + 1], u[i + 1, j - 1], u[i + 1, j + 1],
                    j * h, h, n, eps2,
                )
            else:
                s = cell_speed(u, i, j, h, n, eps2, zbc)
            d = dt * s
            out[i, j] = u[i, j] + d
            if abs(d) > m:
                m = abs(d)
        rowmax[i] = m
    return out


# ---------------------------------------------------------------------------
# reinitialization


@njit(cache=True, inline="always")
def _nbr_z(i, nz, zbc, side):
    """Index of the axial neighbour, -1 when it does not exist."""
    k = i + side
    if k >= 0 and k < nz:
        return k
    if zbc == 2:
        return k % nz
    if zbc == 1:
        return i - side
    return -1


@njit(cache=True)
def _interface_distance(u, i, j, h, zbc):
    """Distance estimate at a node next to a sign change, or -1."""
    nz, nr = u.shape
    c = u[i, j]
    if c == 0.0:
        return 0.0
    dz = np.inf
    dr = np.inf
    for side in (-1, 1):
        k = _nbr_z(i, nz, zbc, side)
        if k >= 0:
            v = u[k, j]
            if c * v <= 0.0:
                dz = min(dz, h * abs(c) / (abs(c) + abs(v)))
        jj = j + side
        if jj < 0:
            jj = 1
        if jj < nr:
            v = u[i, jj]
            if c * v <= 0.0:
                dr = min(dr, h * abs(c) / (abs(c) + abs(v)))
    if dz == np.inf and dr == np.inf:
        return -1.0
    if dz == np.inf:
        d_axis = dr
    elif dr == np.inf:
        d_axis = dz
    else:
        d_axis = 1.0 / math.sqrt(1.0 / (dz * dz) + 1.0 / (dr * dr))
    # gradient estimate from central differences (ghosts included)
    gz = (_v(u, i + 1, j, zbc) - _v(u, i - 1, j, zbc)) / (2.0 * h)
    gr = (_v(u, i, j + 1, zbc) - _v(u, i, j - 1, zbc)) / (2.0 * h)
    g = math.sqrt(gz * gz + gr * gr)
    if g >= 0.5:
        return min(abs(c) / g, min(dz, dr))
    return d_axis


@njit(cache=True, inline="always")
def _sweep_update(phi, fixed, i, j, h, zbc):
    nz, nr = phi.shape
    if fixed[i, j]:
        return False
    a = np.inf
    for side in (-1, 1):
        k = _nbr_z(i, nz, zbc, side)
        if k >= 0 and phi[k, j] < a:
            a = phi[k, j]
    b = np.inf
    jm = j - 1 if j > 0 else 1
    if jm < nr and phi[i, jm] < b:
        b = phi[i, jm]
    if j + 1 < nr and phi[i, j + 1] < b:
        b = phi[i, j + 1]
    lo = min(a, b)
    if lo == np.inf:
        return False
    if abs(a - b) >= h:
        d = lo + h
    else:
        d = 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) * (a - b)))
    if d < phi[i, j]:
        phi[i, j] = d
        return True
    return False


@njit(cache=True, inline="always")
def _hermite_row(f0, f1, d0, d1, out):
    # coefficients of the cubic with values f0, f1 and slopes d0, d1 on [0, 1]
    out[0] = f0
    out[1] = d0
    out[2] = -3.0 * f0 + 3.0 * f1 - 2.0 * d0 - d1
    out[3] = 2.0 * f0 - 2.0 * f1 + d0 + d1


@njit(cache=True)
def _bicubic(u, i, j, zbc, A):
    """Hermite bicubic coefficients ``A[a, b]`` (of ``x^a y^b``) on the cell
    with lower corner (i, j), index units, derivatives from central
    differences."""
    F = np.empty((4, 4))
    for a in range(2):
        for b in range(2):
            ii = i + a
            jj = j + b
            F[a, b] = _v(u, ii, jj, zbc)
            F[a, 2 + b] = 0.5 * (_v(u, ii, jj + 1, zbc) - _v(u, ii, jj - 1, zbc))
            F[2 + a, b] = 0.5 * (_v(u, ii + 1, jj, zbc) - _v(u, ii - 1, jj, zbc))
            F[2 + a, 2 + b] = 0.25 * (_v(u, ii + 1, jj + 1, zbc) - _v(u, ii + 1, jj - 1, zbc)
                                      - _v(u, ii - 1, jj + 1, zbc) + _v(u, ii - 1, jj - 1, zbc))
    # Hermite along x for each column of F, then along y
    T = np.empty((4, 4))
    col = np.empty(4)
    for c in range(4):
        _hermite_row(F[0, c], F[1, c], F[2, c], F[3, c], col)
        for r in range(4):
            T[r, c] = col[r]
    for r in range(4):
        _hermite_row(T[r, 0], T[r, 1], T[r, 2], T[r, 3], col)
        for c in range(4):
            A[r, c] = col[c]


@njit(cache=True, inline="always")
def _bicubic_eval(A, x, y):
    p = 0.0
    gx = 0.0
    gy = 0.0
    for a in range(3, -1, -1):
        q = A[a, 0] + y * (A[a, 1] + y * (A[a, 2] + y * A[a, 3]))
        dq = A[a, 1] + y * (2.0 * A[a, 2] + y * 3.0 * A[a, 3])
        gx = gx * x + p
        p = p * x + q
        gy = gy * x + dq
    return p, gx, gy


@njit(cache=True)
def _foot_on_cell(A, x0, y0, tol=1e-3):
    """Foot point and distance (index units) from (x0, y0) to the zero set
    of the cell interpolant, by the projected Newton iteration.  The
    distance is -1 on failure or when the foot point leaves the cell."""
    x = min(max(x0, 0.0), 1.0)
    y = min(max(y0, 0.0), 1.0)
    for _ in range(30):
        p, gx, gy = _bicubic_eval(A, x, y)
        g2 = gx * gx + gy * gy
        if g2 < 1e-14:
            return x, y, -1.0
        wx = x0 - x
        wy = y0 - y
        proj = (wx * gx + wy * gy) / g2
        sx = -p * gx / g2 + wx - proj * gx
        sy = -p * gy / g2 + wy - proj * gy
        m = math.sqrt(sx * sx + sy * sy)
        if m > 1.0:
            sx /= m
            sy /= m
        x += sx
        y += sy
        if m < 1e-11:
            break
    else:
        return x, y, -1.0
    if x < -tol or x > 1.0 + tol or y < -tol or y > 1.0 + tol:
        return x, y, -1.0
    return x, y, math.sqrt((x - x0) ** 2 + (y - y0) ** 2)


@njit(cache=True)
def _closest_on_cell(A, x0, y0):
    return _foot_on_cell(A, x0, y0)[2]


@njit(cache=True)
def _interface_cells(u, zbc):
    """Cells whose corners change sign.

    Returns ``ids`` (cell ``(i, j)`` stored at ``[i + 1, j + 1]`` so the
    ghost cells ``i = -1`` and ``j = -1`` fit; -1 for no interface),
    ``reps`` (centroid of the linear edge crossings, index units) and
    ``coef`` (bicubic coefficients) per interface cell.
    """
    nz, nr = u.shape
    ids = np.full((nz + 1, nr), -1, dtype=np.int64)
    i_lo = -1 if zbc != 0 else 0
    i_hi = nz - 1 if zbc != 0 else nz - 2
    count = 0
    for i in range(i_lo, i_hi + 1):
        for j in range(-1, nr - 1):
            c0 = _v(u, i, j, zbc)
            c1 = _v(u, i + 1, j, zbc)
            c2 = _v(u, i + 1, j + 1, zbc)
            c3 = _v(u, i, j + 1, zbc)
            neg = (c0 <= 0.0) + (c1 <= 0.0) + (c2 <= 0.0) + (c3 <= 0.0)
            if neg > 0 and neg < 4:
                ids[i + 1, j + 1] = count
                count += 1
    reps = np.empty((count, 2))
    coef = np.empty((count, 4, 4))
    px = (0.0, 1.0, 1.0, 0.0)
    py = (0.0, 0.0, 1.0, 1.0)
    for i in range(i_lo, i_hi + 1):
        for j in range(-1, nr - 1):
            k = ids[i + 1, j + 1]
            if k < 0:
                continue
            c = (_v(u, i, j, zbc), _v(u, i + 1, j, zbc), _v(u, i + 1, j + 1, zbc), _v(u, i, j + 1, zbc))
            sx = 0.0
            sy = 0.0
            m = 0
            for e in range(4):
                f = (e + 1) % 4
                a = c[e]
                b = c[f]
                if (a <= 0.0) != (b <= 0.0):
                    t = a / (a - b)
                    sx += px[e] + t * (px[f] - px[e])
                    sy += py[e] + t * (py[f] - py[e])
                    m += 1
            reps[k, 0] = i + sx / m
            reps[k, 1] = j + sy / m
            _bicubic(u, i, j, zbc, coef[k])
    return ids, reps, coef


@njit(cache=True)
def _near_distances(u, h, zbc, reach, phi, fixed):
    """Closest-point distances to the bicubic zero set for nodes with
    ``|u| < (reach + 1.5) h``.

    The nearest edge-crossing centroid picks a cell; the projected Newton
    iteration runs on the interface cells of the 3 x 3 block around it.
    """
    nz, nr = u.shape
    lim = (reach + 1.5) * h
    ids, reps, coef = _interface_cells(u, zbc)
    box = reach + 2
    for ii in range(nz):
        for jj in range(nr):
            if abs(u[ii, jj]) > lim:
                continue
            dbest = np.inf
            ci = 0
            cj = 0
            for a in range(max(ii - box, -1), min(ii + box, nz - 1) + 1):
                for b in range(max(jj - box, -1), min(jj + box, nr - 2) + 1):
                    k = ids[a + 1, b + 1]
                    if k < 0:
                        continue
                    d = (reps[k, 0] - ii) ** 2 + (reps[k, 1] - jj) ** 2
                    if d < dbest:
                        dbest = d
                        ci = a
                        cj = b
            if dbest == np.inf:
                continue
            # a foot point well inside the nearest cell is accepted as is
            k = ids[ci + 1, cj + 1]
            fx, fy, best = _foot_on_cell(coef[k], float(ii - ci), float(jj - cj))
            if best >= 0.0 and 0.05 < fx < 0.95 and 0.05 < fy < 0.95:
                phi[ii, jj] = best * h
                fixed[ii, jj] = True
                continue
            for a in range(max(ci - 1, -1), min(ci + 1, nz - 1) + 1):
                for b in range(max(cj - 1, -1), min(cj + 1, nr - 2) + 1):
                    k = ids[a + 1, b + 1]
                    if k < 0:
                        continue
                    d = _closest_on_cell(coef[k], float(ii - a), float(jj - b))
                    if d >= 0.0 and (best < 0.0 or d < best):
                        best = d
            if best >= 0.0:
                phi[ii, jj] = best * h
                fixed[ii, jj] = True


@njit(cache=True)
def reinit(u, h, zbc, band, max_rounds=50, reach=BAND_CELLS):
    """Signed distance with the zero set of ``u``.

    Nodes within ``reach`` cells of the zero set get the distance to the
    zero set of the local bicubic interpolant (closest point by projected
    Newton).  A first-order sweep next to the interface would perturb the
    curvature stencil there by O(1) on every call, so the band has to be a
    few cells wide.  Interface nodes the Newton step misses keep the linear
    subcell estimate.  The rest is filled by Godunov fast sweeping in four
    orderings, repeated until nothing changes, so the result is the unique
    fixed point of the sweep.
    """
    nz, nr = u.shape
    phi = np.full((nz, nr), np.inf)
    fixed = np.zeros((nz, nr), dtype=np.bool_)
    _near_distances(u, h, zbc, reach, phi, fixed)
    for i in range(nz):
        for j in range(nr):
            if not fixed[i, j]:
                d = _interface_distance(u, i, j, h, zbc)
                if d >= 0.0:
                    phi[i, j] = d
                    fixed[i, j] = True
    for _ in range(max_rounds):
        changed = False
        for i in range(nz):
            for j in range(nr):
                changed |= _sweep_update(phi, fixed, i, j, h, zbc)
        for i in range(nz - 1, -1, -1):
            for j in range(nr):
                changed |= _sweep_update(phi, fixed, i, j, h, zbc)
        for i in range(nz - 1, -1, -1):
            for j in range(nr - 1, -1, -1):
                changed |= _sweep_update(phi, fixed, i, j, h, zbc)
        for i in range(nz):
            for j in range(nr - 1, -1, -1):
                changed |= _sweep_update(phi, fixed, i, j, h, zbc)
        if not changed:
            break
    out = np.empty_like(u)
    for i in range(nz):
        for j in range(nr):
            d = min(phi[i, j], band)
            c = u[i, j]
            if c > 0.0:
                out[i, j] = d
            elif c < 0.0:
                out[i, j] = -d
            else:
                out[i, j] = 0.0
    return out


@njit(cache=True)
def fraction_inside(u, h, zbc):
    """Per-node inside fraction ``clip(1/2 - phi/h, 0, 1)`` with
    ``phi = u / |grad u|`` (central differences)."""
    nz, nr = u.shape
    out = np.empty_like(u)
    for i in range(nz):
        for j in range(nr):
            c = u[i, j]
            if c <= -h * 2.0:
                out[i, j] = 1.0
                continue
            if c >= h * 2.0:
                out[i, j] = 0.0
                continue
            gz = (_v(u, i + 1, j, zbc) - _v(u, i - 1, j, zbc)) / (2.0 * h)
            gr = (_v(u, i, j + 1, zbc) - _v(u, i, j - 1, zbc)) / (2.0 * h)
            g = max(math.sqrt(gz * gz + gr * gr), 0.5)
            f = 0.5 - c / (g * h)
            out[i, j] = min(max(f, 0.0), 1.0)
    return out
