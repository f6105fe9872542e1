"""Self-similar comparison solutions.

Normalization: a self-shrinker ``S`` moves as ``sqrt(1 - t) S`` and vanishes
at ``t = 1``; a round sphere of radius R has inward mean curvature n/R and
vanishes at ``R^2 / (2n)``.

The profile curve of a rotationally symmetric shrinker, parametrized by
arclength with tangent angle ``theta``, solves

    x' = cos(theta),  r' = sin(theta),
    theta' = (x sin(theta) - r cos(theta)) / 2 + (n - 1) cos(theta) / r.

The Angenent doughnut is found by shooting perpendicular to the plane x = 0
from the inner radius ``a`` and bisecting on the return angle.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

__all__ = [
    "SingularRadiusError",
    "ShrinkerState",
    "Shot",
    "TorusProfile",
    "Barrier",
    "sphere_radius",
    "cylinder_radius",
    "shrinker_rhs",
    "integrate_profile",
    "shoot",
    "sweep_residuals",
    "find_torus",
    "scale_and_pick_delta0",
    "place_barriers",
    "write_barriers_json",
]

R_FLOOR = 1e-9


class SingularRadiusError(ValueError):
    """The profile curve touched the axis, where the ODE is singular."""


@dataclass(frozen=True)
class ShrinkerState:
    x: float
    r: float
    theta: float
    s: float = 0.0


def sphere_radius(R0: float, n: int, t):
    """Radius ``sqrt(R0^2 - 2 n t)`` of a shrinking n-sphere."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > R0**2 / (2 * n) * (1 + 1e-15)):
        raise ValueError(f"t outside [0, R0^2/(2n)] = [0, {R0**2 / (2 * n)}]")
    out = np.sqrt(np.maximum(R0**2 - 2 * n * t, 0.0))
    return float(out) if out.ndim == 0 else out


def cylinder_radius(R0: float, n: int, t):
    """Radius ``sqrt(R0^2 - 2 (n-1) t)`` of a shrinking round cylinder."""
    t = np.asarray(t, dtype=float)
    T = R0**2 / (2 * (n - 1))
    if np.any(t < 0) or np.any(t > T * (1 + 1e-15)):
        raise ValueError(f"t outside [0, {T}]")
    out = np.sqrt(np.maximum(R0**2 - 2 * (n - 1) * t, 0.0))
    return float(out) if out.ndim == 0 else out


def shrinker_rhs(state, n: int, r_floor: float = R_FLOOR) -> np.ndarray:
    """Right-hand side ``(dx, dr, dtheta)`` of the profile ODE at ``state``.

    ``state`` is a :class:`ShrinkerState` or any sequence ``(x, r, theta)``.
    """
    if isinstance(state, ShrinkerState):
        x, r, th = state.x, state.r, state.theta
    else:
        x, r, th = state[0], state[1], state[2]
    if r <= r_floor:
        raise SingularRadiusError(f"r = {r} <= r_floor = {r_floor}")
    return _rhs(0.0, (x, r, th), n)


def _rhs(s, y, n):
    x, r, th = y
    c = math.cos(th)
    sn = math.sin(th)
    return np.array([c, sn, 0.5 * (x * sn - r * c) + (n - 1) * c / r])


def integrate_profile(n: int, state0, s_end: float, tol: float = 1e-12, **kw):
    """Integrate the profile ODE from ``state0 = (x, r, theta)`` over
    ``[0, s_end]`` with DOP853; returns the ``solve_ivp`` solution."""
    return solve_ivp(
        _rhs, (0.0, s_end), list(state0), args=(n,), method="DOP853",
        rtol=tol, atol=tol, dense_output=True, **kw,
    )


@dataclass
class Shot:
    """Result of one shooting integration from ``(0, a, 0)``."""

    a: float
    n: int
    s: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    closure_residual: float
    outcome: str  # returned | collapsed | escaped | exhausted | failed
    sol: object = field(default=None, repr=False)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def states(self) -> list[ShrinkerState]:
        return [ShrinkerState(*v) for v in zip(self.x, self.r, self.theta, self.s)]


def shoot(
    n: int,
    a: float,
    integrator_tol: float = 1e-12,
    s_max: float = 60.0,
    r_escape: float = 1e3,
    r_floor: float = R_FLOOR,
) -> Shot:
    """Shoot from ``(x, r, theta) = (0, a, 0)`` until the curve re-crosses
    ``x = 0`` moving left.

    ``closure_residual = theta_return - pi``; it vanishes exactly for curves
    that close up into a reflection-symmetric loop.  Exits through the axis,
    to infinity or past ``s_max`` are reported via ``outcome`` with a NaN
    residual.
    """
    if not 0.0 < a < math.sqrt(2 * (n - 1)):
        raise ValueError(f"a must lie in (0, sqrt(2(n-1))), got {a}")

    def crossing(s, y, n):
        return y[0] if s > 1e-6 else 1.0

    crossing.terminal = True
    crossing.direction = -1

    def collapse(s, y, n):
        return y[1] - r_floor

    collapse.terminal = True

    def escape(s, y, n):
        return r_escape - math.hypot(y[0], y[1])

    escape.terminal = True

    try:
        sol = integrate_profile(
            n, (0.0, a, 0.0), s_max, integrator_tol, events=[crossing, collapse, escape]
        )
    except (ValueError, ZeroDivisionError, FloatingPointError):
        sol = None
    if sol is None or sol.status == -1:
        return Shot(a, n, np.zeros(1), np.zeros(1), np.full(1, a), np.zeros(1),
                    math.nan, "failed", sol)
    if sol.t_events[0].size:
        outcome = "returned"
        s_end = float(sol.t_events[0][0])
        residual = float(sol.y_events[0][0][2] - math.pi)
    elif sol.t_events[1].size:
        outcome, s_end, residual = "collapsed", float(sol.t_events[1][0]), math.nan
    elif sol.t_events[2].size:
        outcome, s_end, residual = "escaped", float(sol.t_events[2][0]), math.nan
    else:
        outcome, s_end, residual = "exhausted", s_max, math.nan
    return Shot(a, n, sol.t, sol.y[0], sol.y[1], sol.y[2], residual, outcome, sol)


def sweep_residuals(n: int, num: int = 200, pad: float = 0.05, integrator_tol: float = 1e-12):
    """Coarse scan of the shooting residual over ``(pad, sqrt(2(n-1)) - pad)``."""
    a = np.linspace(pad, math.sqrt(2 * (n - 1)) - pad, num)
    res = np.array([shoot(n, float(ai), integrator_tol).closure_residual for ai in a])
    return a, res


@dataclass
class TorusProfile:
    """Closed profile curve of the Angenent doughnut (extinction at t = 1)."""

    n: int
    a_star: float
    residual: float
    samples: np.ndarray = field(repr=False)
    hole_radius: float
    thickness: float
    extinction_time: float = 1.0

    @property
    def outer_radius(self) -> float:
        return float(self.samples[:, 1].max())

    def scaled(self, scale: float, center: float = 0.0) -> np.ndarray:
        """Samples of ``scale * gamma`` translated to axial position ``center``."""
        return self.samples * scale + np.array([center, 0.0])

    def header(self) -> dict:
        return {
            "n": self.n,
            "a_star": self.a_star,
            "hole_radius": self.hole_radius,
            "thickness": self.thickness,
            "residual": self.residual,
            "extinction_time": self.extinction_time,
            "outer_radius": self.outer_radius,
        }

    def write(self, json_path, csv_path, extra: dict | None = None) -> None:
        head = self.header()
        if extra:
            head.update(extra)
        Path(json_path).write_text(json.dumps(head, indent=2, sort_keys=True) + "\n")
        np.savetxt(csv_path, self.samples, delimiter=",", header="x,r", comments="", fmt="%.17g")

    @classmethod
    def read(cls, json_path, csv_path) -> "TorusProfile":
        head = json.loads(Path(json_path).read_text())
        samples = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        return cls(head["n"], head["a_star"], head["residual"], samples,
                   head["hole_radius"], head["thickness"], head.get("extinction_time", 1.0))


def find_torus(
    n: int,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-10,
    integrator_tol: float = 1e-12,
    num_sweep: int = 200,
    num_samples: int = 2000,
    max_iter: int = 200,
) -> TorusProfile:
    """Locate the Angenent doughnut for dimension ``n``.

    Without a bracket, a sweep of ``num_sweep`` shooting parameters finds the
    first sign change of the residual (smallest ``a``).  Brent's method then
    refines ``a`` until ``|residual| <= tol``.

    Raises
    ------
    ValueError
        For ``n < 2``, or when no sign change is found.
    RuntimeError
        If the refined residual still exceeds ``tol``.
    """
    if int(n) != n or n < 2:
        raise ValueError("the shrinking doughnut exists for n >= 2 only")

    def f(a):
        res = shoot(n, a, integrator_tol).closure_residual
        if math.isnan(res):
            raise ValueError(f"shot from a={a} did not return to x = 0")
        return res

    if bracket is None:
        a, res = sweep_residuals(n, num_sweep, integrator_tol=integrator_tol)
        ok = np.isfinite(res)
        idx = [i for i in range(len(a) - 1) if ok[i] and ok[i + 1] and res[i] * res[i + 1] < 0]
        if not idx:
            raise ValueError(f"no sign change of the closure residual found for n={n}")
        bracket = (float(a[idx[0]]), float(a[idx[0] + 1]))
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ValueError(f"residual has the same sign at both bracket ends {bracket}")
    a_star = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
    shot = shoot(n, a_star, integrator_tol)
    if not abs(shot.closure_residual) <= tol:
        raise RuntimeError(f"bisection stalled at residual {shot.closure_residual}")

    s = np.linspace(0.0, shot.length, num_samples // 2 + 1)
    x, r, _ = shot.sol.sol(s)
    x[0] = 0.0
    x[-1] = 0.0
    half = np.column_stack([x, r])
    # even reflection x -> -x closes the loop: inner point, right half, outer
    # point, left half, back to the inner point
    mirror = half[::-1][1:] * [-1.0, 1.0]
    samples = np.vstack([half, mirror])
    return TorusProfile(
        n=n,
        a_star=float(a_star),
        residual=float(shot.closure_residual),
        samples=samples,
        hole_radius=float(min(r.min(), a_star)),
        thickness=float(2.0 * x.max()),
    )


def scale_and_pick_delta0(torus: TorusProfile, eps0: float, n: int, margin: float = 0.9,
                          require_sphere_bound: bool = True):
    """Scale the doughnut into the dyadic block and choose ``delta0``.

    ``lambda = margin * min((1/3) / thickness, (eps0/12) / sqrt(2n))`` makes
    the barrier thinner than 1/3 and vanish before the sphere of radius
    eps0/12; ``delta0 = margin * min(lambda * hole_radius, eps0/2 (1 - 1e-6))``.
    With ``require_sphere_bound=False`` only the thickness bound limits lambda
    (used for the grid-resolvable simulation regime).
    """
    if not 0.0 < margin < 1.0:
        raise ValueError("margin must lie in (0, 1)")
    if not 0.0 < eps0 < 1.0:
        raise ValueError("eps0 must lie in (0, 1)")
    thick_bound = (1.0 / 3.0) / torus.thickness
    sphere_bound = (eps0 / 12.0) / math.sqrt(2 * n)
    lam = margin * (min(thick_bound, sphere_bound) if require_sphere_bound else thick_bound)
    delta0 = margin * min(lam * torus.hole_radius, eps0 / 2.0 * (1.0 - 1e-6))
    if not delta0 > 0:
        raise ValueError("infeasible barrier: delta0 <= 0")
    sphere_ext = (eps0 / 12.0) ** 2 / (2 * n)
    doughnut_ext = lam**2 * torus.extinction_time
    cert = {
        "lambda": lam,
        "delta0": delta0,
        "thickness_scaled": lam * torus.thickness,
        "thickness_slack": 1.0 / 3.0 - lam * torus.thickness,
        "hole_scaled": lam * torus.hole_radius,
        "hole_slack": lam * torus.hole_radius - delta0,
        "doughnut_extinction": doughnut_ext,
        "sphere_extinction": sphere_ext,
        "extinction_slack": sphere_ext - doughnut_ext,
        "sphere_bound_enforced": require_sphere_bound,
    }
    return lam, delta0, cert


@dataclass(frozen=True)
class Barrier:
    """A comparison object on the axis: sphere (scale = radius) or doughnut
    (scale = lambda, the dilation of the unit-extinction torus)."""

    kind: str
    center_axial: float
    scale: float
    extinction: float
    level: int


def place_barriers(params, torus: TorusProfile, k_max: int, lam: float | None = None,
                   margin: float = 0.9) -> list[Barrier]:
    """Two spheres and one doughnut per dyadic level ``k = 0..k_max``."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if lam is None:
        lam = scale_and_pick_delta0(
            torus, params.eps0, params.n, margin,
            require_sphere_bound=params.regime == "certified",
        )[0]
    n = params.n
    out = []
    for k in range(k_max + 1):
        rho = params.eps0 / 12.0 * math.ldexp(1.0, -k)
        for c in (math.ldexp(1.0, -k), math.ldexp(1.0, 1 - k)):
            out.append(Barrier("sphere", c, rho, rho**2 / (2 * n), k))
        s = lam * math.ldexp(1.0, -k)
        out.append(Barrier("doughnut", 3.0 * math.ldexp(1.0, -(k + 1)), s,
                           s**2 * torus.extinction_time, k))
    return out


def write_barriers_json(barriers, path) -> None:
    Path(path).write_text(json.dumps([asdict(b) for b in barriers], indent=2) + "\n")
