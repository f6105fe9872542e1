"""Profile functions for the self-similar bead chain.

The generating curve of the initial hypersurface is the graph ``r = F(x)``
on the axial interval ``[0, 3]``.  Everything here is evaluated in closed
form together with the first two derivatives, so mean-curvature checks never
depend on finite differences.

Building blocks
---------------
* ``phi0``      : C-infinity monotone step, 0 on [0, 1/6], 1 on [1/3, 1/2]
* ``f_delta``   : one dyadic block on (1, 2] (half bead, neck, half bead)
* cap           : the flat-topped convex cap closing the chain on (2, 3]
* ``F``         : cap + sum of dyadic copies ``2^-k f_delta(2^k x)``
* ``F_k``       : ``F`` with everything left of ``2^(1-k)`` replaced by a
                  cylinder and a rounded tip
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

__all__ = [
    "BumpSpec",
    "ConstructionParams",
    "CapCurve",
    "Profile",
    "Certificate",
    "eval_phi0",
    "sup_abs_phi0_second",
    "select_params",
    "eval_f_delta",
    "build_cap",
    "eval_F",
    "eval_F_k",
    "depth_exhausted",
    "mean_curvature_profile",
    "certify_mean_convex",
    "certify_samples",
    "check_self_similarity",
    "profile_curve",
    "write_profile_csv",
    "read_profile_csv",
]

REGIMES = ("certified", "simulation")


def _out(x, *arrays):
    """Return python floats for scalar input, arrays shaped like ``x`` otherwise."""
    if x.ndim == 0:
        return tuple(float(a[0]) for a in arrays)
    return tuple(a.reshape(x.shape) for a in arrays)


# ---------------------------------------------------------------------------
# smooth step


@dataclass(frozen=True)
class BumpSpec:
    """Geometry of the smooth step ``phi0``."""

    transition_lo: float = 1.0 / 6.0
    transition_hi: float = 1.0 / 3.0
    plateau_hi: float = 0.5

    @property
    def width(self) -> float:
        return self.transition_hi - self.transition_lo


def _step(s):
    """Smooth step g(s) = h(s) / (h(s) + h(1-s)), h(s) = exp(-1/s), with
    exact first and second derivatives.

    Written as ``expit(-w)`` with ``w = 1/s - 1/(1-s)`` which is stable near
    both ends of the transition.
    """
    s = np.asarray(s, dtype=float)
    g = np.where(s >= 1.0, 1.0, 0.0)
    g1 = np.zeros_like(s)
    g2 = np.zeros_like(s)
    inner = (s > 0.0) & (s < 1.0)
    if np.any(inner):
        si = s[inner]
        t = 1.0 - si
        w = 1.0 / si - 1.0 / t
        w1 = -1.0 / si**2 - 1.0 / t**2
        w2 = 2.0 / si**3 - 2.0 / t**3
        gi = expit(-w)
        sig = expit(-w) * expit(w)
        gi1 = -sig * w1
        gi2 = -gi1 * (1.0 - 2.0 * gi) * w1 - sig * w2
        g[inner] = gi
        g1[inner] = gi1
        g2[inner] = gi2
    return g, g1, g2


def eval_phi0(spec: BumpSpec, x):
    """Evaluate ``phi0`` and its first two derivatives on ``[0, plateau_hi]``.

    Raises
    ------
    ValueError
        If any ``x`` lies outside ``[0, spec.plateau_hi]``.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > spec.plateau_hi)) or np.any(np.isnan(x)):
        raise ValueError(f"phi0 is defined on [0, {spec.plateau_hi}] only")
    return _out(x, *_phi0_unchecked(spec, np.atleast_1d(x)))


def _phi0_unchecked(spec: BumpSpec, x):
    w = spec.width
    g, g1, g2 = _step((x - spec.transition_lo) / w)
    return g, g1 / w, g2 / (w * w)


def sup_abs_phi0_second(spec: BumpSpec, num_samples: int = 100_000) -> float:
    """Upper bound M of ``|phi0''|`` on ``[0, plateau_hi]``.

    Dense sampling over the transition followed by bounded Brent refinement
    around every sampled local maximum.  The returned value is never below
    any sampled value.
    """
    x = np.linspace(spec.transition_lo, spec.transition_hi, num_samples)
    a = np.abs(_phi0_unchecked(spec, x)[2])
    best = float(a.max())
    peaks = np.flatnonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:])) + 1
    dx = x[1] - x[0]

    def neg(xx):
        return -abs(float(_phi0_unchecked(spec, np.asarray(xx))[2]))

    for p in peaks:
        res = minimize_scalar(
            neg,
            bounds=(x[p] - dx, x[p] + dx),
            method="bounded",
            options={"xatol": 1e-14},
        )
        best = max(best, -float(res.fun))
    return best


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ConstructionParams:
    """Constants of the construction.

    ``regime="certified"`` requires ``(1 + M) eps0^2 < 1``; the
    ``"simulation"`` regime allows larger, grid-resolvable constants whose
    mean-convexity is then checked numerically.
    """

    n: int
    eps0: float
    delta0: float
    regime: str = "certified"
    M: float = math.nan

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not 0.0 < self.eps0 < 1.0:
            raise ValueError(f"eps0 must lie in (0, 1), got {self.eps0}")
        if not 0.0 < self.delta0 < self.eps0 / 2.0:
            raise ValueError(
                f"delta0 must lie in (0, eps0/2) = (0, {self.eps0 / 2}), got {self.delta0}"
            )
        if self.regime == "certified":
            if not math.isfinite(self.M) or self.M < 0:
                raise ValueError("certified regime needs the bound M = sup|phi0''|")
            if (1.0 + self.M) * self.eps0**2 >= 1.0:
                raise ValueError(
                    f"(1+M) eps0^2 = {(1.0 + self.M) * self.eps0**2!r} is not < 1"
                )

    @property
    def needs_numerical_certificate(self) -> bool:
        return self.regime == "simulation"


def select_params(
    M: float,
    n: int,
    regime: str = "certified",
    safety: float = 0.9,
    *,
    eps0: float | None = None,
    delta0: float | None = None,
    torus=None,
    margin: float = 0.9,
) -> ConstructionParams:
    """Pick ``eps0`` and ``delta0``.

    Certified regime: ``eps0 = safety / sqrt(1 + M)`` and ``delta0`` from the
    doughnut barrier (``shrinkerlab.scale_and_pick_delta0``).  An explicit
    ``delta0`` overrides the barrier choice.  Simulation regime: ``eps0`` and
    ``delta0`` must be given.
    """
    if not 0.0 < safety < 1.0:
        raise ValueError(f"safety must lie in (0, 1), got {safety}")
    if M < 0:
        raise ValueError("M must be nonnegative")
    if regime == "simulation":
        if eps0 is None or delta0 is None:
            raise ValueError("simulation regime needs explicit eps0 and delta0")
        return ConstructionParams(n, eps0, delta0, "simulation", M)
    if regime != "certified":
        raise ValueError(f"unknown regime {regime!r}")
    eps = safety / math.sqrt(1.0 + M)
    if delta0 is None:
        from . import shrinkerlab

        if torus is None:
            torus = shrinkerlab.find_torus(n)
        _, delta0, _ = shrinkerlab.scale_and_pick_delta0(torus, eps, n, margin)
    return ConstructionParams(n, eps, delta0, "certified", M)


# ---------------------------------------------------------------------------
# dyadic block


def eval_f_delta(params: ConstructionParams, delta: float, x, spec: BumpSpec = BumpSpec()):
    """One dyadic block: half bead of radius eps0/2 on the left, neck of
    radius ``delta`` at 3/2, half bead of radius eps0 on the right."""
    if not 0.0 < delta < params.eps0 / 2.0:
        raise ValueError(f"delta must lie in (0, eps0/2), got {delta}")
    x = np.asarray(x, dtype=float)
    return _out(x, *_f_delta(params.eps0, delta, np.atleast_1d(x), spec))


def _f_delta(eps0, delta, x, spec=BumpSpec()):
    v = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    right = (x > 1.5) & (x <= 2.0)
    left = (x > 1.0) & (x <= 1.5)
    if np.any(right):
        p, p1, p2 = _phi0_unchecked(spec, x[right] - 1.5)
        a = eps0 - delta
        v[right] = a * p + delta
        d1[right] = a * p1
        d2[right] = a * p2
    if np.any(left):
        p, p1, p2 = _phi0_unchecked(spec, 1.5 - x[left])
        a = eps0 / 2.0 - delta
        v[left] = a * p + delta
        d1[left] = -a * p1
        d2[left] = a * p2
    return v, d1, d2


# ---------------------------------------------------------------------------
# convex cap


@dataclass(frozen=True)
class CapCurve:
    """Upper boundary ``y = eps0 sqrt(1 - Q(x))`` of the convex cap on [0, 1].

    ``Q(x) = exp(1/s1 - 1/s)`` with ``s = (x - 1/6) / shape`` is convex,
    vanishes identically on [0, 1/6] and reaches 1 at ``x = 1`` with positive
    slope, which makes the cap concave, flat on [0, 1/6], and vertical with
    positive curvature at ``(1, 0)``.  ``shape >= 5/3`` keeps ``s <= 1/2``
    where ``exp(-1/s)`` is convex.
    """

    eps0: float
    shape: float
    samples: np.ndarray = field(repr=False)
    tip_curvature: float

    @property
    def _s1(self) -> float:
        return (5.0 / 6.0) / self.shape

    def evaluate(self, x):
        """Cap height and derivatives for ``x`` in [0, 1]; zero outside."""
        x = np.asarray(x, dtype=float)
        return _out(x, *self._eval(np.atleast_1d(x)))

    def _eval(self, x):
        y = np.zeros_like(x)
        y1 = np.zeros_like(x)
        y2 = np.zeros_like(x)
        flat = (x >= 0.0) & (x <= 1.0 / 6.0)
        y[flat] = self.eps0
        mid = (x > 1.0 / 6.0) & (x < 1.0)
        if np.any(mid):
            L = self.shape
            s = (x[mid] - 1.0 / 6.0) / L
            logq = 1.0 / self._s1 - 1.0 / s
            Q = np.exp(logq)
            one_minus = -np.expm1(logq)
            Q1 = Q / s**2 / L
            Q2 = Q * (1.0 - 2.0 * s) / s**4 / L**2
            root = np.sqrt(one_minus)
            y[mid] = self.eps0 * root
            y1[mid] = -self.eps0 * Q1 / (2.0 * root)
            y2[mid] = -self.eps0 * (Q2 / (2.0 * root) + Q1**2 / (4.0 * one_minus * root))
        tip = x == 1.0
        y1[tip] = -np.inf
        y2[tip] = -np.inf
        return y, y1, y2


def _turning(points: np.ndarray) -> np.ndarray:
    e = np.diff(points, axis=0)
    return e[:-1, 0] * e[1:, 1] - e[:-1, 1] * e[1:, 0]


def build_cap(eps0: float, shape: float = 5.0 / 3.0, num_samples: int = 2001) -> CapCurve:
    """Build and verify the convex cap.

    Samples are spaced as ``x = 1 - (1 - tau)^2`` so they stay roughly
    uniform in arclength near the vertical tip.

    Raises
    ------
    ValueError
        If the sampled polygon is not convex (bad ``shape``).
    """
    if not 0.0 < eps0 < 1.0:
        raise ValueError(f"eps0 must lie in (0, 1), got {eps0}")
    tau = np.linspace(0.0, 1.0, num_samples)
    xs = 1.0 - (1.0 - tau) ** 2
    s1 = (5.0 / 6.0) / shape
    Q1_tip = 1.0 / (shape * s1**2)
    # near the tip x = 1 - y^2 / (eps0^2 Q'(1)), a parabola
    tip_curv = 2.0 / (eps0**2 * Q1_tip)
    cap = CapCurve(eps0, shape, np.empty((0, 2)), tip_curv)
    ys = cap._eval(xs)[0]
    samples = np.column_stack([xs, ys])
    cap = CapCurve(eps0, shape, samples, tip_curv)

    # clockwise traversal: every turn must be <= 0 (up to roundoff)
    closed = _closed_cap_polygon(samples)
    turns = _turning(np.vstack([closed, closed[1:2]]))
    scale = eps0 * (1.0 / num_samples) ** 2
    if np.any(turns > 1e-9 * scale) or tip_curv <= 0:
        raise ValueError(f"cap with shape={shape} fails the convexity check")
    return cap


def _closed_cap_polygon(samples: np.ndarray) -> np.ndarray:
    """Reflect the quarter curve across both axes into a closed polygon."""
    q1 = samples
    q4 = samples[::-1] * [1.0, -1.0]
    q3 = samples * [-1.0, -1.0]
    q2 = samples[::-1] * [-1.0, 1.0]
    ring = np.vstack([q1, q4[1:], q3[1:], q2[1:]])
    return ring


# ---------------------------------------------------------------------------
# full and truncated profiles


@dataclass(frozen=True)
class Profile:
    """Generating curve ``r = F(x)`` of an axisymmetric body.

    ``kind`` is ``"full"`` (F), ``"truncated"`` (F_k with ``k``) or
    ``"single_bump"`` (f_delta with ``delta``).
    """

    params: ConstructionParams
    cap: CapCurve
    kind: str = "full"
    k: int | None = None
    delta: float | None = None
    k_max: int = 40

    def __post_init__(self):
        if self.kind == "truncated" and (self.k is None or self.k < 1):
            raise ValueError("truncated profile needs k >= 1")
        if self.kind == "single_bump" and self.delta is None:
            raise ValueError("single_bump profile needs delta")
        if self.kind not in ("full", "truncated", "single_bump"):
            raise ValueError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def full(cls, params: ConstructionParams, cap: CapCurve | None = None, k_max: int = 40):
        return cls(params, cap or build_cap(params.eps0), "full", k_max=k_max)

    @classmethod
    def truncated(cls, params: ConstructionParams, k: int, cap: CapCurve | None = None):
        return cls(params, cap or build_cap(params.eps0), "truncated", k=k)

    def __call__(self, x):
        if self.kind == "full":
            return eval_F(self, x)
        if self.kind == "truncated":
            return eval_F_k(self, self.k, x)
        return eval_f_delta(self.params, self.delta, x)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 3.0)

    def neck_stations(self) -> list[float]:
        """Axial positions 3 * 2^-(k+1) of the necks present in this profile."""
        if self.kind == "single_bump":
            return [1.5]
        depth = self.k if self.kind == "truncated" else 6
        return [3.0 * 2.0 ** -(j + 1) for j in range(depth)]


def _dyadic_index(x: np.ndarray) -> np.ndarray:
    """k with 2^k x in (1, 2], exact in binary floating point."""
    m, e = np.frexp(x)
    return np.where(m == 0.5, 2 - e, 1 - e)


def _F(profile: Profile, x: np.ndarray):
    p = profile.params
    v = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    cap = (x > 2.0) & (x <= 3.0)
    if np.any(cap):
        v[cap], d1[cap], d2[cap] = profile.cap._eval(x[cap] - 2.0)
    chain = (x > 0.0) & (x <= 2.0)
    if np.any(chain):
        xc = x[chain]
        k = _dyadic_index(xc)
        ok = k <= profile.k_max
        arg = np.ldexp(xc, k)
        fv, f1, f2 = _f_delta(p.eps0, p.delta0, arg)
        v[chain] = np.where(ok, np.ldexp(fv, -k), 0.0)
        d1[chain] = np.where(ok, f1, 0.0)
        d2[chain] = np.where(ok, np.ldexp(f2, k), 0.0)
    return v, d1, d2


def eval_F(profile: Profile, x):
    """Evaluate F and its derivatives using the single active dyadic term.

    For ``x`` below ``2^-k_max`` the value is reported as 0, see
    :func:`depth_exhausted`.
    """
    x = np.asarray(x, dtype=float)
    return _out(x, *_F(profile, np.atleast_1d(x)))


def depth_exhausted(profile: Profile, x) -> np.ndarray:
    """True where ``x`` is positive but deeper than ``k_max`` dyadic levels."""
    x = np.asarray(x, dtype=float)
    pos = (x > 0.0) & (x <= 2.0)
    k = np.where(pos, _dyadic_index(np.where(pos, x, 1.0)), 0)
    return pos & (k > profile.k_max)


def eval_F_k(profile: Profile, k: int, x):
    """Truncated profile: F right of 2^(1-k), a cylinder of radius
    eps0 2^-k on [2^-k, 2^(1-k)] and a scaled cap tip left of 2^-k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x0 = np.asarray(x, dtype=float)
    x = np.atleast_1d(x0)
    eps0 = profile.params.eps0
    lo = math.ldexp(1.0, -k)
    hi = math.ldexp(1.0, 1 - k)
    v, d1, d2 = _F(profile, x)
    flat = (x >= lo) & (x <= hi)
    v[flat] = eps0 * lo
    d1[flat] = 0.0
    d2[flat] = 0.0
    tip = x < lo
    if np.any(tip):
        arg = 1.0 - np.ldexp(x[tip], k)
        cv, c1, c2 = profile.cap._eval(arg)
        # f~ is zero outside (0, 1]: arg = 0 never occurs here, arg > 1 for x < 0
        cv = np.where(arg > 0.0, cv, 0.0)
        v[tip] = lo * cv
        d1[tip] = -c1
        d2[tip] = np.ldexp(c2, k)
    return _out(x0, v, d1, d2)


# ---------------------------------------------------------------------------
# curvature and certificates


def mean_curvature_profile(f_value, f_d1, f_d2, n: int):
    """Inward mean curvature of the surface obtained by rotating ``r = f(x)``.

    ``(n-1) / (f sqrt(1+f'^2)) - f'' / (1+f'^2)^(3/2)``
    """
    f = np.asarray(f_value, dtype=float)
    if np.any(f <= 0.0):
        raise ZeroDivisionError("mean curvature of a profile needs f > 0")
    q = 1.0 + np.asarray(f_d1, dtype=float) ** 2
    H = (n - 1) / (f * np.sqrt(q)) - np.asarray(f_d2, dtype=float) / q**1.5
    return float(H) if H.ndim == 0 else H


@dataclass
class Certificate:
    regime: str
    eps0: float
    delta0: float
    M: float
    minH: float
    argminH: float
    maxFFpp: float
    analytic_bound: float | None
    interval: tuple[float, float]
    n: int
    passed: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        d["interval"] = list(self.interval)
        return d

    def to_json(self, path, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def certify_samples(x, F, F1, F2, n: int, params: ConstructionParams, interval) -> Certificate:
    """Certificate from already evaluated samples (also used for CSV re-checks)."""
    x = np.asarray(x, dtype=float)
    F = np.asarray(F, dtype=float)
    H = mean_curvature_profile(F, F1, F2, n)
    H = np.atleast_1d(H)
    i = int(np.argmin(H))
    block = (x > 1.0) & (x <= 2.0)
    FF = F * np.asarray(F2, dtype=float)
    max_ff = float(FF[block].max()) if np.any(block) else math.nan
    ok = bool(H[i] > 0.0)
    bound = None
    if params.regime == "certified":
        # f_delta'' <= (eps0 - delta) M + delta <= (1 + M) eps0 < 1 / eps0
        bound = (1.0 + params.M) * params.eps0
        ok = ok and bound < 1.0 / params.eps0
        if np.any(block):
            ok = ok and max_ff < 1.0
    return Certificate(
        regime=params.regime,
        eps0=params.eps0,
        delta0=params.delta0,
        M=params.M,
        minH=float(H[i]),
        argminH=float(x[i]),
        maxFFpp=max_ff,
        analytic_bound=bound,
        interval=(float(interval[0]), float(interval[1])),
        n=n,
        passed=ok,
    )


def certify_mean_convex(profile: Profile, interval, n: int | None = None, num_samples: int = 20_001) -> Certificate:
    """Sample the inward mean curvature on ``interval`` (left end excluded)."""
    a, b = interval
    if not 0.0 < a < b <= 3.0:
        raise ValueError(f"need 0 < a < b <= 3, got {interval}")
    n = profile.params.n if n is None else n
    x = np.linspace(a, b, num_samples + 1)[1:]
    F, F1, F2 = profile(x)
    return certify_samples(x, F, F1, F2, n, profile.params, interval)


def check_self_similarity(profile: Profile, num_samples: int = 10_000, seed: int = 0) -> float:
    """Largest ``|F(2x) - 2F(x)|`` over random ``x`` in (0, 1] (plus x = 1, 1/2)."""
    if profile.kind != "full":
        raise ValueError("self-similarity holds for the full profile only")
    rng = np.random.default_rng(seed)
    x = 1.0 - rng.random(num_samples)  # (0, 1]
    x = np.concatenate([x, [0.5, 1.0]])
    return float(np.max(np.abs(eval_F(profile, 2.0 * x)[0] - 2.0 * eval_F(profile, x)[0])))


# ---------------------------------------------------------------------------
# sampling and export


def profile_curve(profile: Profile, spacing: float, max_rounds: int = 60) -> np.ndarray:
    """Polyline through the graph of ``profile`` from (0, 0) to (3, 0).

    Starts uniform in x and bisects every segment longer than ``spacing``;
    the vertical tips at both ends get refined automatically.
    """
    x = np.linspace(0.0, 3.0, int(math.ceil(3.0 / spacing)) + 1)
    y = profile(x)[0]
    for _ in range(max_rounds):
        seg = np.hypot(np.diff(x), np.diff(y))
        long = np.flatnonzero(seg > spacing)
        if long.size == 0:
            break
        xm = 0.5 * (x[long] + x[long + 1])
        ym = profile(xm)[0]
        x = np.insert(x, long + 1, xm)
        y = np.insert(y, long + 1, ym)
    return np.column_stack([x, y])


def write_profile_csv(profile: Profile, path, num_samples: int = 3000, n: int | None = None) -> None:
    """CSV with columns ``x,F,F',F'',H`` on an open grid of (0, 3)."""
    n = profile.params.n if n is None else n
    x = (np.arange(num_samples) + 0.5) * (3.0 / num_samples)
    F, F1, F2 = profile(x)
    H = np.full_like(x, np.nan)
    pos = F > 0
    H[pos] = mean_curvature_profile(F[pos], F1[pos], F2[pos], n)
    data = np.column_stack([x, F, F1, F2, H])
    np.savetxt(path, data, delimiter=",", header="x,F,F',F'',H", comments="", fmt="%.17g")


def read_profile_csv(path):
    """Inverse of :func:`write_profile_csv`; returns the five columns."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return tuple(data[:, i] for i in range(5))
