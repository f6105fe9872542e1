import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pinchlab import profilekit as pk
from pinchlab import shrinkerlab as sl


@pytest.fixture(scope="module")
def torus2():
    return sl.find_torus(2)


# -- exact solutions ---------------------------------------------------------


@given(st.floats(0.1, 3.0), st.integers(2, 6), st.floats(0.0, 1.0))
def test_sphere_and_cylinder_laws(R0, n, frac):
    t = frac * R0**2 / (2 * n)
    assert sl.sphere_radius(R0, n, t) ** 2 == pytest.approx(R0**2 - 2 * n * t, abs=1e-12)
    tc = frac * R0**2 / (2 * (n - 1))
    assert sl.cylinder_radius(R0, n, tc) ** 2 == pytest.approx(R0**2 - 2 * (n - 1) * tc, abs=1e-12)


def test_exact_law_domains():
    assert sl.sphere_radius(1.0, 2, 0.25) == 0.0
    with pytest.raises(ValueError):
        sl.sphere_radius(1.0, 2, 0.3)
    with pytest.raises(ValueError):
        sl.cylinder_radius(1.0, 2, -0.1)


# -- profile ODE ---------------------------------------------------------------


@given(st.integers(2, 6), st.floats(0.0, 2 * math.pi))
def test_shrinking_sphere_is_a_circle_of_the_ode(n, phi):
    # the circle of radius sqrt(2n) turns at the constant rate 1/sqrt(2n)
    R = math.sqrt(2 * n)
    x, r = R * math.cos(phi), R * math.sin(phi)
    if r <= 1e-3:
        return
    th = phi + math.pi / 2
    dx, dr, dth = sl.shrinker_rhs((x, r, th), n)
    assert dth == pytest.approx(1.0 / R, abs=1e-12)
    assert math.hypot(dx, dr) == pytest.approx(1.0)


def test_cylinder_is_a_line_of_the_ode():
    for n in (2, 3, 4):
        R = math.sqrt(2 * (n - 1))
        sol = sl.integrate_profile(n, (-4.0, R, 0.0), 8.0)
        assert np.max(np.abs(sol.y[1] - R)) <= 1e-10


def test_axis_is_singular():
    with pytest.raises(sl.SingularRadiusError):
        sl.shrinker_rhs((0.0, 0.0, 0.0), 2)
    with pytest.raises(sl.SingularRadiusError):
        sl.shrinker_rhs(sl.ShrinkerState(0.0, -1.0, 0.0), 3)


# -- doughnut ------------------------------------------------------------------


def _rk4_residual(n, a, ds=1e-3):
    """Independent oracle: fixed step RK4 shot from (0, a, 0), landing on
    x = 0 by secant iteration on the last step length."""

    def f(y):
        x, r, th = y
        c, s = math.cos(th), math.sin(th)
        return (c, s, 0.5 * (x * s - r * c) + (n - 1) * c / r)

    def step(y, h):
        k1 = f(y)
        k2 = f([y[i] + 0.5 * h * k1[i] for i in range(3)])
        k3 = f([y[i] + 0.5 * h * k2[i] for i in range(3)])
        k4 = f([y[i] + h * k3[i] for i in range(3)])
        return [y[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(3)]

    y = [0.0, a, 0.0]
    s = 0.0
    while s < 60.0:
        z = step(y, ds)
        if s > 0.1 and y[0] > 0.0 >= z[0]:
            h0, h1 = 0.0, ds
            x0, x1 = y[0], z[0]
            for _ in range(30):
                h2 = h1 - x1 * (h1 - h0) / (x1 - x0)
                h0, x0 = h1, x1
                h1 = h2
                x1 = step(y, h1)[0]
                if abs(x1) < 1e-15:
                    break
            return step(y, h1)[2] - math.pi
        y, s = z, s + ds
    raise RuntimeError("shot did not return")


def test_torus_against_rk4_oracle(torus2):
    """[DERIVED] a* of the n=2 doughnut from an RK4 shooter and secant root."""
    a0, a1 = 0.43, 0.44
    r0, r1 = _rk4_residual(2, a0), _rk4_residual(2, a1)
    for _ in range(40):
        a2 = a1 - r1 * (a1 - a0) / (r1 - r0)
        a0, r0 = a1, r1
        a1, r1 = a2, _rk4_residual(2, a2)
        if abs(a1 - a0) < 1e-13:
            break
    assert abs(torus2.residual) <= 1e-8
    assert torus2.a_star == pytest.approx(a1, abs=1e-8)


def test_torus_geometry(torus2):
    """Reference values: for n=2 the doughnut hole radius is about 0.437 and the thickness 1.84."""
    assert torus2.hole_radius == pytest.approx(0.437, abs=1e-3)
    assert torus2.thickness == pytest.approx(1.843, abs=2e-3)
    pts = torus2.samples
    assert np.allclose(pts[0], pts[-1])
    assert np.all(pts[:, 1] >= torus2.hole_radius - 1e-12)
    # reflection symmetry x -> -x
    m = len(pts) // 2
    assert np.allclose(pts[: m + 1], (pts[m:][::-1]) * [-1, 1], atol=1e-12)


def test_torus_other_dimension(torus2):
    t3 = sl.find_torus(3)
    assert abs(t3.residual) <= 1e-8
    assert abs(t3.a_star - torus2.a_star) > 1e-2


def test_torus_needs_n2():
    with pytest.raises(ValueError):
        sl.find_torus(1)
    with pytest.raises(ValueError):
        sl.shoot(2, 1.5)  # outside (0, sqrt(2))


def test_torus_roundtrip(tmp_path, torus2):
    torus2.write(tmp_path / "t.json", tmp_path / "t.csv")
    back = sl.TorusProfile.read(tmp_path / "t.json", tmp_path / "t.csv")
    assert back.a_star == torus2.a_star
    assert np.array_equal(back.samples, torus2.samples)


# -- barrier scaling -------------------------------------------------------------


def test_certified_barrier_slacks(torus2):
    M = pk.sup_abs_phi0_second(pk.BumpSpec())
    eps0 = 0.9 / math.sqrt(1 + M)
    lam, delta0, cert = sl.scale_and_pick_delta0(torus2, eps0, 2)
    assert cert["thickness_slack"] > 0
    assert cert["hole_slack"] > 0
    assert cert["extinction_slack"] > 0
    assert 0 < delta0 < eps0 / 2


def test_simulation_barrier_scaling(torus2):
    lam, delta0, cert = sl.scale_and_pick_delta0(torus2, 0.12, 2, require_sphere_bound=False)
    assert lam == pytest.approx(0.9 * (1 / 3) / torus2.thickness)
    assert cert["extinction_slack"] < 0  # the sphere bound is dropped here


def test_place_barriers(torus2):
    params = pk.ConstructionParams(2, 0.12, 0.025, "simulation", 354.0)
    bars = sl.place_barriers(params, torus2, 2)
    assert len(bars) == 9
    d = [b for b in bars if b.kind == "doughnut"]
    assert [b.center_axial for b in d] == [1.5, 0.75, 0.375]
    for b0, b1 in zip(d, d[1:]):
        assert b1.extinction == pytest.approx(b0.extinction / 4)
    with pytest.raises(ValueError):
        sl.place_barriers(params, torus2, -1)


@pytest.mark.parametrize("a, ds", [(0.01, 1e-4), (0.05, 1e-3)])
def test_small_a_outcome_matches_direct_integration(a, ds):
    """[DERIVED] shots from near the axis classified by the RK4 oracle: for
    n = 2 they swing around and return to x = 0 instead of reaching r = 0."""
    shot = sl.shoot(2, a)
    assert shot.outcome == "returned"
    assert shot.closure_residual == pytest.approx(_rk4_residual(2, a, ds), abs=1e-6)
    assert shot.r.min() >= a * (1 - 1e-12)


# -- point contracts ---------------------------------------------------------------


def test_exact_law_point_values():
    assert sl.sphere_radius(1.0, 2, 0.125) == pytest.approx(math.sqrt(0.5))
    assert sl.sphere_radius(2.0, 3, 0.0) == 2.0
    assert sl.cylinder_radius(1.0, 2, 0.25) == pytest.approx(math.sqrt(0.5))
    assert sl.cylinder_radius(1.0, 3, 0.25) == 0.0


def test_rhs_point_values():
    for n in (2, 3, 5):
        R = math.sqrt(2 * (n - 1))
        assert sl.shrinker_rhs((0.7, R, 0.0), n)[2] == pytest.approx(0.0, abs=1e-15)
    dx, dr, dth = sl.shrinker_rhs((0.0, 1.0, 0.0), 2)
    assert (dx, dr) == (1.0, 0.0) and dth == pytest.approx(0.5)


def test_residual_changes_sign_across_the_doughnut(torus2):
    near_cyl = sl.shoot(2, math.sqrt(2) - 0.05).closure_residual
    small = sl.shoot(2, 0.1).closure_residual
    assert near_cyl * small < 0
    assert torus2.hole_radius < math.sqrt(2) < torus2.samples[:, 1].max()


def test_certified_relative_extinction_slack(torus2):
    margin = 0.9
    M = pk.sup_abs_phi0_second(pk.BumpSpec())
    eps0 = margin / math.sqrt(1 + M)
    lam, delta0, cert = sl.scale_and_pick_delta0(torus2, eps0, 2, margin)
    assert lam * torus2.thickness < 1 / 3
    assert cert["extinction_slack"] / cert["sphere_extinction"] >= 1 - margin**2 - 1e-12
    assert delta0 < lam * torus2.hole_radius
    assert cert["sphere_extinction"] == pytest.approx(eps0**2 / (288 * 2))


def test_barrier_point_values(torus2):
    params = pk.ConstructionParams(2, 0.12, 0.025, "simulation", 354.0)
    lam = sl.scale_and_pick_delta0(torus2, 0.12, 2, require_sphere_bound=False)[0]
    bars = sl.place_barriers(params, torus2, 1)
    d1 = [b for b in bars if b.kind == "doughnut" and b.level == 1][0]
    assert d1.extinction == pytest.approx(lam**2 / 4)
    s0 = [b for b in bars if b.kind == "sphere" and b.level == 0]
    assert sorted(b.center_axial for b in s0) == [1.0, 2.0]
    assert all(b.extinction == pytest.approx(0.12**2 / 576) for b in s0)
    # each sphere sits inside the flat part of the profile around its centre
    prof = pk.Profile.full(params)
    x = np.linspace(11 / 12, 7 / 6, 101)
    assert np.all(prof(x)[0] == 0.06)
