import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinchlab import profilekit as pk

SPEC = pk.BumpSpec()


@pytest.fixture(scope="module")
def M():
    return pk.sup_abs_phi0_second(SPEC)


@pytest.fixture(scope="module")
def sim_params(M):
    return pk.select_params(M, 2, "simulation", eps0=0.12, delta0=0.025)


@pytest.fixture(scope="module")
def cert_params(M):
    # explicit delta0 so the fixture does not need the doughnut search
    eps = 0.9 / math.sqrt(1.0 + M)
    return pk.select_params(M, 2, "certified", delta0=0.2 * eps)


# -- smooth step -------------------------------------------------------------


def test_phi0_plateaus():
    x0 = np.linspace(0.0, 1 / 6, 50)
    x1 = np.linspace(1 / 3, 0.5, 50)
    assert np.all(pk.eval_phi0(SPEC, x0)[0] == 0.0)
    assert np.all(pk.eval_phi0(SPEC, x1)[0] == 1.0)
    v, d1, d2 = pk.eval_phi0(SPEC, 0.25)
    assert v == pytest.approx(0.5, abs=1e-15)  # symmetric step


def test_phi0_domain():
    with pytest.raises(ValueError):
        pk.eval_phi0(SPEC, 0.6)
    with pytest.raises(ValueError):
        pk.eval_phi0(SPEC, -1e-9)


@given(st.floats(1 / 6 + 1e-3, 1 / 3 - 1e-3))
def test_phi0_derivatives_match_differences(x):
    eps = 1e-6
    v0, d1, d2 = pk.eval_phi0(SPEC, x)
    vp, d1p, _ = pk.eval_phi0(SPEC, x + eps)
    vm, d1m, _ = pk.eval_phi0(SPEC, x - eps)
    assert d1 == pytest.approx((vp - vm) / (2 * eps), rel=1e-5, abs=1e-6)
    assert d2 == pytest.approx((d1p - d1m) / (2 * eps), rel=1e-5, abs=1e-4)
    assert d1 >= 0.0


def _mp_phi0(x):
    # independent oracle: the step written out in mpmath, derivatives by
    # high precision numerical differentiation
    s = (x - mpmath.mpf(1) / 6) * 6
    if s <= 0:
        return mpmath.mpf(0)
    if s >= 1:
        return mpmath.mpf(1)
    a = mpmath.e ** (-1 / s)
    b = mpmath.e ** (-1 / (1 - s))
    return a / (a + b)


def test_sup_phi0_second_against_mpmath(M):
    """[DERIVED] M from mpmath derivatives and a root of the third derivative."""
    mpmath.mp.dps = 40
    xs = np.linspace(1 / 6 + 1e-3, 1 / 3 - 1e-3, 241)
    vals = [abs(float(mpmath.diff(_mp_phi0, mpmath.mpf(x), 2))) for x in xs]
    i = int(np.argmax(vals))
    x_star = mpmath.findroot(
        lambda y: mpmath.diff(_mp_phi0, y, 3), (mpmath.mpf(xs[i - 1]), mpmath.mpf(xs[i + 1])), solver="illinois"
    )
    oracle = abs(float(mpmath.diff(_mp_phi0, x_star, 2)))
    mpmath.mp.dps = 15
    assert M == pytest.approx(oracle, rel=1e-9)
    assert M == pytest.approx(354.2775, abs=1e-3)


# -- parameters --------------------------------------------------------------


def test_certified_eps0_condition(M):
    p = pk.select_params(M, 2, "certified", safety=0.9, delta0=0.01)
    assert (1 + M) * p.eps0**2 == pytest.approx(0.81)
    with pytest.raises(ValueError):
        pk.ConstructionParams(2, 0.2, 0.05, "certified", M)  # (1+M) 0.04 > 1


def test_delta0_contract(M):
    with pytest.raises(ValueError):
        pk.ConstructionParams(2, 0.12, 0.06, "simulation", M)
    with pytest.raises(ValueError):
        pk.ConstructionParams(2, 0.12, 0.0, "simulation", M)
    with pytest.raises(ValueError):
        pk.ConstructionParams(1, 0.12, 0.02, "simulation", M)
    with pytest.raises(ValueError):
        pk.select_params(M, 2, "simulation", eps0=0.12)


# -- blocks and the full profile --------------------------------------------


def test_block_values(sim_params):
    p = sim_params
    assert pk.eval_f_delta(p, 0.025, 1.5)[0] == pytest.approx(0.025)
    assert pk.eval_f_delta(p, 0.025, 2.0)[0] == pytest.approx(p.eps0)
    assert pk.eval_f_delta(p, 0.025, 1.0 + 1e-12)[0] == pytest.approx(p.eps0 / 2)
    with pytest.raises(ValueError):
        pk.eval_f_delta(p, 0.07, 1.5)


def test_neck_values(sim_params):
    """[DERIVED] F(3 2^-(k+1)) = delta0 2^-k from the dyadic scaling."""
    prof = pk.Profile.full(sim_params)
    for k in range(8):
        assert prof(3.0 * 2.0 ** -(k + 1))[0] == pytest.approx(0.025 * 2.0**-k, rel=1e-14)


@settings(max_examples=300)
@given(st.floats(1e-6, 1.0, exclude_min=False))
def test_self_similarity_property(x):
    prof = pk.Profile.full(pk.ConstructionParams(2, 0.12, 0.025, "simulation", 354.0))
    v, d1, d2 = prof(x)
    w, e1, e2 = prof(2 * x)
    assert w == 2 * v
    assert e1 == d1
    assert e2 == d2 / 2


def test_self_similarity_residual(sim_params):
    prof = pk.Profile.full(sim_params)
    assert pk.check_self_similarity(prof, 10_000) <= 1e-12


def test_truncated_matches_full_right_of_cut(sim_params):
    full = pk.Profile.full(sim_params)
    for k in (1, 2, 3):
        prof = pk.Profile.truncated(sim_params, k)
        x = np.linspace(2.0 ** (1 - k) + 1e-9, 3.0, 2001)
        assert np.array_equal(prof(x)[0], full(x)[0])
        xc = np.linspace(2.0**-k, 2.0 ** (1 - k), 11)
        assert np.allclose(prof(xc)[0], 0.12 * 2.0**-k)
    assert prof.neck_stations() == [1.5, 0.75, 0.375]


def test_profile_positive_inside(sim_params):
    for prof in (pk.Profile.full(sim_params), pk.Profile.truncated(sim_params, 3)):
        x = np.linspace(1e-3, 3 - 1e-6, 5001)
        assert np.all(prof(x)[0] > 0)
        assert prof(0.0)[0] == 0.0 and prof(3.0)[0] == 0.0


# -- mean curvature and certificates ----------------------------------------


@given(st.floats(0.1, 5.0), st.integers(2, 5))
def test_mean_curvature_cylinder(R, n):
    assert pk.mean_curvature_profile(R, 0.0, 0.0, n) == pytest.approx((n - 1) / R)


@given(st.floats(0.5, 3.0), st.floats(-0.9, 0.9), st.integers(2, 5))
def test_mean_curvature_sphere(R, s, n):
    x = s * R
    f = math.sqrt(R * R - x * x)
    f1 = -x / f
    f2 = -R * R / f**3
    assert pk.mean_curvature_profile(f, f1, f2, n) == pytest.approx(n / R, rel=1e-9)


def test_certified_certificate(cert_params):
    prof = pk.Profile.full(cert_params)
    cert = pk.certify_mean_convex(prof, (2.0**-6, 3.0 - 1e-6))
    assert cert.passed
    assert cert.minH > 0
    assert cert.maxFFpp < 1
    assert (1 + cert.M) * cert.eps0**2 < 1


def test_simulation_certificate_is_numerical(sim_params):
    prof = pk.Profile.full(sim_params)
    cert = pk.certify_mean_convex(prof, (2.0**-6, 3.0 - 1e-6))
    assert cert.analytic_bound is None
    assert cert.passed == (cert.minH > 0)


def test_csv_roundtrip_same_verdict(tmp_path, sim_params):
    prof = pk.Profile.full(sim_params)
    path = tmp_path / "profile.csv"
    pk.write_profile_csv(prof, path, num_samples=2000)
    x, F, F1, F2, H = pk.read_profile_csv(path)
    direct = pk.certify_samples(x, *prof(x), 2, sim_params, (0.0, 3.0))
    reread = pk.certify_samples(x, F, F1, F2, 2, sim_params, (0.0, 3.0))
    assert direct.passed == reread.passed
    assert direct.minH == reread.minH


def test_cap_convex_and_flat():
    cap = pk.build_cap(0.12)
    x = np.linspace(0.0, 1 / 6, 20)
    assert np.all(cap.evaluate(x)[0] == 0.12)
    xm = np.linspace(0.2, 0.999, 400)
    assert np.all(cap.evaluate(xm)[2] <= 0)  # concave graph, convex cap
    assert cap.evaluate(1.0)[0] == 0.0
    with pytest.raises(ValueError):
        pk.build_cap(0.12, shape=0.5)


def test_profile_curve_spacing(sim_params):
    prof = pk.Profile.truncated(sim_params, 2)
    poly = pk.profile_curve(prof, 0.01)
    seg = np.hypot(*np.diff(poly, axis=0).T)
    assert seg.max() <= 0.01
    assert tuple(poly[0]) == (0.0, 0.0) and tuple(poly[-1]) == (3.0, 0.0)


# -- point contracts -------------------------------------------------------------


def test_phi0_point_values():
    assert tuple(map(float, pk.eval_phi0(SPEC, 0.10))) == (0.0, 0.0, 0.0)
    assert tuple(map(float, pk.eval_phi0(SPEC, 0.45))) == (1.0, 0.0, 0.0)
    v, d1, d2 = pk.eval_phi0(SPEC, 0.25)
    assert 0 < v < 1 and d1 > 0
    e = 1e-5
    vp, d1p, _ = pk.eval_phi0(SPEC, 0.25 + e)
    vm, d1m, _ = pk.eval_phi0(SPEC, 0.25 - e)
    assert d1 == pytest.approx((vp - vm) / (2 * e), rel=1e-6)
    # phi0''(1/4) vanishes by symmetry, compare absolutely on the scale of M
    assert abs(d2 - (d1p - d1m) / (2 * e)) <= 1e-6 * 354


def test_M_refinement_and_pointwise(M):
    assert M > 0
    fine = pk.sup_abs_phi0_second(SPEC, 1_000_000)
    assert abs(fine - M) <= 0.01 * M
    for x in (0.2, 0.25, 0.3):
        assert M >= abs(float(pk.eval_phi0(SPEC, x)[2]))


def test_select_params_edge_cases(M):
    assert pk.select_params(0.0, 2, "certified", 0.9, delta0=0.1).eps0 == pytest.approx(0.9)
    with pytest.raises(ValueError):
        pk.select_params(99.0, 2, "certified", 1.0, delta0=0.01)  # (1+99) 0.1^2 = 1
    p = pk.select_params(M, 2, "certified", delta0=0.005)
    assert (1 + p.M) * p.eps0**2 < 1


def test_block_point_values(sim_params):
    p = sim_params
    assert float(pk.eval_f_delta(p, 0.025, 2.0)[0]) == pytest.approx(0.12, abs=1e-15)
    assert float(pk.eval_f_delta(p, 0.025, 1.55)[0]) == 0.025
    assert float(pk.eval_f_delta(p, 0.025, 0.5)[0]) == 0.0


def test_cap_point_values():
    cap = pk.build_cap(0.12)
    assert float(cap.evaluate(0.1)[0]) == 0.12
    assert tuple(cap.samples[-1]) == (1.0, 0.0)
    assert cap.tip_curvature > 0
    # discrete curvature of the parametric samples keeps one sign
    xy = cap.samples
    assert len(xy) >= 1000
    d = np.diff(xy, axis=0)
    cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
    assert np.all(cross <= 1e-15)


def test_profile_point_values(sim_params):
    prof = pk.Profile.full(sim_params)
    assert float(prof(1.5)[0]) == 0.025
    assert float(prof(0.75)[0]) == 0.0125
    assert float(prof(1.0)[0]) == 2 * float(prof(0.5)[0])
    # the k = 0 spheres of radius eps0/12 at x = 1, 2 sit where F = eps0/2
    x = np.linspace(11 / 12, 7 / 6, 200)
    assert np.allclose(prof(x)[0], 0.06, atol=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_truncated_point_values(sim_params, k):
    prof = pk.Profile.truncated(sim_params, k)
    assert float(prof(1.5 * 2.0**-k)[0]) == pytest.approx(0.12 * 2.0**-k)
    assert float(prof(1e-12)[0]) < 1e-5 * 2.0**-k
    j = 2.0 ** (1 - k)
    left = float(prof(j)[0])
    right = float(prof(j * (1 + 1e-12))[0])
    assert left == pytest.approx(0.12 * 2.0**-k) and right == pytest.approx(left, rel=1e-9)


def test_mean_curvature_point_values():
    assert pk.mean_curvature_profile(1.0, 0.0, -1.0, 2) == pytest.approx(2.0)
    assert pk.mean_curvature_profile(1.0, 0.0, -1.0, 4) == pytest.approx(4.0)
    eps0, c = 0.12, 8.0  # eps0 c < 1 with c > 0 still gives H > 0 for n = 2
    assert pk.mean_curvature_profile(eps0, 0.0, c, 2) > 0


def test_certificate_pieces(cert_params):
    prof = pk.Profile.full(cert_params)
    block = pk.certify_mean_convex(prof, (1.0, 2.0))
    assert block.passed and block.maxFFpp < 1
    assert pk.certify_mean_convex(prof, (2.0, 3.0 - 1e-9)).passed


@pytest.mark.parametrize("regime", ["certified", "simulation"])
def test_mean_curvature_dilation(regime, cert_params, sim_params):
    """H doubles under the halving x -> x/2 of the profile."""
    prof = pk.Profile.full(cert_params if regime == "certified" else sim_params)
    x = np.linspace(1.0, 2.0, 20_001)[1:]
    H1 = pk.mean_curvature_profile(*prof(x), 2)
    H2 = pk.mean_curvature_profile(*prof(x / 2), 2)
    assert np.allclose(H2, 2 * H1, rtol=1e-12)
    assert H2.min() == pytest.approx(2 * H1.min(), rel=1e-8)


def test_self_similarity_point():
    prof = pk.Profile.full(pk.ConstructionParams(2, 0.12, 0.025, "simulation", 354.0))
    assert float(prof(1.0)[0]) - 2 * float(prof(0.5)[0]) == 0.0
    with pytest.raises(ValueError):
        pk.check_self_similarity(pk.Profile.truncated(prof.params, 2))


# -- assembly invariants -----------------------------------------------------------


@pytest.mark.parametrize("x0", [0.5, 1.0, 1.5, 2.0])
def test_profile_continuous_at_junctions(sim_params, x0):
    prof = pk.Profile.full(sim_params)
    lo = np.array(prof(x0 * (1 - 1e-13)))
    at = np.array(prof(x0))
    hi = np.array(prof(x0 * (1 + 1e-13)))
    assert np.max(np.abs(lo - at)) <= 1e-12 and np.max(np.abs(hi - at)) <= 1e-12


def test_exactly_one_term_is_active(sim_params):
    prof = pk.Profile.full(sim_params)
    rng = np.random.default_rng(7)
    x = rng.uniform(0.0, 2.0, 2000)
    x = x[x > 0]
    k = np.floor(-np.log2(x)).astype(int) + 1
    k[np.ldexp(x, k) > 2.0] -= 1  # keep 2^k x in (1, 2]
    arg = np.ldexp(x, k)
    assert np.all((arg > 1.0) & (arg <= 2.0))
    term = np.ldexp(pk.eval_f_delta(sim_params, sim_params.delta0, arg)[0], -k)
    assert np.array_equal(prof(x)[0], term)
    xc = rng.uniform(2.0, 3.0, 500)[1:]
    assert np.array_equal(prof(xc)[0], prof.cap.evaluate(xc - 2.0)[0])


def test_profile_derivatives_against_differences(sim_params):
    prof = pk.Profile.full(sim_params)
    rng = np.random.default_rng(11)
    x = rng.uniform(0.5, 2.9, 1000)
    e = 1e-5
    v, d1, d2 = prof(x)
    vp, d1p, _ = prof(x + e)
    vm, d1m, _ = prof(x - e)
    assert np.max(np.abs(d1 - (vp - vm) / (2 * e))) <= 1e-6 * np.max(np.abs(d1))
    assert np.max(np.abs(d2 - (d1p - d1m) / (2 * e))) <= 1e-6 * np.max(np.abs(d2))


def test_deep_block_derivatives_against_richardson(sim_params):
    # below x = 1/2 the bump is steep enough that the O(e^2) error of a plain
    # central difference exceeds 1e-6, so extrapolate out the leading term
    prof = pk.Profile.full(sim_params)
    x = np.random.default_rng(12).uniform(2.0**-6, 0.5, 1000)
    e = 1e-6

    def cd(k, step):
        return (prof(x + step)[k] - prof(x - step)[k]) / (2 * step)

    _, d1, d2 = prof(x)
    for d, k in ((d1, 0), (d2, 1)):
        rich = (4 * cd(k, e) - cd(k, 2 * e)) / 3
        assert np.max(np.abs(d - rich)) <= 1e-6 * np.max(np.abs(d))
