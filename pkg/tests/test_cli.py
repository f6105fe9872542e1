import json
import shutil

import numpy as np
import pytest

from pinchlab import profilekit as pk
from pinchlab.cli import main

# quarter-domain sphere of radius 1/2 at h = 1/32
SPHERE = ["--set", "run.shape=sphere", "--set", "run.sphere_radius=0.5",
          "--set", "grid.z_min=0", "--set", "grid.z_max=0.5", "--set", "grid.nz=17",
          "--set", "grid.r_max=0.5", "--set", "grid.nr=17",
          "--set", "schedule.t_end=1", "--set", "schedule.snapshot_every=10",
          "--set", "schedule.checkpoint_every=10"]
# smoke chain, 100 steps
CHAIN = ["--smoke", "--set", "schedule.t_end=1.2207e-4", "--set", "schedule.snapshot_every=10",
         "--set", "schedule.checkpoint_every=1"]


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


def test_build_profile_simulation_regime(tmp_path, capsys):
    assert run("build-profile", "--output", tmp_path) == 0
    cert = load(tmp_path / "certificate.json")
    assert cert["pass"] is True and cert["regime"] == "simulation"
    assert cert["self_similarity_residual"] <= 1e-12
    assert "config_hash" in cert["provenance"]
    assert "certificate: pass=True" in capsys.readouterr().out
    # re-certifying the exported samples gives the same verdict
    x, F, F1, F2, H = pk.read_profile_csv(tmp_path / "profile.csv")
    params = pk.ConstructionParams(2, cert["eps0"], cert["delta0"], "simulation", cert["M"])
    again = pk.certify_samples(x, F, F1, F2, 2, params, (0.0, 3.0))
    assert again.passed == cert["pass"]
    assert np.allclose(H, pk.mean_curvature_profile(F, F1, F2, 2), equal_nan=True)


def test_build_profile_certified_regime(tmp_path):
    code = run("build-profile", "--output", tmp_path, "--set", "profile.regime=certified",
               "--set", "profile.eps0=none", "--set", "profile.delta0=none")
    assert code == 0
    cert = load(tmp_path / "certificate.json")
    assert cert["one_plus_M_eps0_sq"] < 1
    assert cert["maxFFpp"] < 1 and cert["minH"] > 0
    torus = load(tmp_path / "torus.json")
    assert torus["barrier_certificate"]["hole_slack"] > 0


@pytest.mark.parametrize("item", ["profile.n=1", "profile.delta0=0.07", "grid.nr=12"])
def test_bad_config_exit_code(tmp_path, item, capsys):
    assert run("build-profile", "--output", tmp_path, "--set", item) == 4
    assert "error" in capsys.readouterr().err


def test_find_torus_other_dimension(tmp_path):
    assert run("find-torus", "--output", tmp_path, "--set", "profile.n=3") == 0
    t = load(tmp_path / "torus.json")
    assert t["n"] == 3 and abs(t["residual"]) <= 1e-8
    assert abs(t["a_star"] - 0.437124) > 1e-2


def test_sphere_simulate_and_detect(tmp_path):
    assert run("simulate", "--output", tmp_path, *SPHERE) == 0
    meta = load(tmp_path / "run.json")
    assert meta["terminated"] == "empty"
    assert run("detect", "--output", tmp_path, *SPHERE) == 0
    ep = load(tmp_path / "epochs.json")
    assert ep["summary"]["extinctions"] == 1
    assert ep["sphere_extinction_rel_err"] < 0.05
    nest = load(tmp_path / "nesting.json")
    assert nest["pass"] is True


def test_detect_without_run(tmp_path):
    assert run("detect", "--output", tmp_path / "nothing") == 4


def test_unstable_run_exit_code(tmp_path):
    assert run("simulate", "--output", tmp_path, *SPHERE, "--set", "schedule.cfl=4.0") == 3
    assert load(tmp_path / "run.json")["terminated"] == "unstable"
    assert run("detect", "--output", tmp_path, *SPHERE) == 3


def test_validate_negative_control_fails_loudly(tmp_path, capsys):
    code = run("validate", "--smoke", "--only", "C1", "--output", tmp_path, "--set", "schedule.cfl=4.0")
    assert code == 2
    out = capsys.readouterr().out
    assert "FAIL C1" in out and "instability" in out
    assert load(tmp_path / "validation.json")["criteria"][0]["pass"] is False


def test_chain_resume_is_bit_exact(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", "--output", a, *CHAIN) == 0
    shutil.copytree(a, b)
    mid = b / "snapshots" / "000050.axfl"
    assert mid.exists()
    assert run("simulate", "--output", b, *CHAIN, "--resume", mid) == 0
    names = sorted(p.name for p in (a / "snapshots").glob("*.axfl"))
    assert names[-1] == "000100.axfl"
    for name in names:
        assert (a / "snapshots" / name).read_bytes() == (b / "snapshots" / name).read_bytes()
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()


def test_chain_run_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("simulate", "--output", d, *CHAIN) == 0
        assert run("detect", "--output", d, *CHAIN) == 0
    for name in ("run.csv", "epochs.json", "snapshots/000100.axfl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = (a / "run.csv").read_text().splitlines()
    assert rows[0].startswith("t,")
    vol = np.loadtxt(a / "run.csv", delimiter=",", skiprows=1, usecols=rows[0].split(",").index("volume"))
    assert np.all(np.diff(vol) < 0)


def test_smoke_chain_cascade(tmp_path):
    assert run("simulate", "--output", tmp_path, "--smoke") == 0
    assert run("detect", "--output", tmp_path, "--smoke") == 0
    header = (tmp_path / "run.csv").read_text().splitlines()[0].split(",")
    counts = np.loadtxt(tmp_path / "run.csv", delimiter=",", skiprows=1, usecols=header.index("n_components"))
    assert np.count_nonzero(np.diff(counts)) >= 3
    epochs = load(tmp_path / "epochs.json")["epochs"]
    first = {}
    for e in epochs:
        if e["kind"] == "pinch" and e["k_guess"] is not None:
            first.setdefault(e["k_guess"], e["t_hi"])
            assert e["t_hi"] < e["barrier_extinction"]
    assert sorted(first) == [0, 1, 2]
    for k in (0, 1):
        assert 0.15 <= first[k + 1] / first[k] <= 0.35


def test_run_without_topology_change_has_empty_report(tmp_path):
    short = [a if a != "schedule.t_end=1" else "schedule.t_end=0.01" for a in SPHERE]
    assert run("simulate", "--output", tmp_path, *short) == 0
    assert run("detect", "--output", tmp_path, *short) == 0
    ep = load(tmp_path / "epochs.json")
    assert ep["epochs"] == [] and ep["summary"]["pinches"] == 0
