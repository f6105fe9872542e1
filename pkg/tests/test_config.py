import pytest
from hypothesis import given
from hypothesis import strategies as st

from pinchlab.config import ConfigError, ExperimentConfig, default_config, parse_overrides


def test_default_roundtrip():
    cfg = default_config()
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.digest() == cfg.digest()
    assert cfg.grid.h == pytest.approx(1 / 512)


@given(st.floats(1e-6, 1.0, allow_nan=False), st.floats(0.01, 0.99), st.integers(1, 1000))
def test_values_roundtrip_exactly(t_end, cfl, every):
    cfg = default_config().with_overrides(
        [("schedule.t_end", repr(t_end)), ("schedule.cfl", repr(cfl)), ("schedule.snapshot_every", str(every))]
    )
    back = ExperimentConfig.from_ini(cfg.to_ini())
    assert back.schedule.t_end == t_end and back.schedule.cfl == cfl
    assert back.schedule.snapshot_every == every


def test_overrides_and_digest(tmp_path):
    cfg = default_config()
    other = cfg.with_overrides(parse_overrides(["profile.n=3", "run.joint_barriers=yes", "schedule.eps_reg=1e-9"]))
    assert other.profile.n == 3 and other.run.joint_barriers is True
    assert other.schedule.eps_reg == 1e-9
    assert other.digest() != cfg.digest()
    other.save(tmp_path / "c.ini")
    assert ExperimentConfig.load(tmp_path / "c.ini") == other


@pytest.mark.parametrize(
    "item",
    [
        "profile.n=1",
        "profile.delta0=0.06",  # not below eps0 / 2
        "profile.regime=other",
        "grid.nr=50",  # spacing no longer uniform
        "grid.z_bc=mirror",
        "schedule.cfl=0",
        "schedule.snapshot_every=0",
        "run.shape=cube",
        "run.bogus=1",
        "nosection.key=1",
        "profile.n=two",
        "run.joint_barriers=maybe",
    ],
)
def test_bad_values_are_rejected(item):
    with pytest.raises(ConfigError):
        default_config().with_overrides(parse_overrides([item]))


def test_bad_ini():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("[weird]\na = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini("not an ini")
    with pytest.raises(ConfigError):
        parse_overrides(["profile.n"])


def test_cfl_above_one_is_accepted_for_negative_controls():
    assert default_config().with_overrides([("schedule.cfl", "4.0")]).schedule.cfl == 4.0
