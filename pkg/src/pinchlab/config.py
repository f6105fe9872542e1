"""Experiment configuration: INI sections with exact float round-trip."""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

__all__ = [
    "ConfigError",
    "ProfileSection",
    "GridSection",
    "ScheduleSection",
    "RunSection",
    "ExperimentConfig",
    "default_config",
    "parse_overrides",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSection:
    n: int = 2
    regime: str = "simulation"
    eps0: float | None = 0.12
    delta0: float | None = 0.025
    beads_k_max: int = 2
    safety: float = 0.9
    margin: float = 0.9
    seed: int = 0


@dataclass(frozen=True)
class GridSection:
    nz: int = 1549
    nr: int = 71
    z_min: float = -6.0 / 512.0
    z_max: float = 1542.0 / 512.0
    r_max: float = 70.0 / 512.0
    z_bc: str = "extrapolate"

    @property
    def h(self) -> float:
        return (self.z_max - self.z_min) / (self.nz - 1)

    @classmethod
    def covering(cls, z_lo: float, z_hi: float, r_hi: float, h: float, z_bc: str = "extrapolate"):
        i0 = math.floor(z_lo / h + 1e-9)
        i1 = math.ceil(z_hi / h - 1e-9)
        nr = math.ceil(r_hi / h - 1e-9) + 1
        return cls(i1 - i0 + 1, nr, i0 * h, i1 * h, (nr - 1) * h, z_bc)


@dataclass(frozen=True)
class ScheduleSection:
    t_end: float = 4.0e-4
    cfl: float = 0.4
    reinit_every: int = 10
    snapshot_every: int = 1
    eps_reg: float | None = None
    checkpoint_every: int = 100


@dataclass(frozen=True)
class RunSection:
    shape: str = "chain"  # chain | single_bead | sphere
    sphere_radius: float = 1.0
    joint_barriers: bool = False
    certify_lo: float = 2.0**-6
    certify_hi: float = 3.0 - 1e-6
    output: str = "runs/default"


_SECTIONS = {
    "profile": ProfileSection,
    "grid": GridSection,
    "schedule": ScheduleSection,
    "run": RunSection,
}
_SHAPES = ("chain", "single_bead", "sphere")


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, typ, name: str):
    t = text.strip()
    optional = "None" in str(typ)
    if optional and t.lower() in ("none", "auto", ""):
        return None
    base = str(typ).replace(" | None", "")
    if base == "bool":
        if t.lower() in ("true", "yes", "1", "on"):
            return True
        if t.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{name}: cannot parse {text!r} as bool")
    try:
        if base == "int":
            return int(t)
        if base == "float":
            return float(t)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {base}") from None
    return t


@dataclass(frozen=True)
class ExperimentConfig:
    profile: ProfileSection = field(default_factory=ProfileSection)
    grid: GridSection = field(default_factory=GridSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        p, g, s, r = self.profile, self.grid, self.schedule, self.run
        if p.n < 2:
            raise ConfigError("profile.n must be >= 2")
        if p.regime not in ("certified", "simulation"):
            raise ConfigError(f"profile.regime must be certified or simulation, got {p.regime!r}")
        if p.regime == "simulation":
            if p.eps0 is None or p.delta0 is None:
                raise ConfigError("simulation regime needs profile.eps0 and profile.delta0")
            if not 0.0 < p.eps0 < 1.0:
                raise ConfigError("profile.eps0 must lie in (0, 1)")
            if not 0.0 < p.delta0 < p.eps0 / 2.0:
                raise ConfigError("profile.delta0 must lie in (0, eps0/2)")
        if p.beads_k_max < 0:
            raise ConfigError("profile.beads_k_max must be >= 0")
        if g.nz < 3 or g.nr < 3:
            raise ConfigError("grid needs at least 3 nodes per direction")
        hz = (g.z_max - g.z_min) / (g.nz - 1)
        hr = g.r_max / (g.nr - 1)
        if not (hz > 0 and abs(hz - hr) <= 1e-9 * hz):
            raise ConfigError(f"grid spacing must be uniform: dz={hz!r}, dr={hr!r}")
        if g.z_bc not in ("extrapolate", "reflect", "periodic"):
            raise ConfigError(f"grid.z_bc unknown: {g.z_bc!r}")
        # cfl < 1 is the supported range; the scheme itself breaks down near
        # cfl = 2.5 (dt = h^2/2).  Larger values are accepted so the
        # instability guard can be exercised
        if not s.cfl > 0.0:
            raise ConfigError("schedule.cfl must be positive")
        if s.t_end <= 0 or s.snapshot_every < 1 or s.reinit_every < 0 or s.checkpoint_every < 0:
            raise ConfigError("bad schedule")
        if r.shape not in _SHAPES:
            raise ConfigError(f"run.shape must be one of {_SHAPES}")

    # -- serialization -------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name in _SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, overrides=()) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise ConfigError(str(err)) from None
        raw = {name: dict(cp[name]) if cp.has_section(name) else {} for name in _SECTIONS}
        for unknown in set(cp.sections()) - set(_SECTIONS):
            raise ConfigError(f"unknown section [{unknown}]")
        for key, value in overrides:
            sec, _, k = key.partition(".")
            if sec not in _SECTIONS or not k:
                raise ConfigError(f"override key must be section.key, got {key!r}")
            raw[sec][k] = value
        built = {}
        for name, typ in _SECTIONS.items():
            known = {f.name: f for f in fields(typ)}
            kw = {}
            for k, v in raw[name].items():
                if k not in known:
                    raise ConfigError(f"unknown key {name}.{k}")
                kw[k] = _parse(v, known[k].type, f"{name}.{k}")
            built[name] = typ(**kw)
        return cls(**built)

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text(), overrides)

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def with_overrides(self, overrides) -> "ExperimentConfig":
        return ExperimentConfig.from_ini(self.to_ini(), overrides)

    def replace(self, **sections) -> "ExperimentConfig":
        return replace(self, **sections)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def parse_overrides(items) -> list[tuple[str, str]]:
    """``["grid.nz=100", ...]`` to ``[("grid.nz", "100"), ...]``."""
    out = []
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        out.append((key.strip(), value.strip()))
    return out
