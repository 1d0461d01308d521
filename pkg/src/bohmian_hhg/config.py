"""Plain-text run configuration: ``section.key = value`` lines with validated defaults.

Absent keys take the default run (E0 = 0.075, omega = 0.057, long-range
soft-core potential, 2.25-cycle ramps around a 10-cycle flat top). Lines
starting with ``#`` and blank lines are ignored; everything after an inline
``#`` is a comment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import (DEFAULT_EXCURSION_CYCLES, DEFAULT_POINTS_PER_HALF_CYCLE, DEFAULT_STEPS_PER_CYCLE,
                        DEFAULT_X_EXIT)
from .core import SpatialGrid
from .errors import BohmianHHGError, ConfigurationError
from .potentials import PotentialSpec, PotentialVariant, PulseSpec
from .tdse import Absorber, PropagationSchedule


@dataclass
class GridSection:
    x_min: float = -800.0
    x_max: float = 800.0
    n_points: int = 16384


@dataclass
class PotentialSection:
    variant: str = "softcore-long"
    a0: float = 5.0
    L: float = 50.0


@dataclass
class PulseSection:
    E0: float = 0.075
    omega: float = 0.057
    n_ramp: float = 2.25
    n_flat: float = 10.0


@dataclass
class ScheduleSection:
    steps_per_cycle: int = 4096
    snapshot_stride: int = 2
    record_stride: int = 1
    absorber: bool = True
    absorber_width: float = 100.0
    write_snapshots: bool = False


@dataclass
class BohmianSection:
    x0_min: float = -3.0
    x0_max: float = 3.0
    n_ensemble: int = 61
    central: float = 0.0
    peripheral: float = 1.8
    rho_floor: float = 1e-12
    n_equivariance: int = 2000
    max_strain: float = 0.2
    max_substeps: int = 256


@dataclass
class ClassicalSection:
    points_per_half_cycle: int = DEFAULT_POINTS_PER_HALF_CYCLE
    excursion_cycles: float = DEFAULT_EXCURSION_CYCLES
    x_exit: float = DEFAULT_X_EXIT
    steps_per_cycle: int = DEFAULT_STEPS_PER_CYCLE
    scheme: str = "escape"


@dataclass
class SpectralSection:
    window: str = "hann"
    sigma: str = "auto"
    harmonic_max: float = 80.0
    harmonic_step: float = 0.1
    points_per_cycle: int = 40
    plateau_lo: float = 15.0
    plateau_hi: float = 30.0
    drop_db: float = 20.0


@dataclass
class EigenSection:
    n_states: int = 7


@dataclass
class RunSection:
    seed: int = 1


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    pulse: PulseSection = field(default_factory=PulseSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    bohmian: BohmianSection = field(default_factory=BohmianSection)
    classical: ClassicalSection = field(default_factory=ClassicalSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    eigen: EigenSection = field(default_factory=EigenSection)
    run: RunSection = field(default_factory=RunSection)

    # -- derived module-level specs -----------------------------------------
    def grid_spec(self) -> SpatialGrid:
        g = self.grid
        return SpatialGrid(g.x_min, g.x_max, g.n_points)

    def potential_spec(self, variant: str | None = None) -> PotentialSpec:
        p = self.potential
        return PotentialSpec(PotentialVariant.parse(variant or p.variant), p.a0, p.L)

    def pulse_spec(self) -> PulseSpec:
        p = self.pulse
        return PulseSpec(p.E0, p.omega, p.n_ramp, p.n_flat)

    def schedule_spec(self) -> PropagationSchedule:
        s = self.schedule
        pulse = self.pulse_spec()
        return PropagationSchedule(
            dt=pulse.period / s.steps_per_cycle, t_end=pulse.t_final,
            snapshot_stride=s.snapshot_stride, record_stride=s.record_stride,
            absorber=Absorber(s.absorber_width) if s.absorber else None)

    def ensemble_x0(self) -> np.ndarray:
        b = self.bohmian
        return np.linspace(b.x0_min, b.x0_max, b.n_ensemble)

    def gabor_sigma(self) -> float | None:
        """Window width in a.u., or None for the default of one third of a cycle / 2 pi."""
        s = self.spectral.sigma
        return None if s == "auto" else float(s)

    def as_lines(self) -> list[str]:
        """Every key in ``section.key = value`` form, in declaration order."""
        out = []
        for sec in dataclasses.fields(self):
            for f in dataclasses.fields(getattr(self, sec.name)):
                out.append(f"{sec.name}.{f.name} = {_format(getattr(getattr(self, sec.name), f.name))}")
        return out

    def validate(self) -> "RunConfig":
        """Build every derived spec once so module invariants are checked up front."""
        try:
            self.grid_spec()
            self.potential_spec()
            # eigen and fig3 always build the truncated variant as well
            self.potential_spec("truncated")
            self.schedule_spec()
        except ConfigurationError:
            raise
        except BohmianHHGError as exc:
            raise ConfigurationError(str(exc)) from None
        b, c, s = self.bohmian, self.classical, self.spectral
        checks = [
            (b.n_ensemble >= 2, "bohmian.n_ensemble must be >= 2"),
            (b.x0_min < b.x0_max, "bohmian.x0_min must be < bohmian.x0_max"),
            (b.rho_floor > 0, "bohmian.rho_floor must be > 0"),
            (b.n_equivariance >= 0, "bohmian.n_equivariance must be >= 0"),
            (b.max_strain > 0, "bohmian.max_strain must be > 0"),
            (b.max_substeps >= 1, "bohmian.max_substeps must be >= 1"),
            (c.points_per_half_cycle >= 1, "classical.points_per_half_cycle must be >= 1"),
            (c.excursion_cycles > 0, "classical.excursion_cycles must be > 0"),
            (c.x_exit > 0, "classical.x_exit must be > 0"),
            (c.steps_per_cycle >= 16, "classical.steps_per_cycle must be >= 16"),
            (c.scheme in ("escape", "turning-point"), "classical.scheme must be escape or turning-point"),
            (s.window in ("none", "hann"), "spectral.window must be none or hann"),
            (s.harmonic_max > 0 and s.harmonic_step > 0, "spectral harmonic grid must be positive"),
            (s.points_per_cycle >= 2, "spectral.points_per_cycle must be >= 2"),
            (0 <= s.plateau_lo < s.plateau_hi, "spectral plateau band must satisfy 0 <= lo < hi"),
            (s.drop_db > 0, "spectral.drop_db must be > 0"),
            (self.eigen.n_states >= 1, "eigen.n_states must be >= 1"),
            (self.schedule.steps_per_cycle >= 16, "schedule.steps_per_cycle must be >= 16"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigurationError(msg)
        if s.sigma != "auto":
            try:
                sigma = float(s.sigma)
            except ValueError:
                raise ConfigurationError(f"spectral.sigma must be a number or 'auto', got {s.sigma!r}") from None
            if not sigma > 0:
                raise ConfigurationError(f"spectral.sigma must be > 0, got {sigma}")
        grid = self.grid_spec()
        x0 = np.concatenate([self.ensemble_x0(), [b.central, b.peripheral]])
        if not np.all(grid.contains(x0)):
            raise ConfigurationError("bohmian start positions must lie inside the grid")
        return self


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(raw: str, default, key: str, line: int):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigurationError(f"{key} expects true/false, got {raw!r}", line=line)
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            try:
                v = float(raw)
            except ValueError:
                v = None
            if v is None or not v.is_integer():
                raise ConfigurationError(f"{key} expects an integer, got {raw!r}", line=line) from None
            return int(v)
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigurationError(f"{key} expects a number, got {raw!r}", line=line) from None
    return raw


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"expected 'section.key = value', got {body!r}", line=lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key.count(".") != 1 or not raw:
            raise ConfigurationError(f"expected 'section.key = value', got {body!r}", line=lineno)
        sec_name, name = key.split(".")
        section = getattr(cfg, sec_name, None) if sec_name in _SECTIONS else None
        if section is None or name not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigurationError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigurationError(f"duplicate key {key!r} (first set on line {seen[key]})", line=lineno)
        seen[key] = lineno
        value = _coerce(raw, getattr(section, name), key, lineno)
        if key == "potential.variant":
            try:
                value = PotentialVariant.parse(value).value
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), line=lineno) from None
        setattr(section, name, value)
    return cfg.validate()


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file; missing keys take their defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


_SECTIONS = {f.name for f in dataclasses.fields(RunConfig)}
