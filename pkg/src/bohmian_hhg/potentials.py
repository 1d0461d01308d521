"""Soft-core binding potentials, the flat-top laser pulse and strong-field scales."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ContractViolation


class PotentialVariant(str, Enum):
    SOFTCORE_LONG = "softcore-long"
    SOFTCORE_TRUNCATED = "softcore-truncated"

    @classmethod
    def parse(cls, name: str) -> "PotentialVariant":
        if isinstance(name, cls):
            return name
        aliases = {
            "softcore": cls.SOFTCORE_LONG, "long": cls.SOFTCORE_LONG, "sc": cls.SOFTCORE_LONG,
            "truncated": cls.SOFTCORE_TRUNCATED, "tr": cls.SOFTCORE_TRUNCATED,
        }
        key = str(name).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"unknown potential variant {name!r}") from None


@dataclass(frozen=True)
class PotentialSpec:
    """``V(x) = -f(x)/sqrt(x^2 + 1)`` with ``f = 1`` or a cos^7 taper on ``a0 <= |x| <= L``."""

    variant: PotentialVariant = PotentialVariant.SOFTCORE_LONG
    a0: float = 5.0
    L: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "variant", PotentialVariant.parse(self.variant))
        if self.variant is PotentialVariant.SOFTCORE_TRUNCATED and not 0 < self.a0 < self.L:
            raise ConfigurationError(f"truncated potential needs 0 < a0 < L, got a0={self.a0}, L={self.L}")

    @property
    def truncated(self) -> bool:
        return self.variant is PotentialVariant.SOFTCORE_TRUNCATED

    @property
    def tag(self) -> str:
        return "truncated" if self.truncated else "softcore"

    def __call__(self, x):
        return potential_value(self, x)

    def gradient(self, x):
        return potential_gradient(self, x)


def _mask(spec: PotentialSpec, x):
    """Truncation factor f(x) and its derivative."""
    ax = np.abs(x)
    if not spec.truncated:
        return np.ones_like(ax), np.zeros_like(ax)
    a0, L = spec.a0, spec.L
    c = 0.5 * np.pi / (L - a0)
    u = c * np.clip(ax - a0, 0.0, L - a0)
    cu, su = np.cos(u), np.sin(u)
    inner = ax < a0
    outer = ax > L
    f = np.where(inner, 1.0, np.where(outer, 0.0, cu ** 7))
    dfd_abs = np.where(inner | outer, 0.0, -7.0 * c * cu ** 6 * su)
    return f, dfd_abs * np.sign(x)


def potential_value(spec: PotentialSpec, x):
    x = np.asarray(x, dtype=float)
    f, _ = _mask(spec, x)
    out = -f / np.sqrt(x * x + 1.0)
    return out if out.ndim else float(out)


def potential_gradient(spec: PotentialSpec, x):
    """Analytic ``dV/dx`` (product rule across the taper)."""
    x = np.asarray(x, dtype=float)
    f, df = _mask(spec, x)
    r2 = x * x + 1.0
    out = f * x / r2 ** 1.5 - df / np.sqrt(r2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PulseSpec:
    """Flat-top pulse ``E(t) = E0 g(t) sin(omega t)`` with linear ramps of ``n_ramp`` cycles."""

    E0: float = 0.075
    omega: float = 0.057
    n_ramp: float = 2.25
    n_flat: float = 10.0

    def __post_init__(self):
        if not self.E0 >= 0:
            raise ConfigurationError(f"pulse.E0 must be >= 0, got {self.E0}")
        if not self.omega > 0:
            raise ConfigurationError(f"pulse.omega must be > 0, got {self.omega}")
        if not (self.n_ramp >= 0 and self.n_flat >= 0):
            raise ConfigurationError("pulse.n_ramp and pulse.n_flat must be >= 0")

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    @property
    def t_on(self) -> float:
        return self.n_ramp * self.period

    @property
    def t_off(self) -> float:
        return (self.n_ramp + self.n_flat) * self.period

    @property
    def t_final(self) -> float:
        return self.t_off + self.n_ramp * self.period

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        t_on, t_off, t_f = self.t_on, self.t_off, self.t_final
        if t_on > 0:
            up = t / t_on
            down = 1.0 - (t - t_off) / t_on
        else:
            up = down = np.ones_like(t)
        g = np.where(t < t_on, up, np.where(t < t_off, 1.0, down))
        g = np.where((t < 0) | (t > t_f), 0.0, g)
        return g if g.ndim else float(g)

    def field(self, t):
        return field_value(self, t)

    def monochromatic(self, t):
        """Carrier without envelope, ``E0 sin(omega t)``."""
        return self.E0 * np.sin(self.omega * np.asarray(t, dtype=float))


def field_value(pulse: PulseSpec, t):
    t = np.asarray(t, dtype=float)
    out = pulse.E0 * pulse.envelope(t) * np.sin(pulse.omega * t)
    return out if np.ndim(out) else float(out)


def ponderomotive_energy(pulse: PulseSpec) -> float:
    return pulse.E0 ** 2 / (4.0 * pulse.omega ** 2)


def keldysh_gamma(pulse: PulseSpec, epsilon0: float) -> float:
    if not epsilon0 < 0:
        raise ContractViolation(f"binding energy must be negative, got {epsilon0}")
    if pulse.E0 == 0:
        return float("inf")
    return pulse.omega * np.sqrt(2.0 * abs(epsilon0)) / pulse.E0


def cutoff_harmonic(pulse: PulseSpec, epsilon0: float, factor: float = 3.17) -> float:
    """Three-step-model cutoff ``(|eps0| + factor*Up)/omega`` in harmonic orders."""
    return (abs(epsilon0) + factor * ponderomotive_energy(pulse)) / pulse.omega


def escape_velocity(spec: PotentialSpec, x0: float = 0.0) -> float:
    return float(np.sqrt(-2.0 * potential_value(spec, x0)))
