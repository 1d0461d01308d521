"""Grid, wavefunction and time-series value types.

Everything here is immutable after construction: arrays handed to the
constructors are copied and flagged read-only, so instances can be shared
between workers without defensive copies.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterator

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ContractViolation

SNAPSHOT_MAGIC = b"BHH1"
_SNAPSHOT_HEADER = struct.Struct("<4sIddd")


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def fft_workers() -> int:
    """Worker count used for every FFT in the package (see ``set_threads``)."""
    return _FFT_WORKERS[0]


_FFT_WORKERS = [1]


def set_threads(n: int) -> None:
    if n < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {n}")
    _FFT_WORKERS[0] = int(n)


def fft(a):
    return sfft.fft(a, workers=_FFT_WORKERS[0])


def ifft(a):
    return sfft.ifft(a, workers=_FFT_WORKERS[0])


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid ``x_j = x_min + j*dx`` with ``dx = (x_max - x_min)/n``.

    The right end ``x_max`` is excluded (it coincides with ``x_min`` under
    periodic boundary conditions).
    """

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if isinstance(n, bool) or int(n) != n:
            raise ConfigurationError(f"n_points must be an integer, got {n!r}")
        n = int(n)
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"n_points must be a power of two >= 2, got {n}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ConfigurationError("grid limits must be finite")
        if not self.x_min < self.x_max:
            raise ConfigurationError(
                f"x_min must be < x_max, got [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / (self.n_points * self.dx)

    @property
    def k(self) -> np.ndarray:
        """Conjugate momenta in standard FFT ordering."""
        return 2.0 * np.pi * sfft.fftfreq(self.n_points, d=self.dx)

    @property
    def k_max(self) -> float:
        return np.pi / self.dx

    def contains(self, x) -> np.ndarray:
        return (np.asarray(x) >= self.x_min) & (np.asarray(x) <= self.x_min + (self.n_points - 1) * self.dx)


def make_grid(x_min: float, x_max: float, n_points: int) -> SpatialGrid:
    return SpatialGrid(x_min, x_max, n_points)


def spectral_derivative(values, grid: SpatialGrid, order: int = 1) -> np.ndarray:
    """Derivative of a periodic grid function by multiplication with ``(ik)^order``."""
    values = np.asarray(values)
    n = grid.n_points
    w = _FFT_WORKERS[0]
    if np.isrealobj(values):
        k = 2 * np.pi * sfft.rfftfreq(n, grid.dx)
        spec = sfft.rfft(values, workers=w) * (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            # Nyquist mode has no well-defined odd derivative
            spec[-1] = 0.0
        return sfft.irfft(spec, n, workers=w)
    spec = fft(values) * (1j * grid.k) ** order
    if order % 2 == 1 and n % 2 == 0:
        spec[n // 2] = 0.0
    return ifft(spec)


@dataclass(frozen=True, eq=False)
class Wavefunction:
    """Complex amplitudes on a grid at time ``t``; normalization is ``sum|psi|^2 dx``."""

    grid: SpatialGrid
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        amp = _frozen(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.n_points,):
            raise ContractViolation(
                f"amplitude array has shape {amp.shape}, grid has {self.grid.n_points} points")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "t", float(self.t))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.amplitudes)

    def current(self) -> np.ndarray:
        """Probability current ``J = Im(psi* dpsi/dx)``."""
        dpsi = spectral_derivative(self.amplitudes, self.grid)
        return np.imag(np.conj(self.amplitudes) * dpsi)

    def normalized(self) -> "Wavefunction":
        nrm = norm(self)
        if nrm == 0.0:
            raise ContractViolation("cannot normalize an all-zero wavefunction")
        return Wavefunction(self.grid, self.amplitudes / np.sqrt(nrm), self.t)

    def with_amplitudes(self, amplitudes, t=None) -> "Wavefunction":
        return Wavefunction(self.grid, amplitudes, self.t if t is None else t)


def norm(psi: Wavefunction) -> float:
    return float(np.sum(np.abs(psi.amplitudes) ** 2) * psi.grid.dx)


def expectation(psi: Wavefunction, f) -> float:
    """``sum_j f(x_j) |psi_j|^2 dx`` for a real grid function ``f``."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = np.full(psi.grid.n_points, float(f))
    if f.shape != psi.amplitudes.shape:
        raise ContractViolation(
            f"grid function has shape {f.shape}, wavefunction has {psi.amplitudes.shape}")
    return float(np.dot(f, psi.density) * psi.grid.dx)


def overlap(a: Wavefunction, b: Wavefunction) -> complex:
    """Inner product ``<a|b>``."""
    if a.grid != b.grid:
        raise ContractViolation("wavefunctions live on different grids")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dx)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.ndim != 1 or vals.size < 2:
            raise ContractViolation("a time series needs a 1D array of at least 2 samples")
        if not self.dt > 0:
            raise ContractViolation(f"sample interval must be positive, got {self.dt}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self):
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.values.size - 1)

    @classmethod
    def from_samples(cls, t, values, rtol=1e-6) -> "TimeSeries":
        """Build from explicit sample times, checking that they are uniform."""
        t = np.asarray(t, dtype=float)
        if t.size < 2:
            raise ContractViolation("a time series needs at least 2 samples")
        steps = np.diff(t)
        dt = (t[-1] - t[0]) / (t.size - 1)
        if np.max(np.abs(steps - dt)) > rtol * abs(dt):
            raise ContractViolation("samples are not uniformly spaced in time")
        return cls(t[0], dt, values)

    def window(self, t_start: float, t_stop: float) -> "TimeSeries":
        """Samples with ``t_start <= t <= t_stop``."""
        t = self.t
        sel = np.nonzero((t >= t_start - 1e-9 * self.dt) & (t <= t_stop + 1e-9 * self.dt))[0]
        if sel.size < 2:
            raise ContractViolation(f"window [{t_start}, {t_stop}] holds fewer than 2 samples")
        return TimeSeries(t[sel[0]], self.dt, self.values[sel[0]:sel[-1] + 1])


class TrajectoryKind(str, Enum):
    BOHMIAN = "bohmian"
    CLASSICAL_FREE = "classical-free"
    CLASSICAL_POTENTIAL = "classical-potential"


@dataclass(frozen=True, eq=False)
class Trajectory:
    kind: TrajectoryKind
    x0: float
    v0: float
    samples: TimeSeries
    velocities: TimeSeries
    t_release: float | None = None
    exited: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", TrajectoryKind(self.kind))
        s, v = self.samples, self.velocities
        if (s.t0, s.dt, len(s)) != (v.t0, v.dt, len(v)):
            raise ContractViolation("position and velocity series must share t0, dt and length")

    @property
    def t(self) -> np.ndarray:
        return self.samples.t

    @property
    def x(self) -> np.ndarray:
        return self.samples.values

    @property
    def v(self) -> np.ndarray:
        return self.velocities.values


def write_snapshot(stream: BinaryIO, psi: Wavefunction) -> None:
    g = psi.grid
    stream.write(_SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, g.n_points, g.x_min, g.dx, psi.t))
    pairs = np.empty(2 * g.n_points, dtype="<f8")
    pairs[0::2] = psi.amplitudes.real
    pairs[1::2] = psi.amplitudes.imag
    stream.write(pairs.tobytes())


def read_snapshot(stream: BinaryIO) -> Wavefunction | None:
    """Read one record; returns ``None`` at a clean end of stream."""
    head = stream.read(_SNAPSHOT_HEADER.size)
    if not head:
        return None
    if len(head) < _SNAPSHOT_HEADER.size:
        raise ContractViolation("truncated snapshot header")
    magic, n, x_min, dx, t = _SNAPSHOT_HEADER.unpack(head)
    if magic != SNAPSHOT_MAGIC:
        raise ContractViolation(f"bad snapshot magic {magic!r}")
    body = stream.read(16 * n)
    if len(body) != 16 * n:
        raise ContractViolation("truncated snapshot body")
    pairs = np.frombuffer(body, dtype="<f8")
    grid = SpatialGrid(x_min, x_min + n * dx, n)
    return Wavefunction(grid, pairs[0::2] + 1j * pairs[1::2], t)


def iter_snapshots(stream: BinaryIO) -> Iterator[Wavefunction]:
    while (psi := read_snapshot(stream)) is not None:
        yield psi
