"""Bohmian velocity fields and trajectory integration over wavefunction snapshots."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .core import SpatialGrid, TimeSeries, Trajectory, TrajectoryKind, Wavefunction, spectral_derivative
from .errors import ContractViolation, DegenerateStateError

DEFAULT_RHO_FLOOR = 1e-12
_MIN_VALID_NODES = 4
_PAD = 4


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: SpatialGrid
    t: float
    v: np.ndarray
    rho: np.ndarray
    rho_floor: float

    def __call__(self, x):
        j, w = _cubic_weights(self.grid, x)
        return _apply_padded(self.padded, j, w)

    @cached_property
    def padded(self) -> np.ndarray:
        """``v`` wrapped periodically by ``_PAD`` nodes on each side."""
        return np.concatenate([self.v[-_PAD:], self.v, self.v[:_PAD]])


def _fill_floored(grid: SpatialGrid, values, rho, rho_floor, max_floored_fraction):
    good = rho >= rho_floor
    n_good = int(np.count_nonzero(good))
    floored = 1.0 - n_good / rho.size
    if n_good < _MIN_VALID_NODES or (
            max_floored_fraction is not None and floored > max_floored_fraction):
        raise DegenerateStateError(
            f"density below {rho_floor:g} on {100 * floored:.1f}% of the grid")
    if n_good == rho.size:
        return values
    x = grid.x
    out = values.copy()
    out[~good] = np.interp(x[~good], x[good], values[good])
    return out


def velocity_field(psi: Wavefunction, rho_floor: float = DEFAULT_RHO_FLOOR,
                   max_floored_fraction: float | None = None) -> VelocityField:
    """Guidance velocity ``v = J / rho = Im(psi* dpsi/dx) / |psi|^2``.

    Nodes with ``rho < rho_floor`` take the value linearly interpolated from
    the nearest nodes above the floor. A
    :class:`~bohmian_hhg.errors.DegenerateStateError` is raised when fewer
    than four nodes remain, or when the floored share exceeds
    ``max_floored_fraction`` (if given).
    """
    amp = psi.amplitudes
    re, im = amp.real, amp.imag
    rho = re * re + im * im
    # J = Re psi * (Im psi)' - Im psi * (Re psi)', exactly zero for real states
    j = re * spectral_derivative(im, psi.grid) - im * spectral_derivative(re, psi.grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = j / rho
    v = np.where(rho >= rho_floor, v, 0.0)
    v = _fill_floored(psi.grid, v, rho, rho_floor, max_floored_fraction)
    return VelocityField(psi.grid, psi.t, v, rho, rho_floor)


def quantum_potential(psi: Wavefunction, rho_floor: float = DEFAULT_RHO_FLOOR,
                      max_floored_fraction: float | None = None) -> np.ndarray:
    """``Q = -1/2 (d^2 sqrt(rho)/dx^2) / sqrt(rho)`` on the grid (diagnostic only)."""
    rho = psi.density
    amp = np.sqrt(rho)
    lap = spectral_derivative(amp, psi.grid, order=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = -0.5 * lap / amp
    q = np.where(rho >= rho_floor, q, 0.0)
    return _fill_floored(psi.grid, q, rho, rho_floor, max_floored_fraction)


def _cubic_weights(grid: SpatialGrid, x):
    """Base node index and the four Lagrange weights at ``x``."""
    s = (np.asarray(x, dtype=float) - grid.x_min) / grid.dx
    j = np.floor(s).astype(np.int64)
    u = s - j
    w = (-u * (u - 1.0) * (u - 2.0) / 6.0,
         (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
         -(u + 1.0) * u * (u - 2.0) / 2.0,
         (u + 1.0) * u * (u - 1.0) / 6.0)
    return j, w


def _apply_weights(values, j, w, n):
    return (w[0] * values[(j - 1) % n] + w[1] * values[j % n]
            + w[2] * values[(j + 1) % n] + w[3] * values[(j + 2) % n])


def _apply_padded(padded, j, w, shift: int = 0):
    """Stencil sum on a ``_PAD``-wrapped array; ``shift`` moves the stencil by whole nodes."""
    # beyond the wrap margin the trajectory is outside the grid and about to be dropped
    j = np.clip(j + shift, 1 - _PAD, padded.size - _PAD - 3) + _PAD
    return (w[0] * padded[j - 1] + w[1] * padded[j]
            + w[2] * padded[j + 1] + w[3] * padded[j + 2])


def interpolate_cubic(grid: SpatialGrid, values: np.ndarray, x) -> np.ndarray:
    """Four-point Lagrange interpolation of a periodic grid function."""
    j, w = _cubic_weights(grid, x)
    return _apply_weights(values, j, w, grid.n_points)


class TrajectoryIntegrator:
    """RK4 integration of ``dx/dt = v(x, t)`` fed one snapshot at a time.

    Between two snapshots the velocity is interpolated cubically in ``x`` and
    linearly in ``t``. Each trajectory takes at least ``substeps`` RK4 steps
    per snapshot interval, more where its local velocity gradient ``|dv/dx|``
    times the step exceeds ``max_strain`` (near nodes of the wavefunction).
    Only the two most recent velocity fields are held, so arbitrarily long
    runs can be streamed straight out of the propagator.
    """

    def __init__(self, x0_list: Sequence[float], rho_floor: float = DEFAULT_RHO_FLOOR,
                 substeps: int = 1, kind: TrajectoryKind = TrajectoryKind.BOHMIAN,
                 max_strain: float = 0.2, max_substeps: int = 256, keep_history: bool = True):
        self.x0 = np.asarray(x0_list, dtype=float).ravel()
        if self.x0.size == 0:
            raise ContractViolation("need at least one initial position")
        if substeps < 1:
            raise ContractViolation("substeps must be >= 1")
        self.rho_floor = rho_floor
        self.substeps = int(substeps)
        self.max_strain = max_strain
        self.max_substeps = int(max_substeps)
        self.kind = kind
        self.keep_history = keep_history
        self._prev: VelocityField | None = None
        self._x = self.x0.copy()
        self._alive = np.ones(self.x0.size, dtype=bool)
        self._xs: list[np.ndarray] = []
        self._vs: list[np.ndarray] = []
        self._times: list[float] = []
        self._grid: SpatialGrid | None = None

    def _inside(self, x):
        g = self._grid
        # keep the whole cubic stencil away from the periodic seam
        return (x >= g.x_min + 2 * g.dx) & (x <= g.x_max - 3 * g.dx)

    def _record(self, field: VelocityField):
        self._times.append(field.t)
        if not self.keep_history:
            return
        v = np.where(self._alive, field(np.where(self._alive, self._x, self._grid.x_min)), np.nan)
        self._xs.append(np.where(self._alive, self._x, np.nan))
        self._vs.append(v)

    def feed(self, psi: Wavefunction) -> None:
        self.feed_field(velocity_field(psi, self.rho_floor))

    def feed_field(self, field: VelocityField) -> None:
        """Advance to the time of ``field``; lets several integrators share one field."""
        if self._prev is None:
            self._grid = field.grid
            if not np.all(self._inside(self._x)):
                raise ContractViolation("initial positions must lie inside the grid")
            self._record(field)
            self._prev = field
            return
        prev = self._prev
        span = field.t - prev.t
        if not span > 0:
            raise ContractViolation("snapshots must be strictly increasing in time")
        if len(self._times) >= 2:
            ref = self._times[1] - self._times[0]
            if abs(span - ref) > 1e-6 * ref:
                raise ContractViolation("snapshots must be uniformly spaced in time")
        x = self._x.copy()
        alive = self._alive.copy()
        n_sub = np.full(x.size, self.substeps)
        if self.max_strain is not None and alive.any():
            # x +- dx share the fractional offset of x, so one set of weights serves both
            j, w = _cubic_weights(self._grid, x[alive])
            grad = np.maximum(
                np.abs(_apply_padded(prev.padded, j, w, 1) - _apply_padded(prev.padded, j, w, -1)),
                np.abs(_apply_padded(field.padded, j, w, 1) - _apply_padded(field.padded, j, w, -1)),
            ) / (2 * self._grid.dx)
            need = np.ceil(span * grad / self.max_strain).astype(int)
            n_sub[alive] = np.clip(need, self.substeps, self.max_substeps)
        x, alive = self._rk4(prev.padded, field.padded, x, alive, span, n_sub)
        self._x = x
        self._alive = alive
        self._record(field)
        self._prev = field

    def _rk4(self, v0: np.ndarray, v1: np.ndarray, x, alive, span, n_sub):
        """RK4 across one interval, trajectory ``i`` taking ``n_sub[i]`` equal steps.

        ``v0`` and ``v1`` are the wrapped grid velocities at the interval ends. Pass
        ``s`` advances only trajectories with more than ``s`` steps, so
        trajectories near nodes get finer steps without slowing the rest.
        """
        grid = self._grid
        x = x.copy()
        alive = alive.copy()

        def vel(xx, lam):
            j, w = _cubic_weights(grid, xx)
            return (1.0 - lam) * _apply_padded(v0, j, w) + lam * _apply_padded(v1, j, w)

        for s in range(int(n_sub[alive].max(initial=0))):
            act = np.nonzero(alive & (n_sub > s))[0]
            xa, m = x[act], n_sub[act]
            h = span / m
            k1 = vel(xa, s / m)
            k2 = vel(xa + 0.5 * h * k1, (s + 0.5) / m)
            k3 = vel(xa + 0.5 * h * k2, (s + 0.5) / m)
            k4 = vel(xa + h * k3, (s + 1) / m)
            xa = xa + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            x[act] = xa
            alive[act] = self._inside(xa) & np.isfinite(xa)
        return x, alive

    def feed_all(self, snapshots: Iterable[Wavefunction]) -> "TrajectoryIntegrator":
        for psi in snapshots:
            self.feed(psi)
        return self

    @property
    def positions(self) -> np.ndarray:
        """Current positions (NaN for trajectories that left the grid)."""
        return np.where(self._alive, self._x, np.nan)

    def position_history(self) -> np.ndarray:
        """Array ``(n_snapshots, n_trajectories)`` of positions, NaN after exit."""
        self._need_history()
        return np.asarray(self._xs)

    def _need_history(self):
        if not self.keep_history:
            raise ContractViolation("integrator was created with keep_history=False")

    def trajectories(self) -> list[Trajectory]:
        self._need_history()
        if len(self._times) < 2:
            raise ContractViolation("need at least two snapshots to form trajectories")
        t = np.asarray(self._times)
        dt = (t[-1] - t[0]) / (t.size - 1)
        xs = np.asarray(self._xs)
        vs = np.asarray(self._vs)
        out = []
        for i, x0 in enumerate(self.x0):
            valid = np.isfinite(xs[:, i])
            n = int(np.argmin(valid)) if not valid.all() else valid.size
            exited = n < valid.size
            n = max(n, 2)
            out.append(Trajectory(
                kind=self.kind, x0=float(x0), v0=float(vs[0, i]),
                samples=TimeSeries(t[0], dt, xs[:n, i]),
                velocities=TimeSeries(t[0], dt, vs[:n, i]),
                exited=exited,
            ))
        return out


def integrate_trajectories(snapshots: Iterable[Wavefunction], x0_list: Sequence[float],
                           rho_floor: float = DEFAULT_RHO_FLOOR, substeps: int = 1) -> list[Trajectory]:
    """Bohmian trajectories from uniformly spaced snapshots, one per initial position.

    Trajectories that leave the grid are truncated at their last interior
    sample and carry ``exited=True``.
    """
    return TrajectoryIntegrator(x0_list, rho_floor, substeps).feed_all(snapshots).trajectories()


def sample_initial_positions(psi: Wavefunction, n: int, rng: np.random.Generator,
                             stratified: bool = True) -> np.ndarray:
    """Draw ``n`` positions from ``|psi|^2`` by inverse-CDF sampling.

    With ``stratified`` each draw comes from its own equal-probability stratum,
    which removes most of the Monte Carlo scatter from histogram comparisons.
    """
    g = psi.grid
    rho = psi.density
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * g.dx)])
    cdf /= cdf[-1]
    u = rng.random(n)
    if stratified:
        u = (np.arange(n) + u) / n
    return np.interp(u, cdf, g.x)


def equivariance_distance(positions: np.ndarray, psi: Wavefunction, n_bins: int = 50,
                          mass: float = 0.99) -> float:
    """L1 distance between the empirical position histogram and ``|psi|^2`` binned alike.

    Bins span the central ``mass`` of ``|psi|^2``; both distributions are
    expressed as probabilities per bin over the full grid normalization.
    """
    positions = np.asarray(positions, dtype=float)
    positions = positions[np.isfinite(positions)]
    g = psi.grid
    rho = psi.density
    cdf = np.cumsum(rho) * g.dx
    cdf /= cdf[-1]
    tail = 0.5 * (1 - mass)
    lo = float(np.interp(tail, cdf, g.x))
    hi = float(np.interp(1 - tail, cdf, g.x))
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(positions, bins=edges)
    p_emp = counts / positions.size
    cdf_at = np.interp(edges, g.x + 0.5 * g.dx, cdf)
    p_true = np.diff(cdf_at)
    return float(np.sum(np.abs(p_emp - p_true)))
