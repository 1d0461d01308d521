"""Three-step-model electron ensembles in a monochromatic field.

Field-only motion uses the closed-form solution; motion with the binding
potential is integrated with classical RK4. Return events (zero crossings of
``x`` after an excursion) give the return-time/energy arches that are laid
over time-frequency maps.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .core import TimeSeries, Trajectory, TrajectoryKind
from .errors import ContractViolation, IntegrationDiverged
from .potentials import PotentialSpec, PulseSpec, escape_velocity

DEFAULT_X_EXIT = 5.0
DEFAULT_EXCURSION_CYCLES = 1.6
DEFAULT_POINTS_PER_HALF_CYCLE = 2000
DEFAULT_STEPS_PER_CYCLE = 8192


@dataclass(frozen=True)
class ReleaseSpec:
    """Initial condition of one classical electron.

    ``scheme`` is ``"rest"`` (field only, ``x0 = v0 = 0``), ``"escape"``
    (with potential, ``x0 = 0`` and ``v0 = +-sqrt(-2 V(0))``) or
    ``"turning-point"`` (with potential, ``v0 = 0`` at the outer root of
    ``F(x0, t0) = 0``).
    """

    t0: float
    x0: float = 0.0
    v0: float = 0.0
    with_potential: bool = False
    scheme: str = "rest"

    def __post_init__(self):
        if self.scheme == "rest" and (self.x0 != 0.0 or self.v0 != 0.0 or self.with_potential):
            raise ContractViolation("field-only releases start at rest at the origin")
        if self.scheme == "escape" and (self.x0 != 0.0 or not self.with_potential):
            raise ContractViolation("escape-velocity releases start at the origin with the potential on")
        if self.scheme not in ("rest", "escape", "turning-point"):
            raise ContractViolation(f"unknown release scheme {self.scheme!r}")

    @classmethod
    def at_rest(cls, t0: float) -> "ReleaseSpec":
        return cls(t0)

    @classmethod
    def escape(cls, t0: float, spec: PotentialSpec, sign: int = 1) -> "ReleaseSpec":
        return cls(t0, 0.0, float(np.sign(sign)) * escape_velocity(spec, 0.0), True, "escape")

    @classmethod
    def turning_point(cls, t0: float, pulse: PulseSpec, spec: PotentialSpec) -> "ReleaseSpec | None":
        """Release at rest where the field balances the binding force; ``None`` if no root exists."""
        e = float(pulse.monochromatic(t0))
        if e == 0.0:
            return None
        # F(x) = E - dV/dx; dV/dx is odd with a single maximum at |x| = 1/sqrt(2) for |x| < a0
        sign = np.sign(e)
        x_peak = 1.0 / np.sqrt(2.0)

        def force(x):
            return e - float(spec.gradient(x))

        far = sign * 1e3
        if np.sign(force(sign * x_peak)) == np.sign(force(far)):
            return None
        x0 = brentq(force, sign * x_peak, far, xtol=1e-14)
        return cls(t0, float(x0), 0.0, True, "turning-point")

    @property
    def v0_sign(self) -> int:
        return int(np.sign(self.v0))


@dataclass(frozen=True)
class ReturnEvent:
    t_return: float
    kinetic_energy: float
    harmonic_energy: float
    branch: str
    order: int = 1
    t0: float = 0.0
    velocity: float = 0.0


def free_trajectory(t0, pulse: PulseSpec, t, x0: float = 0.0, v0: float = 0.0):
    """Closed-form motion in ``E0 sin(omega t)`` released at ``t0``; returns ``(x, v)``."""
    t0 = np.asarray(t0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < t0 - 1e-12):
        raise ContractViolation("free trajectory evaluated before its release time")
    w, e0 = pulse.omega, pulse.E0
    c0 = np.cos(w * t0)
    v = e0 / w * (c0 - np.cos(w * t)) + v0
    x = e0 / w ** 2 * (w * (t - t0) * c0 - np.sin(w * t) + np.sin(w * t0)) + v0 * (t - t0) + x0
    if x.ndim == 0:
        return float(x), float(v)
    return x, v


def _rk4_batch(x, v, t0, pulse: PulseSpec, spec: PotentialSpec | None, dt: float, n_steps: int,
               use_envelope: bool = False):
    """Integrate ``x' = v, v' = E(t) - V'(x)`` for arrays of releases; returns sampled ``(x, v)``."""
    e0, w = pulse.E0, pulse.omega

    def efield(t):
        return pulse.field(t) if use_envelope else e0 * np.sin(w * t)

    def accel(xx, tt):
        a = efield(tt)
        if spec is not None:
            a = a - spec.gradient(xx)
        return a

    x = np.array(x, dtype=float, copy=True)
    v = np.array(v, dtype=float, copy=True)
    t0 = np.asarray(t0, dtype=float)
    xs = np.empty((n_steps + 1,) + x.shape)
    vs = np.empty_like(xs)
    xs[0], vs[0] = x, v
    for n in range(n_steps):
        t = t0 + n * dt
        k1x, k1v = v, accel(x, t)
        k2x, k2v = v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x, t + 0.5 * dt)
        k3x, k3v = v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x, t + 0.5 * dt)
        k4x, k4v = v + dt * k3v, accel(x + dt * k3x, t + dt)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs[n + 1], vs[n + 1] = x, v
    if not (np.all(np.isfinite(xs[-1])) and np.all(np.isfinite(vs[-1]))):
        raise IntegrationDiverged("classical RK4 produced non-finite values")
    return xs, vs


def potential_trajectory(release: ReleaseSpec, pulse: PulseSpec, spec: PotentialSpec | None,
                         dt: float, t_end: float, use_envelope: bool = False) -> Trajectory:
    """RK4 motion from ``release`` to ``t_end`` under ``E0 sin(omega t) - dV/dx``.

    ``spec=None`` removes the potential (used to check the integrator
    against :func:`free_trajectory`).
    """
    if not dt > 0:
        raise ContractViolation(f"time step must be positive, got {dt}")
    n_steps = int(round((t_end - release.t0) / dt))
    if n_steps < 1:
        raise ContractViolation("t_end must lie at least one step after the release")
    xs, vs = _rk4_batch(release.x0, release.v0, release.t0, pulse, spec, dt, n_steps, use_envelope)
    kind = TrajectoryKind.CLASSICAL_POTENTIAL if spec is not None else TrajectoryKind.CLASSICAL_FREE
    return Trajectory(kind=kind, x0=release.x0, v0=release.v0,
                      samples=TimeSeries(release.t0, dt, xs),
                      velocities=TimeSeries(release.t0, dt, vs),
                      t_release=release.t0)


def _branch(t_return: float, t0: float, omega: float, order: int) -> str:
    if order > 1:
        return "later"
    # field zero that closes the half cycle after the one containing the release
    t_cross = (np.floor(omega * t0 / np.pi + 1e-12) + 2.0) * np.pi / omega
    return "short" if t_return < t_cross else "long"


def _crossings(t, x, v, x_exit):
    """Linear-interpolated zero crossings of ``x`` after ``|x|`` first exceeds ``x_exit``."""
    out = np.abs(x) > x_exit
    if not out.any():
        return []
    first = int(np.argmax(out))
    xs = x[first:]
    idx = np.nonzero((xs[:-1] * xs[1:] < 0) | (xs[1:] == 0))[0] + first
    events = []
    for i in idx:
        x0, x1 = x[i], x[i + 1]
        f = x0 / (x0 - x1) if x0 != x1 else 1.0
        events.append((t[i] + f * (t[i + 1] - t[i]), v[i] + f * (v[i + 1] - v[i])))
    return events


def return_events(traj: Trajectory, epsilon0: float, pulse: PulseSpec | None = None,
                  x_exit: float = DEFAULT_X_EXIT) -> list[ReturnEvent]:
    """Returns to ``x = 0`` after the electron has first left ``|x| <= x_exit``.

    The first return is tagged ``short`` if it precedes the field zero that
    closes the half cycle following the release half cycle, ``long``
    otherwise; later returns are tagged ``later``. ``pulse`` supplies the
    field frequency (paper parameters by default).
    """
    pulse = pulse or PulseSpec()
    t0 = traj.t_release if traj.t_release is not None else traj.samples.t0
    events = []
    for k, (tr, vr) in enumerate(_crossings(traj.t, traj.x, traj.v, x_exit), start=1):
        ke = 0.5 * vr * vr
        events.append(ReturnEvent(float(tr), float(ke), float(ke + abs(epsilon0)),
                                  _branch(tr, t0, pulse.omega, k), k, float(t0), float(vr)))
    return events


class ArchTable:
    """Return events of a release-time scan, one row per event, in scan order."""

    columns = ("t0", "t_return", "harmonic_order", "branch", "v0_sign", "with_potential", "order", "scan_index")

    def __init__(self, rows: Sequence[tuple], period: float):
        self.period = float(period)
        rows = list(rows)
        self.t0 = np.array([r[0] for r in rows], dtype=float)
        self.t_return = np.array([r[1] for r in rows], dtype=float)
        self.harmonic_order = np.array([r[2] for r in rows], dtype=float)
        self.branch = np.array([r[3] for r in rows], dtype=object)
        self.v0_sign = np.array([r[4] for r in rows], dtype=int)
        self.with_potential = np.array([r[5] for r in rows], dtype=bool)
        self.order = np.array([r[6] for r in rows], dtype=int)
        self.scan_index = np.array([r[7] for r in rows], dtype=int)

    def __len__(self):
        return self.t0.size

    @property
    def t_return_mod(self) -> np.ndarray:
        return np.mod(self.t_return, self.period)

    @property
    def excursion(self) -> np.ndarray:
        return self.t_return - self.t0

    def select(self, mask) -> "ArchTable":
        idx = np.nonzero(mask)[0]
        rows = [(self.t0[i], self.t_return[i], self.harmonic_order[i], self.branch[i],
                 self.v0_sign[i], self.with_potential[i], self.order[i], self.scan_index[i]) for i in idx]
        return ArchTable(rows, self.period)

    def families(self, branches=None):
        """Continuous arch segments: same sign, return order and branch, consecutive releases."""
        mask = np.ones(len(self), dtype=bool)
        if branches is not None:
            mask &= np.isin(self.branch, list(branches))
        keys = np.stack([self.v0_sign, self.order, self.with_potential.astype(int)], axis=1)
        out = []
        for key in np.unique(keys[mask], axis=0):
            sel = np.nonzero(mask & np.all(keys == key, axis=1))[0]
            sel = sel[np.argsort(self.scan_index[sel], kind="stable")]
            br = self.branch[sel]
            breaks = np.nonzero((np.diff(self.scan_index[sel]) != 1) | (br[1:] != br[:-1]))[0] + 1
            for seg in np.split(sel, breaks):
                if seg.size >= 2:
                    out.append({"t_return": self.t_return[seg], "harmonic_order": self.harmonic_order[seg],
                                "t0": self.t0[seg], "branch": self.branch[seg[0]]})
        return out

    def apex(self, order: int | None = None) -> float:
        sel = np.ones(len(self), dtype=bool) if order is None else self.order == order
        return float(self.harmonic_order[sel].max()) if sel.any() else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t0", "t_return", "harmonic_order", "branch", "v0_sign", "with_potential"])
            for i in range(len(self)):
                w.writerow([f"{self.t0[i]:.10g}", f"{np.mod(self.t_return[i], self.period):.10g}",
                            f"{self.harmonic_order[i]:.10g}", self.branch[i], int(self.v0_sign[i]),
                            int(self.with_potential[i])])


def default_t0_grid(pulse: PulseSpec, half_cycles: int = 2,
                    points_per_half_cycle: int = DEFAULT_POINTS_PER_HALF_CYCLE) -> np.ndarray:
    n = half_cycles * points_per_half_cycle
    return 0.5 * pulse.period * half_cycles * np.arange(n) / n


def arch_curves(pulse: PulseSpec, spec: PotentialSpec | None, epsilon0: float, t0_grid=None,
                excursion_cycles: float = DEFAULT_EXCURSION_CYCLES, x_exit: float = DEFAULT_X_EXIT,
                steps_per_cycle: int = DEFAULT_STEPS_PER_CYCLE, scheme: str = "escape",
                chunk: int = 500) -> ArchTable:
    """Scan release times and collect every return within ``excursion_cycles`` of release.

    Without a potential the electrons start at rest at the origin and the
    closed form is sampled; with a potential they start at the origin with
    ``+-`` the escape velocity (both signs are emitted as separate families)
    or, with ``scheme="turning-point"``, at rest at the field/force balance
    point.
    """
    t0_grid = default_t0_grid(pulse) if t0_grid is None else np.asarray(t0_grid, dtype=float)
    if t0_grid.size == 0:
        return ArchTable([], pulse.period)
    dt = pulse.period / steps_per_cycle
    n_steps = int(np.ceil(excursion_cycles * steps_per_cycle))
    tau = dt * np.arange(n_steps + 1)
    rows = []
    if spec is None:
        families = [(0, None)]
    elif scheme == "escape":
        families = [(+1, "escape"), (-1, "escape")]
    elif scheme == "turning-point":
        families = [(0, "turning-point")]
    else:
        raise ContractViolation(f"unknown release scheme {scheme!r}")

    for sign, fam in families:
        for c0 in range(0, t0_grid.size, chunk):
            t0s = t0_grid[c0:c0 + chunk]
            idx = np.arange(c0, c0 + t0s.size)
            if spec is None:
                tt = t0s[None, :] + tau[:, None]
                xs, vs = free_trajectory(t0s[None, :], pulse, tt)
            else:
                if fam == "escape":
                    x0 = np.zeros_like(t0s)
                    v0 = np.full_like(t0s, sign * escape_velocity(spec, 0.0))
                else:
                    rel = [ReleaseSpec.turning_point(t, pulse, spec) for t in t0s]
                    keep = np.array([r is not None for r in rel])
                    t0s, idx = t0s[keep], idx[keep]
                    x0 = np.array([r.x0 for r in rel if r is not None])
                    v0 = np.zeros_like(x0)
                    if t0s.size == 0:
                        continue
                xs, vs = _rk4_batch(x0, v0, t0s, pulse, spec, dt, n_steps)
            for j in range(t0s.size):
                t_abs = t0s[j] + tau
                for k, (tr, vr) in enumerate(_crossings(t_abs, xs[:, j], vs[:, j], x_exit), start=1):
                    ke = 0.5 * vr * vr
                    rows.append((t0s[j], tr, (ke + abs(epsilon0)) / pulse.omega,
                                 _branch(tr, t0s[j], pulse.omega, k), sign, spec is not None, k, idx[j]))
    rows.sort(key=lambda r: (r[4], r[6], r[7]))
    return ArchTable(rows, pulse.period)
