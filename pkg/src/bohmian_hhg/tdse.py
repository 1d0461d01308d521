"""Split-operator propagation of the 1D TDSE in the length gauge.

Also provides imaginary-time ground-state relaxation and the bound spectrum
from a three-point finite-difference Hamiltonian.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .core import SpatialGrid, TimeSeries, Wavefunction, expectation, fft, ifft
from .errors import ConfigurationError, ConvergenceError, ContractViolation, PropagationDiverged
from .potentials import PotentialSpec, PulseSpec

log = logging.getLogger(__name__)

PotentialLike = Union[PotentialSpec, Callable[[np.ndarray], np.ndarray]]


def _potential_on(grid: SpatialGrid, potential: PotentialLike) -> np.ndarray:
    v = np.asarray(potential(grid.x), dtype=float)
    if v.shape != (grid.n_points,):
        raise ContractViolation("potential callable must map the grid to an array of equal length")
    return v


def _gradient_on(grid: SpatialGrid, potential: PotentialLike) -> np.ndarray:
    if isinstance(potential, PotentialSpec):
        return np.asarray(potential.gradient(grid.x), dtype=float)
    grad = getattr(potential, "gradient", None)
    if grad is not None:
        return np.asarray(grad(grid.x), dtype=float)
    # arbitrary callables: centred difference with a fixed small step
    h = 1e-5
    return (np.asarray(potential(grid.x + h)) - np.asarray(potential(grid.x - h))) / (2 * h)


@dataclass(frozen=True)
class Absorber:
    """Multiplicative ``cos^exponent`` mask over the outer ``width`` a.u. on each side."""

    width: float = 100.0
    exponent: float = 0.125

    def mask(self, grid: SpatialGrid) -> np.ndarray:
        if not 0 < self.width < grid.length / 2:
            raise ConfigurationError(
                f"absorber width must lie in (0, {grid.length / 2}), got {self.width}")
        x = grid.x
        left = grid.x_min + self.width
        right = grid.x_max - self.width
        depth = np.maximum(left - x, 0.0) + np.maximum(x - right, 0.0)
        return np.cos(0.5 * np.pi * np.minimum(depth / self.width, 1.0)) ** self.exponent


@dataclass(frozen=True)
class PropagationSchedule:
    dt: float
    t_end: float
    snapshot_stride: int = 8
    record_stride: int = 1
    absorber: Absorber | None = None
    accel_with_field: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ConfigurationError(f"t_end must be >= 0, got {self.t_end}")
        if self.snapshot_stride < 1 or self.record_stride < 1:
            raise ConfigurationError("strides must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class BoundSpectrum:
    energies: np.ndarray
    variant: str
    requested: int = 0

    @property
    def complete(self) -> bool:
        """False when fewer bound states exist than were requested."""
        return len(self.energies) >= self.requested

    def __len__(self):
        return len(self.energies)

    def __getitem__(self, n):
        return self.energies[n]


class SplitOperator:
    """Strang-split propagator ``P(t) K P(t)`` on a fixed grid.

    ``P = exp(-i (V - x E) dt/2)`` with the field taken at the step midpoint,
    ``K = exp(-i k^2 dt / 2)``.
    """

    def __init__(self, grid: SpatialGrid, potential: PotentialLike, pulse: PulseSpec | None,
                 dt: float, absorber: Absorber | None = None):
        self.grid = grid
        self.pulse = pulse
        self.dt = float(dt)
        self.x = grid.x
        self.V = _potential_on(grid, potential)
        self.dVdx = _gradient_on(grid, potential)
        self.kinetic = np.exp(-0.5j * grid.k ** 2 * self.dt)
        self._static_half = np.exp(-0.5j * self.V * self.dt)
        self.mask = absorber.mask(grid) if absorber is not None else None
        n = grid.n_points
        self._block = 1 << (int(np.log2(n)) // 2)
        self._j_inner = np.arange(self._block) * grid.dx
        self._j_outer = np.arange(n // self._block) * (self._block * grid.dx)
        self._dVdx_pairs = np.repeat(self.dVdx, 2) * grid.dx

    def field(self, t: float) -> float:
        return 0.0 if self.pulse is None or self.pulse.E0 == 0 else float(self.pulse.field(t))

    def fields(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.pulse is None or self.pulse.E0 == 0:
            return np.zeros_like(t)
        return np.asarray(self.pulse.field(t), dtype=float).reshape(t.shape)

    def length_gauge_phase(self, c: float) -> np.ndarray:
        """``exp(i c x)`` on the grid, built as an outer product of two short exponentials."""
        outer = np.exp(1j * c * (self.grid.x_min + self._j_outer))
        inner = np.exp(1j * c * self._j_inner)
        return np.multiply.outer(outer, inner).ravel()

    def half_factor(self, e_mid: float) -> np.ndarray:
        if e_mid == 0.0:
            return self._static_half
        return self._static_half * self.length_gauge_phase(0.5 * e_mid * self.dt)

    def step(self, amp: np.ndarray, t: float, e_mid: float | None = None) -> np.ndarray:
        """Advance raw amplitudes from ``t`` to ``t + dt``."""
        if e_mid is None:
            e_mid = self.field(t + 0.5 * self.dt)
        half = self.half_factor(e_mid)
        out = ifft(self.kinetic * fft(half * amp))
        out *= half
        if self.mask is not None:
            out *= self.mask
        return out

    def acceleration(self, amp: np.ndarray, t: float, with_field: bool = False) -> float:
        re_im = amp.view(float)
        a = -float(np.dot(self._dVdx_pairs, re_im * re_im))
        if with_field:
            a += self.field(t)
        return a


def split_step(psi: Wavefunction, potential: PotentialLike, pulse: PulseSpec | None,
               dt: float, absorber: Absorber | None = None) -> Wavefunction:
    """One Strang step of ``H = -1/2 d^2/dx^2 + V(x) - x E(t)``.

    Convenience wrapper; loops should hold a :class:`SplitOperator` instead so
    the exponentials are built once.
    """
    prop = SplitOperator(psi.grid, potential, pulse, dt, absorber)
    out = prop.step(psi.amplitudes, psi.t)
    if not np.all(np.isfinite(out)):
        raise PropagationDiverged(f"non-finite amplitudes after step at t={psi.t}")
    return Wavefunction(psi.grid, out, psi.t + dt)


@dataclass
class PropagationResult:
    accel: TimeSeries
    field: TimeSeries
    norm: TimeSeries
    final: Wavefunction
    snapshots: list = field(default_factory=list)


def propagate(psi0: Wavefunction, schedule: PropagationSchedule, potential: PotentialLike,
              pulse: PulseSpec | None, keep_snapshots: bool = True,
              on_snapshot: Callable[[Wavefunction], None] | None = None,
              check_every: int = 256) -> PropagationResult:
    """Time-step ``psi0`` from its time stamp over ``schedule.n_steps`` steps.

    Snapshots (including the initial state) are taken every
    ``schedule.snapshot_stride`` steps and either kept, passed to
    ``on_snapshot``, or both. ``a(t) = -<dV/dx>`` is recorded every
    ``schedule.record_stride`` steps.
    """
    grid = psi0.grid
    prop = SplitOperator(grid, potential, pulse, schedule.dt, schedule.absorber)
    n_steps = schedule.n_steps
    dt = schedule.dt
    amp = np.array(psi0.amplitudes, dtype=complex)
    t0 = psi0.t

    n_rec = n_steps // schedule.record_stride + 1
    accel = np.empty(n_rec)
    norms = np.empty(n_rec)
    rec_times = t0 + dt * schedule.record_stride * np.arange(n_rec)
    efield = prop.fields(rec_times)
    e_mid = prop.fields(t0 + dt * (np.arange(n_steps) + 0.5))
    snapshots = []

    def emit(step):
        snap = Wavefunction(grid, amp, t0 + step * dt)
        if keep_snapshots:
            snapshots.append(snap)
        if on_snapshot is not None:
            on_snapshot(snap)

    def record(step):
        i = step // schedule.record_stride
        re_im = amp.view(float)
        sq = re_im * re_im
        accel[i] = -float(np.dot(prop._dVdx_pairs, sq))
        if schedule.accel_with_field:
            accel[i] += efield[i]
        norms[i] = float(np.sum(sq)) * grid.dx
        if not np.isfinite(norms[i]):
            raise PropagationDiverged(f"non-finite norm at t={t0 + step * dt:.6g}")

    record(0)
    emit(0)
    for n in range(n_steps):
        amp = prop.step(amp, t0 + n * dt, e_mid[n])
        step = n + 1
        if step % check_every == 0 and not np.isfinite(np.sum(amp[:: max(1, grid.n_points // 64)])):
            raise PropagationDiverged(f"non-finite amplitudes at t={t0 + step * dt:.6g}")
        if step % schedule.record_stride == 0:
            record(step)
        if step % schedule.snapshot_stride == 0:
            emit(step)
    if not np.all(np.isfinite(amp)):
        raise PropagationDiverged("non-finite amplitudes at end of propagation")

    rec_dt = dt * schedule.record_stride
    return PropagationResult(
        accel=TimeSeries(t0, rec_dt, accel),
        field=TimeSeries(t0, rec_dt, efield),
        norm=TimeSeries(t0, rec_dt, norms),
        final=Wavefunction(grid, amp, t0 + n_steps * dt),
        snapshots=snapshots,
    )


def energy(psi: Wavefunction, potential: PotentialLike) -> float:
    """Field-free ``<psi|H|psi>/<psi|psi>`` with the spectral kinetic operator."""
    grid = psi.grid
    amp = psi.amplitudes
    kin = ifft(0.5 * grid.k ** 2 * fft(amp))
    num = np.vdot(amp, kin).real * grid.dx + expectation(psi, _potential_on(grid, potential))
    return float(num / (np.sum(np.abs(amp) ** 2) * grid.dx))


def ground_state(grid: SpatialGrid, potential: PotentialLike, tol: float = 1e-10,
                 dtaus=(0.1, 0.01), check_every: int = 20, max_iter: int = 200_000,
                 seed_width: float = 1.0):
    """Relax a Gaussian seed in imaginary time to the lowest even state.

    Each imaginary step in ``dtaus`` is run until the energy changes by less
    than ``tol`` between checks; the later, smaller steps remove the
    splitting bias of the earlier ones.

    Returns
    -------
    psi0 : Wavefunction
        Normalized, real, even ground state with a positive maximum.
    eps0 : float
        ``<psi0|H|psi0>`` at zero field.
    """
    V = _potential_on(grid, potential)
    x = grid.x
    amp = np.exp(-x ** 2 / (2 * seed_width ** 2)).astype(complex)
    amp /= np.sqrt(np.sum(np.abs(amp) ** 2) * grid.dx)
    iters = 0
    eps = np.inf
    for dtau in dtaus:
        half = np.exp(-0.5 * V * dtau)
        kin = np.exp(-0.5 * grid.k ** 2 * dtau)
        eps_prev = np.inf
        while True:
            for _ in range(check_every):
                amp = half * ifft(kin * fft(half * amp))
            iters += check_every
            amp /= np.sqrt(np.sum(np.abs(amp) ** 2) * grid.dx)
            eps = energy(Wavefunction(grid, amp), potential)
            if not np.isfinite(eps):
                raise ConvergenceError("imaginary-time relaxation produced a non-finite energy")
            if abs(eps - eps_prev) < tol:
                break
            if iters >= max_iter:
                raise ConvergenceError(
                    f"ground state not converged after {iters} imaginary steps (last change {abs(eps - eps_prev):.3g})")
            eps_prev = eps
    # symmetric seed and even potential keep parity; remove numerical imaginary residue
    amp = amp.real * np.sign(amp.real[np.argmax(np.abs(amp))])
    psi = Wavefunction(grid, amp.astype(complex)).normalized()
    log.debug("ground state converged after %d imaginary steps: %.12f", iters, eps)
    return psi, energy(psi, potential)


def fd_hamiltonian(grid: SpatialGrid, potential: PotentialLike):
    """Diagonal and off-diagonal of the three-point Hamiltonian (hard walls at the grid ends)."""
    V = _potential_on(grid, potential)
    h2 = grid.dx ** 2
    diag = 1.0 / h2 + V
    off = np.full(grid.n_points - 1, -0.5 / h2)
    return diag, off


def bound_spectrum(grid: SpatialGrid, potential: PotentialLike, n_states: int) -> BoundSpectrum:
    """Lowest ``n_states`` negative eigenvalues of the finite-difference Hamiltonian."""
    if n_states < 1:
        raise ContractViolation(f"n_states must be >= 1, got {n_states}")
    diag, off = fd_hamiltonian(grid, potential)
    n = min(n_states, grid.n_points)
    w = eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, n - 1),
                             lapack_driver="stebz")
    w = np.sort(w[w < 0])
    variant = potential.tag if isinstance(potential, PotentialSpec) else "custom"
    spectrum = BoundSpectrum(w, variant, n_states)
    if not spectrum.complete:
        log.warning("only %d of %d requested states are bound", len(w), n_states)
    return spectrum
