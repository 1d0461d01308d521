"""Power spectra, Gabor time-frequency maps and plateau/cutoff read-off."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from .core import TimeSeries
from .errors import ConfigurationError, ContractViolation
from .potentials import PulseSpec, cutoff_harmonic

_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    omega: np.ndarray
    intensity: np.ndarray
    omega0: float | None = None
    # one-sided spectra fold negative frequencies onto positive ones
    one_sided: bool = True

    @property
    def harmonic_order(self) -> np.ndarray:
        if self.omega0 is None:
            raise ContractViolation("spectrum has no fundamental frequency attached")
        return self.omega / self.omega0

    @property
    def d_omega(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def total_power(self) -> float:
        """``sum I dOmega / 2pi`` over both signs of frequency (Parseval partner of ``int |h|^2 dt``)."""
        w = np.ones_like(self.intensity)
        if self.one_sided:
            w[1:] = 2.0
            if self._has_nyquist:
                w[-1] = 1.0
        return float(np.sum(w * self.intensity) * self.d_omega / (2 * np.pi))

    _has_nyquist: bool = field(default=False, repr=False)

    def log_intensity(self) -> np.ndarray:
        return 10.0 * np.log10(self.intensity + _TINY)

    def band(self, lo: float, hi: float) -> np.ndarray:
        """Boolean mask of bins with ``lo <= harmonic order <= hi``."""
        h = self.harmonic_order
        return (h >= lo) & (h <= hi)


def _window(name: str, n: int) -> np.ndarray | None:
    if name in (None, "none"):
        return None
    if name == "hann":
        return np.hanning(n)
    raise ConfigurationError(f"unknown window {name!r}; expected 'none' or 'hann'")


def power_spectrum(h: TimeSeries, window: str = "none", omega0: float | None = None,
                   subtract_mean: bool = True) -> PowerSpectrum:
    """``I(Omega) = |int h(t) exp(i Omega t) dt|^2`` on the discrete frequency lattice.

    Real series give a one-sided spectrum from 0 to the Nyquist frequency;
    complex series give the two-sided one sorted by frequency.
    """
    vals = np.asarray(h.values)
    if subtract_mean:
        vals = vals - vals.mean()
    w = _window(window, vals.size)
    if w is not None:
        vals = vals * w
    n = vals.size
    if np.iscomplexobj(vals):
        # exp(+i Omega t): n * ifft, then centre the zero frequency
        amp = np.fft.fftshift(n * np.fft.ifft(vals)) * h.dt
        omega = np.fft.fftshift(2 * np.pi * np.fft.fftfreq(n, h.dt))
        return PowerSpectrum(omega, np.abs(amp) ** 2, omega0, one_sided=False)
    amp = np.fft.rfft(vals) * h.dt
    omega = 2 * np.pi * np.fft.rfftfreq(n, h.dt)
    return PowerSpectrum(omega, np.abs(amp) ** 2, omega0, one_sided=True, _has_nyquist=(n % 2 == 0))


@dataclass(frozen=True, eq=False)
class TimeFrequencyMap:
    """``|a_G(Omega, t')|`` with rows indexed by ``t'`` and columns by ``Omega``."""

    t: np.ndarray
    omega: np.ndarray
    magnitude: np.ndarray
    sigma: float
    omega0: float | None = None

    def __post_init__(self):
        if self.magnitude.shape != (self.t.size, self.omega.size):
            raise ContractViolation("map shape does not match its axes")

    @property
    def harmonic_order(self) -> np.ndarray:
        if self.omega0 is None:
            raise ContractViolation("map has no fundamental frequency attached")
        return self.omega / self.omega0

    def column(self, harmonic: float) -> np.ndarray:
        """Time profile at the lattice frequency nearest ``harmonic``."""
        j = int(np.argmin(np.abs(self.harmonic_order - harmonic)))
        return self.magnitude[:, j]


def default_sigma(pulse: PulseSpec) -> float:
    return 1.0 / (3.0 * pulse.omega)


def default_gabor_axes(pulse: PulseSpec, t_start: float, t_stop: float,
                       points_per_cycle: int = 40, max_harmonic: float = 80.0,
                       harmonic_step: float = 0.1):
    """``t'`` lattice at ``points_per_cycle`` per cycle and harmonics 0..max in fixed steps."""
    dt = pulse.period / points_per_cycle
    n_t = int(np.floor((t_stop - t_start) / dt + 1e-9)) + 1
    t_grid = t_start + dt * np.arange(n_t)
    n_h = int(round(max_harmonic / harmonic_step)) + 1
    omega_grid = pulse.omega * harmonic_step * np.arange(n_h)
    return t_grid, omega_grid


def gabor_map(h: TimeSeries, sigma: float, t_grid, omega_grid, omega0: float | None = None,
              cutoff_sigmas: float = 6.0, subtract_mean: bool = True) -> TimeFrequencyMap:
    """Gaussian-windowed Fourier transform by direct quadrature.

    The window ``exp(-(t - t')^2 / 2 sigma^2)`` is cut at ``|t - t'| > cutoff_sigmas*sigma``.
    """
    if not sigma > 0:
        raise ConfigurationError(f"Gabor window width must be positive, got {sigma}")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    omega_grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    if t_grid.min() < h.t0 - 1e-9 or t_grid.max() > h.t_end + 1e-9:
        raise ContractViolation("t' grid extends beyond the time series")
    vals = np.asarray(h.values)
    if subtract_mean:
        vals = vals - vals.mean()
    t = h.t
    half = cutoff_sigmas * sigma
    out = np.empty((t_grid.size, omega_grid.size))
    for i, tp in enumerate(t_grid):
        lo = max(0, int(np.ceil((tp - half - h.t0) / h.dt)))
        hi = min(vals.size, int(np.floor((tp + half - h.t0) / h.dt)) + 1)
        seg_t = t[lo:hi]
        weighted = vals[lo:hi] * np.exp(-0.5 * ((seg_t - tp) / sigma) ** 2)
        # factor exp(i Omega t') out so the phase matrix only spans the window
        phase = np.exp(1j * np.outer(omega_grid, seg_t - tp))
        out[i] = np.abs(phase @ weighted) * h.dt
    return TimeFrequencyMap(t_grid, omega_grid, out, float(sigma), omega0)


@dataclass(frozen=True)
class CutoffResult:
    harmonic: float | None
    plateau: bool
    plateau_level_db: float
    contrast_db: float

    def __bool__(self):
        return self.plateau


def smoothed_log_spectrum(ps: PowerSpectrum, width_harmonics: float = 5.0) -> np.ndarray:
    """Moving median of ``10 log10 I`` over ``width_harmonics`` harmonic orders."""
    n = max(1, int(round(width_harmonics * ps.omega0 / ps.d_omega)))
    n += (n + 1) % 2
    return median_filter(ps.log_intensity(), size=n, mode="nearest")


def cutoff_estimate(ps: PowerSpectrum, epsilon0: float | None = None, pulse: PulseSpec | None = None,
                    plateau_band=(15.0, 30.0), compare_band=(45.0, 55.0), drop_db: float = 20.0,
                    min_contrast_db: float = 10.0, smooth_harmonics: float = 5.0) -> CutoffResult:
    """Harmonic order where the smoothed spectrum first falls ``drop_db`` below its plateau.

    The plateau level is the median of the smoothed log spectrum over
    ``plateau_band``. If that level exceeds the median over
    ``compare_band`` by less than ``min_contrast_db`` the spectrum has no
    plateau and ``harmonic`` is ``None``. ``epsilon0`` and ``pulse`` only
    supply the fundamental when the spectrum carries none.
    """
    if ps.omega0 is None:
        if pulse is None:
            raise ContractViolation("need the fundamental frequency to read harmonic orders")
        ps = PowerSpectrum(ps.omega, ps.intensity, pulse.omega, ps.one_sided, ps._has_nyquist)
    h = ps.harmonic_order
    if h[-1] < compare_band[1]:
        raise ContractViolation(
            f"spectrum ends at harmonic {h[-1]:.1f}, before the comparison band {compare_band}")
    smooth = smoothed_log_spectrum(ps, smooth_harmonics)
    plateau = float(np.median(smooth[ps.band(*plateau_band)]))
    contrast = plateau - float(np.median(smooth[ps.band(*compare_band)]))
    if contrast < min_contrast_db:
        return CutoffResult(None, False, plateau, contrast)
    level = plateau - drop_db
    start = int(np.searchsorted(h, plateau_band[0]))
    below = np.nonzero(smooth[start:] < level)[0]
    if below.size == 0:
        return CutoffResult(None, False, plateau, contrast)
    i = start + int(below[0])
    if i == 0:
        return CutoffResult(float(h[0]), True, plateau, contrast)
    # linear interpolation of the crossing between bins i-1 and i
    y0, y1 = smooth[i - 1], smooth[i]
    frac = (y0 - level) / (y0 - y1) if y0 != y1 else 0.0
    return CutoffResult(float(h[i - 1] + frac * (h[i] - h[i - 1])), True, plateau, contrast)


def predicted_cutoff(pulse: PulseSpec, epsilon0: float) -> float:
    return cutoff_harmonic(pulse, epsilon0)


def oscillation_spacing(h: TimeSeries, omega0: float, min_harmonic: float = 15.0,
                        max_harmonic: float | None = None, t_window=None) -> float:
    """Median time between successive maxima of the band-passed part of ``h``.

    The series is filtered by zeroing Fourier bins outside
    ``[min_harmonic, max_harmonic] * omega0`` (no upper limit by default);
    maxima are counted inside ``t_window`` (the whole series by default).
    Returned in units of the field period.
    """
    if min_harmonic <= 0 or (max_harmonic is not None and max_harmonic <= min_harmonic):
        raise ContractViolation("need 0 < min_harmonic < max_harmonic")
    vals = np.asarray(h.values, dtype=float)
    amp = np.fft.rfft(vals - vals.mean())
    omega = 2 * np.pi * np.fft.rfftfreq(vals.size, h.dt)
    amp[omega < min_harmonic * omega0] = 0.0
    if max_harmonic is not None:
        amp[omega > max_harmonic * omega0] = 0.0
    hp = np.fft.irfft(amp, vals.size)
    t = h.t
    lo, hi = (t[0], t[-1]) if t_window is None else t_window
    peaks = [_parabolic_peak(t, hp, i) for i in _local_maxima(hp) if lo <= t[i] <= hi]
    if len(peaks) < 2:
        return float("nan")
    return float(np.median(np.diff(peaks))) * omega0 / (2 * np.pi)


@dataclass
class RidgeComparison:
    """Per-harmonic signed offsets (map maximum minus nearest classical return)."""

    offsets: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    period: float = 1.0

    @property
    def all_offsets(self) -> np.ndarray:
        vals = [o for offs in self.offsets.values() for o in offs]
        return np.asarray(vals, dtype=float)

    def median_abs_offset(self) -> float:
        """Median ``|offset|`` in units of the field period."""
        offs = self.all_offsets
        return float(np.median(np.abs(offs)) / self.period) if offs.size else float("nan")

    def failed_fraction(self, threshold: float = 0.2) -> float:
        """Share of harmonics that were skipped or whose median |offset| exceeds ``threshold`` cycles."""
        n_total = len(self.offsets) + len(self.skipped)
        if n_total == 0:
            return 1.0
        bad = len(self.skipped)
        for offs in self.offsets.values():
            if np.median(np.abs(offs)) / self.period > threshold:
                bad += 1
        return bad / n_total


def _local_maxima(y: np.ndarray) -> np.ndarray:
    inner = np.nonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]))[0] + 1
    return inner


def _parabolic_peak(t: np.ndarray, y: np.ndarray, i: int) -> float:
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
    return float(t[i] + shift * (t[1] - t[0]))


def classical_return_times(arches, harmonic: float, period: float, t_start: float, t_stop: float,
                           branches=None) -> np.ndarray:
    """Return times at ``harmonic`` from an arch table, replicated over ``[t_start, t_stop]``.

    ``arches`` is an :class:`~bohmian_hhg.classical.ArchTable`; crossings are
    found along each (v0 sign, return order) family in release-time order
    and folded into one field period.
    """
    phases = []
    for fam in arches.families(branches=branches):
        t_ret = fam["t_return"]
        hh = fam["harmonic_order"]
        d = hh - harmonic
        cross = np.nonzero((d[:-1] <= 0) & (d[1:] > 0) | (d[:-1] > 0) & (d[1:] <= 0))[0]
        for c in cross:
            f = d[c] / (d[c] - d[c + 1])
            phases.append(np.mod(t_ret[c] + f * (t_ret[c + 1] - t_ret[c]), period))
    if not phases:
        return np.empty(0)
    phases = np.unique(np.round(np.asarray(phases), 12))
    m0 = int(np.floor(t_start / period)) - 1
    m1 = int(np.ceil(t_stop / period)) + 1
    times = (phases[None, :] + period * np.arange(m0, m1 + 1)[:, None]).ravel()
    return np.sort(times)


def ridge_compare(tfmap: TimeFrequencyMap, arches, band=(15, 30), t_window=None,
                  floor_ratio: float = 2.0, harmonic_step: float = 1.0,
                  branches=None) -> RidgeComparison:
    """Match time-profile maxima of the map to classical return times, harmonic by harmonic.

    For each harmonic order in ``band`` (every ``harmonic_step``), local maxima
    of the map's time profile inside ``t_window`` (one field cycle starting at
    the window start by default) that exceed ``floor_ratio`` times the
    profile's median are located to sub-sample precision and paired with the
    nearest classical return time. Harmonics with no such maximum are listed in
    ``skipped``.
    """
    period = 2 * np.pi / tfmap.omega0
    if t_window is None:
        t_window = (tfmap.t[0], min(tfmap.t[0] + period, tfmap.t[-1]))
    sel = (tfmap.t >= t_window[0] - 1e-9) & (tfmap.t <= t_window[1] + 1e-9)
    result = RidgeComparison(period=period)
    harmonics = np.arange(band[0], band[1] + 0.5 * harmonic_step, harmonic_step)
    t_full = tfmap.t
    if not sel.any():
        result.skipped.extend(float(hval) for hval in harmonics)
        return result
    for hval in harmonics:
        prof = tfmap.column(hval)
        floor = floor_ratio * float(np.median(prof[sel]))
        peaks = [i for i in _local_maxima(prof) if sel[i] and prof[i] > floor]
        classical = classical_return_times(arches, hval, period, *t_window, branches=branches)
        if not peaks or classical.size == 0:
            result.skipped.append(float(hval))
            continue
        offs = []
        for i in peaks:
            tp = _parabolic_peak(t_full, prof, i)
            j = int(np.argmin(np.abs(classical - tp)))
            offs.append(tp - classical[j])
        result.offsets[float(hval)] = offs
    return result


def branch_magnitude_ratio(tfmap: TimeFrequencyMap, arches, band=(15, 30), t_window=None,
                           harmonic_step: float = 1.0) -> float:
    """Summed map magnitude along short-branch returns over that along long-branch returns."""
    period = 2 * np.pi / tfmap.omega0
    if t_window is None:
        t_window = (tfmap.t[0], tfmap.t[-1])
    totals = {}
    for branch in ("short", "long"):
        acc = 0.0
        for hval in np.arange(band[0], band[1] + 0.5 * harmonic_step, harmonic_step):
            times = classical_return_times(arches, hval, period, *t_window, branches=(branch,))
            times = times[(times >= t_window[0]) & (times <= t_window[1])]
            if times.size:
                acc += float(np.sum(np.interp(times, tfmap.t, tfmap.column(hval))))
        totals[branch] = acc
    if totals["long"] == 0:
        return float("inf")
    return totals["short"] / totals["long"]
