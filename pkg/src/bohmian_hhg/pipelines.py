"""Named pipelines that turn a :class:`~bohmian_hhg.config.RunConfig` into data files.

Every file written by an invocation is tracked; the run ends by writing
``manifest.json`` listing each output with its SHA-256, the full parameter
set and the package version. If any stage raises, the files written so far
are removed again.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .bohmian import TrajectoryIntegrator, equivariance_distance, sample_initial_positions, velocity_field
from .classical import ArchTable, arch_curves, default_t0_grid
from .config import RunConfig
from .core import _SNAPSHOT_HEADER, SNAPSHOT_MAGIC, TimeSeries, Trajectory, Wavefunction, read_snapshot, write_snapshot
from .errors import BohmianHHGError, ConfigurationError
from .potentials import PotentialVariant, keldysh_gamma, ponderomotive_energy
from .spectral import (PowerSpectrum, TimeFrequencyMap, branch_magnitude_ratio, cutoff_estimate,
                       default_gabor_axes, default_sigma, gabor_map, power_spectrum, ridge_compare)
from .tdse import bound_spectrum, ground_state, propagate

log = logging.getLogger(__name__)

PIPELINES = ("eigen", "propagate", "bohmian", "classical", "spectrum", "gabor", "fig1", "fig3")
VARIANTS = ("softcore", "truncated")

# Gabor read-off windows in field cycles, per potential
WINDOWS = {
    "softcore": {"peripheral-near": (5.0, 6.0), "peripheral-far": (9.0, 10.0)},
    "truncated": {"peripheral-near": (4.0, 5.0), "peripheral-far": (6.0, 7.0)},
}
RIDGE_BAND = (15.0, 30.0)


class StageError(BohmianHHGError):
    """Wraps an error raised inside a pipeline stage with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("bohmian-hhg")
    except Exception:
        return "unknown"


class OutputTracker:
    """Registry of files written by one invocation, with rollback."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.files: list[Path] = []
        self.inputs: list[Path] = []
        self._dirs: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        for parent in reversed(p.relative_to(self.out_dir).parents):
            d = self.out_dir / parent
            if not d.exists():
                d.mkdir(parents=True)
                self._dirs.append(d)
        if p not in self.files:
            self.files.append(p)
        return p

    def rollback(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)
        for d in reversed(self._dirs):
            try:
                d.rmdir()
            except OSError:
                pass
        self.files.clear()

    def write_manifest(self, pipeline: str, cfg: RunConfig, variants, diagnostics: dict) -> Path:
        path = self.path("manifest.json")

        def entry(p: Path):
            return {"path": str(p.relative_to(self.out_dir)),
                    "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}

        manifest = {
            "pipeline": pipeline,
            "variants": list(variants),
            "version": _version(),
            "parameters": cfg.as_lines(),
            "outputs": [entry(p) for p in self.files if p != path],
            "inputs": [entry(p) for p in self.inputs],
            "diagnostics": _plain(diagnostics),
        }
        path.write_text(json.dumps(manifest, indent=2, allow_nan=False) + "\n")
        return path


def _plain(obj):
    """JSON-ready copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def write_csv(path: Path, header: str, columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def write_map_csv(path: Path, tfmap: TimeFrequencyMap, period: float) -> None:
    """Matrix CSV: first row harmonic orders, first column ``t'`` in field cycles."""
    body = np.column_stack([tfmap.t / period, tfmap.magnitude])
    with open(path, "w") as fh:
        fh.write("t_over_period," + ",".join(f"{h:.10g}" for h in tfmap.harmonic_order) + "\n")
        np.savetxt(fh, body, fmt="%.17g", delimiter=",")


def _spectrum_csv(path: Path, ps: PowerSpectrum) -> None:
    write_csv(path, "harmonic_order,intensity", [ps.harmonic_order, ps.intensity])


def _cutoff_dict(res) -> dict:
    return {"harmonic": res.harmonic, "plateau": res.plateau,
            "plateau_level_db": res.plateau_level_db, "contrast_db": res.contrast_db}


@dataclass
class Dynamics:
    """In-memory results of one TDSE run with its Bohmian ensemble."""

    epsilon0: float
    accel: TimeSeries | None = None
    efield: TimeSeries | None = None
    norm: TimeSeries | None = None
    trajectories: list[Trajectory] = field(default_factory=list)
    equivariance_l1: float | None = None
    equivariance_t: float | None = None

    def trajectory_at(self, x0: float) -> Trajectory:
        j = int(np.argmin([abs(tr.x0 - x0) for tr in self.trajectories]))
        return self.trajectories[j]


class Session:
    """Runs stages for one invocation, caching intermediate results per potential."""

    def __init__(self, cfg: RunConfig, tracker: OutputTracker):
        self.cfg = cfg
        self.out = tracker
        self.pulse = cfg.pulse_spec()
        self.grid = cfg.grid_spec()
        self.diagnostics: dict = {}
        self.stage = "setup"
        self._ground: dict = {}
        self._dyn: dict = {}
        self._arches: dict = {}

    def _diag(self, stage: str, tag: str | None = None) -> dict:
        d = self.diagnostics.setdefault(stage, {})
        return d.setdefault(tag, {}) if tag else d

    def ground(self, tag: str):
        if tag not in self._ground:
            self._ground[tag] = ground_state(self.grid, self.cfg.potential_spec(tag))
        return self._ground[tag]

    # -- stages ---------------------------------------------------------------
    def eigen(self, tags) -> None:
        self.stage = "eigen"
        n = self.cfg.eigen.n_states
        for tag in tags:
            spec = self.cfg.potential_spec(tag)
            bs = bound_spectrum(self.grid, spec, n)
            write_csv(self.out.path(f"eigen_{tag}.csv"), "n,energy", [np.arange(len(bs)), bs.energies])
            d = self._diag("eigen", tag)
            d["energies"] = bs.energies
            d["complete"] = bs.complete
            d["keldysh_gamma"] = keldysh_gamma(self.pulse, float(bs.energies[0]))
            d["ponderomotive_energy"] = ponderomotive_energy(self.pulse)

    def _snapshot_path(self, tag: str) -> Path:
        return self.out.out_dir / f"snapshots_{tag}.bhh"

    def _stored_snapshots_usable(self, tag: str) -> bool:
        """True if a snapshot stream from an earlier run matches this configuration."""
        path = self._snapshot_path(tag)
        if not path.exists() or path in self.out.files:
            return False
        sched = self.cfg.schedule_spec()
        expected = sched.n_steps // sched.snapshot_stride + 1
        rec = _SNAPSHOT_HEADER.size + 16 * self.grid.n_points
        if path.stat().st_size != expected * rec:
            return False
        with open(path, "rb") as fh:
            if fh.read(4) != SNAPSHOT_MAGIC:
                return False
            fh.seek(0)
            first = read_snapshot(fh)
            fh.seek(rec)
            second = read_snapshot(fh)
        g = first.grid
        return (g.n_points == self.grid.n_points and np.isclose(g.x_min, self.grid.x_min)
                and np.isclose(g.dx, self.grid.dx)
                and np.isclose(second.t - first.t, sched.dt * sched.snapshot_stride))

    def dynamics(self, tag: str, need_accel: bool = True, need_bohmian: bool = True) -> Dynamics:
        """Propagate (or replay stored snapshots) and integrate the Bohmian ensemble."""
        cached = self._dyn.get(tag)
        if cached is not None and (cached.accel is not None or not need_accel) and (
                cached.trajectories or not need_bohmian):
            return cached
        cfg = self.cfg
        b = cfg.bohmian
        self.stage = "propagate"
        psi0, eps0 = self.ground(tag)
        dyn = Dynamics(eps0)
        sched = cfg.schedule_spec()

        feed: Callable[[Wavefunction], None] | None = None
        if need_bohmian:
            x0 = np.unique(np.round(np.concatenate([cfg.ensemble_x0(), [b.central, b.peripheral]]), 12))
            ens = TrajectoryIntegrator(x0, b.rho_floor, max_strain=b.max_strain, max_substeps=b.max_substeps)
            rng = np.random.default_rng(cfg.run.seed)
            cloud = None
            if b.n_equivariance > 0:
                cloud = TrajectoryIntegrator(sample_initial_positions(psi0, b.n_equivariance, rng),
                                             b.rho_floor, max_strain=b.max_strain,
                                             max_substeps=b.max_substeps, keep_history=False)
            t_mid = 0.5 * self.pulse.t_final
            mid: dict = {}

            def feed(psi):
                vf = velocity_field(psi, b.rho_floor)
                ens.feed_field(vf)
                # the cloud is only read once, at mid-pulse
                if cloud is not None and "psi" not in mid:
                    cloud.feed_field(vf)
                    if psi.t >= t_mid:
                        mid["psi"] = psi
                        mid["pos"] = cloud.positions

        snap_name = f"snapshots_{tag}.bhh"
        if need_bohmian and not need_accel and self._stored_snapshots_usable(tag):
            path = self._snapshot_path(tag)
            self.out.inputs.append(path)
            with open(path, "rb") as fh:
                while (psi := read_snapshot(fh)) is not None:
                    feed(psi)
        else:
            fh = open(self.out.path(snap_name), "wb") if cfg.schedule.write_snapshots else None
            try:
                def on_snapshot(psi):
                    if fh is not None:
                        write_snapshot(fh, psi)
                    if feed is not None:
                        feed(psi)

                res = propagate(psi0, sched, cfg.potential_spec(tag), self.pulse, keep_snapshots=False,
                                on_snapshot=on_snapshot)
            finally:
                if fh is not None:
                    fh.close()
            dyn.accel, dyn.efield, dyn.norm = res.accel, res.field, res.norm
            write_csv(self.out.path(f"accel_{tag}.csv"), "t,a", [res.accel.t, res.accel.values])
            write_csv(self.out.path(f"field_{tag}.csv"), "t,E", [res.field.t, res.field.values])
            d = self._diag("propagate", tag)
            d["epsilon0"] = eps0
            d["final_norm"] = float(res.norm.values[-1])
            d["max_norm_drift"] = float(np.max(np.abs(res.norm.values - res.norm.values[0])))

        if need_bohmian:
            self.stage = "bohmian"
            dyn.trajectories = ens.trajectories()
            rows = []
            for tr in dyn.trajectories:
                name = f"trajectories/traj_bohmian_{tag}_x0_{tr.x0:+.3f}.csv"
                write_csv(self.out.path(name), "t,x,v", [tr.t, tr.x, tr.v])
                rows.append((name, tr.x0, tr.exited))
            with open(self.out.path(f"ensemble_{tag}.csv"), "w") as fh_ens:
                fh_ens.write("file,x0,exited\n")
                for name, x0v, ex in rows:
                    fh_ens.write(f"{name},{x0v:.17g},{int(ex)}\n")
            d = self._diag("bohmian", tag)
            d["n_trajectories"] = len(dyn.trajectories)
            d["n_exited"] = int(sum(tr.exited for tr in dyn.trajectories))
            d["min_neighbour_gap"] = _min_gap(dyn.trajectories)
            if "psi" in mid:
                dyn.equivariance_l1 = equivariance_distance(mid["pos"], mid["psi"])
                dyn.equivariance_t = mid["psi"].t
                d["equivariance_l1"] = dyn.equivariance_l1
                d["equivariance_t"] = dyn.equivariance_t
        if cached is not None:
            dyn.accel = dyn.accel if dyn.accel is not None else cached.accel
            dyn.efield = dyn.efield if dyn.efield is not None else cached.efield
            dyn.norm = dyn.norm if dyn.norm is not None else cached.norm
            dyn.trajectories = dyn.trajectories or cached.trajectories
        self._dyn[tag] = dyn
        return dyn

    def arches(self, tag: str | None) -> ArchTable:
        """Classical return table: field only for ``tag=None``, else with that potential."""
        self.stage = "classical"
        key = tag or "field"
        if key not in self._arches:
            c = self.cfg.classical
            eps0 = self.ground(tag or self.cfg.potential.variant)[1] if tag else self._field_eps0()
            spec = self.cfg.potential_spec(tag) if tag else None
            t0_grid = default_t0_grid(self.pulse, points_per_half_cycle=c.points_per_half_cycle)
            table = arch_curves(self.pulse, spec, eps0, t0_grid, excursion_cycles=c.excursion_cycles,
                                x_exit=c.x_exit, steps_per_cycle=c.steps_per_cycle, scheme=c.scheme)
            table.write_csv(self.out.path(f"arches_{key}.csv"))
            d = self._diag("classical", key)
            d["n_events"] = len(table)
            if len(table):
                d["apex_harmonic"] = table.apex()
                d["apex_first_return"] = table.apex(1)
                up = ponderomotive_energy(self.pulse)
                for order in (1, 2):
                    sel = table.order == order
                    if sel.any():
                        ke = (table.harmonic_order[sel].max() * self.pulse.omega - abs(eps0))
                        d[f"max_kinetic_over_up_order{order}"] = ke / up
            self._arches[key] = table
        return self._arches[key]

    def _field_eps0(self) -> float:
        return self.ground(self.cfg.potential.variant)[1]

    def classical(self, tags) -> None:
        self.arches(None)
        for tag in tags:
            self.arches(tag)

    def spectrum(self, tag: str) -> dict:
        cfg = self.cfg
        s = cfg.spectral
        dyn = self.dynamics(tag)
        self.stage = "spectrum"
        results = {}
        series = {"accel": dyn.accel,
                  "central": dyn.trajectory_at(cfg.bohmian.central).samples,
                  "peripheral": dyn.trajectory_at(cfg.bohmian.peripheral).samples}
        for name, ts in series.items():
            ps = power_spectrum(ts, s.window, self.pulse.omega)
            _spectrum_csv(self.out.path(f"spectrum_{name}_{tag}.csv"), ps)
            res = cutoff_estimate(ps, dyn.epsilon0, self.pulse, plateau_band=(s.plateau_lo, s.plateau_hi),
                                  drop_db=s.drop_db)
            results[name] = res
            self._diag("spectrum", tag)[name] = _cutoff_dict(res)
        return results

    def gabor(self, tag: str) -> dict:
        cfg = self.cfg
        s = cfg.spectral
        dyn = self.dynamics(tag, need_accel=False)
        self.stage = "gabor"
        sigma = cfg.gabor_sigma() or default_sigma(self.pulse)
        period = self.pulse.period
        maps = {}
        for name, x0 in (("central", cfg.bohmian.central), ("peripheral", cfg.bohmian.peripheral)):
            ts = dyn.trajectory_at(x0).samples
            t_grid, w_grid = default_gabor_axes(self.pulse, ts.t0, ts.t_end, s.points_per_cycle,
                                                s.harmonic_max, s.harmonic_step)
            tfmap = gabor_map(ts, sigma, t_grid, w_grid, self.pulse.omega)
            write_map_csv(self.out.path(f"gabor_{name}_{tag}.csv"), tfmap, period)
            maps[name] = tfmap
        arches = self.arches(None)
        d = self._diag("gabor", tag)
        flat = (self.pulse.t_on, self.pulse.t_off)
        rc = ridge_compare(maps["central"], arches, RIDGE_BAND, flat)
        d["central_median_abs_offset_cycles"] = rc.median_abs_offset()
        d["central_failed_fraction"] = rc.failed_fraction()
        d["central_branch_ratio"] = branch_magnitude_ratio(maps["central"], arches, RIDGE_BAND, flat)
        for wname, (c0, c1) in WINDOWS[tag].items():
            win = (c0 * period, c1 * period)
            rp = ridge_compare(maps["peripheral"], arches, RIDGE_BAND, win)
            d[f"{wname}_failed_fraction"] = rp.failed_fraction()
            d[f"{wname}_median_abs_offset_cycles"] = rp.median_abs_offset()
        return maps


def _min_gap(trajectories) -> float:
    """Smallest ``x_{i+1} - x_i`` over all common samples, trajectories sorted by ``x0``."""
    trs = sorted(trajectories, key=lambda tr: tr.x0)
    gap = np.inf
    for a, b in zip(trs[:-1], trs[1:]):
        n = min(len(a.samples), len(b.samples))
        gap = min(gap, float(np.min(b.x[:n] - a.x[:n])))
    return gap


def run_pipeline(cfg: RunConfig, pipeline: str, out_dir, variant: str | None = None) -> dict:
    """Run ``pipeline`` into ``out_dir`` and return its manifest as a dict.

    ``variant`` restricts potential-dependent stages to one potential; by
    default ``eigen`` and ``fig3`` cover both and the others use the
    configured one.
    """
    if pipeline not in PIPELINES:
        raise ConfigurationError(f"unknown pipeline {pipeline!r}; choose from {', '.join(PIPELINES)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if variant is not None:
        tag = "truncated" if PotentialVariant.parse(variant) is PotentialVariant.SOFTCORE_TRUNCATED else "softcore"
        tags = [tag]
    elif pipeline in ("eigen", "fig3"):
        tags = list(VARIANTS)
    else:
        tags = [cfg.potential_spec().tag]

    tracker = OutputTracker(out_dir)
    session = Session(cfg, tracker)
    try:
        if pipeline == "eigen":
            session.eigen(tags)
        elif pipeline == "classical":
            session.classical(tags)
        else:
            for tag in tags:
                if pipeline == "propagate":
                    session.dynamics(tag, need_bohmian=False)
                elif pipeline == "bohmian":
                    session.dynamics(tag, need_accel=False)
                elif pipeline == "spectrum":
                    session.spectrum(tag)
                elif pipeline == "gabor":
                    session.gabor(tag)
                elif pipeline == "fig1":
                    session.spectrum(tag)
                elif pipeline == "fig3":
                    session.arches(tag)
                    session.gabor(tag)
        path = tracker.write_manifest(pipeline, cfg, tags, session.diagnostics)
    except BaseException as exc:
        tracker.rollback()
        if isinstance(exc, BohmianHHGError) and not isinstance(exc, (ConfigurationError, StageError)):
            raise StageError(session.stage, exc) from exc
        raise
    return json.loads(path.read_text())
