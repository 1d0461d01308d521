import json

import numpy as np
import pytest

from bohmian_hhg import cli, pipelines
from bohmian_hhg.config import parse_config_text
from bohmian_hhg.core import fft_workers, set_threads
from bohmian_hhg.errors import PropagationDiverged
from bohmian_hhg.pipelines import run_pipeline

TINY = """
grid.x_min = -150
grid.x_max = 150
grid.n_points = 1024
pulse.n_ramp = 0.5
pulse.n_flat = 0.5
schedule.steps_per_cycle = 256
bohmian.n_ensemble = 11
bohmian.n_equivariance = 100
classical.points_per_half_cycle = 40
classical.steps_per_cycle = 256
spectral.harmonic_max = 60
spectral.harmonic_step = 0.5
spectral.points_per_cycle = 10
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


@pytest.fixture(autouse=True)
def _reset_threads(monkeypatch):
    monkeypatch.delenv("BHHG_THREADS", raising=False)
    yield
    set_threads(1)


def _files(root):
    return sorted(p for p in root.rglob("*") if p.is_file())


@pytest.mark.parametrize("pipeline", ["eigen", "propagate", "classical", "fig1", "gabor"])
def test_manifest_lists_every_file(tmp_path, cfg_file, pipeline):
    out = tmp_path / "out"
    assert cli.main([pipeline, "--config", str(cfg_file), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {e["path"] for e in manifest["outputs"]} | {"manifest.json"}
    assert listed == {str(p.relative_to(out)) for p in _files(out)}
    assert manifest["pipeline"] == pipeline
    assert "pulse.E0 = 0.075" in manifest["parameters"]


def test_eigen_covers_both_variants(tmp_path, cfg_file):
    out = tmp_path / "eig"
    cli.main(["eigen", "--config", str(cfg_file), "--out", str(out)])
    for tag in ("softcore", "truncated"):
        lines = (out / f"eigen_{tag}.csv").read_text().splitlines()
        assert lines[0] == "n,energy" and len(lines) == 8


def test_csv_headers(tmp_path, cfg_file):
    out = tmp_path / "f1"
    cli.main(["fig1", "--config", str(cfg_file), "--out", str(out)])
    assert (out / "accel_softcore.csv").read_text().startswith("t,a\n")
    assert (out / "field_softcore.csv").read_text().startswith("t,E\n")
    assert (out / "spectrum_central_softcore.csv").read_text().startswith("harmonic_order,intensity\n")
    traj = sorted((out / "trajectories").glob("traj_bohmian_softcore_x0_*.csv"))
    assert len(traj) == 11
    assert traj[0].read_text().startswith("t,x,v\n")
    assert (out / "ensemble_softcore.csv").read_text().startswith("file,x0,exited\n")


def test_gabor_map_layout(tmp_path, cfg_file):
    out = tmp_path / "g"
    cli.main(["gabor", "--config", str(cfg_file), "--out", str(out)])
    rows = (out / "gabor_central_softcore.csv").read_text().splitlines()
    head = rows[0].split(",")
    assert head[0] == "t_over_period" and float(head[1]) == 0.0 and float(head[-1]) == 60.0
    first_col = np.array([float(r.split(",", 1)[0]) for r in rows[1:]])
    assert first_col[0] == 0.0 and np.allclose(np.diff(first_col), 0.1)


def test_reruns_are_byte_identical(tmp_path, cfg_file):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["fig1", "--config", str(cfg_file), "--out", str(out)]) == 0
        runs.append({str(p.relative_to(out)): p.read_bytes() for p in _files(out)})
    assert runs[0].keys() == runs[1].keys()
    for key in runs[0]:
        assert runs[0][key] == runs[1][key], key


def test_snapshot_stream_reused_by_bohmian(tmp_path, cfg_file):
    out = tmp_path / "s"
    cfg = parse_config_text(TINY + "schedule.write_snapshots = true\n")
    run_pipeline(cfg, "propagate", out)
    assert (out / "snapshots_softcore.bhh").exists()
    manifest = run_pipeline(parse_config_text(TINY), "bohmian", out)
    assert [e["path"] for e in manifest["inputs"]] == ["snapshots_softcore.bhh"]
    fresh = tmp_path / "fresh"
    run_pipeline(parse_config_text(TINY), "bohmian", fresh)
    name = "trajectories/traj_bohmian_softcore_x0_+0.000.csv"
    assert (out / name).read_bytes() == (fresh / name).read_bytes()


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("pulse.E0 = -1\n")
    assert cli.main(["eigen", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("nonsense\n")
    assert cli.main(["eigen", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_numerical_failure_exit_code_and_rollback(tmp_path, cfg_file, monkeypatch, capsys):
    out = tmp_path / "fail"
    out.mkdir()
    (out / "keep.txt").write_text("pre-existing")

    def broken(self, tag):
        self.stage = "spectrum"
        raise PropagationDiverged("synthetic blow-up")

    # dynamics completes and writes its files before the spectrum stage fails
    real_spectrum = pipelines.Session.spectrum

    def spectrum_after_dynamics(self, tag):
        self.dynamics(tag)
        broken(self, tag)

    monkeypatch.setattr(pipelines.Session, "spectrum", spectrum_after_dynamics)
    assert cli.main(["fig1", "--config", str(cfg_file), "--out", str(out)]) == 3
    assert [p.name for p in _files(out)] == ["keep.txt"]
    assert "[spectrum]" in capsys.readouterr().err
    monkeypatch.setattr(pipelines.Session, "spectrum", real_spectrum)


def test_threads_env_overrides_flag(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("BHHG_THREADS", "3")
    assert cli.main(["eigen", "--config", str(cfg_file), "--out", str(tmp_path / "t"), "--threads", "1"]) == 0
    assert fft_workers() == 3
    monkeypatch.setenv("BHHG_THREADS", "lots")
    assert cli.main(["eigen", "--config", str(cfg_file), "--out", str(tmp_path / "t")]) == 2


def test_threads_flag(tmp_path, cfg_file):
    assert cli.main(["eigen", "--config", str(cfg_file), "--out", str(tmp_path / "t"), "--threads", "2"]) == 0
    assert fft_workers() == 2
    assert cli.main(["eigen", "--config", str(cfg_file), "--out", str(tmp_path / "t"), "--threads", "0"]) == 2


def test_potential_flag_selects_variant(tmp_path, cfg_file):
    out = tmp_path / "p"
    assert cli.main(["propagate", "--config", str(cfg_file), "--out", str(out), "--potential", "truncated"]) == 0
    assert (out / "accel_truncated.csv").exists() and not (out / "accel_softcore.csv").exists()


def test_unknown_pipeline_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fig9", "--out", str(tmp_path)])
    assert exc.value.code == 2
