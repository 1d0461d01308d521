import pytest
from hypothesis import given, strategies as st

from bohmian_hhg.config import RunConfig, parse_config, parse_config_text
from bohmian_hhg.errors import ConfigurationError
from bohmian_hhg.potentials import PotentialVariant


def test_empty_file_gives_default_run(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    pulse = cfg.pulse_spec()
    assert (pulse.E0, pulse.omega, pulse.n_ramp, pulse.n_flat) == (0.075, 0.057, 2.25, 10.0)
    spec = cfg.potential_spec()
    assert spec.variant is PotentialVariant.SOFTCORE_LONG and (spec.a0, spec.L) == (5.0, 50.0)
    assert cfg.grid_spec().n_points == 16384
    assert cfg.schedule_spec().absorber.width == 100.0


def test_truncated_variant_keeps_taper_defaults():
    spec = parse_config_text("potential.variant = truncated\n").potential_spec()
    assert spec.variant is PotentialVariant.SOFTCORE_TRUNCATED and (spec.a0, spec.L) == (5.0, 50.0)


def test_negative_field_amplitude_rejected():
    with pytest.raises(ConfigurationError, match="E0"):
        parse_config_text("pulse.E0 = -1")


@pytest.mark.parametrize("text,line", [
    ("# comment\n\nfoo.bar = 1", 3),
    ("pulse.E0 = 0.05\npulse.bogus = 2", 2),
    ("pulse.E0", 1),
    ("pulse = 3", 1),
    ("grid.n_points = many", 1),
    ("schedule.absorber = maybe", 1),
    ("pulse.E0 = 1\npulse.E0 = 2", 2),
    ("potential.variant = yukawa", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigurationError) as err:
        parse_config_text(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


@pytest.mark.parametrize("text", [
    "grid.n_points = 1000",
    "grid.x_min = 5\ngrid.x_max = -5",
    "bohmian.rho_floor = 0",
    "spectral.sigma = -2",
    "spectral.window = blackman",
    "classical.scheme = sideways",
    "bohmian.x0_max = 900",
    "potential.a0 = 80",
])
def test_validation_errors(text):
    with pytest.raises(ConfigurationError):
        parse_config_text(text)


def test_inline_comments_and_types():
    cfg = parse_config_text("schedule.absorber = no   # exact norm\ngrid.n_points = 2048.0\nspectral.sigma = 4.5")
    assert cfg.schedule.absorber is False and cfg.schedule_spec().absorber is None
    assert cfg.grid.n_points == 2048
    assert cfg.gabor_sigma() == 4.5


@given(e0=st.floats(0.0, 0.2), omega=st.floats(0.01, 0.2))
def test_round_trip_through_text(e0, omega):
    cfg = parse_config_text(f"pulse.E0 = {e0!r}\npulse.omega = {omega!r}")
    again = parse_config_text("\n".join(cfg.as_lines()))
    assert again.as_lines() == cfg.as_lines()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "nope.cfg")


def test_default_object_is_valid():
    assert RunConfig().validate().as_lines() == parse_config_text("").as_lines()
