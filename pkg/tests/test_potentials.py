import numpy as np
import pytest
from hypothesis import given, strategies as st

from bohmian_hhg.errors import ConfigurationError, ContractViolation
from bohmian_hhg.potentials import (PotentialSpec, PotentialVariant, PulseSpec, cutoff_harmonic,
                                    escape_velocity, keldysh_gamma, ponderomotive_energy, _mask)

LONG = PotentialSpec(PotentialVariant.SOFTCORE_LONG)
TRUNC = PotentialSpec(PotentialVariant.SOFTCORE_TRUNCATED)


def test_variant_aliases():
    assert PotentialVariant.parse("softcore") is PotentialVariant.SOFTCORE_LONG
    assert PotentialVariant.parse("Truncated") is PotentialVariant.SOFTCORE_TRUNCATED
    assert PotentialVariant.parse(PotentialVariant.SOFTCORE_TRUNCATED) is PotentialVariant.SOFTCORE_TRUNCATED
    with pytest.raises(ConfigurationError):
        PotentialVariant.parse("coulomb")


def test_truncation_parameters_validated():
    with pytest.raises(ConfigurationError):
        PotentialSpec("truncated", a0=60.0, L=50.0)


def test_softcore_values():
    assert LONG(0.0) == -1.0
    assert LONG(1.0) == pytest.approx(-1 / np.sqrt(2))
    assert escape_velocity(LONG) == pytest.approx(np.sqrt(2.0))


@given(st.floats(-4.999, 4.999))
def test_variants_agree_inside_core(x):
    assert TRUNC(x) == LONG(x)
    assert TRUNC.gradient(x) == LONG.gradient(x)


def test_truncated_vanishes_outside():
    assert np.all(TRUNC(np.array([-80.0, -50.01, 50.01, 120.0])) == 0.0)
    assert np.all(np.abs(TRUNC(np.array([-50.0, 50.0]))) < 1e-12)


def test_mask_value_and_slope_vanish_at_L():
    f, df = _mask(TRUNC, np.array([-50.0, 50.0]))
    assert np.all(np.abs(f) < 1e-12) and np.all(np.abs(df) < 1e-12)
    # and the taper is continuous at a0
    f_in, _ = _mask(TRUNC, np.array([5.0 - 1e-9, 5.0 + 1e-9]))
    assert abs(f_in[0] - f_in[1]) < 1e-8


@pytest.mark.parametrize("spec", [LONG, TRUNC])
@given(x=st.floats(-70.0, 70.0))
def test_gradient_matches_central_difference(spec, x):
    if min(abs(abs(x) - 5.0), abs(abs(x) - 50.0)) < 1e-3:
        return
    h = 1e-4
    fd = (spec(x + h) - spec(x - h)) / (2 * h)
    g = spec.gradient(x)
    assert abs(fd - g) <= 1e-6 * max(abs(g), 1e-6)


def test_pulse_validation():
    with pytest.raises(ConfigurationError):
        PulseSpec(E0=-1.0)
    with pytest.raises(ConfigurationError):
        PulseSpec(omega=0.0)


def test_pulse_timing():
    p = PulseSpec()
    assert p.period == pytest.approx(2 * np.pi / 0.057)
    assert p.t_on == pytest.approx(2.25 * p.period)
    assert p.t_final == pytest.approx(14.5 * p.period)
    assert p.envelope(p.t_on / 2) == pytest.approx(0.5)
    assert p.envelope(0.5 * (p.t_on + p.t_off)) == 1.0
    assert p.envelope(p.t_off + p.t_on / 2) == pytest.approx(0.5)
    assert p.envelope(-1.0) == 0.0 and p.envelope(p.t_final + 1.0) == 0.0


def test_field_continuous_and_bounded():
    p = PulseSpec()
    t = np.linspace(0, p.t_final, 400_001)
    e = p.field(t)
    assert np.max(np.abs(e)) <= p.E0
    # one grid step can change E by at most E0 * (omega + 1/t_on) * dt
    bound = p.E0 * (p.omega + 1 / p.t_on) * (t[1] - t[0]) * 1.01
    assert np.max(np.abs(np.diff(e))) <= bound
    # continuity across each envelope kink
    for tk in (p.t_on, p.t_off, p.t_final):
        assert abs(p.field(tk - 1e-9) - p.field(tk + 1e-9)) < 1e-9


def test_strong_field_scales():
    p = PulseSpec()
    up = ponderomotive_energy(p)
    assert up == pytest.approx(0.075 ** 2 / (4 * 0.057 ** 2))
    assert up == pytest.approx(0.4328, abs=1e-4)
    assert keldysh_gamma(p, -0.66995) == pytest.approx(0.880, abs=0.005)
    assert cutoff_harmonic(p, -0.66995) == pytest.approx(35.8, abs=0.3)
    assert keldysh_gamma(PulseSpec(E0=0.0), -0.5) == np.inf
    with pytest.raises(ContractViolation):
        keldysh_gamma(p, 0.1)
