import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcap.channels import (
    ChannelKind,
    ChannelSpec,
    amplitude_damping,
    bit_flip,
    depolarizing,
    phase_flip,
    validate_cptp,
)
from qcap.circuit import KrausChannel
from qcap.qmath import PreconditionError, projector

from conftest import random_density

probs = st.floats(min_value=0.0, max_value=1.0)
seeds = st.integers(min_value=0, max_value=2**32 - 1)
PLUS = projector(np.array([1, 1]) / np.sqrt(2))
ZERO = projector([1, 0])
ONE = projector([0, 1])


def test_bit_flip_endpoints(rng):
    rho = random_density(1, rng)
    np.testing.assert_allclose(bit_flip(0)(rho), rho, atol=1e-15)
    x = np.array([[0, 1], [1, 0]])
    np.testing.assert_allclose(bit_flip(1)(rho), x @ rho @ x, atol=1e-15)


def test_bit_flip_plus_fixed_point():
    np.testing.assert_allclose(bit_flip(0.3)(PLUS), PLUS, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(probs)
def test_phase_flip_fixes_zero(p):
    np.testing.assert_allclose(phase_flip(p)(ZERO), ZERO, atol=1e-15)


def test_phase_flip_on_plus():
    np.testing.assert_allclose(phase_flip(0.5)(PLUS), np.eye(2) / 2, atol=1e-15)
    assert phase_flip(0.1)(PLUS)[0, 1].real == pytest.approx(0.4, abs=1e-15)


def test_depolarizing_identity_and_full_mix(rng):
    rho = random_density(1, rng)
    np.testing.assert_allclose(depolarizing(0)(rho), rho, atol=1e-15)
    np.testing.assert_allclose(depolarizing(0.75)(rho), np.eye(2) / 2, atol=1e-15)


def test_depolarizing_flip_weight():
    np.testing.assert_allclose(depolarizing(0.3)(ZERO), np.diag([0.8, 0.2]), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(probs, seeds)
def test_depolarizing_affine_form(p, seed):
    rho = random_density(1, np.random.default_rng(seed))
    expected = (1 - 4 * p / 3) * rho + (2 * p / 3) * np.eye(2)
    np.testing.assert_allclose(depolarizing(p)(rho), expected, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(probs, seeds)
def test_amplitude_damping_zero_gamma_is_identity(p, seed):
    rho = random_density(1, np.random.default_rng(seed))
    np.testing.assert_allclose(amplitude_damping(p, 0.0)(rho), rho, atol=1e-12)


def test_amplitude_damping_full_decay():
    np.testing.assert_allclose(amplitude_damping(0, 1)(ONE), ZERO, atol=1e-15)


def test_amplitude_damping_reverse_direction():
    np.testing.assert_allclose(amplitude_damping(1, 0.4)(ZERO), np.diag([0.6, 0.4]), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(probs, probs, seeds)
def test_amplitude_damping_populations(p, gamma, seed):
    rho = random_density(1, np.random.default_rng(seed))
    out = amplitude_damping(p, gamma)(rho)
    r11 = rho[1, 1].real
    expected = r11 + gamma * (p - r11)
    assert out[1, 1].real == pytest.approx(expected, abs=1e-12)
    assert abs(out[0, 1]) == pytest.approx(np.sqrt(1 - gamma) * abs(rho[0, 1]), abs=1e-12)


def test_validate_cptp_examples():
    r = validate_cptp(bit_flip(0.3))
    assert r.passed and r.residual <= 1e-15
    assert validate_cptp(depolarizing(0.9))
    bad = validate_cptp(KrausChannel((np.sqrt(0.5) * np.eye(2),)))
    assert not bad.passed
    assert bad.residual == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(list(ChannelKind)), probs, probs)
def test_every_family_is_cptp(kind, p, gamma):
    assert validate_cptp(ChannelSpec(kind, p, gamma).build())


def test_out_of_range_rejected():
    with pytest.raises(PreconditionError):
        bit_flip(1.2)
    with pytest.raises(PreconditionError):
        amplitude_damping(0.5, -0.1)
    with pytest.raises(PreconditionError):
        ChannelSpec("depolarizing", p=2.0)


def test_spec_with_value():
    spec = ChannelSpec("amplitude_damping", p=1.0, gamma=0.2)
    assert spec.with_value("gamma", 0.7) == ChannelSpec("amplitude_damping", 1.0, 0.7)
    assert spec.with_value("p", 0.0).p == 0.0
    with pytest.raises(ValueError):
        spec.with_value("q", 0.1)


def test_pauli_channels_are_unital():
    for ch in (bit_flip(0.3), phase_flip(0.2), depolarizing(0.4)):
        np.testing.assert_allclose(ch(np.eye(2) / 2), np.eye(2) / 2, atol=1e-15)
    assert not np.allclose(amplitude_damping(0, 0.5)(np.eye(2) / 2), np.eye(2) / 2)
