import math

import numpy as np
import pytest
from scipy import integrate

from kuramoto_dephasing.spectral_state import (
    AsymptoticState,
    FrequencyProfile,
    InvalidStateError,
    decay_bound_report,
    free_order_parameter,
    sample_labels,
    spectral_transform,
)


def quad_transform(state, k, eta):
    """Independent quadrature oracle for fhat(k, eta), using the tensor split."""
    ang_re = integrate.quad(
        lambda th: math.cos(k * th) * state.angular_factor(th) / (2 * math.pi), 0, 2 * math.pi
    )[0]
    ang_im = integrate.quad(
        lambda th: -math.sin(k * th) * state.angular_factor(th) / (2 * math.pi), 0, 2 * math.pi
    )[0]
    g = state.profile.density
    if abs(eta) < 1e-12:
        freq = 2.0 * integrate.quad(g, 0, np.inf)[0]
    else:
        # g is even, so the transform reduces to a cosine integral (QAWF)
        freq = 2.0 * integrate.quad(g, 0, np.inf, weight="cos", wvar=abs(eta))[0]
    return complex(ang_re, ang_im) * freq


@pytest.fixture
def eps_state():
    return AsymptoticState(FrequencyProfile("lorentzian", 1.0), {1: 0.05}, "exponential", 0.9)


def test_reference_transform_value(eps_state):
    # fhat(-1, -2) for the (1 + 0.1 cos theta) lorentzian datum
    got = spectral_transform(eps_state, -1, -2.0)
    assert got == pytest.approx(0.05 * math.exp(-2.0), abs=1e-15)
    assert got == pytest.approx(6.766764161830635e-3, abs=1e-15)
    # against the independent quadrature oracle
    assert got == pytest.approx(quad_transform(eps_state, -1, -2.0), abs=1e-10)


@pytest.mark.parametrize("kind,scale", [("lorentzian", 1.0), ("gaussian", 0.7), ("laplace", 1.3)])
def test_transform_matches_quadrature(kind, scale):
    if kind == "laplace":
        st = AsymptoticState(FrequencyProfile(kind, scale), {1: 0.03, 2: 0.1j}, "polynomial", 2.0)
    else:
        st = AsymptoticState(FrequencyProfile(kind, scale), {1: 0.03, 2: 0.1j}, "exponential", 0.5)
    for k in (-2, -1, 0, 1, 3):
        for eta in (0.0, 0.5, -3.0):
            got = spectral_transform(st, k, eta)
            want = quad_transform(st, k, eta)
            assert got == pytest.approx(want, abs=2e-9)
    # modes the state does not carry vanish identically
    assert spectral_transform(st, 5, 1.0) == 0.0


def test_free_order_parameter_closed_forms():
    lor = AsymptoticState(FrequencyProfile("lorentzian", 1.0), {1: 0.05}, "exponential", 0.9)
    t = np.linspace(0.0, 20.0, 401)
    z = free_order_parameter(lor, t)
    assert np.max(np.abs(z - 0.05 * np.exp(-t))) < 1e-15

    lap = AsymptoticState(FrequencyProfile("laplace", 1.0), {1: 0.05}, "polynomial", 2.0)
    t = np.linspace(0.0, 40.0, 801)
    z = free_order_parameter(lap, t)
    assert np.max(np.abs(z - 0.05 / (1.0 + t * t))) < 1e-15


def test_density_normalization(eps_state):
    th = np.linspace(0.0, 2 * math.pi, 257)[:-1]
    marg = np.array(
        [integrate.quad(lambda w, a=a: eps_state.density(a, w), -np.inf, np.inf)[0] for a in th[::16]]
    )
    total = np.mean(marg) * 2 * math.pi  # uniform theta average x full angle
    assert total == pytest.approx(1.0, abs=1e-9)
    assert np.all(eps_state.angular_factor(th) >= 0.0)


def test_state_validation():
    prof = FrequencyProfile("lorentzian", 1.0)
    with pytest.raises(InvalidStateError):
        AsymptoticState(prof, {0: 0.1})
    with pytest.raises(InvalidStateError):
        AsymptoticState(prof, {-1: 0.1})
    with pytest.raises(InvalidStateError):
        AsymptoticState(prof, {1: 0.6})  # 2*0.6 > 1, density dips negative
    with pytest.raises(InvalidStateError):
        AsymptoticState(prof, {1: 0.05}, "exponential", 1.5)  # faster than the profile allows
    with pytest.raises(InvalidStateError):
        AsymptoticState(FrequencyProfile("laplace", 1.0), {1: 0.05}, "exponential", 0.5)
    with pytest.raises(InvalidStateError):
        AsymptoticState(FrequencyProfile("laplace", 1.0), {1: 0.05}, "polynomial", 3.0)
    with pytest.raises(InvalidStateError):
        AsymptoticState(prof, {1: 0.05}, "polynomial", 1.0)
    with pytest.raises(InvalidStateError):
        FrequencyProfile("cauchy", 1.0)
    with pytest.raises(InvalidStateError):
        FrequencyProfile("gaussian", -1.0)


def test_profile_inverse_cdf_roundtrip():
    for kind in ("lorentzian", "gaussian", "laplace"):
        prof = FrequencyProfile(kind, 0.8)
        p = np.array([0.05, 0.31, 0.5, 0.77, 0.99])
        w = prof.inverse_cdf(p)
        # numeric CDF at the quantiles recovers p
        cdf = np.array([integrate.quad(prof.density, -np.inf, x)[0] for x in w])
        assert np.allclose(cdf, p, atol=1e-8)
    with pytest.raises(ValueError):
        FrequencyProfile("gaussian", 1.0).inverse_cdf(0.0)


def test_sample_labels_moments(eps_state):
    n = 200_000
    th, om = sample_labels(eps_state, n, seed=7)
    assert th.shape == om.shape == (n,)
    assert np.all((th >= 0) & (th < 2 * math.pi))
    # E e^{i theta} = conj(a_1), E e^{i omega} = ghat(-1); 5 sigma bands
    se = 1.0 / math.sqrt(n)
    assert abs(np.mean(np.exp(1j * th)) - 0.05) < 5 * se
    assert abs(np.mean(np.exp(1j * om)) - math.exp(-1.0)) < 5 * se
    # reproducible for a fixed (n, seed) pair
    th2, om2 = sample_labels(eps_state, n, seed=7)
    assert np.array_equal(th2, th) and np.array_equal(om2, om)
    th3, _ = sample_labels(eps_state, n, seed=8)
    assert not np.array_equal(th3, th)


def test_decay_bound_report(eps_state):
    rep = decay_bound_report(eps_state)
    assert rep["consistent"]
    assert rep["sup_frequency_weight"] == pytest.approx(1.0, rel=1e-12)  # k=0 at eta=0
    assert rep["sup_joint_weight"] >= rep["sup_frequency_weight"]

    lap = AsymptoticState(FrequencyProfile("laplace", 1.0), {1: 0.05}, "polynomial", 2.0)
    rep = decay_bound_report(lap)
    assert rep["consistent"]
    # (1+eta^2) exactly cancels the laplace transform, so the weighted sup is 1
    assert rep["sup_frequency_weight"] == pytest.approx(1.0, rel=1e-12)
