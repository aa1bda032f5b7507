import numpy as np
import pytest

from dressedlaser.engine import build_generator, steady_state
from dressedlaser.oracle import (
    DegenerateNullSpaceError,
    build_liouvillian,
    generator_eigenvalues,
    oracle_correlation_transform,
    oracle_spectrum,
    oracle_steady_state,
    project,
    time_domain_transform,
)
from dressedlaser.params import DressedFrame


@pytest.fixture(scope="module")
def L06(frame06):
    return build_liouvillian(frame06, 0.05, 8)


@pytest.fixture(scope="module")
def rho06(L06):
    return oracle_steady_state(L06)


def test_dimensions():
    L = build_liouvillian(DressedFrame.from_rates(1.0, 0.1, 0.1, 0.1), 0.1, 1)
    assert L.dim == 4
    assert L.generator.shape == (16, 16)
    with pytest.raises(ValueError):
        build_liouvillian(L.frame, 0.1, 0)


def test_dark_state_is_annihilated():
    frame = DressedFrame.from_rates(1.5, 0.3, 0.0, 0.7)
    L = build_liouvillian(frame, 0.2, 4)
    rho = np.zeros((L.dim, L.dim))
    rho[5, 5] = 1.0  # |2~, 0>
    assert np.abs(L.apply(rho)).max() == 0.0
    assert np.abs(oracle_steady_state(L) - rho).max() < 1e-14


def test_trace_is_a_left_null_vector(L06):
    trace_row = np.eye(L06.dim).reshape(-1)
    assert np.abs(trace_row @ L06.generator).max() < 1e-13


def test_hermiticity_is_preserved(L06):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((L06.dim, L06.dim)) + 1j * rng.standard_normal((L06.dim, L06.dim))
    rho = x + x.conj().T
    out = L06.apply(rho)
    assert np.abs(out - out.conj().T).max() < 1e-12


def test_dissipative_with_unique_stationary_state(L06):
    ev = generator_eigenvalues(L06)
    assert ev.real.max() <= 1e-10
    assert np.sum(np.abs(ev) < 1e-9) == 1


def test_steady_state_properties(L06, rho06):
    assert np.trace(rho06) == pytest.approx(1.0, abs=1e-14)
    assert np.abs(rho06 - rho06.conj().T).max() < 1e-15
    assert np.linalg.eigvalsh(rho06).min() >= -1e-10
    assert np.abs(L06.apply(rho06)).max() < 1e-12


def test_steady_state_has_no_cross_sector_terms(L06, rho06):
    # excitation number: photons plus one for |1~>
    n = np.arange(L06.n_max + 1)
    exc = np.concatenate([n + 1, n])
    mask = exc[:, None] != exc[None, :]
    assert np.abs(rho06[mask]).max() < 1e-10


def test_steady_state_matches_engine(frame06, L06, rho06):
    z = steady_state(build_generator(frame06, 0.05, 0, 8))
    assert np.abs(project(rho06, 8, 0).data - z.data).max() < 1e-9


def test_degenerate_null_space_is_reported():
    frame = DressedFrame.from_rates(1.0, 0.0, 0.0, 0.0)
    with pytest.raises(DegenerateNullSpaceError):
        oracle_steady_state(build_liouvillian(frame, 0.0, 3))


def test_frozen_reference_values(L06, rho06):
    ops = L06.ops
    n = np.trace(ops["ad"] @ ops["a"] @ rho06).real
    assert n == pytest.approx(2.276091244178519, rel=1e-10)
    nu = np.array([0.0, 1.0, 2.0])  # 0, g1/2, g1
    expected = {
        "cavity": [10.857445682031914, 1.5047767257877196, 0.2787169207440905],
        "fluor_lower": [0.000511875491722395, 0.02966740200231934, 0.021673586105756124],
        "fluor_central": [0.0630626772547269, 0.00935856197329053, 0.008457252106581782],
        "fluor_upper": [0.004089089564628897, 0.07477936877258295, 0.038482536569932384],
    }
    for kind, values in expected.items():
        spec = oracle_spectrum(L06, rho06, kind, nu)
        assert spec.values == pytest.approx(values, rel=1e-9), kind


def test_resolvent_agrees_with_time_integration(L06, rho06):
    ops = L06.ops
    shifts = np.array([0.0, -0.7j, 1.3j])
    a = oracle_correlation_transform(L06, rho06, ops["a"], ops["ad"], shifts)
    b = time_domain_transform(L06, rho06, ops["a"], ops["ad"], shifts, t_max=1500.0)
    assert np.abs(a - b).max() < 1e-8 * np.abs(a).max()


def test_central_sideband_against_time_integration():
    # vanishing coupling: <R3(t) R3> decays with the bare population rate
    frame = DressedFrame.from_rates(1e-6, 0.5, 0.3, 0.6)
    L = build_liouvillian(frame, 0.1, 2)
    rho = oracle_steady_state(L)
    nu = np.array([-1.0, 0.0, 0.4, 2.0])
    spec = oracle_spectrum(L, rho, "fluor_central", nu)
    t = time_domain_transform(L, rho, L.ops["R3"], L.ops["R3"], 1j * nu, t_max=400.0)
    assert spec.values == pytest.approx(0.25 * frame.gamma0 * t.real, rel=1e-6)
    # population relaxation at gamma_+ + gamma_-: Lorentzian of that half width
    rate = frame.gamma_plus + frame.gamma_minus
    p1 = frame.gamma_plus / rate
    var = 1.0 - (1.0 - 2.0 * p1) ** 2
    closed = 0.25 * frame.gamma0 * var * rate / (rate**2 + nu**2)
    assert spec.values == pytest.approx(closed, rel=1e-5)


def test_cavity_spectrum_vanishes_without_pump():
    frame = DressedFrame.from_rates(1.0, 0.2, 0.0, 0.3)
    L = build_liouvillian(frame, 0.1, 3)
    rho = oracle_steady_state(L)
    nu = np.linspace(-2, 2, 9)
    assert np.abs(oracle_spectrum(L, rho, "cavity", nu).values).max() < 1e-14
    assert np.abs(oracle_spectrum(L, rho, "fluor_upper", nu).values).max() == 0.0


def test_shift_sign_mirrors(L06, rho06):
    nu = np.linspace(-1.0, 3.0, 9)
    a = oracle_spectrum(L06, rho06, "cavity", nu, shift_sign=+1).values
    b = oracle_spectrum(L06, rho06, "cavity", -nu[::-1]).values[::-1]
    assert a == pytest.approx(b, rel=1e-12)


def test_unknown_kind(L06, rho06):
    with pytest.raises(ValueError):
        oracle_spectrum(L06, rho06, "total", np.array([0.0]))
