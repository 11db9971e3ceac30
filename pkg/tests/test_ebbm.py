import math

import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import quad

from specband.ebbm import (
    FREE_LEADS,
    UNITARITY,
    UnitarityMonitor,
    ReservoirSpec,
    coupled_green_1L,
    crystalline_lb_current,
    crystalline_lb_density,
    lb_conductance,
    lb_current,
    lb_density,
    lb_density_values,
    lead_self_energy,
    transparency_check,
)
from specband.errors import InvalidInputError, NumericalFailureError
from specband.potential import PotentialSpec, catalog, sample

ZERO = PotentialSpec("zero")
P2 = PotentialSpec("periodic", values=(0.0, 2.0))
LEFT = FREE_LEADS[0]
INV2PI = 1.0 / (2.0 * math.pi)


def truncated_lead_green(z: complex, n: int = 10_000) -> complex:
    """<δ_1, (h_N - z)^{-1} δ_1> for the free chain on n sites, via a banded solve."""
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = -1.0
    ab[1, :] = -z
    ab[2, :-1] = -1.0
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    return complex(scipy.linalg.solve_banded((1, 1), ab, rhs)[0])


def test_self_energy_values():
    assert abs(lead_self_energy(LEFT, 0.0) - 1j) < 1e-15
    assert abs(lead_self_energy(LEFT, 2.0) + 1.0) < 1e-15
    assert abs(lead_self_energy(LEFT, -2.0) - 1.0) < 1e-15
    assert abs(lead_self_energy(LEFT, 3.0) - (-3 + math.sqrt(5)) / 2) < 1e-15


@pytest.mark.parametrize("E", [-1.3, 0.0, 0.9, 3.0, -2.7])
def test_self_energy_truncated_lead_oracle(E):
    eta = 1e-3
    ref = truncated_lead_green(E + 1j * eta)
    assert abs(lead_self_energy(LEFT, E) - ref) <= 5 * eta


def test_self_energy_imag_is_pi_density():
    E = np.linspace(-1.99, 1.99, 51)
    np.testing.assert_allclose(np.imag(lead_self_energy(LEFT, E)), math.pi * LEFT.spectral_density(E), atol=1e-15)


def test_free_green_modulus():
    for L in (1, 2, 5, 64):
        assert abs(abs(coupled_green_1L(ZERO, L, 1.0, 0.0)) - 0.5) < 1e-13


def test_green_against_dense_inverse():
    v = catalog()["anderson"]
    L, E, kappa = 12, 0.37, 0.8
    vals = sample(v, L)
    M = np.diag(vals - E + 0j) - np.eye(L, k=1) - np.eye(L, k=-1)
    s = lead_self_energy(LEFT, E)
    M[0, 0] -= kappa**2 * s
    M[-1, -1] -= kappa**2 * s
    ref = np.linalg.inv(M)[0, -1]
    assert abs(coupled_green_1L(v, L, kappa, E) - ref) < 1e-13


def test_green_reflection_symmetry():
    vals = sample(catalog()["anderson"], 40)
    for E in (-1.1, 0.2, 1.7):
        a = coupled_green_1L(vals, 40, 0.7, E)
        b = coupled_green_1L(vals[::-1].copy(), 40, 0.7, E)
        assert abs(abs(a) - abs(b)) < 1e-13


def test_density_outside_band_is_zero():
    point = lb_density(catalog()["period3"], 10, 1.0, None, 5.0)
    assert point.density == 0.0
    assert lb_density(ZERO, 10, 1.0, None, 2.5).density == 0.0


def test_free_density_perfect_transmission():
    E = np.linspace(-1.9, 1.9, 100)
    np.testing.assert_allclose(lb_density_values(ZERO, 30, 1.0, E), INV2PI, atol=1e-8)


def test_weak_coupling_suppression():
    vals = [lb_density(ZERO, 10, k, None, 0.0).density for k in (0.1, 0.03, 0.01, 0.003)]
    assert 0 < vals[2] < INV2PI
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_bad_kappa_rejected():
    with pytest.raises(InvalidInputError):
        coupled_green_1L(ZERO, 4, 0.0, 0.0)


def test_current_values():
    assert abs(lb_current(ZERO, 50, 1.0, None, -1, 1) - 1 / math.pi) <= 1e-7
    assert lb_current(ZERO, 50, 1.0, None, 2.5, 3.0) == 0.0
    assert abs(lb_conductance(ZERO, 50, 1.0, None, -1, 1) - INV2PI) <= 1e-7
    assert lb_conductance(ZERO, 50, 1.0, None, -3.0, -2.5) == 0.0
    for v in catalog().values():
        assert lb_current(v, 40, 1.0, None, -1.5, 0.5) <= 2.0 * INV2PI + 1e-9


def test_current_against_adaptive_quad():
    v = PotentialSpec("anderson", W=2.0, seed=5)
    f = lambda E: float(lb_density_values(v, 20, 1.0, np.array([E]))[0])
    ref = quad(f, -1.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=500)[0]
    assert abs(lb_current(v, 20, 1.0, None, -1, 1, tol=1e-10) - ref) <= 1e-9 * max(ref, 1.0)


def test_current_additive():
    v = PotentialSpec("anderson", W=2.0, seed=2)
    whole = lb_current(v, 128, 1.0, None, -0.5, 0.5)
    parts = lb_current(v, 128, 1.0, None, -0.5, 0.1) + lb_current(v, 128, 1.0, None, 0.1, 0.5)
    assert abs(whole - parts) <= 3e-8


def test_anderson_conductance_decays():
    v = PotentialSpec("anderson", W=4.0, seed=1)
    assert lb_conductance(v, 1600, 1.0, None, -1, 1) <= 0.05 * lb_conductance(v, 100, 1.0, None, -1, 1)


def test_transparency():
    assert transparency_check(None, -1, 1)
    assert not transparency_check(None, -3, 1)
    assert not transparency_check(None, -2, 2)


def test_crystalline():
    assert crystalline_lb_density(ZERO, 8, 1.0) == INV2PI
    assert crystalline_lb_density(P2, 2, 1.0) == 0.0
    assert abs(crystalline_lb_current(ZERO, 8, -1, 1) - 1 / math.pi) < 1e-12


def test_unitarity_monitor_raises():
    mon = UnitarityMonitor()
    mon.observe(np.array([0.0, INV2PI]))
    assert mon.count == 2
    with pytest.raises(NumericalFailureError):
        mon.observe(np.array([INV2PI + 1e-6]))
    with pytest.raises(NumericalFailureError):
        mon.observe(np.array([-1e-10]))


def test_reservoir_validation():
    with pytest.raises(InvalidInputError):
        ReservoirSpec(kind="wire")
    with pytest.raises(InvalidInputError):
        ReservoirSpec(side="up")


def test_global_monitor_has_seen_samples():
    lb_density_values(ZERO, 4, 1.0, np.linspace(-1, 1, 5))
    assert UNITARITY.count > 0
    assert UNITARITY.maximum <= INV2PI + 1e-9
