import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specband.errors import InvalidInputError
from specband.numerics import Interval
from specband.potential import PotentialSpec, catalog
from specband.transfer import (
    GaussianBump,
    carmona_density,
    dirichlet_neumann_solutions,
    inv_norm_integral,
    inv_norm_sq,
    transfer_matrix,
    weak_convergence_probe,
)

ZERO = PotentialSpec("zero")


def test_single_factor_and_period_four():
    np.testing.assert_allclose(transfer_matrix(ZERO, 1, 0.0).matrix.value(), [[0, -1], [1, 0]], atol=1e-15)
    t4 = transfer_matrix(ZERO, 4, 0.0)
    np.testing.assert_allclose(t4.matrix.value(), np.eye(2), atol=1e-14)
    assert abs(float(t4.norm_log)) < 1e-14
    assert abs(inv_norm_sq(ZERO, 4, 0.0) - 1.0) < 1e-14


def test_constant_five_length_two():
    v = PotentialSpec("constant", c=5.0)
    t = transfer_matrix(v, 2, 0.0)
    np.testing.assert_allclose(t.matrix.value(), [[24, -5], [5, -1]], rtol=1e-14)
    assert abs(float(t.matrix.det()) - 1.0) < 1e-12
    smax = np.linalg.svd(np.array([[24.0, -5.0], [5.0, -1.0]]), compute_uv=False)[0]
    assert abs(inv_norm_sq(v, 2, 0.0) - smax**-2) < 1e-15


def test_free_chebyshev_closed_form():
    # for v = 0, T(L, E) entries are Chebyshev polynomials U_{L}(-E/2)
    E, L = 0.7, 37
    theta = math.acos(-E / 2.0)
    U = lambda n: math.sin((n + 1) * theta) / math.sin(theta)
    t = transfer_matrix(ZERO, L, E).matrix.value()
    np.testing.assert_allclose(t, [[U(L), -U(L - 1)], [U(L - 1), -U(L - 2)]], atol=1e-12)


@pytest.mark.parametrize("name", sorted(catalog()))
def test_entries_match_direct_recursion(name):
    v = catalog()[name]
    L, E = 30, 0.37
    uD, uN = dirichlet_neumann_solutions(v, L, E)
    t = transfer_matrix(v, L, E).matrix.value()
    # columns: T (1, 0)^T = (u_D(L+1), u_D(L)), T (0, 1)^T = (u_N(L+1), u_N(L))
    ref = np.array([[uD[L + 1], uN[L + 1]], [uD[L], uN[L]]])
    np.testing.assert_allclose(t, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())


@settings(max_examples=40, deadline=None)
@given(
    name=st.sampled_from(sorted(catalog())),
    L=st.integers(1, 3000),
    E=st.floats(-5, 5),
)
def test_sl2_and_norm_invariants(name, L, E):
    r = transfer_matrix(catalog()[name], L, E)
    assert abs(float(r.matrix.det()) - 1.0) <= 1e-9
    assert float(r.norm_log) >= -1e-9
    q = inv_norm_sq(catalog()[name], L, E)
    assert 0.0 <= q <= 1.0
    d = carmona_density(catalog()[name], L, E)
    if float(r.norm_log) < 300:
        lo, hi = math.exp(-2 * float(r.norm_log)) / math.pi, math.exp(2 * float(r.norm_log)) / math.pi
        assert lo * (1 - 1e-12) <= d <= hi * (1 + 1e-12)


def test_underflow_clamp():
    # deep in the gap of a constant potential norm_log exceeds the clamp
    v = PotentialSpec("constant", c=10.0)
    assert float(transfer_matrix(v, 1000, 0.0).norm_log) > 350
    assert inv_norm_sq(v, 1000, 0.0) == 0.0


def test_vectorized_energies():
    E = np.linspace(-3, 3, 11)
    v = catalog()["anderson"]
    batch = inv_norm_sq(v, 50, E)
    assert np.allclose(batch, [inv_norm_sq(v, 50, e) for e in E], rtol=1e-13, atol=0)


def test_carmona_density_free_period_four():
    assert abs(carmona_density(ZERO, 4, 0.0) - 1.0 / math.pi) < 1e-15


def test_inv_norm_integral_riemann_oracle():
    n = 1_000_000
    x = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    oracle = np.asarray(inv_norm_sq(ZERO, 4, x)).sum() * (2.0 / n)
    assert abs(inv_norm_integral(ZERO, 4, Interval(-1, 1)) - oracle) <= 1e-6


def test_inv_norm_integral_range_and_rejection():
    with pytest.raises(InvalidInputError):
        inv_norm_integral(ZERO, 4, Interval(1.0, 1.0))
    val = inv_norm_integral(catalog()["period3"], 40, Interval(-3, 3))
    assert 0.0 <= val <= 6.0


def test_inv_norm_integral_decays_anderson():
    v = PotentialSpec("anderson", W=4.0, seed=1)
    I = Interval(-1, 1)
    assert inv_norm_integral(v, 1600, I) <= 0.05 * inv_norm_integral(v, 100, I)


def test_transfer_rejects_bad_length():
    with pytest.raises(InvalidInputError):
        transfer_matrix(ZERO, 0, 0.0)


def test_weak_convergence_probe_trivial_and_off_spectrum():
    assert weak_convergence_probe(ZERO, GaussianBump(0.0, 0.5, 0.0), [8, 16]) == [0.0, 0.0]
    off = weak_convergence_probe(ZERO, GaussianBump(3.5, 0.05), [64, 256])
    assert off[1] < off[0] < 1e-6


def test_weak_convergence_probe_approaches_semicircle():
    from scipy.integrate import quad

    f = GaussianBump(0.0, 0.5)
    oracle = quad(lambda E: f(E) * math.sqrt(4 - E * E) / (2 * math.pi), -2, 2, epsabs=1e-13)[0]
    vals = weak_convergence_probe(ZERO, f, [64, 512])
    errs = [abs(x - oracle) for x in vals]
    assert errs[1] < errs[0]
    assert errs[1] < 0.02 * oracle
