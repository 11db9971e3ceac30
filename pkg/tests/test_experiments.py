import math

import numpy as np
import pytest
from scipy.integrate import quad

from specband.errors import RefusedPreconditionError
from specband.experiments import (
    SHRINK_CONSTANT,
    ConductanceRow,
    band_shrink_report,
    carmona_oracle,
    carmona_study,
    equivalence_sweep,
    invariant_suite,
    joint_decay_consistent,
    ratio_monitor,
    sp_ac_oracle,
    verdict,
)
from specband.numerics import Interval
from specband.potential import PotentialSpec
from specband.transfer import GaussianBump

ZERO = PotentialSpec("zero")
P2 = PotentialSpec("periodic", values=(0.0, 2.0))
AND4 = PotentialSpec("anderson", W=4.0, seed=1)


def rows(*triples):
    return [ConductanceRow(10 * (i + 1), a, b, c, 0.0) for i, (a, b, c) in enumerate(triples)]


def test_verdict_rule():
    assert verdict(rows((1, 1, 1), (0.01, 0.04, 0.0))) == "decaying"
    assert verdict(rows((1, 1, 1), (0.8, 0.6, 0.9))) == "non-vanishing"
    assert verdict(rows((1, 1, 1), (0.01, 0.9, 0.5))) == "inconclusive"
    assert verdict(rows((0, 0, 0), (0, 0, 0))) == "decaying"
    assert verdict([]) == "inconclusive"


def test_refuses_non_transparent_window():
    for window in [(-3, 1), (-2, 2), (1.5, 2.5)]:
        with pytest.raises(RefusedPreconditionError, match="transparent"):
            equivalence_sweep(ZERO, [8, 16], window)


def test_free_sweep_small():
    rep = equivalence_sweep(ZERO, [20, 40, 80], (-1, 1))
    assert rep.verdict == "non-vanishing"
    for r in rep.rows:
        assert abs(r.g_th - 1 / (2 * math.pi)) < 1e-12
        assert abs(r.g_lb - 1 / (2 * math.pi)) < 1e-7
        assert 0 <= r.inv_norm_integral <= 2.0
    lo, hi = ratio_monitor(rep)
    assert 0 < lo <= hi < math.inf
    assert joint_decay_consistent(rep)


def test_gap_sweep_decays_and_ratio_not_applicable():
    rep = equivalence_sweep(P2, [50, 100, 200], (0.1, 1.9))
    assert rep.verdict == "decaying"
    assert all(m <= 1e-6 for m in rep.rows[-1].metrics())
    assert ratio_monitor(equivalence_sweep(P2, [400, 800], (0.1, 1.9))) is None
    d = rep.to_dict()
    assert d["verdict"] == "decaying" and "heuristic" in d["note"]


def test_sweep_thread_independence():
    v = PotentialSpec("anderson", W=2.0, seed=4)
    a = equivalence_sweep(v, [16, 32, 64], (-0.5, 0.7), threads=1).to_dict()
    b = equivalence_sweep(v, [16, 32, 64], (-0.5, 0.7), threads=3).to_dict()
    assert a == b


def test_carmona_oracle_free_semicircle():
    f = GaussianBump(0.0, 0.5)
    ref = quad(lambda E: f(E) * math.sqrt(4 - E * E) / (2 * math.pi), -2, 2, epsabs=1e-14)[0]
    assert abs(carmona_oracle(ZERO, f) - ref) < 1e-12


def test_carmona_oracle_gauss_rule_matches_free_case():
    # a periodic potential with zero values takes the Gauss-rule route
    f = GaussianBump(0.3, 0.4)
    assert abs(carmona_oracle(PotentialSpec("periodic", values=(0.0,)), f) - carmona_oracle(ZERO, f)) < 1e-10


def test_carmona_free_converges():
    table = carmona_study(ZERO, GaussianBump(0.0, 0.5), [64, 512])
    assert all(r.resolved for r in table)
    assert abs(table[1].deviation) < abs(table[0].deviation)
    assert abs(table[1].deviation) < 0.02


def test_carmona_off_spectrum():
    # the 6-sigma support reaches E = 1.8, so the oracle is tiny but non-zero
    table = carmona_study(ZERO, GaussianBump(3.0, 0.2), [256, 1024])
    assert 0.0 < table[0].oracle < 1e-8
    assert all(r.probe <= 1e-6 and abs(r.probe - r.oracle) <= 1e-9 for r in table)
    far = carmona_study(ZERO, GaussianBump(3.5, 0.05), [256])
    assert far[0].probe <= 1e-100


def test_carmona_anderson_resolved_range_and_flag():
    # the truncated measure is pure point; its atoms become Lorentzians of
    # half-width ~ e^{-2γL}, resolvable in double precision only for small L
    table = carmona_study(AND4, GaussianBump(0.0, 0.5), [16, 32, 48, 4096])
    for r in table[:3]:
        assert r.resolved
        assert abs(r.deviation) <= 0.05
    big = table[-1]
    assert not big.resolved
    assert math.isnan(big.probe)
    assert big.unresolved > 0.5 * abs(big.oracle)


def test_invariant_suite_small_all_pass():
    ledger = invariant_suite(seed_set=(1, 2), L_set=(8, 24))
    assert ledger and all(e.passed for e in ledger)
    assert {e.module for e in ledger} == {"transfer", "floquet", "ebbm"}


def test_invariant_suite_empty_and_fault_injection():
    assert invariant_suite(seed_set=()) == []
    bad = lambda x: (x, -1.0, 1.0, 1e-6)
    ledger = invariant_suite(seed_set=(1,), L_set=(16,), modules=("transfer",), factor=bad)
    failed = [e for e in ledger if not e.passed]
    assert any("det" in e.name for e in failed)
    det = next(e for e in failed if "det" in e.name)
    assert det.inputs["seed"] == 1 and det.inputs["L"] == 16 and "E" in det.inputs


def test_shrink_reports():
    z = band_shrink_report(ZERO, [16, 32, 64], (-1, 1))
    assert all(abs(ov - 2.0) < 1e-12 for _, ov in z.rows)
    assert z.tail_ok and abs(z.bound - (SHRINK_CONSTANT * 2**0.2 + 1e-3)) < 1e-12
    assert z.bound <= 18.7 * 2**0.2
    a = band_shrink_report(AND4, [50, 100, 200, 400], (-1, 1))
    assert a.oracle_measure == 0.0 and a.tail_ok
    assert a.rows[-1][1] < a.rows[0][1]
    g = band_shrink_report(P2, [2, 4, 8, 16], (0.1, 1.9))
    assert all(ov == 0.0 for _, ov in g.rows)
    assert sp_ac_oracle(PotentialSpec("sparse", bump=1.0)) is None
    s = band_shrink_report(PotentialSpec("sparse", bump=1.0), [8, 16], Interval(-1, 1))
    assert s.tail_ok is None
