import hashlib
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specband.errors import InvalidInputError
from specband.potential import (
    KINDS,
    PotentialSpec,
    bound,
    catalog,
    eval_potential,
    sample,
)

MASK = (1 << 64) - 1


def splitmix64_py(x: int) -> int:
    """Pure-integer reference implementation of splitmix64."""
    z = (x + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def anderson_py(W: float, seed: int, n: int) -> float:
    key = splitmix64_py(seed & MASK)
    u = (splitmix64_py(key ^ n) >> 11) * 2.0**-53
    return W * (u - 0.5)


def test_examples():
    assert eval_potential(PotentialSpec("zero"), 7) == 0.0
    am = PotentialSpec("almost_mathieu", lam=1.0, omega=0.5, theta=0.0)
    assert abs(eval_potential(am, 1) + 2.0) < 1e-15
    assert eval_potential(PotentialSpec("constant", c=-1.5), 3) == -1.5
    per = PotentialSpec("periodic", values=(1.0, 2.0, 3.0))
    assert [eval_potential(per, n) for n in range(1, 7)] == [1, 2, 3, 1, 2, 3]
    sp = PotentialSpec("sparse", bump=4.0, base=3)
    assert [n for n in range(1, 100) if eval_potential(sp, n) != 0] == [3, 9, 27, 81]


def test_anderson_statistics():
    v = sample(PotentialSpec("anderson", W=4.0, seed=1), 1000)
    assert abs(v.mean()) < 0.2
    assert v.min() >= -2.0 and v.max() < 2.0


def test_anderson_matches_reference_generator():
    spec = PotentialSpec("anderson", W=3.0, seed=12345)
    v = sample(spec, 200)
    ref = [anderson_py(3.0, 12345, n) for n in range(1, 201)]
    assert v.tolist() == ref


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        eval_potential(PotentialSpec("zero"), 0)
    with pytest.raises(InvalidInputError):
        PotentialSpec("nonsense")
    with pytest.raises(InvalidInputError):
        PotentialSpec("anderson", W=-1.0)
    with pytest.raises(InvalidInputError):
        PotentialSpec("sparse", bump=1.0, base=1)
    with pytest.raises(InvalidInputError):
        PotentialSpec("periodic")
    with pytest.raises(InvalidInputError):
        PotentialSpec.from_dict({"kind": "zero", "colour": 1})


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, MASK), n=st.integers(1, 10**9))
def test_random_access_consistency(seed, n):
    spec = PotentialSpec("anderson", W=1.0, seed=seed)
    single = eval_potential(spec, n)
    assert single == anderson_py(1.0, seed, n)
    if n <= 5000:
        assert sample(spec, n)[-1] == single


@pytest.mark.parametrize("name", sorted(catalog()))
def test_bound_holds(name):
    spec = catalog()[name]
    assert np.abs(sample(spec, 5000)).max() <= bound(spec) + 1e-15


@pytest.mark.parametrize("name", sorted(catalog()))
def test_config_round_trip(name):
    spec = catalog()[name]
    assert PotentialSpec.from_dict(spec.to_dict()) == spec


def test_every_kind_in_catalog():
    assert {s.kind for s in catalog().values()} == set(KINDS)


def test_cross_process_determinism():
    spec = "PotentialSpec('anderson', W=4.0, seed=99)"
    code = (
        "import hashlib; from specband.potential import PotentialSpec, sample;"
        f"print(hashlib.sha256(sample({spec}, 10**6).tobytes()).hexdigest())"
    )
    runs = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout.strip() for _ in range(2)}
    here = hashlib.sha256(sample(PotentialSpec("anderson", W=4.0, seed=99), 10**6).tobytes()).hexdigest()
    assert runs == {here}
