"""Catalog of deterministic half-line potentials ``v: Z+ -> R``.

The families below are a modelling choice of this package, picked to cover
the regimes that matter for transport: absolutely continuous spectrum
(``zero``, ``constant``, ``periodic``, subcritical ``almost_mathieu``),
localization (``anderson``) and sparse bumps.

Random potentials use a counter-mode generator: the value at site ``n`` is
a splitmix64 hash of the (pre-mixed) seed combined with ``n``, so ``v(n)``
is available in O(1) with no generator state.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "KINDS",
    "PotentialSpec",
    "splitmix64",
    "uniform01",
    "eval_potential",
    "sample",
    "bound",
    "catalog",
]

KINDS = ("zero", "constant", "periodic", "anderson", "sparse", "almost_mathieu")

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class PotentialSpec:
    """Description of a potential; only the fields relevant to ``kind`` are used.

    Field names follow the config-file keys, except ``lam`` which is spelled
    ``lambda`` in configs (see :meth:`to_dict` / :meth:`from_dict`).
    """

    kind: str = "zero"
    c: float = 0.0
    values: tuple = ()
    W: float = 0.0
    seed: int = 0
    bump: float = 0.0
    base: int = 2
    lam: float = 0.0
    omega: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        if self.kind == "periodic" and not self.values:
            raise InvalidInputError("periodic potential needs a non-empty 'values' list")
        if self.kind == "anderson" and self.W < 0:
            raise InvalidInputError("anderson width W must be >= 0")
        if self.kind == "sparse" and int(self.base) < 2:
            raise InvalidInputError("sparse spacing base must be >= 2")
        if not 0 <= int(self.seed) <= _MASK:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "base", int(self.base))

    def __call__(self, n):
        return eval_potential(self, n)

    # config helpers -------------------------------------------------------

    _FIELDS = {
        "zero": (),
        "constant": ("c",),
        "periodic": ("values",),
        "anderson": ("W", "seed"),
        "sparse": ("bump", "base"),
        "almost_mathieu": ("lambda", "omega", "theta"),
    }

    def to_dict(self) -> dict[str, Any]:
        """Config-file representation holding only the fields used by ``kind``."""
        full = asdict(self)
        full["lambda"] = full.pop("lam")
        full["values"] = list(full["values"])
        out = {"kind": self.kind}
        for key in self._FIELDS[self.kind]:
            out[key] = full[key]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PotentialSpec":
        data = dict(data)
        allowed = {"kind", "c", "values", "W", "seed", "bump", "base", "lambda", "omega", "theta"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidInputError(f"unknown potential fields: {sorted(unknown)}")
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**data)


# ---------------------------------------------------------------------------
# counter-mode generator
# ---------------------------------------------------------------------------


def splitmix64(x):
    """One splitmix64 output for state ``x`` (uint64 array or int)."""
    scalar = np.isscalar(x)
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return int(z) if scalar else z


def uniform01(seed: int, n):
    """Uniform deviates in [0, 1) for sites ``n``, keyed by ``seed``.

    The seed is hashed once before being combined with the counter so that
    nearby seeds give unrelated sequences.
    """
    key = np.uint64(splitmix64(int(seed) & _MASK))
    idx = np.asarray(n, dtype=np.uint64)
    z = splitmix64(key ^ idx)
    return (np.asarray(z) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _is_power(n: np.ndarray, base: int) -> np.ndarray:
    n = n.copy()
    out = np.zeros(n.shape, dtype=bool)
    alive = n >= base
    while np.any(alive):
        divisible = alive & (n % base == 0)
        n = np.where(divisible, n // base, n)
        out |= divisible & (n == 1)
        alive = divisible & (n >= base)
    return out


def sample_at(spec: PotentialSpec, n) -> np.ndarray:
    """Vectorized potential at positive integer sites ``n``."""
    n = np.asarray(n, dtype=np.int64)
    if np.any(n <= 0):
        raise InvalidInputError("potential sites must be positive integers")
    kind = spec.kind
    if kind == "zero":
        return np.zeros(n.shape)
    if kind == "constant":
        return np.full(n.shape, float(spec.c))
    if kind == "periodic":
        vals = np.asarray(spec.values)
        return vals[(n - 1) % vals.size]
    if kind == "anderson":
        return spec.W * (uniform01(spec.seed, n) - 0.5)
    if kind == "sparse":
        return np.where(_is_power(n, spec.base), float(spec.bump), 0.0)
    if kind == "almost_mathieu":
        return 2.0 * spec.lam * np.cos(2.0 * np.pi * (spec.theta + n * spec.omega))
    raise InvalidInputError(f"unknown potential kind {kind!r}")  # pragma: no cover


def eval_potential(spec: PotentialSpec, n: int) -> float:
    """``v(n)`` for a single site ``n >= 1``."""
    if int(n) != n or n <= 0:
        raise InvalidInputError(f"site index must be a positive integer, got {n!r}")
    return float(sample_at(spec, np.array([int(n)]))[0])


def sample(spec, L: int) -> np.ndarray:
    """``v(1), ..., v(L)`` as a float array.

    ``spec`` may also be a plain sequence of site values, which is returned
    truncated to length ``L`` (it must be at least that long).
    """
    L = int(L)
    if L < 1:
        raise InvalidInputError("sample length must be >= 1")
    if isinstance(spec, PotentialSpec):
        return sample_at(spec, np.arange(1, L + 1))
    vals = np.asarray(spec, dtype=float)
    if vals.ndim != 1 or vals.size < L:
        raise InvalidInputError(f"need at least {L} site values, got shape {vals.shape}")
    return vals[:L]


def bound(spec: PotentialSpec) -> float:
    """A priori bound on ``sup_n |v(n)|``."""
    kind = spec.kind
    if kind == "zero":
        return 0.0
    if kind == "constant":
        return abs(spec.c)
    if kind == "periodic":
        return max(abs(x) for x in spec.values)
    if kind == "anderson":
        return spec.W / 2.0
    if kind == "sparse":
        return abs(spec.bump)
    return 2.0 * abs(spec.lam)


def catalog() -> dict[str, PotentialSpec]:
    """Named reference potentials used by the audits and the test-suite."""
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    return {
        "zero": PotentialSpec("zero"),
        "constant": PotentialSpec("constant", c=0.5),
        "period2": PotentialSpec("periodic", values=(0.0, 2.0)),
        "period3": PotentialSpec("periodic", values=(1.0, -0.5, 0.3)),
        "anderson": PotentialSpec("anderson", W=2.0, seed=1),
        "sparse": PotentialSpec("sparse", bump=1.0, base=2),
        "almost_mathieu": PotentialSpec("almost_mathieu", lam=0.5, omega=float(golden), theta=0.1),
    }
