"""Numerical kernels shared by the transfer, floquet and ebbm modules.

Everything here is a pure function of its inputs.  Arrays follow numpy
broadcasting: a ``ScaledMatrix`` may carry a batch of 2x2 matrices (shape
``(..., 2, 2)``) so that one product loop serves a whole energy grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    InvalidBracketError,
    InvalidInputError,
    InvalidIntegrandError,
    NearSingularError,
    NumericalFailureError,
)

__all__ = [
    "Interval",
    "ScaledMatrix",
    "scaled_mul",
    "renormalize",
    "sym_eig",
    "householder_tridiagonal",
    "tridiagonal_ql",
    "tridiag_solve_complex",
    "find_root",
    "bisect_batch",
    "QuadratureResult",
    "gauss_legendre",
    "integrate",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class Interval:
    """Open energy window ``(lo, hi)`` with ``lo < hi``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidInputError(f"interval endpoints must be finite, got ({lo}, {hi})")
        if not hi > lo:
            raise InvalidInputError(f"degenerate interval ({lo}, {hi}): need lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def overlap(self, a: float, b: float) -> float:
        """Length of ``[a, b] ∩ (lo, hi)``."""
        return max(0.0, min(b, self.hi) - max(a, self.lo))

    def __iter__(self):
        yield self.lo
        yield self.hi


# ---------------------------------------------------------------------------
# Scaled 2x2 products
# ---------------------------------------------------------------------------


def renormalize(m: np.ndarray, log_scale: np.ndarray):
    """Pull a power of two out of every matrix whose Frobenius norm left [1/2, 2].

    Scaling by an exact power of two introduces no rounding, so the entries
    stay exactly the products that were computed.  Returns the new
    ``(m, log_scale, shift)`` where ``shift`` is the (integer) base-2 exponent
    removed from each matrix.
    """
    fro2 = np.einsum("...ij,...ij->...", m, m)
    out = (fro2 > 4.0) | (fro2 < 0.25)
    if not np.any(out):
        return m, log_scale, np.zeros(np.shape(fro2), dtype=np.int64)
    # fro = 2**(e/2) roughly; remove 2**k with k nearest log2(fro)
    _, e = np.frexp(np.where(fro2 > 0, fro2, 1.0))
    k = np.where(out, np.floor_divide(e, 2), 0).astype(np.int64)
    m = np.ldexp(m, -k[..., None, None])
    return m, log_scale + k * _LN2, k


@dataclass(frozen=True)
class ScaledMatrix:
    """A 2x2 real matrix ``m * exp(log_scale)`` with ``m`` kept near unit scale.

    ``log_det`` tracks ``log|det m|`` through every multiplication using the
    determinants of the (unit-scale) factors.  Reading the determinant off
    the entries of ``m`` cancels catastrophically once the matrix grows, so
    :meth:`det` reconstructs it from ``log_det`` and ``log_scale`` instead;
    :meth:`entry_det` is the naive variant.
    """

    m: np.ndarray
    log_scale: np.ndarray = field(default_factory=lambda: np.float64(0.0))
    log_det: np.ndarray = field(default_factory=lambda: np.float64(0.0))
    det_sign: np.ndarray = field(default_factory=lambda: np.float64(1.0))

    @classmethod
    def identity(cls, shape=()) -> "ScaledMatrix":
        m = np.broadcast_to(np.eye(2), tuple(shape) + (2, 2)).copy()
        zero = np.zeros(shape)
        return cls(m, zero, zero.copy(), np.ones(shape))

    @property
    def frobenius(self) -> np.ndarray:
        return np.sqrt(np.einsum("...ij,...ij->...", self.m, self.m))

    def value(self) -> np.ndarray:
        """The represented matrix; may overflow for large ``log_scale``."""
        with np.errstate(over="ignore"):
            return self.m * np.exp(self.log_scale)[..., None, None]

    def det(self) -> np.ndarray:
        """Determinant reconstructed from the tracked logarithms."""
        return self.det_sign * np.exp(self.log_det + 2.0 * self.log_scale)

    def entry_det(self) -> np.ndarray:
        """``det(m) * exp(2 log_scale)`` computed from the stored entries."""
        m = self.m
        d = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        with np.errstate(over="ignore"):
            return d * np.exp(2.0 * self.log_scale)

    def norm_log(self) -> np.ndarray:
        """Natural log of the operator 2-norm, from closed-form singular values."""
        return self.log_scale + 0.5 * np.log(_sigma_max_sq(self.m, self.det_sign * np.exp(self.log_det)))


def _sigma_max_sq(m: np.ndarray, det_m) -> np.ndarray:
    fro2 = np.einsum("...ij,...ij->...", m, m)
    disc = np.maximum(fro2 * fro2 - 4.0 * det_m * det_m, 0.0)
    return 0.5 * (fro2 + np.sqrt(disc))


def scaled_mul(a: ScaledMatrix, b) -> ScaledMatrix:
    """Left-multiply ``a`` by the plain 2x2 matrix ``b`` and renormalize."""
    b = np.asarray(b, dtype=float)
    if b.shape[-2:] != (2, 2):
        raise InvalidInputError(f"factor must be 2x2, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidInputError("factor has non-finite entries")
    db = b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] * b[..., 1, 0]
    if np.any(db == 0):
        raise InvalidInputError("factor is singular")
    m = b @ a.m
    m, log_scale, k = renormalize(m, a.log_scale)
    log_det = a.log_det + np.log(np.abs(db)) - 2.0 * k * _LN2
    return ScaledMatrix(m, log_scale, log_det, a.det_sign * np.sign(db))


# ---------------------------------------------------------------------------
# Dense symmetric eigenproblem
# ---------------------------------------------------------------------------


def householder_tridiagonal(a: np.ndarray, vectors: bool = False):
    """Reduce a real symmetric matrix to tridiagonal form by Householder reflections.

    Returns ``(d, e, q)`` with ``q.T @ a @ q`` tridiagonal, diagonal ``d`` and
    sub-diagonal ``e`` (length n-1).  ``q`` is None unless requested.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    q = np.eye(n) if vectors else None
    for j in range(n - 2):
        x = a[j + 1 :, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        u = x.copy()
        u[0] -= alpha
        unorm2 = u @ u
        if unorm2 == 0.0:
            continue
        # two-sided update with H = I - 2 u u^T / (u^T u)
        sub = a[j + 1 :, j + 1 :]
        p = sub @ u * (2.0 / unorm2)
        kappa = (u @ p) / unorm2
        w = p - kappa * u
        sub -= np.outer(u, w) + np.outer(w, u)
        a[j + 1 :, j] = 0.0
        a[j, j + 1 :] = 0.0
        a[j + 1, j] = a[j, j + 1] = alpha
        if vectors:
            q[:, j + 1 :] -= np.outer(q[:, j + 1 :] @ u, u) * (2.0 / unorm2)
    d = np.diag(a).copy()
    e = np.diag(a, -1).copy()
    return d, e, q


def tridiagonal_ql(d, e, z=None, max_iter: int = 30):
    """Implicit-shift QL iteration on a symmetric tridiagonal matrix.

    ``d`` is the diagonal, ``e`` the sub-diagonal.  If ``z`` is given, the
    rotations are accumulated into its columns (pass the Householder ``q``
    to obtain eigenvectors of the original matrix).  Raises
    NumericalFailureError when an eigenvalue needs more than ``max_iter``
    sweeps.
    """
    d = np.array(d, dtype=float, copy=True)
    n = d.size
    e = np.concatenate([np.asarray(e, dtype=float), [0.0]]) if n > 0 else np.zeros(0)
    if z is not None:
        z = np.array(z, dtype=float, copy=True)
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= np.finfo(float).eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise NumericalFailureError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if z is not None:
                    zi1 = z[:, i + 1].copy()
                    z[:, i + 1] = s * z[:, i] + c * zi1
                    z[:, i] = c * z[:, i] - s * zi1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    order = np.argsort(d, kind="stable")
    d = d[order]
    if z is not None:
        z = z[:, order]
    return d, z


def sym_eig(matrix, vectors: bool = False, method: str = "lapack"):
    """Eigenvalues (ascending) of a dense real symmetric matrix.

    ``method="lapack"`` calls the LAPACK driver through scipy;
    ``method="ql"`` runs the in-house Householder + implicit QL path.  With
    ``vectors=True`` returns ``(w, v)`` with eigenvectors in the columns.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-12 * max(scale, np.finfo(float).tiny):
        raise InvalidInputError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    if method == "lapack":
        try:
            if vectors:
                return scipy.linalg.eigh(a)
            return scipy.linalg.eigh(a, eigvals_only=True)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            raise NumericalFailureError(str(exc)) from exc
    if method == "ql":
        d, e, q = householder_tridiagonal(a, vectors=vectors)
        w, z = tridiagonal_ql(d, e, q)
        return (w, z) if vectors else w
    raise InvalidInputError(f"unknown eigensolver method {method!r}")


# ---------------------------------------------------------------------------
# Complex tridiagonal solve
# ---------------------------------------------------------------------------

PIVOT_FLOOR = 1e-300


def tridiag_solve_complex(diag, off, rhs):
    """Solve ``A x = rhs`` for symmetric-pattern tridiagonal ``A``.

    ``A`` has ``diag`` on the diagonal and the real ``off`` on both
    off-diagonals.  ``diag`` and ``rhs`` may carry leading batch dimensions
    (shape ``(..., n)``); the Thomas recursion runs over the last axis for
    the whole batch at once.  No pivoting: a pivot with modulus below
    1e-300 raises NearSingularError.
    """
    diag = np.asarray(diag, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    off = np.asarray(off, dtype=float)
    n = diag.shape[-1]
    if n < 1:
        raise InvalidInputError("empty system")
    if off.shape[-1] != n - 1:
        raise InvalidInputError(f"off-diagonal must have length {n - 1}, got {off.shape[-1]}")
    shape = np.broadcast_shapes(diag.shape, rhs.shape)
    # site-major layout so that each recursion step touches contiguous memory
    d = np.ascontiguousarray(np.moveaxis(np.broadcast_to(diag, shape), -1, 0))
    r = np.ascontiguousarray(np.moveaxis(np.broadcast_to(rhs, shape), -1, 0))
    piv = np.empty_like(d)
    y = np.empty_like(r)
    piv[0] = d[0]
    y[0] = r[0]
    _check_pivot(piv[0], 0)
    for i in range(1, n):
        w = off[i - 1] / piv[i - 1]
        piv[i] = d[i] - w * off[i - 1]
        _check_pivot(piv[i], i)
        y[i] = r[i] - w * y[i - 1]
    x = np.empty_like(y)
    x[n - 1] = y[n - 1] / piv[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (y[i] - off[i] * x[i + 1]) / piv[i]
    return np.moveaxis(x, 0, -1)


def _check_pivot(p, i):
    if np.any(np.abs(p) < PIVOT_FLOOR):
        raise NearSingularError(f"pivot {i} below {PIVOT_FLOOR:g}: system is (nearly) singular")


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------


def find_root(f: Callable[[float], float], bracket, tol: float = 1e-12, max_iter: int = 400) -> float:
    """Bracketed root of a continuous scalar function.

    Secant steps are taken when they land inside the bracket; a bisection
    step is forced whenever the bracket failed to halve, so the method never
    does worse than bisection.  Stops once the bracket is narrower than
    ``tol`` and returns the endpoint with the smaller ``|f|``.
    """
    lo, hi = (bracket.lo, bracket.hi) if isinstance(bracket, Interval) else map(float, bracket)
    a, b = float(lo), float(hi)
    fa, fb = float(f(a)), float(f(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise InvalidInputError("function is not finite at the bracket endpoints")
    if (fa > 0) == (fb > 0):
        raise InvalidBracketError(f"f({a})={fa:g} and f({b})={fb:g} have the same sign")
    force_bisect = False
    for _ in range(max_iter):
        width = b - a
        if width <= tol:
            break
        mid = a + 0.5 * width
        x = mid
        if not force_bisect and fb != fa:
            s = b - fb * (b - a) / (fb - fa)
            if a < s < b:
                x = s
        fx = float(f(x))
        if fx == 0.0:
            return x
        if (fx > 0) == (fa > 0):
            a, fa = x, fx
        else:
            b, fb = x, fx
        force_bisect = (b - a) > 0.5 * width
    else:
        raise NumericalFailureError("find_root exceeded its iteration cap")
    return a if abs(fa) <= abs(fb) else b


def bisect_batch(sign_fn, lo, hi, sign_lo, iters: int = 64):
    """Vectorized bisection on many brackets whose left-end signs are known.

    ``sign_fn(x)`` returns an array of values whose sign is compared with
    ``sign_lo`` (+1 or -1 per bracket); endpoint values are never evaluated,
    which keeps the method robust when the bracket ends are only known
    approximately.  Returns the midpoints after ``iters`` halvings (or
    earlier, once every bracket has stopped shrinking in floating point).
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    sign_lo = np.asarray(sign_lo, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not np.any(active):
            break
        s = np.sign(sign_fn(mid))
        same = s == sign_lo
        left = same & active
        right = ~same & active
        lo = np.where(left, mid, lo)
        hi = np.where(right, mid, hi)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Adaptive Gauss-Legendre quadrature
# ---------------------------------------------------------------------------

_GL_CACHE: dict = {}


def gauss_legendre(order: int):
    """Nodes and weights of the ``order``-point Gauss-Legendre rule on [-1, 1]."""
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


class QuadratureResult(NamedTuple):
    value: float
    error: float
    converged: bool
    evaluations: int


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    interval,
    tol: float = 1e-8,
    order: int = 10,
    initial_panels: int = 1,
    max_depth: int = 40,
    full_output: bool = False,
    points=None,
    max_panels: int = 200_000,
):
    """Adaptive composite Gauss-Legendre quadrature of a vectorized integrand.

    A panel is accepted when its single-rule value and the sum over its two
    halves agree to within its width-proportional share of
    ``max(tol*|result|, tol*|I|)``; otherwise it is bisected.  All panels of
    one refinement level are evaluated in a single call to ``f``.  Panels that
    reach ``max_depth``, and all pending panels once there are more than
    ``max_panels``, are accepted and flagged through ``converged=False``
    (``full_output=True`` returns a QuadratureResult instead of the value).
    ``points`` are extra panel breakpoints (those outside ``I`` are ignored),
    used to place panels at known near-singular features of ``f``.
    """
    I = interval if isinstance(interval, Interval) else Interval(*interval)
    x, w = gauss_legendre(order)
    evals = 0

    def rule(a, b):
        nonlocal evals
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
        vals = np.asarray(f(nodes.ravel()), dtype=float)
        vals = np.broadcast_to(vals, (nodes.size,)).reshape(nodes.shape)
        evals += nodes.size
        if not np.all(np.isfinite(vals)):
            raise InvalidIntegrandError("integrand returned a non-finite value")
        return half * (vals @ w)

    edges = np.linspace(I.lo, I.hi, int(initial_panels) + 1)
    if points is not None:
        pts = np.asarray(points, dtype=float).ravel()
        pts = pts[(pts > I.lo) & (pts < I.hi)]
        edges = np.unique(np.concatenate([edges, pts]))
    a, b = edges[:-1], edges[1:]
    coarse = rule(a, b)
    depth = 0
    done_a, done_v, done_e = [], [], []
    converged = True
    total_guess = abs(coarse.sum())
    while a.size:
        m = 0.5 * (a + b)
        both = rule(np.concatenate([a, m]), np.concatenate([m, b]))
        left, right = both[: a.size], both[a.size :]
        fine = left + right
        err = np.abs(fine - coarse)
        budget = max(tol * total_guess, tol * I.width) * (b - a) / I.width
        ok = err <= budget
        if depth >= max_depth or a.size > max_panels:
            if not np.all(ok):
                converged = False
            ok = np.ones_like(ok)
        done_a.append(a[ok])
        done_v.append(fine[ok])
        done_e.append(err[ok])
        bad = ~ok
        total_guess = abs(sum(float(np.sum(v)) for v in done_v) + float(np.sum(fine[bad])))
        a, m_, b = a[bad], m[bad], b[bad]
        coarse = np.concatenate([left[bad], right[bad]])
        a, b = np.concatenate([a, m_]), np.concatenate([m_, b])
        depth += 1
    pos = np.concatenate(done_a)
    vals = np.concatenate(done_v)
    errs = np.concatenate(done_e)
    order_idx = np.argsort(pos, kind="stable")
    value = math.fsum(vals[order_idx])
    error = math.fsum(errs[order_idx])
    if full_output:
        return QuadratureResult(value, error, converged, evals)
    return value
