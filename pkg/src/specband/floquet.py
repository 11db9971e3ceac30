"""The periodized sample operator ``h_per,L`` on the full line.

Repeating ``v(1), ..., v(L)`` gives an L-periodic operator whose spectrum is
``D^{-1}([-2, 2])`` for the discriminant ``D(E) = tr T(L, E)``.  Band edges
come from two real symmetric eigenproblems (periodic and antiperiodic
Floquet matrices), then get polished by Newton steps on ``D = ±2`` in
scaled arithmetic so that exponentially thin bands keep an accurate width.

Band ``ℓ`` (1-based, ascending) has ``D`` decreasing for odd ``ℓ`` and
increasing for even ``ℓ``: ``D`` is monic in ``-E`` and tends to ``+∞`` as
``E -> -∞``.  On odd bands ``E_ℓ(k)`` increases with the quasi-momentum.

Bloch waves are built from eigenvectors of ``T(L, E)`` and propagated with
the three-term recursion (O(L) per energy).  This is accurate as long as the
period does not contain long stretches where the wave decays; tighter
confinement shows up directly in the propagation residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import BandEdgeError, InvalidInputError, NumericalFailureError
from .numerics import Interval, bisect_batch, find_root, gauss_legendre, sym_eig
from .potential import sample
from .transfer import _norm_log, transfer_product

__all__ = [
    "BandStructure",
    "BlochState",
    "floquet_matrix",
    "discriminant",
    "discriminant_scaled",
    "band_edges",
    "band_edges_by_bisection",
    "spectrum_measure",
    "thouless_conductance",
    "bloch_state",
    "bloch_states",
    "band_energy",
    "feynman_hellmann_check",
    "rotation_number",
    "energy_at_rotation",
    "deift_simon_values",
    "deift_simon_audit",
    "preimage_measure",
    "weak_deift_simon_check",
    "bloch_moment_integral",
    "TransferBoundReport",
    "transfer_bound_audit",
    "EnlargedSpectrum",
    "enlarged_spectrum",
    "interior_grid",
]

_LN2 = math.log(2.0)
EDGE_MARGIN = 1e-6
INTERLACING_TOL = 1e-8
THIN_BAND = 1e-9


# ---------------------------------------------------------------------------
# discriminant
# ---------------------------------------------------------------------------


def discriminant_scaled(vals, E, gap: bool = False):
    """``(d, dp, k)`` with ``D = d * 2**k`` and ``D' = dp * 2**k``.

    Product rule on ``(P, P')``: each step maps it to ``(A P, A' P + A P')``
    with ``A' = [[-1, 0], [0, 0]]``.  Both matrices share one power-of-two
    scale.  With ``gap=True`` a fourth entry ``g`` is returned with
    ``D^2 - 4 = g * 4**k``, evaluated as ``(a - d)^2 + 4bc`` (valid since
    ``det P = 1``); unlike ``D^2 - 4`` it does not cancel where ``P ≈ ±I``.
    """
    E = np.asarray(E, dtype=float)
    shape = E.shape
    a = np.ones(shape)
    b = np.zeros(shape)
    c = np.zeros(shape)
    d = np.ones(shape)
    ap = np.zeros(shape)
    bp = np.zeros(shape)
    cp = np.zeros(shape)
    dp = np.zeros(shape)
    k = np.zeros(shape, dtype=np.int64)
    xmax = float(np.max(np.abs(vals))) + (float(np.max(np.abs(E))) if E.size else 0.0)
    stride = int(min(16, max(1, 350.0 / math.log2(xmax + 3.0))))
    n_sites = len(vals)
    for n, vn in enumerate(vals, 1):
        x = vn - E
        ap, bp, cp, dp = x * ap - cp - a, x * bp - dp - b, ap, bp
        a, b, c, d = x * a - c, x * b - d, a, b
        if n % stride == 0 or n == n_sites:
            fro2 = a * a + b * b + c * c + d * d + ap * ap + bp * bp + cp * cp + dp * dp
            out = (fro2 > 4.0) | (fro2 < 0.25)
            if np.any(out):
                _, e = np.frexp(np.where(fro2 > 0, fro2, 1.0))
                s = np.where(out, np.floor_divide(e, 2), 0).astype(np.int64)
                a, b, c, d, ap, bp, cp, dp = (np.ldexp(z, -s) for z in (a, b, c, d, ap, bp, cp, dp))
                k = k + s
    if gap:
        return a + d, ap + dp, k, (a - d) ** 2 + 4.0 * b * c
    return a + d, ap + dp, k


def discriminant(v, L: int, E):
    """``(D(E), D'(E))`` for the period-``L`` repetition of ``v``; may overflow to ±inf."""
    vals = sample(v, int(L))
    dd, ddp, k = discriminant_scaled(vals, E)
    with np.errstate(over="ignore"):
        scale = np.exp2(k.astype(float))
        D, Dp = dd * scale, ddp * scale
    if np.ndim(D) == 0:
        return float(D), float(Dp)
    return D, Dp


def floquet_matrix(v, L: int, k: float) -> np.ndarray:
    """Hermitian ``H(k, 0)``: the period cell with Bloch phase ``e^{ikL}`` across the corner."""
    vals = sample(v, int(L))
    L = vals.size
    phase = np.exp(1j * k * L)
    H = np.diag(vals.astype(complex))
    for i in range(L - 1):
        H[i, i + 1] += -1.0
        H[i + 1, i] += -1.0
    H[0, L - 1] += -np.conj(phase)
    H[L - 1, 0] += -phase
    return H


def _edge_matrix(vals: np.ndarray, sign: float) -> np.ndarray:
    """Real ``H(0, 0)`` (``sign=+1``: corner -1) or ``H(π/L, 0)`` (``sign=-1``: corner +1)."""
    L = vals.size
    H = np.diag(vals.astype(float))
    for i in range(L - 1):
        H[i, i + 1] -= 1.0
        H[i + 1, i] -= 1.0
    H[0, L - 1] -= sign
    H[L - 1, 0] -= sign
    return H


# ---------------------------------------------------------------------------
# band structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandStructure:
    """Bands ``B_ℓ = [E_{1,ℓ}, E_{2,ℓ}]`` of ``h_per,L`` in ascending order.

    ``orientation[ℓ-1]`` is -1 where ``D`` decreases across the band and +1
    where it increases.  ``gap_extrema`` has ``L + 1`` entries: ``-inf``, the
    local extrema of ``D`` in the ``L - 1`` gaps, ``+inf``.  ``zeros`` and
    ``gap_extrema`` are None when the structure was built with
    ``full=False``.
    """

    L: int
    bands: np.ndarray
    orientation: np.ndarray
    zeros: Optional[np.ndarray] = None
    gap_extrema: Optional[np.ndarray] = None
    periodic_eigs: Optional[np.ndarray] = field(default=None, repr=False)
    antiperiodic_eigs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def lower(self) -> np.ndarray:
        return self.bands[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bands[:, 1]

    @property
    def widths(self) -> np.ndarray:
        return self.bands[:, 1] - self.bands[:, 0]

    def measure(self, I=None) -> float:
        """Lebesgue measure of the spectrum, optionally intersected with ``I``."""
        if I is None:
            return math.fsum(self.widths)
        I = I if isinstance(I, Interval) else Interval(*I)
        lo = np.maximum(self.lower, I.lo)
        hi = np.minimum(self.upper, I.hi)
        return math.fsum(np.maximum(hi - lo, 0.0))

    def contains(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        idx = np.searchsorted(self.lower, E, side="right") - 1
        ok = idx >= 0
        idx_c = np.clip(idx, 0, self.L - 1)
        return ok & (E <= self.upper[idx_c])

    def band_index(self, E) -> np.ndarray:
        """1-based index of the band containing ``E``; 0 outside the spectrum."""
        E = np.asarray(E, dtype=float)
        idx = np.searchsorted(self.lower, E, side="right") - 1
        idx_c = np.clip(idx, 0, self.L - 1)
        inside = (idx >= 0) & (E <= self.upper[idx_c])
        return np.where(inside, idx_c + 1, 0)


def _polish_edges(vals, E, target, iters: int = 4):
    """Newton steps on ``D(E) = target`` that are kept only when they reduce ``|D - target|``."""
    E = E.copy()

    def residual_log(x):
        dd, ddp, k = discriminant_scaled(vals, x)
        r = dd - target * np.exp2(-k.astype(float))
        with np.errstate(divide="ignore"):
            return np.log(np.abs(r)) + k * _LN2, r, ddp

    rlog, r, ddp = residual_log(E)
    for _ in range(iters):
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(ddp != 0, -r / ddp, 0.0)
        cap = 1e-6 * (1.0 + np.abs(E))
        step = np.clip(np.nan_to_num(step), -cap, cap)
        trial = E + step
        tlog, tr, tdp = residual_log(trial)
        better = tlog < rlog
        if not np.any(better):
            break
        E = np.where(better, trial, E)
        rlog = np.where(better, tlog, rlog)
        r = np.where(better, tr, r)
        ddp = np.where(better, tdp, ddp)
    return E


def band_edges(v, L: int, full: bool = True, polish: bool = True, method: str = "lapack") -> BandStructure:
    """Band structure of the period-``L`` repetition of ``v``.

    The edges of band ``ℓ`` are the ``ℓ``-th eigenvalues of the periodic and
    antiperiodic Floquet matrices.  With ``full=True`` the zeros of ``D``
    inside each band and the extrema of ``D`` in each open gap are located
    too (bisection with endpoint signs fixed by the band orientation).
    """
    L = int(L)
    if L < 1:
        raise InvalidInputError("period L must be >= 1")
    vals = sample(v, L)
    if L == 1:
        per = np.array([vals[0] - 2.0])
        anti = np.array([vals[0] + 2.0])
    else:
        per = np.asarray(sym_eig(_edge_matrix(vals, +1.0), method=method))
        anti = np.asarray(sym_eig(_edge_matrix(vals, -1.0), method=method))
    ell = np.arange(1, L + 1)
    orientation = np.where(ell % 2 == 1, -1, 1)
    # decreasing band: D = +2 at its lower edge (periodic), -2 at its upper edge
    lower = np.where(orientation < 0, per, anti)
    upper = np.where(orientation < 0, anti, per)
    scale = 1.0 + float(np.max(np.abs(np.concatenate([per, anti]))))
    tol = INTERLACING_TOL * scale
    if np.any(lower > upper + tol):
        bad = int(np.argmax(lower - upper)) + 1
        raise NumericalFailureError(f"band {bad}: edges out of order beyond {tol:g} (interlacing violated)")
    if L > 1 and np.any(upper[:-1] > lower[1:] + tol):
        bad = int(np.argmax(upper[:-1] - lower[1:])) + 1
        raise NumericalFailureError(f"bands {bad} and {bad + 1} overlap beyond {tol:g} (interlacing violated)")
    if polish:
        edges = np.concatenate([lower, upper])
        target = np.concatenate([-2.0 * orientation, 2.0 * orientation]).astype(float)
        edges = _polish_edges(vals, edges, target)
        lower, upper = edges[:L], edges[L:]
    upper = np.maximum(upper, lower)
    if L > 1:
        # touching bands: keep them abutting rather than overlapping by rounding
        lower[1:] = np.maximum(lower[1:], upper[:-1])
        upper = np.maximum(upper, lower)
    bands = np.stack([lower, upper], axis=1)
    zeros = extrema = None
    if full:
        zeros = _band_zeros(vals, bands, orientation)
        extrema = _gap_extrema(vals, bands, orientation, scale)
    return BandStructure(L, bands, orientation, zeros, extrema, per, anti)


def _band_zeros(vals, bands, orientation):
    sign_lo = -orientation.astype(float)  # D(E1) = +2 on decreasing bands

    def sgn(x):
        return discriminant_scaled(vals, x)[0]

    z = bisect_batch(sgn, bands[:, 0], bands[:, 1], sign_lo, iters=80)
    return z


def _gap_extrema(vals, bands, orientation, scale, closed_tol: float = 1e-10):
    L = bands.shape[0]
    out = np.empty(L + 1)
    out[0], out[L] = -np.inf, np.inf
    if L == 1:
        return out
    lo = bands[:-1, 1]
    hi = bands[1:, 0]
    open_gap = (hi - lo) > closed_tol * scale
    out[1:L] = 0.5 * (lo + hi)
    if np.any(open_gap):
        sign_lo = orientation[:-1].astype(float)  # sign of D' leaving band ℓ upward

        def sgn(x):
            return discriminant_scaled(vals, x)[1]

        out[1:L][open_gap] = bisect_batch(sgn, lo[open_gap], hi[open_gap], sign_lo[open_gap], iters=80)
    return out


def band_edges_by_bisection(v, L: int, bands: BandStructure, tol: float = 1e-13) -> np.ndarray:
    """Edges as roots of ``|D| = 2`` found by scalar bracketed root finding.

    Independent of the eigensolver: each band ``ℓ`` is bracketed by the
    discriminant zero inside it and the gap extrema on either side.  Returns
    an ``(L, 2)`` array; entries are NaN where no bracket exists (closed gaps
    or extremal bands without a finite bracket).
    """
    vals = sample(v, int(L))
    if bands.zeros is None or bands.gap_extrema is None:
        raise InvalidInputError("need a full band structure (zeros and gap extrema)")
    out = np.full((bands.L, 2), np.nan)

    def D(x):
        dd, _, k = discriminant_scaled(vals, np.array([x]))
        return float(dd[0] * 2.0 ** float(k[0]))

    span = 4.0 + 2.0 * float(np.max(np.abs(vals)))
    for i in range(bands.L):
        o = bands.orientation[i]
        E0 = bands.zeros[i]
        lo_ext = bands.gap_extrema[i] if np.isfinite(bands.gap_extrema[i]) else bands.lower[i] - span
        hi_ext = bands.gap_extrema[i + 1] if np.isfinite(bands.gap_extrema[i + 1]) else bands.upper[i] + span
        t_lo = -2.0 * o  # value of D at the lower edge
        t_hi = 2.0 * o
        for j, (a, b, t) in enumerate(((lo_ext, E0, t_lo), (E0, hi_ext, t_hi))):
            try:
                out[i, j] = find_root(lambda x, t=t: D(x) - t, (a, b), tol=tol)
            except InvalidInputError:
                pass
    return out


def spectrum_measure(v, L: int, I, bands: Optional[BandStructure] = None) -> float:
    """``|sp(h_per,L) ∩ I|``."""
    bs = bands if bands is not None else band_edges(v, L, full=False)
    return bs.measure(I)


def thouless_conductance(v, L: int, mu_l: float, mu_r: float, bands: Optional[BandStructure] = None) -> float:
    """``|sp(h_per,L) ∩ (μ_l, μ_r)| / (2π (μ_r - μ_l))``."""
    I = Interval(mu_l, mu_r)
    return spectrum_measure(v, L, I, bands) / (2.0 * math.pi * I.width)


# ---------------------------------------------------------------------------
# Bloch waves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochState:
    """Normalized Bloch wave of energy ``E`` on one period.

    ``u[m-1]`` is ``u(m)`` for ``m = 1..L``; other sites follow from
    ``u(j + nL) = multiplier**n * u(j)``.
    """

    E: float
    k: float
    ell: int
    u: np.ndarray
    dEdk: float
    multiplier: complex
    residual: float
    phase_fallback: bool = False
    branch_flipped: bool = False

    @property
    def L(self) -> int:
        return self.u.size

    def amplitude(self, m: int) -> complex:
        n, j = divmod(m - 1, self.L)
        return complex(self.u[j] * self.multiplier**n)

    def feynman_hellmann(self, m: int) -> float:
        """``2L Im(conj(u(m)) u(m+1))``, the same for every ``m``."""
        return 2.0 * self.L * float(np.imag(np.conj(self.amplitude(m)) * self.amplitude(m + 1)))


def _bloch_from_site(V, E, lam):
    """Bloch wave from the eigenvector of the cyclic period ``V`` (one row per energy).

    The eigenvector ``(w(1), w(0))`` of the scaled period product is propagated
    forward and, from ``(w(L), w(L+1)) = λ (w(0), w(1))``, backward; each
    direction is stable where the wave grows along it, so the two halves are
    joined at the peak.  Returns ``W`` with columns ``w(0..L+1)`` and the
    relative forward/backward mismatch at the join.
    """
    nE, L = V.shape
    a = np.ones(nE)
    b = np.zeros(nE)
    c = np.zeros(nE)
    d = np.ones(nE)
    k = np.zeros(nE)
    for n in range(L):
        x = V[:, n] - E
        a, b, c, d = x * a - c, x * b - d, a, b
        if n % 8 == 7 or n == L - 1:
            _, e = np.frexp(a * a + b * b + c * c + d * d)
            sh = np.floor_divide(e, 2)
            a, b, c, d = (np.ldexp(z, -sh) for z in (a, b, c, d))
            k = k + sh
    lam_s = lam * np.exp2(-k)
    x1a, x0a = b + 0j, lam_s - a
    x1b, x0b = lam_s - d, c + 0j
    use_a = np.abs(x1a) ** 2 + np.abs(x0a) ** 2 >= np.abs(x1b) ** 2 + np.abs(x0b) ** 2
    w1 = np.where(use_a, x1a, x1b)
    w0 = np.where(use_a, x0a, x0b)
    F = np.empty((nE, L + 2), dtype=complex)
    B = np.empty((nE, L + 2), dtype=complex)
    F[:, 0], F[:, 1] = w0, w1
    for n in range(1, L + 1):
        F[:, n + 1] = (V[:, n - 1] - E) * F[:, n] - F[:, n - 1]
    B[:, 0], B[:, 1] = w0, w1
    B[:, L], B[:, L + 1] = lam * w0, lam * w1
    for n in range(L, 1, -1):
        B[:, n - 1] = (V[:, n - 1] - E) * B[:, n] - B[:, n + 1]
    trust = np.minimum(np.abs(F), np.abs(B))
    peak = np.argmax(trust[:, 1 : L + 1], axis=1) + 1
    cols = np.arange(L + 2)[None, :]
    W = np.where(cols <= peak[:, None], F, B)
    rows = np.arange(nE)
    pk1 = np.minimum(peak + 1, L + 1)
    residual = np.maximum(np.abs(F[rows, peak] - B[rows, peak]), np.abs(F[rows, pk1] - B[rows, pk1]))
    return W, residual / np.max(trust, axis=1)


def _bloch_batch(vals, E):
    """Bloch amplitudes for an array of in-band energies.

    Returns a dict of arrays: ``u`` (nE, L), ``u0`` (the site-0 value),
    ``k``, ``dEdk``, ``lam`` (multiplier), ``residual``, ``fallback``,
    ``flipped``, ``D``, ``Dp_sign`` and ``dEdk_disc`` (the discriminant route
    ``L sqrt(4 - D^2) / |D'|``).
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    L = vals.size
    dd, ddp, kd = discriminant_scaled(vals, E)
    with np.errstate(over="ignore"):
        D = dd * np.exp2(kd.astype(float))
    if np.any(np.abs(D) >= 2.0 - 1e-9):
        bad = E[np.abs(D) >= 2.0 - 1e-9][0]
        raise BandEdgeError(f"E={bad!r} is not strictly inside a band (|D| >= 2 - 1e-9)")
    theta = np.arccos(D / 2.0)
    lam = np.exp(1j * theta)
    # first pass from site 1 only locates the site where the wave is smallest;
    # the cyclic period started there has the best-conditioned eigenvector
    V = np.broadcast_to(vals, (E.size, L))
    W, _ = _bloch_from_site(V, E, lam)
    s = np.argmin(np.abs(W[:, 1 : L + 1]), axis=1)
    rows = np.arange(E.size)
    cyc = (s[:, None] + np.arange(L)[None, :]) % L
    W, residual = _bloch_from_site(vals[cyc], E, lam)
    # W[:, j] = u(s + j) for j = 0..L+1 (0-based s); back to sites 0..L
    U = np.empty((E.size, L), dtype=complex)
    j_of_n = (np.arange(L)[None, :] - s[:, None]) % L  # site n+1 sits at W column j+1
    wrapped = np.arange(L)[None, :] < s[:, None]  # sites before s come from the next period
    U = W[rows[:, None], j_of_n + 1] / np.where(wrapped, lam[:, None], 1.0)
    u0 = U[:, L - 1] / lam
    norm = np.sqrt(np.sum(np.abs(U) ** 2, axis=1))
    U = U / norm[:, None]
    u0 = u0 / norm
    # Feynman-Hellmann value 2L Im(conj(u(m)) u(m+1)) is the same for every m;
    # evaluate it where |u(m)|^2 + |u(m+1)|^2 is smallest, since at the peak
    # of a strongly modulated wave it is a small difference of large terms
    ext = np.concatenate([u0[:, None], U, (lam * U[:, 0])[:, None]], axis=1)
    pair = np.abs(ext[:, :-1]) ** 2 + np.abs(ext[:, 1:]) ** 2
    mstar = np.argmin(pair, axis=1)
    rows = np.arange(E.size)
    dEdk = 2.0 * L * np.imag(np.conj(ext[rows, mstar]) * ext[rows, mstar + 1])
    # odd bands (D decreasing) have E increasing in k
    want = -np.sign(ddp)
    flipped = np.sign(dEdk) != want
    U = np.where(flipped[:, None], np.conj(U), U)
    u0 = np.where(flipped, np.conj(u0), u0)
    lam = np.where(flipped, np.conj(lam), lam)
    dEdk = np.where(flipped, -dEdk, dEdk)
    # global phase: first component real positive (or first non-negligible one)
    absU = np.abs(U)
    thresh = 1e-10 * absU.max(axis=1)
    fallback = absU[:, 0] < thresh
    first = np.argmax(absU >= thresh[:, None], axis=1)
    ref = U[np.arange(E.size), first]
    ph = np.conj(ref) / np.abs(ref)
    U = U * ph[:, None]
    u0 = u0 * ph
    with np.errstate(divide="ignore", over="ignore"):
        dEdk_disc = L * np.sqrt(4.0 - D * D) / (np.abs(ddp) * np.exp2(kd.astype(float)))
    return {
        "E": E,
        "u": U,
        "u0": u0,
        "k": theta / L,
        "dEdk": dEdk,
        "lam": lam,
        "residual": residual,
        "fallback": fallback,
        "flipped": flipped,
        "D": D,
        "Dp_sign": np.sign(ddp),
        "dEdk_disc": dEdk_disc,
    }


def bloch_states(v, L: int, E, bands: Optional[BandStructure] = None) -> list[BlochState]:
    """Vectorized :func:`bloch_state` over an array of energies."""
    vals = sample(v, int(L))
    out = _bloch_batch(vals, E)
    bs = bands if bands is not None else band_edges(vals, vals.size, full=False)
    ell = bs.band_index(out["E"])
    # energies that rounding puts just outside a band edge: use the nearest band
    if np.any(ell == 0):
        mids = bs.bands.mean(axis=1)
        near = np.argmin(np.abs(out["E"][:, None] - mids[None, :]), axis=1) + 1
        ell = np.where(ell == 0, near, ell)
    return [
        BlochState(
            E=float(out["E"][i]),
            k=float(out["k"][i]),
            ell=int(ell[i]),
            u=out["u"][i],
            dEdk=float(out["dEdk"][i]),
            multiplier=complex(out["lam"][i]),
            residual=float(out["residual"][i]),
            phase_fallback=bool(out["fallback"][i]),
            branch_flipped=bool(out["flipped"][i]),
        )
        for i in range(out["E"].size)
    ]


def bloch_state(v, L: int, E: float, bands: Optional[BandStructure] = None) -> BlochState:
    """Normalized Bloch wave at an energy strictly inside a band.

    ``k = arccos(D/2) / L``; the wave is the ``T(L, E)`` eigenvector for
    ``e^{ikL}`` propagated over one period, normalized on sites ``1..L``
    with ``u(1) > 0``.  ``dEdk`` is the Feynman-Hellmann value
    ``2L Im(conj(u(m)) u(m+1))``, the same for every ``m``; it is evaluated
    at the ``m`` where that pair is smallest, which avoids cancellation.
    """
    return bloch_states(v, L, np.array([float(E)]), bands)[0]


def band_energy(v, L: int, ell, k, bands: Optional[BandStructure] = None):
    """``E_ℓ(k)`` for ``k ∈ (0, π/L)``: the root of ``D(E) = 2 cos(kL)`` inside band ``ℓ``."""
    vals = sample(v, int(L))
    bs = bands if bands is not None else band_edges(vals, vals.size, full=False)
    ell = np.asarray(ell)
    k = np.asarray(k, dtype=float)
    ell, k = np.broadcast_arrays(ell, k)
    idx = ell.ravel() - 1
    target = 2.0 * np.cos(k.ravel() * vals.size)
    o = bs.orientation[idx]
    lo = bs.lower[idx]
    hi = bs.upper[idx]
    # D - target at the lower edge: +2 - t > 0 on decreasing bands, -2 - t < 0 otherwise
    sign_lo = -o.astype(float)

    def f(x):
        dd, _, kk = discriminant_scaled(vals, x)
        return dd - target * np.exp2(-kk.astype(float))

    E = bisect_batch(f, lo, hi, sign_lo, iters=80)
    return E.reshape(ell.shape) if ell.ndim else float(E[0])


def feynman_hellmann_check(
    v,
    L: int,
    samples: int = 8,
    bands: Optional[BandStructure] = None,
    min_rel_width: float = 1e-5,
) -> dict:
    """Cross-check ``E'_ℓ(k)`` three ways on every resolvable band.

    Compares the Bloch-amplitude value with ``L sqrt(4 - D^2) / |D'|``, with
    a fourth-order central difference of ``E_ℓ(k)`` and with itself over
    all sites ``m`` of the period.  Bands narrower than ``min_rel_width``
    times ``1 + |E|`` are skipped: there the energy itself is only known to
    a fraction of the band width and no double-precision route agrees.
    ``m_spread`` is absolute (``max_m - min_m`` of ``2L Im(conj(u(m)) u(m+1))``);
    ``m_spread_rel`` divides it by ``|E'|``.
    """
    vals = sample(v, int(L))
    L = vals.size
    bs = bands if bands is not None else band_edges(vals, L, full=False)
    keep = bs.widths > min_rel_width * (1.0 + np.abs(bs.bands).max(axis=1))
    ells = np.nonzero(keep)[0] + 1
    # quasi-momenta well inside (0, π/L) so that the FD stencil stays in range
    t = interior_grid(0.05, 0.95, samples, margin=0.0) * math.pi / L
    ell = np.repeat(ells, samples)
    kk = np.tile(t, ells.size)
    result = {"bands_checked": int(ells.size), "bands_skipped": int(bs.L - ells.size)}
    if ell.size == 0:
        result.update(disc_rel_err=0.0, fd_rel_err=0.0, m_spread=0.0, m_spread_rel=0.0, branch_flips=0)
        return result
    E = band_energy(vals, L, ell, kk, bs)
    out = _bloch_batch(vals, E)
    fh = out["dEdk"]
    disc_err = np.abs(np.abs(fh) - out["dEdk_disc"]) / out["dEdk_disc"]
    h = 1e-3 * math.pi / L
    Es = [band_energy(vals, L, ell, kk + j * h, bs) for j in (-2, -1, 1, 2)]
    fd = (Es[0] - 8.0 * Es[1] + 8.0 * Es[2] - Es[3]) / (12.0 * h)
    fd_err = np.abs(fd - fh) / np.abs(fh)
    U = np.concatenate([out["u0"][:, None], out["u"], (out["lam"] * out["u"][:, 0])[:, None]], axis=1)
    per_m = 2.0 * L * np.imag(np.conj(U[:, :-1]) * U[:, 1:])
    spread = per_m.max(axis=1) - per_m.min(axis=1)
    result.update(
        disc_rel_err=float(disc_err.max()),
        fd_rel_err=float(fd_err.max()),
        m_spread=float(spread.max()),
        m_spread_rel=float((spread / np.abs(fh)).max()),
        branch_flips=int(out["flipped"].sum()),
    )
    return result


# ---------------------------------------------------------------------------
# rotation number and the Deift-Simon bound
# ---------------------------------------------------------------------------


def rotation_number(v, L: int, E, bands: Optional[BandStructure] = None):
    """``(α(E), α'(E))``: accumulated quasi-momentum and its derivative.

    ``α`` rises from 0 to π across the spectrum by ``π/L`` per band and is
    constant in gaps; ``α/π`` is the integrated density of states.
    ``α' = |D'| / (L sqrt(4 - D^2))`` inside bands and 0 outside; at a band
    edge it is reported as ``inf`` (one-sided limit).
    """
    vals = sample(v, int(L))
    L = vals.size
    bs = bands if bands is not None else band_edges(vals, L, full=False)
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    dd, ddp, kd, gg = discriminant_scaled(vals, E_arr, gap=True)
    with np.errstate(over="ignore"):
        D = dd * np.exp2(kd.astype(float))
        Dp = ddp * np.exp2(kd.astype(float))
        s_all = -gg * np.exp2(2.0 * kd.astype(float))
    ell = bs.band_index(E_arr)
    # gap / outside: number of bands entirely below E
    below = np.searchsorted(bs.upper, E_arr, side="left")
    alpha = below * math.pi / L
    alpha_p = np.zeros_like(E_arr)
    inside = ell > 0
    if np.any(inside):
        li = ell[inside]
        Di = np.clip(D[inside], -2.0, 2.0)
        kE = np.arccos(Di / 2.0) / L
        o = bs.orientation[li - 1]
        a_in = np.where(o < 0, (li - 1) * math.pi / L + kE, li * math.pi / L - kE)
        # at the edges α is exact (D there may be off by rounding on thin bands);
        # a band of zero width in double precision takes the value from above
        Ei = E_arr[inside]
        a_in = np.where(Ei <= bs.lower[li - 1], (li - 1) * math.pi / L, a_in)
        a_in = np.where(Ei >= bs.upper[li - 1], li * math.pi / L, a_in)
        alpha[inside] = a_in
        s = s_all[inside]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ap = np.where(s > 0, np.abs(Dp[inside]) / (L * np.sqrt(np.maximum(s, 0.0))), np.inf)
        alpha_p[inside] = ap
    if np.ndim(E) == 0:
        return float(alpha[0]), float(alpha_p[0])
    return alpha, alpha_p


def energy_at_rotation(v, L: int, alpha, bands: Optional[BandStructure] = None):
    """Inverse of ``α`` restricted to the spectrum."""
    vals = sample(v, int(L))
    L = vals.size
    bs = bands if bands is not None else band_edges(vals, L, full=False)
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any((a < 0) | (a > math.pi)):
        raise InvalidInputError("rotation number must lie in [0, π]")
    ell = np.clip(np.floor(a * L / math.pi).astype(int) + 1, 1, L)
    o = bs.orientation[ell - 1]
    kE = np.where(o < 0, a - (ell - 1) * math.pi / L, ell * math.pi / L - a)
    kE = np.clip(kE, 0.0, math.pi / L)
    E = band_energy(vals, L, ell, kE, bs)
    return E if np.ndim(alpha) else float(np.atleast_1d(E)[0])


def interior_grid(lo, hi, n: int, margin: float = EDGE_MARGIN) -> np.ndarray:
    """Chebyshev-spaced points inside ``[lo + margin*w, hi - margin*w]``."""
    t = np.cos((2.0 * np.arange(1, n + 1) - 1.0) * math.pi / (2.0 * n))[::-1]
    w = hi - lo
    a = lo + margin * w
    b = hi - margin * w
    return 0.5 * (a + b) + 0.5 * (b - a) * t


def _interior_samples(bs: BandStructure, n: int, min_width: float):
    pts, owner = [], []
    for i in range(bs.L):
        lo, hi = bs.bands[i]
        if hi - lo <= min_width:
            continue
        g = interior_grid(lo, hi, n)
        g = g[(g > lo) & (g < hi)]
        pts.append(g)
        owner.append(np.full(g.size, i + 1))
    if not pts:
        return np.zeros(0), np.zeros(0, dtype=int)
    return np.concatenate(pts), np.concatenate(owner)


def deift_simon_values(v, L: int, samples_per_band: int = 32, bands: Optional[BandStructure] = None):
    """Energies and ``2 sin(α(E)) α'(E)`` on interior Chebyshev grids of every band."""
    vals = sample(v, int(L))
    bs = bands if bands is not None else band_edges(vals, vals.size, full=False)
    scale = 1.0 + float(np.max(np.abs(bs.bands)))
    E, _ = _interior_samples(bs, samples_per_band, 1e-12 * scale)
    if E.size == 0:
        return E, E
    alpha, ap = rotation_number(vals, vals.size, E, bs)
    return E, 2.0 * np.sin(alpha) * ap


def deift_simon_audit(v, L: int, samples_per_band: int = 32, bands: Optional[BandStructure] = None) -> float:
    """Minimum of ``2 sin(α) α'`` over interior samples (the bound says it is >= 1)."""
    _, vals = deift_simon_values(v, L, samples_per_band, bands)
    return float(np.min(vals)) if vals.size else math.inf


def preimage_measure(v, L: int, pieces, bands: Optional[BandStructure] = None) -> float:
    """``|α^{-1}(A) ∩ sp|`` for a union ``A`` of disjoint subintervals of [0, π]."""
    vals = sample(v, int(L))
    bs = bands if bands is not None else band_edges(vals, vals.size, full=False)
    total = 0.0
    for a, b in pieces:
        Ea, Eb = energy_at_rotation(vals, vals.size, np.array([a, b]), bs)
        lo = np.maximum(bs.lower, Ea)
        hi = np.minimum(bs.upper, Eb)
        total += float(np.sum(np.maximum(hi - lo, 0.0)))
    return total


def weak_deift_simon_check(v, L: int, n_sets: int = 20, seed: int = 0, bands: Optional[BandStructure] = None) -> float:
    """Largest ``|α^{-1}(A)| / (2|A|)`` over random unions of subintervals (<= 1 expected)."""
    rng = np.random.default_rng(seed)
    vals = sample(v, int(L))
    bs = bands if bands is not None else band_edges(vals, vals.size, full=False)
    worst = 0.0
    for _ in range(n_sets):
        cuts = np.sort(rng.uniform(0.0, math.pi, size=2 * int(rng.integers(1, 5))))
        pieces = list(zip(cuts[::2], cuts[1::2]))
        A = sum(b - a for a, b in pieces)
        if A <= 0:
            continue
        worst = max(worst, preimage_measure(vals, vals.size, pieces, bs) / (2.0 * A))
    return worst


# ---------------------------------------------------------------------------
# Bloch moment lemma
# ---------------------------------------------------------------------------


def bloch_moment_integral(v, L: int, k_points: int = 32, bands: Optional[BandStructure] = None) -> float:
    """``Σ_ℓ ∫_0^{π/L} (|u_ℓ(k,1)|^2 + |u_ℓ(k,2)|^2) dk``; equals ``2π/L``.

    Gauss-Legendre of order ``k_points`` in ``k`` on every band; the energy
    ``E_ℓ(k)`` at each node comes from a bracketed solve of ``D = 2cos(kL)``.
    """
    if k_points < 16:
        raise InvalidInputError("k_points must be >= 16")
    vals = sample(v, int(L))
    L = vals.size
    bs = bands if bands is not None else band_edges(vals, L, full=False)
    x, w = gauss_legendre(k_points)
    half = 0.5 * math.pi / L
    kn = half * (x + 1.0)
    wn = half * w
    # an exponentially thin band has k-independent amplitudes up to relative
    # O(width) but E_ℓ(k) is not resolvable in double precision; its moment is
    # read off the Hermitian Floquet eigenvector at kL = π/2 instead
    thin = bs.widths < THIN_BAND * (1.0 + np.abs(bs.bands).max(axis=1))
    total = []
    if np.any(thin):
        _, Vk = scipy.linalg.eigh(floquet_matrix(vals, L, half))
        idx = np.nonzero(thin)[0]
        second = Vk[1, idx] if L > 1 else Vk[0, idx]
        total.extend(((np.abs(Vk[0, idx]) ** 2 + np.abs(second) ** 2) * (math.pi / L)).tolist())
    ells = np.nonzero(~thin)[0] + 1
    if ells.size:
        ell = np.repeat(ells, k_points)
        kk = np.tile(kn, ells.size)
        E = band_energy(vals, L, ell, kk, bs)
        out = _bloch_batch(vals, E)
        U = out["u"]
        u2 = U[:, 1] if L > 1 else out["lam"] * U[:, 0]
        integrand = np.abs(U[:, 0]) ** 2 + np.abs(u2) ** 2
        total.extend((integrand * np.tile(wn, ells.size)).tolist())
    return math.fsum(total)


# ---------------------------------------------------------------------------
# transfer-matrix bounds in and out of the spectrum
# ---------------------------------------------------------------------------


@dataclass
class TransferBoundReport:
    """Worst relative violations of the in-band upper bound and the gap lower bound."""

    max_inband_violation: float
    max_gap_violation: float
    n_inband: int
    n_gap: int
    worst_inband: dict = field(default_factory=dict)
    worst_gap: dict = field(default_factory=dict)
    shifted_pair_violation: float = 0.0

    def ok(self, tol: float = 1e-8) -> bool:
        return self.max_inband_violation <= tol and self.max_gap_violation <= tol


def transfer_bound_audit(v, L: int, samples: int = 16, bands: Optional[BandStructure] = None) -> TransferBoundReport:
    """Check both transfer-matrix bounds on interior and gap sample grids.

    In band: ``||T(L, E_ℓ(k))|| <= 2L (|u(0)|^2 + |u(1)|^2) / |E'_ℓ(k)|``,
    built on ``(u(1), u(0))``, the eigenvector of ``T(L, E)`` itself (note
    ``|u(0)| = |u(L)|``).  The same bound with ``(u(1), u(2))`` belongs to the
    product over sites ``2..L+1``; its violation for ``T(L, E)`` is reported
    as ``shifted_pair_violation`` for information only.
    In the gap above band ``[E1, E2]`` up to the next extremum ``E_M`` of
    ``D``: ``||T|| >= (E - E0) / (e (E2 - E0))``, and the mirrored form below.
    """
    vals = sample(v, int(L))
    L = vals.size
    bs = bands if bands is not None else band_edges(vals, L, full=True)
    if bs.zeros is None or bs.gap_extrema is None:
        bs = band_edges(vals, L, full=True)
    scale = 1.0 + float(np.max(np.abs(bs.bands)))

    # in-band side
    E_in, owner = _interior_samples(bs, samples, 1e-12 * scale)
    max_in, worst_in, shifted = 0.0, {}, 0.0
    if E_in.size:
        out = _bloch_batch(vals, E_in)
        U = out["u"]
        u2 = U[:, 1] if L > 1 else out["lam"] * U[:, 0]
        fh = np.abs(out["dEdk"])
        rhs_log = np.log(2.0 * L * (np.abs(out["u0"]) ** 2 + np.abs(U[:, 0]) ** 2) / fh)
        shifted_log = np.log(2.0 * L * (np.abs(U[:, 0]) ** 2 + np.abs(u2) ** 2) / fh)
        nl = _norm_from(vals, E_in)
        viol = np.maximum(0.0, np.expm1(nl - rhs_log))
        shifted = float(np.max(np.maximum(0.0, np.expm1(nl - shifted_log))))
        i = int(np.argmax(viol))
        max_in = float(viol[i])
        worst_in = {"E": float(E_in[i]), "band": int(owner[i]), "norm_log": float(nl[i]), "bound_log": float(rhs_log[i])}

    # gap side
    Eg, E0s, bound_den, sides = [], [], [], []
    span = 2.0
    for i in range(L):
        E1, E2 = bs.bands[i]
        E0 = bs.zeros[i]
        Em = bs.gap_extrema[i]
        EM = bs.gap_extrema[i + 1]
        hi = EM if np.isfinite(EM) else E2 + span
        lo = Em if np.isfinite(Em) else E1 - span
        if hi > E2 and E2 > E0:
            g = np.linspace(E2, hi, samples + 1)[1:]
            Eg.append(g)
            E0s.append(np.full(g.size, E0))
            bound_den.append(np.full(g.size, math.e * (E2 - E0)))
            sides.append(np.full(g.size, +1.0))
        if lo < E1 and E0 > E1:
            g = np.linspace(lo, E1, samples + 1)[:-1]
            Eg.append(g)
            E0s.append(np.full(g.size, E0))
            bound_den.append(np.full(g.size, math.e * (E0 - E1)))
            sides.append(np.full(g.size, -1.0))
    max_gap, worst_gap, n_gap = 0.0, {}, 0
    if Eg:
        Eg = np.concatenate(Eg)
        E0s = np.concatenate(E0s)
        den = np.concatenate(bound_den)
        side = np.concatenate(sides)
        rhs = side * (Eg - E0s) / den
        nl = _norm_from(vals, Eg)
        with np.errstate(divide="ignore"):
            ratio = np.exp(np.minimum(nl - np.log(np.maximum(rhs, 1e-300)), 0.0))
        viol = np.maximum(0.0, 1.0 - ratio)
        i = int(np.argmax(viol))
        max_gap = float(viol[i])
        worst_gap = {"E": float(Eg[i]), "E0": float(E0s[i]), "norm_log": float(nl[i]), "bound": float(rhs[i])}
        n_gap = int(Eg.size)
    return TransferBoundReport(max_in, max_gap, int(E_in.size), n_gap, worst_in, worst_gap, shifted)


def _norm_from(vals, E):
    m, k, log_det, _ = transfer_product(vals, E)
    return _norm_log(m, k, log_det)


# ---------------------------------------------------------------------------
# enlarged spectrum
# ---------------------------------------------------------------------------


@dataclass
class EnlargedSpectrum:
    """Bands widened by ``c`` about their discriminant zeros near a window ``I``.

    ``intervals`` is the ``(L, 2)`` array of (possibly widened) bands,
    ``overlap`` is ``|S_L ∩ I|`` and ``bound`` the a priori estimate
    ``c |σ_L ∩ I| + 4πc/L``.  ``probes`` holds energies of ``I`` outside
    ``S_L`` with ``probe_norm_log = ln||T(L, E)||`` there; each must exceed
    ``ln(c/e)``.
    """

    c: float
    window: Interval
    intervals: np.ndarray
    widened: tuple
    overlap: float
    spectrum_overlap: float
    bound: float
    probes: np.ndarray
    probe_norm_log: np.ndarray

    @property
    def min_probe_norm(self) -> float:
        return float(np.exp(np.min(self.probe_norm_log))) if self.probe_norm_log.size else math.inf

    def certified(self, tol: float = 1e-6) -> bool:
        return self.min_probe_norm >= self.c / math.e - tol


def _union_overlap(intervals: np.ndarray, I: Interval) -> float:
    lo = np.maximum(intervals[:, 0], I.lo)
    hi = np.minimum(intervals[:, 1], I.hi)
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return 0.0
    order = np.argsort(lo, kind="stable")
    total, cur_lo, cur_hi = 0.0, lo[order[0]], hi[order[0]]
    for j in order[1:]:
        if lo[j] > cur_hi:
            total += cur_hi - cur_lo
            cur_lo, cur_hi = lo[j], hi[j]
        else:
            cur_hi = max(cur_hi, hi[j])
    return total + (cur_hi - cur_lo)


def enlarged_spectrum(
    v,
    L: int,
    I,
    c: float,
    probes=None,
    n_probes: int = 512,
    bands: Optional[BandStructure] = None,
) -> EnlargedSpectrum:
    """Widen the bands whose zeros bracket ``I`` by the factor ``c >= 1``.

    Bands ``ℓ_- <= ℓ <= ℓ_+`` become ``[E0 - c(E0 - E1), E0 + c(E2 - E0)]``,
    where ``ℓ_-`` is the last band with its zero below ``inf I`` and ``ℓ_+``
    the first with its zero above ``sup I`` (clamped to 1 and ``L`` when no
    such band exists).  Outside the widened set ``||T(L, E)|| >= c/e`` holds
    on ``I``; this is checked at ``probes`` (default: a uniform grid).
    """
    if not c >= 1.0:
        raise InvalidInputError("enlargement factor c must be >= 1")
    vals = sample(v, int(L))
    L = vals.size
    I = I if isinstance(I, Interval) else Interval(*I)
    bs = bands if bands is not None and bands.zeros is not None else band_edges(vals, L, full=True)
    E0 = bs.zeros
    below = np.nonzero(E0 < I.lo)[0]
    above = np.nonzero(E0 > I.hi)[0]
    lm = int(below[-1]) if below.size else 0
    lp = int(above[0]) if above.size else L - 1
    intervals = bs.bands.copy()
    idx = np.arange(lm, lp + 1)
    intervals[idx, 0] = E0[idx] - c * (E0[idx] - bs.lower[idx])
    intervals[idx, 1] = E0[idx] + c * (bs.upper[idx] - E0[idx])
    sigma = bs.measure(I)
    overlap = _union_overlap(intervals, I)
    bound = c * sigma + 4.0 * math.pi * c / L
    if probes is None:
        probes = np.linspace(I.lo, I.hi, n_probes + 2)[1:-1]
    probes = np.asarray(probes, dtype=float)
    inside = np.zeros(probes.shape, dtype=bool)
    for lo, hi in intervals:
        inside |= (probes >= lo) & (probes <= hi)
    outside = probes[~inside & (probes > I.lo) & (probes < I.hi)]
    nl = _norm_from(vals, outside) if outside.size else np.zeros(0)
    return EnlargedSpectrum(
        c=float(c),
        window=I,
        intervals=intervals,
        widened=(lm + 1, lp + 1),
        overlap=overlap,
        spectrum_overlap=sigma,
        bound=bound,
        probes=outside,
        probe_norm_log=nl,
    )
