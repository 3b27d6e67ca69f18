"""Direct-sum and series kernels for the 2-D logarithmic potential.

Positions are complex numbers z = x + iy.  Two conventions live here:

* :func:`p2p` and :func:`direct potential sums<fmmprec.fmm.direct_evaluate>`
  return the physical potential  u_i = sum_j f_j * (-1/2pi) log sqrt(r_ij^2
  + eps^2), where ``eps`` optionally regularizes the log singularity.

* The series operators (:func:`p2m`, :func:`m2m`, :func:`m2l`, :func:`l2l`,
  :func:`l2p`) manipulate the raw complex potential phi(z) = sum_j f_j
  log(z - z_j), whose real part times -1/(2 pi) is the physical potential.
  The far-field scaling is applied once, at evaluation time, by the engine.

A multipole expansion of order p about a center c represents
``phi(z) = M_0 log(z - c) + sum_{n=1..p-1} M_n / (z - c)^n``; a local
expansion represents ``phi(z) = sum_{n=0..p-1} L_n (z - c)^n``.  Only the
real part of phi is ever consumed, so the branch of the complex log does
not matter.

Powers of the translation variable and the binomial coefficients are
produced by recurrences; no dense translation matrices are formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "FmmConfig",
    "p2p",
    "p2m",
    "m2m",
    "m2l",
    "l2l",
    "l2p",
    "evaluate_multipole",
    "evaluate_local",
]

INV_TWO_PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class FmmConfig:
    """Tuning knobs shared by the tree evaluation pipeline.

    order : series truncation p >= 1 (coefficients M_0 .. M_{p-1})
    theta : multipole acceptance parameter in (0, 1); smaller is stricter
    ncrit : leaf capacity of the trees
    epsilon : smoothing length for near-field (direct) interactions; the
        far-field series always uses the unsmoothed kernel
    """

    order: int = 6
    theta: float = 0.4
    ncrit: int = 64
    epsilon: float = 0.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.ncrit < 1:
            raise ValueError("ncrit must be >= 1")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")


@lru_cache(maxsize=None)
def _binomial_table(nmax: int) -> np.ndarray:
    """Pascal's triangle as a dense (nmax+1, nmax+1) float array."""
    b = np.zeros((nmax + 1, nmax + 1))
    b[:, 0] = 1.0
    for i in range(1, nmax + 1):
        b[i, 1:i + 1] = b[i - 1, :i] + b[i - 1, 1:i + 1]
    return b


def p2p(targets, sources, strengths, epsilon=0.0, out=None):
    """Direct-sum physical potentials at ``targets`` due to point sources.

    All positions are complex arrays.  With ``epsilon == 0`` a coincident
    target/source pair is an error; with ``epsilon > 0`` such pairs (the
    self term of an in-place evaluation included) contribute the finite
    value -log(epsilon)/(2 pi) per unit strength.
    """
    zt = np.asarray(targets, dtype=complex).ravel()
    zs = np.asarray(sources, dtype=complex).ravel()
    f = np.asarray(strengths, dtype=float).ravel()
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if out is None:
        out = np.zeros(zt.size)
    eps2 = epsilon * epsilon
    xt, yt = zt.real.copy(), zt.imag.copy()
    xs, ys = zs.real.copy(), zs.imag.copy()
    # -1/(2 pi) log sqrt(r^2 + eps^2) == -1/(4 pi) log(r^2 + eps^2)
    scale = -0.5 * INV_TWO_PI
    block = max(1, int(4_000_000 // max(zs.size, 1)))
    buf = np.empty((min(block, zt.size), zs.size))
    buf2 = np.empty_like(buf)
    for s in range(0, zt.size, block):
        e = min(s + block, zt.size)
        m = e - s
        r2 = np.subtract(xt[s:e, None], xs[None, :], out=buf[:m])
        np.multiply(r2, r2, out=r2)
        dy = np.subtract(yt[s:e, None], ys[None, :], out=buf2[:m])
        np.multiply(dy, dy, out=dy)
        r2 += dy
        if eps2 == 0.0 and np.any(r2 == 0.0):
            raise ValueError("singular evaluation")
        elif eps2 != 0.0:
            r2 += eps2
        np.log(r2, out=r2)
        out[s:e] += scale * (r2 @ f)
    return out


def p2m(rel, strengths, order):
    """Multipole coefficients of sources at offsets ``rel`` from the center.

    ``rel[j]`` is z_j - c for source j.  M_0 is the total strength; for
    n >= 1, M_n = -sum_j f_j rel_j^n / n.
    """
    rel = np.asarray(rel, dtype=complex).ravel()
    f = np.asarray(strengths, dtype=float).ravel()
    coeffs = np.zeros(order, dtype=complex)
    coeffs[0] = f.sum()
    zpow = f.astype(complex)
    for n in range(1, order):
        zpow = zpow * rel
        coeffs[n] = -zpow.sum() / n
    return coeffs


def m2m(coeffs, shift):
    """Translate a multipole expansion to a center displaced by ``shift``.

    ``shift`` is z_new - z_old.  The translation is exact: coefficient n of
    the result depends only on input coefficients 0..n.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    return m2m_batch(coeffs[None, :], np.asarray([shift], dtype=complex))[0]


def m2m_batch(coeffs, shifts):
    """Vectorized :func:`m2m` over rows of ``coeffs`` (one shift per row)."""
    m = np.asarray(coeffs, dtype=complex)
    shifts = np.asarray(shifts, dtype=complex)
    p = m.shape[1]
    binom = _binomial_table(max(p - 1, 1))
    # spow[:, k] = (-shift)^k
    spow = np.empty((m.shape[0], p), dtype=complex)
    spow[:, 0] = 1.0
    for k in range(1, p):
        spow[:, k] = spow[:, k - 1] * (-shifts)
    out = np.empty_like(m)
    out[:, 0] = m[:, 0]
    for n in range(1, p):
        acc = -m[:, 0] * spow[:, n] / n
        for k in range(1, n + 1):
            acc += m[:, k] * spow[:, n - k] * binom[n - 1, k - 1]
        out[:, n] = acc
    return out


def m2l(coeffs, separation):
    """Convert a multipole expansion into a local expansion.

    ``separation`` is z_local_center - z_multipole_center and must be
    nonzero; the result converges for evaluation points closer to the local
    center than the source points are.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    sep = np.asarray([separation], dtype=complex)
    if sep[0] == 0:
        raise ValueError("M2L at zero distance")
    return m2l_batch(coeffs[None, :], sep)[0]


def m2l_batch(coeffs, separations):
    """Vectorized :func:`m2l` over rows (one separation per row)."""
    m = np.asarray(coeffs, dtype=complex)
    sep = np.asarray(separations, dtype=complex)
    if np.any(sep == 0):
        raise ValueError("M2L at zero distance")
    p = m.shape[1]
    binom = _binomial_table(2 * p)
    # ipow[:, k] = separation^(-k), k = 0 .. 2p-2
    inv = 1.0 / sep
    ipow = np.empty((m.shape[0], 2 * p - 1), dtype=complex)
    ipow[:, 0] = 1.0
    for k in range(1, 2 * p - 1):
        ipow[:, k] = ipow[:, k - 1] * inv
    out = np.empty_like(m)
    acc = m[:, 0] * np.log(sep)
    for k in range(1, p):
        acc = acc + m[:, k] * ipow[:, k]
    out[:, 0] = acc
    sign = -1.0
    for n in range(1, p):
        acc = -m[:, 0] * ipow[:, n] / n
        for k in range(1, p):
            acc = acc + m[:, k] * ipow[:, n + k] * binom[n + k - 1, k - 1]
        out[:, n] = sign * acc
        sign = -sign
    return out


def l2l(coeffs, shift):
    """Re-center a local expansion at a point displaced by ``shift``.

    ``shift`` is z_new - z_old; the operation is an exact polynomial
    recentering.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    return l2l_batch(coeffs[None, :], np.asarray([shift], dtype=complex))[0]


def l2l_batch(coeffs, shifts):
    """Vectorized :func:`l2l` over rows (one shift per row)."""
    lc = np.asarray(coeffs, dtype=complex)
    shifts = np.asarray(shifts, dtype=complex)
    p = lc.shape[1]
    binom = _binomial_table(max(p - 1, 1))
    spow = np.empty((lc.shape[0], p), dtype=complex)
    spow[:, 0] = 1.0
    for k in range(1, p):
        spow[:, k] = spow[:, k - 1] * shifts
    out = np.zeros_like(lc)
    for n in range(p):
        acc = lc[:, n].copy()
        for k in range(n + 1, p):
            acc += lc[:, k] * spow[:, k - n] * binom[k, n]
        out[:, n] = acc
    return out


def l2p(coeffs, rel):
    """Evaluate the raw local expansion at offsets ``rel`` from its center.

    Returns Re(sum_n L_n rel^n); multiply by -1/(2 pi) for the physical
    potential.
    """
    lc = np.asarray(coeffs, dtype=complex)
    w = np.asarray(rel, dtype=complex)
    acc = np.full_like(w, lc[-1])
    for n in range(lc.size - 2, -1, -1):
        acc = acc * w + lc[n]
    return acc.real


def evaluate_local(coeffs_rows, rel):
    """Horner evaluation of per-point local expansions.

    ``coeffs_rows`` has one expansion per point (shape (n, p)); ``rel`` is
    the per-point offset from the matching expansion center.
    """
    lc = np.asarray(coeffs_rows, dtype=complex)
    w = np.asarray(rel, dtype=complex)
    acc = lc[:, -1].copy()
    for n in range(lc.shape[1] - 2, -1, -1):
        acc = acc * w + lc[:, n]
    return acc.real


def evaluate_multipole(coeffs, rel):
    """Evaluate the raw multipole expansion at offsets ``rel`` from center.

    Returns Re(M_0 log w + sum_{n>=1} M_n / w^n); valid for |w| larger than
    the source cluster radius.  Used as a series-side oracle in tests.
    """
    m = np.asarray(coeffs, dtype=complex)
    w = np.asarray(rel, dtype=complex)
    acc = m[0] * np.log(w)
    iw = 1.0 / w
    wpow = iw.copy()
    for n in range(1, m.size):
        acc = acc + m[n] * wpow
        wpow = wpow * iw
    return acc.real
