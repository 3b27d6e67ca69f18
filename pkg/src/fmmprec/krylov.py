"""Krylov solvers, baseline preconditioners and spectral estimation.

Operators are passed as sparse/dense matrices or as callables mapping a
vector to a vector; preconditioners are callables applying the inverse
action z = P^{-1} r.  Both solvers start from the zero iterate, record a
relative-residual history with ``history[0] == 1``, and stop after a
six-orders-of-magnitude reduction by default.

:func:`pcg` stops on the true relative residual ||b - A x|| / ||b||
maintained through the recurrence.  :func:`minres` is the preconditioned
Lanczos formulation and stops on its natural quantity, the preconditioned
residual norm ||b - A x||_{P^{-1}} relative to its initial value, which is
monotonically non-increasing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolveReport",
    "EigEstimate",
    "pcg",
    "minres",
    "ic0",
    "ic0_factor",
    "jacobi",
    "block_diag",
    "identity_preconditioner",
    "lanczos_extreme_eigs",
    "symmetry_defect",
]


@dataclass
class SolveReport:
    """Outcome of one Krylov solve."""

    iterations: int
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    setup_time: float = 0.0
    apply_time: float = 0.0
    breakdown: str | None = None

    @property
    def final_relres(self) -> float:
        return self.residual_history[-1]


@dataclass(frozen=True)
class EigEstimate:
    """Extreme eigenvalue estimates and the implied condition number."""

    lambda_min: float
    lambda_max: float
    kappa: float
    iterations: int = 0


def _matvec_of(a):
    if callable(a):
        return a
    if sp.issparse(a):
        return lambda x: a @ x
    mat = np.asarray(a)
    return lambda x: mat @ x


class _TimedApply:
    """Wrap a preconditioner to accumulate wall time spent in it."""

    def __init__(self, apply_fn):
        self.apply = apply_fn
        self.total = 0.0

    def __call__(self, r):
        t0 = time.perf_counter()
        z = self.apply(r)
        self.total += time.perf_counter() - t0
        return z


def pcg(a, b, preconditioner=None, tol: float = 1e-6, maxit: int = 20):
    """Preconditioned conjugate gradients for an SPD operator.

    Returns ``(x, SolveReport)``.  A non-positive curvature p^T A p flags a
    non-SPD operator in ``report.breakdown`` and stops the iteration.
    """
    amat = _matvec_of(a)
    prec = _TimedApply(preconditioner if preconditioner is not None
                       else (lambda r: r))
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    report = SolveReport(iterations=0, residual_history=[1.0])
    x = np.zeros_like(b)
    if nb == 0.0:
        report.converged = True
        return x, report

    r = b.copy()
    z = prec(r)
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, maxit + 1):
        ap = amat(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            report.breakdown = "nonpositive curvature: operator not SPD"
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        relres = np.linalg.norm(r) / nb
        report.residual_history.append(float(relres))
        report.iterations = k
        if relres <= tol:
            report.converged = True
            break
        z = prec(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    report.apply_time = prec.total
    return x, report


def minres(a, b, preconditioner=None, tol: float = 1e-6, maxit: int = 50):
    """Preconditioned MINRES for a symmetric (possibly indefinite) operator.

    The preconditioner must be symmetric positive definite.  Returns
    ``(x, SolveReport)`` with the preconditioned relative residual history.
    """
    amat = _matvec_of(a)
    prec = _TimedApply(preconditioner if preconditioner is not None
                       else (lambda r: r))
    b = np.asarray(b, dtype=float)
    report = SolveReport(iterations=0, residual_history=[1.0])
    x = np.zeros_like(b)
    if np.linalg.norm(b) == 0.0:
        report.converged = True
        return x, report

    # preconditioned Lanczos with the residual-space three-term recurrence
    r1 = b.copy()
    y = prec(r1)
    beta1 = float(r1 @ y)
    if beta1 <= 0.0:
        report.breakdown = "preconditioner not positive definite"
        return x, report
    beta1 = np.sqrt(beta1)

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    r2 = r1

    for k in range(1, maxit + 1):
        v = y / beta
        y = amat(v)
        if k >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = prec(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0.0:
            report.breakdown = "preconditioner not positive definite"
            break
        beta = np.sqrt(beta)

        # plane rotations folding the new tridiagonal column
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).tiny)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        relres = phibar / beta1
        report.residual_history.append(float(relres))
        report.iterations = k
        if relres <= tol:
            report.converged = True
            break
    report.apply_time = prec.total
    return x, report


def ic0_factor(a: sp.csr_matrix) -> sp.csr_matrix:
    """Incomplete Cholesky factor with zero fill.

    Returns lower-triangular L with exactly the lower sparsity of ``a``
    such that (L L^T)|_pattern == a|_pattern.  Raises on a non-positive
    pivot.
    """
    a = sp.csr_matrix(a)
    n = a.shape[0]
    low = sp.tril(a, format="csr")
    low.sort_indices()
    indptr, indices, data = low.indptr, low.indices, low.data.copy()

    # column-index lookup per row for pattern-restricted dot products
    rows = [indices[indptr[i]:indptr[i + 1]] for i in range(n)]
    vals = [data[indptr[i]:indptr[i + 1]] for i in range(n)]
    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        if rows[i].size == 0 or rows[i][-1] != i:
            raise ValueError("IC breakdown: missing diagonal entry")
        diag_pos[i] = rows[i].size - 1

    for i in range(n):
        ri = rows[i]
        vi = vals[i]
        for t in range(ri.size):
            k = ri[t]
            rk = rows[k]
            vk = vals[k]
            # dot of strictly-sub-diagonal overlaps of rows i and k
            acc = 0.0
            ii = jj = 0
            while ii < t and jj < rk.size - 1:
                ci = ri[ii]
                ck = rk[jj]
                if ci == ck:
                    acc += vi[ii] * vk[jj]
                    ii += 1
                    jj += 1
                elif ci < ck:
                    ii += 1
                else:
                    jj += 1
            if k < i:
                vi[t] = (vi[t] - acc) / vk[-1]
            else:  # diagonal
                piv = vi[t] - acc
                if piv <= 0.0:
                    raise ValueError("IC breakdown: nonpositive pivot")
                vi[t] = np.sqrt(piv)
    l_csr = sp.csr_matrix(
        (np.concatenate(vals), indices, indptr), shape=(n, n))
    return l_csr


def ic0(a: sp.csr_matrix):
    """IC(0) preconditioner: z = (L L^T)^{-1} r via two triangular solves."""
    l_csr = ic0_factor(a)
    lu = spla.splu(l_csr.tocsc(), permc_spec="NATURAL",
                   options={"DiagPivotThresh": 0.0, "SymmetricMode": True})

    def apply(r):
        y = lu.solve(r, trans="N")
        return lu.solve(y, trans="T")

    apply.factor = l_csr
    return apply


def jacobi(a):
    """Diagonal preconditioner z_i = r_i / a_ii."""
    d = np.asarray(a.diagonal() if sp.issparse(a) else np.diag(a),
                   dtype=float)
    if np.any(d == 0.0):
        raise ValueError("jacobi preconditioner needs a nonzero diagonal")
    inv = 1.0 / d

    def apply(r):
        return inv * r

    return apply


def identity_preconditioner():
    return lambda r: r


def block_diag(p_velocity, p_pressure, n_component: int, n_pressure: int):
    """Block-diagonal preconditioner for a velocity(2 comp) + pressure vector.

    Applies ``p_velocity`` to each velocity component slice and
    ``p_pressure`` to the pressure slice.
    """
    def apply(r):
        if r.size != 2 * n_component + n_pressure:
            raise ValueError("block preconditioner dimension mismatch")
        z = np.empty_like(r)
        z[:n_component] = p_velocity(r[:n_component])
        z[n_component:2 * n_component] = p_velocity(
            r[n_component:2 * n_component])
        z[2 * n_component:] = p_pressure(r[2 * n_component:])
        return z

    return apply


def lanczos_extreme_eigs(op, n: int, k: int = 40, inner=None,
                         seed: int = 0) -> EigEstimate:
    """Estimate extreme eigenvalues of ``op`` by k-step Lanczos.

    ``op`` must be self-adjoint in the inner product induced by ``inner``
    (an SPD operator; Euclidean when None).  This covers preconditioned
    spectra: for eigenvalues of P^{-1} A, pass ``op = P^{-1} A`` and
    ``inner = A``, in which product the composition is self-adjoint.  Full
    reorthogonalization keeps the Ritz values trustworthy at moderate k.
    """
    if k < 10:
        raise ValueError("k must be >= 10")
    opmat = _matvec_of(op)
    inmat = _matvec_of(inner) if inner is not None else (lambda x: x)
    rng = np.random.default_rng(seed)

    v = rng.standard_normal(n)
    bv = inmat(v)
    nrm = np.sqrt(float(v @ bv))
    # no in-place ops: inmat may hand back its argument unchanged
    v = v / nrm
    bv = bv / nrm

    basis = [v]
    bbasis = [bv]  # inner-product images, for reorthogonalization
    alphas: list[float] = []
    betas: list[float] = []
    steps = min(k, n)
    for j in range(steps):
        w = opmat(basis[j])
        alpha = float(w @ bbasis[j])
        alphas.append(alpha)
        w = w - alpha * basis[j]
        if j > 0:
            w = w - betas[j - 1] * basis[j - 1]
        # full reorthogonalization in the B-inner product
        for q, bq in zip(basis, bbasis):
            w = w - float(w @ bq) * q
        bw = inmat(w)
        beta2 = float(w @ bw)
        if beta2 <= 0.0 or not np.isfinite(beta2):
            break
        beta = np.sqrt(beta2)
        if beta < 1e-14 * max(abs(a) for a in alphas):
            break
        if j + 1 < steps:
            betas.append(beta)
            basis.append(w / beta)
            bbasis.append(bw / beta)
        else:
            break

    tmat = np.diag(alphas)
    if betas:
        off = np.asarray(betas[:len(alphas) - 1])
        tmat += np.diag(off, 1) + np.diag(off, -1)
    ritz = np.linalg.eigvalsh(tmat)
    lam_min = float(ritz[0])
    lam_max = float(ritz[-1])
    kappa = lam_max / lam_min if lam_min > 0 else np.inf
    return EigEstimate(lambda_min=lam_min, lambda_max=lam_max, kappa=kappa,
                       iterations=len(alphas))


def symmetry_defect(apply_fn, n: int, nsamples: int = 5,
                    seed: int = 0) -> float:
    """Relative asymmetry |<P r, s> - <r, P s>| of an operator's action.

    Diagnostic for nominally symmetric preconditioners applied inside CG;
    reported, never fatal.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(nsamples):
        r = rng.standard_normal(n)
        s = rng.standard_normal(n)
        pr = apply_fn(r)
        ps = apply_fn(s)
        num = abs(float(pr @ s) - float(r @ ps))
        den = abs(float(pr @ s)) + abs(float(r @ ps))
        if den > 0:
            worst = max(worst, num / den)
    return worst
