"""Generalized Lyapunov equations and low-rank Gramian factors.

Both solvers treat the controllability form::

    E P A^T + A P E^T = -R R^T

The observability equation ``E^T Q A + A^T Q E = -C^T C`` is obtained by
passing ``(E^T, A^T, C^T)``; see :func:`observability_factor`.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConstructionError, ConvergenceError, SizeGuardError, SolverError

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
COMPRESS_RTOL = 1e-14


@dataclass
class GramianFactor:
    """Tall factor ``Z`` of a Gramian ``P = Z Z^T``."""

    factor: np.ndarray
    side: str = "controllability"
    residual_norm: float = 0.0
    residual_history: list = field(default_factory=list)
    steps: int = 0

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    @property
    def n(self) -> int:
        return self.factor.shape[0]

    def gramian(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def has_full_rank(self, rtol=1e-14) -> bool:
        s = np.linalg.svd(self.factor, compute_uv=False)
        return bool(s.size and s[-1] > rtol * s[0])


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def _as_factor(f):
    return f.factor if isinstance(f, GramianFactor) else np.asarray(f, dtype=float)


# ---------------------------------------------------------------------------
# dense solver


def solve_lyapunov_dense(E, A, rhs) -> np.ndarray:
    """Dense solution of ``E P A^T + A P E^T = -rhs rhs^T``.

    The pencil is brought to standard form with an LU factorization of
    ``E`` and the resulting equation is solved by the Schur-based
    Bartels-Stewart method. Meant for desk-scale problems only.
    """
    E, A = _dense(E), _dense(A)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    n = A.shape[0]
    if n > DENSE_LIMIT:
        raise SizeGuardError(f"dense Lyapunov solver limited to n <= {DENSE_LIMIT}, got {n}")
    if E.shape != (n, n) or rhs.shape[0] != n:
        raise ConstructionError("incompatible dimensions")
    with warnings.catch_warnings():
        # a singular E is reported below as a SolverError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(E, check_finite=True)
    udiag = np.abs(np.diag(lu))
    if udiag.min() <= 1e-14 * max(udiag.max(), np.finfo(float).tiny):
        raise SolverError("E is singular")
    At = scipy.linalg.lu_solve((lu, piv), A)
    Bt = scipy.linalg.lu_solve((lu, piv), rhs)
    ev = np.linalg.eigvals(At)
    if np.any(ev.real >= 0):
        raise SolverError(f"pencil is not stable (max real part {ev.real.max():.3e})")
    P = scipy.linalg.solve_continuous_lyapunov(At, -Bt @ Bt.T)
    return 0.5 * (P + P.T)


def lyapunov_residual(E, A, rhs, P) -> float:
    """Relative Frobenius residual of a dense Gramian candidate."""
    E, A = _dense(E), _dense(A)
    rhs = np.asarray(rhs, dtype=float).reshape(A.shape[0], -1)
    RR = rhs @ rhs.T
    R = E @ P @ A.T + A @ P @ E.T + RR
    return float(np.linalg.norm(R) / np.linalg.norm(RR))


# ---------------------------------------------------------------------------
# ADI shifts


def _arnoldi_ritz(apply_op, v0, steps):
    """Ritz values of ``apply_op`` from a ``steps``-dimensional Krylov space."""
    n = v0.size
    steps = min(steps, n)
    V = np.zeros((n, steps + 1))
    H = np.zeros((steps + 1, steps))
    V[:, 0] = v0 / np.linalg.norm(v0)
    m = steps
    for j in range(steps):
        w = apply_op(V[:, j])
        for _ in range(2):  # reorthogonalize once
            h = V[:, : j + 1].T @ w
            w = w - V[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= 1e-12 * np.linalg.norm(H[: j + 2, j]):
            m = j + 1
            break
        V[:, j + 1] = w / H[j + 1, j]
    return np.linalg.eigvals(H[:m, :m])


def _adi_ratio(shifts, points):
    """Pointwise ``prod |(t - conj p)/(t + p)|`` over ``shifts``."""
    val = np.ones(points.size)
    for p in shifts:
        val *= np.abs((points - np.conj(p)) / (points + p))
    return val


def _select_shifts(candidates, count):
    """Greedy min-max selection of ADI shifts from a candidate spectrum."""
    cand = np.asarray(candidates, dtype=complex)
    cand = cand[cand.real < 0]
    if cand.size == 0:
        raise SolverError("no stable Ritz values available for ADI shifts")
    # canonical ordering keeps the selection deterministic
    cand = cand[np.lexsort((cand.imag, cand.real))]

    def closed(p):
        if abs(p.imag) <= 1e-12 * abs(p):
            return [complex(p.real, 0.0)]
        return [complex(p.real, abs(p.imag)), complex(p.real, -abs(p.imag))]

    best, best_val = None, np.inf
    for p in cand:
        val = _adi_ratio(closed(p), cand).max()
        if val < best_val:
            best, best_val = p, val
    shifts = closed(best)
    while len(shifts) < count:
        ratio = _adi_ratio(shifts, cand)
        t = cand[int(np.argmax(ratio))]
        if ratio.max() <= 0:
            break
        shifts.extend(closed(t))
    return shifts


def penzl_shifts(E, A, num=10, krylov_plus=30, krylov_minus=30, dense_below=60):
    """Heuristic ADI shifts for the pencil ``(A, E)``.

    Ritz values of ``E^{-1} A`` and of its inverse serve as a spectrum
    sample; ``num`` shifts are then chosen greedily to minimize the ADI
    rational function on that sample. Small problems use the exact pencil
    spectrum instead of Ritz values.
    """
    n = A.shape[0]
    if n <= dense_below:
        cand = scipy.linalg.eigvals(_dense(A), _dense(E))
        cand = cand[np.isfinite(cand)]
    else:
        lu_E = _factorize(E)
        lu_A = _factorize(A)
        v0 = np.ones(n)
        fwd = _arnoldi_ritz(lambda v: lu_E(A @ v), v0, krylov_plus)
        inv = _arnoldi_ritz(lambda v: lu_A(E @ v), v0, krylov_minus)
        inv = inv[np.abs(inv) > 0]
        cand = np.concatenate([fwd, 1.0 / inv])
    return _select_shifts(cand, num)


# ---------------------------------------------------------------------------
# low-rank ADI


def _factorize(M):
    """Return a solve callable for ``M`` (sparse LU or dense LU)."""
    if sp.issparse(M):
        lu = spla.splu(sp.csc_matrix(M))
        return lu.solve
    lu = scipy.linalg.lu_factor(M)
    return lambda b: scipy.linalg.lu_solve(lu, b)


def compress_columns(Z, rtol=COMPRESS_RTOL) -> np.ndarray:
    """Column compression ``Z -> Q U_k S_k`` dropping singular values below
    ``rtol * s_max``; ``Z Z^T`` changes by at most that cutoff squared."""
    if Z.shape[1] == 0:
        return Z
    Q, R = np.linalg.qr(Z, mode="reduced")
    U, s, _ = np.linalg.svd(R)
    k = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return Q @ (U[:, :k] * s[:k])


def solve_lyapunov_lradi(E, A, rhs, tol=1e-10, shifts=None, max_steps=200,
                         num_shifts=10, compress_every=10, side="controllability") -> GramianFactor:
    """Low-rank ADI for ``E P A^T + A P E^T = -rhs rhs^T``.

    Uses the residual-factor formulation: after each step the residual is
    ``W W^T`` with a thin ``W``, so ``||W^T W||_F`` gives the exact residual
    norm. Complex conjugate shift pairs are merged into one real double
    step, keeping the factor real.

    Parameters
    ----------
    E, A
        Pencil matrices, dense or sparse.
    rhs
        Right-hand side factor with ``s`` columns.
    tol
        Stop once the relative residual ``||R||_F / ||rhs rhs^T||_F`` is below.
    shifts
        Optional explicit shift list (must be closed under conjugation).
    max_steps
        Step cap; exceeding it raises :class:`ConvergenceError`.
    compress_every
        Column compression period in steps.

    Returns
    -------
    GramianFactor
    """
    if not 0 < tol < 1:
        raise ConstructionError("tol must lie in (0, 1)")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    n = A.shape[0]
    if E.shape != (n, n) or rhs.shape[0] != n:
        raise ConstructionError("incompatible dimensions")
    if shifts is None:
        shifts = penzl_shifts(E, A, num=num_shifts)
    shifts = [complex(p) for p in shifts]
    if any(p.real >= 0 for p in shifts):
        raise SolverError("ADI shifts must have negative real part")

    W = rhs.copy()
    norm0 = np.linalg.norm(rhs.T @ rhs)
    if norm0 == 0:
        raise SolverError("right-hand side is zero")
    blocks = []
    history = [1.0]
    solvers = {}

    def solve(p, b):
        if p not in solvers:
            solvers[p] = _factorize(A + p.real * E if p.imag == 0 else A + p * E)
        return solvers[p](b if p.imag == 0 else b.astype(complex))

    step = 0
    idx = 0
    while step < max_steps:
        p = shifts[idx % len(shifts)]
        if p.imag == 0:
            V = solve(p, W)
            W = W - 2.0 * p.real * (E @ V)
            blocks.append(np.sqrt(-2.0 * p.real) * V)
            idx += 1
        else:
            if np.conj(p) != shifts[(idx + 1) % len(shifts)]:
                raise SolverError("complex shifts must come in adjacent conjugate pairs")
            V = solve(p, W)
            gamma = 2.0 * np.sqrt(-p.real)
            delta = p.real / p.imag
            Vr = V.real + delta * V.imag
            W = W + gamma ** 2 * (E @ Vr)
            blocks.append(gamma * Vr)
            blocks.append(gamma * np.sqrt(delta ** 2 + 1.0) * V.imag)
            idx += 2
        step += 1
        res = float(np.linalg.norm(W.T @ W) / norm0)
        history.append(res)
        if compress_every and step % compress_every == 0:
            blocks = [compress_columns(np.hstack(blocks))]
        if res < tol:
            Z = compress_columns(np.hstack(blocks))
            return GramianFactor(Z, side=side, residual_norm=res,
                                 residual_history=history, steps=step)
    raise ConvergenceError(
        f"low-rank ADI did not reach tol={tol:g} in {max_steps} steps "
        f"(last residual {history[-1]:.3e})", history[-1])


def controllability_factor(asm, tol=1e-10, **kwargs) -> GramianFactor:
    """Low-rank factor ``X`` with ``E X X^T A^T + A X X^T E^T = -B B^T``."""
    return solve_lyapunov_lradi(asm.E, asm.A, asm.B, tol=tol, side="controllability", **kwargs)


def observability_factor(asm, tol=1e-10, **kwargs) -> GramianFactor:
    """Low-rank factor ``Y`` with ``E^T Y Y^T A + A^T Y Y^T E = -C^T C``."""
    Et = asm.E.T.tocsr() if sp.issparse(asm.E) else np.asarray(asm.E).T
    At = asm.A.T.tocsr() if sp.issparse(asm.A) else np.asarray(asm.A).T
    return solve_lyapunov_lradi(Et, At, np.asarray(asm.C).T, tol=tol, side="observability", **kwargs)


def truncate_factor(f, rank=None, tol=None) -> GramianFactor:
    """Best low-rank approximation of the Gramian ``Z Z^T``.

    With the thin SVD ``Z = U S V^T`` the returned factor is ``U_1 S_1``,
    keeping either the leading ``rank`` columns or every singular value
    ``>= tol * s_1``.
    """
    if (rank is None) == (tol is None):
        raise ConstructionError("give exactly one of rank or tol")
    Z = _as_factor(f)
    U, s, _ = np.linalg.svd(Z, full_matrices=False)
    if rank is not None:
        if rank > Z.shape[1] or rank < 1:
            raise ConstructionError(f"cannot truncate rank {Z.shape[1]} factor to rank {rank}")
        k = int(rank)
    else:
        if not 0 < tol < 1:
            raise ConstructionError("tol must lie in (0, 1)")
        k = int(np.sum(s >= tol * s[0]))
    out = U[:, :k] * s[:k]
    if isinstance(f, GramianFactor):
        return GramianFactor(out, side=f.side, residual_norm=f.residual_norm,
                             residual_history=list(f.residual_history), steps=f.steps)
    return GramianFactor(out)
