"""Square-root balanced truncation on low-rank Gramian factors."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ConstructionError, DegenerateSystemError, IllConditionedError
from .lyap import GramianFactor, controllability_factor, observability_factor

SIGMA_FLOOR = 1e-300
INVERT_RTOL = 1e-14


def _arr(f):
    return f.factor if isinstance(f, GramianFactor) else np.asarray(f, dtype=float)


@dataclass
class HankelDecomposition:
    singular_values: np.ndarray
    U1: np.ndarray
    V1: np.ndarray
    r: int
    U: np.ndarray = None
    V: np.ndarray = None

    @property
    def sigma1(self) -> np.ndarray:
        return self.singular_values[: self.r]


@dataclass
class ReducedModel:
    Er: np.ndarray
    Ar: np.ndarray
    Br: np.ndarray
    Cr: np.ndarray
    hankel_values: np.ndarray
    mu: np.ndarray = None
    method: str = "exact"
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        r = self.Ar.shape[0]
        if (self.Er.shape != (r, r) or self.Br.shape[0] != r or self.Cr.shape[1] != r):
            raise ConstructionError("inconsistent reduced matrix dimensions")

    @property
    def order(self) -> int:
        return self.Ar.shape[0]

    def pencil_eigenvalues(self) -> np.ndarray:
        return scipy.linalg.eigvals(self.Ar, self.Er)

    def matrices(self):
        return self.Er, self.Ar, self.Br, self.Cr


def choose_order(singular_values, tol) -> int:
    """Smallest ``r`` with ``sigma_{r+1} / sigma_1 < tol``; all of them if none.

    >>> choose_order([1.0, 1e-3, 1e-9], 1e-8)
    2
    """
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0:
        raise ConstructionError("empty singular value list")
    if not 0 < tol < 1:
        raise ConstructionError("tol must lie in (0, 1)")
    small = np.nonzero(s[1:] < tol * s[0])[0]
    return int(small[0] + 1) if small.size else int(s.size)


def error_bound(singular_values, r) -> float:
    """Twice the sum of the discarded Hankel singular values."""
    s = np.asarray(singular_values, dtype=float)
    if r > s.size or r < 0:
        raise ConstructionError(f"order {r} exceeds {s.size} singular values")
    return float(2.0 * s[r:].sum())


def _fix_signs(U, V):
    # first nonzero entry of each left vector made positive
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.nonzero(np.abs(col) > 1e-14 * np.abs(col).max())[0] if np.any(col) else []
        if len(nz) and col[nz[0]] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]
    return U, V


def svd_of_cross(M, tol=None, order=None) -> HankelDecomposition:
    """Sign-normalized thin SVD of a cross Gramian product with order selection."""
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    V = Vt.T.copy()
    U, V = _fix_signs(U.copy(), V)
    if s.size == 0 or s[0] < SIGMA_FLOOR:
        raise DegenerateSystemError("all Hankel singular values vanish")
    if order is not None:
        r = min(int(order), s.size)
        # never keep exactly-zero trailing values
        while r > 1 and s[r - 1] == 0.0:
            r -= 1
    elif tol is not None:
        r = choose_order(s, tol)
    else:
        r = int(np.sum(s > INVERT_RTOL * s[0]))
    return HankelDecomposition(s, U[:, :r], V[:, :r], r, U, V)


def hankel_svd(Y, E, X, tol=None, order=None) -> HankelDecomposition:
    """SVD of ``Y^T E X`` with the order picked by ``tol`` or fixed ``order``.

    With neither given every numerically nonzero value is kept.
    """
    Y, X = _arr(Y), _arr(X)
    if Y.shape[0] != E.shape[0] or X.shape[0] != E.shape[1]:
        raise ConstructionError("factor and E dimensions do not match")
    return svd_of_cross(Y.T @ (E @ X), tol=tol, order=order)


def projection_matrices(Y, X, hd: HankelDecomposition):
    """Balancing projections ``W = Y U1 S1^{-1/2}`` and ``T = X V1 S1^{-1/2}``."""
    s1 = hd.sigma1
    if s1[-1] < INVERT_RTOL * hd.singular_values[0]:
        raise IllConditionedError(
            f"sigma_r/sigma_1 = {s1[-1] / hd.singular_values[0]:.2e} is too small to invert")
    scale = 1.0 / np.sqrt(s1)
    W = _arr(Y) @ (hd.U1 * scale)
    T = _arr(X) @ (hd.V1 * scale)
    return W, T


def reduce(asm, W, T, hankel_values=None, method="exact") -> ReducedModel:
    """Petrov-Galerkin projection of an assembled system."""
    n = asm.E.shape[0]
    if W.shape[0] != n or T.shape[0] != n or W.shape[1] != T.shape[1]:
        raise ConstructionError("projection matrices do not match the system")
    Er = W.T @ (asm.E @ T)
    Ar = W.T @ (asm.A @ T)
    Br = W.T @ asm.B
    Cr = asm.C @ T
    hv = np.asarray(hankel_values) if hankel_values is not None else np.zeros(0)
    return ReducedModel(np.asarray(Er), np.asarray(Ar), np.asarray(Br), np.asarray(Cr),
                        hv, np.asarray(asm.mu), method)


def balanced_truncation(asm, X, Y, tol=None, order=None, method="exact") -> ReducedModel:
    """Full square-root pipeline on given factors."""
    hd = hankel_svd(Y, asm.E, X, tol=tol, order=order)
    W, T = projection_matrices(Y, X, hd)
    return reduce(asm, W, T, hd.singular_values, method=method)


class ExactModel:
    """Reference reduction: solve both Lyapunov equations at every query.

    ``reduce(mu)`` returns the ROM with the Hankel singular values attached,
    so the a-priori error bound is available.
    """

    method = "exact"

    def __init__(self, sys, adi_tol=1e-10, bt_tol=1e-8):
        self.sys = sys
        self.adi_tol = adi_tol
        self.bt_tol = bt_tol

    def factors(self, mu):
        from .system import assemble

        asm = assemble(self.sys, mu)
        return asm, controllability_factor(asm, self.adi_tol), observability_factor(asm, self.adi_tol)

    def reduce(self, mu) -> ReducedModel:
        t0 = time.perf_counter()
        asm, X, Y = self.factors(mu)
        t1 = time.perf_counter()
        rom = balanced_truncation(asm, X, Y, tol=self.bt_tol, method=self.method)
        rom.timings = {"lyapunov": t1 - t0, "rom": time.perf_counter() - t1}
        return rom
