"""Quotient geometry of fixed-rank PSD matrices.

A point of S+(k, n) is the class ``[Y] = {Y Q : Q orthogonal}`` of a
full-rank ``n x k`` factor ``Y``; points are handled through any
representative. Tangent vectors are horizontal lifts ``xi`` at ``Y``,
characterized by ``Y^T xi`` being symmetric. With the metric inherited
from the Euclidean one::

    Exp_Y(xi)  = Y + xi
    Log_Y1(Y2) = Y2 Q^T - Y1,   Q = polar factor of Y1^T Y2
"""
from __future__ import annotations

import numpy as np

from .exceptions import ConstructionError, IllDefinedPolarError, OffManifoldError

POLAR_RTOL = 1e-12
RANK_RTOL = 1e-14


def _factor(y):
    y = getattr(y, "factor", y)
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ConstructionError("a manifold point is an n x k matrix")
    return y


def check_point(y, rtol=RANK_RTOL) -> np.ndarray:
    """Return ``y`` as an array, raising if it is not of full column rank."""
    y = _factor(y)
    s = np.linalg.svd(y, compute_uv=False)
    if s.size == 0 or s[-1] <= rtol * s[0]:
        raise OffManifoldError("factor is not of full column rank")
    return y


def polar_orthogonal_factor(M, rtol=POLAR_RTOL) -> np.ndarray:
    """Orthogonal ``Q`` of the polar decomposition ``M = Q H`` (via SVD).

    ``Q`` is the orthogonal matrix closest to ``M`` in Frobenius norm; it is
    unique only for nonsingular ``M``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConstructionError("polar decomposition needs a square matrix")
    U, s, Vt = np.linalg.svd(M)
    if s[-1] <= rtol * s[0]:
        raise IllDefinedPolarError(
            f"polar factor not unique: sigma_min/sigma_max = {s[-1] / s[0]:.2e}")
    return U @ Vt


def log_map(y1, y2) -> np.ndarray:
    """Horizontal lift at ``y1`` of the logarithm of ``[y2]``."""
    y1, y2 = _factor(y1), _factor(y2)
    if y1.shape != y2.shape:
        raise ConstructionError(f"shape mismatch {y1.shape} vs {y2.shape}")
    Q = polar_orthogonal_factor(y1.T @ y2)
    return y2 @ Q.T - y1


def exp_map(base, lift) -> np.ndarray:
    """Representative ``base + lift`` of the exponential."""
    out = _factor(base) + np.asarray(lift, dtype=float)
    s = np.linalg.svd(out, compute_uv=False)
    if s[-1] <= RANK_RTOL * s[0]:
        raise OffManifoldError("exponential left the fixed-rank manifold")
    return out


def geodesic(y1, y2, t) -> np.ndarray:
    """Point at time ``t`` on the geodesic from ``[y1]`` (t=0) to ``[y2]`` (t=1).

    The returned representative is aligned with ``y1``.
    """
    y1 = _factor(y1)
    return exp_map(y1, t * log_map(y1, y2))


def distance(y1, y2) -> float:
    return float(np.linalg.norm(log_map(y1, y2)))


def is_horizontal(base, lift, rtol=1e-10) -> bool:
    S = _factor(base).T @ np.asarray(lift)
    scale = max(np.linalg.norm(lift) * np.linalg.norm(base), np.finfo(float).tiny)
    return bool(np.linalg.norm(S - S.T) <= rtol * scale)


def same_class_error(y1, y2) -> float:
    """Relative Frobenius distance of the products ``y y^T``."""
    y1, y2 = _factor(y1), _factor(y2)
    P2 = y2 @ y2.T
    return float(np.linalg.norm(y1 @ y1.T - P2) / np.linalg.norm(P2))
