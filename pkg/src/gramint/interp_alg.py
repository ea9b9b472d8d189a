"""Algebraic Gramian interpolation with an offline-online split.

Interpolated Gramians are non-negative combinations of the node Gramians,
``P(mu) = sum_j w_j(mu) X_j X_j^T``, realized by the concatenated factor
``[sqrt(w_1) X_1, ..., sqrt(w_q) X_q]``. Because the system matrices are
affine in ``mu``, every product ``Y_l^T E_i X_j`` (and its A, B, C
analogues) is parameter independent and computed once offline. The online
stage only weights and assembles the blocks of the active nodes.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bt import ReducedModel, svd_of_cross
from .exceptions import (ConstructionError, ExtrapolationError, IllConditionedError,
                         IngestionError, SolverError)
from .grids import TensorGrid
from .lyap import GramianFactor, controllability_factor, observability_factor
from .system import CoeffFn, assemble, read_matrix, write_matrix


@dataclass
class WeightVector:
    weights: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return np.nonzero(self.weights)[0]


def _hat_1d(axis, x, rtol=1e-12):
    span = max(axis[-1] - axis[0], 1.0)
    if x < axis[0] - rtol * span or x > axis[-1] + rtol * span:
        raise ExtrapolationError(f"{x} outside [{axis[0]}, {axis[-1]}]")
    w = np.zeros(axis.size)
    if axis.size == 1:
        w[0] = 1.0
        return w
    x = min(max(x, axis[0]), axis[-1])
    hit = np.nonzero(axis == x)[0]
    if hit.size:
        w[hit[0]] = 1.0
        return w
    k = int(np.searchsorted(axis, x)) - 1
    theta = (x - axis[k]) / (axis[k + 1] - axis[k])
    w[k] = 1.0 - theta
    w[k + 1] = theta
    return w


def hat_weights(grid: TensorGrid, mu) -> WeightVector:
    """Piecewise-linear (1-D) or bilinear (2-D) hat weights at ``mu``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.size != grid.dim:
        raise ConstructionError(f"grid has {grid.dim} axes, mu has {mu.size} entries")
    w = _hat_1d(grid.axes[0], mu[0])
    for axis, x in zip(grid.axes[1:], mu[1:]):
        w = np.outer(w, _hat_1d(axis, x)).ravel()
    return WeightVector(w)


def distance_weights(grid: TensorGrid, mu, power=2.0) -> WeightVector:
    """Normalized inverse-distance weights (global support).

    Kept for comparison with the hat weights; not used by default.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if not grid.contains(mu):
        raise ExtrapolationError(f"{mu.tolist()} outside the grid hull")
    d = np.linalg.norm(grid.nodes() - mu, axis=1)
    w = np.zeros(d.size)
    if np.any(d == 0):
        w[np.argmin(d)] = 1.0
    else:
        w = d ** -power
        w /= w.sum()
    return WeightVector(w)


WEIGHTS = {"hat": hat_weights, "distance": distance_weights}


def interp_factor(w: WeightVector, factors) -> np.ndarray:
    """Concatenated factor ``[sqrt(w_j) Z_j]`` over the active nodes.

    The product equals ``sum_j w_j Z_j Z_j^T``. Its column count is the sum
    of the active node ranks, so it is generally not of full column rank.
    """
    idx = w.active
    if idx.size == 0:
        raise ConstructionError("all weights are zero")
    parts = []
    for j in idx:
        Z = factors[j].factor if isinstance(factors[j], GramianFactor) else np.asarray(factors[j])
        parts.append(np.sqrt(w.weights[j]) * Z)
    return np.hstack(parts)


@dataclass
class OfflineData:
    """Everything the online stage needs, and nothing that depends on ``mu``.

    ``blocks_E[i][l][j]`` holds ``Y_l^T E_i X_j``; likewise ``blocks_A``.
    ``blocks_B[i][l]`` holds ``Y_l^T B_i`` and ``blocks_C[i][j]`` holds
    ``C_i X_j``. ``factors_x``/``factors_y`` are the node factors; they are
    kept for the direct path and persistence but never read online.
    """

    grid: TensorGrid
    coeffs: dict
    blocks_E: list
    blocks_A: list
    blocks_B: list
    blocks_C: list
    factors_x: list = None
    factors_y: list = None
    ranks_x: list = field(default_factory=list)
    ranks_y: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    bt_tol: float = 1e-8
    weights: str = "hat"

    method = "algebraic"

    def without_factors(self) -> "OfflineData":
        """Copy holding only the small blocks."""
        return replace(self, factors_x=None, factors_y=None)

    def reduce(self, mu) -> ReducedModel:
        return online_reduce(self, mu, tol=self.bt_tol, weights=self.weights)

    def block_count(self, family) -> int:
        blocks = {"E": self.blocks_E, "A": self.blocks_A}[family]
        return sum(len(row) for term in blocks for row in term)

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> Path:
        """One Matrix Market file per factor and per block plus ``index.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        q = self.grid.size
        if self.factors_x is not None:
            for j in range(q):
                write_matrix(directory / f"X_{j}.mtx", self.factors_x[j])
                write_matrix(directory / f"Y_{j}.mtx", self.factors_y[j])
        for fam, blocks in (("E", self.blocks_E), ("A", self.blocks_A)):
            for i, term in enumerate(blocks):
                for l in range(q):
                    for j in range(q):
                        write_matrix(directory / f"{fam}{i}_{l}_{j}.mtx", term[l][j])
        for i, term in enumerate(self.blocks_B):
            for l in range(q):
                write_matrix(directory / f"B{i}_{l}.mtx", term[l])
        for i, term in enumerate(self.blocks_C):
            for j in range(q):
                write_matrix(directory / f"C{i}_{j}.mtx", term[j])
        index = {
            "grid": self.grid.to_json(),
            "ranks_x": list(map(int, self.ranks_x)),
            "ranks_y": list(map(int, self.ranks_y)),
            "terms": {fam: [f.to_json() for f in fs] for fam, fs in self.coeffs.items()},
            "has_factors": self.factors_x is not None,
            "bt_tol": self.bt_tol,
            "weights": self.weights,
        }
        (directory / "index.json").write_text(json.dumps(index, indent=2))
        return directory

    @classmethod
    def load(cls, directory, with_factors=True) -> "OfflineData":
        directory = Path(directory)
        path = directory / "index.json"
        if not path.is_file():
            raise IngestionError(f"{path}: offline index not found")
        index = json.loads(path.read_text())
        grid = TensorGrid.from_json(index["grid"])
        q = grid.size
        coeffs = {fam: tuple(CoeffFn.from_json(f) for f in fs) for fam, fs in index["terms"].items()}

        def family(fam):
            return [[[read_matrix(directory / f"{fam}{i}_{l}_{j}.mtx") for j in range(q)]
                     for l in range(q)] for i in range(len(coeffs[fam]))]

        blocks_B = [[read_matrix(directory / f"B{i}_{l}.mtx") for l in range(q)]
                    for i in range(len(coeffs["B"]))]
        blocks_C = [[read_matrix(directory / f"C{i}_{j}.mtx") for j in range(q)]
                    for i in range(len(coeffs["C"]))]
        fx = fy = None
        if with_factors and index.get("has_factors"):
            fx = [read_matrix(directory / f"X_{j}.mtx") for j in range(q)]
            fy = [read_matrix(directory / f"Y_{j}.mtx") for j in range(q)]
        return cls(grid, coeffs, family("E"), family("A"), blocks_B, blocks_C, fx, fy,
                   index["ranks_x"], index["ranks_y"], bt_tol=index.get("bt_tol", 1e-8),
                   weights=index.get("weights", "hat"))


def node_factors(sys, grid: TensorGrid, adi_tol=1e-10, **kwargs):
    """Low-rank controllability and observability factors at every node."""
    xs, ys = [], []
    for j, mu in enumerate(grid.nodes()):
        asm = assemble(sys, mu)
        try:
            xs.append(controllability_factor(asm, adi_tol, **kwargs))
            ys.append(observability_factor(asm, adi_tol, **kwargs))
        except SolverError as exc:
            exc.args = (f"training node {j} (mu={mu.tolist()}): {exc}",) + exc.args[1:]
            raise
    return xs, ys


def offline_precompute(sys, grid: TensorGrid, adi_tol=1e-10, factors=None, bt_tol=1e-8,
                       weights="hat") -> OfflineData:
    """Solve the Lyapunov equations at the nodes and store every block.

    ``factors`` may supply precomputed ``(xs, ys)`` node factors.
    """
    if grid.dim != sys.param_dim:
        raise ConstructionError("grid dimension differs from the system's parameter count")
    t0 = time.perf_counter()
    if factors is None:
        xs, ys = node_factors(sys, grid, adi_tol)
    else:
        xs, ys = factors
    t1 = time.perf_counter()
    X = [x.factor if isinstance(x, GramianFactor) else np.asarray(x) for x in xs]
    Y = [y.factor if isinstance(y, GramianFactor) else np.asarray(y) for y in ys]
    q = grid.size

    def pair_blocks(terms):
        out = []
        for _, M in terms:
            MX = [np.asarray(M @ Xj) for Xj in X]
            out.append([[Y[l].T @ MX[j] for j in range(q)] for l in range(q)])
        return out

    blocks_E = pair_blocks(sys.e_terms)
    blocks_A = pair_blocks(sys.a_terms)
    blocks_B = [[Y[l].T @ np.asarray(Bi) for l in range(q)] for _, Bi in sys.b_terms]
    blocks_C = [[np.asarray(Ci @ X[j]) for j in range(q)] for _, Ci in sys.c_terms]
    t2 = time.perf_counter()
    coeffs = {fam: sys.coeffs(fam) for fam in ("E", "A", "B", "C")}
    return OfflineData(grid, coeffs, blocks_E, blocks_A, blocks_B, blocks_C, X, Y,
                       [x.shape[1] for x in X], [y.shape[1] for y in Y],
                       timings={"lyapunov": t1 - t0, "prepare": t2 - t1},
                       bt_tol=bt_tol, weights=weights)


def _weighted_pairs(term_blocks, coeffs, mu, idx, sw):
    total = None
    for f, blocks in zip(coeffs, term_blocks):
        c = f(mu)
        rows = [np.hstack([(sw[a] * sw[b] * c) * blocks[l][j] for b, j in enumerate(idx)])
                for a, l in enumerate(idx)]
        M = np.vstack(rows)
        total = M if total is None else total + M
    return total


def online_reduce(off: OfflineData, mu, tol=None, order=None, weights="hat",
                  coeffs=None) -> ReducedModel:
    """Reduced model at ``mu`` from the precomputed blocks alone.

    Only the blocks of nodes with nonzero weight are touched, so the cost
    depends on the node ranks but not on the state dimension.
    """
    t0 = time.perf_counter()
    if tol is None and order is None:
        tol = off.bt_tol
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    coeffs = off.coeffs if coeffs is None else coeffs
    w = WEIGHTS[weights](off.grid, mu)
    idx = w.active
    sw = np.sqrt(w.weights[idx])
    M_E = _weighted_pairs(off.blocks_E, coeffs["E"], mu, idx, sw)
    M_A = _weighted_pairs(off.blocks_A, coeffs["A"], mu, idx, sw)
    BY = sum(f(mu) * np.vstack([sw[a] * blocks[l] for a, l in enumerate(idx)])
             for f, blocks in zip(coeffs["B"], off.blocks_B))
    CX = sum(f(mu) * np.hstack([sw[b] * blocks[j] for b, j in enumerate(idx)])
             for f, blocks in zip(coeffs["C"], off.blocks_C))
    t1 = time.perf_counter()
    hd = svd_of_cross(M_E, tol=tol, order=order)
    s1 = hd.sigma1
    if s1[-1] < 1e-14 * hd.singular_values[0]:
        raise IllConditionedError("retained Hankel singular value too small")
    scale = 1.0 / np.sqrt(s1)
    L = (hd.U1 * scale).T
    R = hd.V1 * scale
    Er = L @ M_E @ R
    Ar = L @ M_A @ R
    Br = L @ BY
    Cr = CX @ R
    rom = ReducedModel(Er, Ar, Br, Cr, hd.singular_values, mu, "algebraic")
    rom.timings = {"interpolation": t1 - t0, "rom": time.perf_counter() - t1}
    return rom


def direct_reduce(sys, off: OfflineData, mu, tol=None, order=None, weights="hat") -> ReducedModel:
    """Same reduced model via the n-sized route: concatenated factors,
    Hankel SVD of ``Y^T E(mu) X``, projection matrices, projection."""
    from .bt import balanced_truncation

    if off.factors_x is None:
        raise ConstructionError("offline data was stripped of its factors")
    if tol is None and order is None:
        tol = off.bt_tol
    w = WEIGHTS[weights](off.grid, mu)
    X = interp_factor(w, off.factors_x)
    Y = interp_factor(w, off.factors_y)
    asm = assemble(sys, mu)
    return balanced_truncation(asm, X, Y, tol=tol, order=order, method="algebraic")
