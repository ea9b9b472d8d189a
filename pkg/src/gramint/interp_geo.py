"""Interpolation of Gramian factors on the fixed-rank PSD manifold.

Unlike the algebraic scheme, every interpolant here is itself a rank-``k``
factor, so the reduced order stays controlled. The building blocks are:

* De Casteljau curves, evaluated by repeated geodesic averaging;
* tangent-space curves: natural cubic splines through the log-lifts of the
  data at one base point, mapped back by the exponential;
* blended curves, which average the two tangent-space curves anchored at
  the ends of each segment with a smoothstep weight (one parameter);
* piecewise cubic Bezier surfaces on a tensor grid (two parameters).
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .bt import ReducedModel, balanced_truncation
from .exceptions import (ConstructionError, ExtrapolationError, GramintError,
                         IllDefinedPolarError, IngestionError)
from .grids import TensorGrid
from .lyap import GramianFactor, truncate_factor
from .manifold import POLAR_RTOL, check_point, exp_map, geodesic, log_map
from .system import assemble, read_matrix, write_matrix

DEGREE = 3
# safety factor over the polar threshold when picking the common rank
ADMISSIBLE_RTOL = 10 * POLAR_RTOL


def bernstein(K, i, t) -> float:
    """Bernstein basis polynomial ``binom(K, i) t^i (1 - t)^(K - i)``.

    >>> bernstein(3, 1, 0.5)
    0.375
    """
    if not 0 <= i <= K:
        raise ConstructionError(f"index {i} outside 0..{K}")
    return comb(K, i) * t**i * (1.0 - t) ** (K - i)


def smoothstep(s):
    return s * s * (3.0 - 2.0 * s)


def _unit(t, name="t"):
    if not -1e-12 <= t <= 1 + 1e-12:
        raise ExtrapolationError(f"{name}={t} outside [0, 1]")
    return min(max(float(t), 0.0), 1.0)


def decasteljau_curve(controls, t) -> np.ndarray:
    """Bezier curve on the manifold at ``t`` in [0, 1]."""
    t = _unit(t)
    pts = [np.asarray(getattr(c, "factor", c), dtype=float) for c in controls]
    if not pts:
        raise ConstructionError("no control points")
    rnd = 0
    while len(pts) > 1:
        rnd += 1
        nxt = []
        for i in range(len(pts) - 1):
            try:
                nxt.append(geodesic(pts[i], pts[i + 1], t))
            except IllDefinedPolarError as exc:
                raise IllDefinedPolarError(f"De Casteljau round {rnd}, pair {i}: {exc}") from exc
        pts = nxt
    return pts[0]


def _as_points(points):
    pts = [np.asarray(getattr(p, "factor", p), dtype=float) for p in points]
    shape = pts[0].shape
    if any(p.shape != shape for p in pts):
        raise ConstructionError("all data points must share the shape n x k")
    return [check_point(p) for p in pts]


@dataclass
class CurveData:
    nodes: np.ndarray
    points: list

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).ravel()
        if self.nodes.size < 2 or np.any(np.diff(self.nodes) <= 0):
            raise ConstructionError("need at least two strictly increasing nodes")
        if len(self.points) != self.nodes.size:
            raise ConstructionError("one data point per node required")
        self.points = _as_points(self.points)

    @property
    def q(self) -> int:
        return self.nodes.size - 1

    @property
    def shape(self) -> tuple:
        return self.points[0].shape

    def segment(self, t) -> int:
        lo, hi = self.nodes[0], self.nodes[-1]
        tol = 1e-12 * max(hi - lo, 1.0)
        if t < lo - tol or t > hi + tol:
            raise ExtrapolationError(f"t={t} outside [{lo}, {hi}]")
        return int(np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, self.q - 1))


class TangentSpline:
    """Natural cubic spline through the log-lifts of the data at one node."""

    def __init__(self, data: CurveData, base_index: int):
        if not 0 <= base_index <= data.q:
            raise ConstructionError(f"base index {base_index} outside 0..{data.q}")
        self.data = data
        self.base_index = base_index
        self.base = data.points[base_index]
        lifts = []
        for i, p in enumerate(data.points):
            if i == base_index:
                lifts.append(np.zeros_like(p))
                continue
            try:
                lifts.append(log_map(self.base, p))
            except IllDefinedPolarError as exc:
                raise IllDefinedPolarError(f"log of node {i} at base {base_index}: {exc}") from exc
        self.spline = CubicSpline(data.nodes, np.stack(lifts), axis=0, bc_type="natural")

    def lift(self, t) -> np.ndarray:
        self.data.segment(t)
        return self.spline(t)

    def __call__(self, t) -> np.ndarray:
        return exp_map(self.base, self.lift(t))


def tangent_space_curve(data: CurveData, base_index: int, t) -> np.ndarray:
    return TangentSpline(data, base_index)(t)


class BlendedCurve:
    """C1 interpolating curve blending the tangent splines of adjacent nodes.

    On ``[t_i, t_{i+1}]`` the value is the point at ``beta(s)`` on the
    geodesic between the splines anchored at ``d_i`` and ``d_{i+1}``, with
    ``beta`` the smoothstep weight.
    """

    def __init__(self, data: CurveData):
        self.data = data
        self._splines = {}

    def spline(self, i) -> TangentSpline:
        if i not in self._splines:
            self._splines[i] = TangentSpline(self.data, i)
        return self._splines[i]

    def __call__(self, t) -> np.ndarray:
        t = float(t)
        i = self.data.segment(t)
        t0, t1 = self.data.nodes[i], self.data.nodes[i + 1]
        s = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        if s == 0.0:
            return self.data.points[i].copy()
        if s == 1.0:
            return self.data.points[i + 1].copy()
        return geodesic(self.spline(i)(t), self.spline(i + 1)(t), smoothstep(s))

    def save(self, directory) -> Path:
        return _save_points(directory, "curve", {"nodes": self.data.nodes.tolist()},
                            {f"d{i}": p for i, p in enumerate(self.data.points)})

    @classmethod
    def load(cls, directory) -> "BlendedCurve":
        index, mats = _load_points(directory, "curve")
        nodes = index["nodes"]
        return cls(CurveData(nodes, [mats[f"d{i}"] for i in range(len(nodes))]))


def blended_curve(data: CurveData, t) -> np.ndarray:
    return BlendedCurve(data)(t)


def _spline_bezier_matrix(nodes) -> np.ndarray:
    """Linear map from node values to the cubic Bezier control values of
    the natural interpolating spline, shape ``(3q + 1, q + 1)``."""
    nodes = np.asarray(nodes, dtype=float)
    q = nodes.size - 1
    eye = np.eye(q + 1)
    slopes = CubicSpline(nodes, eye, axis=0, bc_type="natural")(nodes, 1)
    C = np.zeros((3 * q + 1, q + 1))
    for k in range(q):
        h = nodes[k + 1] - nodes[k]
        C[3 * k] = eye[k]
        C[3 * k + 1] = eye[k] + h * slopes[k] / 3.0
        C[3 * k + 2] = eye[k + 1] - h * slopes[k + 1] / 3.0
    C[3 * q] = eye[q]
    return C


@dataclass
class BezierSurface:
    """Piecewise cubic Bezier surface on a 2-D tensor grid.

    ``control[I][J]`` is the global control net of shape
    ``(3 q1 + 1) x (3 q2 + 1)``; patch ``(k, l)`` uses rows ``3k..3k+3`` and
    columns ``3l..3l+3``, so neighbouring patches share their edge controls.
    """

    axes: tuple
    control: list
    degree: int = DEGREE
    timings: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple:
        return len(self.control), len(self.control[0])

    @property
    def patches(self) -> tuple:
        return len(self.axes[0]) - 1, len(self.axes[1]) - 1

    def patch_controls(self, k, l) -> list:
        K = self.degree
        return [[self.control[K * k + i][K * l + j] for j in range(K + 1)] for i in range(K + 1)]

    def locate(self, t1, t2):
        out = []
        for ax, t, name in zip(self.axes, (t1, t2), ("t1", "t2")):
            tol = 1e-12 * max(ax[-1] - ax[0], 1.0)
            if t < ax[0] - tol or t > ax[-1] + tol:
                raise ExtrapolationError(f"{name}={t} outside [{ax[0]}, {ax[-1]}]")
            k = int(np.clip(np.searchsorted(ax, t, side="right") - 1, 0, len(ax) - 2))
            out.append((k, min(max((t - ax[k]) / (ax[k + 1] - ax[k]), 0.0), 1.0)))
        return out

    def __call__(self, t1, t2, first="t1") -> np.ndarray:
        (k, u), (l, v) = self.locate(float(t1), float(t2))
        b = self.patch_controls(k, l)
        if first == "t1":
            rows = [decasteljau_curve([b[i][j] for i in range(self.degree + 1)], u)
                    for j in range(self.degree + 1)]
            return decasteljau_curve(rows, v)
        if first == "t2":
            cols = [decasteljau_curve(b[i], v) for i in range(self.degree + 1)]
            return decasteljau_curve(cols, u)
        raise ConstructionError(f"unknown direction {first!r}")

    def worst_polar_ratio(self) -> float:
        """Smallest polar ratio over neighbouring control points."""
        I, J = self.shape
        b = self.control
        ratios = [polar_ratio(b[i][j], b[i + 1][j]) for i in range(I - 1) for j in range(J)]
        ratios += [polar_ratio(b[i][j], b[i][j + 1]) for i in range(I) for j in range(J - 1)]
        return min(ratios)

    def save(self, directory) -> Path:
        I, J = self.shape
        mats = {f"b{i}_{j}": self.control[i][j] for i in range(I) for j in range(J)}
        index = {"axes": [list(map(float, a)) for a in self.axes], "degree": self.degree,
                 "net": [I, J], "patches": list(self.patches)}
        return _save_points(directory, "surface", index, mats)

    @classmethod
    def load(cls, directory) -> "BezierSurface":
        index, mats = _load_points(directory, "surface")
        I, J = index["net"]
        control = [[mats[f"b{i}_{j}"] for j in range(J)] for i in range(I)]
        return cls(tuple(np.asarray(a) for a in index["axes"]), control, index["degree"])


def fit_bezier_surface(axes, data) -> BezierSurface:
    """C1 piecewise cubic Bezier surface interpolating ``data[a][b]``.

    In flat space the control net is that of the tensor-product natural
    cubic spline, i.e. the interpolant of least mean squared second
    derivative. On the manifold each control point is computed in the
    tangent space of its nearest data node and mapped back; control points
    sitting on nodes are the data themselves, so the surface interpolates
    exactly.
    """
    t0 = time.perf_counter()
    ax1, ax2 = (np.asarray(a, dtype=float).ravel() for a in axes)
    q1, q2 = ax1.size - 1, ax2.size - 1
    if q1 < 1 or q2 < 1:
        raise ConstructionError("a surface needs at least two nodes per axis")
    for ax in (ax1, ax2):
        if np.any(np.diff(ax) <= 0):
            raise ConstructionError("axes must be strictly increasing")
    if len(data) != q1 + 1 or any(len(row) != q2 + 1 for row in data):
        raise ConstructionError(f"incomplete data grid: expected {q1 + 1} x {q2 + 1} points")
    pts = [_as_points(row) for row in data]
    if len({p.shape for row in pts for p in row}) != 1:
        raise ConstructionError("all data points must share the shape n x k")
    C1, C2 = _spline_bezier_matrix(ax1), _spline_bezier_matrix(ax2)

    lifts = {}

    def lifts_at(a, b):
        # log-lifts of the whole grid at node (a, b), cached per anchor
        if (a, b) not in lifts:
            base = pts[a][b]
            L = np.empty((q1 + 1, q2 + 1) + base.shape)
            for i in range(q1 + 1):
                for j in range(q2 + 1):
                    if (i, j) == (a, b):
                        L[i, j] = 0.0
                        continue
                    try:
                        L[i, j] = log_map(base, pts[i][j])
                    except IllDefinedPolarError as exc:
                        raise IllDefinedPolarError(
                            f"log of node ({i}, {j}) at anchor ({a}, {b}): {exc}") from exc
            lifts[(a, b)] = L
        return lifts[(a, b)]

    control = []
    for I in range(3 * q1 + 1):
        row = []
        for J in range(3 * q2 + 1):
            a, b = _nearest(I), _nearest(J)
            if I % 3 == 0 and J % 3 == 0:
                row.append(pts[a][b].copy())
                continue
            xi = np.einsum("a,b,abnk->nk", C1[I], C2[J], lifts_at(a, b))
            row.append(exp_map(pts[a][b], xi))
        control.append(row)
    return BezierSurface((ax1, ax2), control, timings={"fit": time.perf_counter() - t0})


def _nearest(I):
    # node index closest to global control index I (ties cannot occur)
    return (I + 1) // 3


def _save_points(directory, kind, index, mats) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = sorted(mats)
    for name in names:
        write_matrix(d / f"{name}.mtx", np.asarray(mats[name]))
    index = dict(index, kind=kind, files=[f"{n}.mtx" for n in names])
    (d / "index.json").write_text(json.dumps(index, indent=2) + "\n")
    return d


def _load_points(directory, kind):
    d = Path(directory)
    try:
        index = json.loads((d / "index.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read {d / 'index.json'}: {exc}") from exc
    if index.get("kind") != kind:
        raise IngestionError(f"{d} holds a {index.get('kind')!r}, expected {kind!r}")
    mats = {}
    for f in index["files"]:
        M = read_matrix(d / f)
        mats[Path(f).stem] = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
    return index, mats


def common_rank(factors) -> int:
    return min(f.rank if isinstance(f, GramianFactor) else np.asarray(f).shape[1] for f in factors)


def polar_ratio(y1, y2) -> float:
    """``sigma_min / sigma_max`` of ``y1^T y2``; the log map needs it away from 0."""
    s = np.linalg.svd(np.asarray(y1).T @ np.asarray(y2), compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def admissible_rank(factors, rtol=ADMISSIBLE_RTOL) -> int:
    """Largest common rank at which every pairwise log map is safely defined.

    Gramian factors are strongly graded, so ``Y_i^T Y_j`` becomes
    numerically singular well before the full ADI rank is reached.
    Truncation to ``k`` keeps the leading ``k`` columns of ``U S``.
    """
    kmax = common_rank(factors)
    lead = [truncate_factor(f, rank=kmax).factor for f in factors]
    pairs = [(i, j) for i in range(len(lead)) for j in range(i + 1, len(lead))]
    for k in range(kmax, 0, -1):
        if all(polar_ratio(lead[i][:, :k], lead[j][:, :k]) > rtol for i, j in pairs):
            return k
    raise IllDefinedPolarError("no common rank admits all pairwise log maps")


class GeometricModel:
    """Geometric counterpart of the offline data.

    Controllability and observability factors are interpolated separately
    (a blended curve for one parameter, a Bezier surface for two) after
    truncation to a common rank ``k``; balanced truncation then runs on the
    interpolated factors and the system assembled at ``mu``.
    """

    method = "geometric"

    def __init__(self, sys, grid: TensorGrid, interp_x, interp_y, k, bt_tol=1e-8, timings=None):
        self.sys = sys
        self.grid = grid
        self.interp_x = interp_x
        self.interp_y = interp_y
        self.k = k
        self.bt_tol = bt_tol
        self.timings = dict(timings or {})

    @classmethod
    def fit(cls, sys, grid: TensorGrid, xs, ys, k=None, bt_tol=1e-8) -> "GeometricModel":
        if grid.dim != sys.param_dim:
            raise ConstructionError("grid dimension differs from the system's parameter count")
        if grid.dim not in (1, 2):
            raise ConstructionError("geometric interpolation supports one or two parameters")
        t0 = time.perf_counter()
        kmax = min(common_rank(xs), common_rank(ys))
        auto = k is None
        k = min(admissible_rank(xs), admissible_rank(ys)) if auto else int(k)
        if not 1 <= k <= kmax:
            raise ConstructionError(f"common rank {k} not in 1..{kmax}")
        while True:
            X = [truncate_factor(x, rank=k).factor for x in xs]
            Y = [truncate_factor(y, rank=k).factor for y in ys]
            try:
                ix, iy = cls._interpolant(grid, X), cls._interpolant(grid, Y)
            except GramintError as exc:
                exc.args = (f"fitting geometric interpolant at rank {k}: {exc}",) + exc.args[1:]
                raise
            # control points are derived data; their geodesics must stay well defined too
            if not auto or grid.dim == 1 or k == 1 or min(
                    ix.worst_polar_ratio(), iy.worst_polar_ratio()) > ADMISSIBLE_RTOL:
                break
            k -= 1
        return cls(sys, grid, ix, iy, k, bt_tol, {"prepare": time.perf_counter() - t0})

    @staticmethod
    def _interpolant(grid, factors):
        if grid.dim == 1:
            return BlendedCurve(CurveData(grid.axes[0], factors))
        q1, q2 = grid.shape
        data = [[factors[i * q2 + j] for j in range(q2)] for i in range(q1)]
        return fit_bezier_surface(grid.axes, data)

    def factors(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.size != self.grid.dim:
            raise ConstructionError(f"expected {self.grid.dim} parameters, got {mu.size}")
        return self.interp_x(*mu), self.interp_y(*mu)

    def reduce(self, mu) -> ReducedModel:
        t0 = time.perf_counter()
        X, Y = self.factors(mu)
        t1 = time.perf_counter()
        asm = assemble(self.sys, mu)
        rom = balanced_truncation(asm, X, Y, tol=self.bt_tol, method=self.method)
        rom.timings = {"interpolation": t1 - t0, "rom": time.perf_counter() - t1}
        return rom

    def save(self, directory) -> Path:
        d = Path(directory)
        self.interp_x.save(d / "X")
        self.interp_y.save(d / "Y")
        # timings stay out so that repeated runs give identical artifacts
        meta = {"grid": self.grid.to_json(), "k": self.k, "bt_tol": self.bt_tol}
        (d / "geometric.json").write_text(json.dumps(meta, indent=2) + "\n")
        return d

    @classmethod
    def load(cls, sys, directory) -> "GeometricModel":
        d = Path(directory)
        try:
            meta = json.loads((d / "geometric.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IngestionError(f"cannot read {d / 'geometric.json'}: {exc}") from exc
        grid = TensorGrid.from_json(meta["grid"])
        kind = BlendedCurve if grid.dim == 1 else BezierSurface
        return cls(sys, grid, kind.load(d / "X"), kind.load(d / "Y"), meta["k"],
                   meta["bt_tol"])
