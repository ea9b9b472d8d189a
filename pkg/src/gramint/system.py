"""Parametric descriptor systems with an affine matrix decomposition.

A system is stored as four term lists, one per matrix family::

    E(mu) = sum_i f_i^E(mu) E_i      A(mu) = sum_i f_i^A(mu) A_i
    B(mu) = sum_i f_i^B(mu) B_i      C(mu) = sum_i f_i^C(mu) C_i

with scalar coefficient functions restricted to monomials
``c * mu1**a1 * mu2**a2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

from .exceptions import ConstructionError, DomainError, IngestionError

FAMILIES = ("E", "A", "B", "C")


@dataclass(frozen=True)
class CoeffFn:
    """Monomial coefficient ``c * prod(mu_k ** exp_k)``."""

    c: float = 1.0
    exp: tuple = (0, 0)

    def __post_init__(self):
        exp = tuple(int(a) for a in self.exp)
        if any(a < 0 for a in exp):
            raise ConstructionError(f"monomial exponents must be non-negative, got {exp}")
        object.__setattr__(self, "exp", exp)
        object.__setattr__(self, "c", float(self.c))

    def __call__(self, mu) -> float:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        value = self.c
        for k, a in enumerate(self.exp):
            if a == 0:
                continue
            if k >= mu.size:
                raise DomainError(f"coefficient uses mu[{k}] but parameter has {mu.size} entries")
            value *= mu[k] ** a
        return float(value)

    def to_json(self) -> dict:
        return {"c": self.c, "exp": list(self.exp)}

    @classmethod
    def from_json(cls, data) -> "CoeffFn":
        return cls(c=data.get("c", 1.0), exp=tuple(data.get("exp", (0, 0))))


def constant(c=1.0) -> CoeffFn:
    return CoeffFn(c, (0, 0))


def monomial(c, a1=0, a2=0) -> CoeffFn:
    return CoeffFn(c, (a1, a2))


def _shape(M):
    return tuple(M.shape)


def _as_matrix(M):
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return M


@dataclass(frozen=True)
class ParametricSystem:
    """Affine-decomposed parametric descriptor system.

    ``e_terms`` etc. are sequences of ``(CoeffFn, matrix)`` pairs. Matrices
    may be dense arrays or scipy sparse matrices. The object is treated as
    immutable once built.
    """

    e_terms: tuple
    a_terms: tuple
    b_terms: tuple
    c_terms: tuple
    lower: tuple
    upper: tuple
    name: str = "system"

    def __post_init__(self):
        families = {}
        for fam, terms in zip(FAMILIES, (self.e_terms, self.a_terms, self.b_terms, self.c_terms)):
            if len(terms) == 0:
                raise ConstructionError(f"{fam}: at least one term is required")
            clean = []
            for f, M in terms:
                if not isinstance(f, CoeffFn):
                    f = CoeffFn(*f) if isinstance(f, (tuple, list)) else CoeffFn(float(f))
                clean.append((f, _as_matrix(M)))
            families[fam] = tuple(clean)
        n = _shape(families["E"][0][1])[0]
        m = _shape(families["B"][0][1])[1]
        p = _shape(families["C"][0][1])[0]
        expected = {"E": (n, n), "A": (n, n), "B": (n, m), "C": (p, n)}
        for fam, terms in families.items():
            for idx, (_, M) in enumerate(terms):
                if _shape(M) != expected[fam]:
                    raise ConstructionError(
                        f"{fam}[{idx}] has shape {_shape(M)}, expected {expected[fam]}")
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or len(lower) not in (1, 2):
            raise ConstructionError("parameter box must have 1 or 2 axes")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise ConstructionError("parameter box has lower > upper")
        for terms in families.values():
            for f, _ in terms:
                if any(a != 0 for a in f.exp[len(lower):]):
                    raise ConstructionError("coefficient depends on a parameter the box does not declare")
        object.__setattr__(self, "e_terms", families["E"])
        object.__setattr__(self, "a_terms", families["A"])
        object.__setattr__(self, "b_terms", families["B"])
        object.__setattr__(self, "c_terms", families["C"])
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def state_dim(self) -> int:
        return _shape(self.e_terms[0][1])[0]

    @property
    def input_dim(self) -> int:
        return _shape(self.b_terms[0][1])[1]

    @property
    def output_dim(self) -> int:
        return _shape(self.c_terms[0][1])[0]

    @property
    def param_dim(self) -> int:
        return len(self.lower)

    def terms(self, family: str) -> tuple:
        return {"E": self.e_terms, "A": self.a_terms, "B": self.b_terms, "C": self.c_terms}[family]

    def coeffs(self, family: str) -> tuple:
        return tuple(f for f, _ in self.terms(family))

    def in_domain(self, mu, rtol=1e-12) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.size != self.param_dim:
            return False
        lo, hi = np.array(self.lower), np.array(self.upper)
        slack = rtol * np.maximum(hi - lo, 1.0)
        return bool(np.all(mu >= lo - slack) and np.all(mu <= hi + slack))


@dataclass
class AssembledSystem:
    """The system matrices at one parameter value."""

    E: object
    A: object
    B: np.ndarray
    C: np.ndarray
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A) or sp.issparse(self.E)

    def dense(self):
        """Return ``(E, A, B, C)`` as dense arrays."""
        E = self.E.toarray() if sp.issparse(self.E) else np.asarray(self.E)
        A = self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A)
        return E, A, np.asarray(self.B), np.asarray(self.C)

    def transpose(self) -> "AssembledSystem":
        """Dual system ``(E^T, A^T, C^T, B^T)``."""
        return AssembledSystem(self.E.T, self.A.T, np.asarray(self.C).T.copy(),
                               np.asarray(self.B).T.copy(), self.mu)

    def pencil_eigenvalues(self) -> np.ndarray:
        E, A, _, _ = self.dense()
        return scipy.linalg.eigvals(A, E)

    def is_stable(self) -> bool:
        """Dense check that every pencil eigenvalue has negative real part."""
        ev = self.pencil_eigenvalues()
        return bool(np.all(np.isfinite(ev)) and np.all(ev.real < 0))


def _weighted_sum(terms, mu):
    total = None
    for f, M in terms:
        term = f(mu) * M
        total = term if total is None else total + term
    return total


def assemble(sys: ParametricSystem, mu, check_domain=True) -> AssembledSystem:
    """Evaluate every affine expansion at ``mu``.

    ``check_domain=False`` allows evaluation outside the declared box, e.g.
    ``mu = 0`` to isolate the parameter-free terms.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.size != sys.param_dim:
        raise DomainError(f"expected {sys.param_dim} parameters, got {mu.size}")
    if check_domain and not sys.in_domain(mu):
        raise DomainError(f"mu={mu.tolist()} outside parameter box {sys.lower}..{sys.upper}")
    E = _weighted_sum(sys.e_terms, mu)
    A = _weighted_sum(sys.a_terms, mu)
    B = _weighted_sum(sys.b_terms, mu)
    C = _weighted_sum(sys.c_terms, mu)
    B = B.toarray() if sp.issparse(B) else np.asarray(B)
    C = C.toarray() if sp.issparse(C) else np.asarray(C)
    return AssembledSystem(E, A, B, C, mu.copy())


# ---------------------------------------------------------------------------
# heat conduction benchmark

HEAT_DOMAIN = ((1.0, 4.0), (10.0, 10.0))
DISC_CENTERS = ((1.0, 1.0), (3.0, 3.0))
DISC_RADIUS = 0.5


def _edge_laplacian(N, h, weight):
    """Dirichlet 5-point stiffness with unit conductance on selected edges.

    ``weight(x, y)`` returns True for edge midpoints that belong to the
    region. Edges to the boundary contribute to the diagonal only.
    """
    idx = np.arange(N * N).reshape(N, N)
    rows, cols, vals = [], [], []
    diag = np.zeros(N * N)

    def coord(i):
        return (i + 1) * h

    for i in range(-1, N):
        for j in range(N):
            # edge between (i, j) and (i + 1, j) along the first axis
            mx, my = coord(i) + 0.5 * h, coord(j)
            if not weight(mx, my):
                continue
            a = idx[i, j] if i >= 0 else None
            b = idx[i + 1, j] if i + 1 < N else None
            for u in (a, b):
                if u is not None:
                    diag[u] += 1.0
            if a is not None and b is not None:
                rows += [a, b]
                cols += [b, a]
                vals += [-1.0, -1.0]
    for i in range(N):
        for j in range(-1, N):
            mx, my = coord(i), coord(j) + 0.5 * h
            if not weight(mx, my):
                continue
            a = idx[i, j] if j >= 0 else None
            b = idx[i, j + 1] if j + 1 < N else None
            for u in (a, b):
                if u is not None:
                    diag[u] += 1.0
            if a is not None and b is not None:
                rows += [a, b]
                cols += [b, a]
                vals += [-1.0, -1.0]
    K = sp.coo_matrix((vals, (rows, cols)), shape=(N * N, N * N)) + sp.diags(diag)
    return sp.csr_matrix(K)


def make_heat_benchmark(grid_side: int = 40) -> ParametricSystem:
    """Two-parameter heat conduction on (0, 4)^2 with two conductive discs.

    Finite differences on a uniform ``grid_side x grid_side`` interior grid
    with homogeneous Dirichlet boundary, giving ``A(mu) = mu1 A1 + mu2 A2 + A3``,
    lumped mass ``E = h^2 I``, load ``B = h^2 1`` and mean output
    ``C = 1/n [1 ... 1]``. ``grid_side=40`` gives ``n = 1600``.
    """
    N = int(grid_side)
    if N < 8:
        raise ConstructionError("grid_side must be at least 8")
    h = 4.0 / (N + 1)

    def in_disc(k):
        cx, cy = DISC_CENTERS[k]
        return lambda x, y: (x - cx) ** 2 + (y - cy) ** 2 < DISC_RADIUS ** 2

    K1 = _edge_laplacian(N, h, in_disc(0))
    K2 = _edge_laplacian(N, h, in_disc(1))
    K3 = _edge_laplacian(N, h, lambda x, y: True)
    if K1.nnz == 0 or K2.nnz == 0:
        raise ConstructionError(f"grid_side={N} is too coarse to resolve both discs")
    n = N * N
    E = sp.identity(n, format="csr") * h ** 2
    B = np.full((n, 1), h ** 2)
    C = np.full((1, n), 1.0 / n)
    return ParametricSystem(
        e_terms=((constant(), E),),
        a_terms=((monomial(1.0, 1, 0), -K1), (monomial(1.0, 0, 1), -K2), (constant(), -K3)),
        b_terms=((constant(), B),),
        c_terms=((constant(), C),),
        lower=HEAT_DOMAIN[0],
        upper=HEAT_DOMAIN[1],
        name=f"heat{N}",
    )


def make_heat_benchmark_1d(grid_side: int = 40, mu2: float = 7.0) -> ParametricSystem:
    """One-parameter variant with the second disc conductivity frozen.

    The free parameter ``s`` in [0, 1] maps onto ``mu1 = 1 + 9 s``, so
    ``A(s) = A1' + s A2'``.
    """
    heat = make_heat_benchmark(grid_side)
    (_, A1), (_, A2), (_, A3) = heat.a_terms
    lo, hi = heat.lower[0], heat.upper[0]
    A1, A2 = lo * A1 + mu2 * A2 + A3, (hi - lo) * A1
    return ParametricSystem(
        e_terms=heat.e_terms,
        a_terms=((constant(), sp.csr_matrix(A1)), (CoeffFn(1.0, (1,)), sp.csr_matrix(A2))),
        b_terms=heat.b_terms,
        c_terms=heat.c_terms,
        lower=(0.0,),
        upper=(1.0,),
        name=f"heat1d{grid_side}",
    )


# ---------------------------------------------------------------------------
# Matrix Market / manifest I/O


def write_matrix(path, M):
    """Write a matrix in Matrix Market format (coordinate if sparse)."""
    path = Path(path)
    if sp.issparse(M):
        scipy.io.mmwrite(str(path), sp.coo_matrix(M), precision=17)
    else:
        scipy.io.mmwrite(str(path), np.asarray(M, dtype=float), precision=17)


def read_matrix(path):
    """Read a Matrix Market file; coordinate files come back as CSR."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: file not found")
    try:
        M = scipy.io.mmread(str(path))
    except Exception as exc:  # scipy raises a variety of types on bad headers
        raise IngestionError(f"{path}: malformed Matrix Market file ({exc})") from exc
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return M


def save_system(sys: ParametricSystem, directory) -> Path:
    """Write every term matrix plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": sys.name,
        "state_dim": sys.state_dim,
        "input_dim": sys.input_dim,
        "output_dim": sys.output_dim,
        "param_dim": sys.param_dim,
        "param_domain": {"lower": list(sys.lower), "upper": list(sys.upper)},
    }
    for fam in FAMILIES:
        entries = []
        for i, (f, M) in enumerate(sys.terms(fam)):
            fname = f"{fam}{i + 1}.mtx"
            write_matrix(directory / fname, M)
            entries.append({"file": fname, **f.to_json()})
        manifest[fam] = entries
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_system(manifest_path) -> ParametricSystem:
    """Build a system from a JSON manifest and its Matrix Market files.

    Term file paths are resolved relative to the manifest. Declared
    dimensions, when present, are checked against every file.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IngestionError(f"{manifest_path}: manifest not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{manifest_path}: invalid JSON ({exc})") from exc
    base = manifest_path.parent
    n = manifest.get("state_dim")
    m = manifest.get("input_dim")
    p = manifest.get("output_dim")
    terms = {}
    for fam in FAMILIES:
        if fam not in manifest or not manifest[fam]:
            raise IngestionError(f"{manifest_path}: no terms for {fam}")
        loaded = []
        for entry in manifest[fam]:
            path = base / entry["file"]
            M = read_matrix(path)
            want = {"E": (n, n), "A": (n, n), "B": (n, m), "C": (p, n)}[fam]
            for got, exp in zip(M.shape, want):
                if exp is not None and got != exp:
                    raise IngestionError(f"{path}: shape {M.shape} does not match declared {want}")
            loaded.append((CoeffFn.from_json(entry), M))
        terms[fam] = tuple(loaded)
    dom = manifest.get("param_domain", {})
    lower = dom.get("lower")
    upper = dom.get("upper")
    if lower is None or upper is None:
        raise IngestionError(f"{manifest_path}: param_domain needs lower and upper")
    try:
        return ParametricSystem(terms["E"], terms["A"], terms["B"], terms["C"],
                                lower=tuple(lower), upper=tuple(upper),
                                name=manifest.get("name", manifest_path.stem))
    except ConstructionError as exc:
        raise IngestionError(f"{manifest_path}: {exc}") from exc


def heat_n(grid_side: int) -> int:
    return int(grid_side) ** 2


def grid_side_for(n_target: int) -> int:
    """Grid side whose heat benchmark dimension is closest to ``n_target``."""
    return max(8, int(round(math.sqrt(n_target))))
