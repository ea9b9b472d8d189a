"""Frequency-domain error measurement for full and reduced models."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bt import error_bound
from .exceptions import ConstructionError, EvaluationError
from .system import assemble

log = logging.getLogger(__name__)

# symmetric pencils up to this size are swept through one eigendecomposition
MODAL_MAX_N = 1000

CSV_HEADER = ["mu1", "mu2", "method", "r", "hinf_abs", "hinf_fom", "hinf_rel", "bound"]


@dataclass(frozen=True)
class FrequencyGrid:
    omega_min: float = 1e-4
    omega_max: float = 1e4
    count: int = 200
    spacing: str = "logarithmic"

    def __post_init__(self):
        if not 0 < self.omega_min < self.omega_max:
            raise ConstructionError("need 0 < omega_min < omega_max")
        if self.count < 2:
            raise ConstructionError("need at least two frequencies")
        if self.spacing != "logarithmic":
            raise ConstructionError("only logarithmic spacing is supported")

    @property
    def omegas(self) -> np.ndarray:
        return np.logspace(math.log10(self.omega_min), math.log10(self.omega_max), self.count)

    def refined(self) -> "FrequencyGrid":
        """Grid with every original sample plus the log-midpoints."""
        return FrequencyGrid(self.omega_min, self.omega_max, 2 * self.count - 1)

    def to_json(self) -> dict:
        return {"omega_min": self.omega_min, "omega_max": self.omega_max,
                "count": self.count, "spacing": self.spacing}


@dataclass
class ErrorRecord:
    mu: np.ndarray
    method: str
    r: int
    hinf_abs: float
    hinf_fom: float
    bound: float = float("nan")
    failure: str = ""
    timings: dict = field(default_factory=dict)

    @property
    def hinf_rel(self) -> float:
        if self.hinf_fom > 0:
            return self.hinf_abs / self.hinf_fom
        return float("nan")

    @property
    def ok(self) -> bool:
        return not self.failure and math.isfinite(self.hinf_abs)

    def row(self) -> list:
        mu = list(np.atleast_1d(self.mu))
        mu2 = repr(float(mu[1])) if len(mu) > 1 else ""
        return [repr(float(mu[0])), mu2, self.method, str(self.r), repr(float(self.hinf_abs)),
                repr(float(self.hinf_fom)), repr(float(self.hinf_rel)), repr(float(self.bound))]


def transfer_function(E, A, B, C, omega) -> np.ndarray:
    """``C (i omega E - A)^{-1} B`` by a linear solve."""
    s = 1j * float(omega)
    try:
        if sp.issparse(A) or sp.issparse(E):
            M = sp.csc_matrix(s * E - A)
            X = spla.splu(M).solve(np.asarray(B, dtype=complex))
        else:
            X = np.linalg.solve(s * np.asarray(E) - np.asarray(A), np.asarray(B, dtype=complex))
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise EvaluationError(f"i*omega*E - A singular at omega={omega:g}", omega) from exc
    H = np.asarray(C) @ X
    if not np.all(np.isfinite(H)):
        raise EvaluationError(f"non-finite response at omega={omega:g}", omega)
    return H


def frequency_response(E, A, B, C, omegas) -> np.ndarray:
    """Stack of transfer function values, shape ``(len(omegas), p, m)``."""
    omegas = np.asarray(omegas, dtype=float)
    n = A.shape[0]
    if sp.issparse(A) or sp.issparse(E) or n > 200:
        return np.stack([transfer_function(E, A, B, C, w) for w in omegas])
    # small dense systems: batched solve
    M = 1j * omegas[:, None, None] * np.asarray(E)[None] - np.asarray(A)[None]
    try:
        X = np.linalg.solve(M, np.broadcast_to(np.asarray(B, dtype=complex), (omegas.size,) + B.shape))
    except np.linalg.LinAlgError:
        return np.stack([transfer_function(E, A, B, C, w) for w in omegas])
    H = np.asarray(C)[None] @ X
    if not np.all(np.isfinite(H)):
        bad = omegas[~np.all(np.isfinite(H), axis=(1, 2))][0]
        raise EvaluationError(f"non-finite response at omega={bad:g}", bad)
    return H


def spectral_norms(H) -> np.ndarray:
    """Largest singular value of each ``p x m`` slice."""
    if H.shape[1] == 1 and H.shape[2] == 1:
        return np.abs(H[:, 0, 0])
    return np.linalg.svd(H, compute_uv=False)[:, 0]


def _is_symmetric(M) -> bool:
    D = M - M.T
    return (abs(D).max() if sp.issparse(D) else np.abs(D).max()) == 0


def modal_response(E, A, B, C, omegas) -> np.ndarray:
    """Transfer function of a symmetric pencil with ``E`` positive definite.

    With ``A V = E V diag(lam)`` and ``V^T E V = I`` the response is
    ``(C V) diag(1 / (i omega - lam)) (V^T B)``.
    """
    lam, V = sla.eigh(_dense(A), _dense(E))
    cv, vb = np.asarray(C) @ V, V.T @ np.asarray(B)
    poles = 1.0 / (1j * np.asarray(omegas, dtype=float)[:, None] - lam[None])
    return np.einsum("pk,wk,km->wpm", cv, poles, vb)


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def fom_response(asm, grid: FrequencyGrid) -> np.ndarray:
    if asm.n <= MODAL_MAX_N and _is_symmetric(asm.E) and _is_symmetric(asm.A):
        try:
            return modal_response(asm.E, asm.A, asm.B, asm.C, grid.omegas)
        except np.linalg.LinAlgError:
            pass  # E not definite
    return frequency_response(asm.E, asm.A, asm.B, asm.C, grid.omegas)


def rom_response(rom, grid: FrequencyGrid) -> np.ndarray:
    return frequency_response(rom.Er, rom.Ar, rom.Br, rom.Cr, grid.omegas)


def hinf_error(fom, rom, grid: FrequencyGrid = FrequencyGrid(), fom_values=None) -> ErrorRecord:
    """Grid approximation of ``||H - H_r||_inf`` and ``||H||_inf``."""
    Hf = fom_response(fom, grid) if fom_values is None else fom_values
    Hr = rom_response(rom, grid)
    bound = float("nan")
    if rom.method == "exact" and len(rom.hankel_values):
        bound = error_bound(rom.hankel_values, rom.order)
    return ErrorRecord(
        mu=np.asarray(fom.mu), method=rom.method, r=rom.order,
        hinf_abs=float(spectral_norms(Hf - Hr).max()),
        hinf_fom=float(spectral_norms(Hf).max()),
        bound=bound,
    )


def sweep(sys, method, model, test_points, grid: FrequencyGrid = FrequencyGrid(),
          workers=1, fom_cache=None) -> list:
    """Error records for every test point, in input order.

    ``model`` is anything with a ``reduce(mu) -> ReducedModel`` method.
    Failures at a point are logged and recorded with NaN errors; the sweep
    carries on. ``fom_cache`` (a dict keyed by ``tuple(mu)``) lets several
    sweeps share the full-order responses.
    """
    points = [np.atleast_1d(np.asarray(mu, dtype=float)) for mu in test_points]

    def one(mu):
        try:
            asm = assemble(sys, mu)
            rom = model.reduce(mu)
            key = tuple(mu.tolist())
            Hf = fom_cache.get(key) if fom_cache is not None else None
            if Hf is None:
                Hf = fom_response(asm, grid)
                if fom_cache is not None:
                    fom_cache[key] = Hf
            rec = hinf_error(asm, rom, grid, fom_values=Hf)
            rec.method = method
            rec.timings = dict(rom.timings)
            return rec
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            log.warning("test point %s failed: %s", mu.tolist(), exc)
            return ErrorRecord(mu, method, -1, float("nan"), float("nan"), failure=str(exc))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, points))
    return [one(mu) for mu in points]


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(rec.row())


def read_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            mu = [float(row["mu1"])] + ([float(row["mu2"])] if row["mu2"] else [])
            rec = ErrorRecord(np.array(mu), row["method"], int(row["r"]), float(row["hinf_abs"]),
                              float(row["hinf_fom"]), float(row["bound"]))
            out.append(rec)
    return out
