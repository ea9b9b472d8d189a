"""Run configuration for the batch driver.

A config is a single JSON document, e.g.::

    {
      "system": {"builtin": "heat", "grid_side": 40},
      "training": ["1:4:9", "4:3:10"],
      "test": {"random": 50, "seed": 0},
      "method": "algebraic",
      "adi_tol": 1e-10,
      "bt_tol": 1e-8,
      "frequency": {"omega_min": 1e-4, "omega_max": 1e4, "count": 200},
      "out": "runs/heat"
    }

``system`` is either a builtin benchmark (``heat`` or ``heat1d``) or
``{"manifest": "path/to/manifest.json"}``. ``test`` is either a list of
axis specs under ``"grid"`` or a random count with a seed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ConstructionError, IngestionError
from .grids import TensorGrid
from .metrics import FrequencyGrid
from .system import load_system, make_heat_benchmark, make_heat_benchmark_1d

METHODS = ("exact", "algebraic", "geometric")


@dataclass
class RunConfig:
    training: list
    system: dict = field(default_factory=lambda: {"builtin": "heat", "grid_side": 40})
    test: dict = field(default_factory=lambda: {"random": 50, "seed": 0})
    method: str = "algebraic"
    adi_tol: float = 1e-10
    bt_tol: float = 1e-8
    common_rank: int = None
    weights: str = "hat"
    frequency: dict = field(default_factory=lambda: FrequencyGrid().to_json())
    out: str = "out"
    workers: int = 1
    timing_repeats: int = 3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConstructionError(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("adi_tol", "bt_tol"):
            if not 0 < getattr(self, name) < 1:
                raise ConstructionError(f"{name} must lie in (0, 1)")
        if self.common_rank is not None and self.common_rank < 1:
            raise ConstructionError("common_rank must be positive")
        if "random" in self.test and "seed" not in self.test:
            raise ConstructionError("a random test set needs a seed")
        if "random" not in self.test and "grid" not in self.test:
            raise ConstructionError("test needs either 'grid' or 'random'")
        if self.timing_repeats < 1:
            raise ConstructionError("timing_repeats must be at least 1")
        self.frequency_grid()
        self.training_grid()

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConstructionError(f"unknown config keys: {sorted(unknown)}")
        if "training" not in data:
            raise ConstructionError("config needs a 'training' grid")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IngestionError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(data)

    def to_json(self) -> dict:
        return asdict(self)

    def updated(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def training_grid(self) -> TensorGrid:
        return TensorGrid.from_spec(self.training)

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(**self.frequency)

    def build_system(self):
        spec = dict(self.system)
        if "manifest" in spec:
            return load_system(spec["manifest"])
        kind = spec.pop("builtin", None)
        if kind == "heat":
            return make_heat_benchmark(**spec)
        if kind == "heat1d":
            return make_heat_benchmark_1d(**spec)
        raise ConstructionError(f"unknown system source {self.system!r}")

    def test_points(self) -> np.ndarray:
        """Test parameters; random ones are uniform in the training hull."""
        grid = self.training_grid()
        if "grid" in self.test:
            pts = TensorGrid.from_spec(self.test["grid"]).nodes()
        else:
            rng = np.random.default_rng(self.test["seed"])
            pts = rng.uniform(grid.lower(), grid.upper(), size=(int(self.test["random"]), grid.dim))
        if pts.shape[1] != grid.dim:
            raise ConstructionError("test and training grids differ in dimension")
        outside = [p.tolist() for p in pts if not grid.contains(p)]
        if outside:
            raise ConstructionError(f"test points outside the training hull: {outside[:3]}")
        return pts

    def check_domain(self, sys) -> None:
        grid = self.training_grid()
        if grid.dim != sys.param_dim:
            raise ConstructionError(
                f"training grid has {grid.dim} axes, system has {sys.param_dim} parameters")
        for lo_hi in (grid.lower(), grid.upper()):
            if not sys.in_domain(lo_hi):
                raise ConstructionError(f"training grid corner {lo_hi.tolist()} outside the domain")
