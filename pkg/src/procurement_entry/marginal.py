"""Marginal distribution of private costs on a compact support.

Costs are fractions of the engineer's estimate.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, ParameterError

PDF_FLOOR = 1e-8
_SUPPORT_TOL = 1e-12


class FlatDensityWarning(UserWarning):
    """The density touches zero somewhere on the support."""


@dataclass(frozen=True)
class ValueDistribution:
    """CDF ``F``, density ``f`` and quantile function of private costs.

    ``kind`` is one of ``"uniform"``, ``"scaled_beta"`` or ``"grid"``. Use the
    ``uniform``, ``scaled_beta`` and ``from_grid`` constructors rather than
    building instances directly.
    """

    kind: str
    lower: float
    upper: float
    a: Optional[float] = None
    b: Optional[float] = None
    knots_v: Optional[tuple] = None
    knots_F: Optional[tuple] = None
    _interp: Optional[PchipInterpolator] = field(default=None, repr=False, compare=False)

    # ------------------------------------------------------------------ constructors

    @classmethod
    def uniform(cls, lower: float = 0.0, upper: float = 1.0) -> "ValueDistribution":
        _check_support(lower, upper)
        return cls("uniform", float(lower), float(upper))

    @classmethod
    def scaled_beta(cls, a: float, b: float, lower: float, upper: float) -> "ValueDistribution":
        _check_support(lower, upper)
        if a <= 0 or b <= 0:
            raise ParameterError("beta shape parameters must be positive")
        dist = cls("scaled_beta", float(lower), float(upper), float(a), float(b))
        dist._check_density_floor()
        return dist

    @classmethod
    def from_grid(cls, v, F) -> "ValueDistribution":
        """Monotone piecewise-cubic CDF through knots ``(v_j, F_j)``.

        The knots must start at ``F = 0``, end at ``F = 1`` and be strictly
        increasing in both coordinates.
        """
        v = np.asarray(v, dtype=float)
        F = np.asarray(F, dtype=float)
        if v.ndim != 1 or v.shape != F.shape or v.size < 2:
            raise ParameterError("grid needs matching 1-d arrays with at least two knots")
        if np.any(np.diff(v) <= 0) or np.any(np.diff(F) <= 0):
            raise ParameterError("grid knots must be strictly increasing in v and F")
        if abs(F[0]) > 1e-12 or abs(F[-1] - 1.0) > 1e-12:
            raise ParameterError("grid CDF must run from 0 to 1")
        dist = cls(
            "grid",
            float(v[0]),
            float(v[-1]),
            knots_v=tuple(v.tolist()),
            knots_F=tuple(F.tolist()),
            _interp=PchipInterpolator(v, F),
        )
        dist._check_density_floor()
        return dist

    @classmethod
    def from_config(cls, cfg: dict, base_dir: Optional[Path] = None) -> "ValueDistribution":
        kind = cfg["kind"]
        if kind == "uniform":
            return cls.uniform(cfg.get("lower", 0.0), cfg.get("upper", 1.0))
        if kind == "scaled_beta":
            return cls.scaled_beta(cfg["a"], cfg["b"], cfg["lower"], cfg["upper"])
        if kind == "grid":
            if "csv" not in cfg:
                return cls.from_grid(cfg["v"], cfg["F"])
            path = Path(cfg["csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return read_grid_csv(path)
        raise ParameterError(f"unknown value distribution kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "lower": self.lower, "upper": self.upper}
        if self.kind == "scaled_beta":
            return {"kind": "scaled_beta", "a": self.a, "b": self.b, "lower": self.lower, "upper": self.upper}
        return {"kind": "grid", "v": list(self.knots_v), "F": list(self.knots_F)}

    # ------------------------------------------------------------------ evaluation

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def _check_v(self, v):
        v = np.asarray(v, dtype=float)
        tol = _SUPPORT_TOL * max(1.0, abs(self.upper))
        if np.any(~np.isfinite(v)) or np.any(v < self.lower - tol) or np.any(v > self.upper + tol):
            raise DomainError(f"cost outside support [{self.lower}, {self.upper}]")
        return np.clip(v, self.lower, self.upper)

    def cdf(self, v):
        return self._cdf(self._check_v(v))

    def pdf(self, v):
        return self._pdf(self._check_v(v))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(~np.isfinite(u)) or np.any(u < 0.0) or np.any(u > 1.0):
            raise DomainError("quantile level must lie in [0, 1]")
        return self._quantile(u)

    # unchecked versions used on internally generated nodes
    def _cdf(self, v):
        if self.kind == "uniform":
            return (v - self.lower) / self.width
        if self.kind == "scaled_beta":
            return stats.beta.cdf((v - self.lower) / self.width, self.a, self.b)
        return np.clip(self._interp(v), 0.0, 1.0)

    def _pdf(self, v):
        if self.kind == "uniform":
            return np.full(np.shape(v), 1.0 / self.width)
        if self.kind == "scaled_beta":
            return stats.beta.pdf((v - self.lower) / self.width, self.a, self.b) / self.width
        return np.maximum(self._interp.derivative()(v), 0.0)

    def _quantile(self, u):
        if self.kind == "uniform":
            return self.lower + u * self.width
        if self.kind == "scaled_beta":
            return self.lower + self.width * stats.beta.ppf(u, self.a, self.b)
        lo = np.full(np.shape(u), self.lower)
        hi = np.full(np.shape(u), self.upper)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self._interp(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def _check_density_floor(self, points: int = 201):
        v = np.linspace(self.lower, self.upper, points)
        if np.min(self._pdf(v)) < PDF_FLOOR:
            warnings.warn(
                f"{self.kind} cost density falls below {PDF_FLOOR:g} on its support; "
                "it is not bounded away from zero",
                FlatDensityWarning,
                stacklevel=3,
            )


def _check_support(lower, upper):
    if not (np.isfinite(lower) and np.isfinite(upper) and lower < upper):
        raise ParameterError("support must be a finite interval with lower < upper")


def read_grid_csv(path) -> ValueDistribution:
    """Read a ``v,F`` CSV into a monotone grid distribution."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return ValueDistribution.from_grid([float(r["v"]) for r in rows], [float(r["F"]) for r in rows])


def write_grid_csv(path, v, F) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v", "F"])
        for vi, Fi in zip(v, F):
            w.writerow([repr(float(vi)), repr(float(Fi))])
