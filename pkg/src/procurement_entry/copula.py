"""Bivariate copulas linking private costs (first argument) and signal ranks (second).

All family functions broadcast over ``x``, ``y`` and ``theta`` so that the
estimator can profile over a whole grid of dependence parameters at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConvergenceError, DomainError, ParameterError

FRANK_INDEPENDENCE_CUTOFF = 1e-6
FRANK_STABLE_FROM = 0.5
Q_TOL = 1e-10
_RHO_NODES = 64


class Family(str, Enum):
    FRANK = "frank"
    JOE = "joe"
    INDEPENDENCE = "independence"
    COMONOTONE = "comonotone"


PARAMETRIC = (Family.FRANK, Family.JOE)


class Partials(NamedTuple):
    C1: np.ndarray
    C2: np.ndarray
    C21: np.ndarray
    C22: np.ndarray
    dC_dtheta: np.ndarray


# --------------------------------------------------------------------------- Frank


def _frank_parts(x, y, theta):
    small = np.abs(theta) < FRANK_INDEPENDENCE_CUTOFF
    th = np.where(small, 1.0, theta)
    a = np.expm1(-th * x)
    b = np.expm1(-th * y)
    d = np.expm1(-th)
    return small, th, a, b, d


def _frank_stable(x, y, th):
    # -(D + AB) = exp(-th*m) * bracket with m = min(x, y); both bracket terms are >= 0
    m = np.minimum(x, y)
    big = np.maximum(x, y)
    e = np.exp(-th * (big - m))
    em = np.expm1(-th * (1.0 - big))
    bracket = -np.expm1(-th * big) - e * em
    return m, big, e, em, bracket


def _frank_cdf(x, y, theta):
    small, th, a, b, d = _frank_parts(x, y, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = -np.log1p(a * b / d) / th
        m, _, _, _, bracket = _frank_stable(x, y, th)
        stable = m - (np.log(bracket) - np.log(-d)) / th
    c = np.where(th < FRANK_STABLE_FROM, direct, stable)
    return np.where(small, x * y, c)


def _frank_c2(x, y, theta):
    small, th, a, b, d = _frank_parts(x, y, theta)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        m, _, _, _, bracket = _frank_stable(x, y, th)
        c2 = -a * np.exp(-th * (y - m)) / bracket
        # x = y = 0 leaves 0/0; C(0, y) = 0 identically
        c2 = np.where(bracket > 0.0, c2, 0.0)
    return np.where(small, x + 0.0 * y, c2)


def _frank_partials(x, y, theta):
    small, th, a, b, d = _frank_parts(x, y, theta)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        m, big, e, em, bracket = _frank_stable(x, y, th)
        shift = np.exp(-th * (x + y - 2.0 * m))
        c1 = -b * np.exp(-th * (x - m)) / bracket
        c2 = -a * np.exp(-th * (y - m)) / bracket
        c21 = -th * d * shift / bracket**2
        c22 = -th * a * np.expm1(-th * (1.0 - x)) * shift / bracket**2
        log_ratio = np.log(bracket) - np.log(-d)
        d_bracket = (
            big * np.exp(-th * big)
            + (big - m) * e * em
            + e * (1.0 - big) * np.exp(-th * (1.0 - big))
        )
        d_log_ratio = d_bracket / bracket - np.exp(-th) / (-d)
        dth = log_ratio / th**2 - d_log_ratio / th
    zero = 0.0 * x * y
    return Partials(
        np.where(small, y + zero, c1),
        np.where(small, x + zero, c2),
        np.where(small, 1.0 + zero, c21),
        np.where(small, zero, c22),
        np.where(small, zero, dth),
    )


# --------------------------------------------------------------------------- Joe

_TINY = 1e-300


def _joe_terms(x, y, theta):
    ub = np.maximum(1.0 - x, _TINY)
    vb = np.maximum(1.0 - y, _TINY)
    a = ub**theta
    b = vb**theta
    s = a + b - a * b
    return ub, vb, a, b, s


def _joe_cdf(x, y, theta):
    _, _, _, _, s = _joe_terms(x, y, theta)
    return 1.0 - s ** (1.0 / theta)


def _joe_c2(x, y, theta):
    _, vb, a, _, s = _joe_terms(x, y, theta)
    return s ** (1.0 / theta - 1.0) * vb ** (theta - 1.0) * (1.0 - a)


def _joe_partials(x, y, theta):
    ub, vb, a, b, s = _joe_terms(x, y, theta)
    k = 1.0 / theta - 1.0
    c1 = s**k * ub ** (theta - 1.0) * (1.0 - b)
    c2 = s**k * vb ** (theta - 1.0) * (1.0 - a)
    a_x = -theta * ub ** (theta - 1.0)
    b_y = -theta * vb ** (theta - 1.0)
    s_x = a_x * (1.0 - b)
    s_y = b_y * (1.0 - a)
    c21 = vb ** (theta - 1.0) * (k * s ** (k - 1.0) * s_x * (1.0 - a) - s**k * a_x)
    c22 = (1.0 - a) * (
        k * s ** (k - 1.0) * s_y * vb ** (theta - 1.0)
        - s**k * (theta - 1.0) * vb ** (theta - 2.0)
    )
    lu = np.log(ub)
    lv = np.log(vb)
    s_t = a * lu + b * lv - a * b * (lu + lv)
    dth = -(s ** (1.0 / theta)) * (-np.log(s) / theta**2 + s_t / (theta * s))
    return Partials(c1, c2, c21, c22, dth)


# --------------------------------------------------------------------------- model


def _check_unit(name, arr, slack: float = 0.0):
    arr = np.asarray(arr, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < -slack) or np.any(arr > 1.0 + slack):
        raise DomainError(f"{name} must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0) if slack else arr


def check_theta(family: Family, theta) -> None:
    """Raise ``ParameterError`` unless ``theta`` is admissible for ``family``."""
    th = np.asarray(theta, dtype=float)
    if family is Family.FRANK:
        if np.any(~np.isfinite(th)) or np.any(th < 0.0):
            raise ParameterError("Frank copula requires theta >= 0 (negative dependence is not supported)")
    elif family is Family.JOE:
        if np.any(~np.isfinite(th)) or np.any(th < 1.0):
            raise ParameterError("Joe copula requires theta >= 1")


def family_cdf(family: Family, x, y, theta=None):
    """C(x, y; theta), broadcasting over all three arguments."""
    if family is Family.FRANK:
        return _frank_cdf(x, y, theta)
    if family is Family.JOE:
        return _joe_cdf(x, y, theta)
    if family is Family.INDEPENDENCE:
        return np.asarray(x) * np.asarray(y)
    return np.minimum(x, y)


def family_c2(family: Family, x, y, theta=None):
    """Conditional CDF of the cost rank given signal rank ``y``: dC/dy."""
    if family is Family.FRANK:
        return _frank_c2(x, y, theta)
    if family is Family.JOE:
        return _joe_c2(x, y, theta)
    if family is Family.INDEPENDENCE:
        return np.asarray(x, dtype=float) + 0.0 * np.asarray(y)
    # right-continuous convention at x == y
    return (np.asarray(x) >= np.asarray(y)).astype(float)


def family_q_inverse(family: Family, z, y, theta=None, tol: float = Q_TOL, max_iter: int = 200):
    """Solve ``C(x, y; theta) / y = z`` for ``x`` by vectorised bisection."""
    z, y, theta = np.broadcast_arrays(
        np.asarray(z, dtype=float), np.asarray(y, dtype=float), np.asarray(0.0 if theta is None else theta, dtype=float)
    )
    th = None if family not in PARAMETRIC else theta
    lo = np.zeros(z.shape)
    hi = np.ones(z.shape)
    for _ in range(max_iter):
        if np.all(hi - lo < 0.01 * tol):
            break
        mid = 0.5 * (lo + hi)
        below = family_cdf(family, mid, y, th) / y < z
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        raise ConvergenceError("q_inverse bracket did not shrink below tolerance")
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CopulaModel:
    """A one-parameter copula family evaluated at a fixed ``theta``."""

    family: Family
    theta: Optional[float] = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam in PARAMETRIC:
            if self.theta is None:
                raise ParameterError(f"{fam.value} copula requires theta")
            object.__setattr__(self, "theta", float(self.theta))
            check_theta(fam, self.theta)
        elif self.theta is not None:
            raise ParameterError(f"{fam.value} copula takes no theta")

    @classmethod
    def frank(cls, theta: float) -> "CopulaModel":
        return cls(Family.FRANK, theta)

    @classmethod
    def joe(cls, theta: float) -> "CopulaModel":
        return cls(Family.JOE, theta)

    @classmethod
    def independence(cls) -> "CopulaModel":
        return cls(Family.INDEPENDENCE)

    @classmethod
    def comonotone(cls) -> "CopulaModel":
        return cls(Family.COMONOTONE)

    @classmethod
    def from_config(cls, cfg: dict) -> "CopulaModel":
        return cls(Family(cfg["family"].lower()), cfg.get("theta"))

    def to_config(self) -> dict:
        out = {"family": self.family.value}
        if self.theta is not None:
            out["theta"] = self.theta
        return out

    def with_theta(self, theta: float) -> "CopulaModel":
        return CopulaModel(self.family, theta)

    def cdf(self, x, y):
        """C(x, y; theta)."""
        x = _check_unit("x", x)
        y = _check_unit("y", y)
        return family_cdf(self.family, x, y, self.theta)

    def c2(self, x, y):
        """dC/dy, the conditional CDF of the cost rank given signal rank y."""
        x = _check_unit("x", x)
        y = _check_unit("y", y)
        return family_c2(self.family, x, y, self.theta)

    def partials(self, x, y) -> Partials:
        """C1, C2, C21 (the density), C22 and dC/dtheta.

        The Comonotone copula has no density; its C21 and C22 are reported as
        their almost-everywhere value 0.
        """
        x = _check_unit("x", x)
        y = _check_unit("y", y)
        if self.family is Family.FRANK:
            return _frank_partials(x, y, self.theta)
        if self.family is Family.JOE:
            if np.any(x >= 1.0) or np.any(y >= 1.0):
                raise DomainError("Joe partials are undefined on the upper boundary")
            return _joe_partials(x, y, self.theta)
        x, y = np.broadcast_arrays(x, y)
        zero = np.zeros(x.shape)
        if self.family is Family.INDEPENDENCE:
            return Partials(y + zero, x + zero, 1.0 + zero, zero, zero)
        return Partials((x < y).astype(float), (x >= y).astype(float), zero, zero, zero)

    def q_inverse(self, z, y):
        """Inverse of ``x -> C(x, y) / y``: the cost rank whose conditional-on-entry CDF is ``z``."""
        # ratios C(x, y) / y may overshoot 1 by rounding
        z = _check_unit("z", z, slack=1e-12)
        y = _check_unit("y", y)
        if np.any(y <= 0.0):
            raise DomainError("q_inverse requires y > 0")
        return family_q_inverse(self.family, z, y, self.theta)

    def spearman_rho(self, nodes: int = _RHO_NODES) -> float:
        return spearman_rho(self, nodes)


def spearman_rho(c: CopulaModel, nodes: int = _RHO_NODES) -> float:
    """Spearman's rho, 12 * int int C - 3, by tensor Gauss-Legendre quadrature."""
    if c.family is Family.INDEPENDENCE:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (x + 1.0)
    w = 0.5 * w
    grid = family_cdf(c.family, u[:, None], u[None, :], c.theta)
    return float(12.0 * (w @ grid @ w) - 3.0)


_THETA_BOUNDS = {Family.FRANK: (0.0, 200.0), Family.JOE: (1.0, 200.0)}


def theta_from_rho(family, rho: float, tol: float = 1e-10) -> float:
    """Invert ``spearman_rho`` for a parametric family by bisection."""
    family = Family(family)
    if family not in PARAMETRIC:
        raise ParameterError("theta_from_rho requires the Frank or Joe family")
    lo, hi = _THETA_BOUNDS[family]
    r_lo = spearman_rho(CopulaModel(family, lo))
    r_hi = spearman_rho(CopulaModel(family, hi))
    if not (r_lo <= rho <= r_hi):
        raise ParameterError(
            f"rho={rho} outside the attainable range [{r_lo:.4f}, {r_hi:.4f}] of the {family.value} family"
        )
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if spearman_rho(CopulaModel(family, mid)) < rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
