"""Win probabilities, bidding strategies, entry profits and symmetric entry equilibria.

Three award formats are supported:

* ``hard``    -- the contract is awarded only when at least two bids arrive;
* ``soft``    -- a sole bid is accepted if it beats a government cost draw
  from the entrants' cost distribution;
* ``reserve`` -- any bid below the reserve price ``r`` wins.

Potential bidders enter when their signal rank is at most ``p``; the marginal
entrant (signal exactly ``p``) earns zero expected profit in equilibrium.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import quadrature
from .copula import CopulaModel, Family, family_c2, family_cdf
from .errors import DomainError, ParameterError, SingularityError
from .marginal import ValueDistribution

log = logging.getLogger(__name__)

ROOT_TOL = 1e-10
DERIV_STEP = 1e-4
QUAD_RTOL = 1e-9
SCAN_POINTS = 2000
_SCAN_PANELS = 128
_P_CHUNK = 128


class Format(str, Enum):
    HARD = "hard"
    SOFT = "soft"
    RESERVE = "reserve"


class Corner(str, Enum):
    NONE = "none"
    FULL_ENTRY = "full_entry"
    NO_ENTRY = "no_entry"


@dataclass(frozen=True)
class AuctionEnvironment:
    """One market configuration: ``n`` potential bidders facing entry cost ``kappa``."""

    n: int
    kappa: float
    format: Format
    values: ValueDistribution
    copula: CopulaModel
    reserve: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "format", Format(self.format))
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError("n must be an integer >= 2")
        object.__setattr__(self, "n", int(self.n))
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ParameterError("entry cost must be non-negative")
        if self.kappa >= self.values.width:
            raise ParameterError("entry cost must be below the width of the cost support")
        if self.format is Format.RESERVE:
            if self.reserve is None or not (self.values.lower < self.reserve <= self.values.upper):
                raise ParameterError("reserve format needs lower < r <= upper")
            object.__setattr__(self, "reserve", float(self.reserve))
        elif self.reserve is not None:
            raise ParameterError("only the reserve format takes a reserve price")

    @property
    def top(self) -> float:
        """Highest cost at which an active bidder still submits a bid."""
        return self.reserve if self.format is Format.RESERVE else self.values.upper

    def replace(self, **changes) -> "AuctionEnvironment":
        fields = dict(
            n=self.n, kappa=self.kappa, format=self.format, values=self.values,
            copula=self.copula, reserve=self.reserve,
        )
        fields.update(changes)
        return AuctionEnvironment(**fields)


# --------------------------------------------------------------------------- kernels
# Private helpers work on cost ranks x = F(v) and broadcast over p.


def _cdf(env, x, p):
    return family_cdf(env.copula.family, x, p, env.copula.theta)


def _c2(env, x, s):
    return family_c2(env.copula.family, x, s, env.copula.theta)


def _win(env, x, p, below_top=None):
    n = env.n
    lam = 1.0 - _cdf(env, x, p)
    if env.format is Format.HARD:
        return lam ** (n - 1) - (1.0 - p) ** (n - 1)
    if env.format is Format.SOFT:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(p > 0, _cdf(env, x, p) / np.where(p > 0, p, 1.0), _c2(env, x, 0.0 * p))
        return lam ** (n - 1) - (1.0 - p) ** (n - 1) * ratio
    out = lam ** (n - 1)
    if below_top is not None:
        out = np.where(below_top, out, 0.0)
    return out


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("entry probability must lie in [0, 1]")
    return p


def _breakpoints(env, *levels):
    """Cost values where the integrands may kink (copula ridge at F(v) = level)."""
    pts = []
    for q in levels:
        if 0.0 < q < 1.0:
            pts.append(float(env.values._quantile(np.asarray(q))))
    return pts


# --------------------------------------------------------------------------- public API


def big_lambda(env: AuctionEnvironment, p, v):
    """Probability that a rival either stays out or draws a cost above ``v``."""
    p = _check_p(p)
    x = env.values.cdf(v)
    return 1.0 - _cdf(env, x, p)


def win_prob(env: AuctionEnvironment, p, v):
    """Probability ``H(v | p, n)`` that an active bidder with cost ``v`` wins."""
    p = _check_p(p)
    v = np.asarray(v, dtype=float)
    x = env.values.cdf(v)
    return _win(env, x, p, below_top=v <= env.top)


def _tail_integral(env, p, v):
    x_of = env.values._cdf
    return quadrature.integrate(
        lambda u: _win(env, x_of(u), p),
        v,
        env.top,
        rtol=QUAD_RTOL,
        atol=1e-15,
        points=_breakpoints(env, p),
    )


def bid(env: AuctionEnvironment, p, v):
    """Equilibrium bid ``beta(v | p, n)`` by adaptive quadrature of the win probability.

    ``v`` may be scalar or array; each point is integrated separately.
    """
    p = float(_check_p(p))
    if p <= 0.0:
        raise DomainError("bidding strategy requires p > 0")
    v_arr = np.atleast_1d(np.asarray(v, dtype=float))
    env.values._check_v(v_arr)
    if np.any(v_arr > env.top):
        raise DomainError("no bid is submitted above the reserve price")
    out = np.empty_like(v_arr)
    for i, vi in enumerate(v_arr):
        if vi >= env.top:
            out[i] = vi
            continue
        h = float(_win(env, env.values._cdf(np.asarray(vi)), p))
        if h <= 0.0:
            raise SingularityError(f"win probability vanishes at v={vi}; bid is undefined")
        out[i] = vi + _tail_integral(env, p, vi) / h
    return out if np.ndim(v) else float(out[0])


class BidFunction:
    """Vectorised equilibrium bidding strategy for a fixed ``p``.

    The tail integral of the win probability is tabulated at cell edges; a
    query adds a Gauss-Legendre panel over its partial cell, so values match
    :func:`bid` to near machine precision without interpolation error.
    """

    def __init__(self, env: AuctionEnvironment, p: float, cells: int = 256):
        p = float(_check_p(p))
        if p <= 0.0:
            raise DomainError("bidding strategy requires p > 0")
        self.env = env
        self.p = p
        self.edges = np.linspace(env.values.lower, env.top, cells + 1)
        nodes, weights = quadrature._legendre(quadrature.ORDER)
        half = 0.5 * np.diff(self.edges)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        vals = self._h(pts) * weights[None, :] * half[:, None]
        cell_int = vals.sum(axis=1)
        self.tail = np.concatenate([np.cumsum(cell_int[::-1])[::-1], [0.0]])

    def _h(self, v):
        return _win(self.env, self.env.values._cdf(v), self.p)

    def win_prob(self, v):
        return self._h(np.asarray(v, dtype=float))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        flat = v.ravel()
        out = np.full(flat.shape, np.nan)
        ok = flat < self.env.top
        vv = flat[ok]
        k = np.clip(np.searchsorted(self.edges, vv, side="right") - 1, 0, len(self.edges) - 2)
        right = self.edges[k + 1]
        nodes, weights = quadrature._legendre(quadrature.ORDER)
        half = 0.5 * (right - vv)
        mid = 0.5 * (right + vv)
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        partial = (self._h(pts) * weights[None, :]).sum(axis=1) * half
        h = self._h(vv)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[ok] = vv + (self.tail[k + 1] + partial) / h
        out[flat == self.env.top] = self.env.top
        if np.any(ok & ~np.isfinite(out)):
            raise SingularityError("win probability vanishes inside the support; bid is undefined")
        return out.reshape(v.shape)


def entrant_profit(env: AuctionEnvironment, p, s) -> float:
    """Expected profit from entry of a potential bidder with signal rank ``s``."""
    p = float(_check_p(p))
    s = float(_check_p(s))
    x_of = env.values._cdf

    def integrand(v):
        x = x_of(v)
        return _c2(env, x, s) * _win(env, x, p)

    revenue = quadrature.integrate(
        integrand, env.values.lower, env.top, rtol=QUAD_RTOL, atol=1e-15, points=_breakpoints(env, p, s)
    )
    return revenue - env.kappa


def marginal_profit(env: AuctionEnvironment, p) -> float:
    """Profit of the marginal entrant, whose signal equals the entry cutoff."""
    return entrant_profit(env, p, p)


def profit_curve(env: AuctionEnvironment, p_grid, panels: int = _SCAN_PANELS) -> np.ndarray:
    """Marginal-entrant profit on a grid of ``p`` by a fixed composite rule."""
    p_grid = _check_p(np.atleast_1d(p_grid))
    nodes, weights = quadrature.composite_nodes(env.values.lower, env.top, panels)
    x = env.values._cdf(nodes)[None, :]
    out = np.empty(p_grid.shape)
    for start in range(0, p_grid.size, _P_CHUNK):
        p = p_grid[start:start + _P_CHUNK, None]
        vals = _c2(env, x, p) * _win(env, x, p)
        out[start:start + _P_CHUNK] = vals @ weights
    return out - env.kappa


# --------------------------------------------------------------------------- equilibrium


@dataclass(frozen=True)
class Root:
    p: float
    stable: bool
    slope: float
    residual: float


@dataclass
class EquilibriumSolution:
    roots: list
    selected_p: float
    corner: Corner
    full_entry_also_possible: bool = False
    reserve_violation: bool = False
    p_grid: Optional[np.ndarray] = field(default=None, repr=False)
    profit: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def multiplicity(self) -> int:
        return len(self.roots)

    def to_dict(self) -> dict:
        return {
            "roots": [
                {"p": r.p, "stable": r.stable, "slope": r.slope, "residual": r.residual} for r in self.roots
            ],
            "selected_p": float(self.selected_p),
            "corner": self.corner.value,
            "multiplicity": self.multiplicity,
            "full_entry_also_possible": self.full_entry_also_possible,
            "reserve_violation": self.reserve_violation,
        }


def _bisect(f, lo, hi, f_lo, tol=ROOT_TOL):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _slope(f, p, h=DERIV_STEP):
    lo = max(p - h, 0.0)
    hi = min(p + h, 1.0)
    return (f(hi) - f(lo)) / (hi - lo)


def solve_entry(env: AuctionEnvironment, grid_size: int = SCAN_POINTS) -> EquilibriumSolution:
    """All symmetric entry equilibria, with the largest stable one selected.

    The marginal-entrant profit is scanned on ``grid_size`` points over
    ``(0, 1]``; every sign change is refined by bisection on the adaptive
    quadrature. A root is stable when profit crosses zero from above. When no
    stable root exists, entry is full if profit at ``p = 1`` is positive and
    zero otherwise.
    """
    grid = np.linspace(0.0, 1.0, grid_size + 1)
    curve = profit_curve(env, grid)
    f = lambda q: marginal_profit(env, q)  # noqa: E731

    roots = []
    k = 0
    last = len(grid) - 1
    while k < last:
        a, b = curve[k], curve[k + 1]
        if (a > 0) != (b > 0) and not (a == 0 and b == 0):
            lo, hi = grid[k], grid[k + 1]
            f_lo, f_hi = f(lo), f(hi)
            if (f_lo > 0) == (f_hi > 0):
                lo, hi = grid[max(k - 1, 0)], grid[min(k + 2, last)]
                f_lo, f_hi = f(lo), f(hi)
            if (f_lo > 0) != (f_hi > 0):
                root = _bisect(f, lo, hi, f_lo)
                roots.append(Root(float(root), bool(f_lo > 0), float(_slope(f, root)), float(f(root))))
        k += 1

    # merge duplicates produced by widened brackets
    merged = []
    for r in sorted(roots, key=lambda r: r.p):
        if merged and abs(r.p - merged[-1].p) < 10 * ROOT_TOL:
            continue
        merged.append(r)
    roots = merged

    top_profit = f(1.0)
    stable = [r for r in roots if r.stable]
    solution = EquilibriumSolution(roots, 0.0, Corner.NO_ENTRY, p_grid=grid, profit=curve)
    if stable:
        solution.selected_p = float(max(r.p for r in stable))
        solution.corner = Corner.NONE
        if top_profit > 0:
            solution.full_entry_also_possible = True
            log.info("interior stable equilibrium coexists with profitable full entry; keeping the interior root")
    elif top_profit > 0:
        solution.selected_p = 1.0
        solution.corner = Corner.FULL_ENTRY
    if env.format is Format.RESERVE and len(roots) > 1:
        solution.reserve_violation = True
        warnings.warn(f"reserve format produced {len(roots)} entry roots; expected at most one", RuntimeWarning)
    return solution


@dataclass(frozen=True)
class QuasiConcavityReport:
    sign_changes: int
    decreasing_from: Optional[float]

    @property
    def quasi_concave(self) -> bool:
        return self.sign_changes <= 1


def check_quasiconcavity(env: AuctionEnvironment, grid_size: int = 400, tol: float = 1e-10) -> QuasiConcavityReport:
    """Count sign changes of the derivative of the marginal-entrant profit in ``p``.

    Derivatives are central differences with step ``DERIV_STEP`` on a uniform
    grid of ``grid_size`` points in ``[h, 1 - h]``; values below ``tol`` in
    magnitude are treated as zero and skipped.
    """
    if env.format is Format.RESERVE:
        raise ParameterError("quasi-concavity check applies to the bid-requirement formats")
    h = DERIV_STEP
    grid = np.linspace(h, 1.0 - h, grid_size)
    deriv = (profit_curve(env, grid + h) - profit_curve(env, grid - h)) / (2 * h)
    signs = np.sign(np.where(np.abs(deriv) < tol, 0.0, deriv))
    nz = np.flatnonzero(signs)
    changes = int(np.count_nonzero(np.diff(signs[nz]))) if nz.size else 0
    decreasing_from = None
    if nz.size and signs[nz[-1]] < 0:
        # start of the final decreasing stretch
        pos = np.flatnonzero(signs[nz] > 0)
        decreasing_from = float(grid[nz[pos[-1] + 1]]) if pos.size else float(grid[nz[0]])
    return QuasiConcavityReport(changes, decreasing_from)
