"""Two-step minimum-distance estimation of the copula parameter and the cost CDF.

For each cell of auctions with ``n`` potential bidders, the empirical CDF of
pseudo costs estimates the conditional-on-entry law ``C(F(v), p_n) / p_n``.
Mapping it back through the copula gives one estimate of ``F(v)`` per cell;
the copula parameter is chosen to make those estimates agree.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .. import quadrature
from ..copula import CopulaModel, Family, family_c2, family_cdf, family_q_inverse, spearman_rho
from ..equilibrium import Format
from ..errors import InsufficientDataError, ParameterError, UnidentifiedError
from .density import MIN_BIDS
from .entry import invert_entry_share
from .pseudo import pseudo_costs_cell

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
FLAT_TOL = 1e-10
GOLDEN_TOL = 1e-6
GRID_POINTS = 19
DEFAULT_GRIDS = {Family.FRANK: (0.1, 20.0, 0.1), Family.JOE: (1.0, 20.0, 0.1)}


class WeakIdentificationWarning(UserWarning):
    """Entry probabilities barely differ across cells, or the objective is flat in theta."""


# --------------------------------------------------------------------------- building blocks


def fhat_star(costs, v):
    """Empirical CDF of pseudo costs at ``v``."""
    costs = np.sort(np.asarray(costs, dtype=float))
    return np.searchsorted(costs, np.asarray(v, dtype=float), side="right") / costs.size


def q_matrix(family, fstar, p, theta):
    """``Q(F*(v_j | p_n), p_n; theta)`` with rows indexed by cell; broadcasts a leading theta axis."""
    fstar = np.asarray(fstar, dtype=float)
    p = np.asarray(p, dtype=float)[:, None]
    theta = np.asarray(theta, dtype=float)
    if theta.ndim:
        theta = theta[:, None, None]
    return family_q_inverse(Family(family), fstar, p, theta if Family(family) in (Family.FRANK, Family.JOE) else None)


def isotonic_inner(q, weights):
    """Minimise ``sum_n sum_j W(n,j) (Q(n,j) - y_j)^2`` over ``0 <= y_1 <= ... <= y_J <= 1``.

    The objective is separable in ``j`` after pooling over cells, so the
    solution is the weighted isotonic fit of the pooled means, clamped to the
    unit interval.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    if np.any(w < 0):
        raise ParameterError("weights must be non-negative")
    wj = w.sum(axis=0)
    if np.any(wj <= 0):
        raise ParameterError("every grid point needs positive total weight")
    ybar = (w * q).sum(axis=0) / wj
    fit = isotonic_regression(ybar, weights=wj, increasing=True).x
    return np.clip(fit, 0.0, 1.0)


def inner_objective(q, weights, y) -> float:
    return float(np.sum(np.asarray(weights) * (np.asarray(q) - np.asarray(y)[None, :]) ** 2))


def profiled_objective(family, fstar, p, weights, theta) -> float:
    q = q_matrix(family, fstar, p, theta)
    return inner_objective(q, weights, isotonic_inner(q, weights))


def _objective_on_grid(family, fstar, p, weights, thetas):
    qs = q_matrix(family, fstar, p, thetas)
    return np.array([inner_objective(q, weights, isotonic_inner(q, weights)) for q in qs])


def _golden(f, a, b, tol=GOLDEN_TOL):
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class ThetaSearch:
    theta: float
    objective: float
    grid: np.ndarray
    values: np.ndarray
    flat: bool


def search_theta(family, fstar, p, weights, grid) -> ThetaSearch:
    """Grid search over ``grid`` followed by golden-section refinement in the bracketing cells."""
    grid = np.asarray(grid, dtype=float)
    values = _objective_on_grid(family, fstar, p, weights, grid)
    k = int(np.argmin(values))
    flat = bool(values.max() - values.min() < FLAT_TOL)
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    f = lambda t: profiled_objective(family, fstar, p, weights, t)  # noqa: E731
    theta = _golden(f, a, b) if b > a else float(grid[k])
    obj = f(theta)
    if obj > values[k]:
        theta, obj = float(grid[k]), float(values[k])
    return ThetaSearch(float(theta), float(obj), grid, values, flat)


def default_theta_grid(family) -> np.ndarray:
    lo, hi, step = DEFAULT_GRIDS[Family(family)]
    return np.round(np.arange(lo, hi + 0.5 * step, step), 10)


# --------------------------------------------------------------------------- entry costs


def _entry_integrand(family, theta, x, p, n, fmt):
    c = family_cdf(family, x, p, theta)
    lam = 1.0 - c
    if Format(fmt) is Format.SOFT:
        win = lam ** (n - 1) - (1.0 - p) ** (n - 1) * c / p
    else:
        win = lam ** (n - 1) - (1.0 - p) ** (n - 1)
    return family_c2(family, x, p, theta) * win


def entry_cost(copula: CopulaModel, cdf, p: float, n: int, lower: float, upper: float, fmt="hard", points=None) -> float:
    """Entry cost that makes the marginal entrant indifferent, for a cost CDF given as a callable."""
    f = lambda v: _entry_integrand(copula.family, copula.theta, cdf(v), p, n, fmt)  # noqa: E731
    return quadrature.integrate(f, lower, upper, rtol=1e-11, atol=1e-15, points=points)


def step_entry_cost(copula: CopulaModel, knots, levels, p: float, n: int, fmt="hard") -> float:
    """Entry cost for a right-continuous step CDF taking value ``levels[k]`` on ``[knots[k], knots[k+1])``."""
    knots = np.asarray(knots, dtype=float)
    levels = np.asarray(levels, dtype=float)[:-1]
    vals = _entry_integrand(copula.family, copula.theta, levels, p, n, fmt)
    return float(np.sum(vals * np.diff(knots)))


# --------------------------------------------------------------------------- data handling


def _canonical_cell(records):
    """Auctions of one cell in a fixed order that does not depend on file order."""
    return sorted(records, key=lambda r: (r.n_active, tuple(sorted(r.bids))))


@dataclass
class CellEstimate:
    n: int
    p: float
    costs: np.ndarray
    bids: np.ndarray
    bandwidth: float
    inversion_fraction: float
    underflow: int


def _estimate_cell(records, n, fmt, bandwidth_mode, on_underflow) -> CellEstimate:
    share = float(np.mean([r.n_active / r.n for r in records]))
    p = invert_entry_share(share, n)
    bids = np.array([b for r in records for b in r.bids], dtype=float)
    pc = pseudo_costs_cell(bids, n, p, fmt, bandwidth_mode, on_underflow)
    return CellEstimate(n, p, pc.costs, bids, pc.bandwidth, pc.inversion_fraction, pc.underflow)


def usable_cells(dataset, min_bids: int = MIN_BIDS) -> dict:
    """Canonically ordered records per usable cell; cells with n = 2 or too few bids are dropped."""
    cells = {}
    for n in dataset.n_values:
        recs = _canonical_cell(dataset.cell(n))
        if n == 2:
            log.info("dropping n=2 cell: entry is not identified")
            continue
        m = sum(r.n_active for r in recs)
        if m < min_bids:
            warnings.warn(f"dropping n={n} cell with {m} bids (< {min_bids})", UserWarning, stacklevel=3)
            continue
        cells[n] = recs
    return cells


# --------------------------------------------------------------------------- bootstrap


@dataclass
class BootstrapDraws:
    """Per-replicate entry probabilities and pseudo-cost CDFs on the grid."""

    p: np.ndarray  # (B, N)
    fstar: np.ndarray  # (B, N, J)


def _replicate_stream(seed: int, b: int, n: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b, n])))


def bootstrap_draws(cells: dict, v_grid, B: int, seed: int, fmt="hard", bandwidth_mode="rot", on_underflow="clip"):
    """Resample auctions with replacement within each cell and redo the first stage."""
    if B < 1:
        raise ParameterError("bootstrap needs at least one replicate")
    ns = sorted(cells)
    for n in ns:
        if len(cells[n]) < 2:
            raise InsufficientDataError(f"cell n={n} has fewer than two auctions")
    P = np.empty((B, len(ns)))
    FS = np.empty((B, len(ns), len(v_grid)))
    for b in range(B):
        for k, n in enumerate(ns):
            recs = cells[n]
            idx = _replicate_stream(seed, b, n).integers(0, len(recs), size=len(recs))
            est = _estimate_cell([recs[i] for i in idx], n, fmt, bandwidth_mode, on_underflow)
            P[b, k] = est.p
            FS[b, k] = fhat_star(est.costs, v_grid)
    return BootstrapDraws(P, FS)


def weights_from_draws(family, draws: BootstrapDraws, theta_tilde: float) -> np.ndarray:
    """Diagonal inverse-variance weights of ``Q`` across replicates, with a variance floor."""
    q = np.stack([q_matrix(family, fs, p, theta_tilde) for fs, p in zip(draws.fstar, draws.p)])
    var = q.var(axis=0, ddof=1) if q.shape[0] > 1 else np.zeros(q.shape[1:])
    return 1.0 / np.maximum(var, VARIANCE_FLOOR)


def bootstrap_weights(dataset, B: int, theta_tilde: float, v_grid, family="frank", fmt="hard",
                      bandwidth_mode="rot", seed: int = 0, on_underflow="clip") -> np.ndarray:
    """Weights ``W(n, j)``, rows ordered by increasing ``n`` over the usable cells."""
    if B < 2:
        raise ParameterError("bootstrap weights need at least two replicates")
    cells = usable_cells(dataset)
    draws = bootstrap_draws(cells, np.asarray(v_grid, dtype=float), B, seed, fmt, bandwidth_mode, on_underflow)
    return weights_from_draws(family, draws, theta_tilde)


# --------------------------------------------------------------------------- full pipeline


@dataclass
class EstimationResult:
    family: str
    format: str
    n_set: list
    p_hat: dict
    theta_hat: float
    theta_se: float
    theta_ci: tuple
    rho_hat: float
    rho_ci: tuple
    v_grid: np.ndarray
    f_grid: np.ndarray
    f_avg: np.ndarray
    kappa_hat: dict
    support_hat: tuple
    objective: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "format": self.format,
            "n_set": list(self.n_set),
            "p_hat": {str(k): v for k, v in self.p_hat.items()},
            "theta_hat": self.theta_hat,
            "theta_se": self.theta_se,
            "theta_ci": list(self.theta_ci),
            "rho_hat": self.rho_hat,
            "rho_ci": list(self.rho_ci),
            "v_grid": self.v_grid.tolist(),
            "f_grid": self.f_grid.tolist(),
            "f_avg": self.f_avg.tolist(),
            "kappa_hat": {str(k): v for k, v in self.kappa_hat.items()},
            "support_hat": list(self.support_hat),
            "objective": self.objective,
            "diagnostics": self.diagnostics,
        }


def default_v_grid(costs, points: int = GRID_POINTS) -> np.ndarray:
    """Equispaced grid over the central 90% of pooled pseudo costs."""
    lo, hi = np.quantile(np.asarray(costs, dtype=float), [0.05, 0.95])
    return np.linspace(lo, hi, points)


def _averaged_cdf(family, theta, cell_costs, ps, v):
    fs = np.stack([fhat_star(c, v) for c in cell_costs])
    return q_matrix(family, fs, ps, theta).mean(axis=0)


def gmm_estimate(
    dataset,
    v_grid: Optional[Sequence[float]] = None,
    theta_grid: Optional[Sequence[float]] = None,
    fmt="hard",
    family="frank",
    B: int = 200,
    bandwidth_mode: str = "rot",
    seed: int = 0,
    on_underflow: str = "clip",
) -> EstimationResult:
    """Estimate entry probabilities, the copula parameter, the cost CDF and entry costs.

    Steps: identity-weighted search for a preliminary theta; bootstrap
    inverse-variance weights at that value; weighted search for the final
    estimate. Standard error and intervals come from re-running the weighted
    search on every bootstrap replicate.
    """
    family = Family(family)
    if family not in (Family.FRANK, Family.JOE):
        raise ParameterError("estimation needs a parametric copula family")
    fmt = Format(fmt)
    if fmt is Format.RESERVE:
        raise ParameterError("estimation covers the hard and soft formats only")
    cells = usable_cells(dataset)
    if len(cells) < 2:
        raise UnidentifiedError("at least two cells with n >= 3 and enough bids are required")
    ns = sorted(cells)
    ests = [_estimate_cell(cells[n], n, fmt, bandwidth_mode, on_underflow) for n in ns]
    ps = np.array([e.p for e in ests])
    if np.ptp(ps) <= 0.01:
        warnings.warn("entry probabilities differ by at most 0.01 across cells; theta is weakly identified",
                      WeakIdentificationWarning, stacklevel=2)

    pooled = np.concatenate([e.costs for e in ests])
    v_grid = default_v_grid(pooled) if v_grid is None else np.asarray(v_grid, dtype=float)
    theta_grid = default_theta_grid(family) if theta_grid is None else np.asarray(theta_grid, dtype=float)
    fstar = np.stack([fhat_star(e.costs, v_grid) for e in ests])

    step0 = search_theta(family, fstar, ps, np.ones_like(fstar), theta_grid)
    draws = bootstrap_draws(cells, v_grid, B, seed, fmt, bandwidth_mode, on_underflow)
    W = weights_from_draws(family, draws, step0.theta)
    step2 = search_theta(family, fstar, ps, W, theta_grid)
    if step2.flat:
        warnings.warn("profiled objective is flat in theta; theta is not identified",
                      WeakIdentificationWarning, stacklevel=2)
    theta = step2.theta

    reps = np.array([search_theta(family, fs, p, W, theta_grid).theta for fs, p in zip(draws.fstar, draws.p)])
    se = float(reps.std(ddof=1)) if reps.size > 1 else float("nan")
    t_lo, t_hi = (float(x) for x in np.quantile(reps, [0.025, 0.975]))
    copula = CopulaModel(family, theta)
    rho = lambda t: spearman_rho(CopulaModel(family, t))  # noqa: E731

    q = q_matrix(family, fstar, ps, theta)
    f_grid = isotonic_inner(q, W)
    f_avg = q.mean(axis=0)

    # averaged step CDF between consecutive pooled pseudo costs
    knots = np.unique(pooled)
    levels = _averaged_cdf(family, theta, [e.costs for e in ests], ps, knots)
    kappa = {int(e.n): step_entry_cost(copula, knots, levels, e.p, e.n, fmt) for e in ests}

    diagnostics = {
        "bandwidth": {str(e.n): e.bandwidth for e in ests},
        "bandwidth_mode": bandwidth_mode,
        "inversion_fraction": {str(e.n): e.inversion_fraction for e in ests},
        "density_underflow": {str(e.n): e.underflow for e in ests},
        "bids": {str(e.n): int(e.bids.size) for e in ests},
        "auctions": {str(n): len(cells[n]) for n in ns},
        "bootstrap_replicates": int(B),
        "theta_preliminary": step0.theta,
        "objective_flat": step2.flat,
        "weights": W.tolist(),
        "seed": int(seed),
    }
    return EstimationResult(
        family=family.value,
        format=fmt.value,
        n_set=ns,
        p_hat={int(n): float(p) for n, p in zip(ns, ps)},
        theta_hat=theta,
        theta_se=se,
        theta_ci=(t_lo, t_hi),
        rho_hat=rho(theta),
        rho_ci=(rho(t_lo), rho(t_hi)),
        v_grid=v_grid,
        f_grid=f_grid,
        f_avg=f_avg,
        kappa_hat=kappa,
        support_hat=(float(pooled.min()), float(pooled.max())),
        objective=step2.objective,
        diagnostics=diagnostics,
    )
