"""Synthetic auction data generated from solved entry equilibria.

Only auctions with at least two active bidders are recorded, so the observed
number of bidders follows a binomial law truncated below at two.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .copula import CopulaModel, family_c2
from .equilibrium import AuctionEnvironment, BidFunction, Format, solve_entry
from .errors import ConvergenceError, InsufficientDataError, ParameterError
from .marginal import ValueDistribution
from .outcomes import prob_at_least_two

DRAW_TOL = 1e-10
MIN_RETENTION = 1e-4
_BATCH = 512


# --------------------------------------------------------------------------- cost draws


def _c2_inverse(copula: CopulaModel, s, u, tol=DRAW_TOL, max_iter=100):
    s, u = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(u, dtype=float))
    lo = np.zeros(s.shape)
    hi = np.ones(s.shape)
    for _ in range(max_iter):
        if np.all(hi - lo < tol):
            break
        mid = 0.5 * (lo + hi)
        below = family_c2(copula.family, mid, s, copula.theta) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        raise ConvergenceError("conditional cost draw did not converge")
    return 0.5 * (lo + hi)


def conditional_cost_draw(copula: CopulaModel, values: ValueDistribution, s, u):
    """Cost of a bidder with signal rank ``s``, using uniform ``u`` for the inversion.

    Solves ``C2(x, s) = u`` for the cost rank ``x`` by bisection, then maps it
    through the quantile function.
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any((s <= 0) | (s >= 1)) or np.any((u <= 0) | (u >= 1)):
        raise ParameterError("s and u must lie in the open unit interval")
    return values._quantile(_c2_inverse(copula, s, u))


def entrant_cost_draw(env: AuctionEnvironment, p: float, u):
    """Cost of an entrant drawn from the conditional-on-entry law ``C(F(v), p) / p``."""
    x = env.copula.q_inverse(np.asarray(u, dtype=float), p)
    return env.values._quantile(x)


# --------------------------------------------------------------------------- records


@dataclass(frozen=True)
class AuctionRecord:
    n: int
    n_active: int
    bids: tuple
    signals: Optional[tuple] = None
    costs: Optional[tuple] = None
    entered: Optional[tuple] = None


@dataclass
class AuctionDataset:
    records: list
    seed: Optional[int] = None
    fingerprint: str = ""
    entry: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def n_values(self) -> list:
        return sorted({r.n for r in self.records})

    def cell(self, n: int) -> list:
        return [r for r in self.records if r.n == n]

    def bids(self, n: int) -> np.ndarray:
        return np.array([b for r in self.cell(n) for b in r.bids], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["auction_id", "n", "n_active", "bid"])
            for aid, r in enumerate(self.records):
                for b in r.bids:
                    w.writerow([aid, r.n, r.n_active, repr(float(b))])

    def latent_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["auction_id", "n", "bidder", "signal", "cost", "entered"])
            for aid, r in enumerate(self.records):
                if r.signals is None:
                    raise ParameterError("dataset carries no latent draws")
                for i, (s, v, e) in enumerate(zip(r.signals, r.costs, r.entered)):
                    w.writerow([aid, r.n, i, repr(float(s)), repr(float(v)), int(e)])

    @classmethod
    def from_csv(cls, path) -> "AuctionDataset":
        """Read a bid file with columns ``auction_id,n,n_active,bid``."""
        grouped: dict = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"auction_id", "n", "n_active", "bid"} - set(reader.fieldnames or [])
            if missing:
                raise ParameterError(f"bid file lacks columns {sorted(missing)}")
            for row in reader:
                aid = row["auction_id"]
                n, k = int(row["n"]), int(row["n_active"])
                entry = grouped.setdefault(aid, [n, k, []])
                if entry[0] != n or entry[1] != k:
                    raise ParameterError(f"auction {aid} has inconsistent n or n_active")
                entry[2].append(float(row["bid"]))
        records = []
        for aid, (n, k, bids) in grouped.items():
            if len(bids) != k:
                raise ParameterError(f"auction {aid} lists {len(bids)} bids but n_active={k}")
            if k > n:
                raise ParameterError(f"auction {aid} has more active than potential bidders")
            if not np.all(np.isfinite(bids)):
                raise ParameterError(f"auction {aid} has a non-finite bid")
            records.append(AuctionRecord(n, k, tuple(bids)))
        if not records:
            raise InsufficientDataError("bid file contains no auctions")
        return cls(records)


def environment_fingerprint(envs: Sequence[AuctionEnvironment], ps: Sequence[float]) -> str:
    payload = [
        {
            "n": e.n,
            "kappa": e.kappa,
            "format": e.format.value,
            "reserve": e.reserve,
            "values": e.values.to_config(),
            "copula": e.copula.to_config(),
            "p": p,
        }
        for e, p in zip(envs, ps)
    ]
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------- datasets


def _auction_uniforms(seed: int, env_index: int, attempt: int, n: int) -> np.ndarray:
    """Two rows of ``n`` uniforms (signals, cost inversions) from the auction's own substream."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, env_index, attempt])))
    return gen.random((2, n))


def simulate_dataset(
    envs: Sequence[AuctionEnvironment],
    auctions_per_n: int,
    seed: int,
    entry: Optional[Sequence[float]] = None,
    with_latent: bool = False,
) -> AuctionDataset:
    """Draw ``auctions_per_n`` observed auctions for every environment.

    Each auction attempt has a counter-based substream keyed on
    ``(seed, environment index, attempt index)``; attempts with fewer than two
    active bidders are discarded. ``entry`` overrides the equilibrium entry
    probabilities, which are otherwise solved for.
    """
    if auctions_per_n < 1:
        raise ParameterError("auctions_per_n must be positive")
    ps = []
    for i, env in enumerate(envs):
        p = float(entry[i]) if entry is not None else solve_entry(env).selected_p
        if not 0.0 < p <= 1.0:
            raise ParameterError(f"environment {i} has no entry (p={p})")
        ps.append(p)

    records = []
    for k, (env, p) in enumerate(zip(envs, ps)):
        n = env.n
        retention = prob_at_least_two(p, n)
        if retention < MIN_RETENTION:
            raise ConvergenceError(
                f"retention probability {retention:.2e} for n={n} is too small for rejection sampling"
            )
        beta = BidFunction(env, p)
        kept = []
        attempt = 0
        while len(kept) < auctions_per_n:
            draws = np.stack([_auction_uniforms(seed, k, attempt + j, n) for j in range(_BATCH)])
            attempt += _BATCH
            signals, u = draws[:, 0, :], draws[:, 1, :]
            entered = signals <= p
            s_in = np.clip(signals[entered], 1e-300, None)
            costs = np.full(signals.shape, np.nan)
            costs[entered] = conditional_cost_draw(env.copula, env.values, s_in, u[entered])
            active = entered.copy()
            if env.format is Format.RESERVE:
                active &= costs <= env.reserve
            bids = np.full(signals.shape, np.nan)
            bids[active] = beta(costs[active])
            for j in range(_BATCH):
                if len(kept) == auctions_per_n:
                    break
                m = int(active[j].sum())
                if m < 2:
                    continue
                rec = AuctionRecord(n, m, tuple(bids[j, active[j]].tolist()))
                if with_latent:
                    rec = AuctionRecord(
                        n, m, rec.bids,
                        tuple(signals[j].tolist()), tuple(costs[j].tolist()), tuple(entered[j].tolist()),
                    )
                kept.append(rec)
        records.extend(kept)
    return AuctionDataset(
        records, seed, environment_fingerprint(envs, ps), {env.n: p for env, p in zip(envs, ps)}
    )


# --------------------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MonteCarloSummary:
    auctions: int
    failure_rate: float
    failure_se: float
    mean_winning_bid: float
    winning_bid_se: float


def simulate_outcomes(env: AuctionEnvironment, p: float, auctions: int, seed: int) -> MonteCarloSummary:
    """Failure frequency and mean winning bid over ``auctions`` simulated auctions at entry ``p``.

    The entrant count is binomial and entrant costs are i.i.d. from the
    conditional-on-entry law. Since bids increase in cost, the winner is the
    lowest-cost entrant, whose cost is drawn directly as the minimum of the
    entrants' costs. A sole entrant under the soft format faces a government
    cost drawn from the same law.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, env.n])))
    n = env.n
    k = rng.binomial(n, p, size=auctions)
    has = k >= 1
    # minimum of k uniforms, mapped through the entrant quantile
    u_min = 1.0 - rng.random(auctions) ** (1.0 / np.maximum(k, 1))
    v_min = np.full(auctions, np.nan)
    v_min[has] = entrant_cost_draw(env, p, np.clip(u_min[has], 0.0, 1.0))
    if env.format is Format.HARD:
        success = k >= 2
    elif env.format is Format.SOFT:
        gov = np.full(auctions, -np.inf)
        sole = k == 1
        gov[sole] = entrant_cost_draw(env, p, rng.random(int(sole.sum())))
        success = (k >= 2) | (sole & (v_min <= gov))
    else:
        success = has & (v_min <= env.reserve)
    fail = 1.0 - success.mean()
    fail_se = float(np.sqrt(fail * (1.0 - fail) / auctions))
    if not success.any():
        return MonteCarloSummary(auctions, float(fail), fail_se, float("nan"), float("nan"))
    wins = BidFunction(env, p)(v_min[success])
    se = float(wins.std(ddof=1) / np.sqrt(wins.size)) if wins.size > 1 else float("nan")
    return MonteCarloSummary(auctions, float(fail), fail_se, float(wins.mean()), se)
