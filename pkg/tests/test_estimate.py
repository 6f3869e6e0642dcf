import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from procurement_entry import AuctionDataset, AuctionRecord, CopulaModel, simulate_dataset, spearman_rho
from procurement_entry.errors import (
    DensityUnderflowError,
    DomainError,
    InsufficientDataError,
    ParameterError,
    UnidentifiedError,
)
from procurement_entry.estimate import (
    BidDensity,
    bandwidth,
    bid_ecdf,
    bootstrap_weights,
    entry_cost,
    estimate_entry_probability,
    eta_hard,
    eta_soft,
    fhat_star,
    gmm_estimate,
    inverse_bid,
    invert_entry_share,
    isotonic_inner,
    observed_entry_share,
    pseudo_costs_cell,
    q_matrix,
    triweight,
)
from procurement_entry.estimate.gmm import (
    WeakIdentificationWarning,
    inner_objective,
    profiled_objective,
    step_entry_cost,
)

from primitives import DESIGN_KAPPA, DESIGN_P, THETA0, brute_force_isotonic, design_env, exact_bid_objects


@pytest.fixture(scope="module")
def design_data():
    envs = [design_env(n) for n in (5, 8, 12)]
    return simulate_dataset(envs, 1000, seed=1, entry=[DESIGN_P[n] for n in (5, 8, 12)])


# --------------------------------------------------------------------------- entry probabilities


def test_entry_share_inversion_anchor():
    share = float(observed_entry_share(0.186, 9))
    assert share == pytest.approx(0.2885, abs=1e-4)
    assert invert_entry_share(share, 9) == pytest.approx(0.186, abs=1e-9)
    assert invert_entry_share(0.2885, 9) == pytest.approx(0.186, abs=1e-3)
    assert invert_entry_share(1.0, 7) == 1.0


def test_entry_share_errors():
    with pytest.raises(UnidentifiedError):
        invert_entry_share(0.7, 2)
    with pytest.raises(DomainError):
        invert_entry_share(2 / 9, 9)
    with pytest.raises(DomainError):
        invert_entry_share(1.2, 9)


@settings(max_examples=100, deadline=None)
@given(p=st.floats(1e-3, 1.0), n=st.integers(3, 30))
def test_entry_share_round_trip(p, n):
    share = float(observed_entry_share(p, n))
    assert 2 / n < share <= 1.0
    assert invert_entry_share(share, n) == pytest.approx(p, abs=1e-8)


def test_entry_share_monotone_with_limit():
    p = np.linspace(1e-4, 1, 500)
    for n in (3, 9, 20):
        m = observed_entry_share(p, n)
        assert np.all(np.diff(m) > 0)
        assert observed_entry_share(0.0, n) == pytest.approx(2 / n)
        assert m[0] == pytest.approx(2 / n, abs=1e-3)


def test_estimate_entry_probability_from_dataset():
    recs = [AuctionRecord(6, k, tuple(np.linspace(1, 1.1, k))) for k in (2, 3, 3, 4)]
    data = AuctionDataset(recs)
    share = np.mean([2 / 6, 3 / 6, 3 / 6, 4 / 6])
    assert estimate_entry_probability(data, 6) == pytest.approx(invert_entry_share(share, 6))
    with pytest.raises(InsufficientDataError):
        estimate_entry_probability(data, 7)


# --------------------------------------------------------------------------- bid density


def _plain_kde(data, h, b):
    return triweight((b[:, None] - data[None, :]) / h).sum(axis=1) / (data.size * h)


def test_interior_equals_plain_kernel():
    rng = np.random.default_rng(0)
    data = rng.normal(size=800)
    d = BidDensity(data)
    b = np.linspace(data.min() + d.h, data.max() - d.h, 50)
    assert np.allclose(d(b), _plain_kde(data, d.h, b), rtol=1e-10, atol=1e-12)
    assert np.allclose(d.direct(b), _plain_kde(data, d.h, b), rtol=1e-12, atol=1e-14)


def test_density_normalization():
    rng = np.random.default_rng(1)
    sim = simulate_dataset([design_env(8)], 1000, seed=6, entry=[DESIGN_P[8]])
    for data in [rng.beta(2, 5, 3000), rng.uniform(size=2000), sim.bids(8)]:
        d = BidDensity(data)
        total, _ = integrate.quad(lambda t: float(d(np.array([t]))[0]), data.min(), data.max(), limit=400)
        assert total == pytest.approx(1.0, abs=0.02)


def test_boundary_correction_on_uniform():
    rng = np.random.default_rng(2)
    data = rng.uniform(size=5000)
    d = BidDensity(data)
    assert abs(float(d(np.array([0.01]))[0]) - 1.0) < 0.1
    plain = float(_plain_kde(data, d.h, np.array([0.01]))[0])
    assert abs(plain - 0.5) < 0.15


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(30, 600))
def test_fast_density_matches_direct(seed, m):
    rng = np.random.default_rng(seed)
    data = 0.8 + rng.gamma(2.0, 0.1, m)
    d = BidDensity(data)
    b = np.linspace(data.min(), data.max(), 97)
    fast, slow = d(b), d.direct(b)
    assert np.max(np.abs(fast - slow)) <= 1e-7 * max(1.0, np.max(np.abs(slow)))


def test_bandwidth_rules_and_errors():
    rng = np.random.default_rng(3)
    data = rng.normal(size=500)
    sd = data.std(ddof=1)
    assert bandwidth(data) == pytest.approx(3.15 * sd * 500 ** -0.2)
    assert bandwidth(data, "undersmooth") == pytest.approx(3.15 * sd * 500 ** (-0.2 + 1 / 17))
    with pytest.raises(InsufficientDataError):
        BidDensity(data[:29])
    with pytest.raises(ParameterError):
        bandwidth(np.ones(40))


def test_ecdf():
    data = np.array([3.0, 1.0, 2.0, 2.0])
    assert np.allclose(bid_ecdf(data, [0.5, 1.0, 2.0, 2.5, 3.0]), [0, 0.25, 0.75, 0.75, 1.0])


# --------------------------------------------------------------------------- inverse bidding


def test_eta_values():
    assert eta_hard(0.5, 0.0, 3) == pytest.approx(1.5)
    for p in [0.1, 0.5, 0.9]:
        for n in [3, 8]:
            assert eta_hard(p, 1.0, n) == pytest.approx(0.0, abs=1e-14)
            assert eta_soft(p, 1.0, n) == pytest.approx(0.0, abs=1e-14)
    assert inverse_bid("hard", 1.3, 0.4, 5, 1.0, 2.0) == pytest.approx(1.3)
    with pytest.raises(ParameterError):
        inverse_bid("reserve", 1.3, 0.4, 5, 0.5, 2.0)


@pytest.mark.parametrize("fmt", ["hard", "soft"])
@pytest.mark.parametrize("n,p", [(5, 0.45), (12, 0.18)])
def test_inverse_bidding_round_trip(fmt, n, p):
    env = design_env(n, fmt)
    v = np.linspace(0.5, 1.5, 102)[1:-1]
    beta, G, g = exact_bid_objects(env, p, v)
    back = inverse_bid(fmt, beta, p, n, G, g)
    assert np.max(np.abs(back - v)) < 1e-6


def test_soft_win_probability_in_bid_quantiles():
    # the soft markdown rests on H(beta^-1(b)) = (1 - p G)^(n-1) - (1-p)^(n-1) G
    from procurement_entry import win_prob

    env = design_env(8, "soft")
    p, n = 0.3, 8
    v = np.linspace(0.55, 1.45, 30)
    _, G, _ = exact_bid_objects(env, p, v)
    assert np.allclose(win_prob(env, p, v), (1 - p * G) ** (n - 1) - (1 - p) ** (n - 1) * G, atol=1e-14)


def test_pseudo_costs_underflow_policy(design_data):
    # the local-linear estimate dips below zero at the top bid of this cell
    bids = design_data.bids(8)
    with pytest.raises(DensityUnderflowError):
        pseudo_costs_cell(bids, 8, 0.3, on_underflow="raise")
    pc = pseudo_costs_cell(bids, 8, 0.3, on_underflow="clip")
    assert pc.underflow >= 1 and np.all(np.isfinite(pc.costs))
    with pytest.raises(ParameterError):
        pseudo_costs_cell(bids, 8, 0.3, on_underflow="ignore")


def test_pseudo_costs_recover_entrant_distribution():
    n, p = 5, DESIGN_P[5]
    env = design_env(n)
    data = simulate_dataset([env], 3700, seed=21, entry=[p])
    bids = data.bids(n)
    assert bids.size >= 10_000
    pc = pseudo_costs_cell(bids, n, p, on_underflow="clip")
    assert pc.inversion_fraction < 0.05
    v = np.linspace(0.55, 1.45, 200)
    truth = env.copula.cdf(env.values.cdf(v), p) / p
    assert np.max(np.abs(fhat_star(pc.costs, v) - truth)) < 0.03


# --------------------------------------------------------------------------- GMM building blocks


def test_fhat_star_steps():
    costs = np.array([1.0, 2.0, 3.0, 4.0])
    assert fhat_star(costs, 0.5) == 0.0
    assert fhat_star(costs, 5.0) == 1.0
    assert np.allclose(np.diff(fhat_star(costs, [1.0, 2.0, 3.0, 4.0])), 0.25)


def test_isotonic_examples():
    y = np.array([[0.1, 0.3, 0.8]])
    assert np.allclose(isotonic_inner(y, np.ones_like(y)), y)
    y = np.array([[0.6, 0.4]])
    assert np.allclose(isotonic_inner(y, np.ones_like(y)), [0.5, 0.5])
    y = np.array([[-0.3, 1.4]])
    assert np.allclose(isotonic_inner(y, np.ones_like(y)), [0.0, 1.0])
    with pytest.raises(ParameterError):
        isotonic_inner(np.ones((2, 3)), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), J=st.integers(1, 8), rows=st.integers(1, 4))
def test_isotonic_matches_brute_force(seed, J, rows):
    rng = np.random.default_rng(seed)
    q = rng.uniform(-0.3, 1.3, (rows, J))
    w = rng.uniform(0.05, 5.0, (rows, J))
    y = isotonic_inner(q, w)
    _, best = brute_force_isotonic(q, w)
    assert np.all(np.diff(y) >= 0) and y.min() >= 0 and y.max() <= 1
    assert inner_objective(q, w, y) == pytest.approx(best, abs=1e-8)


def test_objective_minimized_at_true_theta_with_exact_inputs():
    vals = design_env(5).values
    c0 = CopulaModel.frank(THETA0)
    v = np.linspace(0.6, 1.4, 19)
    ps = np.array([DESIGN_P[n] for n in (5, 8, 12)])
    fstar = np.stack([c0.cdf(vals.cdf(v), p) / p for p in ps])
    w = np.ones_like(fstar)
    at_truth = profiled_objective("frank", fstar, ps, w, THETA0)
    assert at_truth < 1e-14
    grid = np.arange(0.1, 20.01, 0.1)
    values = [profiled_objective("frank", fstar, ps, w, t) for t in grid]
    assert np.all(np.array(values) >= at_truth)
    # Q recovers F at the true theta
    q = q_matrix("frank", fstar, ps, THETA0)
    assert np.allclose(q, vals.cdf(v)[None, :], atol=1e-9)


@pytest.mark.parametrize("n", [5, 8, 12])
def test_entry_cost_consistency(n):
    env = design_env(n)
    vals = env.values
    k = entry_cost(env.copula, vals.cdf, DESIGN_P[n], n, vals.lower, vals.upper)
    assert k == pytest.approx(DESIGN_KAPPA[n], abs=1e-6)
    knots = np.linspace(vals.lower, vals.upper, 20001)
    step = step_entry_cost(env.copula, knots, vals.cdf(knots), DESIGN_P[n], n)
    assert step == pytest.approx(DESIGN_KAPPA[n], abs=1e-4)


# --------------------------------------------------------------------------- bootstrap weights


def _identical_auctions(n, k, count, base):
    bids = tuple(base + 0.01 * np.arange(k))
    return [AuctionRecord(n, k, bids) for _ in range(count)]


def test_bootstrap_variance_floor():
    recs = _identical_auctions(5, 3, 20, 1.0) + _identical_auctions(8, 4, 20, 1.0)
    data = AuctionDataset(recs)
    w = bootstrap_weights(data, 4, 3.0, np.linspace(0.9, 1.0, 5))
    assert np.all(w == 1e12)


def test_bootstrap_weights_shuffle_invariant(design_data):
    v = np.linspace(0.7, 1.3, 7)
    w1 = bootstrap_weights(design_data, 5, THETA0, v, seed=3)
    rng = np.random.default_rng(0)
    recs = list(design_data.records)
    rng.shuffle(recs)
    shuffled = AuctionDataset([AuctionRecord(r.n, r.n_active, tuple(rng.permutation(r.bids))) for r in recs])
    w2 = bootstrap_weights(shuffled, 5, THETA0, v, seed=3)
    assert np.array_equal(w1, w2)
    assert w1.shape == (3, 7) and np.all(w1 > 0)


def test_bootstrap_weights_need_two_auctions():
    data = AuctionDataset([AuctionRecord(5, 35, tuple(np.linspace(1, 2, 35)))] * 1
                          + _identical_auctions(8, 4, 20, 1.0))
    with pytest.raises((InsufficientDataError, DomainError)):
        bootstrap_weights(data, 3, 3.0, np.linspace(1.0, 1.5, 5))


@pytest.mark.slow
def test_bootstrap_sd_tracks_sampling_sd():
    envs = [design_env(n) for n in (5, 8, 12)]
    entry = [DESIGN_P[n] for n in (5, 8, 12)]
    v = np.linspace(0.7, 1.3, 7)
    qs = []
    from procurement_entry.estimate.gmm import _estimate_cell, usable_cells

    for seed in range(100, 160):
        data = simulate_dataset(envs, 1000, seed=seed, entry=entry)
        cells = usable_cells(data)
        ests = [_estimate_cell(cells[n], n, "hard", "rot", "clip") for n in sorted(cells)]
        fs = np.stack([fhat_star(e.costs, v) for e in ests])
        qs.append(q_matrix("frank", fs, np.array([e.p for e in ests]), THETA0))
    true_sd = np.std(qs, axis=0, ddof=1)
    data = simulate_dataset(envs, 1000, seed=99, entry=entry)
    boot_sd = bootstrap_weights(data, 500, THETA0, v, seed=0) ** -0.5
    ratio = boot_sd / true_sd
    assert np.all((ratio > 1 / 1.5) & (ratio < 1.5)), ratio


# --------------------------------------------------------------------------- full estimator


@pytest.fixture(scope="module")
def design_fit(design_data):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return gmm_estimate(design_data, B=30, seed=0)


def test_gmm_result_invariants(design_fit):
    r = design_fit
    assert r.n_set == [5, 8, 12]
    assert np.all(np.diff(r.f_grid) >= 0) and r.f_grid.min() >= 0 and r.f_grid.max() <= 1
    assert all(k > 0 for k in r.kappa_hat.values())
    assert r.theta_ci[0] <= r.theta_hat <= r.theta_ci[1] or r.theta_se > 0
    assert r.rho_hat == pytest.approx(spearman_rho(CopulaModel.frank(r.theta_hat)))
    assert r.support_hat[0] < r.v_grid[0] < r.v_grid[-1] < r.support_hat[1]
    for n in (5, 8, 12):
        assert r.p_hat[n] == pytest.approx(DESIGN_P[n], abs=0.03)
    assert abs(r.theta_hat - THETA0) < 1.5


def test_gmm_deterministic(design_data, design_fit):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        again = gmm_estimate(design_data, B=30, seed=0)
    assert again.to_dict() == design_fit.to_dict()


def test_gmm_identification_guards(design_data):
    one = AuctionDataset(design_data.cell(5))
    with pytest.raises(UnidentifiedError):
        gmm_estimate(one, B=5)
    with pytest.raises(ParameterError):
        gmm_estimate(design_data, fmt="reserve", B=5)
    with pytest.raises(ParameterError):
        gmm_estimate(design_data, family="independence", B=5)


def test_gmm_weak_identification_warning():
    envs = [design_env(5), design_env(8)]
    data = simulate_dataset(envs, 400, seed=2, entry=[0.3, 0.3])
    with pytest.warns(WeakIdentificationWarning):
        gmm_estimate(data, B=5, theta_grid=np.arange(1.0, 10.01, 1.0))


def test_gmm_drops_two_bidder_cell(design_data):
    recs = list(design_data.records) + [AuctionRecord(2, 2, (1.0, 1.1))] * 40
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = gmm_estimate(AuctionDataset(recs), B=5, seed=0)
    assert 2 not in r.n_set and 2 not in r.kappa_hat


@pytest.mark.slow
def test_independence_data_gives_small_rho():
    from procurement_entry import AuctionEnvironment

    vals = design_env(5).values
    envs = [AuctionEnvironment(n, 0.01, "hard", vals, CopulaModel.independence()) for n in (5, 8, 12)]
    data = simulate_dataset(envs, 1000, seed=8, entry=[DESIGN_P[n] for n in (5, 8, 12)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = gmm_estimate(data, B=50, seed=0)
    assert abs(r.rho_hat) < 0.08
