"""Command-line entry point: equilibrium, simulate, estimate and counterfactual workflows."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import (
    CounterfactualConfig,
    EquilibriumConfig,
    SimulateConfig,
    build_copula,
    build_values,
)
from .copula import CopulaModel, spearman_rho, theta_from_rho
from .equilibrium import AuctionEnvironment, Format, check_quasiconcavity, marginal_profit, solve_entry
from .errors import (
    ConvergenceError,
    DensityUnderflowError,
    DomainError,
    EquilibriumVanishedError,
    InsufficientDataError,
    ParameterError,
    SingularityError,
    UnidentifiedError,
)
from .estimate import gmm_estimate
from .outcomes import outcome_report
from .simulate import AuctionDataset, simulate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNIDENTIFIED = 4

log = logging.getLogger("procurement_entry")


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------- io helpers


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if x is None else (repr(float(x)) if isinstance(x, (float, np.floating)) else x) for x in row])
    _atomic_write(path, buf.getvalue())


def _load_config(path: str, model):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid config:\n{exc}") from exc


def build_fingerprint() -> str:
    """Version plus a hash of the package sources."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parent
    for f in sorted(root.rglob("*.py")):
        h.update(f.relative_to(root).as_posix().encode())
        h.update(f.read_bytes())
    return f"{__version__} (build {h.hexdigest()[:12]})"


def _parse_range(text: str, name: str):
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"{name} must look like lo:hi:step") from exc
    if step <= 0 or hi < lo:
        raise ConfigError(f"{name} needs lo <= hi and step > 0")
    return np.round(np.arange(lo, hi + 0.5 * step, step), 12)


# --------------------------------------------------------------------------- workflows


def cmd_equilibrium(args) -> str:
    cfg = _load_config(args.config, EquilibriumConfig)
    env = cfg.environment(Path(args.config).parent)
    sol = solve_entry(env, grid_size=cfg.grid_size)
    report = outcome_report(env, sol.selected_p)
    out = sol.to_dict()
    out["outcomes"] = report.to_dict()
    if env.format is not Format.RESERVE:
        qc = check_quasiconcavity(env, cfg.quasiconcavity_grid)
        out["quasiconcavity"] = {
            "sign_changes": qc.sign_changes,
            "decreasing_from": qc.decreasing_from,
            "quasi_concave": qc.quasi_concave,
        }
    outdir = Path(args.out)
    _write_json(outdir / "equilibrium.json", out)
    _write_csv(outdir / "profit_curve.csv", ["p", "profit"], zip(sol.p_grid.tolist(), sol.profit.tolist()))
    return f"equilibrium: selected_p={sol.selected_p:.6f} corner={sol.corner.value} roots={sol.multiplicity}"


def cmd_simulate(args) -> str:
    cfg = _load_config(args.config, SimulateConfig)
    base = Path(args.config).parent
    values = build_values(cfg.values, base)
    copula = build_copula(cfg.copula)
    envs = []
    for m in cfg.markets:
        kappa = m.kappa
        if kappa is None:
            probe = AuctionEnvironment(m.n, 0.0, cfg.format, values, copula, cfg.reserve)
            kappa = marginal_profit(probe, m.p)
        env = AuctionEnvironment(m.n, kappa, cfg.format, values, copula, cfg.reserve)
        if m.p is not None:
            p_sel = solve_entry(env, cfg.grid_size).selected_p
            if abs(p_sel - m.p) > 1e-6:
                raise ConfigError(f"p={m.p} is not the selected equilibrium for n={m.n} (selected {p_sel:.6f})")
        envs.append(env)
    seed = cfg.seed if args.seed is None else args.seed
    ds = simulate_dataset(envs, cfg.auctions_per_n, seed, with_latent=args.with_latent)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    # write through a temp file so readers never see a partial dataset
    with tempfile.TemporaryDirectory(dir=outdir) as td:
        ds.to_csv(Path(td) / "bids.csv")
        os.replace(Path(td) / "bids.csv", outdir / "bids.csv")
        if args.with_latent:
            ds.latent_to_csv(Path(td) / "latent.csv")
            os.replace(Path(td) / "latent.csv", outdir / "latent.csv")
    _write_json(
        outdir / "simulate.json",
        {
            "seed": seed,
            "fingerprint": ds.fingerprint,
            "auctions": len(ds),
            "entry": {str(k): v for k, v in ds.entry.items()},
            "kappa": {str(e.n): e.kappa for e in envs},
        },
    )
    return f"simulate: {len(ds)} auctions, {sum(r.n_active for r in ds.records)} bids, fingerprint {ds.fingerprint}"


def cmd_estimate(args) -> str:
    try:
        ds = AuctionDataset.from_csv(args.bids)
    except OSError as exc:
        raise ConfigError(f"cannot read bids {args.bids}: {exc.strerror}") from exc
    grid = _parse_range(args.theta_grid, "--theta-grid") if args.theta_grid else None
    v_grid = None
    if args.v_grid:
        try:
            lo, hi, count = args.v_grid.split(":")
            v_grid = np.linspace(float(lo), float(hi), int(count))
        except ValueError as exc:
            raise ConfigError("--v-grid must look like lo:hi:count") from exc
    res = gmm_estimate(
        ds,
        v_grid=v_grid,
        theta_grid=grid,
        fmt=args.format,
        family=args.copula,
        B=args.bootstrap,
        bandwidth_mode=args.bandwidth,
        seed=args.seed,
    )
    outdir = Path(args.out)
    _write_json(outdir / "estimate.json", res.to_dict())
    _write_csv(outdir / "fhat.csv", ["v", "F", "F_avg"], zip(res.v_grid.tolist(), res.f_grid.tolist(), res.f_avg.tolist()))
    d = res.diagnostics
    rows = [
        (n, res.p_hat[n], res.kappa_hat[n], d["auctions"][str(n)], d["bids"][str(n)], d["bandwidth"][str(n)],
         d["inversion_fraction"][str(n)], d["density_underflow"][str(n)])
        for n in res.n_set
    ]
    _write_csv(
        outdir / "cells.csv",
        ["n", "p_hat", "kappa_hat", "auctions", "bids", "bandwidth", "inversion_fraction", "density_underflow"],
        rows,
    )
    return f"estimate: theta={res.theta_hat:.4f} (se {res.theta_se:.4f}) rho={res.rho_hat:.4f}"


def counterfactual_rows(cfg: CounterfactualConfig, base_dir=None):
    values = build_values(cfg.values, base_dir)
    if cfg.theta is not None:
        thetas = [float(t) for t in cfg.theta]
    else:
        thetas = [theta_from_rho(cfg.family, r) for r in cfg.rho]
    rows = []
    for theta in thetas:
        cop = CopulaModel(cfg.family, theta)
        rho = spearman_rho(cop)
        for fs in cfg.formats:
            for n in cfg.n:
                for kappa in cfg.kappa:
                    env = AuctionEnvironment(n, kappa, fs.format, values, cop, fs.reserve)
                    rep = outcome_report(env, solve_entry(env, cfg.grid_size).selected_p)
                    rows.append(
                        (fs.format, n, float(kappa), theta, rho, rep.p, rep.prob_bidding, rep.prob_failure,
                         rep.expected_winning_bid)
                    )
    return rows


COUNTERFACTUAL_COLUMNS = [
    "format", "n", "kappa", "theta", "rho", "p", "prob_bidding", "prob_failure", "expected_winning_bid",
]


def cmd_counterfactual(args) -> str:
    cfg = _load_config(args.config, CounterfactualConfig)
    rows = counterfactual_rows(cfg, Path(args.config).parent)
    _write_csv(Path(args.out) / "counterfactual.csv", COUNTERFACTUAL_COLUMNS, rows)
    return f"counterfactual: {len(rows)} rows"


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="procurement-entry", description=__doc__)
    ap.add_argument("--version", action="version", version=f"procurement-entry {build_fingerprint()}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="solve the entry equilibrium of one market")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("simulate", help="simulate an observed bid dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--with-latent", action="store_true", help="also write signals and costs (testing only)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate model primitives from a bid CSV")
    p.add_argument("--bids", required=True)
    p.add_argument("--out", default=".")
    p.add_argument("--format", choices=["hard", "soft"], default="hard")
    p.add_argument("--copula", choices=["frank", "joe"], default="frank")
    p.add_argument("--bootstrap", type=int, default=200)
    p.add_argument("--theta-grid", default=None, help="lo:hi:step")
    p.add_argument("--v-grid", default=None, help="lo:hi:count")
    p.add_argument("--bandwidth", choices=["rot", "undersmooth"], default="rot")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("counterfactual", help="sweep outcomes over formats, n, kappa and theta")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_counterfactual)
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        try:
            summary = args.func(args)
        except (ConfigError, ParameterError, DomainError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (UnidentifiedError, EquilibriumVanishedError) as exc:
            print(f"unidentified: {exc}", file=sys.stderr)
            return EXIT_UNIDENTIFIED
        except (ConvergenceError, SingularityError, DensityUnderflowError, InsufficientDataError,
                FloatingPointError) as exc:
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    print(summary)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
