"""Command-line interface.

Subcommands:
    analyze    run the full pipeline over a data directory and emit reports
    simulate   generate a stylized-book symbol-day (quotes, trades, labels)
    clt-check  Monte-Carlo check of the imbalance/volume scaling limit
    oracle     compare the regression engine against direct textbook formulas

Exit codes: 0 success, 1 fatal configuration or I/O error, 2 partial run
(at least one symbol failed while others succeeded).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import OfilabError
from .flow import ScalingParams
from .ols import newey_west_auto_lag, ols, with_intercept
from .pipeline import RunConfig, run_pipeline
from .report import emit_reports
from .synth import SynthParams, proposition1_check, simulate_stylized_book

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ofilab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"ofilab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the pipeline over a data directory")
    pa.add_argument("data_dir", help="directory of <SYMBOL>_<DATE>_{quotes,trades}.csv files")
    pa.add_argument("--symbols", nargs="+", default=None,
                    help="symbols to analyze (default: discover from file names)")
    pa.add_argument("--dates", nargs="+", default=None, help="ISO dates (default: discover)")
    pa.add_argument("--config", default=None, help="JSON config file; flags override it")
    pa.add_argument("--dt", type=int, default=None, help="bucket length, seconds (default 10)")
    pa.add_argument("--window", type=int, default=None,
                    help="estimation window, seconds (default 1800)")
    pa.add_argument("--tick-size", type=float, default=None, help="tick size (default 0.01)")
    pa.add_argument("--trade-test", choices=["quote", "tick"], default=None,
                    help="trade signing rule (default quote)")
    pa.add_argument("--spread-pct", type=float, default=None,
                    help="spread filter percentile (default 0.95)")
    pa.add_argument("--nw-lags", type=int, default=None,
                    help="Newey-West lag override (default automatic)")
    pa.add_argument("--quadratic", action="store_true", default=None,
                    help="add the signed-square flow term")
    pa.add_argument("--drop-empty-buckets", action="store_true", default=None)
    pa.add_argument("--exclude-price-changing", action="store_true", default=None)
    pa.add_argument("--out", default=None, help="output directory (default ./out)")
    pa.add_argument("--format", nargs="+", choices=["csv", "json"], default=None)
    pa.add_argument("--seed", type=int, default=None)

    ps = sub.add_parser("simulate", help="emit a synthetic symbol-day")
    ps.add_argument("--out", required=True, help="output directory")
    ps.add_argument("--symbol", default="SYN")
    ps.add_argument("--date", default="2010-04-01")
    ps.add_argument("--depth", type=int, default=50, help="shares per level (default 50)")
    ps.add_argument("--rate", type=float, default=5.0, help="events per second (default 5)")
    ps.add_argument("--horizon", type=int, default=23400, help="seconds (default 23400)")
    ps.add_argument("--mid", type=float, default=100.0, help="initial mid price")
    ps.add_argument("--spread-ticks", type=int, default=20, help="initial spread in ticks")
    ps.add_argument("--tick-size", type=float, default=0.01)
    ps.add_argument("--sizes", default=None, help="size distribution, e.g. uniform:1:100")
    ps.add_argument("--improve-prob", type=float, default=0.0)
    ps.add_argument("--seed", type=int, default=0)

    pc = sub.add_parser("clt-check", help="imbalance/volume scaling-limit harness")
    pc.add_argument("--replications", type=int, default=1000)
    pc.add_argument("--rate", type=float, default=10.0, help="events per second")
    pc.add_argument("--horizon", type=float, default=1000.0, help="seconds per replication")
    pc.add_argument("--trade-fraction", type=float, default=0.5)
    pc.add_argument("--mean-size", type=float, default=100.0)
    pc.add_argument("--sigma", type=float, default=100.0)
    pc.add_argument("--e-dist", choices=["normal", "rademacher", "uniform"], default="normal")
    pc.add_argument("--size-dist", choices=["fixed", "geometric", "exponential"],
                    default="fixed")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", default=None, help="optional JSON report path")

    po = sub.add_parser("oracle", help="regression engine vs textbook formulas")
    po.add_argument("fixture", help="CSV with a y column and x* regressor columns")
    po.add_argument("--nw-lags", type=int, default=4)
    return parser


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _discover_symbols(data_dir: Path) -> list[str]:
    symbols = sorted({p.name.rsplit("_", 2)[0] for p in data_dir.glob("*_quotes.csv")})
    return symbols


def _cmd_analyze(args) -> int:
    base: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            base = json.load(f)

    data_dir = Path(args.data_dir)
    if not data_dir.is_dir():
        log.error("data directory does not exist: %s", data_dir)
        return 1
    symbols = args.symbols or base.get("symbols") or _discover_symbols(data_dir)
    if not symbols:
        log.error("no symbols found in %s", data_dir)
        return 1

    overrides = {
        "dates": args.dates,
        "dt": args.dt,
        "window": args.window,
        "tick": args.tick_size,
        "trade_test": {"quote": "quote_test", "tick": "tick_test"}.get(args.trade_test),
        "spread_percentile": args.spread_pct,
        "nw_lags": args.nw_lags,
        "quadratic": args.quadratic,
        "drop_empty_buckets": args.drop_empty_buckets,
        "exclude_price_changing": args.exclude_price_changing,
        "out_dir": args.out,
        "formats": tuple(args.format) if args.format else None,
        "seed": args.seed,
    }
    merged = dict(base)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.pop("symbols", None)
    merged.pop("data_dir", None)
    if "formats" in merged:
        merged["formats"] = tuple(merged["formats"])

    try:
        config = RunConfig(data_dir=str(data_dir), symbols=list(symbols), **merged)
        report = run_pipeline(config)
        paths = emit_reports(report)
    except (OfilabError, OSError, ValueError) as err:
        log.error("fatal: %s", err)
        return 1

    for p in paths:
        log.info("wrote %s", p)
    for sym, msg in report.errors.items():
        print(f"ERROR {sym}: {msg}", file=sys.stderr)
    if report.failed:
        return 1
    if report.partial:
        return 2
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    try:
        params = SynthParams(
            depth=args.depth, tick=args.tick_size, initial_mid=args.mid,
            initial_spread_ticks=args.spread_ticks, event_rate=args.rate,
            horizon=args.horizon, size_dist=args.sizes,
            improve_prob=args.improve_prob, seed=args.seed, day=args.date,
        )
        sim = simulate_stylized_book(params)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        qpath = out / f"{args.symbol}_{args.date}_quotes.csv"
        tpath = out / f"{args.symbol}_{args.date}_trades.csv"
        gpath = out / f"{args.symbol}_{args.date}_truth.csv"
        sim.write_quotes_csv(qpath)
        sim.write_trades_csv(tpath)
        sim.truth.to_csv(gpath)
    except (OfilabError, OSError, ValueError, RuntimeError) as err:
        log.error("fatal: %s", err)
        return 1
    print(f"quotes: {qpath} ({len(sim.quotes)} records)")
    print(f"trades: {tpath} ({len(sim.trades)} records)")
    print(f"truth:  {gpath} ({len(sim.truth.seq)} entries, "
          f"{sim.truth.saturated_shares} shares saturated)")
    return 0


# ---------------------------------------------------------------------------
# clt-check
# ---------------------------------------------------------------------------

def _cmd_clt_check(args) -> int:
    try:
        scaling = ScalingParams(event_rate=args.rate, trade_fraction=args.trade_fraction,
                                mean_trade_size=args.mean_size, event_std=args.sigma)
        result = proposition1_check(args.replications, scaling, args.horizon, args.seed,
                                    e_dist=args.e_dist, trade_size_dist=args.size_dist)
    except (OfilabError, ValueError) as err:
        log.error("fatal: %s", err)
        return 1

    crit = result.critical_value(0.05)
    print(f"replications:    {result.replications} (redrawn {result.redrawn})")
    print(f"expected events: {args.rate * args.horizon:.0f} per replication")
    print(f"KS statistic:    {result.statistic:.6f}  (5% critical {crit:.6f})")
    print(f"p-value:         {result.p_value:.6f}")
    if args.out:
        payload = {
            "replications": result.replications,
            "redrawn": result.redrawn,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "critical_5pct": crit,
            "config": dict(vars(args)),
        }
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def _textbook_fit(y: np.ndarray, X: np.ndarray, nw_lags: int) -> dict:
    """Direct matrix formulas, written independently of the main solver."""
    n, k = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    u = y - X @ beta
    se_classical = np.sqrt(np.diag(xtx_inv * (u @ u / (n - k))))
    meat = np.zeros((k, k))
    for t in range(n):
        xt = X[t][:, None]
        meat += u[t] ** 2 * (xt @ xt.T)
    se_hc0 = np.sqrt(np.diag(xtx_inv @ meat @ xtx_inv))
    S = meat.copy()
    for lag in range(1, nw_lags + 1):
        w = 1.0 - lag / (nw_lags + 1.0)
        for t in range(lag, n):
            xt = X[t][:, None]
            xl = X[t - lag][:, None]
            S += w * u[t] * u[t - lag] * (xt @ xl.T + xl @ xt.T)
    se_nw = np.sqrt(np.diag(xtx_inv @ S @ xtx_inv))
    return {"coef": beta.tolist(), "se_classical": se_classical.tolist(),
            "se_hc0": se_hc0.tolist(), "se_nw": se_nw.tolist()}


def _cmd_oracle(args) -> int:
    import pandas as pd

    try:
        df = pd.read_csv(args.fixture)
    except OSError as err:
        log.error("fatal: %s", err)
        return 1
    if "y" not in df.columns:
        log.error("fixture must contain a y column")
        return 1
    xcols = [c for c in df.columns if c != "y"]
    y = df["y"].to_numpy(dtype=float)
    X = with_intercept(*[df[c].to_numpy(dtype=float) for c in xcols])

    reference = _textbook_fit(y, X, args.nw_lags)
    fit_c = ols(y, X, "classical", names=["const"] + xcols)
    fit_w = ols(y, X, "white_hc0", names=["const"] + xcols)
    fit_n = ols(y, X, "newey_west", nw_lags=args.nw_lags, names=["const"] + xcols)

    def rel(a, b):
        a, b = np.asarray(a), np.asarray(b)
        return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))

    payload = {
        "n": len(y),
        "columns": ["const"] + xcols,
        "nw_lags": args.nw_lags,
        "auto_nw_lags": newey_west_auto_lag(len(y)),
        "engine": {"coef": fit_c.coef.tolist(), "se_classical": fit_c.se.tolist(),
                   "se_hc0": fit_w.se.tolist(), "se_nw": fit_n.se.tolist()},
        "textbook": reference,
        "max_rel_diff": {
            "coef": rel(fit_c.coef, reference["coef"]),
            "se_classical": rel(fit_c.se, reference["se_classical"]),
            "se_hc0": rel(fit_w.se, reference["se_hc0"]),
            "se_nw": rel(fit_n.se, reference["se_nw"]),
        },
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "analyze": _cmd_analyze,
        "simulate": _cmd_simulate,
        "clt-check": _cmd_clt_check,
        "oracle": _cmd_oracle,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
