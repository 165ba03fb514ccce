"""End-to-end batch pipeline over a directory of symbol-day CSV files.

Runs ingest, NBBO consolidation, trade signing, flow aggregation and every
regression family for each symbol, pooling windows across days, and collects
the results into a run report. Symbols are isolated: a failure in one is
recorded and the run continues.

File layout expected under the data directory:

    <SYMBOL>_<YYYY-MM-DD>_quotes.csv
    <SYMBOL>_<YYYY-MM-DD>_trades.csv
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from datetime import date as Date
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import EstimationError, OfilabError
from .flow import TimeGrid, bucketize, classify_events
from .impact import (
    ComparisonWindowResult,
    DepthModelFit,
    ImpactWindowResult,
    ScalingExponentResult,
    SkippedWindow,
    VarianceWindow,
    comparison_regressions,
    depth_regression,
    estimate_scaling_exponent,
    impact_regression,
    seasonality_profile,
    variance_decomposition,
)
from .ingest import (
    LoadReport,
    SignResult,
    TradeBatch,
    apply_spread_filter,
    build_nbbo,
    load_quotes,
    load_trades,
    nearest_rank_quantile,
    sign_trades,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Pipeline configuration; every default is echoed into the run report."""
    data_dir: str
    symbols: list[str]
    out_dir: str = "out"
    dates: list[str] | None = None          # ISO dates; None = discover per symbol
    dt: int = 10
    window: int = 1800
    tick: float = 0.01
    trade_test: str = "quote_test"          # quote_test | tick_test
    spread_percentile: float = 0.95
    nw_lags: int | None = None
    quadratic: bool = False
    drop_empty_buckets: bool = False
    exclude_price_changing: bool = False
    formats: tuple[str, ...] = ("csv", "json")
    seed: int = 0
    min_buckets: int = 30
    min_windows: int = 30

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("symbol set is empty")
        if self.window % self.dt != 0:
            raise ValueError(f"window {self.window} is not a multiple of dt {self.dt}")
        if self.trade_test not in ("quote_test", "tick_test"):
            raise ValueError(f"unknown trade_test: {self.trade_test!r}")
        unknown = set(self.formats) - {"csv", "json"}
        if unknown:
            raise ValueError(f"unknown formats: {sorted(unknown)}")

    def grid(self) -> TimeGrid:
        return TimeGrid(dt=self.dt, window=self.window, tick=self.tick)


# ---------------------------------------------------------------------------
# Per-symbol results
# ---------------------------------------------------------------------------

@dataclass
class DayCounts:
    day: str
    quotes: LoadReport
    trades: LoadReport
    crossed_removed: int
    spread_removed: int
    trades_unmatched: int

    def as_dict(self) -> dict:
        return {
            "day": self.day,
            "quotes": self.quotes.as_dict(),
            "trades": self.trades.as_dict(),
            "conserved": self.quotes.conserved() and self.trades.conserved(),
            "crossed_removed": self.crossed_removed,
            "spread_removed": self.spread_removed,
            "trades_unmatched": self.trades_unmatched,
        }


@dataclass
class SymbolResult:
    symbol: str
    days: list[str] = field(default_factory=list)
    counts: list[DayCounts] = field(default_factory=list)
    impact_windows: list[ImpactWindowResult] = field(default_factory=list)
    skipped: list[SkippedWindow] = field(default_factory=list)
    depth: DepthModelFit | None = None
    depth_note: str | None = None
    comp_levels: list[ComparisonWindowResult] = field(default_factory=list)
    comp_magnitudes: list[ComparisonWindowResult] = field(default_factory=list)
    h_windows: list[ScalingExponentResult] = field(default_factory=list)
    var_windows: list[VarianceWindow] = field(default_factory=list)
    # day x slot arrays for intraday profiles
    slot_stats: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RunReport:
    """Everything one run produced, self-describing and deterministic."""
    config: dict
    version: str
    symbols: dict[str, SymbolResult] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    profiles: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.errors) and bool(self.symbols)

    @property
    def failed(self) -> bool:
        return bool(self.errors) and not self.symbols


# ---------------------------------------------------------------------------
# Discovery
# ---------------------------------------------------------------------------

def discover_days(data_dir: Path, symbol: str) -> list[str]:
    days = []
    for p in sorted(data_dir.glob(f"{symbol}_*_quotes.csv")):
        day = p.name[len(symbol) + 1:-len("_quotes.csv")]
        days.append(day)
    return days


# ---------------------------------------------------------------------------
# Per-symbol pipeline
# ---------------------------------------------------------------------------

def _load_day(config: RunConfig, symbol: str, day: str):
    base = Path(config.data_dir)
    qpath = base / f"{symbol}_{day}_quotes.csv"
    tpath = base / f"{symbol}_{day}_trades.csv"
    if not qpath.exists():
        raise FileNotFoundError(f"missing quote file: {qpath}")
    d = Date.fromisoformat(day)
    quotes, q_report = load_quotes(qpath, d)
    if tpath.exists():
        trades, t_report = load_trades(tpath, d)
    else:
        trades = TradeBatch.from_records([], day=day)
        t_report = LoadReport()
    for label, rep in (("quotes", q_report), ("trades", t_report)):
        if not rep.conserved():
            raise OfilabError(
                f"{symbol} {day} {label}: row accounting broken "
                f"({rep.rows} != {rep.accepted} + {rep.rejected_total} + {rep.malformed})")
    return quotes, q_report, trades, t_report


def analyze_symbol(config: RunConfig, symbol: str) -> SymbolResult:
    """Run the full pipeline for one symbol across its days."""
    grid = config.grid()
    days = config.dates or discover_days(Path(config.data_dir), symbol)
    if not days:
        raise FileNotFoundError(f"no data files for symbol {symbol} in {config.data_dir}")

    result = SymbolResult(symbol=symbol)

    # First pass: per-day NBBO, pooled spread threshold across all days.
    staged = []
    all_spreads = []
    for day in days:
        quotes, q_report, trades, t_report = _load_day(config, symbol, day)
        nbbo = build_nbbo(quotes)
        nbbo, n_crossed = nbbo.drop_crossed()
        staged.append((day, nbbo, trades, q_report, t_report, n_crossed))
        if len(nbbo):
            all_spreads.append(nbbo.spread)
    if not all_spreads:
        raise EstimationError(f"no usable quotes for symbol {symbol}")
    threshold = nearest_rank_quantile(np.concatenate(all_spreads), config.spread_percentile)

    n_slots = grid.n_windows
    stat_names = ("beta", "ad", "var_dp", "var_ofi", "beta2_var_ofi")
    slot_rows: dict[str, list[np.ndarray]] = {s: [] for s in stat_names}

    for day, nbbo, trades, q_report, t_report, n_crossed in staged:
        if len(nbbo) == 0:
            # A quoteless day cannot contribute; keep its accounting visible.
            result.days.append(day)
            result.counts.append(DayCounts(day, q_report, t_report, n_crossed,
                                           0, len(trades)))
            log.warning("symbol %s day %s has no usable quotes; skipped", symbol, day)
            continue
        # Trade signing runs on the unfiltered (but uncrossed) quote stream.
        signing: SignResult = sign_trades(nbbo, trades, config.trade_test)
        filtered, n_spread = apply_spread_filter(nbbo, config.spread_percentile,
                                                 threshold=threshold)
        events = classify_events(filtered)
        series = bucketize(events, filtered, signing, grid,
                           drop_empty=config.drop_empty_buckets,
                           exclude_price_changing=config.exclude_price_changing)
        result.days.append(day)
        result.counts.append(DayCounts(day, q_report, t_report, n_crossed,
                                       n_spread, signing.unmatched_count))

        windows, skipped = impact_regression(series, config.quadratic,
                                             min_buckets=config.min_buckets)
        result.impact_windows.extend(windows)
        result.skipped.extend(skipped)

        lv, sk = comparison_regressions(series, "levels", min_buckets=config.min_buckets)
        result.comp_levels.extend(lv)
        result.skipped.extend(sk)

        hs, sk = estimate_scaling_exponent(series, min_buckets=config.min_buckets)
        result.h_windows.extend(hs)
        result.skipped.extend(sk)
        exponents = {r.window: r.h for r in hs}
        mg, sk = comparison_regressions(series, "magnitudes", exponents,
                                        min_buckets=config.min_buckets)
        result.comp_magnitudes.extend(mg)
        result.skipped.extend(sk)

        var_rows = variance_decomposition(series, windows)
        result.var_windows.extend(var_rows)

        # Intraday slot rows for this day.
        row = {s: np.full(n_slots, np.nan) for s in stat_names}
        for w in windows:
            row["beta"][w.window - 1] = w.beta
            row["ad"][w.window - 1] = w.ad
        for v in var_rows:
            if not v.degenerate:
                row["var_dp"][v.window - 1] = v.var_dp
                row["var_ofi"][v.window - 1] = v.var_ofi
                row["beta2_var_ofi"][v.window - 1] = v.beta_sq_var_ofi
        for s in stat_names:
            slot_rows[s].append(row[s])

    for s in stat_names:
        result.slot_stats[s] = np.vstack(slot_rows[s])

    try:
        result.depth = depth_regression(result.impact_windows,
                                        min_windows=config.min_windows,
                                        nw_lags=config.nw_lags)
    except (EstimationError, OfilabError) as err:
        result.depth_note = str(err)

    return result


def run_pipeline(config: RunConfig) -> RunReport:
    """Run every configured symbol; failures are isolated per symbol."""
    report = RunReport(config=_config_dict(config), version=__version__)
    for symbol in config.symbols:
        try:
            report.symbols[symbol] = analyze_symbol(config, symbol)
            log.info("symbol %s: %d windows fitted", symbol,
                     len(report.symbols[symbol].impact_windows))
        except (OfilabError, OSError, ValueError) as err:
            log.warning("symbol %s failed: %s", symbol, err)
            report.errors[symbol] = str(err)

    # Cross-symbol intraday profiles.
    for stat in ("beta", "ad", "var_dp", "var_ofi", "beta2_var_ofi"):
        per_symbol = {s: r.slot_stats[stat] for s, r in report.symbols.items()
                      if stat in r.slot_stats}
        if per_symbol:
            report.profiles[stat] = seasonality_profile(per_symbol).combined
    return report


def _config_dict(config: RunConfig) -> dict:
    d = asdict(config)
    d["formats"] = list(config.formats)
    return d
