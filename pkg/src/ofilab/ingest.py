"""Level-1 tick data ingestion: filtering, NBBO consolidation and trade signing.

Input files are one-symbol one-day CSVs:

    quotes: date,time,exchange,bid,bidsize,ask,asksize,mode
    trades: date,time,exchange,price,size,corr,cond

with ``time`` as HH:MM:SS (whole seconds) and rows in original feed order.
All operations are pure; per-record data is held in columnar numpy batches
so a full day streams through in a single vectorized pass.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path
from typing import IO, Iterator, Union

import numpy as np
import pandas as pd

from .errors import FormatError

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

SESSION_OPEN = 9 * 3600 + 30 * 60     # 09:30:00
SESSION_CLOSE = 16 * 3600             # 16:00:00

# Venue condition codes excluded by default; both sets are configuration.
EXCLUDED_QUOTE_MODES = frozenset({4, 7, 9, 11, 13, 14, 15, 19, 20, 27, 28})
EXCLUDED_TRADE_CONDITIONS = frozenset({"O", "Z", "B", "T", "L", "G", "W", "J", "K"})
MAX_TRADE_CORRECTION = 2

QUOTE_COLUMNS = ["date", "time", "exchange", "bid", "bidsize", "ask", "asksize", "mode"]
TRADE_COLUMNS = ["date", "time", "exchange", "price", "size", "corr", "cond"]

Source = Union[str, Path, IO[bytes], IO[str]]


# ---------------------------------------------------------------------------
# Record types
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class RawQuote:
    """One per-exchange quote update that survived the load filters."""
    timestamp: int          # whole seconds since midnight
    seq: int                # data-row index within the file
    exchange: str
    bid_price: float
    bid_size: int
    ask_price: float
    ask_size: int
    mode: int


@dataclass(slots=True)
class RawTrade:
    """One trade print that survived the load filters."""
    timestamp: int
    seq: int
    price: float
    size: int
    correction: int
    condition: str


@dataclass(slots=True)
class NbboSnapshot:
    """Consolidated best bid/ask with sizes summed across exchanges at the best."""
    timestamp: int
    seq: int
    bid_price: float
    bid_size: int
    ask_price: float
    ask_size: int
    crossed: bool = False


@dataclass(slots=True)
class SignedTrade:
    """A trade with an inferred direction.

    ``matched_quote_seq`` is the seq of the quote the trade matched under the
    quote test, or -1 under the tick test (no quote involved).
    """
    timestamp: int
    seq: int
    price: float
    size: int
    side: int               # +1 buy, -1 sell
    matched_quote_seq: int = -1

    @property
    def buy_size(self) -> int:
        return self.size if self.side > 0 else 0

    @property
    def sell_size(self) -> int:
        return self.size if self.side < 0 else 0


# ---------------------------------------------------------------------------
# Columnar batches
# ---------------------------------------------------------------------------

@dataclass
class QuoteBatch:
    """Column-oriented container of filtered quote records, in file order."""
    day: str
    ts: np.ndarray          # int64 seconds since midnight
    seq: np.ndarray         # int64 file row index
    exchange: np.ndarray    # object (str)
    bid: np.ndarray         # float64
    bid_size: np.ndarray    # int64
    ask: np.ndarray
    ask_size: np.ndarray
    mode: np.ndarray        # int64

    def __len__(self) -> int:
        return len(self.ts)

    def record(self, i: int) -> RawQuote:
        return RawQuote(int(self.ts[i]), int(self.seq[i]), str(self.exchange[i]),
                        float(self.bid[i]), int(self.bid_size[i]),
                        float(self.ask[i]), int(self.ask_size[i]), int(self.mode[i]))

    def __iter__(self) -> Iterator[RawQuote]:
        return (self.record(i) for i in range(len(self)))

    @classmethod
    def from_records(cls, records: list[RawQuote], day: str = "") -> "QuoteBatch":
        return cls(
            day=day,
            ts=np.array([r.timestamp for r in records], dtype=np.int64),
            seq=np.array([r.seq for r in records], dtype=np.int64),
            exchange=np.array([r.exchange for r in records], dtype=object),
            bid=np.array([r.bid_price for r in records], dtype=np.float64),
            bid_size=np.array([r.bid_size for r in records], dtype=np.int64),
            ask=np.array([r.ask_price for r in records], dtype=np.float64),
            ask_size=np.array([r.ask_size for r in records], dtype=np.int64),
            mode=np.array([r.mode for r in records], dtype=np.int64),
        )


@dataclass
class TradeBatch:
    """Column-oriented container of filtered trade records, in file order."""
    day: str
    ts: np.ndarray
    seq: np.ndarray
    price: np.ndarray
    size: np.ndarray
    correction: np.ndarray
    condition: np.ndarray   # object (str)

    def __len__(self) -> int:
        return len(self.ts)

    def record(self, i: int) -> RawTrade:
        return RawTrade(int(self.ts[i]), int(self.seq[i]), float(self.price[i]),
                        int(self.size[i]), int(self.correction[i]), str(self.condition[i]))

    def __iter__(self) -> Iterator[RawTrade]:
        return (self.record(i) for i in range(len(self)))

    def select(self, mask: np.ndarray) -> "TradeBatch":
        return TradeBatch(self.day, self.ts[mask], self.seq[mask], self.price[mask],
                          self.size[mask], self.correction[mask], self.condition[mask])

    @classmethod
    def from_records(cls, records: list[RawTrade], day: str = "") -> "TradeBatch":
        return cls(
            day=day,
            ts=np.array([r.timestamp for r in records], dtype=np.int64),
            seq=np.array([r.seq for r in records], dtype=np.int64),
            price=np.array([r.price for r in records], dtype=np.float64),
            size=np.array([r.size for r in records], dtype=np.int64),
            correction=np.array([r.correction for r in records], dtype=np.int64),
            condition=np.array([r.condition for r in records], dtype=object),
        )


@dataclass
class NbboSeries:
    """Consolidated NBBO snapshots, one per contributing quote record."""
    day: str
    ts: np.ndarray
    seq: np.ndarray
    bid: np.ndarray
    bid_size: np.ndarray
    ask: np.ndarray
    ask_size: np.ndarray
    crossed: np.ndarray     # bool

    def __len__(self) -> int:
        return len(self.ts)

    def snapshot(self, i: int) -> NbboSnapshot:
        return NbboSnapshot(int(self.ts[i]), int(self.seq[i]),
                            float(self.bid[i]), int(self.bid_size[i]),
                            float(self.ask[i]), int(self.ask_size[i]),
                            bool(self.crossed[i]))

    def __iter__(self) -> Iterator[NbboSnapshot]:
        return (self.snapshot(i) for i in range(len(self)))

    @property
    def spread(self) -> np.ndarray:
        return self.ask - self.bid

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.bid + self.ask)

    def select(self, mask: np.ndarray) -> "NbboSeries":
        return NbboSeries(self.day, self.ts[mask], self.seq[mask], self.bid[mask],
                          self.bid_size[mask], self.ask[mask], self.ask_size[mask],
                          self.crossed[mask])

    def drop_crossed(self) -> tuple["NbboSeries", int]:
        """Remove crossed snapshots; returns the clean series and the count removed."""
        n_crossed = int(self.crossed.sum())
        if n_crossed == 0:
            return self, 0
        return self.select(~self.crossed), n_crossed

    def to_csv(self, path: str | Path) -> None:
        """Write snapshots as ``ts,seq,bid,bid_size,ask,ask_size,crossed``."""
        with open(path, "w", encoding="utf-8") as f:
            f.write("ts,seq,bid,bid_size,ask,ask_size,crossed\n")
            for i in range(len(self)):
                f.write(f"{self.ts[i]},{self.seq[i]},{self.bid[i]:.4f},{self.bid_size[i]},"
                        f"{self.ask[i]:.4f},{self.ask_size[i]},{int(self.crossed[i])}\n")

    @classmethod
    def from_snapshots(cls, snaps: list[NbboSnapshot], day: str = "") -> "NbboSeries":
        return cls(
            day=day,
            ts=np.array([s.timestamp for s in snaps], dtype=np.int64),
            seq=np.array([s.seq for s in snaps], dtype=np.int64),
            bid=np.array([s.bid_price for s in snaps], dtype=np.float64),
            bid_size=np.array([s.bid_size for s in snaps], dtype=np.int64),
            ask=np.array([s.ask_price for s in snaps], dtype=np.float64),
            ask_size=np.array([s.ask_size for s in snaps], dtype=np.int64),
            crossed=np.array([s.crossed for s in snaps], dtype=bool),
        )


@dataclass
class SignedTradeSeries:
    """Signed trades in file order."""
    day: str
    ts: np.ndarray
    seq: np.ndarray
    price: np.ndarray
    size: np.ndarray
    side: np.ndarray               # int8, +1 buy / -1 sell
    matched_quote_seq: np.ndarray  # int64, -1 when not quote-matched

    def __len__(self) -> int:
        return len(self.ts)

    def record(self, i: int) -> SignedTrade:
        return SignedTrade(int(self.ts[i]), int(self.seq[i]), float(self.price[i]),
                           int(self.size[i]), int(self.side[i]),
                           int(self.matched_quote_seq[i]))

    def __iter__(self) -> Iterator[SignedTrade]:
        return (self.record(i) for i in range(len(self)))


@dataclass
class SignResult:
    """Output of trade signing: signed trades plus the trades left unsigned.

    Unsigned trades still carry volume downstream; they contribute to VOL
    but never to TI.
    """
    signed: SignedTradeSeries
    unmatched: TradeBatch
    mode: str

    @property
    def unmatched_count(self) -> int:
        return len(self.unmatched)


# ---------------------------------------------------------------------------
# Load reporting
# ---------------------------------------------------------------------------

@dataclass
class LoadReport:
    """Per-file accounting: every data row is accepted, rejected or malformed."""
    rows: int = 0
    accepted: int = 0
    malformed: int = 0
    rejected: dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str, count: int) -> None:
        if count:
            self.rejected[reason] = self.rejected.get(reason, 0) + int(count)

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())

    def conserved(self) -> bool:
        return self.rows == self.accepted + self.rejected_total + self.malformed

    def as_dict(self) -> dict:
        return {"rows": self.rows, "accepted": self.accepted,
                "malformed": self.malformed, "rejected": dict(self.rejected)}


# ---------------------------------------------------------------------------
# CSV parsing helpers
# ---------------------------------------------------------------------------

def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            return f.read().decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return data


def _parse_csv(source: Source, columns: list[str]) -> tuple[pd.DataFrame, int, int]:
    """Parse a CSV with a strict header.

    Returns (frame of string columns, data_row_count, ragged_row_count).
    Rows with the wrong field count are dropped here and counted; field-level
    problems are handled by the callers via coercion.
    """
    text = _read_text(source)
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty input: missing header row")
    header = [h.strip() for h in lines[0].split(",")]
    if header != columns:
        raise FormatError(f"header mismatch: expected {columns}, got {header}")
    n_rows = sum(1 for ln in lines[1:] if ln.strip())

    df = pd.read_csv(
        io.StringIO(text), dtype=str, header=0,
        on_bad_lines="skip", skip_blank_lines=True,
        keep_default_na=False, engine="c",
    )
    # Too few fields parse as empty strings, not as ragged rows; normalize.
    ragged = n_rows - len(df)
    return df, n_rows, ragged


def _times_to_seconds(time_col: pd.Series) -> np.ndarray:
    """HH:MM:SS strings to whole seconds since midnight (NaN when unparseable)."""
    td = pd.to_timedelta(time_col, errors="coerce")
    secs = td.dt.total_seconds().to_numpy()
    # Reject fractional-second or out-of-day stamps rather than rounding them.
    bad = ~np.isfinite(secs) | (secs != np.floor(secs)) | (secs < 0) | (secs >= 86400)
    secs = np.where(bad, np.nan, secs)
    return secs


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

def load_quotes(
    source: Source,
    day: Date,
    *,
    session: tuple[int, int] = (SESSION_OPEN, SESSION_CLOSE),
    excluded_modes: frozenset[int] = EXCLUDED_QUOTE_MODES,
) -> tuple[QuoteBatch, LoadReport]:
    """Load and filter one symbol-day of quote records.

    Keeps rows that are inside the trading session, have strictly positive
    prices and sizes on both sides, and do not carry an excluded quote mode.
    Malformed rows are counted, never silently dropped.
    """
    df, n_rows, ragged = _parse_csv(source, QUOTE_COLUMNS)
    report = LoadReport(rows=n_rows)

    ts = _times_to_seconds(df["time"])
    bid = pd.to_numeric(df["bid"], errors="coerce").to_numpy()
    ask = pd.to_numeric(df["ask"], errors="coerce").to_numpy()
    bidsize = pd.to_numeric(df["bidsize"], errors="coerce").to_numpy()
    asksize = pd.to_numeric(df["asksize"], errors="coerce").to_numpy()
    mode = pd.to_numeric(df["mode"], errors="coerce").to_numpy()

    well_formed = (np.isfinite(ts) & np.isfinite(bid) & np.isfinite(ask)
                   & np.isfinite(bidsize) & np.isfinite(asksize) & np.isfinite(mode))
    report.malformed = ragged + int((~well_formed).sum())

    dates = df["date"].to_numpy()
    on_day = dates == day.isoformat()
    in_session = (ts >= session[0]) & (ts <= session[1])
    positive = (bid > 0) & (ask > 0) & (bidsize > 0) & (asksize > 0)
    mode_ok = ~np.isin(np.where(well_formed, mode, -1).astype(np.int64),
                       np.array(sorted(excluded_modes), dtype=np.int64))

    report.reject("date_mismatch", int((well_formed & ~on_day).sum()))
    report.reject("out_of_session", int((well_formed & on_day & ~in_session).sum()))
    report.reject("nonpositive", int((well_formed & on_day & in_session & ~positive).sum()))
    report.reject("excluded_mode",
                  int((well_formed & on_day & in_session & positive & ~mode_ok).sum()))

    keep = well_formed & on_day & in_session & positive & mode_ok
    report.accepted = int(keep.sum())

    batch = QuoteBatch(
        day=day.isoformat(),
        ts=ts[keep].astype(np.int64),
        seq=np.flatnonzero(keep).astype(np.int64),
        exchange=df["exchange"].to_numpy()[keep],
        bid=bid[keep],
        bid_size=bidsize[keep].astype(np.int64),
        ask=ask[keep],
        ask_size=asksize[keep].astype(np.int64),
        mode=mode[keep].astype(np.int64),
    )
    return batch, report


def load_trades(
    source: Source,
    day: Date,
    *,
    session: tuple[int, int] = (SESSION_OPEN, SESSION_CLOSE),
    excluded_conditions: frozenset[str] = EXCLUDED_TRADE_CONDITIONS,
    max_correction: int = MAX_TRADE_CORRECTION,
) -> tuple[TradeBatch, LoadReport]:
    """Load and filter one symbol-day of trade records.

    Keeps rows inside the session with positive price and size, a correction
    indicator of at most ``max_correction``, and no excluded condition code.
    """
    df, n_rows, ragged = _parse_csv(source, TRADE_COLUMNS)
    report = LoadReport(rows=n_rows)

    ts = _times_to_seconds(df["time"])
    price = pd.to_numeric(df["price"], errors="coerce").to_numpy()
    size = pd.to_numeric(df["size"], errors="coerce").to_numpy()
    corr = pd.to_numeric(df["corr"], errors="coerce").to_numpy()

    well_formed = np.isfinite(ts) & np.isfinite(price) & np.isfinite(size) & np.isfinite(corr)
    report.malformed = ragged + int((~well_formed).sum())

    cond = np.array([c.strip() for c in df["cond"].to_numpy()], dtype=object)
    dates = df["date"].to_numpy()
    on_day = dates == day.isoformat()
    in_session = (ts >= session[0]) & (ts <= session[1])
    positive = (price > 0) & (size > 0)
    corr_ok = corr <= max_correction
    cond_ok = ~np.isin(cond, np.array(sorted(excluded_conditions), dtype=object))

    report.reject("date_mismatch", int((well_formed & ~on_day).sum()))
    report.reject("out_of_session", int((well_formed & on_day & ~in_session).sum()))
    report.reject("nonpositive", int((well_formed & on_day & in_session & ~positive).sum()))
    report.reject("correction",
                  int((well_formed & on_day & in_session & positive & ~corr_ok).sum()))
    report.reject("excluded_condition",
                  int((well_formed & on_day & in_session & positive & corr_ok & ~cond_ok).sum()))

    keep = well_formed & on_day & in_session & positive & corr_ok & cond_ok
    report.accepted = int(keep.sum())

    batch = TradeBatch(
        day=day.isoformat(),
        ts=ts[keep].astype(np.int64),
        seq=np.flatnonzero(keep).astype(np.int64),
        price=price[keep],
        size=size[keep].astype(np.int64),
        correction=corr[keep].astype(np.int64),
        condition=cond[keep],
    )
    return batch, report


# ---------------------------------------------------------------------------
# NBBO consolidation
# ---------------------------------------------------------------------------

def build_nbbo(quotes: QuoteBatch) -> NbboSeries:
    """Consolidate per-exchange quotes into an NBBO stream.

    Scans the records in file order while maintaining the latest quote per
    exchange; each record updates its exchange's row and emits one snapshot.
    The NBBO bid is the highest bid across exchanges, the NBBO ask the lowest
    ask, and the sizes are summed across every exchange quoting exactly at
    those prices. Snapshots with NBBO bid above NBBO ask are flagged crossed.

    The scan is implemented as a vectorized forward-fill over per-exchange
    columns; results are identical to the sequential update.
    """
    n = len(quotes)
    if n == 0:
        return NbboSeries(quotes.day, *(np.empty(0, dtype=d) for d in
                                        (np.int64, np.int64, np.float64, np.int64,
                                         np.float64, np.int64, bool)))
    if n > 1 and (np.diff(quotes.ts) < 0).any():
        # Downstream quote matching and grid alignment binary-search on time.
        raise FormatError("quote timestamps are not nondecreasing in file order")

    codes, uniques = pd.factorize(quotes.exchange)
    n_exch = len(uniques)
    rows = np.arange(n)

    # Row index of the latest update per (record, exchange); -1 means never.
    upd = np.full((n, n_exch), -1, dtype=np.int64)
    upd[rows, codes] = rows
    np.maximum.accumulate(upd, axis=0, out=upd)
    seen = upd >= 0
    gather = np.where(seen, upd, 0)

    # Latest per-exchange values at each record.
    bid_m = np.where(seen, quotes.bid[gather], np.nan)
    ask_m = np.where(seen, quotes.ask[gather], np.nan)
    bsz_m = np.where(seen, quotes.bid_size[gather].astype(np.float64), 0.0)
    asz_m = np.where(seen, quotes.ask_size[gather].astype(np.float64), 0.0)

    nbbo_bid = np.nanmax(bid_m, axis=1)
    nbbo_ask = np.nanmin(ask_m, axis=1)
    bid_size = np.where(bid_m == nbbo_bid[:, None], bsz_m, 0.0).sum(axis=1)
    ask_size = np.where(ask_m == nbbo_ask[:, None], asz_m, 0.0).sum(axis=1)

    return NbboSeries(
        day=quotes.day,
        ts=quotes.ts.copy(),
        seq=quotes.seq.copy(),
        bid=nbbo_bid,
        bid_size=bid_size.astype(np.int64),
        ask=nbbo_ask,
        ask_size=ask_size.astype(np.int64),
        crossed=nbbo_bid > nbbo_ask,
    )


# ---------------------------------------------------------------------------
# Spread filter
# ---------------------------------------------------------------------------

def nearest_rank_quantile(values: np.ndarray, percentile: float) -> float:
    """Nearest-rank quantile: the ceil(p*n)-th smallest value."""
    if not 0.0 < percentile <= 1.0:
        raise ValueError(f"percentile must be in (0, 1], got {percentile}")
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    if len(ordered) == 0:
        raise ValueError("empty sample")
    rank = int(np.ceil(percentile * len(ordered)))
    return float(ordered[rank - 1])


def apply_spread_filter(
    nbbo: NbboSeries,
    percentile: float = 0.95,
    *,
    threshold: float | None = None,
) -> tuple[NbboSeries, int]:
    """Drop snapshots whose spread is strictly above the percentile threshold.

    The threshold is the nearest-rank quantile of the spread distribution over
    the given sample. Pass ``threshold`` to reuse a cutoff computed over a
    wider sample (e.g. all days of one symbol). Returns the filtered series
    and the number of snapshots removed.
    """
    if len(nbbo) == 0:
        raise ValueError("apply_spread_filter requires a nonempty series")
    if threshold is None:
        threshold = nearest_rank_quantile(nbbo.spread, percentile)
    keep = nbbo.spread <= threshold
    removed = int((~keep).sum())
    if removed == 0:
        return nbbo, 0
    return nbbo.select(keep), removed


# ---------------------------------------------------------------------------
# Trade signing
# ---------------------------------------------------------------------------

def sign_trades(nbbo: NbboSeries, trades: TradeBatch, mode: str = "quote_test") -> SignResult:
    """Attach buy/sell directions to trades.

    quote_test: a trade matches a quote iff it is not inside that quote's
    spread (price >= ask means buy, price <= bid means sell), the quote is at
    most one second old (trade timestamp in [quote ts, quote ts + 1]), and
    among eligible quotes the earliest one is chosen. Trades strictly inside
    the spread of every eligible quote are left unsigned.

    tick_test: buy on an uptick, sell on a downtick, previous side carried
    when the price repeats; trades before the first price change are unsigned.
    """
    if mode == "quote_test":
        return _sign_quote_test(nbbo, trades)
    if mode == "tick_test":
        return _sign_tick_test(trades)
    raise ValueError(f"unknown trade-sign mode: {mode!r}")


def _sign_quote_test(nbbo: NbboSeries, trades: TradeBatch) -> SignResult:
    n_trades = len(trades)
    side = np.zeros(n_trades, dtype=np.int8)
    matched = np.full(n_trades, -1, dtype=np.int64)

    if len(nbbo) > 0 and n_trades > 0:
        lo = np.searchsorted(nbbo.ts, trades.ts - 1, side="left")
        hi = np.searchsorted(nbbo.ts, trades.ts, side="right")
        for i in range(n_trades):
            a, b = lo[i], hi[i]
            if a >= b:
                continue
            price = trades.price[i]
            buys = price >= nbbo.ask[a:b]
            sells = price <= nbbo.bid[a:b]
            eligible = buys | sells
            if not eligible.any():
                continue
            j = a + int(np.argmax(eligible))
            side[i] = 1 if buys[j - a] else -1
            matched[i] = nbbo.seq[j]

    ok = side != 0
    signed = SignedTradeSeries(trades.day, trades.ts[ok], trades.seq[ok],
                               trades.price[ok], trades.size[ok],
                               side[ok], matched[ok])
    return SignResult(signed=signed, unmatched=trades.select(~ok), mode="quote_test")


def _sign_tick_test(trades: TradeBatch) -> SignResult:
    n = len(trades)
    side = np.zeros(n, dtype=np.int8)
    last_price = None
    last_side = 0
    for i in range(n):
        p = trades.price[i]
        if last_price is None:
            last_price = p
            continue
        if p > last_price:
            last_side = 1
        elif p < last_price:
            last_side = -1
        side[i] = last_side
        last_price = p

    ok = side != 0
    signed = SignedTradeSeries(trades.day, trades.ts[ok], trades.seq[ok],
                               trades.price[ok], trades.size[ok],
                               side[ok], np.full(int(ok.sum()), -1, dtype=np.int64))
    return SignResult(signed=signed, unmatched=trades.select(~ok), mode="tick_test")
