"""Best-quote event classification and aggregation onto uniform time grids.

Consecutive NBBO snapshots are turned into signed event contributions: a
transition earns positive shares when it raises demand (bid size up, bid
price up) or cuts supply (ask size down, ask price up), negative shares in
the mirror cases. Contributions, signed trades and volume are then summed
per bucket on a fixed grid, and best-quote depth is averaged per estimation
window.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .ingest import NbboSeries, SignResult

# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class BookEvent:
    """One quote-to-quote transition."""
    n: int                  # event index within the day
    timestamp: int
    seq: int                # tiebreaker within the same second
    e: float                # signed share contribution
    price_changing: bool


@dataclass
class EventSeries:
    """Column-oriented book events, in stream order."""
    day: str
    ts: np.ndarray          # int64
    seq: np.ndarray         # int64
    e: np.ndarray           # float64 (integral for real book data)
    price_changing: np.ndarray  # bool

    def __len__(self) -> int:
        return len(self.ts)

    def event(self, i: int) -> BookEvent:
        return BookEvent(i, int(self.ts[i]), int(self.seq[i]), float(self.e[i]),
                         bool(self.price_changing[i]))

    def __iter__(self) -> Iterator[BookEvent]:
        return (self.event(i) for i in range(len(self)))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform bucket grid covering one trading session.

    Buckets are half-open intervals (t_{k-1}, t_k] with t_k = start + k*dt;
    a record stamped exactly at the session start seeds state and belongs to
    no bucket. Estimation windows tile the grid in multiples of dt.
    """
    session_start: int = 9 * 3600 + 30 * 60
    session_end: int = 16 * 3600
    dt: int = 10
    window: int = 1800
    tick: float = 0.01

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.window % self.dt != 0:
            raise ValueError(f"window {self.window} is not a multiple of dt {self.dt}")
        if self.tick <= 0:
            raise ValueError(f"tick must be positive, got {self.tick}")
        if self.session_end <= self.session_start:
            raise ValueError("session_end must exceed session_start")

    @property
    def n_buckets(self) -> int:
        return (self.session_end - self.session_start) // self.dt

    @property
    def n_windows(self) -> int:
        span = self.n_buckets * self.dt
        return -(-span // self.window)

    def bucket_of(self, ts: np.ndarray) -> np.ndarray:
        """Bucket index (1-based) per timestamp; 0 for stamps at or before t_0."""
        ts = np.asarray(ts, dtype=np.int64)
        k = -((self.session_start - ts) // self.dt)
        return np.clip(k, 0, None)

    def window_of_bucket(self, k: np.ndarray) -> np.ndarray:
        """Estimation-window index (1-based) per bucket index."""
        k = np.asarray(k, dtype=np.int64)
        per = self.window // self.dt
        return (k - 1) // per + 1

    def grid_points(self) -> np.ndarray:
        """All t_k, k = 0..K."""
        return self.session_start + self.dt * np.arange(self.n_buckets + 1, dtype=np.int64)


@dataclass(frozen=True)
class ScalingParams:
    """Flow-rate parameters: event rate, trade fraction, trade size, event std."""
    event_rate: float       # events per second
    trade_fraction: float   # share of events that are trades
    mean_trade_size: float  # shares
    event_std: float        # std of a single event contribution, shares

    def __post_init__(self):
        if self.event_rate <= 0:
            raise ValueError("event_rate must be positive")
        if not 0.0 < self.trade_fraction <= 1.0:
            raise ValueError("trade_fraction must be in (0, 1]")
        if self.mean_trade_size <= 0:
            raise ValueError("mean_trade_size must be positive")
        if self.event_std <= 0:
            raise ValueError("event_std must be positive")


@dataclass
class BucketSeries:
    """Aligned per-bucket series on a TimeGrid, plus per-window average depth.

    Arrays are indexed by bucket k-1 (length grid.n_buckets). ``dp`` is NaN
    for buckets that precede the first quote of the day (no mid to difference)
    and, when empty-bucket dropping is on, for buckets without events. ``ad``
    is indexed by window i-1 and is NaN for windows with fewer than two
    snapshots.
    """
    day: str
    grid: TimeGrid
    dp: np.ndarray          # float64, ticks
    ofi: np.ndarray         # float64, shares
    ti: np.ndarray          # float64, shares
    vol: np.ndarray         # float64, shares
    n_trades: np.ndarray    # int64
    n_events: np.ndarray    # int64
    ad: np.ndarray          # float64 per window

    def __len__(self) -> int:
        return len(self.dp)

    @property
    def window_index(self) -> np.ndarray:
        return self.grid.window_of_bucket(np.arange(1, len(self) + 1))

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.dp)

    def window_slice(self, i: int) -> np.ndarray:
        """Bucket mask for estimation window i (1-based)."""
        return self.window_index == i

    def to_csv(self, path: str | Path) -> None:
        """Write `day,window,bucket,dp_ticks,ofi,ti,vol,ntrades,nevents,ad`."""
        win = self.window_index

        def num(x: float) -> str:
            if not np.isfinite(x):
                return ""
            return str(int(x)) if float(x).is_integer() else repr(float(x))

        with open(path, "w", encoding="utf-8") as f:
            f.write("day,window,bucket,dp_ticks,ofi,ti,vol,ntrades,nevents,ad\n")
            for k in range(len(self)):
                i = int(win[k])
                f.write(f"{self.day},{i},{k + 1},{num(self.dp[k])},{num(self.ofi[k])},"
                        f"{num(self.ti[k])},{num(self.vol[k])},{self.n_trades[k]},"
                        f"{self.n_events[k]},{num(self.ad[i - 1])}\n")


# ---------------------------------------------------------------------------
# Event classification
# ---------------------------------------------------------------------------

def classify_events(nbbo: NbboSeries) -> EventSeries:
    """Turn consecutive snapshots into signed contributions.

    For each snapshot pair (n-1, n):

        e_n =  1{bid_n >= bid_{n-1}} * bid_size_n
             - 1{bid_n <= bid_{n-1}} * bid_size_{n-1}
             - 1{ask_n <= ask_{n-1}} * ask_size_n
             + 1{ask_n >= ask_{n-1}} * ask_size_{n-1}

    The first snapshot of the day seeds state and emits no event. Crossed
    snapshots must have been excluded upstream.
    """
    if bool(nbbo.crossed.any()):
        raise ValueError("classify_events requires crossed snapshots to be excluded")
    n = len(nbbo)
    if n < 2:
        return EventSeries(nbbo.day, *(np.empty(0, dtype=d) for d in
                                       (np.int64, np.int64, np.float64, bool)))

    b0, b1 = nbbo.bid[:-1], nbbo.bid[1:]
    a0, a1 = nbbo.ask[:-1], nbbo.ask[1:]
    qb0 = nbbo.bid_size[:-1].astype(np.float64)
    qb1 = nbbo.bid_size[1:].astype(np.float64)
    qa0 = nbbo.ask_size[:-1].astype(np.float64)
    qa1 = nbbo.ask_size[1:].astype(np.float64)

    e = ((b1 >= b0) * qb1 - (b1 <= b0) * qb0
         - (a1 <= a0) * qa1 + (a1 >= a0) * qa0)
    price_changing = (b1 != b0) | (a1 != a0)

    return EventSeries(nbbo.day, nbbo.ts[1:].copy(), nbbo.seq[1:].copy(),
                       e, price_changing)


# ---------------------------------------------------------------------------
# Grid aggregation
# ---------------------------------------------------------------------------

def _snap_half_tick(x: np.ndarray) -> np.ndarray:
    """Round to the nearest half-integer where within float-parse noise of one."""
    r = np.round(2.0 * x) / 2.0
    return np.where(np.abs(x - r) < 1e-6, r, x)


def _mid_at_grid(nbbo: NbboSeries, grid: TimeGrid) -> np.ndarray:
    """Mid-quote in ticks prevailing at each grid point (NaN before first quote)."""
    points = grid.grid_points()
    # Last snapshot with timestamp <= t_k; intra-second seq order is already
    # reflected in array order.
    pos = np.searchsorted(nbbo.ts, points, side="right") - 1
    mid = np.full(len(points), np.nan)
    have = pos >= 0
    if have.any():
        m = (nbbo.bid[pos[have]] + nbbo.ask[pos[have]]) / (2.0 * grid.tick)
        mid[have] = _snap_half_tick(m)
    return mid


def bucketize(
    events: EventSeries,
    nbbo: NbboSeries,
    trades: SignResult | None,
    grid: TimeGrid,
    *,
    drop_empty: bool = False,
    exclude_price_changing: bool = False,
) -> BucketSeries:
    """Accumulate flows per bucket and difference mids at grid points.

    OFI sums event contributions per bucket; TI sums signed trade sizes;
    VOL sums the sizes of all trades, signed or not. Mid-price changes are
    taken between consecutive grid points using the last snapshot at or
    before each point, in ticks. Buckets before the first quote of the day
    have undefined dp and are excluded from regressions downstream.

    ``drop_empty`` marks buckets without any quote event as undefined.
    ``exclude_price_changing`` drops contributions of events that moved the
    bid or ask price (diagnostic variant).
    """
    K = grid.n_buckets
    ofi = np.zeros(K)
    ti = np.zeros(K)
    vol = np.zeros(K)
    n_trades = np.zeros(K, dtype=np.int64)
    n_events = np.zeros(K, dtype=np.int64)

    if len(events) > 0:
        k = grid.bucket_of(events.ts)
        in_grid = (k >= 1) & (k <= K)
        contrib = events.e.copy()
        if exclude_price_changing:
            contrib[events.price_changing] = 0.0
        np.add.at(ofi, k[in_grid] - 1, contrib[in_grid])
        np.add.at(n_events, k[in_grid] - 1, 1)

    if trades is not None:
        signed = trades.signed
        if len(signed) > 0:
            k = grid.bucket_of(signed.ts)
            in_grid = (k >= 1) & (k <= K)
            sizes = signed.size.astype(np.float64)
            np.add.at(ti, k[in_grid] - 1, (sizes * signed.side)[in_grid])
            np.add.at(vol, k[in_grid] - 1, sizes[in_grid])
            np.add.at(n_trades, k[in_grid] - 1, 1)
        if len(trades.unmatched) > 0:
            k = grid.bucket_of(trades.unmatched.ts)
            in_grid = (k >= 1) & (k <= K)
            sizes = trades.unmatched.size.astype(np.float64)
            np.add.at(vol, k[in_grid] - 1, sizes[in_grid])
            np.add.at(n_trades, k[in_grid] - 1, 1)

    mid = _mid_at_grid(nbbo, grid)
    dp = mid[1:] - mid[:-1]
    if drop_empty:
        dp = np.where(n_events > 0, dp, np.nan)

    return BucketSeries(
        day=nbbo.day, grid=grid, dp=dp, ofi=ofi, ti=ti, vol=vol,
        n_trades=n_trades, n_events=n_events,
        ad=average_depth(nbbo, grid),
    )


def average_depth(nbbo: NbboSeries, grid: TimeGrid) -> np.ndarray:
    """Average best-quote depth per estimation window.

    For window i holding snapshots n = N(T_{i-1})+1 .. N(T_i),

        AD_i = sum_n (bid_size_n + ask_size_n) / (2 * (m - 1))

    with m the snapshot count in the window. Windows with fewer than two
    snapshots are undefined (NaN) and excluded downstream.
    """
    W = grid.n_windows
    ad = np.full(W, np.nan)
    if len(nbbo) == 0:
        return ad
    k = grid.bucket_of(nbbo.ts)
    w = grid.window_of_bucket(np.clip(k, 1, None))
    in_grid = (k >= 1) & (w <= W)
    if not in_grid.any():
        return ad
    depth = (nbbo.bid_size + nbbo.ask_size).astype(np.float64)
    sums = np.bincount(w[in_grid] - 1, weights=depth[in_grid], minlength=W)
    counts = np.bincount(w[in_grid] - 1, minlength=W)
    ok = counts >= 2
    ad[ok] = sums[ok] / (2.0 * (counts[ok] - 1))
    return ad
