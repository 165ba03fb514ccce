"""Ground-truth generators for pipeline validation.

Two generators live here:

* a stylized order book with uniform depth D beyond the touch. Limit and
  cancel flow arrives only at the best quotes; a queue that empties steps the
  price one tick away and refills to D, a queue that overflows spills into a
  fresh level one tick inside. Each emitted quote record is one elementary
  book transition whose exact signed share contribution is recorded, so the
  event classifier can be checked record by record, and net per-bucket flows
  reproduce the mid-price change up to the documented one-tick truncation.

* an i.i.d. event-flow generator plus a Kolmogorov-Smirnov harness for the
  normalized imbalance-to-volume ratio, used to check the square-root scaling
  between imbalance and traded volume at large event counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats as scipy_stats

from .errors import SampleSizeError
from .flow import EventSeries, ScalingParams
from .ingest import QuoteBatch, SignedTradeSeries, TradeBatch

# ---------------------------------------------------------------------------
# Event types and size distributions
# ---------------------------------------------------------------------------

MS, MB, LB, LS, CB, CS = range(6)
TYPE_LABELS = ("MS", "MB", "LB", "LS", "CB", "CS")

# Default mix balances each side's inflow against its outflow (adds match
# removals in expectation), so queues are drift-free under any size law.
_DEFAULT_MIX = {"LB": 0.25, "LS": 0.25, "MS": 0.125, "CB": 0.125,
                "MB": 0.125, "CS": 0.125}


def _parse_size_dist(spec: str):
    """Parse a size-distribution spec into a draw(rng, n) -> int64 array."""
    parts = spec.split(":")
    kind = parts[0]
    if kind == "fixed":
        v = int(parts[1])
        if v < 1:
            raise ValueError("fixed size must be >= 1")
        return lambda rng, n: np.full(n, v, dtype=np.int64)
    if kind == "uniform":
        lo, hi = int(parts[1]), int(parts[2])
        if not 1 <= lo <= hi:
            raise ValueError(f"bad uniform size range [{lo}, {hi}]")
        return lambda rng, n: rng.integers(lo, hi + 1, size=n, dtype=np.int64)
    if kind == "geometric":
        mean = float(parts[1])
        if mean < 1.0:
            raise ValueError("geometric mean size must be >= 1")
        return lambda rng, n: rng.geometric(1.0 / mean, size=n).astype(np.int64)
    raise ValueError(f"unknown size distribution: {spec!r}")


@dataclass(frozen=True)
class SynthParams:
    """Stylized-book generator parameters."""
    depth: int                      # shares per price level beyond the touch
    tick: float = 0.01
    initial_mid: float = 100.0
    initial_spread_ticks: int = 20
    event_rate: float = 5.0         # events per second
    horizon: int = 23400            # seconds
    session_start: int = 9 * 3600 + 30 * 60
    bucket_seconds: int = 10
    mix: Mapping[str, float] = field(default_factory=lambda: dict(_DEFAULT_MIX))
    size_dist: str | None = None    # default: uniform 1 .. 2*depth
    improve_prob: float = 0.0       # chance a limit order posts one tick inside
    seed: int = 0
    day: str = "2010-04-01"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.tick <= 0:
            raise ValueError("tick must be positive")
        if self.initial_mid <= 0:
            raise ValueError("initial_mid must be positive")
        if self.initial_spread_ticks < 1:
            raise ValueError("initial_spread_ticks must be >= 1")
        if self.event_rate <= 0:
            raise ValueError("event_rate must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if not 0.0 <= self.improve_prob < 1.0:
            raise ValueError("improve_prob must be in [0, 1)")
        probs = [self.mix.get(t, 0.0) for t in TYPE_LABELS]
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("event-type mix must be nonnegative and sum to 1")
        _parse_size_dist(self.effective_size_dist)  # reject bad specs eagerly

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([self.mix.get(t, 0.0) for t in TYPE_LABELS])

    @property
    def effective_size_dist(self) -> str:
        return self.size_dist or f"uniform:1:{2 * self.depth}"


# ---------------------------------------------------------------------------
# Stylized price response
# ---------------------------------------------------------------------------

def _ceil_div(a, d):
    return -(-np.asarray(a, dtype=np.int64) // d)


def stylized_delta_p(lb, cb, ms, ls, cs, mb, depth: int):
    """Mid-price change, in ticks, implied by net per-side flows.

    Half the bid-ladder moves minus half the ask-ladder moves:

        0.5 * ceil((lb - cb - ms) / depth) - 0.5 * ceil((ls - cs - mb) / depth)

    Accepts scalars or arrays; returns float (possibly half-integer) ticks.
    """
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    bid_moves = _ceil_div(np.asarray(lb) - np.asarray(cb) - np.asarray(ms), depth)
    ask_moves = _ceil_div(np.asarray(ls) - np.asarray(cs) - np.asarray(mb), depth)
    out = 0.5 * bid_moves - 0.5 * ask_moves
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

@dataclass
class GroundTruth:
    """Exact event labels and per-bucket flow accounting for one simulation.

    Entries are keyed by the quote record seq they produced (the opening
    snapshot, seq 0, has no entry). ``bucket`` 0 marks records stamped at the
    session open, which precede the first grid bucket.
    """
    day: str
    session_start: int
    bucket_seconds: int
    depth: int
    seq: np.ndarray         # int64, record seq per entry
    ts: np.ndarray          # int64
    type: np.ndarray        # int8, index into TYPE_LABELS
    e: np.ndarray           # int64 signed contribution
    order_id: np.ndarray    # int64, arrival that produced the record
    bucket: np.ndarray      # int64, 1-based; 0 = before first bucket
    flows: np.ndarray       # int64 (n_buckets, 6) net shares per type
    bucket_dp: np.ndarray   # float64, mid change in ticks per bucket
    saturated_shares: int   # add shares dropped because no room to improve

    @property
    def n_buckets(self) -> int:
        return len(self.bucket_dp)

    @property
    def bucket_ofi(self) -> np.ndarray:
        f = self.flows
        return (f[:, LB] - f[:, CB] - f[:, MS]
                - f[:, LS] + f[:, CS] + f[:, MB])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("seq,type,e,bucket\n")
            for i in range(len(self.seq)):
                f.write(f"{self.seq[i]},{TYPE_LABELS[self.type[i]]},"
                        f"{self.e[i]},{self.bucket[i]}\n")


@dataclass
class SimResult:
    """Simulator output: ingest-format quote and trade streams plus labels."""
    params: SynthParams
    quotes: QuoteBatch
    trades: TradeBatch
    truth: GroundTruth

    def write_quotes_csv(self, path: str | Path, exchange: str = "SIM") -> None:
        q = self.quotes
        with open(path, "w", encoding="utf-8") as f:
            f.write("date,time,exchange,bid,bidsize,ask,asksize,mode\n")
            for i in range(len(q)):
                f.write(f"{q.day},{_hms(int(q.ts[i]))},{exchange},{q.bid[i]:.4f},"
                        f"{q.bid_size[i]},{q.ask[i]:.4f},{q.ask_size[i]},1\n")

    def write_trades_csv(self, path: str | Path, exchange: str = "SIM") -> None:
        t = self.trades
        with open(path, "w", encoding="utf-8") as f:
            f.write("date,time,exchange,price,size,corr,cond\n")
            for i in range(len(t)):
                f.write(f"{t.day},{_hms(int(t.ts[i]))},{exchange},{t.price[i]:.4f},"
                        f"{t.size[i]},0,\n")


def _hms(seconds: int) -> str:
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}:{s:02d}"


# ---------------------------------------------------------------------------
# Stylized book simulator
# ---------------------------------------------------------------------------

def simulate_stylized_book(params: SynthParams) -> SimResult:
    """Run the stylized book and emit one quote record per book transition.

    Arrivals are a homogeneous Poisson stream over the horizon, timestamps
    floored to whole seconds (record order carries the intra-second sequence).
    Market orders also emit a trade print at the touch price they hit. An
    arrival that crosses one or more level boundaries emits one record per
    boundary so that every recorded transition carries exactly the shares it
    moved; each record has its own ground-truth entry. Adds that would
    improve the price when no room remains inside the spread are truncated at
    the full level and the dropped shares counted. Deterministic per seed.
    """
    D = params.depth
    rng = np.random.default_rng(params.seed)

    n = int(rng.poisson(params.event_rate * params.horizon))
    if n == 0:
        return _empty_sim(params)
    times = np.sort(rng.uniform(0.0, params.horizon, size=n))
    ts_arr = (params.session_start + np.floor(times)).astype(np.int64)
    types_arr = rng.choice(6, size=n, p=params.probabilities)
    sizes_arr = _parse_size_dist(params.effective_size_dist)(rng, n)
    improve_arr = rng.random(n) < params.improve_prob

    mid_ticks = round(params.initial_mid / params.tick)
    pb = mid_ticks - params.initial_spread_ticks // 2
    pa = pb + params.initial_spread_ticks
    qb = D
    qa = D
    if pb < 1:
        raise ValueError("initial_mid too low for the configured tick and spread")

    # Record columns (seq is implicit list position).
    r_ts = [params.session_start]
    r_pb = [pb]
    r_qb = [qb]
    r_pa = [pa]
    r_qa = [qa]
    # Ground-truth columns, one entry per record after the opening snapshot.
    g_type: list[int] = []
    g_e: list[int] = []
    g_order: list[int] = []
    # Trade prints.
    t_ts: list[int] = []
    t_price: list[int] = []
    t_size: list[int] = []

    saturated = 0

    ts_list = ts_arr.tolist()
    types_list = types_arr.tolist()
    sizes_list = sizes_arr.tolist()
    improve_list = improve_arr.tolist()

    t = ty = i = 0

    def emit(e: int) -> None:
        r_ts.append(t)
        r_pb.append(pb)
        r_qb.append(qb)
        r_pa.append(pa)
        r_qa.append(qa)
        g_type.append(ty)
        g_e.append(e)
        g_order.append(i)

    for i in range(n):
        t = ts_list[i]
        ty = types_list[i]
        s = sizes_list[i]

        if ty == MS or ty == CB:
            # Deplete the bid; walk down one level per boundary.
            if ty == MS:
                t_ts.append(t)
                t_price.append(pb)
                t_size.append(s)
            remaining = s
            while remaining >= qb:
                consumed = qb
                remaining -= consumed
                pb -= 1
                qb = D
                if pb < 1:
                    raise RuntimeError("bid price hit zero; raise initial_mid")
                emit(-consumed)
            if remaining > 0:
                qb -= remaining
                emit(-remaining)

        elif ty == MB or ty == CS:
            # Deplete the ask; walk up one level per boundary.
            if ty == MB:
                t_ts.append(t)
                t_price.append(pa)
                t_size.append(s)
            remaining = s
            while remaining >= qa:
                consumed = qa
                remaining -= consumed
                pa += 1
                qa = D
                emit(consumed)
            if remaining > 0:
                qa -= remaining
                emit(remaining)

        elif ty == LB:
            if improve_list[i] and pb + 1 < pa:
                # Post one tick inside the spread with a fresh queue.
                take = min(s, D)
                if take < s:
                    saturated += s - take
                pb += 1
                qb = take
                emit(take)
            else:
                remaining = s
                while remaining > 0:
                    room = D - qb
                    if remaining <= room:
                        qb += remaining
                        emit(remaining)
                        remaining = 0
                    else:
                        if room > 0:
                            qb = D
                            emit(room)
                            remaining -= room
                        if pb + 1 < pa:
                            take = min(remaining, D)
                            pb += 1
                            qb = take
                            emit(take)
                            remaining -= take
                        else:
                            saturated += remaining
                            remaining = 0

        else:  # LS
            if improve_list[i] and pa - 1 > pb:
                take = min(s, D)
                if take < s:
                    saturated += s - take
                pa -= 1
                qa = take
                emit(-take)
            else:
                remaining = s
                while remaining > 0:
                    room = D - qa
                    if remaining <= room:
                        qa += remaining
                        emit(-remaining)
                        remaining = 0
                    else:
                        if room > 0:
                            qa = D
                            emit(-room)
                            remaining -= room
                        if pa - 1 > pb:
                            take = min(remaining, D)
                            pa -= 1
                            qa = take
                            emit(-take)
                            remaining -= take
                        else:
                            saturated += remaining
                            remaining = 0

    rec_ts = np.array(r_ts, dtype=np.int64)
    rec_pb = np.array(r_pb, dtype=np.int64)
    rec_qb = np.array(r_qb, dtype=np.int64)
    rec_pa = np.array(r_pa, dtype=np.int64)
    rec_qa = np.array(r_qa, dtype=np.int64)
    n_rec = len(rec_ts)

    quotes = QuoteBatch(
        day=params.day,
        ts=rec_ts,
        seq=np.arange(n_rec, dtype=np.int64),
        exchange=np.full(n_rec, "SIM", dtype=object),
        bid=rec_pb * params.tick,
        bid_size=rec_qb,
        ask=rec_pa * params.tick,
        ask_size=rec_qa,
        mode=np.ones(n_rec, dtype=np.int64),
    )
    trades = TradeBatch(
        day=params.day,
        ts=np.array(t_ts, dtype=np.int64),
        seq=np.arange(len(t_ts), dtype=np.int64),
        price=np.array(t_price, dtype=np.int64) * params.tick,
        size=np.array(t_size, dtype=np.int64),
        correction=np.zeros(len(t_ts), dtype=np.int64),
        condition=np.full(len(t_ts), "", dtype=object),
    )
    truth = _build_truth(params, rec_ts, rec_pb, rec_pa,
                         np.array(g_type, dtype=np.int8),
                         np.array(g_e, dtype=np.int64),
                         np.array(g_order, dtype=np.int64),
                         saturated)
    return SimResult(params=params, quotes=quotes, trades=trades, truth=truth)


def _empty_sim(params: SynthParams) -> SimResult:
    quotes = QuoteBatch(
        day=params.day, ts=np.empty(0, dtype=np.int64), seq=np.empty(0, dtype=np.int64),
        exchange=np.empty(0, dtype=object), bid=np.empty(0),
        bid_size=np.empty(0, dtype=np.int64), ask=np.empty(0),
        ask_size=np.empty(0, dtype=np.int64), mode=np.empty(0, dtype=np.int64))
    trades = TradeBatch.from_records([], day=params.day)
    K = -(-params.horizon // params.bucket_seconds) if params.horizon else 0
    truth = GroundTruth(
        day=params.day, session_start=params.session_start,
        bucket_seconds=params.bucket_seconds, depth=params.depth,
        seq=np.empty(0, dtype=np.int64), ts=np.empty(0, dtype=np.int64),
        type=np.empty(0, dtype=np.int8), e=np.empty(0, dtype=np.int64),
        order_id=np.empty(0, dtype=np.int64), bucket=np.empty(0, dtype=np.int64),
        flows=np.zeros((K, 6), dtype=np.int64), bucket_dp=np.zeros(K),
        saturated_shares=0)
    return SimResult(params=params, quotes=quotes, trades=trades, truth=truth)


def _build_truth(params: SynthParams, rec_ts, rec_pb, rec_pa,
                 g_type, g_e, g_order, saturated: int) -> GroundTruth:
    dt = params.bucket_seconds
    t0 = params.session_start
    K = -(-params.horizon // dt)

    entry_ts = rec_ts[1:]
    bucket = np.clip(-((t0 - entry_ts) // dt), 0, K).astype(np.int64)

    flows = np.zeros((K, 6), dtype=np.int64)
    in_grid = bucket >= 1
    magnitude = np.abs(g_e)
    for ty in range(6):
        sel = in_grid & (g_type == ty)
        np.add.at(flows[:, ty], bucket[sel] - 1, magnitude[sel])

    # Mid (in ticks) prevailing at every grid point, carried forward.
    points = t0 + dt * np.arange(K + 1, dtype=np.int64)
    pos = np.searchsorted(rec_ts, points, side="right") - 1
    mids = (rec_pb[pos] + rec_pa[pos]) / 2.0
    bucket_dp = mids[1:] - mids[:-1]

    return GroundTruth(
        day=params.day, session_start=t0, bucket_seconds=dt, depth=params.depth,
        seq=np.arange(1, len(rec_ts), dtype=np.int64),
        ts=entry_ts, type=g_type, e=g_e, order_id=g_order, bucket=bucket,
        flows=flows, bucket_dp=bucket_dp, saturated_shares=saturated,
    )


# ---------------------------------------------------------------------------
# I.i.d. flow generator
# ---------------------------------------------------------------------------

def generate_iid_flow(
    scaling: ScalingParams,
    horizon: float,
    seed: int,
    *,
    e_dist: str = "normal",
    trade_size_dist: str = "fixed",
    session_start: int = 0,
    day: str = "2010-04-01",
) -> tuple[EventSeries, SignedTradeSeries]:
    """Emit events with i.i.d. contributions and an independent trade subset.

    Contributions are symmetric with the configured standard deviation
    ("normal", "rademacher" or "uniform"); an independent fraction of events
    carries a trade mark with sizes of the configured mean ("fixed",
    "geometric" or "exponential"). Arrival counts over the horizon follow a
    Poisson law at the configured event rate.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(scaling.event_rate * horizon))
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    ts = (session_start + np.floor(times)).astype(np.int64)
    seq = np.arange(n, dtype=np.int64)

    sigma = scaling.event_std
    if e_dist == "normal":
        e = rng.normal(0.0, sigma, size=n)
    elif e_dist == "rademacher":
        e = sigma * rng.choice(np.array([-1.0, 1.0]), size=n)
    elif e_dist == "uniform":
        half_width = sigma * math.sqrt(3.0)
        e = rng.uniform(-half_width, half_width, size=n)
    else:
        raise ValueError(f"unknown e_dist: {e_dist!r}")

    events = EventSeries(day=day, ts=ts, seq=seq, e=e,
                         price_changing=np.zeros(n, dtype=bool))

    is_trade = rng.random(n) < scaling.trade_fraction
    m = int(is_trade.sum())
    mu = scaling.mean_trade_size
    if trade_size_dist == "fixed":
        sizes = np.full(m, mu)
    elif trade_size_dist == "geometric":
        sizes = rng.geometric(1.0 / mu, size=m).astype(np.float64)
    elif trade_size_dist == "exponential":
        sizes = rng.exponential(mu, size=m)
    else:
        raise ValueError(f"unknown trade_size_dist: {trade_size_dist!r}")
    sides = rng.choice(np.array([-1, 1], dtype=np.int8), size=m)

    trades = SignedTradeSeries(
        day=day, ts=ts[is_trade], seq=seq[is_trade],
        price=np.ones(m), size=sizes, side=sides,
        matched_quote_seq=np.full(m, -1, dtype=np.int64),
    )
    return events, trades


# ---------------------------------------------------------------------------
# Scaling-limit harness
# ---------------------------------------------------------------------------

@dataclass
class CltCheckResult:
    statistic: float
    p_value: float
    ratios: np.ndarray
    replications: int
    redrawn: int

    def critical_value(self, alpha: float = 0.05) -> float:
        """Large-sample one-sample KS critical value (1.36/sqrt(n) at 5%)."""
        coeff = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}[alpha]
        return coeff / math.sqrt(len(self.ratios))


def proposition1_check(
    replications: int,
    scaling: ScalingParams,
    horizon: float,
    seed: int,
    *,
    e_dist: str = "normal",
    trade_size_dist: str = "fixed",
) -> CltCheckResult:
    """Monte-Carlo check that imbalance scales like the square root of volume.

    Each replication draws an independent flow, forms the normalized ratio

        sqrt(mu * pi) / sigma * OFI(T) / sqrt(VOL(T))

    and the sample of ratios is tested against a standard normal with a
    one-sample Kolmogorov-Smirnov test. Replications with zero traded volume
    are redrawn and counted.
    """
    if replications < 100:
        raise SampleSizeError(f"need at least 100 replications, got {replications}")
    ss = np.random.SeedSequence(seed)
    norm = math.sqrt(scaling.mean_trade_size * scaling.trade_fraction) / scaling.event_std

    ratios = np.empty(replications)
    redrawn = 0
    for r in range(replications):
        while True:
            child = ss.spawn(1)[0]
            events, trades = generate_iid_flow(
                scaling, horizon, int(child.generate_state(1, np.uint64)[0] >> 1),
                e_dist=e_dist, trade_size_dist=trade_size_dist)
            vol = float(trades.size.sum())
            if vol > 0:
                break
            redrawn += 1
        ratios[r] = norm * float(events.e.sum()) / math.sqrt(vol)

    stat, pval = scipy_stats.kstest(ratios, "norm")
    return CltCheckResult(statistic=float(stat), p_value=float(pval),
                          ratios=ratios, replications=replications, redrawn=redrawn)
