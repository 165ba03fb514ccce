"""Loaders, filters, NBBO consolidation and trade signing."""

import io
from datetime import date

import numpy as np
import pytest

from ofilab import (
    FormatError,
    NbboSeries,
    NbboSnapshot,
    QuoteBatch,
    TradeBatch,
    apply_spread_filter,
    build_nbbo,
    load_quotes,
    load_trades,
    nearest_rank_quantile,
    sign_trades,
)

from helpers import DATA_DIR

DAY = date(2010, 4, 1)


def _quotes_csv(rows: list[str]) -> io.BytesIO:
    text = "date,time,exchange,bid,bidsize,ask,asksize,mode\n" + "".join(r + "\n" for r in rows)
    return io.BytesIO(text.encode())


def _trades_csv(rows: list[str]) -> io.BytesIO:
    text = "date,time,exchange,price,size,corr,cond\n" + "".join(r + "\n" for r in rows)
    return io.BytesIO(text.encode())


# ---------------------------------------------------------------------------
# Quote filters
# ---------------------------------------------------------------------------

class TestLoadQuotes:
    def test_session_bounds(self):
        batch, rep = load_quotes(_quotes_csv([
            "2010-04-01,09:29:59,NYSE,10.00,100,10.01,100,1",   # before open
            "2010-04-01,09:30:00,NYSE,10.00,100,10.01,100,1",
            "2010-04-01,16:00:00,NYSE,10.00,100,10.01,100,1",
            "2010-04-01,16:00:01,NYSE,10.00,100,10.01,100,1",   # after close
        ]), DAY)
        assert len(batch) == 2
        assert rep.rejected["out_of_session"] == 2
        assert list(batch.ts) == [34200, 57600]

    def test_nonpositive_sizes_and_prices(self):
        batch, rep = load_quotes(_quotes_csv([
            "2010-04-01,10:00:00,NYSE,10.00,0,10.01,100,1",
            "2010-04-01,10:00:00,NYSE,0.00,100,10.01,100,1",
            "2010-04-01,10:00:00,NYSE,10.00,100,10.01,0,1",
            "2010-04-01,10:00:00,NYSE,10.00,100,10.01,100,1",
        ]), DAY)
        assert len(batch) == 1
        assert rep.rejected["nonpositive"] == 3

    def test_excluded_modes(self):
        rows = [f"2010-04-01,10:00:00,NYSE,10.00,100,10.01,100,{m}"
                for m in (1, 4, 7, 12, 28)]
        batch, rep = load_quotes(_quotes_csv(rows), DAY)
        assert list(batch.mode) == [1, 12]
        assert rep.rejected["excluded_mode"] == 3

    def test_well_formed_mode_one_included_unchanged(self):
        batch, rep = load_quotes(_quotes_csv([
            "2010-04-01,11:30:15,ARCA,25.13,700,25.15,350,1",
        ]), DAY)
        assert rep.accepted == 1 and rep.rejected_total == 0
        q = batch.record(0)
        assert (q.timestamp, q.exchange, q.bid_price, q.bid_size,
                q.ask_price, q.ask_size, q.mode) == (41415, "ARCA", 25.13, 700, 25.15, 350, 1)

    def test_malformed_rows_counted(self):
        batch, rep = load_quotes(_quotes_csv([
            "2010-04-01,banana,NYSE,10.00,100,10.01,100,1",     # bad time
            "2010-04-01,10:00:00,NYSE,abc,100,10.01,100,1",     # bad price
            "2010-04-01,10:00:00,NYSE,10.00,100,10.01,100,1,9,9,9",  # ragged
            "2010-04-01,10:00:00,NYSE,10.00,100,10.01,100,1",
        ]), DAY)
        assert rep.malformed == 3
        assert rep.accepted == 1
        assert rep.conserved()

    def test_date_mismatch_rejected(self):
        batch, rep = load_quotes(_quotes_csv([
            "2010-04-02,10:00:00,NYSE,10.00,100,10.01,100,1",
        ]), DAY)
        assert len(batch) == 0
        assert rep.rejected["date_mismatch"] == 1

    def test_header_mismatch(self):
        bad = io.BytesIO(b"time,exchange,bid\n09:30:00,NYSE,10.0\n")
        with pytest.raises(FormatError):
            load_quotes(bad, DAY)

    def test_empty_file(self):
        with pytest.raises(FormatError):
            load_quotes(io.BytesIO(b""), DAY)

    def test_unreadable_source(self, tmp_path):
        with pytest.raises(OSError):
            load_quotes(tmp_path / "nope.csv", DAY)

    def test_filter_idempotence(self):
        rows = [
            "2010-04-01,09:29:59,NYSE,10.00,100,10.01,100,1",
            "2010-04-01,09:30:01,NYSE,10.00,100,10.01,100,4",
            "2010-04-01,09:30:02,NYSE,10.00,100,10.01,100,1",
            "2010-04-01,09:30:03,NSDQ,10.00,0,10.01,100,1",
            "2010-04-01,09:30:04,NSDQ,10.02,300,10.03,200,1",
        ]
        once, rep1 = load_quotes(_quotes_csv(rows), DAY)
        # Re-serialize the survivors and load again: nothing more is dropped.
        again_rows = [
            f"2010-04-01,{h:02d}:{m:02d}:{s:02d},{once.exchange[i]},{once.bid[i]},"
            f"{once.bid_size[i]},{once.ask[i]},{once.ask_size[i]},{once.mode[i]}"
            for i, (h, m, s) in enumerate(
                (int(t) // 3600, int(t) % 3600 // 60, int(t) % 60) for t in once.ts)
        ]
        twice, rep2 = load_quotes(_quotes_csv(again_rows), DAY)
        assert rep2.rejected_total == 0 and rep2.malformed == 0
        assert np.array_equal(once.ts, twice.ts)
        assert np.array_equal(once.bid, twice.bid)
        assert np.array_equal(once.ask_size, twice.ask_size)

    def test_determinism(self):
        rows = ["2010-04-01,10:00:00,NYSE,10.00,100,10.01,100,1",
                "2010-04-01,10:00:01,NSDQ,10.01,50,10.02,60,1"]
        a, _ = load_quotes(_quotes_csv(rows), DAY)
        b, _ = load_quotes(_quotes_csv(rows), DAY)
        for field in ("ts", "seq", "bid", "bid_size", "ask", "ask_size"):
            assert np.array_equal(getattr(a, field), getattr(b, field))

    def test_seq_preserves_file_row_indices(self):
        batch, _ = load_quotes(_quotes_csv([
            "2010-04-01,09:00:00,NYSE,10.00,100,10.01,100,1",   # rejected (row 0)
            "2010-04-01,10:00:00,NYSE,10.00,100,10.01,100,1",   # row 1
            "2010-04-01,10:00:01,NYSE,10.00,0,10.01,100,1",     # rejected (row 2)
            "2010-04-01,10:00:02,NYSE,10.00,100,10.01,100,1",   # row 3
        ]), DAY)
        assert list(batch.seq) == [1, 3]


# ---------------------------------------------------------------------------
# Trade filters
# ---------------------------------------------------------------------------

class TestLoadTrades:
    def test_correction_filter(self):
        batch, rep = load_trades(_trades_csv([
            "2010-04-01,10:00:00,NYSE,10.00,100,3,",
            "2010-04-01,10:00:00,NYSE,10.00,100,2,",
            "2010-04-01,10:00:00,NYSE,10.00,100,0,",
        ]), DAY)
        assert len(batch) == 2
        assert rep.rejected["correction"] == 1

    def test_condition_filter(self):
        batch, rep = load_trades(_trades_csv([
            "2010-04-01,10:00:00,NYSE,10.00,100,0,O",
            "2010-04-01,10:00:00,NYSE,10.00,100,0,Z",
            "2010-04-01,10:00:00,NYSE,10.00,100,0,F",
            "2010-04-01,10:00:00,NYSE,10.00,100,0,",
        ]), DAY)
        assert len(batch) == 2
        assert rep.rejected["excluded_condition"] == 2

    def test_good_trade_kept(self):
        batch, rep = load_trades(_trades_csv([
            "2010-04-01,12:00:00,NYSE,31.41,250,0,",
        ]), DAY)
        assert rep.accepted == 1
        t = batch.record(0)
        assert (t.timestamp, t.price, t.size, t.correction, t.condition) == \
            (43200, 31.41, 250, 0, "")

    def test_session_and_positive(self):
        batch, rep = load_trades(_trades_csv([
            "2010-04-01,09:00:00,NYSE,10.00,100,0,",
            "2010-04-01,10:00:00,NYSE,-1.00,100,0,",
            "2010-04-01,10:00:00,NYSE,10.00,0,0,",
        ]), DAY)
        assert len(batch) == 0
        assert rep.rejected["out_of_session"] == 1
        assert rep.rejected["nonpositive"] == 2
        assert rep.conserved()


# ---------------------------------------------------------------------------
# NBBO consolidation
# ---------------------------------------------------------------------------

class TestBuildNbbo:
    def test_golden_ties(self, tmp_path):
        batch, _ = load_quotes(DATA_DIR / "nbbo_ties_quotes.csv", DAY)
        nbbo = build_nbbo(batch)
        out = tmp_path / "nbbo.csv"
        nbbo.to_csv(out)
        assert out.read_bytes() == (DATA_DIR / "nbbo_ties_expected.csv").read_bytes()

    def test_golden_crossed(self, tmp_path):
        batch, _ = load_quotes(DATA_DIR / "nbbo_crossed_quotes.csv", DAY)
        nbbo = build_nbbo(batch)
        out = tmp_path / "nbbo.csv"
        nbbo.to_csv(out)
        assert out.read_bytes() == (DATA_DIR / "nbbo_crossed_expected.csv").read_bytes()
        assert list(nbbo.crossed) == [False, True, False]
        clean, removed = nbbo.drop_crossed()
        assert removed == 1 and len(clean) == 2

    def test_single_exchange_passthrough(self):
        rng = np.random.default_rng(5)
        n = 50
        bid = 10.0 + rng.integers(0, 5, n) * 0.01
        rows = [f"2010-04-01,10:00:{i % 60:02d},NYSE,{bid[i]:.2f},{rng.integers(1, 500)},"
                f"{bid[i] + 0.02:.2f},{rng.integers(1, 500)},1" for i in range(n)]
        batch, _ = load_quotes(_quotes_csv(rows), DAY)
        nbbo = build_nbbo(batch)
        assert np.array_equal(nbbo.bid, batch.bid)
        assert np.array_equal(nbbo.bid_size, batch.bid_size)
        assert np.array_equal(nbbo.ask, batch.ask)
        assert np.array_equal(nbbo.ask_size, batch.ask_size)

    def test_empty_input(self):
        nbbo = build_nbbo(QuoteBatch.from_records([], day="2010-04-01"))
        assert len(nbbo) == 0

    def test_out_of_order_timestamps_rejected(self):
        batch, _ = load_quotes(_quotes_csv([
            "2010-04-01,10:00:05,NYSE,10.00,100,10.01,100,1",
            "2010-04-01,10:00:01,NYSE,10.00,100,10.01,100,1",
        ]), DAY)
        with pytest.raises(FormatError):
            build_nbbo(batch)

    def test_matches_bruteforce_scan(self):
        # Sequential exchange-matrix reference against the vectorized path.
        rng = np.random.default_rng(99)
        exchanges = ["NYSE", "NSDQ", "ARCA", "BATS"]
        rows = []
        for i in range(400):
            ex = exchanges[rng.integers(0, len(exchanges))]
            bid = 10.00 + int(rng.integers(-3, 4)) * 0.01
            ask = bid + int(rng.integers(1, 4)) * 0.01
            rows.append(f"2010-04-01,10:{i // 60:02d}:{i % 60:02d},{ex},{bid:.2f},"
                        f"{rng.integers(1, 900)},{ask:.2f},{rng.integers(1, 900)},1")
        batch, _ = load_quotes(_quotes_csv(rows), DAY)
        nbbo = build_nbbo(batch)

        state: dict[str, tuple] = {}
        for i in range(len(batch)):
            r = batch.record(i)
            state[r.exchange] = (r.bid_price, r.bid_size, r.ask_price, r.ask_size)
            best_bid = max(v[0] for v in state.values())
            best_ask = min(v[2] for v in state.values())
            bid_sz = sum(v[1] for v in state.values() if v[0] == best_bid)
            ask_sz = sum(v[3] for v in state.values() if v[2] == best_ask)
            assert nbbo.bid[i] == best_bid
            assert nbbo.ask[i] == best_ask
            assert nbbo.bid_size[i] == bid_sz
            assert nbbo.ask_size[i] == ask_sz
            # Dominance: best quotes bound every exchange row.
            assert all(nbbo.bid[i] >= v[0] for v in state.values())
            assert all(nbbo.ask[i] <= v[2] for v in state.values())


# ---------------------------------------------------------------------------
# Spread filter
# ---------------------------------------------------------------------------

def _snapshots(spreads_cents: list[int]) -> NbboSeries:
    snaps = [NbboSnapshot(34200 + i, i, 10.00, 100, 10.00 + c / 100.0, 100)
             for i, c in enumerate(spreads_cents)]
    return NbboSeries.from_snapshots(snaps, day="2010-04-01")


class TestSpreadFilter:
    def test_percentile_one_keeps_all(self):
        nbbo = _snapshots([1, 5, 3, 2])
        out, removed = apply_spread_filter(nbbo, 1.0)
        assert removed == 0 and len(out) == 4

    def test_nearest_rank_removes_top_five(self):
        nbbo = _snapshots(list(range(1, 101)))
        out, removed = apply_spread_filter(nbbo, 0.95)
        assert removed == 5
        assert len(out) == 95
        assert out.spread.max() <= 0.95 + 1e-12

    def test_equal_spreads_nothing_removed(self):
        nbbo = _snapshots([2] * 10)
        out, removed = apply_spread_filter(nbbo, 0.5)
        assert removed == 0

    def test_bad_percentile(self):
        nbbo = _snapshots([1, 2])
        with pytest.raises(ValueError):
            apply_spread_filter(nbbo, 0.0)
        with pytest.raises(ValueError):
            apply_spread_filter(nbbo, 1.5)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            apply_spread_filter(NbboSeries.from_snapshots([], day="d"), 0.95)

    def test_nearest_rank_quantile(self):
        assert nearest_rank_quantile(np.arange(1.0, 101.0), 0.95) == 95.0
        assert nearest_rank_quantile(np.array([7.0]), 0.5) == 7.0


# ---------------------------------------------------------------------------
# Trade signing
# ---------------------------------------------------------------------------

def _nbbo_for_signing() -> NbboSeries:
    snaps = [
        NbboSnapshot(34200, 0, 10.00, 100, 10.01, 100),
        NbboSnapshot(34203, 1, 10.00, 100, 10.02, 100),
        NbboSnapshot(34204, 2, 10.01, 100, 10.02, 100),
    ]
    return NbboSeries.from_snapshots(snaps, day="2010-04-01")


def _trades(rows: list[tuple[int, float, int]]) -> TradeBatch:
    return TradeBatch(
        day="2010-04-01",
        ts=np.array([r[0] for r in rows], dtype=np.int64),
        seq=np.arange(len(rows), dtype=np.int64),
        price=np.array([r[1] for r in rows]),
        size=np.array([r[2] for r in rows], dtype=np.int64),
        correction=np.zeros(len(rows), dtype=np.int64),
        condition=np.array([""] * len(rows), dtype=object),
    )


class TestQuoteTest:
    def test_buy_at_ask_same_second(self):
        res = sign_trades(_nbbo_for_signing(), _trades([(34200, 10.01, 50)]))
        assert len(res.signed) == 1
        t = res.signed.record(0)
        assert t.side == 1 and t.matched_quote_seq == 0

    def test_inside_spread_excluded(self):
        res = sign_trades(_nbbo_for_signing(), _trades([(34204, 10.015, 50)]))
        assert len(res.signed) == 0
        assert res.unmatched_count == 1

    def test_earliest_eligible_quote_wins(self):
        # 10.02 hits the ask of both quote 1 (ts 34203) and quote 2 (ts 34204).
        res = sign_trades(_nbbo_for_signing(), _trades([(34204, 10.02, 50)]))
        t = res.signed.record(0)
        assert t.side == 1 and t.matched_quote_seq == 1

    def test_quote_too_old(self):
        # Only quote 0 (ts 34200) could match on price, but it is 2s stale.
        res = sign_trades(_nbbo_for_signing(), _trades([(34202, 10.01, 50)]))
        assert res.unmatched_count == 1

    def test_sell_at_bid(self):
        res = sign_trades(_nbbo_for_signing(), _trades([(34203, 10.00, 70)]))
        t = res.signed.record(0)
        assert t.side == -1 and t.matched_quote_seq in (0, 1)
        assert t.sell_size == 70 and t.buy_size == 0

    def test_locked_quote_buy_precedence(self):
        # At a locked quote both side conditions hold; buy is checked first.
        snaps = [NbboSnapshot(34200, 0, 10.01, 100, 10.01, 75)]
        nbbo = NbboSeries.from_snapshots(snaps, day="2010-04-01")
        res = sign_trades(nbbo, _trades([(34200, 10.01, 30)]))
        assert res.signed.record(0).side == 1

    def test_empty_nbbo_all_unmatched(self):
        empty = NbboSeries.from_snapshots([], day="2010-04-01")
        res = sign_trades(empty, _trades([(34200, 10.0, 10), (34201, 10.1, 20)]))
        assert len(res.signed) == 0 and res.unmatched_count == 2

    def test_soundness_exhaustive(self):
        # Every signed trade satisfies its side inequality against the matched
        # snapshot; every unmatched trade has no eligible quote at all.
        rng = np.random.default_rng(17)
        snaps = []
        for i in range(120):
            bid = 10.00 + int(rng.integers(-4, 5)) * 0.01
            snaps.append(NbboSnapshot(34200 + int(rng.integers(0, 60)), i,
                                      bid, 100, bid + int(rng.integers(1, 4)) * 0.01, 100))
        snaps.sort(key=lambda s: s.timestamp)
        for i, s in enumerate(snaps):
            s.seq = i
        nbbo = NbboSeries.from_snapshots(snaps, day="2010-04-01")
        trades = _trades([(34200 + int(rng.integers(0, 62)),
                           10.00 + int(rng.integers(-5, 6)) * 0.01,
                           int(rng.integers(1, 300))) for _ in range(200)])
        res = sign_trades(nbbo, trades)

        by_seq = {int(nbbo.seq[i]): i for i in range(len(nbbo))}
        for t in res.signed:
            j = by_seq[t.matched_quote_seq]
            assert t.timestamp - 1 <= nbbo.ts[j] <= t.timestamp
            if t.side == 1:
                assert t.price >= nbbo.ask[j]
            else:
                assert t.price <= nbbo.bid[j]
        for t in res.unmatched:
            eligible = [j for j in range(len(nbbo))
                        if t.timestamp - 1 <= nbbo.ts[j] <= t.timestamp
                        and (t.price >= nbbo.ask[j] or t.price <= nbbo.bid[j])]
            assert eligible == []


class TestTickTest:
    def test_uptick_buy(self):
        res = sign_trades(_nbbo_for_signing(), _trades([(34200, 10.00, 10),
                                                        (34201, 10.01, 20)]),
                          mode="tick_test")
        assert len(res.signed) == 1
        assert res.signed.record(0).side == 1
        assert res.unmatched_count == 1  # first trade has no reference price

    def test_downtick_sell_and_carry(self):
        res = sign_trades(_nbbo_for_signing(),
                          _trades([(34200, 10.02, 10), (34201, 10.01, 20),
                                   (34202, 10.01, 30), (34203, 10.03, 40)]),
                          mode="tick_test")
        sides = [t.side for t in res.signed]
        assert sides == [-1, -1, 1]  # downtick, carried, uptick

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            sign_trades(_nbbo_for_signing(), _trades([(34200, 10.0, 1)]), mode="lee_ready")
