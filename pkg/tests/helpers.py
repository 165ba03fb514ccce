"""Shared test scaffolding: independent reference formulas and data builders.

The regression reference here is deliberately written from the covariance
matrix definitions with explicit loops, independent of the package's solver,
so fixture comparisons are a genuine dual-route check.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ofilab import BucketSeries, TimeGrid

DATA_DIR = Path(__file__).parent / "data"


# ---------------------------------------------------------------------------
# Textbook regression reference
# ---------------------------------------------------------------------------

def textbook_ols(y: np.ndarray, X: np.ndarray, nw_lags: int = 0) -> dict:
    """Coefficients and classical/HC0/Newey-West standard errors by definition."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ (X.T @ y)
    u = y - X @ beta

    se_classical = np.sqrt(np.diag(xtx_inv) * (u @ u) / (n - k))

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

    return {"coef": beta, "se_classical": se_classical, "se_hc0": se_hc0, "se_nw": se_nw}


def load_ols_fixture() -> tuple[np.ndarray, np.ndarray]:
    """The frozen 20-row fixture as (y, X-with-intercept)."""
    raw = np.loadtxt(DATA_DIR / "ols_fixture.csv", delimiter=",", skiprows=1)
    y = raw[:, 0]
    X = np.column_stack([np.ones(len(y)), raw[:, 1], raw[:, 2]])
    return y, X


# ---------------------------------------------------------------------------
# Series builders
# ---------------------------------------------------------------------------

def make_series(
    dp,
    ofi,
    ti=None,
    vol=None,
    ad=None,
    *,
    dt: int = 10,
    window_buckets: int | None = None,
    day: str = "2010-04-01",
) -> BucketSeries:
    """Assemble a BucketSeries directly from per-bucket arrays."""
    dp = np.asarray(dp, dtype=float)
    K = len(dp)
    per = window_buckets if window_buckets is not None else K
    grid = TimeGrid(session_start=0, session_end=K * dt, dt=dt,
                    window=per * dt, tick=0.01)
    zeros = np.zeros(K)
    if ad is None:
        ad_arr = np.full(grid.n_windows, np.nan)
    else:
        ad_arr = np.asarray(ad, dtype=float)
    return BucketSeries(
        day=day, grid=grid, dp=dp,
        ofi=np.asarray(ofi, dtype=float),
        ti=zeros if ti is None else np.asarray(ti, dtype=float),
        vol=zeros if vol is None else np.asarray(vol, dtype=float),
        n_trades=np.zeros(K, dtype=np.int64),
        n_events=np.ones(K, dtype=np.int64),
        ad=ad_arr,
    )


def scaling_relation_series(
    n_windows: int,
    buckets_per_window: int,
    *,
    beta: float = 0.01,
    sigma: float = 100.0,
    mu: float = 100.0,
    pi: float = 0.5,
    noise: float = 0.0,
    seed: int = 0,
) -> BucketSeries:
    """Buckets where imbalance rides the square root of volume.

    Per bucket: VOL lognormal, OFI = xi * (sigma/sqrt(mu*pi)) * sqrt(VOL) with
    xi standard normal, and dp = beta*OFI + noise*N(0,1). The log-log slope of
    |dp| on VOL is 1/2 by construction.
    """
    rng = np.random.default_rng(seed)
    K = n_windows * buckets_per_window
    vol = rng.lognormal(mean=5.0, sigma=1.0, size=K)
    xi = rng.normal(0.0, 1.0, size=K)
    ofi = xi * (sigma / np.sqrt(mu * pi)) * np.sqrt(vol)
    dp = beta * ofi + noise * rng.normal(0.0, 1.0, size=K)
    return make_series(dp, ofi, vol=vol, window_buckets=buckets_per_window)


def linear_impact_series(
    n_windows: int,
    buckets_per_window: int,
    *,
    beta: float = 0.01,
    ofi_scale: float = 500.0,
    noise: float = 0.0,
    seed: int = 0,
) -> BucketSeries:
    """Buckets with an exactly (or noisily) linear dp-on-ofi relation."""
    rng = np.random.default_rng(seed)
    K = n_windows * buckets_per_window
    ofi = rng.normal(0.0, ofi_scale, size=K)
    dp = beta * ofi + (noise * rng.normal(0.0, 1.0, size=K) if noise else 0.0)
    return make_series(dp, ofi, window_buckets=buckets_per_window)
