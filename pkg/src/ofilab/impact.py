"""Price-impact estimation: per-window regressions, depth dependence,
trade/volume horse races, intraday seasonality and variance decomposition.

Every fit runs on the defined buckets of one estimation window of a
BucketSeries. Window-level outputs carry (day, window) labels so results can
be pooled across days for a symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CollinearityError, EstimationError
from .flow import BucketSeries
from .ols import (Z_5PCT, OlsFit, excess_kurtosis, newey_west_auto_lag,
                  ols, with_intercept)

DEFAULT_MIN_BUCKETS = 30
DEFAULT_MIN_WINDOWS = 30


@dataclass(frozen=True)
class SkippedWindow:
    day: str
    window: int
    reason: str


# ---------------------------------------------------------------------------
# Per-window impact regression
# ---------------------------------------------------------------------------

@dataclass
class ImpactWindowResult:
    """One window's fit of price change on order flow imbalance."""
    day: str
    window: int
    nobs: int
    alpha: float
    t_alpha: float
    beta: float
    t_beta: float
    r2: float
    resid_kurtosis: float
    ad: float
    gamma_q: float | None = None
    t_gamma_q: float | None = None
    r2_quadratic: float | None = None

    @property
    def beta_significant(self) -> bool:
        return abs(self.t_beta) > Z_5PCT

    @property
    def alpha_significant(self) -> bool:
        return abs(self.t_alpha) > Z_5PCT

    @property
    def gamma_significant(self) -> bool | None:
        if self.t_gamma_q is None:
            return None
        return abs(self.t_gamma_q) > Z_5PCT


def _window_data(series: BucketSeries, i: int) -> tuple[np.ndarray, ...]:
    mask = series.window_slice(i) & series.defined
    return (series.dp[mask], series.ofi[mask], series.ti[mask], series.vol[mask])


def impact_regression(
    series: BucketSeries,
    quadratic: bool = False,
    *,
    min_buckets: int = DEFAULT_MIN_BUCKETS,
    se_mode: str = "white_hc0",
) -> tuple[list[ImpactWindowResult], list[SkippedWindow]]:
    """Regress per-bucket price changes on order flow imbalance, window by window.

    Returns the per-window fits plus a log of skipped windows (too few defined
    buckets, or a degenerate regressor). With ``quadratic`` set, a second fit
    adds the signed-square term ofi*|ofi| and its coefficient is reported
    alongside the linear fit.
    """
    results: list[ImpactWindowResult] = []
    skipped: list[SkippedWindow] = []
    for i in range(1, series.grid.n_windows + 1):
        dp, ofi, _, _ = _window_data(series, i)
        if len(dp) < min_buckets:
            skipped.append(SkippedWindow(series.day, i,
                                         f"{len(dp)} defined buckets < floor {min_buckets}"))
            continue
        try:
            fit = ols(dp, with_intercept(ofi), se_mode, names=["const", "ofi"])
        except CollinearityError as err:
            skipped.append(SkippedWindow(series.day, i, f"degenerate regressor: {err}"))
            continue

        res = ImpactWindowResult(
            day=series.day, window=i, nobs=fit.nobs,
            alpha=float(fit.coef[0]), t_alpha=float(fit.tstat[0]),
            beta=float(fit.coef[1]), t_beta=float(fit.tstat[1]),
            r2=fit.r2, resid_kurtosis=excess_kurtosis(fit.residuals),
            ad=float(series.ad[i - 1]),
        )
        if quadratic:
            try:
                qfit = ols(dp, with_intercept(ofi, ofi * np.abs(ofi)), se_mode,
                           names=["const", "ofi", "ofi_sq"])
                res.gamma_q = float(qfit.coef[2])
                res.t_gamma_q = float(qfit.tstat[2])
                res.r2_quadratic = qfit.r2
            except CollinearityError:
                pass  # linear fit stands; quadratic term unavailable
        results.append(res)
    return results, skipped


# ---------------------------------------------------------------------------
# Depth dependence (two-stage fit)
# ---------------------------------------------------------------------------

@dataclass
class DepthModelFit:
    """Two-stage fit of the impact coefficient against average depth.

    Stage one estimates the depth exponent from a log-linear regression of
    the per-window impact coefficients on log depth; stage two, given that
    exponent, estimates the level constant in a linear regression on
    depth^-exponent. Confidence intervals use normal critical values.
    """
    lam: float
    lam_se: float
    t_lam: float
    lam_ci: tuple[float, float]
    c: float
    c_se: float
    t_c: float
    c_ci: tuple[float, float]
    r2_log: float
    corr2_fitted: float      # squared corr of beta with c/AD^lam
    corr2_restricted: float  # squared corr of beta with c/AD (exponent pinned to 1)
    n_used: int
    n_excluded: int          # windows dropped for beta <= 0 or undefined depth
    nw_lags: int


def _corr2(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = np.std(a), np.std(b)
    if sa == 0.0 or sb == 0.0:
        return float("nan")
    r = float(np.corrcoef(a, b)[0, 1])
    return r * r


def depth_regression(
    window_results: Sequence[ImpactWindowResult],
    *,
    min_windows: int = DEFAULT_MIN_WINDOWS,
    nw_lags: int | None = None,
) -> DepthModelFit:
    """Fit the per-window impact coefficients against average depth.

    Windows with non-positive impact coefficients or undefined depth are
    excluded (counted in ``n_excluded``); at least ``min_windows`` usable
    windows are required. Both stages use Newey-West standard errors.
    """
    beta = np.array([r.beta for r in window_results])
    ad = np.array([r.ad for r in window_results])
    usable = (beta > 0) & np.isfinite(ad) & (ad > 0)
    n_excluded = int((~usable).sum())
    if not usable.any():
        raise EstimationError("no windows with positive impact coefficient and defined depth")
    if int(usable.sum()) < min_windows:
        raise EstimationError(
            f"only {int(usable.sum())} usable windows, need at least {min_windows}")

    b = beta[usable]
    d = ad[usable]
    n = len(b)
    lags = nw_lags if nw_lags is not None else newey_west_auto_lag(n)

    log_fit = ols(np.log(b), with_intercept(np.log(d)), "newey_west",
                  nw_lags=lags, names=["const", "log_ad"])
    lam = -float(log_fit.coef[1])
    lam_se = float(log_fit.se[1])

    level_fit = ols(b, with_intercept(d ** (-lam)), "newey_west",
                    nw_lags=lags, names=["const", "inv_ad_lam"])
    c = float(level_fit.coef[1])
    c_se = float(level_fit.se[1])

    fitted = c * d ** (-lam)
    restricted = c / d

    return DepthModelFit(
        lam=lam, lam_se=lam_se,
        t_lam=lam / lam_se if lam_se > 0 else float("inf"),
        lam_ci=(lam - Z_5PCT * lam_se, lam + Z_5PCT * lam_se),
        c=c, c_se=c_se,
        t_c=c / c_se if c_se > 0 else float("inf"),
        c_ci=(c - Z_5PCT * c_se, c + Z_5PCT * c_se),
        r2_log=log_fit.r2,
        corr2_fitted=_corr2(b, fitted),
        corr2_restricted=_corr2(b, restricted),
        n_used=n, n_excluded=n_excluded, nw_lags=lags,
    )


# ---------------------------------------------------------------------------
# Horse-race comparisons
# ---------------------------------------------------------------------------

@dataclass
class ComparisonWindowResult:
    """One window's single- and two-covariate fits for a regressor family.

    levels family:      dp ~ ofi,      dp ~ ti,       dp ~ ofi + ti
    magnitudes family: |dp| ~ |ofi|,  |dp| ~ vol^H,  |dp| ~ |ofi| + vol^H
    """
    day: str
    window: int
    family: str
    first: OlsFit | None
    second: OlsFit | None
    both: OlsFit | None
    first_skip: str | None = None
    second_skip: str | None = None
    both_skip: str | None = None
    exponent: float | None = None


def comparison_regressions(
    series: BucketSeries,
    family: str,
    exponent_per_window: Mapping[int, float] | None = None,
    *,
    min_buckets: int = DEFAULT_MIN_BUCKETS,
    se_mode: str = "white_hc0",
) -> tuple[list[ComparisonWindowResult], list[SkippedWindow]]:
    """Per-window comparison of flow imbalance against trade-based covariates.

    ``family`` is "levels" (trade imbalance as the competing covariate) or
    "magnitudes" (powered volume; requires per-window exponents). A window's
    two-covariate fit is skipped with a report when the covariates are
    collinear; single-covariate fits are still produced when possible.
    """
    if family not in ("levels", "magnitudes"):
        raise ValueError(f"unknown family: {family!r}")
    if family == "magnitudes" and exponent_per_window is None:
        raise ValueError("magnitudes family requires per-window exponents")

    results: list[ComparisonWindowResult] = []
    skipped: list[SkippedWindow] = []
    for i in range(1, series.grid.n_windows + 1):
        dp, ofi, ti, vol = _window_data(series, i)
        if len(dp) < min_buckets:
            skipped.append(SkippedWindow(series.day, i,
                                         f"{len(dp)} defined buckets < floor {min_buckets}"))
            continue

        if family == "levels":
            y, x1, x2 = dp, ofi, ti
            n1, n2 = "ofi", "ti"
            exponent = None
        else:
            if i not in exponent_per_window:
                skipped.append(SkippedWindow(series.day, i, "no scaling exponent for window"))
                continue
            exponent = float(exponent_per_window[i])
            # Powered volume is undefined at zero volume (the exponent may be
            # negative); the magnitude family fits positive-volume buckets.
            pos = vol > 0
            if int(pos.sum()) < min_buckets:
                skipped.append(SkippedWindow(
                    series.day, i,
                    f"{int(pos.sum())} positive-volume buckets < floor {min_buckets}"))
                continue
            y, x1, x2 = np.abs(dp[pos]), np.abs(ofi[pos]), vol[pos] ** exponent
            n1, n2 = "abs_ofi", "vol_pow"

        res = ComparisonWindowResult(day=series.day, window=i, family=family,
                                     first=None, second=None, both=None,
                                     exponent=exponent)
        try:
            res.first = ols(y, with_intercept(x1), se_mode, names=["const", n1])
        except CollinearityError as err:
            res.first_skip = str(err)
        try:
            res.second = ols(y, with_intercept(x2), se_mode, names=["const", n2])
        except CollinearityError as err:
            res.second_skip = str(err)
        try:
            res.both = ols(y, with_intercept(x1, x2), se_mode, names=["const", n1, n2])
        except CollinearityError as err:
            res.both_skip = str(err)

        if res.first is None and res.second is None and res.both is None:
            skipped.append(SkippedWindow(series.day, i, "all covariates degenerate"))
            continue
        results.append(res)
    return results, skipped


# ---------------------------------------------------------------------------
# Volume scaling exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingExponentResult:
    day: str
    window: int
    h: float
    nobs: int


def estimate_scaling_exponent(
    series: BucketSeries,
    *,
    min_buckets: int = DEFAULT_MIN_BUCKETS,
) -> tuple[list[ScalingExponentResult], list[SkippedWindow]]:
    """Per-window log-log slope of absolute price change on traded volume.

    Only buckets with nonzero price change and positive volume enter the fit;
    windows with fewer than ``min_buckets`` such buckets, or with degenerate
    log-volume, are skipped.
    """
    results: list[ScalingExponentResult] = []
    skipped: list[SkippedWindow] = []
    for i in range(1, series.grid.n_windows + 1):
        mask = series.window_slice(i) & series.defined
        dp = series.dp[mask]
        vol = series.vol[mask]
        use = (np.abs(dp) > 0) & (vol > 0)
        if int(use.sum()) < min_buckets:
            skipped.append(SkippedWindow(
                series.day, i,
                f"{int(use.sum())} usable buckets < floor {min_buckets}"))
            continue
        try:
            fit = ols(np.log(np.abs(dp[use])), with_intercept(np.log(vol[use])),
                      "white_hc0", names=["const", "log_vol"])
        except CollinearityError as err:
            skipped.append(SkippedWindow(series.day, i, f"degenerate regressor: {err}"))
            continue
        results.append(ScalingExponentResult(series.day, i, float(fit.coef[1]), fit.nobs))
    return results, skipped


# ---------------------------------------------------------------------------
# Intraday seasonality
# ---------------------------------------------------------------------------

@dataclass
class SeasonalityProfile:
    """Cross-symbol average of per-symbol normalized intraday patterns.

    Each symbol's statistic is averaged per window slot across days, divided
    by that symbol's overall mean, and the normalized profiles are then
    averaged across symbols. Slots undefined for every day of a symbol stay
    NaN and drop out of the cross-symbol average.
    """
    per_symbol: dict[str, np.ndarray]
    combined: np.ndarray

    @property
    def n_slots(self) -> int:
        return len(self.combined)


def seasonality_profile(values_by_symbol: Mapping[str, np.ndarray]) -> SeasonalityProfile:
    """Build the normalized intraday profile of a per-window statistic.

    ``values_by_symbol`` maps each symbol to a (days x slots) array of window
    statistics, NaN where undefined.
    """
    if not values_by_symbol:
        raise ValueError("no symbols given")
    per_symbol: dict[str, np.ndarray] = {}
    n_slots = None
    for sym, values in values_by_symbol.items():
        arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if n_slots is None:
            n_slots = arr.shape[1]
        elif arr.shape[1] != n_slots:
            raise ValueError("slot counts differ across symbols")
        slot_mean = _masked_column_mean(arr)
        finite = np.isfinite(arr)
        overall = float(arr[finite].mean()) if finite.any() else np.nan
        if not np.isfinite(overall) or overall == 0.0:
            per_symbol[sym] = np.full(n_slots, np.nan)
        else:
            per_symbol[sym] = slot_mean / overall

    stacked = np.vstack([per_symbol[s] for s in per_symbol])
    combined = _masked_column_mean(stacked)
    return SeasonalityProfile(per_symbol=per_symbol, combined=combined)


def _masked_column_mean(arr: np.ndarray) -> np.ndarray:
    """Column means over finite entries; NaN for columns with none."""
    finite = np.isfinite(arr)
    counts = finite.sum(axis=0)
    sums = np.where(finite, arr, 0.0).sum(axis=0)
    out = np.full(arr.shape[1], np.nan)
    ok = counts > 0
    out[ok] = sums[ok] / counts[ok]
    return out


# ---------------------------------------------------------------------------
# Variance decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VarianceWindow:
    """Per-window variance split: total, explained through flow, and the gap."""
    day: str
    window: int
    var_dp: float
    var_ofi: float
    beta_sq_var_ofi: float
    degenerate: bool

    @property
    def noise_var(self) -> float:
        return self.var_dp - self.beta_sq_var_ofi


def variance_decomposition(
    series: BucketSeries,
    window_results: Sequence[ImpactWindowResult],
) -> list[VarianceWindow]:
    """Split per-window price-change variance into flow-driven and residual parts.

    Uses population variances over the window's defined buckets and the
    window's fitted impact coefficient. Windows whose flow imbalance has zero
    variance are reported with zero terms and flagged degenerate.
    """
    by_window = {(r.day, r.window): r for r in window_results}
    out: list[VarianceWindow] = []
    for (day, i), res in sorted(by_window.items()):
        if day != series.day:
            continue
        mask = series.window_slice(i) & series.defined
        dp = series.dp[mask]
        ofi = series.ofi[mask]
        if len(dp) == 0:
            continue
        var_ofi = float(np.var(ofi))
        if var_ofi == 0.0:
            out.append(VarianceWindow(day, i, 0.0, 0.0, 0.0, degenerate=True))
            continue
        var_dp = float(np.var(dp))
        out.append(VarianceWindow(day, i, var_dp, var_ofi,
                                  res.beta ** 2 * var_ofi, degenerate=False))
    return out
