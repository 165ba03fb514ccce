"""Ordinary least squares with robust covariance options.

One solver backs every regression in the package. Standard errors come in
three modes: classical, heteroskedasticity-consistent (HC0 sandwich, plain,
no small-sample correction), and Newey-West with Bartlett weights. HC1 is
available behind a flag. newey_west with zero lags reproduces HC0 exactly
(shared meat-matrix code path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CollinearityError, SampleSizeError

Z_5PCT = 1.96  # normal critical value used for all 5%-level significance calls


def newey_west_auto_lag(n: int) -> int:
    """Automatic truncation lag: floor(4 * (n/100)^(2/9))."""
    return int(np.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


@dataclass
class OlsFit:
    """Fitted regression: coefficients first (intercept leading), then inference."""
    coef: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    r2: float
    fstat: float
    residuals: np.ndarray
    nobs: int
    se_mode: str
    names: list[str]

    @property
    def significant(self) -> np.ndarray:
        """5%-level two-sided z-test per coefficient."""
        return np.abs(self.tstat) > Z_5PCT


def _check_rank(X: np.ndarray, names: list[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    k = X.shape[1]
    if rank < k:
        _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        bad = sorted(names[j] for j in piv[rank:k])
        raise CollinearityError(
            f"regressor matrix is rank deficient (rank {rank} of {k}); "
            f"offending columns: {', '.join(bad)}", columns=bad)


def _meat_hc0(X: np.ndarray, u: np.ndarray) -> np.ndarray:
    Xu = X * u[:, None]
    return Xu.T @ Xu


def ols(
    y: np.ndarray,
    X: np.ndarray,
    se_mode: str = "classical",
    *,
    nw_lags: int | None = None,
    names: list[str] | None = None,
) -> OlsFit:
    """Fit y on X (X carries its own intercept column).

    se_mode is one of "classical", "white_hc0", "white_hc1" or "newey_west".
    For "newey_west", ``nw_lags`` gives the Bartlett truncation lag; when
    omitted it defaults to the automatic floor(4*(n/100)^(2/9)). The
    F-statistic tests all slope coefficients jointly zero, treating the first
    column as the intercept.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if names is None:
        names = ["const"] + [f"x{j}" for j in range(1, k)]
    if len(y) != n:
        raise ValueError(f"len(y)={len(y)} does not match rows(X)={n}")
    if n < k + 2:
        raise SampleSizeError(f"need at least {k + 2} observations for {k} regressors, got {n}")
    _check_rank(X, names)

    G = X.T @ X
    beta = np.linalg.solve(G, X.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    bread = np.linalg.inv(G)

    if se_mode == "classical":
        cov = bread * (rss / (n - k))
    elif se_mode in ("white_hc0", "white_hc1"):
        cov = bread @ _meat_hc0(X, resid) @ bread
        if se_mode == "white_hc1":
            cov = cov * (n / (n - k))
    elif se_mode == "newey_west":
        lags = newey_west_auto_lag(n) if nw_lags is None else int(nw_lags)
        if lags < 0:
            raise ValueError(f"nw_lags must be >= 0, got {lags}")
        S = _meat_hc0(X, resid)
        for lag in range(1, lags + 1):
            w = 1.0 - lag / (lags + 1.0)
            uu = resid[lag:] * resid[:-lag]
            G_l = (X[lag:] * uu[:, None]).T @ X[:-lag]
            S = S + w * (G_l + G_l.T)
        cov = bread @ S @ bread
        se_mode = f"newey_west({lags})"
    else:
        raise ValueError(f"unknown se_mode: {se_mode!r}")

    var = np.diag(cov).copy()
    var[var < 0] = 0.0  # guard tiny negative round-off on near-perfect fits
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = beta / se
    tstat[np.isnan(tstat)] = 0.0

    sst = float(np.sum((y - y.mean()) ** 2))
    if sst > 0.0:
        r2 = 1.0 - rss / sst
    else:
        r2 = 1.0 if rss <= 1e-300 else 0.0

    q = k - 1
    if q >= 1 and r2 < 1.0:
        fstat = (r2 / q) / ((1.0 - r2) / (n - k))
    elif q >= 1:
        fstat = float("inf")
    else:
        fstat = float("nan")

    return OlsFit(coef=beta, se=se, tstat=tstat, r2=float(r2), fstat=float(fstat),
                  residuals=resid, nobs=n, se_mode=se_mode, names=list(names))


def with_intercept(*columns: np.ndarray) -> np.ndarray:
    """Stack an intercept column with the given regressors."""
    cols = [np.asarray(c, dtype=np.float64).ravel() for c in columns]
    n = len(cols[0])
    return np.column_stack([np.ones(n)] + cols)


# ---------------------------------------------------------------------------
# Residual diagnostics
# ---------------------------------------------------------------------------

def excess_kurtosis(x: np.ndarray) -> float:
    """m4/m2^2 - 3 with population moments; NaN when the variance is zero."""
    x = np.asarray(x, dtype=np.float64)
    c = x - x.mean()
    m2 = float(np.mean(c * c))
    if m2 <= 0.0:
        return float("nan")
    m4 = float(np.mean(c ** 4))
    return m4 / (m2 * m2) - 3.0


def autocorrelations(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..max_lag, biased normalization."""
    x = np.asarray(x, dtype=np.float64)
    c = x - x.mean()
    denom = float(c @ c)
    if denom <= 0.0:
        return np.full(max_lag, np.nan)
    return np.array([float(c[lag:] @ c[:-lag]) / denom for lag in range(1, max_lag + 1)])


@dataclass
class ResidualDiagnostics:
    excess_kurtosis: float      # NaN when undefined (zero residual variance)
    acf: np.ndarray             # lags 1..max_lag
    band: float                 # +-2/sqrt(n) significance band

    @property
    def kurtosis_defined(self) -> bool:
        return bool(np.isfinite(self.excess_kurtosis))


def residual_diagnostics(fit: OlsFit, max_lag: int) -> ResidualDiagnostics:
    """Excess kurtosis and residual autocorrelations with significance bands."""
    u = fit.residuals
    if len(u) < max_lag + 10:
        raise SampleSizeError(f"need at least {max_lag + 10} residuals, got {len(u)}")
    return ResidualDiagnostics(
        excess_kurtosis=excess_kurtosis(u),
        acf=autocorrelations(u, max_lag),
        band=2.0 / np.sqrt(len(u)),
    )
