"""Report tables and file emission.

Each regression family is summarized per symbol into a fixed-layout row
(impact averages, depth fit, the levels and magnitudes comparisons), and the
rows are written as CSV and JSON with stable column order. Re-running on
identical inputs reproduces every output byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .impact import ComparisonWindowResult, ImpactWindowResult
from .pipeline import RunReport, SymbolResult

TABLE2_COLUMNS = [
    "ticker", "avg_alpha", "avg_t_alpha", "avg_beta", "avg_t_beta",
    "avg_gamma_q", "avg_t_gamma_q", "avg_r2",
    "pct_alpha_sig", "pct_beta_sig", "pct_gamma_sig", "n_windows",
]
TABLE3_COLUMNS = [
    "ticker", "c_hat", "lambda_hat", "t_c", "t_lambda",
    "c_lo", "c_hi", "lambda_lo", "lambda_hi",
    "r2_log", "corr2_fitted", "corr2_lambda1", "n_windows", "n_excluded",
]
TABLE4_COLUMNS = [
    "ticker",
    "ofi_r2", "ofi_t", "ofi_pct_sig", "ofi_f",
    "ti_r2", "ti_t", "ti_pct_sig", "ti_f",
    "both_r2", "both_t_ofi", "both_t_ti",
    "both_pct_ofi_sig", "both_pct_ti_sig", "both_f", "n_windows",
]
TABLE5_COLUMNS = [
    "ticker", "h_mean", "h_std",
    "aofi_r2", "aofi_t", "aofi_pct_sig", "aofi_f",
    "vol_r2", "vol_t", "vol_pct_sig", "vol_f",
    "both_r2", "both_t_aofi", "both_t_vol",
    "both_pct_aofi_sig", "both_pct_vol_sig", "both_f", "n_windows",
]

PROFILE_NAMES = ("beta", "ad", "var_dp", "var_ofi", "beta2_var_ofi")


def _clean(x) -> float | None:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _mean(values: Sequence[float]) -> float | None:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else None


def _std(values: Sequence[float]) -> float | None:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.std(vals)) if vals else None


def _pct(flags: Sequence[bool]) -> float | None:
    flags = list(flags)
    return 100.0 * sum(flags) / len(flags) if flags else None


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------

def table2_row(result: SymbolResult) -> dict:
    w: list[ImpactWindowResult] = result.impact_windows
    quad = [r for r in w if r.gamma_q is not None]
    return {
        "ticker": result.symbol,
        "avg_alpha": _mean([r.alpha for r in w]),
        "avg_t_alpha": _mean([r.t_alpha for r in w]),
        "avg_beta": _mean([r.beta for r in w]),
        "avg_t_beta": _mean([r.t_beta for r in w]),
        "avg_gamma_q": _mean([r.gamma_q for r in quad]),
        "avg_t_gamma_q": _mean([r.t_gamma_q for r in quad]),
        "avg_r2": _mean([r.r2 for r in w]),
        "pct_alpha_sig": _pct([r.alpha_significant for r in w]),
        "pct_beta_sig": _pct([r.beta_significant for r in w]),
        "pct_gamma_sig": _pct([r.gamma_significant for r in quad]),
        "n_windows": len(w),
    }


def table3_row(result: SymbolResult) -> dict:
    d = result.depth
    if d is None:
        return {"ticker": result.symbol, **{c: None for c in TABLE3_COLUMNS[1:]},
                "note": result.depth_note}
    return {
        "ticker": result.symbol,
        "c_hat": _clean(d.c), "lambda_hat": _clean(d.lam),
        "t_c": _clean(d.t_c), "t_lambda": _clean(d.t_lam),
        "c_lo": _clean(d.c_ci[0]), "c_hi": _clean(d.c_ci[1]),
        "lambda_lo": _clean(d.lam_ci[0]), "lambda_hi": _clean(d.lam_ci[1]),
        "r2_log": _clean(d.r2_log),
        "corr2_fitted": _clean(d.corr2_fitted),
        "corr2_lambda1": _clean(d.corr2_restricted),
        "n_windows": d.n_used, "n_excluded": d.n_excluded,
    }


def _comparison_summary(rows: list[ComparisonWindowResult], prefix: tuple[str, str]) -> dict:
    n1, n2 = prefix
    first = [r.first for r in rows if r.first is not None]
    second = [r.second for r in rows if r.second is not None]
    both = [r.both for r in rows if r.both is not None]
    return {
        f"{n1}_r2": _mean([f.r2 for f in first]),
        f"{n1}_t": _mean([f.tstat[1] for f in first]),
        f"{n1}_pct_sig": _pct([bool(f.significant[1]) for f in first]),
        f"{n1}_f": _mean([f.fstat for f in first]),
        f"{n2}_r2": _mean([f.r2 for f in second]),
        f"{n2}_t": _mean([f.tstat[1] for f in second]),
        f"{n2}_pct_sig": _pct([bool(f.significant[1]) for f in second]),
        f"{n2}_f": _mean([f.fstat for f in second]),
        "both_r2": _mean([f.r2 for f in both]),
        f"both_t_{n1}": _mean([f.tstat[1] for f in both]),
        f"both_t_{n2}": _mean([f.tstat[2] for f in both]),
        f"both_pct_{n1}_sig": _pct([bool(f.significant[1]) for f in both]),
        f"both_pct_{n2}_sig": _pct([bool(f.significant[2]) for f in both]),
        "both_f": _mean([f.fstat for f in both]),
        "n_windows": len(rows),
    }


def table4_row(result: SymbolResult) -> dict:
    return {"ticker": result.symbol,
            **_comparison_summary(result.comp_levels, ("ofi", "ti"))}


def table5_row(result: SymbolResult) -> dict:
    hs = [r.h for r in result.h_windows]
    return {"ticker": result.symbol,
            "h_mean": _mean(hs), "h_std": _std(hs),
            **_comparison_summary(result.comp_magnitudes, ("aofi", "vol"))}


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if not math.isfinite(x) else repr(x)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def _profile_rows(values: np.ndarray) -> list[dict]:
    return [{"slot": i + 1, "value": _clean(v)} for i, v in enumerate(values)]


def _jsonable(obj):
    if obj is None or isinstance(obj, (str, int, bool)):
        return obj
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _jsonable(float(obj))
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj):
        return _jsonable(dataclasses.asdict(obj))
    return str(obj)


def emit_reports(report: RunReport, out_dir: str | Path | None = None,
                 formats: Sequence[str] | None = None) -> list[Path]:
    """Write every table and profile (one file per table per format).

    Returns the list of written paths. Output is a pure function of the
    report contents: identical runs overwrite byte-identically.
    """
    out = Path(out_dir if out_dir is not None else report.config["out_dir"])
    fmts = tuple(formats if formats is not None else report.config["formats"])
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    symbols = sorted(report.symbols)
    tables = {
        "table2": (TABLE2_COLUMNS, [table2_row(report.symbols[s]) for s in symbols]),
        "table3": (TABLE3_COLUMNS, [table3_row(report.symbols[s]) for s in symbols]),
        "table4_panel_a": (TABLE4_COLUMNS, [table4_row(report.symbols[s]) for s in symbols]),
        "table5": (TABLE5_COLUMNS, [table5_row(report.symbols[s]) for s in symbols]),
    }
    for name, (columns, rows) in tables.items():
        if "csv" in fmts:
            p = out / f"{name}.csv"
            _write_csv(p, columns, rows)
            written.append(p)
        if "json" in fmts:
            p = out / f"{name}.json"
            _write_json(p, _jsonable(rows))
            written.append(p)

    for stat in PROFILE_NAMES:
        if stat not in report.profiles:
            continue
        rows = _profile_rows(report.profiles[stat])
        if "csv" in fmts:
            p = out / f"profile_{stat}.csv"
            _write_csv(p, ["slot", "value"], rows)
            written.append(p)
        if "json" in fmts:
            p = out / f"profile_{stat}.json"
            _write_json(p, _jsonable(rows))
            written.append(p)

    master = {
        "version": report.version,
        "config": _jsonable(report.config),
        "errors": dict(sorted(report.errors.items())),
        "symbols": {
            s: {
                "days": r.days,
                "counts": [c.as_dict() for c in r.counts],
                "skipped_windows": [dataclasses.asdict(k) for k in r.skipped],
                "depth_note": r.depth_note,
                "n_impact_windows": len(r.impact_windows),
            }
            for s, r in sorted(report.symbols.items())
        },
        "tables": {name: _jsonable(rows) for name, (cols, rows) in tables.items()},
    }
    p = out / "run_report.json"
    _write_json(p, _jsonable(master))
    written.append(p)
    return written
