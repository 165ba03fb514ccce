"""Best-quote order flow analytics.

Reconstructs NBBO event streams from Level-1 tick data, measures per-bucket
order flow imbalance, trade imbalance and volume, estimates the linear price
impact of net order flow and its inverse dependence on market depth, and
validates the whole chain against a stylized order-book simulator with exact
event labels plus a scaling-limit Monte-Carlo harness.
"""

from ._version import __version__
from .errors import (
    CollinearityError,
    EstimationError,
    FormatError,
    OfilabError,
    SampleSizeError,
)
from .flow import (
    BookEvent,
    BucketSeries,
    EventSeries,
    ScalingParams,
    TimeGrid,
    average_depth,
    bucketize,
    classify_events,
)
from .impact import (
    ComparisonWindowResult,
    DepthModelFit,
    ImpactWindowResult,
    ScalingExponentResult,
    SeasonalityProfile,
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
    EXCLUDED_QUOTE_MODES,
    EXCLUDED_TRADE_CONDITIONS,
    LoadReport,
    NbboSeries,
    NbboSnapshot,
    QuoteBatch,
    RawQuote,
    RawTrade,
    SignResult,
    SignedTrade,
    SignedTradeSeries,
    TradeBatch,
    apply_spread_filter,
    build_nbbo,
    load_quotes,
    load_trades,
    nearest_rank_quantile,
    sign_trades,
)
from .ols import (
    OlsFit,
    ResidualDiagnostics,
    autocorrelations,
    excess_kurtosis,
    newey_west_auto_lag,
    ols,
    residual_diagnostics,
    with_intercept,
)
from .pipeline import RunConfig, RunReport, SymbolResult, analyze_symbol, run_pipeline
from .report import emit_reports
from .synth import (
    CltCheckResult,
    GroundTruth,
    SimResult,
    SynthParams,
    generate_iid_flow,
    proposition1_check,
    simulate_stylized_book,
    stylized_delta_p,
)

__all__ = [
    "__version__",
    # errors
    "OfilabError", "FormatError", "CollinearityError", "SampleSizeError",
    "EstimationError",
    # ingest
    "RawQuote", "RawTrade", "NbboSnapshot", "SignedTrade", "QuoteBatch",
    "TradeBatch", "NbboSeries", "SignedTradeSeries", "SignResult", "LoadReport",
    "load_quotes", "load_trades", "build_nbbo", "sign_trades",
    "apply_spread_filter", "nearest_rank_quantile",
    "EXCLUDED_QUOTE_MODES", "EXCLUDED_TRADE_CONDITIONS",
    # flow
    "BookEvent", "EventSeries", "TimeGrid", "BucketSeries", "ScalingParams",
    "classify_events", "bucketize", "average_depth",
    # ols
    "OlsFit", "ols", "with_intercept", "newey_west_auto_lag",
    "excess_kurtosis", "autocorrelations", "residual_diagnostics",
    "ResidualDiagnostics",
    # impact
    "ImpactWindowResult", "DepthModelFit", "ComparisonWindowResult",
    "ScalingExponentResult", "SeasonalityProfile", "VarianceWindow",
    "SkippedWindow", "impact_regression", "depth_regression",
    "comparison_regressions", "estimate_scaling_exponent",
    "seasonality_profile", "variance_decomposition",
    # synth
    "SynthParams", "GroundTruth", "SimResult", "CltCheckResult",
    "stylized_delta_p", "simulate_stylized_book", "generate_iid_flow",
    "proposition1_check",
    # pipeline
    "RunConfig", "RunReport", "SymbolResult", "run_pipeline", "analyze_symbol",
    "emit_reports",
]
