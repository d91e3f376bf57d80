//! ROC analysis and the two uncertainty evaluations: static safe/unsafe
//! frames and seconds-before-crash windows.

mod crash;
mod metrics;
mod roc;

pub use crash::{
    crash_roc_suite, extract_crash_windows, peak_analysis, BestN, CrashRoc, CrashSuite, CrashWindowSet, PeakRow,
    ANCHOR_MARGIN_S, DEFAULT_WINDOW_S, PEAK_WINDOW_FRAMES,
};
pub use metrics::{
    accuracy, metric_one, report_metrics, rmse, ClassificationMetrics, MetricOne, MetricOneConfig, Metrics,
    RegressionMetrics, StaticFrame,
};
pub use roc::{
    mann_whitney, rates_at, roc_curve, select_threshold, RocCurve, RocPoint, ScoredSample, ThresholdChoice,
    DEFAULT_MAX_FPR,
};
