//! Quantitative assessment: pair-classification metrics and cross-validation,
//! alarm-level TP/FP scoring of replays, threshold sweeps and reports.

mod alarms;
mod cv;
mod metrics;

pub use alarms::{
    false_alarms_per_day, read_events, score_alarms, threshold_sweep, write_events, write_report_csv,
    write_sweep_csv, AlarmScoreReport, SweepRow, TrueEvent, WellAlarmRow, WellEvents,
    DEDUP_TICKS, TP_AFTER_TICKS, TP_BEFORE_TICKS,
};
pub use cv::{cross_validate, CvConfig, CvIteration, CvMode, CvResult};
pub use metrics::{
    confusion_at, pr_auc, pr_curve, roc_auc, roc_curve, write_pr_csv, write_roc_csv, ConfusionMatrix,
    MetricsSummary, PrPoint, RocPoint,
};
