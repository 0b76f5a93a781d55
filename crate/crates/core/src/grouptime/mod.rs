//! Group-time contrasts, their aggregation, the 2×2 decomposition of static
//! TWFE, and pre-treatment placebo summaries.

mod bacon;
mod gt;
mod pretrend;

pub use bacon::{bacon_decompose, write_bacon_csv, BaconComparison, BaconDecomposition, ComparisonKind};
pub use gt::{
    aggregate_gt, att_gt, att_gt_all, callaway_santanna, AggregationScheme, CallawaySantAnna, ControlGroup,
    GroupTimeEffect, GtAggregate,
};
pub use pretrend::{pretrend_report, PretrendSummary, PRETREND_Z};
