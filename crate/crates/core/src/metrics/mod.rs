//! Run statistics and heavy-traffic diagnostics.

pub mod diagnostics;
pub mod stats;
pub mod summary;

pub use diagnostics::{
    class_workload_ratios, collapse_direction, estimate_sigma_nu, ht_lower_bound, phi, phi_single, w_perp_norm,
    ClassRatios,
};
pub use stats::{stability_slope, StabilityEstimate};
pub use summary::{
    read_rows, write_rows, CollapseTrace, HeavyTrafficDiagnostics, RunSummary, SummaryRow, WorkloadBasis, CSV_HEADER,
};
