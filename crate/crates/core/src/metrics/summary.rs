//! Per-run summaries and the frozen CSV row format.

use std::io;

use serde::{Deserialize, Serialize};

use super::diagnostics::{class_workload_ratios, estimate_sigma_nu, ht_lower_bound, ClassRatios};
use super::stats::StabilityEstimate;
use crate::capacity::ServerClass;
use crate::cluster::ServiceRates;
use crate::error::Result;
use crate::policies::PolicyKind;
use crate::traffic::ArrivalSpec;

/// Which workload vector the collapse diagnostics were computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkloadBasis {
    /// Ql/alpha + Qk/beta + Qr/gamma per server.
    SubQueues,
    /// Q/alpha per server, for single-queue policies.
    QueueOverAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseTrace {
    pub basis: WorkloadBasis,
    pub phi_mean: f64,
    pub phi_se: f64,
    pub wperp_mean: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub lambda: f64,
    pub seed: u64,
    pub slots: u64,
    pub warmup: u64,
    /// Over tasks departing after warmup, in slots.
    pub mean_completion: Option<f64>,
    pub completed: u64,
    pub arrived: u64,
    pub departed: u64,
    pub queued_final: u64,
    pub in_service_final: u64,
    /// Time-average number of tasks in the system after warmup.
    pub mean_total_queue: f64,
    pub stability: StabilityEstimate,
    pub truncations: u64,
    pub violations: u64,
    pub violation_log: Vec<String>,
    /// Per server: fraction of post-warmup slots serving local, rack-local, remote work.
    pub busy: Vec<[f64; 3]>,
    /// Per server: time-average workload on the run's basis.
    pub mean_workload: Vec<f64>,
    pub collapse: Option<CollapseTrace>,
}

impl RunSummary {
    pub fn is_valid(&self) -> bool {
        self.violations == 0
    }

    pub fn is_stable(&self) -> bool {
        self.stability.is_stable()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTrafficDiagnostics {
    pub eps: f64,
    pub sigma2: f64,
    pub nu2: f64,
    /// Absent when `eps <= 0`.
    pub lower_bound: Option<f64>,
    pub ratios: ClassRatios,
}

impl HeavyTrafficDiagnostics {
    pub fn compute(
        summary: &RunSummary,
        traffic: &ArrivalSpec,
        classes: &[ServerClass],
        rates: &ServiceRates,
        eps: f64,
    ) -> Result<Self> {
        let (sigma2, nu2) = estimate_sigma_nu(traffic, classes, rates, &summary.busy)?;
        let lower_bound = ht_lower_bound(sigma2, nu2, eps, classes.len()).ok();
        Ok(HeavyTrafficDiagnostics {
            eps,
            sigma2,
            nu2,
            lower_bound,
            ratios: class_workload_ratios(&summary.mean_workload, classes),
        })
    }
}

pub const CSV_HEADER: [&str; 24] = [
    "policy",
    "scenario",
    "lambda",
    "seed",
    "slots",
    "warmup",
    "mean_completion",
    "completed",
    "mean_total_queue",
    "stab_slope",
    "stab_ci_lo",
    "stab_ci_hi",
    "phi_mean",
    "wperp_mean",
    "eps",
    "sigma2",
    "nu2",
    "lower_bound",
    "ratio_bo",
    "ratio_ho",
    "ratio_bu",
    "ratio_hu",
    "truncations",
    "violations",
];

/// One CSV row; field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub scenario: String,
    pub lambda: f64,
    pub seed: u64,
    pub slots: u64,
    pub warmup: u64,
    pub mean_completion: Option<f64>,
    pub completed: u64,
    pub mean_total_queue: f64,
    pub stab_slope: f64,
    pub stab_ci_lo: f64,
    pub stab_ci_hi: f64,
    pub phi_mean: Option<f64>,
    pub wperp_mean: Option<f64>,
    pub eps: Option<f64>,
    pub sigma2: Option<f64>,
    pub nu2: Option<f64>,
    pub lower_bound: Option<f64>,
    pub ratio_bo: Option<f64>,
    pub ratio_ho: Option<f64>,
    pub ratio_bu: Option<f64>,
    pub ratio_hu: Option<f64>,
    pub truncations: u64,
    pub violations: u64,
}

impl SummaryRow {
    pub fn new(s: &RunSummary, scenario: &str, ht: Option<&HeavyTrafficDiagnostics>) -> Self {
        let ratios = ht.map(|h| h.ratios).unwrap_or_default();
        SummaryRow {
            policy: s.policy,
            scenario: scenario.to_string(),
            lambda: s.lambda,
            seed: s.seed,
            slots: s.slots,
            warmup: s.warmup,
            mean_completion: s.mean_completion,
            completed: s.completed,
            mean_total_queue: s.mean_total_queue,
            stab_slope: s.stability.slope,
            stab_ci_lo: s.stability.ci_lo,
            stab_ci_hi: s.stability.ci_hi,
            phi_mean: s.collapse.as_ref().map(|c| c.phi_mean),
            wperp_mean: s.collapse.as_ref().map(|c| c.wperp_mean),
            eps: ht.map(|h| h.eps),
            sigma2: ht.map(|h| h.sigma2),
            nu2: ht.map(|h| h.nu2),
            lower_bound: ht.and_then(|h| h.lower_bound),
            ratio_bo: ratios.bo,
            ratio_ho: ratios.ho,
            ratio_bu: ratios.bu,
            ratio_hu: ratios.hu,
            truncations: s.truncations,
            violations: s.violations,
        }
    }
}

/// Writes the header and rows.
pub fn write_rows<W: io::Write>(out: W, rows: &[SummaryRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: io::Read>(input: R) -> csv::Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(csv::Error::from(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected CSV header {header:?}"),
        )));
    }
    r.deserialize().collect()
}
