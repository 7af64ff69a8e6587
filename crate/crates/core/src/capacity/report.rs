use std::collections::BTreeMap;

use serde::Serialize;

use super::decomposition::Decomposition;
use super::htc::{htc_check_traffic, HtcReport};
use super::instance::Instance;
use super::pandas::even_split_scale;
use super::refine::{
    class_violations, classify_pooled, ideal_decomposition, rack_condition_violations, refine_racks, refine_servers,
    server_condition_violations, ServerClassification,
};
use super::region::{in_region, min_max_load, LoadProfile};
use super::ServerClass;
use crate::cluster::ClusterSpec;
use crate::error::Result;
use crate::traffic::ArrivalSpec;

/// Explicit decompositions are built up to this many servers and types.
pub const EXPLICIT_SERVER_CAP: usize = 20;
pub const EXPLICIT_TYPE_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementAudit {
    /// Total weighted load after the witness, server, rack and ideal steps.
    pub total_load: Vec<f64>,
    pub server_violations: Vec<String>,
    pub rack_violations: Vec<String>,
    pub class_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub lambda: f64,
    pub lambda_star: f64,
    /// Boundary of a locality-first policy with routing frozen to an even split.
    pub even_split_lambda: f64,
    pub feasible: bool,
    pub slack: f64,
    /// Min-max-load split at `lambda`, per server group.
    pub load_profile: LoadProfile,
    pub groups: Vec<Vec<usize>>,
    pub classification: Option<ServerClassification>,
    pub class_counts: BTreeMap<&'static str, usize>,
    /// Why no classification is given, when none is.
    pub classification_note: Option<String>,
    pub htc: HtcReport,
    pub decomposition: Option<Decomposition>,
    pub audit: Option<RefinementAudit>,
}

/// Everything the capacity analysis says about a traffic model at its lambda.
pub fn capacity_report(cluster: &ClusterSpec, traffic: &ArrivalSpec) -> Result<CapacityReport> {
    let lambda = traffic.lambda();
    let unit = Instance::pooled(cluster, &traffic.with_lambda(1.0))?;
    let lambda_star = 1.0 / min_max_load(&unit)?.max_load;
    let even_split_lambda = even_split_scale(&unit)?;
    let inst = unit.scaled(lambda);
    let load_profile = min_max_load(&inst)?;
    let feasible = load_profile.max_load < 1.0;
    let slack = 1.0 - load_profile.max_load;

    let mut decomposition = None;
    let mut audit = None;
    let (classification, classification_note) = if !feasible {
        (None, Some(format!("lambda {lambda} is outside the capacity region (boundary {lambda_star:.6})")))
    } else if cluster.num_servers() <= EXPLICIT_SERVER_CAP && traffic.num_types() <= EXPLICIT_TYPE_CAP as f64 {
        match explicit_pipeline(cluster, traffic) {
            Ok((d, class, a)) => {
                decomposition = Some(d);
                audit = Some(a);
                (Some(class), None)
            }
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        match classify_pooled(cluster, traffic) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let class_counts = classification
        .as_ref()
        .map(|c| {
            [ServerClass::Hu, ServerClass::Bu, ServerClass::Ho, ServerClass::Bo]
                .into_iter()
                .map(|k| (k.name(), c.count(k)))
                .collect()
        })
        .unwrap_or_default();
    let htc = htc_check_traffic(cluster, traffic, classification.as_ref());
    Ok(CapacityReport {
        lambda,
        lambda_star,
        even_split_lambda,
        feasible,
        slack,
        load_profile,
        groups: inst.groups.iter().map(|g| g.members.iter().map(|m| m + 1).collect()).collect(),
        classification,
        class_counts,
        classification_note,
        htc,
        decomposition,
        audit,
    })
}

fn explicit_pipeline(
    cluster: &ClusterSpec,
    traffic: &ArrivalSpec,
) -> Result<(Decomposition, ServerClassification, RefinementAudit)> {
    let rates = traffic.rate_vector(EXPLICIT_TYPE_CAP)?;
    let region = in_region(cluster, &rates, 0.0)?;
    let witness = region.witness.expect("checked feasible by the pooled LP");
    let s = refine_servers(cluster, &witness)?;
    let r = refine_racks(cluster, &s)?;
    let (ideal, class) = ideal_decomposition(cluster, &r)?;
    let audit = RefinementAudit {
        total_load: [&witness, &s, &r, &ideal].iter().map(|d| d.total_load(cluster)).collect(),
        server_violations: server_condition_violations(cluster, &r),
        rack_violations: rack_condition_violations(cluster, &r),
        class_violations: class_violations(cluster, &ideal, &class),
    };
    Ok((ideal, class, audit))
}
