use std::collections::BTreeMap;

use serde::Serialize;

use super::decomposition::Decomposition;
use super::instance::Instance;
use super::lp::{Lp, LpOutcome, Sense};
use crate::cluster::{ClusterSpec, LocalityClass, TaskType};
use crate::error::{Error, Result};
use crate::traffic::ArrivalSpec;

/// Largest explicit LP (types x servers) accepted before asking for pooling.
pub const EXPLICIT_VAR_CAP: usize = 20_000;

/// Rate of one orbit processed by one group at one locality class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFlow {
    pub orbit: usize,
    pub group: usize,
    pub class: LocalityClass,
    pub rate: f64,
}

/// Solution of the min-max-load LP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadProfile {
    pub max_load: f64,
    /// Per-server load of each group.
    pub group_loads: Vec<f64>,
    pub flows: Vec<GroupFlow>,
}

/// Spreads every orbit over group/class cells so the busiest server is as
/// idle as possible.
pub fn min_max_load(inst: &Instance) -> Result<LoadProfile> {
    let mut lp = Lp::new(0);
    let mut cells = Vec::new();
    let mut group_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.groups.len()];
    let mut orbit_rows = Vec::new();
    for (o, orbit) in inst.orbits.iter().enumerate() {
        if orbit.rate <= 0.0 {
            continue;
        }
        let mut row = Vec::new();
        for (s, rel) in orbit.relation.iter().enumerate() {
            for c in 0..3 {
                if rel[c] > 0 {
                    let v = lp.add_var(0.0);
                    cells.push((o, s, c));
                    row.push((v, 1.0));
                    group_terms[s].push((v, 1.0 / (inst.mu(c) * inst.groups[s].size() as f64)));
                }
            }
        }
        orbit_rows.push((row, orbit.rate));
    }
    if cells.is_empty() {
        return Ok(LoadProfile { max_load: 0.0, group_loads: vec![0.0; inst.groups.len()], flows: Vec::new() });
    }
    let u = lp.add_var(1.0);
    for (row, rate) in orbit_rows {
        lp.add_row(row, Sense::Eq, rate);
    }
    for mut terms in group_terms {
        if terms.is_empty() {
            continue;
        }
        terms.push((u, -1.0));
        lp.add_row(terms, Sense::Le, 0.0);
    }
    let sol = match lp.solve()? {
        LpOutcome::Optimal(s) => s,
        other => return Err(Error::NoConvergence(format!("load LP returned {other:?}"))),
    };
    let mut group_loads = vec![0.0; inst.groups.len()];
    let mut flows = Vec::new();
    for (v, &(o, s, c)) in cells.iter().enumerate() {
        let rate = sol.x[v];
        if rate > 0.0 {
            group_loads[s] += rate / (inst.mu(c) * inst.groups[s].size() as f64);
            flows.push(GroupFlow { orbit: o, group: s, class: Instance::class_of(c), rate });
        }
    }
    let max_load = group_loads.iter().copied().fold(0.0, f64::max);
    Ok(LoadProfile { max_load, group_loads, flows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionResult {
    pub feasible: bool,
    /// 1 minus the smallest achievable worst server load; negative outside.
    pub slack: f64,
    pub witness: Option<Decomposition>,
}

/// Membership of an explicit rate vector, with a witness decomposition
/// whose every server load is at most `1 - slack`.
pub fn in_region(cluster: &ClusterSpec, rates: &BTreeMap<TaskType, f64>, tol: f64) -> Result<RegionResult> {
    let positive: Vec<(TaskType, f64)> = rates.iter().filter(|(_, r)| **r > 0.0).map(|(t, r)| (*t, *r)).collect();
    check_explicit_size(cluster, positive.len())?;
    let inst = Instance::explicit(cluster, &positive)?;
    let profile = min_max_load(&inst)?;
    let slack = 1.0 - profile.max_load;
    let feasible = profile.max_load <= 1.0 - tol;
    let witness = if feasible {
        let n = cluster.num_servers();
        let mut coarse = vec![vec![0.0; n]; positive.len()];
        for f in &profile.flows {
            coarse[f.orbit][f.group] += f.rate;
        }
        let (types, rates): (Vec<_>, Vec<_>) = positive.into_iter().unzip();
        Some(Decomposition::from_coarse(types, rates, coarse, n)?)
    } else {
        None
    };
    Ok(RegionResult { feasible, slack, witness })
}

/// Membership of a traffic model through the pooled LP; no witness.
pub fn in_region_pooled(cluster: &ClusterSpec, traffic: &ArrivalSpec, tol: f64) -> Result<RegionResult> {
    let profile = min_max_load(&Instance::pooled(cluster, traffic)?)?;
    Ok(RegionResult { feasible: profile.max_load <= 1.0 - tol, slack: 1.0 - profile.max_load, witness: None })
}

/// Largest `t` with `t * direction` in the capacity region.
pub fn max_scale(cluster: &ClusterSpec, direction: &BTreeMap<TaskType, f64>) -> Result<f64> {
    let positive: Vec<(TaskType, f64)> = direction.iter().filter(|(_, r)| **r > 0.0).map(|(t, r)| (*t, *r)).collect();
    check_explicit_size(cluster, positive.len())?;
    scale_of(&Instance::explicit(cluster, &positive)?)
}

/// Largest per-unit lambda the traffic model supports (its lambda is ignored).
pub fn max_lambda(cluster: &ClusterSpec, traffic: &ArrivalSpec) -> Result<f64> {
    scale_of(&Instance::pooled(cluster, &traffic.with_lambda(1.0))?)
}

fn scale_of(inst: &Instance) -> Result<f64> {
    if inst.total_rate() <= 0.0 {
        return Err(Error::ZeroDirection);
    }
    Ok(1.0 / min_max_load(inst)?.max_load)
}

fn check_explicit_size(cluster: &ClusterSpec, types: usize) -> Result<()> {
    if types * cluster.num_servers() > EXPLICIT_VAR_CAP {
        return Err(Error::TooManyTypes { count: types as f64, cap: EXPLICIT_VAR_CAP / cluster.num_servers() });
    }
    Ok(())
}
