//! Throughput of a locality-first policy whose routing is frozen to an even
//! split over replicas: every server first serves its own local load and
//! only its spare time can help others, rack-locally at β or remotely at γ.
//! Scheduling of the spare time is otherwise free, so this is the best such a
//! policy can do.

use super::instance::Instance;
use super::lp::{Lp, LpOutcome, Sense};
use super::region::min_max_load;
use crate::cluster::ClusterSpec;
use crate::error::{Error, Result};
use crate::traffic::ArrivalSpec;

const BISECT_TOL: f64 = 1e-9;

/// Per-server pseudo-rates of the even split.
fn even_psi(inst: &Instance) -> Vec<f64> {
    let mut psi = vec![0.0; inst.groups.len()];
    for o in &inst.orbits {
        let d = o.representative.len() as f64;
        for (s, rel) in o.relation.iter().enumerate() {
            psi[s] += o.rate * rel[0] as f64 / d;
        }
    }
    for (p, g) in psi.iter_mut().zip(&inst.groups) {
        *p /= g.size() as f64;
    }
    psi
}

/// Whether spare time covers every server's excess at scale `t`.
fn supports(inst: &Instance, psi: &[f64], t: f64) -> Result<bool> {
    let (alpha, beta, gamma) = (inst.rates.alpha, inst.rates.beta, inst.rates.gamma);
    let ng = inst.groups.len();
    let spare: Vec<f64> = psi.iter().map(|p| (1.0 - t * p / alpha).max(0.0)).collect();
    let excess: Vec<f64> = psi.iter().map(|p| (t * p - alpha).max(0.0)).collect();
    let mut lp = Lp::new(0);
    let mut out_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ng];
    let mut in_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ng];
    for s in (0..ng).filter(|&s| spare[s] > 0.0) {
        for d in (0..ng).filter(|&d| excess[d] > 0.0) {
            let (gs, gd) = (&inst.groups[s], &inst.groups[d]);
            let same_class = gs.rack_group == gd.rack_group;
            let rack_pairs = same_class && (s != d || gs.per_rack > 1);
            let remote_pairs = !same_class || inst.racks[gs.rack_group].racks.len() > 1;
            for (ok, mu) in [(rack_pairs, beta), (remote_pairs, gamma)] {
                if ok {
                    let v = lp.add_var(0.0);
                    out_rows[s].push((v, 1.0));
                    in_rows[d].push((v, mu));
                }
            }
        }
    }
    for s in 0..ng {
        let n = inst.groups[s].size() as f64;
        if excess[s] > 0.0 {
            if in_rows[s].is_empty() {
                return Ok(false);
            }
            lp.add_row(std::mem::take(&mut in_rows[s]), Sense::Ge, n * excess[s]);
        }
        if !out_rows[s].is_empty() {
            lp.add_row(std::mem::take(&mut out_rows[s]), Sense::Le, n * spare[s]);
        }
    }
    Ok(matches!(lp.solve()?, LpOutcome::Optimal(_)))
}

/// Largest scale of the instance's rates the even-split policy supports.
pub fn even_split_scale(inst: &Instance) -> Result<f64> {
    if inst.total_rate() <= 0.0 {
        return Err(Error::ZeroDirection);
    }
    let psi = even_psi(inst);
    let mut hi = 1.0 / min_max_load(inst)?.max_load;
    if supports(inst, &psi, hi)? {
        return Ok(hi);
    }
    let mut lo = 0.0;
    while hi - lo > BISECT_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if supports(inst, &psi, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Largest per-unit lambda the even-split policy supports on a traffic model.
pub fn even_split_lambda(cluster: &ClusterSpec, traffic: &ArrivalSpec) -> Result<f64> {
    even_split_scale(&Instance::pooled(cluster, &traffic.with_lambda(1.0))?)
}
