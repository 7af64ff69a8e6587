//! Anchor refinement and the four-way server classification.
//!
//! A decomposition's anchors decide the pseudo-rates ψ. Overloaded servers
//! (ψ ≥ α) must only anchor types all of whose replicas are overloaded, and
//! overloaded racks must only anchor types all of whose replica racks are
//! overloaded. Anchors are computed by water-filling (the allocation that
//! minimizes Σψ², which satisfies the server condition by construction),
//! then iterated against the rack condition; if that does not settle, every
//! (beneficiary set, overloaded rack set) pair is tried as an LP.

use serde::Serialize;

use super::decomposition::Decomposition;
use super::instance::Instance;
use super::lp::{Lp, LpOutcome, Sense};
use super::{RackStatus, ServerClass};
use crate::cluster::{ClusterSpec, RackId, ServiceRates, TaskType};
use crate::error::{Error, Result};
use crate::traffic::ArrivalSpec;

/// ψ within this of α counts as overloaded.
pub const PSI_TOL: f64 = 1e-9;
const RACK_TOL: f64 = 1e-9;
const ANCHOR_EPS: f64 = 1e-10;
/// Strictness margins used when an LP must land on a given side of a test.
const PSI_MARGIN: f64 = 1e-7;
const RACK_MARGIN: f64 = 1e-8;
const WATERFILL_GROUP_CAP: usize = 20;
const EXHAUSTIVE_BIT_CAP: usize = 18;
const MAX_RACK_ITERS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerClassification {
    pub classes: Vec<ServerClass>,
    pub racks: Vec<RackStatus>,
    pub psi: Vec<f64>,
}

impl ServerClassification {
    pub fn count(&self, class: ServerClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn servers_in(&self, class: ServerClass) -> Vec<usize> {
        (0..self.classes.len()).filter(|&m| self.classes[m] == class).collect()
    }
}

/// Overload test for one rack given per-server (count, ψ) pairs.
fn eq8(rates: &ServiceRates, members: impl Iterator<Item = (f64, f64)>) -> bool {
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (count, psi) in members {
        if psi >= rates.alpha - PSI_TOL {
            lhs += count * (psi - rates.alpha);
        } else {
            rhs += count * (1.0 - psi / rates.alpha);
        }
    }
    lhs >= rates.beta * rhs - RACK_TOL
}

/// Whether rack `k` needs remote help under pseudo-rates `psi` (per server).
pub fn is_rack_overloaded(cluster: &ClusterSpec, psi: &[f64], k: RackId) -> Result<bool> {
    if k.0 == 0 || k.index() >= cluster.num_racks() {
        return Err(Error::RackOutOfRange { id: k.0, max: cluster.num_racks() });
    }
    if psi.len() != cluster.num_servers() {
        return Err(Error::config("one pseudo-rate per server expected"));
    }
    Ok(eq8(&cluster.rates, cluster.rack_members(k.index()).map(|m| (1.0, psi[m]))))
}

/// Pseudo-rates of a fine decomposition.
pub fn pseudo_rates(decomp: &Decomposition) -> Vec<f64> {
    decomp.pseudo_rates()
}

/// Anchored rate per orbit and group.
#[derive(Debug, Clone)]
struct Anchors(Vec<Vec<f64>>);

impl Anchors {
    fn psi(&self, inst: &Instance) -> Vec<f64> {
        (0..inst.groups.len())
            .map(|s| self.0.iter().map(|row| row[s]).sum::<f64>() / inst.groups[s].size() as f64)
            .collect()
    }
}

fn overloaded(inst: &Instance, psi: &[f64]) -> Vec<bool> {
    psi.iter().map(|&p| p >= inst.rates.alpha - PSI_TOL).collect()
}

fn rack_status(inst: &Instance, psi: &[f64]) -> Vec<bool> {
    inst.racks
        .iter()
        .map(|rg| eq8(&inst.rates, rg.groups.iter().map(|&s| (inst.groups[s].per_rack as f64, psi[s]))))
        .collect()
}

fn full_support(inst: &Instance) -> Vec<Vec<usize>> {
    inst.orbits.iter().map(|o| o.local_groups().collect()).collect()
}

/// Overloaded groups anchor only types whose replicas are all overloaded.
fn server_condition_holds(inst: &Instance, a: &Anchors, over: &[bool]) -> bool {
    inst.orbits.iter().zip(&a.0).all(|(o, row)| {
        let all_over = o.local_groups().all(|s| over[s]);
        all_over || o.local_groups().all(|s| !over[s] || row[s] <= ANCHOR_EPS)
    })
}

/// Overloaded racks anchor only types whose replica racks are all overloaded.
fn rack_condition_holds(inst: &Instance, a: &Anchors, racks_over: &[bool]) -> bool {
    inst.orbits.iter().zip(&a.0).all(|(o, row)| {
        let all_over = o.replica_racks.iter().all(|&r| racks_over[r]);
        all_over || o.local_groups().all(|s| !racks_over[inst.groups[s].rack_group] || row[s] <= ANCHOR_EPS)
    })
}

/// Minimum-Σψ² anchoring restricted to `support`: repeatedly peel off the
/// largest group set of maximal density (rate of orbits confined to it over
/// its server count) and level it.
fn waterfill(inst: &Instance, support: &[Vec<usize>]) -> Result<Anchors> {
    let ng = inst.groups.len();
    let live: Vec<usize> = (0..inst.orbits.len()).filter(|&o| inst.orbits[o].rate > 0.0).collect();
    let mut active: Vec<usize> = live.iter().flat_map(|&o| support[o].iter().copied()).collect();
    active.sort_unstable();
    active.dedup();
    if active.len() > WATERFILL_GROUP_CAP {
        return Err(Error::Unsupported(format!(
            "{} anchor groups exceed the exact refinement limit {WATERFILL_GROUP_CAP}; use the pooled form",
            active.len()
        )));
    }
    let mut bit = vec![usize::MAX; ng];
    for (b, &s) in active.iter().enumerate() {
        bit[s] = b;
    }
    let g = active.len();
    let size = 1usize << g;
    let mut weight = vec![0.0; size];
    for x in 1..size {
        let low = x.trailing_zeros() as usize;
        weight[x] = weight[x & (x - 1)] + inst.groups[active[low]].size() as f64;
    }
    let mask_of = |o: usize| support[o].iter().fold(0usize, |m, &s| m | (1 << bit[s]));

    let mut a = vec![vec![0.0; ng]; inst.orbits.len()];
    let mut remaining = size - 1;
    let mut pending = live;
    let mut f = vec![0.0; size];
    while !pending.is_empty() {
        f.fill(0.0);
        for &o in &pending {
            f[mask_of(o) & remaining] += inst.orbits[o].rate;
        }
        for b in 0..g {
            for x in 0..size {
                if x & (1 << b) != 0 {
                    f[x] += f[x ^ (1 << b)];
                }
            }
        }
        let (mut best, mut best_d) = (0usize, f64::NEG_INFINITY);
        let mut x = remaining;
        while x != 0 {
            let d = f[x] / weight[x];
            let tie = (d - best_d).abs() <= 1e-10 * best_d.abs().max(1.0);
            if (!tie && d > best_d) || (tie && x.count_ones() > best.count_ones()) {
                best = x;
                best_d = d;
            }
            x = (x - 1) & remaining;
        }
        let (level, rest): (Vec<usize>, Vec<usize>) =
            pending.iter().partition(|&&o| mask_of(o) & remaining & !best == 0);
        allocate_level(inst, support, &level, &active, best, &mut a)?;
        remaining &= !best;
        pending = rest;
    }
    Ok(Anchors(a))
}

/// Spreads `orbits` over the groups in `level` as evenly as possible per server.
fn allocate_level(
    inst: &Instance,
    support: &[Vec<usize>],
    orbits: &[usize],
    active: &[usize],
    level: usize,
    a: &mut [Vec<f64>],
) -> Result<()> {
    let in_level = |s: usize| active.iter().position(|&x| x == s).is_some_and(|b| level & (1 << b) != 0);
    let mut lp = Lp::new(0);
    let mut cells = Vec::new();
    let mut group_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.groups.len()];
    let mut orbit_rows = Vec::new();
    for &o in orbits {
        let mut row = Vec::new();
        for &s in support[o].iter().filter(|&&s| in_level(s)) {
            let v = lp.add_var(0.0);
            cells.push((o, s));
            row.push((v, 1.0));
            group_rows[s].push((v, 1.0 / inst.groups[s].size() as f64));
        }
        orbit_rows.push((row, inst.orbits[o].rate));
    }
    let u = lp.add_var(1.0);
    for (row, rate) in orbit_rows {
        lp.add_row(row, Sense::Eq, rate);
    }
    for mut row in group_rows.into_iter().filter(|r| !r.is_empty()) {
        row.push((u, -1.0));
        lp.add_row(row, Sense::Le, 0.0);
    }
    match lp.solve()? {
        LpOutcome::Optimal(sol) => {
            for (v, &(o, s)) in cells.iter().enumerate() {
                a[o][s] = sol.x[v];
            }
            Ok(())
        }
        other => Err(Error::NoConvergence(format!("water-filling level LP returned {other:?}"))),
    }
}

/// Supports allowed once the racks in `racks_over` are taken as overloaded.
fn rack_restricted_support(inst: &Instance, racks_over: &[bool]) -> Vec<Vec<usize>> {
    inst.orbits
        .iter()
        .map(|o| {
            let confined = o.replica_racks.iter().all(|&r| racks_over[r]);
            o.local_groups().filter(|&s| confined || !racks_over[inst.groups[s].rack_group]).collect()
        })
        .collect()
}

fn require_rack_regime(rates: &ServiceRates) -> Result<()> {
    if rates.rack_refinement_supported() {
        return Ok(());
    }
    Err(Error::Unsupported(format!(
        "rack refinement needs beta^2 > alpha*gamma, got alpha={} beta={} gamma={}",
        rates.alpha, rates.beta, rates.gamma
    )))
}

/// Anchors meeting both the server and the rack condition.
fn rack_consistent_anchors(inst: &Instance, start: Anchors) -> Result<(Anchors, Vec<bool>)> {
    require_rack_regime(&inst.rates)?;
    let check = |a: &Anchors| {
        let psi = a.psi(inst);
        let racks = rack_status(inst, &psi);
        let ok = server_condition_holds(inst, a, &overloaded(inst, &psi)) && rack_condition_holds(inst, a, &racks);
        (racks, ok)
    };
    let (mut racks, ok) = check(&start);
    if ok {
        return Ok((start, racks));
    }
    let mut seen = vec![racks.clone()];
    for _ in 0..MAX_RACK_ITERS {
        let a = waterfill(inst, &rack_restricted_support(inst, &racks))?;
        let (next, ok) = check(&a);
        if next == racks {
            if ok {
                return Ok((a, racks));
            }
            break;
        }
        if seen.contains(&next) {
            break;
        }
        seen.push(next.clone());
        racks = next;
    }
    exhaustive_anchors(inst)
}

/// Tries every beneficiary set D and overloaded rack set O as an LP with the
/// zero pattern both conditions impose.
fn exhaustive_anchors(inst: &Instance) -> Result<(Anchors, Vec<bool>)> {
    let live: Vec<usize> = (0..inst.orbits.len()).filter(|&o| inst.orbits[o].rate > 0.0).collect();
    let mut active: Vec<usize> = live.iter().flat_map(|&o| inst.orbits[o].local_groups()).collect();
    active.sort_unstable();
    active.dedup();
    if active.len() + inst.racks.len() > EXHAUSTIVE_BIT_CAP {
        return Err(Error::Unsupported(format!(
            "rack refinement did not settle and {} groups x {} racks exceed the exhaustive search limit",
            active.len(),
            inst.racks.len()
        )));
    }
    let alpha = inst.rates.alpha;
    let beta = inst.rates.beta;
    for dmask in 0usize..(1 << active.len()) {
        let mut is_d = vec![false; inst.groups.len()];
        for (b, &s) in active.iter().enumerate() {
            is_d[s] = dmask & (1 << b) != 0;
        }
        let mut touched: Vec<usize> = active.iter().filter(|&&s| is_d[s]).map(|&s| inst.groups[s].rack_group).collect();
        touched.sort_unstable();
        touched.dedup();
        for omask in 0usize..(1 << touched.len()) {
            let mut is_o = vec![false; inst.racks.len()];
            for (b, &r) in touched.iter().enumerate() {
                is_o[r] = omask & (1 << b) != 0;
            }
            let mut lp = Lp::new(0);
            let mut cells = Vec::new();
            let mut sums: Vec<Vec<(usize, f64)>> = vec![Vec::new(); inst.groups.len()];
            let mut dead = false;
            for &o in &live {
                let orbit = &inst.orbits[o];
                let all_d = orbit.local_groups().all(|s| is_d[s]);
                let all_o = orbit.replica_racks.iter().all(|&r| is_o[r]);
                let mut row = Vec::new();
                for s in orbit.local_groups() {
                    if (is_d[s] && !all_d) || (is_o[inst.groups[s].rack_group] && !all_o) {
                        continue;
                    }
                    let v = lp.add_var(0.0);
                    cells.push((o, s));
                    row.push((v, 1.0));
                    sums[s].push((v, 1.0));
                }
                if row.is_empty() {
                    dead = true;
                    break;
                }
                lp.add_row(row, Sense::Eq, orbit.rate);
            }
            if dead {
                continue;
            }
            for &s in &active {
                let n = inst.groups[s].size() as f64;
                if is_d[s] {
                    lp.add_row(sums[s].clone(), Sense::Ge, alpha * n);
                } else if !sums[s].is_empty() {
                    lp.add_row(sums[s].clone(), Sense::Le, (alpha - PSI_MARGIN) * n);
                }
            }
            for (r, rg) in inst.racks.iter().enumerate() {
                let mut row = Vec::new();
                let mut rhs = 0.0;
                for &s in &rg.groups {
                    let k = inst.groups[s].per_rack as f64;
                    let n = inst.groups[s].size() as f64;
                    let coef = if is_d[s] { k / n } else { beta * k / (n * alpha) };
                    rhs += if is_d[s] { k * alpha } else { beta * k };
                    row.extend(sums[s].iter().map(|&(v, _)| (v, coef)));
                }
                if is_o[r] {
                    lp.add_row(row, Sense::Ge, rhs);
                } else {
                    lp.add_row(row, Sense::Le, rhs - RACK_MARGIN);
                }
            }
            let LpOutcome::Optimal(sol) = lp.solve()? else { continue };
            let mut a = vec![vec![0.0; inst.groups.len()]; inst.orbits.len()];
            for (v, &(o, s)) in cells.iter().enumerate() {
                a[o][s] = sol.x[v];
            }
            let a = Anchors(a);
            let psi = a.psi(inst);
            let racks = rack_status(inst, &psi);
            if racks == is_o
                && overloaded(inst, &psi) == is_d
                && server_condition_holds(inst, &a, &is_d)
                && rack_condition_holds(inst, &a, &racks)
            {
                return Ok((a, racks));
            }
        }
    }
    Err(Error::Infeasible("no anchoring satisfies both the server and the rack condition for these rates".into()))
}

fn classification(inst: &Instance, a: &Anchors, racks_over: &[bool]) -> ServerClassification {
    let psi_g = a.psi(inst);
    let over = overloaded(inst, &psi_g);
    let class_g: Vec<ServerClass> =
        (0..inst.groups.len()).map(|s| ServerClass::new(over[s], racks_over[inst.groups[s].rack_group])).collect();
    ServerClassification {
        classes: expand(inst, &class_g, ServerClass::Hu),
        racks: inst
            .expand_racks(racks_over)
            .into_iter()
            .map(|o| if o { RackStatus::Overloaded } else { RackStatus::Underloaded })
            .collect(),
        psi: inst.expand(&psi_g),
    }
}

fn expand<T: Copy>(inst: &Instance, per_group: &[T], fill: T) -> Vec<T> {
    let mut out = vec![fill; inst.num_servers()];
    for (g, v) in inst.groups.iter().zip(per_group) {
        for &m in &g.members {
            out[m] = *v;
        }
    }
    out
}

/// Classification of a traffic model at its current lambda, through the
/// pooled instance. No decomposition is produced in this form.
pub fn classify_pooled(cluster: &ClusterSpec, traffic: &ArrivalSpec) -> Result<ServerClassification> {
    let inst = Instance::pooled(cluster, traffic)?;
    let start = waterfill(&inst, &full_support(&inst))?;
    let (a, racks) = rack_consistent_anchors(&inst, start)?;
    Ok(classification(&inst, &a, &racks))
}

fn explicit_parts(cluster: &ClusterSpec, decomp: &Decomposition) -> Result<(Instance, Anchors)> {
    let types: Vec<(TaskType, f64)> = decomp.types().iter().copied().zip(decomp.rates().iter().copied()).collect();
    let inst = Instance::explicit(cluster, &types)?;
    let mut a = vec![vec![0.0; cluster.num_servers()]; types.len()];
    for (t, ty) in decomp.types().iter().enumerate() {
        for (i, v) in decomp.anchors(t).into_iter().enumerate() {
            a[t][ty.ids()[i] as usize - 1] = v;
        }
    }
    Ok((inst, Anchors(a)))
}

fn to_decomposition(decomp: &Decomposition, a: &Anchors) -> Decomposition {
    let per_type: Vec<Vec<f64>> = decomp
        .types()
        .iter()
        .enumerate()
        .map(|(t, ty)| ty.ids().iter().map(|&id| a.0[t][id as usize - 1]).collect())
        .collect();
    decomp.with_anchors(&per_type)
}

fn check_size(cluster: &ClusterSpec, decomp: &Decomposition) -> Result<()> {
    if decomp.num_servers() != cluster.num_servers() && !decomp.types().is_empty() {
        return Err(Error::config("decomposition and cluster disagree on the server count"));
    }
    Ok(())
}

/// Re-anchors so overloaded servers only anchor types whose replicas are all
/// overloaded. Processing is unchanged, so loads are unchanged.
pub fn refine_servers(cluster: &ClusterSpec, decomp: &Decomposition) -> Result<Decomposition> {
    check_size(cluster, decomp)?;
    let (inst, a) = explicit_parts(cluster, decomp)?;
    if server_condition_holds(&inst, &a, &overloaded(&inst, &a.psi(&inst))) {
        return Ok(decomp.clone());
    }
    let a = waterfill(&inst, &full_support(&inst))?;
    Ok(to_decomposition(decomp, &a))
}

/// Re-anchors so overloaded racks only anchor types whose replica racks are
/// all overloaded, keeping the server condition.
pub fn refine_racks(cluster: &ClusterSpec, decomp: &Decomposition) -> Result<Decomposition> {
    check_size(cluster, decomp)?;
    require_rack_regime(&cluster.rates)?;
    let (inst, a) = explicit_parts(cluster, decomp)?;
    if !server_condition_holds(&inst, &a, &overloaded(&inst, &a.psi(&inst))) {
        return Err(Error::Precondition("input violates the server anchoring condition".into()));
    }
    let (a, _) = rack_consistent_anchors(&inst, a)?;
    Ok(to_decomposition(decomp, &a))
}

/// Rebuilds processing so every class only gets the help its role allows:
/// under-loaded-rack helpers and overloaded-rack helpers self-serve,
/// under-loaded-rack beneficiaries are helped within their rack by helpers,
/// overloaded-rack beneficiaries by helpers in their rack or any
/// under-loaded-rack helper. Minimizes total weighted load subject to every
/// server load being at most 1.
pub fn ideal_decomposition(
    cluster: &ClusterSpec,
    decomp: &Decomposition,
) -> Result<(Decomposition, ServerClassification)> {
    check_size(cluster, decomp)?;
    let (inst, a) = explicit_parts(cluster, decomp)?;
    let psi = a.psi(&inst);
    let over = overloaded(&inst, &psi);
    let racks = rack_status(&inst, &psi);
    if !server_condition_holds(&inst, &a, &over) || !rack_condition_holds(&inst, &a, &racks) {
        return Err(Error::Precondition("input anchors violate the server or rack condition".into()));
    }
    let class = classification(&inst, &a, &racks);
    let mu = cluster.rates.as_array();
    let n = cluster.num_servers();

    let mut lp = Lp::new(0);
    let mut cells = Vec::new();
    let mut load_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (t, ty) in decomp.types().iter().enumerate() {
        for (i, &id) in ty.ids().iter().enumerate() {
            let anchor = id as usize - 1;
            let amount = a.0[t][anchor];
            if amount <= 0.0 {
                continue;
            }
            let mut row = Vec::new();
            for m in (0..n).filter(|&m| allowed(cluster, &class.classes, anchor, m)) {
                let w = 1.0 / mu[cluster.locality_idx(ty, m).index()];
                let v = lp.add_var(w);
                cells.push((t, i, m));
                row.push((v, 1.0));
                load_rows[m].push((v, w));
            }
            lp.add_row(row, Sense::Eq, amount);
        }
    }
    for row in load_rows.into_iter().filter(|r| !r.is_empty()) {
        lp.add_row(row, Sense::Le, 1.0);
    }
    let sol = match lp.solve()? {
        LpOutcome::Optimal(s) => s,
        _ => return Err(Error::Infeasible("no decomposition with the class zero pattern fits within capacity".into())),
    };
    let mut fine: Vec<Vec<Vec<f64>>> = decomp.types().iter().map(|ty| vec![vec![0.0; n]; ty.len()]).collect();
    for (v, &(t, i, m)) in cells.iter().enumerate() {
        fine[t][i][m] = sol.x[v];
    }
    let out = Decomposition::from_fine(decomp.types().to_vec(), decomp.rates().to_vec(), fine, n)?;
    Ok((out, class))
}

/// Processing allowed for load anchored at `n` when served by `m`.
fn allowed(cluster: &ClusterSpec, classes: &[ServerClass], n: usize, m: usize) -> bool {
    if m == n {
        return true;
    }
    let same_rack = cluster.rack_index(m) == cluster.rack_index(n);
    match (classes[n], classes[m]) {
        (ServerClass::Hu | ServerClass::Ho, _) => false,
        (ServerClass::Bu, ServerClass::Hu) => same_rack,
        (ServerClass::Bu, _) => false,
        (ServerClass::Bo, ServerClass::Ho) => same_rack,
        (ServerClass::Bo, ServerClass::Hu) => true,
        (ServerClass::Bo, _) => false,
    }
}

/// Full pipeline on an explicit rate vector: witness, server refinement,
/// rack refinement, ideal decomposition.
pub fn classify(
    cluster: &ClusterSpec,
    rates: &std::collections::BTreeMap<TaskType, f64>,
) -> Result<(Decomposition, ServerClassification)> {
    let region = super::region::in_region(cluster, rates, 0.0)?;
    let Some(witness) = region.witness else {
        return Err(Error::Precondition(format!(
            "rates are outside the capacity region (max load {})",
            1.0 - region.slack
        )));
    };
    let d = refine_servers(cluster, &witness)?;
    let d = refine_racks(cluster, &d)?;
    ideal_decomposition(cluster, &d)
}

/// Violations of the server anchoring condition.
pub fn server_condition_violations(cluster: &ClusterSpec, decomp: &Decomposition) -> Vec<String> {
    let psi = decomp.pseudo_rates();
    let over: Vec<bool> = psi.iter().map(|&p| p >= cluster.rates.alpha - PSI_TOL).collect();
    let mut out = Vec::new();
    for (t, ty) in decomp.types().iter().enumerate() {
        if ty.ids().iter().all(|&id| over[id as usize - 1]) {
            continue;
        }
        for (i, v) in decomp.anchors(t).into_iter().enumerate() {
            let n = ty.ids()[i] as usize - 1;
            if over[n] && v > ANCHOR_EPS {
                out.push(format!("overloaded server {} anchors {v} of type {ty}", n + 1));
            }
        }
    }
    out
}

/// Violations of the rack anchoring condition.
pub fn rack_condition_violations(cluster: &ClusterSpec, decomp: &Decomposition) -> Vec<String> {
    let psi = decomp.pseudo_rates();
    let over: Vec<bool> =
        (0..cluster.num_racks()).map(|k| eq8(&cluster.rates, cluster.rack_members(k).map(|m| (1.0, psi[m])))).collect();
    let mut out = Vec::new();
    for (t, ty) in decomp.types().iter().enumerate() {
        if ty.ids().iter().all(|&id| over[cluster.rack_index(id as usize - 1)]) {
            continue;
        }
        for (i, v) in decomp.anchors(t).into_iter().enumerate() {
            let n = ty.ids()[i] as usize - 1;
            if over[cluster.rack_index(n)] && v > ANCHOR_EPS {
                out.push(format!(
                    "overloaded rack {} anchors {v} of type {ty} at server {}",
                    cluster.rack_index(n) + 1,
                    n + 1
                ));
            }
        }
    }
    out
}

/// Violations of the class definitions: labels against ψ and the rack test,
/// and processing outside the allowed pattern.
pub fn class_violations(cluster: &ClusterSpec, decomp: &Decomposition, class: &ServerClassification) -> Vec<String> {
    let psi = decomp.pseudo_rates();
    let mut out = Vec::new();
    for m in 0..cluster.num_servers() {
        let over = psi[m] >= cluster.rates.alpha - PSI_TOL;
        if over != class.classes[m].is_beneficiary() {
            out.push(format!("server {} has psi {} but class {}", m + 1, psi[m], class.classes[m].name()));
        }
        let k = cluster.rack_index(m);
        let rack_over = eq8(&cluster.rates, cluster.rack_members(k).map(|j| (1.0, psi[j])));
        if rack_over != class.classes[m].in_overloaded_rack() {
            out.push(format!("server {} class {} disagrees with rack {} test", m + 1, class.classes[m].name(), k + 1));
        }
    }
    for (t, ty) in decomp.types().iter().enumerate() {
        for (i, &id) in ty.ids().iter().enumerate() {
            let n = id as usize - 1;
            for (m, &v) in decomp.fine()[t][i].iter().enumerate() {
                if v > ANCHOR_EPS && !allowed(cluster, &class.classes, n, m) {
                    out.push(format!(
                        "type {ty} anchored at {} ({}) processed at {} ({})",
                        n + 1,
                        class.classes[n].name(),
                        m + 1,
                        class.classes[m].name()
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::cluster::ServiceRates;

    fn ptd(lambda: f64, four: f64) -> (ClusterSpec, Decomposition) {
        let c = ClusterSpec::uniform(2, 2, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
        let types = vec![
            TaskType::from_ids(&[1]).unwrap(),
            TaskType::from_ids(&[2, 3]).unwrap(),
            TaskType::from_ids(&[4]).unwrap(),
        ];
        let rates = vec![lambda, lambda, four];
        let d = Decomposition::all_local(types, rates, 4).unwrap();
        (c, d)
    }

    #[test]
    fn rack_test_examples() {
        let c = ClusterSpec::uniform(2, 2, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
        let psi = [0.95, 0.475, 0.475, 1.805];
        assert!(is_rack_overloaded(&c, &psi, RackId(2)).unwrap());
        assert!(!is_rack_overloaded(&c, &psi, RackId(1)).unwrap());
        assert!(is_rack_overloaded(&c, &[1.0; 4], RackId(1)).unwrap());
        assert!(is_rack_overloaded(&c, &psi, RackId(3)).is_err());
    }

    #[test]
    fn servers_identity_without_overload() {
        let (c, d) = ptd(0.5, 0.5);
        assert_eq!(refine_servers(&c, &d).unwrap(), d);
        assert_eq!(refine_racks(&c, &d).unwrap(), d);
    }

    #[test]
    fn ptd_server_refinement_keeps_loads() {
        // Even split passes the server condition already: only server 4 is
        // overloaded and it anchors only its own type.
        let (c, d) = ptd(0.95, 1.805);
        let r = refine_servers(&c, &d).unwrap();
        assert!(server_condition_violations(&c, &r).is_empty());
        assert!((r.total_load(&c) - d.total_load(&c)).abs() < 1e-12);
    }

    #[test]
    fn ptd_rack_refinement_resolves_to_underloaded_rack() {
        // Anchoring all of {2,3} at 2 would relieve rack 2 of its overload,
        // so rack 2 is under-loaded in the only consistent anchoring.
        let (c, d) = ptd(0.95, 1.805);
        let r = refine_racks(&c, &d).unwrap();
        assert!(server_condition_violations(&c, &r).is_empty());
        assert!(rack_condition_violations(&c, &r).is_empty());
        let (ideal, class) = ideal_decomposition(&c, &r).unwrap();
        assert_eq!(class.classes, vec![ServerClass::Hu, ServerClass::Hu, ServerClass::Hu, ServerClass::Bu]);
        assert!(class_violations(&c, &ideal, &class).is_empty());
    }

    #[test]
    fn cross_rack_type_moves_to_underloaded_rack() {
        // Server 4 overloaded beyond what server 3 can absorb: rack 2 stays
        // overloaded and {2,3} must be anchored wholly at server 2.
        let (c, d) = ptd(0.5, 2.2);
        let r = refine_racks(&c, &d).unwrap();
        assert!((r.anchors(1)[0] - 0.5).abs() < 1e-9 && r.anchors(1)[1].abs() < 1e-9);
        let (ideal, class) = ideal_decomposition(&c, &r).unwrap();
        assert_eq!(class.classes, vec![ServerClass::Hu, ServerClass::Hu, ServerClass::Ho, ServerClass::Bo]);
        assert_eq!(class.racks, vec![RackStatus::Underloaded, RackStatus::Overloaded]);
        assert!(class_violations(&c, &ideal, &class).is_empty());
    }

    #[test]
    fn ideal_rejects_unrefined_input() {
        let (c, d) = ptd(0.5, 2.5);
        assert!(matches!(ideal_decomposition(&c, &d), Err(Error::Precondition(_))));
    }

    #[test]
    fn unsupported_regime() {
        let c = ClusterSpec::uniform(2, 2, ServiceRates::new(1.0, 0.5, 0.4).unwrap()).unwrap();
        let (_, d) = ptd(0.5, 2.5);
        assert!(matches!(refine_racks(&c, &d), Err(Error::Unsupported(_))));
    }

    #[test]
    fn all_underloaded_is_all_local_helpers() {
        let c = ClusterSpec::uniform(2, 2, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
        let mut m = BTreeMap::new();
        m.insert(TaskType::from_ids(&[1, 2]).unwrap(), 0.4);
        m.insert(TaskType::from_ids(&[3]).unwrap(), 0.3);
        let (d, class) = classify(&c, &m).unwrap();
        assert!(class.classes.iter().all(|&k| k == ServerClass::Hu));
        for t in 0..d.types().len() {
            let local: f64 = d.types()[t].ids().iter().map(|&id| d.coarse(t)[id as usize - 1]).sum();
            assert!((local - d.rates()[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn pooled_scenario2_full_scale_classes() {
        let c = ClusterSpec::uniform(10, 50, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
        let tr = ArrivalSpec::scenario2(&c, 0.9).unwrap();
        let class = classify_pooled(&c, &tr).unwrap();
        assert_eq!(class.servers_in(ServerClass::Bo), (0..10).collect::<Vec<_>>());
        assert_eq!(class.servers_in(ServerClass::Bu), (50..75).collect::<Vec<_>>());
        assert_eq!(class.count(ServerClass::Ho), 40);
        assert_eq!(class.count(ServerClass::Hu), 425);
    }
}
