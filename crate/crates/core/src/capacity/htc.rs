//! Heavy-traffic regime check.
//!
//! Servers holding any positive-rate type form the loaded set; their racks
//! are the overloaded racks, the other servers of those racks can only help
//! rack-locally, and everyone else helps remotely. The regime holds when
//! every subset of loaded servers and every subset of overloaded racks
//! receives more than it can serve alone, and ε is the remaining headroom.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::refine::ServerClassification;
use super::{RackStatus, ServerClass};
use crate::cluster::{ClusterSpec, TaskType};
use crate::traffic::{binomial, ArrivalSpec};

/// Exhaustive enumeration up to this many subsets, sampling beyond.
pub const SUBSET_CAP: usize = 1 << 20;
const SAMPLES: usize = 1 << 14;
const SAMPLE_SEED: u64 = 0x5EED_4854_4300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HtcReport {
    pub holds: bool,
    pub epsilon: f64,
    pub servers_condition: bool,
    pub racks_condition: bool,
    /// True when some subsets were sampled instead of enumerated.
    pub probabilistic: bool,
    pub loaded: usize,
    pub rack_helpers: usize,
    pub remote_helpers: usize,
    /// Whether a supplied classification names exactly the loaded servers as
    /// overloaded-rack beneficiaries and their racks as overloaded.
    pub classification_consistent: Option<bool>,
}

/// Check on an explicit rate vector.
pub fn htc_check(
    cluster: &ClusterSpec,
    rates: &BTreeMap<TaskType, f64>,
    classes: Option<&ServerClassification>,
) -> HtcReport {
    let live: Vec<(&TaskType, f64)> = rates.iter().filter(|(_, r)| **r > 0.0).map(|(t, r)| (t, *r)).collect();
    let mut loaded = vec![false; cluster.num_servers()];
    for (t, _) in &live {
        for &id in t.ids() {
            loaded[id as usize - 1] = true;
        }
    }
    let touching = |set: &[bool]| -> f64 {
        live.iter().filter(|(t, _)| t.ids().iter().any(|&id| set[id as usize - 1])).map(|(_, r)| r).sum()
    };
    evaluate(cluster, &loaded, live.iter().map(|x| x.1).sum(), &touching, classes)
}

/// Check on a traffic model at its current lambda, using the pool formulas.
pub fn htc_check_traffic(
    cluster: &ClusterSpec,
    traffic: &ArrivalSpec,
    classes: Option<&ServerClassification>,
) -> HtcReport {
    let mut loaded = vec![false; cluster.num_servers()];
    for (g, grp) in traffic.groups().iter().enumerate() {
        if traffic.group_rate(g) > 0.0 {
            for s in &grp.pool {
                loaded[s.index()] = true;
            }
        }
    }
    let touching = |set: &[bool]| -> f64 {
        traffic
            .groups()
            .iter()
            .enumerate()
            .map(|(g, grp)| {
                let n = grp.pool.len();
                let outside = grp.pool.iter().filter(|s| !set[s.index()]).count();
                traffic.group_rate(g) * (1.0 - binomial(outside, grp.degree) / binomial(n, grp.degree))
            })
            .sum()
    };
    evaluate(cluster, &loaded, traffic.total_rate(), &touching, classes)
}

fn evaluate(
    cluster: &ClusterSpec,
    loaded: &[bool],
    total: f64,
    touching: &dyn Fn(&[bool]) -> f64,
    classes: Option<&ServerClassification>,
) -> HtcReport {
    let r = cluster.rates;
    let n = cluster.num_servers();
    let ml: Vec<usize> = (0..n).filter(|&m| loaded[m]).collect();
    let mut over_rack = vec![false; cluster.num_racks()];
    for &m in &ml {
        over_rack[cluster.rack_index(m)] = true;
    }
    let mk: Vec<usize> = (0..n).filter(|&m| !loaded[m] && over_rack[cluster.rack_index(m)]).collect();
    let mr = n - ml.len() - mk.len();
    let epsilon = ml.len() as f64 * r.alpha + mk.len() as f64 * r.beta + mr as f64 * r.gamma - total;

    let mut probabilistic = false;
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut set = vec![false; n];

    // Every subset of loaded servers receives more than it serves locally.
    let servers_condition = for_subsets(ml.len(), &mut probabilistic, &mut rng, |pick| {
        set.fill(false);
        for &i in pick {
            set[ml[i]] = true;
        }
        touching(&set) > pick.len() as f64 * r.alpha
    });

    // Every subset of overloaded racks receives more than its servers give.
    let racks: Vec<usize> = (0..cluster.num_racks()).filter(|&k| over_rack[k]).collect();
    let racks_condition = for_subsets(racks.len(), &mut probabilistic, &mut rng, |pick| {
        set.fill(false);
        let mut cap = 0.0;
        for &i in pick {
            for m in cluster.rack_members(racks[i]) {
                set[m] = true;
                cap += if loaded[m] { r.alpha } else { r.beta };
            }
        }
        touching(&set) > cap
    });

    let classification_consistent = classes.map(|c| {
        (0..n).all(|m| (c.classes[m] == ServerClass::Bo) == loaded[m])
            && (0..cluster.num_racks()).all(|k| (c.racks[k] == RackStatus::Overloaded) == over_rack[k])
    });
    HtcReport {
        holds: servers_condition && racks_condition && epsilon > 0.0,
        epsilon,
        servers_condition,
        racks_condition,
        probabilistic,
        loaded: ml.len(),
        rack_helpers: mk.len(),
        remote_helpers: mr,
        classification_consistent,
    }
}

/// Runs `check` on every nonempty subset of `0..len` (as index lists), or on
/// singletons, the full set and random subsets when there are too many.
fn for_subsets(
    len: usize,
    probabilistic: &mut bool,
    rng: &mut ChaCha8Rng,
    mut check: impl FnMut(&[usize]) -> bool,
) -> bool {
    let mut pick = Vec::with_capacity(len);
    if len < usize::BITS as usize && (1usize << len) <= SUBSET_CAP {
        for mask in 1usize..(1 << len) {
            pick.clear();
            pick.extend((0..len).filter(|&i| mask & (1 << i) != 0));
            if !check(&pick) {
                return false;
            }
        }
        return true;
    }
    *probabilistic = true;
    for i in 0..len {
        if !check(&[i]) {
            return false;
        }
    }
    let all: Vec<usize> = (0..len).collect();
    if !check(&all) {
        return false;
    }
    let mut order = all;
    for _ in 0..SAMPLES {
        order.shuffle(rng);
        let k = rng.random_range(1..=len);
        pick.clear();
        pick.extend_from_slice(&order[..k]);
        if !check(&pick) {
            return false;
        }
    }
    true
}
