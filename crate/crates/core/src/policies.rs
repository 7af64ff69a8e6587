//! Routing and scheduling rules for Balanced-Pandas, JSQ-MaxWeight and Pandas.
//!
//! All functions are pure over queue-length snapshots; randomness only breaks
//! ties, drawn from the caller's rng.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSpec, LocalityClass, ServerId, ServiceRates, TaskType};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "balanced-pandas")]
    BalancedPandas,
    #[serde(rename = "jsq-mw")]
    JsqMaxWeight,
    #[serde(rename = "pandas")]
    Pandas,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [Self::BalancedPandas, Self::JsqMaxWeight, Self::Pandas];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::BalancedPandas => "balanced-pandas",
            PolicyKind::JsqMaxWeight => "jsq-mw",
            PolicyKind::Pandas => "pandas",
        }
    }

    pub fn has_subqueues(self) -> bool {
        self == PolicyKind::BalancedPandas
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "balanced-pandas" => Ok(PolicyKind::BalancedPandas),
            "jsq-mw" => Ok(PolicyKind::JsqMaxWeight),
            "pandas" => Ok(PolicyKind::Pandas),
            other => {
                Err(Error::Config(format!("unknown policy {other:?}; expected balanced-pandas, jsq-mw or pandas")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Among equal weighted workloads prefer local, then rack-local, then remote.
    #[default]
    LocalityFirst,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub tie_break: TieBreak,
    pub pandas_threshold: bool,
    /// Serve pulled tasks at their true locality rate instead of the
    /// server-to-queue relation.
    pub opportunistic_rates: bool,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig { kind, tie_break: TieBreak::LocalityFirst, pandas_threshold: false, opportunistic_rates: false }
    }
}

/// Lengths of a server's local, rack-local and remote sub-queues.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SubQueueLens {
    pub local: usize,
    pub rack: usize,
    pub remote: usize,
}

impl SubQueueLens {
    pub fn new(local: usize, rack: usize, remote: usize) -> Self {
        SubQueueLens { local, rack, remote }
    }

    pub fn get(&self, class: LocalityClass) -> usize {
        match class {
            LocalityClass::Local => self.local,
            LocalityClass::RackLocal => self.rack,
            LocalityClass::Remote => self.remote,
        }
    }

    pub fn total(&self) -> usize {
        self.local + self.rack + self.remote
    }
}

#[inline]
pub fn workload(q: SubQueueLens, rates: &ServiceRates) -> f64 {
    q.local as f64 / rates.alpha + q.rack as f64 / rates.beta + q.remote as f64 / rates.gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteDecision {
    pub server: ServerId,
    /// Sub-queue for Balanced-Pandas; `None` for single-queue policies.
    pub class: Option<LocalityClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleDecision {
    Idle,
    SubQueue(LocalityClass),
    Queue(ServerId),
}

/// Uniform choice among the minimizers of `key` over `0..n`. One scan finds
/// the minimum and counts ties; a second runs only to locate a random tie.
fn pick_min<K: Copy, R: Rng + ?Sized>(
    n: usize,
    key: impl Fn(usize) -> Option<K>,
    cmp: impl Fn(&K, &K) -> Ordering,
    rng: &mut R,
) -> Option<(K, usize)> {
    let mut best: Option<(K, usize)> = None;
    let mut ties = 0usize;
    for i in 0..n {
        let Some(k) = key(i) else { continue };
        match best.as_ref().map(|(b, _)| cmp(&k, b)) {
            None | Some(Ordering::Less) => {
                best = Some((k, i));
                ties = 1;
            }
            Some(Ordering::Equal) => ties += 1,
            Some(Ordering::Greater) => {}
        }
    }
    let (bk, first) = best?;
    if ties == 1 {
        return Some((bk, first));
    }
    let pick = rng.random_range(0..ties);
    let i = (first..n)
        .filter(|&i| key(i).is_some_and(|k| cmp(&k, &bk) == Ordering::Equal))
        .nth(pick)
        .expect("tie index in range");
    Some((bk, i))
}

/// Index ranges covering one locality class of a task type, ascending.
#[derive(Default)]
struct Segments {
    buf: [(usize, usize); 8],
    len: usize,
}

impl Segments {
    fn push(&mut self, lo: usize, hi: usize) {
        if lo < hi {
            self.buf[self.len] = (lo, hi);
            self.len += 1;
        }
    }

    fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.buf[..self.len].iter().copied()
    }
}

/// Splits the servers into local, rack-local and remote index ranges for
/// `t`. Servers are numbered rack by rack, so every class is a union of at
/// most 6 contiguous ranges.
fn class_segments(cluster: &ClusterSpec, t: &TaskType) -> [Segments; 3] {
    let mut out: [Segments; 3] = Default::default();
    let ids = t.ids();
    let mut i = 0;
    let mut prev_rack_end = 0;
    while i < ids.len() {
        let rack = cluster.rack_members(cluster.rack_index(ids[i] as usize - 1));
        out[2].push(prev_rack_end, rack.start);
        let mut lo = rack.start;
        while i < ids.len() && (ids[i] as usize - 1) < rack.end {
            let m = ids[i] as usize - 1;
            out[0].push(m, m + 1);
            out[1].push(lo, m);
            lo = m + 1;
            i += 1;
        }
        out[1].push(lo, rack.end);
        prev_rack_end = rack.end;
    }
    out[2].push(prev_rack_end, cluster.num_servers());
    out
}

/// Weighted-workload routing over precomputed workloads (indexed by 0-based server).
///
/// Ties are ordered by locality class, then by server index; the winner is a
/// uniform draw among them, made only when there is more than one.
pub fn bp_route_weighted<R: Rng + ?Sized>(
    cluster: &ClusterSpec,
    workloads: &[f64],
    t: &TaskType,
    tie: TieBreak,
    rng: &mut R,
) -> RouteDecision {
    let inv = [1.0 / cluster.rates.alpha, 1.0 / cluster.rates.beta, 1.0 / cluster.rates.gamma];
    let segs = class_segments(cluster, t);

    // (minimum, ties at the minimum, first minimizer) per class
    let mut best = [(f64::INFINITY, 0usize, usize::MAX); 3];
    for c in 0..3 {
        let b = &mut best[c];
        for (lo, hi) in segs[c].iter() {
            for (i, &w) in workloads[lo..hi].iter().enumerate() {
                let v = w * inv[c];
                if v < b.0 {
                    *b = (v, 1, lo + i);
                } else if v == b.0 {
                    b.1 += 1;
                }
            }
        }
    }
    let v = best.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let tied = |c: usize| best[c].1 > 0 && best[c].0 == v;
    let first = (0..3).find(|&c| tied(c)).expect("local class is nonempty");
    let classes: &[usize] = match tie {
        TieBreak::LocalityFirst => &[first],
        TieBreak::Uniform => &[0, 1, 2],
    };
    let ties: usize = classes.iter().filter(|&&c| tied(c)).map(|&c| best[c].1).sum();
    let (class, m) = if ties == 1 {
        (first, best[first].2)
    } else {
        let mut pick = rng.random_range(0..ties);
        let mut found = None;
        'classes: for &c in classes.iter().filter(|&&c| tied(c)) {
            if pick >= best[c].1 {
                pick -= best[c].1;
                continue;
            }
            for (lo, hi) in segs[c].iter() {
                for m in lo..hi {
                    if workloads[m] * inv[c] == v {
                        if pick == 0 {
                            found = Some((c, m));
                            break 'classes;
                        }
                        pick -= 1;
                    }
                }
            }
        }
        found.expect("tie index in range")
    };
    RouteDecision { server: ServerId::from_index(m), class: Some(LocalityClass::ALL[class]) }
}

pub fn bp_route<R: Rng + ?Sized>(
    cluster: &ClusterSpec,
    queues: &[SubQueueLens],
    t: &TaskType,
    tie: TieBreak,
    rng: &mut R,
) -> RouteDecision {
    let w: Vec<f64> = queues.iter().map(|&q| workload(q, &cluster.rates)).collect();
    bp_route_weighted(cluster, &w, t, tie, rng)
}

pub fn bp_schedule(q: SubQueueLens) -> ScheduleDecision {
    if q.local > 0 {
        ScheduleDecision::SubQueue(LocalityClass::Local)
    } else if q.rack > 0 {
        ScheduleDecision::SubQueue(LocalityClass::RackLocal)
    } else if q.remote > 0 {
        ScheduleDecision::SubQueue(LocalityClass::Remote)
    } else {
        ScheduleDecision::Idle
    }
}

/// Shortest local queue, ties uniform.
pub fn jsq_route<R: Rng + ?Sized>(lens: &[usize], t: &TaskType, rng: &mut R) -> RouteDecision {
    let ids = t.ids();
    let key = |i: usize| Some(lens[ids[i] as usize - 1]);
    let (_, i) = pick_min(ids.len(), key, |a, b| a.cmp(b), rng).expect("task type is nonempty");
    RouteDecision { server: ServerId(ids[i]), class: None }
}

/// MaxWeight pull for idle server `m` over waiting counts `lens`.
pub fn jsqmw_schedule<R: Rng + ?Sized>(
    cluster: &ClusterSpec,
    lens: &[usize],
    m: ServerId,
    rng: &mut R,
) -> ScheduleDecision {
    let rates = cluster.rates.as_array();
    let mi = m.index();
    // Scores are negated so the maximum is picked.
    let key = |n: usize| {
        let q = lens[n];
        (q > 0).then(|| -(rates[cluster.relation_idx(mi, n).index()] * q as f64))
    };
    match pick_min(lens.len(), key, |a: &f64, b: &f64| a.total_cmp(b), rng) {
        Some((_, n)) => ScheduleDecision::Queue(ServerId::from_index(n)),
        None => ScheduleDecision::Idle,
    }
}

/// Own queue first, otherwise the globally longest queue.
pub fn pandas_schedule<R: Rng + ?Sized>(
    cluster: &ClusterSpec,
    lens: &[usize],
    m: ServerId,
    threshold: bool,
    rng: &mut R,
) -> ScheduleDecision {
    let mi = m.index();
    if lens[mi] > 0 {
        return ScheduleDecision::Queue(m);
    }
    let key = |n: usize| (lens[n] > 0).then(|| usize::MAX - lens[n]);
    let Some((_, n)) = pick_min(lens.len(), key, |a, b| a.cmp(b), rng) else {
        return ScheduleDecision::Idle;
    };
    if threshold {
        let r = &cluster.rates;
        let limit = match cluster.relation_idx(mi, n) {
            LocalityClass::RackLocal => r.alpha / r.beta,
            _ => r.alpha / r.gamma,
        };
        if lens[n] as f64 <= limit {
            return ScheduleDecision::Idle;
        }
    }
    ScheduleDecision::Queue(ServerId::from_index(n))
}
