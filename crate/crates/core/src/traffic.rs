//! Arrival specifications, the two benchmark scenarios and per-slot sampling.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::cluster::{ClusterSpec, ServerId, TaskType};
use crate::error::{Error, Result};

/// Default cap on materialized task types in `rate_vector`.
pub const DEFAULT_TYPE_CAP: usize = 200_000;

/// Tasks of this group store their data on `degree` servers drawn uniformly
/// without replacement from `pool`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficGroup {
    pub pool: Vec<ServerId>,
    pub degree: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSpec {
    groups: Vec<TrafficGroup>,
    lambda: f64,
    rate_scale: f64,
    max_batch_override: Option<usize>,
    cum_shares: Vec<f64>,
    batch_dist: Option<Poisson<f64>>,
}

fn batch_dist(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("finite positive mean"))
}

/// One slot's arrivals in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArrivalBatch {
    pub tasks: Vec<TaskType>,
    pub truncated: bool,
}

impl ArrivalBatch {
    pub fn counts(&self) -> BTreeMap<TaskType, usize> {
        let mut out = BTreeMap::new();
        for t in &self.tasks {
            *out.entry(*t).or_insert(0) += 1;
        }
        out
    }
}

/// Pool shares of scenario 2.
pub const SCENARIO2_SHARES: [f64; 3] = [0.20, 0.06, 0.74];

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ArrivalSpec {
    /// Total mean arrivals per slot are `lambda * rate_scale`.
    pub fn new(cluster: &ClusterSpec, groups: Vec<TrafficGroup>, lambda: f64, rate_scale: f64) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::config("traffic needs at least one group"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !(rate_scale.is_finite() && rate_scale > 0.0) {
            return Err(Error::config("rate scale must be positive"));
        }
        let mut groups = groups;
        for (i, g) in groups.iter_mut().enumerate() {
            if !(g.share.is_finite() && g.share >= 0.0) {
                return Err(Error::config(format!("group {i}: share must be >= 0")));
            }
            if g.degree == 0 || g.degree > TaskType::MAX_REPLICAS {
                return Err(Error::config(format!("group {i}: degree must be 1..=3")));
            }
            for &m in &g.pool {
                cluster.check_server(m)?;
            }
            g.pool.sort_unstable();
            g.pool.dedup();
            if g.pool.len() < g.degree {
                return Err(Error::config(format!(
                    "group {i}: pool of {} servers is smaller than degree {}",
                    g.pool.len(),
                    g.degree
                )));
            }
        }
        let total: f64 = groups.iter().map(|g| g.share).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("group shares must sum to 1, got {total}")));
        }
        let mut acc = 0.0;
        let cum_shares = groups
            .iter()
            .map(|g| {
                acc += g.share;
                acc
            })
            .collect();
        let batch_dist = batch_dist(lambda * rate_scale);
        Ok(ArrivalSpec { groups, lambda, rate_scale, max_batch_override: None, cum_shares, batch_dist })
    }

    /// Groups given with absolute per-unit-lambda rates, e.g. `{1}: 1, {2,3}: 1, {4}: 1.9`.
    pub fn custom(cluster: &ClusterSpec, weighted: Vec<(Vec<ServerId>, usize, f64)>, lambda: f64) -> Result<Self> {
        let total: f64 = weighted.iter().map(|g| g.2).sum();
        if weighted.iter().any(|g| !(g.2.is_finite() && g.2 >= 0.0)) {
            return Err(Error::config("custom group weights must be finite and >= 0"));
        }
        if total == 0.0 {
            return Err(Error::ZeroDirection);
        }
        let groups =
            weighted.into_iter().map(|(pool, degree, w)| TrafficGroup { pool, degree, share: w / total }).collect();
        Self::new(cluster, groups, lambda, total)
    }

    /// All tasks stored on 3 servers of the first half of the racks; lambda is per server.
    pub fn scenario1(cluster: &ClusterSpec, lambda: f64) -> Result<Self> {
        let half = (cluster.num_racks() / 2).max(1);
        let pool: Vec<ServerId> = (0..half).flat_map(|k| cluster.rack_members(k)).map(ServerId::from_index).collect();
        if pool.len() < 3 {
            return Err(Error::config(format!("scenario 1 pool has {} servers, needs at least 3", pool.len())));
        }
        let groups = vec![TrafficGroup { pool, degree: 3, share: 1.0 }];
        Self::new(cluster, groups, lambda, cluster.num_servers() as f64)
    }

    /// 20% of tasks on the first fifth of rack 1, 6% on the first half of rack 2,
    /// the rest on all other servers. Sizes scale with the rack sizes
    /// (10/25/465 on 10x50, 2/5/43 on 5x10); degree is capped by the pool size.
    pub fn scenario2(cluster: &ClusterSpec, lambda: f64) -> Result<Self> {
        Self::scenario2_with_shares(cluster, SCENARIO2_SHARES, lambda)
    }

    /// Scenario 2 pools with other shares.
    pub fn scenario2_with_shares(cluster: &ClusterSpec, shares: [f64; 3], lambda: f64) -> Result<Self> {
        if cluster.num_racks() < 2 {
            return Err(Error::config("scenario 2 needs at least 2 racks"));
        }
        let r1 = cluster.rack_members(0);
        let r2 = cluster.rack_members(1);
        let n1 = ((r1.len() as f64) / 5.0).round() as usize;
        let n2 = ((r2.len() as f64) / 2.0).round() as usize;
        if n1 == 0 || n2 == 0 {
            return Err(Error::config("racks 1 and 2 are too small for scenario 2 pools"));
        }
        let pool1: Vec<usize> = r1.clone().take(n1).collect();
        let pool2: Vec<usize> = r2.clone().take(n2).collect();
        let pool3: Vec<usize> =
            (0..cluster.num_servers()).filter(|m| !pool1.contains(m) && !pool2.contains(m)).collect();
        let mk = |pool: Vec<usize>, share: f64| TrafficGroup {
            degree: pool.len().min(3),
            pool: pool.into_iter().map(ServerId::from_index).collect(),
            share,
        };
        let groups = vec![mk(pool1, shares[0]), mk(pool2, shares[1]), mk(pool3, shares[2])];
        if groups[2].pool.len() < 3 {
            return Err(Error::config("scenario 2 remainder pool needs at least 3 servers"));
        }
        Self::new(cluster, groups, lambda, cluster.num_servers() as f64)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        assert!(lambda.is_finite() && lambda >= 0.0, "lambda must be >= 0");
        ArrivalSpec { lambda, batch_dist: batch_dist(lambda * self.rate_scale), ..self.clone() }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch_override = Some(max_batch.max(1));
        self
    }

    pub fn groups(&self) -> &[TrafficGroup] {
        &self.groups
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    /// Mean arrivals per slot.
    pub fn total_rate(&self) -> f64 {
        self.lambda * self.rate_scale
    }

    /// Truncation bound: 20 times the mean batch, and never below 20.
    pub fn max_batch(&self) -> usize {
        self.max_batch_override.unwrap_or_else(|| ((20.0 * self.total_rate()).ceil() as usize).max(20))
    }

    pub fn group_rate(&self, g: usize) -> f64 {
        self.total_rate() * self.groups[g].share
    }

    pub fn num_types(&self) -> f64 {
        self.groups.iter().map(|g| binomial(g.pool.len(), g.degree)).sum()
    }

    /// Samples one slot's arrivals into `out`.
    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut ArrivalBatch) {
        out.tasks.clear();
        out.truncated = false;
        let Some(dist) = &self.batch_dist else { return };
        let n: f64 = dist.sample(rng);
        let cap = self.max_batch();
        let mut n = n as usize;
        if n > cap {
            n = cap;
            out.truncated = true;
        }
        for _ in 0..n {
            let g = self.pick_group(rng);
            out.tasks.push(self.draw_type(g, rng));
        }
    }

    fn pick_group<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.groups.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random::<f64>() * self.cum_shares[self.cum_shares.len() - 1];
        self.cum_shares.iter().position(|&c| u < c).unwrap_or(self.groups.len() - 1)
    }

    fn draw_type<R: Rng + ?Sized>(&self, g: usize, rng: &mut R) -> TaskType {
        let group = &self.groups[g];
        let n = group.pool.len();
        let mut picked = [0u32; 3];
        let mut k = 0;
        while k < group.degree {
            let id = group.pool[rng.random_range(0..n)].0;
            if !picked[..k].contains(&id) {
                picked[k] = id;
                k += 1;
            }
        }
        TaskType::from_distinct(picked, k)
    }

    /// Exact per-type rates. Types shared by overlapping groups are summed.
    pub fn rate_vector(&self, cap: usize) -> Result<BTreeMap<TaskType, f64>> {
        let count = self.num_types();
        if count > cap as f64 {
            return Err(Error::TooManyTypes { count, cap });
        }
        let mut out = BTreeMap::new();
        for (gi, g) in self.groups.iter().enumerate() {
            let rate = self.group_rate(gi);
            if rate <= 0.0 {
                continue;
            }
            let per = rate / binomial(g.pool.len(), g.degree);
            for_each_combination(g.pool.len(), g.degree, |idx| {
                let ids: Vec<ServerId> = idx.iter().map(|&i| g.pool[i]).collect();
                *out.entry(TaskType::new(&ids).expect("distinct")).or_insert(0.0) += per;
            });
        }
        Ok(out)
    }
}

/// Calls `f` with every k-subset of 0..n in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        let i = i - 1;
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
