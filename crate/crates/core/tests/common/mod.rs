//! Random small instances and an independent LP oracle for the capacity region.
#![allow(dead_code)]

use std::collections::BTreeMap;

use locsim::cluster::{ClusterSpec, ServiceRates, TaskType};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RandomInstance {
    pub cluster: ClusterSpec,
    pub direction: BTreeMap<TaskType, f64>,
}

/// At most 6 servers in at most 3 racks, at most 8 types, and rates with
/// beta^2 > alpha * gamma.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let racks = rng.random_range(1..=3usize);
    let mut sizes = vec![1usize; racks];
    let total = rng.random_range(racks..=6);
    for _ in racks..total {
        let k = rng.random_range(0..racks);
        sizes[k] += 1;
    }
    let alpha = rng.random_range(0.5..1.0);
    let beta = alpha * rng.random_range(0.5..0.95);
    let gamma = rng.random_range(0.2..0.95) * beta * beta / alpha;
    let cluster = ClusterSpec::new(sizes, ServiceRates::new(alpha, beta, gamma).unwrap()).unwrap();
    let n = cluster.num_servers();
    let mut direction = BTreeMap::new();
    for _ in 0..rng.random_range(1..=8usize) {
        let k = rng.random_range(1..=n.min(3));
        let ids: Vec<u32> = sample(&mut rng, n, k).into_iter().map(|i| i as u32 + 1).collect();
        direction.insert(TaskType::from_ids(&ids).unwrap(), rng.random_range(0.05..1.0));
    }
    RandomInstance { cluster, direction }
}

/// Boundary scale from an independent LP: maximize t such that t * direction
/// splits over servers with every weighted load at most 1.
pub fn oracle_scale(cluster: &ClusterSpec, direction: &BTreeMap<TaskType, f64>) -> f64 {
    let mu = cluster.rates.as_array();
    let n = cluster.num_servers();
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let t = p.add_var(1.0, (0.0, f64::INFINITY));
    let mut load: Vec<Vec<(minilp::Variable, f64)>> = vec![Vec::new(); n];
    for (ty, rate) in direction {
        let mut row = vec![(t, -rate)];
        for (m, l) in load.iter_mut().enumerate() {
            let v = p.add_var(0.0, (0.0, f64::INFINITY));
            row.push((v, 1.0));
            l.push((v, 1.0 / mu[cluster.locality_idx(ty, m).index()]));
        }
        p.add_constraint(row, ComparisonOp::Eq, 0.0);
    }
    for l in load {
        p.add_constraint(l, ComparisonOp::Le, 1.0);
    }
    p.solve().unwrap().objective()
}

pub fn scaled(direction: &BTreeMap<TaskType, f64>, t: f64) -> BTreeMap<TaskType, f64> {
    direction.iter().map(|(k, v)| (*k, v * t)).collect()
}
