use serde::Serialize;

use crate::cluster::{ClusterSpec, TaskType};
use crate::error::{Error, Result};

/// Per-type split of arrival rates onto servers, kept in the fine form
/// `fine[t][i][m]`: rate of type `t` anchored at its `i`-th replica and
/// processed at server `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    types: Vec<TaskType>,
    rates: Vec<f64>,
    fine: Vec<Vec<Vec<f64>>>,
}

const CONSERVE_TOL: f64 = 1e-9;

impl Decomposition {
    /// Validates shapes, signs and flow conservation.
    pub fn from_fine(
        types: Vec<TaskType>,
        rates: Vec<f64>,
        fine: Vec<Vec<Vec<f64>>>,
        num_servers: usize,
    ) -> Result<Self> {
        if types.len() != rates.len() || types.len() != fine.len() {
            return Err(Error::config("decomposition shapes disagree"));
        }
        for (t, (ty, anchors)) in types.iter().zip(&fine).enumerate() {
            if anchors.len() != ty.len() || anchors.iter().any(|row| row.len() != num_servers) {
                return Err(Error::config(format!("decomposition rows for type {ty} have the wrong shape")));
            }
            if anchors.iter().flatten().any(|v| !(v.is_finite() && *v >= -CONSERVE_TOL)) {
                return Err(Error::config(format!("negative or non-finite entry for type {ty}")));
            }
            let sum: f64 = anchors.iter().flatten().sum();
            if (sum - rates[t]).abs() > CONSERVE_TOL * (1.0 + rates[t]) {
                return Err(Error::config(format!("type {ty}: entries sum to {sum}, rate is {}", rates[t])));
            }
        }
        Ok(Decomposition { types, rates, fine })
    }

    /// Coarse form `coarse[t][m]`, split evenly over each type's replicas.
    pub fn from_coarse(
        types: Vec<TaskType>,
        rates: Vec<f64>,
        coarse: Vec<Vec<f64>>,
        num_servers: usize,
    ) -> Result<Self> {
        if coarse.len() != types.len() {
            return Err(Error::config("decomposition shapes disagree"));
        }
        let fine = types
            .iter()
            .zip(&coarse)
            .map(|(t, row)| {
                let k = t.len() as f64;
                vec![row.iter().map(|v| v / k).collect(); t.len()]
            })
            .collect();
        Self::from_fine(types, rates, fine, num_servers)
    }

    /// Everything served at the anchors, split evenly over replicas.
    pub fn all_local(types: Vec<TaskType>, rates: Vec<f64>, num_servers: usize) -> Result<Self> {
        let coarse = types
            .iter()
            .zip(&rates)
            .map(|(t, r)| {
                let mut row = vec![0.0; num_servers];
                for &id in t.ids() {
                    row[id as usize - 1] = r / t.len() as f64;
                }
                row
            })
            .collect();
        Self::from_coarse(types, rates, coarse, num_servers)
    }

    pub fn types(&self) -> &[TaskType] {
        &self.types
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn num_servers(&self) -> usize {
        self.fine.iter().flatten().next().map_or(0, |r| r.len())
    }

    /// `fine[t][i][m]`.
    pub fn fine(&self) -> &[Vec<Vec<f64>>] {
        &self.fine
    }

    /// Rate of type `t` processed at each server.
    pub fn coarse(&self, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.fine[t].first().map_or(0, |r| r.len())];
        for row in &self.fine[t] {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Rate of type `t` anchored at each of its replicas.
    pub fn anchors(&self, t: usize) -> Vec<f64> {
        self.fine[t].iter().map(|row| row.iter().sum()).collect()
    }

    /// Weighted load of every server: sum of rate / applicable service rate.
    pub fn server_loads(&self, cluster: &ClusterSpec) -> Vec<f64> {
        let mu = cluster.rates.as_array();
        let mut load = vec![0.0; cluster.num_servers()];
        for (t, ty) in self.types.iter().enumerate() {
            for (m, v) in self.coarse(t).into_iter().enumerate() {
                if v != 0.0 {
                    load[m] += v / mu[cluster.locality_idx(ty, m).index()];
                }
            }
        }
        load
    }

    pub fn total_load(&self, cluster: &ClusterSpec) -> f64 {
        self.server_loads(cluster).iter().sum()
    }

    pub fn max_load(&self, cluster: &ClusterSpec) -> f64 {
        self.server_loads(cluster).into_iter().fold(0.0, f64::max)
    }

    /// Pseudo-arrival rate of every server: total rate anchored there.
    pub fn pseudo_rates(&self) -> Vec<f64> {
        let mut psi = vec![0.0; self.num_servers()];
        for (t, ty) in self.types.iter().enumerate() {
            for (i, &id) in ty.ids().iter().enumerate() {
                psi[id as usize - 1] += self.fine[t][i].iter().sum::<f64>();
            }
        }
        psi
    }

    /// Same processing, anchors reassigned: `anchors[t][i]` must sum to the
    /// type's rate. Each anchor takes its share of every processing server.
    pub(crate) fn with_anchors(&self, anchors: &[Vec<f64>]) -> Self {
        let fine = self
            .types
            .iter()
            .enumerate()
            .map(|(t, _)| {
                let coarse = self.coarse(t);
                let r = self.rates[t];
                anchors[t]
                    .iter()
                    .map(|a| {
                        let share = if r > 0.0 { a / r } else { 0.0 };
                        coarse.iter().map(|c| c * share).collect()
                    })
                    .collect()
            })
            .collect();
        Decomposition { types: self.types.clone(), rates: self.rates.clone(), fine }
    }
}
