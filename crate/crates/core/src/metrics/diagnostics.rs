//! Heavy-traffic diagnostics: queue mass, collapse direction, variance plug-ins.

use serde::{Deserialize, Serialize};

use crate::capacity::ServerClass;
use crate::cluster::{LocalityClass, ServiceRates};
use crate::error::{Error, Result};
use crate::traffic::{binomial, ArrivalSpec};

/// Beneficiary-side queue mass for sub-queue lengths `[local, rack, remote]`.
pub fn phi(lens: &[[usize; 3]], classes: &[ServerClass]) -> f64 {
    lens.iter()
        .zip(classes)
        .map(|(q, c)| match c {
            ServerClass::Hu => q[2],
            ServerClass::Ho => q[1] + q[2],
            ServerClass::Bo => q[0] + q[1] + q[2],
            ServerClass::Bu => 0,
        } as f64)
        .sum()
}

/// Queue mass not counted by `phi`: helper local/rack-local mass and all of B_u.
pub fn phi_complement(lens: &[[usize; 3]], classes: &[ServerClass]) -> f64 {
    lens.iter()
        .zip(classes)
        .map(|(q, c)| match c {
            ServerClass::Hu => q[0] + q[1],
            ServerClass::Ho => q[0],
            ServerClass::Bo => 0,
            ServerClass::Bu => q[0] + q[1] + q[2],
        } as f64)
        .sum()
}

/// Single-queue variant: total queue mass on beneficiary servers.
pub fn phi_single(lens: &[usize], classes: &[ServerClass]) -> f64 {
    lens.iter().zip(classes).filter(|(_, c)| c.is_beneficiary()).map(|(&q, _)| q as f64).sum()
}

/// Unit vector with entries alpha on B_o, beta on H_o, alpha*gamma/beta on B_u
/// and gamma on H_u.
pub fn collapse_direction(classes: &[ServerClass], rates: &ServiceRates) -> Vec<f64> {
    let raw: Vec<f64> = classes.iter().map(|&c| class_weight(c, rates)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return raw;
    }
    raw.into_iter().map(|v| v / norm).collect()
}

pub fn class_weight(c: ServerClass, r: &ServiceRates) -> f64 {
    match c {
        ServerClass::Bo => r.alpha,
        ServerClass::Ho => r.beta,
        ServerClass::Bu => r.alpha * r.gamma / r.beta,
        ServerClass::Hu => r.gamma,
    }
}

pub fn w_perp_norm(w: &[f64], c: &[f64]) -> f64 {
    let dot: f64 = w.iter().zip(c).map(|(a, b)| a * b).sum();
    w.iter().zip(c).map(|(a, b)| (a - dot * b).powi(2)).sum::<f64>().sqrt()
}

pub fn ht_lower_bound(sigma2: f64, nu2: f64, eps: f64, num_servers: usize) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {eps}")));
    }
    Ok((sigma2 + nu2 + eps * eps) / (2.0 * eps) - num_servers as f64 / 2.0)
}

/// Mean and variance of min(N, cap) for N ~ Poisson(mu).
pub fn clamped_poisson_moments(mu: f64, cap: usize) -> (f64, f64) {
    if mu <= 0.0 {
        return (0.0, 0.0);
    }
    let stop = ((mu + 40.0 * mu.sqrt() + 40.0).ceil() as usize).min(cap);
    let ln_mu = mu.ln();
    let mut ln_p = -mu;
    let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..stop {
        let p = ln_p.exp();
        let kf = k as f64;
        mass += p;
        m1 += kf * p;
        m2 += kf * kf * p;
        ln_p += ln_mu - ((k + 1) as f64).ln();
    }
    let tail = (1.0 - mass).max(0.0);
    let c = stop as f64;
    m1 += c * tail;
    m2 += c * c * tail;
    (m1, (m2 - m1 * m1).max(0.0))
}

/// Fraction of arrivals whose replicas all lie on servers flagged in `inside`.
pub fn inside_fraction(traffic: &ArrivalSpec, inside: &[bool]) -> f64 {
    traffic
        .groups()
        .iter()
        .map(|g| {
            let b = g.pool.iter().filter(|m| inside[m.index()]).count();
            g.share * binomial(b, g.degree) / binomial(g.pool.len(), g.degree)
        })
        .sum()
}

/// Variance of B_o-type arrivals per slot and of the coupled service process.
///
/// `busy[m]` holds the fractions of slots server m spent serving local,
/// rack-local and remote work.
pub fn estimate_sigma_nu(
    traffic: &ArrivalSpec,
    classes: &[ServerClass],
    rates: &ServiceRates,
    busy: &[[f64; 3]],
) -> Result<(f64, f64)> {
    if busy.len() != classes.len() {
        return Err(Error::Precondition("busy fractions and classes differ in length".into()));
    }
    let bo: Vec<bool> = classes.iter().map(|&c| c == ServerClass::Bo).collect();
    let p = inside_fraction(traffic, &bo);
    let (en, vn) = clamped_poisson_moments(traffic.total_rate(), traffic.max_batch());
    let sigma2 = p * p * vn + p * (1.0 - p) * en;
    let nu2 = service_moments(classes, rates, busy).1;
    Ok((sigma2, nu2))
}

/// Per-server Bernoulli success probabilities of the coupled single-queue service.
pub fn coupled_service_probs(classes: &[ServerClass], rates: &ServiceRates, busy: &[[f64; 3]]) -> Vec<f64> {
    classes
        .iter()
        .zip(busy)
        .map(|(c, b)| {
            let local = b[LocalityClass::Local.index()];
            let near = local + b[LocalityClass::RackLocal.index()];
            match c {
                ServerClass::Bo => rates.alpha,
                ServerClass::Ho => rates.beta * (1.0 - local).clamp(0.0, 1.0),
                ServerClass::Hu => rates.gamma * (1.0 - near).clamp(0.0, 1.0),
                ServerClass::Bu => 0.0,
            }
        })
        .collect()
}

/// (mean, variance) of the coupled service count per slot.
pub fn service_moments(classes: &[ServerClass], rates: &ServiceRates, busy: &[[f64; 3]]) -> (f64, f64) {
    coupled_service_probs(classes, rates, busy).into_iter().fold((0.0, 0.0), |(m, v), p| (m + p, v + p * (1.0 - p)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassRatios {
    pub bo: Option<f64>,
    pub ho: Option<f64>,
    pub bu: Option<f64>,
    pub hu: Option<f64>,
}

impl ClassRatios {
    pub fn targets(r: &ServiceRates) -> [f64; 4] {
        [1.0, r.beta / r.alpha, r.gamma / r.beta, r.gamma / r.alpha]
    }

    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.bo, self.ho, self.bu, self.hu]
    }

    /// Some entry is missing because its class is empty or B_o carries no workload.
    pub fn is_flagged(&self) -> bool {
        self.as_array().iter().any(Option::is_none)
    }
}

/// Class-mean workloads normalized by the B_o mean.
pub fn class_workload_ratios(mean_workload: &[f64], classes: &[ServerClass]) -> ClassRatios {
    let class_mean = |k: ServerClass| {
        let v: Vec<f64> = mean_workload.iter().zip(classes).filter(|(_, &c)| c == k).map(|(&w, _)| w).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let Some(bo) = class_mean(ServerClass::Bo).filter(|&b| b > 0.0) else {
        return ClassRatios::default();
    };
    ClassRatios {
        bo: Some(1.0),
        ho: class_mean(ServerClass::Ho).map(|v| v / bo),
        bu: class_mean(ServerClass::Bu).map(|v| v / bo),
        hu: class_mean(ServerClass::Hu).map(|v| v / bo),
    }
}
