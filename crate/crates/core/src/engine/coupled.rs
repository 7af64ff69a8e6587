use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RunParams;
use crate::capacity::ServerClass;
use crate::cluster::ServiceRates;
use crate::error::{Error, Result};
use crate::metrics::diagnostics::coupled_service_probs;
use crate::traffic::{ArrivalBatch, ArrivalSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSummary {
    /// Time-average of Psi after warmup.
    pub mean_psi: f64,
    pub mean_arrivals: f64,
    pub mean_service: f64,
    pub slots: u64,
}

/// Single-server queue fed by the arrivals whose replicas all sit on B_o
/// servers and served by independent Bernoulli opportunities: alpha on B_o,
/// beta(1 - rho_l) on H_o and gamma(1 - rho) on H_u, with the busy fractions
/// taken from a paired full run.
pub fn coupled_lower_bound_run(
    traffic: &ArrivalSpec,
    classes: &[ServerClass],
    rates: &ServiceRates,
    busy: &[[f64; 3]],
    params: &RunParams,
) -> Result<CoupledSummary> {
    params.validate()?;
    if classes.is_empty() || classes.len() != busy.len() {
        return Err(Error::Precondition("coupled run needs one class and one busy-fraction row per server".into()));
    }
    let inside: Vec<bool> = classes.iter().map(|&c| c == ServerClass::Bo).collect();
    let probs: Vec<f64> = coupled_service_probs(classes, rates, busy).into_iter().filter(|&p| p > 0.0).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut batch = ArrivalBatch::default();
    let mut psi = 0u64;
    let (mut psi_sum, mut arr_sum, mut svc_sum) = (0u64, 0u64, 0u64);
    for t in 0..params.horizon {
        traffic.sample_batch(&mut rng, &mut batch);
        let a = batch.tasks.iter().filter(|ty| ty.locals().all(|m| inside[m.index()])).count() as u64;
        let b = probs.iter().filter(|&&p| rng.random::<f64>() < p).count() as u64;
        psi = (psi + a).saturating_sub(b);
        if t >= params.warmup {
            psi_sum += psi;
            arr_sum += a;
            svc_sum += b;
        }
    }
    let n = (params.horizon - params.warmup) as f64;
    Ok(CoupledSummary {
        mean_psi: psi_sum as f64 / n,
        mean_arrivals: arr_sum as f64 / n,
        mean_service: svc_sum as f64 / n,
        slots: params.horizon,
    })
}
