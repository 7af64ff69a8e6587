//! Slot-stepped simulation and the run driver.

mod coupled;
mod state;

pub use coupled::{coupled_lower_bound_run, CoupledSummary};
pub use state::{Counters, Departure, ServerState, SimState, SlotLedger, Task, WorkingStatus};

use crate::capacity::ServerClass;
use crate::cluster::ClusterSpec;
use crate::error::{Error, Result};
use crate::metrics::diagnostics::{collapse_direction, phi, phi_single, w_perp_norm};
use crate::metrics::stats::{block_bootstrap_se, stability_slope};
use crate::metrics::{CollapseTrace, RunSummary, WorkloadBasis};
use crate::policies::PolicyConfig;
use crate::traffic::ArrivalSpec;

const BOOTSTRAP_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    /// Diagnostics (workloads, Phi, W-perp) are sampled every `decimation` slots.
    pub decimation: u64,
    /// Target number of points in the stability-slope series.
    pub slope_points: usize,
    pub bootstrap_reps: usize,
    pub bootstrap_blocks: usize,
}

impl RunParams {
    pub fn new(horizon: u64, warmup: u64, seed: u64) -> Self {
        RunParams {
            horizon,
            warmup,
            seed,
            decimation: 1,
            slope_points: 10_000,
            bootstrap_reps: 200,
            bootstrap_blocks: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon <= self.warmup {
            return Err(Error::Config(format!("horizon {} must exceed warmup {}", self.horizon, self.warmup)));
        }
        if self.decimation == 0 || self.slope_points < 2 {
            return Err(Error::Config("decimation and slope points must be positive".into()));
        }
        Ok(())
    }
}

/// Runs one replication. With `classes`, Phi and the collapse diagnostics are
/// traced as well.
pub fn run(
    cluster: &ClusterSpec,
    traffic: &ArrivalSpec,
    policy: &PolicyConfig,
    params: &RunParams,
    classes: Option<&[ServerClass]>,
) -> Result<RunSummary> {
    params.validate()?;
    let m = cluster.num_servers();
    if let Some(c) = classes {
        if c.len() != m {
            return Err(Error::Precondition(format!("{} classes for {m} servers", c.len())));
        }
    }
    let bp = policy.kind.has_subqueues();
    let c_dir = classes.map(|c| collapse_direction(c, &cluster.rates));
    let window = params.horizon - params.warmup;
    let slope_every = (window / params.slope_points as u64).max(1);

    let mut sim = SimState::new(cluster, traffic, *policy, params.seed);
    let mut completion_sum = 0u64;
    let mut completed = 0u64;
    let mut queue_sum = 0u64;
    let mut slope_x = Vec::with_capacity(params.slope_points + 1);
    let mut slope_y = Vec::with_capacity(params.slope_points + 1);
    let mut workload_sum = vec![0.0; m];
    let mut diag_samples = 0u64;
    let mut phi_sum = 0.0;
    let mut wperp_sum = 0.0;
    let mut phi_series = Vec::new();

    for t in 0..params.horizon {
        let recording = t >= params.warmup;
        sim.set_recording(recording);
        let ledger = sim.step();
        if !recording {
            continue;
        }
        for d in &ledger.departures {
            completion_sum += d.completion;
            completed += 1;
        }
        let in_system = sim.in_system();
        queue_sum += in_system as u64;
        let k = t - params.warmup;
        if k.is_multiple_of(slope_every) {
            slope_x.push(t as f64);
            slope_y.push(in_system as f64);
        }
        if k.is_multiple_of(params.decimation) {
            diag_samples += 1;
            for (acc, w) in workload_sum.iter_mut().zip(sim.workloads()) {
                *acc += w;
            }
            if let (Some(cls), Some(c)) = (classes, c_dir.as_deref()) {
                let p = if bp { phi(sim.queue_lengths(), cls) } else { phi_single(sim.single_queue_lengths(), cls) };
                phi_sum += p;
                wperp_sum += w_perp_norm(sim.workloads(), c);
                if k.is_multiple_of(slope_every) {
                    phi_series.push(p);
                }
            }
        }
    }

    let counters = sim.counters().clone();
    let n = diag_samples.max(1) as f64;
    let bseed = params.seed ^ BOOTSTRAP_SALT;
    let stability = stability_slope(&slope_x, &slope_y, params.bootstrap_blocks, params.bootstrap_reps, bseed);
    let collapse = classes.map(|_| CollapseTrace {
        basis: if bp { WorkloadBasis::SubQueues } else { WorkloadBasis::QueueOverAlpha },
        phi_mean: phi_sum / n,
        phi_se: block_bootstrap_se(&phi_series, params.bootstrap_blocks, params.bootstrap_reps, bseed),
        wperp_mean: wperp_sum / n,
        samples: diag_samples,
    });
    Ok(RunSummary {
        policy: policy.kind,
        lambda: traffic.lambda(),
        seed: params.seed,
        slots: params.horizon,
        warmup: params.warmup,
        mean_completion: (completed > 0).then(|| completion_sum as f64 / completed as f64),
        completed,
        arrived: counters.arrived,
        departed: counters.departed,
        queued_final: sim.waiting_count() as u64,
        in_service_final: sim.in_service_count() as u64,
        mean_total_queue: queue_sum as f64 / window as f64,
        stability,
        truncations: counters.truncations,
        violations: counters.violations,
        violation_log: counters.violation_log,
        busy: sim.busy_slots().iter().map(|b| b.map(|v| v as f64 / window as f64)).collect(),
        mean_workload: workload_sum.into_iter().map(|w| w / n).collect(),
        collapse,
    })
}
