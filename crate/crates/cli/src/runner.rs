//! Fans a (lambda x policy x seed) grid out to the worker pool and collects
//! CSV rows in grid order.

use locsim::capacity::{classify_pooled, max_lambda, ServerClass};
use locsim::cluster::ClusterSpec;
use locsim::engine::run;
use locsim::metrics::{HeavyTrafficDiagnostics, RunSummary, SummaryRow};
use locsim::traffic::ArrivalSpec;
use rayon::prelude::*;

use crate::config::ExperimentConfig;

/// Per-lambda context shared by the runs at that lambda.
struct Point {
    traffic: ArrivalSpec,
    classes: Option<Vec<ServerClass>>,
    /// Distance to the boundary in total arrivals per slot.
    eps: f64,
}

pub struct Outcome {
    pub rows: Vec<SummaryRow>,
    pub summaries: Vec<RunSummary>,
}

/// Runs every (lambda, policy, seed) combination. `lambdas` are absolute.
pub fn run_grid(cfg: &ExperimentConfig, cluster: &ClusterSpec, lambdas: &[f64]) -> locsim::Result<Outcome> {
    let base = cfg.build_traffic(cluster, 1.0)?;
    let lambda_star = if cfg.run.diagnostics { max_lambda(cluster, &base).ok() } else { None };
    let points: Vec<Point> = lambdas
        .iter()
        .map(|&l| {
            let traffic = base.with_lambda(l);
            let eps = lambda_star.map_or(0.0, |s| (s - l) * base.rate_scale());
            // Diagnostics need a classification, which only exists inside the region.
            let classes = match lambda_star {
                Some(s) if l < s => classify_pooled(cluster, &traffic).ok().map(|c| c.classes),
                _ => None,
            };
            Point { traffic, classes, eps }
        })
        .collect();

    let policies = cfg.policy_configs();
    let jobs: Vec<(usize, usize, u64)> = (0..points.len())
        .flat_map(|p| (0..policies.len()).flat_map(move |k| cfg.run.seeds.iter().map(move |&s| (p, k, s))))
        .collect();
    let total = jobs.len();
    let label = cfg.scenario_label();
    let results: Vec<locsim::Result<(SummaryRow, RunSummary)>> = jobs
        .par_iter()
        .map(|&(p, k, seed)| {
            let pt = &points[p];
            let s = run(cluster, &pt.traffic, &policies[k], &cfg.run_params(seed), pt.classes.as_deref())?;
            let ht = match &pt.classes {
                Some(c) => Some(HeavyTrafficDiagnostics::compute(&s, &pt.traffic, c, &cluster.rates, pt.eps)?),
                None => None,
            };
            eprintln!(
                "{} lambda={:.4} seed={}: mean completion {} slots, slope CI [{:.2e}, {:.2e}]{}",
                s.policy,
                s.lambda,
                seed,
                s.mean_completion.map_or("n/a".into(), |m| format!("{m:.3}")),
                s.stability.ci_lo,
                s.stability.ci_hi,
                if s.violations > 0 { format!(", {} INVARIANT VIOLATIONS", s.violations) } else { String::new() },
            );
            Ok((SummaryRow::new(&s, &label, ht.as_ref()), s))
        })
        .collect();
    let mut out = Outcome { rows: Vec::with_capacity(total), summaries: Vec::with_capacity(total) };
    for r in results {
        let (row, s) = r?;
        out.rows.push(row);
        out.summaries.push(s);
    }
    Ok(out)
}
