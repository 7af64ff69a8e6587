//! Experiment configuration: a TOML file, overridden by command-line flags,
//! checked in full before anything runs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use locsim::cluster::{ClusterSpec, ServerId, ServiceRates};
use locsim::engine::RunParams;
use locsim::policies::{PolicyConfig, PolicyKind, TieBreak};
use locsim::traffic::{ArrivalSpec, SCENARIO2_SHARES};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub cluster: ClusterSection,
    pub traffic: TrafficSection,
    pub policy: PolicySection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub racks: usize,
    pub servers_per_rack: usize,
    /// Overrides `racks` and `servers_per_rack` when set.
    pub rack_sizes: Option<Vec<usize>>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    S1,
    S2,
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    /// 1-based server ids.
    pub pool: Vec<u32>,
    pub degree: usize,
    /// Mean arrivals per slot per unit lambda.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub scenario: Scenario,
    /// Label written to the CSV `scenario` column; defaults to the scenario name.
    pub name: Option<String>,
    pub lambda: f64,
    /// Scenario 2 group shares.
    pub shares: Option<[f64; 3]>,
    pub groups: Vec<GroupSection>,
    pub max_batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub kinds: Vec<PolicyKind>,
    pub tie_break: TieBreak,
    pub pandas_threshold: bool,
    pub opportunistic_rates: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub slots: u64,
    pub warmup: u64,
    pub seeds: Vec<u64>,
    pub decimation: u64,
    pub slope_points: usize,
    pub bootstrap_reps: usize,
    pub bootstrap_blocks: usize,
    /// Classify servers and trace Phi, W-perp and the lower bound.
    pub diagnostics: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    /// `[lo, hi, step]`, used when `lambdas` is empty.
    pub range: Option<[f64; 3]>,
    /// Grid values are fractions of the capacity boundary.
    pub relative: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection { racks: 5, servers_per_rack: 10, rack_sizes: None, alpha: 1.0, beta: 0.9, gamma: 0.5 }
    }
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            scenario: Scenario::S2,
            name: None,
            lambda: 0.8,
            shares: None,
            groups: Vec::new(),
            max_batch: None,
        }
    }
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            kinds: vec![PolicyKind::BalancedPandas],
            tie_break: TieBreak::default(),
            pandas_threshold: false,
            opportunistic_rates: false,
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        let p = RunParams::new(0, 0, 0);
        RunSection {
            slots: 100_000,
            warmup: 10_000,
            seeds: vec![1],
            decimation: p.decimation,
            slope_points: p.slope_points,
            bootstrap_reps: p.bootstrap_reps,
            bootstrap_blocks: p.bootstrap_blocks,
            diagnostics: true,
        }
    }
}

/// Reads a config file, or the defaults when `path` is `None`.
pub fn load(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl ExperimentConfig {
    pub fn rates(&self) -> ServiceRates {
        ServiceRates { alpha: self.cluster.alpha, beta: self.cluster.beta, gamma: self.cluster.gamma }
    }

    pub fn rack_sizes(&self) -> Vec<usize> {
        self.cluster.rack_sizes.clone().unwrap_or_else(|| vec![self.cluster.servers_per_rack; self.cluster.racks])
    }

    pub fn scenario_label(&self) -> String {
        self.traffic.name.clone().unwrap_or_else(|| self.traffic.scenario.name().to_string())
    }

    pub fn build_cluster(&self) -> locsim::Result<ClusterSpec> {
        ClusterSpec::new(self.rack_sizes(), self.rates())
    }

    pub fn build_traffic(&self, cluster: &ClusterSpec, lambda: f64) -> locsim::Result<ArrivalSpec> {
        let t = &self.traffic;
        let spec = match t.scenario {
            Scenario::S1 => ArrivalSpec::scenario1(cluster, lambda)?,
            Scenario::S2 => ArrivalSpec::scenario2_with_shares(cluster, t.shares.unwrap_or(SCENARIO2_SHARES), lambda)?,
            Scenario::Custom => {
                let groups = t
                    .groups
                    .iter()
                    .map(|g| (g.pool.iter().map(|&id| ServerId(id)).collect(), g.degree, g.weight))
                    .collect();
                ArrivalSpec::custom(cluster, groups, lambda)?
            }
        };
        Ok(match t.max_batch {
            Some(b) => spec.with_max_batch(b),
            None => spec,
        })
    }

    pub fn policy_configs(&self) -> Vec<PolicyConfig> {
        self.policy
            .kinds
            .iter()
            .map(|&kind| PolicyConfig {
                kind,
                tie_break: self.policy.tie_break,
                pandas_threshold: self.policy.pandas_threshold,
                opportunistic_rates: self.policy.opportunistic_rates,
            })
            .collect()
    }

    pub fn run_params(&self, seed: u64) -> RunParams {
        let r = &self.run;
        RunParams {
            decimation: r.decimation,
            slope_points: r.slope_points,
            bootstrap_reps: r.bootstrap_reps,
            bootstrap_blocks: r.bootstrap_blocks,
            ..RunParams::new(r.slots, r.warmup, seed)
        }
    }

    /// Sweep grid as written (absolute or relative).
    pub fn grid(&self) -> Vec<f64> {
        if !self.sweep.lambdas.is_empty() {
            return self.sweep.lambdas.clone();
        }
        let Some([lo, hi, step]) = self.sweep.range else {
            return Vec::new();
        };
        if !(step > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Vec::new();
        }
        let n = ((hi - lo) / step + 1e-9).floor();
        if n < 0.0 {
            return Vec::new();
        }
        (0..=n as usize).map(|i| lo + i as f64 * step).collect()
    }

    /// Every problem with the config, each prefixed by its path. Empty when valid.
    pub fn problems(&self, needs_grid: bool) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |path: &str, msg: String| out.push(format!("{path}: {msg}"));

        if let Err(e) = self.rates().validate() {
            push("cluster.alpha/beta/gamma", e.to_string());
        }
        let sizes = self.rack_sizes();
        if sizes.is_empty() || sizes.contains(&0) {
            push("cluster", "needs at least one rack and one server per rack".into());
        }

        let t = &self.traffic;
        if !(t.lambda.is_finite() && t.lambda >= 0.0) {
            push("traffic.lambda", format!("must be finite and >= 0, got {}", t.lambda));
        }
        if let Some(s) = t.shares {
            if t.scenario != Scenario::S2 {
                push("traffic.shares", "only applies to scenario s2".into());
            }
            if s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                push("traffic.shares", "shares must be >= 0".into());
            }
            let sum: f64 = s.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                push("traffic.shares", format!("shares must sum to 1, got {sum}"));
            }
        }
        match t.scenario {
            Scenario::Custom if t.groups.is_empty() => {
                push("traffic.groups", "custom scenario needs at least one group".into())
            }
            Scenario::Custom => {}
            _ if !t.groups.is_empty() => push("traffic.groups", "only applies to the custom scenario".into()),
            _ => {}
        }
        let servers: usize = sizes.iter().sum();
        for (i, g) in t.groups.iter().enumerate() {
            let p = format!("traffic.groups[{i}]");
            if let Some(id) = g.pool.iter().find(|&&id| id == 0 || id as usize > servers) {
                push(&format!("{p}.pool"), format!("server id {id} out of range 1..={servers}"));
            }
            if !(1..=3).contains(&g.degree) {
                push(&format!("{p}.degree"), "must be 1..=3".into());
            }
            if !(g.weight.is_finite() && g.weight >= 0.0) {
                push(&format!("{p}.weight"), "must be >= 0".into());
            }
        }
        if t.max_batch == Some(0) {
            push("traffic.max_batch", "must be positive".into());
        }

        if self.policy.kinds.is_empty() {
            push("policy.kinds", "needs at least one policy".into());
        }
        let mut kinds = self.policy.kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.policy.kinds.len() {
            push("policy.kinds", "policies must be distinct".into());
        }

        let r = &self.run;
        if r.slots <= r.warmup {
            push("run.slots", format!("{} must exceed run.warmup {}", r.slots, r.warmup));
        }
        if r.decimation == 0 {
            push("run.decimation", "must be positive".into());
        }
        if r.slope_points < 2 {
            push("run.slope_points", "must be at least 2".into());
        }
        if r.seeds.is_empty() {
            push("run.seeds", "needs at least one seed".into());
        }
        let mut seeds = r.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != r.seeds.len() {
            push("run.seeds", "seeds must be distinct".into());
        }

        let grid = self.grid();
        if needs_grid && grid.is_empty() {
            push("sweep", "set sweep.lambdas or a non-empty sweep.range".into());
        }
        if grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            push("sweep.lambdas", "values must be finite and >= 0".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            push("sweep.lambdas", "grid must be strictly increasing".into());
        }

        // Deeper checks only once the pieces parse.
        if out.is_empty() {
            match self.build_cluster() {
                Ok(c) => {
                    // A zero direction is a property of the traffic, reported by the commands.
                    match self.build_traffic(&c, t.lambda) {
                        Ok(_) | Err(locsim::Error::ZeroDirection) => {}
                        Err(e) => out.push(format!("traffic: {e}")),
                    }
                }
                Err(e) => out.push(format!("cluster: {e}")),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> ExperimentConfig {
        toml::from_str(s).unwrap()
    }

    #[test]
    fn defaults_are_valid() {
        assert!(ExperimentConfig::default().problems(false).is_empty());
    }

    #[test]
    fn range_grid() {
        let c = parse("[sweep]\nrange = [0.5, 0.9, 0.1]\n");
        let g = c.grid();
        assert_eq!(g.len(), 5);
        assert!((g[4] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn problems_name_their_path() {
        let c = parse(
            "[cluster]\nbeta = 1.2\n[traffic]\nshares = [0.5, 0.2, 0.2]\n[run]\nseeds = [1, 1]\n[sweep]\nlambdas = [0.5, 0.4]\n",
        );
        let p = c.problems(true);
        assert!(p.iter().any(|m| m.starts_with("cluster.alpha/beta/gamma") && m.contains("alpha > beta > gamma")));
        assert!(p.iter().any(|m| m.starts_with("traffic.shares") && m.contains("sum to 1")));
        assert!(p.iter().any(|m| m.starts_with("run.seeds")));
        assert!(p.iter().any(|m| m.starts_with("sweep.lambdas")));
    }

    #[test]
    fn custom_groups() {
        let c = parse(
            "[cluster]\nracks = 2\nservers_per_rack = 2\n[traffic]\nscenario = \"custom\"\nlambda = 0.95\n\
             [[traffic.groups]]\npool = [1]\ndegree = 1\nweight = 1.0\n\
             [[traffic.groups]]\npool = [2, 3]\ndegree = 2\nweight = 1.0\n\
             [[traffic.groups]]\npool = [4]\ndegree = 1\nweight = 1.9\n",
        );
        assert!(c.problems(false).is_empty(), "{:?}", c.problems(false));
        let cl = c.build_cluster().unwrap();
        let tr = c.build_traffic(&cl, 1.0).unwrap();
        assert!((tr.total_rate() - 3.9).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[run]\nslot = 5\n").is_err());
    }
}
