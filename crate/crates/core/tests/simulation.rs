//! Engine and policy properties on random small clusters.

use locsim::capacity::lp::{Lp, LpOutcome, Sense};
use locsim::cluster::{ClusterSpec, ServerId, ServiceRates, TaskType};
use locsim::engine::{run, RunParams, SimState};
use locsim::policies::{bp_route_weighted, PolicyConfig, PolicyKind, TieBreak};
use locsim::traffic::ArrivalSpec;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cluster_strategy() -> impl Strategy<Value = ClusterSpec> {
    prop::collection::vec(1usize..=4, 1..=3)
        .prop_map(|sizes| ClusterSpec::new(sizes, ServiceRates::new(1.0, 0.8, 0.4).unwrap()).unwrap())
}

/// Up to 3 distinct servers, as 0-based indices drawn from `0..n`.
fn type_of(n: usize, picks: &[usize]) -> TaskType {
    let mut ids: Vec<u32> = picks.iter().map(|p| (p % n) as u32 + 1).collect();
    ids.sort_unstable();
    ids.dedup();
    TaskType::from_ids(&ids).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// The segment-based router agrees with a full scan over every server.
    #[test]
    fn bp_router_matches_full_scan(
        c in cluster_strategy(),
        w in prop::collection::vec(0u8..6, 12),
        picks in prop::collection::vec(0usize..12, 1..=3),
        uniform in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let n = c.num_servers();
        // Small integer workloads make exact ties common.
        let w: Vec<f64> = w[..n].iter().map(|&x| x as f64 * 0.5).collect();
        let t = type_of(n, &picks);
        let tie = if uniform { TieBreak::Uniform } else { TieBreak::LocalityFirst };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = bp_route_weighted(&c, &w, &t, tie, &mut rng);

        let score = |m: usize| w[m] / c.service_rate(c.locality_idx(&t, m));
        let best = (0..n).map(score).fold(f64::INFINITY, f64::min);
        let m = d.server.index();
        let class = d.class.unwrap();
        prop_assert_eq!(class, c.locality_idx(&t, m));
        prop_assert_eq!(score(m), best);
        if tie == TieBreak::LocalityFirst {
            let first = (0..n).filter(|&k| score(k) == best).map(|k| c.locality_idx(&t, k)).min().unwrap();
            prop_assert_eq!(class, first);
        }
    }
}

fn random_traffic(c: &ClusterSpec, groups: &[(Vec<usize>, usize, f64)], lambda: f64) -> ArrivalSpec {
    let n = c.num_servers();
    let weighted = groups
        .iter()
        .map(|(pool, d, w)| {
            let mut p: Vec<ServerId> = pool.iter().map(|&i| ServerId::from_index(i % n)).collect();
            p.sort_unstable();
            p.dedup();
            let degree = (*d).min(p.len());
            (p, degree, *w)
        })
        .collect();
    ArrivalSpec::custom(c, weighted, lambda).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    /// Conservation, queue bookkeeping and the per-slot invariants hold for
    /// every policy, inside or outside the capacity region.
    #[test]
    fn slot_invariants_hold(
        c in cluster_strategy(),
        groups in prop::collection::vec(
            (prop::collection::vec(0usize..12, 1..=5), 1usize..=3, 0.1f64..1.0), 1..=3),
        load in 0.1f64..1.5,
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        seed in any::<u64>(),
    ) {
        let n = c.num_servers();
        let tr = random_traffic(&c, &groups, load * n as f64 * 0.6 / groups.iter().map(|g| g.2).sum::<f64>());
        let mut st = SimState::new(&c, &tr, PolicyConfig::new(kind), seed);
        let mut prev_in_service: Vec<Option<u64>> = vec![None; n];
        for _ in 0..1500 {
            let ledger = st.step().clone();
            let departed: Vec<u64> = ledger.departures.iter().map(|d| d.task.id).collect();
            // Non-preemption: a task in service stays until it departs.
            for (m, id) in prev_in_service.iter().enumerate() {
                if let Some(id) = id {
                    let now = st.servers()[m].in_service.map(|t| t.id);
                    prop_assert!(now == Some(*id) || departed.contains(id), "server {m} dropped task {id}");
                }
            }
            for d in &ledger.departures {
                prop_assert!(d.completion >= 1);
            }
            let cnt = st.counters();
            prop_assert_eq!(cnt.arrived, cnt.departed + st.in_system() as u64);
            let queued: usize = st.queue_lengths().iter().flatten().sum();
            prop_assert_eq!(queued, st.in_system());
            prev_in_service = st.servers().iter().map(|s| s.in_service.map(|t| t.id)).collect();
        }
        prop_assert_eq!(st.counters().violations, 0, "{:?}", st.counters().violation_log);
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let c = ClusterSpec::uniform(3, 4, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
    let tr = ArrivalSpec::scenario2(&c, 0.6).unwrap();
    for kind in PolicyKind::ALL {
        let p = PolicyConfig::new(kind);
        let a = run(&c, &tr, &p, &RunParams::new(5000, 500, 7), None).unwrap();
        let b = run(&c, &tr, &p, &RunParams::new(5000, 500, 7), None).unwrap();
        let other = run(&c, &tr, &p, &RunParams::new(5000, 500, 8), None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mean_completion, other.mean_completion);
    }
}

#[test]
fn summary_accounts_for_every_task() {
    let c = ClusterSpec::uniform(2, 3, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
    let tr = ArrivalSpec::scenario1(&c, 0.4).unwrap();
    for kind in PolicyKind::ALL {
        let s = run(&c, &tr, &PolicyConfig::new(kind), &RunParams::new(20_000, 2000, 3), None).unwrap();
        assert_eq!(s.arrived, s.departed + s.queued_final + s.in_service_final);
        assert_eq!(s.violations, 0);
        assert!(s.busy.iter().flatten().all(|b| (0.0..=1.0).contains(b)));
    }
}

fn random_lp(seed: u64) -> (Lp, Problem) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rng.random_range(1..=5usize);
    let nr = rng.random_range(1..=5usize);
    let mut ours = Lp::new(nv);
    let mut theirs = Problem::new(OptimizationDirection::Minimize);
    let costs: Vec<f64> = (0..nv).map(|_| rng.random_range(-2i32..=3) as f64).collect();
    let vars: Vec<_> = costs.iter().map(|&c| theirs.add_var(c, (0.0, f64::INFINITY))).collect();
    for (j, &cost) in costs.iter().enumerate() {
        ours.set_cost(j, cost);
    }
    for r in 0..=nr {
        // The last row bounds the region so only feasibility can fail.
        let (coeffs, sense, rhs): (Vec<f64>, Sense, f64) = if r == nr {
            (vec![1.0; nv], Sense::Le, 10.0)
        } else {
            let coeffs = (0..nv).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            let sense = [Sense::Le, Sense::Eq, Sense::Ge][rng.random_range(0..3)];
            (coeffs, sense, rng.random_range(-4i32..=6) as f64)
        };
        let op = match sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Eq => ComparisonOp::Eq,
            Sense::Ge => ComparisonOp::Ge,
        };
        ours.add_row(coeffs.iter().copied().enumerate().collect(), sense, rhs);
        theirs.add_constraint(vars.iter().copied().zip(coeffs).collect::<Vec<_>>(), op, rhs);
    }
    (ours, theirs)
}

#[test]
fn simplex_matches_reference_solver() {
    let (mut optimal, mut infeasible) = (0, 0);
    for seed in 0..2000 {
        let (ours, theirs) = random_lp(seed);
        match (ours.solve().unwrap(), theirs.solve()) {
            (LpOutcome::Optimal(s), Ok(r)) => {
                assert!(
                    (s.objective - r.objective()).abs() < 1e-6,
                    "seed {seed}: {} vs {}",
                    s.objective,
                    r.objective()
                );
                optimal += 1;
            }
            (LpOutcome::Infeasible, Err(minilp::Error::Infeasible)) => infeasible += 1,
            (a, b) => panic!("seed {seed}: {a:?} vs {b:?}"),
        }
    }
    assert!(optimal > 200 && infeasible > 200, "{optimal} optimal, {infeasible} infeasible");
}
