//! Summary rows and diagnostics on real runs.

use locsim::capacity::{classify_pooled, max_lambda};
use locsim::cluster::{ClusterSpec, ServiceRates};
use locsim::engine::{run, RunParams};
use locsim::metrics::{read_rows, write_rows, HeavyTrafficDiagnostics, SummaryRow, WorkloadBasis};
use locsim::policies::{PolicyConfig, PolicyKind};
use locsim::traffic::ArrivalSpec;

#[test]
fn rows_round_trip_with_diagnostics() {
    let r = ServiceRates::new(1.0, 0.8, 0.5).unwrap();
    let c = ClusterSpec::uniform(5, 10, r).unwrap();
    let base = ArrivalSpec::scenario2_with_shares(&c, [0.2, 0.14, 0.66], 1.0).unwrap();
    let star = max_lambda(&c, &base).unwrap();
    let tr = base.with_lambda(0.95 * star);
    let class = classify_pooled(&c, &tr).unwrap();
    let mut rows = Vec::new();
    for kind in [PolicyKind::BalancedPandas, PolicyKind::JsqMaxWeight] {
        let s = run(&c, &tr, &PolicyConfig::new(kind), &RunParams::new(20_000, 2000, 9), Some(&class.classes)).unwrap();
        let trace = s.collapse.as_ref().unwrap();
        let basis =
            if kind == PolicyKind::BalancedPandas { WorkloadBasis::SubQueues } else { WorkloadBasis::QueueOverAlpha };
        assert_eq!(trace.basis, basis);
        assert!(trace.phi_mean >= 0.0 && trace.wperp_mean >= 0.0);
        let ht =
            HeavyTrafficDiagnostics::compute(&s, &tr, &class.classes, &r, 0.05 * star * base.rate_scale()).unwrap();
        assert_eq!(ht.ratios.bo, Some(1.0));
        assert!(ht.sigma2 > 0.0 && ht.nu2 >= 0.0);
        rows.push(SummaryRow::new(&s, "collapse", Some(&ht)));
    }
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows).unwrap();
    assert_eq!(read_rows(&buf[..]).unwrap(), rows);
}

#[test]
fn unstable_run_has_positive_slope() {
    let c = ClusterSpec::uniform(2, 5, ServiceRates::new(1.0, 0.9, 0.5).unwrap()).unwrap();
    let tr = ArrivalSpec::scenario1(&c, 1.0).unwrap();
    let s =
        run(&c, &tr, &PolicyConfig::new(PolicyKind::BalancedPandas), &RunParams::new(20_000, 1000, 1), None).unwrap();
    assert!(s.stability.ci_lo > 0.0 && !s.is_stable(), "{:?}", s.stability);
}
