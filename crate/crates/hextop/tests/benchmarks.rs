//! Short-budget smoke runs of every shipped benchmark, both polarities:
//! configs must build, drive the full pipeline and emit coherent artifacts.

use hextop::config::{benchmark_config, Benchmark};
use hextop::mask::Polarity;
use hextop::pipeline;

fn smoke(bench: Benchmark, polarity: Polarity) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = benchmark_config(bench, 0.15, polarity).unwrap();
    cfg.sls.step_evals = 8;
    cfg.sls.max_steps = 4;
    cfg.sls.total_eval_budget = 40;
    let arts = pipeline::run_to_dir(&cfg, dir.path()).unwrap();
    let o = &arts.outcome;
    assert!(o.phi.is_finite(), "{bench:?}/{polarity:?}: non-finite phi");
    assert_eq!(o.history.len(), o.evals_used);
    assert!(o.evals_used > 0 && o.evals_used <= 40);
    assert!(dir.path().join("report.txt").exists());
    // mechanism objectives reward motion against the input: phi negative
    // once any load path exists
    if matches!(bench, Benchmark::III | Benchmark::IV) {
        assert!(
            o.phi.abs() < 1e12,
            "{bench:?}: runaway mechanism objective {}",
            o.phi
        );
    }
}

#[test]
fn benchmark_i_negative_and_positive() {
    smoke(Benchmark::I, Polarity::Negative);
    smoke(Benchmark::I, Polarity::Positive);
}

#[test]
fn benchmark_ii_negative_and_positive() {
    smoke(Benchmark::II, Polarity::Negative);
    smoke(Benchmark::II, Polarity::Positive);
}

#[test]
fn benchmark_iii_negative_and_positive() {
    smoke(Benchmark::III, Polarity::Negative);
    smoke(Benchmark::III, Polarity::Positive);
}

#[test]
fn benchmark_iv_negative_and_positive() {
    smoke(Benchmark::IV, Polarity::Negative);
    smoke(Benchmark::IV, Polarity::Positive);
}

#[test]
fn positive_mask_run_can_delete_masks() {
    // a crimper-style run with many positive masks and a workable SED
    // threshold sheds unloaded masks over the steps
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = benchmark_config(Benchmark::IV, 0.2, Polarity::Positive).unwrap();
    cfg.sls.step_evals = 15;
    cfg.sls.max_steps = 6;
    cfg.sls.total_eval_budget = 90;
    let before = cfg.masks.nx.unwrap() * cfg.masks.ny.unwrap();
    let arts = pipeline::run_to_dir(&cfg, dir.path()).unwrap();
    let after = arts.outcome.masks.masks.len();
    assert_eq!(before - after, arts.outcome.masks_deleted);
    assert!(after >= 1);
    // deletion only ever reduces the count
    assert!(after <= before);
}
