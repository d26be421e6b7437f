//! End-to-end acceptance checks. Each test runs the relevant experiment
//! with its default configuration, prints one `PASS`/`FAIL` line, and fails
//! if any of the experiment's verdicts for that criterion failed.

use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use wavemaps::config::{Experiment, RunConfig};
use wavemaps::experiments::{manifest_text, run};
use wavemaps::report::Report;

struct Outcome {
    report: Report,
    seconds: f64,
}

/// Runtime budgets are per experiment, so experiments run one at a time.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn execute(experiment: Experiment, out: &Path) -> Outcome {
    let cfg = RunConfig::new(experiment);
    let _guard = serial();
    let t0 = Instant::now();
    let report = run(&cfg, out, 0).unwrap_or_else(|e| panic!("{experiment} failed to run: {e}"));
    Outcome { report, seconds: t0.elapsed().as_secs_f64() }
}

fn fresh(experiment: Experiment) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    execute(experiment, dir.path())
}

/// The stability run is shared by two criteria and is by far the slowest.
fn stability() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| fresh(Experiment::StabilityRun))
}

/// Print the criterion line and every underlying verdict, then assert.
fn verdict(number: usize, title: &str, outcome: &Outcome, names: &[&str], budget_s: f64) {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in names {
        let matches: Vec<_> = outcome.report.checks.iter().filter(|c| c.name.ends_with(name)).collect();
        assert!(!matches.is_empty(), "no verdict named *{name}");
        for c in matches {
            ok &= c.passed;
            detail.push(format!(
                "    {} {:<36} {:>24.16e}  ({})",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.value,
                c.limit
            ));
        }
    }
    let in_time = outcome.seconds <= budget_s;
    println!(
        "{} criterion {number:>2}: {title} [{:.1} s of {budget_s} s]",
        if ok && in_time { "PASS" } else { "FAIL" },
        outcome.seconds
    );
    for line in detail {
        println!("{line}");
    }
    assert!(ok, "criterion {number} ({title}) has failing verdicts");
    assert!(in_time, "criterion {number} ({title}) exceeded its {budget_s} s budget");
}

#[test]
fn criterion_01_exact_solution_residuals() {
    let o = fresh(Experiment::ExactResiduals);
    verdict(1, "exact-solution residuals converge at second order", &o, &["_order_256_512", "_order_512_1024"], 10.0);
}

#[test]
fn criterion_02_gauge_eigenpair() {
    let o = fresh(Experiment::SpectrumScan);
    verdict(2, "gauge mode is a discrete eigenvector", &o, &["gauge_residual", "gauge_residual_order"], 5.0);
}

#[test]
fn criterion_03_spectrum() {
    let o = fresh(Experiment::SpectrumScan);
    verdict(
        3,
        "single unstable eigenvalue at 1",
        &o,
        &["eigenvalue_count", "eigenvalue_distance_to_one", "eigenfunction_error"],
        60.0,
    );
}

#[test]
fn criterion_04_transport_rates() {
    let o = fresh(Experiment::TransportDecay);
    verdict(4, "free transport growth and energy decay rates", &o, &["growth_rate", "decay_rate_l1", "decay_rate_l2"], 30.0);
}

#[test]
fn criterion_05_descent_roundtrip() {
    let o = fresh(Experiment::DescentRoundtrip);
    verdict(
        5,
        "descent round trip, intertwining, norm equivalence",
        &o,
        &["roundtrip_error_over_discretization", "intertwining_order", "norm_equivalence_constant"],
        30.0,
    );
}

#[test]
fn criterion_06_stability_run() {
    verdict(
        6,
        "perturbed blowup selects T and decays",
        stability(),
        &["_selected_T_offset", "_decay_rate", "_fit_residual", "_rate_over_gap"],
        600.0,
    );
}

#[test]
fn criterion_07_finite_speed() {
    // Shares the stability run; the finite-speed stage is timed separately.
    let o = stability();
    let stage = o.report.timing.iter().find(|(k, _)| k == "finite_speed").map_or(f64::NAN, |t| t.1);
    let view = Outcome { report: o.report.clone(), seconds: stage };
    verdict(7, "finite speed of propagation", &view, &["finite_speed_difference", "outside_patch_excess"], 60.0);
}

#[test]
fn criterion_08_energy_monotonicity() {
    let o = fresh(Experiment::EnergyMonotonicity);
    verdict(8, "energy is non-increasing; embedding inequality", &o, &["energy_max_relative_increase", "embedding_ratio"], 30.0);
}

#[test]
fn criterion_09_nonlinearity() {
    let o = fresh(Experiment::ExactResiduals);
    verdict(9, "nonlinearity vanishes at zero and scales quadratically", &o, &["nonlinearity_at_zero", "nonlinearity_quadratic_spread"], 5.0);
}

#[test]
fn criterion_10_determinism() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut same = true;
    for exp in [Experiment::ExactResiduals, Experiment::DescentRoundtrip, Experiment::SpectrumScan] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = RunConfig::new(exp);
        let ra = run(&cfg, a.path(), 1).unwrap();
        let rb = run(&cfg, b.path(), 0).unwrap();
        let fa = std::fs::read(a.path().join("manifest.json")).unwrap();
        let fb = std::fs::read(b.path().join("manifest.json")).unwrap();
        let equal = fa == fb && manifest_text(&cfg, &ra) == manifest_text(&cfg, &rb);
        println!("    {} {exp}: {} bytes", if equal { "ok  " } else { "FAIL" }, fa.len());
        same &= equal;
    }
    println!(
        "{} criterion 10: repeated runs give byte-identical manifests [{:.1} s]",
        if same { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64()
    );
    assert!(same);
}
