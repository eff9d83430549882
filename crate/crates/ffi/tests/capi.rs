use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use priorsearch_ffi::*;

fn last_error() -> String {
    let p = ps_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn prior(dist: &str, size: usize) -> *mut PsPrior {
    let dist = CString::new(dist).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { ps_prior_discretize(dist.as_ptr(), size, &mut out) },
        PsStatus::Ok
    );
    assert!(!out.is_null());
    out
}

fn small_config() -> PsOptimizerConfig {
    PsOptimizerConfig {
        steps: 4,
        ..ps_optimizer_config_default()
    }
}

#[test]
fn prior_round_trip() {
    let p = prior("power:2", 500);
    unsafe {
        assert_eq!(ps_prior_len(p), 500);
        let mut probs = vec![0.0; 500];
        assert_eq!(ps_prior_probabilities(p, probs.as_mut_ptr(), probs.len()), PsStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs.windows(2).all(|w| w[0] <= w[1]));

        let mut shuffled = ptr::null_mut();
        assert_eq!(ps_prior_permute(p, 9, &mut shuffled), PsStatus::Ok);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(ps_prior_stddev(p, true, &mut a), PsStatus::Ok);
        assert_eq!(ps_prior_stddev(shuffled, true, &mut b), PsStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(ps_prior_stddev(shuffled, false, &mut b), PsStatus::Ok);
        assert!(b > a);

        ps_prior_free(shuffled);
        ps_prior_free(p);
    }
}

#[test]
fn weights_are_normalized() {
    let w = [3.0, 1.0];
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(ps_prior_from_weights(w.as_ptr(), w.len(), &mut p), PsStatus::Ok);
        let mut probs = [0.0; 2];
        assert_eq!(ps_prior_probabilities(p, probs.as_mut_ptr(), 2), PsStatus::Ok);
        assert_eq!(probs, [0.75, 0.25]);
        ps_prior_free(p);
    }
}

#[test]
fn failures_report_status_and_message() {
    unsafe {
        let mut p = ptr::null_mut();
        let bad = CString::new("gamma:2").unwrap();
        assert_eq!(ps_prior_discretize(bad.as_ptr(), 10, &mut p), PsStatus::InvalidArgument);
        assert!(p.is_null());
        assert!(last_error().contains("gamma"));

        assert_eq!(ps_prior_discretize(ptr::null(), 10, &mut p), PsStatus::NullPointer);
        assert!(last_error().contains("dist"));

        let w = [-1.0, 2.0];
        assert_eq!(ps_prior_from_weights(w.as_ptr(), 2, &mut p), PsStatus::InvalidArgument);

        let q = prior("uniform", 8);
        let mut short = [0.0; 3];
        assert_eq!(
            ps_prior_probabilities(q, short.as_mut_ptr(), 3),
            PsStatus::InvalidArgument
        );
        // success clears the previous message
        assert_eq!(ps_prior_probabilities(q, ptr::null_mut(), 8), PsStatus::NullPointer);
        let mut s = 0.0;
        assert_eq!(ps_prior_stddev(q, false, &mut s), PsStatus::Ok);
        assert!(ps_last_error().is_null());

        let missing = CString::new("/nonexistent/plan.txt").unwrap();
        let mut plan = ptr::null_mut();
        assert_eq!(ps_plan_read(missing.as_ptr(), &mut plan), PsStatus::Io);

        let config = PsOptimizerConfig {
            steps: 0,
            ..ps_optimizer_config_default()
        };
        let mut result = ptr::null_mut();
        assert_eq!(ps_optimize(q, &config, &mut result), PsStatus::InvalidArgument);
        assert!(result.is_null());
        ps_prior_free(q);
    }
    unsafe {
        assert_eq!(ps_prior_len(ptr::null()), 0);
        ps_prior_free(ptr::null_mut());
    }
}

#[test]
fn optimize_and_evaluate() {
    let p = prior("power:3", 2000);
    let config = small_config();
    unsafe {
        let mut result = ptr::null_mut();
        assert_eq!(ps_optimize(p, &config, &mut result), PsStatus::Ok);
        let mut summary = PsOptimizationSummary::default();
        assert_eq!(ps_optimization_summary(result, &mut summary), PsStatus::Ok);
        assert!(summary.converged);
        assert!(!summary.concentrated_prior);
        assert!(summary.max_constraint_residual < 1e-9);
        assert!(summary.max_stationarity_residual < 1e-6);
        assert_eq!(summary.max_complementarity_residual, 0.0);
        let grover = std::f64::consts::FRAC_PI_4 * 2000f64.sqrt();
        assert!(summary.expected_cost < grover);
        assert!(
            (ps_improvement(summary.expected_cost, 2000) - 100.0 * (1.0 - summary.expected_cost / grover)).abs() < 1e-9
        );

        let mut plan = ptr::null_mut();
        assert_eq!(ps_optimization_plan(result, &mut plan), PsStatus::Ok);
        assert_eq!(ps_plan_steps(plan), 4);
        assert_eq!(ps_plan_size(plan), 2000);
        let mut m = [0.0; 3];
        assert_eq!(ps_plan_iterations(plan, m.as_mut_ptr(), 3), PsStatus::Ok);
        assert!(m.iter().all(|&x| x > 0.0));
        let mut lambda = [0.0; 3];
        assert_eq!(ps_plan_multipliers(plan, lambda.as_mut_ptr(), 3), PsStatus::Ok);
        assert!(lambda.iter().all(|&x| x > 0.0));
        let mut last = 0.0;
        assert_eq!(ps_plan_final_iterations(plan, &mut last), PsStatus::Ok);
        assert!((last - grover).abs() < 1e-9);

        let mut e = 0.0;
        assert_eq!(ps_plan_expected_cost(plan, p, &mut e), PsStatus::Ok);
        assert!((e - summary.expected_cost).abs() <= 1e-12 * e);

        let mut sim = PsSimulation::default();
        assert_eq!(ps_simulate(plan, p, 20_000, 3, false, &mut sim), PsStatus::Ok);
        assert_eq!(sim.trials, 20_000);
        assert_eq!(sim.analytic_e, e);
        assert!((sim.mean_iterations - e).abs() < 5.0 * sim.stderr);
        let mut again = PsSimulation::default();
        assert_eq!(ps_simulate(plan, p, 20_000, 3, false, &mut again), PsStatus::Ok);
        assert_eq!(sim.mean_iterations, again.mean_iterations);
        assert_eq!(ps_simulate(plan, p, 20_000, 3, true, &mut again), PsStatus::Ok);

        let other = prior("uniform", 10);
        assert_eq!(ps_plan_expected_cost(plan, other, &mut e), PsStatus::InvalidArgument);

        ps_prior_free(other);
        ps_plan_free(plan);
        ps_optimization_free(result);
        ps_prior_free(p);
    }
}

#[test]
fn null_config_uses_defaults() {
    let p = prior("exp:30", 300);
    unsafe {
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        let defaults = ps_optimizer_config_default();
        assert_eq!(ps_optimize(p, ptr::null(), &mut a), PsStatus::Ok);
        assert_eq!(ps_optimize(p, &defaults, &mut b), PsStatus::Ok);
        let (mut sa, mut sb) = (PsOptimizationSummary::default(), PsOptimizationSummary::default());
        ps_optimization_summary(a, &mut sa);
        ps_optimization_summary(b, &mut sb);
        assert_eq!(sa.expected_cost, sb.expected_cost);
        assert_eq!(sa.outer_iterations, sb.outer_iterations);
        ps_optimization_free(a);
        ps_optimization_free(b);
        ps_prior_free(p);
    }
}

#[test]
fn plan_file_round_trip() {
    let p = prior("hnorm:18", 1000);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("plan.txt").to_str().unwrap()).unwrap();
    unsafe {
        let mut result = ptr::null_mut();
        assert_eq!(ps_optimize(p, &small_config(), &mut result), PsStatus::Ok);
        let mut plan = ptr::null_mut();
        ps_optimization_plan(result, &mut plan);
        assert_eq!(ps_plan_write(plan, path.as_ptr()), PsStatus::Ok);

        let mut loaded = ptr::null_mut();
        assert_eq!(ps_plan_read(path.as_ptr(), &mut loaded), PsStatus::Ok);
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        ps_plan_iterations(plan, a.as_mut_ptr(), 3);
        ps_plan_iterations(loaded, b.as_mut_ptr(), 3);
        assert_eq!(a, b);
        let (mut ea, mut eb) = (0.0, 0.0);
        ps_plan_expected_cost(plan, p, &mut ea);
        ps_plan_expected_cost(loaded, p, &mut eb);
        assert_eq!(ea, eb);

        ps_plan_free(loaded);
        ps_plan_free(plan);
        ps_optimization_free(result);
        ps_prior_free(p);
    }
}

#[test]
fn grover_closed_form() {
    let a = 1.0 / 1024f64.sqrt();
    assert!((ps_grover_success_probability(a, 0) - 1.0 / 1024.0).abs() < 1e-15);
    assert!(ps_grover_success_probability(a, 25) > 0.999);
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/priorsearch.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ps_last_error",
        "ps_prior_discretize",
        "ps_optimize",
        "ps_optimization_summary",
        "ps_plan_read",
        "ps_simulate",
        "ps_plan_free",
        "typedef struct PsPrior PsPrior",
        "PS_STATUS_NULL_POINTER = 1",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }

    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping header compile");
        return;
    };
    assert!(probe.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"priorsearch.h\"\nint main(void) {\n  PsOptimizerConfig c = ps_optimizer_config_default();\n  return c.steps == 0;\n}\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
