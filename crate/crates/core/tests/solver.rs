mod common;

use common::AlwaysFeasible;
use nalgebra::{DMatrix, DVector};
use snscp::geometry::{snap_to_zero, step_norm};
use snscp::problem::{make_counterexample, make_norm_opt, NormOptParams, Problem};
use snscp::solver::{
    fallback_direction, line_search, newton_direction, rate_ratios, select_t, write_trace_csv,
    SolveStatus, SolverConfig, TRACE_HEADER,
};
use snscp::stationarity::{
    active_set_of, check_kkt, newton_matrix, residual_f, ActiveSet, PrimalDualPoint,
};
use snscp::{solve, Dims};

fn norm_opt(k: usize, m: usize, n: usize, b: f64, seed: u64) -> snscp::NormOptInstance {
    let mut params = NormOptParams::new(k, m, n);
    params.b = b;
    make_norm_opt(params, seed).unwrap()
}

#[test]
fn always_feasible_quadratic_converges_to_center() {
    let c = DVector::from_vec(vec![1.0, -2.0, 3.0]);
    let p = AlwaysFeasible {
        c: c.clone(),
        m: 2,
        n: 4,
    };
    let result = solve(&p, &SolverConfig::new(1), PrimalDualPoint::zeros(p.dims())).unwrap();
    assert_eq!(result.status, SolveStatus::Converged);
    assert!(result.iterations() <= 2);
    assert!((&result.point.x - &c).norm() < 1e-12);
    assert_eq!(result.point.w, DMatrix::zeros(2, 4));
}

#[test]
fn newton_direction_for_unconstrained_quadratic() {
    let c = DVector::from_vec(vec![1.0, 2.0]);
    let p = AlwaysFeasible {
        c: c.clone(),
        m: 1,
        n: 3,
    };
    let x = DVector::from_vec(vec![-1.0, 0.5]);
    let w = DMatrix::from_row_slice(1, 3, &[0.3, -0.2, 1.0]);
    let point = PrimalDualPoint::new(x.clone(), w.clone()).unwrap();
    let v = ActiveSet::empty(1, 3);
    let d = newton_direction(&p, &point, &p.constraints(&x), &v, 0.01, 1e-12).unwrap();
    assert!((d.dx - (&c - &x)).norm() < 1e-12);
    assert_eq!(d.dw, -w);
}

#[test]
fn newton_direction_solves_full_system() {
    let p = norm_opt(4, 2, 5, 3.0, 7);
    let x = DVector::from_vec(vec![0.8, 1.1, 0.4, 0.9]);
    let w = DMatrix::from_fn(2, 5, |m, n| 0.1 * (m + 2 * n) as f64 - 0.3);
    let point = PrimalDualPoint::new(x.clone(), w).unwrap();
    let v = ActiveSet::new(vec![(0, 1), (1, 1), (0, 3), (1, 4)], 2, 5).unwrap();
    let mu = 1e-3;
    let d = newton_direction(&p, &point, &p.constraints(&x), &v, mu, 1e-12).unwrap();
    let full = newton_matrix(&p, &point, &v, mu);
    let rhs = -residual_f(&p, &point, &v);
    let lhs = full * d.to_block(&v);
    assert!((lhs - &rhs).norm() <= 1e-8 * (1.0 + rhs.norm()));
}

#[test]
fn singular_system_is_reported() {
    // Θ = 0 with V = ∅ and μ = 0.
    let p = make_counterexample();
    let x = DVector::from_vec(vec![0.0, 0.0]);
    let point = PrimalDualPoint::from_x(x.clone(), p.dims());
    let v = ActiveSet::empty(1, 2);
    assert!(newton_direction(&p, &point, &p.constraints(&x), &v, 0.0, 1e-12).is_none());
}

#[test]
fn fallback_is_negative_residual() {
    let p = norm_opt(3, 1, 4, 2.0, 3);
    let x = DVector::from_vec(vec![0.5, 0.2, 0.9]);
    let point = PrimalDualPoint::new(x.clone(), DMatrix::from_element(1, 4, 0.25)).unwrap();
    let v = ActiveSet::new(vec![(0, 0), (0, 2)], 1, 4).unwrap();
    let f = residual_f(&p, &point, &v);
    let d = fallback_direction(&p, &point, &p.constraints(&x), &v);
    let block = d.to_block(&v);
    assert!((block.dot(&f) + f.norm_squared()).abs() < 1e-12);
    assert!((block.norm() - f.norm()).abs() < 1e-12);
}

#[test]
fn line_search_cases() {
    let p = norm_opt(2, 1, 6, 1.0, 1);
    let v = ActiveSet::empty(1, 6);
    let x = DVector::zeros(2);
    let zero = DVector::zeros(2);
    let ls = line_search(&p, &x, &zero, 1, 0.0, 0.5, 50, 0.0, &v);
    assert_eq!((ls.t, ls.alpha, ls.stalled), (0, 1.0, false));

    // A bound of (γ + 1)s ≥ N accepts any step.
    let far = DVector::from_vec(vec![100.0, 100.0]);
    let ls = line_search(&p, &x, &far, 1, 10.0, 0.5, 50, 0.0, &v);
    assert_eq!(ls.t, 0);

    // A step that violates every column but is feasible after one halving.
    let q = snscp::NormOptInstance::from_samples(
        &(0..4)
            .map(|_| DMatrix::from_element(1, 1, 1.0))
            .collect::<Vec<_>>(),
        1.0,
        0.5,
        0.5,
    )
    .unwrap();
    let x = DVector::zeros(1);
    let d = DVector::from_element(1, 1.5);
    let ls = line_search(&q, &x, &d, 1, 0.0, 0.5, 50, 0.0, &ActiveSet::empty(1, 4));
    assert_eq!((ls.t, ls.alpha), (1, 0.5));
    assert_eq!(step_norm(&q.constraints(&(&x + &d * ls.alpha))), 0);

    // No admissible step within the cap.
    let d = DVector::from_element(1, 1e9);
    let ls = line_search(&q, &x, &d, 1, 0.0, 0.5, 3, 0.0, &ActiveSet::empty(1, 4));
    assert!(ls.stalled);
    assert_eq!((ls.t, ls.alpha), (3, 0.125));
}

#[test]
fn line_search_zero_threshold_only_applies_to_targets() {
    let q = snscp::NormOptInstance::from_samples(
        &(0..3)
            .map(|_| DMatrix::from_element(1, 1, 1.0))
            .collect::<Vec<_>>(),
        1.0,
        0.5,
        0.5,
    )
    .unwrap();
    // G = x² − 1 = 1e-6 in every column.
    let x = DVector::from_element(1, (1.0f64 + 1e-6).sqrt());
    let d = DVector::zeros(1);
    let all = ActiveSet::new(vec![(0, 0), (0, 1), (0, 2)], 1, 3).unwrap();
    let one = ActiveSet::new(vec![(0, 0)], 1, 3).unwrap();
    assert!(!line_search(&q, &x, &d, 1, 0.0, 0.5, 0, 1e-3, &all).stalled);
    assert!(line_search(&q, &x, &d, 1, 0.0, 0.5, 0, 1e-3, &one).stalled);
    assert!(line_search(&q, &x, &d, 1, 0.0, 0.5, 0, 0.0, &all).stalled);
}

#[test]
fn select_t_tie_break() {
    let lambda = DMatrix::from_row_slice(2, 4, &[2.0, 2.0, 0.0, -1.0, 0.0, -1.0, -2.0, -3.0]);
    assert_eq!(select_t(&lambda, 1), vec![1, 2]);
    assert_eq!(select_t(&lambda, 2), vec![2]);
    assert_eq!(select_t(&lambda, 5), vec![2]);
}

#[test]
fn counterexample_reaches_a_better_stationary_point() {
    let p = make_counterexample();
    let result = solve(&p, &SolverConfig::new(1), PrimalDualPoint::zeros(p.dims())).unwrap();
    assert_eq!(
        result.status,
        SolveStatus::Converged,
        "{:?}",
        result.trace.last()
    );
    assert!(result.final_residual() < result.tol);
    assert!(result.final_report.satisfied, "{:?}", result.final_report);
    assert!(p.objective(&result.point.x) <= 1.0);
}

#[test]
fn norm_opt_run_properties() {
    let p = norm_opt(10, 1, 100, 10.0, 0);
    let cfg = SolverConfig::for_alpha(0.05, 100).unwrap();
    assert_eq!(cfg.s, 5);
    let result = solve(&p, &cfg, PrimalDualPoint::zeros(p.dims())).unwrap();
    assert_eq!(result.status, SolveStatus::Converged);
    assert!(
        result.final_report.satisfied,
        "{:?}",
        result.final_report.reason
    );
    assert_eq!(result.trace.len(), result.iterations() + 1);
    let last = result.trace.last().unwrap();
    assert!(last.step.is_none() && last.direction.is_none());

    // μ is nonincreasing and bounded by ρ‖F‖ after the first step.
    for pair in result.trace.windows(2) {
        assert!(pair[1].mu <= pair[0].mu);
        assert!(pair[1].mu <= cfg.rho * pair[1].residual + 1e-300);
    }
    // Every accepted iterate satisfies the line-search bound up to the zero threshold.
    let bound = ((cfg.gamma + 1.0) * cfg.s as f64 + 1e-9).floor() as usize;
    for r in &result.trace {
        assert!(
            r.violations <= bound + cfg.s,
            "iter {} has {} violations",
            r.iter,
            r.violations
        );
        if let Some(a) = r.step {
            let t = (a.ln() / cfg.pi.ln()).round();
            assert!((cfg.pi.powf(t) - a).abs() <= 1e-12 * a);
        }
    }
    // The converged point is feasible once entries at the halting tolerance count as zero.
    let g = snap_to_zero(&p.constraints(&result.point.x), result.tol);
    assert!(step_norm(&g) <= cfg.s);
    assert!(
        check_kkt(&p, &result.point.x, cfg.s, 10.0 * result.tol)
            .unwrap()
            .satisfied
    );
}

#[test]
fn identical_inputs_give_identical_traces() {
    let run = || {
        let p = norm_opt(8, 2, 40, 10.0, 21);
        let cfg = SolverConfig::for_alpha(0.1, 40).unwrap();
        let result = solve(&p, &cfg, PrimalDualPoint::zeros(p.dims())).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&result.trace, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.starts_with(TRACE_HEADER));
    let rows: Vec<&str> = a.lines().skip(1).collect();
    assert!(rows.iter().all(|r| r.split(',').count() == 7));
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert!(last[4].is_empty() && last[6].is_empty());
    assert!(rows[..rows.len() - 1]
        .iter()
        .all(|r| r.ends_with("newton") || r.ends_with("fallback")));
}

#[test]
fn rate_ratio_sequences() {
    let quadratic: Vec<f64> = (0..5).map(|l| 2f64.powf(-(2f64.powi(l)))).collect();
    assert!(rate_ratios(&quadratic)
        .iter()
        .all(|&(_, r)| (r - 1.0).abs() < 1e-12));
    let linear: Vec<f64> = (0..6).map(|l| 2f64.powi(-l)).collect();
    let ratios = rate_ratios(&linear);
    for (l, r) in ratios {
        assert!(
            (r - 2f64.powi(l as i32 - 1)).abs() < 1e-9 * r,
            "l = {l}, r = {r}"
        );
    }
}

#[test]
fn config_validation() {
    let mut cfg = SolverConfig::new(3);
    assert!(cfg.validate().is_ok());
    cfg.nu = 1.0;
    assert!(cfg.validate().is_err());
    assert!(SolverConfig::new(0).validate().is_err());
    assert!(SolverConfig::for_alpha(1.5, 10).is_err());
    let cfg = SolverConfig::for_alpha(0.01, 100).unwrap();
    assert_eq!((cfg.s, cfg.gamma), (1, 2.0));
    assert_eq!(cfg.tolerance(Dims::new(10, 1, 100).unwrap()), 1e-9 * 1000.0);
    let p = make_counterexample();
    let bad_start = PrimalDualPoint::zeros(Dims::new(3, 1, 2).unwrap());
    assert!(solve(&p, &SolverConfig::new(1), bad_start).is_err());
}

#[test]
fn active_set_of_counts_nonnegative_entries() {
    let lambda = DMatrix::from_row_slice(2, 3, &[0.0, -1.0, 2.0, 1.0, 0.0, -0.5]);
    let v = active_set_of(&lambda, &[2, 0]);
    assert_eq!(v.pairs(), &[(0, 0), (1, 0), (0, 2)]);
}
