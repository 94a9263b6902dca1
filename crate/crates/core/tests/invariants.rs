use nalgebra::DMatrix;
use stork::analysis::{
    empirical_order, real_stability_extent, stability_region_scan, ScanBounds, MIN_R_SQUARED,
};
use stork::fields::{
    make_gaussian_flow, make_gaussian_vp, make_linear_system, make_rotation, make_stiff_scalar, reference_solve,
    AnalyticProblem,
};
use stork::stepper::{solve_flow, Method, SolverConfig, TimeGrid};

fn problems() -> Vec<AnalyticProblem> {
    vec![
        make_stiff_scalar(-20.0),
        make_linear_system(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -2.0])).unwrap(),
        make_rotation(),
        make_gaussian_vp(vec![2.0, 0.0], 0.5).unwrap(),
        make_gaussian_flow(vec![1.0, -2.0], 0.5).unwrap(),
    ]
}

#[test]
fn reference_integrator_is_self_consistent() {
    for p in problems() {
        let v = p.velocity();
        let x0 = p.initial_state();
        let a = reference_solve(&*v, x0, p.t_start(), p.t_end(), 10_000);
        let b = reference_solve(&*v, x0, p.t_start(), p.t_end(), 20_000);
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() / scale < 1e-8, "{}", p.name());
        }
        let exact = p.exact(x0, p.t_start(), p.t_end());
        for (x, y) in b.iter().zip(&exact) {
            assert!((x - y).abs() / scale < 1e-8, "{} oracle", p.name());
        }
    }
}

#[test]
fn rkg2_extent_floor_for_every_stage_count() {
    for s in 2..=100usize {
        let got = real_stability_extent(Method::Stork2, s).unwrap();
        let need = 0.9 * ((s + 4) * (s - 1)) as f64 / 3.0;
        assert!(got >= need, "s={s}: {got} < {need}");
    }
}

#[test]
fn scan_fraction_settles_under_refinement() {
    let bounds = ScanBounds::new(-20.0, 2.0, -6.0, 6.0).unwrap();
    let coarse = stability_region_scan(Method::Stork2, 5, bounds, 400, 400).unwrap();
    let fine = stability_region_scan(Method::Stork2, 5, bounds, 800, 800).unwrap();
    let (a, b) = (coarse.inside_fraction(), fine.inside_fraction());
    assert!(((a - b) / b).abs() < 0.01, "{a} vs {b}");
}

#[test]
fn orders_on_a_linear_system() {
    let p = make_linear_system(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -2.0])).unwrap();
    // taylor-mode stencils are still pre-asymptotic below about 80 steps here
    let coarse = [10, 20, 40, 80];
    let fine = [80, 160, 320, 640];
    let checks = [
        (SolverConfig::stork2(5).exact(), &coarse, 1.8, f64::INFINITY),
        (SolverConfig::stork4(9).exact(), &coarse, 3.7, f64::INFINITY),
        (SolverConfig::stork2(5), &fine, 1.8, 2.6),
        (SolverConfig::stork4(9), &fine, 1.8, 2.6),
    ];
    for (cfg, counts, lo, hi) in checks {
        let r = empirical_order(&p, &cfg, counts).unwrap();
        let order = r.fitted_order.unwrap();
        assert!(order >= lo && order <= hi, "{}: {order}", r.label);
        assert!(r.r_squared.unwrap() >= MIN_R_SQUARED, "{}: r2 {:?}", r.label, r.r_squared);
        assert!(!r.flagged);
    }
}

#[test]
fn degree_substitution_is_recorded() {
    let p = make_rotation();
    let grid = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
    let r = solve_flow(p.initial_state(), &grid, &p.velocity(), &SolverConfig::stork4(67)).unwrap();
    assert_eq!(r.substituted_degree, Some(68));
    let err = solve_flow(
        p.initial_state(),
        &grid,
        &p.velocity(),
        &SolverConfig::stork4(67).with_strict_degree(true),
    )
    .unwrap_err();
    assert!(err.to_string().contains("64 or 68"), "{err}");
}
