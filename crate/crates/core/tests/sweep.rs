use spinmix::lattice::{LatticeSpec, Model};
use spinmix::sweep::{evaluate_point, linear_grid, locate_discontinuities, run_sweep, Measure, PointConfig, DEFAULT_REFINE_TOL};

fn chain(n: usize) -> PointConfig {
    PointConfig::new(LatticeSpec::chain(Model::J1J2Chain, n).unwrap())
}

#[test]
fn shared_purity_and_concurrence_jump_together() {
    let cfg = chain(8);
    let s = run_sweep(&cfg, &linear_grid(0.2, 0.35, 151).unwrap()).unwrap();
    let c = locate_discontinuities(&cfg, &s, Measure::Concurrence, None, DEFAULT_REFINE_TOL).unwrap();
    let sp = locate_discontinuities(&cfg, &s, Measure::Sp, None, DEFAULT_REFINE_TOL).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.len(), sp.len());
    for (a, b) in c.iter().zip(&sp) {
        assert!((a.location - b.location).abs() <= 2.0 * DEFAULT_REFINE_TOL, "{} vs {}", a.location, b.location);
    }
    assert!((c[0].location - 0.24630).abs() < 1e-5 && (c[1].location - 0.31248).abs() < 1e-5);
}

#[test]
fn refined_locations_do_not_depend_on_the_grid() {
    let cfg = chain(9);
    let coarse = run_sweep(&cfg, &linear_grid(0.2, 0.35, 151).unwrap()).unwrap();
    let fine = run_sweep(&cfg, &linear_grid(0.2, 0.35, 301).unwrap()).unwrap();
    let a = locate_discontinuities(&cfg, &coarse, Measure::Concurrence, None, DEFAULT_REFINE_TOL).unwrap();
    let b = locate_discontinuities(&cfg, &fine, Measure::Concurrence, None, DEFAULT_REFINE_TOL).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.location - y.location).abs() <= 2e-5);
    }
}

#[test]
fn results_are_seed_independent_and_reproducible() {
    for (model, x) in [(Model::J1J2Chain, 0.27), (Model::TfimChain, 0.95), (Model::TfimChain, 1.3)] {
        let mut cfg = PointConfig::new(LatticeSpec::chain(model, 10).unwrap());
        let a = evaluate_point(&cfg, x).unwrap();
        assert_eq!(a, evaluate_point(&cfg, x).unwrap());
        cfg.seed = 12345;
        cfg.solver.seed = 999;
        let b = evaluate_point(&cfg, x).unwrap();
        assert!((a.sp - b.sp).abs() < 1e-8 && (a.concurrence - b.concurrence).abs() < 1e-8, "{model} at {x}");
        assert_eq!(a.degeneracies, b.degeneracies);
    }
}
