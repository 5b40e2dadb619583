use growfrag::eigen::solve_perron;
use growfrag::grid::Grid;
use growfrag::model::{derive_params, kernel_moment, Kernel, PeriodicControl, Signal};
use growfrag::pde::{
    build_operator, run, step, DiagnosticsConfig, InitialCondition, Recorder, Scenario, SizeState,
    DIAGNOSTIC_COLUMNS,
};

fn scenario(nu: f64, gamma: f64, mu: f64, n: usize) -> Scenario {
    let pl = derive_params(1.0, nu, 1.0, gamma, mu).unwrap();
    let grid = Grid::auto(&pl, n, (0.5, 2.0)).unwrap();
    let control = PeriodicControl::new(Signal::sine(1.0, 0.4, 1.0), Signal::fourier(1.0, 0.8, vec![0.2], vec![]).unwrap()).unwrap();
    Scenario::linear(build_operator(&grid, &pl, &Kernel::constant_two()), control).unwrap()
}

/// Relative defects of the moment identity for alpha = 0, 1, 2 after 200 steps.
fn moment_defects(nu: f64, gamma: f64, n: usize) -> [f64; 3] {
    let sc = scenario(nu, gamma, 0.7, n);
    let pl = *sc.operator().powerlaw();
    let grid = sc.grid().clone();
    let u0 = InitialCondition::LogNormal { mass: 1.0, center: 1.0, width: 0.4 }
        .sample(&grid, None, pl.k())
        .unwrap();
    let mut state = SizeState::new(u0);
    let dt = 0.5 * sc.auto_dt(&state).unwrap();
    for _ in 0..200 {
        state = step(&state, &sc, dt).unwrap();
    }
    let next = step(&state, &sc, dt).unwrap();
    let (v, death) = sc.rates(state.t, &state.u, None).unwrap();
    let mut out = [0.0; 3];
    for (slot, alpha) in out.iter_mut().zip([0.0, 1.0, 2.0]) {
        let c = kernel_moment(&Kernel::constant_two(), alpha).unwrap();
        let m = |a: f64| grid.moment(&state.u, a);
        let growth = if alpha == 0.0 { 0.0 } else { alpha * pl.tau() * v * m(alpha + nu - 1.0) };
        let rhs = growth + (c - 1.0) * pl.beta() * m(alpha + gamma) - death * m(alpha);
        let measured = (grid.moment(&next.u, alpha) - m(alpha)) / dt;
        *slot = (measured - rhs).abs() / rhs.abs().max(death * m(alpha));
    }
    out
}

#[test]
fn moment_identity_holds_along_linear_runs() {
    for (nu, gamma) in [(1.0, 1.0), (0.0, 1.0), (1.0, 0.5)] {
        let coarse = moment_defects(nu, gamma, 800);
        let fine = moment_defects(nu, gamma, 3200);
        // mass balance is exact in the discrete scheme
        assert!(coarse[1] < 1e-10 && fine[1] < 1e-10, "{coarse:?}");
        assert!(fine[0] < 1e-2, "nu {nu} gamma {gamma}: {fine:?}");
        // higher moments carry the O(h) quadrature error and must shrink with it
        assert!(fine[2] < 0.5 * coarse[2] && fine[2] < 2e-2, "nu {nu} gamma {gamma}: {coarse:?} {fine:?}");
    }
}

#[test]
fn dual_pairing_with_phi_is_conserved() {
    // GRE with H(x) = x reduces to <u, phi> e^{-Lambda t}
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
    let grid = Grid::auto(&pl, 400, (1.0, 1.0)).unwrap();
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-12).unwrap();
    let sc = Scenario::linear(
        build_operator(&grid, &pl, &Kernel::constant_two()),
        PeriodicControl::constant(1.0, 0.0).unwrap(),
    )
    .unwrap();
    let u0 = InitialCondition::Block { mass: 1.0, from: 0.2, to: 3.0 }.sample(&grid, None, 1.0).unwrap();
    let s0 = SizeState::new(u0.clone());
    let dt = sc.auto_dt(&s0).unwrap();
    let first = grid.dot(&u0, &ep.phi);
    let mut growth = 1.0;
    let mut worst: f64 = 0.0;
    let mut started = false;
    run(&sc, s0, 5.0, dt, |s, dt| {
        if started {
            growth *= 1.0 + dt * ep.adjoint_lambda;
        }
        started = true;
        worst = worst.max((grid.dot(&s.u, &ep.phi) / growth - first).abs() / first);
        Ok(())
    })
    .unwrap();
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn diagnostics_csv_has_fixed_columns() {
    let sc = scenario(1.0, 1.0, 0.5, 200);
    let grid = sc.grid().clone();
    let u0 = InitialCondition::LogNormal { mass: 1.0, center: 1.0, width: 0.3 }.sample(&grid, None, 1.0).unwrap();
    let s0 = SizeState::new(u0);
    let dt = sc.auto_dt(&s0).unwrap();
    let mut rec = Recorder::new(&sc, DiagnosticsConfig { stride: 5, ..DiagnosticsConfig::new(2.0, 1.0) }).until(0.5);
    run(&sc, s0, 0.5, dt, |s, dt| rec.observe(s, dt)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diag.csv");
    rec.diagnostics.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, DIAGNOSTIC_COLUMNS.join(","));
    assert_eq!(header, "t,M0,M1,Mp,Mq,norm_H,eps_p,dist_E,rho,gre");
    let last_t: f64 = text.lines().last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last_t - 0.5).abs() < 1e-12);
}

#[test]
fn parallel_and_sequential_runs_are_identical() {
    let sc = scenario(1.0, 1.0, 0.5, 300);
    let seq = Scenario::linear(
        sc.operator().clone().with_execution(growfrag::Execution::Sequential),
        PeriodicControl::constant(1.0, 0.5).unwrap(),
    )
    .unwrap();
    let par = Scenario::linear(
        sc.operator().clone().with_execution(growfrag::Execution::Parallel),
        PeriodicControl::constant(1.0, 0.5).unwrap(),
    )
    .unwrap();
    let u0 = InitialCondition::LogNormal { mass: 1.0, center: 1.0, width: 0.3 }.sample(sc.grid(), None, 1.0).unwrap();
    let dt = seq.auto_dt(&SizeState::new(u0.clone())).unwrap();
    let a = run(&seq, SizeState::new(u0.clone()), 1.0, dt, |_, _| Ok(())).unwrap();
    let b = run(&par, SizeState::new(u0), 1.0, dt, |_, _| Ok(())).unwrap();
    assert_eq!(a.u, b.u);
}
