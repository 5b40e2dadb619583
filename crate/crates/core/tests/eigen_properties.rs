use growfrag::eigen::{lambda_vr, solve_perron};
use growfrag::grid::Grid;
use growfrag::model::{derive_params, Kernel, PowerLaw};

fn lambda(pl: &PowerLaw, n: usize) -> f64 {
    let grid = Grid::auto(pl, n, (1.0, 1.0)).unwrap();
    solve_perron(pl, &Kernel::constant_two(), &grid, 1e-10).unwrap().lambda
}

#[test]
fn refinement_is_at_least_first_order() {
    // nu = 0, gamma = 1 has the closed form sqrt(tau beta)
    let pl = derive_params(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
    let e: Vec<f64> = [250, 500, 1000].iter().map(|n| (lambda(&pl, *n) - 1.0).abs()).collect();
    assert!(e[1] <= 0.6 * e[0] && e[2] <= 0.6 * e[1], "{e:?}");
    // no closed form: successive differences shrink at least like h
    let pl = derive_params(1.0, 0.5, 1.0, 1.5, 0.0).unwrap();
    let l: Vec<f64> = [250, 500, 1000].iter().map(|n| lambda(&pl, *n)).collect();
    let (d1, d2) = ((l[1] - l[0]).abs(), (l[2] - l[1]).abs());
    assert!(d2 <= 0.6 * d1, "{l:?}");
    let richardson = 2.0 * l[2] - l[1];
    assert!((richardson - l[2]).abs() < 1e-2 * richardson);
}

#[test]
fn dilated_coefficients_follow_the_self_similar_law() {
    for (nu, gamma) in [(1.0, 1.0), (0.0, 1.0), (1.0, 0.5)] {
        let base = derive_params(1.0, nu, 1.0, gamma, 0.0).unwrap();
        let l1 = lambda(&base, 1000);
        for v in [0.5, 2.0] {
            let scaled = base.with_tau(v * base.tau()).unwrap();
            let lv = lambda(&scaled, 1000);
            let law = lambda_vr(l1, v, 0.0, &base).unwrap();
            assert!((lv - law).abs() <= 2e-3 * law, "nu {nu} gamma {gamma} V {v}: {lv} vs {law}");
        }
    }
}

#[test]
fn adjoint_eigenvectors_match_closed_forms() {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
    let grid = Grid::auto(&pl, 2000, (1.0, 1.0)).unwrap();
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-8).unwrap();
    let m1 = ep.moment(1.0);
    for (x, p) in grid.x().iter().zip(&ep.phi) {
        if *x > 1e-3 && *x < 10.0 {
            assert!((p - x / m1).abs() <= 1e-3 * x / m1, "x {x}: {p}");
        }
    }
    assert!((ep.adjoint_lambda - ep.lambda).abs() <= 1e-7);

    let pl = derive_params(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
    let grid = Grid::auto(&pl, 2000, (1.0, 1.0)).unwrap();
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-8).unwrap();
    for (x, p) in grid.x().iter().zip(&ep.phi) {
        if *x < 10.0 {
            let exact = 0.5 * (1.0 + x);
            assert!((p - exact).abs() <= 1e-3 * exact, "x {x}: {p}");
        }
    }
}

#[test]
fn eigenpair_normalisations() {
    let pl = derive_params(2.0, 1.0, 0.7, 0.8, 0.0).unwrap();
    let grid = Grid::auto(&pl, 800, (1.0, 1.0)).unwrap();
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-8).unwrap();
    assert!(ep.u.iter().all(|u| *u >= 0.0) && ep.phi.iter().all(|p| *p >= 0.0));
    assert!((grid.integrate(&ep.u) - 1.0).abs() < 1e-12);
    assert!((grid.dot(&ep.u, &ep.phi) - 1.0).abs() < 1e-12);
    assert!(ep.residual <= 1e-8);
}
