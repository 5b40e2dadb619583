use growfrag::analysis::{detect_limit_cycle, steady_states, Section};
use growfrag::eigen::{closed_form_moment, solve_perron};
use growfrag::figures::{figure2_params, figure3_params};
use growfrag::grid::Grid;
use growfrag::model::{derive_params, Kernel, Nonlinearity, PeriodicControl, Signal, DEFAULT_SEARCH_END};
use growfrag::reduced::{bernoulli_w, moments_reduced, Forcing, ReducedParams, Rk4, System};

fn catalog() -> Vec<(ReducedParams, Vec<f64>)> {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let mp = closed_form_moment(&pl, 2.0).unwrap();
    let f = Nonlinearity::ExpDecay { a: 2.0 };
    vec![
        (ReducedParams::new(pl, mp, System::Wz { f, p: 2.0 }).unwrap(), vec![0.3, 4.0]),
        (ReducedParams::new(pl, mp, System::Wz { f, p: 0.5 }).unwrap(), vec![3.0, 0.1]),
        (ReducedParams::new(pl, mp, System::WqDrift { f, p: 2.0 }).unwrap(), vec![2.0, 0.2]),
        (
            ReducedParams::new(pl, mp, System::WzPerturbed { f, p: 2.0, eps: Forcing::Exponential { eps0: 0.5, rate: 0.3 } })
                .unwrap(),
            vec![0.5, 1.0],
        ),
        (figure2_params().unwrap(), vec![0.9, 0.5]),
        (figure3_params(4.0).unwrap(), vec![1.0, 1.2, 0.4]),
        (
            ReducedParams::new(pl, mp, System::WOde { v1: Signal::sine(1.0, 0.9, 1.0), v2: Signal::sine(1.0, 0.9, 0.7) }).unwrap(),
            vec![5.0, 0.0],
        ),
    ]
}

#[test]
fn catalog_systems_stay_in_the_open_orthant() {
    for (params, y0) in catalog() {
        let traj = params.integrate(&y0, 0.0, 100.0, Rk4::default().stride(50)).unwrap();
        let positive = params.id().positive();
        for y in &traj.y {
            assert!(y[..positive].iter().all(|v| *v > 0.0 && v.is_finite()), "{}: {y:?}", params.id().name());
        }
    }
}

#[test]
fn equilibria_zero_the_right_hand_side() {
    for params in [figure2_params().unwrap(), figure3_params(4.0).unwrap(), figure3_params(2.0).unwrap()] {
        let report = steady_states(&params, DEFAULT_SEARCH_END).unwrap();
        assert!(!report.equilibria.is_empty());
        for eq in &report.equilibria {
            let mut out = vec![0.0; eq.y.len()];
            params.eval(0.0, &eq.y, &mut out);
            let scale = eq.y.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            assert!(out.iter().all(|d| d.abs() <= 1e-9 * scale), "{out:?}");
        }
    }
}

#[test]
fn w_ode_without_supply_decays_harmonically() {
    let pl = derive_params(1.3, 1.0, 1.0, 0.5, 1.0).unwrap();
    let (v1, v2) = (Signal::constant(1.0), Signal::constant(0.0));
    let params = ReducedParams::new(pl, 1.0, System::WOde { v1: v1.clone(), v2: v2.clone() }).unwrap();
    let w0 = 2.5;
    let traj = params.integrate(&[w0, 0.0], 0.0, 20.0, Rk4::with_dt(1e-3).stride(100)).unwrap();
    for (t, y) in traj.t.iter().zip(&traj.y) {
        let exact = w0 / (1.0 + w0 * pl.tau() * t / pl.k());
        assert!((y[0] - exact).abs() < 1e-10, "t {t}");
        assert!((bernoulli_w(w0, &v1, &v2, *t, &pl).unwrap() - exact).abs() < 1e-9);
    }
}

#[test]
fn decaying_forcing_does_not_move_the_cycle() {
    let plain = figure2_params().unwrap();
    let System::Wq { f, g, p, q } = plain.system.clone() else { unreachable!() };
    let forced = ReducedParams::new(
        plain.powerlaw,
        plain.mp,
        System::WqPerturbed {
            f,
            g,
            p,
            q,
            eps_p: Forcing::Exponential { eps0: 0.2, rate: 1.0 },
            eps_q: Forcing::Exponential { eps0: -0.2, rate: 0.5 },
        },
    )
    .unwrap();
    let eq = steady_states(&plain, DEFAULT_SEARCH_END).unwrap().equilibria[0].y.clone();
    let y0 = [1.05 * eq[0], eq[1]];
    let rk = Rk4::with_dt(1e-3).stride(10);
    let section = Section::new(0, eq[0], 200.0);
    let a = detect_limit_cycle(&plain.integrate(&y0, 0.0, 400.0, rk).unwrap(), section);
    let b = detect_limit_cycle(&forced.integrate(&y0, 0.0, 400.0, rk).unwrap(), section);
    assert!(a.detected && b.detected);
    assert!((a.period - b.period).abs() <= 1e-2 * a.period, "{} vs {}", a.period, b.period);
    for (x, y) in a.amplitude.iter().zip(&b.amplitude) {
        assert!((x - y).abs() <= 1e-2 * x);
    }
}

#[test]
fn manifold_moments_match_the_closed_moment_system() {
    // nu = 0, gamma = 1: (M0, M1) obey a linear 2x2 system for any data
    let pl = derive_params(1.0, 0.0, 1.0, 1.0, 0.5).unwrap();
    // only M1[U] / M0[U] = Lambda / beta enters, with Lambda = sqrt(tau beta)
    let lambda = (pl.tau() * pl.beta()).sqrt();
    let moment = |b: f64| Some(if b == 0.0 { 1.0 } else { lambda / pl.beta() });
    let control = PeriodicControl::new(Signal::sine(1.0, 0.5, 1.0), Signal::sine(0.5, 0.3, 1.0)).unwrap();
    let w0 = 1.4;
    let rk = Rk4::with_dt(1e-3).stride(100);
    let m0 = moments_reduced(&pl, lambda, &control, w0, 0.0, moment, 5.0, rk).unwrap();
    let m1 = moments_reduced(&pl, lambda, &control, w0, 1.0, moment, 5.0, rk).unwrap();
    let up = ReducedParams::new(pl, 1.0, System::Up { control }).unwrap();
    let traj = up.integrate(&[m0.value[0], m1.value[0]], 0.0, 5.0, rk).unwrap();
    assert_eq!(traj.len(), m0.t.len());
    for i in 0..traj.len() {
        let (a, b) = (traj.y[i][0], traj.y[i][1]);
        assert!((a - m0.value[i]).abs() <= 1e-9 * a, "t {}: {a} vs {}", traj.t[i], m0.value[i]);
        assert!((b - m1.value[i]).abs() <= 1e-9 * b, "t {}: {b} vs {}", traj.t[i], m1.value[i]);
    }
}

#[test]
fn discrete_eigenpair_has_the_closed_moment_ratio() {
    let pl = derive_params(1.7, 0.0, 0.6, 1.0, 0.5).unwrap();
    let grid = Grid::auto(&pl, 2000, (1.0, 1.0)).unwrap();
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-10).unwrap();
    let lambda = (pl.tau() * pl.beta()).sqrt();
    assert!((ep.lambda - lambda).abs() <= 1e-3 * lambda);
    let ratio = ep.moment(1.0) / ep.moment(0.0);
    assert!((ratio - ep.lambda / pl.beta()).abs() <= 1e-3 * ratio, "{ratio}");
}
