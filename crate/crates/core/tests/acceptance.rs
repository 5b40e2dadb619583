//! Acceptance suite: one line per criterion, exit status 1 if any fails.
//! Tolerances are fixed here and never adjusted to make a run pass.

use std::path::Path;
use std::time::Instant;

use growfrag::analysis::prion_tmd;
use growfrag::eigen::{closed_form_u, rescale_eigenvector, solve_perron};
use growfrag::exec::Execution;
use growfrag::figures::{figure1, figure2, figure3, FigureOptions};
use growfrag::grid::Grid;
use growfrag::model::{derive_params, Kernel, Nonlinearity, PeriodicControl, PowerLaw, Signal};
use growfrag::pde::{
    build_operator, fit_decay_rate, run, Closure, DiagnosticsConfig, InitialCondition, Recorder, Scenario,
    SizeState,
};
use growfrag::reduced::{bernoulli_w, ReducedParams, Rk4, System, Trajectory};
use growfrag::suites::{floquet_suite, lyapunov_suite, LyapunovSuiteConfig};

type Outcome = Result<(bool, String), String>;

const EIGEN_CELLS: usize = 2000;
const BASELINE_CELLS: usize = 400;
const SEED: u64 = 20_240_601;

fn perron(pl: &PowerLaw, n: usize) -> Result<(growfrag::eigen::EigenPair, Grid), String> {
    let grid = Grid::auto(pl, n, (1.0, 1.0)).map_err(|e| e.to_string())?;
    let ep = solve_perron(pl, &Kernel::constant_two(), &grid, 1e-8).map_err(|e| e.to_string())?;
    Ok((ep, grid))
}

fn c1_eigenvalues() -> Outcome {
    let mut ok = true;
    let mut worst_rel: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for (tau, gamma) in [(1.0, 0.1), (1.0, 0.5), (1.0, 1.0), (1.0, 1.5), (1.0, 2.0), (2.5, 1.0), (0.5, 0.3)] {
        let start = Instant::now();
        let pl = derive_params(tau, 1.0, 1.0, gamma, 0.0).map_err(|e| e.to_string())?;
        let (ep, _) = perron(&pl, EIGEN_CELLS)?;
        let el = start.elapsed().as_secs_f64();
        let rel = (ep.lambda - tau).abs() / tau;
        worst_rel = worst_rel.max(rel);
        slowest = slowest.max(el);
        ok &= rel <= 1e-3 && el < 30.0;
    }
    let mut worst_nu0: f64 = 0.0;
    for (tau, beta) in [(1.0, 1.0), (2.0, 3.0), (0.5, 2.0)] {
        let start = Instant::now();
        let pl = derive_params(tau, 0.0, beta, 1.0, 0.0).map_err(|e| e.to_string())?;
        let (ep, _) = perron(&pl, EIGEN_CELLS)?;
        let el = start.elapsed().as_secs_f64();
        let dl = (ep.lambda - (tau * beta).sqrt()).abs();
        let dm = (ep.moment(1.0) - (tau / beta).sqrt()).abs();
        worst_nu0 = worst_nu0.max(dl).max(dm);
        slowest = slowest.max(el);
        ok &= dl <= 1e-3 && dm <= 1e-3 && el < 30.0;
    }
    Ok((
        ok,
        format!(
            "nu=1 max |L-tau|/tau = {worst_rel:.2e} (<= 1e-3); nu=0 max(|L-sqrt(tau beta)|, |M1-sqrt(tau/beta)|) = {worst_nu0:.2e} (<= 1e-3); slowest {slowest:.2}s (< 30s)"
        ),
    ))
}

fn c2_explicit_eigenvector() -> Outcome {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.0).map_err(|e| e.to_string())?;
    let (ep, grid) = perron(&pl, EIGEN_CELLS)?;
    let exact = closed_form_u(&pl, &Kernel::constant_two(), &grid).map_err(|e| e.to_string())?;
    let l1 = grid.l1_distance(&ep.u, &exact.values);
    Ok((l1 <= 1e-2, format!("||U - e^-x||_L1 = {l1:.3e} (<= 1e-2)")))
}

/// L1 gap at t = 2 between the direct run with `(V2, R2)` and the dilated,
/// time-changed run with `(1, 0)`.
fn transform_gap(n: usize) -> Result<f64, String> {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let grid = Grid::auto(&pl, n, (0.3, 3.0)).map_err(|e| e.to_string())?;
    let op = build_operator(&grid, &pl, &Kernel::constant_two());
    let v2 = Signal::sine(1.0, 0.5, 1.0);
    let r2 = Signal::fourier(1.0, 0.5, vec![0.3], vec![]).map_err(|e| e.to_string())?;
    let u0 = InitialCondition::LogNormal { mass: 1.0, center: 1.0, width: 0.3 }
        .sample(&grid, None, pl.k())
        .map_err(|e| e.to_string())?;
    let dt = 0.5 * op.admissible_dt(1.5, 0.8);
    let direct = Scenario::linear(op.clone(), PeriodicControl::new(v2.clone(), r2.clone()).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let a = run(&direct, SizeState::new(u0.clone()), 2.0, dt, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let wp = ReducedParams::new(pl, 1.0, System::WOde { v1: Signal::constant(1.0), v2 }).map_err(|e| e.to_string())?;
    let tr = wp.integrate(&[1.0, 0.0], 0.0, 2.0, Rk4::default()).map_err(|e| e.to_string())?;
    let (w, h) = (tr.last()[0], tr.last()[1]);
    let base = Scenario::linear(op, PeriodicControl::constant(1.0, 0.0).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let b = run(&base, SizeState::new(u0), h, dt, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let factor = (-pl.mu() * r2.integral(2.0)).exp();
    let moved: Vec<f64> = rescale_eigenvector(&b.u, w, pl.k(), &grid)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|x| x * factor)
        .collect();
    Ok(grid.l1_distance(&a.u, &moved))
}

fn c3_transform() -> Outcome {
    let gaps: Vec<f64> = [BASELINE_CELLS, 2 * BASELINE_CELLS, 4 * BASELINE_CELLS]
        .iter()
        .map(|n| transform_gap(*n))
        .collect::<Result<_, _>>()?;
    let ok = gaps[0] <= 5e-2 && gaps[1] < gaps[0] && gaps[2] < gaps[1];
    Ok((
        ok,
        format!(
            "L1 gap at t=2: n={BASELINE_CELLS} {:.3e} (<= 5e-2), 2n {:.3e}, 4n {:.3e} (decreasing)",
            gaps[0], gaps[1], gaps[2]
        ),
    ))
}

fn c4_bernoulli() -> Outcome {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.0).map_err(|e| e.to_string())?;
    let controls = [
        (Signal::constant(1.0), Signal::sine(1.0, 0.5, 1.0)),
        (
            Signal::fourier(2.0, 1.2, vec![0.2, 0.1], vec![0.1, -0.05]).map_err(|e| e.to_string())?,
            Signal::constant(0.8),
        ),
        (Signal::sine(1.5, 0.3, 0.7), Signal::fourier(1.3, 2.0, vec![0.4], vec![0.3]).map_err(|e| e.to_string())?),
    ];
    let mut worst: f64 = 0.0;
    for (v1, v2) in controls {
        let params = ReducedParams::new(pl, 1.0, System::WOde { v1: v1.clone(), v2: v2.clone() })
            .map_err(|e| e.to_string())?;
        let tr = params.integrate(&[1.0, 0.0], 0.0, 10.0, Rk4::default()).map_err(|e| e.to_string())?;
        let closed = bernoulli_w(1.0, &v1, &v2, 10.0, &pl).map_err(|e| e.to_string())?;
        worst = worst.max((closed - tr.last()[0]).abs());
    }
    Ok((worst <= 1e-6, format!("max |W_closed - W_rk4| at t=10 over 3 controls = {worst:.3e} (<= 1e-6)")))
}

fn c5_figure1() -> Outcome {
    let start = Instant::now();
    let fig = figure1(FigureOptions::default()).map_err(|e| e.to_string())?;
    let el = start.elapsed().as_secs_f64();
    let (f, n) = (&fig.focus, &fig.node);
    let ok = f.crossings >= 3
        && n.crossings_after_burn_in <= 1
        && f.final_gap <= 1e-8
        && n.final_gap <= 1e-8
        && (f.final_w - 1.0).abs() <= 1e-8
        && (n.final_w - 1.0).abs() <= 1e-8
        && el < 5.0;
    Ok((
        ok,
        format!(
            "p=0.5 crossings {} (>= 3, {}), p=2 crossings after t={} {} (<= 1, {}); |f_p(Z)-mu| = {:.1e}, {:.1e} (<= 1e-8); {el:.2}s (< 5s)",
            f.crossings,
            f.stability.classification.name(),
            n.burn_in,
            n.crossings_after_burn_in,
            n.stability.classification.name(),
            f.final_gap,
            n.final_gap
        ),
    ))
}

fn c6_lyapunov() -> Outcome {
    let rep = lyapunov_suite(SEED, LyapunovSuiteConfig::default(), Execution::Parallel).map_err(|e| e.to_string())?;
    let inc = rep.checks.iter().map(|c| c.max_increase).fold(f64::NEG_INFINITY, f64::max);
    let id = rep.checks.iter().map(|c| c.max_identity_error).fold(0.0, f64::max);
    Ok((
        rep.passed() && rep.checks.len() == 20,
        format!(
            "{} trajectories: max L increase {inc:.2e} (<= 1e-9), identity rel err {id:.2e} (<= 1e-10); omega inequality on 1e4 samples worst margin {:.2e} (>= 0)",
            rep.checks.len(),
            rep.inequality_worst
        ),
    ))
}

fn c7_figure2() -> Outcome {
    let fig = figure2(FigureOptions::default()).map_err(|e| e.to_string())?;
    let (t, d, _) = fig.stability.closed_form.ok_or("missing closed form")?;
    let ok = fig.cycle.detected && fig.cycle.period_drift < 0.01 && t > 0.0 && d > 0.0;
    Ok((
        ok,
        format!(
            "cycle detected={} period {:.4} drift {:.1e} (< 1e-2); T = {t:.4} (> 0), D = {d:.4} (> 0)",
            fig.cycle.detected, fig.cycle.period, fig.cycle.period_drift
        ),
    ))
}

fn c8_hopf() -> Outcome {
    let start = Instant::now();
    let fig = figure3(FigureOptions::default()).map_err(|e| e.to_string())?;
    let el = start.elapsed().as_secs_f64();
    let h = &fig.hopf;
    let psi = |p: f64| prion_tmd(&fig.params, &h.equilibrium, p).map(|(t, m, d)| m * t - d);
    let lo = psi(h.p0 - 1e-6).map_err(|e| e.to_string())?;
    let hi = psi(h.p0 + 1e-6).map_err(|e| e.to_string())?;
    let bracket = lo < 0.0 && hi > 0.0;
    let ok = h.psi0 < 0.0
        && h.psi_p1 > 0.0
        && h.concave
        && bracket
        && h.p0 > 0.0
        && h.p0 < h.p1
        && fig.cycle.detected
        && fig.below.classification.is_stable()
        && !fig.above.classification.is_stable()
        && el < 10.0;
    Ok((
        ok,
        format!(
            "psi(0) = {:.4} (< 0), psi(p1={:.4}) = {:.4} (> 0), psi'' = {:.3} (< 0); p0 = {:.6} bracketed to 1e-6 = {bracket}; p=4 cycle={} period {:.4}; p0-0.1 {}, p0+0.1 {}; {el:.2}s (< 10s)",
            h.psi0,
            h.p1,
            h.psi_p1,
            h.psi_second,
            h.p0,
            fig.cycle.detected,
            fig.cycle.period,
            fig.below.classification.name(),
            fig.above.classification.name()
        ),
    ))
}

fn c9_floquet() -> Outcome {
    let rep = floquet_suite(SEED, 5, 0.9, 1e-3, Execution::Parallel).map_err(|e| e.to_string())?;
    let s = &rep.sandwich;
    let (g1, g2) = (s.lambda_f - s.mean_lambda, s.lambda_of_means - s.lambda_f);
    let ok = rep.identity_cases.len() == 5 && rep.max_identity_error <= 1e-4 && g1 > 1e-6 && g2 > 1e-6;
    Ok((
        ok,
        format!(
            "nu=1 max |L_F - L(mean)| over 5 controls = {:.2e} (<= 1e-4); nu=0: mean L {:.6} < L_F {:.6} < L(mean) {:.6}, gaps {g1:.2e}, {g2:.2e} (> 1e-6)",
            rep.max_identity_error, s.mean_lambda, s.lambda_f, s.lambda_of_means
        ),
    ))
}

fn interp(tr: &Trajectory, t: f64) -> Vec<f64> {
    let i = tr.t.partition_point(|s| *s <= t).clamp(1, tr.len() - 1);
    let s = (t - tr.t[i - 1]) / (tr.t[i] - tr.t[i - 1]);
    tr.y[i - 1].iter().zip(&tr.y[i]).map(|(a, b)| a + s * (b - a)).collect()
}

fn c10_manifold() -> Outcome {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let f = Nonlinearity::ExpDecay { a: 2.0 };
    let p = 2.0;
    let k = pl.k();
    let grid = Grid::auto(&pl, BASELINE_CELLS, (0.3, 3.0)).map_err(|e| e.to_string())?;
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-10).map_err(|e| e.to_string())?;
    let sc = Scenario::new(build_operator(&grid, &pl, &Kernel::constant_two()), Closure::NonlinearDrift { f, p })
        .map_err(|e| e.to_string())?;
    // on the manifold: u0 = Q0 U(W0), compared with the WZ trajectory
    let (w0, q0) = (0.5, 2.0);
    let u0 = InitialCondition::Eigen { q: q0, w: w0 }.sample(&grid, Some(&ep), k).map_err(|e| e.to_string())?;
    let params = ReducedParams::new(pl, ep.moment(p), System::Wz { f, p }).map_err(|e| e.to_string())?;
    let tr = params
        .integrate(&[w0, w0.powf(k * p) * q0], 0.0, 10.0, Rk4::default())
        .map_err(|e| e.to_string())?;
    let s0 = SizeState::new(u0);
    let dt = sc.auto_dt(&s0).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    run(&sc, s0, 10.0, dt, |s, _| {
        let y = interp(&tr, s.t);
        let q = y[1] * y[0].powf(-k * p);
        for (alpha, pred) in [(0.0, q * ep.moment(0.0)), (1.0, q * y[0].powf(k) * ep.moment(1.0)), (p, y[1] * ep.moment(p))] {
            worst = worst.max((grid.moment(&s.u, alpha) - pred).abs() / pred);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    // off the manifold: log-normal start
    let u1 = InitialCondition::LogNormal { mass: 1.0, center: 1.0, width: 0.3 }
        .sample(&grid, None, k)
        .map_err(|e| e.to_string())?;
    let s1 = SizeState::new(u1.clone());
    let dt = sc.auto_dt(&s1).map_err(|e| e.to_string())?;
    let mut rec = Recorder::new(&sc, DiagnosticsConfig { stride: 10, ..DiagnosticsConfig::new(p, 0.0) })
        .with_manifold(&ep, &u1, 1.0)
        .map_err(|e| e.to_string())?
        .until(10.0);
    run(&sc, s1, 10.0, dt, |s, dt| rec.observe(s, dt)).map_err(|e| e.to_string())?;
    let burn_in = 5.0;
    let (ts, es): (Vec<f64>, Vec<f64>) = rec
        .diagnostics
        .rows
        .iter()
        .filter(|r| r.t >= burn_in)
        .map(|r| (r.t, r.eps_p.abs()))
        .unzip();
    let monotone = es.len() > 2 && es.windows(2).all(|w| w[1] <= w[0]);
    let rate = fit_decay_rate(&ts, &es).unwrap_or(f64::NAN);
    let ok = worst <= 1e-2 && monotone && rate > 0.0;
    Ok((
        ok,
        format!(
            "on-manifold max rel moment error over [0,10] = {worst:.3e} (<= 1e-2); off-manifold |eps_p| monotone after t={burn_in}: {monotone} ({} samples), fitted a = {rate:.3} (> 0)",
            es.len()
        ),
    ))
}

fn c11_gre() -> Outcome {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.5).map_err(|e| e.to_string())?;
    let grid = Grid::auto(&pl, BASELINE_CELLS, (1.0, 1.0)).map_err(|e| e.to_string())?;
    let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-12).map_err(|e| e.to_string())?;
    let control = PeriodicControl::constant(1.0, 1.0).map_err(|e| e.to_string())?;
    let sc = Scenario::linear(build_operator(&grid, &pl, &Kernel::constant_two()), control).map_err(|e| e.to_string())?;
    let u0 = InitialCondition::LogNormal { mass: 1.0, center: 2.0, width: 0.5 }
        .sample(&grid, None, pl.k())
        .map_err(|e| e.to_string())?;
    let s0 = SizeState::new(u0.clone());
    let dt = sc.auto_dt(&s0).map_err(|e| e.to_string())?;
    let mut rec = Recorder::new(&sc, DiagnosticsConfig { stride: 10, ..DiagnosticsConfig::new(1.0, 1.0) })
        .with_gre(&ep, &u0)
        .map_err(|e| e.to_string())?
        .until(20.0);
    run(&sc, s0, 20.0, dt, |s, dt| rec.observe(s, dt)).map_err(|e| e.to_string())?;
    let g = rec.diagnostics.column(|r| r.gre);
    let nonincreasing = g.windows(2).all(|w| w[1] <= w[0]);
    let ratio = g.last().copied().unwrap_or(f64::NAN) / g[0];
    Ok((
        nonincreasing && ratio < 1e-3,
        format!(
            "H=(x-1)^2: non-increasing over {} samples: {nonincreasing}; GRE(20)/GRE(0) = {ratio:.3e} (< 1e-3)",
            g.len()
        ),
    ))
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    v.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    v.sort();
    v
}

fn c12_determinism() -> Outcome {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let o = FigureOptions::default();
        figure1(o).and_then(|f| f.write(d.path())).map_err(|e| e.to_string())?;
        figure2(o).and_then(|f| f.write(d.path())).map_err(|e| e.to_string())?;
        figure3(o).and_then(|f| f.write(d.path())).map_err(|e| e.to_string())?;
    }
    let (a, b) = (csv_files(dirs[0].path()), csv_files(dirs[1].path()));
    let mut same = a.len() == b.len() && !a.is_empty();
    for (x, y) in a.iter().zip(&b) {
        same &= x.file_name() == y.file_name() && std::fs::read(x).ok() == std::fs::read(y).ok();
    }
    Ok((same, format!("{} figure CSVs byte-identical across two runs: {same}", a.len())))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("eigenvalue closed forms", c1_eigenvalues),
        ("explicit eigenvector", c2_explicit_eigenvector),
        ("dilation and time-change transform", c3_transform),
        ("Bernoulli closed form vs RK4", c4_bernoulli),
        ("figure 1 focus and node", c5_figure1),
        ("Lyapunov suite", c6_lyapunov),
        ("figure 2 limit cycle", c7_figure2),
        ("Hopf certification", c8_hopf),
        ("Floquet identity and sandwich", c9_floquet),
        ("PDE and reduced ODE on the manifold", c10_manifold),
        ("general relative entropy", c11_gre),
        ("determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
