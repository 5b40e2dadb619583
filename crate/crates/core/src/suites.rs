//! Seeded randomized property suites: Lyapunov monotonicity along drift
//! trajectories, the omega inequality, and the Floquet identities. A seed
//! fixes every draw, so reruns are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{floquet_compare, lyapunov, lyapunov_alphas, omega, steady_states};
use crate::eigen::closed_form_moment;
use crate::error::Result;
use crate::exec::{map, Execution};
use crate::io::KeyValue;
use crate::model::{derive_params, Nonlinearity, PeriodicControl, Signal, DEFAULT_SEARCH_END};
use crate::reduced::{ReducedParams, Rk4, System};

#[derive(Clone, Copy, Debug)]
pub struct LyapunovSuiteConfig {
    pub trajectories: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Steps between checked samples.
    pub stride: usize,
    pub slack: f64,
    pub identity_tol: f64,
    pub inequality_samples: usize,
}

impl Default for LyapunovSuiteConfig {
    fn default() -> Self {
        Self {
            trajectories: 20,
            t_end: 40.0,
            dt: 1e-3,
            stride: 100,
            slack: 1e-9,
            identity_tol: 1e-10,
            inequality_samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryCheck {
    pub p: f64,
    pub a: f64,
    pub start: [f64; 2],
    pub samples: usize,
    /// Largest `L(t_{i+1}) - L(t_i)`.
    pub max_increase: f64,
    /// Largest relative gap between `dL/dt` and the two-squares form.
    pub max_identity_error: f64,
    /// Largest `dL/dt + D`, which the dissipation bound keeps `<= 0`.
    pub max_bound_excess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSuiteReport {
    pub seed: u64,
    pub checks: Vec<TrajectoryCheck>,
    pub monotone: bool,
    pub identity: bool,
    /// Worst `lhs - omega rhs` scaled by `rhs` over the inequality samples.
    pub inequality_worst: f64,
    pub inequality: bool,
}

impl LyapunovSuiteReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.identity && self.inequality
    }

    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.int("seed", self.seed as usize)
            .int("trajectories", self.checks.len())
            .flag("monotone", self.monotone)
            .flag("identity", self.identity)
            .flag("inequality", self.inequality)
            .num("inequality_worst", self.inequality_worst);
        let worst = |f: fn(&TrajectoryCheck) -> f64| self.checks.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        kv.num("max_increase", worst(|c| c.max_increase))
            .num("max_identity_error", worst(|c| c.max_identity_error))
            .num("max_bound_excess", worst(|c| c.max_bound_excess));
        kv
    }
}

const LYAPUNOV_P: [f64; 3] = [0.5, 2.0, 5.0];

fn check_trajectory(p: f64, a: f64, start: [f64; 2], cfg: &LyapunovSuiteConfig) -> Result<TrajectoryCheck> {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)?;
    let mp = closed_form_moment(&pl, p)?;
    let params = ReducedParams::new(pl, mp, System::Wz { f: Nonlinearity::ExpDecay { a }, p })?;
    let z_inf = steady_states(&params, DEFAULT_SEARCH_END)?.equilibria[0].y[1];
    let y0 = [start[0], start[1] * z_inf];
    let traj = params.integrate(&y0, 0.0, cfg.t_end, Rk4::with_dt(cfg.dt).stride(cfg.stride))?;
    let mut check = TrajectoryCheck {
        p,
        a,
        start: y0,
        samples: traj.len(),
        max_increase: f64::NEG_INFINITY,
        max_identity_error: 0.0,
        max_bound_excess: f64::NEG_INFINITY,
    };
    let mut prev: Option<f64> = None;
    for y in &traj.y {
        let v = lyapunov(&params, y[0], y[1])?;
        if let Some(l) = prev {
            check.max_increase = check.max_increase.max(v.l - l);
        }
        prev = Some(v.l);
        let scale = v.two_squares.abs();
        if scale > 0.0 {
            check.max_identity_error = check.max_identity_error.max((v.dl_dt - v.two_squares).abs() / scale);
        }
        check.max_bound_excess = check.max_bound_excess.max(v.dl_dt + v.d);
    }
    Ok(check)
}

/// Random `f = a e^{-x}`, `p` from `{0.5, 2, 5}` and positive starts; checks
/// that `L` never increases, the two-squares identity, and the omega
/// inequality on random `(a, b)` pairs.
pub fn lyapunov_suite(seed: u64, cfg: LyapunovSuiteConfig, exec: Execution) -> Result<LyapunovSuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64, [f64; 2])> = (0..cfg.trajectories)
        .map(|_| {
            let p = LYAPUNOV_P[rng.random_range(0..LYAPUNOV_P.len())];
            let a = rng.random_range(1.5..4.0);
            let w = (rng.random_range(-1.5f64..1.5)).exp();
            let z = (rng.random_range(-2.0f64..2.0)).exp();
            (p, a, [w, z])
        })
        .collect();
    let checks = map(exec, &draws, |(p, a, s)| check_trajectory(*p, *a, *s, &cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut worst = f64::INFINITY;
    for _ in 0..cfg.inequality_samples {
        let p = loop {
            let p: f64 = rng.random_range(0.05..20.0);
            if (p - 1.0).abs() > 1e-3 {
                break p;
            }
        };
        let (ap, am) = lyapunov_alphas(p);
        let alpha = am / ap;
        let om = omega(alpha);
        let a: f64 = rng.random_range(-10.0..10.0);
        let b: f64 = rng.random_range(-10.0..10.0);
        let rhs = a * a + b * b;
        let lhs = (a + b).powi(2) + (a + alpha * b).powi(2);
        worst = worst.min((lhs - om * rhs) / rhs);
    }
    let monotone = checks.iter().all(|c| c.max_increase <= cfg.slack);
    let identity = checks.iter().all(|c| c.max_identity_error <= cfg.identity_tol);
    Ok(LyapunovSuiteReport {
        seed,
        checks,
        monotone,
        identity,
        inequality_worst: worst,
        inequality: worst >= -1e-12,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetCase {
    pub control: PeriodicControl,
    pub lambda_f: f64,
    pub lambda_of_means: f64,
    pub mean_lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetSuiteReport {
    pub seed: u64,
    pub identity_cases: Vec<FloquetCase>,
    pub max_identity_error: f64,
    pub sandwich: FloquetCase,
}

impl FloquetSuiteReport {
    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.int("seed", self.seed as usize)
            .int("identity_cases", self.identity_cases.len())
            .num("max_identity_error", self.max_identity_error)
            .num("sandwich.mean_lambda", self.sandwich.mean_lambda)
            .num("sandwich.lambda_f", self.sandwich.lambda_f)
            .num("sandwich.lambda_of_means", self.sandwich.lambda_of_means);
        kv
    }
}

/// Positive random Fourier control: mean in `[1, 2]`, up to three harmonics
/// with total amplitude below 0.8 of the mean.
pub fn random_fourier(rng: &mut ChaCha8Rng) -> Result<Signal> {
    let mean: f64 = rng.random_range(1.0..2.0);
    let n = rng.random_range(1..=3);
    let budget = 0.8 * mean / (2 * n) as f64;
    let cos = (0..n).map(|_| rng.random_range(-budget..budget)).collect();
    let sin = (0..n).map(|_| rng.random_range(-budget..budget)).collect();
    let period = rng.random_range(0.5..2.0);
    Signal::fourier(period, mean, cos, sin)
}

/// Random Fourier growth controls paired with constant death multipliers in
/// `[0, 1)`.
pub fn random_controls(seed: u64, cases: usize) -> Result<Vec<PeriodicControl>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut controls = Vec::with_capacity(cases);
    for _ in 0..cases {
        let v = random_fourier(&mut rng)?;
        let r = Signal::fourier(v.period(), rng.random_range(0.0..1.0), vec![], vec![])?;
        controls.push(PeriodicControl::new(v, r)?);
    }
    Ok(controls)
}

/// Identity `Lambda_F = Lambda(mean V, mean R)` for `nu = 1` on random Fourier
/// controls, and the strict sandwich for `nu = 0`, `gamma = 1` at the given
/// amplitude.
pub fn floquet_suite(seed: u64, cases: usize, amplitude: f64, dt: f64, exec: Execution) -> Result<FloquetSuiteReport> {
    let controls = random_controls(seed, cases)?;
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)?;
    let reports = map(exec, &controls, |c| floquet_compare(&pl, c, dt))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let identity_cases: Vec<FloquetCase> = controls
        .into_iter()
        .zip(reports)
        .map(|(control, r)| FloquetCase {
            control,
            lambda_f: r.lambda_f,
            lambda_of_means: r.lambda_of_means,
            mean_lambda: r.mean_lambda,
        })
        .collect();
    let max_identity_error = identity_cases
        .iter()
        .map(|c| (c.lambda_f - c.lambda_of_means).abs())
        .fold(0.0, f64::max);
    let pl0 = derive_params(1.0, 0.0, 1.0, 1.0, 0.1)?;
    let control = PeriodicControl::new(Signal::sine(1.0, amplitude, 1.0), Signal::constant(1.0))?;
    let r = floquet_compare(&pl0, &control, dt)?;
    Ok(FloquetSuiteReport {
        seed,
        identity_cases,
        max_identity_error,
        sandwich: FloquetCase {
            control,
            lambda_f: r.lambda_f,
            lambda_of_means: r.lambda_of_means,
            mean_lambda: r.mean_lambda,
        },
    })
}
