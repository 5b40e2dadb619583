//! Explicit finite-volume solver for the growth-fragmentation equation with
//! its linear and nonlinear closures, plus diagnostics measuring the
//! distance to the eigenmanifold.

mod diagnostics;
mod operator;

pub use diagnostics::{
    default_weight_exponent, fit_decay_rate, gre, manifold_diagnostics, observables, Companion,
    DiagRow, Diagnostics, DiagnosticsConfig, GreReference, ManifoldSample, Observables, Recorder,
    DIAGNOSTIC_COLUMNS,
};
pub use operator::{build_operator, build_operator_with, Operator, CFL};

use crate::eigen::{rescale_eigenvector, EigenPair};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Nonlinearity, PeriodicControl};

/// Moment feedback closing the equation.
#[derive(Clone, Debug)]
pub enum Closure {
    /// Velocity `V(t)`, death `mu R(t)`.
    Linear { control: PeriodicControl },
    /// Velocity `f(M_p[u])`, death `mu`.
    NonlinearDrift { f: Nonlinearity, p: f64 },
    /// Velocity `f(M_p[u] / mp)`, death `g(M_q[u] / mq)`.
    DriftDeath {
        f: Nonlinearity,
        g: Nonlinearity,
        p: f64,
        q: f64,
        mp: f64,
        mq: f64,
    },
    /// Velocity `V f(mu^{-kp} m1 / mp M_p[u])` with the monomer `V` solving
    /// `V' = lambda - delta V - V f(..) M_1[u]`; death `mu`.
    Prion {
        f: Nonlinearity,
        p: f64,
        lambda: f64,
        delta: f64,
        m1: f64,
        mp: f64,
    },
}

impl Closure {
    pub fn name(&self) -> &'static str {
        match self {
            Closure::Linear { .. } => "linear",
            Closure::NonlinearDrift { .. } => "nonlinear-drift",
            Closure::DriftDeath { .. } => "drift-death",
            Closure::Prion { .. } => "prion",
        }
    }
}

/// An assembled operator together with its closure.
#[derive(Clone, Debug)]
pub struct Scenario {
    op: Operator,
    closure: Closure,
}

impl Scenario {
    pub fn new(op: Operator, closure: Closure) -> Result<Self> {
        let pl = *op.powerlaw();
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
            }
        };
        if !matches!(closure, Closure::Linear { .. }) && (pl.nu() != 1.0 || pl.tau() != 1.0) {
            return Err(Error::Unsupported(format!(
                "the {} closure is posed with growth rate x (nu = 1, tau = 1)",
                closure.name()
            )));
        }
        match &closure {
            Closure::Linear { .. } => {}
            Closure::NonlinearDrift { p, .. } => nonneg("p", *p)?,
            Closure::DriftDeath { g, p, q, mp, mq, .. } => {
                nonneg("p", *p)?;
                nonneg("q", *q)?;
                positive("mp", *mp)?;
                positive("mq", *mq)?;
                if !g.is_increasing() {
                    return Err(Error::Config("g must be increasing".into()));
                }
            }
            Closure::Prion {
                p,
                lambda,
                delta,
                m1,
                mp,
                ..
            } => {
                nonneg("p", *p)?;
                positive("lambda", *lambda)?;
                positive("delta", *delta)?;
                positive("m1", *m1)?;
                positive("mp", *mp)?;
            }
        }
        Ok(Self { op, closure })
    }

    pub fn linear(op: Operator, control: PeriodicControl) -> Result<Self> {
        Self::new(op, Closure::Linear { control })
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }
    pub fn closure(&self) -> &Closure {
        &self.closure
    }
    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    /// Velocity multiplier and death rate at the given state.
    pub fn rates(&self, t: f64, u: &[f64], monomer: Option<f64>) -> Result<(f64, f64)> {
        let grid = self.op.grid();
        let pl = self.op.powerlaw();
        Ok(match &self.closure {
            Closure::Linear { control } => (control.v().eval(t), pl.mu() * control.r().eval(t)),
            Closure::NonlinearDrift { f, p } => (f.value(grid.moment(u, *p)), pl.mu()),
            Closure::DriftDeath {
                f, g, p, q, mp, mq, ..
            } => (
                f.value(grid.moment(u, *p) / mp),
                g.value(grid.moment(u, *q) / mq),
            ),
            Closure::Prion { f, p, m1, mp, .. } => {
                let v = monomer
                    .ok_or_else(|| Error::Config("prion closure needs a monomer value".into()))?;
                (v * self.prion_incidence(u, *f, *p, *m1, *mp), pl.mu())
            }
        })
    }

    fn prion_incidence(&self, u: &[f64], f: Nonlinearity, p: f64, m1: f64, mp: f64) -> f64 {
        let pl = self.op.powerlaw();
        let arg = pl.mu().powf(-pl.k() * p) * m1 / mp * self.op.grid().moment(u, p);
        f.value(arg)
    }

    /// Upper bound on the velocity multiplier used to pick a time step.
    pub fn velocity_bound(&self, state: &SizeState) -> Result<f64> {
        let (v, _) = self.rates(state.t, &state.u, state.monomer)?;
        Ok(match &self.closure {
            Closure::Linear { control } => control.v().range().1,
            Closure::NonlinearDrift { f, .. } | Closure::DriftDeath { f, .. } => {
                f.sup().unwrap_or(v).max(v)
            }
            Closure::Prion { f, lambda, delta, .. } => {
                let m = state.monomer.unwrap_or(0.0).max(lambda / delta);
                (m * f.sup().unwrap_or(1.0)).max(v)
            }
        })
    }

    /// Stable step for the whole run, assuming the death rate stays below
    /// four times its initial value.
    pub fn auto_dt(&self, state: &SizeState) -> Result<f64> {
        let (_, death) = self.rates(state.t, &state.u, state.monomer)?;
        let v = self.velocity_bound(state)?;
        let death = match &self.closure {
            Closure::Linear { control } => self.op.powerlaw().mu() * control.r().range().1,
            _ => 4.0 * death,
        };
        Ok(self.op.admissible_dt(v, death))
    }
}

/// Discretised density at time `t`; `monomer` is the prion monomer level.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeState {
    pub t: f64,
    pub u: Vec<f64>,
    pub monomer: Option<f64>,
}

impl SizeState {
    pub fn new(u: Vec<f64>) -> Self {
        Self {
            t: 0.0,
            u,
            monomer: None,
        }
    }

    pub fn with_monomer(mut self, v: f64) -> Self {
        self.monomer = Some(v);
        self
    }
}

/// Reusable buffers for repeated steps.
struct Stepper {
    scratch: Vec<f64>,
    next: Vec<f64>,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Self {
            scratch: vec![0.0; n],
            next: vec![0.0; n],
        }
    }

    fn advance(&mut self, state: &mut SizeState, scenario: &Scenario, dt: f64) -> Result<()> {
        let op = scenario.operator();
        let (v, death) = scenario.rates(state.t, &state.u, state.monomer)?;
        op.check_dt(dt, v, death)?;
        let monomer_next = match (&scenario.closure, state.monomer) {
            (
                Closure::Prion {
                    f,
                    p,
                    lambda,
                    delta,
                    m1,
                    mp,
                },
                Some(m),
            ) => {
                let incidence = scenario.prion_incidence(&state.u, *f, *p, *m1, *mp);
                let mass = op.grid().moment(&state.u, 1.0);
                Some((m + dt * (lambda - delta * m - m * incidence * mass)).max(0.0))
            }
            _ => state.monomer,
        };
        op.euler(&state.u, v, death, dt, &mut self.scratch, &mut self.next);
        let max = self.next.iter().cloned().fold(0.0, f64::max);
        for x in self.next.iter_mut() {
            if *x < 0.0 {
                if *x < -1e-14 * max {
                    return Err(Error::numerical(
                        format!("negative density at t = {}", state.t + dt),
                        -*x / max.max(f64::MIN_POSITIVE),
                    ));
                }
                *x = 0.0;
            }
        }
        if !self.next.iter().all(|x| x.is_finite()) {
            return Err(Error::numerical("non-finite density", f64::INFINITY));
        }
        std::mem::swap(&mut state.u, &mut self.next);
        state.t += dt;
        state.monomer = monomer_next;
        Ok(())
    }
}

/// One explicit step with feedbacks frozen at the current state.
pub fn step(state: &SizeState, scenario: &Scenario, dt: f64) -> Result<SizeState> {
    let mut next = state.clone();
    Stepper::new(state.u.len()).advance(&mut next, scenario, dt)?;
    Ok(next)
}

/// Advances to `t_end` with equal steps no longer than `dt_max`, calling
/// `observe(state, dt)` on the initial state and after every step.
pub fn run<O>(
    scenario: &Scenario,
    init: SizeState,
    t_end: f64,
    dt_max: f64,
    mut observe: O,
) -> Result<SizeState>
where
    O: FnMut(&SizeState, f64) -> Result<()>,
{
    if init.u.len() != scenario.grid().n() {
        return Err(Error::Config("initial density does not match the grid".into()));
    }
    if !(dt_max > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt_max}")));
    }
    let span = t_end - init.t;
    let steps = ((span / dt_max) - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { span / steps as f64 } else { 0.0 };
    let mut state = init;
    let t0 = state.t;
    let mut stepper = Stepper::new(state.u.len());
    observe(&state, dt)?;
    for i in 0..steps {
        stepper.advance(&mut state, scenario, dt)?;
        // avoid drift of the time stamp over long runs
        state.t = t0 + (i + 1) as f64 * dt;
        observe(&state, dt)?;
    }
    Ok(state)
}

/// Initial densities.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// `q U(w; .)`, a point of the eigenmanifold.
    Eigen { q: f64, w: f64 },
    /// Log-normal bump with total number `mass`, median `center` and log
    /// standard deviation `width`.
    LogNormal { mass: f64, center: f64, width: f64 },
    /// Uniform block on `[from, to]` with total number `mass`.
    Block { mass: f64, from: f64, to: f64 },
}

impl InitialCondition {
    pub fn sample(&self, grid: &Grid, eigen: Option<&EigenPair>, k: f64) -> Result<Vec<f64>> {
        match *self {
            InitialCondition::Eigen { q, w } => {
                let ep = eigen.ok_or_else(|| {
                    Error::Config("eigenmanifold initial data needs an eigenpair".into())
                })?;
                let u = rescale_eigenvector(&ep.u, w, k, grid)?;
                Ok(u.into_iter().map(|x| q * x).collect())
            }
            InitialCondition::LogNormal {
                mass,
                center,
                width,
            } => {
                if !(center > 0.0 && width > 0.0) {
                    return Err(Error::Config("log-normal needs positive center and width".into()));
                }
                let raw: Vec<f64> = grid
                    .x()
                    .iter()
                    .map(|&x| {
                        let z = (x / center).ln() / width;
                        (-0.5 * z * z).exp() / x
                    })
                    .collect();
                let m = grid.integrate(&raw);
                Ok(raw.into_iter().map(|x| mass * x / m).collect())
            }
            InitialCondition::Block { mass, from, to } => {
                if !(to > from && from >= 0.0) {
                    return Err(Error::Config("block needs 0 <= from < to".into()));
                }
                let e = grid.edges();
                let raw: Vec<f64> = (0..grid.n())
                    .map(|i| {
                        let overlap = (e[i + 1].min(to) - e[i].max(from)).max(0.0);
                        overlap / (e[i + 1] - e[i])
                    })
                    .collect();
                let m = grid.integrate(&raw);
                if !(m > 0.0) {
                    return Err(Error::Config("block does not intersect the grid".into()));
                }
                Ok(raw.into_iter().map(|x| mass * x / m).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_perron;
    use crate::model::{derive_params, Kernel, Signal};

    fn linear_scenario(mu: f64, v: Signal, r: Signal) -> Scenario {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, mu).unwrap();
        let grid = Grid::auto(&pl, 600, (0.5, 2.0)).unwrap();
        let op = build_operator(&grid, &pl, &Kernel::constant_two());
        Scenario::linear(op, PeriodicControl::new(v, r).unwrap()).unwrap()
    }

    #[test]
    fn first_moment_grows_exactly() {
        let sc = linear_scenario(0.7, Signal::sine(1.0, 0.4, 1.0), Signal::constant(1.0));
        let grid = sc.grid().clone();
        let u0 = InitialCondition::LogNormal { mass: 1.0, center: 1.0, width: 0.3 }
            .sample(&grid, None, 1.0)
            .unwrap();
        let s0 = SizeState::new(u0);
        let dt = sc.auto_dt(&s0).unwrap();
        let s1 = step(&s0, &sc, dt).unwrap();
        let m0 = grid.moment(&s0.u, 1.0);
        let m1 = grid.moment(&s1.u, 1.0);
        let v = 1.0;
        let expected = m0 * (1.0 + dt * (v - 0.7));
        // the closed last face drops the last cell's flux only
        assert!((m1 - expected).abs() < 1e-12 * m0, "{m1} vs {expected}");
    }

    #[test]
    fn eigenvector_is_a_fixed_profile() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let grid = Grid::auto(&pl, 500, (1.0, 1.0)).unwrap();
        let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-10).unwrap();
        let op = build_operator(&grid, &pl, &Kernel::constant_two());
        let sc = Scenario::linear(op, PeriodicControl::constant(1.0, 0.0).unwrap()).unwrap();
        let s0 = SizeState::new(ep.u.clone());
        let dt = sc.auto_dt(&s0).unwrap();
        let end = run(&sc, s0, 2.0, dt, |_, _| Ok(())).unwrap();
        let mass = grid.integrate(&end.u);
        let rate = mass.ln() / 2.0;
        assert!((rate - ep.lambda).abs() < 1e-2, "{rate}");
        let profile: Vec<f64> = end.u.iter().map(|x| x / mass).collect();
        assert!(grid.l1_distance(&profile, &ep.u) < 1e-8);
    }

    #[test]
    fn cfl_is_enforced() {
        let sc = linear_scenario(0.0, Signal::constant(1.0), Signal::constant(0.0));
        let s0 = SizeState::new(vec![1.0; sc.grid().n()]);
        let dt = sc.auto_dt(&s0).unwrap();
        assert!(matches!(step(&s0, &sc, 3.0 * dt), Err(Error::Cfl { .. })));
    }

    #[test]
    fn nonlinear_closures_need_linear_growth() {
        let pl = derive_params(2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let grid = Grid::auto(&pl, 100, (1.0, 1.0)).unwrap();
        let op = build_operator(&grid, &pl, &Kernel::constant_two());
        let c = Closure::NonlinearDrift { f: Nonlinearity::ExpDecay { a: 2.0 }, p: 1.0 };
        assert!(matches!(Scenario::new(op, c), Err(Error::Unsupported(_))));
    }

    #[test]
    fn initial_conditions_have_requested_mass() {
        let grid = Grid::geometric(400, 1e-5, 50.0).unwrap();
        for ic in [
            InitialCondition::LogNormal { mass: 2.0, center: 1.0, width: 0.5 },
            InitialCondition::Block { mass: 3.0, from: 0.5, to: 2.0 },
        ] {
            let u = ic.sample(&grid, None, 1.0).unwrap();
            let target = match ic {
                InitialCondition::LogNormal { mass, .. } | InitialCondition::Block { mass, .. } => mass,
                _ => unreachable!(),
            };
            assert!((grid.integrate(&u) - target).abs() < 1e-12);
        }
        assert!(InitialCondition::Eigen { q: 1.0, w: 1.0 }.sample(&grid, None, 1.0).is_err());
    }
}
