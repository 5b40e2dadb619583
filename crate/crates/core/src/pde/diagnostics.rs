//! Observables recorded along a run: moments, the weighted norm, the
//! distance to the eigenmanifold and the generalized relative entropy.

use std::path::Path;

use super::{Closure, Scenario, SizeState};
use crate::eigen::EigenPair;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::write_csv;
use crate::numerics::{golden_section, linear_fit, Pchip};

pub const DIAGNOSTIC_COLUMNS: [&str; 10] = [
    "t", "M0", "M1", "Mp", "Mq", "norm_H", "eps_p", "dist_E", "rho", "gre",
];

/// Exponent `r` of the norm weight `x + x^r`.
pub fn default_weight_exponent(p: f64) -> f64 {
    (2.0 * p + 1.0).max(3.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observables {
    pub m0: f64,
    pub m1: f64,
    pub mp: f64,
    pub mq: f64,
    /// `(∫ u^2 (x + x^r) dx)^{1/2}`
    pub norm_h: f64,
}

pub fn observables(grid: &Grid, u: &[f64], p: f64, q: f64, r: f64) -> Observables {
    let norm2: f64 = u
        .iter()
        .zip(grid.x())
        .zip(grid.widths())
        .map(|((u, x), w)| u * u * (x + x.powf(r)) * w)
        .sum();
    Observables {
        m0: grid.moment(u, 0.0),
        m1: grid.moment(u, 1.0),
        mp: grid.moment(u, p),
        mq: grid.moment(u, q),
        norm_h: norm2.sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldSample {
    /// `M_p[u] / (q M_p[U] x^{kp}) - 1` against the companion point.
    pub eps_p: f64,
    /// `inf_W ∫ phi |u / rho - U(W) / ∫ phi U(W)|`
    pub dist: f64,
    /// `∫ u phi`
    pub rho: f64,
}

/// Compares `u` with the point `q U(x; .)` of the eigenmanifold, where `x`
/// is the dilation of the profile. The distance minimises over dilations in
/// `[x / 4, 4 x]`.
pub fn manifold_diagnostics(
    grid: &Grid,
    u: &[f64],
    eigen: &EigenPair,
    k: f64,
    x: f64,
    q: f64,
    p: f64,
) -> Result<ManifoldSample> {
    if !(x > 0.0 && q > 0.0) {
        return Err(Error::Domain(format!("manifold point needs x, q > 0, got {x}, {q}")));
    }
    let eps_p = grid.moment(u, p) / (q * eigen.moment(p) * x.powf(k * p)) - 1.0;
    let rho = grid.dot(u, &eigen.phi);
    if !(rho > 0.0) {
        return Err(Error::Degenerate("∫ u phi vanishes".into()));
    }
    let interp = Pchip::new(grid.x(), &eigen.u);
    let mut profile = vec![0.0; grid.n()];
    let distance = |log_w: f64, profile: &mut Vec<f64>| {
        let s = (-k * log_w).exp();
        for (out, xi) in profile.iter_mut().zip(grid.x()) {
            *out = s * interp.eval(s * xi);
        }
        let norm = grid.dot(profile, &eigen.phi);
        u.iter()
            .zip(profile.iter())
            .zip(&eigen.phi)
            .zip(grid.widths())
            .map(|(((a, b), f), w)| (a / rho - b / norm).abs() * f * w)
            .sum::<f64>()
    };
    let cell = std::cell::RefCell::new(&mut profile);
    let (_, dist) = golden_section(
        |lw| distance(lw, &mut cell.borrow_mut()),
        x.ln() - 4f64.ln(),
        x.ln() + 4f64.ln(),
        1e-7,
    );
    Ok(ManifoldSample { eps_p, dist, rho })
}

/// Generalized relative entropy `∫ phi v H(u / v)`, skipping cells where the
/// reference vanishes.
pub fn gre<H: Fn(f64) -> f64>(grid: &Grid, u: &[f64], v: &[f64], phi: &[f64], h: H) -> f64 {
    u.iter()
        .zip(v)
        .zip(phi)
        .zip(grid.widths())
        .filter(|(((_, v), _), _)| **v > 0.0)
        .map(|(((u, v), f), w)| f * v * h(u / v) * w)
        .sum()
}

/// Rate `a` of the least-squares fit `y ~ C e^{-a t}` over positive samples.
pub fn fit_decay_rate(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let (t, l): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(ys)
        .filter(|(t, y)| t.is_finite() && y.is_finite() && **y > 0.0)
        .map(|(t, y)| (*t, y.ln()))
        .unzip();
    if t.len() < 2 {
        return None;
    }
    Some(-linear_fit(&t, &l).0)
}

/// Point `q U(x; .)` of the eigenmanifold driven by the PDE feedbacks:
/// `x' = tau x / k (v - x)`, `q' = q (tau x - death)` with `(v, death)` the
/// closure rates of the PDE state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Companion {
    pub x: f64,
    pub q: f64,
}

impl Companion {
    /// Starts at dilation `x0`, with `q` matching the first moment of `u0`.
    pub fn start(grid: &Grid, eigen: &EigenPair, k: f64, u0: &[f64], x0: f64) -> Result<Self> {
        if !(x0 > 0.0) {
            return Err(Error::Domain(format!("dilation must be positive, got {x0}")));
        }
        let q = grid.moment(u0, 1.0) / (x0.powf(k) * eigen.moment(1.0));
        Ok(Self { x: x0, q })
    }

    pub fn advance(&mut self, tau: f64, k: f64, v: f64, death: f64, dt: f64) {
        let x = self.x;
        self.x += dt * tau * x / k * (v - x);
        self.q *= 1.0 + dt * (tau * x - death);
    }
}

/// Reference solution `rho_0 U (1 + dt Lambda)^n` of the linear scheme at
/// unit velocity.
#[derive(Clone, Debug)]
pub struct GreReference {
    pub v: Vec<f64>,
    pub phi: Vec<f64>,
    pub lambda: f64,
}

impl GreReference {
    pub fn new(scenario: &Scenario, eigen: &EigenPair, u0: &[f64]) -> Result<Self> {
        let Closure::Linear { control } = scenario.closure() else {
            return Err(Error::Unsupported("relative entropy needs the linear closure".into()));
        };
        if !control.is_constant() || control.v().eval(0.0) != 1.0 {
            return Err(Error::Unsupported(
                "relative entropy reference needs V == 1 and constant R".into(),
            ));
        }
        let grid = scenario.grid();
        let rho0 = grid.dot(u0, &eigen.phi);
        let death = scenario.operator().powerlaw().mu() * control.r().eval(0.0);
        Ok(Self {
            v: eigen.u.iter().map(|x| rho0 * x).collect(),
            phi: eigen.phi.clone(),
            lambda: eigen.lambda - death,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsConfig {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Record every `stride`-th step (the last step is always recorded).
    pub stride: usize,
}

impl DiagnosticsConfig {
    pub fn new(p: f64, q: f64) -> Self {
        Self {
            p,
            q,
            r: default_weight_exponent(p),
            stride: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRow {
    pub t: f64,
    pub obs: Observables,
    pub eps_p: f64,
    pub dist_e: f64,
    pub rho: f64,
    pub gre: f64,
    /// Companion state, NaN when absent.
    pub x: f64,
    pub q: f64,
}

impl DiagRow {
    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.obs.m0,
            self.obs.m1,
            self.obs.mp,
            self.obs.mq,
            self.obs.norm_h,
            self.eps_p,
            self.dist_e,
            self.rho,
            self.gre,
        ]
    }
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub rows: Vec<DiagRow>,
}

impl Diagnostics {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &DIAGNOSTIC_COLUMNS, self.rows.iter().map(|r| r.values()))
    }

    pub fn column(&self, f: impl Fn(&DiagRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(|r| r.t)
    }
}

/// Observer for [`super::run`] collecting [`DiagRow`]s.
pub struct Recorder<'a> {
    cfg: DiagnosticsConfig,
    scenario: &'a Scenario,
    eigen: Option<&'a EigenPair>,
    companion: Option<Companion>,
    gre_ref: Option<GreReference>,
    pending: Option<(f64, f64)>,
    growth: f64,
    step: usize,
    pub t_end: f64,
    pub diagnostics: Diagnostics,
}

impl<'a> Recorder<'a> {
    pub fn new(scenario: &'a Scenario, cfg: DiagnosticsConfig) -> Self {
        Self {
            cfg,
            scenario,
            eigen: None,
            companion: None,
            gre_ref: None,
            pending: None,
            growth: 1.0,
            step: 0,
            t_end: f64::INFINITY,
            diagnostics: Diagnostics::default(),
        }
    }

    /// Records `rho` and, for linear growth, the manifold comparison against
    /// a companion started at dilation `x0`.
    pub fn with_manifold(mut self, eigen: &'a EigenPair, u0: &[f64], x0: f64) -> Result<Self> {
        let pl = self.scenario.operator().powerlaw();
        if pl.nu() == 1.0 {
            self.companion = Some(Companion::start(self.scenario.grid(), eigen, pl.k(), u0, x0)?);
        }
        self.eigen = Some(eigen);
        Ok(self)
    }

    pub fn with_gre(mut self, eigen: &'a EigenPair, u0: &[f64]) -> Result<Self> {
        self.gre_ref = Some(GreReference::new(self.scenario, eigen, u0)?);
        self.eigen = Some(eigen);
        Ok(self)
    }

    /// Stops striding at `t_end` so the final state is always recorded.
    pub fn until(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn companion(&self) -> Option<Companion> {
        self.companion
    }

    pub fn observe(&mut self, state: &SizeState, dt: f64) -> Result<()> {
        let pl = *self.scenario.operator().powerlaw();
        if self.step > 0 {
            if let (Some(c), Some((v, death))) = (self.companion.as_mut(), self.pending) {
                c.advance(pl.tau(), pl.k(), v, death, dt);
            }
            if let Some(g) = &self.gre_ref {
                self.growth *= 1.0 + dt * g.lambda;
            }
        }
        self.pending = Some(self.scenario.rates(state.t, &state.u, state.monomer)?);
        let last = state.t >= self.t_end - 0.5 * dt;
        let record = self.step.is_multiple_of(self.cfg.stride.max(1)) || last;
        self.step += 1;
        if !record {
            return Ok(());
        }
        let grid = self.scenario.grid();
        let obs = observables(grid, &state.u, self.cfg.p, self.cfg.q, self.cfg.r);
        let mut row = DiagRow {
            t: state.t,
            obs,
            eps_p: f64::NAN,
            dist_e: f64::NAN,
            rho: f64::NAN,
            gre: f64::NAN,
            x: f64::NAN,
            q: f64::NAN,
        };
        if let Some(ep) = self.eigen {
            row.rho = grid.dot(&state.u, &ep.phi);
            if let Some(c) = self.companion {
                let m = manifold_diagnostics(grid, &state.u, ep, pl.k(), c.x, c.q, self.cfg.p)?;
                row.eps_p = m.eps_p;
                row.dist_e = m.dist;
                row.x = c.x;
                row.q = c.q;
            }
        }
        if let Some(g) = &self.gre_ref {
            let scaled: Vec<f64> = state.u.iter().map(|x| x / self.growth).collect();
            row.gre = gre(grid, &scaled, &g.v, &g.phi, |s| (s - 1.0) * (s - 1.0));
        }
        self.diagnostics.rows.push(row);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{rescale_eigenvector, solve_perron};
    use crate::model::{derive_params, Kernel, PeriodicControl};
    use crate::pde::{build_operator, run, InitialCondition};

    #[test]
    fn manifold_point_has_zero_distance() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let grid = Grid::auto(&pl, 800, (0.5, 2.0)).unwrap();
        let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-10).unwrap();
        let u = rescale_eigenvector(&ep.u, 1.3, 1.0, &grid).unwrap();
        let u: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let m = manifold_diagnostics(&grid, &u, &ep, 1.0, 1.3, 2.0, 0.5).unwrap();
        assert!(m.eps_p.abs() < 1e-3, "{}", m.eps_p);
        assert!(m.dist < 1e-4, "{}", m.dist);
        let off = InitialCondition::Block { mass: 1.0, from: 0.5, to: 1.5 }
            .sample(&grid, None, 1.0)
            .unwrap();
        let m = manifold_diagnostics(&grid, &off, &ep, 1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(m.dist > 0.1);
    }

    #[test]
    fn decay_rate_fit() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        assert!((fit_decay_rate(&t, &y).unwrap() - 0.7).abs() < 1e-12);
        assert!(fit_decay_rate(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn entropy_decreases_along_linear_run() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 0.5).unwrap();
        let grid = Grid::auto(&pl, 300, (1.0, 1.0)).unwrap();
        let ep = solve_perron(&pl, &Kernel::constant_two(), &grid, 1e-11).unwrap();
        let op = build_operator(&grid, &pl, &Kernel::constant_two());
        let sc = Scenario::linear(op, PeriodicControl::constant(1.0, 1.0).unwrap()).unwrap();
        let u0 = InitialCondition::LogNormal { mass: 1.0, center: 2.0, width: 0.4 }
            .sample(&grid, None, 1.0)
            .unwrap();
        let s0 = SizeState::new(u0.clone());
        let dt = sc.auto_dt(&s0).unwrap();
        let mut rec = Recorder::new(&sc, DiagnosticsConfig { stride: 10, ..DiagnosticsConfig::new(1.0, 1.0) })
            .with_gre(&ep, &u0)
            .unwrap()
            .until(3.0);
        run(&sc, s0, 3.0, dt, |s, dt| rec.observe(s, dt)).unwrap();
        let g = rec.diagnostics.column(|r| r.gre);
        assert!(g.windows(2).all(|w| w[1] <= w[0] + 1e-10 * g[0]));
        assert!(g.last().unwrap() < &(0.1 * g[0]));
        let rho = rec.diagnostics.column(|r| r.rho);
        // rho grows like e^{(Lambda - mu R) t}
        let rate = (rho.last().unwrap() / rho[0]).ln() / 3.0;
        assert!((rate - 0.5).abs() < 0.05, "{rate}");
    }
}
