//! Steady states, the Lyapunov functional of the drift system, local
//! stability with analytic Jacobians, the prion Hopf scan, limit-cycle
//! detection on a Poincare section, and the Floquet/Perron comparison.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{write_csv, KeyValue};
use crate::model::{
    check_assumption_f, check_assumption_fg, check_assumption_prion, psi_drift_death_derivative,
    Nonlinearity, PeriodicControl, PowerLaw,
};
use crate::numerics::{adaptive_simpson, bisect, composite_simpson};
use crate::reduced::{integrate, ReducedParams, Rk4, System, SystemId, Trajectory};

/// Equilibria must zero the right-hand side to this accuracy.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-10;
/// Relative agreement required between analytic and difference Jacobians.
pub const JACOBIAN_CHECK: f64 = 1e-5;
/// Smallest `Z` at which `F(Z)` is evaluated.
pub const Z_FLOOR: f64 = 1e-8;

// ---------------------------------------------------------------- steady states

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub y: Vec<f64>,
    /// Sup-norm of the right-hand side at `y`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyStateReport {
    pub system: SystemId,
    pub equilibria: Vec<Equilibrium>,
    /// Roots of the scalar equation behind the equilibria: `I_inf` for the
    /// drift system, `W_inf` for drift-death, `Q_inf` for the prion system.
    pub roots: Vec<f64>,
    pub unique: bool,
    pub assumptions_pass: bool,
    pub notes: Vec<String>,
}

impl SteadyStateReport {
    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.text("system", self.system.name())
            .int("count", self.equilibria.len())
            .flag("unique", self.unique)
            .flag("assumptions_pass", self.assumptions_pass);
        let names = self.system.components();
        for (i, e) in self.equilibria.iter().enumerate() {
            for (n, v) in names.iter().zip(&e.y) {
                kv.num(&format!("equilibrium.{i}.{n}"), *v);
            }
            kv.num(&format!("equilibrium.{i}.residual"), e.residual);
        }
        for (i, r) in self.roots.iter().enumerate() {
            kv.num(&format!("root.{i}"), *r);
        }
        for (i, n) in self.notes.iter().enumerate() {
            kv.text(&format!("note.{i}"), n.clone());
        }
        kv
    }
}

fn residual(params: &ReducedParams, y: &[f64]) -> f64 {
    let mut d = vec![0.0; y.len()];
    params.eval(0.0, y, &mut d);
    d.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Positive equilibria of a reduced system. `search_end` bounds the root
/// scans standing in for infinity.
pub fn steady_states(params: &ReducedParams, search_end: f64) -> Result<SteadyStateReport> {
    let pl = params.powerlaw;
    let (k, mu) = (pl.k(), pl.mu());
    let id = params.id();
    let mut notes = Vec::new();
    let (roots, ys, pass, unique): (Vec<f64>, Vec<Vec<f64>>, bool, bool) = match &params.system {
        System::Wz { f, p } | System::WzPerturbed { f, p, .. } | System::WqDrift { f, p } => {
            let rep = check_assumption_f(f, mu, search_end);
            notes.extend(rep.notes.clone());
            let scale = mu.powf(k * p) * params.mp;
            let ys = rep
                .roots
                .iter()
                .filter(|i| **i > 0.0)
                .map(|i| vec![1.0, i / scale])
                .collect::<Vec<_>>();
            let unique = ys.len() == 1;
            (rep.roots, ys, rep.pass, unique)
        }
        System::Wq { f, g, p, q } | System::WqPerturbed { f, g, p, q, .. } => {
            let rep = check_assumption_fg(f, g, *p, *q, k, search_end);
            notes.extend(rep.notes.clone());
            let mut ys = Vec::new();
            for w in &rep.roots {
                let qq = w.powf(-k * q) * g.inverse(*w)?;
                ys.push(vec![*w, qq]);
            }
            let unique = ys.len() == 1;
            (rep.roots, ys, rep.pass, unique)
        }
        System::Vwq { f, lambda, delta, .. } => {
            let rep = check_assumption_prion(f, *lambda, *delta, mu, k);
            notes.extend(rep.notes.clone());
            let ys = rep
                .roots
                .iter()
                .map(|q| vec![(lambda - mu.powf(k + 1.0) * q) / delta, mu, *q])
                .collect::<Vec<_>>();
            let unique = ys.len() == 1;
            (rep.roots, ys, rep.pass, unique)
        }
        System::WOde { v1, v2 } => {
            if !(v1.is_constant() && v2.is_constant()) {
                return Err(Error::Unsupported("steady states need constant controls".into()));
            }
            let w = v2.eval(0.0) / v1.eval(0.0);
            (vec![w], vec![vec![w, 0.0]], true, true)
        }
        System::Up { .. } => {
            return Err(Error::Unsupported(
                "the closed moment system is linear; use floquet_compare".into(),
            ))
        }
    };
    let mut equilibria = Vec::new();
    for y in ys {
        let mut r = residual(params, &y);
        if id == SystemId::WOde {
            // h' = W never vanishes; only W is stationary
            let mut d = [0.0; 2];
            params.eval(0.0, &y, &mut d);
            r = d[0].abs();
        }
        if r >= EQUILIBRIUM_RESIDUAL {
            notes.push(format!("equilibrium {y:?} has residual {r:e}"));
        }
        equilibria.push(Equilibrium { y, residual: r });
    }
    if equilibria.is_empty() {
        notes.push(format!("no positive root on the search interval [0, {search_end}]"));
    }
    Ok(SteadyStateReport {
        system: id,
        equilibria,
        roots,
        unique,
        assumptions_pass: pass,
        notes,
    })
}

// ---------------------------------------------------------------- Lyapunov

/// `f(x) = (4 - 2 sqrt(4 + x^2) + x^2) / (2 + x/2 sqrt(4 + x^2) + x^2/2)`
pub fn omega_fn(x: f64) -> f64 {
    let s = (4.0 + x * x).sqrt();
    (4.0 - 2.0 * s + x * x) / (2.0 + 0.5 * x * s + 0.5 * x * x)
}

/// Best constant in `(a+b)^2 + (a+alpha b)^2 >= omega (a^2 + b^2)`: the
/// smaller eigenvalue of `[[2, 1+alpha], [1+alpha, 1+alpha^2]]`. Agrees with
/// `omega_fn(alpha - 1)` for `alpha >= -1`; below that the closed form
/// overshoots.
pub fn omega(alpha: f64) -> f64 {
    let tr = 3.0 + alpha * alpha;
    let gap = ((alpha * alpha - 1.0).powi(2) + 4.0 * (1.0 + alpha).powi(2)).sqrt();
    // product form avoids cancellation when the minimum is near zero
    let det = (1.0 - alpha).powi(2);
    2.0 * det / (tr + gap)
}

/// `alpha_+ = 1/(sqrt p + 1)`, `alpha_- = 1/(sqrt p - 1)`.
pub fn lyapunov_alphas(p: f64) -> (f64, f64) {
    let s = p.sqrt();
    (1.0 / (s + 1.0), 1.0 / (s - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovValue {
    pub l: f64,
    /// Lower bound of the dissipation, `omega (mu^2 (W-1)^2 + alpha_+^2 p (mu - f_p)^2)`.
    pub d: f64,
    /// `dL/dt` by the chain rule through the right-hand side.
    pub dl_dt: f64,
    /// Minus the sum of the two squares.
    pub two_squares: f64,
    pub omega: f64,
}

fn wz_parts(params: &ReducedParams) -> Result<(Nonlinearity, f64)> {
    match &params.system {
        System::Wz { f, p } => Ok((*f, *p)),
        _ => Err(Error::Config("the Lyapunov functional is defined for the wz system".into())),
    }
}

/// `F(Z) = ∫_1^Z (mu - f_p(z)) dz / z`
pub fn lyapunov_f(params: &ReducedParams, z: f64) -> Result<f64> {
    let (f, p) = wz_parts(params)?;
    if !(z >= Z_FLOOR) {
        return Err(Error::Domain(format!("F(Z) is evaluated for Z >= {Z_FLOOR}, got {z}")));
    }
    let mu = params.powerlaw.mu();
    let h = |s: f64| {
        let z = s.exp();
        mu - params.f_p(&f, p, z)
    };
    // dz / z = d ln z
    Ok(adaptive_simpson(h, 0.0, z.ln(), 1e-10))
}

pub fn lyapunov(params: &ReducedParams, w: f64, z: f64) -> Result<LyapunovValue> {
    let (f, p) = wz_parts(params)?;
    if p == 1.0 {
        return Err(Error::Unsupported(
            "p = 1 decouples Z; use the scalar equation Z' = Z (f_1(Z) - mu)".into(),
        ));
    }
    if !(w > 0.0 && z > 0.0) {
        return Err(Error::Domain("Lyapunov functional needs W, Z > 0".into()));
    }
    let (k, mu) = (params.powerlaw.k(), params.powerlaw.mu());
    let (ap, am) = lyapunov_alphas(p);
    let c = ap * ap + am * am;
    let g = w - 1.0 - w.ln();
    let l = 2.0 * k * mu * g + c * lyapunov_f(params, z)?;
    let mut d = [0.0; 2];
    params.eval(0.0, &[w, z], &mut d);
    let gap = mu - params.f_p(&f, p, z);
    // W - 1 is exact near W = 1, 1 - 1/W is not
    let dl_dt = 2.0 * k * mu * ((w - 1.0) / w) * d[0] + c * gap / z * d[1];
    let a = mu * (w - 1.0);
    let sq = |al: f64| (a + al * p.sqrt() * gap).powi(2);
    let om = omega(am / ap);
    Ok(LyapunovValue {
        l,
        d: om * (a * a + ap * ap * p * gap * gap),
        dl_dt,
        two_squares: -(sq(ap) + sq(am)),
        omega: om,
    })
}

/// `min D / (L - L(1, Z_inf))` over `samples` points on a grid of the box
/// `|ln W|, |ln Z/Z_inf| <= radius`, excluding the centre. Requires
/// `f'(I_inf) < 0`, which makes `(1, Z_inf)` the strict minimum of `L`.
pub fn entropy_dissipation_ratio(params: &ReducedParams, radius: f64, per_axis: usize) -> Result<f64> {
    let (f, p) = wz_parts(params)?;
    let eq = steady_states(params, crate::model::DEFAULT_SEARCH_END)?;
    let z_inf = eq
        .equilibria
        .first()
        .ok_or_else(|| Error::Domain("no drift equilibrium".into()))?
        .y[1];
    if !(params.f_p_derivative(&f, p, z_inf) < 0.0) {
        return Err(Error::Domain("the local inequality needs f'(I_inf) < 0".into()));
    }
    let l_min = lyapunov(params, 1.0, z_inf)?.l;
    let n = per_axis.max(2);
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let a = radius * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
            let b = radius * (2.0 * j as f64 / (n - 1) as f64 - 1.0);
            if a.abs() + b.abs() < 1e-3 * radius {
                continue;
            }
            let v = lyapunov(params, a.exp(), z_inf * b.exp())?;
            best = best.min(v.d / (v.l - l_min));
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------- stability

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    StableNode,
    StableFocus,
    UnstableNode,
    UnstableFocus,
    Saddle,
    /// On the `T^2 = 4 D` boundary, reported rather than assigned.
    DegenerateNode,
    HopfMarginal,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::StableNode => "stable-node",
            Classification::StableFocus => "stable-focus",
            Classification::UnstableNode => "unstable-node",
            Classification::UnstableFocus => "unstable-focus",
            Classification::Saddle => "saddle",
            Classification::DegenerateNode => "degenerate-node",
            Classification::HopfMarginal => "hopf-marginal",
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, Classification::StableNode | Classification::StableFocus)
    }
}

/// Eigenvalue as `(re, im)`.
pub type Complex = (f64, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub system: SystemId,
    pub equilibrium: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    pub fd_jacobian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<Complex>,
    pub trace: f64,
    pub det: f64,
    /// Sum of the principal 2x2 minors (3x3 systems).
    pub minors: Option<f64>,
    pub classification: Classification,
    /// Closed forms written out for the equilibrium, `(T, D, M)`, for
    /// comparison with the values computed from the Jacobian.
    pub closed_form: Option<(f64, f64, Option<f64>)>,
    /// Drift-death: `T > 0`.
    pub instability_condition: Option<bool>,
    /// Drift-death: `psi'(W_inf)`.
    pub psi_prime: Option<f64>,
}

impl StabilityReport {
    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.text("system", self.system.name())
            .text("classification", self.classification.name())
            .num("trace", self.trace)
            .num("det", self.det);
        if let Some(m) = self.minors {
            kv.num("minors", m);
        }
        for (i, (re, im)) in self.eigenvalues.iter().enumerate() {
            kv.num(&format!("eigenvalue.{i}.re"), *re).num(&format!("eigenvalue.{i}.im"), *im);
        }
        for (i, row) in self.jacobian.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                kv.num(&format!("jacobian.{i}{j}"), *v);
            }
        }
        if let Some((t, d, m)) = self.closed_form {
            kv.num("closed_form.trace", t).num("closed_form.det", d);
            if let Some(m) = m {
                kv.num("closed_form.minors", m);
            }
        }
        if let Some(c) = self.instability_condition {
            kv.flag("instability_condition", c);
        }
        if let Some(p) = self.psi_prime {
            kv.num("psi_prime", p);
        }
        kv
    }
}

/// Analytic Jacobian of the reduced right-hand side at `y` (time `t` for
/// controlled systems).
pub fn jacobian(params: &ReducedParams, t: f64, y: &[f64]) -> Result<Vec<Vec<f64>>> {
    let pl = &params.powerlaw;
    let (k, mu, tau) = (pl.k(), pl.mu(), pl.tau());
    Ok(match &params.system {
        System::WOde { v1, .. } => {
            let w = y[0];
            let mut d = [0.0; 2];
            params.eval(t, y, &mut d);
            vec![vec![d[0] / w - tau * w / k * v1.eval(t), 0.0], vec![1.0, 0.0]]
        }
        System::Wz { f, p } | System::WzPerturbed { f, p, .. } => {
            let eps = match &params.system {
                System::WzPerturbed { eps, .. } => eps.eval(t),
                _ => 0.0,
            };
            let (w, z) = (y[0], y[1]);
            let s = 1.0 + eps;
            let gap = mu - params.f_p(f, *p, s * z);
            let dfp = s * params.f_p_derivative(f, *p, s * z);
            vec![
                vec![-gap / k - mu / k * (2.0 * w - 1.0), w / k * dfp],
                vec![-(p - 1.0) * mu * z, -p * gap + p * z * dfp - (p - 1.0) * mu * (w - 1.0)],
            ]
        }
        System::WqDrift { f, p } => {
            let (w, q) = (y[0], y[1]);
            let a = w.powf(k * p) * q;
            let fp = params.f_p(f, *p, a);
            let dfp = params.f_p_derivative(f, *p, a);
            vec![
                vec![(fp - mu * w) / k + w / k * (dfp * k * p * a / w - mu), w / k * dfp * w.powf(k * p)],
                vec![mu * q, mu * (w - 1.0)],
            ]
        }
        System::Wq { f, g, p, q } | System::WqPerturbed { f, g, p, q, .. } => {
            let (ep, eq) = match &params.system {
                System::WqPerturbed { eps_p, eps_q, .. } => (eps_p.eval(t), eps_q.eval(t)),
                _ => (0.0, 0.0),
            };
            let (w, qq) = (y[0], y[1]);
            let a = (1.0 + ep) * w.powf(k * p) * qq;
            let b = (1.0 + eq) * w.powf(k * q) * qq;
            let (fa, dfa) = (f.value(a), f.derivative(a));
            let (gb, dgb) = (g.value(b), g.derivative(b));
            vec![
                vec![(fa - w) / k + w / k * (dfa * k * p * a / w - 1.0), w / k * dfa * a / qq],
                vec![qq * (1.0 - dgb * k * q * b / w), (w - gb) - qq * dgb * b / qq],
            ]
        }
        System::Vwq { f, p, lambda: _, delta } => {
            let (v, w, q) = (y[0], y[1], y[2]);
            let a = (w / mu).powf(k * p) * q;
            let (a_w, a_q) = (k * p * a / w, (w / mu).powf(k * p));
            let (fa, dfa) = (f.value(a), f.derivative(a));
            let wk = w.powf(k);
            vec![
                vec![
                    -(delta + fa * wk * q),
                    -v * (dfa * a_w * wk * q + fa * k * w.powf(k - 1.0) * q),
                    -v * (dfa * a_q * wk * q + fa * wk),
                ],
                vec![w / k * fa, (fa * v - w) / k + w / k * (dfa * a_w * v - 1.0), w / k * dfa * a_q * v],
                vec![0.0, q, w - mu],
            ]
        }
        System::Up { control } => {
            let d = mu * control.r().eval(t);
            vec![vec![-d, pl.beta()], vec![tau * control.v().eval(t), -d]]
        }
    })
}

/// Central-difference Jacobian.
pub fn fd_jacobian(params: &ReducedParams, t: f64, y: &[f64]) -> Vec<Vec<f64>> {
    let n = y.len();
    let mut jac = vec![vec![0.0; n]; n];
    let (mut plus, mut minus) = (vec![0.0; n], vec![0.0; n]);
    for j in 0..n {
        let h = 1e-6 * y[j].abs().max(1e-3);
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[j] += h;
        ym[j] -= h;
        params.eval(t, &yp, &mut plus);
        params.eval(t, &ym, &mut minus);
        for i in 0..n {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

fn quadratic_roots(b: f64, c: f64) -> [Complex; 2] {
    // x^2 + b x + c
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let q = -0.5 * (b + b.signum() * s);
        if q == 0.0 {
            return [(0.0, 0.0), (0.0, 0.0)];
        }
        let (r1, r2) = (q, c / q);
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        [(hi, 0.0), (lo, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [(-0.5 * b, im), (-0.5 * b, -im)]
    }
}

/// Roots of `x^3 - T x^2 + M x - D`.
pub fn cubic_roots(t: f64, m: f64, d: f64) -> [Complex; 3] {
    let p = |x: f64| ((x - t) * x + m) * x - d;
    // one real root lies within the Cauchy bound
    let bound = 1.0 + t.abs().max(m.abs()).max(d.abs());
    let mut r = bisect(p, -bound, bound, 1e-16).unwrap_or(0.0);
    for _ in 0..3 {
        let dp = (3.0 * r - 2.0 * t) * r + m;
        if dp != 0.0 {
            let step = p(r) / dp;
            if step.is_finite() {
                r -= step;
            }
        }
    }
    // deflate: x^2 + (r - T) x + D / r
    let b = r - t;
    let c = if r != 0.0 { d / r } else { m };
    let [a, b2] = quadratic_roots(b, c);
    [a, b2, (r, 0.0)]
}

fn classify_2x2(t: f64, d: f64, tol: f64) -> Classification {
    if d < -tol {
        return Classification::Saddle;
    }
    if t.abs() <= tol && d > tol {
        return Classification::HopfMarginal;
    }
    let disc = t * t - 4.0 * d;
    if disc.abs() <= tol * (1.0 + t * t) {
        return Classification::DegenerateNode;
    }
    match (t < 0.0, disc < 0.0) {
        (true, true) => Classification::StableFocus,
        (true, false) => Classification::StableNode,
        (false, true) => Classification::UnstableFocus,
        (false, false) => Classification::UnstableNode,
    }
}

/// Routh-Hurwitz for `x^3 - T x^2 + M x - D`: all roots in the left half
/// plane iff `T < 0`, `D < 0` and `M T < D`.
pub fn routh_hurwitz_stable(t: f64, m: f64, d: f64) -> bool {
    t < 0.0 && d < 0.0 && m * t < d
}

fn classify_3x3(t: f64, m: f64, d: f64, eig: &[Complex; 3], tol: f64) -> Classification {
    let complex = eig.iter().any(|e| e.1.abs() > tol);
    let max_re = eig.iter().fold(f64::NEG_INFINITY, |a, e| a.max(e.0));
    let min_re = eig.iter().fold(f64::INFINITY, |a, e| a.min(e.0));
    let psi = m * t - d;
    if complex && psi.abs() <= tol * (1.0 + (m * t).abs() + d.abs()) {
        return Classification::HopfMarginal;
    }
    if routh_hurwitz_stable(t, m, d) {
        if complex {
            Classification::StableFocus
        } else {
            Classification::StableNode
        }
    } else if min_re < 0.0 && max_re > 0.0 && !complex {
        Classification::Saddle
    } else if complex {
        Classification::UnstableFocus
    } else if min_re > 0.0 {
        Classification::UnstableNode
    } else {
        Classification::Saddle
    }
}

/// Linear stability of an equilibrium, with the analytic Jacobian checked
/// against central differences.
pub fn local_stability(params: &ReducedParams, equilibrium: &[f64]) -> Result<StabilityReport> {
    let id = params.id();
    if matches!(id, SystemId::WOde) {
        return Err(Error::Unsupported("h has no equilibrium; W-ODE stability is trivial".into()));
    }
    let r = residual(params, equilibrium);
    if r >= 1e-8 {
        return Err(Error::Domain(format!("not an equilibrium: residual {r:e}")));
    }
    let jac = jacobian(params, 0.0, equilibrium)?;
    let fd = fd_jacobian(params, 0.0, equilibrium);
    let scale = jac.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for (a, b) in jac.iter().flatten().zip(fd.iter().flatten()) {
        if (a - b).abs() > JACOBIAN_CHECK * scale {
            return Err(Error::numerical(
                "analytic and difference Jacobians disagree (internal consistency)",
                (a - b).abs() / scale,
            ));
        }
    }
    let tol = 1e-12 * (1.0 + scale * scale);
    let pl = params.powerlaw;
    let (k, mu) = (pl.k(), pl.mu());
    let mut report = StabilityReport {
        system: id,
        equilibrium: equilibrium.to_vec(),
        jacobian: jac.clone(),
        fd_jacobian: fd,
        eigenvalues: Vec::new(),
        trace: 0.0,
        det: 0.0,
        minors: None,
        classification: Classification::DegenerateNode,
        closed_form: None,
        instability_condition: None,
        psi_prime: None,
    };
    if jac.len() == 2 {
        let t = jac[0][0] + jac[1][1];
        let d = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        report.trace = t;
        report.det = d;
        report.eigenvalues = quadratic_roots(-t, d).to_vec();
        report.classification = classify_2x2(t, d, tol);
        if let System::Wq { f, g, p, q } = &params.system {
            let (w, qq) = (equilibrium[0], equilibrium[1]);
            let (a, b) = (w.powf(k * p) * qq, w.powf(k * q) * qq);
            let t_cf = qq * (p * w.powf(k * p) * f.derivative(a) - w.powf(k * q) * g.derivative(b)) - w / k;
            let psi_p = psi_drift_death_derivative(f, g, *p, *q, k, w)?;
            let d_cf = w.powf(k * q + 1.0) * qq * g.derivative(b) * (1.0 - psi_p) / k;
            report.closed_form = Some((t_cf, d_cf, None));
            report.instability_condition = Some(t_cf > 0.0);
            report.psi_prime = Some(psi_p);
        }
    } else {
        let t = jac[0][0] + jac[1][1] + jac[2][2];
        let m = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0] + jac[0][0] * jac[2][2]
            - jac[0][2] * jac[2][0]
            + jac[1][1] * jac[2][2]
            - jac[1][2] * jac[2][1];
        let d = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
            - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
            + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
        let eig = cubic_roots(t, m, d);
        report.trace = t;
        report.det = d;
        report.minors = Some(m);
        report.eigenvalues = eig.to_vec();
        report.classification = classify_3x3(t, m, d, &eig, 1e-10);
        if let System::Vwq { f, p, delta, .. } = &params.system {
            let (v, q) = (equilibrium[0], equilibrium[2]);
            let (fq, dfq) = (f.value(q), f.derivative(q));
            let mk = mu.powf(k);
            let t_cf = -delta - mk * q * fq - mu / k + p * mu * v * q * dfq;
            let d_cf = mu / k * v * q * (delta * dfq - mk * fq * fq);
            let m_cf = -delta * p * v * q * dfq + mu * delta / k + mk * (mu + 1.0 / k) * q * fq
                - mu / k * v * q * dfq;
            report.closed_form = Some((t_cf, d_cf, Some(m_cf)));
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------- Hopf scan

#[derive(Clone, Debug, PartialEq)]
pub struct HopfReport {
    pub equilibrium: Vec<f64>,
    /// `mu <= (k + 1/mu) delta`; when false the sign of `psi(0)` is not guaranteed.
    pub mu_condition: bool,
    pub p0: f64,
    pub p1: f64,
    /// `p1` from the printed closed form `(delta + mu/k + mu^k Q f) / (mu V Q f')`.
    pub p1_closed_form: f64,
    pub psi0: f64,
    pub psi_p1: f64,
    pub det: f64,
    /// `psi''` from the exact second difference; negative means concave.
    pub psi_second: f64,
    pub concave: bool,
    /// `(b, c, a')` at `p0`: `±ib` and `c` are the eigenvalues, `a'` the
    /// crossing speed `psi'(p0) / (2 (b^2 + c^2))`.
    pub transversality: (f64, f64, f64),
    pub samples: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

impl HopfReport {
    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.num("V_inf", self.equilibrium[0])
            .num("W_inf", self.equilibrium[1])
            .num("Q_inf", self.equilibrium[2])
            .flag("mu_condition", self.mu_condition)
            .num("p0", self.p0)
            .num("p1", self.p1)
            .num("p1_closed_form", self.p1_closed_form)
            .num("psi0", self.psi0)
            .num("psi_p1", self.psi_p1)
            .num("det", self.det)
            .num("psi_second", self.psi_second)
            .flag("concave", self.concave)
            .num("transversality.b", self.transversality.0)
            .num("transversality.c", self.transversality.1)
            .num("transversality.a_prime", self.transversality.2);
        for (i, n) in self.notes.iter().enumerate() {
            kv.text(&format!("note.{i}"), n.clone());
        }
        kv
    }

    pub fn write_samples(&self, path: &Path) -> Result<()> {
        write_csv(path, &["p", "psi"], self.samples.iter().map(|(p, s)| [*p, *s]))
    }
}

fn with_p(params: &ReducedParams, p: f64) -> ReducedParams {
    let mut out = params.clone();
    if let System::Vwq { p: q, .. } = &mut out.system {
        *q = p;
    }
    out
}

/// `(T, M, D)` of the prion Jacobian at exponent `p`.
pub fn prion_tmd(params: &ReducedParams, equilibrium: &[f64], p: f64) -> Result<(f64, f64, f64)> {
    let j = jacobian(&with_p(params, p), 0.0, equilibrium)?;
    let t = j[0][0] + j[1][1] + j[2][2];
    let m = j[0][0] * j[1][1] - j[0][1] * j[1][0] + j[0][0] * j[2][2] - j[0][2] * j[2][0]
        + j[1][1] * j[2][2]
        - j[1][2] * j[2][1];
    let d = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
    Ok((t, m, d))
}

/// Locates the Hopf point `p0` of the prion system, where `psi(p) = M T - D`
/// changes sign on `(0, p1)`, and certifies the crossing speed.
pub fn hopf_scan(params: &ReducedParams, p_max: f64, samples: usize) -> Result<HopfReport> {
    let System::Vwq { f, lambda: _, delta, .. } = &params.system else {
        return Err(Error::Config("hopf_scan needs the vwq system".into()));
    };
    let pl = params.powerlaw;
    let (k, mu) = (pl.k(), pl.mu());
    let ss = steady_states(params, crate::model::DEFAULT_SEARCH_END)?;
    let eq = ss
        .equilibria
        .first()
        .ok_or_else(|| Error::Domain("no positive prion equilibrium".into()))?
        .y
        .clone();
    let mut notes = ss.notes.clone();
    if pl.tau() != 1.0 {
        notes.push("mu-condition evaluated with tau = 1 normalisation".into());
    }
    let mu_condition = mu <= (k + 1.0 / mu) * delta;
    if !mu_condition {
        notes.push(format!(
            "mu = {mu} > (k + 1/mu) delta = {}: psi(0) < 0 is not guaranteed",
            (k + 1.0 / mu) * delta
        ));
    }
    let psi = |p: f64| prion_tmd(params, &eq, p).map(|(t, m, d)| m * t - d);
    let (t0, _, d) = prion_tmd(params, &eq, 0.0)?;
    let (t1, _, _) = prion_tmd(params, &eq, 1.0)?;
    let slope = t1 - t0;
    if !(slope > 0.0) {
        return Err(Error::Domain("trace does not increase with p (need f'(Q_inf) > 0)".into()));
    }
    let p1 = -t0 / slope;
    let (v, q) = (eq[0], eq[2]);
    let (fq, dfq) = (f.value(q), f.derivative(q));
    let p1_closed_form = (delta + mu / k + mu.powf(k) * q * fq) / (mu * v * q * dfq);
    let psi0 = psi(0.0)?;
    let psi_p1 = psi(p1)?;
    // psi is quadratic in p, so the second difference is exact up to rounding
    let hstep = p1.max(1.0);
    let psi_second = (psi(2.0 * hstep)? - 2.0 * psi(hstep)? + psi0) / (hstep * hstep);
    let concave = psi_second < 0.0;
    if !(psi0 < 0.0 && psi_p1 > 0.0) {
        return Err(Error::Domain(format!(
            "psi does not change sign on [0, p1]: psi(0) = {psi0}, psi(p1) = {psi_p1}"
        )));
    }
    let p0 = bisect(|p| psi(p).unwrap_or(f64::NAN), 0.0, p1, 1e-14)?;
    let (tp, mp, _) = prion_tmd(params, &eq, p0)?;
    let (tq, mq, _) = prion_tmd(params, &eq, p0 + 1.0)?;
    let dpsi = (mq - mp) * tp + mp * (tq - tp);
    let (b, c) = (mp.max(0.0).sqrt(), tp);
    let a_prime = dpsi / (2.0 * (b * b + c * c));
    let n = samples.max(2);
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let p = p_max * i as f64 / (n - 1) as f64;
        pts.push((p, psi(p)?));
    }
    Ok(HopfReport {
        equilibrium: eq,
        mu_condition,
        p0,
        p1,
        p1_closed_form,
        psi0,
        psi_p1,
        det: d,
        psi_second,
        concave,
        transversality: (b, c, a_prime),
        samples: pts,
        notes,
    })
}

// ---------------------------------------------------------------- limit cycles

/// Poincare section `y[component] = level`, crossed upwards.
#[derive(Clone, Copy, Debug)]
pub struct Section {
    pub component: usize,
    pub level: f64,
    pub burn_in: f64,
    /// Hysteresis band as a fraction of the component's amplitude.
    pub hysteresis: f64,
    pub min_crossings: usize,
    pub max_period_drift: f64,
    pub max_amplitude_drift: f64,
}

impl Section {
    pub fn new(component: usize, level: f64, burn_in: f64) -> Self {
        Self {
            component,
            level,
            burn_in,
            hysteresis: 0.01,
            min_crossings: 5,
            max_period_drift: 0.01,
            max_amplitude_drift: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleReport {
    pub detected: bool,
    pub period: f64,
    /// Peak-to-peak amplitude per component over the last cycle.
    pub amplitude: Vec<f64>,
    pub period_drift: f64,
    pub amplitude_drift: f64,
    pub crossings: Vec<f64>,
    pub section: (usize, f64),
    pub notes: Vec<String>,
}

impl CycleReport {
    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.flag("detected", self.detected)
            .num("period", self.period)
            .num("period_drift", self.period_drift)
            .num("amplitude_drift", self.amplitude_drift)
            .int("crossings", self.crossings.len())
            .int("section.component", self.section.0)
            .num("section.level", self.section.1);
        for (i, a) in self.amplitude.iter().enumerate() {
            kv.num(&format!("amplitude.{i}"), *a);
        }
        for (i, n) in self.notes.iter().enumerate() {
            kv.text(&format!("note.{i}"), n.clone());
        }
        kv
    }
}

pub fn detect_limit_cycle(traj: &Trajectory, section: Section) -> CycleReport {
    let c = section.component;
    let idx: Vec<usize> = (0..traj.len()).filter(|&i| traj.t[i] >= section.burn_in).collect();
    let mut report = CycleReport {
        detected: false,
        period: f64::NAN,
        amplitude: Vec::new(),
        period_drift: f64::NAN,
        amplitude_drift: f64::NAN,
        crossings: Vec::new(),
        section: (c, section.level),
        notes: Vec::new(),
    };
    if idx.len() < 2 {
        report.notes.push("trajectory ends before the burn-in".into());
        return report;
    }
    let vals: Vec<f64> = idx.iter().map(|&i| traj.y[i][c]).collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let band = section.hysteresis * (hi - lo);
    let scale = section.level.abs().max(1e-300);
    if (hi - lo) <= 1e-9 * scale {
        report.notes.push("no oscillation after burn-in".into());
        return report;
    }
    let mut armed = false;
    let mut cross_idx = Vec::new();
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        let (a, b) = (traj.y[i][c], traj.y[j][c]);
        if a < section.level - band {
            armed = true;
        }
        if armed && a < section.level && b >= section.level {
            let s = (section.level - a) / (b - a);
            report.crossings.push(traj.t[i] + s * (traj.t[j] - traj.t[i]));
            cross_idx.push(j);
            armed = false;
        }
    }
    let n = report.crossings.len();
    if n < section.min_crossings {
        report.notes.push(format!("{n} section crossings, {} required", section.min_crossings));
        return report;
    }
    let periods: Vec<f64> = report.crossings[n - 4..].windows(2).map(|w| w[1] - w[0]).collect();
    let mean = periods.iter().sum::<f64>() / 3.0;
    let (pmin, pmax) = periods.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    report.period = mean;
    report.period_drift = (pmax - pmin) / mean;
    let dim = traj.y[0].len();
    let mut amps: Vec<Vec<f64>> = Vec::new();
    for w in cross_idx[cross_idx.len() - 4..].windows(2) {
        let mut a = vec![0.0; dim];
        for (d, slot) in a.iter_mut().enumerate() {
            let (lo, hi) = traj.y[w[0]..=w[1]]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(x, y), v| (x.min(v[d]), y.max(v[d])));
            *slot = hi - lo;
        }
        amps.push(a);
    }
    let mut drift = 0.0f64;
    for d in 0..dim {
        let col: Vec<f64> = amps.iter().map(|a| a[d]).collect();
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if hi > 0.0 {
            drift = drift.max((hi - lo) / hi);
        }
    }
    report.amplitude = amps.last().cloned().unwrap_or_default();
    report.amplitude_drift = drift;
    report.detected = mean > 0.0
        && report.period_drift < section.max_period_drift
        && drift < section.max_amplitude_drift;
    if !report.detected {
        report.notes.push("crossing intervals or amplitudes have not settled".into());
    }
    report
}

// ---------------------------------------------------------------- Floquet

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetReport {
    pub lambda_f: f64,
    /// `Lambda(mean V, mean R)`
    pub lambda_of_means: f64,
    /// Time average of `Lambda(V(t), R(t))`
    pub mean_lambda: f64,
    pub period: f64,
    /// Periodic orbit `(t, W, ∫_0^t (Lambda(W, R) - Lambda_F))` over one period.
    pub orbit: Vec<(f64, f64, f64)>,
    /// `|W(T) - W(0)|` of the returned orbit.
    pub closure: f64,
    pub shooting_iterations: usize,
}

impl FloquetReport {
    pub fn to_kv(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.num("lambda_f", self.lambda_f)
            .num("lambda_of_means", self.lambda_of_means)
            .num("mean_lambda", self.mean_lambda)
            .num("period", self.period)
            .num("W0", self.orbit.first().map(|o| o.1).unwrap_or(f64::NAN))
            .num("closure", self.closure)
            .int("shooting_iterations", self.shooting_iterations);
        kv
    }

    pub fn write_orbit(&self, path: &Path) -> Result<()> {
        write_csv(path, &["t", "W", "log_factor"], self.orbit.iter().map(|(t, w, l)| [*t, *w, *l]))
    }

    /// `W(t)` and `∫_0^t (Lambda(W, R) - Lambda_F)` by linear interpolation,
    /// extended periodically.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let tt = t.rem_euclid(self.period);
        let i = self.orbit.partition_point(|o| o.0 <= tt).clamp(1, self.orbit.len() - 1);
        let (a, b) = (self.orbit[i - 1], self.orbit[i]);
        let s = (tt - a.0) / (b.0 - a.0);
        (a.1 + s * (b.1 - a.1), a.2 + s * (b.2 - a.2))
    }

    /// Relative L1 gap between the Floquet eigenvector at `t = 0` and at
    /// `t = T`, both built from the integrated orbit without wrapping.
    pub fn profile_periodicity(&self, u: &[f64], k: f64, grid: &Grid) -> Result<f64> {
        let (a, b) = (self.orbit[0], self.orbit[self.orbit.len() - 1]);
        let pa = crate::eigen::rescale_eigenvector(u, a.1, k, grid)?;
        let pb: Vec<f64> = crate::eigen::rescale_eigenvector(u, b.1, k, grid)?
            .into_iter()
            .map(|x| x * (b.2 - a.2).exp())
            .collect();
        Ok(grid.l1_distance(&pa, &pb) / grid.integrate(&pa))
    }

    /// Floquet eigenvector `U(W(t); x) e^{∫_0^t (Lambda(W, R) - Lambda_F)}`
    /// built from the unit eigenvector `u`.
    pub fn eigenvector(&self, u: &[f64], k: f64, grid: &Grid, t: f64) -> Result<Vec<f64>> {
        let (w, l) = self.at(t);
        let prof = crate::eigen::rescale_eigenvector(u, w, k, grid)?;
        Ok(prof.into_iter().map(|x| x * l.exp()).collect())
    }
}

/// `Lambda(1, 0)` in the two cases where it is explicit.
fn perron_value(pl: &PowerLaw) -> Result<f64> {
    if pl.nu() == 1.0 {
        Ok(pl.tau())
    } else if pl.nu() == 0.0 && pl.gamma() == 1.0 {
        Ok((pl.tau() * pl.beta()).sqrt())
    } else {
        Err(Error::Unsupported(
            "Floquet comparison needs nu = 1, or nu = 0 with gamma = 1".into(),
        ))
    }
}

/// Periodic solution of `W' = Lambda(W, 0) / k (V - W)` and the resulting
/// Floquet eigenvalue.
pub fn floquet_compare(pl: &PowerLaw, control: &PeriodicControl, dt: f64) -> Result<FloquetReport> {
    let lambda0 = perron_value(pl)?;
    let (k, g, mu) = (pl.k(), pl.gamma(), pl.mu());
    let period = control.period();
    let (vmin, vmax) = control.v().range();
    if !(vmin > 0.0) {
        return Err(Error::Domain("the growth control must stay positive".into()));
    }
    let lam_w = move |w: f64| lambda0 * w.powf(k * g);
    let rhs = |t: f64, y: &[f64], out: &mut [f64]| {
        out[0] = lam_w(y[0]) / k * (control.v().eval(t) - y[0]);
        out[1] = lam_w(y[0]) - mu * control.r().eval(t);
    };
    let opts = Rk4 { dt, stride: 1, halving: false };
    let period_map = |w0: f64| -> Result<f64> {
        let tr = integrate(rhs, &[w0, 0.0], 0.0, period, opts, 1)?;
        Ok(tr.last()[0])
    };
    let mut w = control.v().mean();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..200 {
        iterations += 1;
        let next = period_map(w)?;
        let change = (next - w).abs();
        // the map is a contraction; a full step is the undamped fixed point
        w = next;
        if change <= 1e-13 * w.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        let lo = vmin.min(w);
        let hi = vmax.max(w);
        w = bisect(|w0| period_map(w0).map(|x| x - w0).unwrap_or(f64::NAN), lo, hi, 1e-14)
            .map_err(|e| Error::numerical(format!("shooting did not converge ({e}); last W0 = {w}"), f64::NAN))?;
    }
    let tr = integrate(rhs, &[w, 0.0], 0.0, period, opts, 1)?;
    let lambda_f = tr.last()[1] / period;
    let orbit = tr
        .t
        .iter()
        .zip(&tr.y)
        .map(|(t, y)| (*t, y[0], y[1] - lambda_f * t))
        .collect::<Vec<_>>();
    let closure = (tr.last()[0] - w).abs();
    let intervals = ((period / dt).ceil() as usize).max(1000);
    let mean_lambda =
        composite_simpson(|t| lam_w(control.v().eval(t)) - mu * control.r().eval(t), 0.0, period, intervals)
            / period;
    let lambda_of_means = lam_w(control.v().mean()) - mu * control.r().mean();
    Ok(FloquetReport {
        lambda_f,
        lambda_of_means,
        mean_lambda,
        period,
        orbit,
        closure,
        shooting_iterations: iterations,
    })
}

/// `floquet_compare` over many controls.
pub fn floquet_sweep(
    exec: crate::Execution,
    pl: &PowerLaw,
    controls: &[PeriodicControl],
    dt: f64,
) -> Vec<Result<FloquetReport>> {
    crate::exec::map(exec, controls, |c| floquet_compare(pl, c, dt))
}

/// `hopf_scan` across a family of prion parameter sets.
pub fn hopf_sweep(
    exec: crate::Execution,
    params: &[ReducedParams],
    p_max: f64,
    samples: usize,
) -> Vec<Result<HopfReport>> {
    crate::exec::map(exec, params, |p| hopf_scan(p, p_max, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_params, Signal};

    fn fig1(p: f64) -> ReducedParams {
        let pl = derive_params(1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        ReducedParams::new(pl, 2.0, System::Wz { f: Nonlinearity::ExpDecay { a: 2.0 }, p }).unwrap()
    }

    fn fig2() -> ReducedParams {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        ReducedParams::new(
            pl,
            1.0,
            System::Wq {
                f: Nonlinearity::ShiftedGaussianQuartic,
                g: Nonlinearity::Linear { c: 0.9 },
                p: 2.0,
                q: 5.0,
            },
        )
        .unwrap()
    }

    fn fig3(p: f64) -> ReducedParams {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        ReducedParams::new(
            pl,
            1.0,
            System::Vwq { f: Nonlinearity::PrionSigmoid { a: 6.3, b: 1.1, s: 20.0 }, p, lambda: 0.9, delta: 0.2 },
        )
        .unwrap()
    }

    #[test]
    fn drift_steady_state_is_ln2() {
        let r = steady_states(&fig1(0.5), 50.0).unwrap();
        assert_eq!(r.equilibria.len(), 1);
        assert!((r.roots[0] - 2f64.ln()).abs() < 1e-14);
        assert!(r.equilibria[0].residual < EQUILIBRIUM_RESIDUAL);
    }

    #[test]
    fn drift_death_with_equal_exponents_reduces_to_f() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let f = Nonlinearity::ShiftedGaussianQuartic;
        let params = ReducedParams::new(pl, 1.0, System::Wq { f, g: Nonlinearity::Linear { c: 1.0 }, p: 2.0, q: 2.0 }).unwrap();
        let r = steady_states(&params, 50.0).unwrap();
        let w = r.roots[0];
        assert!((f.value(w) - w).abs() < 1e-12);
    }

    #[test]
    fn figure_two_equilibrium() {
        let r = steady_states(&fig2(), 50.0).unwrap();
        let e = &r.equilibria[0];
        assert!((e.y[0] - 1.039878).abs() < 1e-6, "{:?}", e.y);
        assert!((e.y[1] - 0.950230).abs() < 1e-6, "{:?}", e.y);
        let s = local_stability(&fig2(), &e.y).unwrap();
        let (t, d, _) = s.closed_form.unwrap();
        assert!(t > 0.0 && d > 0.0);
        assert!((t - s.trace).abs() < 1e-10 && (d - s.det).abs() < 1e-10);
        assert!(!s.classification.is_stable());
    }

    #[test]
    fn figure_one_focus_and_node() {
        for (p, want) in [(0.5, Classification::StableFocus), (2.0, Classification::StableNode)] {
            let params = fig1(p);
            let e = steady_states(&params, 50.0).unwrap().equilibria[0].y.clone();
            let s = local_stability(&params, &e).unwrap();
            assert_eq!(s.classification, want, "p = {p}");
        }
    }

    #[test]
    fn omega_values() {
        assert_eq!(omega_fn(0.0), 0.0);
        assert!((omega_fn(-2.0) - 2.0).abs() < 1e-15);
        for alpha in [-3.0, -1.0, 0.5, 1.0, 2.0, 3.0, 5.0] {
            // a = 1, b = s in the quadratic form, plus the b-axis at s = inf
            let g = |s: f64| ((1.0 + s).powi(2) + (1.0 + alpha * s).powi(2)) / (1.0 + s * s);
            let min = (0..400_001)
                .map(|i| g(-200.0 + i as f64 * 1e-3))
                .fold(1.0 + alpha * alpha, f64::min);
            assert!((omega(alpha) - min).abs() < 1e-6, "alpha {alpha}: {} vs {min}", omega(alpha));
            if alpha >= -1.0 {
                assert!((omega(alpha) - omega_fn(alpha - 1.0)).abs() < 1e-12, "alpha {alpha}");
            }
        }
    }

    #[test]
    fn lyapunov_identity_and_stationary_point() {
        let params = fig1(2.0);
        let z_inf = steady_states(&params, 50.0).unwrap().equilibria[0].y[1];
        let at = lyapunov(&params, 1.0, z_inf).unwrap();
        assert!(at.d.abs() < 1e-20 && at.dl_dt.abs() < 1e-20);
        for (w, z) in [(0.5, 0.1), (1.5, 0.5), (2.0, 2.0)] {
            let v = lyapunov(&params, w, z).unwrap();
            assert!((v.dl_dt - v.two_squares).abs() <= 1e-10 * v.two_squares.abs());
            assert!(v.dl_dt <= -v.d * (1.0 - 1e-12));
        }
        assert!(lyapunov(&fig1(1.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn prion_hopf_scan() {
        let rep = hopf_scan(&fig3(4.0), 8.0, 17).unwrap();
        assert!((rep.equilibrium[2] - 0.635417).abs() < 1e-6);
        assert!(rep.psi0 < 0.0 && rep.psi_p1 > 0.0 && rep.concave);
        assert!(rep.p0 > 0.0 && rep.p0 < rep.p1 && rep.p0 < 4.0);
        assert!((rep.p1 - rep.p1_closed_form).abs() < 1e-10);
        assert!(rep.transversality.2 > 0.0);
        assert!((rep.psi_p1 + rep.det).abs() < 1e-10);
        let below = local_stability(&fig3(rep.p0 - 0.1), &rep.equilibrium).unwrap();
        let above = local_stability(&fig3(rep.p0 + 0.1), &rep.equilibrium).unwrap();
        assert!(below.classification.is_stable());
        assert_eq!(above.classification, Classification::UnstableFocus);
        let (t, d, m) = below.closed_form.unwrap();
        assert!((t - below.trace).abs() < 1e-10 && (d - below.det).abs() < 1e-10);
        assert!((m.unwrap() - below.minors.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn fixed_trajectory_is_not_a_cycle() {
        let params = fig2();
        let e = steady_states(&params, 50.0).unwrap().equilibria[0].y.clone();
        let mut tr = Trajectory::default();
        for i in 0..1000 {
            tr.t.push(i as f64 * 0.1);
            tr.y.push(e.clone());
        }
        let _ = &params;
        assert!(!detect_limit_cycle(&tr, Section::new(0, e[0], 10.0)).detected);
    }

    #[test]
    fn floquet_constant_control() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let c = PeriodicControl::constant(1.7, 0.4).unwrap();
        let r = floquet_compare(&pl, &c, 1e-3).unwrap();
        assert!((r.lambda_f - (1.7 - 0.4)).abs() < 1e-12);
        let pl0 = derive_params(1.0, 0.0, 1.0, 1.0, 0.1).unwrap();
        let v = PeriodicControl::new(Signal::sine(1.0, 0.9, 1.0), Signal::constant(1.0)).unwrap();
        let r = floquet_compare(&pl0, &v, 1e-3).unwrap();
        assert!(r.mean_lambda < r.lambda_f && r.lambda_f < r.lambda_of_means);
    }

    #[test]
    fn cubic_roots_are_roots() {
        for (t, m, d) in [(-1.0, 2.0, -3.0), (0.5, 0.1, 0.2), (-3.0, 3.0, -1.0)] {
            for (re, im) in cubic_roots(t, m, d) {
                // evaluate x^3 - T x^2 + M x - D at re + i im
                let (x, y) = (re, im);
                let (x2, y2) = (x * x - y * y, 2.0 * x * y);
                let (x3, y3) = (x2 * x - y2 * y, x2 * y + y2 * x);
                let pr = x3 - t * x2 + m * x - d;
                let pi = y3 - t * y2 + m * y;
                assert!(pr.hypot(pi) < 1e-9, "{t} {m} {d}: {re} {im}");
            }
        }
    }

    #[test]
    fn local_entropy_dissipation_positive() {
        for p in [0.5, 2.0, 5.0] {
            let r = entropy_dissipation_ratio(&fig1(p), 0.5, 21).unwrap();
            assert!(r > 0.0 && r.is_finite(), "p = {p}: {r}");
        }
    }

    #[test]
    fn floquet_profile_is_periodic() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let grid = Grid::auto(&pl, 400, (0.5, 2.0)).unwrap();
        let ep = crate::eigen::solve_perron(&pl, &crate::model::Kernel::constant_two(), &grid, 1e-8).unwrap();
        let c = PeriodicControl::new(Signal::sine(1.0, 0.5, 1.0), Signal::constant(1.0)).unwrap();
        let r = floquet_compare(&pl, &c, 1e-3).unwrap();
        assert!((r.lambda_f - r.lambda_of_means).abs() < 1e-4);
        assert!(r.profile_periodicity(&ep.u, pl.k(), &grid).unwrap() < 1e-8);
        let a = r.eigenvector(&ep.u, pl.k(), &grid, 0.3).unwrap();
        let b = r.eigenvector(&ep.u, pl.k(), &grid, 1.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweeps_agree_across_policies() {
        let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let cs: Vec<_> = [0.1, 0.3, 0.5]
            .iter()
            .map(|a| PeriodicControl::new(Signal::sine(1.0, *a, 1.0), Signal::constant(1.0)).unwrap())
            .collect();
        let a: Vec<f64> = floquet_sweep(crate::Execution::Sequential, &pl, &cs, 1e-3)
            .into_iter()
            .map(|r| r.unwrap().lambda_f)
            .collect();
        let b: Vec<f64> = floquet_sweep(crate::Execution::Parallel, &pl, &cs, 1e-3)
            .into_iter()
            .map(|r| r.unwrap().lambda_f)
            .collect();
        assert_eq!(a, b);
    }

    fn oracle_eigs(t: f64, m: f64, d: f64) -> Vec<nalgebra::Complex<f64>> {
        // companion matrix of x^3 - T x^2 + M x - D
        let a = nalgebra::Matrix3::new(t, -m, d, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        a.complex_eigenvalues().iter().copied().collect()
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn routh_hurwitz_matches_eigenvalues(
            r in -3.0f64..3.0, re in -3.0f64..3.0, im in 0.0f64..3.0,
        ) {
            // build coefficients from roots r and re ± i im, so both stable
            // and unstable systems are sampled
            prop_assume!(r.abs() > 1e-3 && re.abs() > 1e-3);
            let t = r + 2.0 * re;
            let m = 2.0 * r * re + re * re + im * im;
            let d = r * (re * re + im * im);
            let stable = oracle_eigs(t, m, d).iter().all(|z| z.re < 0.0);
            prop_assert_eq!(routh_hurwitz_stable(t, m, d), stable);
            let mut ours: Vec<f64> = cubic_roots(t, m, d).iter().map(|z| z.0).collect();
            let mut theirs: Vec<f64> = oracle_eigs(t, m, d).iter().map(|z| z.re).collect();
            ours.sort_by(f64::total_cmp);
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.iter().zip(&theirs) {
                prop_assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{:?} vs {:?}", ours, theirs);
            }
        }

        #[test]
        fn two_by_two_classification_is_consistent(t in -4.0f64..4.0, d in -4.0f64..4.0) {
            let c = classify_2x2(t, d, 1e-12);
            let disc = t * t - 4.0 * d;
            match c {
                Classification::Saddle => prop_assert!(d < 0.0),
                Classification::StableFocus => prop_assert!(t < 0.0 && disc < 0.0),
                Classification::StableNode => prop_assert!(t < 0.0 && disc > 0.0 && d > 0.0),
                Classification::UnstableFocus => prop_assert!(t > 0.0 && disc < 0.0),
                Classification::UnstableNode => prop_assert!(t > 0.0 && disc > 0.0 && d > 0.0),
                Classification::DegenerateNode | Classification::HopfMarginal => {}
            }
        }

        #[test]
        fn omega_inequality(a in -10.0f64..10.0, b in -10.0f64..10.0, alpha in -5.0f64..5.0) {
            let om = omega(alpha);
            prop_assert!((a + b).powi(2) + (a + alpha * b).powi(2) >= om * (a * a + b * b) - 1e-12 * (a * a + b * b));
        }

        #[test]
        fn jacobians_match_differences(w in 0.3f64..3.0, z in 0.05f64..3.0, p in 0.3f64..4.0) {
            for params in [fig1(p), fig2()] {
                let y = [w, z];
                let j = jacobian(&params, 0.0, &y).unwrap();
                let fd = fd_jacobian(&params, 0.0, &y);
                for (a, b) in j.iter().flatten().zip(fd.iter().flatten()) {
                    prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{} vs {}", a, b);
                }
            }
            let pl = derive_params(1.0, 1.0, 1.0, 0.5, 0.7).unwrap();
            let off = ReducedParams::new(
                pl,
                1.0,
                System::Vwq { f: Nonlinearity::PrionSigmoid { a: 6.3, b: 1.1, s: 20.0 }, p, lambda: 0.9, delta: 0.2 },
            )
            .unwrap();
            for params in [fig3(p), off] {
                let y = [w, z, 0.5 * (w + z)];
                let j = jacobian(&params, 0.0, &y).unwrap();
                let fd = fd_jacobian(&params, 0.0, &y);
                for (a, b) in j.iter().flatten().zip(fd.iter().flatten()) {
                    prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{} vs {}", a, b);
                }
            }
        }
    }
}
