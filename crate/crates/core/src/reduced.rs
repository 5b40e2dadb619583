//! Finite-dimensional systems obtained by restricting the PDE to the
//! eigenmanifold, the closed-form Bernoulli solution of the dilation ODE, and
//! a fixed-step RK4 integrator shared by every system.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::model::{Nonlinearity, PeriodicControl, PowerLaw, Signal};
use crate::numerics::composite_simpson;

pub const DEFAULT_DT: f64 = 1e-3;
/// Sup-norm of the right-hand side beyond which a step is subdivided.
pub const HALVING_THRESHOLD: f64 = 1e3;
const MAX_HALVINGS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemId {
    /// `(W, h)`: dilation ODE driven by two velocity controls, with `h' = W`.
    WOde,
    /// `(W, Z)` of the nonlinear drift problem.
    Wz,
    WzPerturbed,
    /// `(W, Q)` of the nonlinear drift problem, before `Z = W^{kp} Q`.
    WqDrift,
    /// `(W, Q)` of the drift-death problem.
    Wq,
    WqPerturbed,
    /// `(V, W, Q)` of the prion problem.
    Vwq,
    /// Zeroth and first moments for `nu = 0`, `gamma = 1`.
    Up,
}

impl SystemId {
    pub fn name(self) -> &'static str {
        match self {
            SystemId::WOde => "w-ode",
            SystemId::Wz => "wz",
            SystemId::WzPerturbed => "wz-perturbed",
            SystemId::WqDrift => "wq-drift",
            SystemId::Wq => "wq",
            SystemId::WqPerturbed => "wq-perturbed",
            SystemId::Vwq => "vwq",
            SystemId::Up => "up",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "w-ode" => SystemId::WOde,
            "wz" => SystemId::Wz,
            "wz-perturbed" => SystemId::WzPerturbed,
            "wq-drift" => SystemId::WqDrift,
            "wq" => SystemId::Wq,
            "wq-perturbed" => SystemId::WqPerturbed,
            "vwq" => SystemId::Vwq,
            "up" => SystemId::Up,
            other => return Err(Error::Config(format!("unknown system '{other}'"))),
        })
    }

    pub fn components(self) -> &'static [&'static str] {
        match self {
            SystemId::WOde => &["W", "h"],
            SystemId::Wz | SystemId::WzPerturbed => &["W", "Z"],
            SystemId::WqDrift | SystemId::Wq | SystemId::WqPerturbed => &["W", "Q"],
            SystemId::Vwq => &["V", "W", "Q"],
            SystemId::Up => &["U", "P"],
        }
    }

    /// Components required to stay positive; `h` starts at zero.
    pub fn positive(self) -> usize {
        match self {
            SystemId::WOde => 1,
            other => other.components().len(),
        }
    }
}

/// External relative error `eps(t)` fed into the perturbed systems.
#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    /// `eps0 e^{-rate t}`
    Exponential { eps0: f64, rate: f64 },
    /// Linear interpolation of samples, constant outside.
    Table { t: Arc<Vec<f64>>, v: Arc<Vec<f64>> },
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Exponential { eps0, rate } => write!(f, "Exponential({eps0}, {rate})"),
            Forcing::Table { t, .. } => write!(f, "Table({} samples)", t.len()),
        }
    }
}

impl Forcing {
    pub fn table(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != v.len() || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("forcing table needs increasing times and matching values".into()));
        }
        Ok(Forcing::Table { t: Arc::new(t), v: Arc::new(v) })
    }

    pub fn eval(&self, time: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Exponential { eps0, rate } => eps0 * (-rate * time).exp(),
            Forcing::Table { t, v } => {
                let n = t.len();
                if time <= t[0] {
                    return v[0];
                }
                if time >= t[n - 1] {
                    return v[n - 1];
                }
                let i = t.partition_point(|s| *s <= time) - 1;
                let a = (time - t[i]) / (t[i + 1] - t[i]);
                v[i] + a * (v[i + 1] - v[i])
            }
        }
    }
}

/// System-specific data.
#[derive(Clone, Debug)]
pub enum System {
    WOde { v1: Signal, v2: Signal },
    Wz { f: Nonlinearity, p: f64 },
    WzPerturbed { f: Nonlinearity, p: f64, eps: Forcing },
    WqDrift { f: Nonlinearity, p: f64 },
    Wq { f: Nonlinearity, g: Nonlinearity, p: f64, q: f64 },
    WqPerturbed {
        f: Nonlinearity,
        g: Nonlinearity,
        p: f64,
        q: f64,
        eps_p: Forcing,
        eps_q: Forcing,
    },
    Vwq { f: Nonlinearity, p: f64, lambda: f64, delta: f64 },
    Up { control: PeriodicControl },
}

impl System {
    pub fn id(&self) -> SystemId {
        match self {
            System::WOde { .. } => SystemId::WOde,
            System::Wz { .. } => SystemId::Wz,
            System::WzPerturbed { .. } => SystemId::WzPerturbed,
            System::WqDrift { .. } => SystemId::WqDrift,
            System::Wq { .. } => SystemId::Wq,
            System::WqPerturbed { .. } => SystemId::WqPerturbed,
            System::Vwq { .. } => SystemId::Vwq,
            System::Up { .. } => SystemId::Up,
        }
    }
}

/// A reduced system together with the coefficients it inherits from the PDE.
#[derive(Clone, Debug)]
pub struct ReducedParams {
    pub powerlaw: PowerLaw,
    /// `M_p[U]` of the unit eigenvector, used by `f_p`.
    pub mp: f64,
    pub system: System,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    pub system: SystemId,
    pub t: f64,
    pub y: Vec<f64>,
}

impl ReducedParams {
    pub fn new(powerlaw: PowerLaw, mp: f64, system: System) -> Result<Self> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
            }
        };
        match &system {
            System::WOde { .. } => {}
            System::Wz { p, .. } | System::WzPerturbed { p, .. } | System::WqDrift { p, .. } => {
                nonneg("p", *p)?;
                if !(mp > 0.0) {
                    return Err(Error::Config("f_p needs M_p[U] > 0".into()));
                }
            }
            System::Wq { p, q, .. } | System::WqPerturbed { p, q, .. } => {
                nonneg("p", *p)?;
                nonneg("q", *q)?;
            }
            System::Vwq { p, lambda, delta, .. } => {
                nonneg("p", *p)?;
                if !(*lambda > 0.0 && *delta > 0.0) {
                    return Err(Error::Config("prion system needs lambda, delta > 0".into()));
                }
                if !(powerlaw.mu() > 0.0) {
                    return Err(Error::Config("prion system needs mu > 0".into()));
                }
            }
            System::Up { .. } => {
                if powerlaw.nu() != 0.0 || powerlaw.gamma() != 1.0 {
                    return Err(Error::Unsupported(
                        "the closed moment system needs nu = 0 and gamma = 1".into(),
                    ));
                }
            }
        }
        Ok(Self { powerlaw, mp, system })
    }

    pub fn id(&self) -> SystemId {
        self.system.id()
    }

    /// `f_p(I) = f(I mu^{kp} M_p[U])`
    pub fn f_p(&self, f: &Nonlinearity, p: f64, z: f64) -> f64 {
        f.value(z * self.powerlaw.mu().powf(self.powerlaw.k() * p) * self.mp)
    }

    pub fn f_p_derivative(&self, f: &Nonlinearity, p: f64, z: f64) -> f64 {
        let s = self.powerlaw.mu().powf(self.powerlaw.k() * p) * self.mp;
        s * f.derivative(z * s)
    }

    /// Right-hand side at `(t, y)`.
    pub fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let pl = &self.powerlaw;
        let (k, mu, tau) = (pl.k(), pl.mu(), pl.tau());
        match &self.system {
            System::WOde { v1, v2 } => {
                let w = y[0];
                out[0] = tau * w / k * (v2.eval(t) - v1.eval(t) * w);
                out[1] = w;
            }
            System::Wz { f, p } => self.wz(*f, *p, 0.0, y, out),
            System::WzPerturbed { f, p, eps } => self.wz(*f, *p, eps.eval(t), y, out),
            System::WqDrift { f, p } => {
                let (w, q) = (y[0], y[1]);
                out[0] = w / k * (self.f_p(f, *p, w.powf(k * p) * q) - mu * w);
                out[1] = mu * q * (w - 1.0);
            }
            System::Wq { f, g, p, q } => self.wq(f, g, *p, *q, 0.0, 0.0, y, out),
            System::WqPerturbed { f, g, p, q, eps_p, eps_q } => {
                self.wq(f, g, *p, *q, eps_p.eval(t), eps_q.eval(t), y, out)
            }
            System::Vwq { f, p, lambda, delta } => {
                let (v, w, q) = (y[0], y[1], y[2]);
                let fa = f.value((w / mu).powf(k * p) * q);
                out[0] = lambda - v * (delta + fa * w.powf(k) * q);
                out[1] = w / k * (fa * v - w);
                out[2] = q * (w - mu);
            }
            System::Up { control } => {
                let d = mu * control.r().eval(t);
                out[0] = -d * y[0] + pl.beta() * y[1];
                out[1] = tau * control.v().eval(t) * y[0] - d * y[1];
            }
        }
    }

    fn wz(&self, f: Nonlinearity, p: f64, eps: f64, y: &[f64], out: &mut [f64]) {
        let (k, mu) = (self.powerlaw.k(), self.powerlaw.mu());
        let (w, z) = (y[0], y[1]);
        let gap = mu - self.f_p(&f, p, (1.0 + eps) * z);
        out[0] = -w * gap / k - mu / k * w * (w - 1.0);
        out[1] = -p * z * gap - (p - 1.0) * mu * z * (w - 1.0);
    }

    #[allow(clippy::too_many_arguments)]
    fn wq(&self, f: &Nonlinearity, g: &Nonlinearity, p: f64, q: f64, ep: f64, eq: f64, y: &[f64], out: &mut [f64]) {
        let k = self.powerlaw.k();
        let (w, qq) = (y[0], y[1]);
        out[0] = w / k * (f.value((1.0 + ep) * w.powf(k * p) * qq) - w);
        out[1] = qq * (w - g.value((1.0 + eq) * w.powf(k * q) * qq));
    }

    /// Derivative vector at `state`, checking that the state belongs to this
    /// system.
    pub fn rhs(&self, state: &ReducedState) -> Result<Vec<f64>> {
        if state.system != self.id() {
            return Err(Error::Config(format!(
                "state of system '{}' passed to '{}'",
                state.system.name(),
                self.id().name()
            )));
        }
        if state.y.len() != self.id().components().len() {
            return Err(Error::Config("state has the wrong dimension".into()));
        }
        let mut out = vec![0.0; state.y.len()];
        self.eval(state.t, &state.y, &mut out);
        Ok(out)
    }

    pub fn integrate(&self, y0: &[f64], t0: f64, t_end: f64, opts: Rk4) -> Result<Trajectory> {
        let id = self.id();
        if y0.len() != id.components().len() {
            return Err(Error::Config("initial state has the wrong dimension".into()));
        }
        let mut traj = integrate(|t, y, out| self.eval(t, y, out), y0, t0, t_end, opts, id.positive())?;
        traj.system = Some(id);
        traj.names = id.components().iter().map(|s| s.to_string()).collect();
        Ok(traj)
    }
}

/// Fixed-step classical Runge-Kutta options.
#[derive(Clone, Copy, Debug)]
pub struct Rk4 {
    pub dt: f64,
    /// Store every `stride`-th step (the final state is always stored).
    pub stride: usize,
    /// Subdivide steps where the right-hand side exceeds [`HALVING_THRESHOLD`].
    pub halving: bool,
}

impl Default for Rk4 {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, stride: 1, halving: true }
    }
}

impl Rk4 {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Default::default() }
    }
    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub system: Option<SystemId>,
    pub names: Vec<String>,
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.y.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.y.iter().map(|y| y[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Writes `t` and the components; the header names the system in a
    /// leading comment line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["t"];
        header.extend(self.names.iter().map(|s| s.as_str()));
        let rows = self.t.iter().zip(&self.y).map(|(t, y)| {
            let mut r = Vec::with_capacity(y.len() + 1);
            r.push(*t);
            r.extend_from_slice(y);
            r
        });
        write_csv(path, &header, rows)?;
        if let Some(id) = self.system {
            let body = std::fs::read_to_string(path)?;
            std::fs::write(path, format!("# system={}\n{body}", id.name()))?;
        }
        Ok(())
    }
}

fn rk4_step<F: Fn(f64, &[f64], &mut [f64])>(f: &F, t: f64, y: &mut [f64], h: f64, k: &mut [Vec<f64>; 5]) {
    let n = y.len();
    let [k1, k2, k3, k4, tmp] = k;
    f(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, tmp, k4);
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` with equal RK4 steps no
/// longer than `opts.dt`. The first `positive` components must stay
/// positive.
pub fn integrate<F>(f: F, y0: &[f64], t0: f64, t_end: f64, opts: Rk4, positive: usize) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(opts.dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {}", opts.dt)));
    }
    if !(t_end >= t0) {
        return Err(Error::Domain(format!("t_end {t_end} precedes t0 {t0}")));
    }
    if y0.iter().take(positive).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("initial state must be positive".into()));
    }
    let n = y0.len();
    let steps = (((t_end - t0) / opts.dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { (t_end - t0) / steps as f64 } else { 0.0 };
    let stride = opts.stride.max(1);
    let mut y = y0.to_vec();
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut traj = Trajectory {
        system: None,
        names: (0..n).map(|i| format!("y{i}")).collect(),
        t: vec![t0],
        y: vec![y.clone()],
    };
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let mut pieces = 1usize;
        if opts.halving {
            f(t, &y, &mut k[0]);
            let sup = k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut m = 0;
            while sup / (1u64 << m) as f64 > HALVING_THRESHOLD && m < MAX_HALVINGS {
                m += 1;
            }
            pieces = 1 << m;
        }
        let hh = h / pieces as f64;
        let prev = y.clone();
        for j in 0..pieces {
            rk4_step(&f, t + j as f64 * hh, &mut y, hh, &mut k);
        }
        let bad = y.iter().any(|v| !v.is_finite()) || y.iter().take(positive).any(|v| !(*v > 0.0));
        if bad {
            return Err(Error::numerical(
                format!("trajectory left the positive orthant near t = {t}; last valid state {prev:?}"),
                f64::NAN,
            ));
        }
        if (s + 1) % stride == 0 || s + 1 == steps {
            traj.t.push(t0 + (s + 1) as f64 * h);
            traj.y.push(y.clone());
        }
    }
    Ok(traj)
}

/// Closed-form solution of `W' = tau W / k (V2 - V1 W)`:
/// `W = W0 e^{a I2(t)} / (1 + a W0 ∫_0^t V1(s) e^{a I2(s)} ds)` with
/// `a = tau / k` and `I2 = ∫ V2`.
pub fn bernoulli_w(w0: f64, v1: &Signal, v2: &Signal, t: f64, pl: &PowerLaw) -> Result<f64> {
    if !(w0 > 0.0) {
        return Err(Error::Domain(format!("W0 must be positive, got {w0}")));
    }
    let a = pl.tau() / pl.k();
    let intervals = ((2000.0 * t.abs()).ceil() as usize).max(1000);
    let inner = composite_simpson(|s| v1.eval(s) * (a * v2.integral(s)).exp(), 0.0, t, intervals);
    let denom = 1.0 + a * w0 * inner;
    if !(denom > 0.0) {
        return Err(Error::numerical("Bernoulli denominator is not positive", denom));
    }
    Ok(w0 * (a * v2.integral(t)).exp() / denom)
}

/// Moments of the manifold solution `U(W; .) e^{∫ Lambda(W, R)}` and the
/// right-hand side of their evolution law, sampled along a trajectory.
#[derive(Clone, Debug, Default)]
pub struct MomentSeries {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    /// `M_alpha[U] W^{k alpha} e^{∫ Lambda(W, R)}`
    pub value: Vec<f64>,
    /// `alpha Lambda a_alpha V M_{alpha+nu-1} + (1-alpha) Lambda b_alpha M_{alpha+gamma} - mu R M_alpha`
    pub rhs: Vec<f64>,
}

/// Integrates `W' = Lambda(W, 0) / k (V - W)` together with
/// `∫ Lambda(W, R)` and evaluates the reduced moments of order `alpha`.
/// `moment(beta)` must return `M_beta[U]` of the unit eigenvector and
/// `lambda0 = Lambda(1, 0)`.
#[allow(clippy::too_many_arguments)]
pub fn moments_reduced<M>(
    pl: &PowerLaw,
    lambda0: f64,
    control: &PeriodicControl,
    w0: f64,
    alpha: f64,
    moment: M,
    t_end: f64,
    opts: Rk4,
) -> Result<MomentSeries>
where
    M: Fn(f64) -> Option<f64>,
{
    let (k, g, nu, mu) = (pl.k(), pl.gamma(), pl.nu(), pl.mu());
    let need = |b: f64| {
        moment(b).ok_or_else(|| Error::Config(format!("eigen moment M_{b} is not available")))
    };
    let m_a = need(alpha)?;
    let m_grow = if alpha != 0.0 { Some(need(alpha + nu - 1.0)?) } else { None };
    let m_frag = if alpha != 1.0 { Some(need(alpha + g)?) } else { None };
    let traj = integrate(
        |t, y, out| {
            let w = y[0];
            let lam = w.powf(k * g) * lambda0;
            out[0] = lam / k * (control.v().eval(t) - w);
            out[1] = lam - mu * control.r().eval(t);
        },
        &[w0, 0.0],
        0.0,
        t_end,
        opts,
        1,
    )?;
    let mut out = MomentSeries::default();
    for (t, y) in traj.t.iter().zip(&traj.y) {
        let (w, int) = (y[0], y[1]);
        let e = int.exp();
        let big = |beta: f64, m: f64| m * w.powf(k * beta) * e;
        let value = big(alpha, m_a);
        let mut rhs = -mu * control.r().eval(*t) * value;
        if let Some(m) = m_grow {
            rhs += alpha * lambda0 * (m_a / m) * control.v().eval(*t) * big(alpha + nu - 1.0, m);
        }
        if let Some(m) = m_frag {
            rhs += (1.0 - alpha) * lambda0 * (m_a / m) * big(alpha + g, m);
        }
        out.t.push(*t);
        out.w.push(w);
        out.value.push(value);
        out.rhs.push(rhs);
    }
    Ok(out)
}

/// Pushes the `(W, Q)` drift right-hand side through `Z = W^{kp} Q`.
pub fn pushforward_wq_to_wz(params: &ReducedParams, w: f64, q: f64) -> Result<[f64; 2]> {
    let System::WqDrift { p, .. } = params.system else {
        return Err(Error::Config("pushforward needs the wq-drift system".into()));
    };
    let k = params.powerlaw.k();
    let mut d = [0.0; 2];
    params.eval(0.0, &[w, q], &mut d);
    let z_w = k * p * w.powf(k * p - 1.0) * q;
    Ok([d[0], z_w * d[0] + w.powf(k * p) * d[1]])
}
