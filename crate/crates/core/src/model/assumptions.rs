use super::Nonlinearity;
use crate::error::Result;
use crate::numerics::{scan_roots, RootScan};

/// Default right end of the search interval standing in for infinity.
pub const DEFAULT_SEARCH_END: f64 = 50.0;
/// Roots closer than this are reported as one.
pub const ROOT_MERGE_TOL: f64 = 1e-6;

const SCAN_SAMPLES: usize = 20_001;

#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    /// Root set of the relevant scalar equation.
    pub roots: Vec<f64>,
    /// Numerical proxy for the behaviour at infinity, when meaningful.
    pub limsup_proxy: Option<f64>,
    pub isolated: bool,
    pub pass: bool,
    /// One line per failed or noteworthy condition.
    pub notes: Vec<String>,
}

impl AssumptionReport {
    fn from_scan(scan: RootScan) -> (Vec<f64>, bool, Option<String>) {
        match scan {
            RootScan::Isolated(r) => (r, true, None),
            RootScan::NotIsolated { from, to } => (
                Vec::new(),
                false,
                Some(format!("root set is not finite: zero on [{from}, {to}]")),
            ),
        }
    }
}

/// Checks that `{I : f(I) = mu}` is finite on `[0, X]` and that the maximum
/// of `f` over `[X/2, X]` lies below `mu`.
pub fn check_assumption_f(f: &Nonlinearity, mu: f64, search_end: f64) -> AssumptionReport {
    let x = search_end;
    let (roots, isolated, note) =
        AssumptionReport::from_scan(scan_roots(|i| f.value(i) - mu, 0.0, x, SCAN_SAMPLES, ROOT_MERGE_TOL));
    let proxy = (0..=1000)
        .map(|i| f.value(0.5 * x + 0.5 * x * i as f64 / 1000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut notes: Vec<String> = note.into_iter().collect();
    if proxy >= mu {
        notes.push(format!("max f on [{}, {x}] = {proxy} is not below mu = {mu}", 0.5 * x));
    }
    AssumptionReport {
        pass: isolated && proxy < mu,
        roots,
        limsup_proxy: Some(proxy),
        isolated,
        notes,
    }
}

/// `psi(W) = f(W^{k(p-q)} g^{-1}(W))`.
pub fn psi_drift_death(
    f: &Nonlinearity,
    g: &Nonlinearity,
    p: f64,
    q: f64,
    k: f64,
    w: f64,
) -> Result<f64> {
    let y = g.inverse(w)?;
    Ok(f.value(w.powf(k * (p - q)) * y))
}

pub fn psi_drift_death_derivative(
    f: &Nonlinearity,
    g: &Nonlinearity,
    p: f64,
    q: f64,
    k: f64,
    w: f64,
) -> Result<f64> {
    let y = g.inverse(w)?;
    let m = k * (p - q);
    let arg = w.powf(m) * y;
    let darg = m * w.powf(m - 1.0) * y + w.powf(m) / g.derivative(y);
    Ok(f.derivative(arg) * darg)
}

/// Checks the drift-death hypotheses: `f(0) > g(0) = 0`, both increasing,
/// `f(X) < g(X)` as the proxy at infinity, and a unique fixed point of `psi`
/// with `psi'(W) < 1`. The fixed point is reported in `roots`.
pub fn check_assumption_fg(
    f: &Nonlinearity,
    g: &Nonlinearity,
    p: f64,
    q: f64,
    k: f64,
    search_end: f64,
) -> AssumptionReport {
    let mut notes = Vec::new();
    let g0 = g.value(0.0);
    let f0 = f.value(0.0);
    if g0.abs() > 1e-14 {
        notes.push(format!("g(0) = {g0} must vanish"));
    }
    if !(f0 > g0) {
        notes.push(format!("f(0) = {f0} must exceed g(0) = {g0}"));
    }
    if !f.is_increasing() || !g.is_increasing() {
        notes.push("f and g must be increasing".into());
    }
    let fx = f.value(search_end);
    let gx = g.value(search_end);
    if !(fx < gx) {
        notes.push(format!("f(X) = {fx} is not below g(X) = {gx} at X = {search_end}"));
    }

    let h = |w: f64| match psi_drift_death(f, g, p, q, k, w) {
        Ok(v) => v - w,
        Err(_) => f64::NAN,
    };
    let lo = 1e-6 * search_end.min(1.0);
    let (roots, isolated, note) =
        AssumptionReport::from_scan(scan_roots(h, lo, search_end, SCAN_SAMPLES, ROOT_MERGE_TOL));
    notes.extend(note);
    if isolated && roots.len() != 1 {
        notes.push(format!("psi(W) = W must have exactly one root, found {}", roots.len()));
    }
    if isolated && roots.len() == 1 {
        match psi_drift_death_derivative(f, g, p, q, k, roots[0]) {
            Ok(d) if d < 1.0 => {}
            Ok(d) => notes.push(format!("psi'(W_inf) = {d} is not below 1")),
            Err(e) => notes.push(e.to_string()),
        }
    }
    AssumptionReport {
        pass: notes.is_empty(),
        roots,
        limsup_proxy: Some(fx - gx),
        isolated,
        notes,
    }
}

/// Checks the prion hypothesis: `f = g_prion` has a unique root `x0` on
/// `[0, lambda / mu^{k+1})` with `0 < f'(x0) < g_prion'(x0)`, where
/// `g_prion(x) = delta mu / (lambda - mu^{k+1} x)`.
pub fn check_assumption_prion(
    f: &Nonlinearity,
    lambda: f64,
    delta: f64,
    mu: f64,
    k: f64,
) -> AssumptionReport {
    let mut notes = Vec::new();
    let a = mu.powf(k + 1.0);
    let end = lambda / a;
    let g = |x: f64| delta * mu / (lambda - a * x);
    let dg = |x: f64| delta * mu * a / (lambda - a * x).powi(2);
    let (roots, isolated, note) = AssumptionReport::from_scan(scan_roots(
        |x| f.value(x) - g(x),
        0.0,
        end * (1.0 - 1e-9),
        SCAN_SAMPLES,
        ROOT_MERGE_TOL,
    ));
    notes.extend(note);
    if isolated && roots.len() != 1 {
        notes.push(format!("f = g must have exactly one root, found {}", roots.len()));
    }
    if isolated && roots.len() == 1 {
        let x0 = roots[0];
        let (df, dgx) = (f.derivative(x0), dg(x0));
        if !(x0 > 0.0) {
            notes.push("root x0 must be positive".into());
        }
        if !(0.0 < df && df < dgx) {
            notes.push(format!("need 0 < f'(x0) = {df} < g'(x0) = {dgx}"));
        }
    }
    AssumptionReport {
        pass: notes.is_empty(),
        roots,
        limsup_proxy: None,
        isolated,
        notes,
    }
}
