//! Finite-volume size grids.

use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};
use crate::model::PowerLaw;
use crate::numerics::bisect;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Uniform,
    /// First cell `[0, x_min]`, then cells in geometric progression.
    Geometric,
}

/// Cells `[e_i, e_{i+1}]` with `e_0 = 0`, centers `x_i` at cell midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    kind: GridKind,
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

/// Eigenvector mass left below the first geometric edge.
const LOW_TAIL: f64 = 1e-6;
/// Eigenvector mass left beyond `x_max`.
const HIGH_TAIL: f64 = 1e-12;

impl Grid {
    pub fn from_edges(kind: GridKind, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::Domain("a grid needs at least two cells".into()));
        }
        if edges[0] != 0.0 {
            return Err(Error::Domain("grid must start at x = 0".into()));
        }
        if edges.windows(2).any(|e| !(e[1] > e[0]) || !e[1].is_finite()) {
            return Err(Error::Domain("grid edges must be finite and strictly increasing".into()));
        }
        let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        let widths = edges.windows(2).map(|e| e[1] - e[0]).collect();
        Ok(Self {
            kind,
            edges,
            centers,
            widths,
        })
    }

    pub fn uniform(n: usize, x_max: f64) -> Result<Self> {
        if !(x_max > 0.0) {
            return Err(Error::Domain(format!("x_max must be positive, got {x_max}")));
        }
        let edges = (0..=n).map(|i| x_max * i as f64 / n as f64).collect();
        Self::from_edges(GridKind::Uniform, edges)
    }

    pub fn geometric(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min > 0.0 && x_max > x_min) {
            return Err(Error::Domain(format!(
                "geometric grid needs 0 < x_min < x_max, got {x_min}, {x_max}"
            )));
        }
        if n < 2 {
            return Err(Error::Domain("a grid needs at least two cells".into()));
        }
        let m = n - 1;
        let ratio = (x_max / x_min).ln() / m as f64;
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(0.0);
        for i in 0..=m {
            edges.push(x_min * (ratio * i as f64).exp());
        }
        edges[n] = x_max;
        Self::from_edges(GridKind::Geometric, edges)
    }

    /// Grid adapted to the Perron eigenvector of `pl` at unit control.
    /// `dilation` is the range of multipliers `W^k` the profile will be
    /// stretched by during a run.
    pub fn auto(pl: &PowerLaw, n: usize, dilation: (f64, f64)) -> Result<Self> {
        let (lo, hi) = (dilation.0.min(1.0), dilation.1.max(1.0));
        if !(lo > 0.0) {
            return Err(Error::Domain("dilation range must be positive".into()));
        }
        if pl.nu() == 1.0 {
            let (x_lo, x_hi) = linear_growth_support(pl)?;
            Self::geometric(n, x_lo * lo, x_hi * hi)
        } else {
            let x_max = 20.0 * (pl.tau() / pl.beta()).powf(1.0 / pl.gamma());
            Self::uniform(n, x_max * hi)
        }
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }
    pub fn n(&self) -> usize {
        self.centers.len()
    }
    pub fn x(&self) -> &[f64] {
        &self.centers
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    pub fn x_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// `∫ u dx`
    pub fn integrate(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.widths).map(|(u, w)| u * w).sum()
    }

    /// `∫ x^alpha u dx`
    pub fn moment(&self, u: &[f64], alpha: f64) -> f64 {
        if alpha == 0.0 {
            return self.integrate(u);
        }
        u.iter()
            .zip(&self.widths)
            .zip(&self.centers)
            .map(|((u, w), x)| u * w * x.powf(alpha))
            .sum()
    }

    /// `∫ u v dx`
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.widths)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    /// `∫ |u - v| dx`
    pub fn l1_distance(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.widths)
            .map(|((a, b), w)| (a - b).abs() * w)
            .sum()
    }
}

/// Support `[x_lo, x_hi]` of `exp(-c x^gamma)`, `c = beta / (tau gamma)`,
/// leaving `LOW_TAIL` of the mass below and `HIGH_TAIL` above.
fn linear_growth_support(pl: &PowerLaw) -> Result<(f64, f64)> {
    let g = pl.gamma();
    let a = 1.0 / g;
    let c = pl.beta() / (pl.tau() * g);
    // the mass beyond y = c x^gamma is the regularized upper gamma Q(1/gamma, y)
    let mut hi = a + 10.0;
    while gamma_ur(a, hi) > HIGH_TAIL {
        hi *= 2.0;
    }
    let y_hi = bisect(|y| gamma_ur(a, y) - HIGH_TAIL, f64::MIN_POSITIVE, hi, 1e-10)?;
    // bracketed in log space, the lower tail point can be tiny for small 1/gamma
    let s_lo = bisect(|s| gamma_lr(a, s.exp()) - LOW_TAIL, -700.0, y_hi.ln(), 1e-15)?;
    let y_lo = s_lo.exp();
    Ok(((y_lo / c).powf(a), (y_hi / c).powf(a)))
}
