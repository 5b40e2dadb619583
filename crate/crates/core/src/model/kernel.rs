use crate::error::{Error, Result};

/// Shape of the self-similar fragmentation kernel `kappa` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelShape {
    /// `kappa == 2`: uniform splitting into two fragments.
    ConstantTwo,
    /// Piecewise-linear interpolant of `values` at the uniform nodes
    /// `z_i = i / (values.len() - 1)`.
    Tabulated { values: Vec<f64> },
}

/// Fragmentation kernel. Tabulated data are renormalised at construction so
/// that the first moment of the interpolant is exactly one (mass
/// conservation).
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    shape: KernelShape,
    symmetric: bool,
    kappa_lo: f64,
    kappa_hi: f64,
}

impl Kernel {
    pub fn constant_two() -> Self {
        Self {
            shape: KernelShape::ConstantTwo,
            symmetric: true,
            kappa_lo: 2.0,
            kappa_hi: 2.0,
        }
    }

    /// Builds a tabulated kernel and rescales it so that `∫ z kappa = 1`.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain("tabulated kernel needs at least two nodes".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Constraint("kappa must be finite and nonnegative".into()));
        }
        let raw = piecewise_linear_moment(&values, 1.0);
        if raw <= 0.0 {
            return Err(Error::Constraint("kappa has zero first moment".into()));
        }
        let values: Vec<f64> = values.iter().map(|v| v / raw).collect();
        let m = values.len() - 1;
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let symmetric = (0..=m).all(|i| (values[i] - values[m - i]).abs() <= 1e-12 * scale);
        let kappa_lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let kappa_hi = values.iter().cloned().fold(0.0, f64::max);
        let kernel = Self {
            shape: KernelShape::Tabulated { values },
            symmetric,
            kappa_lo,
            kappa_hi,
        };
        let n0 = kernel.moment(0.0);
        if n0 <= 1.0 {
            return Err(Error::Constraint(format!(
                "mean number of fragments n0 = {n0} must exceed 1"
            )));
        }
        if symmetric && (n0 - 2.0).abs() > 1e-9 {
            return Err(Error::Constraint(format!("symmetric kernel must have n0 = 2, got {n0}")));
        }
        Ok(kernel)
    }

    /// Samples `kappa` at `nodes + 1` uniform points and renormalises.
    pub fn from_fn<F: Fn(f64) -> f64>(kappa: F, nodes: usize) -> Result<Self> {
        let m = nodes.max(1);
        Self::tabulated((0..=m).map(|i| kappa(i as f64 / m as f64)).collect())
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn is_constant_two(&self) -> bool {
        matches!(self.shape, KernelShape::ConstantTwo)
    }
    pub fn kappa_lo(&self) -> f64 {
        self.kappa_lo
    }
    pub fn kappa_hi(&self) -> f64 {
        self.kappa_hi
    }

    /// Whether `kappa` is bounded away from zero and infinity.
    pub fn is_bounded(&self) -> bool {
        self.kappa_lo > 0.0 && self.kappa_hi.is_finite()
    }

    pub fn value(&self, z: f64) -> f64 {
        match &self.shape {
            KernelShape::ConstantTwo => 2.0,
            KernelShape::Tabulated { values } => {
                let m = values.len() - 1;
                let s = (z.clamp(0.0, 1.0)) * m as f64;
                let i = (s.floor() as usize).min(m - 1);
                let t = s - i as f64;
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }

    /// `∫_0^z kappa`, the primitive used to integrate the kernel over cells.
    pub fn primitive(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        match &self.shape {
            KernelShape::ConstantTwo => 2.0 * z,
            KernelShape::Tabulated { values } => {
                let m = values.len() - 1;
                let h = 1.0 / m as f64;
                let s = z * m as f64;
                let i = (s.floor() as usize).min(m - 1);
                let mut acc = 0.0;
                for j in 0..i {
                    acc += 0.5 * h * (values[j] + values[j + 1]);
                }
                let t = s - i as f64;
                let v_at = values[i] * (1.0 - t) + values[i + 1] * t;
                acc + 0.5 * t * h * (values[i] + v_at)
            }
        }
    }

    /// `c_alpha = ∫_0^1 z^alpha kappa(z) dz`; callers must ensure `alpha >= 0`.
    pub(crate) fn moment(&self, alpha: f64) -> f64 {
        match &self.shape {
            KernelShape::ConstantTwo => 2.0 / (alpha + 1.0),
            KernelShape::Tabulated { values } => piecewise_linear_moment(values, alpha),
        }
    }
}

/// Exact `∫_0^1 z^alpha p(z) dz` for the piecewise-linear interpolant `p`.
fn piecewise_linear_moment(values: &[f64], alpha: f64) -> f64 {
    let m = values.len() - 1;
    let h = 1.0 / m as f64;
    let mut acc = 0.0;
    for i in 0..m {
        let z0 = i as f64 * h;
        let z1 = (i + 1) as f64 * h;
        // p(z) = a + b z on [z0, z1]
        let b = (values[i + 1] - values[i]) / h;
        let a = values[i] - b * z0;
        acc += a * (z1.powf(alpha + 1.0) - z0.powf(alpha + 1.0)) / (alpha + 1.0)
            + b * (z1.powf(alpha + 2.0) - z0.powf(alpha + 2.0)) / (alpha + 2.0);
    }
    acc
}

/// Moment `c_alpha` of the kernel.
pub fn kernel_moment(kernel: &Kernel, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("kernel moment order must be >= 0, got {alpha}")));
    }
    Ok(kernel.moment(alpha))
}
