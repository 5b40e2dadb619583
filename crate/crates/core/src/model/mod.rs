//! Coefficients of the growth-fragmentation model and the structural
//! assumptions the rest of the crate relies on.

mod assumptions;
mod control;
mod kernel;
mod nonlinearity;

pub use assumptions::{
    check_assumption_f, check_assumption_fg, check_assumption_prion, psi_drift_death,
    psi_drift_death_derivative, AssumptionReport, DEFAULT_SEARCH_END, ROOT_MERGE_TOL,
};
pub use control::{PeriodicControl, Signal};
pub use kernel::{kernel_moment, Kernel, KernelShape};
pub use nonlinearity::Nonlinearity;

use crate::error::{Error, Result};

/// Power-law coefficients `tau(x) = tau x^nu`, `beta(x) = beta x^gamma` and
/// constant death rate `mu`, together with the dilation parameter
/// `k = 1 / (gamma + 1 - nu)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLaw {
    tau: f64,
    nu: f64,
    beta: f64,
    gamma: f64,
    mu: f64,
    k: f64,
}

impl PowerLaw {
    pub fn new(tau: f64, nu: f64, beta: f64, gamma: f64, mu: f64) -> Result<Self> {
        let all_finite = [tau, nu, beta, gamma, mu].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("power-law coefficients must be finite".into()));
        }
        if tau <= 0.0 {
            return Err(Error::Constraint(format!("tau > 0 required, got {tau}")));
        }
        if beta <= 0.0 {
            return Err(Error::Constraint(format!("beta > 0 required, got {beta}")));
        }
        if gamma <= 0.0 {
            return Err(Error::Constraint(format!("gamma > 0 required, got {gamma}")));
        }
        if mu < 0.0 {
            return Err(Error::Constraint(format!("mu >= 0 required, got {mu}")));
        }
        let denom = gamma + 1.0 - nu;
        if denom <= 0.0 {
            return Err(Error::Constraint(format!(
                "gamma + 1 - nu > 0 required for eigenelements to exist, got {denom}"
            )));
        }
        Ok(Self {
            tau,
            nu,
            beta,
            gamma,
            mu,
            k: 1.0 / denom,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    /// Dilation parameter.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Growth velocity `tau x^nu` at unit control.
    pub fn growth(&self, x: f64) -> f64 {
        self.tau * x.powf(self.nu)
    }

    /// Total fragmentation rate `beta x^gamma`.
    pub fn fragmentation_rate(&self, x: f64) -> f64 {
        self.beta * x.powf(self.gamma)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.tau, self.nu, self.beta, self.gamma, mu)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(tau, self.nu, self.beta, self.gamma, self.mu)
    }

    pub fn is_linear_growth(&self) -> bool {
        self.nu == 1.0
    }
}

/// Validates the coefficients and derives the dilation parameter.
pub fn derive_params(tau: f64, nu: f64, beta: f64, gamma: f64, mu: f64) -> Result<PowerLaw> {
    PowerLaw::new(tau, nu, beta, gamma, mu)
}
