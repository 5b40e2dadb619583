//! Perron eigenelements of the growth-fragmentation operator, their
//! self-similar dependence on the controls, and the closed forms available
//! for linear growth with uniform splitting.

use std::io::Write;
use std::path::Path;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::fmt_num;
use crate::model::{Kernel, PowerLaw};
use crate::numerics::Pchip;
use crate::pde::{build_operator, Operator};

pub const DEFAULT_TOL: f64 = 1e-8;
const DEFAULT_MAX_ITER: usize = 5_000_000;
const CHECK_EVERY: usize = 64;

/// Perron eigenvalue with direct and adjoint eigenvectors on a grid.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    /// Eigenvalue reached by the adjoint iteration.
    pub adjoint_lambda: f64,
    /// `U >= 0` with `∫ U = 1`.
    pub u: Vec<f64>,
    /// `phi >= 0` with `∫ phi U = 1`.
    pub phi: Vec<f64>,
    /// `∫ |A U - lambda U| / ∫ U` at exit.
    pub residual: f64,
    pub iterations: usize,
    pub grid: Grid,
}

impl EigenPair {
    /// `M_alpha[U]`
    pub fn moment(&self, alpha: f64) -> f64 {
        self.grid.moment(&self.u, alpha)
    }

    /// Writes columns `x,U,phi`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,U,phi")?;
        for ((x, u), p) in self.grid.x().iter().zip(&self.u).zip(&self.phi) {
            writeln!(out, "{},{},{}", fmt_num(*x), fmt_num(*u), fmt_num(*p))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Solves the Perron problem at unit control (`V = 1`, `R = 0`).
pub fn solve_perron(pl: &PowerLaw, kernel: &Kernel, grid: &Grid, tol: f64) -> Result<EigenPair> {
    let op = build_operator(grid, pl, kernel);
    solve_perron_op(&op, PowerIteration { tol, ..Default::default() })
}

/// Solves the Perron problem for an assembled operator at unit control.
pub fn solve_perron_op(op: &Operator, it: PowerIteration) -> Result<EigenPair> {
    if !(it.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", it.tol)));
    }
    let grid = op.grid();
    let pl = op.powerlaw();
    let e = pl.gamma() + 1.0 - pl.nu();
    let c = pl.beta() / (pl.tau() * e);
    let guess: Vec<f64> = grid.x().iter().map(|x| (-c * x.powf(e)).exp()).collect();

    let (lambda, u, residual, n_direct) =
        iterate(grid, |u, out| op.apply(u, 1.0, 0.0, out), op.admissible_dt(1.0, 0.0), guess, it, "Perron eigenvector")?;
    let phi_guess: Vec<f64> = grid.x().iter().map(|x| 1.0 + x).collect();
    let (adjoint_lambda, mut phi, _, n_adjoint) = iterate(
        grid,
        |p, out| op.apply_adjoint(p, 1.0, 0.0, out),
        op.admissible_dt(1.0, 0.0),
        phi_guess,
        it,
        "adjoint eigenvector",
    )?;
    let norm = grid.dot(&phi, &u);
    phi.iter_mut().for_each(|p| *p /= norm);
    if (adjoint_lambda - lambda).abs() > 10.0 * it.tol * lambda.abs().max(1.0) {
        return Err(Error::numerical(
            "direct and adjoint eigenvalues disagree",
            (adjoint_lambda - lambda).abs(),
        ));
    }
    Ok(EigenPair {
        lambda,
        adjoint_lambda,
        u,
        phi,
        residual,
        iterations: n_direct + n_adjoint,
        grid: grid.clone(),
    })
}

/// Adjoint eigenvector normalised against `u` (`∫ phi u = 1`).
pub fn solve_adjoint(op: &Operator, u: &[f64], tol: f64) -> Result<(f64, Vec<f64>)> {
    let grid = op.grid();
    let guess: Vec<f64> = grid.x().iter().map(|x| 1.0 + x).collect();
    let it = PowerIteration { tol, ..Default::default() };
    let (lambda, mut phi, _, _) = iterate(
        grid,
        |p, out| op.apply_adjoint(p, 1.0, 0.0, out),
        op.admissible_dt(1.0, 0.0),
        guess,
        it,
        "adjoint eigenvector",
    )?;
    let norm = grid.dot(&phi, u);
    if !(norm > 0.0) {
        return Err(Error::Degenerate("adjoint eigenvector is orthogonal to u".into()));
    }
    phi.iter_mut().for_each(|p| *p /= norm);
    Ok((lambda, phi))
}

/// Power iteration on `I + dt A`. The eigenvalue estimate is the per-step
/// growth of `∫ u` minus one, over `dt`, i.e. `∫ A u / ∫ u`; this is exact
/// for the discrete generator rather than biased by `O(dt)` as a logarithm
/// of the growth factor would be.
fn iterate<F>(
    grid: &Grid,
    apply: F,
    dt: f64,
    mut u: Vec<f64>,
    it: PowerIteration,
    what: &str,
) -> Result<(f64, Vec<f64>, f64, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = u.len();
    let mut au = vec![0.0; n];
    let norm = grid.integrate(&u);
    u.iter_mut().for_each(|x| *x /= norm);
    let mut lambda_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for iter in 0..it.max_iter {
        apply(&u, &mut au);
        let lambda = grid.integrate(&au);
        if iter % CHECK_EVERY == 0 {
            residual = au
                .iter()
                .zip(&u)
                .zip(grid.widths())
                .map(|((a, x), w)| (a - lambda * x).abs() * w)
                .sum::<f64>();
            let drift = (lambda - lambda_prev).abs();
            if residual <= 0.1 * it.tol && drift <= 0.1 * it.tol {
                return Ok((lambda, u, residual, iter));
            }
            lambda_prev = lambda;
        }
        let mut mass = 0.0;
        for ((x, a), w) in u.iter_mut().zip(&au).zip(grid.widths()) {
            *x = (*x + dt * a).max(0.0);
            mass += *x * w;
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::numerical(format!("{what}: iterate collapsed"), residual));
        }
        u.iter_mut().for_each(|x| *x /= mass);
    }
    Err(Error::numerical(
        format!("{what}: no convergence after {} iterations", it.max_iter),
        residual,
    ))
}

/// `Lambda(V, R) = V^{k gamma} Lambda(1, 0) - R mu`.
pub fn lambda_vr(lambda0: f64, v: f64, r: f64, pl: &PowerLaw) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("V must be positive, got {v}")));
    }
    if r < 0.0 {
        return Err(Error::Domain(format!("R must be nonnegative, got {r}")));
    }
    Ok(v.powf(pl.k() * pl.gamma()) * lambda0 - r * pl.mu())
}

/// Closed-form eigenvector for linear growth and uniform binary splitting,
/// `U(x) = C exp(-beta / (tau gamma) x^gamma)`.
#[derive(Clone, Debug)]
pub struct ClosedFormU {
    /// Normalising constant `C`.
    pub c: f64,
    /// Rate `beta / (tau gamma)` in the exponent.
    pub rate: f64,
    pub gamma: f64,
    pub values: Vec<f64>,
}

impl ClosedFormU {
    pub fn eval(&self, x: f64) -> f64 {
        self.c * (-self.rate * x.powf(self.gamma)).exp()
    }

    /// Exact moment `M_alpha` of the continuum profile.
    pub fn moment(&self, alpha: f64) -> f64 {
        let g = self.gamma;
        self.rate.powf(-alpha / g) * gamma((alpha + 1.0) / g) / gamma(1.0 / g)
    }
}

pub fn closed_form_u(pl: &PowerLaw, kernel: &Kernel, grid: &Grid) -> Result<ClosedFormU> {
    if pl.nu() != 1.0 {
        return Err(Error::Unsupported(format!(
            "explicit eigenvector needs nu = 1, got {}",
            pl.nu()
        )));
    }
    if !kernel.is_constant_two() {
        return Err(Error::Unsupported("explicit eigenvector needs kappa == 2".into()));
    }
    let g = pl.gamma();
    let rate = pl.beta() / (pl.tau() * g);
    let c = g * rate.powf(1.0 / g) / gamma(1.0 / g);
    let values = grid.x().iter().map(|x| c * (-rate * x.powf(g)).exp()).collect();
    Ok(ClosedFormU {
        c,
        rate,
        gamma: g,
        values,
    })
}

/// Exact moment `M_alpha` of the unit-mass eigenvector for linear growth
/// and `kappa == 2`, without building a grid.
pub fn closed_form_moment(pl: &PowerLaw, alpha: f64) -> Result<f64> {
    if pl.nu() != 1.0 {
        return Err(Error::Unsupported(format!(
            "explicit eigenvector needs nu = 1, got {}",
            pl.nu()
        )));
    }
    let g = pl.gamma();
    let rate = pl.beta() / (pl.tau() * g);
    Ok(rate.powf(-alpha / g) * gamma((alpha + 1.0) / g) / gamma(1.0 / g))
}

/// Samples `U(V; x) = V^{-k} U(V^{-k} x)` on the same grid by monotone cubic
/// interpolation, and checks that no mass leaves the grid.
pub fn rescale_eigenvector(u: &[f64], v: f64, k: f64, grid: &Grid) -> Result<Vec<f64>> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("V must be positive, got {v}")));
    }
    if v == 1.0 {
        return Ok(u.to_vec());
    }
    let s = v.powf(-k);
    let interp = Pchip::new(grid.x(), u);
    let out: Vec<f64> = grid.x().iter().map(|x| s * interp.eval(s * x)).collect();
    let before = grid.integrate(u);
    let after = grid.integrate(&out);
    let err = (after - before).abs() / before;
    if err > 1e-3 {
        return Err(Error::numerical(
            format!("dilated profile leaves the grid (V = {v})"),
            err,
        ));
    }
    Ok(out)
}
