use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::Grid;
use crate::model::{Kernel, PowerLaw};

/// Courant number bound for the transport part.
pub const CFL: f64 = 0.9;

#[derive(Clone, Debug)]
enum Fragmentation {
    /// `kappa == 2`: column `i` spreads `coef[i]` uniformly over `[0, x_i]`;
    /// `own[i] = x_i - e_i` is the part falling in the source cell.
    Two { coef: Vec<f64>, own: Vec<f64> },
    /// Dense gain matrix `g[j * n + i] = K_ji w_i` and the weighted transpose
    /// `gt[i * n + j] = K_ji w_j`.
    Dense { g: Vec<f64>, gt: Vec<f64> },
}

/// Discrete growth-fragmentation generator on a grid, for unit velocity and
/// no death. Velocity multipliers and death rates are supplied per call.
///
/// Transport uses the upwind flux `a_i u_i` through the right face of cell
/// `i`, with `a_i = tau x_i^nu w_i / (x_{i+1} - x_i)` so that the first
/// moment evolves exactly as in the continuum; the last face is closed.
/// Fragmentation columns are rescaled so that `sum_j x_j w_j K_ji = x_i
/// beta_i`, which makes the discrete operator exactly mass conservative.
#[derive(Clone, Debug)]
pub struct Operator {
    grid: Grid,
    powerlaw: PowerLaw,
    kernel: Kernel,
    a: Vec<f64>,
    beta: Vec<f64>,
    frag: Fragmentation,
    max_transport: f64,
    max_beta: f64,
    exec: Execution,
}

impl Operator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn powerlaw(&self) -> &PowerLaw {
        &self.powerlaw
    }
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    pub fn execution(&self) -> Execution {
        self.exec
    }
    pub fn n(&self) -> usize {
        self.grid.n()
    }
    /// `beta(x_i)`
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Largest admissible explicit step for velocity `v` and death rate
    /// `death`: the CFL bound on transport and the positivity bound of the
    /// whole explicit update.
    pub fn admissible_dt(&self, v: f64, death: f64) -> f64 {
        let cfl = CFL / (v * self.max_transport);
        let positivity = 1.0 / (v * self.max_transport + self.max_beta + death.max(0.0));
        cfl.min(positivity)
    }

    pub fn check_dt(&self, dt: f64, v: f64, death: f64) -> Result<()> {
        let admissible = self.admissible_dt(v, death);
        if dt > admissible * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, admissible });
        }
        Ok(())
    }

    /// Transport term `-d/dx (v tau x^nu u)`.
    pub fn transport(&self, u: &[f64], v: f64, out: &mut [f64]) {
        let w = self.grid.widths();
        let mut inflow = 0.0;
        for i in 0..u.len() {
            let flux = v * self.a[i] * u[i];
            out[i] = (inflow - flux) / w[i];
            inflow = flux;
        }
    }

    /// Fragmentation term `F u` (gain minus loss).
    pub fn fragmentation(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        match &self.frag {
            Fragmentation::Two { coef, own } => {
                let w = self.grid.widths();
                let mut tail = 0.0;
                for j in (0..n).rev() {
                    out[j] = tail + coef[j] * own[j] * u[j] - self.beta[j] * u[j];
                    tail += coef[j] * w[j] * u[j];
                }
            }
            Fragmentation::Dense { g, .. } => {
                let beta = &self.beta;
                exec::fill(self.exec, out, |j| {
                    let row = &g[j * n..(j + 1) * n];
                    let mut acc = 0.0;
                    for i in j..n {
                        acc += row[i] * u[i];
                    }
                    acc - beta[j] * u[j]
                });
            }
        }
    }

    /// `A u = -d/dx(v tau x^nu u) - death u + F u`.
    pub fn apply(&self, u: &[f64], v: f64, death: f64, out: &mut [f64]) {
        self.fragmentation(u, out);
        let w = self.grid.widths();
        let mut inflow = 0.0;
        for i in 0..u.len() {
            let flux = v * self.a[i] * u[i];
            out[i] += (inflow - flux) / w[i] - death * u[i];
            inflow = flux;
        }
    }

    /// Weighted transpose `A*` with `sum w (A u) phi = sum w u (A* phi)`.
    pub fn apply_adjoint(&self, phi: &[f64], v: f64, death: f64, out: &mut [f64]) {
        let n = phi.len();
        let w = self.grid.widths();
        match &self.frag {
            Fragmentation::Two { coef, own } => {
                let mut head = 0.0;
                for i in 0..n {
                    out[i] = coef[i] * (head + own[i] * phi[i]);
                    head += w[i] * phi[i];
                }
            }
            Fragmentation::Dense { gt, .. } => {
                exec::fill(self.exec, out, |i| {
                    let row = &gt[i * n..(i + 1) * n];
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += row[j] * phi[j];
                    }
                    acc
                });
            }
        }
        for i in 0..n {
            let next = if i + 1 < n { phi[i + 1] } else { 0.0 };
            out[i] += v * self.a[i] * (next - phi[i]) / w[i] - (self.beta[i] + death) * phi[i];
        }
    }

    /// One explicit Euler step `u += dt A u` into `out`.
    pub fn euler(&self, u: &[f64], v: f64, death: f64, dt: f64, scratch: &mut [f64], out: &mut [f64]) {
        self.apply(u, v, death, scratch);
        for i in 0..u.len() {
            out[i] = u[i] + dt * scratch[i];
        }
    }
}

/// Assembles the discrete operator.
pub fn build_operator(grid: &Grid, powerlaw: &PowerLaw, kernel: &Kernel) -> Operator {
    build_operator_with(grid, powerlaw, kernel, Execution::default())
}

pub fn build_operator_with(
    grid: &Grid,
    powerlaw: &PowerLaw,
    kernel: &Kernel,
    exec: Execution,
) -> Operator {
    let n = grid.n();
    let x = grid.x();
    let w = grid.widths();
    let e = grid.edges();

    let mut a = vec![0.0; n];
    for i in 0..n - 1 {
        a[i] = powerlaw.growth(x[i]) * w[i] / (x[i + 1] - x[i]);
    }
    let max_transport = (0..n).map(|i| a[i] / w[i]).fold(0.0, f64::max);
    let beta: Vec<f64> = x.iter().map(|&xi| powerlaw.fragmentation_rate(xi)).collect();
    let max_beta = beta.iter().cloned().fold(0.0, f64::max);

    let frag = if kernel.is_constant_two() {
        // prefix sums of x_j w_j for j < i, computed once
        let mut coef = vec![0.0; n];
        let own: Vec<f64> = (0..n).map(|i| x[i] - e[i]).collect();
        let mut head = 0.0;
        for i in 0..n {
            let moment = head + x[i] * own[i];
            // raw column is 2 beta_i / x_i; rescale its first moment to x_i beta_i
            let raw = 2.0 * beta[i] / x[i];
            let s = if moment > 0.0 { x[i] * beta[i] / (raw * moment) } else { 0.0 };
            coef[i] = raw * s;
            head += x[i] * w[i];
        }
        Fragmentation::Two { coef, own }
    } else {
        let cols: Vec<Vec<f64>> = exec::map_range(exec, n, |i| {
            // K_ji for j <= i
            let mut col = vec![0.0; i + 1];
            let mut moment = 0.0;
            for j in 0..=i {
                let right = e[j + 1].min(x[i]) / x[i];
                let left = e[j] / x[i];
                let mass = beta[i] * (kernel.primitive(right) - kernel.primitive(left));
                col[j] = mass / w[j];
                moment += x[j] * mass;
            }
            let s = if moment > 0.0 { x[i] * beta[i] / moment } else { 0.0 };
            col.iter_mut().for_each(|c| *c *= s);
            col
        });
        let mut g = vec![0.0; n * n];
        let mut gt = vec![0.0; n * n];
        for (i, col) in cols.iter().enumerate() {
            for (j, k) in col.iter().enumerate() {
                g[j * n + i] = k * w[i];
                gt[i * n + j] = k * w[j];
            }
        }
        Fragmentation::Dense { g, gt }
    };

    Operator {
        grid: grid.clone(),
        powerlaw: *powerlaw,
        kernel: kernel.clone(),
        a,
        beta,
        frag,
        max_transport,
        max_beta,
        exec,
    }
}
