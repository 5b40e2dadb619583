//! Canned runs at the parameter sets of the three phase-plane figures.
//! Each returns its data and can write CSV, SVG and a key-value report.
//! Nothing here is random, so repeated runs write identical files.

use std::path::{Path, PathBuf};

use crate::analysis::{
    detect_limit_cycle, hopf_scan, local_stability, steady_states, CycleReport, HopfReport, Section,
    StabilityReport, SteadyStateReport,
};
use crate::eigen::closed_form_moment;
use crate::error::{Error, Result};
use crate::io::{write_csv, write_svg, KeyValue, Series};
use crate::model::{derive_params, Nonlinearity, DEFAULT_SEARCH_END};
use crate::reduced::{ReducedParams, Rk4, System, Trajectory};

/// Starting points of the phase-plane trajectories, as `(W0, Z0 / Z_inf)`.
/// The first one is the reference trajectory used for the crossing counts.
pub const FIGURE1_STARTS: [(f64, f64); 4] = [(0.5, 0.5), (0.3, 3.0), (1.5, 0.2), (2.0, 2.0)];
/// Drift feedback `2 e^{-x}`.
pub const FIGURE1_F: Nonlinearity = Nonlinearity::ExpDecay { a: 2.0 };
/// Deviation from 1 that counts as being on one side of `W = 1`.
pub const CROSSING_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct FigureOptions {
    pub dt: f64,
    /// Trajectory rows are written every `stride` steps.
    pub stride: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self { dt: 1e-3, stride: 20 }
    }
}

/// Sign changes of `W - 1` with a dead band of `CROSSING_BAND`.
pub fn count_unit_crossings(traj: &Trajectory, from: f64) -> usize {
    let mut side = 0i8;
    let mut count = 0;
    for (t, y) in traj.t.iter().zip(&traj.y) {
        if *t < from {
            continue;
        }
        let d = y[0] - 1.0;
        let s = if d > CROSSING_BAND {
            1
        } else if d < -CROSSING_BAND {
            -1
        } else {
            0
        };
        if s != 0 {
            if side != 0 && s != side {
                count += 1;
            }
            side = s;
        }
    }
    count
}

#[derive(Clone, Debug)]
pub struct Figure1Panel {
    pub p: f64,
    pub params: ReducedParams,
    pub steady: SteadyStateReport,
    pub stability: StabilityReport,
    pub trajectories: Vec<Trajectory>,
    pub crossings: usize,
    pub crossings_after_burn_in: usize,
    pub burn_in: f64,
    /// `|f_p(Z(t_end)) - mu|` on the reference trajectory.
    pub final_gap: f64,
    pub final_w: f64,
}

#[derive(Clone, Debug)]
pub struct Figure1 {
    pub focus: Figure1Panel,
    pub node: Figure1Panel,
}

fn figure1_panel(p: f64, t_end: f64, burn_in: f64, opts: FigureOptions) -> Result<Figure1Panel> {
    // beta = tau = 1, kappa == 2; the caption leaves beta free
    let pl = derive_params(1.0, 1.0, 1.0, 0.1, 1.0)?;
    let mp = closed_form_moment(&pl, p)?;
    let params = ReducedParams::new(pl, mp, System::Wz { f: FIGURE1_F, p })?;
    let steady = steady_states(&params, DEFAULT_SEARCH_END)?;
    let eq = steady
        .equilibria
        .first()
        .ok_or_else(|| Error::Domain("no equilibrium for the drift system".into()))?
        .y
        .clone();
    let stability = local_stability(&params, &eq)?;
    let rk = Rk4::with_dt(opts.dt).stride(opts.stride);
    let mut trajectories = Vec::new();
    for (w0, zf) in FIGURE1_STARTS {
        trajectories.push(params.integrate(&[w0, zf * eq[1]], 0.0, t_end, rk)?);
    }
    let reference = &trajectories[0];
    let last = reference.last();
    let final_gap = (params.f_p(&FIGURE1_F, p, last[1]) - pl.mu()).abs();
    Ok(Figure1Panel {
        p,
        crossings: count_unit_crossings(reference, 0.0),
        crossings_after_burn_in: count_unit_crossings(reference, burn_in),
        burn_in,
        final_gap,
        final_w: last[0],
        params,
        steady,
        stability,
        trajectories,
    })
}

/// WZ drift system with `gamma = 0.1`, `mu = 1`, `f = 2 e^{-x}`: a focus at
/// `p = 0.5` and a node at `p = 2`.
pub fn figure1(opts: FigureOptions) -> Result<Figure1> {
    Ok(Figure1 {
        focus: figure1_panel(0.5, 200.0, 0.0, opts)?,
        node: figure1_panel(2.0, 600.0, 5.0, opts)?,
    })
}

fn panel_kv(panel: &Figure1Panel) -> KeyValue {
    let mut kv = KeyValue::new();
    kv.num("p", panel.p)
        .num("M_p", panel.params.mp)
        .int("crossings", panel.crossings)
        .int("crossings_after_burn_in", panel.crossings_after_burn_in)
        .num("burn_in", panel.burn_in)
        .num("final_gap", panel.final_gap)
        .num("final_W", panel.final_w);
    kv.extend("steady", &panel.steady.to_kv());
    kv.extend("stability", &panel.stability.to_kv());
    kv
}

fn phase_points(traj: &Trajectory, a: usize, b: usize) -> Vec<(f64, f64)> {
    traj.y.iter().map(|y| (y[a], y[b])).collect()
}

fn write_phase_svg(path: &Path, title: &str, labels: (&str, &str), trajs: &[Trajectory], axes: (usize, usize)) -> Result<()> {
    let pts: Vec<Vec<(f64, f64)>> = trajs.iter().map(|t| phase_points(t, axes.0, axes.1)).collect();
    let names: Vec<String> = (0..trajs.len()).map(|i| format!("trajectory {i}")).collect();
    let series: Vec<Series<'_>> = pts
        .iter()
        .zip(&names)
        .map(|(p, n)| Series { name: n, points: p })
        .collect();
    write_svg(path, title, labels.0, labels.1, &series)
}

impl Figure1 {
    pub fn report(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.extend("focus", &panel_kv(&self.focus)).extend("node", &panel_kv(&self.node));
        kv
    }

    /// `figure1_focus.csv`, `figure1_node.csv` (all starts, indexed by the
    /// `start` column), the matching SVGs and `figure1_report.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (name, panel) in [("focus", &self.focus), ("node", &self.node)] {
            let csv = dir.join(format!("figure1_{name}.csv"));
            let rows = panel.trajectories.iter().enumerate().flat_map(|(i, tr)| {
                tr.t.iter().zip(&tr.y).map(move |(t, y)| [i as f64, *t, y[0], y[1]])
            });
            write_csv(&csv, &["start", "t", "W", "Z"], rows)?;
            let svg = dir.join(format!("figure1_{name}.svg"));
            write_phase_svg(
                &svg,
                &format!("WZ phase plane, p = {}", panel.p),
                ("W", "Z"),
                &panel.trajectories,
                (0, 1),
            )?;
            files.push(csv);
            files.push(svg);
        }
        let rep = dir.join("figure1_report.txt");
        self.report().write(&rep)?;
        files.push(rep);
        Ok(files)
    }
}

#[derive(Clone, Debug)]
pub struct Figure2 {
    pub params: ReducedParams,
    pub steady: SteadyStateReport,
    pub stability: StabilityReport,
    pub trajectory: Trajectory,
    pub cycle: CycleReport,
}

pub fn figure2_params() -> Result<ReducedParams> {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)?;
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
}

/// Drift-death WQ system with `gamma = 1`, `p = 2`, `q = 5`,
/// `f = 1 + e^{-1} - e^{-x^4}`, `g = 0.9 x`, started next to the unstable
/// equilibrium.
pub fn figure2(opts: FigureOptions) -> Result<Figure2> {
    let params = figure2_params()?;
    let steady = steady_states(&params, DEFAULT_SEARCH_END)?;
    let eq = steady
        .equilibria
        .first()
        .ok_or_else(|| Error::Domain("no drift-death equilibrium".into()))?
        .y
        .clone();
    let stability = local_stability(&params, &eq)?;
    let t_end = 400.0;
    let rk = Rk4::with_dt(opts.dt).stride(opts.stride.min(10));
    let trajectory = params.integrate(&[1.05 * eq[0], eq[1]], 0.0, t_end, rk)?;
    let cycle = detect_limit_cycle(&trajectory, Section::new(0, eq[0], 0.5 * t_end));
    Ok(Figure2 { params, steady, stability, trajectory, cycle })
}

impl Figure2 {
    pub fn report(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.extend("steady", &self.steady.to_kv())
            .extend("stability", &self.stability.to_kv())
            .extend("cycle", &self.cycle.to_kv());
        kv
    }

    /// `figure2_cycle.csv` (the post-burn-in orbit), `figure2.svg` and
    /// `figure2_report.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join("figure2_cycle.csv");
        late_part(&self.trajectory, self.trajectory.t.last().copied().unwrap_or(0.0) * 0.5).write_csv(&csv)?;
        let svg = dir.join("figure2.svg");
        write_phase_svg(&svg, "WQ phase plane", ("W", "Q"), std::slice::from_ref(&self.trajectory), (0, 1))?;
        let rep = dir.join("figure2_report.txt");
        self.report().write(&rep)?;
        Ok(vec![csv, svg, rep])
    }
}

fn late_part(traj: &Trajectory, from: f64) -> Trajectory {
    let start = traj.t.partition_point(|t| *t < from);
    Trajectory {
        system: traj.system,
        names: traj.names.clone(),
        t: traj.t[start..].to_vec(),
        y: traj.y[start..].to_vec(),
    }
}

#[derive(Clone, Debug)]
pub struct Figure3 {
    pub params: ReducedParams,
    pub hopf: HopfReport,
    pub below: StabilityReport,
    pub above: StabilityReport,
    pub trajectory: Trajectory,
    pub cycle: CycleReport,
}

pub fn figure3_params(p: f64) -> Result<ReducedParams> {
    let pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)?;
    ReducedParams::new(
        pl,
        1.0,
        System::Vwq { f: Nonlinearity::PrionSigmoid { a: 6.3, b: 1.1, s: 20.0 }, p, lambda: 0.9, delta: 0.2 },
    )
}

/// Prion VWQ system with `lambda = 0.9`, `delta = 0.2`, `mu = gamma = 1`,
/// `f = 6.3 (1.1 - e^{-x^2/20})` and `p = 4`, past the Hopf point.
pub fn figure3(opts: FigureOptions) -> Result<Figure3> {
    let params = figure3_params(4.0)?;
    let hopf = hopf_scan(&params, 8.0, 81)?;
    let eq = hopf.equilibrium.clone();
    let below = local_stability(&figure3_params(hopf.p0 - 0.1)?, &eq)?;
    let above = local_stability(&figure3_params(hopf.p0 + 0.1)?, &eq)?;
    let t_end = 400.0;
    let rk = Rk4::with_dt(opts.dt).stride(opts.stride.min(10));
    let trajectory = params.integrate(&[eq[0], 1.05 * eq[1], eq[2]], 0.0, t_end, rk)?;
    let cycle = detect_limit_cycle(&trajectory, Section::new(1, eq[1], 0.5 * t_end));
    Ok(Figure3 { params, hopf, below, above, trajectory, cycle })
}

impl Figure3 {
    pub fn report(&self) -> KeyValue {
        let mut kv = KeyValue::new();
        kv.extend("hopf", &self.hopf.to_kv())
            .extend("below_p0", &self.below.to_kv())
            .extend("above_p0", &self.above.to_kv())
            .extend("cycle", &self.cycle.to_kv());
        kv
    }

    /// `figure3_cycle.csv`, `figure3_psi.csv`, `figure3.svg` (the W-Q
    /// projection) and `figure3_report.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join("figure3_cycle.csv");
        late_part(&self.trajectory, self.trajectory.t.last().copied().unwrap_or(0.0) * 0.5).write_csv(&csv)?;
        let psi = dir.join("figure3_psi.csv");
        self.hopf.write_samples(&psi)?;
        let svg = dir.join("figure3.svg");
        write_phase_svg(&svg, "VWQ system, W-Q projection", ("W", "Q"), std::slice::from_ref(&self.trajectory), (1, 2))?;
        let rep = dir.join("figure3_report.txt");
        self.report().write(&rep)?;
        Ok(vec![csv, psi, svg, rep])
    }
}
