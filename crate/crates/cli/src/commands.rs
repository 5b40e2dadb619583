//! One runner per subcommand. Each returns the summary printed to stdout
//! and the artifact paths it wrote; failures propagate as typed errors so
//! `main` can map them to exit codes.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use growfrag::analysis::{
    detect_limit_cycle, floquet_compare, floquet_sweep, hopf_scan, local_stability, steady_states, Section,
};
use growfrag::eigen::{closed_form_moment, solve_perron, EigenPair};
use growfrag::figures::{figure1, figure2, figure3, FigureOptions};
use growfrag::grid::Grid;
use growfrag::io::{write_csv, write_svg, KeyValue, Series};
use growfrag::model::{derive_params, Kernel, PowerLaw};
use growfrag::pde::{build_operator, run, Closure, DiagnosticsConfig, InitialCondition, Recorder, Scenario, SizeState};
use growfrag::reduced::{Forcing, ReducedParams, Rk4, System, SystemId};
use growfrag::suites::random_controls;
use growfrag::Execution;

use crate::config::{Config, ConfigError};

/// An assumption check failed after its report was written.
#[derive(Debug)]
pub struct AssumptionFailed(pub String);

impl fmt::Display for AssumptionFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "assumption check failed: {}", self.0)
    }
}

impl std::error::Error for AssumptionFailed {}

pub struct Outcome {
    pub summary: KeyValue,
    pub artifacts: Vec<PathBuf>,
}

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub out: &'a Path,
    pub seed: u64,
}

fn powerlaw(cfg: &Config) -> Result<PowerLaw> {
    Ok(derive_params(
        cfg.f64("model.tau")?,
        cfg.f64("model.nu")?,
        cfg.f64("model.beta")?,
        cfg.f64("model.gamma")?,
        cfg.f64("model.mu")?,
    )?)
}

fn kernel(cfg: &Config) -> Result<Kernel> {
    let text = cfg.str("model.kernel")?;
    if text == "constant-two" {
        return Ok(Kernel::constant_two());
    }
    let Some(values) = text.strip_prefix("tabulated:") else {
        return Err(ConfigError(format!("model.kernel: expected constant-two or tabulated:v0,v1,..., got '{text}'")).into());
    };
    let values = values
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| ConfigError(format!("model.kernel: bad number in '{text}'")))?;
    Ok(Kernel::tabulated(values)?)
}

fn grid(cfg: &Config, pl: &PowerLaw) -> Result<Grid> {
    let d = cfg.list("grid.dilation")?;
    if d.len() != 2 {
        return Err(ConfigError("grid.dilation takes two numbers, lo,hi".into()).into());
    }
    Ok(Grid::auto(pl, cfg.usize("grid.n")?, (d[0], d[1]))?)
}

fn eigenpair(cfg: &Config, pl: &PowerLaw, kernel: &Kernel) -> Result<EigenPair> {
    let grid = grid(cfg, pl)?;
    Ok(solve_perron(pl, kernel, &grid, cfg.f64("eigen.tol")?)?)
}

fn forcing(cfg: &Config, key: &str) -> Result<Forcing> {
    let Some(text) = cfg.opt(key)? else { return Ok(Forcing::Zero) };
    let nums: Vec<f64> = text
        .strip_prefix("exp:")
        .map(|a| a.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .and_then(|r| r.ok())
        .filter(|v| v.len() == 2)
        .ok_or_else(|| ConfigError(format!("{key}: expected exp:eps0,rate, got '{text}'")))?;
    Ok(Forcing::Exponential { eps0: nums[0], rate: nums[1] })
}

/// `M_p[U]` for the systems that use `f_p`: `reduced.mp` when given, the
/// closed form for `nu = 1` with `kappa = 2`, the discrete eigenvector
/// otherwise.
fn moment_p(cfg: &Config, pl: &PowerLaw, p: f64) -> Result<f64> {
    if let Some(mp) = cfg.opt_f64("reduced.mp")? {
        return Ok(mp);
    }
    let kernel = kernel(cfg)?;
    if pl.nu() == 1.0 && kernel.is_constant_two() {
        return Ok(closed_form_moment(pl, p)?);
    }
    Ok(eigenpair(cfg, pl, &kernel)?.moment(p))
}

fn reduced_params(cfg: &Config) -> Result<ReducedParams> {
    let pl = powerlaw(cfg)?;
    let id = SystemId::parse(cfg.str("reduced.system")?)?;
    let why = id.name();
    let f = || cfg.nonlinearity("reduced.f", why);
    let g = || cfg.nonlinearity("reduced.g", why);
    let p = || cfg.need_f64("reduced.p", why);
    let q = || cfg.need_f64("reduced.q", why);
    let (system, mp) = match id {
        SystemId::WOde => (System::WOde { v1: cfg.signal("reduced.v1")?, v2: cfg.signal("reduced.v2")? }, 1.0),
        SystemId::Wz => (System::Wz { f: f()?, p: p()? }, moment_p(cfg, &pl, p()?)?),
        SystemId::WzPerturbed => (
            System::WzPerturbed { f: f()?, p: p()?, eps: forcing(cfg, "reduced.eps_p")? },
            moment_p(cfg, &pl, p()?)?,
        ),
        SystemId::WqDrift => (System::WqDrift { f: f()?, p: p()? }, moment_p(cfg, &pl, p()?)?),
        SystemId::Wq => (System::Wq { f: f()?, g: g()?, p: p()?, q: q()? }, 1.0),
        SystemId::WqPerturbed => (
            System::WqPerturbed {
                f: f()?,
                g: g()?,
                p: p()?,
                q: q()?,
                eps_p: forcing(cfg, "reduced.eps_p")?,
                eps_q: forcing(cfg, "reduced.eps_q")?,
            },
            1.0,
        ),
        SystemId::Vwq => (
            System::Vwq {
                f: f()?,
                p: p()?,
                lambda: cfg.need_f64("reduced.lambda", why)?,
                delta: cfg.need_f64("reduced.delta", why)?,
            },
            1.0,
        ),
        SystemId::Up => (System::Up { control: cfg.control()? }, 1.0),
    };
    Ok(ReducedParams::new(pl, mp, system)?)
}

pub fn eigen(ctx: &Ctx) -> Result<Outcome> {
    let pl = powerlaw(ctx.cfg)?;
    let ep = eigenpair(ctx.cfg, &pl, &kernel(ctx.cfg)?)?;
    let csv = ctx.out.join("eigenpair.csv");
    ep.write_csv(&csv)?;
    let mut kv = KeyValue::new();
    kv.num("lambda", ep.lambda)
        .num("adjoint_lambda", ep.adjoint_lambda)
        .num("residual", ep.residual)
        .int("iterations", ep.iterations)
        .int("cells", ep.grid.n())
        .num("k", pl.k());
    for a in ctx.cfg.list("eigen.moments")? {
        kv.num(&format!("moment.{a}"), ep.moment(a));
    }
    let rep = ctx.out.join("eigen_report.txt");
    kv.write(&rep)?;
    Ok(Outcome { summary: kv, artifacts: vec![csv, rep] })
}

fn initial_condition(text: &str) -> Result<InitialCondition> {
    let (name, args) = text.split_once(':').unwrap_or((text, ""));
    let nums = args
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .ok()
        .filter(|v| v.len() == if name == "eigen" { 2 } else { 3 });
    let bad = || ConfigError(format!("pde.initial: expected lognormal:mass,center,width, block:mass,from,to or eigen:q,w, got '{text}'"));
    let n = nums.ok_or_else(bad)?;
    Ok(match name {
        "lognormal" => InitialCondition::LogNormal { mass: n[0], center: n[1], width: n[2] },
        "block" => InitialCondition::Block { mass: n[0], from: n[1], to: n[2] },
        "eigen" => InitialCondition::Eigen { q: n[0], w: n[1] },
        _ => return Err(bad().into()),
    })
}

pub fn simulate_pde(ctx: &Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let pl = powerlaw(cfg)?;
    let kernel = kernel(cfg)?;
    let ep = eigenpair(cfg, &pl, &kernel)?;
    let grid = ep.grid.clone();
    let op = build_operator(&grid, &pl, &kernel);
    let closure_name = cfg.str("pde.closure")?;
    let f = || cfg.nonlinearity("pde.f", closure_name);
    let p = || cfg.need_f64("pde.p", closure_name);
    let closure = match closure_name {
        "linear" => Closure::Linear { control: cfg.control()? },
        "nonlinear-drift" => Closure::NonlinearDrift { f: f()?, p: p()? },
        "drift-death" => {
            let q = cfg.need_f64("pde.q", closure_name)?;
            Closure::DriftDeath {
                f: f()?,
                g: cfg.nonlinearity("pde.g", closure_name)?,
                p: p()?,
                q,
                mp: ep.moment(p()?),
                mq: ep.moment(q),
            }
        }
        "prion" => Closure::Prion {
            f: f()?,
            p: p()?,
            lambda: cfg.need_f64("pde.lambda", closure_name)?,
            delta: cfg.need_f64("pde.delta", closure_name)?,
            m1: ep.moment(1.0),
            mp: ep.moment(p()?),
        },
        other => {
            return Err(ConfigError(format!(
                "pde.closure: expected linear, nonlinear-drift, drift-death or prion, got '{other}'"
            ))
            .into())
        }
    };
    let linear_const = matches!(&closure, Closure::Linear { control } if control.v().is_constant() && control.r().is_constant());
    let sc = Scenario::new(op, closure)?;
    let u0 = initial_condition(cfg.str("pde.initial")?)?.sample(&grid, Some(&ep), pl.k())?;
    let mut state = SizeState::new(u0.clone());
    if closure_name == "prion" {
        state = state.with_monomer(cfg.need_f64("pde.v0", "prion")?);
    }
    let t_end = cfg.f64("pde.t_end")?;
    let dt = match cfg.str("pde.dt")? {
        "auto" => sc.auto_dt(&state)?,
        _ => cfg.f64("pde.dt")?,
    };
    let diag = DiagnosticsConfig { stride: cfg.usize("pde.stride")?, ..DiagnosticsConfig::new(cfg.f64("diag.p")?, cfg.f64("diag.q")?) };
    let mut rec = Recorder::new(&sc, diag).until(t_end);
    if let Some(x0) = cfg.opt_f64("diag.x0")? {
        rec = rec.with_manifold(&ep, &u0, x0)?;
    }
    if linear_const && cfg.signal("control.v")?.eval(0.0) == 1.0 {
        rec = rec.with_gre(&ep, &u0)?;
    }
    let last = run(&sc, state, t_end, dt, |s, dt| rec.observe(s, dt))?;

    let diag_csv = ctx.out.join("diagnostics.csv");
    rec.diagnostics.write_csv(&diag_csv)?;
    let final_csv = ctx.out.join("final_density.csv");
    write_csv(&final_csv, &["x", "u"], grid.x().iter().zip(&last.u).map(|(x, u)| [*x, *u]))?;
    let mut kv = KeyValue::new();
    kv.text("closure", closure_name)
        .num("dt", dt)
        .num("t", last.t)
        .num("lambda", ep.lambda)
        .num("M0", grid.moment(&last.u, 0.0))
        .num("M1", grid.moment(&last.u, 1.0))
        .int("rows", rec.diagnostics.rows.len());
    if let Some(v) = last.monomer {
        kv.num("monomer", v);
    }
    let rep = ctx.out.join("pde_report.txt");
    kv.write(&rep)?;
    Ok(Outcome { summary: kv, artifacts: vec![diag_csv, final_csv, rep] })
}

fn integrate_ode(cfg: &Config, params: &ReducedParams) -> Result<growfrag::reduced::Trajectory> {
    let y0 = cfg.list("ode.y0")?;
    let rk = Rk4::with_dt(cfg.f64("ode.dt")?).stride(cfg.usize("ode.stride")?);
    Ok(params.integrate(&y0, 0.0, cfg.f64("ode.t_end")?, rk)?)
}

fn phase_svg(path: &Path, traj: &growfrag::reduced::Trajectory, axes: (usize, usize)) -> Result<()> {
    let pts: Vec<(f64, f64)> = traj.y.iter().map(|y| (y[axes.0], y[axes.1])).collect();
    let (xl, yl) = (&traj.names[axes.0], &traj.names[axes.1]);
    write_svg(path, &format!("{yl} against {xl}"), xl, yl, &[Series { name: "trajectory", points: &pts }])?;
    Ok(())
}

pub fn simulate_ode(ctx: &Ctx) -> Result<Outcome> {
    let params = reduced_params(ctx.cfg)?;
    let traj = integrate_ode(ctx.cfg, &params)?;
    let csv = ctx.out.join("trajectory.csv");
    traj.write_csv(&csv)?;
    let svg = ctx.out.join("trajectory.svg");
    let axes = if params.id() == SystemId::Vwq { (1, 2) } else { (0, 1) };
    phase_svg(&svg, &traj, axes)?;
    let mut kv = KeyValue::new();
    kv.text("system", params.id().name()).num("mp", params.mp).int("rows", traj.len());
    for (name, v) in traj.names.iter().zip(traj.last()) {
        kv.num(&format!("final.{name}"), *v);
    }
    let rep = ctx.out.join("ode_report.txt");
    kv.write(&rep)?;
    Ok(Outcome { summary: kv, artifacts: vec![csv, svg, rep] })
}

pub fn steady(ctx: &Ctx) -> Result<Outcome> {
    let params = reduced_params(ctx.cfg)?;
    let report = steady_states(&params, ctx.cfg.f64("analysis.search_end")?)?;
    let mut kv = KeyValue::new();
    kv.extend("steady", &report.to_kv());
    if params.id() != SystemId::WOde {
        for (i, eq) in report.equilibria.iter().enumerate() {
            kv.extend(&format!("stability.{i}"), &local_stability(&params, &eq.y)?.to_kv());
        }
    }
    let rep = ctx.out.join("steady_states.txt");
    kv.write(&rep)?;
    if !report.assumptions_pass {
        return Err(AssumptionFailed(format!("see {}", rep.display())).into());
    }
    Ok(Outcome { summary: kv, artifacts: vec![rep] })
}

pub fn hopf(ctx: &Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let params = ReducedParams::new(
        powerlaw(cfg)?,
        1.0,
        System::Vwq {
            f: cfg.nonlinearity("reduced.f", "vwq")?,
            p: 0.0,
            lambda: cfg.f64("reduced.lambda")?,
            delta: cfg.f64("reduced.delta")?,
        },
    )?;
    let report = hopf_scan(&params, cfg.f64("hopf.p_max")?, cfg.usize("hopf.samples")?)?;
    let rep = ctx.out.join("hopf_report.txt");
    report.to_kv().write(&rep)?;
    let csv = ctx.out.join("hopf_psi.csv");
    report.write_samples(&csv)?;
    Ok(Outcome { summary: report.to_kv(), artifacts: vec![rep, csv] })
}

pub fn limit_cycle(ctx: &Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let params = reduced_params(cfg)?;
    let traj = integrate_ode(cfg, &params)?;
    let component = cfg.usize("cycle.component")?;
    if component >= traj.names.len() {
        return Err(ConfigError(format!("cycle.component: {} has {} components", params.id().name(), traj.names.len())).into());
    }
    let t_end = cfg.f64("ode.t_end")?;
    let burn_in = match cfg.str("cycle.burn_in")? {
        "half" => 0.5 * t_end,
        _ => cfg.f64("cycle.burn_in")?,
    };
    let late: Vec<usize> = (0..traj.len()).filter(|&i| traj.t[i] >= burn_in).collect();
    if late.is_empty() {
        return Err(ConfigError("cycle.burn_in leaves no samples".into()).into());
    }
    let level = match cfg.str("cycle.level")? {
        "mean" => late.iter().map(|&i| traj.y[i][component]).sum::<f64>() / late.len() as f64,
        _ => cfg.f64("cycle.level")?,
    };
    let report = detect_limit_cycle(&traj, Section::new(component, level, burn_in));
    let csv = ctx.out.join("cycle.csv");
    let mut header = vec!["t"];
    header.extend(traj.names.iter().map(|s| s.as_str()));
    write_csv(
        &csv,
        &header,
        late.iter().map(|&i| std::iter::once(traj.t[i]).chain(traj.y[i].iter().copied()).collect::<Vec<_>>()),
    )?;
    let rep = ctx.out.join("cycle_report.txt");
    let mut kv = report.to_kv();
    kv.text("system", params.id().name());
    kv.write(&rep)?;
    Ok(Outcome { summary: kv, artifacts: vec![csv, rep] })
}

pub fn floquet(ctx: &Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let pl = powerlaw(cfg)?;
    let dt = cfg.f64("floquet.dt")?;
    let report = floquet_compare(&pl, &cfg.control()?, dt)?;
    let rep = ctx.out.join("floquet_report.txt");
    let mut kv = report.to_kv();
    let orbit = ctx.out.join("floquet_orbit.csv");
    report.write_orbit(&orbit)?;
    let mut artifacts = vec![rep.clone(), orbit];
    let cases = cfg.usize("floquet.random_cases")?;
    if cases > 0 {
        let controls = random_controls(ctx.seed, cases)?;
        let reports = floquet_sweep(Execution::Parallel, &pl, &controls, dt)
            .into_iter()
            .collect::<growfrag::Result<Vec<_>>>()?;
        let csv = ctx.out.join("floquet_cases.csv");
        write_csv(
            &csv,
            &["case", "period", "lambda_f", "lambda_of_means", "mean_lambda"],
            reports
                .iter()
                .enumerate()
                .map(|(i, r)| [i as f64, r.period, r.lambda_f, r.lambda_of_means, r.mean_lambda]),
        )?;
        kv.int("random_cases", cases);
        artifacts.push(csv);
    }
    kv.write(&rep)?;
    Ok(Outcome { summary: kv, artifacts })
}

pub fn figure(ctx: &Ctx, which: u8) -> Result<Outcome> {
    let opts = FigureOptions { dt: ctx.cfg.f64("figure.dt")?, stride: ctx.cfg.usize("figure.stride")? };
    if opts.stride == 0 {
        bail!(ConfigError("figure.stride must be at least 1".into()));
    }
    let (summary, artifacts) = match which {
        1 => {
            let fig = figure1(opts)?;
            (fig.report(), fig.write(ctx.out)?)
        }
        2 => {
            let fig = figure2(opts)?;
            (fig.report(), fig.write(ctx.out)?)
        }
        3 => {
            let fig = figure3(opts)?;
            (fig.report(), fig.write(ctx.out)?)
        }
        n => bail!(ConfigError(format!("figure {n} does not exist; choose 1, 2 or 3"))),
    };
    Ok(Outcome { summary, artifacts })
}

pub fn dispatch(command: &str, figure_no: Option<u8>, ctx: &Ctx) -> Result<Outcome> {
    std::fs::create_dir_all(ctx.out).with_context(|| format!("cannot create {}", ctx.out.display()))?;
    match command {
        "eigen" => eigen(ctx),
        "simulate-pde" => simulate_pde(ctx),
        "simulate-ode" => simulate_ode(ctx),
        "steady-states" => steady(ctx),
        "hopf-scan" => hopf(ctx),
        "limit-cycle" => limit_cycle(ctx),
        "floquet-compare" => floquet(ctx),
        "figure" => figure(ctx, figure_no.unwrap_or(0)),
        other => bail!(ConfigError(format!("unknown command '{other}'"))),
    }
}
