//! The `integrate` command.

use contactum_core::dynamics::{integrate_contact_monitored, integrate_herglotz, Trajectory};
use contactum_core::function::SmoothFunction;

use crate::config::{self, check_point, ConfigError, LoadedSystem, Model};
use crate::output::emit;
use crate::{Failure, IntegrateArgs, EXIT_INTEGRATION, EXIT_OK};

pub const DEFAULT_T: f64 = 1.0;
pub const DEFAULT_DT: f64 = 1e-3;

/// Time span, step and initial point after applying command line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub t: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
}

pub fn settings(sys: &LoadedSystem, args: &IntegrateArgs) -> Result<Settings, ConfigError> {
    let t = args.t.or(sys.config.t).unwrap_or(DEFAULT_T);
    if !(t >= 0.0 && t.is_finite()) {
        return Err(ConfigError::field(
            "t",
            format!("final time must be finite and nonnegative, got {t}"),
        ));
    }
    let dt = args.dt.or(sys.config.dt).unwrap_or(DEFAULT_DT);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ConfigError::field(
            "dt",
            format!("step must be positive, got {dt}"),
        ));
    }
    let x0 = args
        .x0
        .clone()
        .or_else(|| sys.config.x0.clone())
        .or_else(|| sys.config.seeds.first().cloned())
        .ok_or_else(|| {
            ConfigError::field("x0", "no initial point: pass --x0 or set `x0` or `seeds`")
        })?;
    check_point("x0", &x0, &sys.chart)?;
    Ok(Settings { t, dt, x0 })
}

pub fn trajectory(sys: &LoadedSystem, s: &Settings) -> contactum_core::error::Result<Trajectory> {
    match &sys.model {
        Model::Hamiltonian { hamiltonian, .. } => {
            let monitored: Vec<&dyn SmoothFunction> = sys
                .constraints
                .iter()
                .map(|(_, _, f)| f as &dyn SmoothFunction)
                .collect();
            integrate_contact_monitored(hamiltonian, &monitored, &s.x0, s.t, s.dt)
        }
        Model::Lagrangian(lag) => {
            let n = sys.chart.n();
            integrate_herglotz(lag, &s.x0[..n], &s.x0[n..2 * n], s.x0[2 * n], s.t, s.dt)
        }
    }
}

pub fn summary(traj: &Trajectory) -> String {
    let last = traj
        .diagnostics
        .last()
        .expect("trajectories hold the initial state");
    let residual = traj
        .diagnostics
        .iter()
        .map(|d| d.constraint_residual)
        .fold(0.0, f64::max);
    let eta_defect = traj
        .diagnostics
        .iter()
        .map(|d| (d.eta_x + d.hamiltonian).abs())
        .fold(0.0, f64::max);
    format!(
        "t = {} steps = {} final H = {:.9e} max constraint residual = {:.3e} max |eta(X) + H| = {:.3e}",
        traj.times.last().copied().unwrap_or(0.0),
        traj.len() - 1,
        last.hamiltonian,
        residual,
        eta_defect
    )
}

pub fn run(args: &IntegrateArgs) -> Result<i32, Failure> {
    let mut sys = config::load_path(&args.config)?;
    sys.override_tolerances(args.tolerances.rank_tol, args.tolerances.fd_step)?;
    let s = settings(&sys, args)?;
    let traj = match trajectory(&sys, &s) {
        Ok(t) => t,
        Err(e) => return Err(Failure::new(EXIT_INTEGRATION, e)),
    };
    emit(args.out.as_deref(), &traj.to_csv())?;
    if args.out.is_some() {
        println!("{}", summary(&traj));
    } else {
        eprintln!("{}", summary(&traj));
    }
    Ok(EXIT_OK)
}
