//! Command-line front end. Every subcommand resolves one [`RunConfig`] from an
//! optional flat `key = value` file plus `--set key=value` overrides, runs, and
//! writes a JSON report embedding the resolved config and the crate version.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::certificate::{
    estimate_constants, falsification_probe, global_schedule, is_geometric, local_schedule, ProbeSettings,
};
use crate::duhamel::{
    picard_solve, picard_solve_two_sided, save_trajectory, splitting_oracle, OracleConfig, ProblemSpec, TimeMesh,
    Trajectory,
};
use crate::error::{NlsError, Result};
use crate::initial_data::{build_initial_data, DataKind, InitialDataDescriptor, Sampling};
use crate::lens::{scatter_report, write_json, write_series_csv};
use crate::nlsf::{read_field, write_field};
use crate::spectral::{free_propagate, make_grid, Field, GridSpec, C64};
use crate::verify::{run_battery, VerifyConfig};
use crate::weighted::{select_params, sigma_norm, weighted_infimum, x_norm, SpaceParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "NLS_LENS_THREADS";

/// Fully resolved run configuration. Every key has a default, so an empty
/// config file is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub alpha: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub b: f64,
    /// `forward` or `two_sided`.
    pub mode: String,
    pub t_max: f64,

    pub points: usize,
    pub half_width: f64,
    /// Explicit `(s, m, n)`; all three or none.
    pub s: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,

    pub time_nodes: usize,
    pub grading_rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Splitting steps for the optional cross-check (0 disables it).
    pub oracle_steps: usize,
    pub oracle_rho: f64,

    /// `inverse_bracket`, `gaussian` or `inverse_bracket_plus_bump`.
    pub data: String,
    /// Decay power of the inverse bracket; defaults to `n`.
    pub p: Option<f64>,
    pub z_re: f64,
    pub z_im: f64,
    pub width: f64,
    pub sigma: f64,
    pub bump_amp: f64,
    pub bump_width: f64,
    pub bump_center: f64,
    pub chirp_b: f64,
    /// `periodized` or `pointwise`.
    pub sampling: String,
    /// Read the data from an NLSF file instead of building it.
    pub input: Option<PathBuf>,

    /// Free-evolution time for `propagate`.
    pub time: f64,

    pub seed: u64,
    pub family_size: usize,
    pub family_points: usize,
    pub family_half_width: f64,
    /// Skip the family estimate and use this constant.
    pub c_tilde: Option<f64>,
    /// Halvings of `b` tried by the falsification probe (0 disables it).
    pub probe_halvings: usize,

    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            alpha: 2.5,
            lambda_re: 1.0,
            lambda_im: 0.0,
            b: 8.0,
            mode: "forward".into(),
            t_max: 1.0,
            points: 512,
            half_width: 20.0,
            s: None,
            m: None,
            n: None,
            time_nodes: 64,
            grading_rho: 4.0,
            tol: 1e-10,
            max_iter: 100,
            oracle_steps: 0,
            oracle_rho: 3.0,
            data: "inverse_bracket".into(),
            p: None,
            z_re: 1.0,
            z_im: 0.0,
            width: 1.0,
            sigma: 1.0,
            bump_amp: 0.0,
            bump_width: 1.0,
            bump_center: 0.0,
            chirp_b: 0.0,
            sampling: "periodized".into(),
            input: None,
            time: 1.0,
            seed: 20_240_601,
            family_size: 20,
            family_points: 1024,
            family_half_width: 30.0,
            c_tilde: None,
            probe_halvings: 0,
            output: PathBuf::from("nls-lens-out"),
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> Result<SpaceParams> {
        match (self.s, self.m, self.n) {
            (None, None, None) => select_params(self.dim, self.alpha),
            (Some(s), Some(m), Some(n)) => SpaceParams::new(self.dim, self.alpha, s, m, n),
            _ => Err(NlsError::Config("set all of s, m, n or none of them".into())),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.dim, self.points, self.half_width)
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let lambda = C64::new(self.lambda_re, self.lambda_im);
        match self.mode.as_str() {
            "forward" => ProblemSpec::forward(self.dim, self.alpha, lambda, self.b),
            "two_sided" => ProblemSpec::two_sided(self.dim, self.alpha, lambda, self.b, self.t_max),
            other => Err(NlsError::Config(format!("mode must be forward or two_sided, got {other:?}"))),
        }
    }

    pub fn descriptor(&self, params: &SpaceParams) -> Result<InitialDataDescriptor> {
        let z = [self.z_re, self.z_im];
        let p = self.p.unwrap_or(params.n as f64);
        let kind = match self.data.as_str() {
            "inverse_bracket" => DataKind::InverseBracket {
                p,
                z,
                width: self.width,
                center: [0.0; 3],
            },
            "gaussian" => DataKind::Gaussian { sigma: self.sigma, z },
            "inverse_bracket_plus_bump" => DataKind::InverseBracketPlusBump {
                p,
                z,
                bump_amp: self.bump_amp,
                bump_width: self.bump_width,
                bump_center: [self.bump_center, 0.0, 0.0],
            },
            other => return Err(NlsError::Config(format!("unknown data kind {other:?}"))),
        };
        let sampling = match self.sampling.as_str() {
            "periodized" => Sampling::Periodized,
            "pointwise" => Sampling::Pointwise,
            other => return Err(NlsError::Config(format!("sampling must be periodized or pointwise, got {other:?}"))),
        };
        Ok(InitialDataDescriptor {
            kind,
            chirp_b: self.chirp_b,
            sampling,
        })
    }

    /// The data field: read from `input` when set, built otherwise.
    pub fn initial_field(&self, params: &SpaceParams) -> Result<(Field, serde_json::Value)> {
        if let Some(path) = &self.input {
            let f = read_input(path)?;
            let admissibility = serde_json::json!({
                "weighted_infimum": weighted_infimum(&f, params.n),
                "x_norm_total": x_norm(&f, params)?.total,
            });
            return Ok((f, admissibility));
        }
        let data = build_initial_data(&self.descriptor(params)?, &self.grid()?, params)?;
        Ok((data.field, serde_json::to_value(&data.admissibility)?))
    }
}

fn read_input(path: &Path) -> Result<Field> {
    read_field(path).map_err(|e| match e {
        NlsError::Io(io) => NlsError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

/// Parses a flat `key = value` file, applies `key=value` overrides, and fills
/// the remaining keys with defaults.
pub fn resolve_config(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match file {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            toml::from_str::<toml::Table>(&text).map_err(|e| NlsError::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    if let Some((key, _)) = table.iter().find(|(_, v)| v.is_table() || v.is_array()) {
        return Err(NlsError::Config(format!("config must be flat, but {key:?} is nested")));
    }
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| NlsError::Config(format!("override {item:?} is not key=value")))?;
        table.insert(key.trim().to_string(), parse_value(raw.trim()));
    }
    toml::Value::Table(table)
        .try_into::<RunConfig>()
        .map_err(|e| NlsError::Config(e.to_string()))
}

/// Reads an override value as TOML, falling back to a bare string so that
/// `data=gaussian` works without quotes.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[derive(Parser, Debug)]
#[command(name = "nls-lens", version, about = "Spectral NLS simulator, lens transform and estimate verifier")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Report directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the space parameters selected for (N, α).
    Params {
        #[arg(long = "N")]
        dim: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// X and Σ norms of an NLSF field.
    Norm { file: PathBuf },
    /// Free evolution of the configured data.
    Propagate {
        #[arg(long)]
        time: Option<f64>,
    },
    /// Picard solve of the transformed equation.
    Solve,
    /// Solve on [0, 1/b] and report the scattering defect and decay.
    Scatter,
    /// Local and global contraction schedules.
    Certificate,
    /// Run the estimate-verification battery.
    Verify,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    result: T,
}

fn emit<T: Serialize>(cfg: &RunConfig, command: &str, result: T) -> Result<()> {
    let report = Report {
        version: VERSION,
        command,
        config: cfg,
        result,
    };
    fs::create_dir_all(&cfg.output)?;
    write_json(&cfg.output.join(format!("{command}.json")), &report)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(&report)?) {
        // a closed pipe (e.g. `| head`) is not an error of the run
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

/// Caps the global rayon pool from `NLS_LENS_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| NlsError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // a pool already built (e.g. in tests) keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|_| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    match &cli.command {
        Command::Params { dim, alpha } => {
            overrides.extend(dim.map(|d| format!("dim={d}")));
            overrides.extend(alpha.map(|a| format!("alpha={a}")));
        }
        Command::Propagate { time: Some(t) } => overrides.push(format!("time={t}")),
        _ => {}
    }
    let mut cfg = resolve_config(cli.config.as_deref(), &overrides)?;
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    match &cli.command {
        Command::Params { .. } => emit(&cfg, "params", cfg.params()?),
        Command::Norm { file } => cmd_norm(&cfg, file),
        Command::Propagate { .. } => cmd_propagate(&cfg),
        Command::Solve => cmd_solve(&cfg),
        Command::Scatter => cmd_scatter(&cfg),
        Command::Certificate => cmd_certificate(&cfg),
        Command::Verify => emit(&cfg, "verify", run_battery(&VerifyConfig::standard(cfg.params()?)?)?),
    }
}

fn cmd_norm(cfg: &RunConfig, file: &Path) -> Result<()> {
    let f = read_input(file)?;
    let mut cfg = cfg.clone();
    cfg.dim = f.grid().dim();
    let params = cfg.params()?;
    let x = x_norm(&f, &params)?;
    emit(
        &cfg,
        "norm",
        serde_json::json!({
            "file": file,
            "grid": f.grid(),
            "params": params,
            "x_norm": x,
            "sigma_norm": sigma_norm(&f),
            "l2_norm": f.l2_norm(),
        }),
    )
}

fn cmd_propagate(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    let (phi, admissibility) = cfg.initial_field(&params)?;
    let u = free_propagate(&phi, cfg.time);
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("propagated.nlsf");
    write_field(&path, &u)?;
    emit(
        cfg,
        "propagate",
        serde_json::json!({
            "time": cfg.time,
            "admissibility": admissibility,
            "l2_initial": phi.l2_norm(),
            "l2_final": u.l2_norm(),
            "x_norm_final": x_norm(&u, &params)?.total,
            "field": path,
        }),
    )
}

#[derive(Serialize)]
struct SolveSummary {
    residual: f64,
    iterations: usize,
    update_history: Vec<f64>,
    geometric_decay: bool,
    terminal_time: f64,
    terminal_l2: f64,
    lower_bound_lost: bool,
    oracle_terminal_l2_difference: Option<f64>,
    warnings: Vec<String>,
    trajectory_dir: PathBuf,
}

fn solve_with(cfg: &RunConfig, phi: &Field, prob: &ProblemSpec, params: &SpaceParams) -> Result<Trajectory> {
    match prob.direction {
        crate::duhamel::Direction::Forward => {
            let mesh = TimeMesh::graded(prob.b, prob.gamma(), cfg.time_nodes, cfg.grading_rho)?;
            picard_solve(phi, prob, params, &mesh, cfg.tol, cfg.max_iter)
        }
        crate::duhamel::Direction::TwoSided { .. } => {
            picard_solve_two_sided(phi, prob, params, cfg.time_nodes, cfg.tol, cfg.max_iter)
        }
    }
}

fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    let prob = cfg.problem()?;
    let (phi, _) = cfg.initial_field(&params)?;
    let traj = solve_with(cfg, &phi, &prob, &params)?;
    let oracle_diff = if cfg.oracle_steps > 0 {
        let t_end = *traj.times().last().unwrap();
        let mut oc = OracleConfig::new(cfg.oracle_steps);
        oc.grading_rho = cfg.oracle_rho;
        oc.record_stride = cfg.oracle_steps;
        let oracle = splitting_oracle(&phi, &ProblemSpec { direction: crate::duhamel::Direction::Forward, ..prob }, t_end, &oc, &params)?;
        Some(traj.last().l2_distance(oracle.last())?)
    } else {
        None
    };
    let dir = cfg.output.join("trajectory");
    save_trajectory(&dir, &traj)?;
    emit(
        cfg,
        "solve",
        SolveSummary {
            residual: traj.residual,
            iterations: traj.iterations,
            geometric_decay: is_geometric(&traj.update_history),
            update_history: traj.update_history.clone(),
            terminal_time: *traj.times().last().unwrap(),
            terminal_l2: traj.last().l2_norm(),
            lower_bound_lost: traj.lower_bound_lost,
            oracle_terminal_l2_difference: oracle_diff,
            warnings: traj.warnings.clone(),
            trajectory_dir: dir,
        },
    )
}

fn cmd_scatter(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    let prob = cfg.problem()?;
    if !matches!(prob.direction, crate::duhamel::Direction::Forward) {
        return Err(NlsError::Config("scatter runs forward in time; set mode = \"forward\"".into()));
    }
    let (phi, _) = cfg.initial_field(&params)?;
    let traj = solve_with(cfg, &phi, &prob, &params)?;
    let report = scatter_report(&traj, prob.b)?;
    fs::create_dir_all(&cfg.output)?;
    write_series_csv(&cfg.output.join("defect.csv"), &report.defect_series)?;
    write_series_csv(&cfg.output.join("decay.csv"), &report.decay_series)?;
    emit(
        cfg,
        "scatter",
        serde_json::json!({
            "solve": {
                "residual": traj.residual,
                "iterations": traj.iterations,
                "update_history": traj.update_history,
            },
            "scatter": report,
        }),
    )
}

fn cmd_certificate(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    let prob = cfg.problem()?;
    let (phi, _) = cfg.initial_field(&params)?;
    let estimate = match cfg.c_tilde {
        Some(_) => None,
        None => {
            let g = make_grid(cfg.dim, cfg.family_points, cfg.family_half_width)?;
            Some(estimate_constants(cfg.seed, &params, &g, cfg.family_size)?)
        }
    };
    let c = cfg.c_tilde.unwrap_or_else(|| estimate.as_ref().unwrap().c_tilde);
    let local = local_schedule(&phi, c, &prob, &params)?;
    let global = if cfg.dim as f64 * cfg.alpha > 2.0 {
        Some(global_schedule(&phi, c, &prob, &params)?)
    } else {
        None
    };
    let probe = if cfg.probe_halvings > 0 && global.is_some() {
        let settings = ProbeSettings {
            k: cfg.time_nodes,
            grading_rho: cfg.grading_rho,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            halvings: cfg.probe_halvings,
        };
        Some(falsification_probe(&phi, c, &prob, &params, &settings)?)
    } else {
        None
    };
    emit(
        cfg,
        "certificate",
        serde_json::json!({
            "label": "empirical",
            "c_tilde": c,
            "constant_estimate": estimate,
            "local": local,
            "global": global,
            "falsification": probe,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_layers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "alpha = 3.0\npoints = 256\ndata = \"gaussian\"\n").unwrap();
        let cfg = resolve_config(Some(&path), &["points=128".into(), "mode=two_sided".into()]).unwrap();
        assert_eq!(cfg.alpha, 3.0);
        assert_eq!(cfg.points, 128);
        assert_eq!(cfg.data, "gaussian");
        assert_eq!(cfg.mode, "two_sided");
        assert_eq!(cfg.half_width, 20.0);

        fs::write(&path, "[nested]\nx = 1\n").unwrap();
        assert!(matches!(resolve_config(Some(&path), &[]), Err(NlsError::Config(_))));
        assert!(resolve_config(None, &["bogus=1".into()]).is_err());
        assert!(resolve_config(None, &["points".into()]).is_err());
    }

    #[test]
    fn override_values_parse() {
        assert_eq!(parse_value("3"), toml::Value::Integer(3));
        assert_eq!(parse_value("2.5"), toml::Value::Float(2.5));
        assert_eq!(parse_value("gaussian"), toml::Value::String("gaussian".into()));
        assert_eq!(parse_value("\"a b\""), toml::Value::String("a b".into()));
    }

    #[test]
    fn partial_params_rejected() {
        let cfg = resolve_config(None, &["s=1".into()]).unwrap();
        assert!(cfg.params().is_err());
        let cfg = resolve_config(None, &["s=1".into(), "m=2".into(), "n=2".into()]).unwrap();
        assert_eq!(cfg.params().unwrap().j, 9);
    }
}
