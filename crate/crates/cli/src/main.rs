use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use rodctl::albrekht_spectral::{quadratic_gain, solve_cubic_tensor, tensor_equation_residual};
use rodctl::closed_loop_spectrum::closed_loop_modes;
use rodctl::config::{Format, RunConfig};
use rodctl::feedback::FeedbackLaw;
use rodctl::finite_model::{albrekht_expand, build_discrete_with, solve_discrete_lqr, DiscreteModel};
use rodctl::output::{fmt_f64, write_json, write_linf_plot, write_trajectory};
use rodctl::riccati_spectral::{default_weights, linear_gain, riccati_iterate_with, LqrWeights, RiccatiSolution};
use rodctl::simulator::{basin_sweep, simulate, BasinSpec, BasinStatus};
use rodctl::spectral_basis::{build_basis, SpectralBasis, DEFAULT_TOL};
use rodctl::symtensor::SymTensor;
use rodctl::{linalg, Error};

const EXIT_INPUT: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_SWEEP: u8 = 4;

#[derive(Parser)]
#[command(name = "rodctl", version, about = "Optimal boundary feedback for a reaction-diffusion rod")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open- and closed-loop spectrum in the eigenbasis.
    Spectrum(Common),
    /// Riccati matrix, linear gain, cubic cost tensor and quadratic gain in the eigenbasis.
    Gains(Common),
    /// LQR for the finite-difference model.
    Lqr(Common),
    /// Polynomial feedback through cubic terms for the finite-difference model.
    Albrekht {
        #[command(flatten)]
        common: Common,
        /// Feedback degree (1, 2 or 3).
        #[arg(long, default_value_t = 3)]
        degree: usize,
    },
    /// Simulate one initial condition.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        law: LawArgs,
        /// Constant initial level.
        #[arg(long, conflicts_with = "z0_file")]
        z0: Option<f64>,
        /// File with one initial value per grid point (whitespace or comma separated).
        #[arg(long)]
        z0_file: Option<PathBuf>,
    },
    /// Sweep constant initial levels for the stability boundary.
    Basin {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        law: LawArgs,
        /// Bisection bracket `lo,hi`.
        #[arg(long, value_delimiter = ',', conflicts_with = "levels")]
        bracket: Option<Vec<f64>>,
        /// Target bracket width for bisection.
        #[arg(long, default_value_t = 0.01)]
        width: f64,
        /// Explicit list of levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Spectral truncation order.
    #[arg(long)]
    modes: Option<usize>,
    /// Grid count (the grid has n + 1 points).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Run exactly 50 Riccati sweeps.
    #[arg(long)]
    paper_mode: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Extra `key=value` overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Preset {
    Open,
    Linear,
    Cubic,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Open => "open",
            Preset::Linear => "linear",
            Preset::Cubic => "cubic",
        }
    }
}

#[derive(Args, Clone)]
struct LawArgs {
    /// Synthesized feedback law.
    #[arg(long, value_enum, conflicts_with = "law")]
    preset: Option<Preset>,
    /// Feedback law file written by `albrekht`.
    #[arg(long)]
    law: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_text(&std::fs::read_to_string(path)?)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("override `{kv}` is not key=value")))?;
            cfg.set(k, v)?;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.modes {
            cfg.modes = v;
        }
        if let Some(v) = self.grid {
            cfg.grid = v;
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.t_final {
            cfg.t_final = v;
        }
        if self.paper_mode {
            cfg.paper_mode = true;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(f) = self.format {
            cfg.format = match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
        }
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.out)?;
        Ok(cfg)
    }
}

/// A table written either as CSV or as JSON (`columns` plus numeric `rows`).
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

enum Cell {
    Int(usize),
    Num(f64),
    Text(String),
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn write(&self, cfg: &RunConfig, stem: &str) -> Result<PathBuf, Error> {
        match cfg.format {
            Format::Csv => {
                let path = cfg.out.join(format!("{stem}.csv"));
                let rows: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|c| match c {
                                Cell::Int(i) => i.to_string(),
                                Cell::Num(v) => fmt_f64(*v),
                                Cell::Text(s) => s.clone(),
                            })
                            .collect()
                    })
                    .collect();
                let header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
                rodctl::output::write_csv(&path, &header, &rows)?;
                Ok(path)
            }
            Format::Json => {
                let path = cfg.out.join(format!("{stem}.json"));
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        Value::Array(
                            r.iter()
                                .map(|c| match c {
                                    Cell::Int(i) => json!(i),
                                    Cell::Num(v) => num(*v),
                                    Cell::Text(s) => json!(s),
                                })
                                .collect(),
                        )
                    })
                    .collect();
                write_json(&path, &json!({ "columns": self.columns, "rows": rows }))?;
                Ok(path)
            }
        }
    }
}

/// JSON has no infinities; write them as strings.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn matrix_table(m: &nalgebra::DMatrix<f64>) -> Table {
    let mut t = Table::new(&["i", "j", "value"]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t.rows.push(vec![Cell::Int(i), Cell::Int(j), Cell::Num(m[(i, j)])]);
        }
    }
    t
}

fn vector_table(v: &[f64]) -> Table {
    let mut t = Table::new(&["i", "value"]);
    t.rows = v.iter().enumerate().map(|(i, x)| vec![Cell::Int(i), Cell::Num(*x)]).collect();
    t
}

fn tensor_table(tensor: &SymTensor) -> Table {
    let header = rodctl::output::tensor_header(tensor.order());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&header);
    for (idx, v) in tensor.canonical_entries() {
        let mut row: Vec<Cell> = idx.into_iter().map(Cell::Int).collect();
        row.push(Cell::Num(v));
        t.rows.push(row);
    }
    t
}

struct Outcome {
    exit: u8,
    message: Option<String>,
}

impl Outcome {
    fn ok() -> Self {
        Self { exit: 0, message: None }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::UnknownKey(_) | Error::Io(_) => EXIT_INPUT,
        Error::NonMonotoneVerdict { .. } => EXIT_SWEEP,
        _ => EXIT_NONCONVERGENCE,
    }
}

fn spectral_setup(cfg: &RunConfig) -> Result<(SpectralBasis, LqrWeights, RiccatiSolution), Error> {
    let basis = build_basis(cfg.beta, cfg.modes, DEFAULT_TOL)?;
    let mut w = default_weights(&basis);
    w.r = cfg.r;
    let sol = riccati_iterate_with(&basis, &w, &cfg.iteration())?;
    Ok((basis, w, sol))
}

fn riccati_summary(sol: &RiccatiSolution) -> Value {
    json!({
        "iterations": sol.iterations,
        "residual": sol.residual,
        "last_change": sol.last_change,
        "converged": sol.converged,
        "p00": sol.p[(0, 0)],
    })
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<Outcome, Error> {
    let (basis, w, sol) = spectral_setup(cfg)?;
    let gain = linear_gain(&sol, &basis, &w);
    let closed = if sol.converged { Some(closed_loop_modes(&gain, &basis, basis.len())?) } else { None };
    let mut table = Table::new(&["n", "nu", "lambda", "c", "phi_at_1", "rho", "mu"]);
    for (n, m) in basis.modes.iter().enumerate() {
        let (rho, mu) = closed.as_ref().map_or((f64::NAN, f64::NAN), |c| (c[n].rho, c[n].mu));
        table.rows.push(vec![
            Cell::Int(n),
            Cell::Num(m.nu),
            Cell::Num(m.lambda),
            Cell::Num(m.c),
            Cell::Num(m.phi_at_1),
            Cell::Num(rho),
            Cell::Num(mu),
        ]);
    }
    let path = table.write(cfg, "spectrum")?;
    write_json(
        &cfg.out.join("spectrum_summary.json"),
        &json!({ "command": "spectrum", "config": cfg, "riccati": riccati_summary(&sol), "table": path }),
    )?;
    Ok(nonconvergence(&sol))
}

fn nonconvergence(sol: &RiccatiSolution) -> Outcome {
    match sol.ensure_converged() {
        Ok(()) => Outcome::ok(),
        Err(e) => Outcome { exit: EXIT_NONCONVERGENCE, message: Some(e.to_string()) },
    }
}

fn cmd_gains(cfg: &RunConfig) -> Result<Outcome, Error> {
    let (basis, w, sol) = spectral_setup(cfg)?;
    let gain = linear_gain(&sol, &basis, &w);
    matrix_table(&sol.p).write(cfg, "P")?;
    vector_table(&gain.k).write(cfg, "k1")?;
    let mut trace = Table::new(&["sweep", "probe_cost"]);
    trace.rows = sol.cost_trace.iter().enumerate().map(|(i, c)| vec![Cell::Int(i), Cell::Num(*c)]).collect();
    trace.write(cfg, "cost_trace")?;

    let mut summary = json!({
        "command": "gains",
        "config": cfg,
        "riccati": riccati_summary(&sol),
        "p_block": linalg::to_rows(&sol.p.view((0, 0), (4.min(basis.len()), 4.min(basis.len()))).clone_owned()),
        "p_max_asymmetry": linalg::max_asymmetry(&sol.p),
    });
    let outcome = nonconvergence(&sol);
    if sol.converged {
        let ct = solve_cubic_tensor(&sol, &basis, &w, cfg.alpha, cfg.forcing)?;
        let k2 = quadratic_gain(&ct, &basis, &w);
        tensor_table(&ct.t).write(cfg, "t3")?;
        matrix_table(&k2.k2).write(cfg, "k2")?;
        summary["cubic"] = json!({
            "forcing": cfg.forcing,
            "equation_residual": tensor_equation_residual(&ct, &sol, &basis, &w),
            "max_asymmetry": ct.t.max_asymmetry(),
            "t000": ct.t.get(&[0, 0, 0]),
        });
    }
    write_json(&cfg.out.join("gains_summary.json"), &summary)?;
    Ok(outcome)
}

fn model(cfg: &RunConfig) -> Result<DiscreteModel, Error> {
    build_discrete_with(cfg.grid, cfg.beta, cfg.alpha, cfg.state_weight, cfg.r)
}

fn poles(m: &nalgebra::DMatrix<f64>) -> Vec<Value> {
    linalg::spectrum(m).iter().map(|z| json!([z.re, z.im])).collect()
}

fn cmd_lqr(cfg: &RunConfig) -> Result<Outcome, Error> {
    let m = model(cfg)?;
    let lqr = solve_discrete_lqr(&m)?;
    matrix_table(&m.f).write(cfg, "F")?;
    vector_table(m.g.as_slice()).write(cfg, "G")?;
    matrix_table(&lqr.v2).write(cfg, "V2")?;
    vector_table(lqr.k1.as_slice()).write(cfg, "k1")?;
    write_json(
        &cfg.out.join("lqr_summary.json"),
        &json!({
            "command": "lqr",
            "config": cfg,
            "open_loop_poles": poles(&m.f),
            "closed_loop_poles": poles(&lqr.closed_loop(&m)),
            "are_residual": linalg::care_residual(&m.f, &m.g, &m.q, m.r, &lqr.v2).abs().max(),
        }),
    )?;
    Ok(Outcome::ok())
}

fn cmd_albrekht(cfg: &RunConfig, degree: usize) -> Result<Outcome, Error> {
    let m = model(cfg)?;
    let lqr = solve_discrete_lqr(&m)?;
    let (v, law) = albrekht_expand(&m, &lqr, degree)?;
    law.save(&cfg.out.join("law.json"))?;
    vector_table(&law.k1).write(cfg, "k1")?;
    if let Some(k2) = &law.k2 {
        tensor_table(k2).write(cfg, "k2")?;
    }
    if let Some(k3) = &law.k3 {
        tensor_table(k3).write(cfg, "k3")?;
    }
    if let Some(v3) = &v.v3 {
        tensor_table(v3).write(cfg, "v3")?;
    }
    if let Some(v4) = &v.v4 {
        tensor_table(v4).write(cfg, "v4")?;
    }
    write_json(
        &cfg.out.join("albrekht_summary.json"),
        &json!({ "command": "albrekht", "config": cfg, "degree": degree, "law": "law.json" }),
    )?;
    Ok(Outcome::ok())
}

fn resolve_law(m: &DiscreteModel, args: &LawArgs) -> Result<(FeedbackLaw, String), Error> {
    if let Some(path) = &args.law {
        let law = FeedbackLaw::load(path)?;
        if law.dim() != m.dim() {
            return Err(Error::InvalidInput(format!(
                "law has dimension {}, grid has {} points",
                law.dim(),
                m.dim()
            )));
        }
        return Ok((law, path.display().to_string()));
    }
    let preset = args.preset.unwrap_or(Preset::Open);
    let law = match preset {
        Preset::Open => FeedbackLaw::open_loop(m.dim()),
        Preset::Linear | Preset::Cubic => {
            let lqr = solve_discrete_lqr(m)?;
            let degree = if preset == Preset::Linear { 1 } else { 3 };
            albrekht_expand(m, &lqr, degree)?.1
        }
    };
    Ok((law, preset.name().to_string()))
}

fn read_profile(path: &Path, dim: usize) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path)?;
    let values: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidInput(format!("bad number `{s}` in {}", path.display()))))
        .collect::<Result<_, _>>()?;
    if values.len() != dim {
        return Err(Error::InvalidInput(format!(
            "{} has {} values, grid has {dim} points",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

fn cmd_simulate(cfg: &RunConfig, law_args: &LawArgs, z0: Option<f64>, z0_file: Option<&Path>) -> Result<Outcome, Error> {
    let m = model(cfg)?;
    let (law, law_name) = resolve_law(&m, law_args)?;
    let profile = match (z0, z0_file) {
        (_, Some(path)) => read_profile(path, m.dim())?,
        (Some(level), None) => vec![level; m.dim()],
        (None, None) => return Err(Error::InvalidInput("give --z0 or --z0-file".into())),
    };
    let start = Instant::now();
    let traj = simulate(&m, &law, &profile, &cfg.sim())?;
    let wall = start.elapsed().as_secs_f64();
    match cfg.format {
        Format::Csv => {
            write_trajectory(&cfg.out.join("trajectory.csv"), &traj)?;
            write_linf_plot(&cfg.out.join("linf.csv"), &traj)?;
        }
        Format::Json => {
            let mut t = Table::new(&["t", "linf", "u"]);
            for i in 0..traj.times.len() {
                t.rows.push(vec![Cell::Num(traj.times[i]), Cell::Num(traj.linf[i]), Cell::Num(traj.controls[i])]);
            }
            t.write(cfg, "trajectory")?;
        }
    }
    write_json(
        &cfg.out.join("simulate_summary.json"),
        &json!({
            "command": "simulate",
            "config": cfg,
            "law": law_name,
            "degree": law.degree,
            "z0": profile,
            "verdict": traj.verdict.name(),
            "final_linf": num(traj.final_linf()),
            "steps": traj.times.len() - 1,
            "max_fixed_point_correction": traj.max_correction,
            "wall_time_s": wall,
        }),
    )?;
    println!("{}", traj.verdict.name());
    Ok(Outcome::ok())
}

fn cmd_basin(
    cfg: &RunConfig,
    law_args: &LawArgs,
    bracket: Option<&[f64]>,
    width: f64,
    levels: Option<&[f64]>,
) -> Result<Outcome, Error> {
    let m = model(cfg)?;
    let (law, law_name) = resolve_law(&m, law_args)?;
    let spec = match (bracket, levels) {
        (Some(&[lo, hi]), _) => BasinSpec::Bisection { lo, hi, width },
        (Some(_), _) => return Err(Error::InvalidInput("--bracket takes exactly two values lo,hi".into())),
        (None, Some(l)) => BasinSpec::Levels(l.to_vec()),
        (None, None) => return Err(Error::InvalidInput("give --bracket or --levels".into())),
    };
    let result = basin_sweep(&m, &law, &spec, &cfg.sim())?;
    let mut t = Table::new(&["level", "verdict"]);
    t.rows = result.samples.iter().map(|(l, v)| vec![Cell::Num(*l), Cell::Text(v.name().into())]).collect();
    t.write(cfg, "basin")?;
    let status = match result.status {
        BasinStatus::Bracketed { below, above } => json!({ "status": "bracketed", "below": below, "above": above }),
        BasinStatus::Undetermined => json!({ "status": "undetermined" }),
        BasinStatus::NonMonotone { converged, diverged } => {
            json!({ "status": "non_monotone", "converged": converged, "diverged": diverged })
        }
    };
    write_json(
        &cfg.out.join("basin_summary.json"),
        &json!({ "command": "basin", "config": cfg, "law": law_name, "result": status }),
    )?;
    match result.status {
        BasinStatus::Bracketed { below, above } => {
            println!("critical level in [{below}, {above}]");
            Ok(Outcome::ok())
        }
        _ => Ok(Outcome { exit: EXIT_SWEEP, message: result.anomaly().map(|e| e.to_string()) }),
    }
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Spectrum(c) => cmd_spectrum(&c.resolve()?),
        Command::Gains(c) => cmd_gains(&c.resolve()?),
        Command::Lqr(c) => cmd_lqr(&c.resolve()?),
        Command::Albrekht { common, degree } => cmd_albrekht(&common.resolve()?, *degree),
        Command::Simulate { common, law, z0, z0_file } => {
            cmd_simulate(&common.resolve()?, law, *z0, z0_file.as_deref())
        }
        Command::Basin { common, law, bracket, width, levels } => {
            cmd_basin(&common.resolve()?, law, bracket.as_deref(), *width, levels.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            if let Some(msg) = outcome.message {
                eprintln!("rodctl: {msg}");
            }
            ExitCode::from(outcome.exit)
        }
        Err(e) => {
            eprintln!("rodctl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
