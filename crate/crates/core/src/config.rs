//! Run configuration: a flat `key = value` file plus overrides.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::albrekht_spectral::Forcing;
use crate::error::{Error, Result};
use crate::finite_model::StateWeight;
use crate::riccati_spectral::{IterationOptions, Sweep};
use crate::simulator::SimConfig;

pub const MAX_MODES: usize = 24;
pub const MAX_GRID: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidInput(format!("unknown format `{other}` (csv|json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub beta: f64,
    pub alpha: f64,
    pub modes: usize,
    pub grid: usize,
    pub r: f64,
    pub state_weight: StateWeight,
    pub max_iter: usize,
    pub tol: f64,
    pub paper_mode: bool,
    pub sweep: Sweep,
    pub forcing: Forcing,
    pub dt: f64,
    pub t_final: f64,
    pub fp_iters: usize,
    pub fp_tol: f64,
    pub diverge_threshold: f64,
    pub converge_threshold: f64,
    pub out: PathBuf,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let it = IterationOptions::default();
        Self {
            beta: 1.0,
            alpha: 1.0,
            modes: crate::spectral_basis::DEFAULT_MODES,
            grid: crate::finite_model::DEFAULT_GRID,
            r: 1.0,
            state_weight: StateWeight::default(),
            max_iter: it.max_iter,
            tol: it.tol,
            paper_mode: false,
            sweep: it.sweep,
            forcing: Forcing::default(),
            dt: sim.dt,
            t_final: sim.t_final,
            fp_iters: sim.fp_iters,
            fp_tol: sim.fp_tol,
            diverge_threshold: sim.diverge_threshold,
            converge_threshold: sim.converge_threshold,
            out: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "beta",
        "alpha",
        "modes",
        "grid",
        "r",
        "state_weight",
        "max_iter",
        "tol",
        "paper_mode",
        "sweep",
        "forcing",
        "dt",
        "t_final",
        "fp_iters",
        "fp_tol",
        "diverge_threshold",
        "converge_threshold",
        "out",
        "format",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "beta" => self.beta = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "modes" => self.modes = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "r" => self.r = parse(key, value)?,
            "state_weight" => self.state_weight = value.parse()?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "paper_mode" => self.paper_mode = parse(key, value)?,
            "sweep" => {
                self.sweep = match value {
                    "jacobi" => Sweep::Jacobi,
                    "policy" | "policy_iteration" => Sweep::PolicyIteration,
                    other => {
                        return Err(Error::InvalidInput(format!("unknown sweep `{other}` (jacobi|policy)")))
                    }
                }
            }
            "forcing" => self.forcing = value.parse()?,
            "dt" => self.dt = parse(key, value)?,
            "t_final" => self.t_final = parse(key, value)?,
            "fp_iters" => self.fp_iters = parse(key, value)?,
            "fp_tol" => self.fp_tol = parse(key, value)?,
            "diverge_threshold" => self.diverge_threshold = parse(key, value)?,
            "converge_threshold" => self.converge_threshold = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "format" => self.format = value.parse()?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if !(1..=MAX_MODES).contains(&self.modes) {
            return bad(format!("modes must be in 1..={MAX_MODES}, got {}", self.modes));
        }
        if !(2..=MAX_GRID).contains(&self.grid) {
            return bad(format!("grid must be in 2..={MAX_GRID}, got {}", self.grid));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        self.sim().validate()
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            t_final: self.t_final,
            fp_iters: self.fp_iters,
            fp_tol: self.fp_tol,
            diverge_threshold: self.diverge_threshold,
            converge_threshold: self.converge_threshold,
        }
    }

    pub fn iteration(&self) -> IterationOptions {
        IterationOptions { max_iter: self.max_iter, tol: self.tol, paper_mode: self.paper_mode, sweep: self.sweep }
    }
}
