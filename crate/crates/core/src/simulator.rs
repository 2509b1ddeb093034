//! Crank-Nicolson integration of the closed-loop grid model and
//! basin-of-stability sweeps over constant initial profiles.
//!
//! A step solves `z+ = z + dt/2 (h(z) + h(z+))` with
//! `h(z) = F z + N(z)`, `N(z) = G u(z) + alpha z.^2`. The stiff diffusion
//! part is taken implicitly (one tridiagonal factorization per run) and the
//! nonlinear part is corrected by fixed-point iteration:
//! `(I - dt/2 F) z+ = (I + dt/2 F) z + dt/2 (N(z) + N(z+))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::finite_model::DiscreteModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub fp_iters: usize,
    pub fp_tol: f64,
    pub diverge_threshold: f64,
    pub converge_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 20.0,
            fp_iters: 5,
            fp_tol: 1e-12,
            diverge_threshold: 1e3,
            converge_threshold: 1e-3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("fp_tol", self.fp_tol),
            ("diverge_threshold", self.diverge_threshold),
            ("converge_threshold", self.converge_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.fp_iters == 0 {
            return Err(Error::InvalidInput("fp_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converged,
    Diverged,
    Undetermined,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Converged => "Converged",
            Verdict::Diverged => "Diverged",
            Verdict::Undetermined => "Undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    pub linf: Vec<f64>,
    pub verdict: Verdict,
    /// Largest last fixed-point correction over all steps.
    pub max_correction: f64,
}

impl Trajectory {
    pub fn final_linf(&self) -> f64 {
        match self.verdict {
            Verdict::Diverged => f64::INFINITY,
            _ => self.linf.last().copied().unwrap_or(0.0),
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub corrections: usize,
    pub last_change: f64,
}

/// Prefactored Crank-Nicolson stepper for one model, law and step size.
pub struct CrankNicolson<'a> {
    model: &'a DiscreteModel,
    law: &'a FeedbackLaw,
    cfg: SimConfig,
    lower: Vec<f64>,
    main: Vec<f64>,
    upper: Vec<f64>,
    // Thomas factorization of I - dt/2 F
    sub: Vec<f64>,
    inv_pivot: Vec<f64>,
    sup: Vec<f64>,
}

impl<'a> CrankNicolson<'a> {
    pub fn new(model: &'a DiscreteModel, law: &'a FeedbackLaw, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        if law.dim() != model.dim() {
            return Err(Error::InvalidInput(format!(
                "feedback law has dimension {}, model has {}",
                law.dim(),
                model.dim()
            )));
        }
        let (lower, main, upper) = model.tridiagonal();
        let h = 0.5 * cfg.dt;
        let d = main.len();
        let sub: Vec<f64> = lower.iter().map(|v| -h * v).collect();
        let sup: Vec<f64> = upper.iter().map(|v| -h * v).collect();
        let mut inv_pivot = vec![0.0; d];
        let mut c_prime = vec![0.0; d.saturating_sub(1)];
        let mut pivot = 1.0 - h * main[0];
        for i in 0..d {
            if i > 0 {
                pivot = 1.0 - h * main[i] - sub[i - 1] * c_prime[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::InvalidInput("Crank-Nicolson matrix is singular".into()));
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < d {
                c_prime[i] = sup[i] * inv_pivot[i];
            }
        }
        Ok(Self { model, law, cfg, lower, main, upper, sub, inv_pivot, sup: c_prime })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let d = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..d {
            rhs[i] = (rhs[i] - self.sub[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..d - 1).rev() {
            rhs[i] -= self.sup[i] * rhs[i + 1];
        }
    }

    fn nonlinear(&self, z: &[f64], out: &mut [f64]) {
        let u = self.law.control(z);
        let alpha = self.model.alpha;
        for ((o, zi), gi) in out.iter_mut().zip(z).zip(self.model.g.iter()) {
            *o = gi * u + alpha * zi * zi;
        }
    }

    pub fn step(&self, z: &[f64], time: f64) -> Result<(Vec<f64>, StepInfo)> {
        let d = z.len();
        let h = 0.5 * self.cfg.dt;
        let mut nz = vec![0.0; d];
        self.nonlinear(z, &mut nz);
        // (I + dt/2 F) z + dt/2 N(z)
        let mut base = vec![0.0; d];
        for i in 0..d {
            let mut fz = self.main[i] * z[i];
            if i > 0 {
                fz += self.lower[i - 1] * z[i - 1];
            }
            if i + 1 < d {
                fz += self.upper[i] * z[i + 1];
            }
            base[i] = z[i] + h * (fz + nz[i]);
        }
        let mut next: Vec<f64> = base.iter().zip(&nz).map(|(b, n)| b + h * n).collect();
        self.solve(&mut next);
        let mut info = StepInfo { corrections: 0, last_change: f64::INFINITY };
        let mut trial = vec![0.0; d];
        for _ in 0..self.cfg.fp_iters {
            self.nonlinear(&next, &mut nz);
            for i in 0..d {
                trial[i] = base[i] + h * nz[i];
            }
            self.solve(&mut trial);
            let change = trial.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            std::mem::swap(&mut next, &mut trial);
            info.corrections += 1;
            info.last_change = change;
            if !change.is_finite() || change <= self.cfg.fp_tol {
                break;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { time: time + self.cfg.dt });
        }
        Ok((next, info))
    }
}

/// One Crank-Nicolson step from `state`.
pub fn step_crank_nicolson(
    m: &DiscreteModel,
    law: &FeedbackLaw,
    state: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    check_state(m, state)?;
    CrankNicolson::new(m, law, *cfg)?.step(state, 0.0).map(|(z, _)| z)
}

fn check_state(m: &DiscreteModel, z: &[f64]) -> Result<()> {
    if z.len() != m.dim() {
        return Err(Error::InvalidInput(format!(
            "initial state has {} entries, grid has {}",
            z.len(),
            m.dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial state is not finite".into()));
    }
    Ok(())
}

fn linf(z: &[f64]) -> f64 {
    z.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Steps to `t_final`, stopping early once the state exceeds the divergence threshold.
pub fn simulate(m: &DiscreteModel, law: &FeedbackLaw, z0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    check_state(m, z0)?;
    let stepper = CrankNicolson::new(m, law, *cfg)?;
    let steps = cfg.steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        linf: Vec::with_capacity(steps + 1),
        verdict: Verdict::Undetermined,
        max_correction: 0.0,
    };
    let mut z = z0.to_vec();
    let record = |traj: &mut Trajectory, t: f64, z: &[f64]| {
        traj.times.push(t);
        traj.controls.push(law.control(z));
        traj.linf.push(linf(z));
        traj.states.push(z.to_vec());
    };
    record(&mut traj, 0.0, &z);
    if linf(&z) > cfg.diverge_threshold {
        traj.verdict = Verdict::Diverged;
        return Ok(traj);
    }
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        match stepper.step(&z, t) {
            Ok((next, info)) => {
                traj.max_correction = traj.max_correction.max(info.last_change);
                z = next;
            }
            Err(Error::NonFiniteState { .. }) => {
                traj.verdict = Verdict::Diverged;
                return Ok(traj);
            }
            Err(e) => return Err(e),
        }
        record(&mut traj, (k + 1) as f64 * cfg.dt, &z);
        if linf(&z) > cfg.diverge_threshold {
            traj.verdict = Verdict::Diverged;
            return Ok(traj);
        }
    }
    traj.verdict = if linf(&z) < cfg.converge_threshold {
        Verdict::Converged
    } else {
        Verdict::Undetermined
    };
    Ok(traj)
}

/// Verdict for the constant profile `z0 = level`.
pub fn classify_level(m: &DiscreteModel, law: &FeedbackLaw, level: f64, cfg: &SimConfig) -> Result<Verdict> {
    Ok(simulate(m, law, &vec![level; m.dim()], cfg)?.verdict)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasinSpec {
    Levels(Vec<f64>),
    Bisection { lo: f64, hi: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BasinStatus {
    /// The boundary lies in `[below, above]`: `below` does not diverge, `above` does.
    Bracketed { below: f64, above: f64 },
    /// No sign change in the verdicts.
    Undetermined,
    NonMonotone { converged: f64, diverged: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinResult {
    /// Simulated levels in evaluation order.
    pub samples: Vec<(f64, Verdict)>,
    pub status: BasinStatus,
}

impl BasinResult {
    pub fn anomaly(&self) -> Option<Error> {
        match self.status {
            BasinStatus::Bracketed { .. } => None,
            BasinStatus::Undetermined => Some(Error::InvalidInput(
                "no convergence/divergence boundary inside the requested levels".into(),
            )),
            BasinStatus::NonMonotone { converged, diverged } => {
                Some(Error::NonMonotoneVerdict { converged, diverged })
            }
        }
    }
}

pub fn basin_sweep(m: &DiscreteModel, law: &FeedbackLaw, spec: &BasinSpec, cfg: &SimConfig) -> Result<BasinResult> {
    cfg.validate()?;
    let classify = |level: f64| classify_level(m, law, level, cfg);
    match spec {
        BasinSpec::Levels(levels) => sweep_levels(levels, classify),
        BasinSpec::Bisection { lo, hi, width } => bisect(*lo, *hi, *width, classify),
    }
}

/// Classifies every level (concurrently) and locates the boundary.
pub fn sweep_levels<C>(levels: &[f64], classify: C) -> Result<BasinResult>
where
    C: Fn(f64) -> Result<Verdict> + Sync,
{
    if levels.is_empty() {
        return Err(Error::InvalidInput("level list is empty".into()));
    }
    if levels.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidInput("levels must be finite".into()));
    }
    let verdicts: Vec<Verdict> = levels.par_iter().map(|&l| classify(l)).collect::<Result<_>>()?;
    let samples: Vec<(f64, Verdict)> = levels.iter().copied().zip(verdicts).collect();
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lowest_diverged = sorted.iter().find(|s| s.1 == Verdict::Diverged).map(|s| s.0);
    let highest_stable = sorted.iter().rev().find(|s| s.1 != Verdict::Diverged).map(|s| s.0);
    let status = match (highest_stable, lowest_diverged) {
        (Some(s), Some(d)) if s < d => BasinStatus::Bracketed { below: s, above: d },
        (Some(s), Some(d)) => BasinStatus::NonMonotone { converged: s, diverged: d },
        _ => BasinStatus::Undetermined,
    };
    Ok(BasinResult { samples, status })
}

/// Bisection on divergence, assuming levels below the boundary do not diverge.
pub fn bisect<C>(lo: f64, hi: f64, width: f64, classify: C) -> Result<BasinResult>
where
    C: Fn(f64) -> Result<Verdict> + Sync,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput(format!("bisection bracket [{lo}, {hi}] is not an interval")));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidInput(format!("bisection width must be positive, got {width}")));
    }
    let (v_lo, v_hi) = rayon::join(|| classify(lo), || classify(hi));
    let (v_lo, v_hi) = (v_lo?, v_hi?);
    let mut samples = vec![(lo, v_lo), (hi, v_hi)];
    let div = |v: Verdict| v == Verdict::Diverged;
    let status = match (div(v_lo), div(v_hi)) {
        (false, true) => {
            let (mut a, mut b) = (lo, hi);
            while b - a > width {
                let mid = 0.5 * (a + b);
                let v = classify(mid)?;
                samples.push((mid, v));
                if div(v) {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            BasinStatus::Bracketed { below: a, above: b }
        }
        (true, false) => BasinStatus::NonMonotone { converged: hi, diverged: lo },
        _ => BasinStatus::Undetermined,
    };
    Ok(BasinResult { samples, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_model::build_discrete;

    fn synthetic(critical: f64) -> impl Fn(f64) -> Result<Verdict> + Sync {
        move |l| Ok(if l > critical { Verdict::Diverged } else { Verdict::Converged })
    }

    #[test]
    fn bisection_brackets_synthetic_boundary() {
        let r = bisect(0.0, 10.0, 0.01, synthetic(3.14159)).unwrap();
        match r.status {
            BasinStatus::Bracketed { below, above } => {
                assert!(below <= 3.14159 && 3.14159 < above && above - below <= 0.01);
            }
            other => panic!("{other:?}"),
        }
        assert!(r.anomaly().is_none());
    }

    #[test]
    fn bisection_reports_anomalies() {
        let r = bisect(0.0, 1.0, 0.1, synthetic(5.0)).unwrap();
        assert_eq!(r.status, BasinStatus::Undetermined);
        let inverted = |l: f64| Ok(if l < 0.5 { Verdict::Diverged } else { Verdict::Converged });
        let r = bisect(0.0, 1.0, 0.1, inverted).unwrap();
        assert_eq!(r.status, BasinStatus::NonMonotone { converged: 1.0, diverged: 0.0 });
        assert!(matches!(r.anomaly(), Some(Error::NonMonotoneVerdict { .. })));
        assert!(bisect(1.0, 0.0, 0.1, synthetic(0.5)).is_err());
    }

    #[test]
    fn level_list_detects_order() {
        let r = sweep_levels(&[0.5, 2.0, 1.0, 3.0], synthetic(1.5)).unwrap();
        assert_eq!(r.status, BasinStatus::Bracketed { below: 1.0, above: 2.0 });
        assert_eq!(r.samples[1], (2.0, Verdict::Diverged));
        let odd = |l: f64| Ok(if l == 1.0 { Verdict::Diverged } else { Verdict::Converged });
        let r = sweep_levels(&[0.5, 1.0, 2.0], odd).unwrap();
        assert_eq!(r.status, BasinStatus::NonMonotone { converged: 2.0, diverged: 1.0 });
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let m = build_discrete(10, 1.0, 1.0).unwrap();
        let law = FeedbackLaw::open_loop(11);
        let traj = simulate(&m, &law, &[0.0; 11], &SimConfig::default()).unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
        assert_eq!(traj.verdict, Verdict::Converged);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m = build_discrete(10, 1.0, 1.0).unwrap();
        let law = FeedbackLaw::open_loop(11);
        assert!(simulate(&m, &law, &[0.0; 10], &SimConfig::default()).is_err());
        assert!(simulate(&m, &FeedbackLaw::open_loop(3), &[0.0; 11], &SimConfig::default()).is_err());
    }

    #[test]
    fn thomas_solve_matches_dense() {
        let m = build_discrete(6, 1.3, 0.0).unwrap();
        let law = FeedbackLaw::open_loop(7);
        let cfg = SimConfig { dt: 0.003, ..Default::default() };
        let stepper = CrankNicolson::new(&m, &law, cfg).unwrap();
        let rhs: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let mut x = rhs.clone();
        stepper.solve(&mut x);
        let a = nalgebra::DMatrix::identity(7, 7) - &m.f * (0.5 * cfg.dt);
        let back = a * nalgebra::DVector::from_vec(x);
        for (b, r) in back.iter().zip(&rhs) {
            assert!((b - r).abs() < 1e-12);
        }
    }
}
