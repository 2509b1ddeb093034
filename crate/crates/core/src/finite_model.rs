//! Ghost-point finite differences for the rod and polynomial feedback
//! through cubic terms.
//!
//! States `zeta_k = z(k/n)` for `k = 0..=n`. The ghost values
//! `zeta_{-1} = zeta_1` (insulated end) and
//! `zeta_{n+1} = zeta_{n-1} + (2 beta / n)(u - zeta_n)` (Robin end) give
//! `zeta' = F zeta + G u + alpha zeta.^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::albrekht::{self, Expansion, Quadratic};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::linalg;
use crate::symtensor::SymTensor;

pub const DEFAULT_GRID: usize = 10;

/// Choice of the state weight `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateWeight {
    /// Trapezoidal quadrature of `int z^2`: `(1/n) diag(1/2, 1, ..., 1, 1/2)`.
    #[default]
    Trapezoid,
    /// `diag(1/2, 1, ..., 1, 1/2)` without the grid spacing.
    Unscaled,
    Identity,
}

impl std::str::FromStr for StateWeight {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" => Ok(StateWeight::Trapezoid),
            "unscaled" => Ok(StateWeight::Unscaled),
            "identity" => Ok(StateWeight::Identity),
            other => Err(Error::InvalidInput(format!(
                "unknown state weight `{other}` (trapezoid|unscaled|identity)"
            ))),
        }
    }
}

impl StateWeight {
    pub fn name(self) -> &'static str {
        match self {
            StateWeight::Trapezoid => "trapezoid",
            StateWeight::Unscaled => "unscaled",
            StateWeight::Identity => "identity",
        }
    }

    pub fn matrix(self, n: usize) -> DMatrix<f64> {
        match self {
            StateWeight::Identity => DMatrix::identity(n + 1, n + 1),
            StateWeight::Unscaled => DMatrix::from_diagonal(&DVector::from_vec(corner_halved(n))),
            StateWeight::Trapezoid => DMatrix::from_diagonal(&DVector::from_vec(trapezoid_weights(n))),
        }
    }
}

fn corner_halved(n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == 0 || k == n { 0.5 } else { 1.0 }).collect()
}

/// Trapezoid-rule weights on the grid `k/n`.
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    corner_halved(n).into_iter().map(|w| w / n as f64).collect()
}

pub fn grid_points(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub n: usize,
    pub beta: f64,
    pub alpha: f64,
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub q: DMatrix<f64>,
    pub r: f64,
    pub weight: StateWeight,
}

impl DiscreteModel {
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn quadratic(&self) -> Quadratic {
        Quadratic::Diagonal(self.alpha)
    }

    /// Sub-, main and super-diagonal of `F`.
    pub fn tridiagonal(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let lower = (1..d).map(|i| self.f[(i, i - 1)]).collect();
        let main = (0..d).map(|i| self.f[(i, i)]).collect();
        let upper = (0..d - 1).map(|i| self.f[(i, i + 1)]).collect();
        (lower, main, upper)
    }
}

pub fn build_discrete(n: usize, beta: f64, alpha: f64) -> Result<DiscreteModel> {
    build_discrete_with(n, beta, alpha, StateWeight::default(), 1.0)
}

pub fn build_discrete_with(
    n: usize,
    beta: f64,
    alpha: f64,
    weight: StateWeight,
    r: f64,
) -> Result<DiscreteModel> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("grid count must be at least 2, got {n}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidInput("alpha must be finite".into()));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("control weight must be positive, got {r}")));
    }
    let nf = n as f64;
    let s = nf * nf;
    let mut f = DMatrix::zeros(n + 1, n + 1);
    f[(0, 0)] = -2.0 * s;
    f[(0, 1)] = 2.0 * s;
    for k in 1..n {
        f[(k, k - 1)] = s;
        f[(k, k)] = -2.0 * s;
        f[(k, k + 1)] = s;
    }
    f[(n, n - 1)] = 2.0 * s;
    f[(n, n)] = -2.0 * nf * (nf + beta);
    let mut g = DVector::zeros(n + 1);
    g[n] = 2.0 * nf * beta;
    Ok(DiscreteModel { n, beta, alpha, f, g, q: weight.matrix(n), r, weight })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLqr {
    pub v2: DMatrix<f64>,
    pub k1: DVector<f64>,
}

impl DiscreteLqr {
    pub fn closed_loop(&self, m: &DiscreteModel) -> DMatrix<f64> {
        albrekht::closed_loop_matrix(&m.f, &m.g, &self.k1)
    }
}

pub fn solve_discrete_lqr(m: &DiscreteModel) -> Result<DiscreteLqr> {
    let v2 = linalg::care(&m.f, &m.g, &m.q, m.r)?;
    let k1 = -(&v2 * &m.g) / m.r;
    Ok(DiscreteLqr { v2, k1 })
}

/// Taylor coefficients of the optimal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbExpansion {
    pub v2: DMatrix<f64>,
    pub v3: Option<SymTensor>,
    pub v4: Option<SymTensor>,
}

impl HjbExpansion {
    pub fn value(&self, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        zv.dot(&(&self.v2 * &zv))
            + self.v3.as_ref().map_or(0.0, |t| t.eval(z))
            + self.v4.as_ref().map_or(0.0, |t| t.eval(z))
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let zv = DVector::from_column_slice(z);
        let mut grad: Vec<f64> = (&self.v2 * &zv * 2.0).iter().copied().collect();
        for t in [&self.v3, &self.v4].into_iter().flatten() {
            grad.iter_mut().zip(t.gradient(z)).for_each(|(g, d)| *g += d);
        }
        grad
    }
}

/// Feedback of `degree` 1, 2 or 3 and the cost through one degree higher.
pub fn albrekht_expand(
    m: &DiscreteModel,
    lqr: &DiscreteLqr,
    degree: usize,
) -> Result<(HjbExpansion, FeedbackLaw)> {
    let e: Expansion = albrekht::expand(&m.f, &m.g, m.r, &lqr.v2, &m.quadratic(), degree)?;
    let law = FeedbackLaw {
        degree,
        k1: e.k1.iter().copied().collect(),
        k2: e.k2,
        k3: e.k3,
    };
    Ok((HjbExpansion { v2: e.p, v3: e.t3, v4: e.t4 }, law))
}

/// `grad V . (F z + G u + f2(z)) + z'Qz + R u^2` with `u` from `law`.
pub fn hjb_residual(m: &DiscreteModel, v: &HjbExpansion, law: &FeedbackLaw, z: &[f64]) -> f64 {
    let zv = DVector::from_column_slice(z);
    let u = law.control(z);
    let drift = &m.f * &zv + &m.g * u + DVector::from_vec(m.quadratic().eval(z));
    let grad = DVector::from_vec(v.gradient(z));
    grad.dot(&drift) + zv.dot(&(&m.q * &zv)) + m.r * u * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matrices_match_the_ghost_point_stencil() {
        let m = build_discrete(10, 1.0, 1.0).unwrap();
        assert_eq!(m.g[10], 20.0);
        assert!(m.g.iter().take(10).all(|v| *v == 0.0));
        assert_eq!(m.f[(0, 0)], -200.0);
        assert_eq!(m.f[(0, 1)], 200.0);
        assert_eq!(m.f[(10, 9)], 200.0);
        assert_eq!(m.f[(10, 10)], -220.0);
        for k in 1..10 {
            assert_eq!(m.f.row(k).sum(), 0.0);
        }
        for i in 0..11 {
            for j in 0..11 {
                if (i as usize).abs_diff(j) > 1 {
                    assert_eq!(m.f[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn open_loop_poles() {
        let m = build_discrete(10, 1.0, 1.0).unwrap();
        let eig = linalg::spectrum(&m.f);
        for (z, want) in eig.iter().zip([-0.7404, -11.6538, -40.1566]) {
            assert_abs_diff_eq!(z.re, want, epsilon = 1e-3);
        }
    }

    #[test]
    fn weights() {
        let q = StateWeight::Unscaled.matrix(10);
        assert_eq!((q[(0, 0)], q[(5, 5)], q[(10, 10)]), (0.5, 1.0, 0.5));
        let w: f64 = trapezoid_weights(10).iter().sum();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_weight_gives_zero_lqr() {
        let mut m = build_discrete(6, 1.0, 1.0).unwrap();
        m.q = DMatrix::zeros(7, 7);
        let lqr = solve_discrete_lqr(&m).unwrap();
        assert!(lqr.v2.abs().max() < 1e-12);
        assert!(lqr.k1.abs().max() < 1e-12);
    }

    #[test]
    fn linear_system_gives_linear_law() {
        let m = build_discrete(6, 1.0, 0.0).unwrap();
        let lqr = solve_discrete_lqr(&m).unwrap();
        let (v, law) = albrekht_expand(&m, &lqr, 3).unwrap();
        assert_eq!(v.v3.unwrap().max_abs(), 0.0);
        assert_eq!(v.v4.unwrap().max_abs(), 0.0);
        assert_eq!(law.k2.unwrap().max_abs(), 0.0);
        assert_eq!(law.k3.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(build_discrete(1, 1.0, 1.0).is_err());
    }
}
