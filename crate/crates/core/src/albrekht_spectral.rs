//! Cubic term of the optimal cost and quadratic feedback in the eigenbasis.
//!
//! The tensor `T` of `V3 = sum T_ijk a_i a_j a_k` solves
//! `(l_i + l_j + l_k) T_ijk + sum_s sum_m T[.., m, ..] b_m k_{n_s} + F_ijk = 0`
//! where `b = beta phi(1)`, `k` is the linear gain and `F` is the symmetrized
//! forcing from the reaction term.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::albrekht::{self, Quadratic};
use crate::error::{Error, Result};
use crate::riccati_spectral::{coefficient_system, LqrWeights, RiccatiSolution};
use crate::spectral_basis::SpectralBasis;
use crate::symtensor::SymTensor;

/// How the reaction term `alpha z^2` enters coefficient space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    /// `alpha a_n^2` per mode (the diagonal form).
    #[default]
    Delta,
    /// Exact projection `alpha sum <phi_a, phi_b phi_c> a_b a_c`.
    Galerkin,
}

impl std::str::FromStr for Forcing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Forcing::Delta),
            "galerkin" => Ok(Forcing::Galerkin),
            other => Err(Error::InvalidInput(format!("unknown forcing `{other}` (delta|galerkin)"))),
        }
    }
}

impl Forcing {
    pub fn name(self) -> &'static str {
        match self {
            Forcing::Delta => "delta",
            Forcing::Galerkin => "galerkin",
        }
    }

    pub fn quadratic(self, basis: &SpectralBasis, alpha: f64) -> Quadratic {
        match self {
            Forcing::Delta => Quadratic::Diagonal(alpha),
            Forcing::Galerkin => {
                let dim = basis.len();
                let mut n = vec![0.0; dim * dim * dim];
                for a in 0..dim {
                    for b in 0..dim {
                        for c in 0..dim {
                            n[(a * dim + b) * dim + c] = alpha * basis.triple_product(a, b, c);
                        }
                    }
                }
                Quadratic::Dense { dim, n }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicCostTensor {
    pub alpha: f64,
    pub forcing: Forcing,
    pub t: SymTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGain {
    pub k2: DMatrix<f64>,
}

impl QuadraticGain {
    /// `K(x1, x2) = sum k2[i, j] phi_i(x1) phi_j(x2)`.
    pub fn eval(&self, basis: &SpectralBasis, x1: f64, x2: f64) -> f64 {
        let p1: Vec<f64> = basis.modes.iter().map(|m| m.eval(x1)).collect();
        let p2: Vec<f64> = basis.modes.iter().map(|m| m.eval(x2)).collect();
        let mut acc = 0.0;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                acc += self.k2[(i, j)] * p1[i] * p2[j];
            }
        }
        acc
    }
}

pub fn solve_cubic_tensor(
    sol: &RiccatiSolution,
    basis: &SpectralBasis,
    w: &LqrWeights,
    alpha: f64,
    forcing: Forcing,
) -> Result<CubicCostTensor> {
    let (a, b) = coefficient_system(basis);
    let exp = albrekht::expand(&a, &b, w.r, &sol.p, &forcing.quadratic(basis, alpha), 2)?;
    let mut t = exp.t3.expect("degree-2 expansion carries a cubic cost");
    // the solve is over canonical triples already; averaging is a no-op up to rounding
    t = SymTensor::symmetrize_full(t.dim(), 3, t.as_slice());
    Ok(CubicCostTensor { alpha, forcing, t })
}

/// `k2 = -(3/2) (beta / R) sum_k T[., ., k] phi_k(1)`.
pub fn quadratic_gain(ct: &CubicCostTensor, basis: &SpectralBasis, w: &LqrWeights) -> QuadraticGain {
    let b = basis.input_vector();
    QuadraticGain { k2: ct.t.contract_first(&b).scaled(-1.5 / w.r).to_matrix() }
}

/// `z'Pz + T[z, z, z]`.
pub fn cubic_cost_of_state(sol: &RiccatiSolution, ct: &CubicCostTensor, z0: &[f64]) -> f64 {
    let z = DVector::from_column_slice(z0);
    z.dot(&(&sol.p * &z)) + ct.t.eval(z0)
}

/// Max-norm residual of the tensor equation, evaluated entry by entry.
pub fn tensor_equation_residual(
    ct: &CubicCostTensor,
    sol: &RiccatiSolution,
    basis: &SpectralBasis,
    w: &LqrWeights,
) -> f64 {
    let dim = basis.len();
    let lam = basis.lambdas();
    let bvec = basis.input_vector();
    let k: Vec<f64> = (0..dim)
        .map(|i| -(0..dim).map(|j| sol.p[(i, j)] * bvec[j]).sum::<f64>() / w.r)
        .collect();
    let nl = |a: usize, b: usize, c: usize| match ct.forcing {
        Forcing::Delta => {
            if a == b && b == c {
                ct.alpha
            } else {
                0.0
            }
        }
        Forcing::Galerkin => ct.alpha * basis.triple_product(a, b, c),
    };
    let t = &ct.t;
    let mut worst = 0.0_f64;
    for n1 in 0..dim {
        for n2 in 0..dim {
            for n3 in 0..dim {
                let mut r = (lam[n1] + lam[n2] + lam[n3]) * t.get(&[n1, n2, n3]);
                let mut forcing = 0.0;
                for m in 0..dim {
                    r += bvec[m]
                        * (t.get(&[m, n2, n3]) * k[n1]
                            + t.get(&[n1, m, n3]) * k[n2]
                            + t.get(&[n1, n2, m]) * k[n3]);
                    forcing += sol.p[(m, n1)] * nl(m, n2, n3)
                        + sol.p[(m, n2)] * nl(m, n1, n3)
                        + sol.p[(m, n3)] * nl(m, n1, n2);
                }
                r += 2.0 / 3.0 * forcing;
                worst = worst.max(r.abs());
            }
        }
    }
    worst
}
