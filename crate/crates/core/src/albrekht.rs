//! Degree-by-degree power-series solution of the HJB equation for
//! single-input systems `z' = A z + g u + f2(z)` with cost `z'Qz + r u^2`.
//!
//! The value function is `V = z'Pz + T3[z,z,z] + T4[z,z,z,z]`, the feedback
//! `u = k1.z + K2[z,z] + K3[z,z,z]`. Each cost tensor solves a linear
//! homological equation `L_Acl(T) + C = 0` where `Acl = A + g k1'` and
//! `L_Acl(T)[i1..id] = sum_s sum_a Acl[a, i_s] T[i1..a..id]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::symtensor::{multiset_ranks, SymTensor};

/// Quadratic part of the drift.
#[derive(Debug, Clone, PartialEq)]
pub enum Quadratic {
    /// `f2(z)_i = alpha z_i^2`.
    Diagonal(f64),
    /// `f2(z)_a = sum_bc n[a][b][c] z_b z_c`, stored row-major, symmetric in `(b, c)`.
    Dense { dim: usize, n: Vec<f64> },
}

impl Quadratic {
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Quadratic::Diagonal(alpha) => z.iter().map(|v| alpha * v * v).collect(),
            Quadratic::Dense { dim, n } => (0..*dim)
                .map(|a| {
                    let mut acc = 0.0;
                    for b in 0..*dim {
                        for c in 0..*dim {
                            acc += n[(a * dim + b) * dim + c] * z[b] * z[c];
                        }
                    }
                    acc
                })
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Quadratic::Diagonal(alpha) => *alpha == 0.0,
            Quadratic::Dense { n, .. } => n.iter().all(|v| *v == 0.0),
        }
    }

    /// Symmetric coefficient tensor of `grad(W[z..z]) . f2(z)`, one order above `w`.
    pub fn drive(&self, w: &SymTensor) -> SymTensor {
        let dim = w.dim();
        let d = w.order();
        let inner = dim.pow(d as u32 - 1);
        let mut full = vec![0.0; inner * dim * dim];
        let wd = w.as_slice();
        match self {
            Quadratic::Diagonal(alpha) => {
                // W[a, e..] alpha z_a^2  ->  slot (e.., a, a)
                for a in 0..dim {
                    for e in 0..inner {
                        full[(e * dim + a) * dim + a] += d as f64 * alpha * wd[a * inner + e];
                    }
                }
            }
            Quadratic::Dense { n, .. } => {
                for a in 0..dim {
                    for e in 0..inner {
                        let s = d as f64 * wd[a * inner + e];
                        if s == 0.0 {
                            continue;
                        }
                        let row = &n[a * dim * dim..(a + 1) * dim * dim];
                        let out = &mut full[e * dim * dim..(e + 1) * dim * dim];
                        out.iter_mut().zip(row).for_each(|(o, v)| *o += s * v);
                    }
                }
            }
        }
        SymTensor::symmetrize_full(dim, d + 1, &full)
    }
}

/// Solves `L_Acl(T) + forcing = 0` over symmetric tensors of the forcing's order.
pub fn solve_homological(acl: &DMatrix<f64>, forcing: &SymTensor) -> Result<SymTensor> {
    let dim = forcing.dim();
    let order = forcing.order();
    let (keys, ranks) = multiset_ranks(dim, order);
    let m = keys.len();
    let mut op = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut moved = vec![0; order];
    for (row, key) in keys.iter().enumerate() {
        rhs[row] = -forcing.get(key);
        for s in 0..order {
            for a in 0..dim {
                let coeff = acl[(a, key[s])];
                if coeff == 0.0 {
                    continue;
                }
                moved.copy_from_slice(key);
                moved[s] = a;
                moved.sort_unstable();
                op[(row, ranks[&moved])] += coeff;
            }
        }
    }
    let sol = op.lu().solve(&rhs).ok_or(Error::SingularSystem { degree: order })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { degree: order });
    }
    let entries: Vec<(Vec<usize>, f64)> = keys.into_iter().zip(sol.iter().copied()).collect();
    Ok(SymTensor::from_canonical(dim, order, &entries))
}

/// Applies `L_Acl` to a symmetric tensor (used for residual checks).
pub fn apply_homological(acl: &DMatrix<f64>, t: &SymTensor) -> SymTensor {
    let dim = t.dim();
    let order = t.order();
    let mut out = SymTensor::zeros(dim, order);
    let mut moved = vec![0; order];
    for key in crate::symtensor::multisets(dim, order) {
        let mut acc = 0.0;
        for s in 0..order {
            for a in 0..dim {
                moved.copy_from_slice(&key);
                moved[s] = a;
                acc += acl[(a, key[s])] * t.get(&moved);
            }
        }
        out.set(&key, acc);
    }
    out
}

/// Taylor coefficients of the optimal cost and feedback.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub p: DMatrix<f64>,
    pub k1: DVector<f64>,
    pub t3: Option<SymTensor>,
    pub k2: Option<SymTensor>,
    pub t4: Option<SymTensor>,
    pub k3: Option<SymTensor>,
}

impl Expansion {
    pub fn degree(&self) -> usize {
        if self.k3.is_some() {
            3
        } else if self.k2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let mut v = zv.dot(&(&self.p * &zv));
        if let Some(t) = &self.t3 {
            v += t.eval(z);
        }
        if let Some(t) = &self.t4 {
            v += t.eval(z);
        }
        v
    }

    pub fn value_gradient(&self, z: &[f64]) -> Vec<f64> {
        let zv = DVector::from_column_slice(z);
        let mut grad: Vec<f64> = (&self.p * &zv * 2.0).iter().copied().collect();
        for t in [&self.t3, &self.t4].into_iter().flatten() {
            grad.iter_mut().zip(t.gradient(z)).for_each(|(g, d)| *g += d);
        }
        grad
    }

    pub fn control(&self, z: &[f64]) -> f64 {
        let mut u = self.k1.iter().zip(z).map(|(k, v)| k * v).sum::<f64>();
        for k in [&self.k2, &self.k3].into_iter().flatten() {
            u += k.eval(z);
        }
        u
    }
}

/// Closed-loop matrix `A + g k1'`.
pub fn closed_loop_matrix(a: &DMatrix<f64>, g: &DVector<f64>, k1: &DVector<f64>) -> DMatrix<f64> {
    a + g * k1.transpose()
}

/// Runs the expansion up to feedback `degree` (1, 2 or 3) from a solved Riccati matrix `p`.
pub fn expand(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    r: f64,
    p: &DMatrix<f64>,
    f2: &Quadratic,
    degree: usize,
) -> Result<Expansion> {
    if !(1..=3).contains(&degree) {
        return Err(Error::InvalidInput(format!("feedback degree must be 1, 2 or 3, got {degree}")));
    }
    let k1 = -(p * g) / r;
    let mut out = Expansion { p: p.clone(), k1, t3: None, k2: None, t4: None, k3: None };
    if degree == 1 {
        return Ok(out);
    }
    let acl = closed_loop_matrix(a, g, &out.k1);
    let gs = g.as_slice();

    let c3 = f2.drive(&SymTensor::from_matrix(p));
    let t3 = solve_homological(&acl, &c3)?;
    let k2 = t3.contract_first(gs).scaled(-1.5 / r);

    if degree == 3 {
        let mut c4 = f2.drive(&t3);
        let kk = SymTensor::sym_outer(&k2, &k2);
        c4.data_mut().iter_mut().zip(kk.as_slice()).for_each(|(c, q)| *c -= r * q);
        let t4 = solve_homological(&acl, &c4)?;
        out.k3 = Some(t4.contract_first(gs).scaled(-2.0 / r));
        out.t4 = Some(t4);
    }
    out.t3 = Some(t3);
    out.k2 = Some(k2);
    Ok(out)
}

/// `grad V . (A z + g u + f2(z)) + z'Qz + r u^2` for the expansion's own feedback.
pub fn hjb_residual(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
    f2: &Quadratic,
    exp: &Expansion,
    z: &[f64],
) -> f64 {
    let zv = DVector::from_column_slice(z);
    let u = exp.control(z);
    let drift = a * &zv + g * u + DVector::from_vec(f2.eval(z));
    let grad = DVector::from_vec(exp.value_gradient(z));
    grad.dot(&drift) + zv.dot(&(q * &zv)) + r * u * u
}
