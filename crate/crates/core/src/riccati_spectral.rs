//! Boundary LQR in the open-loop eigenbasis.
//!
//! In coefficient space the rod is `a' = diag(lambda) a + b u` with
//! `b_n = beta phi_n(1)`, and the cost kernel `P(x1, x2)` becomes the
//! symmetric matrix `P` solving
//! `(lambda_i + lambda_j) P_ij + Q_ij = (beta^2 / R) (P phi)_i (P phi)_j`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral_basis::SpectralBasis;

pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const PAPER_SWEEPS: usize = 50;
/// Riccati residual (max-norm) below which a solution counts as converged.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q_coeffs: DMatrix<f64>,
    pub r: f64,
}

impl LqrWeights {
    pub fn new(q_coeffs: DMatrix<f64>, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(format!("control weight must be positive, got {r}")));
        }
        if !q_coeffs.is_square() {
            return Err(Error::InvalidInput("state weight must be square".into()));
        }
        if linalg::max_asymmetry(&q_coeffs) > 1e-12 {
            return Err(Error::InvalidInput("state weight must be symmetric".into()));
        }
        if q_coeffs.nrows() > 0 && linalg::min_symmetric_eigenvalue(&q_coeffs) < -1e-12 {
            return Err(Error::InvalidInput("state weight must be positive semidefinite".into()));
        }
        Ok(Self { q_coeffs, r })
    }
}

/// `Q = I` (pointwise state weight) and `R = 1`.
pub fn default_weights(basis: &SpectralBasis) -> LqrWeights {
    LqrWeights { q_coeffs: DMatrix::identity(basis.len(), basis.len()), r: 1.0 }
}

/// Diagonal starting point: each entry is the positive root of the scalar
/// Riccati equation of its own mode.
pub fn initial_guess(basis: &SpectralBasis, w: &LqrWeights) -> Result<DMatrix<f64>> {
    let n = basis.len();
    let mut p = DMatrix::zeros(n, n);
    for (i, m) in basis.modes.iter().enumerate() {
        let s = basis.beta * basis.beta * m.phi_at_1 * m.phi_at_1 / w.r;
        if s == 0.0 {
            return Err(Error::InvalidInput(format!("mode {i} is not actuated (phi(1) = 0)")));
        }
        let lam = m.lambda;
        p[(i, i)] = (lam + (lam * lam + s * w.q_coeffs[(i, i)]).sqrt()) / s;
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// The completing-the-square update, using only the previous iterate.
    Jacobi,
    /// Kleinman policy iteration: a closed-loop Lyapunov solve per sweep.
    PolicyIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Run exactly [`PAPER_SWEEPS`] sweeps, ignoring `max_iter` and `tol`.
    pub paper_mode: bool,
    pub sweep: Sweep,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL, paper_mode: false, sweep: Sweep::Jacobi }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    #[serde(serialize_with = "crate::output::serialize_matrix")]
    pub p: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub last_change: f64,
    /// Probe cost `z'P z` with `z = (1, ..., 1)/sqrt(N)`: the initial guess
    /// first, then one value per sweep.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
}

impl RiccatiSolution {
    /// Turns an unconverged result into [`Error::NonConvergence`].
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NonConvergence { iterations: self.iterations, residual: self.residual })
        }
    }
}

/// Max-norm of `diag(l) P + P diag(l) - (beta^2/R) (P phi)(P phi)' + Q`.
pub fn riccati_residual(basis: &SpectralBasis, w: &LqrWeights, p: &DMatrix<f64>) -> f64 {
    let (a, b) = coefficient_system(basis);
    linalg::care_residual(&a, &b, &w.q_coeffs, w.r, p).abs().max()
}

/// `(diag(lambda), beta phi(1))`.
pub fn coefficient_system(basis: &SpectralBasis) -> (DMatrix<f64>, DVector<f64>) {
    (
        DMatrix::from_diagonal(&DVector::from_vec(basis.lambdas())),
        DVector::from_vec(basis.input_vector()),
    )
}

pub fn riccati_iterate(
    basis: &SpectralBasis,
    w: &LqrWeights,
    max_iter: usize,
    tol: f64,
) -> Result<RiccatiSolution> {
    riccati_iterate_with(basis, w, &IterationOptions { max_iter, tol, ..Default::default() })
}

pub fn riccati_iterate_with(
    basis: &SpectralBasis,
    w: &LqrWeights,
    opts: &IterationOptions,
) -> Result<RiccatiSolution> {
    let n = basis.len();
    if w.q_coeffs.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "state weight is {}x{}, basis has {n} modes",
            w.q_coeffs.nrows(),
            w.q_coeffs.ncols()
        )));
    }
    if !opts.paper_mode && opts.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let lam = basis.lambdas();
    let (a, b) = coefficient_system(basis);
    let gain_scale = basis.beta * basis.beta / w.r;
    let phi = DVector::from_vec(basis.phi_at_1());
    let probe = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let probe_cost = |p: &DMatrix<f64>| probe.dot(&(p * &probe));

    let mut p = initial_guess(basis, w)?;
    let mut cost_trace = vec![probe_cost(&p)];
    let sweeps = if opts.paper_mode { PAPER_SWEEPS } else { opts.max_iter };
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    for _ in 0..sweeps {
        let next = match opts.sweep {
            Sweep::Jacobi => {
                let v = &p * &phi;
                DMatrix::from_fn(n, n, |i, j| {
                    (gain_scale * v[i] * v[j] - w.q_coeffs[(i, j)]) / (lam[i] + lam[j])
                })
            }
            Sweep::PolicyIteration => {
                let k = -(&p * &b) / w.r;
                let acl = &a + &b * k.transpose();
                let forcing = &w.q_coeffs + &k * k.transpose() * w.r;
                linalg::lyapunov(&acl, &forcing)?
            }
        };
        last_change = (&next - &p).abs().max();
        p = next;
        iterations += 1;
        cost_trace.push(probe_cost(&p));
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
        if !opts.paper_mode && last_change <= opts.tol {
            break;
        }
    }
    let residual = riccati_residual(basis, w, &p);
    Ok(RiccatiSolution {
        p,
        iterations,
        residual,
        last_change,
        cost_trace,
        converged: residual <= RESIDUAL_TOL,
    })
}

/// Coefficients `k_n` of the linear gain kernel `K(x) = sum k_n phi_n(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearGain {
    pub k: Vec<f64>,
}

impl LinearGain {
    /// Pointwise kernel value `K(x)`.
    pub fn eval(&self, basis: &SpectralBasis, x: f64) -> f64 {
        self.k.iter().zip(&basis.modes).map(|(k, m)| k * m.eval(x)).sum()
    }

    /// Control for a state given by its coefficients.
    pub fn control(&self, z: &[f64]) -> f64 {
        self.k.iter().zip(z).map(|(k, v)| k * v).sum()
    }
}

/// `k = -(beta / R) P phi(1)`.
pub fn linear_gain(sol: &RiccatiSolution, basis: &SpectralBasis, w: &LqrWeights) -> LinearGain {
    let phi = DVector::from_vec(basis.phi_at_1());
    let k = -(&sol.p * phi) * (basis.beta / w.r);
    LinearGain { k: k.iter().copied().collect() }
}

/// `z' P z` in coefficient space.
pub fn cost_of_state(sol: &RiccatiSolution, z0: &[f64]) -> f64 {
    let z = DVector::from_column_slice(z0);
    z.dot(&(&sol.p * &z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_basis::build_basis;
    use approx::assert_abs_diff_eq;

    fn basis(n: usize) -> SpectralBasis {
        build_basis(1.0, n, 1e-13).unwrap()
    }

    #[test]
    fn default_weights_are_identity() {
        let w = default_weights(&basis(4));
        assert_eq!(w.q_coeffs, DMatrix::identity(4, 4));
        assert_eq!(w.r, 1.0);
        assert_eq!(default_weights(&basis(1)).q_coeffs.trace(), 1.0);
    }

    #[test]
    fn initial_guess_solves_scalar_quadratics() {
        let b = basis(6);
        let w = default_weights(&b);
        let p = initial_guess(&b, &w).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5607, epsilon = 1e-4);
        for (i, m) in b.modes.iter().enumerate() {
            let x = p[(i, i)];
            assert!(x > 0.0);
            let s = m.phi_at_1 * m.phi_at_1;
            assert!((s * x * x - 2.0 * m.lambda * x - 1.0).abs() < 1e-12);
            // quadratic formula with the other sign convention
            let disc = (4.0 * m.lambda * m.lambda + 4.0 * s).sqrt();
            assert_abs_diff_eq!(x, (2.0 * m.lambda + disc) / (2.0 * s), epsilon = 1e-12);
        }
        assert_eq!(p.clone() - DMatrix::from_diagonal(&p.diagonal()), DMatrix::zeros(6, 6));
    }

    #[test]
    fn zero_weight_is_a_fixed_point() {
        let b = basis(5);
        let w = LqrWeights::new(DMatrix::zeros(5, 5), 1.0).unwrap();
        let sol = riccati_iterate(&b, &w, 10, 1e-12).unwrap();
        assert_eq!(sol.p.abs().max(), 0.0);
        assert!(linear_gain(&sol, &b, &w).k.iter().all(|k| *k == 0.0));
    }

    #[test]
    fn iteration_converges_to_stabilizing_solution() {
        let b = basis(11);
        let w = default_weights(&b);
        let sol = riccati_iterate(&b, &w, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(sol.converged, "residual {}", sol.residual);
        assert!(linalg::max_asymmetry(&sol.p) <= 1e-12);
        assert!(linalg::min_symmetric_eigenvalue(&sol.p) > -1e-10);
        let off = (0..11)
            .flat_map(|i| (0..11).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| sol.p[(i, j)].abs())
            .fold(0.0, f64::max);
        assert!(off > 1e-4);
        let (a, bv) = coefficient_system(&b);
        let k = DVector::from_vec(linear_gain(&sol, &b, &w).k);
        assert!(linalg::max_real_eigenvalue(&(a + bv * k.transpose())) < 0.0);
    }

    #[test]
    fn paper_mode_runs_exactly_fifty_sweeps() {
        let b = basis(11);
        let w = default_weights(&b);
        let opts = IterationOptions { paper_mode: true, max_iter: 3, ..Default::default() };
        let sol = riccati_iterate_with(&b, &w, &opts).unwrap();
        assert_eq!(sol.iterations, PAPER_SWEEPS);
        assert_eq!(sol.cost_trace.len(), PAPER_SWEEPS + 1);
    }

    #[test]
    fn policy_iteration_cost_is_monotone() {
        let b = basis(11);
        let w = default_weights(&b);
        let opts = IterationOptions { sweep: Sweep::PolicyIteration, ..Default::default() };
        let sol = riccati_iterate_with(&b, &w, &opts).unwrap();
        assert!(sol.converged);
        for pair in sol.cost_trace[1..].windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10, "{pair:?}");
        }
        let jac = riccati_iterate(&b, &w, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!((&jac.p - &sol.p).abs().max() < 1e-10);
    }

    #[test]
    fn truncated_iteration_reports_nonconvergence() {
        let b = basis(11);
        let w = default_weights(&b);
        let sol = riccati_iterate(&b, &w, 1, 1e-12).unwrap();
        assert!(!sol.converged);
        assert!(matches!(sol.ensure_converged(), Err(Error::NonConvergence { iterations: 1, .. })));
    }

    #[test]
    fn gain_and_cost_identities() {
        let b = basis(11);
        let w = default_weights(&b);
        let sol = riccati_iterate(&b, &w, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let gain = linear_gain(&sol, &b, &w);
        let phi = b.phi_at_1();
        let k0: f64 = -(0..11).map(|i| sol.p[(i, 0)] * phi[i]).sum::<f64>();
        assert_abs_diff_eq!(gain.k[0], k0, epsilon = 1e-15);
        // <K, phi_0> = k_0 through the closed-form inner products
        let proj: f64 = (0..11)
            .map(|n| gain.k[n] * b.modes[n].c * b.modes[0].c * crate::spectral_basis::cosine_inner_product(b.modes[n].nu, b.modes[0].nu))
            .sum();
        assert_abs_diff_eq!(proj, k0, epsilon = 1e-10);
        let mut e0 = vec![0.0; 11];
        e0[0] = 1.0;
        assert_abs_diff_eq!(cost_of_state(&sol, &e0), sol.p[(0, 0)], epsilon = 1e-15);
        assert_eq!(cost_of_state(&sol, &[0.0; 11]), 0.0);
    }
}
