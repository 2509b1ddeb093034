//! Closed-loop eigenvalues under linear boundary feedback.
//!
//! With `u = int K z` the boundary condition becomes
//! `z_x(1) = beta (int K z - z(1))`. Eigenfunctions are still `cos(rho x)`,
//! and `rho` is a root of
//! `g(rho) = rho sin(rho) - beta cos(rho) + beta sum_n k_n <phi_n, cos(rho .)>`.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::riccati_spectral::LinearGain;
use crate::spectral_basis::{cosine_inner_product_db, SpectralBasis};

const NEWTON_MAX_STEPS: usize = 100;
const START_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedLoopMode {
    pub rho: f64,
    pub mu: f64,
}

pub fn g_residual(rho: f64, gain: &LinearGain, basis: &SpectralBasis) -> f64 {
    let feedback: f64 = gain
        .k
        .iter()
        .enumerate()
        .map(|(n, k)| k * basis.project_cosine(n, rho))
        .sum();
    rho * rho.sin() - basis.beta * rho.cos() + basis.beta * feedback
}

/// Analytic derivative of [`g_residual`] in `rho`.
pub fn g_derivative(rho: f64, gain: &LinearGain, basis: &SpectralBasis) -> f64 {
    let feedback: f64 = gain
        .k
        .iter()
        .zip(&basis.modes)
        .map(|(k, m)| k * m.c * cosine_inner_product_db(m.nu, rho))
        .sum();
    rho.sin() + rho * rho.cos() + basis.beta * rho.sin() + basis.beta * feedback
}

/// Newton from `1.05 nu_n` for each of the first `count` modes.
///
/// For high modes `1.05 nu_n` can sit on the flank of the neighbouring
/// branch; if that start leaves the window, Newton is restarted from the
/// open-loop root `nu_n`.
pub fn closed_loop_modes(
    gain: &LinearGain,
    basis: &SpectralBasis,
    count: usize,
) -> Result<Vec<ClosedLoopMode>> {
    if count > basis.len() {
        return Err(Error::InvalidInput(format!(
            "asked for {count} closed-loop modes from a {}-mode basis",
            basis.len()
        )));
    }
    (0..count).map(|n| newton_mode(n, gain, basis)).collect()
}

fn newton_mode(n: usize, gain: &LinearGain, basis: &SpectralBasis) -> Result<ClosedLoopMode> {
    let nu = basis.modes[n].nu;
    newton_from(n, START_FACTOR * nu, gain, basis).or_else(|_| newton_from(n, nu, gain, basis))
}

fn newton_from(n: usize, start: f64, gain: &LinearGain, basis: &SpectralBasis) -> Result<ClosedLoopMode> {
    let base = n as f64 * PI;
    let lo = (base - FRAC_PI_4).max(0.0);
    let hi = base + PI;
    let mut rho = start;
    for _ in 0..NEWTON_MAX_STEPS {
        let value = g_residual(rho, gain, basis);
        let slope = g_derivative(rho, gain, basis);
        if value == 0.0 {
            break;
        }
        if !(slope.is_finite() && slope != 0.0) {
            return Err(Error::NewtonDiverged { mode: n });
        }
        let step = value / slope;
        rho -= step;
        if !(rho > lo && rho < hi) {
            return Err(Error::NewtonDiverged { mode: n });
        }
        if step.abs() <= 4.0 * f64::EPSILON * rho {
            break;
        }
    }
    let value = g_residual(rho, gain, basis);
    if !(value.abs() <= 1e-10) {
        return Err(Error::NewtonDiverged { mode: n });
    }
    Ok(ClosedLoopMode { rho, mu: -rho * rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati_spectral::{default_weights, linear_gain, riccati_iterate};
    use crate::spectral_basis::build_basis;

    #[test]
    fn zero_gain_reproduces_open_loop() {
        let b = build_basis(1.0, 11, 1e-13).unwrap();
        let gain = LinearGain { k: vec![0.0; 11] };
        assert!(g_residual(b.modes[0].nu, &gain, &b).abs() < 1e-10);
        let modes = closed_loop_modes(&gain, &b, 11).unwrap();
        for (m, open) in modes.iter().zip(&b.modes) {
            assert!((m.rho - open.nu).abs() < 1e-9);
            assert!((m.mu - open.lambda).abs() < 1e-9 * open.lambda.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let b = build_basis(1.0, 11, 1e-13).unwrap();
        let w = default_weights(&b);
        let gain = linear_gain(&riccati_iterate(&b, &w, 200, 1e-12).unwrap(), &b, &w);
        for rho in [0.3, 1.0, 3.5, 7.2, 12.0] {
            let h = 1e-6;
            let fd = (g_residual(rho + h, &gain, &b) - g_residual(rho - h, &gain, &b)) / (2.0 * h);
            assert!((fd - g_derivative(rho, &gain, &b)).abs() < 1e-7, "rho {rho}");
        }
    }

    #[test]
    fn feedback_moves_every_pole_left() {
        let b = build_basis(1.0, 11, 1e-13).unwrap();
        let w = default_weights(&b);
        let gain = linear_gain(&riccati_iterate(&b, &w, 200, 1e-12).unwrap(), &b, &w);
        assert!(g_residual(b.modes[0].nu, &gain, &b).abs() > 1e-3);
        let modes = closed_loop_modes(&gain, &b, 11).unwrap();
        assert!(modes[0].mu < b.modes[0].lambda);
        for (n, (m, open)) in modes.iter().zip(&b.modes).enumerate() {
            assert!(m.mu <= open.lambda + 1e-9);
            assert_eq!(m.mu, -m.rho * m.rho);
            assert!(g_residual(m.rho, &gain, &b).abs() <= 1e-10);
            if n >= 1 {
                assert!((m.mu - open.lambda).abs() / open.lambda.abs() <= 0.02);
            }
        }
    }

    #[test]
    fn too_many_modes_is_an_input_error() {
        let b = build_basis(1.0, 3, 1e-13).unwrap();
        let gain = LinearGain { k: vec![0.0; 3] };
        assert!(matches!(closed_loop_modes(&gain, &b, 4), Err(Error::InvalidInput(_))));
    }
}
