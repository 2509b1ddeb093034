//! Eigenbasis of `d^2/dx^2` on `[0, 1]` with `h'(0) = 0` and `h'(1) = -beta h(1)`.
//!
//! The eigenfunctions are `phi_n(x) = c_n cos(nu_n x)` where `nu_n` is the
//! unique root of `nu sin(nu) = beta cos(nu)` in `(n pi, (n + 1/2) pi)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MODES: usize = 11;

const MAX_ROOT_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeData {
    pub nu: f64,
    pub lambda: f64,
    pub c: f64,
    pub phi_at_1: f64,
}

impl ModeData {
    /// Value of the normalized eigenfunction at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.c * (self.nu * x).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralBasis {
    pub beta: f64,
    pub modes: Vec<ModeData>,
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn phi_at_1(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.phi_at_1).collect()
    }

    /// Input vector of the coefficient-space system, `beta * phi_n(1)`.
    pub fn input_vector(&self) -> Vec<f64> {
        self.modes.iter().map(|m| self.beta * m.phi_at_1).collect()
    }

    /// `<phi_n, cos(rho x)>` on `[0, 1]`.
    pub fn project_cosine(&self, n: usize, rho: f64) -> f64 {
        let m = &self.modes[n];
        m.c * cosine_inner_product(m.nu, rho)
    }

    /// Gram matrix of the basis under the closed-form inner product.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.modes
            .iter()
            .map(|a| {
                self.modes
                    .iter()
                    .map(|b| a.c * b.c * cosine_inner_product(a.nu, b.nu))
                    .collect()
            })
            .collect()
    }

    /// `int_0^1 phi_a phi_b phi_c dx` in closed form.
    pub fn triple_product(&self, a: usize, b: usize, c: usize) -> f64 {
        let (ma, mb, mc) = (&self.modes[a], &self.modes[b], &self.modes[c]);
        let mut acc = 0.0;
        for sb in [1.0, -1.0] {
            for sc in [1.0, -1.0] {
                acc += sinc(ma.nu + sb * mb.nu + sc * mc.nu);
            }
        }
        0.25 * ma.c * mb.c * mc.c * acc
    }
}

/// `sin(x) / x` with the removable singularity filled in.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Derivative of [`sinc`].
pub(crate) fn sinc_prime(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -x / 3.0 + x * x2 / 30.0 - x * x2 * x2 / 840.0
    } else {
        (x * x.cos() - x.sin()) / (x * x)
    }
}

/// `int_0^1 cos(a x) cos(b x) dx` in closed form.
pub fn cosine_inner_product(a: f64, b: f64) -> f64 {
    0.5 * (sinc(a - b) + sinc(a + b))
}

/// Derivative of [`cosine_inner_product`] with respect to `b`.
pub fn cosine_inner_product_db(a: f64, b: f64) -> f64 {
    0.5 * (-sinc_prime(a - b) + sinc_prime(a + b))
}

/// Root `nu_n` of `nu sin(nu) = beta cos(nu)` in `(n pi, (n + 1/2) pi)`.
///
/// Writing `nu = n pi + d` the equation becomes
/// `(n pi + d) sin(d) = beta cos(d)` up to the factor `(-1)^n`, which has
/// a sign change on `[0, pi/2]` for every `beta > 0`. Working in `d` keeps
/// full relative precision when the root sits close to `n pi`.
pub fn find_nu(n: usize, beta: f64, tol: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
    }
    let base = n as f64 * PI;
    let h = |d: f64| (base + d) * d.sin() - beta * d.cos();
    let dh = |d: f64| d.sin() + (base + d) * d.cos() + beta * d.sin();

    let (mut lo, mut hi) = (0.0_f64, FRAC_PI_2);
    if !(h(lo) < 0.0 && h(hi) > 0.0) {
        return Err(Error::Bracketing { mode: n });
    }
    // Start from the small-beta or large-beta asymptote, whichever is inside.
    let mut d = {
        let small = beta / base.max(1.0);
        if small < FRAC_PI_2 { small.min(1.0) } else { 0.5 * (lo + hi) }
    };
    for _ in 0..MAX_ROOT_STEPS {
        let value = h(d);
        if value < 0.0 {
            lo = d;
        } else {
            hi = d;
        }
        let nu = base + d;
        if value.abs() <= 0.25 * tol * (1.0 + nu) && hi - lo <= tol * (1.0 + nu) {
            return Ok(nu);
        }
        let slope = dh(d);
        let newton = d - value / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - d).abs() <= f64::EPSILON * d.abs().max(f64::MIN_POSITIVE) {
            return Ok(base + next);
        }
        d = next;
    }
    let nu = base + d;
    let residual = nu * nu.sin() - beta * nu.cos();
    if residual.abs() <= tol * (1.0 + nu) {
        Ok(nu)
    } else {
        Err(Error::Bracketing { mode: n })
    }
}

/// Normalization constant `c_n` making `c_n cos(nu x)` unit-norm with a
/// positive value at `x = 1`.
pub fn normalization(nu: f64) -> f64 {
    let magnitude = (4.0 * nu / (2.0 * nu + (2.0 * nu).sin())).sqrt();
    magnitude.copysign(nu.cos())
}

pub fn build_basis(beta: f64, modes: usize, tol: f64) -> Result<SpectralBasis> {
    if modes == 0 {
        return Err(Error::InvalidInput("truncation order must be at least 1".into()));
    }
    let modes = (0..modes)
        .map(|n| {
            let nu = find_nu(n, beta, tol)?;
            let c = normalization(nu);
            Ok(ModeData {
                nu,
                lambda: -nu * nu,
                c,
                phi_at_1: c * nu.cos(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralBasis { beta, modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
        let h = 1.0 / intervals as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..intervals {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, steps: usize) -> f64 {
        let flo = f(lo);
        for _ in 0..steps {
            let mid = 0.5 * (lo + hi);
            if f(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn first_and_fifth_roots_at_unit_beta() {
        assert_abs_diff_eq!(find_nu(0, 1.0, DEFAULT_TOL).unwrap(), 0.8603, epsilon = 1e-4);
        assert_abs_diff_eq!(find_nu(4, 1.0, DEFAULT_TOL).unwrap(), 12.6453, epsilon = 1e-4);
    }

    #[test]
    fn vanishing_beta_approaches_multiple_of_pi() {
        let nu = find_nu(3, 1e-9, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(nu, 3.0 * PI, epsilon = 1e-4);
        assert!(nu > 3.0 * PI);
    }

    #[test]
    fn agrees_with_bisection_oracle() {
        let beta = 5.0;
        let oracle = bisect(
            |v| v * v.sin() - beta * v.cos(),
            2.0 * PI,
            2.5 * PI,
            60,
        );
        assert_abs_diff_eq!(find_nu(2, beta, DEFAULT_TOL).unwrap(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(find_nu(0, 0.0, 1e-12).is_err());
        assert!(find_nu(0, 1.0, 0.0).is_err());
        assert!(build_basis(1.0, 0, 1e-12).is_err());
    }

    #[test]
    fn first_normalization_constant() {
        let nu0 = find_nu(0, 1.0, DEFAULT_TOL).unwrap();
        let c0 = normalization(nu0);
        assert_abs_diff_eq!(c0, 1.1270, epsilon = 1e-4);
        // closed-form norm: c^2 * <cos, cos> = 1
        assert_abs_diff_eq!(c0 * c0 * cosine_inner_product(nu0, nu0), 1.0, epsilon = 1e-14);
        let by_quadrature = simpson(|x| (c0 * (nu0 * x).cos()).powi(2), 10_000);
        assert_abs_diff_eq!(by_quadrature, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalization_sign_and_limit() {
        let c1 = normalization(find_nu(1, 1.0, DEFAULT_TOL).unwrap());
        assert!(c1 < 0.0 && c1.abs() <= 2f64.sqrt());
        let c_far = normalization(find_nu(40, 1e-8, DEFAULT_TOL).unwrap());
        assert_abs_diff_eq!(c_far.abs(), 2f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn cosine_inner_product_special_values() {
        assert_abs_diff_eq!(cosine_inner_product(0.0, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_inner_product(PI, PI), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn distinct_modes_are_orthogonal() {
        let basis = build_basis(1.0, 2, DEFAULT_TOL).unwrap();
        let (a, b) = (basis.modes[0], basis.modes[1]);
        let closed = a.c * b.c * cosine_inner_product(a.nu, b.nu);
        assert_abs_diff_eq!(closed, 0.0, epsilon = 1e-12);
        let quad = simpson(|x| a.eval(x) * b.eval(x), 10_000);
        assert_abs_diff_eq!(quad, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_of_inner_product_matches_differences() {
        for &(a, b) in &[(0.86, 1.02), (3.4, 3.4), (6.43, 0.9), (0.0, 2.0)] {
            let h = 1e-6;
            let fd = (cosine_inner_product(a, b + h) - cosine_inner_product(a, b - h)) / (2.0 * h);
            assert_abs_diff_eq!(cosine_inner_product_db(a, b), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn least_stable_eigenvalues() {
        let basis = build_basis(1.0, 5, DEFAULT_TOL).unwrap();
        let expected = [-0.7402, -11.7349, -41.4388, -90.8082, -159.9033];
        for (mode, want) in basis.modes.iter().zip(expected) {
            assert_abs_diff_eq!(mode.lambda, want, epsilon = 1e-3);
        }
    }

    #[test]
    fn single_mode_and_stiff_limit() {
        let one = build_basis(1.0, 1, DEFAULT_TOL).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.modes[0].nu > 0.0 && one.modes[0].nu < FRAC_PI_2);

        let stiff = build_basis(1000.0, 3, DEFAULT_TOL).unwrap();
        for (n, mode) in stiff.modes.iter().enumerate() {
            assert_abs_diff_eq!(mode.nu, (n as f64 + 0.5) * PI, epsilon = 1e-2);
        }
    }

    #[test]
    fn basis_invariants() {
        let basis = build_basis(1.0, DEFAULT_MODES, DEFAULT_TOL).unwrap();
        let mut prev_offset = f64::INFINITY;
        for (n, m) in basis.modes.iter().enumerate() {
            let lo = n as f64 * PI;
            assert!(m.nu > lo && m.nu < lo + FRAC_PI_2);
            assert!(m.nu - lo < prev_offset);
            prev_offset = m.nu - lo;
            assert_eq!(m.lambda, -m.nu * m.nu);
            assert!(m.phi_at_1 > 0.0 && m.phi_at_1 <= 2f64.sqrt());
            assert!(m.c.abs() <= 2f64.sqrt() && m.c * (-1f64).powi(n as i32) > 0.0);
            assert!((m.nu * m.nu.sin() - m.nu.cos()).abs() <= DEFAULT_TOL * (1.0 + m.nu));
        }
        let gram = basis.gram();
        for (i, row) in gram.iter().enumerate() {
            for (j, &g) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn extreme_beta_limits() {
        let small = build_basis(1e-6, 6, DEFAULT_TOL).unwrap();
        let large = build_basis(1e6, 6, DEFAULT_TOL).unwrap();
        for n in 0..6 {
            assert_abs_diff_eq!(small.modes[n].nu, n as f64 * PI, epsilon = 1e-3);
            assert_abs_diff_eq!(large.modes[n].nu, (n as f64 + 0.5) * PI, epsilon = 1e-3);
        }
    }

    #[test]
    fn triple_product_matches_quadrature() {
        let basis = build_basis(1.0, 4, DEFAULT_TOL).unwrap();
        for &(a, b, c) in &[(0, 0, 0), (0, 1, 2), (1, 1, 3), (2, 3, 3)] {
            let (ma, mb, mc) = (basis.modes[a], basis.modes[b], basis.modes[c]);
            let quad = simpson(|x| ma.eval(x) * mb.eval(x) * mc.eval(x), 20_000);
            assert_abs_diff_eq!(basis.triple_product(a, b, c), quad, epsilon = 1e-12);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn root_lies_in_its_bracket(n in 0usize..40, log_beta in -6.0f64..6.0) {
                let beta = 10f64.powf(log_beta);
                let nu = find_nu(n, beta, DEFAULT_TOL).unwrap();
                let lo = n as f64 * PI;
                prop_assert!(nu > lo && nu < lo + FRAC_PI_2);
                // the best double root leaves a residual of order beta * ulp(nu)
                let scale = 1.0 + nu + beta;
                prop_assert!((nu * nu.sin() - beta * nu.cos()).abs() <= DEFAULT_TOL * scale);
                if beta <= 1e3 {
                    prop_assert!((nu * nu.sin() - beta * nu.cos()).abs() <= DEFAULT_TOL * (1.0 + nu));
                }
            }
        }
    }
}
