//! Dense linear-algebra helpers: Lyapunov and continuous algebraic Riccati
//! solves, spectra.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

const SIGN_MAX_ITER: usize = 100;
const NEWTON_POLISH_STEPS: usize = 6;

/// Solves `a' x + x a + c = 0` for `x` by a dense Kronecker-product solve.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let mut op = DMatrix::<f64>::zeros(n * n, n * n);
    // column-major vec: vec(a' x) = (I kron a') vec(x), vec(x a) = (a' kron I) vec(x)
    for col in 0..n {
        for row in 0..n {
            let eq = row + col * n;
            for k in 0..n {
                op[(eq, k + col * n)] += at[(row, k)];
                op[(eq, row + k * n)] += a[(k, col)];
            }
        }
    }
    let rhs = DVector::from_iterator(n * n, c.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::AreSolveFailure { reason: "singular Lyapunov operator".into() })?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `f' x + x f - x g r^-1 g' x + q` for a single input column `g`.
pub fn care_residual(
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
    x: &DMatrix<f64>,
) -> DMatrix<f64> {
    let xg = x * g;
    f.transpose() * x + x * f - (&xg * xg.transpose()) / r + q
}

/// Stabilizing solution of `f' x + x f - x g r^-1 g' x + q = 0`.
///
/// The stable invariant subspace of the Hamiltonian matrix is extracted with
/// the matrix sign function, then refined by Newton steps.
pub fn care(f: &DMatrix<f64>, g: &DVector<f64>, q: &DMatrix<f64>, r: f64) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if r <= 0.0 {
        return Err(Error::InvalidInput(format!("control weight must be positive, got {r}")));
    }
    let s = (g * g.transpose()) / r;
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(f);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or_else(|| Error::AreSolveFailure {
            reason: "Hamiltonian has eigenvalues on the imaginary axis".into(),
        })?;
        let scale = if det.is_finite() && det != 0.0 {
            det.abs().powf(-1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z * scale + inv / scale) * 0.5;
        let change = (&next - &z).abs().max();
        let size = z.abs().max();
        z = next;
        if change <= 1e-12 * size {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::AreSolveFailure { reason: "sign iteration stalled".into() });
    }

    // (sign(H) + I) [I; X] = 0
    let w11 = z.view((0, 0), (n, n)).clone_owned();
    let w12 = z.view((0, n), (n, n)).clone_owned();
    let w21 = z.view((n, 0), (n, n)).clone_owned();
    let w22 = z.view((n, n), (n, n)).clone_owned();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::AreSolveFailure { reason: e.to_string() })?;
    let x = polish(f, g, q, r, symmetrize(&x))?;

    let closed = f - (g * (g.transpose() * &x)) / r;
    if max_real_eigenvalue(&closed) >= 0.0 {
        return Err(Error::AreSolveFailure { reason: "closed loop is not Hurwitz".into() });
    }
    Ok(x)
}

/// Newton (Kleinman) refinement of an approximate stabilizing solution.
fn polish(
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    q: &DMatrix<f64>,
    r: f64,
    mut x: DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut best = care_residual(f, g, q, r, &x).abs().max();
    for _ in 0..NEWTON_POLISH_STEPS {
        let xg = &x * g;
        let closed = f - (g * xg.transpose()) / r;
        let forcing = q + (&xg * xg.transpose()) / r;
        let next = lyapunov(&closed, &forcing)?;
        let res = care_residual(f, g, q, r, &next).abs().max();
        if !(res < best) {
            break;
        }
        best = res;
        x = next;
    }
    Ok(x)
}

/// Eigenvalues sorted by decreasing real part (least stable first).
pub fn spectrum(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eig: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    eig
}

pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    spectrum(m).first().map(|z| z.re).unwrap_or(f64::NEG_INFINITY)
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
