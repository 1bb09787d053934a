//! Dense real-matrix numerics.
//!
//! Matrix exponential (scaling and squaring with diagonal Padé approximants),
//! the zero-order-hold pair via the augmented-matrix exponential, and the
//! SVD-based rank, kernel, range and minimum-norm solve primitives that turn
//! exact kernel/range statements into decidable floating-point tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical cutoffs used by every rank and containment decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Singular values below `rank_rtol * sigma_max` count as zero.
    pub rank_rtol: f64,
    /// Absolute residual bound for solves and containment checks.
    pub residual_atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-9,
            residual_atol: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn new(rank_rtol: f64, residual_atol: f64) -> Result<Self> {
        let tol = Self {
            rank_rtol,
            residual_atol,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rank_rtol > 0.0 && self.rank_rtol < 1.0) {
            return Err(Error::InvalidTolerances(format!(
                "rank_rtol must lie in (0, 1), got {}",
                self.rank_rtol
            )));
        }
        if !(self.residual_atol > 0.0 && self.residual_atol.is_finite()) {
            return Err(Error::InvalidTolerances(format!(
                "residual_atol must be positive, got {}",
                self.residual_atol
            )));
        }
        Ok(())
    }
}

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé numerator coefficients b_0..b_m for m = 3, 5, 7, 9, 13.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm thresholds below which the degree-m approximant is accurate to
// unit roundoff without scaling.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539_398_330_063_23e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// Odd/even split (U, V) of a low-degree Padé approximant, degrees 3..9.
fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u_acc = Matrix::identity(n, n) * b[1];
    let mut v_acc = Matrix::identity(n, n) * b[0];
    let mut power = Matrix::identity(n, n);
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        u_acc += &power * b[2 * k + 1];
        v_acc += &power * b[2 * k];
    }
    (a * u_acc, v_acc)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.nrows();
    let b = &PADE13;
    let ident = Matrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    (u, v)
}

/// `e^{A t}` by scaling and squaring with the smallest adequate diagonal
/// Padé approximant (degrees 3, 5, 7, 9, 13).
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("exponential time argument"));
    }
    ensure_finite(a, "matrix exponential argument")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let at = a * t;
    let norm = one_norm(&at);

    let (u, v, squarings) = if norm <= THETA3 {
        let (u, v) = pade_low(&at, &PADE3);
        (u, v, 0)
    } else if norm <= THETA5 {
        let (u, v) = pade_low(&at, &PADE5);
        (u, v, 0)
    } else if norm <= THETA7 {
        let (u, v) = pade_low(&at, &PADE7);
        (u, v, 0)
    } else if norm <= THETA9 {
        let (u, v) = pade_low(&at, &PADE9);
        (u, v, 0)
    } else {
        let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
        let scaled = &at * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };

    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::NonFinite("singular Padé denominator"))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    ensure_finite(&r, "matrix exponential result")?;
    Ok(r)
}

/// Zero-order-hold pair `(e^{A t}, (∫_0^t e^{Aτ} dτ) B)` from the exponential
/// of the augmented matrix `[[A, B], [0, 0]] t`.
pub fn zoh_pair(a: &Matrix, b: &Matrix, t: f64) -> Result<(Matrix, Matrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            context: "zoh_pair B rows",
            expected: a.nrows().to_string(),
            got: b.nrows().to_string(),
        });
    }
    if t < 0.0 {
        return Err(Error::NegativeDuration(t));
    }
    let (n, p) = (a.nrows(), b.ncols());
    if t == 0.0 {
        return Ok((Matrix::identity(n, n), Matrix::zeros(n, p)));
    }
    let mut aug = Matrix::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, p)).copy_from(b);
    let e = mat_exp(&aug, t)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, p)).into_owned(),
    ))
}

/// Full singular value decomposition `M = U diag(s) Vᵀ`.
///
/// `u` is `rows x rows`, `v` is `cols x cols` and `s` holds the
/// `min(rows, cols)` singular values in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Backed by faer; nalgebra's bidiagonal QR loses accuracy on some
/// rank-deficient inputs.
pub fn svd(m: &Matrix) -> Result<Svd> {
    ensure_finite(m, "svd input")?;
    let (rows, cols) = m.shape();
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = f
        .svd()
        .map_err(|_| Error::NonFinite("svd did not converge"))?;
    let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());
    Ok(Svd {
        u: Matrix::from_fn(rows, rows, |i, j| fu[(i, j)]),
        s: (0..rows.min(cols)).map(|i| fs[i]).collect(),
        v: Matrix::from_fn(cols, cols, |i, j| fv[(i, j)]),
    })
}

/// Singular values in nonincreasing order; NaN-filled if the input is not
/// finite.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let f = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    f.singular_values()
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())])
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Numerical rank: singular values above `rank_rtol * sigma_max`.
pub fn rank(m: &Matrix, tol: &Tolerances) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let cutoff = tol.rank_rtol * smax;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Flips `v` so that its first component with magnitude above `eps * ||v||`
/// is positive.
pub fn normalize_sign(v: &mut Vector, eps: f64) {
    let scale = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > eps * scale).cloned() {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Orthonormal basis of the numerical null space of `m`, one column per
/// kernel direction. Columns are sign-normalized (first nonzero entry > 0).
pub fn kernel_basis(m: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    ensure_finite(m, "kernel_basis input")?;
    let cols = m.ncols();
    if cols == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let dec = svd(m)?;
    let smax = dec.s.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol.rank_rtol * smax;
    // right singular vectors past min(rows, cols) have singular value zero
    let columns: Vec<Vector> = (0..cols)
        .filter(|&i| smax == 0.0 || dec.s.get(i).is_none_or(|&s| s <= cutoff))
        .map(|i| {
            let mut v: Vector = dec.v.column(i).into_owned();
            normalize_sign(&mut v, tol.rank_rtol);
            v
        })
        .collect();
    if columns.is_empty() {
        return Ok(Matrix::zeros(cols, 0));
    }
    Ok(Matrix::from_columns(&columns))
}

/// Orthonormal basis of the numerical range (column space) of `m`.
pub fn range_basis(m: &Matrix, tol: &Tolerances) -> Matrix {
    let rows = m.nrows();
    if m.is_empty() {
        return Matrix::zeros(rows, 0);
    }
    let Ok(dec) = svd(m) else {
        return Matrix::zeros(rows, 0);
    };
    let smax = dec.s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Matrix::zeros(rows, 0);
    }
    let cutoff = tol.rank_rtol * smax;
    let cols: Vec<Vector> = (0..dec.s.len())
        .filter(|&i| dec.s[i] > cutoff)
        .map(|i| dec.u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(rows, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Whether `im V ⊂ im M`, decided by projecting `V` off the numerical range of
/// `M`: the residual must be below `rank_rtol * ||V||_F + residual_atol`.
pub fn range_contained(m: &Matrix, v: &Matrix, tol: &Tolerances) -> Result<bool> {
    if m.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch {
            context: "range_contained row count",
            expected: m.nrows().to_string(),
            got: v.nrows().to_string(),
        });
    }
    ensure_finite(m, "range_contained M")?;
    ensure_finite(v, "range_contained V")?;
    if v.ncols() == 0 {
        return Ok(true);
    }
    let u = range_basis(m, tol);
    let residual = if u.ncols() == 0 {
        v.clone()
    } else {
        v - &u * (u.transpose() * v)
    };
    Ok(residual.norm() <= tol.rank_rtol * v.norm() + tol.residual_atol)
}

/// Minimum-norm solution of `M x = b` through the truncated pseudoinverse.
///
/// Fails with [`Error::InconsistentSystem`] when the residual exceeds
/// `residual_atol * max(1, ||b||)`.
pub fn min_norm_solve(m: &Matrix, b: &Vector, tol: &Tolerances) -> Result<Vector> {
    if m.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "min_norm_solve right-hand side",
            expected: m.nrows().to_string(),
            got: b.len().to_string(),
        });
    }
    ensure_finite(m, "min_norm_solve M")?;
    if !b.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("min_norm_solve b"));
    }
    let cols = m.ncols();
    let mut x = Vector::zeros(cols);
    if !m.is_empty() {
        let dec = svd(m)?;
        let smax = dec.s.iter().cloned().fold(0.0, f64::max);
        if smax > 0.0 {
            let cutoff = tol.rank_rtol * smax;
            for (i, &s) in dec.s.iter().enumerate() {
                if s > cutoff {
                    let coef = dec.u.column(i).dot(b) / s;
                    x.axpy(coef, &dec.v.column(i), 1.0);
                }
            }
        }
    }
    let residual = (m * &x - b).norm();
    let bound = tol.residual_atol * b.norm().max(1.0);
    if residual > bound {
        return Err(Error::InconsistentSystem { residual, bound });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn exp_scalar_decay() {
        let a = Matrix::from_element(1, 1, -1.0);
        let e = mat_exp(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(0, 0)] - 0.368).abs() < 5e-4);
    }

    #[test]
    fn exp_at_zero_is_identity() {
        let a = Matrix::from_row_slice(2, 2, &[3.0, -1.0, 7.0, 2.0]);
        assert_eq!(mat_exp(&a, 0.0).unwrap(), Matrix::identity(2, 2));
    }

    #[test]
    fn exp_nilpotent() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = mat_exp(&a, 2.0).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!((e - want).norm() < 1e-14);
    }

    #[test]
    fn exp_large_norm_uses_squaring() {
        // rotation generator: e^{[[0,w],[-w,0]] t} is a rotation by w t
        let w = 40.0;
        let a = Matrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let e = mat_exp(&a, 1.0).unwrap();
        let want = Matrix::from_row_slice(2, 2, &[w.cos(), w.sin(), -w.sin(), w.cos()]);
        assert!((e - want).norm() < 1e-12);
    }

    #[test]
    fn exp_rejects_bad_input() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(mat_exp(&a, 1.0), Err(Error::NonSquare { .. })));
        let b = Matrix::from_element(1, 1, f64::NAN);
        assert!(matches!(mat_exp(&b, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zoh_zero_duration() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let (ad, bd) = zoh_pair(&a, &b, 0.0).unwrap();
        assert_eq!(ad, Matrix::identity(2, 2));
        assert_eq!(bd, Matrix::zeros(2, 1));
    }

    #[test]
    fn zoh_errors() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::zeros(3, 1);
        assert!(matches!(
            zoh_pair(&a, &b, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let b = Matrix::zeros(2, 1);
        assert!(matches!(
            zoh_pair(&a, &b, -0.1),
            Err(Error::NegativeDuration(_))
        ));
    }

    #[test]
    fn zoh_scalar_closed_form() {
        // ∫_0^t e^{-τ} dτ = 1 - e^{-t}
        let a = Matrix::from_element(1, 1, -1.0);
        let b = Matrix::from_element(1, 1, 1.0);
        let (_, bd) = zoh_pair(&a, &b, 1.0).unwrap();
        assert!((bd[(0, 0)] - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn kernel_of_identity_is_empty() {
        let k = kernel_basis(&Matrix::identity(3, 3), &tol()).unwrap();
        assert_eq!(k.shape(), (3, 0));
    }

    #[test]
    fn kernel_of_row_vector() {
        let m = Matrix::from_row_slice(1, 2, &[0.632, 0.231]);
        let k = kernel_basis(&m, &tol()).unwrap();
        assert_eq!(k.ncols(), 1);
        let v = k.column(0);
        // sign-normalized: first entry positive
        assert!(v[0] > 0.0);
        let want = Vector::from_vec(vec![0.343, -0.939]);
        assert!((v - want).amax() < 1e-3);
    }

    #[test]
    fn kernel_of_zero_matrix_is_everything() {
        let k = kernel_basis(&Matrix::zeros(2, 3), &tol()).unwrap();
        assert_eq!(k.ncols(), 3);
        assert!((k.transpose() * &k - Matrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn range_containment_cases() {
        let t = tol();
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let e2 = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(!range_contained(&m, &e2, &t).unwrap());
        assert!(range_contained(&m, &m, &t).unwrap());
        let full = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 5.0]);
        let any = Matrix::from_row_slice(2, 2, &[9.0, -4.0, 1e3, 2.0]);
        assert!(range_contained(&full, &any, &t).unwrap());
        assert!(range_contained(&m, &Matrix::zeros(3, 1), &t).is_err());
    }

    #[test]
    fn min_norm_trivial_cases() {
        let t = tol();
        let b = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = min_norm_solve(&Matrix::identity(3, 3), &b, &t).unwrap();
        assert!((x - &b).amax() < 1e-14);
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = min_norm_solve(&m, &Vector::zeros(2), &t).unwrap();
        assert_eq!(x, Vector::zeros(3));
    }

    #[test]
    fn min_norm_inconsistent() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = Vector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            min_norm_solve(&m, &b, &tol()),
            Err(Error::InconsistentSystem { .. })
        ));
    }

    #[test]
    fn rank_counts() {
        let t = tol();
        let m = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(rank(&m, &t), 2);
        assert_eq!(rank(&Matrix::zeros(2, 2), &t), 0);
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerances::new(0.0, 1e-8).is_err());
        assert!(Tolerances::new(1.0, 1e-8).is_err());
        assert!(Tolerances::new(1e-9, -1.0).is_err());
        assert!(Tolerances::new(1e-9, 1e-8).is_ok());
    }
}
