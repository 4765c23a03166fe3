//! Pointwise extremal operators on symmetric matrices.
//!
//! `M±` are the Pucci maximal/minimal operators, `Q±` the linear operators
//! `λΔ + (Λ-λ)Q⁰` (and the λ↔Λ swap) whose second coefficient is the pure
//! radial second derivative `x_i x_j / |x|²`. Everything here is a pure
//! function of its inputs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative asymmetry accepted before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues below this fraction of `‖M‖` count as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("ellipticity constants must satisfy 0 < lambda <= Lambda (got lambda={lambda}, Lambda={big_lambda})")]
    InvalidEllipticity { lambda: f64, big_lambda: f64 },
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix must be square with n >= 1 (got {rows}x{cols})")]
    BadShape { rows: usize, cols: usize },
    #[error("operator coefficients are singular at the origin")]
    SingularPoint,
    #[error("dimension mismatch: matrix is {matrix}x{matrix} but point has {point} coordinates")]
    DimensionMismatch { matrix: usize, point: usize },
    #[error("dimension must be >= 1 (got {0})")]
    BadDimension(usize),
}

/// The ellipticity constants `0 < λ ≤ Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityPair {
    lambda: f64,
    #[serde(rename = "Lambda")]
    big_lambda: f64,
}

impl EllipticityPair {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self, OperatorError> {
        if !(lambda.is_finite() && big_lambda.is_finite() && lambda > 0.0 && lambda <= big_lambda) {
            return Err(OperatorError::InvalidEllipticity { lambda, big_lambda });
        }
        Ok(Self { lambda, big_lambda })
    }

    /// The Laplacian case `λ = Λ = s`.
    pub fn isotropic(s: f64) -> Result<Self, OperatorError> {
        Self::new(s, s)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[allow(non_snake_case)]
    pub fn Lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn ratio(&self) -> f64 {
        self.lambda / self.big_lambda
    }

    /// `Ñ₊ = (λ/Λ)(N-1) + 1`.
    pub fn n_plus(&self, dim: usize) -> DimensionLike {
        DimensionLike(self.ratio() * (dim as f64 - 1.0) + 1.0)
    }

    /// `Ñ₋ = (Λ/λ)(N-1) + 1`.
    pub fn n_minus(&self, dim: usize) -> DimensionLike {
        DimensionLike((dim as f64 - 1.0) / self.ratio() + 1.0)
    }

    /// Weight applied to a Hessian eigenvalue by `M⁺`.
    #[inline]
    pub fn plus_weight(&self, e: f64) -> f64 {
        if e > 0.0 {
            self.big_lambda
        } else {
            self.lambda
        }
    }

    /// Weight applied to a Hessian eigenvalue by `M⁻`.
    #[inline]
    pub fn minus_weight(&self, e: f64) -> f64 {
        if e > 0.0 {
            self.lambda
        } else {
            self.big_lambda
        }
    }
}

/// An effective ("dimension-like") dimension of a reduced radial equation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DimensionLike(pub f64);

impl DimensionLike {
    pub fn value(self) -> f64 {
        self.0
    }

    /// `(Ñ+2)/(Ñ-2)`, or `None` when `Ñ ≤ 2` (every exponent is subcritical).
    pub fn critical_exponent(self) -> Option<f64> {
        (self.0 > 2.0).then(|| (self.0 + 2.0) / (self.0 - 2.0))
    }
}

/// Sobolev exponent `(N+2)/(N-2)` of the Laplacian; `None` for `N ≤ 2`.
pub fn sobolev_exponent(dim: usize) -> Option<f64> {
    DimensionLike(dim as f64).critical_exponent()
}

/// A dense symmetric matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, OperatorError> {
        let (rows, cols) = m.shape();
        if rows != cols || rows == 0 {
            return Err(OperatorError::BadShape { rows, cols });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asymmetry = (&m - m.transpose()).amax() / scale;
        if asymmetry > SYMMETRY_TOL {
            return Err(OperatorError::NotSymmetric { asymmetry });
        }
        // symmetrize the rounding-level residue so the eigensolver sees an exact input
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, OperatorError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(OperatorError::BadShape {
                rows: n,
                cols: rows.first().map_or(0, |r| r.len()),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diag(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self(&self.0 * t)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += x[i] * self.0[(i, j)] * x[j];
            }
        }
        acc
    }

    /// Eigenvalues with entries below `ZERO_EIGEN_TOL·‖M‖` flushed to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let norm = self.0.amax();
        let eig = SymmetricEigen::new(self.0.clone());
        eig.eigenvalues
            .iter()
            .map(|&e| if e.abs() < ZERO_EIGEN_TOL * norm { 0.0 } else { e })
            .collect()
    }

    /// Eigen-decomposition `(values, column eigenvectors)`.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.0.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }
}

/// `M⁺(M) = Λ Σ_{e>0} e + λ Σ_{e<0} e`.
pub fn pucci_plus(m: &SymMatrix, e: &EllipticityPair) -> f64 {
    pucci_plus_eigen(&m.eigenvalues(), e)
}

/// `M⁻(M) = λ Σ_{e>0} e + Λ Σ_{e<0} e`.
pub fn pucci_minus(m: &SymMatrix, e: &EllipticityPair) -> f64 {
    pucci_minus_eigen(&m.eigenvalues(), e)
}

pub fn pucci_plus_eigen(eigs: &[f64], e: &EllipticityPair) -> f64 {
    eigs.iter().map(|&x| e.plus_weight(x) * x).sum()
}

pub fn pucci_minus_eigen(eigs: &[f64], e: &EllipticityPair) -> f64 {
    eigs.iter().map(|&x| e.minus_weight(x) * x).sum()
}

/// The smooth cut-off used by the approximating operators: 0 below 1/2,
/// 1 above 1, and the `3t² - 2t³` blend (`t = 2r - 1`) in between.
pub fn cutoff(r: f64) -> f64 {
    if r < 0.5 {
        0.0
    } else if r >= 1.0 {
        1.0
    } else {
        let t = 2.0 * r - 1.0;
        t * t * (3.0 - 2.0 * t)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Coefficients `a_ij = x_i x_j / |x|²` of `Q⁰`, optionally multiplied by
/// the cut-off `η(n|x|)` of the `n`-th approximating operator.
///
/// The double sum in the approximating operator runs over the ambient
/// dimension `N = x.len()`.
pub fn q0_matrix(x: &[f64], n_cutoff: Option<u32>) -> Result<SymMatrix, OperatorError> {
    let dim = x.len();
    if dim == 0 {
        return Err(OperatorError::BadDimension(0));
    }
    let r = norm(x);
    let scale = match n_cutoff {
        None if r == 0.0 => return Err(OperatorError::SingularPoint),
        None => 1.0,
        Some(n) => cutoff(n as f64 * r),
    };
    if scale == 0.0 {
        return Ok(SymMatrix(DMatrix::zeros(dim, dim)));
    }
    let r2 = r * r;
    Ok(SymMatrix(DMatrix::from_fn(dim, dim, |i, j| {
        scale * x[i] * x[j] / r2
    })))
}

fn check_point(h: &SymMatrix, x: &[f64]) -> Result<(), OperatorError> {
    if h.dim() != x.len() {
        return Err(OperatorError::DimensionMismatch {
            matrix: h.dim(),
            point: x.len(),
        });
    }
    if norm(x) == 0.0 {
        return Err(OperatorError::SingularPoint);
    }
    Ok(())
}

/// `Q⁺u = λ tr(H) + (Λ-λ) xᵀHx/|x|²` for a Hessian `H` evaluated at `x ≠ 0`.
pub fn q_plus_apply(h: &SymMatrix, x: &[f64], e: &EllipticityPair) -> Result<f64, OperatorError> {
    check_point(h, x)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(e.lambda() * h.trace() + (e.Lambda() - e.lambda()) * h.quadratic_form(x) / r2)
}

/// `Q⁻u = Λ tr(H) + (λ-Λ) xᵀHx/|x|²`.
pub fn q_minus_apply(h: &SymMatrix, x: &[f64], e: &EllipticityPair) -> Result<f64, OperatorError> {
    check_point(h, x)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(e.Lambda() * h.trace() + (e.lambda() - e.Lambda()) * h.quadratic_form(x) / r2)
}

/// The `n`-th smooth-coefficient approximation `Qⁿ` of `Q⁺`; defined at the
/// origin as `λ tr(H)`.
pub fn qn_apply(h: &SymMatrix, x: &[f64], e: &EllipticityPair, n: u32) -> Result<f64, OperatorError> {
    if h.dim() != x.len() {
        return Err(OperatorError::DimensionMismatch {
            matrix: h.dim(),
            point: x.len(),
        });
    }
    let a = q0_matrix(x, Some(n))?;
    let coupling = (a.as_matrix().component_mul(h.as_matrix())).sum();
    Ok(e.lambda() * h.trace() + (e.Lambda() - e.lambda()) * coupling)
}

/// `tr(A·M)`.
pub fn trace_product(a: &SymMatrix, m: &SymMatrix) -> f64 {
    a.as_matrix().component_mul(m.as_matrix()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(l: f64, big: f64) -> EllipticityPair {
        EllipticityPair::new(l, big).unwrap()
    }

    #[test]
    fn pucci_on_diagonal_matrices() {
        let e = pair(1.0, 2.0);
        assert_abs_diff_eq!(pucci_plus(&SymMatrix::diag(&[1.0, 1.0]), &e), 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pucci_plus(&SymMatrix::diag(&[2.0, -3.0]), &e), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pucci_minus(&SymMatrix::diag(&[1.0, 1.0]), &e), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pucci_minus(&SymMatrix::diag(&[2.0, -3.0]), &e), -4.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(EllipticityPair::new(2.0, 1.0).is_err());
        assert!(EllipticityPair::new(0.0, 1.0).is_err());
        assert!(EllipticityPair::new(f64::NAN, 1.0).is_err());
        let err = SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0 + 1e-9, 1.0]]).unwrap_err();
        assert!(matches!(err, OperatorError::NotSymmetric { .. }));
        assert!(SymMatrix::from_rows(&[&[1.0, 2.0], &[2.0 + 1e-15, 1.0]]).is_ok());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn zero_eigenvalues_are_flushed() {
        let m = SymMatrix::diag(&[1.0, 1e-16, -1.0]);
        assert_eq!(m.eigenvalues().iter().filter(|&&v| v == 0.0).count(), 1);
    }

    #[test]
    fn q0_examples() {
        let a = q0_matrix(&[1.0, 0.0, 0.0], None).unwrap();
        assert_eq!(a.as_matrix(), &DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0])));
        let s = 1.0 / 2f64.sqrt();
        let a = q0_matrix(&[s, s], None).unwrap();
        for v in a.as_matrix().iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
        assert_eq!(q0_matrix(&[0.0, 0.0], None), Err(OperatorError::SingularPoint));
        // zero vector is fine once the cut-off is on
        assert_eq!(q0_matrix(&[0.0, 0.0], Some(3)).unwrap().trace(), 0.0);
    }

    #[test]
    fn cutoff_matches_uncut_beyond_one_over_n() {
        let n = 4;
        for x in [[0.25, 0.0, 0.0], [0.2, 0.3, -0.1], [1.0, 1.0, 1.0]] {
            let cut = q0_matrix(&x, Some(n)).unwrap();
            let uncut = q0_matrix(&x, None).unwrap();
            assert_eq!(cut, uncut);
        }
        // inside 1/(2n) the coefficients vanish
        assert_eq!(q0_matrix(&[0.1, 0.0], Some(n)).unwrap().trace(), 0.0);
        assert_eq!(cutoff(0.75), 0.5);
    }

    #[test]
    fn q_plus_examples() {
        let e = pair(1.0, 2.0);
        let h = SymMatrix::identity(3);
        assert_abs_diff_eq!(q_plus_apply(&h, &[0.3, -0.2, 0.5], &e).unwrap(), 4.0, epsilon = 1e-14);
        let iso = pair(1.5, 1.5);
        let h = SymMatrix::from_rows(&[&[1.0, 0.3, 0.0], &[0.3, -2.0, 0.1], &[0.0, 0.1, 0.5]]).unwrap();
        assert_abs_diff_eq!(q_plus_apply(&h, &[0.1, 0.7, 0.2], &iso).unwrap(), 1.5 * h.trace(), epsilon = 1e-14);
        assert_eq!(q_plus_apply(&h, &[0.0, 0.0, 0.0], &e), Err(OperatorError::SingularPoint));
    }

    #[test]
    fn q_plus_on_radial_functions() {
        // u(x) = f(|x|) with f(r) = sin(r): H = f'' x̂x̂ᵀ + f'/r (I - x̂x̂ᵀ)
        let e = pair(0.7, 1.9);
        let x = [0.3, -0.4, 1.2];
        let r = norm(&x);
        let (f1, f2) = (r.cos(), -r.sin());
        let hat: Vec<f64> = x.iter().map(|v| v / r).collect();
        let h = SymMatrix::new(DMatrix::from_fn(3, 3, |i, j| {
            let p = hat[i] * hat[j];
            f2 * p + f1 / r * (if i == j { 1.0 } else { 0.0 } - p)
        }))
        .unwrap();
        let expected = e.Lambda() * f2 + e.lambda() * 2.0 * f1 / r;
        assert_abs_diff_eq!(q_plus_apply(&h, &x, &e).unwrap(), expected, epsilon = 1e-13);
        assert_abs_diff_eq!(qn_apply(&h, &x, &e, 10).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn dimension_like_numbers() {
        let e = pair(1.0, 2.0);
        assert_abs_diff_eq!(e.n_plus(5).value(), 3.0);
        assert_abs_diff_eq!(e.n_minus(4).value(), 7.0);
        assert_eq!(e.n_plus(3).critical_exponent(), None);
        assert_abs_diff_eq!(sobolev_exponent(3).unwrap(), 5.0);
        assert_abs_diff_eq!(e.n_plus(4).critical_exponent().unwrap(), 9.0);
    }
}
