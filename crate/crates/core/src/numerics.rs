//! Complex vector and small-matrix primitives.
//!
//! Vectors and matrices are plain `nalgebra` dynamic types over [`C64`]; the
//! functions here add the checks the rest of the crate relies on (equal
//! dimensions, finite entries, full column rank) and the real lifting used to
//! express complex norm constraints as real second-order cones.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;
pub type RVector = DVector<f64>;
pub type RMatrix = DMatrix<f64>;

/// Numerical tolerances shared across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative rank threshold: `σ_min > rank_rel · σ_max`.
    pub rank_rel: f64,
    /// Slack on the unit spectral-norm bound of ellipsoid shapes.
    pub shape_norm_slack: f64,
    /// Slack on `‖w_k‖² ≤ P_k`.
    pub power_slack: f64,
    /// Maximum primal violation / duality gap accepted from the cone solver.
    pub solver_certificate: f64,
    /// Duality-gap stopping threshold handed to the interior-point method.
    pub solver_gap: f64,
    /// Iteration cap for the interior-point method.
    pub solver_max_iter: u32,
}

pub const TOLERANCES: Tolerances = Tolerances {
    rank_rel: 1e-10,
    shape_norm_slack: 1e-9,
    power_slack: 1e-9,
    solver_certificate: 1e-7,
    solver_gap: 1e-8,
    solver_max_iter: 200,
};

/// `Σ conj(a_i)·b_i`.
pub fn herm_inner(a: &CVector, b: &CVector) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "herm_inner",
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.dotc(b))
}

pub fn is_finite_vector(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_finite_matrix(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest singular value of `a`.
pub fn largest_singular_value(a: &CMatrix) -> Result<f64> {
    if !is_finite_matrix(a) {
        return Err(Error::NonFinite("largest_singular_value"));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.singular_values().max())
}

/// `(σ_min, σ_max)` over the `min(rows, cols)` singular values.
pub fn singular_value_range(a: &CMatrix) -> Result<(f64, f64)> {
    if !is_finite_matrix(a) {
        return Err(Error::NonFinite("singular_value_range"));
    }
    let sv = a.singular_values();
    Ok((sv.min(), sv.max()))
}

/// Errors unless `z` has full column rank under [`TOLERANCES`].
pub fn check_full_column_rank(z: &CMatrix) -> Result<()> {
    if z.ncols() == 0 || z.nrows() < z.ncols() {
        return Err(Error::Singular {
            sigma_min: 0.0,
            sigma_max: 0.0,
        });
    }
    let (sigma_min, sigma_max) = singular_value_range(z)?;
    if !(sigma_min > TOLERANCES.rank_rel * sigma_max) || sigma_max == 0.0 {
        return Err(Error::Singular {
            sigma_min,
            sigma_max,
        });
    }
    Ok(())
}

/// Orthogonal projector `Z (Zᴴ Z)⁻¹ Zᴴ` onto the column space of `z`.
pub fn orth_projector(z: &CMatrix) -> Result<CMatrix> {
    check_full_column_rank(z)?;
    let gram = z.adjoint() * z;
    let chol = gram.cholesky().ok_or(Error::Singular {
        sigma_min: 0.0,
        sigma_max: 0.0,
    })?;
    let x = chol.solve(&z.adjoint());
    let p = z * x;
    // Symmetrise away round-off so the result is Hermitian to machine precision.
    Ok((&p + p.adjoint()).scale(0.5))
}

/// `I − Π_Z`.
pub fn orth_complement_projector(z: &CMatrix) -> Result<CMatrix> {
    let p = orth_projector(z)?;
    Ok(CMatrix::identity(z.nrows(), z.nrows()) - p)
}

/// `I − Π` onto the orthogonal complement of the numerical column space of
/// `z`, tolerating rank deficiency (columns below `rank_rel · σ_max` are
/// dropped). An empty or all-zero `z` gives the identity.
pub fn span_complement_projector(z: &CMatrix) -> CMatrix {
    let n = z.nrows();
    let mut p = CMatrix::identity(n, n);
    if z.ncols() == 0 || z.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return p;
    }
    let svd = z.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    for (i, &sv) in svd.singular_values.iter().enumerate() {
        if sv > TOLERANCES.rank_rel * smax {
            let col = u.column(i);
            p -= &col * col.adjoint();
        }
    }
    (&p + p.adjoint()).scale(0.5)
}

/// Stacks real and imaginary parts: `[Re(v); Im(v)]`.
pub fn realify(v: &CVector) -> RVector {
    let n = v.len();
    RVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`realify`]. `x` must have even length.
pub fn complexify(x: &[f64]) -> CVector {
    let n = x.len() / 2;
    CVector::from_fn(n, |i, _| C64::new(x[i], x[n + i]))
}

/// Real `2m × 2n` image of a complex `m × n` matrix `B`, acting on realified
/// vectors: `realify(B v) = realify_matrix(B) · realify(v)`.
pub fn realify_matrix(b: &CMatrix) -> RMatrix {
    let (m, n) = b.shape();
    let mut out = RMatrix::zeros(2 * m, 2 * n);
    for i in 0..m {
        for j in 0..n {
            let z = b[(i, j)];
            out[(i, j)] = z.re;
            out[(i, n + j)] = -z.im;
            out[(m + i, j)] = z.im;
            out[(m + i, n + j)] = z.re;
        }
    }
    out
}

/// The `2 × 2n` real map taking `realify(w)` to `[Re(hᴴw), Im(hᴴw)]`.
pub fn realify_inner(h: &CVector) -> RMatrix {
    let n = h.len();
    let mut out = RMatrix::zeros(2, 2 * n);
    for i in 0..n {
        let (a, b) = (h[i].re, h[i].im);
        out[(0, i)] = a;
        out[(0, n + i)] = b;
        out[(1, i)] = -b;
        out[(1, n + i)] = a;
    }
    out
}

/// Phase of `z` with the convention `∠0 = 0`.
pub fn phase(z: C64) -> f64 {
    if z == C64::new(0.0, 0.0) {
        0.0
    } else {
        z.arg()
    }
}
