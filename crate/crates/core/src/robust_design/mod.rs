//! Robust beamformer design.
//!
//! Every transmitter's Pareto-relevant beamformers solve
//!
//! ```text
//! maximise   Re{ĥ_kkᴴw} − ε_kk‖A_kkᴴw‖
//! subject to Im{ĥ_kkᴴw} = 0,  ‖w‖ ≤ √P_k,
//!            |ĥ_kℓᴴw| + ε_kℓ‖A_kℓᴴw‖ ≤ √(λ_kℓ Γ_kℓ)   (ℓ ≠ k)
//! ```
//!
//! which is a second-order cone program over `[Re w; Im w]` plus epigraph
//! scalars. Dropping the caps gives robust MRT; `Γ_kℓ` is the worst-case
//! interference robust MRT causes. Zero-forcing and the closed-form two-user
//! spherical family are provided as baselines and cross-checks.

pub mod cone;

pub use cone::{solve_cone_program, ConeProgram, ConeSolution, ConeStatus, LinearEquality, SocConstraint};

use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::numerics::{
    herm_inner, phase, realify_inner, realify_matrix, span_complement_projector, CMatrix, CVector,
    RMatrix, RVector, C64,
};
use crate::numerics::TOLERANCES;
use crate::worst_case::{worst_intended_amplitude, worst_interference_amplitude};

/// Per-transmitter interference levels `λ_kℓ` and caps `Γ_kℓ`, both K×K
/// (diagonals ignored).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignParams {
    pub lambda: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

impl DesignParams {
    pub fn new(lambda: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>) -> Result<Self> {
        let k = lambda.len();
        if gamma.len() != k || lambda.iter().chain(gamma.iter()).any(|r| r.len() != k) {
            return Err(Error::param(format!("lambda and gamma must both be {k}x{k}")));
        }
        for (i, row) in lambda.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && !(0.0..=1.0).contains(&v) {
                    return Err(Error::invariant(format!("lambda[{i}][{j}]"), format!("must lie in [0,1], got {v}")));
                }
            }
        }
        check_gamma(&gamma)?;
        Ok(Self { lambda, gamma })
    }

    /// `λ_k` over `ℓ ≠ k` in receiver order.
    pub fn lambda_row(&self, k: usize) -> Vec<f64> {
        off_diagonal(&self.lambda[k], k)
    }
}

fn off_diagonal(row: &[f64], k: usize) -> Vec<f64> {
    row.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &v)| v).collect()
}

fn check_gamma(gamma: &[Vec<f64>]) -> Result<()> {
    for (i, row) in gamma.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && !(v.is_finite() && v >= 0.0) {
                return Err(Error::invariant(format!("gamma[{i}][{j}]"), format!("must be finite and nonnegative, got {v}")));
            }
        }
    }
    Ok(())
}

/// A designed beamformer together with how the solver fared.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub w: CVector,
    /// Optimal value of the cone program (worst-case intended amplitude).
    pub objective_value: f64,
    pub status: ConeStatus,
    pub iterations: u32,
}

impl DesignSolution {
    fn zero(n: usize) -> Self {
        Self {
            w: CVector::zeros(n),
            objective_value: 0.0,
            status: ConeStatus::Optimal,
            iterations: 0,
        }
    }

    fn into_result(self, what: &str) -> Result<CVector> {
        match self.status {
            ConeStatus::Optimal => Ok(self.w),
            other => Err(Error::Solver(format!("{what}: solver status {other:?}"))),
        }
    }
}

/// Incremental layout of the realified variable `[Re w; Im w; aux…]`.
struct Layout {
    n: usize,
    dim: usize,
}

impl Layout {
    fn new(n: usize) -> Self {
        Self { n, dim: 2 * n }
    }

    fn push(&mut self) -> usize {
        self.dim += 1;
        self.dim - 1
    }

    /// Pads a map acting on `realify(w)` with zero columns for the auxiliaries.
    fn lift(&self, m: &RMatrix) -> RMatrix {
        let mut out = RMatrix::zeros(m.nrows(), self.dim);
        out.view_mut((0, 0), (m.nrows(), 2 * self.n)).copy_from(m);
        out
    }

    fn unit(&self, i: usize, scale: f64) -> RVector {
        let mut v = RVector::zeros(self.dim);
        v[i] = scale;
        v
    }
}

enum CapKind {
    /// `‖ĥᴴw‖ ≤ c` when `ε = 0`.
    Plain(usize, f64),
    /// `|ĥᴴw| + ε‖Aᴴw‖ ≤ c` via auxiliaries `u`, `v`.
    Split { l: usize, cap: f64, u: usize, v: usize },
    /// `ĥᴴw = 0`.
    Null(usize),
}

/// Solves the capped design program for transmitter `k`; `caps[ℓ]` is the
/// amplitude bound `√(λ_kℓ Γ_kℓ)` (`None` leaves receiver `ℓ` unconstrained).
fn solve_capped(s: &Scenario, k: usize, caps: &[Option<f64>]) -> Result<DesignSolution> {
    let link = s.link(k);
    let n = link.antennas;
    let h_kk = s.estimate(k, k);
    let e_kk = s.ellipsoid(k, k);

    let mut layout = Layout::new(n);
    let t = (e_kk.radius() > 0.0).then(|| layout.push());
    let mut kinds = Vec::new();
    for (l, cap) in caps.iter().enumerate() {
        let Some(cap) = *cap else { continue };
        if l == k {
            continue;
        }
        let eps = s.ellipsoid(k, l).radius();
        if cap == 0.0 {
            if eps > 0.0 {
                // A full-rank shape makes ‖Aᴴw‖ = 0 force w = 0.
                return Ok(DesignSolution::zero(n));
            }
            kinds.push(CapKind::Null(l));
        } else if eps == 0.0 {
            kinds.push(CapKind::Plain(l, cap));
        } else {
            let u = layout.push();
            let v = layout.push();
            kinds.push(CapKind::Split { l, cap, u, v });
        }
    }

    let inner_kk = layout.lift(&realify_inner(h_kk));
    let mut objective = inner_kk.row(0).transpose();
    if let Some(t) = t {
        objective[t] = -e_kk.radius();
    }
    let mut p = ConeProgram::new(layout.dim, objective);
    let zeros = |m: usize| RVector::zeros(m);
    let no_d = RVector::zeros(layout.dim);

    p.add_eq(inner_kk.row(1).transpose(), 0.0);
    p.add_soc(layout.lift(&RMatrix::identity(2 * n, 2 * n)), zeros(2 * n), no_d.clone(), link.power_budget.sqrt());
    if let Some(t) = t {
        p.add_soc(layout.lift(&realify_matrix(&e_kk.shape().adjoint())), zeros(2 * n), layout.unit(t, 1.0), 0.0);
    }
    for kind in &kinds {
        match *kind {
            CapKind::Null(l) => {
                let m = layout.lift(&realify_inner(s.estimate(k, l)));
                p.add_eq(m.row(0).transpose(), 0.0);
                p.add_eq(m.row(1).transpose(), 0.0);
            }
            CapKind::Plain(l, cap) => {
                p.add_soc(layout.lift(&realify_inner(s.estimate(k, l))), zeros(2), no_d.clone(), cap);
            }
            CapKind::Split { l, cap, u, v } => {
                let e = s.ellipsoid(k, l);
                p.add_soc(layout.lift(&realify_inner(s.estimate(k, l))), zeros(2), layout.unit(u, 1.0), 0.0);
                p.add_soc(layout.lift(&realify_matrix(&e.shape().adjoint())), zeros(2 * n), layout.unit(v, 1.0), 0.0);
                let d = layout.unit(u, -1.0) + layout.unit(v, -e.radius());
                p.add_soc(RMatrix::zeros(0, layout.dim), zeros(0), d, cap);
            }
        }
    }

    let sol = solve_cone_program(&p)?;
    if sol.status != ConeStatus::Optimal {
        return Ok(DesignSolution {
            w: CVector::zeros(n),
            objective_value: f64::NAN,
            status: sol.status,
            iterations: sol.iterations,
        });
    }

    let mut w = crate::numerics::complexify(&sol.x.as_slice()[..2 * n]);
    // Remove the solver's round-off from exact nulling constraints.
    let nulled: Vec<CVector> = kinds
        .iter()
        .filter_map(|c| match c {
            CapKind::Null(l) => Some(s.estimate(k, *l).clone()),
            _ => None,
        })
        .collect();
    if !nulled.is_empty() {
        w = span_complement_projector(&CMatrix::from_columns(&nulled)) * w;
    }
    let w = normalize_phase(h_kk, w)?;
    // All amplitudes are positively homogeneous in w, so a solution with a
    // positive objective is optimal exactly when scaled onto its first active
    // constraint; scaling removes the interior-point method's slack. A
    // numerically zero objective is best served by the zero beamformer, which
    // also causes no interference.
    let p_sqrt = link.power_budget.sqrt();
    let intended = worst_intended_amplitude(h_kk, e_kk, &w)?;
    let norm = w.norm();
    if norm == 0.0 || intended <= TOLERANCES.solver_gap * p_sqrt * h_kk.norm() {
        return Ok(DesignSolution {
            w: CVector::zeros(n),
            objective_value: sol.objective_value,
            status: ConeStatus::Optimal,
            iterations: sol.iterations,
        });
    }
    let mut scale = p_sqrt / norm;
    for kind in &kinds {
        if let CapKind::Plain(l, cap) | CapKind::Split { l, cap, .. } = *kind {
            let amp = worst_interference_amplitude(s.estimate(k, l), s.ellipsoid(k, l), &w)?;
            if amp > 0.0 {
                scale = scale.min(cap / amp);
            }
        }
    }
    Ok(DesignSolution {
        w: w.scale(scale),
        objective_value: sol.objective_value,
        status: ConeStatus::Optimal,
        iterations: sol.iterations,
    })
}

/// Rotates `w` so that `ĥᴴw` is real and nonnegative.
fn normalize_phase(h: &CVector, w: CVector) -> Result<CVector> {
    let rot = C64::from_polar(1.0, -phase(herm_inner(h, &w)?));
    Ok(w * rot)
}

fn check_link(s: &Scenario, k: usize) -> Result<()> {
    if k >= s.num_links() {
        return Err(Error::param(format!("link index {k} out of range for K = {}", s.num_links())));
    }
    Ok(())
}

/// Robust MRT with solver diagnostics.
pub fn solve_robust_mrt(s: &Scenario, k: usize) -> Result<DesignSolution> {
    check_link(s, k)?;
    solve_capped(s, k, &vec![None; s.num_links()])
}

/// Beamformer maximising the worst-case intended amplitude `x_kk` under the
/// power budget, ignoring interference.
pub fn robust_mrt(s: &Scenario, k: usize) -> Result<CVector> {
    solve_robust_mrt(s, k)?.into_result("robust MRT")
}

/// `Γ_kℓ = x²_kℓ(w_k^R-MRT)`; the diagonal is zero.
pub fn interference_caps(s: &Scenario) -> Result<Vec<Vec<f64>>> {
    let k_links = s.num_links();
    let mut gamma = vec![vec![0.0; k_links]; k_links];
    for (k, row) in gamma.iter_mut().enumerate() {
        let w = robust_mrt(s, k)?;
        for (l, g) in row.iter_mut().enumerate() {
            if l != k {
                *g = worst_interference_amplitude(s.estimate(k, l), s.ellipsoid(k, l), &w)?.powi(2);
            }
        }
    }
    Ok(gamma)
}

/// Pareto candidate with solver diagnostics; see [`pareto_candidate`].
pub fn solve_pareto_candidate(
    s: &Scenario,
    k: usize,
    lambda_k: &[f64],
    gamma: &[Vec<f64>],
) -> Result<DesignSolution> {
    check_link(s, k)?;
    let k_links = s.num_links();
    if lambda_k.len() != k_links - 1 {
        return Err(Error::DimensionMismatch {
            context: "pareto_candidate lambda",
            expected: k_links - 1,
            found: lambda_k.len(),
        });
    }
    if gamma.len() != k_links || gamma.iter().any(|r| r.len() != k_links) {
        return Err(Error::param(format!("gamma must be {k_links}x{k_links}")));
    }
    check_gamma(gamma)?;
    let mut caps = vec![None; k_links];
    let mut it = lambda_k.iter();
    for (l, cap) in caps.iter_mut().enumerate() {
        if l == k {
            continue;
        }
        let lam = *it.next().expect("length checked");
        if !(0.0..=1.0).contains(&lam) {
            return Err(Error::invariant(format!("lambda[{k}][{l}]"), format!("must lie in [0,1], got {lam}")));
        }
        *cap = Some((lam * gamma[k][l]).sqrt());
    }
    solve_capped(s, k, &caps)
}

/// Beamformer of transmitter `k` maximising its worst-case intended amplitude
/// while keeping the worst-case interference amplitude at each other
/// receiver below `√(λ_kℓ Γ_kℓ)`. `lambda_k` lists `λ_kℓ` for `ℓ ≠ k` in
/// receiver order.
pub fn pareto_candidate(s: &Scenario, k: usize, lambda_k: &[f64], gamma: &[Vec<f64>]) -> Result<CVector> {
    solve_pareto_candidate(s, k, lambda_k, gamma)?.into_result("pareto candidate")
}

/// Zero-forcing on the estimates: full power along the component of `ĥ_kk`
/// orthogonal to every cross-channel estimate. Zero when `N_k < K` or when
/// that component vanishes.
pub fn zero_forcing(s: &Scenario, k: usize) -> Result<CVector> {
    check_link(s, k)?;
    let link = s.link(k);
    let n = link.antennas;
    if n < s.num_links() {
        return Ok(CVector::zeros(n));
    }
    let cross: Vec<CVector> = (0..s.num_links()).filter(|&l| l != k).map(|l| s.estimate(k, l).clone()).collect();
    let h = s.estimate(k, k);
    let proj = if cross.is_empty() {
        h.clone()
    } else {
        span_complement_projector(&CMatrix::from_columns(&cross)) * h
    };
    let norm = proj.norm();
    if norm <= crate::numerics::TOLERANCES.rank_rel * h.norm() || norm == 0.0 {
        return Ok(CVector::zeros(n));
    }
    Ok(proj.scale(link.power_budget.sqrt() / norm))
}

/// `β_max = ‖Π_{ĥ_kℓ} ĥ_kk‖² / ‖ĥ_kk‖²` for a two-user scenario.
pub fn beta_max(s: &Scenario, k: usize) -> Result<f64> {
    let (par, _, h) = two_user_split(s, k)?;
    let hn = h.norm_squared();
    Ok(if hn == 0.0 { 0.0 } else { par.norm_squared() / hn })
}

/// `(Π ĥ_kk, Π⊥ ĥ_kk, ĥ_kk)` with `Π` the projector onto `ĥ_kℓ`, `ℓ ≠ k`.
fn two_user_split(s: &Scenario, k: usize) -> Result<(CVector, CVector, CVector)> {
    check_link(s, k)?;
    if s.num_links() != 2 {
        return Err(Error::param(format!("two-user parametrisation needs K = 2, got {}", s.num_links())));
    }
    let l = 1 - k;
    let h = s.estimate(k, k).clone();
    let g = s.estimate(k, l);
    let gn = g.norm_squared();
    let par = if gn == 0.0 {
        CVector::zeros(h.len())
    } else {
        g * (herm_inner(g, &h)? / gn)
    };
    let perp = &h - &par;
    Ok((par, perp, h))
}

/// Closed-form two-user candidate for spherical uncertainty:
/// `√(ξP)·(√β·Πĥ/‖Πĥ‖ + √(1−β)·Π⊥ĥ/‖Π⊥ĥ‖)`. When `ĥ_kk` is parallel to the
/// cross channel the family degenerates to `√(ξP)·ĥ_kk/‖ĥ_kk‖`.
pub fn two_user_spherical_candidate(s: &Scenario, k: usize, xi: f64, beta: f64) -> Result<CVector> {
    let (par, perp, h) = two_user_split(s, k)?;
    for l in 0..2 {
        if !s.ellipsoid(k, l).is_spherical() {
            return Err(Error::param(format!("uncertainty region ({k},{l}) is not spherical")));
        }
    }
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::param(format!("xi must lie in [0,1], got {xi}")));
    }
    let bmax = beta_max(s, k)?;
    if !(beta >= 0.0 && beta <= bmax + 1e-12) {
        return Err(Error::param(format!("beta must lie in [0, {bmax}], got {beta}")));
    }
    let n = h.len();
    let amp = (xi * s.link(k).power_budget).sqrt();
    let hn = h.norm();
    if hn == 0.0 || amp == 0.0 {
        return Ok(CVector::zeros(n));
    }
    let tol = crate::numerics::TOLERANCES.rank_rel * hn;
    let (pn, qn) = (par.norm(), perp.norm());
    if qn <= tol {
        return Ok(h.scale(amp / hn));
    }
    let beta = beta.min(1.0);
    let mut w = perp.scale((1.0 - beta).sqrt() / qn);
    if pn > tol {
        w += par.scale(beta.sqrt() / pn);
    }
    Ok(w.scale(amp))
}

#[cfg(test)]
mod tests;
