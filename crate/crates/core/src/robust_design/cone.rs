//! Canonical second-order cone programs and their solution.
//!
//! A [`ConeProgram`] maximises `cᵀx` over `x ∈ ℝⁿ` subject to
//! `‖F x + g‖ ≤ dᵀx + e` and `aᵀx = b`. Solving is delegated to Clarabel's
//! homogeneous self-dual embedding interior-point method; the returned point
//! is re-checked against the original constraints before it is reported as
//! optimal.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::numerics::{RMatrix, RVector, TOLERANCES};

/// `‖F x + g‖ ≤ dᵀx + e`. An `F` with zero rows encodes the linear
/// inequality `dᵀx + e ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub f: RMatrix,
    pub g: RVector,
    pub d: RVector,
    pub e: f64,
}

impl SocConstraint {
    /// `‖F x + g‖ − (dᵀx + e)`; positive means violated.
    pub fn violation(&self, x: &RVector) -> f64 {
        let lhs = if self.f.nrows() == 0 {
            0.0
        } else {
            (&self.f * x + &self.g).norm()
        };
        lhs - (self.d.dot(x) + self.e)
    }
}

/// `aᵀx = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub a: RVector,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    pub variable_dim: usize,
    /// Maximised.
    pub objective: RVector,
    pub soc_constraints: Vec<SocConstraint>,
    pub linear_eq: Vec<LinearEquality>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSolution {
    pub x: RVector,
    pub objective_value: f64,
    pub status: ConeStatus,
    pub certified_gap: f64,
    pub iterations: u32,
}

impl ConeProgram {
    pub fn new(variable_dim: usize, objective: RVector) -> Self {
        Self {
            variable_dim,
            objective,
            soc_constraints: Vec::new(),
            linear_eq: Vec::new(),
        }
    }

    pub fn add_soc(&mut self, f: RMatrix, g: RVector, d: RVector, e: f64) {
        self.soc_constraints.push(SocConstraint { f, g, d, e });
    }

    pub fn add_eq(&mut self, a: RVector, b: f64) {
        self.linear_eq.push(LinearEquality { a, b });
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variable_dim;
        let bad = |what: &str| Err(Error::param(format!("cone program: {what}")));
        if n == 0 {
            return bad("no variables");
        }
        if self.objective.len() != n {
            return bad("objective dimension");
        }
        if !self.objective.iter().all(|v| v.is_finite()) {
            return bad("non-finite objective");
        }
        for soc in &self.soc_constraints {
            if soc.f.ncols() != n && soc.f.nrows() > 0 {
                return bad("SOC matrix column count");
            }
            if soc.g.len() != soc.f.nrows() || soc.d.len() != n {
                return bad("SOC vector dimensions");
            }
            let finite = soc.f.iter().chain(soc.g.iter()).chain(soc.d.iter()).all(|v| v.is_finite())
                && soc.e.is_finite();
            if !finite {
                return bad("non-finite SOC data");
            }
        }
        for eq in &self.linear_eq {
            if eq.a.len() != n {
                return bad("equality dimension");
            }
            if !(eq.a.iter().all(|v| v.is_finite()) && eq.b.is_finite()) {
                return bad("non-finite equality data");
            }
        }
        Ok(())
    }

    /// Largest constraint violation at `x` (SOC excess and equality residual).
    pub fn max_violation(&self, x: &RVector) -> f64 {
        let soc = self
            .soc_constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let eq = self
            .linear_eq
            .iter()
            .map(|c| (c.a.dot(x) - c.b).abs())
            .fold(0.0, f64::max);
        soc.max(eq)
    }
}

/// Solves `p` with Clarabel, converting to `min −cᵀx  s.t.  A x + s = b, s ∈ K`.
pub fn solve_cone_program(p: &ConeProgram) -> Result<ConeSolution> {
    p.validate()?;
    let n = p.variable_dim;

    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut rhs = Vec::new();
    let mut cones = Vec::new();
    let mut push_row = |coeffs: &mut dyn Iterator<Item = (usize, f64)>, row: usize| {
        for (j, v) in coeffs {
            if v != 0.0 {
                rows.push(row);
                cols.push(j);
                vals.push(v);
            }
        }
    };

    let mut m = 0;
    if !p.linear_eq.is_empty() {
        for eq in &p.linear_eq {
            push_row(&mut eq.a.iter().copied().enumerate(), m);
            rhs.push(eq.b);
            m += 1;
        }
        cones.push(SupportedConeT::ZeroConeT(p.linear_eq.len()));
    }
    for soc in &p.soc_constraints {
        // s = [dᵀx + e; F x + g] = b − A x
        push_row(&mut soc.d.iter().map(|&v| -v).enumerate(), m);
        rhs.push(soc.e);
        m += 1;
        for i in 0..soc.f.nrows() {
            push_row(&mut (0..n).map(|j| (j, -soc.f[(i, j)])), m);
            rhs.push(soc.g[i]);
            m += 1;
        }
        if soc.f.nrows() == 0 {
            cones.push(SupportedConeT::NonnegativeConeT(1));
        } else {
            cones.push(SupportedConeT::SecondOrderConeT(soc.f.nrows() + 1));
        }
    }

    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let q: Vec<f64> = p.objective.iter().map(|&c| -c).collect();
    let zero_p = CscMatrix::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(TOLERANCES.solver_max_iter)
        .tol_gap_abs(TOLERANCES.solver_gap)
        .tol_gap_rel(TOLERANCES.solver_gap)
        .max_threads(1)
        .build()
        .map_err(|e| Error::Solver(e.to_string()))?;
    let mut solver = DefaultSolver::new(&zero_p, &q, &a, &rhs, &cones, settings)
        .map_err(|e| Error::Solver(e.to_string()))?;
    solver.solve();

    let sol = &solver.solution;
    let x = RVector::from_column_slice(&sol.x);
    let objective_value = p.objective.dot(&x);
    let certified_gap = (solver.info.cost_primal - solver.info.cost_dual).abs();
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let feasible = x.iter().all(|v| v.is_finite())
                && p.max_violation(&x) < TOLERANCES.solver_certificate;
            if feasible && certified_gap < TOLERANCES.solver_certificate {
                ConeStatus::Optimal
            } else {
                ConeStatus::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConeStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConeStatus::Unbounded,
        _ => ConeStatus::NumericalFailure,
    };
    Ok(ConeSolution {
        x,
        objective_value,
        status,
        certified_gap,
        iterations: sol.iterations,
    })
}
