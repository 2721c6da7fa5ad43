//! Small dense semidefinite programs.
//!
//! A [`ConicProblem`] has Hermitian PSD matrix blocks, nonnegative scalar
//! variables and linear constraints of sense `=`, `<=` or `>=`. The reference
//! backend [`InteriorPoint`] converts it to real standard form and runs a
//! primal-dual path-following method.
//!
//! # Dual sign convention
//!
//! `ConicSolution::duals[i]` is the Lagrange multiplier `y_i` in
//!
//! ```text
//! L = s * objective + sum_i y_i (rhs_i - lhs_i)
//! ```
//!
//! with `s = +1` for maximization and `s = -1` for minimization. Equivalently
//! `y_i` is the derivative of the optimal value (of the maximization form)
//! with respect to `rhs_i`. Multipliers of `<=` rows are nonnegative and
//! multipliers of `>=` rows are nonpositive.
//!
//! # Infeasibility
//!
//! [`solve_sdp`] reports `Infeasible`/`Unbounded` when the iterates approach a
//! Farkas-type ray (`b'y > 0` with `A*y` nearly negative semidefinite, or a
//! primal recession direction with negative cost). [`check_feasible`] solves a
//! separate phase-1 problem that maximizes the uniform margin `t` in
//! `X - t I >= 0` (capped at 1) and classifies by the sign of the optimum.

mod dump;
mod ipm;

use crate::error::{Error, Result};
use crate::mathcore::{trace_prod, CMatrix};

pub use dump::{dump_problem, load_problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Minimize,
    Maximize,
}

/// A real linear functional `sum_b Tr(C_b X_b) + sum_k c_k s_k`.
#[derive(Clone, Debug, Default)]
pub struct LinearForm {
    pub blocks: Vec<(usize, CMatrix)>,
    pub scalars: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn block(mut self, index: usize, coef: CMatrix) -> Self {
        self.blocks.push((index, coef));
        self
    }

    pub fn scalar(mut self, index: usize, coef: f64) -> Self {
        self.scalars.push((index, coef));
        self
    }

    pub fn evaluate(&self, x: &ConicPrimal) -> f64 {
        let mut v = 0.0;
        for (b, m) in &self.blocks {
            v += trace_prod(m, &x.blocks[*b]);
        }
        for &(k, a) in &self.scalars {
            v += a * x.scalars[k];
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub form: LinearForm,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct ConicProblem {
    /// Dimension of each Hermitian PSD block.
    pub blocks: Vec<usize>,
    /// Number of nonnegative scalar variables.
    pub scalars: usize,
    pub goal: Goal,
    pub objective: LinearForm,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new(blocks: Vec<usize>, scalars: usize, goal: Goal) -> Self {
        Self {
            blocks,
            scalars,
            goal,
            objective: LinearForm::new(),
            constraints: Vec::new(),
        }
    }

    pub fn constrain(&mut self, form: LinearForm, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { form, sense, rhs });
    }

    /// Checks dimensions and Hermitian symmetry of every coefficient.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() && self.scalars == 0 {
            return Err(Error::InvalidInput("problem has no variables".into()));
        }
        let forms = std::iter::once(&self.objective).chain(self.constraints.iter().map(|c| &c.form));
        for form in forms {
            for (b, m) in &form.blocks {
                let n = *self
                    .blocks
                    .get(*b)
                    .ok_or_else(|| Error::DimensionMismatch(format!("coefficient for missing block {b}")))?;
                if m.shape() != (n, n) {
                    return Err(Error::DimensionMismatch(format!(
                        "block {b} is {n}x{n} but coefficient is {:?}",
                        m.shape()
                    )));
                }
                let asym = (m - m.adjoint()).norm();
                if asym > 1e-10 * m.norm().max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "coefficient on block {b} is not Hermitian (residual {asym:.2e})"
                    )));
                }
            }
            for &(k, a) in &form.scalars {
                if k >= self.scalars {
                    return Err(Error::DimensionMismatch(format!("coefficient for missing scalar {k}")));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidInput("non-finite scalar coefficient".into()));
                }
            }
        }
        if self.constraints.iter().any(|c| !c.rhs.is_finite()) {
            return Err(Error::InvalidInput("non-finite right-hand side".into()));
        }
        Ok(())
    }
}

/// Values of the variables of a [`ConicProblem`].
#[derive(Clone, Debug)]
pub struct ConicPrimal {
    pub blocks: Vec<CMatrix>,
    pub scalars: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: Status,
    pub primal: ConicPrimal,
    pub duals: Vec<f64>,
    pub objective_value: f64,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)` at exit.
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    /// Absolute duality gap accepted at exit.
    pub gap_abs: f64,
    /// Relative duality gap accepted at exit.
    pub gap_rel: f64,
    /// Relative primal and dual residual accepted at exit.
    pub feas_tol: f64,
    /// Centering factor used when the predictor-corrector is disabled.
    pub sigma: f64,
    pub predictor_corrector: bool,
    /// Fraction of the step to the boundary actually taken.
    pub step_fraction: f64,
    /// Margin a phase-1 point must have to count as strictly feasible.
    pub feasible_margin: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gap_abs: 1e-8,
            gap_rel: 1e-7,
            feas_tol: 1e-8,
            sigma: 0.2,
            predictor_corrector: true,
            step_fraction: 0.98,
            feasible_margin: 1e-7,
        }
    }
}

impl SdpOptions {
    /// Tighter exit used where solutions feed eigenvector extraction.
    pub fn precise() -> Self {
        Self {
            gap_abs: 1e-12,
            gap_rel: 1e-11,
            feas_tol: 1e-10,
            ..Self::default()
        }
    }
}

/// Interface for conic solvers; the in-crate interior-point method is the
/// reference implementation.
pub trait ConicBackend {
    fn solve(&self, problem: &ConicProblem) -> ConicSolution;

    /// Phase-1 feasibility with a strictly feasible point when one is found.
    fn find_feasible(&self, problem: &ConicProblem) -> (Feasibility, Option<ConicPrimal>);

    fn check_feasible(&self, problem: &ConicProblem) -> Feasibility {
        self.find_feasible(problem).0
    }
}

#[derive(Clone, Debug, Default)]
pub struct InteriorPoint {
    pub options: SdpOptions,
}

impl InteriorPoint {
    pub fn new(options: SdpOptions) -> Self {
        Self { options }
    }
}

impl ConicBackend for InteriorPoint {
    fn solve(&self, problem: &ConicProblem) -> ConicSolution {
        if problem.validate().is_err() {
            return failed_solution(problem);
        }
        ipm::solve(problem, &self.options)
    }

    fn find_feasible(&self, problem: &ConicProblem) -> (Feasibility, Option<ConicPrimal>) {
        if problem.validate().is_err() {
            return (Feasibility::Unknown, None);
        }
        ipm::phase_one(problem, &self.options)
    }
}

/// Solves with the default interior-point backend.
pub fn solve_sdp(problem: &ConicProblem) -> ConicSolution {
    InteriorPoint::default().solve(problem)
}

/// Phase-1 feasibility check with the default interior-point backend.
pub fn check_feasible(problem: &ConicProblem) -> Feasibility {
    InteriorPoint::default().check_feasible(problem)
}

pub(crate) fn failed_solution(problem: &ConicProblem) -> ConicSolution {
    ConicSolution {
        status: Status::NumericalFailure,
        primal: ConicPrimal {
            blocks: problem.blocks.iter().map(|&n| CMatrix::zeros(n, n)).collect(),
            scalars: vec![0.0; problem.scalars],
        },
        duals: vec![0.0; problem.constraints.len()],
        objective_value: f64::NAN,
        gap: f64::INFINITY,
        iterations: 0,
    }
}
