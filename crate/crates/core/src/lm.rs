//! Levenberg-Marquardt for small dense least-squares problems.
//!
//! Damped Gauss-Newton with Marquardt's diagonal scaling: each trial step
//! solves `(JᵀJ + λ·diag(JᵀJ))·δ = −Jᵀr`. The damping starts at
//! [`LmConfig::initial_lambda`], is divided by [`LmConfig::lambda_factor`]
//! after an accepted step and multiplied by it after a rejected one. Only
//! steps that strictly lower the cost are accepted, so the recorded cost
//! sequence is non-increasing.
//!
//! Problems may live on a manifold: the Jacobian is taken with respect to a
//! local tangent parameterization and [`LeastSquaresProblem::retract`] maps a
//! tangent step back onto the state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    type State: Clone;

    fn residuals(&self, state: &Self::State) -> DVector<f64>;

    /// Jacobian of [`residuals`](Self::residuals) with respect to the tangent
    /// parameters at `state`.
    fn jacobian(&self, state: &Self::State) -> DMatrix<f64>;

    /// Applies a tangent-space step.
    fn retract(&self, state: &Self::State, delta: &DVector<f64>) -> Self::State;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when `‖Jᵀr‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the proposed step norm falls below this.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
    pub lambda_factor: f64,
    /// Damping beyond which the solver gives up on finding a descent step.
    pub max_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
            max_lambda: 1e16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    /// No step lowered the cost before the damping cap was reached.
    NoImprovement,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport<S> {
    pub state: S,
    /// Number of accepted steps.
    pub iterations: usize,
    /// Sum of squared residuals, starting with the initial state and
    /// appended after every accepted step.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

impl<S> LmReport<S> {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history starts non-empty")
    }
}

pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    initial: P::State,
    config: &LmConfig,
) -> Result<LmReport<P::State>> {
    let mut state = initial;
    let mut residuals = problem.residuals(&state);
    let mut cost = residuals.norm_squared();
    if !cost.is_finite() {
        return Err(Error::invalid("initial residuals are not finite"));
    }
    let mut history = vec![cost];
    let mut lambda = config.initial_lambda;
    let mut iterations = 0;

    let termination = 'outer: loop {
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        let jac = problem.jacobian(&state);
        let gradient = jac.transpose() * &residuals;
        if gradient.amax() < config.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        let jtj = jac.transpose() * &jac;
        let diag_floor = jtj.diagonal().amax().max(f64::MIN_POSITIVE) * 1e-12;
        let scaling = jtj.diagonal().map(|d| d.max(diag_floor));

        loop {
            let mut augmented = jtj.clone();
            for i in 0..augmented.nrows() {
                augmented[(i, i)] += lambda * scaling[i];
            }
            let Some(chol) = augmented.cholesky() else {
                lambda *= config.lambda_factor;
                if lambda > config.max_lambda {
                    return Err(Error::SingularNormalEquations { lambda });
                }
                continue;
            };
            let step = -chol.solve(&gradient);
            if step.norm() < config.step_tolerance {
                break 'outer Termination::StepTolerance;
            }
            let candidate = problem.retract(&state, &step);
            let candidate_residuals = problem.residuals(&candidate);
            let candidate_cost = candidate_residuals.norm_squared();
            if candidate_cost < cost {
                state = candidate;
                residuals = candidate_residuals;
                cost = candidate_cost;
                history.push(cost);
                iterations += 1;
                lambda = (lambda / config.lambda_factor).max(f64::MIN_POSITIVE);
                break;
            }
            lambda *= config.lambda_factor;
            if lambda > config.max_lambda {
                break 'outer Termination::NoImprovement;
            }
        }
    };

    Ok(LmReport {
        state,
        iterations,
        cost_history: history,
        termination,
    })
}

/// Central-difference Jacobian through [`LeastSquaresProblem::retract`].
pub fn numerical_jacobian<P: LeastSquaresProblem>(
    problem: &P,
    state: &P::State,
    tangent_dim: usize,
    step: f64,
) -> DMatrix<f64> {
    let m = problem.residuals(state).len();
    let mut jac = DMatrix::zeros(m, tangent_dim);
    for j in 0..tangent_dim {
        let mut delta = DVector::zeros(tangent_dim);
        delta[j] = step;
        let plus = problem.residuals(&problem.retract(state, &delta));
        delta[j] = -step;
        let minus = problem.residuals(&problem.retract(state, &delta));
        jac.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    jac
}
