//! Loss functions defining the shortfall-risk measure.
//!
//! A loss function here is nondecreasing, convex, and differentiable with a
//! semismooth derivative. Two families are shipped:
//!
//! * exponential: `l(x) = exp(beta * x)` with `beta > 0`;
//! * piecewise polynomial: `l(x) = max(x, 0)^eta / eta` with `eta >= 2`.
//!
//! Besides the value and first derivative, solvers need one element of the
//! Clarke subdifferential of `l'` (a "generalized second derivative") and the
//! flat-region threshold `a = sup { u : l'(u) = 0 }` (`-inf` when `l' > 0`
//! everywhere). Both families have `inf l = 0`, so any risk level
//! `lambda > 0` is admissible.

use thiserror::Error;

/// Exponent bound: `exp` arguments above this raise [`LossError::Overflow`]
/// instead of returning `inf`, which would poison Newton iterations.
pub const EXP_ARG_MAX: f64 = 700.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LossError {
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
    #[error("loss evaluation overflow at exponent argument {arg}")]
    Overflow { arg: f64 },
}

/// The shipped loss families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Exponential { beta: f64 },
    PiecewisePolynomial { eta: f64 },
}

/// A validated loss function. Immutable after construction; safe to share
/// across threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossFunction {
    kind: LossKind,
    /// Subdifferential element reported at the `eta = 2` kink, where
    /// `d l'(0) = [0, 1]`. Zero keeps generalized Jacobians equal to the
    /// identity on the inactive set; any value in `[0, 1]` is admissible and
    /// the projection output does not depend on the choice.
    kink_element: f64,
}

impl LossFunction {
    /// `l(x) = exp(beta * x)`, `beta > 0`.
    pub fn exponential(beta: f64) -> Result<Self, LossError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(LossError::InvalidParameter(format!(
                "exponential loss requires finite beta > 0, got {beta}"
            )));
        }
        Ok(LossFunction {
            kind: LossKind::Exponential { beta },
            kink_element: 0.0,
        })
    }

    /// `l(x) = max(x, 0)^eta / eta`, `eta >= 2` (below 2 the derivative is not
    /// locally Lipschitz at the kink).
    pub fn piecewise_polynomial(eta: f64) -> Result<Self, LossError> {
        if !(eta.is_finite() && eta >= 2.0) {
            return Err(LossError::InvalidParameter(format!(
                "piecewise polynomial loss requires finite eta >= 2, got {eta}"
            )));
        }
        Ok(LossFunction {
            kind: LossKind::PiecewisePolynomial { eta },
            kink_element: 0.0,
        })
    }

    /// Same loss with a different subdifferential element at the `eta = 2`
    /// kink. Test hook for the selection-invariance check.
    #[cfg(test)]
    pub(crate) fn with_kink_element(mut self, g: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&g));
        self.kink_element = g;
        self
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// `l(x)`.
    pub fn value(&self, x: f64) -> Result<f64, LossError> {
        match self.kind {
            LossKind::Exponential { beta } => exp_guarded(beta * x),
            LossKind::PiecewisePolynomial { eta } => {
                if x <= 0.0 {
                    Ok(0.0)
                } else if eta == 2.0 {
                    Ok(0.5 * x * x)
                } else {
                    Ok(x.powf(eta) / eta)
                }
            }
        }
    }

    /// `l'(x)`.
    pub fn deriv(&self, x: f64) -> Result<f64, LossError> {
        match self.kind {
            LossKind::Exponential { beta } => Ok(beta * exp_guarded(beta * x)?),
            LossKind::PiecewisePolynomial { eta } => {
                if x <= 0.0 {
                    Ok(0.0)
                } else if eta == 2.0 {
                    Ok(x)
                } else {
                    Ok(x.powf(eta - 1.0))
                }
            }
        }
    }

    /// One element of the Clarke subdifferential of `l'` at `x`. Nonnegative.
    pub fn second_deriv_element(&self, x: f64) -> Result<f64, LossError> {
        match self.kind {
            LossKind::Exponential { beta } => Ok(beta * beta * exp_guarded(beta * x)?),
            LossKind::PiecewisePolynomial { eta } => {
                if eta == 2.0 {
                    if x > 0.0 {
                        Ok(1.0)
                    } else if x < 0.0 {
                        Ok(0.0)
                    } else {
                        Ok(self.kink_element)
                    }
                } else if x <= 0.0 {
                    Ok(0.0)
                } else {
                    Ok((eta - 1.0) * x.powf(eta - 2.0))
                }
            }
        }
    }

    /// `(l(x), l'(x), d2(x))` in one evaluation; the exponential family
    /// shares a single `exp` across all three, which matters in the solver
    /// hot loops.
    pub fn value_and_derivs(&self, x: f64) -> Result<(f64, f64, f64), LossError> {
        match self.kind {
            LossKind::Exponential { beta } => {
                let v = exp_guarded(beta * x)?;
                Ok((v, beta * v, beta * beta * v))
            }
            LossKind::PiecewisePolynomial { eta } => {
                if x < 0.0 {
                    Ok((0.0, 0.0, 0.0))
                } else if x == 0.0 {
                    Ok((0.0, 0.0, if eta == 2.0 { self.kink_element } else { 0.0 }))
                } else if eta == 2.0 {
                    Ok((0.5 * x * x, x, 1.0))
                } else {
                    let p = x.powf(eta - 2.0);
                    Ok((p * x * x / eta, p * x, (eta - 1.0) * p))
                }
            }
        }
    }

    /// `a = sup { u : l'(u) = 0 }`; `-inf` when the derivative never
    /// vanishes.
    pub fn flat_threshold(&self) -> f64 {
        match self.kind {
            LossKind::Exponential { .. } => f64::NEG_INFINITY,
            LossKind::PiecewisePolynomial { .. } => 0.0,
        }
    }

    /// `inf_x l(x)`; zero for both shipped families.
    pub fn inf_value(&self) -> f64 {
        0.0
    }
}

fn exp_guarded(arg: f64) -> Result<f64, LossError> {
    if arg > EXP_ARG_MAX {
        Err(LossError::Overflow { arg })
    } else {
        Ok(arg.exp())
    }
}
