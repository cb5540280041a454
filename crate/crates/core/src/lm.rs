//! Dense Levenberg-Marquardt over residual blocks with an optional robust
//! (Huber) kernel applied per block.
//!
//! The robust kernel is folded in by iteratively reweighting: each block `e_i`
//! contributes `rho(|e_i|^2)` to the cost and is scaled by `sqrt(rho'(|e_i|^2))`
//! in the normal equations. Steps are accepted only when the true robust cost
//! decreases, so the cost sequence of accepted steps is strictly monotone.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

const MAX_DAMPING: f64 = 1e16;
const MIN_DAMPING: f64 = 1e-15;

/// Per-block loss `rho(s)` on the squared residual norm `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RobustCost {
    Squared,
    Huber { delta_px: f64 },
}

impl Default for RobustCost {
    fn default() -> Self {
        RobustCost::Huber { delta_px: 1.0 }
    }
}

impl RobustCost {
    pub fn huber(delta_px: f64) -> Result<Self> {
        if !(delta_px > 0.0 && delta_px.is_finite()) {
            return Err(CalibError::InvalidParameter(format!(
                "huber delta must be positive, got {delta_px}"
            )));
        }
        Ok(RobustCost::Huber { delta_px })
    }

    pub fn rho(&self, s: f64) -> f64 {
        match *self {
            RobustCost::Squared => s,
            RobustCost::Huber { delta_px } => {
                if s <= delta_px * delta_px {
                    s
                } else {
                    2.0 * delta_px * s.sqrt() - delta_px * delta_px
                }
            }
        }
    }

    /// `rho'(s)`.
    pub fn weight(&self, s: f64) -> f64 {
        match *self {
            RobustCost::Squared => 1.0,
            RobustCost::Huber { delta_px } => {
                if s <= delta_px * delta_px {
                    1.0
                } else {
                    delta_px / s.sqrt()
                }
            }
        }
    }
}

impl fmt::Display for RobustCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobustCost::Squared => write!(f, "squared"),
            RobustCost::Huber { delta_px } => write!(f, "huber(delta={delta_px} px)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub parameter_tolerance: f64,
    pub cost_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-12,
            parameter_tolerance: 1e-12,
            cost_tolerance: 1e-14,
            initial_damping: 1e-3,
        }
    }
}

impl LmSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && [
                self.gradient_tolerance,
                self.parameter_tolerance,
                self.cost_tolerance,
                self.initial_damping,
            ]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(CalibError::InvalidParameter(
                "LM settings must all be positive".into(),
            ))
        }
    }
}

/// A model evaluated in fixed-size residual blocks (2 for pixel residuals).
pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;

    fn block_size(&self) -> usize {
        2
    }

    /// Stacked residuals, or `None` when `params` is infeasible (a point
    /// behind the camera, for instance).
    fn residuals(&self, params: &DVector<f64>) -> Option<DVector<f64>>;

    /// Jacobian of [`residuals`](Self::residuals), evaluated at a feasible point.
    fn jacobian(&self, params: &DVector<f64>) -> DMatrix<f64>;
}

/// One attempted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmIteration {
    pub iteration: usize,
    pub cost: f64,
    pub trial_cost: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

impl fmt::Display for LmIteration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lm iter={} cost={:e} trial_cost={:e} damping={:e} step={:e} accepted={}",
            self.iteration, self.cost, self.trial_cost, self.damping, self.step_norm, self.accepted
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ZeroCost,
    GradientTolerance,
    ParameterTolerance,
    CostTolerance,
    /// No decreasing step exists at working precision.
    DampingSaturated,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub gradient_measure: f64,
    pub termination: Termination,
    pub trace: Vec<LmIteration>,
}

impl LmReport {
    /// Every accepted step lowered the cost.
    pub fn is_monotone(&self) -> bool {
        let mut last = self.initial_cost;
        for it in self.trace.iter().filter(|it| it.accepted) {
            if !(it.trial_cost < it.cost) || it.cost > last {
                return false;
            }
            last = it.trial_cost;
        }
        last == self.final_cost
    }
}

fn robust_cost(cost: &RobustCost, r: &DVector<f64>, block: usize) -> f64 {
    r.as_slice()
        .chunks(block)
        .map(|b| cost.rho(b.iter().map(|v| v * v).sum()))
        .sum()
}

/// Minimizes the robust cost starting from `x0`.
pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    x0: DVector<f64>,
    cost_fn: &RobustCost,
    settings: &LmSettings,
) -> Result<(DVector<f64>, LmReport)> {
    settings.validate()?;
    let block = problem.block_size();
    let mut x = x0;
    let mut r = problem
        .residuals(&x)
        .ok_or(CalibError::DivergedBehindCamera)?;
    let mut cost = robust_cost(cost_fn, &r, block);
    let initial_cost = cost;
    let mut lambda = settings.initial_damping;
    let mut trace = Vec::new();
    let mut gradient_measure = f64::INFINITY;

    let finish = |x: DVector<f64>, cost: f64, gm: f64, term: Termination, iters, trace| {
        Ok((
            x,
            LmReport {
                iterations: iters,
                initial_cost,
                final_cost: cost,
                gradient_measure: gm,
                termination: term,
                trace,
            },
        ))
    };

    for iteration in 0..settings.max_iterations {
        if cost == 0.0 {
            return finish(x, cost, 0.0, Termination::ZeroCost, iteration, trace);
        }
        let jac = problem.jacobian(&x);
        let (a, g) = weighted_normal_equations(&jac, &r, cost_fn, block);

        gradient_measure = scaled_gradient(&a, &g, &r, cost_fn, block);
        if gradient_measure <= settings.gradient_tolerance {
            return finish(x, cost, gradient_measure, Termination::GradientTolerance, iteration, trace);
        }

        let diag_max = a.diagonal().max();
        let floor = if diag_max > 0.0 { diag_max * 1e-12 } else { 1.0 };
        let scaling = a.diagonal().map(|d| d.max(floor));

        let mut infeasible_streak = true;
        loop {
            let mut damped = a.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * scaling[i];
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&g)));
            let step = match step {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        return finish(x, cost, gradient_measure, Termination::DampingSaturated, iteration + 1, trace);
                    }
                    continue;
                }
            };
            let step_norm = step.norm();
            let candidate = &x + &step;
            let trial = problem.residuals(&candidate);
            let trial_cost = trial
                .as_ref()
                .map(|t| robust_cost(cost_fn, t, block))
                .unwrap_or(f64::INFINITY);
            let accepted = trial_cost < cost;
            trace.push(LmIteration {
                iteration,
                cost,
                trial_cost,
                damping: lambda,
                step_norm,
                accepted,
            });

            if accepted {
                let previous = cost;
                let x_norm = x.norm();
                x = candidate;
                r = trial.expect("accepted step has residuals");
                cost = trial_cost;
                lambda = (lambda * 0.1).max(MIN_DAMPING);
                if step_norm <= settings.parameter_tolerance * (x_norm + settings.parameter_tolerance) {
                    return finish(x, cost, gradient_measure, Termination::ParameterTolerance, iteration + 1, trace);
                }
                if previous - cost <= settings.cost_tolerance * previous {
                    return finish(x, cost, gradient_measure, Termination::CostTolerance, iteration + 1, trace);
                }
                break;
            }

            infeasible_streak &= trial.is_none();
            lambda *= 10.0;
            if lambda > MAX_DAMPING {
                if infeasible_streak {
                    return Err(CalibError::DivergedBehindCamera);
                }
                return finish(x, cost, gradient_measure, Termination::DampingSaturated, iteration + 1, trace);
            }
        }
    }

    Err(CalibError::NotConverged {
        report: Box::new(LmReport {
            iterations: settings.max_iterations,
            initial_cost,
            final_cost: cost,
            gradient_measure,
            termination: Termination::MaxIterations,
            trace,
        }),
    })
}

fn block_weights(r: &DVector<f64>, cost_fn: &RobustCost, block: usize) -> Vec<f64> {
    r.as_slice()
        .chunks(block)
        .map(|b| cost_fn.weight(b.iter().map(|v| v * v).sum()))
        .collect()
}

fn weighted_normal_equations(
    jac: &DMatrix<f64>,
    r: &DVector<f64>,
    cost_fn: &RobustCost,
    block: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let weights = block_weights(r, cost_fn, block);
    let mut jw = jac.clone();
    let mut rw = r.clone();
    for (b, w) in weights.iter().enumerate() {
        let s = w.sqrt();
        for row in b * block..(b + 1) * block {
            jw.row_mut(row).scale_mut(s);
            rw[row] *= s;
        }
    }
    let jt = jw.transpose();
    (&jt * &jw, &jt * &rw)
}

/// Largest cosine between the weighted residual and a Jacobian column.
fn scaled_gradient(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    r: &DVector<f64>,
    cost_fn: &RobustCost,
    block: usize,
) -> f64 {
    let weights = block_weights(r, cost_fn, block);
    let rw_norm = r
        .as_slice()
        .chunks(block)
        .zip(&weights)
        .map(|(b, w)| w * b.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if rw_norm == 0.0 {
        return 0.0;
    }
    g.iter()
        .enumerate()
        .map(|(j, gj)| {
            let col = a[(j, j)].sqrt();
            if col == 0.0 {
                0.0
            } else {
                gj.abs() / (col * rw_norm)
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Rosenbrock as two residual blocks of size 1.
    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn num_params(&self) -> usize {
            2
        }
        fn block_size(&self) -> usize {
            1
        }
        fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]))
        }
        fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0])
        }
    }

    /// Line fit with a gross outlier, blocks of size 1.
    struct Line {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquaresProblem for Line {
        fn num_params(&self) -> usize {
            2
        }
        fn block_size(&self) -> usize {
            1
        }
        fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
            Some(DVector::from_iterator(
                self.xs.len(),
                self.xs.iter().zip(&self.ys).map(|(x, y)| p[0] * x + p[1] - y),
            ))
        }
        fn jacobian(&self, _p: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_fn(self.xs.len(), 2, |i, j| if j == 0 { self.xs[i] } else { 1.0 })
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let (x, report) = minimize(
            &Rosenbrock,
            DVector::from_vec(vec![-1.2, 1.0]),
            &RobustCost::Squared,
            &LmSettings::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-10);
        assert!(report.is_monotone());
        assert!(report.final_cost < 1e-20);
    }

    #[test]
    fn huber_resists_outlier() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        ys[7] += 500.0;
        let line = Line { xs, ys };
        let x0 = DVector::from_vec(vec![0.0, 0.0]);
        let (sq, _) = minimize(&line, x0.clone(), &RobustCost::Squared, &LmSettings::default()).unwrap();
        let (hu, report) =
            minimize(&line, x0, &RobustCost::huber(1.0).unwrap(), &LmSettings::default()).unwrap();
        assert!((hu[0] - 2.0).abs() < (sq[0] - 2.0).abs());
        assert!((hu[0] - 2.0).abs() < 0.05);
        assert!(report.is_monotone());
    }

    #[test]
    fn huber_kernel_values() {
        let h = RobustCost::huber(2.0).unwrap();
        assert_eq!(h.rho(1.0), 1.0);
        assert_eq!(h.rho(16.0), 2.0 * 2.0 * 4.0 - 4.0);
        assert_eq!(h.weight(16.0), 0.5);
        assert!(RobustCost::huber(0.0).is_err());
        // continuity at the threshold
        assert_abs_diff_eq!(h.rho(4.0 + 1e-12), h.rho(4.0), epsilon = 1e-10);
    }

    #[test]
    fn infeasible_start_is_an_error() {
        struct Never;
        impl LeastSquaresProblem for Never {
            fn num_params(&self) -> usize {
                1
            }
            fn residuals(&self, _p: &DVector<f64>) -> Option<DVector<f64>> {
                None
            }
            fn jacobian(&self, _p: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(2, 1)
            }
        }
        let err = minimize(&Never, DVector::zeros(1), &RobustCost::Squared, &LmSettings::default());
        assert!(matches!(err, Err(CalibError::DivergedBehindCamera)));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let settings = LmSettings {
            max_iterations: 2,
            ..LmSettings::default()
        };
        let err = minimize(
            &Rosenbrock,
            DVector::from_vec(vec![-1.2, 1.0]),
            &RobustCost::Squared,
            &settings,
        )
        .unwrap_err();
        match err {
            CalibError::NotConverged { report } => {
                assert_eq!(report.termination, Termination::MaxIterations);
                assert!(!report.trace.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
