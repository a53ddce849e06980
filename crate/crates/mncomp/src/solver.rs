//! First-order engine for maximizing a smooth concave objective over box
//! bounds, linear inequalities, and optional smooth concave inequalities.
//!
//! The box is handled by projection (spectral projected gradient with a
//! monotone Armijo line search); the coupling constraints go through an
//! augmented-Lagrangian penalty whose weight escalates until the residual
//! violation falls below the tolerance. Everything is deterministic: no
//! randomness, no threads.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("objective or gradient became non-finite{}", match .coordinate {
        Some(c) => format!(" at coordinate {c}"),
        None => String::new(),
    })]
    NonFinite { coordinate: Option<usize> },
    #[error("start vector has length {got}, program dimension is {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// `a . z <= bound`, with `a` stored sparsely as `(index, coefficient)`
/// pairs.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(usize, f64)>, bound: f64) -> Self {
        LinearConstraint { terms, bound }
    }

    /// Build from a dense coefficient vector, dropping zeros.
    pub fn from_dense(coefficients: &[f64], bound: f64) -> Self {
        LinearConstraint {
            terms: coefficients
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(j, &c)| (j, c))
                .collect(),
            bound,
        }
    }

    #[inline]
    fn value(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * z[j]).sum::<f64>() - self.bound
    }
}

/// Smooth concave inequality `g(z) >= 0`; the callable returns `g(z)` and
/// writes its gradient.
pub struct SmoothConstraint<'a> {
    pub eval: Box<dyn Fn(&[f64], &mut [f64]) -> f64 + 'a>,
}

/// A box-bounded concave maximization problem with inequality couplings.
///
/// The objective callable returns the value at `z` and writes the gradient
/// into the provided buffer.
pub struct ConvexProgram<'a> {
    pub dimension: usize,
    pub objective: Box<dyn Fn(&[f64], &mut [f64]) -> f64 + 'a>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear: Vec<LinearConstraint>,
    pub smooth: Vec<SmoothConstraint<'a>>,
    /// KKT and feasibility threshold.
    pub tolerance: f64,
    /// Iteration cap for each penalized subproblem.
    pub max_inner_iterations: usize,
    /// Optional multiplier warm start (linear constraints first, then
    /// smooth ones), e.g. from a previous solve of a related program.
    pub warm_multipliers: Option<Vec<f64>>,
    /// Optional exact projector onto a simple feasible set that refines the
    /// box (it must imply the box bounds). When present it replaces box
    /// clamping in the inner iteration; constraints it enforces may still
    /// be listed in `linear` so that KKT checks see them, their penalty
    /// terms then stay inert.
    pub projector: Option<Box<dyn Fn(&mut [f64]) + 'a>>,
}

impl<'a> ConvexProgram<'a> {
    /// A program over `[lower, upper]` with no coupling constraints and
    /// default tolerances.
    pub fn boxed(
        lower: Vec<f64>,
        upper: Vec<f64>,
        objective: impl Fn(&[f64], &mut [f64]) -> f64 + 'a,
    ) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l <= u),
            "box must satisfy lower <= upper"
        );
        ConvexProgram {
            dimension: lower.len(),
            objective: Box::new(objective),
            lower,
            upper,
            linear: Vec::new(),
            smooth: Vec::new(),
            tolerance: 1e-6,
            max_inner_iterations: 5000,
            warm_multipliers: None,
            projector: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub point: Vec<f64>,
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub feasibility_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Final multiplier estimates, reusable as a warm start.
    pub multipliers: Vec<f64>,
    /// Penalized-objective value after every accepted inner step of the last
    /// subproblem (non-decreasing by construction of the line search).
    pub inner_history: Vec<f64>,
}

fn project_box(z: &mut [f64], lower: &[f64], upper: &[f64]) {
    for j in 0..z.len() {
        z[j] = z[j].clamp(lower[j], upper[j]);
    }
}

fn project_feasible(program: &ConvexProgram, z: &mut [f64]) {
    project_box(z, &program.lower, &program.upper);
    if let Some(projector) = &program.projector {
        projector(z);
    }
}

fn check_finite(value: f64, grad: &[f64]) -> Result<(), SolverError> {
    if !value.is_finite() {
        return Err(SolverError::NonFinite { coordinate: None });
    }
    if let Some(c) = grad.iter().position(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { coordinate: Some(c) });
    }
    Ok(())
}

/// State for evaluating the augmented Lagrangian
/// `L(z) = f(z) - sum_j phi(c_j(z); mu_j, rho)` and its gradient, where
/// `c_j <= 0` is the violation form of constraint `j`.
struct Augmented<'p, 'a> {
    program: &'p ConvexProgram<'a>,
    mu: Vec<f64>,
    rho: f64,
    grad_scratch: Vec<f64>,
}

impl<'p, 'a> Augmented<'p, 'a> {
    fn new(program: &'p ConvexProgram<'a>) -> Self {
        let count = program.linear.len() + program.smooth.len();
        let mu = match &program.warm_multipliers {
            Some(warm) if warm.len() == count => warm.clone(),
            _ => vec![0.0; count],
        };
        Augmented {
            program,
            mu,
            rho: 10.0,
            grad_scratch: vec![0.0; program.dimension],
        }
    }

    /// Value and gradient of the augmented Lagrangian at `z`.
    fn eval(&mut self, z: &[f64], grad: &mut [f64]) -> Result<f64, SolverError> {
        let mut value = (self.program.objective)(z, grad);
        check_finite(value, grad)?;
        for (j, lc) in self.program.linear.iter().enumerate() {
            let c = lc.value(z);
            let t = (self.mu[j] + self.rho * c).max(0.0);
            value -= (t * t - self.mu[j] * self.mu[j]) / (2.0 * self.rho);
            if t > 0.0 {
                for &(idx, a) in &lc.terms {
                    grad[idx] -= t * a;
                }
            }
        }
        for (j, sc) in self.program.smooth.iter().enumerate() {
            let mu = self.mu[self.program.linear.len() + j];
            let g_val = (sc.eval)(z, &mut self.grad_scratch);
            check_finite(g_val, &self.grad_scratch)?;
            let c = -g_val;
            let t = (mu + self.rho * c).max(0.0);
            value -= (t * t - mu * mu) / (2.0 * self.rho);
            if t > 0.0 {
                for (g, &dg) in grad.iter_mut().zip(&self.grad_scratch) {
                    *g += t * dg;
                }
            }
        }
        Ok(value)
    }

    /// Constraint violations at `z` (positive part of each `c_j`).
    fn violations(&mut self, z: &[f64]) -> Vec<f64> {
        self.constraint_values(z)
            .into_iter()
            .map(|c| c.max(0.0))
            .collect()
    }

    /// Raw `c_j(z)` values (negative when satisfied with slack).
    fn constraint_values(&mut self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.mu.len());
        for lc in &self.program.linear {
            out.push(lc.value(z));
        }
        for sc in &self.program.smooth {
            let g_val = (sc.eval)(z, &mut self.grad_scratch);
            out.push(-g_val);
        }
        out
    }

    /// Complementarity residual: for each constraint, the smaller of its
    /// multiplier and its slack. Near zero exactly when inactive
    /// constraints carry no multiplier and active ones sit on their
    /// boundary; a large value flags an interior point held by an
    /// overestimated multiplier.
    fn complementarity(&self, constraint_values: &[f64]) -> f64 {
        self.mu
            .iter()
            .zip(constraint_values)
            .map(|(&mu, &c)| mu.abs().min(c.abs()))
            .fold(0.0f64, f64::max)
    }

    fn update_multipliers(&mut self, constraint_values: &[f64]) {
        for (mu, &c) in self.mu.iter_mut().zip(constraint_values) {
            *mu = (*mu + self.rho * c).max(0.0);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Estimate per-coordinate curvature of the penalized objective by a
/// forward difference of its gradient, and return the inverse as a
/// diagonal step metric (normalized to unit median).
fn estimate_metric(aug: &mut Augmented, z: &[f64]) -> Result<Vec<f64>, SolverError> {
    let dim = aug.program.dimension;
    let mut grad0 = vec![0.0; dim];
    aug.eval(z, &mut grad0)?;
    let mut grad1 = vec![0.0; dim];
    let mut curv = vec![0.0; dim];
    let mut probe = z.to_vec();
    for j in 0..dim {
        let span = (aug.program.upper[j] - aug.program.lower[j]).max(1e-12);
        let h = 1e-4 * span;
        let base = probe[j];
        probe[j] = (base + h).min(aug.program.upper[j]);
        let step = probe[j] - base;
        if step > 0.0 {
            aug.eval(&probe, &mut grad1)?;
            curv[j] = ((grad1[j] - grad0[j]) / step).abs();
        }
        probe[j] = base;
    }
    let mut sorted: Vec<f64> = curv.iter().copied().filter(|&c| c > 0.0).collect();
    if sorted.is_empty() {
        return Ok(vec![1.0; dim]);
    }
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2].max(1e-300);
    Ok(curv
        .iter()
        .map(|&c| {
            if c > 0.0 {
                (median / c).clamp(1e-4, 1e4)
            } else {
                1.0
            }
        })
        .collect())
}

/// Spectral projected-gradient ascent of one penalized subproblem.
/// Returns `(iterations_used, history)`; `z` is updated in place.
fn spg_ascend(
    aug: &mut Augmented,
    z: &mut Vec<f64>,
    inner_tol: f64,
    metric: &[f64],
    history: &mut Vec<f64>,
) -> Result<usize, SolverError> {
    let program = aug.program;
    let dim = program.dimension;
    let mut grad = vec![0.0; dim];
    let mut value = aug.eval(z, &mut grad)?;
    history.clear();
    history.push(value);

    let mut alpha = 1.0;
    let mut z_prev = z.clone();
    let mut grad_prev = grad.clone();
    let mut trial = vec![0.0; dim];
    let mut grad_trial = vec![0.0; dim];

    let mut iterations = 0;
    let mut probe = vec![0.0; dim];
    while iterations < program.max_inner_iterations {
        // stationarity: unit-step projected gradient residual
        for j in 0..dim {
            probe[j] = z[j] + grad[j];
        }
        project_feasible(program, &mut probe);
        let mut residual = 0.0f64;
        for j in 0..dim {
            residual = residual.max((probe[j] - z[j]).abs());
        }
        if residual <= inner_tol {
            break;
        }

        // projection-arc direction at the spectral step, scaled by the
        // curvature metric
        for j in 0..dim {
            probe[j] = z[j] + alpha * metric[j] * grad[j];
        }
        project_feasible(program, &mut probe);
        let mut direction = vec![0.0; dim];
        let mut dir_dot_grad = 0.0;
        for j in 0..dim {
            direction[j] = probe[j] - z[j];
            dir_dot_grad += direction[j] * grad[j];
        }
        if dir_dot_grad <= 0.0 {
            // projection arc gave no ascent direction; fall back to a tiny step
            alpha = (alpha * 0.1).max(1e-14);
            iterations += 1;
            continue;
        }

        // monotone Armijo backtracking along the fixed direction
        let mut step = 1.0;
        let mut accepted_value = None;
        for _ in 0..60 {
            for j in 0..dim {
                trial[j] = z[j] + step * direction[j];
            }
            // convex combination of two feasible points stays feasible for
            // box and projector sets alike; clamp for arithmetic safety
            project_box(&mut trial, &program.lower, &program.upper);
            let trial_value = aug.eval(&trial, &mut grad_trial)?;
            if trial_value >= value + 1e-4 * step * dir_dot_grad {
                accepted_value = Some(trial_value);
                break;
            }
            step *= 0.5;
        }
        let Some(trial_value) = accepted_value else {
            // line search exhausted; the point is numerically stationary
            break;
        };

        z_prev.copy_from_slice(z);
        grad_prev.copy_from_slice(&grad);
        z.copy_from_slice(&trial);
        grad.copy_from_slice(&grad_trial);
        value = trial_value;
        history.push(value);

        // Barzilai-Borwein spectral step for the next round (ascent form,
        // in the metric-scaled geometry)
        let mut s_dot_s = 0.0;
        let mut s_dot_y = 0.0;
        for j in 0..dim {
            let s = z[j] - z_prev[j];
            let y = grad_prev[j] - grad[j]; // descent-form y for -L
            s_dot_s += s * s / metric[j];
            s_dot_y += s * y;
        }
        alpha = if s_dot_y > 1e-30 {
            (s_dot_s / s_dot_y).clamp(1e-12, 1e12)
        } else {
            1e6
        };
        iterations += 1;
    }
    Ok(iterations)
}

/// Maximize the program starting from `start` (projected into the box).
///
/// Returns a point whose projected-gradient KKT residual and residual
/// constraint violation are at most the program tolerance when the solve
/// succeeds; reports `Infeasible` with the certificate violation when the
/// penalty escalation cannot reach feasibility.
pub fn maximize(program: &ConvexProgram, start: &[f64]) -> Result<SolveReport, SolverError> {
    if start.len() != program.dimension {
        return Err(SolverError::DimensionMismatch {
            got: start.len(),
            want: program.dimension,
        });
    }
    let mut z = start.to_vec();
    project_feasible(program, &mut z);

    let mut aug = Augmented::new(program);
    let mut history = Vec::new();
    let mut total_iterations = 0;
    let mut best_feas = f64::INFINITY;
    let mut stalled_rounds = 0usize;

    let unconstrained = program.linear.is_empty() && program.smooth.is_empty();
    let max_rounds = if unconstrained { 1 } else { 60 };
    // drive the violation well below the reporting tolerance so that the
    // residual overshoot cannot bias the objective at the returned point
    let feas_target = program.tolerance * 1e-2;
    let mut feasible = unconstrained;
    let mut feas = 0.0;

    let trace = std::env::var_os("MNCOMP_SOLVER_TRACE").is_some();
    for round in 0..max_rounds {
        // loose subproblem accuracy early, tightening with the rounds
        let inner_tol = if unconstrained {
            program.tolerance
        } else {
            (1e-3 * 0.2f64.powi(round)).max(program.tolerance)
        };
        // the penalty weight reshapes the curvature, so refresh the metric
        let metric = estimate_metric(&mut aug, &z)?;
        let used = spg_ascend(&mut aug, &mut z, inner_tol, &metric, &mut history)?;
        total_iterations += used;
        if unconstrained {
            if trace {
                eprintln!(
                    "solver: round {round} dim {} unconstrained spg_iters {used}",
                    program.dimension
                );
            }
            feasible = true;
            break;
        }
        let values = aug.constraint_values(&z);
        feas = values.iter().fold(0.0f64, |a, &b| a.max(b.max(0.0)));
        if trace {
            let worst = values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
            eprintln!(
                "solver: round {round} dim {dim} rho {rho:.1e} spg_iters {used} tol {inner_tol:.1e} feas {feas:.2e} comp {comp:.2e} worst_c {worst}/{total}",
                dim = program.dimension,
                rho = aug.rho,
                comp = aug.complementarity(&values),
                total = values.len(),
            );
        }
        // converged when the point is feasible AND complementary slackness
        // holds; feasibility alone can hold at an interior point of an
        // over-penalized subproblem. The subproblem accuracy must have
        // reached the target before we may stop.
        if feas <= feas_target
            && inner_tol <= program.tolerance
            && aug.complementarity(&values) <= feas_target
        {
            feasible = true;
            break;
        }
        // good progress: refine the multipliers at the current weight;
        // a stall escalates the weight instead (bounded, since multiplier
        // iterations carry convergence from there). A hard stall across
        // several rounds is the infeasibility certificate.
        if feas <= 0.25 * best_feas || feas <= feas_target {
            aug.update_multipliers(&values);
            stalled_rounds = 0;
        } else {
            if feas > 0.9 * best_feas && aug.rho >= 1e7 {
                stalled_rounds += 1;
                if stalled_rounds >= 3 && feas > program.tolerance {
                    break;
                }
            } else {
                stalled_rounds = 0;
            }
            if aug.rho < 1e8 {
                aug.rho *= 10.0;
            } else {
                aug.update_multipliers(&values);
            }
        }
        best_feas = best_feas.min(feas);
    }
    feasible |= feas <= program.tolerance;

    // with only affine couplings the remaining overshoot can be removed
    // exactly by projecting onto the feasible polyhedron
    if feasible && !program.linear.is_empty() && program.smooth.is_empty() {
        let halfspaces: Vec<LinearConstraint> = program.linear.clone();
        project_intersection(&mut z, &program.lower, &program.upper, &halfspaces);
        let violations = aug.violations(&z);
        feas = violations.iter().fold(0.0f64, |a, &b| a.max(b));
    }

    let mut grad = vec![0.0; program.dimension];
    let objective_value = (program.objective)(&z, &mut grad);
    let infeasible = !feasible && feas > program.tolerance;
    let kkt_residual = if infeasible {
        f64::INFINITY
    } else {
        check_kkt(program, &z)
    };
    let status = if infeasible {
        SolveStatus::Infeasible
    } else if kkt_residual <= program.tolerance && feas <= program.tolerance {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };

    Ok(SolveReport {
        point: z,
        objective_value,
        kkt_residual,
        feasibility_violation: feas,
        iterations: total_iterations,
        status,
        multipliers: aug.mu,
        inner_history: history,
    })
}

/// Projected-gradient KKT residual at `point`: the Euclidean distance
/// between `point` and the projection of `point + grad f(point)` onto the
/// feasible set (box, halfspaces, and smooth constraints linearized at the
/// point). Zero exactly at a KKT point.
pub fn check_kkt(program: &ConvexProgram, point: &[f64]) -> f64 {
    let dim = program.dimension;
    let mut grad = vec![0.0; dim];
    let _ = (program.objective)(point, &mut grad);

    let mut target: Vec<f64> = point.iter().zip(&grad).map(|(z, g)| z + g).collect();

    // halfspaces: the program's linear constraints plus each smooth
    // constraint linearized at the evaluation point
    let mut halfspaces: Vec<LinearConstraint> = program.linear.clone();
    let mut scratch = vec![0.0; dim];
    for sc in &program.smooth {
        let g_val = (sc.eval)(point, &mut scratch);
        // g(z0) + dg . (z - z0) >= 0  ->  (-dg) . z <= g(z0) - dg . z0
        let bound = g_val - dot(&scratch, point);
        let coeffs: Vec<f64> = scratch.iter().map(|d| -d).collect();
        halfspaces.push(LinearConstraint::from_dense(&coeffs, bound));
    }

    project_intersection(&mut target, &program.lower, &program.upper, &halfspaces);
    point
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Dykstra's alternating projections onto the box and a set of halfspaces.
fn project_intersection(
    z: &mut Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    halfspaces: &[LinearConstraint],
) {
    let sets = 1 + halfspaces.len();
    let dim = z.len();
    let mut corrections = vec![vec![0.0; dim]; sets];
    let mut work = vec![0.0; dim];
    let mut before = vec![0.0; dim];

    for _sweep in 0..5000 {
        let mut change = 0.0f64;
        for (s, correction) in corrections.iter_mut().enumerate() {
            for j in 0..dim {
                work[j] = z[j] + correction[j];
            }
            before.copy_from_slice(z);
            if s == 0 {
                z.copy_from_slice(&work);
                project_box(z, lower, upper);
            } else {
                let hs = &halfspaces[s - 1];
                let norm_sq: f64 = hs.terms.iter().map(|&(_, c)| c * c).sum();
                let excess = hs.value(&work);
                z.copy_from_slice(&work);
                if norm_sq > 0.0 && excess > 0.0 {
                    let scale = excess / norm_sq;
                    for &(j, c) in &hs.terms {
                        z[j] -= scale * c;
                    }
                }
            }
            for j in 0..dim {
                correction[j] = work[j] - z[j];
                change = change.max((z[j] - before[j]).abs());
            }
        }
        if change < 1e-14 {
            break;
        }
    }
}
