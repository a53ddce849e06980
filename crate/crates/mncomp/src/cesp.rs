//! Alternating subcarrier-and-power optimizer (CESP).
//!
//! The network sum rate decomposes as a difference of two concave functions
//! `T - G` of either the powers (assignment fixed) or the relaxed assignment
//! weights (powers fixed). Each half-step maximizes the concave surrogate
//! obtained by replacing the subtracted term with its tangent at the previous
//! iterate; the per-user rate constraint is relaxed the same way. The
//! assignment solve works on weights in `[0, 1]` plus a penalty `lambda`
//! that prices the distance of each weight from the binary set, ramped from
//! 0 to its configured value across the inner re-expansion steps so that the
//! relaxed point first moves freely and then snaps to (near-)binary values.
//!
//! Conventions used throughout:
//! - During the assignment solve the power of a subcarrier follows the
//!   subcarrier, not the incumbent user: any user may be handed a powered
//!   slot. The cross-numerology leakage (INI) is held at the incumbent
//!   attribution for the duration of that solve, which keeps the model
//!   affine in the weights; it is re-evaluated once the new binary
//!   assignment is fixed.
//! - Power lives only on assigned slots; unassigned entries are structural
//!   zeros, not variables.

use std::cell::RefCell;
use thiserror::Error;

use crate::association::EligibilityMask;
use crate::baselines;
use crate::channel::ChannelTensor;
use crate::phy::{self, AssignMode, AssignTensor, PowerAlloc};
use crate::scenario::{NumerologyGrid, ScenarioConfig};
use crate::solver::{
    maximize, ConvexProgram, LinearConstraint, SmoothConstraint, SolveStatus, SolverError,
};
use crate::tensor::GridTensor;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum CespError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("infeasible sub-problem: {diagnostic}")]
    Infeasible { diagnostic: String },
}

/// Outer-loop termination state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::Converged => write!(f, "converged"),
            RunStatus::MaxIter => write!(f, "max_iter"),
            RunStatus::Infeasible => write!(f, "infeasible"),
        }
    }
}

/// One row of the outer-loop trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Outer iteration number, starting at 1.
    pub t: usize,
    /// Network sum rate of the binary iterate, b/s/Hz.
    pub sum_rate: f64,
    /// Worst residual violation across budget (W), rate requirement
    /// (b/s/Hz) and latency requirement (ms) at this iterate.
    pub max_violation: f64,
    /// Pre-rounding distance of the relaxed assignment from binary.
    pub near_binariness: f64,
    /// Users whose rate constraint had to be dropped this iteration.
    pub dropped_qos_users: Vec<usize>,
    /// True when a half-step was rejected in favor of the previous iterate.
    pub guarded: bool,
}

/// Result of a full alternating run.
#[derive(Debug, Clone)]
pub struct CespSolution {
    pub power: PowerAlloc,
    pub assignment: AssignTensor,
    pub history: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Final sum rate, b/s/Hz (equals the last history entry).
    pub sum_rate: f64,
}

impl CespSolution {
    /// Per-iteration sum rates.
    pub fn rate_trace(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.sum_rate).collect()
    }
}

// ---------------------------------------------------------------------------
// Shared precomputation

/// Cross-numerology leakage coefficients, tabulated per target numerology,
/// target subcarrier, and source subcarrier.
#[derive(Debug, Clone)]
struct KernelTable {
    table: Vec<Vec<Vec<f64>>>,
}

impl KernelTable {
    fn new(grid: &NumerologyGrid) -> Self {
        let mut table = Vec::new();
        if grid.count() == 2 {
            for i in 0..2 {
                let source = 1 - i;
                let rows = (0..grid.subcarriers(i))
                    .map(|n| {
                        (0..grid.subcarriers(source))
                            .map(|v| phy::ini_coupling(grid, i, n, v))
                            .collect()
                    })
                    .collect();
                table.push(rows);
            }
        }
        KernelTable { table }
    }

    #[inline]
    fn get(&self, i: usize, n: usize, v: usize) -> f64 {
        self.table[i][n][v]
    }

    fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Per-subcarrier powers `q[k, i, n]` (user axis collapsed). During the
/// assignment solve the power of a slot is available to whichever user the
/// slot is handed to.
#[derive(Debug, Clone)]
pub struct SlotPowers {
    t: GridTensor,
}

impl SlotPowers {
    /// Collapse an attributed power tensor onto its slots.
    pub fn from_power(p: &PowerAlloc) -> Self {
        let src = p.tensor();
        let mut t = GridTensor::zeros(src.num_bs(), 1, &grid_shape_of(src));
        for (k, m, i, n) in src.indices() {
            t.add(k, 0, i, n, p.get(k, m, i, n));
        }
        SlotPowers { t }
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, n: usize) -> f64 {
        self.t.get(k, 0, i, n)
    }

    /// Distribute the slot powers onto the users selected by a binary
    /// assignment; unassigned slots lose their power.
    pub fn attribute(&self, x: &AssignTensor, grid: &NumerologyGrid) -> PowerAlloc {
        let shape = x.tensor();
        let mut p = PowerAlloc::zeros(shape.num_bs(), shape.num_users(), grid);
        for (k, i, n) in shape.slots() {
            if let Some(m) = x.assigned_user(k, i, n) {
                p.set(k, m, i, n, self.get(k, i, n));
            }
        }
        p
    }
}

/// A grid with the same per-numerology subcarrier layout as `src`, for
/// shaping work tensors (latencies and spacings are placeholders).
fn grid_shape_of(src: &GridTensor) -> NumerologyGrid {
    let specs: Vec<crate::scenario::NumerologySpec> = (0..src.num_numerologies())
        .map(|i| crate::scenario::NumerologySpec {
            mu: i as u8,
            subcarriers: src.subcarriers(i),
            symbol_latency_ms: 1.0,
        })
        .collect();
    NumerologyGrid::new(specs).expect("shape grid")
}

/// Greedy initial assignment: every `(k, i, n)` slot goes to the eligible
/// user with the strongest channel on it (ties to the lowest user index),
/// followed by a service and latency repair so the starting point respects
/// the per-user constraints that the alternation must preserve.
/// Slots of a BS with no eligible user stay empty.
pub fn initial_assignment(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
) -> AssignTensor {
    let mut x = AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Binary);
    for k in 0..config.num_bs {
        for i in 0..config.grid.count() {
            for n in 0..config.grid.subcarriers(i) {
                let mut best: Option<(usize, f64)> = None;
                for m in 0..config.num_users {
                    if !mask.is_eligible(k, m) {
                        continue;
                    }
                    let gain = h.gain_sq(k, m, i, n);
                    if best.map_or(true, |(_, g)| gain > g) {
                        best = Some((m, gain));
                    }
                }
                if let Some((m, _)) = best {
                    x.set(k, m, i, n, 1.0);
                }
            }
        }
    }
    // repairs score slots by what equal power spreading would deliver
    let q = SlotPowers::from_power(&baselines::epa(&x, config));
    repair_service(&mut x, &q, h, mask, config);
    repair_latency(&mut x, &q, config);
    x
}

#[derive(Clone)]
struct PsiTables {
    psi1: GridTensor,
    psi2: GridTensor,
}

/// Memo for the last evaluation point: the objective and every rate
/// constraint are evaluated at the same iterate within one solver sweep.
type TableCache = RefCell<Option<(Vec<f64>, PsiTables)>>;

fn sum_log2(t: &GridTensor) -> f64 {
    t.as_slice().iter().map(|&v| v.log2()).sum()
}

// ---------------------------------------------------------------------------
// Power-allocation surrogate

/// Cached state for the power sub-problem surrogate, expanded at a previous
/// power iterate with the assignment held fixed.
pub struct PaSurrogate<'a> {
    config: &'a ScenarioConfig,
    h: &'a ChannelTensor,
    x: &'a AssignTensor,
    kernels: KernelTable,
    noise: f64,
    /// `sum_{j != k} x |h|^2` per (k, m, i, n); fixed while x is fixed.
    neighbor: GridTensor,
    /// Value of the subtracted concave term at the expansion point.
    g_taylor_value: f64,
    /// Its gradient there (constant across the solve).
    g_taylor_grad: GridTensor,
    taylor_point: PowerAlloc,
    /// Per-user caches for the rate-constraint surrogate.
    qos_value: Vec<f64>,
    qos_grad: Vec<GridTensor>,
    tables_cache: TableCache,
}

impl<'a> PaSurrogate<'a> {
    pub fn new(
        config: &'a ScenarioConfig,
        h: &'a ChannelTensor,
        x: &'a AssignTensor,
        p_taylor: &PowerAlloc,
    ) -> Self {
        let kernels = KernelTable::new(&config.grid);
        let noise = config.noise_w();
        let mut neighbor = GridTensor::zeros(config.num_bs, config.num_users, &config.grid);
        let index_list: Vec<_> = neighbor.indices().collect();
        for (k, m, i, n) in index_list {
            neighbor.set(k, m, i, n, phy::neighbor_gain(x, h, k, m, i, n));
        }
        let mut s = PaSurrogate {
            config,
            h,
            x,
            kernels,
            noise,
            neighbor,
            g_taylor_value: 0.0,
            g_taylor_grad: GridTensor::zeros(config.num_bs, config.num_users, &config.grid),
            taylor_point: p_taylor.clone(),
            qos_value: vec![0.0; config.num_users],
            qos_grad: Vec::new(),
            tables_cache: RefCell::new(None),
        };
        let tables = s.psi_tables(p_taylor);
        s.g_taylor_value = sum_log2(&tables.psi2);
        s.g_taylor_grad = s.scatter_grad(&tables, false);
        for m in 0..config.num_users {
            let (v, g) = s.user_log_psi_and_grad(&tables, m, false);
            s.qos_value[m] = v;
            s.qos_grad.push(g);
        }
        s
    }

    pub fn taylor_point(&self) -> &PowerAlloc {
        &self.taylor_point
    }

    fn psi_tables(&self, p: &PowerAlloc) -> PsiTables {
        let shape = p.tensor();
        let mut psi1 = GridTensor::zeros(shape.num_bs(), shape.num_users(), &self.config.grid);
        let mut psi2 = psi1.clone();
        for (k, m, i, n) in shape.indices() {
            let ini = self.ini_of(p, k, m, i, n);
            let mut ici = 0.0;
            for kp in 0..shape.num_bs() {
                if kp == k {
                    continue;
                }
                for mp in 0..shape.num_users() {
                    if mp == m {
                        continue;
                    }
                    ici += p.get(kp, mp, i, n) * self.x.get(kp, mp, i, n) * self.h.gain_sq(kp, mp, i, n);
                }
            }
            let floor = self.neighbor.get(k, m, i, n) * ini + ici + self.noise;
            let mut signal = 0.0;
            for kp in 0..shape.num_bs() {
                signal += p.get(kp, m, i, n) * self.x.get(kp, m, i, n) * self.h.gain_sq(kp, m, i, n);
            }
            debug_assert!(floor > 0.0, "interference floor must stay positive");
            psi2.set(k, m, i, n, floor);
            psi1.set(k, m, i, n, signal + floor);
        }
        PsiTables { psi1, psi2 }
    }

    fn ini_of(&self, p: &PowerAlloc, k: usize, m: usize, i: usize, n: usize) -> f64 {
        if self.kernels.is_empty() {
            return 0.0;
        }
        let other = 1 - i;
        let mut total = 0.0;
        for v in 0..self.config.grid.subcarriers(other) {
            total += self.kernels.get(i, n, v) * p.get(k, m, other, v);
        }
        total
    }

    /// Gradient of `sum log2 psi1` (`with_signal`) or `sum log2 psi2` with
    /// respect to every power entry.
    fn scatter_grad(&self, tables: &PsiTables, with_signal: bool) -> GridTensor {
        let psi = if with_signal { &tables.psi1 } else { &tables.psi2 };
        let mut grad = GridTensor::zeros(psi.num_bs(), psi.num_users(), &self.config.grid);
        for (k, m, i, n) in psi.indices() {
            let w = 1.0 / (psi.get(k, m, i, n) * LN2);
            self.scatter_one(&mut grad, w, k, m, i, n, with_signal);
        }
        grad
    }

    /// Accumulate the partials of `log2 psi[k,m,i,n]` into `grad`.
    fn scatter_one(
        &self,
        grad: &mut GridTensor,
        w: f64,
        k: usize,
        m: usize,
        i: usize,
        n: usize,
        with_signal: bool,
    ) {
        // leakage channel: powers of (k, m) on the other numerology
        if !self.kernels.is_empty() {
            let a = self.neighbor.get(k, m, i, n);
            if a > 0.0 {
                let other = 1 - i;
                for v in 0..self.config.grid.subcarriers(other) {
                    grad.add(k, m, other, v, w * a * self.kernels.get(i, n, v));
                }
            }
        }
        // co-channel channel: assigned powers of other cells and users
        for kp in 0..grad.num_bs() {
            if kp == k {
                continue;
            }
            for mp in 0..grad.num_users() {
                if mp == m {
                    continue;
                }
                let xv = self.x.get(kp, mp, i, n);
                if xv > 0.0 {
                    grad.add(kp, mp, i, n, w * xv * self.h.gain_sq(kp, mp, i, n));
                }
            }
        }
        // serving-signal channel
        if with_signal {
            for kp in 0..grad.num_bs() {
                let xv = self.x.get(kp, m, i, n);
                if xv > 0.0 {
                    grad.add(kp, m, i, n, w * xv * self.h.gain_sq(kp, m, i, n));
                }
            }
        }
    }

    /// `sum_{k,i,n} log2 psi` restricted to user `m`, with its gradient.
    fn user_log_psi_and_grad(&self, tables: &PsiTables, m: usize, with_signal: bool) -> (f64, GridTensor) {
        let psi = if with_signal { &tables.psi1 } else { &tables.psi2 };
        let mut value = 0.0;
        let mut grad = GridTensor::zeros(psi.num_bs(), psi.num_users(), &self.config.grid);
        for k in 0..psi.num_bs() {
            for i in 0..self.config.grid.count() {
                for n in 0..self.config.grid.subcarriers(i) {
                    let pv = psi.get(k, m, i, n);
                    value += pv.log2();
                    let w = 1.0 / (pv * LN2);
                    self.scatter_one(&mut grad, w, k, m, i, n, with_signal);
                }
            }
        }
        (value, grad)
    }

    /// Run `f` against the psi tables for `p`, memoizing the last
    /// evaluation point (the objective and every rate constraint are
    /// evaluated at the same iterate within one solver sweep).
    fn with_tables<R>(&self, p: &PowerAlloc, f: impl FnOnce(&PsiTables) -> R) -> R {
        let key = p.tensor().as_slice();
        {
            let cache = self.tables_cache.borrow();
            if let Some((k, tables)) = cache.as_ref() {
                if k == key {
                    return f(tables);
                }
            }
        }
        let tables = self.psi_tables(p);
        let mut cache = self.tables_cache.borrow_mut();
        *cache = Some((key.to_vec(), tables));
        f(&cache.as_ref().unwrap().1)
    }

    /// Surrogate objective `T(P) - Ghat(P)` and its exact gradient.
    ///
    /// At the expansion point the value equals the true sum rate; everywhere
    /// else it bounds the true sum rate from below.
    pub fn objective_and_grad(&self, p: &PowerAlloc) -> (f64, GridTensor) {
        let (tables_t, grad0) = self.with_tables(p, |tables| {
            (sum_log2(&tables.psi1), self.scatter_grad(tables, true))
        });
        let t_value = tables_t;
        let mut g_hat = self.g_taylor_value;
        for (idx, (pv, tv)) in p
            .tensor()
            .as_slice()
            .iter()
            .zip(self.taylor_point.tensor().as_slice())
            .enumerate()
        {
            g_hat += self.g_taylor_grad.as_slice()[idx] * (pv - tv);
        }
        let mut grad = grad0;
        for (g, &c) in grad.as_mut_slice().iter_mut().zip(self.g_taylor_grad.as_slice()) {
            *g -= c;
        }
        (t_value - g_hat, grad)
    }

    /// Linearized rate-constraint surrogate of user `m`:
    /// `sum log2 psi1_m - Ghat2_m(P)`, a concave lower bound of the user's
    /// true rate, together with its gradient.
    pub fn qos_and_grad(&self, p: &PowerAlloc, m: usize) -> (f64, GridTensor) {
        let (t_m, mut grad) =
            self.with_tables(p, |tables| self.user_log_psi_and_grad(tables, m, true));
        let mut g_hat = self.qos_value[m];
        for (idx, (pv, tv)) in p
            .tensor()
            .as_slice()
            .iter()
            .zip(self.taylor_point.tensor().as_slice())
            .enumerate()
        {
            g_hat += self.qos_grad[m].as_slice()[idx] * (pv - tv);
        }
        for (g, &c) in grad.as_mut_slice().iter_mut().zip(self.qos_grad[m].as_slice()) {
            *g -= c;
        }
        (t_m - g_hat, grad)
    }
}

/// Outcome of one power half-step.
pub struct PaOutcome {
    pub power: PowerAlloc,
    pub dropped_qos_users: Vec<usize>,
    pub solve_status: SolveStatus,
}

/// Maximize the power surrogate for a fixed binary assignment, re-expanding
/// the surrogate at each new iterate until the value stalls.
///
/// Variables are the powers of assigned slots, boxed by the per-subcarrier
/// cap, budgeted per BS, and constrained by the linearized per-user rate
/// requirement. When the rate constraints cannot all be met they are
/// dropped for the worst-violating users one at a time; the dropped users
/// are reported.
pub fn solve_pa(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    x: &AssignTensor,
    p_prev: &PowerAlloc,
) -> Result<PaOutcome, CespError> {
    debug_assert_eq!(x.mode(), AssignMode::Binary);
    let stall = 0.01 * config.convergence_threshold;
    let mut current = p_prev.clone();
    let mut outcome = solve_pa_once(config, h, x, &current)?;
    let noise = config.noise_w();
    let mut value = phy::sum_rate(&outcome.power, x, h, &config.grid, noise);
    for _ in 1..8 {
        current = outcome.power.clone();
        let next = solve_pa_once(config, h, x, &current)?;
        let next_value = phy::sum_rate(&next.power, x, h, &config.grid, noise);
        if next_value > value {
            outcome = next;
        }
        if next_value - value <= stall {
            break;
        }
        value = next_value;
    }
    Ok(outcome)
}

fn solve_pa_once(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    x: &AssignTensor,
    p_prev: &PowerAlloc,
) -> Result<PaOutcome, CespError> {
    let surrogate = PaSurrogate::new(config, h, x, p_prev);

    // assigned slots are the optimization variables
    let mut slots: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (k, i, n) in x.tensor().slots() {
        if let Some(m) = x.assigned_user(k, i, n) {
            slots.push((k, m, i, n));
        }
    }
    if slots.is_empty() {
        return Ok(PaOutcome {
            power: PowerAlloc::zeros(config.num_bs, config.num_users, &config.grid),
            dropped_qos_users: Vec::new(),
            solve_status: SolveStatus::Optimal,
        });
    }

    let slots_ref: &[(usize, usize, usize, usize)] = &slots;
    let to_tensor = move |z: &[f64]| -> PowerAlloc {
        let mut p = PowerAlloc::zeros(config.num_bs, config.num_users, &config.grid);
        for (s, &(k, m, i, n)) in slots_ref.iter().enumerate() {
            p.set(k, m, i, n, z[s].max(0.0));
        }
        p
    };
    let start: Vec<f64> = slots
        .iter()
        .map(|&(k, m, i, n)| p_prev.get(k, m, i, n))
        .collect();

    let cap = config.subcarrier_cap_w();
    // a user with no assigned slot has zero rate whatever the powers do,
    // so its rate constraint is structurally infeasible here
    let served: Vec<bool> = {
        let mut served = vec![false; config.num_users];
        for &(_, m, _, _) in &slots {
            served[m] = true;
        }
        served
    };
    let mut active_qos: Vec<usize> = (0..config.num_users)
        .filter(|&m| config.rate_req[m] > 0.0 && served[m])
        .collect();
    let mut dropped: Vec<usize> = (0..config.num_users)
        .filter(|&m| config.rate_req[m] > 0.0 && !served[m])
        .collect();
    let mut warm = start.clone();

    loop {
        let dim = slots.len();
        let mut program = ConvexProgram::boxed(vec![0.0; dim], vec![cap; dim], |z, grad| {
            let p = to_tensor(z);
            let (value, grad_tensor) = surrogate.objective_and_grad(&p);
            for (s, &(k, m, i, n)) in slots.iter().enumerate() {
                grad[s] = grad_tensor.get(k, m, i, n);
            }
            value
        });
        program.tolerance = 1e-4;
        program.max_inner_iterations = 1500;
        for k in 0..config.num_bs {
            let terms: Vec<(usize, f64)> = slots
                .iter()
                .enumerate()
                .filter(|(_, &(sk, _, _, _))| sk == k)
                .map(|(s, _)| (s, 1.0))
                .collect();
            if !terms.is_empty() {
                program
                    .linear
                    .push(LinearConstraint::new(terms, config.bs_cap_w(k)));
            }
        }
        for &m in &active_qos {
            let req = config.rate_req[m];
            let surrogate_ref = &surrogate;
            program.smooth.push(SmoothConstraint {
                eval: Box::new(move |z, grad| {
                    let p = to_tensor(z);
                    let (value, grad_tensor) = surrogate_ref.qos_and_grad(&p, m);
                    for (s, &(k, mm, i, n)) in slots_ref.iter().enumerate() {
                        grad[s] = grad_tensor.get(k, mm, i, n);
                    }
                    value - req
                }),
            });
        }

        let report = maximize(&program, &warm)?;
        if report.status != SolveStatus::Infeasible || active_qos.is_empty() {
            let power = to_tensor(&report.point);
            return Ok(PaOutcome {
                power,
                dropped_qos_users: dropped,
                solve_status: report.status,
            });
        }
        // drop the worst-violating rate constraint and retry from the
        // point reached so far; if a non-rate constraint is the blocker,
        // dropping users cannot help
        warm = report.point.clone();
        let p_at = to_tensor(&report.point);
        let (worst, violation) = active_qos
            .iter()
            .map(|&m| (m, config.rate_req[m] - surrogate.qos_and_grad(&p_at, m).0))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty active set");
        if violation < 0.5 * report.feasibility_violation {
            let power = to_tensor(&report.point);
            return Ok(PaOutcome {
                power,
                dropped_qos_users: dropped,
                solve_status: report.status,
            });
        }
        active_qos.retain(|&m| m != worst);
        dropped.push(worst);
    }
}

// ---------------------------------------------------------------------------
// Subcarrier-assignment surrogate

/// Cached state for the assignment sub-problem surrogate at a fixed power
/// allocation and a given expansion point.
pub struct SaSurrogate<'a> {
    config: &'a ScenarioConfig,
    h: &'a ChannelTensor,
    /// Slot powers: what a user would receive on each slot.
    q: SlotPowers,
    /// Leakage per (k, m, i, n), frozen at the incumbent attribution.
    ini: GridTensor,
    noise: f64,
    lambda: f64,
    taylor_point: AssignTensor,
    /// Subtracted-term value and gradient at the expansion point.
    e2_taylor_value: f64,
    e2_taylor_grad: GridTensor,
    /// Per-user caches for the rate-constraint surrogate.
    qos_value: Vec<f64>,
    qos_grad: Vec<GridTensor>,
    tables_cache: TableCache,
}

impl<'a> SaSurrogate<'a> {
    pub fn new(
        config: &'a ScenarioConfig,
        h: &'a ChannelTensor,
        p: &PowerAlloc,
        x_taylor: &AssignTensor,
        lambda: f64,
    ) -> Self {
        let kernels = KernelTable::new(&config.grid);
        let mut ini = GridTensor::zeros(config.num_bs, config.num_users, &config.grid);
        if !kernels.is_empty() {
            let index_list: Vec<_> = ini.indices().collect();
            for (k, m, i, n) in index_list {
                let other = 1 - i;
                let mut total = 0.0;
                for v in 0..config.grid.subcarriers(other) {
                    total += kernels.get(i, n, v) * p.get(k, m, other, v);
                }
                ini.set(k, m, i, n, total);
            }
        }
        let mut s = SaSurrogate {
            config,
            h,
            q: SlotPowers::from_power(p),
            ini,
            noise: config.noise_w(),
            lambda,
            taylor_point: x_taylor.clone(),
            e2_taylor_value: 0.0,
            e2_taylor_grad: GridTensor::zeros(config.num_bs, config.num_users, &config.grid),
            qos_value: vec![0.0; config.num_users],
            qos_grad: Vec::new(),
            tables_cache: RefCell::new(None),
        };
        let tables = s.psi_tables(x_taylor);
        let g_value = sum_log2(&tables.psi2);
        let sq_sum: f64 = x_taylor.tensor().as_slice().iter().map(|&v| v * v).sum();
        s.e2_taylor_value = g_value - lambda * sq_sum;
        let mut grad = s.scatter_grad(&tables, false);
        for (g, &xv) in grad.as_mut_slice().iter_mut().zip(x_taylor.tensor().as_slice()) {
            *g -= 2.0 * lambda * xv;
        }
        s.e2_taylor_grad = grad;
        for m in 0..config.num_users {
            let (v, g) = s.user_log_psi_and_grad(&tables, m, false);
            s.qos_value[m] = v;
            s.qos_grad.push(g);
        }
        s
    }

    pub fn taylor_point(&self) -> &AssignTensor {
        &self.taylor_point
    }

    pub fn slot_powers(&self) -> &SlotPowers {
        &self.q
    }

    fn psi_tables(&self, x: &AssignTensor) -> PsiTables {
        let shape = x.tensor();
        let mut psi1 = GridTensor::zeros(shape.num_bs(), shape.num_users(), &self.config.grid);
        let mut psi2 = psi1.clone();
        for (k, m, i, n) in shape.indices() {
            let mut neighbor = 0.0;
            for j in 0..shape.num_bs() {
                if j != k {
                    neighbor += x.get(j, m, i, n) * self.h.gain_sq(j, m, i, n);
                }
            }
            let mut ici = 0.0;
            for kp in 0..shape.num_bs() {
                if kp == k {
                    continue;
                }
                let qv = self.q.get(kp, i, n);
                if qv == 0.0 {
                    continue;
                }
                for mp in 0..shape.num_users() {
                    if mp == m {
                        continue;
                    }
                    ici += qv * x.get(kp, mp, i, n) * self.h.gain_sq(kp, mp, i, n);
                }
            }
            let floor = neighbor * self.ini.get(k, m, i, n) + ici + self.noise;
            let mut signal = 0.0;
            for kp in 0..shape.num_bs() {
                signal += self.q.get(kp, i, n) * x.get(kp, m, i, n) * self.h.gain_sq(kp, m, i, n);
            }
            psi2.set(k, m, i, n, floor);
            psi1.set(k, m, i, n, signal + floor);
        }
        PsiTables { psi1, psi2 }
    }

    fn scatter_grad(&self, tables: &PsiTables, with_signal: bool) -> GridTensor {
        let psi = if with_signal { &tables.psi1 } else { &tables.psi2 };
        let mut grad = GridTensor::zeros(psi.num_bs(), psi.num_users(), &self.config.grid);
        for (k, m, i, n) in psi.indices() {
            let w = 1.0 / (psi.get(k, m, i, n) * LN2);
            self.scatter_one(&mut grad, w, k, m, i, n, with_signal);
        }
        grad
    }

    fn scatter_one(
        &self,
        grad: &mut GridTensor,
        w: f64,
        k: usize,
        m: usize,
        i: usize,
        n: usize,
        with_signal: bool,
    ) {
        let ini = self.ini.get(k, m, i, n);
        for kp in 0..grad.num_bs() {
            if kp == k {
                continue;
            }
            // neighbor-gain factor multiplying the frozen leakage
            if ini > 0.0 {
                grad.add(kp, m, i, n, w * self.h.gain_sq(kp, m, i, n) * ini);
            }
            // co-channel interference from other users of other cells
            let qv = self.q.get(kp, i, n);
            if qv > 0.0 {
                for mp in 0..grad.num_users() {
                    if mp == m {
                        continue;
                    }
                    grad.add(kp, mp, i, n, w * qv * self.h.gain_sq(kp, mp, i, n));
                }
            }
        }
        if with_signal {
            for kp in 0..grad.num_bs() {
                let qv = self.q.get(kp, i, n);
                if qv > 0.0 {
                    grad.add(kp, m, i, n, w * qv * self.h.gain_sq(kp, m, i, n));
                }
            }
        }
    }

    fn user_log_psi_and_grad(&self, tables: &PsiTables, m: usize, with_signal: bool) -> (f64, GridTensor) {
        let psi = if with_signal { &tables.psi1 } else { &tables.psi2 };
        let mut value = 0.0;
        let mut grad = GridTensor::zeros(psi.num_bs(), psi.num_users(), &self.config.grid);
        for k in 0..psi.num_bs() {
            for i in 0..self.config.grid.count() {
                for n in 0..self.config.grid.subcarriers(i) {
                    let pv = psi.get(k, m, i, n);
                    value += pv.log2();
                    let w = 1.0 / (pv * LN2);
                    self.scatter_one(&mut grad, w, k, m, i, n, with_signal);
                }
            }
        }
        (value, grad)
    }

    /// True penalized objective (no expansion): sum rate of the
    /// weight-substituted model minus `lambda * sum(x - x^2)`.
    pub fn exact_objective(&self, x: &AssignTensor) -> f64 {
        let tables = self.psi_tables(x);
        let t = sum_log2(&tables.psi1);
        let g = sum_log2(&tables.psi2);
        let penalty: f64 = x.tensor().as_slice().iter().map(|&v| v - v * v).sum();
        t - g - self.lambda * penalty
    }

    /// Sum rate of the weight-substituted model with frozen leakage.
    pub fn relaxed_sum_rate(&self, x: &AssignTensor) -> f64 {
        let tables = self.psi_tables(x);
        sum_log2(&tables.psi1) - sum_log2(&tables.psi2)
    }

    /// Run `f` against the psi tables for `x`, memoizing the last
    /// evaluation point.
    fn with_tables<R>(&self, x: &AssignTensor, f: impl FnOnce(&PsiTables) -> R) -> R {
        let key = x.tensor().as_slice();
        {
            let cache = self.tables_cache.borrow();
            if let Some((k, tables)) = cache.as_ref() {
                if k == key {
                    return f(tables);
                }
            }
        }
        let tables = self.psi_tables(x);
        let mut cache = self.tables_cache.borrow_mut();
        *cache = Some((key.to_vec(), tables));
        f(&cache.as_ref().unwrap().1)
    }

    /// Surrogate objective `E1(x) - E2hat(x)` and its exact gradient.
    pub fn objective_and_grad(&self, x: &AssignTensor) -> (f64, GridTensor) {
        let (t, grad0) = self.with_tables(x, |tables| {
            (sum_log2(&tables.psi1), self.scatter_grad(tables, true))
        });
        let lin_sum: f64 = x.tensor().as_slice().iter().sum();
        let e1 = t - self.lambda * lin_sum;
        let mut e2_hat = self.e2_taylor_value;
        for (idx, (xv, tv)) in x
            .tensor()
            .as_slice()
            .iter()
            .zip(self.taylor_point.tensor().as_slice())
            .enumerate()
        {
            e2_hat += self.e2_taylor_grad.as_slice()[idx] * (xv - tv);
        }
        let mut grad = grad0;
        for (idx, g) in grad.as_mut_slice().iter_mut().enumerate() {
            *g -= self.lambda + self.e2_taylor_grad.as_slice()[idx];
        }
        (e1 - e2_hat, grad)
    }

    /// Linearized rate-constraint surrogate of user `m` and its gradient.
    pub fn qos_and_grad(&self, x: &AssignTensor, m: usize) -> (f64, GridTensor) {
        let (t_m, mut grad) =
            self.with_tables(x, |tables| self.user_log_psi_and_grad(tables, m, true));
        let mut g_hat = self.qos_value[m];
        for (idx, (xv, tv)) in x
            .tensor()
            .as_slice()
            .iter()
            .zip(self.taylor_point.tensor().as_slice())
            .enumerate()
        {
            g_hat += self.qos_grad[m].as_slice()[idx] * (xv - tv);
        }
        for (g, &c) in grad.as_mut_slice().iter_mut().zip(self.qos_grad[m].as_slice()) {
            *g -= c;
        }
        (t_m - g_hat, grad)
    }
}

/// Outcome of one assignment half-step.
pub struct SaOutcome {
    /// Rounded, repaired binary assignment.
    pub assignment: AssignTensor,
    /// The relaxed weights before rounding.
    pub relaxed: AssignTensor,
    /// Distance of the relaxed point from binary (max over entries).
    pub near_binariness: f64,
    /// Power re-attributed to the new assignment (budget-repaired).
    pub power: PowerAlloc,
    pub dropped_qos_users: Vec<usize>,
    pub dropped_latency_users: Vec<usize>,
    pub solve_status: SolveStatus,
}

/// Solve the relaxed assignment surrogate, then round and repair.
///
/// The relaxed solve runs `config.inner_sca_repeats` surrogate expansions
/// with the binarization penalty ramped quadratically from 0 up to
/// `lambda_max`; each expansion point is the previous relaxed solution.
/// Rounding assigns each slot to its heaviest user when that weight reaches
/// 0.5, clears CoMP-gating violations, and rescales powers if a budget is
/// exceeded.
pub fn solve_sa(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
    p: &PowerAlloc,
    x_prev: &AssignTensor,
    lambda_max: f64,
) -> Result<SaOutcome, CespError> {
    // eligible (k, m, i, n) combinations are the variables
    let mut entries: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (k, m, i, n) in x_prev.tensor().indices() {
        if mask.is_eligible(k, m) {
            entries.push((k, m, i, n));
        }
    }
    let entries_ref: &[(usize, usize, usize, usize)] = &entries;
    let to_tensor = move |z: &[f64]| -> AssignTensor {
        let mut x = AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Relaxed);
        for (e, &(k, m, i, n)) in entries_ref.iter().enumerate() {
            x.set(k, m, i, n, z[e].clamp(0.0, 1.0));
        }
        x
    };

    // structural latency check: a user whose requirement is below every
    // symbol latency can never satisfy the constraint
    let min_latency = (0..config.grid.count())
        .map(|i| config.grid.latency_ms(i))
        .fold(f64::INFINITY, f64::min);
    let dropped_latency: Vec<usize> = (0..config.num_users)
        .filter(|&m| min_latency > config.latency_req_ms[m])
        .collect();

    let mut z: Vec<f64> = entries
        .iter()
        .map(|&(k, m, i, n)| x_prev.get(k, m, i, n))
        .collect();

    // entry indices grouped by slot, for the exact cap projection
    let slot_groups: Vec<Vec<usize>> = {
        let mut groups: std::collections::BTreeMap<(usize, usize, usize), Vec<usize>> =
            std::collections::BTreeMap::new();
        for (e, &(k, m, i, n)) in entries.iter().enumerate() {
            let _ = m;
            groups.entry((k, i, n)).or_default().push(e);
        }
        groups.into_values().collect()
    };
    let slot_groups_ref: &[Vec<usize>] = &slot_groups;

    let repeats = config.inner_sca_repeats.max(1);
    let mut active_qos: Vec<usize> = (0..config.num_users)
        .filter(|&m| config.rate_req[m] > 0.0)
        .collect();
    let mut dropped_qos: Vec<usize> = Vec::new();
    let mut last_status = SolveStatus::Optimal;
    let mut x_cur = to_tensor(&z);

    let mut lambdas: Vec<f64> = (0..repeats)
        .map(|r| {
            if repeats == 1 {
                lambda_max
            } else {
                let frac = r as f64 / (repeats - 1) as f64;
                lambda_max * frac * frac
            }
        })
        .collect();
    if config.lambda_escalation {
        // keep doubling past the configured weight until the relaxed point
        // is near-binary; bounded to keep the solve finite
        let mut extra = lambda_max.max(1.0);
        for _ in 0..10 {
            extra *= 2.0;
            lambdas.push(extra);
        }
    }

    let last_step = lambdas.len() - 1;
    let mut warm_mu: Option<Vec<f64>> = None;
    let mut lambda_prev = 0.0f64;
    for (step, &lambda) in lambdas.iter().enumerate() {
        // multipliers that hold entries against the penalty scale with it;
        // rescaling the warm start saves most of the build-up rounds
        if let Some(mu) = warm_mu.as_mut() {
            if lambda_prev > 0.0 && lambda > lambda_prev {
                let scale = lambda / lambda_prev;
                for v in mu.iter_mut() {
                    *v *= scale;
                }
            }
        }
        lambda_prev = lambda;
        let surrogate = SaSurrogate::new(config, h, p, &x_cur, lambda);
        // the intermediate continuation steps feed another expansion, so
        // they only need coarse accuracy; the final one is solved tightly
        let (tolerance, budget) = if step == last_step {
            (1e-3, 250)
        } else {
            (1e-3, 150)
        };
        loop {
            let report = {
                let mut program = build_sa_program(
                    config,
                    mask,
                    &surrogate,
                    entries_ref,
                    &active_qos,
                    &dropped_latency,
                    &to_tensor,
                );
                program.tolerance = tolerance;
                program.max_inner_iterations = budget;
                program.warm_multipliers = warm_mu.clone();
                program.projector =
                    Some(Box::new(move |z: &mut [f64]| project_slot_caps(z, slot_groups_ref)));
                maximize(&program, &z)?
            };
            if report.status != SolveStatus::Infeasible || active_qos.is_empty() {
                last_status = report.status;
                z = report.point;
                warm_mu = Some(report.multipliers);
                break;
            }
            z = report.point.clone();
            // the QoS constraints sit at the end of the multiplier vector;
            // removing one keeps the others aligned
            let x_at = to_tensor(&report.point);
            let (worst, violation) = active_qos
                .iter()
                .map(|&m| (m, config.rate_req[m] - surrogate.qos_and_grad(&x_at, m).0))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty active set");
            if violation < 0.5 * report.feasibility_violation {
                // a non-rate constraint blocks; keep the best-effort point
                last_status = report.status;
                warm_mu = Some(report.multipliers);
                break;
            }
            let pos = active_qos.iter().position(|&m| m == worst).unwrap();
            let mut mu = report.multipliers;
            mu.remove(mu.len() - active_qos.len() + pos);
            warm_mu = Some(mu);
            active_qos.retain(|&m| m != worst);
            dropped_qos.push(worst);
        }
        x_cur = to_tensor(&z);
        if config.lambda_escalation && step + 1 >= repeats && x_cur.near_binariness() <= 0.01 {
            break;
        }
    }

    // A fractional fixed point can survive the continuation on slots that
    // exert no rate force (the penalty slope vanishes at one half); one
    // extra expansion anchored at the rounded point commits those entries.
    if lambda_max > 0.0 && x_cur.near_binariness() > 0.01 {
        let q_slots = SlotPowers::from_power(p);
        let mut anchor = round_assignment(&x_cur, config);
        repair_service(&mut anchor, &q_slots, h, mask, config);
        repair_latency(&mut anchor, &q_slots, config);
        let surrogate = SaSurrogate::new(config, h, p, &anchor, lambda_max);
        let mut program = build_sa_program(
            config,
            mask,
            &surrogate,
            entries_ref,
            &active_qos,
            &dropped_latency,
            &to_tensor,
        );
        program.tolerance = 1e-3;
        program.max_inner_iterations = 250;
        program.warm_multipliers = warm_mu.clone();
        program.projector =
            Some(Box::new(move |z: &mut [f64]| project_slot_caps(z, slot_groups_ref)));
        let report = maximize(&program, &z)?;
        if report.status != SolveStatus::Infeasible {
            last_status = report.status;
            z = report.point;
            x_cur = to_tensor(&z);
        }
    }

    let near_binariness = x_cur.near_binariness();

    // round: per slot, heaviest user wins if it carries at least 0.5
    let q_slots = SlotPowers::from_power(p);
    let mut x_bin = round_assignment(&x_cur, config);
    repair_service(&mut x_bin, &q_slots, h, mask, config);
    repair_latency(&mut x_bin, &q_slots, config);
    // CoMP gating repair: a non-strongest BS may keep a slot only when the
    // user's strongest BS holds the same slot
    let slot_list: Vec<_> = x_cur.tensor().slots().collect();
    for (k, i, n) in slot_list {
        if let Some(m) = x_bin.assigned_user(k, i, n) {
            let strongest = mask.strongest_bs(m);
            if k != strongest && x_bin.get(strongest, m, i, n) == 0.0 {
                x_bin.set(k, m, i, n, 0.0);
            }
        }
    }

    // re-attribute powers to the new assignment and repair budgets
    let q = SlotPowers::from_power(p);
    let mut power = q.attribute(&x_bin, &config.grid);
    for k in 0..config.num_bs {
        let spent = power.assigned_sum(&x_bin, k);
        let budget = config.bs_cap_w(k);
        if spent > budget && spent > 0.0 {
            let scale = budget / spent;
            for m in 0..config.num_users {
                for i in 0..config.grid.count() {
                    for n in 0..config.grid.subcarriers(i) {
                        let v = power.get(k, m, i, n);
                        if v > 0.0 {
                            power.set(k, m, i, n, v * scale);
                        }
                    }
                }
            }
        }
    }

    Ok(SaOutcome {
        assignment: x_bin,
        relaxed: x_cur,
        near_binariness,
        power,
        dropped_qos_users: dropped_qos,
        dropped_latency_users: dropped_latency,
        solve_status: last_status,
    })
}

/// Exact projection onto the per-slot capped simplex: every weight in
/// [0, 1] and at most unit total weight per slot. Solved by a bisection on
/// the shift that makes the clamped slot sum hit one.
fn project_slot_caps(z: &mut [f64], slot_groups: &[Vec<usize>]) {
    for v in z.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    for group in slot_groups {
        let total: f64 = group.iter().map(|&e| z[e]).sum();
        if total <= 1.0 {
            continue;
        }
        let mut lo = 0.0f64;
        let mut hi = group.iter().map(|&e| z[e]).fold(0.0f64, f64::max);
        for _ in 0..60 {
            let tau = 0.5 * (lo + hi);
            let sum: f64 = group.iter().map(|&e| (z[e] - tau).max(0.0)).sum();
            if sum > 1.0 {
                lo = tau;
            } else {
                hi = tau;
            }
        }
        let tau = 0.5 * (lo + hi);
        for &e in group {
            z[e] = (z[e] - tau).clamp(0.0, 1.0);
        }
    }
}

/// Drop narrow-numerology slots from users whose assignment-weighted
/// latency exceeds their requirement, while they still hold at least one
/// wide slot. Weakest slots (by power) go first; structurally impossible
/// users are left untouched.
fn repair_latency(x: &mut AssignTensor, q: &SlotPowers, config: &ScenarioConfig) {
    if config.grid.count() < 2 {
        return;
    }
    for m in 0..config.num_users {
        loop {
            match phy::avg_latency(x, &config.grid, m) {
                Some(l) if l > config.latency_req_ms[m] => {}
                _ => break,
            }
            // narrow slots of user m, weakest power first
            let mut narrow: Vec<(usize, usize, usize)> = Vec::new();
            let mut wide = 0usize;
            for (k, i, n) in x.tensor().slots().collect::<Vec<_>>() {
                if x.get(k, m, i, n) == 1.0 {
                    if config.grid.latency_ms(i) > config.latency_req_ms[m] {
                        narrow.push((k, i, n));
                    } else {
                        wide += 1;
                    }
                }
            }
            if narrow.is_empty() || wide == 0 {
                break;
            }
            let &(k, i, n) = narrow
                .iter()
                .min_by(|a, b| {
                    q.get(a.0, a.1, a.2)
                        .total_cmp(&q.get(b.0, b.1, b.2))
                        .then(a.cmp(b))
                })
                .unwrap();
            x.set(k, m, i, n, 0.0);
        }
    }
}

/// Hand every unserved user one slot at its strongest BS, stealing from
/// an incumbent that holds at least two slots. The candidate delivering
/// the most receivable power wins; users stay unserved when no incumbent
/// can spare a slot.
fn repair_service(
    x: &mut AssignTensor,
    q: &SlotPowers,
    h: &ChannelTensor,
    mask: &EligibilityMask,
    config: &ScenarioConfig,
) {
    for m in 0..config.num_users {
        if x.user_load(m) > 0.0 {
            continue;
        }
        let k = mask.strongest_bs(m);
        // candidates meeting the user's latency requirement outrank the
        // rest, so a lone served slot does not break that constraint
        let mut best: Option<(usize, usize, bool, f64)> = None;
        for i in 0..config.grid.count() {
            let latency_ok = config.grid.latency_ms(i) <= config.latency_req_ms[m];
            for n in 0..config.grid.subcarriers(i) {
                let spare = match x.assigned_user(k, i, n) {
                    Some(incumbent) => x.user_load(incumbent) >= 2.0,
                    None => true,
                };
                if !spare {
                    continue;
                }
                let score = q.get(k, i, n) * h.gain_sq(k, m, i, n);
                let better = match best {
                    None => true,
                    Some((_, _, best_ok, best_score)) => {
                        (latency_ok, score) > (best_ok, best_score)
                    }
                };
                if better {
                    best = Some((i, n, latency_ok, score));
                }
            }
        }
        if let Some((i, n, _, _)) = best {
            if let Some(incumbent) = x.assigned_user(k, i, n) {
                x.set(k, incumbent, i, n, 0.0);
            }
            x.set(k, m, i, n, 1.0);
        }
    }
}

/// Round a relaxed assignment: per slot, the heaviest user wins when its
/// weight reaches one half.
fn round_assignment(x_cur: &AssignTensor, config: &ScenarioConfig) -> AssignTensor {
    let mut x_bin =
        AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Binary);
    for (k, i, n) in x_cur.tensor().slots().collect::<Vec<_>>() {
        let mut best: Option<(usize, f64)> = None;
        for m in 0..config.num_users {
            let v = x_cur.get(k, m, i, n);
            if v > 0.0 && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((m, v));
            }
        }
        if let Some((m, v)) = best {
            if v >= 0.5 {
                x_bin.set(k, m, i, n, 1.0);
            }
        }
    }
    x_bin
}

fn build_sa_program<'b>(
    config: &'b ScenarioConfig,
    mask: &'b EligibilityMask,
    surrogate: &'b SaSurrogate<'b>,
    entries: &'b [(usize, usize, usize, usize)],
    active_qos: &[usize],
    dropped_latency: &[usize],
    to_tensor: &'b dyn Fn(&[f64]) -> AssignTensor,
) -> ConvexProgram<'b> {
    let dim = entries.len();
    let mut program = ConvexProgram::boxed(vec![0.0; dim], vec![1.0; dim], move |z, grad| {
        let x = to_tensor(z);
        let (value, grad_tensor) = surrogate.objective_and_grad(&x);
        for (e, &(k, m, i, n)) in entries.iter().enumerate() {
            grad[e] = grad_tensor.get(k, m, i, n);
        }
        value
    });

    let _ = dim;
    // one user per slot
    let shape = surrogate.taylor_point.tensor();
    for (k, i, n) in shape.slots() {
        let terms: Vec<(usize, f64)> = entries
            .iter()
            .enumerate()
            .filter(|(_, &(ek, _, ei, en))| ek == k && ei == i && en == n)
            .map(|(e, _)| (e, 1.0))
            .collect();
        if !terms.is_empty() {
            program.linear.push(LinearConstraint::new(terms, 1.0));
        }
    }
    // per-BS budget (weights scale the slot powers)
    for k in 0..config.num_bs {
        let terms: Vec<(usize, f64)> = entries
            .iter()
            .enumerate()
            .filter(|(_, &(ek, _, _, _))| ek == k)
            .map(|(e, &(ek, _, ei, en))| (e, surrogate.q.get(ek, ei, en)))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        if !terms.is_empty() {
            program
                .linear
                .push(LinearConstraint::new(terms, config.bs_cap_w(k)));
        }
    }
    // per-user latency (skipping structurally impossible users) and
    // minimum service
    for m in 0..config.num_users {
        if !dropped_latency.contains(&m) {
            let terms: Vec<(usize, f64)> = entries
                .iter()
                .enumerate()
                .filter(|(_, &(_, em, _, _))| em == m)
                .map(|(e, &(_, _, ei, _))| {
                    (e, config.grid.latency_ms(ei) - config.latency_req_ms[m])
                })
                .filter(|&(_, c)| c != 0.0)
                .collect();
            if !terms.is_empty() {
                program.linear.push(LinearConstraint::new(terms, 0.0));
            }
        }
        let service: Vec<(usize, f64)> = entries
            .iter()
            .enumerate()
            .filter(|(_, &(_, em, _, _))| em == m)
            .map(|(e, _)| (e, -1.0))
            .collect();
        if !service.is_empty() {
            program.linear.push(LinearConstraint::new(service, -1.0));
        }
    }
    // CoMP gating: a non-strongest eligible BS needs the strongest on board
    for (e, &(k, m, i, n)) in entries.iter().enumerate() {
        let strongest = mask.strongest_bs(m);
        if k == strongest {
            continue;
        }
        let anchor = entries
            .iter()
            .position(|&(ak, am, ai, an)| ak == strongest && am == m && ai == i && an == n)
            .expect("strongest BS is always eligible");
        program
            .linear
            .push(LinearConstraint::new(vec![(e, 1.0), (anchor, -1.0)], 0.0));
    }
    // linearized per-user rate requirement
    for &m in active_qos {
        let req = config.rate_req[m];
        program.smooth.push(SmoothConstraint {
            eval: Box::new(move |z, grad| {
                let x = to_tensor(z);
                let (value, grad_tensor) = surrogate.qos_and_grad(&x, m);
                for (e, &(k, mm, i, n)) in entries.iter().enumerate() {
                    grad[e] = grad_tensor.get(k, mm, i, n);
                }
                value - req
            }),
        });
    }
    program
}

// ---------------------------------------------------------------------------
// Outer loop

pub(crate) enum PaStep {
    Surrogate,
    EqualPower,
}

pub(crate) enum SaStep {
    Surrogate { lambda_override: Option<f64> },
    Genetic { seed: u64 },
}

/// Shared alternating loop: one power half-step then one assignment
/// half-step per outer iteration, stopping when the sum-rate change falls
/// below the configured threshold. Either half-step is rejected (previous
/// iterate kept) if it would decrease the binary-iterate sum rate, so the
/// trace is non-decreasing up to floating-point noise.
pub(crate) fn run_alternation(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
    pa_step: PaStep,
    sa_step: SaStep,
) -> Result<CespSolution, CespError> {
    let noise = config.noise_w();
    let mut x = initial_assignment(config, h, mask);
    let mut p = baselines::epa(&x, config);

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut status = RunStatus::MaxIter;
    let mut rate_prev = 0.0f64;

    for t in 1..=config.max_iterations {
        let mut guarded = false;
        let mut dropped_qos = Vec::new();
        let mut infeasible = false;

        // power half-step
        let p_candidate = match pa_step {
            PaStep::Surrogate => {
                let outcome = solve_pa(config, h, &x, &p)?;
                dropped_qos.extend(outcome.dropped_qos_users.iter().copied());
                infeasible |= outcome.solve_status == SolveStatus::Infeasible;
                outcome.power
            }
            PaStep::EqualPower => baselines::epa(&x, config),
        };
        let rate_with_prev_p = phy::sum_rate(&p, &x, h, &config.grid, noise);
        let rate_with_new_p = phy::sum_rate(&p_candidate, &x, h, &config.grid, noise);
        if rate_with_new_p >= rate_with_prev_p - 1e-12 {
            p = p_candidate;
        } else {
            guarded = true;
        }

        // assignment half-step
        let mut near_binariness = 0.0;
        let (x_candidate, p_after) = match &sa_step {
            SaStep::Surrogate { lambda_override } => {
                let lambda = lambda_override.unwrap_or(config.penalty);
                let outcome = solve_sa(config, h, mask, &p, &x, lambda)?;
                dropped_qos.extend(outcome.dropped_qos_users.iter().copied());
                infeasible |= outcome.solve_status == SolveStatus::Infeasible;
                near_binariness = outcome.near_binariness;
                (outcome.assignment, outcome.power)
            }
            SaStep::Genetic { seed } => {
                let x_new = baselines::gsa(&p, config, h, mask, seed.wrapping_add(t as u64));
                let q = SlotPowers::from_power(&p);
                let p_new = q.attribute(&x_new, &config.grid);
                (x_new, p_new)
            }
        };
        let rate_candidate = phy::sum_rate(&p_after, &x_candidate, h, &config.grid, noise);
        let rate_keep = phy::sum_rate(&p, &x, h, &config.grid, noise);
        let rate_t = if rate_candidate >= rate_keep - 1e-12 {
            x = x_candidate;
            p = p_after;
            rate_candidate
        } else {
            guarded = true;
            rate_keep
        };

        dropped_qos.sort_unstable();
        dropped_qos.dedup();
        let max_violation = residual_violation(config, h, &p, &x, noise);
        history.push(IterationRecord {
            t,
            sum_rate: rate_t,
            max_violation,
            near_binariness,
            dropped_qos_users: dropped_qos,
            guarded,
        });

        if infeasible {
            status = RunStatus::Infeasible;
        }
        if (rate_t - rate_prev).abs() <= config.convergence_threshold {
            if status != RunStatus::Infeasible {
                status = RunStatus::Converged;
            }
            break;
        }
        rate_prev = rate_t;
    }

    let sum_rate = history.last().map_or(0.0, |r| r.sum_rate);
    Ok(CespSolution {
        power: p,
        assignment: x,
        history,
        status,
        sum_rate,
    })
}

/// Worst residual violation of the hard and soft constraints at a binary
/// iterate: per-subcarrier cap and per-BS budget (watts), per-user rate
/// deficit (b/s/Hz), and per-user latency excess (ms).
fn residual_violation(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    p: &PowerAlloc,
    x: &AssignTensor,
    noise: f64,
) -> f64 {
    let mut worst = 0.0f64;
    let cap = config.subcarrier_cap_w();
    worst = worst.max(p.max_entry() - cap);
    for k in 0..config.num_bs {
        worst = worst.max(p.assigned_sum(x, k) - config.bs_cap_w(k));
    }
    for m in 0..config.num_users {
        let rate = phy::user_rate(p, x, h, &config.grid, noise, m);
        worst = worst.max(config.rate_req[m] - rate);
        match phy::avg_latency(x, &config.grid, m) {
            Some(l) => worst = worst.max(l - config.latency_req_ms[m]),
            None => worst = worst.max(config.latency_req_ms[m]),
        }
    }
    worst.max(0.0)
}

/// Run the full alternating optimizer with the configured penalty.
pub fn run_cesp(
    config: &ScenarioConfig,
    h: &ChannelTensor,
    mask: &EligibilityMask,
) -> Result<CespSolution, CespError> {
    run_alternation(
        config,
        h,
        mask,
        PaStep::Surrogate,
        SaStep::Surrogate { lambda_override: None },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{comp_associate, StrengthSummary};
    use crate::channel::draw_channels;
    use crate::scenario::{build_topology, parse_config, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ScenarioConfig {
        parse_config(
            r#"
            [cells]
            num_bs = 2
            num_users = 2
            cell_radius_m = 100.0
            inter_bs_distance_m = 200.0
            edge_ratio = 0.5

            [[numerology]]
            mu = 0
            subcarriers = 2
            symbol_latency_ms = 1.0

            [[numerology]]
            mu = 1
            subcarriers = 2
            symbol_latency_ms = 0.5

            [power]
            noise_dbm = -117.0
            per_subcarrier_cap_dbm = 23.0
            per_bs_cap_dbm = 23.0

            [qos]
            rate_req = 0.0
            latency_req_ms = 10.0
            comp_threshold = 100.0

            [algorithm]
            penalty = 50.0
            convergence_threshold = 0.1
            max_iterations = 30
            rng_seed = 1
            "#,
        )
        .unwrap()
    }

    fn scene(
        config: &ScenarioConfig,
        seed: u64,
    ) -> (crate::channel::ChannelTensor, crate::association::EligibilityMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = build_topology(config, &mut rng);
        let mut ch_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let h = draw_channels(&topo, config, &mut ch_rng);
        let mask = comp_associate(&h, &config.comp_threshold, StrengthSummary::LargeScale);
        (h, mask)
    }

    #[test]
    fn pa_surrogate_is_tangent_at_expansion_point() {
        let config = small_config();
        let (h, mask) = scene(&config, 3);
        let x = initial_assignment(&config, &h, &mask);
        let p = baselines::epa(&x, &config);
        let surrogate = PaSurrogate::new(&config, &h, &x, &p);
        let (value, _) = surrogate.objective_and_grad(&p);
        let truth = phy::sum_rate(&p, &x, &h, &config.grid, config.noise_w());
        assert!((value - truth).abs() <= 1e-9, "{value} vs {truth}");
    }

    #[test]
    fn pa_surrogate_bounds_true_rate_from_below() {
        let config = small_config();
        let (h, mask) = scene(&config, 4);
        let x = initial_assignment(&config, &h, &mask);
        let p = baselines::epa(&x, &config);
        let surrogate = PaSurrogate::new(&config, &h, &x, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        for _ in 0..50 {
            let mut p2 = p.clone();
            for (k, m, i, n) in p.tensor().indices() {
                if x.get(k, m, i, n) > 0.0 {
                    p2.set(k, m, i, n, rng.random::<f64>() * config.subcarrier_cap_w());
                }
            }
            let (value, _) = surrogate.objective_and_grad(&p2);
            let truth = phy::sum_rate(&p2, &x, &h, &config.grid, config.noise_w());
            assert!(value <= truth + 1e-9, "surrogate {value} above truth {truth}");
        }
    }

    #[test]
    fn pa_gradient_matches_finite_differences() {
        let config = small_config();
        let (h, mask) = scene(&config, 5);
        let x = initial_assignment(&config, &h, &mask);
        let p = baselines::epa(&x, &config);
        let surrogate = PaSurrogate::new(&config, &h, &x, &p);
        let mut p_at = p.clone();
        // move off the expansion point so the check is not trivial
        for (k, m, i, n) in p.tensor().indices() {
            if x.get(k, m, i, n) > 0.0 {
                p_at.set(k, m, i, n, p.get(k, m, i, n) * 0.8 + 1e-4);
            }
        }
        let (_, grad) = surrogate.objective_and_grad(&p_at);
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (k, m, i, n) in p.tensor().indices() {
            let base = p_at.get(k, m, i, n);
            let mut plus = p_at.clone();
            plus.set(k, m, i, n, base + step);
            let mut minus = p_at.clone();
            minus.set(k, m, i, n, (base - step).max(0.0));
            let fd = (surrogate.objective_and_grad(&plus).0 - surrogate.objective_and_grad(&minus).0)
                / (plus.get(k, m, i, n) - minus.get(k, m, i, n));
            worst = worst.max((fd - grad.get(k, m, i, n)).abs());
            scale = scale.max(fd.abs());
        }
        assert!(worst <= 1e-4 * scale.max(1.0), "gradient error {worst}, scale {scale}");
    }

    #[test]
    fn sa_surrogate_tangent_and_bound() {
        let config = small_config();
        let (h, mask) = scene(&config, 6);
        let x = initial_assignment(&config, &h, &mask);
        let p = baselines::epa(&x, &config);
        let surrogate = SaSurrogate::new(&config, &h, &p, &x, 50.0);
        let (value, _) = surrogate.objective_and_grad(&x);
        let exact = surrogate.exact_objective(&x);
        assert!((value - exact).abs() <= 1e-9, "{value} vs {exact}");
        // binary expansion point: the penalty vanishes there
        let relaxed_rate = surrogate.relaxed_sum_rate(&x);
        assert!((exact - relaxed_rate).abs() <= 1e-9);
        // bound property at perturbed relaxed points
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        use rand::Rng;
        for _ in 0..50 {
            let mut xr =
                AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Relaxed);
            for (k, m, i, n) in x.tensor().indices() {
                xr.set(k, m, i, n, rng.random::<f64>());
            }
            let (value, _) = surrogate.objective_and_grad(&xr);
            let exact = surrogate.exact_objective(&xr);
            assert!(value <= exact + 1e-9, "surrogate {value} above exact {exact}");
            assert!(exact <= surrogate.relaxed_sum_rate(&xr) + 1e-9);
        }
    }

    #[test]
    fn sa_gradient_matches_finite_differences() {
        let config = small_config();
        let (h, mask) = scene(&config, 9);
        let x = initial_assignment(&config, &h, &mask);
        let p = baselines::epa(&x, &config);
        let surrogate = SaSurrogate::new(&config, &h, &p, &x, 25.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        use rand::Rng;
        let mut x_at =
            AssignTensor::zeros(config.num_bs, config.num_users, &config.grid, AssignMode::Relaxed);
        for (k, m, i, n) in x.tensor().indices() {
            x_at.set(k, m, i, n, 0.1 + 0.8 * rng.random::<f64>());
        }
        let (_, grad) = surrogate.objective_and_grad(&x_at);
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (k, m, i, n) in x.tensor().indices() {
            let base = x_at.get(k, m, i, n);
            let mut plus = x_at.clone();
            plus.set(k, m, i, n, base + step);
            let mut minus = x_at.clone();
            minus.set(k, m, i, n, base - step);
            let fd = (surrogate.objective_and_grad(&plus).0 - surrogate.objective_and_grad(&minus).0)
                / (2.0 * step);
            worst = worst.max((fd - grad.get(k, m, i, n)).abs());
            scale = scale.max(fd.abs());
        }
        assert!(worst <= 1e-4 * scale.max(1.0), "gradient error {worst}, scale {scale}");
    }

    #[test]
    fn single_link_power_maxes_out() {
        // one BS, one user, one subcarrier: the optimum puts the smaller of
        // cap and budget on the only useful slot
        let config = parse_config(
            r#"
            [cells]
            num_bs = 1
            num_users = 1
            cell_radius_m = 100.0
            inter_bs_distance_m = 200.0
            edge_ratio = 0.0

            [[numerology]]
            mu = 0
            subcarriers = 1
            symbol_latency_ms = 1.0

            [power]
            noise_dbm = -117.0
            per_subcarrier_cap_dbm = 23.0
            per_bs_cap_dbm = 20.0

            [qos]
            rate_req = 0.0
            latency_req_ms = 10.0

            [algorithm]
            penalty = 50.0
            convergence_threshold = 0.01
            max_iterations = 10
            "#,
        )
        .unwrap();
        let (h, _mask) = scene(&config, 2);
        let mut x = AssignTensor::zeros(1, 1, &config.grid, AssignMode::Binary);
        x.set(0, 0, 0, 0, 1.0);
        let p0 = baselines::epa(&x, &config);
        let outcome = solve_pa(&config, &h, &x, &p0).unwrap();
        let expect = config.bs_cap_w(0).min(config.subcarrier_cap_w());
        let got = outcome.power.get(0, 0, 0, 0);
        assert!((got - expect).abs() <= 1e-6 * expect, "{got} vs {expect}");
    }

    #[test]
    fn sa_solution_respects_single_user_per_slot() {
        let config = small_config();
        let (h, mask) = scene(&config, 11);
        let x = initial_assignment(&config, &h, &mask);
        let p = baselines::epa(&x, &config);
        let outcome = solve_sa(&config, &h, &mask, &p, &x, config.penalty).unwrap();
        assert!(outcome.assignment.single_user_per_slot(0.0));
        for (k, i, n) in outcome.assignment.tensor().slots() {
            let load = outcome.assignment.slot_load(k, i, n);
            assert!(load == 0.0 || load == 1.0);
        }
    }

    #[test]
    fn infinite_threshold_stops_after_one_iteration() {
        let mut config = small_config();
        config.convergence_threshold = f64::INFINITY;
        let (h, mask) = scene(&config, 12);
        let solution = run_cesp(&config, &h, &mask).unwrap();
        assert_eq!(solution.history.len(), 1);
        assert_eq!(solution.status, RunStatus::Converged);
    }

    #[test]
    fn trace_is_monotone_on_small_instances() {
        let config = small_config();
        for seed in 0..5u64 {
            let (h, mask) = scene(&config, 100 + seed);
            let solution = run_cesp(&config, &h, &mask).unwrap();
            let trace = solution.rate_trace();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-6, "trace decreased: {trace:?}");
            }
        }
    }
}
