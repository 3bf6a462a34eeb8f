//! Stage and terminal costs for the rollout scoring.
//!
//! The stage cost splits into a user convergence term, a buffer-zone term
//! that prices the barrier rate near constraint boundaries, and the usual
//! control-deviation term. Near a boundary (inside the buffer `0 <= h <= d`)
//! the rate parameter divided by the barrier value is charged directly:
//! positive rates (barrier shrinking) cost, negative rates (barrier growing)
//! earn, which points the sampler away from boundary-crossing behavior.
//! Violations (`h < 0`) add a finite penalty so the soft-min weighting stays
//! informative.

use crate::barrier::BarrierSet;
use crate::dynamics::{AugmentedState, RobotModel};

/// Cost parameters; goals and weights are full state-length vectors.
#[derive(Debug, Clone)]
pub struct CostConfig {
    pub goal: Vec<f64>,
    /// Diagonal of the convergence weight matrix (length n, entries >= 0).
    pub q_goal: Vec<f64>,
    pub terminal_scale: f64,
    pub violation_penalty: f64,
    /// Floor for the barrier value in the buffer term (units of h).
    pub h_floor: f64,
}

/// Quadratic distance-to-goal term.
#[inline]
pub fn convergence_cost(x: &[f64], cfg: &CostConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let e = x[i] - cfg.goal[i];
        acc += cfg.q_goal[i] * e * e;
    }
    acc
}

/// Buffer-zone rate cost plus violation penalty, from precomputed barrier
/// values at the post-step state and the post-step rate parameters.
#[inline]
pub fn nagumo_cost_from_values(
    h_next: &[f64],
    alpha_next: &[f64],
    barriers: &BarrierSet,
    cfg: &CostConfig,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..h_next.len() {
        let h = h_next[i];
        if h < 0.0 {
            acc += cfg.violation_penalty * (1.0 + h.abs());
        } else if h <= barriers.barriers[i].buffer() {
            acc += alpha_next[i] / h.max(cfg.h_floor);
        }
    }
    acc
}

/// Buffer-zone rate cost at an augmented state (rates already updated).
pub fn nagumo_cost(
    z_next: &AugmentedState,
    model: &RobotModel,
    barriers: &BarrierSet,
    cfg: &CostConfig,
) -> f64 {
    let mut h = vec![0.0; barriers.len()];
    barriers.values_into(model, &z_next.x, &mut h);
    nagumo_cost_from_values(&h, &z_next.alpha_tilde, barriers, cfg)
}

/// Violation-only penalty used by the vanilla baseline.
#[inline]
pub fn violation_cost_from_values(h_next: &[f64], cfg: &CostConfig) -> f64 {
    let mut acc = 0.0;
    for &h in h_next {
        if h < 0.0 {
            acc += cfg.violation_penalty * (1.0 + h.abs());
        }
    }
    acc
}

/// Per-step control-deviation term `gamma * v^T Sigma^-1 u` for diagonal
/// noise covariance (passed as inverse diagonal).
#[inline]
pub fn control_cost(v: &[f64], u: &[f64], sigma_inv_diag: &[f64], gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += v[i] * sigma_inv_diag[i] * u[i];
    }
    gamma * acc
}

/// Terminal cost `scale * convergence(x_H)`.
#[inline]
pub fn terminal_cost(x_h: &[f64], cfg: &CostConfig) -> f64 {
    cfg.terminal_scale * convergence_cost(x_h, cfg)
}
