//! Closed-form projection of sampled pseudo-inputs onto the constraint
//! manifolds.
//!
//! Sampled controls `(u'_x, u'_alpha)` rarely satisfy the per-barrier rate
//! equalities. The projection returns the weighted-minimum-norm feasible
//! input: minimize `(z - z_des)^T W (z - z_des)` subject to `A z = b`, where
//! each active barrier contributes one row
//!
//! ```text
//! [ grad_h^T G | h ] [ v ]   = - grad_h^T f - alpha_tilde * h
//!                    [ a ]
//! ```
//!
//! using the velocity-extended barrier terms (see [`crate::barrier`]). The
//! alpha-block of `A` is diagonal, which admits two solvers:
//!
//! * a primal elimination — substitute `a_i = (b_i - g_i^T v)/h_i` and solve
//!   an m x m SPD system in `v` alone (fast path for rollouts);
//! * the dual normal equations `(A W^-1 A^T + eps I) y = b - A z_des`,
//!   robust when some `h_i` is near zero or rows are near-parallel.
//!
//! The primal result is residual-checked and falls back to the dual solve,
//! so callers always get the minimum-norm solution up to regularization.

use crate::barrier::{BarrierSet, EvalContext, RowScratch};
use crate::dynamics::{AugmentedState, RobotModel};
use crate::{Error, Result};

/// Diagonal weights of the projection metric.
#[derive(Debug, Clone)]
pub struct ProjectionWeights {
    /// Control-deviation weights (length m), strictly positive.
    pub q1: Vec<f64>,
    /// Rate-increment deviation weight, strictly positive.
    pub q_alpha: f64,
}

impl ProjectionWeights {
    pub fn identity(m: usize, q_alpha: f64) -> Self {
        ProjectionWeights { q1: vec![1.0; m], q_alpha }
    }
}

/// Active rows of the linearized rate-equality system at one state.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSystem {
    /// Control dimension m (columns of the `rows_g` block).
    pub m: usize,
    /// Barrier index behind each row.
    pub active: Vec<usize>,
    /// `grad_h^T G`, row-major n_active x m.
    pub rows_g: Vec<f64>,
    /// Extended barrier value `h_i` (the diagonal alpha-column entry).
    pub rows_h: Vec<f64>,
    /// Right-hand side.
    pub b: Vec<f64>,
}

impl ConstraintSystem {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Copy another system into this one, reusing the buffers.
    pub fn copy_from(&mut self, other: &ConstraintSystem) {
        self.m = other.m;
        self.active.clear();
        self.active.extend_from_slice(&other.active);
        self.rows_g.clear();
        self.rows_g.extend_from_slice(&other.rows_g);
        self.rows_h.clear();
        self.rows_h.extend_from_slice(&other.rows_h);
        self.b.clear();
        self.b.extend_from_slice(&other.b);
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn clear(&mut self) {
        self.active.clear();
        self.rows_g.clear();
        self.rows_h.clear();
        self.b.clear();
    }

    /// Dense `A` (n_active x (m + n_active)) for oracles and diagnostics.
    pub fn dense_a(&self) -> nalgebra::DMatrix<f64> {
        let (na, m) = (self.n_active(), self.m);
        let mut a = nalgebra::DMatrix::zeros(na, m + na);
        for i in 0..na {
            for j in 0..m {
                a[(i, j)] = self.rows_g[i * m + j];
            }
            a[(i, m + i)] = self.rows_h[i];
        }
        a
    }
}

/// Build the active constraint system at the augmented state `z`.
///
/// Rows with plain `h_i` above the set's activation distance are omitted;
/// all-zero rows (barrier momentarily insensitive to both controls and its
/// rate channel) are dropped as unconstrainable at this state.
pub fn build_constraint_system(
    model: &RobotModel,
    barriers: &BarrierSet,
    z: &AugmentedState,
) -> ConstraintSystem {
    let n = barriers.len();
    let mut h = vec![0.0; n];
    barriers.values_into(model, &z.x, &mut h);
    let mut sys = ConstraintSystem::default();
    let mut scratch = RowScratch::default();
    build_constraint_system_into(model, barriers, &z.x, &z.alpha_tilde, &h, &mut scratch, &mut sys);
    sys
}

/// Non-allocating builder for the rollout hot path; `h_values` holds the
/// plain barrier values at `x`.
pub fn build_constraint_system_into(
    model: &RobotModel,
    barriers: &BarrierSet,
    x: &[f64],
    alpha_tilde: &[f64],
    h_values: &[f64],
    scratch: &mut RowScratch,
    sys: &mut ConstraintSystem,
) {
    let m = model.control_dim();
    sys.clear();
    sys.m = m;
    let ctx = EvalContext::new(model, x);
    let mut grad = [0.0_f64; 8];
    let mut grow = [0.0_f64; 4];
    for i in 0..barriers.len() {
        if h_values[i] > barriers.h_act {
            continue;
        }
        let h_ext = barriers.extended_row(i, model, x, &ctx, scratch, &mut grad);
        model.input_t_apply(&grad, &mut grow[..m]);
        let g_inf = grow[..m].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if g_inf < 1e-14 && h_ext.abs() < 1e-14 {
            continue;
        }
        let b_i = -model.drift_dot(x, &grad) - alpha_tilde[i] * h_ext;
        sys.active.push(i);
        sys.rows_g.extend_from_slice(&grow[..m]);
        sys.rows_h.push(h_ext);
        sys.b.push(b_i);
    }
}

/// Fused hot-path pass: barrier values and the active constraint system at
/// one state, sharing a single distance query per barrier. Matches
/// `values_into` + `build_constraint_system_into` exactly; cloud points
/// pruned by the distance prepass get a safe lower bound and never a row.
#[allow(clippy::too_many_arguments)]
pub fn values_and_system_into(
    model: &RobotModel,
    barriers: &BarrierSet,
    x: &[f64],
    alpha_tilde: &mut [f64],
    alpha_inc: Option<&[f64]>,
    h_out: &mut [f64],
    scratch: &mut RowScratch,
    sys: &mut ConstraintSystem,
) {
    let m = model.control_dim();
    let n = model.state_dim();
    sys.clear();
    sys.m = m;
    let ctx = EvalContext::new(model, x);
    let mut grad = [0.0_f64; 8];
    let mut grow = [0.0_f64; 4];

    let body = barriers.robot_sdfs.first().map(|s| s.bound_radius()).unwrap_or(0.0);
    let max_buffer = barriers.barriers.iter().map(|b| b.buffer()).fold(0.0_f64, f64::max);
    let threshold = barriers.h_act.max(max_buffer);

    macro_rules! handle {
        ($i:expr) => {{
            let i = $i;
            let mut skipped = false;
            if let crate::barrier::Barrier::CloudPoint { point, margin, .. } =
                &barriers.barriers[i]
            {
                // Cheap prepass: skip the SDF query when the raw distance
                // already proves the point inactive.
                let dx = ctx.px - point[0];
                let dy = ctx.py - point[1];
                let d2 = dx * dx + dy * dy;
                let lim = threshold + body + margin;
                if d2 > lim * lim {
                    h_out[i] = d2.sqrt() - body - margin;
                    skipped = true;
                }
            }
            if skipped {
                // Out of range: inactive, and an integrating rate channel
                // would go stale, so it holds the neutral prior.
                if alpha_inc.is_some() {
                    alpha_tilde[i] = 0.0;
                }
            } else {
                let (h, pg, ph) = barriers.pose_terms(i, &ctx);
                h_out[i] = h;
                if h > barriers.h_act {
                    if alpha_inc.is_some() {
                        alpha_tilde[i] = 0.0;
                    }
                } else {
                    if let Some(inc) = alpha_inc {
                        alpha_tilde[i] += inc[i];
                    }
                    let h_ext = barriers.blend_extended(model, x, h, pg, ph, scratch, &mut grad);
                    model.input_t_apply(&grad[..n], &mut grow[..m]);
                    let g_inf = grow[..m].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                    if g_inf >= 1e-14 || h_ext.abs() >= 1e-14 {
                        let b_i =
                            -model.drift_dot(x, &grad[..n]) - alpha_tilde[i] * h_ext;
                        sys.active.push(i);
                        sys.rows_g.extend_from_slice(&grow[..m]);
                        sys.rows_h.push(h_ext);
                        sys.b.push(b_i);
                    }
                }
            }
        }};
    }

    if barriers.cloud_groups.is_empty() {
        for i in 0..barriers.len() {
            handle!(i);
        }
        return;
    }
    let mut cursor = 0;
    for g in &barriers.cloud_groups {
        for i in cursor..g.start {
            handle!(i);
        }
        let dist_center = (ctx.px - g.center[0]).hypot(ctx.py - g.center[1]);
        let group_bound = dist_center - g.radius - body - g.margin;
        if group_bound > threshold {
            h_out[g.start..g.start + g.len].fill(group_bound);
            if alpha_inc.is_some() {
                alpha_tilde[g.start..g.start + g.len].fill(0.0);
            }
        } else {
            for i in g.start..g.start + g.len {
                handle!(i);
            }
        }
        cursor = g.start + g.len;
    }
    for i in cursor..h_out.len() {
        handle!(i);
    }
}

/// Scratch buffers for the solver; reuse across calls to avoid allocation.
#[derive(Debug, Default, Clone)]
pub struct ProjScratch {
    mat: Vec<f64>,
    rhs: Vec<f64>,
    y: Vec<f64>,
    gq: Vec<f64>,
}

/// Solve the projection; writes the projected controls over `u_x` (length m)
/// and the active entries of `u_alpha` (full length N, inactive entries left
/// at their pseudo-input values). Returns the constraint residual.
pub fn project_controls_into(
    sys: &ConstraintSystem,
    weights: &ProjectionWeights,
    u_x: &mut [f64],
    u_alpha: &mut [f64],
    scratch: &mut ProjScratch,
) -> Result<f64> {
    let na = sys.n_active();
    if na == 0 {
        return Ok(0.0);
    }
    let m = sys.m;
    debug_assert_eq!(u_x.len(), m);

    // Primal elimination unless some h_i is too close to zero.
    let h_min = sys.rows_h.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if h_min > 1e-6 {
        scratch.mat.clear();
        scratch.mat.resize(m * m, 0.0);
        scratch.rhs.clear();
        scratch.rhs.resize(m, 0.0);
        for j in 0..m {
            scratch.mat[j * m + j] = weights.q1[j];
            scratch.rhs[j] = weights.q1[j] * u_x[j];
        }
        for i in 0..na {
            let g = &sys.rows_g[i * m..(i + 1) * m];
            let hi = sys.rows_h[i];
            let ci = weights.q_alpha / (hi * hi);
            let ri = sys.b[i] - hi * u_alpha[sys.active[i]];
            for r in 0..m {
                let cg = ci * g[r];
                scratch.rhs[r] += cg * ri;
                for c in 0..=r {
                    scratch.mat[r * m + c] += cg * g[c];
                }
            }
        }
        for r in 0..m {
            for c in r + 1..m {
                scratch.mat[r * m + c] = scratch.mat[c * m + r];
            }
        }
        if cholesky_in_place(&mut scratch.mat, m) {
            chol_solve(&scratch.mat, m, &mut scratch.rhs);
            // Residual check before committing; fall back to dual otherwise.
            let mut worst = 0.0_f64;
            let mut bscale = 1.0_f64;
            for i in 0..na {
                let g = &sys.rows_g[i * m..(i + 1) * m];
                let gv: f64 = g.iter().zip(scratch.rhs.iter()).map(|(a, b)| a * b).sum();
                let ai = (sys.b[i] - gv) / sys.rows_h[i];
                let resid = gv + sys.rows_h[i] * ai - sys.b[i];
                worst = worst.max(resid.abs());
                bscale = bscale.max(sys.b[i].abs());
            }
            if worst <= 1e-10 * bscale {
                for i in 0..na {
                    let g = &sys.rows_g[i * m..(i + 1) * m];
                    let gv: f64 = g.iter().zip(scratch.rhs.iter()).map(|(a, b)| a * b).sum();
                    u_alpha[sys.active[i]] = (sys.b[i] - gv) / sys.rows_h[i];
                }
                u_x.copy_from_slice(&scratch.rhs[..m]);
                return Ok(worst);
            }
        }
    }

    // Dual normal equations with Tikhonov regularization.
    scratch.mat.clear();
    scratch.mat.resize(na * na, 0.0);
    scratch.rhs.clear();
    scratch.rhs.resize(na, 0.0);
    scratch.gq.clear();
    scratch.gq.resize(na * m, 0.0);
    for i in 0..na {
        for c in 0..m {
            scratch.gq[i * m + c] = sys.rows_g[i * m + c] / weights.q1[c];
        }
    }
    for i in 0..na {
        let gi = &sys.rows_g[i * m..(i + 1) * m];
        for j in 0..=i {
            let gqj = &scratch.gq[j * m..(j + 1) * m];
            let mut s = 0.0;
            for c in 0..m {
                s += gi[c] * gqj[c];
            }
            if i == j {
                s += sys.rows_h[i] * sys.rows_h[i] / weights.q_alpha;
            }
            scratch.mat[i * na + j] = s;
            scratch.mat[j * na + i] = s;
        }
        let mut gdot = 0.0;
        for c in 0..m {
            gdot += gi[c] * u_x[c];
        }
        scratch.rhs[i] = sys.b[i] - gdot - sys.rows_h[i] * u_alpha[sys.active[i]];
    }
    let trace: f64 = (0..na).map(|i| scratch.mat[i * na + i]).sum();
    let eps = 1e-9 * trace.max(1e-30) / na as f64;
    for i in 0..na {
        scratch.mat[i * na + i] += eps;
    }
    if !cholesky_in_place(&mut scratch.mat, na) {
        return Err(Error::SingularProjection { rows: sys.active.clone() });
    }
    chol_solve(&scratch.mat, na, &mut scratch.rhs);
    scratch.y.clear();
    scratch.y.extend_from_slice(&scratch.rhs);
    for j in 0..m {
        let mut acc = 0.0;
        for i in 0..na {
            acc += sys.rows_g[i * m + j] * scratch.y[i];
        }
        u_x[j] += acc / weights.q1[j];
    }
    let mut worst = 0.0_f64;
    for i in 0..na {
        u_alpha[sys.active[i]] += sys.rows_h[i] / weights.q_alpha * scratch.y[i];
        let gi = &sys.rows_g[i * m..(i + 1) * m];
        let gv: f64 = gi.iter().zip(u_x.iter()).map(|(a, b)| a * b).sum();
        worst = worst.max((gv + sys.rows_h[i] * u_alpha[sys.active[i]] - sys.b[i]).abs());
    }
    Ok(worst)
}

/// Allocating wrapper: projects `(u'_x, u'_alpha)` and returns the result.
/// `u_alpha` must have one entry per barrier in the owning set; inactive
/// entries pass through unchanged.
pub fn project_controls(
    sys: &ConstraintSystem,
    u_prime_x: &[f64],
    u_prime_alpha: &[f64],
    weights: &ProjectionWeights,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut u_x = u_prime_x.to_vec();
    let mut u_alpha = u_prime_alpha.to_vec();
    let mut scratch = ProjScratch::default();
    project_controls_into(sys, weights, &mut u_x, &mut u_alpha, &mut scratch)?;
    Ok((u_x, u_alpha))
}

/// Max-norm constraint residual `|A z - b|_inf` of a candidate control.
pub fn projection_residual(sys: &ConstraintSystem, u_x: &[f64], u_alpha: &[f64]) -> f64 {
    let m = sys.m;
    let mut worst = 0.0_f64;
    for i in 0..sys.n_active() {
        let gi = &sys.rows_g[i * m..(i + 1) * m];
        let gv: f64 = gi.iter().zip(u_x.iter()).map(|(a, b)| a * b).sum();
        worst = worst.max((gv + sys.rows_h[i] * u_alpha[sys.active[i]] - sys.b[i]).abs());
    }
    worst
}

fn cholesky_in_place(a: &mut [f64], k: usize) -> bool {
    for i in 0..k {
        for j in 0..i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / a[j * k + j];
        }
        let mut d = a[i * k + i];
        for p in 0..i {
            d -= a[i * k + p] * a[i * k + p];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        a[i * k + i] = d.sqrt();
    }
    true
}

/// Solve `L L^T x = b` in place given the factor from `cholesky_in_place`.
fn chol_solve(a: &[f64], k: usize, x: &mut [f64]) {
    for i in 0..k {
        let mut s = x[i];
        for p in 0..i {
            s -= a[i * k + p] * x[p];
        }
        x[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = x[i];
        for p in i + 1..k {
            s -= a[p * k + i] * x[p];
        }
        x[i] = s / a[i * k + i];
    }
}

/// Dense KKT reference solve `[[2W, A^T], [A, 0]] [z; nu] = [2W z_des; b]`.
/// Independent of the production solver; used by tests and the acceptance
/// suite as the optimality oracle.
pub fn kkt_reference_solution(
    sys: &ConstraintSystem,
    u_prime_x: &[f64],
    u_prime_alpha_active: &[f64],
    weights: &ProjectionWeights,
) -> Option<(Vec<f64>, Vec<f64>)> {
    use nalgebra::{DMatrix, DVector};
    let (na, m) = (sys.n_active(), sys.m);
    let dim = m + na;
    let a = sys.dense_a();
    let mut kkt = DMatrix::zeros(dim + na, dim + na);
    for j in 0..m {
        kkt[(j, j)] = 2.0 * weights.q1[j];
    }
    for i in 0..na {
        kkt[(m + i, m + i)] = 2.0 * weights.q_alpha;
    }
    for i in 0..na {
        for j in 0..dim {
            kkt[(dim + i, j)] = a[(i, j)];
            kkt[(j, dim + i)] = a[(i, j)];
        }
    }
    let mut rhs = DVector::zeros(dim + na);
    for j in 0..m {
        rhs[j] = 2.0 * weights.q1[j] * u_prime_x[j];
    }
    for i in 0..na {
        rhs[m + i] = 2.0 * weights.q_alpha * u_prime_alpha_active[i];
        rhs[dim + i] = sys.b[i];
    }
    let sol = kkt.lu().solve(&rhs)?;
    let u_x = (0..m).map(|j| sol[j]).collect();
    let u_a = (0..na).map(|i| sol[m + i]).collect();
    Some((u_x, u_a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{Barrier, BarrierSet};
    use crate::dynamics::{AugmentedState, ModelKind};
    use crate::rng::CounterRng;
    use approx::assert_abs_diff_eq;

    /// Random constraint system with the `[G | diag(h)]` structure.
    fn random_system(rng: &mut CounterRng, m: usize, na: usize, tiny_h: bool) -> ConstraintSystem {
        let mut sys = ConstraintSystem { m, ..Default::default() };
        for i in 0..na {
            sys.active.push(i);
            for _ in 0..m {
                sys.rows_g.push(rng.uniform_in(-2.0, 2.0));
            }
            let h = if tiny_h && i == 0 {
                rng.uniform_in(-1e-9, 1e-9)
            } else {
                let v = rng.uniform_in(0.2, 2.0);
                if rng.uniform() < 0.5 {
                    -v
                } else {
                    v
                }
            };
            sys.rows_h.push(h);
            sys.b.push(rng.uniform_in(-1.5, 1.5));
        }
        sys
    }

    fn random_weights(rng: &mut CounterRng, m: usize) -> ProjectionWeights {
        ProjectionWeights {
            q1: (0..m).map(|_| rng.uniform_in(0.5, 2.0)).collect(),
            q_alpha: rng.uniform_in(0.5, 20.0),
        }
    }

    #[test]
    fn empty_system_is_identity() {
        let sys = ConstraintSystem { m: 2, ..Default::default() };
        let w = ProjectionWeights::identity(2, 10.0);
        let (ux, ua) = project_controls(&sys, &[0.3, -0.7], &[], &w).unwrap();
        assert_eq!(ux, vec![0.3, -0.7]);
        assert!(ua.is_empty());
    }

    #[test]
    fn feasible_input_unchanged() {
        // A = [1 0 1], b = 0.3; z_des = (0.1, 9, 0.2) satisfies it.
        let sys = ConstraintSystem {
            m: 2,
            active: vec![0],
            rows_g: vec![1.0, 0.0],
            rows_h: vec![1.0],
            b: vec![0.3],
        };
        let w = ProjectionWeights::identity(2, 10.0);
        let (ux, ua) = project_controls(&sys, &[0.1, 9.0], &[0.2], &w).unwrap();
        assert_abs_diff_eq!(ux[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(ux[1], 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ua[0], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn hand_computed_projection() {
        // A = [1 0 1], b = 0, W = I, z_des = (0.3, 0, 0) -> z* = (0.15, 0, -0.15).
        let sys = ConstraintSystem {
            m: 2,
            active: vec![0],
            rows_g: vec![1.0, 0.0],
            rows_h: vec![1.0],
            b: vec![0.0],
        };
        let w = ProjectionWeights::identity(2, 1.0);
        let (ux, ua) = project_controls(&sys, &[0.3, 0.0], &[0.0], &w).unwrap();
        assert_abs_diff_eq!(ux[0], 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(ux[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ua[0], -0.15, epsilon = 1e-12);
    }

    #[test]
    fn matches_kkt_oracle_and_is_feasible() {
        let mut rng = CounterRng::from_parts(51, &[0]);
        for trial in 0..2000 {
            let m = 2 + (rng.next_u64_value() % 3) as usize;
            let na = 1 + (rng.next_u64_value() % 6) as usize;
            let sys = random_system(&mut rng, m, na, false);
            let w = random_weights(&mut rng, m);
            let ux0: Vec<f64> = (0..m).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let ua0: Vec<f64> = (0..na).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let (ux, ua) = project_controls(&sys, &ux0, &ua0, &w).unwrap();
            let resid = projection_residual(&sys, &ux, &ua);
            assert!(resid < 1e-8, "trial {trial}: residual {resid}");
            let (kx, ka) = kkt_reference_solution(&sys, &ux0, &ua0, &w).unwrap();
            for (a, b) in ux.iter().zip(&kx) {
                assert!((a - b).abs() < 1e-8, "trial {trial}: {a} vs {b}");
            }
            for i in 0..na {
                assert!((ua[sys.active[i]] - ka[i]).abs() < 1e-8, "trial {trial}");
            }
        }
    }

    #[test]
    fn near_zero_alpha_columns_stay_finite() {
        // With an alpha-column entry near zero the exact minimum-norm
        // solution needs enormous rate increments; the regularized dual
        // caps them and reports the residual instead of blowing up.
        let mut rng = CounterRng::from_parts(55, &[0]);
        for _ in 0..200 {
            let m = 2 + (rng.next_u64_value() % 3) as usize;
            let na = 1 + (rng.next_u64_value() % 6) as usize;
            let sys = random_system(&mut rng, m, na, true);
            let w = random_weights(&mut rng, m);
            let ux0: Vec<f64> = (0..m).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let ua0: Vec<f64> = (0..na).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let (ux, ua) = project_controls(&sys, &ux0, &ua0, &w).unwrap();
            assert!(ux.iter().chain(ua.iter()).all(|v| v.is_finite()));
            let resid = projection_residual(&sys, &ux, &ua);
            let b_scale = sys.b.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            assert!(resid <= b_scale * 1.01, "residual {resid} vs scale {b_scale}");
        }
    }

    #[test]
    fn idempotent() {
        let mut rng = CounterRng::from_parts(52, &[0]);
        for _ in 0..200 {
            let sys = random_system(&mut rng, 3, 4, false);
            let w = random_weights(&mut rng, 3);
            let ux0: Vec<f64> = (0..3).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let ua0: Vec<f64> = (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let (ux1, ua1) = project_controls(&sys, &ux0, &ua0, &w).unwrap();
            let (ux2, ua2) = project_controls(&sys, &ux1, &ua1, &w).unwrap();
            for (a, b) in ux1.iter().zip(&ux2) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            for (a, b) in ua1.iter().zip(&ua2) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn correction_lies_in_row_space() {
        // W (z* - z_des) must be a combination of the rows of A.
        use nalgebra::{DMatrix, DVector};
        let mut rng = CounterRng::from_parts(53, &[0]);
        for _ in 0..200 {
            let (m, na) = (3, 3);
            let sys = random_system(&mut rng, m, na, false);
            let w = random_weights(&mut rng, m);
            let ux0: Vec<f64> = (0..m).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let ua0: Vec<f64> = (0..na).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let (ux, ua) = project_controls(&sys, &ux0, &ua0, &w).unwrap();
            let dim = m + na;
            let mut wz = DVector::zeros(dim);
            for j in 0..m {
                wz[j] = w.q1[j] * (ux[j] - ux0[j]);
            }
            for i in 0..na {
                wz[m + i] = w.q_alpha * (ua[sys.active[i]] - ua0[i]);
            }
            let a = sys.dense_a();
            // Least-squares fit of wz by A^T y; the residual must vanish.
            let at = a.transpose();
            let normal = &a * &at;
            let rhs = &a * &wz;
            let y = normal.lu().solve(&rhs).unwrap();
            let resid = (&at * y - &wz).amax();
            assert!(resid < 1e-8, "row-space residual {resid}");
        }
    }

    #[test]
    fn build_system_examples() {
        // SI with dt = 1: f = 0, G = I. Half-plane h = p_x at x = (1, 0).
        let model = crate::dynamics::RobotModel::with_limit(ModelKind::Si, 1.0, 10.0);
        let set = BarrierSet::new(
            vec![Barrier::Halfplane { normal: [1.0, 0.0], offset: 0.0, buffer: 0.5 }],
            vec![],
            0.5,
            f64::INFINITY,
        );
        let z = AugmentedState { x: vec![1.0, 0.0], alpha_tilde: vec![0.0] };
        let sys = build_constraint_system(&model, &set, &z);
        assert_eq!(sys.n_active(), 1);
        assert_eq!(sys.rows_g, vec![1.0, 0.0]);
        assert_eq!(sys.rows_h, vec![1.0]);
        assert_abs_diff_eq!(sys.b[0], 0.0, epsilon = 1e-15);

        let z2 = AugmentedState { x: vec![1.0, 0.0], alpha_tilde: vec![0.5] };
        let sys2 = build_constraint_system(&model, &set, &z2);
        assert_abs_diff_eq!(sys2.b[0], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn activation_distance_drops_rows() {
        let model = crate::dynamics::RobotModel::with_limit(ModelKind::Si, 1.0, 10.0);
        let set = BarrierSet::new(
            vec![
                Barrier::Halfplane { normal: [1.0, 0.0], offset: 0.0, buffer: 0.5 },
                Barrier::Halfplane { normal: [0.0, 1.0], offset: -100.0, buffer: 0.5 },
            ],
            vec![],
            0.5,
            3.0,
        );
        let z = AugmentedState { x: vec![1.0, 0.0], alpha_tilde: vec![0.0, 0.0] };
        let sys = build_constraint_system(&model, &set, &z);
        assert_eq!(sys.active, vec![0]);
    }

    #[test]
    fn residual_of_random_point_is_direct_evaluation() {
        let mut rng = CounterRng::from_parts(54, &[0]);
        let sys = random_system(&mut rng, 2, 3, false);
        let ux = [0.4, -0.2];
        let ua = [0.1, 0.2, -0.3];
        let mut direct = 0.0_f64;
        for i in 0..3 {
            let gv = sys.rows_g[i * 2] * ux[0] + sys.rows_g[i * 2 + 1] * ux[1];
            direct = direct.max((gv + sys.rows_h[i] * ua[i] - sys.b[i]).abs());
        }
        assert_abs_diff_eq!(projection_residual(&sys, &ux, &ua), direct, epsilon = 1e-15);
    }
}
