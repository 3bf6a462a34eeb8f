//! Constraint functions, safe sets and buffer zones.
//!
//! Each barrier exposes `h(x)` with `h > 0` inside the safe set, `h = 0` on
//! its boundary, plus exact state gradients (and pose Hessians where the
//! constraint path needs them). Two backends:
//!
//! * circle obstacle vs. point/circular robot, in the squared form
//!   `|p - c|^2 - (r + r_robot)^2`, smooth everywhere;
//! * obstacle surface point vs. robot body SDF evaluated in the body frame,
//!   `phi(R(theta)^T (q - p)) - margin`, one barrier per cloud point.
//!
//! For models whose position entries are not directly actuated (DI, EU, PQ)
//! the constraint rows are built from a velocity-extended barrier
//! `h_ext = h + kappa * L_f h`, where `L_f h` is the drift derivative of `h`.
//! This keeps the rate-equality rows nonzero while plain `h` continues to
//! define safety, buffers and costs. For SI the drift is zero, so
//! `h_ext == h` and the rows reduce to the plain linearization.

use crate::dynamics::RobotModel;
use crate::geometry::{SdfModel, ShapeDescriptor};

/// Robot body geometry used by point-cloud barriers.
#[derive(Debug, Clone)]
pub enum RobotSdf {
    Analytic(ShapeDescriptor),
    Neural(SdfModel),
}

impl RobotSdf {
    #[inline]
    pub fn value(&self, p: [f64; 2]) -> f64 {
        match self {
            RobotSdf::Analytic(s) => s.sdf(p),
            RobotSdf::Neural(m) => m.eval(p),
        }
    }

    #[inline]
    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        match self {
            RobotSdf::Analytic(s) => s.sdf_gradient(p),
            RobotSdf::Neural(m) => m.gradient(p),
        }
    }

    #[inline]
    pub fn hessian(&self, p: [f64; 2]) -> [f64; 4] {
        match self {
            RobotSdf::Analytic(s) => s.sdf_hessian(p),
            RobotSdf::Neural(m) => m.hessian(p),
        }
    }

    /// Value, gradient and Hessian in one query (one distance computation
    /// for analytic shapes).
    #[inline]
    pub fn full(&self, p: [f64; 2]) -> (f64, [f64; 2], [f64; 4]) {
        match self {
            RobotSdf::Analytic(s) => s.sdf_full(p),
            RobotSdf::Neural(m) => (m.eval(p), m.gradient(p), m.hessian(p)),
        }
    }

    /// Radius of a circumscribed circle (used for conservative pruning).
    pub fn bound_radius(&self) -> f64 {
        match self {
            RobotSdf::Analytic(s) => s.circumradius(),
            // A trained model approximates a body of moderate extent; a
            // loose fixed bound keeps pruning safe.
            RobotSdf::Neural(_) => 2.0,
        }
    }
}

/// One scalar constraint `h_i` with its buffer length.
#[derive(Debug, Clone)]
pub enum Barrier {
    /// `h = |p - c|^2 - (r + robot_radius)^2`.
    Circle { center: [f64; 2], radius: f64, robot_radius: f64, buffer: f64 },
    /// `h = n . p - offset` (half-plane safe side `n . p >= offset`).
    Halfplane { normal: [f64; 2], offset: f64, buffer: f64 },
    /// `h = phi_robot(R(theta)^T (q - p)) - margin` for one obstacle point q.
    /// `cloud` indexes the shared robot SDF in the owning [`BarrierSet`].
    CloudPoint { point: [f64; 2], margin: f64, buffer: f64, cloud: usize },
}

impl Barrier {
    pub fn buffer(&self) -> f64 {
        match self {
            Barrier::Circle { buffer, .. }
            | Barrier::Halfplane { buffer, .. }
            | Barrier::CloudPoint { buffer, .. } => *buffer,
        }
    }
}

/// Contiguous run of cloud-point barriers from one obstacle; lets the hot
/// loop skip the whole cloud when the obstacle is provably far.
#[derive(Debug, Clone, Copy)]
pub struct CloudGroup {
    pub center: [f64; 2],
    pub radius: f64,
    /// Largest margin among the group's points (enters the skip bound).
    pub margin: f64,
    pub start: usize,
    pub len: usize,
}

/// Ordered set of barriers plus the shared robot SDFs for cloud points.
#[derive(Debug, Clone)]
pub struct BarrierSet {
    pub barriers: Vec<Barrier>,
    pub robot_sdfs: Vec<RobotSdf>,
    /// Velocity-extension horizon (seconds) for non-SI constraint rows.
    pub kappa: f64,
    /// Rows with `h > h_act` are dropped from the constraint system.
    pub h_act: f64,
    /// Obstacle grouping of cloud-point barriers (optional, for pruning).
    pub cloud_groups: Vec<CloudGroup>,
}

/// Precomputed per-state quantities shared by all barriers of the set.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext {
    pub px: f64,
    pub py: f64,
    pub sin_t: f64,
    pub cos_t: f64,
}

impl EvalContext {
    #[inline]
    pub fn new(model: &RobotModel, x: &[f64]) -> EvalContext {
        let (px, py, theta) = model.pose(x);
        let (sin_t, cos_t) = theta.sin_cos();
        EvalContext { px, py, sin_t, cos_t }
    }

    /// Obstacle point into the robot body frame.
    #[inline]
    fn body_frame(&self, q: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (q[0] - self.px, q[1] - self.py);
        [self.cos_t * dx + self.sin_t * dy, -self.sin_t * dx + self.cos_t * dy]
    }
}

impl BarrierSet {
    pub fn new(barriers: Vec<Barrier>, robot_sdfs: Vec<RobotSdf>, kappa: f64, h_act: f64) -> Self {
        BarrierSet { barriers, robot_sdfs, kappa, h_act, cloud_groups: Vec::new() }
    }

    /// Attach cloud grouping; groups must be sorted, non-overlapping runs.
    pub fn with_cloud_groups(mut self, groups: Vec<CloudGroup>) -> Self {
        let mut cursor = 0;
        for g in &groups {
            assert!(g.start >= cursor, "groups must be sorted and disjoint");
            assert!(g.start + g.len <= self.barriers.len());
            cursor = g.start + g.len;
        }
        self.cloud_groups = groups;
        self
    }

    pub fn len(&self) -> usize {
        self.barriers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.barriers.is_empty()
    }

    /// Plain barrier value `h_i(x)`.
    pub fn value(&self, index: usize, model: &RobotModel, x: &[f64]) -> f64 {
        let ctx = EvalContext::new(model, x);
        self.value_ctx(index, &ctx)
    }

    #[inline]
    pub fn value_ctx(&self, index: usize, ctx: &EvalContext) -> f64 {
        match &self.barriers[index] {
            Barrier::Circle { center, radius, robot_radius, .. } => {
                let (dx, dy) = (ctx.px - center[0], ctx.py - center[1]);
                let rr = radius + robot_radius;
                dx * dx + dy * dy - rr * rr
            }
            Barrier::Halfplane { normal, offset, .. } => {
                normal[0] * ctx.px + normal[1] * ctx.py - offset
            }
            Barrier::CloudPoint { point, margin, cloud, .. } => {
                self.robot_sdfs[*cloud].value(ctx.body_frame(*point)) - margin
            }
        }
    }

    /// All barrier values at once (shares the pose trigonometry). Cloud
    /// groups that are provably farther than both the activation distance
    /// and the buffer are skipped wholesale; their entries get a safe lower
    /// bound (still above every threshold that matters downstream).
    pub fn values_into(&self, model: &RobotModel, x: &[f64], out: &mut [f64]) {
        let ctx = EvalContext::new(model, x);
        if self.cloud_groups.is_empty() {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.value_ctx(i, &ctx);
            }
            return;
        }
        let body = self.robot_sdfs.first().map(|s| s.bound_radius()).unwrap_or(0.0);
        let max_buffer = self.barriers.iter().map(|b| b.buffer()).fold(0.0_f64, f64::max);
        let threshold = self.h_act.max(max_buffer);
        let mut cursor = 0;
        for g in &self.cloud_groups {
            for i in cursor..g.start {
                out[i] = self.value_ctx(i, &ctx);
            }
            let dist_center = (ctx.px - g.center[0]).hypot(ctx.py - g.center[1]);
            let group_bound = dist_center - g.radius - body - g.margin;
            if group_bound > threshold {
                out[g.start..g.start + g.len].fill(group_bound);
            } else {
                // Near cloud: a squared-distance prepass still skips the
                // body-SDF query for points beyond every threshold, since
                // h >= |p - q| - body_bound - margin.
                for i in g.start..g.start + g.len {
                    if let Barrier::CloudPoint { point, margin, .. } = &self.barriers[i] {
                        let dx = ctx.px - point[0];
                        let dy = ctx.py - point[1];
                        let d2 = dx * dx + dy * dy;
                        let lim = threshold + body + margin;
                        if d2 > lim * lim {
                            out[i] = d2.sqrt() - body - margin;
                        } else {
                            out[i] = self.value_ctx(i, &ctx);
                        }
                    } else {
                        out[i] = self.value_ctx(i, &ctx);
                    }
                }
            }
            cursor = g.start + g.len;
        }
        for i in cursor..out.len() {
            out[i] = self.value_ctx(i, &ctx);
        }
    }

    /// Minimum barrier value at `x`.
    pub fn min_value(&self, model: &RobotModel, x: &[f64]) -> f64 {
        let ctx = EvalContext::new(model, x);
        (0..self.len()).map(|i| self.value_ctx(i, &ctx)).fold(f64::INFINITY, f64::min)
    }

    /// Buffer-zone membership `0 <= h_i(x) <= d_i` (closed interval).
    pub fn in_buffer(&self, index: usize, model: &RobotModel, x: &[f64]) -> bool {
        let h = self.value(index, model, x);
        h >= 0.0 && h <= self.barriers[index].buffer()
    }

    /// Gradient of the barrier w.r.t. the pose `(px, py, theta)`.
    #[inline]
    fn pose_gradient(&self, index: usize, ctx: &EvalContext) -> [f64; 3] {
        match &self.barriers[index] {
            Barrier::Circle { center, .. } => {
                [2.0 * (ctx.px - center[0]), 2.0 * (ctx.py - center[1]), 0.0]
            }
            Barrier::Halfplane { normal, .. } => [normal[0], normal[1], 0.0],
            Barrier::CloudPoint { point, cloud, .. } => {
                let b = ctx.body_frame(*point);
                let g = self.robot_sdfs[*cloud].gradient(b);
                // d(body)/dp = -R^T; d(body)/dtheta = dR^T/dtheta (q - p).
                let gx = -(ctx.cos_t * g[0] - ctx.sin_t * g[1]);
                let gy = -(ctx.sin_t * g[0] + ctx.cos_t * g[1]);
                // dR^T/dtheta (q-p) expressed via body coordinates: (b_y, -b_x).
                let gt = g[0] * b[1] - g[1] * b[0];
                [gx, gy, gt]
            }
        }
    }

    /// Full state gradient of the plain barrier (velocity entries zero).
    pub fn gradient(&self, index: usize, model: &RobotModel, x: &[f64]) -> Vec<f64> {
        let ctx = EvalContext::new(model, x);
        let pg = self.pose_gradient(index, &ctx);
        let mut out = vec![0.0; model.state_dim()];
        out[0] = pg[0];
        out[1] = pg[1];
        if let Some(ti) = model.theta_index() {
            out[ti] = pg[2];
        }
        out
    }

    /// Velocity-extended barrier value and full state gradient used by the
    /// constraint rows: `h_ext = h + kappa * L_f h` with `L_f h` the drift
    /// derivative `grad_h . f(x) / dt`.
    pub fn extended_terms(&self, index: usize, model: &RobotModel, x: &[f64]) -> (f64, Vec<f64>) {
        let ctx = EvalContext::new(model, x);
        let mut scratch = RowScratch::default();
        let mut grad = [0.0_f64; 8];
        let h_ext = self.extended_row(index, model, x, &ctx, &mut scratch, &mut grad);
        (h_ext, grad[..model.state_dim()].to_vec())
    }

    /// Velocity-extension blend shared by the row builders: turns plain
    /// `(h, pose grad, pose Hessian)` into the extended `(h_ext, grad_ext)`.
    #[inline]
    pub(crate) fn blend_extended(
        &self,
        model: &RobotModel,
        x: &[f64],
        h: f64,
        pg: [f64; 3],
        pose_hess: [f64; 9],
        scratch: &mut RowScratch,
        out_grad: &mut [f64; 8],
    ) -> f64 {
        let n = model.state_dim();
        out_grad[..n].fill(0.0);
        out_grad[0] = pg[0];
        out_grad[1] = pg[1];
        let theta_row = model.theta_index();
        if let Some(ti) = theta_row {
            out_grad[ti] = pg[2];
        }
        if self.kappa == 0.0 || model.kind == crate::dynamics::ModelKind::Si {
            return h;
        }
        let inv_dt = 1.0 / model.dt;
        let lf = model.drift_dot(x, &out_grad[..n]) * inv_dt;
        let h_ext = h + self.kappa * lf;
        let drift = &mut scratch.drift;
        drift[..n].fill(0.0);
        model.drift(x, &mut drift[..n]);
        let mut pose_rows = [0usize, 1, 0];
        let pose_dims = if let Some(ti) = theta_row {
            pose_rows[2] = ti;
            3
        } else {
            2
        };
        let grad_lf = &mut scratch.grad_lf;
        grad_lf[..n].fill(0.0);
        for r in 0..pose_dims {
            let mut acc = 0.0;
            for c in 0..pose_dims {
                acc += pose_hess[r * 3 + c] * drift[pose_rows[c]] * inv_dt;
            }
            grad_lf[pose_rows[r]] += acc;
        }
        // drift_jacobian_t_apply carries the dt factor; strip it back out.
        let jt = &mut scratch.jt;
        jt[..n].fill(0.0);
        model.drift_jacobian_t_apply(x, &out_grad[..n], &mut jt[..n]);
        for i in 0..n {
            out_grad[i] += self.kappa * (grad_lf[i] + jt[i] * inv_dt);
        }
        h_ext
    }

    /// Value, pose gradient and pose Hessian with one distance query.
    pub(crate) fn pose_terms(&self, index: usize, ctx: &EvalContext) -> (f64, [f64; 3], [f64; 9]) {
        match &self.barriers[index] {
            Barrier::Circle { center, radius, robot_radius, .. } => {
                let (dx, dy) = (ctx.px - center[0], ctx.py - center[1]);
                let rr = radius + robot_radius;
                (
                    dx * dx + dy * dy - rr * rr,
                    [2.0 * dx, 2.0 * dy, 0.0],
                    [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0],
                )
            }
            Barrier::Halfplane { normal, offset, .. } => (
                normal[0] * ctx.px + normal[1] * ctx.py - offset,
                [normal[0], normal[1], 0.0],
                [0.0; 9],
            ),
            Barrier::CloudPoint { point, margin, cloud, .. } => {
                let b = ctx.body_frame(*point);
                let (phi, g, hess) = self.robot_sdfs[*cloud].full(b);
                let pg = [
                    -(ctx.cos_t * g[0] - ctx.sin_t * g[1]),
                    -(ctx.sin_t * g[0] + ctx.cos_t * g[1]),
                    g[0] * b[1] - g[1] * b[0],
                ];
                let jb = [
                    [-ctx.cos_t, -ctx.sin_t, b[1]],
                    [ctx.sin_t, -ctx.cos_t, -b[0]],
                ];
                let mut ph = [0.0; 9];
                for r in 0..3 {
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for a in 0..2 {
                            for bb in 0..2 {
                                acc += jb[a][r] * hess[a * 2 + bb] * jb[bb][c];
                            }
                        }
                        ph[r * 3 + c] = acc;
                    }
                }
                let d2_pt = [[ctx.sin_t, -ctx.cos_t], [ctx.cos_t, ctx.sin_t]];
                for k in 0..2 {
                    ph[2 * 3 + 2] += g[k] * (-b[k]);
                    for pcol in 0..2 {
                        let v = g[k] * d2_pt[k][pcol];
                        ph[pcol * 3 + 2] += v;
                        ph[2 * 3 + pcol] += v;
                    }
                }
                (phi - margin, pg, ph)
            }
        }
    }

    /// Allocation-free core of [`BarrierSet::extended_terms`]; fills the
    /// extended gradient into `out_grad[..n]` and returns the extended value.
    pub fn extended_row(
        &self,
        index: usize,
        model: &RobotModel,
        x: &[f64],
        ctx: &EvalContext,
        scratch: &mut RowScratch,
        out_grad: &mut [f64; 8],
    ) -> f64 {
        let (h, pg, pose_hess) = self.pose_terms(index, ctx);
        self.blend_extended(model, x, h, pg, pose_hess, scratch, out_grad)
    }
}

/// Reusable buffers for [`BarrierSet::extended_row`].
#[derive(Debug, Default)]
pub struct RowScratch {
    drift: [f64; 8],
    grad_lf: [f64; 8],
    jt: [f64; 8],
}


#[cfg(test)]
mod pruning_tests {
    use super::*;
    use crate::dynamics::ModelKind;
    use crate::rng::CounterRng;

    #[test]
    fn pruned_values_are_sound() {
        // Pruned entries must be lower bounds that stay above every
        // decision threshold; unpruned entries must be exact.
        let mut barriers = Vec::new();
        let mut groups = Vec::new();
        for (ci, center) in [[2.0_f64, 0.5], [6.0, -1.0]].iter().enumerate() {
            groups.push(CloudGroup {
                center: *center,
                radius: 0.8,
                margin: 0.02,
                start: barriers.len(),
                len: 16,
            });
            for j in 0..16 {
                let a = 2.0 * std::f64::consts::PI * j as f64 / 16.0;
                barriers.push(Barrier::CloudPoint {
                    point: [center[0] + 0.8 * a.cos(), center[1] + 0.8 * a.sin()],
                    margin: 0.02,
                    buffer: 0.3,
                    cloud: 0,
                });
            }
            let _ = ci;
        }
        let set = BarrierSet::new(
            barriers,
            vec![RobotSdf::Analytic(ShapeDescriptor::Hexagon { circumradius: 0.4 })],
            0.5,
            1.2,
        )
        .with_cloud_groups(groups);
        let exact = BarrierSet { cloud_groups: Vec::new(), ..set.clone() };
        let model = RobotModel::with_limit(ModelKind::Si, 0.05, 2.0);
        let threshold = 1.2_f64; // max(h_act, buffer)
        let mut rng = CounterRng::from_parts(71, &[0]);
        let mut pruned = vec![0.0; set.len()];
        let mut truth = vec![0.0; set.len()];
        for _ in 0..500 {
            let x = vec![rng.uniform_in(-1.0, 9.0), rng.uniform_in(-4.0, 4.0)];
            set.values_into(&model, &x, &mut pruned);
            exact.values_into(&model, &x, &mut truth);
            for i in 0..set.len() {
                if truth[i] <= threshold {
                    assert_eq!(pruned[i], truth[i], "active value must be exact");
                } else {
                    assert!(pruned[i] > threshold, "skipped value must stay inactive");
                    assert!(pruned[i] <= truth[i] + 1e-12, "bound must be a lower bound");
                }
            }
        }
    }
}
