//! Discrete-time robot models in control-affine form.
//!
//! Every model steps as `x' = x + f(x) + G·u`, where the drift `f` and the
//! input matrix `G` already absorb the step duration `dt` (explicit Euler).
//! For all four models the input matrix is a constant `dt`-scaled selector
//! into the actuated state entries, which the hot rollout path exploits.
//!
//! The augmented system stacks one barrier-rate parameter per constraint on
//! top of the robot state; the parameter increments are extra control
//! channels integrated exactly.

use crate::{Error, Result};

/// Robot state vector. Layout depends on the model:
/// SI `(px, py)`, DI `(px, py, vx, vy)`, EU `(px, py, theta, v)`,
/// PQ `(px, py, theta, vx, vy, omega)`.
pub type RobotState = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Single integrator: velocity commands in x/y.
    Si,
    /// Double integrator: acceleration commands in x/y.
    Di,
    /// Extended unicycle: heading-rate and forward-acceleration commands.
    Eu,
    /// Planar quadrotor: double integrator in position and heading.
    Pq,
}

impl ModelKind {
    pub fn parse(name: &str) -> Option<ModelKind> {
        match name {
            "si" => Some(ModelKind::Si),
            "di" => Some(ModelKind::Di),
            "eu" => Some(ModelKind::Eu),
            "pq" => Some(ModelKind::Pq),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Si => "si",
            ModelKind::Di => "di",
            ModelKind::Eu => "eu",
            ModelKind::Pq => "pq",
        }
    }
}

/// Control-affine robot model with explicit-Euler discretization.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub kind: ModelKind,
    pub dt: f64,
    pub control_min: Vec<f64>,
    pub control_max: Vec<f64>,
}

/// Robot state stacked with one rate parameter per barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: RobotState,
    pub alpha_tilde: Vec<f64>,
}

/// Model controls stacked with per-barrier rate increments.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedControl {
    pub u_x: Vec<f64>,
    pub u_alpha: Vec<f64>,
}

#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

impl RobotModel {
    pub fn new(kind: ModelKind, dt: f64, control_min: Vec<f64>, control_max: Vec<f64>) -> Self {
        let m = match kind {
            ModelKind::Si | ModelKind::Di | ModelKind::Eu => 2,
            ModelKind::Pq => 3,
        };
        assert!(dt > 0.0, "dt must be positive");
        assert_eq!(control_min.len(), m);
        assert_eq!(control_max.len(), m);
        RobotModel { kind, dt, control_min, control_max }
    }

    /// Model with symmetric bounds `|u_i| <= limit`.
    pub fn with_limit(kind: ModelKind, dt: f64, limit: f64) -> Self {
        let m = match kind {
            ModelKind::Si | ModelKind::Di | ModelKind::Eu => 2,
            ModelKind::Pq => 3,
        };
        RobotModel::new(kind, dt, vec![-limit; m], vec![limit; m])
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            ModelKind::Si => 2,
            ModelKind::Di | ModelKind::Eu => 4,
            ModelKind::Pq => 6,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self.kind {
            ModelKind::Si | ModelKind::Di | ModelKind::Eu => 2,
            ModelKind::Pq => 3,
        }
    }

    /// State indices that receive control directly (rows of the selector G).
    pub fn actuated_indices(&self) -> &'static [usize] {
        match self.kind {
            ModelKind::Si => &[0, 1],
            ModelKind::Di | ModelKind::Eu => &[2, 3],
            ModelKind::Pq => &[3, 4, 5],
        }
    }

    /// Index of the heading entry, for models that carry one.
    pub fn theta_index(&self) -> Option<usize> {
        match self.kind {
            ModelKind::Eu | ModelKind::Pq => Some(2),
            _ => None,
        }
    }

    /// `(px, py, theta)`; models without heading report theta = 0.
    #[inline]
    pub fn pose(&self, x: &[f64]) -> (f64, f64, f64) {
        let theta = self.theta_index().map_or(0.0, |i| x[i]);
        (x[0], x[1], theta)
    }

    /// Drift increment `f(x)` (includes dt), written into `out`.
    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let dt = self.dt;
        match self.kind {
            ModelKind::Si => {}
            ModelKind::Di => {
                out[0] = dt * x[2];
                out[1] = dt * x[3];
            }
            ModelKind::Eu => {
                out[0] = dt * x[3] * x[2].cos();
                out[1] = dt * x[3] * x[2].sin();
            }
            ModelKind::Pq => {
                out[0] = dt * x[3];
                out[1] = dt * x[4];
                out[2] = dt * x[5];
            }
        }
    }

    /// `grad . f(x)` without materializing the drift vector.
    #[inline]
    pub fn drift_dot(&self, x: &[f64], grad: &[f64]) -> f64 {
        let dt = self.dt;
        match self.kind {
            ModelKind::Si => 0.0,
            ModelKind::Di => dt * (grad[0] * x[2] + grad[1] * x[3]),
            ModelKind::Eu => dt * x[3] * (grad[0] * x[2].cos() + grad[1] * x[2].sin()),
            ModelKind::Pq => dt * (grad[0] * x[3] + grad[1] * x[4] + grad[2] * x[5]),
        }
    }

    /// `G^T grad` (length m) — picks the actuated entries, scaled by dt.
    #[inline]
    pub fn input_t_apply(&self, grad: &[f64], out: &mut [f64]) {
        for (j, &row) in self.actuated_indices().iter().enumerate() {
            out[j] = self.dt * grad[row];
        }
    }

    /// `(df/dx)^T v` accumulated into `out` (length n).
    #[inline]
    pub fn drift_jacobian_t_apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let dt = self.dt;
        match self.kind {
            ModelKind::Si => {}
            ModelKind::Di => {
                out[2] += dt * v[0];
                out[3] += dt * v[1];
            }
            ModelKind::Eu => {
                let (s, c) = x[2].sin_cos();
                out[2] += dt * x[3] * (-s * v[0] + c * v[1]);
                out[3] += dt * (c * v[0] + s * v[1]);
            }
            ModelKind::Pq => {
                out[3] += dt * v[0];
                out[4] += dt * v[1];
                out[5] += dt * v[2];
            }
        }
    }

    /// Discrete increment decomposition: `x' = x + f + G u`.
    /// Returns `f` (length n) and `G` row-major (n x m); both include dt.
    pub fn affine_parts(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.state_dim(), self.control_dim());
        if x.len() != n {
            return Err(Error::Dimension(format!(
                "state length {} does not match model {} (n = {n})",
                x.len(),
                self.kind.name()
            )));
        }
        let mut f = vec![0.0; n];
        self.drift(x, &mut f);
        let mut g = vec![0.0; n * m];
        for (j, &row) in self.actuated_indices().iter().enumerate() {
            g[row * m + j] = self.dt;
        }
        Ok((f, g))
    }

    /// One dynamics step, with input validation; heading re-wrapped.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<RobotState> {
        if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dynamics step input"));
        }
        if x.len() != self.state_dim() || u.len() != self.control_dim() {
            return Err(Error::Dimension(format!(
                "step expects n = {}, m = {}; got {}, {}",
                self.state_dim(),
                self.control_dim(),
                x.len(),
                u.len()
            )));
        }
        let mut out = x.to_vec();
        self.step_in_place(&mut out, u);
        Ok(out)
    }

    /// Unchecked step for the rollout hot path.
    #[inline]
    pub fn step_in_place(&self, x: &mut [f64], u: &[f64]) {
        let dt = self.dt;
        match self.kind {
            ModelKind::Si => {
                x[0] += dt * u[0];
                x[1] += dt * u[1];
            }
            ModelKind::Di => {
                x[0] += dt * x[2];
                x[1] += dt * x[3];
                x[2] += dt * u[0];
                x[3] += dt * u[1];
            }
            ModelKind::Eu => {
                let (s, c) = x[2].sin_cos();
                x[0] += dt * x[3] * c;
                x[1] += dt * x[3] * s;
                x[2] = wrap_angle(x[2] + dt * u[0]);
                x[3] += dt * u[1];
            }
            ModelKind::Pq => {
                x[0] += dt * x[3];
                x[1] += dt * x[4];
                x[2] = wrap_angle(x[2] + dt * x[5]);
                x[3] += dt * u[0];
                x[4] += dt * u[1];
                x[5] += dt * u[2];
            }
        }
    }

    #[inline]
    pub fn clamp_controls(&self, u: &mut [f64]) {
        for j in 0..u.len().min(self.control_dim()) {
            u[j] = u[j].clamp(self.control_min[j], self.control_max[j]);
        }
    }
}

/// One step of the augmented system: robot state through the dynamics,
/// rate parameters by exact integration of their increments.
pub fn augmented_step(
    model: &RobotModel,
    z: &AugmentedState,
    u: &AugmentedControl,
) -> Result<AugmentedState> {
    if z.alpha_tilde.len() != u.u_alpha.len() {
        return Err(Error::Dimension(format!(
            "alpha dims differ: state {} vs control {}",
            z.alpha_tilde.len(),
            u.u_alpha.len()
        )));
    }
    let x = model.step(&z.x, &u.u_x)?;
    let alpha_tilde = z
        .alpha_tilde
        .iter()
        .zip(&u.u_alpha)
        .map(|(a, da)| a + da)
        .collect();
    Ok(AugmentedState { x, alpha_tilde })
}
