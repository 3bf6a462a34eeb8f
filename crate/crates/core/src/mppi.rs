//! Sampling engine: vanilla MPPI and the barrier-rate variant.
//!
//! One control step samples `K` noise sequences around the mean control
//! sequence, scores a rollout per sample, soft-min weights the costs, and
//! returns the weighted average of the sampled sequences as the new mean. In
//! barrier-rate mode every rollout substep first projects the sampled
//! pseudo-inputs onto the active rate-equality manifold, then steps the
//! augmented dynamics and charges the buffer-zone rate cost; the applied
//! first control is re-projected at the true current state so that what the
//! plant executes satisfies the constraints exactly.
//!
//! Everything is deterministic for a fixed `(scenario, params, seed)`: each
//! rollout draws from its own counter-based substream keyed by
//! `(seed, step, k)`, and cross-rollout reductions run in index order.

use rayon::prelude::*;

use crate::barrier::{BarrierSet, RowScratch};
use crate::cost::{self, CostConfig};
use crate::dynamics::{AugmentedState, RobotModel};
use crate::projection::{
    build_constraint_system_into, project_controls_into, projection_residual, ConstraintSystem,
    ProjScratch, ProjectionWeights,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MppiMode {
    Vanilla,
    Br,
}

impl MppiMode {
    pub fn parse(name: &str) -> Option<MppiMode> {
        match name {
            "vanilla" => Some(MppiMode::Vanilla),
            "br" => Some(MppiMode::Br),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MppiMode::Vanilla => "vanilla",
            MppiMode::Br => "br",
        }
    }
}

/// Sampler parameters. The noise covariance is diagonal: `sigma_u` holds the
/// per-control-channel standard deviations, `sigma_alpha` the shared standard
/// deviation of every rate-increment channel.
#[derive(Debug, Clone)]
pub struct MppiParams {
    pub mode: MppiMode,
    pub samples: usize,
    pub horizon: usize,
    pub sigma_u: Vec<f64>,
    pub sigma_alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
}

/// Mean control sequence, row-major `horizon x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSequence {
    pub horizon: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl MeanSequence {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        MeanSequence { horizon, dim, data: vec![0.0; horizon * dim] }
    }

    #[inline]
    pub fn row(&self, tau: usize) -> &[f64] {
        &self.data[tau * self.dim..(tau + 1) * self.dim]
    }

    /// Receding-horizon warm start: drop the first row, zero-pad the tail.
    pub fn shift_left(&mut self) {
        self.data.copy_within(self.dim.., 0);
        let tail = self.data.len() - self.dim;
        self.data[tail..].fill(0.0);
    }
}

/// Soft-min weights of a batch of rollout costs.
#[derive(Debug, Clone)]
pub struct WeightInfo {
    pub weights: Vec<f64>,
    pub beta: f64,
    /// True when every rollout aborted and the weights fell back to uniform.
    pub degenerate: bool,
}

/// `w_k = exp(-(S_k - beta)/lambda)`, normalized. Aborted rollouts carry
/// `S_k = +inf` and are assigned a beta-relative sentinel so their weight
/// underflows smoothly instead of poisoning the average.
pub fn compute_weights(costs: &[f64], lambda: f64) -> WeightInfo {
    let mut beta = f64::INFINITY;
    let mut max_finite = f64::NEG_INFINITY;
    for &c in costs {
        if c.is_finite() {
            beta = beta.min(c);
            max_finite = max_finite.max(c);
        }
    }
    if !beta.is_finite() {
        let k = costs.len().max(1);
        return WeightInfo { weights: vec![1.0 / k as f64; k], beta: f64::NAN, degenerate: true };
    }
    let sentinel = max_finite + 10.0 * lambda;
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|&c| {
            let s = if c.is_finite() { c } else { sentinel };
            (-(s - beta) / lambda).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    WeightInfo { weights, beta, degenerate: false }
}

/// Convex combination of sampled control sequences (each `horizon x dim`,
/// flattened). Weights must already be normalized.
pub fn weighted_average(sequences: &[&[f64]], weights: &[f64], horizon: usize, dim: usize) -> MeanSequence {
    let mut out = MeanSequence::zeros(horizon, dim);
    for (seq, &w) in sequences.iter().zip(weights) {
        for (o, &s) in out.data.iter_mut().zip(seq.iter()) {
            *o += w * s;
        }
    }
    out
}

/// Deterministic noise tensor for one control step, flattened
/// `k * horizon * dim + tau * dim + channel`. Each rollout `k` owns the
/// counter-based substream `(seed, step_index, k)` consumed in
/// `(tau, channel)` order.
pub fn sample_noise(params: &MppiParams, step_index: u64, n_alpha: usize) -> Vec<f64> {
    let dim = noise_dim(params, n_alpha);
    let mut buf = vec![0.0; params.samples * params.horizon * dim];
    let sigma = sigma_vector(params, n_alpha);
    fill_noise(params, step_index, &sigma, &mut buf);
    buf
}

fn noise_dim(params: &MppiParams, n_alpha: usize) -> usize {
    match params.mode {
        MppiMode::Vanilla => params.sigma_u.len(),
        MppiMode::Br => params.sigma_u.len() + n_alpha,
    }
}

fn sigma_vector(params: &MppiParams, n_alpha: usize) -> Vec<f64> {
    let mut sigma = params.sigma_u.clone();
    if params.mode == MppiMode::Br {
        sigma.extend(std::iter::repeat(params.sigma_alpha).take(n_alpha));
    }
    sigma
}

/// Channel stride of the per-value substream index: keeps the key of a
/// control channel independent of how many rate channels follow it, so the
/// control-channel noise of both modes coincides for the same seed.
const CHANNEL_STRIDE: u64 = 1 << 16;

fn fill_noise(params: &MppiParams, step_index: u64, sigma: &[f64], buf: &mut [f64]) {
    let dim = sigma.len();
    let per_k = params.horizon * dim;
    buf.par_chunks_mut(per_k).enumerate().for_each(|(k, chunk)| {
        let base = crate::rng::stream_key(params.seed, &[0x6e01, step_index, k as u64]);
        for tau in 0..params.horizon {
            for c in 0..dim {
                let mut rng = crate::rng::substream(base, tau as u64 * CHANNEL_STRIDE + c as u64);
                chunk[tau * dim + c] = sigma[c] * rng.normal();
            }
        }
    });
}

/// Diagnostics snapshot of one control step's rollout batch.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub costs: Vec<f64>,
    pub weights: Vec<f64>,
    pub beta: f64,
    /// Rollout positions at the end of the horizon.
    pub end_positions: Vec<[f64; 2]>,
    /// Horizon trajectories of the first rollouts (for rendering fans).
    pub fans: Vec<Vec<[f64; 2]>>,
    /// Open-loop trajectory of the new mean sequence.
    pub mean_path: Vec<[f64; 2]>,
}

impl RolloutBatch {
    /// Multimodality witness: do the above-median-weight rollouts end on
    /// both sides of the line through `center` along `axis`?
    pub fn splits_around(&self, center: [f64; 2], axis: [f64; 2]) -> bool {
        let mut sorted = self.weights.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        let (mut pos, mut neg) = (false, false);
        for (end, &w) in self.end_positions.iter().zip(&self.weights) {
            if w <= median {
                continue;
            }
            let off = axis[0] * (end[1] - center[1]) - axis[1] * (end[0] - center[0]);
            if off > 0.0 {
                pos = true;
            } else if off < 0.0 {
                neg = true;
            }
            if pos && neg {
                return true;
            }
        }
        false
    }
}

/// Per-step controller output.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub step: u64,
    pub beta: f64,
    /// Effective sample size `1 / sum w_k^2`.
    pub ess: f64,
    /// Minimum barrier value at the post-step plant state.
    pub min_h: f64,
    /// Constraint residual of the executed control, after clamping.
    pub applied_residual: f64,
    pub max_rollout_residual: f64,
    pub aborts: usize,
    pub n_active: usize,
    pub weights_degenerate: bool,
    pub applied_control: Vec<f64>,
    pub applied_alpha_inc: Vec<f64>,
    pub snapshot: Option<RolloutBatch>,
}

/// Receding-horizon MPPI controller over one plant.
#[derive(Clone)]
pub struct Controller {
    pub model: RobotModel,
    pub barriers: BarrierSet,
    pub cost: CostConfig,
    pub params: MppiParams,
    pub proj_weights: ProjectionWeights,
    pub mean: MeanSequence,
    pub z: AugmentedState,
    step_index: u64,
    noise_buf: Vec<f64>,
    sigma: Vec<f64>,
    sigma_inv: Vec<f64>,
    snapshot_stride: u64,
    fan_count: usize,
}

struct Shared<'a> {
    model: &'a RobotModel,
    barriers: &'a BarrierSet,
    cost: &'a CostConfig,
    params: &'a MppiParams,
    proj_weights: &'a ProjectionWeights,
    mean: &'a MeanSequence,
    z0: &'a AugmentedState,
    sys0: &'a ConstraintSystem,
    sigma_inv: &'a [f64],
    noise: &'a [f64],
    dim: usize,
    record_fans: usize,
}

struct Scratch {
    x: [f64; 8],
    alpha: Vec<f64>,
    h_cur: Vec<f64>,
    h_next: Vec<f64>,
    u_x: [f64; 4],
    u_alpha: Vec<f64>,
    sys: ConstraintSystem,
    row: RowScratch,
    proj: ProjScratch,
}

impl Scratch {
    fn new(n_alpha: usize) -> Scratch {
        Scratch {
            x: [0.0; 8],
            alpha: vec![0.0; n_alpha],
            h_cur: vec![0.0; n_alpha],
            h_next: vec![0.0; n_alpha],
            u_x: [0.0; 4],
            u_alpha: vec![0.0; n_alpha],
            sys: ConstraintSystem::default(),
            row: RowScratch::default(),
            proj: ProjScratch::default(),
        }
    }
}

struct RolloutOut {
    cost: f64,
    end: [f64; 2],
    max_resid: f64,
    fan: Option<Vec<[f64; 2]>>,
}

impl Controller {
    pub fn new(
        model: RobotModel,
        barriers: BarrierSet,
        cost: CostConfig,
        params: MppiParams,
        proj_weights: ProjectionWeights,
        start: Vec<f64>,
    ) -> Controller {
        assert!(params.samples >= 1 && params.horizon >= 1);
        assert!(params.lambda > 0.0);
        assert!(params.gamma >= 0.0 && params.gamma <= params.lambda);
        assert_eq!(params.sigma_u.len(), model.control_dim());
        let n_alpha = barriers.len();
        let dim = noise_dim(&params, n_alpha);
        let sigma = sigma_vector(&params, n_alpha);
        let sigma_inv: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s).max(1e-300)).collect();
        let mean = MeanSequence::zeros(params.horizon, dim);
        let noise_buf = vec![0.0; params.samples * params.horizon * dim];
        Controller {
            model,
            barriers,
            cost,
            params,
            proj_weights,
            mean,
            z: AugmentedState { x: start, alpha_tilde: vec![0.0; n_alpha] },
            step_index: 0,
            noise_buf,
            sigma,
            sigma_inv,
            snapshot_stride: 0,
            fan_count: 64,
        }
    }

    /// Capture rollout batches every `stride` steps (0 disables).
    pub fn set_snapshot_stride(&mut self, stride: u64) {
        self.snapshot_stride = stride;
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    fn wants_snapshot(&self) -> bool {
        self.snapshot_stride > 0 && self.step_index % self.snapshot_stride == 0
    }

    /// One receding-horizon step: sample, roll out, weight, average, apply.
    pub fn control_step(&mut self) -> Result<StepDiagnostics> {
        let n_alpha = self.barriers.len();
        let dim = noise_dim(&self.params, n_alpha);
        let (k_total, horizon) = (self.params.samples, self.params.horizon);
        let snapshot = self.wants_snapshot();

        fill_noise(&self.params, self.step_index, &self.sigma, &mut self.noise_buf);

        // Barrier values and constraint system at the shared start state.
        let mut h0 = vec![0.0; n_alpha];
        let mut sys0 = ConstraintSystem::default();
        let mut row0 = RowScratch::default();
        let mut alpha0 = self.z.alpha_tilde.clone();
        crate::projection::values_and_system_into(
            &self.model,
            &self.barriers,
            &self.z.x,
            &mut alpha0,
            None,
            &mut h0,
            &mut row0,
            &mut sys0,
        );

        let shared = Shared {
            model: &self.model,
            barriers: &self.barriers,
            cost: &self.cost,
            params: &self.params,
            proj_weights: &self.proj_weights,
            mean: &self.mean,
            z0: &self.z,
            sys0: &sys0,
            sigma_inv: &self.sigma_inv,
            noise: &self.noise_buf,
            dim,
            record_fans: if snapshot { self.fan_count.min(k_total) } else { 0 },
        };

        let outs: Vec<RolloutOut> = (0..k_total)
            .into_par_iter()
            .map_init(
                || Scratch::new(n_alpha),
                |scratch, k| match self.params.mode {
                    MppiMode::Vanilla => rollout_vanilla_inner(&shared, scratch, k),
                    MppiMode::Br => rollout_br_inner(&shared, scratch, k),
                },
            )
            .collect();

        let costs: Vec<f64> = outs.iter().map(|o| o.cost).collect();
        let winfo = compute_weights(&costs, self.params.lambda);
        let ess = 1.0 / winfo.weights.iter().map(|w| w * w).sum::<f64>();
        let aborts = costs.iter().filter(|c| !c.is_finite()).count();
        let max_rollout_residual =
            outs.iter().map(|o| o.max_resid).fold(0.0_f64, f64::max);

        // New mean = weighted average of the sampled sequences (clamped
        // control channels, raw rate channels), accumulated in k order.
        let mut new_mean = MeanSequence::zeros(horizon, dim);
        let m = self.model.control_dim();
        let per_k = horizon * dim;
        for k in 0..k_total {
            let w = winfo.weights[k];
            if w == 0.0 {
                continue;
            }
            let chunk = &self.noise_buf[k * per_k..(k + 1) * per_k];
            for tau in 0..horizon {
                let v = self.mean.row(tau);
                let out = &mut new_mean.data[tau * dim..(tau + 1) * dim];
                for c in 0..dim {
                    let mut u = v[c] + chunk[tau * dim + c];
                    if c < m {
                        u = u.clamp(self.model.control_min[c], self.model.control_max[c]);
                    }
                    out[c] += w * u;
                }
            }
        }

        // Re-project the first averaged control at the true current state so
        // the executed input satisfies the constraints, then clamp.
        let mut applied_x = new_mean.row(0)[..m].to_vec();
        let mut applied_alpha = vec![0.0; n_alpha];
        let mut applied_residual = 0.0;
        let mut n_active = 0;
        if self.params.mode == MppiMode::Br {
            applied_alpha.copy_from_slice(&new_mean.row(0)[m..]);
            let mut proj = ProjScratch::default();
            n_active = sys0.n_active();
            project_controls_into(
                &sys0,
                &self.proj_weights,
                &mut applied_x,
                &mut applied_alpha,
                &mut proj,
            )?;
            self.model.clamp_controls(&mut applied_x);
            applied_residual = projection_residual(&sys0, &applied_x, &applied_alpha);
        } else {
            self.model.clamp_controls(&mut applied_x);
        }

        // Plant update; inactive rate channels hold the neutral prior (the
        // rollouts apply the same rule).
        let new_x = self.model.step(&self.z.x, &applied_x)?;
        let mut h_new = vec![0.0; n_alpha];
        self.barriers.values_into(&self.model, &new_x, &mut h_new);
        for (i, (a, da)) in self.z.alpha_tilde.iter_mut().zip(&applied_alpha).enumerate() {
            *a = if h_new[i] > self.barriers.h_act { 0.0 } else { *a + da };
        }
        self.z.x = new_x;
        let min_h = if n_alpha > 0 {
            self.barriers.min_value(&self.model, &self.z.x)
        } else {
            f64::INFINITY
        };

        // Snapshot before the mean shifts (records the batch that produced
        // this step's decision).
        let snap = if snapshot {
            let mean_path = self.open_loop_path(&new_mean);
            Some(RolloutBatch {
                costs,
                weights: winfo.weights.clone(),
                beta: winfo.beta,
                end_positions: outs.iter().map(|o| o.end).collect(),
                fans: outs.iter().filter_map(|o| o.fan.clone()).collect(),
                mean_path,
            })
        } else {
            None
        };

        self.mean = new_mean;
        self.mean.shift_left();
        self.step_index += 1;

        Ok(StepDiagnostics {
            step: self.step_index - 1,
            beta: winfo.beta,
            ess,
            min_h,
            applied_residual,
            max_rollout_residual,
            aborts,
            n_active,
            weights_degenerate: winfo.degenerate,
            applied_control: applied_x,
            applied_alpha_inc: applied_alpha,
            snapshot: snap,
        })
    }

    /// Deterministic open-loop propagation of a mean sequence from the
    /// current plant state (the "weighted average path" of the diagnostics).
    fn open_loop_path(&self, mean: &MeanSequence) -> Vec<[f64; 2]> {
        let n_alpha = self.barriers.len();
        let m = self.model.control_dim();
        let mut scratch = Scratch::new(n_alpha);
        let n = self.model.state_dim();
        scratch.x[..n].copy_from_slice(&self.z.x);
        scratch.alpha.copy_from_slice(&self.z.alpha_tilde);
        self.barriers.values_into(&self.model, &self.z.x, &mut scratch.h_cur);
        let mut path = Vec::with_capacity(mean.horizon + 1);
        path.push([scratch.x[0], scratch.x[1]]);
        for tau in 0..mean.horizon {
            let row = mean.row(tau);
            scratch.u_x[..m].copy_from_slice(&row[..m]);
            self.model.clamp_controls(&mut scratch.u_x[..m]);
            if self.params.mode == MppiMode::Br {
                scratch.u_alpha.copy_from_slice(&row[m..]);
                build_constraint_system_into(
                    &self.model,
                    &self.barriers,
                    &scratch.x[..n],
                    &scratch.alpha,
                    &scratch.h_cur,
                    &mut scratch.row,
                    &mut scratch.sys,
                );
                if project_controls_into(
                    &scratch.sys,
                    &self.proj_weights,
                    &mut scratch.u_x[..m],
                    &mut scratch.u_alpha,
                    &mut scratch.proj,
                )
                .is_err()
                {
                    break;
                }
                self.model.clamp_controls(&mut scratch.u_x[..m]);
                let (xs, _) = scratch.x.split_at_mut(n);
                self.model.step_in_place(xs, &scratch.u_x[..m]);
                self.barriers.values_into(&self.model, &scratch.x[..n], &mut scratch.h_next);
                for c in 0..scratch.alpha.len() {
                    scratch.alpha[c] = if scratch.h_next[c] > self.barriers.h_act {
                        0.0
                    } else {
                        scratch.alpha[c] + scratch.u_alpha[c]
                    };
                }
                std::mem::swap(&mut scratch.h_cur, &mut scratch.h_next);
                path.push([scratch.x[0], scratch.x[1]]);
                continue;
            }
            let (xs, _) = scratch.x.split_at_mut(n);
            self.model.step_in_place(xs, &scratch.u_x[..m]);
            self.barriers.values_into(&self.model, &scratch.x[..n], &mut scratch.h_next);
            std::mem::swap(&mut scratch.h_cur, &mut scratch.h_next);
            path.push([scratch.x[0], scratch.x[1]]);
        }
        path
    }
}

fn rollout_vanilla_inner(shared: &Shared<'_>, scratch: &mut Scratch, k: usize) -> RolloutOut {
    let model = shared.model;
    let (n, m) = (model.state_dim(), model.control_dim());
    let dim = shared.dim;
    let per_k = shared.params.horizon * dim;
    let noise = &shared.noise[k * per_k..(k + 1) * per_k];
    scratch.x[..n].copy_from_slice(&shared.z0.x);
    let mut total = 0.0;
    let mut fan = if k < shared.record_fans {
        let mut f = Vec::with_capacity(shared.params.horizon + 1);
        f.push([scratch.x[0], scratch.x[1]]);
        Some(f)
    } else {
        None
    };
    for tau in 0..shared.params.horizon {
        let v = shared.mean.row(tau);
        let w = &noise[tau * dim..(tau + 1) * dim];
        for c in 0..m {
            scratch.u_x[c] =
                (v[c] + w[c]).clamp(model.control_min[c], model.control_max[c]);
        }
        let (xs, _) = scratch.x.split_at_mut(n);
        model.step_in_place(xs, &scratch.u_x[..m]);
        shared.barriers.values_into(model, &scratch.x[..n], &mut scratch.h_next);
        total += cost::convergence_cost(&scratch.x[..n], shared.cost)
            + cost::violation_cost_from_values(&scratch.h_next, shared.cost)
            + cost::control_cost(
                &v[..m],
                &scratch.u_x[..m],
                &shared.sigma_inv[..m],
                shared.params.gamma,
            );
        if let Some(f) = fan.as_mut() {
            f.push([scratch.x[0], scratch.x[1]]);
        }
        if !total.is_finite() || scratch.x[..n].iter().any(|v| !v.is_finite()) {
            return RolloutOut {
                cost: f64::INFINITY,
                end: [scratch.x[0], scratch.x[1]],
                max_resid: 0.0,
                fan,
            };
        }
    }
    total += cost::terminal_cost(&scratch.x[..n], shared.cost);
    RolloutOut { cost: total, end: [scratch.x[0], scratch.x[1]], max_resid: 0.0, fan }
}

fn rollout_br_inner(shared: &Shared<'_>, scratch: &mut Scratch, k: usize) -> RolloutOut {
    let model = shared.model;
    let (n, m) = (model.state_dim(), model.control_dim());
    let dim = shared.dim;
    let per_k = shared.params.horizon * dim;
    let noise = &shared.noise[k * per_k..(k + 1) * per_k];
    scratch.x[..n].copy_from_slice(&shared.z0.x);
    scratch.alpha.copy_from_slice(&shared.z0.alpha_tilde);
    // The first substep's constraint system is shared by every rollout.
    scratch.sys.copy_from(shared.sys0);
    let mut total = 0.0;
    let mut max_resid = 0.0_f64;
    let mut fan = if k < shared.record_fans {
        let mut f = Vec::with_capacity(shared.params.horizon + 1);
        f.push([scratch.x[0], scratch.x[1]]);
        Some(f)
    } else {
        None
    };
    for tau in 0..shared.params.horizon {
        let v = shared.mean.row(tau);
        let w = &noise[tau * dim..(tau + 1) * dim];
        for c in 0..m {
            scratch.u_x[c] =
                (v[c] + w[c]).clamp(model.control_min[c], model.control_max[c]);
        }
        for c in 0..scratch.u_alpha.len() {
            scratch.u_alpha[c] = v[m + c] + w[m + c];
        }
        // Control-deviation term uses the sampled (pre-projection) input.
        if shared.params.gamma != 0.0 {
            let mut dot = 0.0;
            for c in 0..m {
                dot += v[c] * shared.sigma_inv[c] * scratch.u_x[c];
            }
            for c in 0..scratch.u_alpha.len() {
                dot += v[m + c] * shared.sigma_inv[m + c] * scratch.u_alpha[c];
            }
            total += shared.params.gamma * dot;
        }

        match project_controls_into(
            &scratch.sys,
            shared.proj_weights,
            &mut scratch.u_x[..m],
            &mut scratch.u_alpha,
            &mut scratch.proj,
        ) {
            Ok(resid) => max_resid = max_resid.max(resid),
            Err(_) => {
                return RolloutOut {
                    cost: f64::INFINITY,
                    end: [scratch.x[0], scratch.x[1]],
                    max_resid,
                    fan,
                };
            }
        }
        model.clamp_controls(&mut scratch.u_x[..m]);
        let (xs, _) = scratch.x.split_at_mut(n);
        model.step_in_place(xs, &scratch.u_x[..m]);
        // Fused pass: barrier values at the new state, the rate-state
        // update (integrate while active, neutral prior while inactive),
        // and the next substep's constraint rows, one query per barrier.
        crate::projection::values_and_system_into(
            model,
            shared.barriers,
            &scratch.x[..n],
            &mut scratch.alpha,
            Some(&scratch.u_alpha),
            &mut scratch.h_next,
            &mut scratch.row,
            &mut scratch.sys,
        );
        total += cost::convergence_cost(&scratch.x[..n], shared.cost)
            + cost::nagumo_cost_from_values(
                &scratch.h_next,
                &scratch.alpha,
                shared.barriers,
                shared.cost,
            );
        if let Some(f) = fan.as_mut() {
            f.push([scratch.x[0], scratch.x[1]]);
        }
        if !total.is_finite() || scratch.x[..n].iter().any(|v| !v.is_finite()) {
            return RolloutOut {
                cost: f64::INFINITY,
                end: [scratch.x[0], scratch.x[1]],
                max_resid,
                fan,
            };
        }
    }
    total += cost::terminal_cost(&scratch.x[..n], shared.cost);
    RolloutOut { cost: total, end: [scratch.x[0], scratch.x[1]], max_resid, fan }
}
