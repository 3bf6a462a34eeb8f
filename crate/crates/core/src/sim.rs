//! Episode simulation and logging.
//!
//! `run_episode` drives one controller against the deterministic plant until
//! the goal tolerance or the step budget is hit, recording states, applied
//! controls and per-step diagnostics. The CSV/metrics writers are pure
//! functions of the log (wall time is reported separately, never serialized,
//! so artifacts stay byte-identical across reruns).

use std::io::Write;

use crate::metrics::EpisodeMetrics;
use crate::mppi::{Controller, StepDiagnostics};
use crate::scenario::ScenarioConfig;
use crate::Result;

/// Full record of one simulated episode.
#[derive(Debug)]
pub struct EpisodeLog {
    pub config: ScenarioConfig,
    /// Plant states, `steps + 1` rows.
    pub states: Vec<Vec<f64>>,
    /// Rate-parameter states, `steps + 1` rows.
    pub alphas: Vec<Vec<f64>>,
    /// Applied controls, one row per executed step.
    pub controls: Vec<Vec<f64>>,
    /// Applied rate increments, one row per executed step.
    pub alpha_incs: Vec<Vec<f64>>,
    /// Per-step controller diagnostics (including optional batch snapshots).
    pub diags: Vec<StepDiagnostics>,
    /// Minimum barrier value at each recorded state (`steps + 1` entries).
    pub min_h: Vec<f64>,
    pub wall_time_s: f64,
}

impl EpisodeLog {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    /// First state index within the goal tolerance, if any.
    pub fn goal_reached_at(&self) -> Option<usize> {
        let goal = &self.config.goal;
        let tol = self.config.episode.goal_tolerance;
        self.states
            .iter()
            .position(|x| (x[0] - goal[0]).hypot(x[1] - goal[1]) <= tol)
    }
}

/// Build a controller for the scenario.
pub fn make_controller(cfg: &ScenarioConfig) -> Result<Controller> {
    let model = cfg.build_model()?;
    let barriers = cfg.build_barriers()?;
    let cost = cfg.build_cost();
    let params = cfg.build_params()?;
    let weights = cfg.build_proj_weights()?;
    let mut controller =
        Controller::new(model, barriers, cost, params, weights, cfg.start.clone());
    controller.set_snapshot_stride(cfg.episode.snapshot_stride);
    Ok(controller)
}

/// Run one episode to completion.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<EpisodeLog> {
    let t0 = std::time::Instant::now();
    let mut controller = make_controller(cfg)?;
    let model = controller.model.clone();
    let barriers = controller.barriers.clone();

    let mut log = EpisodeLog {
        config: cfg.clone(),
        states: vec![controller.z.x.clone()],
        alphas: vec![controller.z.alpha_tilde.clone()],
        controls: Vec::new(),
        alpha_incs: Vec::new(),
        diags: Vec::new(),
        min_h: vec![barriers.min_value(&model, &controller.z.x)],
        wall_time_s: 0.0,
    };

    let goal = &cfg.goal;
    let tol = cfg.episode.goal_tolerance;
    for _ in 0..cfg.episode.max_steps {
        let x = &controller.z.x;
        if (x[0] - goal[0]).hypot(x[1] - goal[1]) <= tol {
            break;
        }
        let diag = controller.control_step()?;
        log.controls.push(diag.applied_control.clone());
        log.alpha_incs.push(diag.applied_alpha_inc.clone());
        log.states.push(controller.z.x.clone());
        log.alphas.push(controller.z.alpha_tilde.clone());
        log.min_h.push(barriers.min_value(&model, &controller.z.x));
        log.diags.push(diag);
    }
    log.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(log)
}

/// Trajectory CSV: `step,t,x...,alpha...,u...,min_h,residual`, one row per
/// recorded state; the final row carries zero controls. Column count is
/// `2 + n + N + (m + N) + 2`.
pub fn write_csv<W: Write>(log: &EpisodeLog, mut w: W) -> Result<()> {
    let n = log.config.build_model()?.state_dim();
    let n_alpha = log.config.barrier_count();
    let m = log.config.model.control_min.len();
    let mut header = String::from("step,t");
    for i in 0..n {
        header.push_str(&format!(",x{i}"));
    }
    for i in 0..n_alpha {
        header.push_str(&format!(",alpha{i}"));
    }
    for i in 0..m {
        header.push_str(&format!(",u{i}"));
    }
    for i in 0..n_alpha {
        header.push_str(&format!(",ualpha{i}"));
    }
    header.push_str(",min_h,residual");
    writeln!(w, "{header}")?;

    let dt = log.config.model.dt;
    for row in 0..log.states.len() {
        let mut line = format!("{row},{}", fmt(row as f64 * dt));
        for v in &log.states[row] {
            line.push(',');
            line.push_str(&fmt(*v));
        }
        for v in &log.alphas[row] {
            line.push(',');
            line.push_str(&fmt(*v));
        }
        let (controls, incs, resid): (Vec<f64>, Vec<f64>, f64) = if row < log.controls.len() {
            (
                log.controls[row].clone(),
                log.alpha_incs[row].clone(),
                log.diags[row].applied_residual,
            )
        } else {
            (vec![0.0; m], vec![0.0; n_alpha], 0.0)
        };
        for v in &controls {
            line.push(',');
            line.push_str(&fmt(*v));
        }
        for v in &incs {
            line.push(',');
            line.push_str(&fmt(*v));
        }
        line.push(',');
        line.push_str(&fmt(log.min_h[row]));
        line.push(',');
        line.push_str(&fmt(resid));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Shortest round-trip decimal formatting (the default for f64), with a
/// stable `-0`-free zero.
fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Snapshot CSV: `step,series,tau,x,y` where `series` is `fan<k>` or `mean`.
pub fn write_snapshots_csv<W: Write>(log: &EpisodeLog, mut w: W) -> Result<()> {
    writeln!(w, "step,series,tau,x,y")?;
    for diag in &log.diags {
        if let Some(snap) = &diag.snapshot {
            for (k, fan) in snap.fans.iter().enumerate() {
                for (tau, p) in fan.iter().enumerate() {
                    writeln!(w, "{},fan{k},{tau},{},{}", diag.step, fmt(p[0]), fmt(p[1]))?;
                }
            }
            for (tau, p) in snap.mean_path.iter().enumerate() {
                writeln!(w, "{},mean,{tau},{},{}", diag.step, fmt(p[0]), fmt(p[1]))?;
            }
        }
    }
    Ok(())
}

/// Rebuild render snapshots from a snapshot CSV.
pub fn read_snapshots_csv(text: &str) -> Result<Vec<crate::render::SnapshotPaths>> {
    use crate::render::SnapshotPaths;
    let mut out: Vec<SnapshotPaths> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || crate::Error::Config {
            path: format!("snapshots.csv:{}", ln + 1),
            message: "expected `step,series,tau,x,y`".into(),
        };
        if fields.len() != 5 {
            return Err(bad());
        }
        let step: u64 = fields[0].parse().map_err(|_| bad())?;
        let x: f64 = fields[3].parse().map_err(|_| bad())?;
        let y: f64 = fields[4].parse().map_err(|_| bad())?;
        if out.last().map(|s| s.step) != Some(step) {
            out.push(SnapshotPaths { step, fans: Vec::new(), mean: Vec::new() });
        }
        let snap = out.last_mut().unwrap();
        if fields[1] == "mean" {
            snap.mean.push([x, y]);
        } else {
            let k: usize = fields[1]
                .strip_prefix("fan")
                .and_then(|s| s.parse().ok())
                .ok_or_else(bad)?;
            while snap.fans.len() <= k {
                snap.fans.push(Vec::new());
            }
            snap.fans[k].push([x, y]);
        }
    }
    Ok(out)
}

/// Extract the state rows from a trajectory CSV (written by [`write_csv`]).
pub fn read_states_csv(text: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 + n {
            return Err(crate::Error::Config {
                path: format!("trajectory.csv:{}", ln + 1),
                message: format!("expected at least {} columns", 2 + n),
            });
        }
        let mut state = Vec::with_capacity(n);
        for f in &fields[2..2 + n] {
            state.push(f.parse().map_err(|_| crate::Error::Config {
                path: format!("trajectory.csv:{}", ln + 1),
                message: "bad float".into(),
            })?);
        }
        out.push(state);
    }
    Ok(out)
}

/// Episode metrics from a finished log.
pub fn compute_metrics(log: &EpisodeLog) -> EpisodeMetrics {
    let steps_to_goal = log.goal_reached_at();
    let success =
        steps_to_goal.map(|s| s <= log.config.episode.max_steps).unwrap_or(false);
    let mut path_length = 0.0;
    for w in log.states.windows(2) {
        path_length += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
    }
    let min_h = log.min_h.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let violation_steps = log.min_h.iter().filter(|v| **v < 0.0).count();
    let residuals: Vec<f64> = log.diags.iter().map(|d| d.applied_residual).collect();
    let mean_residual = if residuals.is_empty() {
        0.0
    } else {
        residuals.iter().sum::<f64>() / residuals.len() as f64
    };
    let max_residual = residuals.iter().fold(0.0_f64, |a, v| a.max(*v));
    EpisodeMetrics {
        success,
        steps_to_goal,
        path_length,
        min_h,
        violation_steps,
        mean_residual,
        max_residual,
        wall_time_s: log.wall_time_s,
    }
}

/// Metrics as a deterministic TOML document (wall time excluded by design:
/// artifacts must be byte-identical across reruns of the same seed).
pub fn write_metrics<W: Write>(metrics: &EpisodeMetrics, mut w: W) -> Result<()> {
    writeln!(w, "success = {}", metrics.success)?;
    match metrics.steps_to_goal {
        Some(s) => writeln!(w, "steps_to_goal = {s}")?,
        None => writeln!(w, "steps_to_goal = -1")?,
    }
    writeln!(w, "path_length = {}", fmt(metrics.path_length))?;
    writeln!(w, "min_h = {}", fmt(metrics.min_h))?;
    writeln!(w, "violation_steps = {}", metrics.violation_steps)?;
    writeln!(w, "mean_residual = {}", fmt(metrics.mean_residual))?;
    writeln!(w, "max_residual = {}", fmt(metrics.max_residual))?;
    Ok(())
}
