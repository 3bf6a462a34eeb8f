//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`).
//!
//! Tolerances and thresholds are pinned here, not configurable.

use br_mppi::barrier::{Barrier, BarrierSet};
use br_mppi::cost::CostConfig;
use br_mppi::dynamics::{ModelKind, RobotModel};
use br_mppi::geometry::{self, network::train_sdf, Activation, ShapeDescriptor, TrainConfig};
use br_mppi::mppi::{compute_weights, Controller, MppiMode, MppiParams, MeanSequence, weighted_average};
use br_mppi::projection::{
    kkt_reference_solution, project_controls, projection_residual, ConstraintSystem,
    ProjectionWeights,
};
use br_mppi::rng::CounterRng;
use br_mppi::scenario::{builtin, ScenarioConfig};
use br_mppi::sim::{self, compute_metrics, run_episode};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

/// 1. Projection correctness: 10,000 random well-conditioned systems match
///    the dense KKT oracle within 1e-8 and are feasible to 1e-8, in < 5 s.
#[test]
fn criterion_1_projection_matches_kkt_oracle() {
    let mut rng = CounterRng::from_parts(0xacc1, &[0]);
    let t0 = std::time::Instant::now();
    let mut worst_gap = 0.0_f64;
    let mut worst_resid = 0.0_f64;
    for _ in 0..10_000 {
        let m = 1 + (rng.next_u64_value() % 4) as usize;
        let na = 1 + (rng.next_u64_value() % 6) as usize;
        let mut sys = ConstraintSystem { m, ..Default::default() };
        for i in 0..na {
            sys.active.push(i);
            for _ in 0..m {
                sys.rows_g.push(rng.uniform_in(-2.0, 2.0));
            }
            let v = rng.uniform_in(0.2, 2.0);
            sys.rows_h.push(if rng.uniform() < 0.5 { -v } else { v });
            sys.b.push(rng.uniform_in(-1.5, 1.5));
        }
        let weights = ProjectionWeights {
            q1: (0..m).map(|_| rng.uniform_in(0.5, 2.0)).collect(),
            q_alpha: rng.uniform_in(0.5, 20.0),
        };
        let ux0: Vec<f64> = (0..m).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let ua0: Vec<f64> = (0..na).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let (ux, ua) = project_controls(&sys, &ux0, &ua0, &weights).unwrap();
        worst_resid = worst_resid.max(projection_residual(&sys, &ux, &ua));
        let (kx, ka) = kkt_reference_solution(&sys, &ux0, &ua0, &weights).unwrap();
        for (a, b) in ux.iter().zip(&kx) {
            worst_gap = worst_gap.max((a - b).abs());
        }
        for i in 0..na {
            worst_gap = worst_gap.max((ua[sys.active[i]] - ka[i]).abs());
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        "1 (projection vs KKT oracle)",
        worst_gap < 1e-8 && worst_resid < 1e-8 && elapsed < 5.0,
        &format!(
            "10000 systems: max oracle gap {worst_gap:.2e}, max residual {worst_resid:.2e}, {elapsed:.2} s"
        ),
    );
}

fn si_controller(
    barriers: BarrierSet,
    goal: Vec<f64>,
    start: Vec<f64>,
    bound: f64,
    sigma: f64,
    seed: u64,
) -> Controller {
    let model = RobotModel::with_limit(ModelKind::Si, 0.05, bound);
    let cost = CostConfig {
        goal,
        q_goal: vec![1.0, 1.0],
        terminal_scale: 5.0,
        violation_penalty: 1e4,
        h_floor: 1e-3,
    };
    let params = MppiParams {
        mode: MppiMode::Br,
        samples: 128,
        horizon: 12,
        sigma_u: vec![sigma, sigma],
        sigma_alpha: 0.08,
        lambda: 2.0,
        gamma: 0.1,
        seed,
    };
    Controller::new(model, barriers, cost, params, ProjectionWeights::identity(2, 1.0), start)
}

/// 2. Barrier-rate equality on the true propagated dynamics.
///    Half-plane + SI is Taylor-exact: |h' - (1 - alpha) h| < 1e-9 per step
///    over a 100-step episode. Circle-squared + SI at dt = 0.05 stays within
///    1e-3 relative error per active step.
#[test]
fn criterion_2_barrier_rate_equality() {
    // Exact case: linear barrier.
    let set = BarrierSet::new(
        vec![Barrier::Halfplane { normal: [1.0, 0.0], offset: 0.0, buffer: 0.4 }],
        vec![],
        0.5,
        f64::INFINITY,
    );
    let model = RobotModel::with_limit(ModelKind::Si, 0.05, 50.0);
    let mut c = si_controller(set.clone(), vec![-0.5, 0.0], vec![1.5, 0.0], 50.0, 0.4, 5);
    let mut worst_exact = 0.0_f64;
    for _ in 0..100 {
        let h_t = set.value(0, &model, &c.z.x);
        let alpha_before = c.z.alpha_tilde[0];
        let diag = c.control_step().unwrap();
        let h_next = set.value(0, &model, &c.z.x);
        let alpha_t = alpha_before + diag.applied_alpha_inc[0];
        worst_exact = worst_exact.max((h_next - (1.0 - alpha_t) * h_t).abs());
    }

    // First-order case: circle-squared barrier, moderate speeds, clearance
    // kept at h >= 1 so the quadratic Taylor remainder stays below 1e-3
    // relative.
    let circle = BarrierSet::new(
        vec![Barrier::Circle {
            center: [2.0, 1.3],
            radius: 0.5,
            robot_radius: 0.0,
            buffer: 0.5,
        }],
        vec![],
        0.5,
        3.0,
    );
    let mut c2 = si_controller(circle.clone(), vec![4.0, 0.0], vec![0.0, 0.0], 0.4, 0.15, 9);
    let mut worst_rel = 0.0_f64;
    let mut active_steps = 0;
    let mut worst_lin_resid = 0.0_f64;
    for _ in 0..100 {
        let h_t = circle.value(0, &model, &c2.z.x);
        let alpha_before = c2.z.alpha_tilde[0];
        let diag = c2.control_step().unwrap();
        if h_t > 3.0 {
            continue; // row inactive: no equality imposed at this step
        }
        active_steps += 1;
        let h_next = circle.value(0, &model, &c2.z.x);
        let alpha_t = alpha_before + diag.applied_alpha_inc[0];
        worst_rel = worst_rel.max((h_next - (1.0 - alpha_t) * h_t).abs() / h_t.abs());
        worst_lin_resid = worst_lin_resid.max(diag.applied_residual);
    }
    report(
        "2 (barrier-rate equality)",
        worst_exact < 1e-9 && worst_rel < 1e-3 && active_steps > 20 && worst_lin_resid < 1e-8,
        &format!(
            "half-plane max |err| {worst_exact:.2e}; circle max relative err {worst_rel:.2e} over {active_steps} active steps (linearized residual {worst_lin_resid:.2e})"
        ),
    );
}

/// 3. Safety: slalom and hexagon_si with the shipped settings (K = 1000,
///    H = 30) finish with zero violation steps on every one of 10 seeds.
#[test]
fn criterion_3_safety_across_seeds() {
    let mut all = true;
    let mut detail = String::new();
    for name in ["slalom", "hexagon_si"] {
        let base = builtin(name).unwrap();
        assert_eq!(base.mppi.samples, 1000);
        assert_eq!(base.mppi.horizon, 30);
        let mut violations = 0usize;
        let mut min_h = f64::INFINITY;
        for seed in 0..10u64 {
            let cfg = base
                .with_overrides(&[("mppi.seed".into(), seed.to_string())])
                .unwrap();
            let metrics = compute_metrics(&run_episode(&cfg).unwrap());
            violations += metrics.violation_steps;
            min_h = min_h.min(metrics.min_h);
        }
        detail.push_str(&format!("{name}: {violations} violation steps, min_h {min_h:.4}; "));
        all &= violations == 0;
    }
    report("3 (safety property)", all, &detail);
}

/// 4. Sample efficiency in `narrow_gap`: the barrier-rate controller at
///    K = 1000 must beat vanilla at K = 1000 by at least 0.3 success rate,
///    while vanilla at K = 20000 must come within 0.2 of it.
#[test]
fn criterion_4_sample_efficiency() {
    let base = builtin("narrow_gap").unwrap();
    let rate = |mode: &str, k: usize| -> f64 {
        let mut ok = 0;
        for seed in 0..10u64 {
            let cfg = base
                .with_overrides(&[
                    ("mppi.mode".into(), mode.into()),
                    ("mppi.samples".into(), k.to_string()),
                    ("mppi.seed".into(), seed.to_string()),
                ])
                .unwrap();
            ok += compute_metrics(&run_episode(&cfg).unwrap()).success as u32;
        }
        ok as f64 / 10.0
    };
    let t0 = std::time::Instant::now();
    let br_1k = rate("br", 1000);
    let van_1k = rate("vanilla", 1000);
    let van_20k = rate("vanilla", 20_000);
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = br_1k >= van_1k + 0.3 && van_20k >= br_1k - 0.2;
    report(
        "4 (sample efficiency)",
        pass,
        &format!(
            "br@1000 {br_1k:.1}, vanilla@1000 {van_1k:.1}, vanilla@20000 {van_20k:.1} ({elapsed:.0} s total)"
        ),
    );
}

/// 5. Multimodality witness: in slalom, above-median-weight rollouts pass on
///    both sides of some obstacle at some control step, for >= 8 of 10 seeds.
#[test]
fn criterion_5_multimodal_rollouts() {
    let base = builtin("slalom").unwrap();
    let axis = {
        let dx = base.goal[0] - base.start[0];
        let dy = base.goal[1] - base.start[1];
        let n = dx.hypot(dy);
        [dx / n, dy / n]
    };
    let centers: Vec<[f64; 2]> = base.obstacles.iter().map(|o| o.center).collect();
    let mut witnesses = 0;
    for seed in 0..10u64 {
        let cfg = base
            .with_overrides(&[
                ("mppi.seed".into(), seed.to_string()),
                ("episode.snapshot_stride".into(), "1".into()),
            ])
            .unwrap();
        let log = run_episode(&cfg).unwrap();
        let found = log.diags.iter().any(|d| {
            d.snapshot
                .as_ref()
                .map(|snap| centers.iter().any(|c| snap.splits_around(*c, axis)))
                .unwrap_or(false)
        });
        witnesses += found as u32;
    }
    report(
        "5 (multimodal rollouts)",
        witnesses >= 8,
        &format!("witness found in {witnesses}/10 seeds"),
    );
}

/// 6. SDF training: circle robot model reaches held-out mean absolute error
///    < 0.02 m, mean Eikonal deviation < 0.1 inside the 0.3 m band, exact
///    gradients (vs finite differences, 1e-4), in under 2 minutes.
#[test]
fn criterion_6_sdf_training() {
    let shape = ShapeDescriptor::Circle { radius: 0.5 };
    let data = geometry::sample_training_set(&shape, 5000, 0.5, 0);
    let cfg = TrainConfig {
        lambda_eikonal: 0.1,
        learning_rate: 1e-3,
        epochs: 300,
        batch_size: 128,
        rng_seed: 0,
    };
    let t0 = std::time::Instant::now();
    let (model, _report) = train_sdf(&data, &cfg, &[2, 64, 64, 1], Activation::Tanh).unwrap();
    let train_s = t0.elapsed().as_secs_f64();

    let held_out = geometry::sample_training_set(&shape, 1000, 0.5, 1);
    let mut mae = 0.0;
    let mut eik = 0.0;
    let mut eik_n = 0;
    for (p, d) in &held_out.samples {
        mae += (model.eval(*p) - d).abs();
        if d.abs() < 0.3 {
            let g = model.gradient(*p);
            eik += (g[0].hypot(g[1]) - 1.0).abs();
            eik_n += 1;
        }
    }
    mae /= held_out.samples.len() as f64;
    eik /= eik_n as f64;

    let mut rng = CounterRng::from_parts(2, &[0]);
    let mut worst_fd = 0.0_f64;
    for _ in 0..100 {
        let p = [rng.uniform_in(-0.8, 0.8), rng.uniform_in(-0.8, 0.8)];
        let g = model.gradient(p);
        let e = 1e-6;
        let fdx = (model.eval([p[0] + e, p[1]]) - model.eval([p[0] - e, p[1]])) / (2.0 * e);
        let fdy = (model.eval([p[0], p[1] + e]) - model.eval([p[0], p[1] - e])) / (2.0 * e);
        worst_fd = worst_fd.max((g[0] - fdx).abs().max((g[1] - fdy).abs()));
    }
    report(
        "6 (SDF training)",
        mae < 0.02 && eik < 0.1 && worst_fd < 1e-4 && train_s < 120.0,
        &format!(
            "held-out mae {mae:.4} m, band eikonal dev {eik:.4}, grad-vs-FD {worst_fd:.2e}, {train_s:.0} s"
        ),
    );
}

/// 7. MPPI kernel identities.
#[test]
fn criterion_7_mppi_kernel_identities() {
    // Beta-shift invariance, exact.
    let mut rng = CounterRng::from_parts(3, &[0]);
    let mut shift_ok = true;
    for _ in 0..100 {
        let costs: Vec<f64> = (0..32).map(|_| rng.uniform_in(-10.0, 10.0)).collect();
        let offset = rng.uniform_in(-50.0, 50.0);
        let shifted: Vec<f64> = costs.iter().map(|c| c + offset).collect();
        let a = compute_weights(&costs, 1.7);
        let b = compute_weights(&shifted, 1.7);
        shift_ok &= a
            .weights
            .iter()
            .zip(&b.weights)
            .all(|(x, y)| (x - y).abs() < 1e-12);
    }

    // Uniform weights for equal costs.
    let uniform = compute_weights(&[4.2; 8], 0.9);
    let uniform_ok = uniform.weights.iter().all(|w| (w - 0.125).abs() < 1e-15);

    // K = 1 average returns the single sample.
    let seq = vec![0.5, -1.5, 2.0, 0.0];
    let avg = weighted_average(&[&seq], &[1.0], 2, 2);
    let k1_ok = avg.data == seq;

    // Derived weight pair for a cost gap of lambda * ln 2.
    let lambda = 0.7;
    let pair = compute_weights(&[0.0, lambda * (2.0_f64).ln()], lambda);
    let pair_ok =
        (pair.weights[0] - 2.0 / 3.0).abs() < 1e-12 && (pair.weights[1] - 1.0 / 3.0).abs() < 1e-12;

    report(
        "7 (MPPI kernel identities)",
        shift_ok && uniform_ok && k1_ok && pair_ok,
        &format!("shift {shift_ok}, uniform {uniform_ok}, k=1 {k1_ok}, ln2 pair {pair_ok}"),
    );
}

/// 8. Determinism: identical seeds give byte-identical CSV, metrics and SVG.
#[test]
fn criterion_8_determinism() {
    let cfg = builtin("slalom")
        .unwrap()
        .with_overrides(&[("episode.snapshot_stride".into(), "10".into())])
        .unwrap();
    let artifacts = |cfg: &ScenarioConfig| -> (Vec<u8>, Vec<u8>, String) {
        let log = run_episode(cfg).unwrap();
        let mut csv = Vec::new();
        sim::write_csv(&log, &mut csv).unwrap();
        let mut metrics = Vec::new();
        sim::write_metrics(&compute_metrics(&log), &mut metrics).unwrap();
        (csv, metrics, br_mppi::render::render_svg(&log))
    };
    let (csv_a, met_a, svg_a) = artifacts(&cfg);
    let (csv_b, met_b, svg_b) = artifacts(&cfg);
    report(
        "8 (determinism)",
        csv_a == csv_b && met_a == met_b && svg_a == svg_b,
        &format!(
            "csv {} bytes, metrics {} bytes, svg {} bytes, all identical across reruns",
            csv_a.len(),
            met_a.len(),
            svg_a.len()
        ),
    );
}

/// 9. Performance envelope: one barrier-rate control step in corridor_pq
///    (K = 1000, H = 30, point clouds active) completes in < 50 ms.
#[test]
fn criterion_9_control_step_budget() {
    let cfg = builtin("corridor_pq").unwrap();
    assert_eq!(cfg.mppi.samples, 1000);
    assert_eq!(cfg.mppi.horizon, 30);
    let mut controller = sim::make_controller(&cfg).unwrap();
    let mut n_active_max = 0usize;
    for _ in 0..40 {
        let d = controller.control_step().unwrap();
        n_active_max = n_active_max.max(d.n_active);
    }
    let mut times = Vec::new();
    for _ in 0..20 {
        let t0 = std::time::Instant::now();
        let d = controller.control_step().unwrap();
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        n_active_max = n_active_max.max(d.n_active);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = times[times.len() / 2];
    report(
        "9 (real-time budget)",
        median < 50.0 && n_active_max <= 40,
        &format!("median control step {median:.1} ms (n_active <= {n_active_max})"),
    );
}
