//! SVG rendering of episodes: obstacles, buffer rings, executed path, and
//! optional rollout fans (sampled paths green, weighted-average path blue).
//!
//! Pure function of the log; numbers are formatted at fixed precision so the
//! output is byte-stable.

use crate::scenario::ScenarioConfig;
use crate::sim::EpisodeLog;

/// Fan and mean paths captured at one snapshot step.
#[derive(Debug, Clone)]
pub struct SnapshotPaths {
    pub step: u64,
    pub fans: Vec<Vec<[f64; 2]>>,
    pub mean: Vec<[f64; 2]>,
}

/// Everything the renderer needs; can be reconstructed from logged CSVs.
pub struct RenderInput<'a> {
    pub config: &'a ScenarioConfig,
    pub states: &'a [Vec<f64>],
    pub snapshots: &'a [SnapshotPaths],
}

struct Frame {
    x_min: f64,
    y_max: f64,
    scale: f64,
    pad: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            (p[0] - self.x_min) * self.scale + self.pad,
            (self.y_max - p[1]) * self.scale + self.pad,
        )
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Render an episode to an SVG document.
pub fn render_svg(log: &EpisodeLog) -> String {
    let snapshots: Vec<SnapshotPaths> = log
        .diags
        .iter()
        .filter_map(|d| {
            d.snapshot.as_ref().map(|s| SnapshotPaths {
                step: d.step,
                fans: s.fans.clone(),
                mean: s.mean_path.clone(),
            })
        })
        .collect();
    render_svg_parts(&RenderInput { config: &log.config, states: &log.states, snapshots: &snapshots })
}

/// Render from reconstructed parts (used by the log-replay path).
pub fn render_svg_parts(input: &RenderInput<'_>) -> String {
    let cfg = input.config;
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut grow = |x: f64, y: f64| {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    };
    for s in input.states {
        grow(s[0], s[1]);
    }
    grow(cfg.start[0], cfg.start[1]);
    grow(cfg.goal[0], cfg.goal[1]);
    for ob in &cfg.obstacles {
        grow(ob.center[0] - ob.radius, ob.center[1] - ob.radius);
        grow(ob.center[0] + ob.radius, ob.center[1] + ob.radius);
    }
    let margin = 1.0;
    x_min -= margin;
    x_max += margin;
    y_min -= margin;
    y_max += margin;

    let scale = cfg.render.scale;
    let pad = 10.0;
    let frame = Frame {
        x_min,
        y_max,
        scale,
        pad,
        width: (x_max - x_min) * scale + 2.0 * pad,
        height: (y_max - y_min) * scale + 2.0 * pad,
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        px(frame.width),
        px(frame.height),
        px(frame.width),
        px(frame.height)
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Buffer rings first (dashed), then the solid obstacle bodies.
    let robot_radius = match cfg.robot.shape.as_str() {
        "circle" => cfg.robot.radius,
        _ => 0.0,
    };
    for ob in &cfg.obstacles {
        let (cx, cy) = frame.map(ob.center);
        let ring = if ob.pointcloud == 0 {
            // Squared-form barrier: h = buffer at |p-c|^2 = (r+rr)^2 + buffer.
            let rr = ob.radius + robot_radius;
            (rr * rr + cfg.barriers.buffer).sqrt()
        } else {
            ob.radius + cfg.barriers.margin + cfg.barriers.buffer
        };
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"6 4\" stroke-width=\"1\"/>\n",
            px(cx),
            px(cy),
            px(ring * scale)
        ));
    }
    for ob in &cfg.obstacles {
        let (cx, cy) = frame.map(ob.center);
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#2a2a2a\"/>\n",
            px(cx),
            px(cy),
            px(ob.radius * scale)
        ));
        if ob.pointcloud > 0 {
            for j in 0..ob.pointcloud {
                let a = 2.0 * std::f64::consts::PI * j as f64 / ob.pointcloud as f64;
                let (qx, qy) = frame
                    .map([ob.center[0] + ob.radius * a.cos(), ob.center[1] + ob.radius * a.sin()]);
                out.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"#cc4444\"/>\n",
                    px(qx),
                    px(qy)
                ));
            }
        }
    }
    for wall in &cfg.walls {
        // Draw the boundary line n.p = offset clipped to the frame diagonal.
        let n = wall.normal;
        let len = n[0].hypot(n[1]);
        let (nx, ny) = (n[0] / len, n[1] / len);
        let base = [nx * wall.offset, ny * wall.offset];
        let dir = [-ny, nx];
        let reach = (x_max - x_min) + (y_max - y_min);
        let a = frame.map([base[0] - dir[0] * reach, base[1] - dir[1] * reach]);
        let b = frame.map([base[0] + dir[0] * reach, base[1] + dir[1] * reach]);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#2a2a2a\" stroke-width=\"2\"/>\n",
            px(a.0),
            px(a.1),
            px(b.0),
            px(b.1)
        ));
    }

    // Rollout fans (sampled paths, green) and mean paths (blue).
    for snap in input.snapshots {
        for fan in &snap.fans {
            out.push_str("<polyline points=\"");
            for p in fan {
                let (x, y) = frame.map(*p);
                out.push_str(&format!("{},{} ", px(x), px(y)));
            }
            out.push_str("\" fill=\"none\" stroke=\"#3cb054\" stroke-width=\"0.7\" opacity=\"0.35\"/>\n");
        }
        out.push_str("<polyline points=\"");
        for p in &snap.mean {
            let (x, y) = frame.map(*p);
            out.push_str(&format!("{},{} ", px(x), px(y)));
        }
        out.push_str("\" fill=\"none\" stroke=\"#2060c0\" stroke-width=\"1.6\" opacity=\"0.8\"/>\n");
    }

    // Executed path.
    out.push_str("<polyline points=\"");
    for s in input.states {
        let (x, y) = frame.map([s[0], s[1]]);
        out.push_str(&format!("{},{} ", px(x), px(y)));
    }
    out.push_str("\" fill=\"none\" stroke=\"#101820\" stroke-width=\"2.2\"/>\n");

    // Start and goal markers.
    let (sx, sy) = frame.map([cfg.start[0], cfg.start[1]]);
    let (gx, gy) = frame.map([cfg.goal[0], cfg.goal[1]]);
    out.push_str(&format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"#3cb054\"/>\n",
        px(sx),
        px(sy)
    ));
    out.push_str(&format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#c03030\" stroke-width=\"2\"/>\n",
        px(gx),
        px(gy),
        px(cfg.episode.goal_tolerance * scale)
    ));
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;
    use crate::sim::run_episode;

    fn scenario(obstacles: &str) -> ScenarioConfig {
        ScenarioConfig::parse(&format!(
            r#"
start = [0.0, 0.0]
goal = [1.0, 0.0]

[model]
name = "si"
dt = 0.05
control_min = [-2.0, -2.0]
control_max = [2.0, 2.0]

[cost]
q_goal = [1.0, 1.0]

[mppi]
samples = 16
horizon = 8
sigma_u = [0.5, 0.5]
seed = 3

[episode]
max_steps = 60
goal_tolerance = 0.2
snapshot_stride = 5
{obstacles}
"#
        ))
        .unwrap()
    }

    #[test]
    fn svg_deterministic_and_well_formed() {
        let cfg = scenario("[[obstacles]]\ncenter = [0.5, 0.5]\nradius = 0.2\n");
        let log = run_episode(&cfg).unwrap();
        let svg = render_svg(&log);
        let log2 = run_episode(&cfg).unwrap();
        assert_eq!(svg, render_svg(&log2));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // Balanced: every circle/polyline element self-closes.
        assert_eq!(svg.matches("<svg").count(), 1);
        assert_eq!(svg.matches("</svg>").count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn no_obstacles_renders_path_only() {
        let cfg = scenario("");
        let log = run_episode(&cfg).unwrap();
        let svg = render_svg(&log);
        assert!(svg.contains("polyline"));
    }

    #[test]
    fn obstacle_radius_scales_linearly() {
        let cfg = scenario("[[obstacles]]\ncenter = [0.5, 0.5]\nradius = 0.25\n");
        let log = run_episode(&cfg).unwrap();
        let svg = render_svg(&log);
        let expect = format!("r=\"{:.2}\"", 0.25 * cfg.render.scale);
        assert!(svg.contains(&expect), "{svg}");
    }
}
