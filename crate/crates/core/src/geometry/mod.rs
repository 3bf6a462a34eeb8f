//! Robot body geometry as signed distance functions.
//!
//! Analytic SDFs (with exact gradients and Hessians) for the parametric
//! shapes used by the scenario library, plus a small trainable MLP model in
//! [`network`]. Sign convention: negative strictly inside the body, zero on
//! the surface, positive outside.

pub mod network;

pub use network::{Activation, SdfModel, TrainConfig, TrainReport};

use crate::rng::CounterRng;

/// Parametric robot body shape, centered at the body frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeDescriptor {
    /// Degenerate point body; the SDF is the distance to the origin.
    Point,
    Circle { radius: f64 },
    Rectangle { half_x: f64, half_y: f64 },
    /// Regular hexagon with a vertex on the +x axis.
    Hexagon { circumradius: f64 },
}

/// Labeled SDF samples `(point, signed distance)`.
#[derive(Debug, Clone)]
pub struct SdfDataset {
    pub samples: Vec<([f64; 2], f64)>,
}

impl ShapeDescriptor {
    /// Polygon vertices in CCW order; `None` for point/circle.
    /// The fixed enumeration below is the tie-break order for gradients.
    pub fn vertices(&self) -> Option<Vec<[f64; 2]>> {
        match *self {
            ShapeDescriptor::Rectangle { half_x, half_y } => Some(vec![
                [half_x, -half_y],
                [half_x, half_y],
                [-half_x, half_y],
                [-half_x, -half_y],
            ]),
            ShapeDescriptor::Hexagon { circumradius } => Some(
                (0..6)
                    .map(|k| {
                        let a = std::f64::consts::FRAC_PI_3 * k as f64;
                        [circumradius * a.cos(), circumradius * a.sin()]
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Half-extents of the axis-aligned bounding box.
    pub fn bounding_half_extent(&self) -> (f64, f64) {
        match *self {
            ShapeDescriptor::Point => (0.0, 0.0),
            ShapeDescriptor::Circle { radius } => (radius, radius),
            ShapeDescriptor::Rectangle { half_x, half_y } => (half_x, half_y),
            ShapeDescriptor::Hexagon { circumradius } => {
                (circumradius, circumradius * 0.75_f64.sqrt())
            }
        }
    }

    /// Radius of the smallest origin-centered circle containing the body.
    pub fn circumradius(&self) -> f64 {
        match *self {
            ShapeDescriptor::Point => 0.0,
            ShapeDescriptor::Circle { radius } => radius,
            ShapeDescriptor::Rectangle { half_x, half_y } => half_x.hypot(half_y),
            ShapeDescriptor::Hexagon { circumradius } => circumradius,
        }
    }

    /// Exact signed distance from `p` to the body surface.
    pub fn sdf(&self, p: [f64; 2]) -> f64 {
        match *self {
            ShapeDescriptor::Point => p[0].hypot(p[1]),
            ShapeDescriptor::Circle { radius } => p[0].hypot(p[1]) - radius,
            _ => {
                let verts = self.vertices().expect("polygon shape");
                let (dist, _, _, inside) = polygon_closest(&verts, p);
                if inside {
                    -dist
                } else {
                    dist
                }
            }
        }
    }

    /// Gradient of the SDF; unit norm wherever the SDF is differentiable.
    ///
    /// At non-differentiable points the subgradient is chosen
    /// deterministically: exact body center maps to `(1, 0)`, polygon ties
    /// resolve to the lowest edge index in the fixed enumeration.
    pub fn sdf_gradient(&self, p: [f64; 2]) -> [f64; 2] {
        if p[0] == 0.0 && p[1] == 0.0 {
            return [1.0, 0.0];
        }
        match *self {
            ShapeDescriptor::Point | ShapeDescriptor::Circle { .. } => {
                let n = p[0].hypot(p[1]);
                [p[0] / n, p[1] / n]
            }
            _ => {
                let verts = self.vertices().expect("polygon shape");
                let (dist, edge, q, inside) = polygon_closest(&verts, p);
                if dist > 1e-12 {
                    let s = if inside { -1.0 } else { 1.0 };
                    [s * (p[0] - q[0]) / dist, s * (p[1] - q[1]) / dist]
                } else {
                    // On the boundary: outward normal of the owning edge.
                    edge_normal(&verts, edge)
                }
            }
        }
    }

    /// Hessian of the SDF (symmetric 2x2, row-major `[hxx, hxy, hyx, hyy]`).
    ///
    /// Zero along flat faces and inside polygons; curvature `1/d` around
    /// circles and polygon vertices.
    pub fn sdf_hessian(&self, p: [f64; 2]) -> [f64; 4] {
        self.sdf_full(p).2
    }

    /// Value, gradient and Hessian from a single distance query.
    pub fn sdf_full(&self, p: [f64; 2]) -> (f64, [f64; 2], [f64; 4]) {
        let curvature = |c: [f64; 2]| -> [f64; 4] {
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            let d = (dx * dx + dy * dy).sqrt();
            if d < 1e-9 {
                return [0.0; 4];
            }
            let (ux, uy) = (dx / d, dy / d);
            [(1.0 - ux * ux) / d, -ux * uy / d, -ux * uy / d, (1.0 - uy * uy) / d]
        };
        match *self {
            ShapeDescriptor::Point | ShapeDescriptor::Circle { .. } => {
                let r = if let ShapeDescriptor::Circle { radius } = *self { radius } else { 0.0 };
                let norm = p[0].hypot(p[1]);
                let grad = if norm < 1e-12 { [1.0, 0.0] } else { [p[0] / norm, p[1] / norm] };
                (norm - r, grad, curvature([0.0, 0.0]))
            }
            _ => {
                let verts = self.vertices().expect("polygon shape");
                let (dist, edge, q, inside) = polygon_closest(&verts, p);
                let value = if inside { -dist } else { dist };
                let grad = if p[0] == 0.0 && p[1] == 0.0 {
                    [1.0, 0.0]
                } else if dist > 1e-12 {
                    let s = if inside { -1.0 } else { 1.0 };
                    [s * (p[0] - q[0]) / dist, s * (p[1] - q[1]) / dist]
                } else {
                    edge_normal(&verts, edge)
                };
                let hess = if inside || dist < 1e-12 {
                    [0.0; 4]
                } else {
                    let is_vertex = verts
                        .iter()
                        .any(|v| (v[0] - q[0]).abs() < 1e-12 && (v[1] - q[1]).abs() < 1e-12);
                    if is_vertex {
                        curvature(q)
                    } else {
                        [0.0; 4]
                    }
                };
                (value, grad, hess)
            }
        }
    }
}

fn edge_normal(verts: &[[f64; 2]], edge: usize) -> [f64; 2] {
    let a = verts[edge];
    let b = verts[(edge + 1) % verts.len()];
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len = ex.hypot(ey);
    // CCW polygon: outward normal is the edge direction rotated -90 degrees.
    [ey / len, -ex / len]
}

/// Closest boundary point of a convex CCW polygon.
/// Returns `(distance, owning edge index, closest point, inside flag)`;
/// distance ties keep the lowest edge index.
fn polygon_closest(verts: &[[f64; 2]], p: [f64; 2]) -> (f64, usize, [f64; 2], bool) {
    let n = verts.len();
    let mut best = f64::INFINITY;
    let mut best_edge = 0;
    let mut best_q = verts[0];
    let mut inside = true;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let (rx, ry) = (p[0] - a[0], p[1] - a[1]);
        if ex * ry - ey * rx < 0.0 {
            inside = false;
        }
        let len2 = ex * ex + ey * ey;
        let t = ((rx * ex + ry * ey) / len2).clamp(0.0, 1.0);
        let q = [a[0] + t * ex, a[1] + t * ey];
        let d = (p[0] - q[0]).hypot(p[1] - q[1]);
        if d < best {
            best = d;
            best_edge = i;
            best_q = q;
        }
    }
    (best, best_edge, best_q, inside)
}

/// Draw `n_points` labeled samples from the shape's bounding box padded by
/// `band_width` on every side. Sample `i` only depends on `(seed, i)`, so a
/// shorter draw is always a prefix of a longer one.
pub fn sample_training_set(
    shape: &ShapeDescriptor,
    n_points: usize,
    band_width: f64,
    rng_seed: u64,
) -> SdfDataset {
    let (hx, hy) = shape.bounding_half_extent();
    let (bx, by) = (hx + band_width, hy + band_width);
    let samples = (0..n_points)
        .map(|i| {
            let mut rng = CounterRng::from_parts(rng_seed, &[i as u64]);
            let p = [rng.uniform_in(-bx, bx), rng.uniform_in(-by, by)];
            (p, shape.sdf(p))
        })
        .collect();
    SdfDataset { samples }
}

impl SdfDataset {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "px,py,d")?;
        for (p, d) in &self.samples {
            writeln!(w, "{},{},{}", p[0], p[1], d)?;
        }
        Ok(())
    }
}
