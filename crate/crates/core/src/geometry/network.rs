//! Small MLP signed-distance model with Eikonal-regularized training.
//!
//! The network is a plain feed-forward stack with a smooth activation and a
//! linear output layer, so the input gradient is continuous — required
//! because it feeds the barrier linearization. The training loss is
//! `mean((phi_hat - d)^2) + lambda_E * mean((|grad phi_hat| - 1)^2)`.
//!
//! The Eikonal term needs parameter gradients of the input gradient, i.e.
//! exact second-order backprop. We use forward-over-reverse on the fixed
//! architecture: for a constant direction `c`, the directional derivative
//! `y = c . grad_p phi` is computed by a tangent sweep
//!
//! ```text
//! t_0 = c,   s_l = W_l t_l,   t_{l+1} = act'(z_l) .* s_l,   y = W_last t_last
//! ```
//!
//! and ordinary reverse mode over that sweep gives `d y / d theta`:
//!
//! ```text
//! sbar_l = tbar_{l+1} .* act'(z_l)
//! zbar_l = tbar_{l+1} .* s_l .* act''(z_l) + abar_{l+1} .* act'(z_l)
//! Wbar_l += sbar_l t_l^T + zbar_l a_l^T,   bbar_l += zbar_l
//! tbar_l = W_l^T sbar_l,   abar_l = W_l^T zbar_l
//! ```
//!
//! Setting `c = grad phi` (held constant per sample) and scaling by
//! `2 (|g| - 1) / |g|` yields the exact Eikonal parameter gradient.

use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};

use crate::rng::CounterRng;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SDF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    pub fn parse(name: &str) -> Option<Activation> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "softplus" => Some(Activation::Softplus),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }

    #[inline]
    fn value(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    #[inline]
    fn d1(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }

    #[inline]
    fn d2(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Softplus => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// Feed-forward SDF approximator (input 2, output 1, linear last layer).
#[derive(Debug, Clone)]
pub struct SdfModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub activation: Activation,
}

/// Training hyper-parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda_eikonal: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_eikonal: 0.1,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 128,
            rng_seed: 0,
        }
    }
}

/// Mean losses over the last epoch of a training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainReport {
    pub distance_loss: f64,
    pub eikonal_loss: f64,
}

impl SdfModel {
    /// Glorot-uniform initialization, deterministic per seed.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> SdfModel {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        assert_eq!(layer_sizes[0], 2, "input dimension must be 2");
        assert_eq!(*layer_sizes.last().unwrap(), 1, "output dimension must be 1");
        let mut rng = CounterRng::from_parts(seed, &[0x5df]);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.uniform_in(-bound, bound)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        SdfModel { layer_sizes: layer_sizes.to_vec(), weights, biases, activation }
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass at a single point.
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let nl = self.layer_count();
        let mut a = DVector::from_column_slice(&p);
        for i in 0..nl {
            let mut z = &self.weights[i] * &a + &self.biases[i];
            if i < nl - 1 {
                z.apply(|v| *v = self.activation.value(*v));
            }
            a = z;
        }
        a[0]
    }

    /// Exact input gradient via reverse mode.
    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        let nl = self.layer_count();
        let mut zs = Vec::with_capacity(nl - 1);
        let mut a = DVector::from_column_slice(&p);
        for i in 0..nl - 1 {
            let z = &self.weights[i] * &a + &self.biases[i];
            a = z.map(|v| self.activation.value(v));
            zs.push(z);
        }
        // Linear output layer seeds the backward sweep with its weight row.
        let mut back = self.weights[nl - 1].row(0).transpose();
        for i in (0..nl - 1).rev() {
            let v = DVector::from_fn(back.len(), |r, _| back[r] * self.activation.d1(zs[i][r]));
            back = self.weights[i].tr_mul(&v);
        }
        [back[0], back[1]]
    }

    /// Hessian-vector product `H w` via a tangent sweep over the backward
    /// pass (forward-over-reverse).
    pub fn hessian_vec(&self, p: [f64; 2], w: [f64; 2]) -> [f64; 2] {
        let nl = self.layer_count();
        let mut zs = Vec::with_capacity(nl - 1);
        let mut zdots = Vec::with_capacity(nl - 1);
        let mut a = DVector::from_column_slice(&p);
        let mut adot = DVector::from_column_slice(&w);
        for i in 0..nl - 1 {
            let z = &self.weights[i] * &a + &self.biases[i];
            let zdot = &self.weights[i] * &adot;
            a = z.map(|v| self.activation.value(v));
            adot = DVector::from_fn(z.len(), |r, _| self.activation.d1(z[r]) * zdot[r]);
            zs.push(z);
            zdots.push(zdot);
        }
        let mut back = self.weights[nl - 1].row(0).transpose();
        let mut backdot = DVector::zeros(back.len());
        for i in (0..nl - 1).rev() {
            let v = DVector::from_fn(back.len(), |r, _| back[r] * self.activation.d1(zs[i][r]));
            let vdot = DVector::from_fn(back.len(), |r, _| {
                backdot[r] * self.activation.d1(zs[i][r])
                    + back[r] * self.activation.d2(zs[i][r]) * zdots[i][r]
            });
            back = self.weights[i].tr_mul(&v);
            backdot = self.weights[i].tr_mul(&vdot);
        }
        [backdot[0], backdot[1]]
    }

    /// Full 2x2 Hessian, row-major.
    pub fn hessian(&self, p: [f64; 2]) -> [f64; 4] {
        let h1 = self.hessian_vec(p, [1.0, 0.0]);
        let h2 = self.hessian_vec(p, [0.0, 1.0]);
        [h1[0], h2[0], h1[1], h2[1]]
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &s in &self.layer_sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for l in 0..self.layer_count() {
            let wm = &self.weights[l];
            for r in 0..wm.nrows() {
                for c in 0..wm.ncols() {
                    w.write_all(&wm[(r, c)].to_le_bytes())?;
                }
            }
            for r in 0..self.biases[l].len() {
                w.write_all(&self.biases[l][r].to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a model in the flat binary layout written by [`SdfModel::write`].
    /// The format does not carry the activation; the caller supplies it.
    pub fn read<R: Read>(mut r: R, activation: Activation) -> Result<SdfModel> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config {
                path: "sdf model".into(),
                message: "bad magic, not an SDF model file".into(),
            });
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let n_layers = u32::from_le_bytes(u32buf) as usize;
        if !(2..=64).contains(&n_layers) {
            return Err(Error::Config {
                path: "sdf model".into(),
                message: format!("implausible layer count {n_layers}"),
            });
        }
        let mut sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            r.read_exact(&mut u32buf)?;
            sizes.push(u32::from_le_bytes(u32buf) as usize);
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut f64buf = [0u8; 8];
        for l in 0..n_layers - 1 {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            let mut wm = DMatrix::zeros(rows, cols);
            for rr in 0..rows {
                for cc in 0..cols {
                    r.read_exact(&mut f64buf)?;
                    wm[(rr, cc)] = f64::from_le_bytes(f64buf);
                }
            }
            let mut b = DVector::zeros(rows);
            for rr in 0..rows {
                r.read_exact(&mut f64buf)?;
                b[rr] = f64::from_le_bytes(f64buf);
            }
            weights.push(wm);
            biases.push(b);
        }
        let model = SdfModel { layer_sizes: sizes, weights, biases, activation };
        if model.weights.iter().any(|w| w.iter().any(|v| !v.is_finite()))
            || model.biases.iter().any(|b| b.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("sdf model parameters"));
        }
        Ok(model)
    }
}

struct Gradients {
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

impl Gradients {
    fn zeros_like(model: &SdfModel) -> Gradients {
        Gradients {
            weights: model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: model.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }
}

/// Batch forward/backward pass; columns of `points` are samples.
/// Accumulates parameter gradients of `dist + lambda * eik` into `grads`
/// and returns the batch `(distance_loss, eikonal_loss)`.
fn batch_losses_and_grads(
    model: &SdfModel,
    points: &DMatrix<f64>,
    targets: &DVector<f64>,
    lambda: f64,
    grads: &mut Gradients,
) -> (f64, f64) {
    let nl = model.layer_count();
    let bsz = points.ncols();
    let inv_b = 1.0 / bsz as f64;
    let act = model.activation;

    // Forward; keep pre-activations and activations per layer.
    let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(nl);
    let mut zs: Vec<DMatrix<f64>> = Vec::with_capacity(nl - 1);
    acts.push(points.clone());
    for i in 0..nl - 1 {
        let mut z = &model.weights[i] * acts.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += &model.biases[i];
        }
        let a = z.map(|v| act.value(v));
        zs.push(z);
        acts.push(a);
    }
    let mut out = &model.weights[nl - 1] * acts.last().unwrap();
    out.add_scalar_mut(model.biases[nl - 1][0]);

    // Distance loss + standard backprop.
    let mut dist_loss = 0.0;
    let mut delta = DMatrix::zeros(1, bsz);
    for c in 0..bsz {
        let e = out[(0, c)] - targets[c];
        dist_loss += e * e;
        delta[(0, c)] = 2.0 * e * inv_b;
    }
    dist_loss *= inv_b;
    {
        let mut d = delta;
        for i in (0..nl).rev() {
            grads.weights[i] += &d * acts[i].transpose();
            for c in 0..bsz {
                for r in 0..d.nrows() {
                    grads.biases[i][r] += d[(r, c)];
                }
            }
            if i > 0 {
                let up = model.weights[i].tr_mul(&d);
                d = DMatrix::from_fn(up.nrows(), bsz, |r, c| {
                    up[(r, c)] * act.d1(zs[i - 1][(r, c)])
                });
            }
        }
    }

    // Input gradients g_j for every sample (batched reverse sweep).
    let last_row = model.weights[nl - 1].row(0).transpose();
    let mut back = DMatrix::from_fn(last_row.len(), bsz, |r, _| last_row[r]);
    for i in (0..nl - 1).rev() {
        let v = DMatrix::from_fn(back.nrows(), bsz, |r, c| back[(r, c)] * act.d1(zs[i][(r, c)]));
        back = model.weights[i].tr_mul(&v);
    }
    let g = back; // 2 x bsz

    // Eikonal loss and per-sample reverse-seed scale.
    let mut eik_loss = 0.0;
    let mut kappa = DVector::zeros(bsz);
    for c in 0..bsz {
        let norm = g[(0, c)].hypot(g[(1, c)]);
        if norm > 1e-12 {
            let e = norm - 1.0;
            eik_loss += e * e;
            kappa[c] = 2.0 * e / norm * lambda * inv_b;
        }
    }
    eik_loss *= inv_b;
    if lambda == 0.0 {
        return (dist_loss, eik_loss);
    }

    // Tangent sweep in per-sample direction c_j = g_j (held constant).
    let mut ts: Vec<DMatrix<f64>> = Vec::with_capacity(nl);
    let mut ss: Vec<DMatrix<f64>> = Vec::with_capacity(nl - 1);
    ts.push(g);
    for i in 0..nl - 1 {
        let s = &model.weights[i] * ts.last().unwrap();
        let t = DMatrix::from_fn(s.nrows(), bsz, |r, c| act.d1(zs[i][(r, c)]) * s[(r, c)]);
        ss.push(s);
        ts.push(t);
    }

    // Reverse over the tangent sweep, seeded with the kappa-scaled output row.
    let mut tbar = DMatrix::from_fn(last_row.len(), bsz, |r, c| last_row[r] * kappa[c]);
    for c in 0..bsz {
        for r in 0..last_row.len() {
            grads.weights[nl - 1][(0, r)] += kappa[c] * ts[nl - 1][(r, c)];
        }
    }
    let mut abar: Option<DMatrix<f64>> = None;
    for i in (0..nl - 1).rev() {
        let sbar =
            DMatrix::from_fn(tbar.nrows(), bsz, |r, c| tbar[(r, c)] * act.d1(zs[i][(r, c)]));
        let mut zbar = DMatrix::from_fn(tbar.nrows(), bsz, |r, c| {
            tbar[(r, c)] * ss[i][(r, c)] * act.d2(zs[i][(r, c)])
        });
        if let Some(ab) = &abar {
            for c in 0..bsz {
                for r in 0..zbar.nrows() {
                    zbar[(r, c)] += ab[(r, c)] * act.d1(zs[i][(r, c)]);
                }
            }
        }
        grads.weights[i] += &sbar * ts[i].transpose();
        grads.weights[i] += &zbar * acts[i].transpose();
        for c in 0..bsz {
            for r in 0..zbar.nrows() {
                grads.biases[i][r] += zbar[(r, c)];
            }
        }
        tbar = model.weights[i].tr_mul(&sbar);
        abar = Some(model.weights[i].tr_mul(&zbar));
    }

    (dist_loss, eik_loss)
}

#[inline]
fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    for i in 0..params.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * grads[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * grads[i] * grads[i];
        params[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
    }
}

/// Train an SDF model with Adam on mini-batches; deterministic per seed.
pub fn train_sdf(
    dataset: &crate::geometry::SdfDataset,
    cfg: &TrainConfig,
    layer_sizes: &[usize],
    activation: Activation,
) -> Result<(SdfModel, TrainReport)> {
    assert!(!dataset.samples.is_empty(), "dataset must be nonempty");
    assert!(cfg.learning_rate > 0.0 && cfg.epochs >= 1);
    let mut model = SdfModel::init(layer_sizes, activation, cfg.rng_seed);
    let n = dataset.samples.len();
    let bsz = cfg.batch_size.max(1).min(n);

    let mut adam_m = Gradients::zeros_like(&model);
    let mut adam_v = Gradients::zeros_like(&model);
    let mut t_step = 0i32;

    let mut order: Vec<usize> = (0..n).collect();
    let mut last = TrainReport { distance_loss: f64::NAN, eikonal_loss: f64::NAN };

    for epoch in 0..cfg.epochs {
        // Fisher-Yates with a per-epoch substream.
        let mut rng = CounterRng::from_parts(cfg.rng_seed, &[0xe90c, epoch as u64]);
        for i in (1..n).rev() {
            let j = (rng.next_u64_value() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut epoch_dist = 0.0;
        let mut epoch_eik = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(bsz) {
            let pts = DMatrix::from_fn(2, chunk.len(), |r, c| dataset.samples[chunk[c]].0[r]);
            let tgt = DVector::from_fn(chunk.len(), |c, _| dataset.samples[chunk[c]].1);
            let mut grads = Gradients::zeros_like(&model);
            let (dl, el) =
                batch_losses_and_grads(&model, &pts, &tgt, cfg.lambda_eikonal, &mut grads);
            if !dl.is_finite() || !el.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_dist += dl;
            epoch_eik += el;
            batches += 1.0;

            t_step += 1;
            let bc1 = 1.0 - 0.9_f64.powi(t_step);
            let bc2 = 1.0 - 0.999_f64.powi(t_step);
            for l in 0..model.layer_count() {
                adam_update(
                    model.weights[l].as_mut_slice(),
                    grads.weights[l].as_slice(),
                    adam_m.weights[l].as_mut_slice(),
                    adam_v.weights[l].as_mut_slice(),
                    cfg.learning_rate,
                    bc1,
                    bc2,
                );
                adam_update(
                    model.biases[l].as_mut_slice(),
                    grads.biases[l].as_slice(),
                    adam_m.biases[l].as_mut_slice(),
                    adam_v.biases[l].as_mut_slice(),
                    cfg.learning_rate,
                    bc1,
                    bc2,
                );
            }
        }
        last = TrainReport {
            distance_loss: epoch_dist / batches,
            eikonal_loss: epoch_eik / batches,
        };
    }
    Ok((model, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_training_set, SdfDataset, ShapeDescriptor};
    use approx::assert_abs_diff_eq;

    fn total_loss(model: &SdfModel, data: &SdfDataset, lambda: f64) -> f64 {
        let n = data.samples.len() as f64;
        let mut dist = 0.0;
        let mut eik = 0.0;
        for (p, d) in &data.samples {
            let e = model.eval(*p) - d;
            dist += e * e;
            let g = model.gradient(*p);
            let en = g[0].hypot(g[1]) - 1.0;
            eik += en * en;
        }
        dist / n + lambda * eik / n
    }

    #[test]
    fn zero_weight_model_is_constant() {
        let mut m = SdfModel::init(&[2, 8, 1], Activation::Tanh, 0);
        for w in &mut m.weights {
            w.fill(0.0);
        }
        m.biases[1][0] = 0.75;
        assert_eq!(m.eval([3.0, -2.0]), 0.75);
        assert_eq!(m.gradient([3.0, -2.0]), [0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_passthrough() {
        let mut m = SdfModel::init(&[2, 1], Activation::Tanh, 0);
        m.weights[0][(0, 0)] = 1.0;
        m.weights[0][(0, 1)] = 0.0;
        m.biases[0][0] = 0.0;
        assert_eq!(m.eval([0.3, 9.0]), 0.3);
        assert_eq!(m.gradient([0.3, 9.0]), [1.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        for act in [Activation::Tanh, Activation::Softplus] {
            let m = SdfModel::init(&[2, 16, 16, 1], act, 3);
            let mut rng = CounterRng::from_parts(17, &[0]);
            for _ in 0..100 {
                let p = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
                let g = m.gradient(p);
                let e = 1e-6;
                let fdx = (m.eval([p[0] + e, p[1]]) - m.eval([p[0] - e, p[1]])) / (2.0 * e);
                let fdy = (m.eval([p[0], p[1] + e]) - m.eval([p[0], p[1] - e])) / (2.0 * e);
                assert_abs_diff_eq!(g[0], fdx, epsilon = 1e-7);
                assert_abs_diff_eq!(g[1], fdy, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn hessian_matches_finite_difference_of_gradient() {
        let m = SdfModel::init(&[2, 12, 12, 1], Activation::Tanh, 5);
        let mut rng = CounterRng::from_parts(18, &[0]);
        for _ in 0..50 {
            let p = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
            let h = m.hessian(p);
            let e = 1e-6;
            let gpx = m.gradient([p[0] + e, p[1]]);
            let gmx = m.gradient([p[0] - e, p[1]]);
            let gpy = m.gradient([p[0], p[1] + e]);
            let gmy = m.gradient([p[0], p[1] - e]);
            let fd = [
                (gpx[0] - gmx[0]) / (2.0 * e),
                (gpy[0] - gmy[0]) / (2.0 * e),
                (gpx[1] - gmx[1]) / (2.0 * e),
                (gpy[1] - gmy[1]) / (2.0 * e),
            ];
            for (a, b) in h.iter().zip(fd.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
            // Symmetry.
            assert_abs_diff_eq!(h[1], h[2], epsilon = 1e-12);
        }
    }

    #[test]
    fn parameter_gradients_match_finite_difference() {
        // FD oracle for the full training gradient, including the Eikonal
        // second-order term. Small net so the FD stays well conditioned.
        let model = SdfModel::init(&[2, 6, 1], Activation::Tanh, 9);
        let data = sample_training_set(&ShapeDescriptor::Circle { radius: 0.7 }, 16, 0.4, 4);
        let lambda = 0.3;
        let pts = DMatrix::from_fn(2, 16, |r, c| data.samples[c].0[r]);
        let tgt = DVector::from_fn(16, |c, _| data.samples[c].1);
        let mut grads = Gradients::zeros_like(&model);
        let (dl, el) = batch_losses_and_grads(&model, &pts, &tgt, lambda, &mut grads);
        assert_abs_diff_eq!(dl + lambda * el, total_loss(&model, &data, lambda), epsilon = 1e-12);

        let eps = 1e-6;
        for l in 0..model.layer_count() {
            for idx in 0..model.weights[l].len() {
                let mut mp = model.clone();
                let mut mm = model.clone();
                mp.weights[l].as_mut_slice()[idx] += eps;
                mm.weights[l].as_mut_slice()[idx] -= eps;
                let fd =
                    (total_loss(&mp, &data, lambda) - total_loss(&mm, &data, lambda)) / (2.0 * eps);
                let got = grads.weights[l].as_slice()[idx];
                assert!(
                    (got - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "W[{l}][{idx}]: grad {got} vs fd {fd}"
                );
            }
            for idx in 0..model.biases[l].len() {
                let mut mp = model.clone();
                let mut mm = model.clone();
                mp.biases[l][idx] += eps;
                mm.biases[l][idx] -= eps;
                let fd =
                    (total_loss(&mp, &data, lambda) - total_loss(&mm, &data, lambda)) / (2.0 * eps);
                let got = grads.biases[l][idx];
                assert!(
                    (got - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "b[{l}][{idx}]: grad {got} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn one_sample_regression_converges() {
        let data = SdfDataset { samples: vec![([0.3, -0.2], 0.45)] };
        let cfg = TrainConfig {
            lambda_eikonal: 0.0,
            learning_rate: 0.01,
            epochs: 400,
            batch_size: 1,
            rng_seed: 1,
        };
        let (model, report) = train_sdf(&data, &cfg, &[2, 8, 1], Activation::Tanh).unwrap();
        assert!(report.distance_loss < 1e-6, "final loss {}", report.distance_loss);
        assert!((model.eval([0.3, -0.2]) - 0.45).abs() < 1e-3);
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let data = sample_training_set(&ShapeDescriptor::Circle { radius: 0.5 }, 64, 0.3, 2);
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let (a, _) = train_sdf(&data, &cfg, &[2, 8, 8, 1], Activation::Tanh).unwrap();
        let (b, _) = train_sdf(&data, &cfg, &[2, 8, 8, 1], Activation::Tanh).unwrap();
        for l in 0..a.layer_count() {
            assert_eq!(a.weights[l].as_slice(), b.weights[l].as_slice());
            assert_eq!(a.biases[l].as_slice(), b.biases[l].as_slice());
        }
    }

    #[test]
    fn serialization_roundtrip_is_exact() {
        let m = SdfModel::init(&[2, 8, 4, 1], Activation::Tanh, 21);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let m2 = SdfModel::read(buf.as_slice(), Activation::Tanh).unwrap();
        assert_eq!(m.layer_sizes, m2.layer_sizes);
        for l in 0..m.layer_count() {
            assert_eq!(m.weights[l].as_slice(), m2.weights[l].as_slice());
            assert_eq!(m.biases[l].as_slice(), m2.biases[l].as_slice());
        }
        assert!(SdfModel::read(&b"NOPE"[..], Activation::Tanh).is_err());
    }
}
