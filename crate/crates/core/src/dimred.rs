//! Single tanh projection layer `z = tanh(W x)` trained by the forest's
//! backpropagated error, with optional truncated-gradient sparsification.

use alloc::vec;
use alloc::vec::Vec;

use libm::tanh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::kernels::dot;

/// Sparse path is used once more than this fraction of weights is zero.
pub const SPARSE_THRESHOLD: f64 = 0.5;

/// Compressed rows of the projection matrix: `(index, value)` pairs per output.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    row_start: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(weights: &[f64], out_dim: usize, in_dim: usize) -> Self {
        let mut row_start = Vec::with_capacity(out_dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        row_start.push(0);
        for row in weights.chunks_exact(in_dim).take(out_dim) {
            for (j, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    indices.push(j as u32);
                    values.push(w);
                }
            }
            row_start.push(indices.len());
        }
        SparseRows {
            row_start,
            indices,
            values,
        }
    }

    /// Non-zero `(index, value)` pairs of output row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let span = self.row_start[r]..self.row_start[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn rows(&self) -> usize {
        self.row_start.len() - 1
    }
}

/// Projection `z = tanh(W x)` with `W` of shape `out_dim x in_dim`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer {
    out_dim: usize,
    in_dim: usize,
    /// Row-major weights.
    weights: Vec<f64>,
    /// L1 strength.
    pub eta: f64,
    /// Truncation threshold.
    pub theta: f64,
    sparse: Option<SparseRows>,
}

impl ProjectionLayer {
    pub fn from_weights(out_dim: usize, in_dim: usize, weights: Vec<f64>, eta: f64, theta: f64) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::InvalidArgument("projection dimensions must be positive".into()));
        }
        check_len("projection weights", out_dim * in_dim, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("projection weights"));
        }
        if !(eta >= 0.0) || !(theta >= 0.0) {
            return Err(Error::InvalidArgument("eta and theta must be non-negative".into()));
        }
        let mut layer = ProjectionLayer {
            out_dim,
            in_dim,
            weights,
            eta,
            theta,
            sparse: None,
        };
        layer.compact();
        Ok(layer)
    }

    /// Weights uniform in `[-init_range, init_range]`.
    pub fn random(out_dim: usize, in_dim: usize, init_range: f64, eta: f64, theta: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..out_dim * in_dim)
            .map(|_| if init_range > 0.0 { rng.gen_range(-init_range..=init_range) } else { 0.0 })
            .collect();
        ProjectionLayer::from_weights(out_dim, in_dim, weights, eta, theta)
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    /// Fraction of weights that are exactly zero.
    pub fn sparsity(&self) -> f64 {
        let zeros = self.weights.iter().filter(|&&w| w == 0.0).count();
        zeros as f64 / self.weights.len() as f64
    }

    /// Builds the compressed representation when sparse enough, drops it otherwise.
    pub fn compact(&mut self) {
        self.sparse = if self.sparsity() > SPARSE_THRESHOLD {
            Some(SparseRows::from_dense(&self.weights, self.out_dim, self.in_dim))
        } else {
            None
        };
    }

    pub fn sparse_rows(&self) -> Option<&SparseRows> {
        self.sparse.as_ref()
    }

    /// `tanh(W x)`, through the sparse rows when they are available.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = vec![0.0; self.out_dim];
        self.project_into(x, &mut z)?;
        Ok(z)
    }

    pub fn project_into(&self, x: &[f64], z: &mut [f64]) -> Result<()> {
        match &self.sparse {
            Some(rows) => self.project_sparse_into(rows, x, z),
            None => self.project_dense_into(x, z),
        }
    }

    pub fn project_dense_into(&self, x: &[f64], z: &mut [f64]) -> Result<()> {
        check_len("projection input", self.in_dim, x.len())?;
        check_len("projection output", self.out_dim, z.len())?;
        for (zj, row) in z.iter_mut().zip(self.weights.chunks_exact(self.in_dim)) {
            *zj = tanh(dot(row, x));
        }
        Ok(())
    }

    pub fn project_sparse_into(&self, rows: &SparseRows, x: &[f64], z: &mut [f64]) -> Result<()> {
        check_len("projection input", self.in_dim, x.len())?;
        check_len("projection output", self.out_dim, z.len())?;
        check_len("sparse rows", self.out_dim, rows.rows())?;
        for (r, zj) in z.iter_mut().enumerate() {
            let s: f64 = rows.row(r).map(|(j, w)| w * x[j as usize]).sum();
            *zj = tanh(s);
        }
        Ok(())
    }

    /// One truncated-gradient step.
    ///
    /// `w <- w - lr * grad_z[j] * (1 - z[j]^2) * x[j'] - lr * eta * sgn(w)`,
    /// then any weight with `|w| < theta` becomes exactly zero. `z` must be the
    /// forward output for `x`.
    pub fn update_truncated(&mut self, x: &[f64], z: &[f64], grad_z: &[f64], lr: f64) -> Result<()> {
        check_len("projection input", self.in_dim, x.len())?;
        check_len("projection output", self.out_dim, z.len())?;
        check_len("projection gradient", self.out_dim, grad_z.len())?;
        let shrink = lr * self.eta;
        let theta = self.theta;
        for ((row, &zj), &gj) in self.weights.chunks_exact_mut(self.in_dim).zip(z).zip(grad_z) {
            let c = lr * gj * (1.0 - zj * zj);
            for (w, &xv) in row.iter_mut().zip(x) {
                let mut v = *w - c * xv;
                if shrink != 0.0 && *w != 0.0 {
                    v -= shrink * w.signum();
                }
                if v.abs() < theta {
                    v = 0.0;
                }
                *w = v;
            }
        }
        self.sparse = None;
        Ok(())
    }

    /// Backpropagates `grad_z` to the layer input: `W^T (grad_z * (1 - z^2))`.
    pub fn input_gradient(&self, z: &[f64], grad_z: &[f64]) -> Result<Vec<f64>> {
        check_len("projection output", self.out_dim, z.len())?;
        check_len("projection gradient", self.out_dim, grad_z.len())?;
        let mut out = vec![0.0; self.in_dim];
        for ((row, &zj), &gj) in self.weights.chunks_exact(self.in_dim).zip(z).zip(grad_z) {
            let c = gj * (1.0 - zj * zj);
            for (o, w) in out.iter_mut().zip(row) {
                *o += c * w;
            }
        }
        Ok(out)
    }
}

pub fn project(layer: &ProjectionLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.project(x)
}

pub fn sparsity(layer: &ProjectionLayer) -> f64 {
    layer.sparsity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural_forest::{Forest, ForestMode, LeafLoss, LeafStats, Tree};
    use proptest::prelude::{any, prop_assert, proptest};

    fn random_layer(rng: &mut ChaCha8Rng, out: usize, inp: usize, zero_frac: f64) -> ProjectionLayer {
        let w = (0..out * inp)
            .map(|_| if rng.gen_bool(zero_frac) { 0.0 } else { rng.gen_range(-0.5..0.5) })
            .collect();
        ProjectionLayer::from_weights(out, inp, w, 0.0, 0.0).unwrap()
    }

    #[test]
    fn zero_weights_or_input_give_zero_code() {
        let layer = ProjectionLayer::from_weights(3, 4, vec![0.0; 12], 0.0, 0.0).unwrap();
        assert_eq!(layer.project(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = random_layer(&mut rng, 3, 4, 0.0);
        assert_eq!(layer.project(&[0.0; 4]).unwrap(), vec![0.0; 3]);
        assert!(layer.project(&[0.0; 5]).is_err());
    }

    #[test]
    fn projection_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = random_layer(&mut rng, 7, 11, 0.0);
        let x: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = layer.project(&x).unwrap();
        for r in 0..7 {
            let mut s = 0.0;
            for c in 0..11 {
                s += layer.weight(r, c) * x[c];
            }
            assert!((z[r] - s.tanh()).abs() < 1e-12);
            assert!(z[r] > -1.0 && z[r] < 1.0);
        }
    }

    #[test]
    fn sparsity_examples() {
        let layer = ProjectionLayer::from_weights(2, 2, vec![0.0; 4], 0.0, 0.0).unwrap();
        assert_eq!(sparsity(&layer), 1.0);
        let layer = ProjectionLayer::from_weights(2, 2, vec![0.1; 4], 0.0, 0.0).unwrap();
        assert_eq!(sparsity(&layer), 0.0);
        let layer = ProjectionLayer::from_weights(2, 2, vec![0.1, 0.0, 0.0, 0.3], 0.0, 0.0).unwrap();
        assert_eq!(sparsity(&layer), 0.5);
        assert!(layer.sparse_rows().is_none());
    }

    #[test]
    fn truncation_arithmetic() {
        let mut layer = ProjectionLayer::from_weights(1, 1, vec![0.04], 0.01, 0.05).unwrap();
        layer.update_truncated(&[1.0], &[0.0], &[0.0], 0.005).unwrap();
        assert_eq!(layer.weights()[0], 0.0);

        let mut layer = ProjectionLayer::from_weights(1, 1, vec![0.5], 0.01, 0.05).unwrap();
        layer.update_truncated(&[1.0], &[0.0], &[0.0], 0.005).unwrap();
        assert_eq!(layer.weights()[0], 0.5 - 0.005 * 0.01);
    }

    #[test]
    fn plain_step_without_regularization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = random_layer(&mut rng, 5, 6, 0.2);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = layer.project(&x).unwrap();
        let mut updated = layer.clone();
        updated.update_truncated(&x, &z, &g, 0.05).unwrap();
        for r in 0..5 {
            for c in 0..6 {
                let reference = layer.weight(r, c) - 0.05 * g[r] * (1.0 - z[r] * z[r]) * x[c];
                assert_eq!(updated.weight(r, c).to_bits(), reference.to_bits());
            }
        }
    }

    /// Loss of forest(tanh(W x)) as a function of W, for finite differences.
    fn composite_loss(layer: &ProjectionLayer, forest: &Forest, x: &[f64], target: &[f64]) -> f64 {
        let z = layer.project(x).unwrap();
        forest.loss_value(&z, target).unwrap()
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let layer = random_layer(&mut rng, 3, 4, 0.0);
            let trees = (0..4)
                .map(|_| {
                    Tree::from_parts(
                        3,
                        3,
                        (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        (0..7).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                        (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            let forest = Forest::from_parts(
                2,
                2,
                3,
                3,
                ForestMode::Soft,
                LeafLoss::Squared,
                LeafStats::new(vec![0.0; 2], vec![1.0; 2]).unwrap(),
                trees,
            )
            .unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = layer.project(&x).unwrap();
            let grad_z = forest.clone().sgd_step(&z, &target, 0.0).unwrap();
            // dL/dW from a unit-rate plain step: W - W' = grad
            let mut stepped = layer.clone();
            stepped.update_truncated(&x, &z, &grad_z, 1.0).unwrap();
            let h = 1e-6;
            for r in 0..3 {
                for c in 0..4 {
                    let analytic = layer.weight(r, c) - stepped.weight(r, c);
                    let mut wp = layer.weights().to_vec();
                    let mut wm = layer.weights().to_vec();
                    wp[r * 4 + c] += h;
                    wm[r * 4 + c] -= h;
                    let lp = ProjectionLayer::from_weights(3, 4, wp, 0.0, 0.0).unwrap();
                    let lm = ProjectionLayer::from_weights(3, 4, wm, 0.0, 0.0).unwrap();
                    let fd = (composite_loss(&lp, &forest, &x, &target) - composite_loss(&lm, &forest, &x, &target)) / (2.0 * h);
                    let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
                    assert!(rel < 1e-4, "{fd} vs {analytic}");
                }
            }
        }
    }

    #[test]
    fn sparse_path_engages_and_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = random_layer(&mut rng, 20, 300, 0.8);
        assert!(layer.sparse_rows().is_some());
        let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dense = vec![0.0; 20];
        layer.project_dense_into(&x, &mut dense).unwrap();
        let sparse = layer.project(&x).unwrap();
        for (a, b) in dense.iter().zip(&sparse) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_init_range() {
        let layer = ProjectionLayer::random(10, 20, 0.01, 0.0, 0.0, 3).unwrap();
        assert!(layer.weights().iter().all(|w| w.abs() <= 0.01));
        assert_eq!(layer, ProjectionLayer::random(10, 20, 0.01, 0.0, 0.0, 3).unwrap());
    }

    proptest! {
        #[test]
        fn no_weight_below_threshold_after_update(seed in any::<u64>(), theta in 0.0f64..0.2, eta in 0.0f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = random_layer(&mut rng, 4, 9, 0.3);
            layer.eta = eta;
            layer.theta = theta;
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z = layer.project(&x).unwrap();
            layer.update_truncated(&x, &z, &g, 0.1).unwrap();
            prop_assert!(layer.weights().iter().all(|w| *w == 0.0 || w.abs() >= theta));
            prop_assert!(layer.weights().iter().all(|w| w.is_finite() && w.abs() < 1e3));
        }

        #[test]
        fn sparse_and_dense_agree(seed in any::<u64>(), frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = random_layer(&mut rng, 6, 40, frac);
            let rows = SparseRows::from_dense(layer.weights(), 6, 40);
            let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut a = vec![0.0; 6];
            let mut b = vec![0.0; 6];
            layer.project_dense_into(&x, &mut a).unwrap();
            layer.project_sparse_into(&rows, &x, &mut b).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
