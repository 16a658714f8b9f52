//! Neural forests with oblique soft splits and constant leaf predictions.
//!
//! Trees are complete binary trees stored in heap order: split `n` has
//! children `2n + 1` (left) and `2n + 2` (right); leaf `l` is heap node
//! `2^D - 1 + l`. A split sends an input right with probability
//! `d = sigmoid(beta . z - theta)`. Training only touches the splits; leaf
//! values are drawn once from the residual distribution and then frozen.
//!
//! After training a forest is switched to greedy evaluation, which follows
//! the more probable child at every split and costs `D` split evaluations per
//! tree instead of `2^D - 1`.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, expm1, log as ln, log1p, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::kernels::dot;

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 35.0;
/// Split activations are kept inside `[ACTIVATION_EPS, 1 - ACTIVATION_EPS]`.
pub const ACTIVATION_EPS: f64 = 1e-12;
/// Default half-width of the uniform split-parameter initialization.
pub const DEFAULT_INIT_RANGE: f64 = 0.01;

#[inline]
fn activation(logit: f64) -> f64 {
    let x = logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    (1.0 / (1.0 + exp(-x))).clamp(ACTIVATION_EPS, 1.0 - ACTIVATION_EPS)
}


/// Evaluation mode of a forest. Transitions only go `Soft -> Greedy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestMode {
    Soft,
    Greedy,
}

/// Per-leaf error used during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafLoss {
    /// `(y_l - t)^2`
    Squared,
    /// `|y_l - t|`
    Absolute,
}

impl LeafLoss {
    #[inline]
    pub fn error(self, leaf: f64, target: f64) -> f64 {
        match self {
            LeafLoss::Squared => (leaf - target) * (leaf - target),
            LeafLoss::Absolute => (leaf - target).abs(),
        }
    }
}

/// Mean and standard deviation of the residual targets, per output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafStats {
    mean: Vec<f64>,
    std_dev: Vec<f64>,
}

impl LeafStats {
    /// Standard deviations below this value are raised to it.
    pub const SIGMA_FLOOR: f64 = 1e-6;

    pub fn new(mean: Vec<f64>, std_dev: Vec<f64>) -> Result<Self> {
        check_len("leaf statistics", mean.len(), std_dev.len())?;
        if mean.iter().chain(&std_dev).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("leaf statistics"));
        }
        let std_dev = std_dev
            .into_iter()
            .map(|s| s.max(Self::SIGMA_FLOOR))
            .collect();
        Ok(LeafStats { mean, std_dev })
    }

    /// Population mean and standard deviation of a set of target vectors.
    pub fn from_targets<T: AsRef<[f64]>>(targets: &[T]) -> Result<Self> {
        let first = targets.first().ok_or(Error::EmptyDataset)?.as_ref();
        let dim = first.len();
        let count = targets.len() as f64;
        let mut mean = vec![0.0; dim];
        for t in targets {
            check_len("target vector", dim, t.as_ref().len())?;
            for (m, v) in mean.iter_mut().zip(t.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; dim];
        for t in targets {
            for ((s, v), m) in var.iter_mut().zip(t.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        LeafStats::new(mean, var.into_iter().map(|v| sqrt(v / count)).collect())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std_dev(&self) -> &[f64] {
        &self.std_dev
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Borrowed view of one oblique split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitNode<'a> {
    pub weights: &'a [f64],
    pub threshold: f64,
}

impl SplitNode<'_> {
    #[inline]
    pub fn logit(&self, z: &[f64]) -> f64 {
        dot(self.weights, z) - self.threshold
    }
}

/// A complete binary tree of oblique splits with constant leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    depth: usize,
    input_dim: usize,
    /// Row-major `(2^D - 1) x input_dim`.
    weights: Vec<f64>,
    thresholds: Vec<f64>,
    leaves: Vec<f64>,
}

impl Tree {
    pub fn from_parts(
        depth: usize,
        input_dim: usize,
        weights: Vec<f64>,
        thresholds: Vec<f64>,
        leaves: Vec<f64>,
    ) -> Result<Self> {
        if depth == 0 || depth > 24 {
            return Err(Error::InvalidArgument(alloc::format!(
                "tree depth must be in 1..=24, got {depth}"
            )));
        }
        let splits = (1usize << depth) - 1;
        check_len("split thresholds", splits, thresholds.len())?;
        check_len("split weights", splits * input_dim, weights.len())?;
        check_len("leaves", splits + 1, leaves.len())?;
        if weights.iter().chain(&thresholds).chain(&leaves).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tree parameters"));
        }
        Ok(Tree {
            depth,
            input_dim,
            weights,
            thresholds,
            leaves,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_splits(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn split(&self, n: usize) -> SplitNode<'_> {
        SplitNode {
            weights: &self.weights[n * self.input_dim..(n + 1) * self.input_dim],
            threshold: self.thresholds[n],
        }
    }

    pub fn leaves(&self) -> &[f64] {
        &self.leaves
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Mutable split parameters `(weights, thresholds)`. Leaves stay read-only.
    pub fn split_params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.thresholds)
    }

    fn activations_into(&self, z: &[f64], out: &mut [f64]) {
        for (n, d) in out.iter_mut().enumerate() {
            *d = activation(self.split(n).logit(z));
        }
    }

    /// Expected leaf value under soft routing.
    pub fn predict_soft(&self, z: &[f64]) -> f64 {
        let mut d = vec![0.0; self.n_splits()];
        self.activations_into(z, &mut d);
        let mut prob = vec![0.0; 2 * self.n_splits() + 1];
        propagate(&d, &mut prob);
        let off = self.n_splits();
        prob[off..].iter().zip(&self.leaves).map(|(p, y)| p * y).sum()
    }

    /// Index of the leaf reached by hard routing.
    pub fn greedy_leaf(&self, z: &[f64]) -> usize {
        let mut n = 0;
        for _ in 0..self.depth {
            n = if self.split(n).logit(z) > 0.0 { 2 * n + 2 } else { 2 * n + 1 };
        }
        n - self.n_splits()
    }

    pub fn predict_greedy(&self, z: &[f64]) -> f64 {
        self.leaves[self.greedy_leaf(z)]
    }
}

/// Top-down probability propagation; `prob` covers all heap nodes.
fn propagate(d: &[f64], prob: &mut [f64]) {
    prob[0] = 1.0;
    for (n, &dn) in d.iter().enumerate() {
        let p = prob[n];
        prob[2 * n + 1] = p * (1.0 - dn);
        prob[2 * n + 2] = p * dn;
    }
}

/// Soft routing of one input through one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    /// Activation `d^n` of every split.
    pub activations: Vec<f64>,
    /// Probability `mu^n` of reaching every split.
    pub split_prob: Vec<f64>,
    /// Probability `mu^l` of reaching every leaf.
    pub leaf_prob: Vec<f64>,
}

pub fn soft_route(tree: &Tree, z: &[f64]) -> Result<Routing> {
    check_len("tree input", tree.input_dim, z.len())?;
    let splits = tree.n_splits();
    let mut d = vec![0.0; splits];
    tree.activations_into(z, &mut d);
    let mut prob = vec![0.0; 2 * splits + 1];
    propagate(&d, &mut prob);
    let leaf_prob = prob.split_off(splits);
    Ok(Routing {
        activations: d,
        split_prob: prob,
        leaf_prob,
    })
}

/// Gradient of one tree's expected error `eps_t = sum_l mu^l eps^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeGradient {
    /// `d eps_t / d theta^n`
    pub thresholds: Vec<f64>,
    /// `d eps_t / d beta^n_j`, row-major like the tree weights.
    pub weights: Vec<f64>,
    /// `d eps_t / d z_j`
    pub input: Vec<f64>,
    /// `eps^root`, equal to `eps_t`.
    pub root_error: f64,
}

/// Recursive bottom-up pass: `eps^n = d^n eps_+ + (1 - d^n) eps_-` and
/// `d eps_t / d phi^n = mu^n (d d^n / d phi^n) (eps_+ - eps_-)`.
pub fn tree_gradient(tree: &Tree, z: &[f64], per_leaf_error: &[f64]) -> Result<TreeGradient> {
    check_len("per-leaf errors", tree.n_leaves(), per_leaf_error.len())?;
    let routing = soft_route(tree, z)?;
    let splits = tree.n_splits();
    let k = tree.input_dim;
    let mut err = vec![0.0; 2 * splits + 1];
    err[splits..].copy_from_slice(per_leaf_error);
    let mut thresholds = vec![0.0; splits];
    let mut weights = vec![0.0; splits * k];
    let mut input = vec![0.0; k];
    for n in (0..splits).rev() {
        let d = routing.activations[n];
        let (minus, plus) = (err[2 * n + 1], err[2 * n + 2]);
        err[n] = d * plus + (1.0 - d) * minus;
        let g = routing.split_prob[n] * d * (1.0 - d) * (plus - minus);
        if g == 0.0 {
            continue;
        }
        thresholds[n] = -g;
        let beta = tree.split(n).weights;
        for j in 0..k {
            weights[n * k + j] = z[j] * g;
            input[j] += beta[j] * g;
        }
    }
    Ok(TreeGradient {
        thresholds,
        weights,
        input,
        root_error: err[0],
    })
}

/// Reusable buffers for [`Tree::sgd_in_place`].
#[derive(Debug, Default)]
struct Scratch {
    d: Vec<f64>,
    prob: Vec<f64>,
    err: Vec<f64>,
}

impl Tree {
    /// Gradient step on every split, adding this tree's input gradient to `input`.
    /// Gradients use the parameters before the step.
    fn sgd_in_place(&mut self, z: &[f64], per_leaf_error: &[f64], lr: f64, s: &mut Scratch, input: &mut [f64]) {
        let splits = self.n_splits();
        let k = self.input_dim;
        s.d.resize(splits, 0.0);
        s.prob.resize(2 * splits + 1, 0.0);
        s.err.resize(2 * splits + 1, 0.0);
        self.activations_into(z, &mut s.d);
        propagate(&s.d, &mut s.prob);
        s.err[splits..].copy_from_slice(per_leaf_error);
        for n in (0..splits).rev() {
            let d = s.d[n];
            let (minus, plus) = (s.err[2 * n + 1], s.err[2 * n + 2]);
            s.err[n] = d * plus + (1.0 - d) * minus;
            let g = s.prob[n] * d * (1.0 - d) * (plus - minus);
            if g == 0.0 {
                continue;
            }
            self.thresholds[n] -= lr * -g;
            let beta = &mut self.weights[n * k..(n + 1) * k];
            for ((w, acc), &zj) in beta.iter_mut().zip(input.iter_mut()).zip(z) {
                *acc += *w * g;
                *w -= lr * (zj * g);
            }
        }
    }
}

/// One SGD step on a tree's splits; returns this tree's input gradient.
///
/// The input gradient is not yet averaged over the forest.
pub fn backward(tree: &mut Tree, z: &[f64], per_leaf_error: &[f64], lr: f64) -> Result<Vec<f64>> {
    check_len("tree input", tree.input_dim, z.len())?;
    check_len("per-leaf errors", tree.n_leaves(), per_leaf_error.len())?;
    let mut input = vec![0.0; tree.input_dim];
    tree.sgd_in_place(z, per_leaf_error, lr, &mut Scratch::default(), &mut input);
    Ok(input)
}

/// Sufficient depth for constant Gaussian leaves to cover
/// `[mean - sigma, mean + sigma]` at resolution `epsilon` with probability
/// above `1 - epsilon_prime`. Callers take the ceiling.
pub fn depth_lower_bound(sigma: f64, epsilon: f64, epsilon_prime: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(alloc::format!("sigma must be positive, got {sigma}")));
    }
    if !(epsilon > 0.0 && epsilon < sigma) {
        return Err(Error::Domain(alloc::format!(
            "epsilon must lie in (0, sigma), got {epsilon} with sigma {sigma}"
        )));
    }
    if !(epsilon_prime > 0.0 && epsilon_prime < 1.0) {
        return Err(Error::Domain(alloc::format!(
            "epsilon' must lie in (0, 1), got {epsilon_prime}"
        )));
    }
    // ln(1 - (1 - eps')^(1 / 2 sigma)), computed as ln(-expm1(a)).
    let a = log1p(-epsilon_prime) / (2.0 * sigma);
    let miss_all = -expm1(a);
    if !(miss_all > 0.0 && miss_all < 1.0) {
        return Err(Error::Domain(alloc::format!(
            "numerator log argument {miss_all} outside (0, 1) for sigma {sigma}"
        )));
    }
    let numerator = ln(miss_all);
    let hit_one = 2.0 * epsilon / (sqrt(2.0 * core::f64::consts::PI) * sigma)
        * exp(-(sigma + epsilon) * (sigma + epsilon) / (2.0 * sigma * sigma));
    if !(hit_one > 0.0 && hit_one < 1.0) {
        return Err(Error::Domain(alloc::format!(
            "denominator log argument {} outside (0, 1)",
            1.0 - hit_one
        )));
    }
    let denominator = log1p(-hit_one);
    let bound = ln(numerator / denominator) / core::f64::consts::LN_2;
    if bound.is_finite() {
        Ok(bound)
    } else {
        Err(Error::Domain("depth bound is not finite".into()))
    }
}

/// Counts split-node evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounter {
    pub split_evaluations: u64,
}

/// `output_dim` groups of `trees_per_dim` single-output trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    output_dim: usize,
    trees_per_dim: usize,
    depth: usize,
    input_dim: usize,
    mode: ForestMode,
    loss: LeafLoss,
    stats: LeafStats,
    /// Group-major: tree `t` of group `k` at `k * trees_per_dim + t`.
    trees: Vec<Tree>,
}

/// Forest construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees_per_dim: usize,
    pub depth: usize,
    pub input_dim: usize,
    pub init_range: f64,
    pub loss: LeafLoss,
}

impl Forest {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        output_dim: usize,
        trees_per_dim: usize,
        depth: usize,
        input_dim: usize,
        mode: ForestMode,
        loss: LeafLoss,
        stats: LeafStats,
        trees: Vec<Tree>,
    ) -> Result<Self> {
        check_len("leaf statistics", output_dim, stats.dim())?;
        check_len("forest trees", output_dim * trees_per_dim, trees.len())?;
        for t in &trees {
            check_len("tree depth", depth, t.depth)?;
            check_len("tree input", input_dim, t.input_dim)?;
        }
        Ok(Forest {
            output_dim,
            trees_per_dim,
            depth,
            input_dim,
            mode,
            loss,
            stats,
            trees,
        })
    }

    /// Random initialization: splits uniform in `[-init_range, init_range]`,
    /// leaves of group `k` drawn from `N(mean_k, sigma_k)`.
    pub fn init(stats: &LeafStats, config: &ForestConfig, seed: u64) -> Result<Self> {
        if config.trees_per_dim == 0 || config.input_dim == 0 || stats.dim() == 0 {
            return Err(Error::InvalidArgument(
                "forest dimensions must be positive".into(),
            ));
        }
        if config.depth == 0 || config.depth > 24 {
            return Err(Error::InvalidArgument(alloc::format!(
                "tree depth must be in 1..=24, got {}",
                config.depth
            )));
        }
        if !(config.init_range >= 0.0) {
            return Err(Error::InvalidArgument("init range must be non-negative".into()));
        }
        for &sigma in stats.std_dev() {
            if let Ok(d0) = depth_lower_bound(sigma, sigma / 10.0, 0.01) {
                let needed = libm::ceil(d0);
                if (config.depth as f64) < needed {
                    log::warn!(
                        "tree depth {} is below the coverage bound {} for sigma {}",
                        config.depth,
                        needed,
                        sigma
                    );
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let splits = (1usize << config.depth) - 1;
        let r = config.init_range;
        let uniform = |rng: &mut ChaCha8Rng| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
        let mut trees = Vec::with_capacity(stats.dim() * config.trees_per_dim);
        for k in 0..stats.dim() {
            let normal = Normal::new(stats.mean()[k], stats.std_dev()[k])
                .map_err(|_| Error::InvalidArgument("invalid leaf distribution".into()))?;
            for _ in 0..config.trees_per_dim {
                let weights = (0..splits * config.input_dim).map(|_| uniform(&mut rng)).collect();
                let thresholds = (0..splits).map(|_| uniform(&mut rng)).collect();
                let leaves = (0..=splits).map(|_| normal.sample(&mut rng)).collect();
                trees.push(Tree::from_parts(
                    config.depth,
                    config.input_dim,
                    weights,
                    thresholds,
                    leaves,
                )?);
            }
        }
        Forest::from_parts(
            stats.dim(),
            config.trees_per_dim,
            config.depth,
            config.input_dim,
            ForestMode::Soft,
            config.loss,
            stats.clone(),
            trees,
        )
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn trees_per_dim(&self) -> usize {
        self.trees_per_dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn mode(&self) -> ForestMode {
        self.mode
    }

    pub fn loss(&self) -> LeafLoss {
        self.loss
    }

    pub fn stats(&self) -> &LeafStats {
        &self.stats
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn trees_mut(&mut self) -> &mut [Tree] {
        &mut self.trees
    }

    /// Trees predicting output dimension `k`.
    pub fn group(&self, k: usize) -> &[Tree] {
        &self.trees[k * self.trees_per_dim..(k + 1) * self.trees_per_dim]
    }

    pub fn split_parameter_count(&self) -> usize {
        self.trees.len() * ((1 << self.depth) - 1) * (self.input_dim + 1)
    }

    /// Prediction with the evaluation mode the forest is in.
    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut counter = EvalCounter::default();
        match self.mode {
            ForestMode::Soft => self.predict_soft_counted(z, &mut counter),
            ForestMode::Greedy => self.predict_greedy_counted(z, &mut counter),
        }
    }

    pub fn predict_soft_counted(&self, z: &[f64], counter: &mut EvalCounter) -> Result<Vec<f64>> {
        check_len("forest input", self.input_dim, z.len())?;
        let splits = (1usize << self.depth) - 1;
        let mut d = vec![0.0; splits];
        let mut prob = vec![0.0; 2 * splits + 1];
        let mut out = vec![0.0; self.output_dim];
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for tree in self.group(k) {
                tree.activations_into(z, &mut d);
                propagate(&d, &mut prob);
                acc += prob[splits..]
                    .iter()
                    .zip(&tree.leaves)
                    .map(|(p, y)| p * y)
                    .sum::<f64>();
            }
            counter.split_evaluations += (self.trees_per_dim * splits) as u64;
            *o = acc / self.trees_per_dim as f64;
        }
        Ok(out)
    }

    pub fn predict_greedy_counted(&self, z: &[f64], counter: &mut EvalCounter) -> Result<Vec<f64>> {
        check_len("forest input", self.input_dim, z.len())?;
        let mut out = vec![0.0; self.output_dim];
        for (k, o) in out.iter_mut().enumerate() {
            let acc: f64 = self.group(k).iter().map(|t| t.predict_greedy(z)).sum();
            counter.split_evaluations += (self.trees_per_dim * self.depth) as u64;
            *o = acc / self.trees_per_dim as f64;
        }
        Ok(out)
    }

    /// Forest training loss: mean over all trees of the expected leaf error.
    pub fn loss_value(&self, z: &[f64], target: &[f64]) -> Result<f64> {
        check_len("forest input", self.input_dim, z.len())?;
        check_len("forest target", self.output_dim, target.len())?;
        let mut total = 0.0;
        for (k, &t) in target.iter().enumerate() {
            for tree in self.group(k) {
                let routing = soft_route(tree, z)?;
                total += routing
                    .leaf_prob
                    .iter()
                    .zip(&tree.leaves)
                    .map(|(p, &y)| p * self.loss.error(y, t))
                    .sum::<f64>();
            }
        }
        Ok(total / self.trees.len() as f64)
    }

    /// One online update of every tree towards `target`, with per-dimension
    /// learning rate `lr_base / sigma_k`. Returns the input gradient averaged
    /// over all `trees_per_dim * output_dim` trees.
    pub fn sgd_step(&mut self, z: &[f64], target: &[f64], lr_base: f64) -> Result<Vec<f64>> {
        if self.mode == ForestMode::Greedy {
            return Err(Error::Frozen);
        }
        check_len("forest input", self.input_dim, z.len())?;
        check_len("forest target", self.output_dim, target.len())?;
        if target.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("forest target"));
        }
        let mut input_grad = vec![0.0; self.input_dim];
        let mut leaf_err = vec![0.0; 1 << self.depth];
        let loss = self.loss;
        let per = self.trees_per_dim;
        let mut scratch = Scratch::default();
        for (i, tree) in self.trees.iter_mut().enumerate() {
            let k = i / per;
            let lr = lr_base / self.stats.std_dev[k];
            for (e, &y) in leaf_err.iter_mut().zip(&tree.leaves) {
                *e = loss.error(y, target[k]);
            }
            tree.sgd_in_place(z, &leaf_err, lr, &mut scratch, &mut input_grad);
        }
        let scale = 1.0 / self.trees.len() as f64;
        input_grad.iter_mut().for_each(|g| *g *= scale);
        Ok(input_grad)
    }

    /// Switches to greedy evaluation. Idempotent.
    pub fn freeze(mut self) -> Forest {
        self.mode = ForestMode::Greedy;
        self
    }
}

/// Builds a soft forest; see [`Forest::init`].
pub fn init_forest(
    stats: &LeafStats,
    trees_per_dim: usize,
    depth: usize,
    input_dim: usize,
    seed: u64,
) -> Result<Forest> {
    Forest::init(
        stats,
        &ForestConfig {
            trees_per_dim,
            depth,
            input_dim,
            init_range: DEFAULT_INIT_RANGE,
            loss: LeafLoss::Squared,
        },
        seed,
    )
}

/// Soft (expected-value) prediction regardless of the forest's mode.
pub fn nf_predict(forest: &Forest, z: &[f64]) -> Result<Vec<f64>> {
    forest.predict_soft_counted(z, &mut EvalCounter::default())
}

/// Greedy hard-routing prediction regardless of the forest's mode.
pub fn gnf_predict(forest: &Forest, z: &[f64]) -> Result<Vec<f64>> {
    forest.predict_greedy_counted(z, &mut EvalCounter::default())
}

pub fn forest_sgd_step(forest: &mut Forest, z: &[f64], target: &[f64], lr_base: f64) -> Result<Vec<f64>> {
    forest.sgd_step(z, target, lr_base)
}

pub fn freeze(forest: Forest) -> Forest {
    forest.freeze()
}
