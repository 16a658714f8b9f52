//! Per-step alignment timings.

use std::fmt::Write as _;
use std::time::Instant;

use gnfalign_core::cascade::{CascadeModel, Estimate};
use gnfalign_core::crop::{crop_resize, BBox};
use gnfalign_core::dimred::SparseRows;
use gnfalign_core::features::{compute_channels, shape_descriptor_into, GrayImage};
use gnfalign_core::neural_forest::EvalCounter;

use crate::error::Result;
use crate::eval::median;

/// Median milliseconds per step plus exact split-evaluation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub timings: Vec<(String, f64)>,
    pub soft_splits_per_tree: f64,
    pub greedy_splits_per_tree: f64,
    pub projection_sparsity: f64,
}

impl BenchReport {
    pub fn timing(&self, name: &str) -> Option<f64> {
        self.timings.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// CSV `metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (n, v) in &self.timings {
            let _ = writeln!(out, "median_ms_{n},{v}");
        }
        let _ = writeln!(out, "soft_splits_per_tree,{}", self.soft_splits_per_tree);
        let _ = writeln!(out, "greedy_splits_per_tree,{}", self.greedy_splits_per_tree);
        let _ = writeln!(out, "projection_sparsity,{}", self.projection_sparsity);
        out
    }
}

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64() * 1e3)
}

/// Times every pipeline step on each image `repetitions` times.
///
/// Projection and forest steps are timed per cascade (summed over stages) in
/// both variants on the same inputs: dense and sparse projection, soft and
/// greedy forests. The cascade itself advances with the model's own evaluation.
pub fn bench(model: &CascadeModel, images: &[(GrayImage, BBox)], repetitions: usize) -> Result<BenchReport> {
    let names = [
        "crop",
        "channels",
        "descriptor",
        "projection_dense",
        "projection_sparse",
        "forest_soft",
        "forest_greedy",
        "total",
    ];
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let sparse: Vec<SparseRows> = model
        .stages()
        .iter()
        .map(|s| SparseRows::from_dense(s.projection.weights(), s.projection.out_dim(), s.projection.in_dim()))
        .collect();
    let mut soft = EvalCounter::default();
    let mut greedy = EvalCounter::default();
    let mut tree_evals = 0u64;
    for _ in 0..repetitions.max(1) {
        for (image, bbox) in images {
            let mut row = [0.0f64; 8];
            let (cropped, t) = time(|| crop_resize(image, bbox, model.crop_size()));
            let (crop, _) = cropped?;
            row[0] = t;
            let (channels, t) = time(|| compute_channels(&crop));
            let channels = channels?;
            row[1] = t;
            let mut estimate = Estimate::Params(model.p0().clone());
            for (stage, rows) in model.stages().iter().zip(&sparse) {
                let shape = estimate.shape(model.pdm())?;
                let mut x = vec![0.0; stage.projection.in_dim()];
                let (r, t) = time(|| shape_descriptor_into(&channels, &shape, model.descriptor(), &mut x));
                r?;
                row[2] += t;
                let mut z = vec![0.0; stage.projection.out_dim()];
                let (r, t) = time(|| stage.projection.project_dense_into(&x, &mut z));
                r?;
                row[3] += t;
                let mut zs = vec![0.0; stage.projection.out_dim()];
                let (r, t) = time(|| stage.projection.project_sparse_into(rows, &x, &mut zs));
                r?;
                row[4] += t;
                let (r, t) = time(|| stage.forest.predict_soft_counted(&z, &mut soft));
                r?;
                row[5] += t;
                let (delta, t) = time(|| stage.forest.predict_greedy_counted(&z, &mut greedy));
                row[6] += t;
                tree_evals += stage.forest.trees().len() as u64;
                let delta = if stage.is_frozen() { delta? } else { stage.forest.predict(&z)? };
                estimate.apply(stage.kind, &delta, model.pdm())?;
            }
            let (r, t) = time(|| model.align(image, bbox));
            r?;
            row[7] = t;
            for (s, v) in samples.iter_mut().zip(row) {
                s.push(v);
            }
        }
    }
    let trees = tree_evals.max(1) as f64;
    let weights: usize = model.stages().iter().map(|s| s.projection.weights().len()).sum();
    let zeros: usize = model
        .stages()
        .iter()
        .map(|s| s.projection.weights().iter().filter(|w| **w == 0.0).count())
        .sum();
    Ok(BenchReport {
        timings: names
            .iter()
            .zip(samples.iter_mut())
            .map(|(n, s)| (n.to_string(), median(s)))
            .collect(),
        soft_splits_per_tree: soft.split_evaluations as f64 / trees,
        greedy_splits_per_tree: greedy.split_evaluations as f64 / trees,
        projection_sparsity: zeros as f64 / weights.max(1) as f64,
    })
}
