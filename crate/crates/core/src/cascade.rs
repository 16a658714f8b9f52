//! Semi-parametric cascade: parametric stages refine PDM parameters, explicit
//! stages then refine landmark coordinates directly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crop::{crop_resize, BBox, CropTransform};
use crate::dimred::ProjectionLayer;
use crate::error::{check_len, Error, Result};
use crate::features::{compute_channels, shape_descriptor_into, DescriptorConfig, GrayImage, IntegralChannels};
use crate::neural_forest::{Forest, ForestConfig, ForestMode, LeafLoss, LeafStats};
use crate::shape_model::{
    build_pdm, fit_parameters, generalized_procrustes, synthesize, ParamVector, Pdm, Shape,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StageKind {
    /// Predicts an update of the `m + 5` shape parameters.
    Parametric,
    /// Predicts per-landmark displacements `(dx_1..dx_N, dy_1..dy_N)`.
    Explicit,
}

impl StageKind {
    pub fn output_dim(self, pdm: &Pdm) -> usize {
        match self {
            StageKind::Parametric => pdm.param_dim(),
            StageKind::Explicit => 2 * pdm.n_points(),
        }
    }
}

/// One cascade level: descriptor projection followed by a neural forest.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeStage {
    pub kind: StageKind,
    pub projection: ProjectionLayer,
    pub forest: Forest,
}

impl CascadeStage {
    pub fn new(kind: StageKind, projection: ProjectionLayer, forest: Forest) -> Result<Self> {
        check_len("stage forest input", projection.out_dim(), forest.input_dim())?;
        Ok(CascadeStage {
            kind,
            projection,
            forest,
        })
    }

    /// Residual statistics the forest leaves were drawn from.
    pub fn stats(&self) -> &LeafStats {
        self.forest.stats()
    }

    pub fn is_frozen(&self) -> bool {
        self.forest.mode() == ForestMode::Greedy
    }

    /// Stage output for the descriptor extracted at `shape`.
    pub fn predict(&self, channels: &IntegralChannels, shape: &Shape, descriptor: &DescriptorConfig) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.projection.in_dim()];
        shape_descriptor_into(channels, shape, descriptor, &mut x)?;
        let z = self.projection.project(&x)?;
        self.forest.predict(&z)
    }
}

/// Current estimate during cascade evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Params(ParamVector),
    Shape(Shape),
}

impl Estimate {
    pub fn shape(&self, pdm: &Pdm) -> Result<Shape> {
        match self {
            Estimate::Params(p) => synthesize(p, pdm),
            Estimate::Shape(s) => Ok(s.clone()),
        }
    }

    /// Applies a stage output to the estimate. A parametric update requires a
    /// parametric estimate; an explicit update converts it to a shape first.
    pub fn apply(&mut self, kind: StageKind, delta: &[f64], pdm: &Pdm) -> Result<()> {
        match (kind, &mut *self) {
            (StageKind::Parametric, Estimate::Params(p)) => p.add(delta),
            (StageKind::Parametric, Estimate::Shape(_)) => Err(Error::InvalidArgument(
                "parametric update applied after an explicit stage".into(),
            )),
            (StageKind::Explicit, _) => {
                let s = self.shape(pdm)?.displaced(delta)?;
                *self = Estimate::Shape(s);
                Ok(())
            }
        }
    }
}

/// A trained cascade with its shape model and initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pdm: Pdm,
    stages: Vec<CascadeStage>,
    p0: ParamVector,
    crop_size: usize,
    descriptor: DescriptorConfig,
}

/// Alignment output. `trace` holds the shape before the first stage and after each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub shape: Shape,
    pub params: ParamVector,
    pub trace: Vec<Shape>,
}

/// Rejects any parametric stage that follows an explicit one.
fn check_stage_order(kinds: impl IntoIterator<Item = StageKind>) -> Result<()> {
    let mut first_explicit = None;
    for (i, kind) in kinds.into_iter().enumerate() {
        match kind {
            StageKind::Explicit if first_explicit.is_none() => first_explicit = Some(i),
            StageKind::Parametric => {
                if let Some(e) = first_explicit {
                    return Err(Error::StageOrder(e));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

impl CascadeModel {
    pub fn new(
        pdm: Pdm,
        stages: Vec<CascadeStage>,
        p0: ParamVector,
        crop_size: usize,
        descriptor: DescriptorConfig,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidArgument("a cascade needs at least one stage".into()));
        }
        if crop_size == 0 {
            return Err(Error::InvalidArgument("crop size must be positive".into()));
        }
        descriptor.validate()?;
        check_stage_order(stages.iter().map(|s| s.kind))?;
        check_len("initial parameters", pdm.param_dim(), p0.dim())?;
        let in_dim = pdm.n_points() * descriptor.point_len();
        for stage in &stages {
            check_len("stage descriptor", in_dim, stage.projection.in_dim())?;
            check_len("stage output", stage.kind.output_dim(&pdm), stage.forest.output_dim())?;
        }
        Ok(CascadeModel {
            pdm,
            stages,
            p0,
            crop_size,
            descriptor,
        })
    }

    pub fn pdm(&self) -> &Pdm {
        &self.pdm
    }

    pub fn stages(&self) -> &[CascadeStage] {
        &self.stages
    }

    pub fn p0(&self) -> &ParamVector {
        &self.p0
    }

    pub fn crop_size(&self) -> usize {
        self.crop_size
    }

    pub fn descriptor(&self) -> &DescriptorConfig {
        &self.descriptor
    }

    /// True when every stage evaluates greedily.
    pub fn is_frozen(&self) -> bool {
        self.stages.iter().all(CascadeStage::is_frozen)
    }

    /// Mean shape at the initial placement, in crop coordinates.
    pub fn initial_shape(&self) -> Result<Shape> {
        synthesize(&self.p0, &self.pdm)
    }

    /// Runs the cascade on an already cropped image; all shapes in crop coordinates.
    pub fn align_crop(&self, channels: &IntegralChannels) -> Result<Alignment> {
        let mut estimate = Estimate::Params(self.p0.clone());
        let mut params = self.p0.clone();
        let mut trace = Vec::with_capacity(self.stages.len() + 1);
        let mut shape = estimate.shape(&self.pdm)?;
        trace.push(shape.clone());
        for stage in &self.stages {
            let delta = stage.predict(channels, &shape, &self.descriptor)?;
            estimate.apply(stage.kind, &delta, &self.pdm)?;
            if let Estimate::Params(p) = &estimate {
                params = p.clone();
            }
            shape = estimate.shape(&self.pdm)?;
            trace.push(shape.clone());
        }
        Ok(Alignment { shape, params, trace })
    }

    /// Crops `bbox`, aligns, and maps every shape back to image coordinates.
    /// `params` stays in crop coordinates.
    pub fn align(&self, image: &GrayImage, bbox: &BBox) -> Result<Alignment> {
        let (crop, transform) = crop_resize(image, bbox, self.crop_size)?;
        let channels = compute_channels(&crop)?;
        let a = self.align_crop(&channels)?;
        Ok(Alignment {
            shape: transform.shape_to_image(&a.shape),
            params: a.params,
            trace: a.trace.iter().map(|s| transform.shape_to_image(s)).collect(),
        })
    }
}

/// Cascade hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stages: Vec<StageKind>,
    pub depth: usize,
    pub trees_parametric: usize,
    pub trees_explicit: usize,
    /// Projection output size `k`.
    pub projection_dim: usize,
    pub learning_rate: f64,
    /// SGD updates per stage.
    pub updates: usize,
    pub eta: f64,
    pub theta: f64,
    pub modes: usize,
    pub gauss_newton_iterations: usize,
    pub init_range: f64,
    pub crop_size: usize,
    pub descriptor: DescriptorConfig,
    /// Perturbation half-width as a fraction of half the observed residual range.
    pub perturb_fraction: f64,
    pub leaf_loss: LeafLoss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stages: vec![
                StageKind::Parametric,
                StageKind::Parametric,
                StageKind::Parametric,
                StageKind::Explicit,
            ],
            depth: 8,
            trees_parametric: 25,
            trees_explicit: 5,
            projection_dim: 500,
            learning_rate: 0.005,
            updates: 200_000,
            eta: 0.01,
            theta: 0.05,
            modes: 15,
            gauss_newton_iterations: 100,
            init_range: 0.01,
            crop_size: 200,
            descriptor: DescriptorConfig::default(),
            perturb_fraction: 1.0,
            leaf_loss: LeafLoss::Squared,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_stage_order(self.stages.iter().copied())?;
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("at least one stage is required".into()));
        }
        let positive = [
            ("depth", self.depth),
            ("trees_parametric", self.trees_parametric),
            ("trees_explicit", self.trees_explicit),
            ("projection_dim", self.projection_dim),
            ("gauss_newton_iterations", self.gauss_newton_iterations),
            ("crop_size", self.crop_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("learning_rate", self.learning_rate),
            ("eta", self.eta),
            ("theta", self.theta),
            ("init_range", self.init_range),
            ("perturb_fraction", self.perturb_fraction),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative")));
            }
        }
        self.descriptor.validate()
    }

    pub fn trees_for(&self, kind: StageKind) -> usize {
        match kind {
            StageKind::Parametric => self.trees_parametric,
            StageKind::Explicit => self.trees_explicit,
        }
    }
}

/// A training crop and its ground-truth landmarks in crop coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub crop: GrayImage,
    pub truth: Shape,
}

impl TrainingSample {
    /// Crops `image` around `bbox` and maps `truth` into the crop.
    pub fn from_image(image: &GrayImage, truth: &Shape, bbox: &BBox, crop_size: usize) -> Result<Self> {
        let (crop, transform): (GrayImage, CropTransform) = crop_resize(image, bbox, crop_size)?;
        Ok(TrainingSample {
            truth: transform.shape_to_crop(truth),
            crop,
        })
    }
}

/// Training samples with the shape model built from them and fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    pub pdm: Pdm,
    /// Gauss-Newton parameters of every ground truth.
    pub fitted: Vec<ParamVector>,
    /// Mean-shape initialization: mean rigid parameters, zero deformation.
    pub p0: ParamVector,
}

impl TrainingSet {
    /// Builds the PDM by Procrustes analysis at the mean crop-space RMS radius,
    /// so that unit scale parameters correspond to a typical face in the crop.
    pub fn build(samples: Vec<TrainingSample>, modes: usize, iterations: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let truths: Vec<Shape> = samples.iter().map(|s| s.truth.clone()).collect();
        let scale = truths.iter().map(Shape::rms_radius).sum::<f64>() / truths.len() as f64;
        let (aligned, _) = generalized_procrustes(&truths, scale)?;
        let pdm = build_pdm(&aligned, modes)?;
        let mut fitted = Vec::with_capacity(truths.len());
        for t in &truths {
            fitted.push(fit_parameters(t, &pdm, iterations)?.params);
        }
        let n = fitted.len() as f64;
        let mut p0 = ParamVector::identity(modes);
        p0.alpha_x = fitted.iter().map(|p| p.alpha_x).sum::<f64>() / n;
        p0.alpha_y = fitted.iter().map(|p| p.alpha_y).sum::<f64>() / n;
        p0.gamma = fitted.iter().map(|p| p.gamma).sum::<f64>() / n;
        p0.t_x = fitted.iter().map(|p| p.t_x).sum::<f64>() / n;
        p0.t_y = fitted.iter().map(|p| p.t_y).sum::<f64>() / n;
        Ok(TrainingSet {
            samples,
            pdm,
            fitted,
            p0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Every sample starting at `p0`.
    pub fn initial_estimates(&self) -> Vec<Estimate> {
        vec![Estimate::Params(self.p0.clone()); self.samples.len()]
    }
}

/// Regression target of one sample for a stage of `kind`.
pub fn stage_target(kind: StageKind, set: &TrainingSet, index: usize, estimate: &Estimate) -> Result<Vec<f64>> {
    match (kind, estimate) {
        (StageKind::Parametric, Estimate::Params(p)) => set.fitted[index].difference(p),
        (StageKind::Parametric, Estimate::Shape(_)) => Err(Error::InvalidArgument(
            "parametric target requested for an explicit estimate".into(),
        )),
        (StageKind::Explicit, e) => {
            let current = e.shape(&set.pdm)?;
            let truth = &set.samples[index].truth;
            check_len("explicit target points", truth.len(), current.len())?;
            Ok(truth
                .to_stacked()
                .iter()
                .zip(current.to_stacked())
                .map(|(t, c)| t - c)
                .collect())
        }
    }
}

/// Per-sample targets of a stage and their statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTargets {
    pub targets: Vec<Vec<f64>>,
    pub stats: LeafStats,
}

/// Residuals between ground truth and the current estimates: `p* - p` for a
/// parametric stage, `s* - s` in `(x.., y..)` layout for an explicit stage.
pub fn compute_stage_targets(kind: StageKind, set: &TrainingSet, estimates: &[Estimate]) -> Result<StageTargets> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len("stage estimates", set.len(), estimates.len())?;
    let targets = estimates
        .iter()
        .enumerate()
        .map(|(i, e)| stage_target(kind, set, i, e))
        .collect::<Result<Vec<_>>>()?;
    let stats = LeafStats::from_targets(&targets)?;
    Ok(StageTargets { targets, stats })
}

/// Half-widths of the scale and translation perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbRanges {
    /// Relative per-axis scale half-width: scales are drawn from `[1 - h, 1 + h]`.
    pub scale: [f64; 2],
    /// Per-axis translation half-width in pixels.
    pub shift: [f64; 2],
}

impl PerturbRanges {
    pub const NONE: PerturbRanges = PerturbRanges {
        scale: [0.0; 2],
        shift: [0.0; 2],
    };
}

fn axis_spread(s: &Shape) -> ([f64; 2], [f64; 2]) {
    let c = s.centroid();
    let n = s.len() as f64;
    let mut var = [0.0; 2];
    for p in s.points() {
        var[0] += (p[0] - c[0]) * (p[0] - c[0]);
        var[1] += (p[1] - c[1]) * (p[1] - c[1]);
    }
    (c, [libm::sqrt(var[0] / n), libm::sqrt(var[1] / n)])
}

/// Scale ratio and translation offset between the truth and an estimate, per axis.
fn rigid_residual(set: &TrainingSet, index: usize, estimate: &Estimate) -> Result<([f64; 2], [f64; 2])> {
    match estimate {
        Estimate::Params(p) => {
            let f = &set.fitted[index];
            Ok(([f.alpha_x / p.alpha_x, f.alpha_y / p.alpha_y], [f.t_x - p.t_x, f.t_y - p.t_y]))
        }
        Estimate::Shape(s) => {
            let (ct, st) = axis_spread(&set.samples[index].truth);
            let (cs, ss) = axis_spread(s);
            Ok(([st[0] / ss[0], st[1] / ss[1]], [ct[0] - cs[0], ct[1] - cs[1]]))
        }
    }
}

/// Perturbation ranges from the spread of the scale and translation residuals
/// left by the current estimates, scaled by `fraction`.
pub fn perturbation_ranges(set: &TrainingSet, estimates: &[Estimate], fraction: f64) -> Result<PerturbRanges> {
    check_len("stage estimates", set.len(), estimates.len())?;
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for (i, e) in estimates.iter().enumerate() {
        let (r, t) = rigid_residual(set, i, e)?;
        for (j, v) in [r[0], r[1], t[0], t[1]].into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("perturbation residual"));
            }
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let half = |j: usize| fraction * (hi[j] - lo[j]) / 2.0;
    Ok(PerturbRanges {
        scale: [half(0).min(0.9), half(1).min(0.9)],
        shift: [half(2), half(3)],
    })
}

/// Rescales an estimate per axis about its center and translates it.
pub fn perturb(estimate: &Estimate, scale: [f64; 2], shift: [f64; 2]) -> Estimate {
    match estimate {
        Estimate::Params(p) => {
            let mut q = p.clone();
            q.alpha_x *= scale[0];
            q.alpha_y *= scale[1];
            q.t_x += shift[0];
            q.t_y += shift[1];
            Estimate::Params(q)
        }
        Estimate::Shape(s) => {
            let c = s.centroid();
            Estimate::Shape(s.map_points(|p| {
                [
                    c[0] + scale[0] * (p[0] - c[0]) + shift[0],
                    c[1] + scale[1] * (p[1] - c[1]) + shift[1],
                ]
            }))
        }
    }
}

fn sample_perturbation(rng: &mut ChaCha8Rng, ranges: &PerturbRanges) -> ([f64; 2], [f64; 2]) {
    let mut draw = |h: f64| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 };
    let scale = [1.0 + draw(ranges.scale[0]), 1.0 + draw(ranges.scale[1])];
    let shift = [draw(ranges.shift[0]), draw(ranges.shift[1])];
    (scale, shift)
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Initializes a soft stage from target statistics.
pub fn init_stage(kind: StageKind, stats: &LeafStats, in_dim: usize, config: &TrainConfig, seed: u64) -> Result<CascadeStage> {
    let projection = ProjectionLayer::random(
        config.projection_dim,
        in_dim,
        config.init_range,
        config.eta,
        config.theta,
        mix_seed(seed, 0),
    )?;
    let forest = Forest::init(
        stats,
        &ForestConfig {
            trees_per_dim: config.trees_for(kind),
            depth: config.depth,
            input_dim: config.projection_dim,
            init_range: config.init_range,
            loss: config.leaf_loss,
        },
        mix_seed(seed, 1),
    )?;
    CascadeStage::new(kind, projection, forest)
}

/// Channels of every crop, computed once.
pub fn crop_channels(set: &TrainingSet) -> Result<Vec<IntegralChannels>> {
    set.samples.iter().map(|s| compute_channels(&s.crop)).collect()
}

/// Source of per-sample integral channels during training.
pub enum ChannelSource<'a> {
    /// Channels recomputed from the crop on every visit.
    OnDemand,
    /// Precomputed channels, one per sample.
    Cached(&'a [IntegralChannels]),
}

/// Online SGD of a soft stage over randomly drawn, randomly perturbed samples,
/// then freezes it.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    mut stage: CascadeStage,
    set: &TrainingSet,
    estimates: &[Estimate],
    ranges: &PerturbRanges,
    updates: usize,
    learning_rate: f64,
    descriptor: &DescriptorConfig,
    channels: ChannelSource<'_>,
    seed: u64,
) -> Result<CascadeStage> {
    if stage.is_frozen() {
        return Err(Error::Frozen);
    }
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_len("stage estimates", set.len(), estimates.len())?;
    if let ChannelSource::Cached(c) = &channels {
        check_len("cached channels", set.len(), c.len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; stage.projection.in_dim()];
    let mut z = vec![0.0; stage.projection.out_dim()];
    let mut scratch;
    for _ in 0..updates {
        let i = rng.gen_range(0..set.len());
        let (scale, shift) = sample_perturbation(&mut rng, ranges);
        let perturbed = perturb(&estimates[i], scale, shift);
        let target = stage_target(stage.kind, set, i, &perturbed)?;
        let shape = perturbed.shape(&set.pdm)?;
        let ch = match &channels {
            ChannelSource::Cached(c) => &c[i],
            ChannelSource::OnDemand => {
                scratch = compute_channels(&set.samples[i].crop)?;
                &scratch
            }
        };
        shape_descriptor_into(ch, &shape, descriptor, &mut x)?;
        stage.projection.project_dense_into(&x, &mut z)?;
        let grad_z = stage.forest.sgd_step(&z, &target, learning_rate)?;
        stage.projection.update_truncated(&x, &z, &grad_z, learning_rate)?;
    }
    stage.projection.compact();
    Ok(CascadeStage {
        kind: stage.kind,
        projection: stage.projection,
        forest: stage.forest.freeze(),
    })
}

/// Advances every estimate by one stage.
pub fn apply_stage(
    stage: &CascadeStage,
    set: &TrainingSet,
    estimates: &mut [Estimate],
    descriptor: &DescriptorConfig,
    channels: &ChannelSource<'_>,
) -> Result<()> {
    check_len("stage estimates", set.len(), estimates.len())?;
    for (i, e) in estimates.iter_mut().enumerate() {
        let owned;
        let ch = match channels {
            ChannelSource::Cached(c) => &c[i],
            ChannelSource::OnDemand => {
                owned = compute_channels(&set.samples[i].crop)?;
                &owned
            }
        };
        let delta = stage.predict(ch, &e.shape(&set.pdm)?, descriptor)?;
        e.apply(stage.kind, &delta, &set.pdm)?;
    }
    Ok(())
}

/// Trains all stages in order, each on the residuals left by its frozen predecessors.
pub fn train_cascade(config: &TrainConfig, samples: Vec<TrainingSample>) -> Result<CascadeModel> {
    config.validate()?;
    let set = TrainingSet::build(samples, config.modes, config.gauss_newton_iterations)?;
    train_cascade_on(config, &set, ChannelSource::OnDemand)
}

/// As [`train_cascade`] on a prepared set.
pub fn train_cascade_on(config: &TrainConfig, set: &TrainingSet, channels: ChannelSource<'_>) -> Result<CascadeModel> {
    config.validate()?;
    check_len("pdm modes", config.modes, set.pdm.modes())?;
    let in_dim = set.pdm.n_points() * config.descriptor.point_len();
    let mut estimates = set.initial_estimates();
    let mut stages = Vec::with_capacity(config.stages.len());
    for (lv, &kind) in config.stages.iter().enumerate() {
        let StageTargets { stats, .. } = compute_stage_targets(kind, set, &estimates)?;
        let ranges = perturbation_ranges(set, &estimates, config.perturb_fraction)?;
        let seed = mix_seed(config.seed, 16 + lv as u64);
        let stage = init_stage(kind, &stats, in_dim, config, seed)?;
        let stage = train_stage(
            stage,
            set,
            &estimates,
            &ranges,
            config.updates,
            config.learning_rate,
            &config.descriptor,
            match &channels {
                ChannelSource::Cached(c) => ChannelSource::Cached(c),
                ChannelSource::OnDemand => ChannelSource::OnDemand,
            },
            mix_seed(seed, 2),
        )?;
        apply_stage(&stage, set, &mut estimates, &config.descriptor, &channels)?;
        log::info!(
            "stage {lv} ({kind:?}) trained: projection sparsity {:.3}",
            stage.projection.sparsity()
        );
        stages.push(stage);
    }
    CascadeModel::new(set.pdm.clone(), stages, set.p0.clone(), config.crop_size, config.descriptor)
}
