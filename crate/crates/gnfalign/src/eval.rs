//! Dataset loading, alignment evaluation and reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gnfalign_core::cascade::{CascadeModel, TrainingSample};
use gnfalign_core::crop::{crop_resize, BBox, CropTransform};
use gnfalign_core::features::{compute_channels, GrayImage};
use gnfalign_core::shape_model::Shape;

use crate::error::{io_err, Result};
use crate::manifest::AnnotatedExample;
use crate::metrics::{ced, nme, Normalizer};

/// Crops and maps the ground truth of every example into crop coordinates.
pub fn load_training_samples(examples: &[AnnotatedExample], crop_size: usize) -> Result<Vec<TrainingSample>> {
    examples
        .iter()
        .map(|ex| {
            let image = ex.load_image()?;
            let shape = ex.load_shape()?;
            Ok(TrainingSample::from_image(&image, &shape, &ex.bbox, crop_size)?)
        })
        .collect()
}

/// A face crop ready for alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CropInit {
    pub crop: GrayImage,
    pub transform: CropTransform,
    /// The model's mean shape at its initial placement, in crop coordinates.
    pub initial: Shape,
}

/// Crops `bbox` to the model's crop size and places the mean shape.
pub fn crop_and_init(model: &CascadeModel, image: &GrayImage, bbox: &BBox) -> Result<CropInit> {
    let (crop, transform) = crop_resize(image, bbox, model.crop_size())?;
    Ok(CropInit {
        crop,
        transform,
        initial: model.initial_shape()?,
    })
}

/// Which normalizer to apply per example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizerKind {
    InterPupil,
    BBoxSize,
}

impl NormalizerKind {
    pub fn for_example(self, bbox: &BBox) -> Normalizer {
        match self {
            NormalizerKind::InterPupil => Normalizer::InterPupil,
            NormalizerKind::BBoxSize => Normalizer::BBoxSize { w: bbox.w, h: bbox.h },
        }
    }
}

/// Errors of one image: final NME and NME of the shape before and after each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub image: PathBuf,
    pub nme: f64,
    pub stage_nme: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<ImageResult>,
    pub mean_nme: f64,
    /// Mean NME of the initial shape followed by the mean after each stage.
    pub stage_mean_nme: Vec<f64>,
    pub ced: Vec<(f64, f64)>,
    /// Median milliseconds per pipeline step.
    pub timing: Vec<(String, f64)>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Aligns every example and scores it against its ground truth.
pub fn evaluate(model: &CascadeModel, examples: &[AnnotatedExample], normalizer: NormalizerKind) -> Result<EvalReport> {
    let mut per_image = Vec::with_capacity(examples.len());
    let mut stage_sum = vec![0.0; model.stages().len() + 1];
    let (mut t_crop, mut t_channels, mut t_cascade) = (Vec::new(), Vec::new(), Vec::new());
    for ex in examples {
        let image = ex.load_image()?;
        let truth = ex.load_shape()?;
        let norm = normalizer.for_example(&ex.bbox);

        let t = Instant::now();
        let init = crop_and_init(model, &image, &ex.bbox)?;
        t_crop.push(ms(t));
        let t = Instant::now();
        let channels = compute_channels(&init.crop)?;
        t_channels.push(ms(t));
        let t = Instant::now();
        let aligned = model.align_crop(&channels)?;
        t_cascade.push(ms(t));

        let mut stage_nme = Vec::with_capacity(aligned.trace.len());
        for (acc, s) in stage_sum.iter_mut().zip(&aligned.trace) {
            let e = nme(&init.transform.shape_to_image(s), &truth, norm)?;
            *acc += e;
            stage_nme.push(e);
        }
        let final_shape = init.transform.shape_to_image(&aligned.shape);
        per_image.push(ImageResult {
            image: ex.image.clone(),
            nme: nme(&final_shape, &truth, norm)?,
            stage_nme,
        });
    }
    let n = per_image.len().max(1) as f64;
    let errors: Vec<f64> = per_image.iter().map(|r| r.nme).collect();
    let total: Vec<f64> = (0..t_crop.len()).map(|i| t_crop[i] + t_channels[i] + t_cascade[i]).collect();
    Ok(EvalReport {
        mean_nme: errors.iter().sum::<f64>() / n,
        stage_mean_nme: stage_sum.iter().map(|s| s / n).collect(),
        ced: ced(&errors),
        timing: vec![
            ("crop".into(), median(&mut t_crop)),
            ("channels".into(), median(&mut t_channels)),
            ("cascade".into(), median(&mut t_cascade)),
            ("total".into(), median(&mut total.clone())),
        ],
        per_image,
    })
}

/// CSV `image,nme`.
pub fn format_per_image(report: &EvalReport) -> String {
    let mut out = String::from("image,nme\n");
    for r in &report.per_image {
        let _ = writeln!(out, "{},{}", r.image.display(), r.nme);
    }
    out
}

/// CSV `threshold,fraction`; the last row is `inf,1`.
pub fn format_ced(report: &EvalReport) -> String {
    let mut out = String::from("threshold,fraction\n");
    for (t, f) in &report.ced {
        if t.is_finite() {
            let _ = writeln!(out, "{t:.1},{f}");
        } else {
            let _ = writeln!(out, "inf,{f}");
        }
    }
    out
}

/// CSV `metric,value`: mean NME, mean NME per cascade level (level 0 is the
/// initial mean shape, level `i` follows stage `i`), median step timings in ms.
pub fn format_summary(report: &EvalReport) -> String {
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "images,{}", report.per_image.len());
    let _ = writeln!(out, "mean_nme,{}", report.mean_nme);
    for (i, v) in report.stage_mean_nme.iter().enumerate() {
        let _ = writeln!(out, "mean_nme_level_{i},{v}");
    }
    for (name, v) in &report.timing {
        let _ = writeln!(out, "median_ms_{name},{v}");
    }
    out
}

/// Writes `per_image.csv`, `ced.csv` and `summary.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, text) in [
        ("per_image.csv", format_per_image(report)),
        ("ced.csv", format_ced(report)),
        ("summary.csv", format_summary(report)),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_manifest;
    use crate::synth::write_dataset;
    use crate::testutil::{examples, tiny_model};

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }

    #[test]
    fn report_matches_direct_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &examples(3, 40)).unwrap();
        let rows = load_manifest(&manifest).unwrap();
        let model = tiny_model(0.0, 0.0);
        let report = evaluate(&model, &rows, NormalizerKind::InterPupil).unwrap();
        assert_eq!(report.per_image.len(), 3);
        assert_eq!(report.stage_mean_nme.len(), model.stages().len() + 1);
        for (r, ex) in report.per_image.iter().zip(&rows) {
            let aligned = model.align(&ex.load_image().unwrap(), &ex.bbox).unwrap();
            let direct = nme(&aligned.shape, &ex.load_shape().unwrap(), Normalizer::InterPupil).unwrap();
            assert!((r.nme - direct).abs() < 1e-12);
            assert!((r.stage_nme.last().unwrap() - r.nme).abs() < 1e-12);
        }
        let ced_csv = format_ced(&report);
        assert!(ced_csv.starts_with("threshold,fraction\n0.0,"));
        assert!(ced_csv.ends_with("inf,1\n"));
        let out = dir.path().join("report");
        write_report(&out, &report).unwrap();
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.contains("images,3\n") && summary.contains("mean_nme_level_2,"));
    }
}
