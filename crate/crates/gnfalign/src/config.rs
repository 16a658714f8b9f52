//! Flat `key = value` configuration files and `--set key=value` overrides.
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors.
//!
//! Training keys and defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `stages` | `PPPE` | stage kinds in order, `P` parametric, `E` explicit |
//! | `depth` | 8 | tree depth |
//! | `trees_parametric` | 25 | trees per parameter in a parametric stage |
//! | `trees_explicit` | 5 | trees per coordinate in an explicit stage |
//! | `projection_dim` | 500 | projection outputs `k` |
//! | `learning_rate` | 0.005 | base SGD learning rate |
//! | `updates` | 200000 | SGD updates per stage |
//! | `eta` | 0.01 | L1 strength of the truncated gradient |
//! | `theta` | 0.05 | truncation threshold |
//! | `modes` | 15 | shape model modes |
//! | `gauss_newton_iterations` | 100 | iterations of the parameter fit |
//! | `init_range` | 0.01 | half-width of the uniform weight initialization |
//! | `crop_size` | 200 | side of the face crop |
//! | `window` | 40 | descriptor window side |
//! | `cells` | 4 | descriptor cells per window side |
//! | `perturb_fraction` | 1.0 | perturbation range relative to the residual spread |
//! | `leaf_loss` | `squared` | `squared` or `absolute` leaf error |
//! | `seed` | 0 | random seed |
//!
//! Synthetic data keys mirror [`SynthConfig`] field names.

use std::path::Path;

use gnfalign_core::cascade::{StageKind, TrainConfig};
use gnfalign_core::neural_forest::LeafLoss;

use crate::error::{io_err, Error, Result};
use crate::synth::SynthConfig;

/// Parses `key = value` lines.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            path: path.to_path_buf(),
            line: i + 1,
            detail: format!("expected `key = value`, found {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_pairs(&text, path)
}

/// Splits a `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Setting {
            key: s.to_string(),
            value: String::new(),
            detail: "expected key=value".into(),
        })
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Setting {
        key: key.to_string(),
        value: value.to_string(),
        detail: format!("cannot parse as {}", std::any::type_name::<T>()),
    })
}

pub fn parse_stages(key: &str, value: &str) -> Result<Vec<StageKind>> {
    value
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c.to_ascii_uppercase() {
            'P' => Ok(StageKind::Parametric),
            'E' => Ok(StageKind::Explicit),
            _ => Err(Error::Setting {
                key: key.to_string(),
                value: value.to_string(),
                detail: format!("stage kind {c:?} is neither P nor E"),
            }),
        })
        .collect()
}

pub fn format_stages(stages: &[StageKind]) -> String {
    stages
        .iter()
        .map(|k| match k {
            StageKind::Parametric => 'P',
            StageKind::Explicit => 'E',
        })
        .collect()
}

/// Applies one training setting.
pub fn apply_train(config: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "stages" => config.stages = parse_stages(key, value)?,
        "depth" => config.depth = parse(key, value)?,
        "trees_parametric" => config.trees_parametric = parse(key, value)?,
        "trees_explicit" => config.trees_explicit = parse(key, value)?,
        "projection_dim" | "k" => config.projection_dim = parse(key, value)?,
        "learning_rate" => config.learning_rate = parse(key, value)?,
        "updates" => config.updates = parse(key, value)?,
        "eta" => config.eta = parse(key, value)?,
        "theta" => config.theta = parse(key, value)?,
        "modes" => config.modes = parse(key, value)?,
        "gauss_newton_iterations" => config.gauss_newton_iterations = parse(key, value)?,
        "init_range" => config.init_range = parse(key, value)?,
        "crop_size" => config.crop_size = parse(key, value)?,
        "window" => config.descriptor.window = parse(key, value)?,
        "cells" => config.descriptor.cells = parse(key, value)?,
        "perturb_fraction" => config.perturb_fraction = parse(key, value)?,
        "leaf_loss" => {
            config.leaf_loss = match value {
                "squared" => LeafLoss::Squared,
                "absolute" => LeafLoss::Absolute,
                _ => {
                    return Err(Error::Setting {
                        key: key.into(),
                        value: value.into(),
                        detail: "expected `squared` or `absolute`".into(),
                    })
                }
            }
        }
        "seed" => config.seed = parse(key, value)?,
        _ => {
            return Err(Error::Setting {
                key: key.into(),
                value: value.into(),
                detail: "unknown training key".into(),
            })
        }
    }
    Ok(())
}

/// Applies one synthetic-data setting.
pub fn apply_synth(config: &mut SynthConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "count" => config.count = parse(key, value)?,
        "n_points" => config.n_points = parse(key, value)?,
        "image_size" => config.image_size = parse(key, value)?,
        "face_scale" => config.face_scale = parse(key, value)?,
        "scale_jitter" => config.scale_jitter = parse(key, value)?,
        "aspect_jitter" => config.aspect_jitter = parse(key, value)?,
        "rotation" => config.rotation = parse(key, value)?,
        "translation" => config.translation = parse(key, value)?,
        "mode_amplitude" => config.mode_amplitude = parse(key, value)?,
        "landmark_noise" => config.landmark_noise = parse(key, value)?,
        "pixel_noise" => config.pixel_noise = parse(key, value)?,
        "bbox_margin" => config.bbox_margin = parse(key, value)?,
        "bbox_jitter" => config.bbox_jitter = parse(key, value)?,
        _ => {
            return Err(Error::Setting {
                key: key.into(),
                value: value.into(),
                detail: "unknown synthetic-data key".into(),
            })
        }
    }
    Ok(())
}

/// Training configuration from an optional file plus overrides, in that order.
pub fn train_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<TrainConfig> {
    let mut config = TrainConfig::default();
    let mut pairs = match file {
        Some(p) => load_pairs(p)?,
        None => Vec::new(),
    };
    pairs.extend_from_slice(overrides);
    for (k, v) in &pairs {
        apply_train(&mut config, k, v)?;
    }
    Ok(config)
}

pub fn synth_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<SynthConfig> {
    let mut config = SynthConfig::default();
    let mut pairs = match file {
        Some(p) => load_pairs(p)?,
        None => Vec::new(),
    };
    pairs.extend_from_slice(overrides);
    for (k, v) in &pairs {
        apply_synth(&mut config, k, v)?;
    }
    Ok(config)
}

/// The training configuration as a config file.
pub fn format_train(config: &TrainConfig) -> String {
    let loss = match config.leaf_loss {
        LeafLoss::Squared => "squared",
        LeafLoss::Absolute => "absolute",
    };
    format!(
        "stages = {}\ndepth = {}\ntrees_parametric = {}\ntrees_explicit = {}\nprojection_dim = {}\n\
         learning_rate = {}\nupdates = {}\neta = {}\ntheta = {}\nmodes = {}\ngauss_newton_iterations = {}\n\
         init_range = {}\ncrop_size = {}\nwindow = {}\ncells = {}\nperturb_fraction = {}\nleaf_loss = {}\nseed = {}\n",
        format_stages(&config.stages),
        config.depth,
        config.trees_parametric,
        config.trees_explicit,
        config.projection_dim,
        config.learning_rate,
        config.updates,
        config.eta,
        config.theta,
        config.modes,
        config.gauss_newton_iterations,
        config.init_range,
        config.crop_size,
        config.descriptor.window,
        config.descriptor.cells,
        config.perturb_fraction,
        loss,
        config.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_values() {
        let c = TrainConfig::default();
        assert_eq!(format_stages(&c.stages), "PPPE");
        assert_eq!((c.depth, c.trees_parametric, c.trees_explicit, c.projection_dim), (8, 25, 5, 500));
        assert_eq!((c.learning_rate, c.updates, c.eta, c.theta), (0.005, 200_000, 0.01, 0.05));
        assert_eq!((c.crop_size, c.descriptor.window, c.descriptor.cells), (200, 40, 4));
    }

    #[test]
    fn file_then_overrides() {
        let pairs = parse_pairs("# comment\ndepth = 6 # trailing\n\nstages = PPE\n", Path::new("c")).unwrap();
        let mut c = TrainConfig::default();
        for (k, v) in &pairs {
            apply_train(&mut c, k, v).unwrap();
        }
        apply_train(&mut c, "depth", "5").unwrap();
        assert_eq!(c.depth, 5);
        assert_eq!(format_stages(&c.stages), "PPE");
    }

    #[test]
    fn errors() {
        let mut c = TrainConfig::default();
        assert!(apply_train(&mut c, "depht", "5").is_err());
        assert!(apply_train(&mut c, "depth", "five").is_err());
        assert!(apply_train(&mut c, "stages", "PXE").is_err());
        assert!(apply_train(&mut c, "leaf_loss", "huber").is_err());
        assert!(parse_pairs("depth 5", Path::new("c")).is_err());
        assert!(parse_override("depth").is_err());
    }

    #[test]
    fn format_round_trip() {
        let c = TrainConfig {
            stages: vec![StageKind::Parametric, StageKind::Explicit],
            learning_rate: 0.0125,
            leaf_loss: LeafLoss::Absolute,
            seed: 99,
            ..TrainConfig::default()
        };
        let pairs = parse_pairs(&format_train(&c), Path::new("c")).unwrap();
        let mut d = TrainConfig::default();
        for (k, v) in &pairs {
            apply_train(&mut d, k, v).unwrap();
        }
        assert_eq!(c, d);
    }
}
