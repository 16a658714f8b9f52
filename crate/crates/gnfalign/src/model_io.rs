//! Binary model container.
//!
//! Layout, all integers `u64` and floats `f64` little-endian unless noted:
//!
//! ```text
//! "GNFA" u32:version
//! crop_size window cells
//! pdm:    n_points modes mean[2N stacked] basis[2N x m, column-major] eigenvalues[m]
//! p0:     [m + 5]
//! stages: count, then per stage
//!   kind:u8 (0 parametric, 1 explicit)
//!   projection: out in eta theta storage:u8
//!     storage 0 (dense):  weights[out x in, row-major]
//!     storage 1 (sparse): per row: count, then count x (index:u32 value)
//!   forest: output_dim trees_per_dim depth input_dim mode:u8 loss:u8
//!           stats_mean[output_dim] stats_std[output_dim]
//!           per tree: weights[(2^D - 1) x input_dim] thresholds[2^D - 1] leaves[2^D]
//! ```
//!
//! The sparse storage is used when the projection sparsity exceeds 0.5.

use std::path::Path;

use gnfalign_core::cascade::{CascadeModel, CascadeStage, StageKind};
use gnfalign_core::dimred::{ProjectionLayer, SPARSE_THRESHOLD};
use gnfalign_core::features::DescriptorConfig;
use gnfalign_core::nalgebra::DMatrix;
use gnfalign_core::neural_forest::{Forest, ForestMode, LeafLoss, LeafStats, Tree};
use gnfalign_core::shape_model::{ParamVector, Pdm, Shape};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"GNFA";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

pub fn encode_model(model: &CascadeModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.usize(model.crop_size());
    w.usize(model.descriptor().window);
    w.usize(model.descriptor().cells);

    let pdm = model.pdm();
    w.usize(pdm.n_points());
    w.usize(pdm.modes());
    w.f64s(&pdm.mean().to_stacked());
    w.f64s(pdm.basis().as_slice());
    w.f64s(pdm.eigenvalues());
    w.f64s(&model.p0().to_vec());

    w.usize(model.stages().len());
    for stage in model.stages() {
        w.u8(match stage.kind {
            StageKind::Parametric => 0,
            StageKind::Explicit => 1,
        });
        let p = &stage.projection;
        w.usize(p.out_dim());
        w.usize(p.in_dim());
        w.f64(p.eta);
        w.f64(p.theta);
        if p.sparsity() > SPARSE_THRESHOLD {
            w.u8(1);
            for row in p.weights().chunks_exact(p.in_dim()) {
                let nz: Vec<(usize, f64)> = row.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
                w.usize(nz.len());
                for (i, v) in nz {
                    w.u32(i as u32);
                    w.f64(v);
                }
            }
        } else {
            w.u8(0);
            w.f64s(p.weights());
        }
        let f = &stage.forest;
        w.usize(f.output_dim());
        w.usize(f.trees_per_dim());
        w.usize(f.depth());
        w.usize(f.input_dim());
        w.u8(match f.mode() {
            ForestMode::Soft => 0,
            ForestMode::Greedy => 1,
        });
        w.u8(match f.loss() {
            LeafLoss::Squared => 0,
            LeafLoss::Absolute => 1,
        });
        w.f64s(f.stats().mean());
        w.f64s(f.stats().std_dev());
        for t in f.trees() {
            w.f64s(t.weights());
            w.f64s(t.thresholds());
            w.f64s(t.leaves());
        }
    }
    w.0
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

type Field<T> = std::result::Result<T, String>;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Field<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(format!("truncated while reading {what} at byte {}", self.pos));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Field<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Field<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn usize(&mut self, what: &str) -> Field<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        // sizes beyond the remaining payload cannot be genuine
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.data.len())
            .ok_or_else(|| format!("implausible {what} {v}"))
    }
    fn f64(&mut self, what: &str) -> Field<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize, what: &str) -> Field<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| format!("{what} too large"))?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn decode_inner(data: &[u8]) -> std::result::Result<CascadeModel, String> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err("bad magic, not a gnfalign model".into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format!("unsupported model version {version} (expected {VERSION})"));
    }
    let crop_size = r.usize("crop size")?;
    let descriptor = DescriptorConfig {
        window: r.usize("window")?,
        cells: r.usize("cells")?,
    };
    let n = r.usize("landmark count")?;
    let m = r.usize("mode count")?;
    let mean = Shape::from_stacked(&r.f64s(2 * n, "mean shape")?).map_err(|e| e.to_string())?;
    let basis = DMatrix::from_vec(2 * n, m, r.f64s(2 * n * m, "basis")?);
    let eigenvalues = r.f64s(m, "eigenvalues")?;
    let pdm = Pdm::from_parts(mean, basis, eigenvalues).map_err(|e| e.to_string())?;
    let p0 = ParamVector::from_slice(&r.f64s(m + 5, "initial parameters")?).map_err(|e| e.to_string())?;

    let count = r.usize("stage count")?;
    let mut stages = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let kind = match r.u8("stage kind")? {
            0 => StageKind::Parametric,
            1 => StageKind::Explicit,
            k => return Err(format!("unknown stage kind {k}")),
        };
        let out = r.usize("projection rows")?;
        let inp = r.usize("projection columns")?;
        let eta = r.f64("eta")?;
        let theta = r.f64("theta")?;
        let weights = match r.u8("projection storage")? {
            0 => r.f64s(out.checked_mul(inp).ok_or("projection too large")?, "projection weights")?,
            1 => {
                let mut w = vec![0.0; out.checked_mul(inp).ok_or("projection too large")?];
                for row in 0..out {
                    let nnz = r.usize("row entry count")?;
                    for _ in 0..nnz {
                        let i = r.u32("column index")? as usize;
                        let v = r.f64("weight")?;
                        if i >= inp {
                            return Err(format!("column index {i} out of range {inp}"));
                        }
                        w[row * inp + i] = v;
                    }
                }
                w
            }
            s => return Err(format!("unknown projection storage {s}")),
        };
        let projection = ProjectionLayer::from_weights(out, inp, weights, eta, theta).map_err(|e| e.to_string())?;

        let output_dim = r.usize("forest outputs")?;
        let trees_per_dim = r.usize("trees per output")?;
        let depth = r.usize("depth")?;
        let input_dim = r.usize("forest inputs")?;
        if !(1..=24).contains(&depth) {
            return Err(format!("invalid depth {depth}"));
        }
        let mode = match r.u8("forest mode")? {
            0 => ForestMode::Soft,
            1 => ForestMode::Greedy,
            v => return Err(format!("unknown forest mode {v}")),
        };
        let loss = match r.u8("leaf loss")? {
            0 => LeafLoss::Squared,
            1 => LeafLoss::Absolute,
            v => return Err(format!("unknown leaf loss {v}")),
        };
        let stats = LeafStats::new(r.f64s(output_dim, "stats mean")?, r.f64s(output_dim, "stats std")?)
            .map_err(|e| e.to_string())?;
        let splits = (1usize << depth) - 1;
        let n_trees = output_dim.checked_mul(trees_per_dim).ok_or("forest too large")?;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let w = r.f64s(splits.checked_mul(input_dim).ok_or("tree too large")?, "split weights")?;
            let t = r.f64s(splits, "thresholds")?;
            let l = r.f64s(splits + 1, "leaves")?;
            trees.push(Tree::from_parts(depth, input_dim, w, t, l).map_err(|e| e.to_string())?);
        }
        let forest = Forest::from_parts(output_dim, trees_per_dim, depth, input_dim, mode, loss, stats, trees)
            .map_err(|e| e.to_string())?;
        stages.push(CascadeStage::new(kind, projection, forest).map_err(|e| e.to_string())?);
    }
    if r.pos != data.len() {
        return Err(format!("{} trailing bytes", data.len() - r.pos));
    }
    CascadeModel::new(pdm, stages, p0, crop_size, descriptor).map_err(|e| e.to_string())
}

pub fn decode_model(data: &[u8], path: &Path) -> Result<CascadeModel> {
    decode_inner(data).map_err(|detail| Error::Model {
        path: path.to_path_buf(),
        detail,
    })
}

pub fn save_model(path: &Path, model: &CascadeModel) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<CascadeModel> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    decode_model(&data, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny_model;

    #[test]
    fn dense_round_trip() {
        let model = tiny_model(0.0, 0.0);
        assert!(model.stages()[0].projection.sparsity() <= SPARSE_THRESHOLD);
        let bytes = encode_model(&model);
        let back = decode_model(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode_model(&back), bytes);
    }

    #[test]
    fn sparse_storage_is_smaller_and_exact() {
        let model = tiny_model(0.01, 0.05);
        assert!(model.stages().iter().all(|s| s.projection.sparsity() > SPARSE_THRESHOLD));
        let bytes = encode_model(&model);
        let back = decode_model(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, model);
        let dense_bytes: usize = model.stages().iter().map(|s| s.projection.weights().len() * 8).sum();
        assert!(bytes.len() < dense_bytes);
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        let bytes = encode_model(&tiny_model(0.0, 0.0));
        let mut wrong_version = bytes.clone();
        wrong_version[4..8].copy_from_slice(&(VERSION + 1).to_le_bytes());
        let err = decode_model(&wrong_version, Path::new("m")).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(decode_model(&wrong_magic, Path::new("m")).is_err());
        assert!(decode_model(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode_model(&trailing, Path::new("m")).is_err());
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.gnfa");
        let model = tiny_model(0.0, 0.0);
        save_model(&path, &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        assert!(matches!(load_model(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
