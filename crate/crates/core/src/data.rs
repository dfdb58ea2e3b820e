//! Deterministic synthetic datasets and an IDX (MNIST-style) loader.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{EvError, Result};
use crate::losses::OneHotLabel;
use crate::rng::Rng;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Noise standard deviation added to inputs by [`ood_shift`].
pub const OOD_NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<OneHotLabel>,
    class_count: usize,
    seed: u64,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize, seed: u64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(EvError::Empty("dataset"));
        }
        EvError::check_dim("label count", inputs.len(), labels.len())?;
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(EvError::invalid("inputs must have at least one feature"));
        }
        for (i, x) in inputs.iter().enumerate() {
            EvError::check_dim("input dimension", dim, x.len())?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(EvError::invalid(format!("non-finite input in sample {i}")));
            }
        }
        let labels = labels
            .into_iter()
            .map(|y| OneHotLabel::new(class_count, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs,
            labels,
            class_count,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[OneHotLabel] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], &OneHotLabel) {
        (&self.inputs[i], &self.labels[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &OneHotLabel)> {
        self.inputs.iter().map(Vec::as_slice).zip(&self.labels)
    }

    /// Copy with a fraction `rate` of labels replaced by a different, uniformly
    /// chosen class.
    pub fn with_label_noise(&self, rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(EvError::invalid(format!("noise rate {rate} outside [0, 1]")));
        }
        let mut rng = Rng::new(seed);
        let k = self.class_count;
        let labels = self
            .labels
            .iter()
            .map(|y| {
                let gt = y.gt_index();
                if rng.uniform() < rate {
                    (gt + 1 + rng.index(k - 1)) % k
                } else {
                    gt
                }
            })
            .collect();
        Self::new(self.inputs.clone(), labels, k, seed)
    }

    /// CSV with header `x0,...,x{d-1},label`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for (x, y) in self.iter() {
            for v in x {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", y.gt_index())?;
        }
        Ok(())
    }
}

fn blob_centers(k: usize, separation: f64, dim: usize) -> Vec<Vec<f64>> {
    if dim >= k {
        // scaled simplex: pairwise distance equals `separation`
        let s = separation / std::f64::consts::SQRT_2;
        (0..k)
            .map(|c| (0..dim).map(|j| if j == c { s } else { 0.0 }).collect())
            .collect()
    } else if dim >= 2 {
        // circle in the first two coordinates with adjacent centers `separation` apart
        let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
        (0..k)
            .map(|c| {
                let t = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                let mut v = vec![0.0; dim];
                v[0] = radius * t.cos();
                v[1] = radius * t.sin();
                v
            })
            .collect()
    } else {
        (0..k).map(|c| vec![c as f64 * separation]).collect()
    }
}

/// `k` isotropic Gaussian clusters of `n_per_class` points each, ordered by class.
pub fn gaussian_blobs(k: usize, n_per_class: usize, spread: f64, separation: f64, dim: usize, seed: u64) -> Result<LabeledDataset> {
    if k < 2 {
        return Err(EvError::invalid("need at least two classes"));
    }
    if n_per_class == 0 || dim == 0 {
        return Err(EvError::invalid("n_per_class and dim must be positive"));
    }
    if !(spread > 0.0 && spread.is_finite() && separation.is_finite()) {
        return Err(EvError::invalid("spread must be positive and finite"));
    }
    let centers = blob_centers(k, separation, dim);
    let mut rng = Rng::new(seed);
    let mut inputs = Vec::with_capacity(k * n_per_class);
    let mut labels = Vec::with_capacity(k * n_per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            inputs.push(center.iter().map(|m| m + spread * rng.normal()).collect());
            labels.push(c);
        }
    }
    LabeledDataset::new(inputs, labels, k, seed)
}

/// Centers used by [`gaussian_blobs`], exposed for oracles and plots.
pub fn gaussian_blob_centers(k: usize, separation: f64, dim: usize) -> Vec<Vec<f64>> {
    blob_centers(k, separation, dim)
}

/// Jitter applied to the corners in [`four_point_toy`].
pub const TOY_JITTER: f64 = 0.05;

/// Four points near the corners of the square `[-1, 1]^2`, labelled 0..4
/// counter-clockwise from `(1, 1)`. The seed only moves each point by at
/// most [`TOY_JITTER`] per coordinate.
pub fn four_point_toy(seed: u64) -> LabeledDataset {
    const CORNERS: [[f64; 2]; 4] = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
    let mut rng = Rng::new(seed);
    let inputs = CORNERS
        .iter()
        .map(|c| c.iter().map(|v| v + rng.uniform_range(-TOY_JITTER, TOY_JITTER)).collect())
        .collect();
    LabeledDataset::new(inputs, vec![0, 1, 2, 3], 4, seed).expect("fixed construction is valid")
}

/// Translate every input by one random direction of length `shift_magnitude`
/// and add fresh `N(0, OOD_NOISE_STD^2)` noise. Labels are kept.
pub fn ood_shift(base: &LabeledDataset, shift_magnitude: f64, seed: u64) -> Result<LabeledDataset> {
    if !(shift_magnitude > 0.0 && shift_magnitude.is_finite()) {
        return Err(EvError::invalid(format!("shift magnitude must be positive, got {shift_magnitude}")));
    }
    let mut rng = Rng::new(seed);
    let dim = base.dim();
    let mut dir: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v *= shift_magnitude / norm);
    let inputs = base
        .inputs
        .iter()
        .map(|x| {
            x.iter()
                .zip(&dir)
                .map(|(v, d)| v + d + OOD_NOISE_STD * rng.normal())
                .collect()
        })
        .collect();
    let labels = base.labels.iter().map(OneHotLabel::gt_index).collect();
    LabeledDataset::new(inputs, labels, base.class_count, seed)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| EvError::Parse {
            offset: self.pos as u64,
            msg: format!("{} truncated while reading header", self.what),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Load an IDX image/label pair, scaling pixels to `[0, 1]`.
pub fn idx_load(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<LabeledDataset> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    parse_idx(&images, &labels, limit)
}

pub fn parse_idx(images: &[u8], labels: &[u8], limit: Option<usize>) -> Result<LabeledDataset> {
    let mut ic = Cursor { bytes: images, pos: 0, what: "image file" };
    let magic = ic.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(EvError::Parse {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let n_images = ic.u32()? as usize;
    let rows = ic.u32()? as usize;
    let cols = ic.u32()? as usize;

    let mut lc = Cursor { bytes: labels, pos: 0, what: "label file" };
    let magic = lc.u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(EvError::Parse {
            offset: 0,
            msg: format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n_labels = lc.u32()? as usize;
    if n_labels != n_images {
        return Err(EvError::Parse {
            offset: 4,
            msg: format!("label count {n_labels} does not match image count {n_images}"),
        });
    }
    let n = limit.map_or(n_images, |l| l.min(n_images));
    let pixels = rows * cols;
    let need = ic.pos + n * pixels;
    if images.len() < need {
        return Err(EvError::Parse {
            offset: images.len() as u64,
            msg: format!("image file truncated: need {need} bytes"),
        });
    }
    if labels.len() < lc.pos + n {
        return Err(EvError::Parse {
            offset: labels.len() as u64,
            msg: format!("label file truncated: need {} bytes", lc.pos + n),
        });
    }
    let inputs = (0..n)
        .map(|i| {
            let start = ic.pos + i * pixels;
            images[start..start + pixels].iter().map(|&p| f64::from(p) / 255.0).collect()
        })
        .collect();
    let ys: Vec<usize> = labels[lc.pos..lc.pos + n].iter().map(|&b| usize::from(b)).collect();
    let k = ys.iter().max().map_or(2, |m| (m + 1).max(2));
    LabeledDataset::new(inputs, ys, k, 0)
}
