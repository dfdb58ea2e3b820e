//! Top-t belief-weighted code selection over a K x D codebook.

use rayon::prelude::*;

use crate::error::{EvError, Result};
use crate::head::{dirichlet_params, EvidenceVector};
use crate::uncertainty::{argmax, beliefs, vacuity};

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    items: Vec<f64>,
    size: usize,
    dim: usize,
}

impl Codebook {
    pub fn new(items: Vec<Vec<f64>>) -> Result<Self> {
        let size = items.len();
        if size == 0 {
            return Err(EvError::Empty("codebook"));
        }
        let dim = items[0].len();
        if dim == 0 {
            return Err(EvError::invalid("code items must have at least one entry"));
        }
        for row in &items {
            EvError::check_dim("code item dimension", dim, row.len())?;
        }
        Self::from_flat(size, dim, items.concat())
    }

    /// Row-major `size x dim` data.
    pub fn from_flat(size: usize, dim: usize, items: Vec<f64>) -> Result<Self> {
        if size == 0 || dim == 0 {
            return Err(EvError::invalid(format!("codebook shape {size}x{dim} must be non-empty")));
        }
        EvError::check_dim("codebook entries", size * dim, items.len())?;
        if let Some(i) = items.iter().position(|v| !v.is_finite()) {
            return Err(EvError::invalid(format!("non-finite codebook entry at item {}, column {}", i / dim, i % dim)));
        }
        Ok(Self { items, size, dim })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.items
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub t: usize,
    pub vacuity_threshold: f64,
}

impl SelectionConfig {
    pub fn new(t: usize, vacuity_threshold: f64) -> Result<Self> {
        let c = Self { t, vacuity_threshold };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(EvError::invalid("t must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.vacuity_threshold) {
            return Err(EvError::invalid(format!("vacuity threshold {} outside [0, 1]", self.vacuity_threshold)));
        }
        Ok(())
    }
}

/// Indices of the `t` largest beliefs, descending, ties by ascending index.
pub fn top_t_indices(beliefs: &[f64], t: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..beliefs.len()).collect();
    order.sort_by(|&a, &b| beliefs[b].total_cmp(&beliefs[a]));
    order.truncate(t);
    order
}

pub fn select_code(evidence: &EvidenceVector, codebook: &Codebook, config: &SelectionConfig) -> Result<Vec<f64>> {
    config.validate()?;
    EvError::check_dim("evidence length", codebook.size(), evidence.class_count())?;
    if config.t > codebook.size() {
        return Err(EvError::invalid(format!("t = {} exceeds codebook size {}", config.t, codebook.size())));
    }
    let params = dirichlet_params(evidence);
    let b = beliefs(evidence, &params);
    if config.t == 1 || vacuity(&params) <= config.vacuity_threshold {
        return Ok(codebook.item(argmax(&b)).to_vec());
    }
    let top = top_t_indices(&b, config.t);
    let mass: f64 = top.iter().map(|&j| b[j]).sum();
    if mass <= 0.0 {
        return Ok(codebook.item(argmax(&b)).to_vec());
    }
    let mut out = vec![0.0; codebook.dim()];
    for &j in &top {
        let w = b[j] / mass;
        for (o, c) in out.iter_mut().zip(codebook.item(j)) {
            *o += w * c;
        }
    }
    Ok(out)
}

pub fn select_codes_batch(evidences: &[EvidenceVector], codebook: &Codebook, config: &SelectionConfig) -> Result<Vec<Vec<f64>>> {
    evidences.par_iter().map(|e| select_code(e, codebook, config)).collect()
}

/// Fixture behind `codebook-demo`: evidence `(4, 1, 0, ...)` over `k` items and
/// codes `c_i[j] = 1` if `j == i mod d`, else 0.
pub fn demo_fixture(k: usize, d: usize) -> Result<(EvidenceVector, Codebook)> {
    if k < 2 || d == 0 {
        return Err(EvError::invalid(format!("demo needs k >= 2 and d >= 1, got k={k}, d={d}")));
    }
    let mut e = vec![0.0; k];
    e[0] = 4.0;
    e[1] = 1.0;
    let items = (0..k)
        .map(|i| (0..d).map(|j| if j == i % d { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok((EvidenceVector::new(e)?, Codebook::new(items)?))
}
