//! Subjective-logic opinion quantities and the evaluation metrics built on them.

use crate::error::{EvError, Result};
use crate::head::{DirichletParams, EvidenceVector};

/// Everything a single Dirichlet opinion says about one input.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub vacuity: f64,
    pub beliefs: Vec<f64>,
    pub expected_probs: Vec<f64>,
    pub dissonance: f64,
    pub predicted_class: usize,
}

impl UncertaintyReport {
    pub fn from_evidence(evidence: &EvidenceVector) -> Self {
        let params = crate::head::dirichlet_params(evidence);
        let b = beliefs(evidence, &params);
        Self {
            vacuity: vacuity(&params),
            dissonance: dissonance(&b),
            predicted_class: argmax(&b),
            expected_probs: expected_probs(&params),
            beliefs: b,
        }
    }

    /// Confidence used for calibration: the largest expected probability.
    pub fn confidence(&self) -> f64 {
        self.expected_probs.iter().copied().fold(0.0, f64::max)
    }

    /// OOD score `1 - max p(y)`.
    pub fn ood_score(&self) -> f64 {
        1.0 - self.confidence()
    }

    pub fn record(&self, gt: usize) -> PredictionRecord {
        PredictionRecord {
            confidence: self.confidence(),
            correct: self.predicted_class == gt,
            vacuity: self.vacuity,
            uncertainty_score: self.ood_score(),
        }
    }
}

/// Per-sample outcome consumed by the metric functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub confidence: f64,
    pub correct: bool,
    pub vacuity: f64,
    pub uncertainty_score: f64,
}

impl PredictionRecord {
    pub fn new(confidence: f64, correct: bool, vacuity: f64) -> Self {
        Self {
            confidence,
            correct,
            vacuity,
            uncertainty_score: 1.0 - confidence,
        }
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `K / S`.
pub fn vacuity(params: &DirichletParams) -> f64 {
    params.class_count() as f64 / params.strength()
}

/// `b_k = e_k / S`.
pub fn beliefs(evidence: &EvidenceVector, params: &DirichletParams) -> Vec<f64> {
    let s = params.strength();
    evidence.as_slice().iter().map(|e| e / s).collect()
}

/// Dirichlet mean `alpha_k / S`.
pub fn expected_probs(params: &DirichletParams) -> Vec<f64> {
    let s = params.strength();
    params.alpha().iter().map(|a| a / s).collect()
}

fn balance(x: f64, y: f64) -> f64 {
    let sum = x + y;
    if sum == 0.0 {
        0.0
    } else {
        1.0 - (x - y).abs() / sum
    }
}

/// Belief dissonance: each belief weighted by how balanced it is against the
/// remaining mass.
pub fn dissonance(beliefs: &[f64]) -> f64 {
    let total: f64 = beliefs.iter().sum();
    let mut diss = 0.0;
    for (i, &bi) in beliefs.iter().enumerate() {
        let others = total - bi;
        if bi == 0.0 || others <= 0.0 {
            continue;
        }
        let weighted: f64 = beliefs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &bj)| bj * balance(bi, bj))
            .sum();
        diss += bi * weighted / others;
    }
    diss.clamp(0.0, 1.0)
}

/// Expected calibration error over `n_bins` equal-width confidence bins.
pub fn ece(records: &[PredictionRecord], n_bins: usize) -> Result<f64> {
    Ok(reliability_bins(records, n_bins)?
        .iter()
        .map(|b| b.weight * (b.accuracy - b.confidence).abs())
        .sum())
}

/// One bin of a reliability diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Fraction of all records that fell into this bin.
    pub weight: f64,
    pub accuracy: f64,
    pub confidence: f64,
}

/// Bins `[i/n, (i+1)/n)` with the last bin closed. Empty bins report zeros.
pub fn reliability_bins(records: &[PredictionRecord], n_bins: usize) -> Result<Vec<ReliabilityBin>> {
    if records.is_empty() {
        return Err(EvError::Empty("prediction records"));
    }
    if n_bins == 0 {
        return Err(EvError::invalid("n_bins must be positive"));
    }
    let mut counts = vec![0usize; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    for r in records {
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(EvError::invalid(format!("confidence {} outside [0, 1]", r.confidence)));
        }
        let idx = ((r.confidence * n_bins as f64).floor() as usize).min(n_bins - 1);
        counts[idx] += 1;
        conf_sum[idx] += r.confidence;
        if r.correct {
            correct[idx] += 1;
        }
    }
    let n = records.len() as f64;
    Ok((0..n_bins)
        .map(|i| {
            let c = counts[i];
            let (accuracy, confidence) = if c == 0 {
                (0.0, 0.0)
            } else {
                (correct[i] as f64 / c as f64, conf_sum[i] / c as f64)
            };
            ReliabilityBin {
                lower: i as f64 / n_bins as f64,
                upper: (i + 1) as f64 / n_bins as f64,
                count: c,
                weight: c as f64 / n,
                accuracy,
                confidence,
            }
        })
        .collect())
}

/// Probability that a random OOD score exceeds a random ID score, ties
/// counting one half. Computed from midranks in `O(n log n)`.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(EvError::Empty("auroc score list"));
    }
    if id_scores.iter().chain(ood_scores).any(|s| s.is_nan()) {
        return Err(EvError::invalid("NaN score"));
    }
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ood_rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based midrank of the tie group i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        ood_rank_sum += midrank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let n_ood = ood_scores.len() as f64;
    let n_id = id_scores.len() as f64;
    let u = ood_rank_sum - n_ood * (n_ood + 1.0) / 2.0;
    Ok(u / (n_ood * n_id))
}

/// A point on the accuracy–vacuity curve. `accuracy` is NaN when nothing is retained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub accuracy: f64,
    pub coverage: f64,
}

/// Accuracy and coverage over the records whose vacuity is at most each threshold.
pub fn accuracy_vacuity_curve(records: &[PredictionRecord], thresholds: &[f64]) -> Result<Vec<CurvePoint>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvError::invalid("thresholds must be sorted ascending"));
    }
    let n = records.len();
    Ok(thresholds
        .iter()
        .map(|&tau| {
            let (kept, correct) = records
                .iter()
                .filter(|r| r.vacuity <= tau)
                .fold((0usize, 0usize), |(k, c), r| (k + 1, c + usize::from(r.correct)));
            CurvePoint {
                threshold: tau,
                accuracy: if kept == 0 { f64::NAN } else { correct as f64 / kept as f64 },
                coverage: if n == 0 { 0.0 } else { kept as f64 / n as f64 },
            }
        })
        .collect())
}

/// Accuracy on the `ceil(fraction * N)` lowest-vacuity records.
pub fn topk_confident_accuracy(records: &[PredictionRecord], fractions: &[f64]) -> Result<Vec<(f64, f64)>> {
    if records.is_empty() {
        return Err(EvError::Empty("prediction records"));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(EvError::invalid(format!("fraction {f} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    // stable: equal vacuities keep input order
    order.sort_by(|&a, &b| records[a].vacuity.total_cmp(&records[b].vacuity));
    let n = records.len();
    Ok(fractions
        .iter()
        .map(|&f| {
            let take = ((f * n as f64).ceil() as usize).clamp(1, n);
            let correct = order[..take].iter().filter(|&&i| records[i].correct).count();
            (f, correct as f64 / take as f64)
        })
        .collect())
}

/// Fraction of records marked correct.
pub fn accuracy(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64
}
