//! Evidential head: logits -> non-negative evidence -> Dirichlet parameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{EvError, Result};

/// Largest logit the exponential activation accepts before reporting overflow.
pub const EXP_LOGIT_LIMIT: f64 = 700.0;

/// Raw network outputs `o` before the evidential activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(EvError::invalid(format!(
                "logit vector needs at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EvError::NonFinite { what: "logit", index: i });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Non-negative per-class evidence `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EvError::Empty("evidence vector"));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EvError::invalid(format!(
                "evidence must be finite and non-negative (index {i} = {})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Dirichlet concentration `alpha = e + 1` together with its strength `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletParams {
    /// Build directly from concentrations; every entry must be at least 1.
    pub fn from_alpha(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(EvError::Empty("dirichlet parameters"));
        }
        if let Some(i) = alpha.iter().position(|a| !(a.is_finite() && *a >= 1.0)) {
            return Err(EvError::invalid(format!(
                "alpha must be finite and >= 1 (index {i} = {})",
                alpha[i]
            )));
        }
        let strength = alpha.iter().sum();
        Ok(Self { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn class_count(&self) -> usize {
        self.alpha.len()
    }
}

/// The evidential activation `A` mapping logits to evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    ReLU,
    SoftPlus,
    Exp,
    /// Shifted exponential linear unit: `o + 1` for `o > 0`, `exp(o)` otherwise.
    /// Not the self-normalizing activation of the same name.
    SELU,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::ReLU,
        ActivationKind::SoftPlus,
        ActivationKind::Exp,
        ActivationKind::SELU,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::ReLU => "relu",
            ActivationKind::SoftPlus => "softplus",
            ActivationKind::Exp => "exp",
            ActivationKind::SELU => "selu",
        }
    }

    /// Scalar evidence for one logit.
    pub fn evidence(self, o: f64) -> f64 {
        match self {
            ActivationKind::ReLU => o.max(0.0),
            ActivationKind::SoftPlus => softplus(o),
            ActivationKind::Exp => o.exp(),
            ActivationKind::SELU => {
                if o > 0.0 {
                    o + 1.0
                } else {
                    o.exp()
                }
            }
        }
    }

    /// `de/do`. ReLU uses 0 at the kink.
    pub fn derivative(self, o: f64) -> f64 {
        match self {
            ActivationKind::ReLU => {
                if o > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::SoftPlus => sigmoid(o),
            ActivationKind::Exp => o.exp(),
            ActivationKind::SELU => {
                if o > 0.0 {
                    1.0
                } else {
                    o.exp()
                }
            }
        }
    }

    /// Recover the logit from positive evidence. ReLU is not invertible.
    pub fn inverse(self, e: f64) -> Result<f64> {
        if !(e.is_finite() && e >= 0.0) {
            return Err(EvError::invalid(format!("evidence {e} is not a valid evidence value")));
        }
        match self {
            ActivationKind::ReLU => Err(EvError::UnsupportedActivation(self)),
            _ if e == 0.0 => Err(EvError::InfiniteRegularizer),
            ActivationKind::SoftPlus => Ok(inverse_softplus(e)),
            ActivationKind::Exp => Ok(e.ln()),
            ActivationKind::SELU => Ok(if e > 1.0 { e - 1.0 } else { e.ln() }),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = EvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::ReLU),
            "softplus" => Ok(ActivationKind::SoftPlus),
            "exp" => Ok(ActivationKind::Exp),
            "selu" => Ok(ActivationKind::SELU),
            other => Err(EvError::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

pub fn sigmoid(o: f64) -> f64 {
    if o >= 0.0 {
        1.0 / (1.0 + (-o).exp())
    } else {
        let z = o.exp();
        z / (1.0 + z)
    }
}

/// `ln(1 + exp(o))` without overflow for large `o`.
pub fn softplus(o: f64) -> f64 {
    if o > 0.0 {
        o + (-o).exp().ln_1p()
    } else {
        o.exp().ln_1p()
    }
}

fn inverse_softplus(e: f64) -> f64 {
    // ln(exp(e) - 1), rewritten as e + ln(1 - exp(-e)) once exp(e) would lose bits
    if e > 1.0 {
        e + (-(-e).exp_m1()).ln()
    } else {
        e.exp_m1().ln()
    }
}

/// Apply the evidential activation elementwise.
pub fn activate(kind: ActivationKind, logits: &LogitVector) -> Result<EvidenceVector> {
    if kind == ActivationKind::Exp {
        if let Some((index, &logit)) = logits
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, o)| **o > EXP_LOGIT_LIMIT)
        {
            return Err(EvError::Overflow { index, logit });
        }
    }
    Ok(EvidenceVector(
        logits.as_slice().iter().map(|&o| kind.evidence(o)).collect(),
    ))
}

/// Scalar `de/do` for one logit.
pub fn activation_derivative(kind: ActivationKind, logit: f64) -> f64 {
    kind.derivative(logit)
}

/// `alpha = e + 1`, `S = sum(alpha)`.
pub fn dirichlet_params(evidence: &EvidenceVector) -> DirichletParams {
    let alpha: Vec<f64> = evidence.as_slice().iter().map(|e| e + 1.0).collect();
    let strength = alpha.iter().sum();
    DirichletParams { alpha, strength }
}
