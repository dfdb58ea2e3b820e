//! Evidential losses, the two evidence regularizers, and the combined
//! training objective with closed-form gradients with respect to the logits.
//!
//! Every loss is written as a function of the Dirichlet parameters `alpha`.
//! Because `alpha = A(o) + 1`, the logit gradient of each term is
//! `dL/dalpha_k * A'(o_k)`, so a zero activation derivative silences the
//! whole evidential part of the gradient. Only the correct-evidence term acts
//! on the ground-truth logit directly and survives there.

use std::fmt;
use std::str::FromStr;

use crate::error::{EvError, Result};
use crate::head::{activate, dirichlet_params, ActivationKind, DirichletParams, LogitVector};
use crate::special_math::{digamma_unchecked, ln_gamma_unchecked, trigamma_unchecked};

/// One-hot ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OneHotLabel {
    class_count: usize,
    gt: usize,
}

impl OneHotLabel {
    pub fn new(class_count: usize, gt: usize) -> Result<Self> {
        if class_count < 2 {
            return Err(EvError::invalid(format!("label needs K >= 2, got {class_count}")));
        }
        if gt >= class_count {
            return Err(EvError::invalid(format!("label index {gt} out of range for K = {class_count}")));
        }
        Ok(Self { class_count, gt })
    }

    pub fn gt_index(&self) -> usize {
        self.gt
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.class_count)
            .map(|k| if k == self.gt { 1.0 } else { 0.0 })
            .collect()
    }

    fn y(&self, k: usize) -> f64 {
        if k == self.gt {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Bayes risk with the sum of squares loss.
    EvidMSE,
    /// Bayes risk with the cross-entropy loss (digamma form).
    EvidCE,
    /// Type-II maximum likelihood loss.
    EvidLog,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::EvidMSE, LossKind::EvidCE, LossKind::EvidLog];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::EvidMSE => "mse",
            LossKind::EvidCE => "ce",
            LossKind::EvidLog => "log",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = EvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::EvidMSE),
            "ce" => Ok(LossKind::EvidCE),
            "log" => Ok(LossKind::EvidLog),
            other => Err(EvError::invalid(format!("unknown loss '{other}'"))),
        }
    }
}

/// Strengths of the incorrect-evidence KL term and the correct-evidence term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationConfig {
    pub lambda1: f64,
    pub use_correct_reg: bool,
    pub anneal_epochs: usize,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.0,
            use_correct_reg: false,
            anneal_epochs: 10,
        }
    }
}

impl RegularizationConfig {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn new(lambda1: f64, use_correct_reg: bool) -> Self {
        Self {
            lambda1,
            use_correct_reg,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return Err(EvError::invalid(format!("lambda1 must be finite and >= 0, got {}", self.lambda1)));
        }
        if self.anneal_epochs == 0 {
            return Err(EvError::invalid("anneal_epochs must be positive"));
        }
        Ok(())
    }

    /// Annealed KL weight `lambda1 * min(1, epoch / anneal_epochs)`.
    pub fn kl_weight(&self, epoch: usize) -> f64 {
        let ramp = (epoch as f64 / self.anneal_epochs as f64).min(1.0);
        self.lambda1 * ramp
    }
}

/// A complete per-sample training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub loss: LossKind,
    pub activation: ActivationKind,
    pub reg: RegularizationConfig,
}

impl Objective {
    pub fn new(loss: LossKind, activation: ActivationKind, reg: RegularizationConfig) -> Self {
        Self { loss, activation, reg }
    }

    pub fn loss(&self, logits: &LogitVector, label: &OneHotLabel, epoch: usize) -> Result<f64> {
        combined_loss(self.loss, &self.reg, self.activation, logits, label, epoch)
    }

    /// Loss and its gradient with respect to the logits in one pass.
    pub fn loss_and_grad(&self, logits: &LogitVector, label: &OneHotLabel, epoch: usize) -> Result<(f64, Vec<f64>)> {
        evaluate(self.loss, &self.reg, self.activation, logits, label, epoch)
    }
}

fn check_label(params: &DirichletParams, label: &OneHotLabel) -> Result<()> {
    EvError::check_dim("label", params.class_count(), label.class_count())
}

/// `sum_j (y_j - alpha_j/S)^2 + alpha_j (S - alpha_j) / (S^2 (S + 1))`, bounded in `[0, 2]`.
pub fn evid_mse_loss(params: &DirichletParams, label: &OneHotLabel) -> Result<f64> {
    check_label(params, label)?;
    let s = params.strength();
    Ok(params
        .alpha()
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let p = a / s;
            let err = label.y(j) - p;
            err * err + a * (s - a) / (s * s * (s + 1.0))
        })
        .sum())
}

/// `psi(S) - psi(alpha_gt)`.
pub fn evid_ce_loss(params: &DirichletParams, label: &OneHotLabel) -> Result<f64> {
    check_label(params, label)?;
    Ok(digamma_unchecked(params.strength()) - digamma_unchecked(params.alpha()[label.gt]))
}

/// `ln S - ln alpha_gt`.
pub fn evid_log_loss(params: &DirichletParams, label: &OneHotLabel) -> Result<f64> {
    check_label(params, label)?;
    Ok(params.strength().ln() - params.alpha()[label.gt].ln())
}

fn masked_alpha(params: &DirichletParams, label: &OneHotLabel) -> Vec<f64> {
    params
        .alpha()
        .iter()
        .enumerate()
        .map(|(k, &a)| if k == label.gt { 1.0 } else { a })
        .collect()
}

/// `KL(Dir(alpha~) || Dir(1, ..., 1))` where `alpha~` is `alpha` with the
/// ground-truth entry reset to 1.
pub fn kl_incorrect_reg(params: &DirichletParams, label: &OneHotLabel) -> Result<f64> {
    check_label(params, label)?;
    let masked = masked_alpha(params, label);
    Ok(kl_to_uniform(&masked))
}

fn kl_to_uniform(alpha: &[f64]) -> f64 {
    let k = alpha.len() as f64;
    let s: f64 = alpha.iter().sum();
    let psi_s = digamma_unchecked(s);
    let mut kl = ln_gamma_unchecked(s) - ln_gamma_unchecked(k);
    for &a in alpha {
        kl -= ln_gamma_unchecked(a);
        kl += (a - 1.0) * (digamma_unchecked(a) - psi_s);
    }
    // the closed form can dip a few ulps below zero at the uniform point
    kl.max(0.0)
}

/// Correct-evidence regularizer `-1(o_gt < 0) * vacuity * o_gt`.
pub fn correct_evidence_reg(logit_gt: f64, vacuity: f64) -> f64 {
    if logit_gt < 0.0 {
        -vacuity * logit_gt
    } else {
        0.0
    }
}

/// The same regularizer written in terms of the ground-truth evidence, for
/// pipelines that only see post-activation values.
pub fn correct_evidence_reg_evidence_form(kind: ActivationKind, e_gt: f64, vacuity: f64) -> Result<f64> {
    let logit_gt = match kind {
        ActivationKind::ReLU => return Err(EvError::UnsupportedActivation(kind)),
        _ => kind.inverse(e_gt)?,
    };
    Ok(correct_evidence_reg(logit_gt, vacuity))
}

fn evid_loss(kind: LossKind, params: &DirichletParams, label: &OneHotLabel) -> Result<f64> {
    match kind {
        LossKind::EvidMSE => evid_mse_loss(params, label),
        LossKind::EvidCE => evid_ce_loss(params, label),
        LossKind::EvidLog => evid_log_loss(params, label),
    }
}

/// `L_evid + eta1 * L_inc + [use_correct_reg] * L_cor`.
pub fn combined_loss(
    loss_kind: LossKind,
    reg: &RegularizationConfig,
    kind: ActivationKind,
    logits: &LogitVector,
    label: &OneHotLabel,
    epoch: usize,
) -> Result<f64> {
    EvError::check_dim("label", logits.class_count(), label.class_count())?;
    let params = dirichlet_params(&activate(kind, logits)?);
    let mut total = evid_loss(loss_kind, &params, label)?;
    let eta1 = reg.kl_weight(epoch);
    if eta1 != 0.0 {
        total += eta1 * kl_incorrect_reg(&params, label)?;
    }
    if reg.use_correct_reg {
        let vacuity = params.class_count() as f64 / params.strength();
        total += correct_evidence_reg(logits.as_slice()[label.gt], vacuity);
    }
    Ok(total)
}

/// Gradient of [`combined_loss`] with respect to each logit.
pub fn loss_grad_wrt_logits(
    loss_kind: LossKind,
    reg: &RegularizationConfig,
    kind: ActivationKind,
    logits: &LogitVector,
    label: &OneHotLabel,
    epoch: usize,
) -> Result<Vec<f64>> {
    evaluate(loss_kind, reg, kind, logits, label, epoch).map(|(_, g)| g)
}

fn evaluate(
    loss_kind: LossKind,
    reg: &RegularizationConfig,
    kind: ActivationKind,
    logits: &LogitVector,
    label: &OneHotLabel,
    epoch: usize,
) -> Result<(f64, Vec<f64>)> {
    EvError::check_dim("label", logits.class_count(), label.class_count())?;
    let o = logits.as_slice();
    let params = dirichlet_params(&activate(kind, logits)?);
    let k = params.class_count();

    let mut loss = evid_loss(loss_kind, &params, label)?;
    let mut grad_alpha = evid_grad_alpha(loss_kind, &params, label);

    let eta1 = reg.kl_weight(epoch);
    if eta1 != 0.0 {
        loss += eta1 * kl_incorrect_reg(&params, label)?;
        for (g, kg) in grad_alpha.iter_mut().zip(kl_grad_alpha(&params, label)) {
            *g += eta1 * kg;
        }
    }

    let mut grad: Vec<f64> = grad_alpha
        .iter()
        .zip(o)
        .map(|(g, &ok)| g * kind.derivative(ok))
        .collect();

    if reg.use_correct_reg {
        let s = params.strength();
        let vacuity = k as f64 / s;
        let o_gt = o[label.gt];
        loss += correct_evidence_reg(o_gt, vacuity);
        if o_gt < 0.0 {
            // d/do_k of -vacuity * o_gt, with dvacuity/do_k = -K / S^2 * A'(o_k)
            let c = o_gt * k as f64 / (s * s);
            for (g, &ok) in grad.iter_mut().zip(o) {
                *g += c * kind.derivative(ok);
            }
            grad[label.gt] -= vacuity;
        }
    }
    Ok((loss, grad))
}

fn evid_grad_alpha(kind: LossKind, params: &DirichletParams, label: &OneHotLabel) -> Vec<f64> {
    let alpha = params.alpha();
    let s = params.strength();
    match kind {
        LossKind::EvidMSE => {
            let p: Vec<f64> = alpha.iter().map(|a| a / s).collect();
            let sum_p2: f64 = p.iter().map(|v| v * v).sum();
            let g: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(j, &pj)| -2.0 * (label.y(j) - pj) - 2.0 * pj / (s + 1.0))
                .collect();
            let gp: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
            let var_term = (1.0 - sum_p2) / ((s + 1.0) * (s + 1.0));
            g.iter().map(|gk| (gk - gp) / s - var_term).collect()
        }
        LossKind::EvidCE => {
            let ts = trigamma_unchecked(s);
            (0..alpha.len())
                .map(|j| {
                    if j == label.gt {
                        ts - trigamma_unchecked(alpha[j])
                    } else {
                        ts
                    }
                })
                .collect()
        }
        LossKind::EvidLog => (0..alpha.len())
            .map(|j| 1.0 / s - label.y(j) / alpha[j])
            .collect(),
    }
}

fn kl_grad_alpha(params: &DirichletParams, label: &OneHotLabel) -> Vec<f64> {
    let masked = masked_alpha(params, label);
    let k = masked.len() as f64;
    let s: f64 = masked.iter().sum();
    let common = (s - k) * trigamma_unchecked(s);
    masked
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            if j == label.gt {
                0.0
            } else {
                (a - 1.0) * trigamma_unchecked(a) - common
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivationKind::*;

    fn alpha(v: &[f64]) -> DirichletParams {
        DirichletParams::from_alpha(v.to_vec()).unwrap()
    }

    fn label(k: usize, gt: usize) -> OneHotLabel {
        OneHotLabel::new(k, gt).unwrap()
    }

    #[test]
    fn mse_examples() {
        let l = evid_mse_loss(&alpha(&[1.0, 1.0]), &label(2, 1)).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-12);
        let l = evid_mse_loss(&alpha(&[1.0; 10]), &label(10, 3)).unwrap();
        assert!((l - (0.9 + 90.0 / 1100.0)).abs() < 1e-12);
        let l = evid_mse_loss(&alpha(&[1e6, 1.0, 1.0]), &label(3, 0)).unwrap();
        assert!(l < 1e-3);
    }

    #[test]
    fn ce_examples() {
        let h9: f64 = (1..=9).map(|k| 1.0 / k as f64).sum();
        let l = evid_ce_loss(&alpha(&[1.0; 10]), &label(10, 0)).unwrap();
        assert!((l - h9).abs() < 1e-12);
        assert!((l - 2.828_968_3).abs() < 1e-7);
        let l = evid_ce_loss(&alpha(&[1.0, 1.0]), &label(2, 0)).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let mut a = vec![1.0; 10];
        a[0] = 101.0;
        // ψ(110) - ψ(101) = Σ_{n=101}^{109} 1/n
        let want: f64 = (101..110).map(|n| 1.0 / n as f64).sum();
        let l = evid_ce_loss(&alpha(&a), &label(10, 0)).unwrap();
        assert!((l - want).abs() < 1e-12);
        assert!((l - 0.0857).abs() < 1e-4);
    }

    #[test]
    fn log_examples() {
        let l = evid_log_loss(&alpha(&[1.0; 10]), &label(10, 4)).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let mut a = vec![1.0; 10];
        a[0] = 101.0;
        let l = evid_log_loss(&alpha(&a), &label(10, 0)).unwrap();
        assert!((l - (110.0f64 / 101.0).ln()).abs() < 1e-12);
        assert!((l - 0.0854).abs() < 1e-4);
        let l = evid_log_loss(&alpha(&[2.0, 1.0]), &label(2, 0)).unwrap();
        assert!((l - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_incorrect_reg(&alpha(&[1.0, 1.0, 1.0]), &label(3, 0)).unwrap(), 0.0);
        let kl = kl_incorrect_reg(&alpha(&[2.0, 1.0]), &label(2, 1)).unwrap();
        assert!((kl - (2f64.ln() - 0.5)).abs() < 1e-12);
        let kl = kl_incorrect_reg(&alpha(&[1.0, 1e5, 1.0]), &label(3, 1)).unwrap();
        assert_eq!(kl, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            evid_log_loss(&alpha(&[1.0, 1.0]), &label(3, 0)),
            Err(EvError::DimensionMismatch { .. })
        ));
        assert!(OneHotLabel::new(3, 3).is_err());
    }

    #[test]
    fn correct_reg_examples() {
        assert_eq!(correct_evidence_reg(1.5, 0.7), 0.0);
        assert_eq!(correct_evidence_reg(-2.0, 1.0), 2.0);
        assert_eq!(correct_evidence_reg(-2.0, 0.25), 0.5);
        assert_eq!(correct_evidence_reg(0.0, 1.0), 0.0);
    }

    #[test]
    fn correct_reg_evidence_form_examples() {
        let v = correct_evidence_reg_evidence_form(Exp, (-2.0f64).exp(), 1.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = correct_evidence_reg_evidence_form(SoftPlus, 2f64.ln(), 1.0).unwrap();
        assert!(v.abs() < 1e-12);
        let v = correct_evidence_reg_evidence_form(SELU, (-0.5f64).exp(), 0.5).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!(matches!(
            correct_evidence_reg_evidence_form(ReLU, 1.0, 1.0),
            Err(EvError::UnsupportedActivation(ReLU))
        ));
        assert!(matches!(
            correct_evidence_reg_evidence_form(Exp, 0.0, 1.0),
            Err(EvError::InfiniteRegularizer)
        ));
        assert!(correct_evidence_reg_evidence_form(SELU, 0.0, 1.0).is_err());
    }

    #[test]
    fn annealing_schedule() {
        let reg = RegularizationConfig::new(1.0, false);
        assert_eq!(reg.kl_weight(5), 0.5);
        assert_eq!(reg.kl_weight(10), 1.0);
        assert_eq!(reg.kl_weight(25), 1.0);
        assert_eq!(reg.kl_weight(0), 0.0);
        assert_eq!(RegularizationConfig::new(3.0, true).kl_weight(20), 2.0 * RegularizationConfig::new(3.0, true).kl_weight(5));
    }

    #[test]
    fn combined_matches_components() {
        let logits = LogitVector::new(vec![0.3, -1.2, 0.8]).unwrap();
        let y = label(3, 1);
        let bare = combined_loss(LossKind::EvidLog, &RegularizationConfig::off(), Exp, &logits, &y, 3).unwrap();
        let params = dirichlet_params(&activate(Exp, &logits).unwrap());
        assert_eq!(bare, evid_log_loss(&params, &y).unwrap());

        let reg = RegularizationConfig::new(1.0, true);
        let full = combined_loss(LossKind::EvidLog, &reg, Exp, &logits, &y, 5).unwrap();
        let vac = 3.0 / params.strength();
        let want = bare + 0.5 * kl_incorrect_reg(&params, &y).unwrap() + 1.2 * vac;
        assert!((full - want).abs() < 1e-12);
    }

    #[test]
    fn log_loss_gradient_example() {
        let logits = LogitVector::new(vec![0.0, f64::ln(1e-300)]).unwrap();
        // alpha ≈ (2, 1): grad = ((1/3 - 1/2) * 1, (1/3) * 1e-300)
        let g = loss_grad_wrt_logits(LossKind::EvidLog, &RegularizationConfig::off(), Exp, &logits, &label(2, 0), 0).unwrap();
        assert!((g[0] + 1.0 / 6.0).abs() < 1e-12);
        assert!(g[1].abs() < 1e-299);
    }

    #[test]
    fn zero_evidence_gradients_vanish_and_restore() {
        let logits = LogitVector::new(vec![-3.0, -0.5, -7.0, -1.0]).unwrap();
        let y = label(4, 2);
        for loss in LossKind::ALL {
            let g = loss_grad_wrt_logits(loss, &RegularizationConfig::new(2.0, false), ReLU, &logits, &y, 20).unwrap();
            assert!(g.iter().all(|v| *v == 0.0));
            let g = loss_grad_wrt_logits(loss, &RegularizationConfig::new(2.0, true), ReLU, &logits, &y, 20).unwrap();
            assert_eq!(g, vec![0.0, 0.0, -1.0, 0.0]);
        }
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn close(a: f64, b: f64) -> bool {
        let d = (a - b).abs();
        d <= 1e-8 || d / a.abs().max(b.abs()) <= 1e-5
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_loss() -> impl Strategy<Value = LossKind> {
            prop::sample::select(LossKind::ALL.to_vec())
        }

        fn any_act() -> impl Strategy<Value = ActivationKind> {
            prop::sample::select(ActivationKind::ALL.to_vec())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]

            #[test]
            fn mse_bounded(a in proptest::collection::vec(1.0f64..1e4, 2..12), gt in 0usize..12) {
                let k = a.len();
                let y = OneHotLabel::new(k, gt % k).unwrap();
                let l = evid_mse_loss(&DirichletParams::from_alpha(a).unwrap(), &y).unwrap();
                prop_assert!((0.0..=2.0).contains(&l));
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn evidence_form_matches_logit_form(
                kind in prop::sample::select(vec![SoftPlus, SELU, Exp]),
                o in -10.0f64..10.0,
                vac in 0.0f64..=1.0,
            ) {
                let e = kind.evidence(o);
                let ev = correct_evidence_reg_evidence_form(kind, e, vac).unwrap();
                let lg = correct_evidence_reg(o, vac);
                prop_assert!((ev - lg).abs() <= 1e-9);
            }

            #[test]
            fn kl_is_non_negative_and_blind_to_gt(a in proptest::collection::vec(1.0f64..50.0, 2..8), gt in 0usize..8) {
                let k = a.len();
                let y = OneHotLabel::new(k, gt % k).unwrap();
                let p = DirichletParams::from_alpha(a.clone()).unwrap();
                let kl = kl_incorrect_reg(&p, &y).unwrap();
                prop_assert!(kl >= 0.0);
                let mut b = a;
                b[gt % k] += 17.0;
                let kl2 = kl_incorrect_reg(&DirichletParams::from_alpha(b).unwrap(), &y).unwrap();
                prop_assert!((kl - kl2).abs() < 1e-12);
            }

            #[test]
            fn logit_gradient_matches_finite_differences(
                o in proptest::collection::vec(-4.0f64..4.0, 2..7),
                gt in 0usize..7,
                loss in any_loss(),
                act in any_act(),
                lambda1 in 0.0f64..3.0,
                cor in any::<bool>(),
                epoch in 0usize..15,
            ) {
                let k = o.len();
                let kink = matches!(act, ReLU | SELU) || cor;
                prop_assume!(!kink || o.iter().all(|v| v.abs() > 1e-4));
                let y = OneHotLabel::new(k, gt % k).unwrap();
                let reg = RegularizationConfig::new(lambda1, cor);
                let f = |x: &[f64]| combined_loss(loss, &reg, act, &LogitVector::new(x.to_vec()).unwrap(), &y, epoch).unwrap();
                let fd = central_diff(f, &o, 1e-6);
                let an = loss_grad_wrt_logits(loss, &reg, act, &LogitVector::new(o.clone()).unwrap(), &y, epoch).unwrap();
                for (a, n) in an.iter().zip(&fd) {
                    prop_assert!(close(*a, *n), "{:?} {:?} {:?}: {:?} vs {:?}", loss, act, o, an, fd);
                }
            }

            #[test]
            fn kl_gradient_is_zero_at_gt_logit(
                o in proptest::collection::vec(-4.0f64..4.0, 2..7),
                gt in 0usize..7,
                act in prop::sample::select(vec![SoftPlus, Exp, SELU]),
            ) {
                let k = o.len();
                let y = OneHotLabel::new(k, gt % k).unwrap();
                let kl_of = |x: &[f64]| {
                    let p = dirichlet_params(&activate(act, &LogitVector::new(x.to_vec()).unwrap()).unwrap());
                    kl_incorrect_reg(&p, &y).unwrap()
                };
                let fd = central_diff(kl_of, &o, 1e-6);
                prop_assert!(fd[gt % k].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn vanishing_gradient_far_below_zero() {
        let y = label(5, 1);
        let logits = LogitVector::new(vec![-30.0, -31.0, -45.0, -30.5, -60.0]).unwrap();
        for loss in LossKind::ALL {
            for act in ActivationKind::ALL {
                let g = loss_grad_wrt_logits(loss, &RegularizationConfig::new(1.0, false), act, &logits, &y, 12).unwrap();
                let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(norm <= 1e-10, "{loss} {act}: {norm}");
                let g = loss_grad_wrt_logits(loss, &RegularizationConfig::new(1.0, true), act, &logits, &y, 12).unwrap();
                assert!((g[1] + 1.0).abs() <= 1e-9, "{loss} {act}: {}", g[1]);
            }
        }
    }

    #[test]
    fn gradient_shrinks_monotonically_toward_zero_evidence() {
        let y = label(4, 0);
        let mut prev = f64::INFINITY;
        let mut o = 0.0;
        while o >= -30.0 {
            let logits = LogitVector::new(vec![o; 4]).unwrap();
            let g = loss_grad_wrt_logits(LossKind::EvidMSE, &RegularizationConfig::off(), Exp, &logits, &y, 0).unwrap();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < prev, "o = {o}: {norm} !< {prev}");
            prev = norm;
            o -= 0.5;
        }
    }
}
