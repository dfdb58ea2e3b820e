//! Training loop, optimizers, FGSM, and the experiment runners built on them.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{four_point_toy, LabeledDataset};
use crate::error::{EvError, Result};
use crate::head::{activate, ActivationKind};
use crate::losses::{LossKind, Objective, OneHotLabel, RegularizationConfig};
use crate::network::{DenseNet, InitSpec, LayerParams, Nonlinearity, ParamGradient};
use crate::rng::Rng;
use crate::uncertainty::{auroc, PredictionRecord, UncertaintyReport};

/// Per-sample gradient norm below which a sample counts as frozen.
pub const FROZEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr, momentum: 0.0 }
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            Optimizer::Sgd { momentum, .. } => Optimizer::Sgd { lr, momentum },
            Optimizer::Adam { beta1, beta2, eps, .. } => Optimizer::Adam { lr, beta1, beta2, eps },
        }
    }

    fn validate(&self) -> Result<()> {
        // lr = 0 is accepted as a null update
        if !(self.lr() >= 0.0 && self.lr().is_finite()) {
            return Err(EvError::invalid(format!("learning rate must be non-negative, got {}", self.lr())));
        }
        match *self {
            Optimizer::Sgd { momentum, .. } if !(0.0..1.0).contains(&momentum) => {
                Err(EvError::invalid(format!("momentum {momentum} outside [0, 1)")))
            }
            Optimizer::Adam { beta1, beta2, eps, .. }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                Err(EvError::invalid("Adam needs beta1, beta2 in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub activation: ActivationKind,
    pub reg: RegularizationConfig,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Train on FGSM-perturbed inputs with this epsilon.
    pub adversarial_eps: Option<f64>,
}

impl TrainConfig {
    pub fn new(loss: LossKind, activation: ActivationKind, reg: RegularizationConfig, optimizer: Optimizer, epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            loss,
            activation,
            reg,
            optimizer,
            epochs,
            batch_size,
            seed,
            adversarial_eps: None,
        }
    }

    pub fn objective(&self) -> Objective {
        Objective::new(self.loss, self.activation, self.reg)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.reg.validate()?;
        if self.epochs == 0 {
            return Err(EvError::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(EvError::invalid("batch size must be at least 1"));
        }
        if let Some(eps) = self.adversarial_eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(EvError::invalid(format!("adversarial epsilon must be non-negative, got {eps}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mean_vacuity: f64,
    pub frozen_sample_count: usize,
    /// L-infinity gradient norm of every training sample, indexed by sample.
    pub sample_grad_norms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// Header: `epoch,train_loss,train_accuracy,test_accuracy,mean_vacuity,frozen_samples`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_loss,train_accuracy,test_accuracy,mean_vacuity,frozen_samples")?;
        for s in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.epoch, s.train_loss, s.train_accuracy, s.test_accuracy, s.mean_vacuity, s.frozen_sample_count
            )?;
        }
        Ok(())
    }
}

enum OptState {
    Sgd { velocity: ParamGradient },
    Adam { m: ParamGradient, v: ParamGradient, step: i32 },
}

/// Stateful trainer; one call to [`Trainer::run_epoch`] per epoch.
pub struct Trainer {
    net: DenseNet,
    config: TrainConfig,
    objective: Objective,
    state: OptState,
    epoch: usize,
}

impl Trainer {
    pub fn new(net: DenseNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = match config.optimizer {
            Optimizer::Sgd { .. } => OptState::Sgd {
                velocity: ParamGradient::zeros_like(&net),
            },
            Optimizer::Adam { .. } => OptState::Adam {
                m: ParamGradient::zeros_like(&net),
                v: ParamGradient::zeros_like(&net),
                step: 0,
            },
        };
        Ok(Self {
            objective: config.objective(),
            net,
            config,
            state,
            epoch: 0,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn into_net(self) -> DenseNet {
        self.net
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        EvError::check_dim("dataset input dimension", self.net.input_dim(), data.dim())?;
        EvError::check_dim("dataset class count", self.net.output_dim(), data.class_count())
    }

    pub fn run_epoch(&mut self, train: &LabeledDataset, test: &LabeledDataset) -> Result<EpochStats> {
        self.check_data(train)?;
        self.check_data(test)?;
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::derived(self.config.seed, epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut norms = vec![0.0; train.len()];
        for batch in order.chunks(self.config.batch_size) {
            let net = &self.net;
            let objective = &self.objective;
            let adv = self.config.adversarial_eps;
            let results: Vec<Result<(f64, ParamGradient)>> = batch
                .par_iter()
                .map(|&i| {
                    let (x, y) = train.sample(i);
                    let wrap = |e| EvError::Training {
                        epoch,
                        sample: i,
                        source: Box::new(e),
                    };
                    let perturbed;
                    let x = match adv {
                        Some(eps) => {
                            perturbed = fgsm_attack(net, x, y, eps, objective, epoch).map_err(wrap)?;
                            perturbed.as_slice()
                        }
                        None => x,
                    };
                    net.backward(x, y, objective, epoch).map_err(wrap)
                })
                .collect();
            let mut grad = ParamGradient::zeros_like(&self.net);
            for (&i, r) in batch.iter().zip(results) {
                let (loss, g) = r?;
                loss_sum += loss;
                norms[i] = g.linf_norm();
                grad.add_scaled(&g, 1.0);
            }
            grad.scale(1.0 / batch.len() as f64);
            self.step(&grad);
        }

        let train_records = predict_records(&self.net, train, self.config.activation).map_err(|e| at_epoch(e, epoch))?;
        let test_records = predict_records(&self.net, test, self.config.activation).map_err(|e| at_epoch(e, epoch))?;
        self.epoch += 1;
        Ok(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: crate::uncertainty::accuracy(&train_records),
            test_accuracy: crate::uncertainty::accuracy(&test_records),
            mean_vacuity: test_records.iter().map(|r| r.vacuity).sum::<f64>() / test_records.len() as f64,
            frozen_sample_count: norms.iter().filter(|&&n| n < FROZEN_TOL).count(),
            sample_grad_norms: norms,
        })
    }

    fn step(&mut self, grad: &ParamGradient) {
        match (&mut self.state, self.config.optimizer) {
            (OptState::Sgd { velocity }, Optimizer::Sgd { lr, momentum }) => {
                velocity.scale(momentum);
                velocity.add_scaled(grad, 1.0);
                for (p, v) in self.net.blocks_mut().zip(velocity.blocks()) {
                    for (p, v) in p.iter_mut().zip(v) {
                        *p -= lr * v;
                    }
                }
            }
            (OptState::Adam { m, v, step }, Optimizer::Adam { lr, beta1, beta2, eps }) => {
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - beta2.powi(*step);
                for ((mb, vb), gb) in m.blocks_mut().zip(v.blocks_mut()).zip(grad.blocks()) {
                    for ((m, v), g) in mb.iter_mut().zip(vb.iter_mut()).zip(gb) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                    }
                }
                for ((p, mb), vb) in self.net.blocks_mut().zip(m.blocks()).zip(v.blocks()) {
                    for ((p, m), v) in p.iter_mut().zip(mb).zip(vb) {
                        *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                    }
                }
            }
            _ => unreachable!("optimizer state matches config"),
        }
    }
}

fn at_epoch(e: EvError, epoch: usize) -> EvError {
    match e {
        EvError::Training { sample, source, .. } => EvError::Training { epoch, sample, source },
        other => other,
    }
}

/// Train for `config.epochs` epochs; returns the final net and one history row per epoch.
pub fn train(net: DenseNet, data: &LabeledDataset, test: &LabeledDataset, config: &TrainConfig) -> Result<(DenseNet, TrainHistory)> {
    let mut trainer = Trainer::new(net, config.clone())?;
    let mut history = TrainHistory::default();
    for _ in 0..config.epochs {
        history.epochs.push(trainer.run_epoch(data, test)?);
    }
    Ok((trainer.into_net(), history))
}

/// Uncertainty report for every sample of `data`.
pub fn predict(net: &DenseNet, data: &LabeledDataset, activation: ActivationKind) -> Result<Vec<UncertaintyReport>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let wrap = |e| EvError::Training {
                epoch: 0,
                sample: i,
                source: Box::new(e),
            };
            let logits = net.logits(data.sample(i).0).map_err(wrap)?;
            let e = activate(activation, &logits).map_err(wrap)?;
            Ok(UncertaintyReport::from_evidence(&e))
        })
        .collect()
}

pub fn predict_records(net: &DenseNet, data: &LabeledDataset, activation: ActivationKind) -> Result<Vec<PredictionRecord>> {
    Ok(predict(net, data, activation)?
        .iter()
        .zip(data.labels())
        .map(|(r, y)| r.record(y.gt_index()))
        .collect())
}

/// `x + epsilon * sign(dL/dx)` with `sign(0) = 0`.
pub fn fgsm_attack(net: &DenseNet, input: &[f64], label: &OneHotLabel, epsilon: f64, objective: &Objective, epoch: usize) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(EvError::invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(input.to_vec());
    }
    let b = net.backward_full(input, label, objective, epoch)?;
    Ok(input
        .iter()
        .zip(&b.input_grad)
        .map(|(x, g)| {
            if *g > 0.0 {
                x + epsilon
            } else if *g < 0.0 {
                x - epsilon
            } else {
                *x
            }
        })
        .collect())
}

/// Accuracy on FGSM-perturbed copies of every sample.
pub fn adversarial_accuracy(net: &DenseNet, data: &LabeledDataset, objective: &Objective, epsilon: f64) -> Result<f64> {
    let epoch = objective.reg.anneal_epochs;
    let hits: Vec<bool> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = data.sample(i);
            let xa = fgsm_attack(net, x, y, epsilon, objective, epoch)?;
            let e = activate(objective.activation, &net.logits(&xa)?)?;
            Ok(UncertaintyReport::from_evidence(&e).predicted_class == y.gt_index())
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagnationConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for StagnationConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagnationRow {
    pub epoch: usize,
    pub sample_id: usize,
    pub total_evidence: f64,
    pub grad_norm: f64,
    /// Largest logit of the sample at the start of the epoch.
    pub max_logit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagnationRun {
    pub variant: &'static str,
    pub rows: Vec<StagnationRow>,
    pub history: TrainHistory,
    pub final_accuracy: f64,
}

impl StagnationRun {
    /// Samples whose gradient norm was exactly zero in every epoch.
    pub fn permanently_frozen(&self) -> Vec<usize> {
        let n = self.rows.iter().map(|r| r.sample_id + 1).max().unwrap_or(0);
        (0..n)
            .filter(|&i| self.rows.iter().filter(|r| r.sample_id == i).all(|r| r.grad_norm == 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagnationReport {
    pub relu: StagnationRun,
    pub gred: StagnationRun,
}

impl StagnationReport {
    /// Header: `epoch,sample_id,total_evidence,grad_norm,variant`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,sample_id,total_evidence,grad_norm,variant")?;
        for run in [&self.relu, &self.gred] {
            for r in &run.rows {
                writeln!(out, "{},{},{},{},{}", r.epoch, r.sample_id, r.total_evidence, r.grad_norm, run.variant)?;
            }
        }
        Ok(())
    }
}

/// Initialization for the 2-4-4 toy net. Hidden unit `i` fires only on
/// corner `i`. Samples 0 and 1 start with positive but wrong evidence,
/// samples 2 and 3 with all logits negative.
pub fn stagnation_init() -> Vec<LayerParams> {
    let hidden = LayerParams {
        weights: vec![1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0],
        biases: vec![-1.0; 4],
    };
    // column j is the response to hidden unit j
    #[rustfmt::skip]
    let out = LayerParams {
        weights: vec![
            0.5, 1.0, -5.0, -5.0,
            1.0, 0.5, -5.0, -5.0,
            0.0, 0.0,  1.0, -5.0,
            0.0, 0.0, -5.0,  1.0,
        ],
        biases: vec![0.0, 0.0, -3.0, -3.0],
    };
    vec![hidden, out]
}

fn stagnation_run(variant: &'static str, reg: RegularizationConfig, config: &StagnationConfig) -> Result<StagnationRun> {
    let data = four_point_toy(config.seed);
    let net = DenseNet::init(&[2, 4, 4], Nonlinearity::ReLU, &InitSpec::explicit(stagnation_init()))?;
    let tc = TrainConfig::new(LossKind::EvidMSE, ActivationKind::ReLU, reg, Optimizer::sgd(config.lr), config.epochs, 4, config.seed);
    let mut trainer = Trainer::new(net, tc)?;
    let mut rows = Vec::with_capacity(config.epochs * 4);
    let mut history = TrainHistory::default();
    for _ in 0..config.epochs {
        let snapshot: Vec<(f64, f64)> = data
            .inputs()
            .iter()
            .map(|x| {
                let logits = trainer.net().logits(x)?;
                let max_logit = logits.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok((activate(ActivationKind::ReLU, &logits)?.total(), max_logit))
            })
            .collect::<Result<_>>()?;
        let stats = trainer.run_epoch(&data, &data)?;
        for (i, (total_evidence, max_logit)) in snapshot.into_iter().enumerate() {
            rows.push(StagnationRow {
                epoch: stats.epoch,
                sample_id: i,
                total_evidence,
                grad_norm: stats.sample_grad_norms[i],
                max_logit,
            });
        }
        history.epochs.push(stats);
    }
    let final_accuracy = history.last().map_or(0.0, |s| s.train_accuracy);
    Ok(StagnationRun {
        variant,
        rows,
        history,
        final_accuracy,
    })
}

/// ReLU + MSE on the four-point toy from [`stagnation_init`], first with
/// regularizers off, then with the correct-evidence regularizer on.
pub fn stagnation_experiment(config: &StagnationConfig) -> Result<StagnationReport> {
    Ok(StagnationReport {
        relu: stagnation_run("relu", RegularizationConfig::off(), config)?,
        gred: stagnation_run("gred", RegularizationConfig::new(0.0, true), config)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda1: f64,
    pub variant: &'static str,
    pub test_accuracy: f64,
    pub mean_vacuity: f64,
}

/// Header: `lambda1,variant,test_accuracy,mean_vacuity`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "lambda1,variant,test_accuracy,mean_vacuity")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.lambda1, r.variant, r.test_accuracy, r.mean_vacuity)?;
    }
    Ok(())
}

/// For every `lambda1`, train a baseline (correct-evidence regularizer off)
/// and a GRED variant (on) from the same initial net.
pub fn regularization_sweep(lambdas: &[f64], init: &DenseNet, config: &TrainConfig, data: &LabeledDataset, test: &LabeledDataset) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(2 * lambdas.len());
    for &lambda1 in lambdas {
        if lambda1.is_nan() || lambda1 < 0.0 {
            return Err(EvError::invalid(format!("lambda1 must be non-negative, got {lambda1}")));
        }
        for (variant, cor) in [("baseline", false), ("gred", true)] {
            let mut c = config.clone();
            c.reg = RegularizationConfig {
                lambda1,
                use_correct_reg: cor,
                ..config.reg
            };
            let (_, h) = train(init.clone(), data, test, &c)?;
            let last = h.last().expect("epochs >= 1");
            rows.push(SweepRow {
                lambda1,
                variant,
                test_accuracy: last.test_accuracy,
                mean_vacuity: last.mean_vacuity,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodResult {
    pub auroc: f64,
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
}

impl OodResult {
    /// Header: `set,sample_id,score`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "set,sample_id,score")?;
        for (set, scores) in [("id", &self.id_scores), ("ood", &self.ood_scores)] {
            for (i, s) in scores.iter().enumerate() {
                writeln!(out, "{set},{i},{s}")?;
            }
        }
        Ok(())
    }
}

/// Score both sets with `1 - max p` and compute the AUROC of OOD vs ID.
pub fn ood_experiment(net: &DenseNet, activation: ActivationKind, id: &LabeledDataset, ood: &LabeledDataset) -> Result<OodResult> {
    let scores = |d| -> Result<Vec<f64>> { Ok(predict(net, d, activation)?.iter().map(UncertaintyReport::ood_score).collect()) };
    let id_scores = scores(id)?;
    let ood_scores = scores(ood)?;
    Ok(OodResult {
        auroc: auroc(&id_scores, &ood_scores)?,
        id_scores,
        ood_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_blobs;

    fn blobs() -> (LabeledDataset, LabeledDataset) {
        (
            gaussian_blobs(3, 20, 0.5, 4.0, 2, 1).unwrap(),
            gaussian_blobs(3, 10, 0.5, 4.0, 2, 2).unwrap(),
        )
    }

    fn small_net(seed: u64) -> DenseNet {
        DenseNet::init(&[2, 8, 3], Nonlinearity::Tanh, &InitSpec::uniform(seed)).unwrap()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig::new(LossKind::EvidLog, ActivationKind::SoftPlus, RegularizationConfig::new(0.5, true), Optimizer::adam(0.01), epochs, 8, 3)
    }

    #[test]
    fn zero_lr_keeps_params() {
        let (tr, te) = blobs();
        let mut c = cfg(3);
        c.optimizer = Optimizer::sgd(0.0);
        let (net, h) = train(small_net(1), &tr, &te, &c).unwrap();
        assert_eq!(net, small_net(1));
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn single_sgd_step_matches_backward() {
        let d = LabeledDataset::new(vec![vec![0.3, -0.7]], vec![2], 3, 0).unwrap();
        let mut c = cfg(1);
        c.optimizer = Optimizer::sgd(0.1);
        c.batch_size = 1;
        let net = small_net(4);
        let (_, g) = net.backward(&d.inputs()[0], &d.labels()[0], &c.objective(), 0).unwrap();
        let (after, _) = train(net.clone(), &d, &d, &c).unwrap();
        for ((p, q), g) in net.blocks().zip(after.blocks()).zip(g.blocks()) {
            for ((p, q), g) in p.iter().zip(q).zip(g) {
                assert_eq!(*q, p - 0.1 * g);
            }
        }
    }

    #[test]
    fn deterministic_history() {
        let (tr, te) = blobs();
        let a = train(small_net(2), &tr, &te, &cfg(5)).unwrap();
        let b = train(small_net(2), &tr, &te, &cfg(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_loss_is_mean_of_sample_losses() {
        let (tr, te) = blobs();
        let mut c = cfg(1);
        c.optimizer = Optimizer::sgd(0.0);
        let net = small_net(5);
        let (_, h) = train(net.clone(), &tr, &te, &c).unwrap();
        let obj = c.objective();
        let mean = tr.iter().map(|(x, y)| net.loss(x, y, &obj, 0).unwrap()).sum::<f64>() / tr.len() as f64;
        assert!((h.epochs[0].train_loss - mean).abs() < 1e-12);
    }

    #[test]
    fn separable_blobs_fit_with_exp_log() {
        let tr = gaussian_blobs(3, 30, 0.3, 5.0, 2, 11).unwrap();
        let c = TrainConfig::new(LossKind::EvidLog, ActivationKind::Exp, RegularizationConfig::off(), Optimizer::adam(0.01), 200, 16, 7);
        let (_, h) = train(small_net(9), &tr, &tr, &c).unwrap();
        let first = h.epochs.iter().position(|s| s.train_accuracy == 1.0);
        assert!(first.is_some(), "never reached 100%");
        assert_eq!(h.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn invalid_configs() {
        let (tr, te) = blobs();
        let mut c = cfg(0);
        assert!(train(small_net(1), &tr, &te, &c).is_err());
        c.epochs = 1;
        c.batch_size = 0;
        assert!(train(small_net(1), &tr, &te, &c).is_err());
        c.batch_size = 1;
        c.optimizer = Optimizer::sgd(-1.0);
        assert!(train(small_net(1), &tr, &te, &c).is_err());
        let wide = DenseNet::init(&[3, 3], Nonlinearity::Tanh, &InitSpec::constant(0.0)).unwrap();
        assert!(train(wide, &tr, &te, &cfg(1)).is_err());
    }

    #[test]
    fn exp_overflow_reports_epoch_and_sample() {
        let d = LabeledDataset::new(vec![vec![1.0], vec![1000.0]], vec![0, 1], 2, 0).unwrap();
        let net = DenseNet::init(&[1, 2], Nonlinearity::Tanh, &InitSpec::constant(1.0)).unwrap();
        let mut c = cfg(1);
        c.activation = ActivationKind::Exp;
        let err = train(net, &d, &d, &c).unwrap_err();
        assert!(err.is_numerical());
        assert!(matches!(err, EvError::Training { epoch: 0, sample: 1, .. }), "{err}");
    }

    #[test]
    fn divergence_is_numerical() {
        let d = LabeledDataset::new(vec![vec![100.0], vec![-100.0]], vec![0, 1], 2, 0).unwrap();
        let net = DenseNet::init(&[1, 2], Nonlinearity::Tanh, &InitSpec::constant(1.0)).unwrap();
        let mut c = cfg(3);
        c.optimizer = Optimizer::sgd(f64::MAX);
        let err = train(net, &d, &d, &c).unwrap_err();
        assert!(err.is_numerical(), "{err}");
        assert!(!EvError::invalid("x").is_numerical());
    }

    #[test]
    fn fgsm_contract() {
        let net = small_net(3);
        let obj = cfg(1).objective();
        let y = OneHotLabel::new(3, 1).unwrap();
        let x = [0.4, -0.2];
        assert_eq!(fgsm_attack(&net, &x, &y, 0.0, &obj, 0).unwrap(), x.to_vec());
        let xa = fgsm_attack(&net, &x, &y, 0.05, &obj, 0).unwrap();
        for (a, b) in xa.iter().zip(&x) {
            let d = a - b;
            assert!(d == 0.0 || d == 0.05 || d == -0.05 || (d.abs() - 0.05).abs() < 1e-16, "{d}");
        }
        assert!(fgsm_attack(&net, &x, &y, -1.0, &obj, 0).is_err());
    }

    #[test]
    fn adversarial_training_runs() {
        let (tr, te) = blobs();
        let mut c = cfg(2);
        c.adversarial_eps = Some(0.05);
        let (_, h) = train(small_net(1), &tr, &te, &c).unwrap();
        assert_eq!(h.len(), 2);
        assert_ne!(train(small_net(1), &tr, &te, &cfg(2)).unwrap().1, h);
    }

    #[test]
    fn history_csv() {
        let (tr, te) = blobs();
        let (_, h) = train(small_net(1), &tr, &te, &cfg(2)).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("epoch,train_loss,train_accuracy,test_accuracy,mean_vacuity,frozen_samples\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn stagnation_freezes_two_and_gred_recovers() {
        let report = stagnation_experiment(&StagnationConfig::default()).unwrap();
        let relu = &report.relu;
        assert_eq!(relu.permanently_frozen(), vec![2, 3]);
        assert!(relu.final_accuracy <= 0.5);
        for r in relu.rows.iter().filter(|r| r.sample_id >= 2) {
            assert!(r.max_logit <= 0.0);
            assert_eq!(r.total_evidence, 0.0);
        }
        let counts: Vec<usize> = relu.history.epochs.iter().map(|s| s.frozen_sample_count).collect();
        assert!(counts[1..].iter().all(|&c| c == counts[1]));
        assert_eq!(report.gred.final_accuracy, 1.0);
        assert!(report.gred.permanently_frozen().is_empty());
    }

    #[test]
    fn sweep_baseline_matches_train() {
        let (tr, te) = blobs();
        let mut c = cfg(3);
        c.reg = RegularizationConfig::off();
        let rows = regularization_sweep(&[0.0], &small_net(1), &c, &tr, &te).unwrap();
        let (_, h) = train(small_net(1), &tr, &te, &c).unwrap();
        assert_eq!(rows[0].variant, "baseline");
        assert_eq!(rows[0].test_accuracy, h.last().unwrap().test_accuracy);
        assert_eq!(rows[0].mean_vacuity, h.last().unwrap().mean_vacuity);
        assert_eq!(rows.len(), 2);
        assert!(regularization_sweep(&[-1.0], &small_net(1), &c, &tr, &te).is_err());
    }

    #[test]
    fn ood_identical_sets_half() {
        let (tr, _) = blobs();
        let r = ood_experiment(&small_net(1), ActivationKind::SoftPlus, &tr, &tr).unwrap();
        assert!((r.auroc - 0.5).abs() < 1e-12);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1 + 2 * tr.len());
    }
}
