use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use evcore::codebook::{demo_fixture, select_code, Codebook, SelectionConfig};
use evcore::data::{four_point_toy, gaussian_blobs, idx_load, ood_shift, LabeledDataset};
use evcore::error::EvError;
use evcore::head::{ActivationKind, EvidenceVector};
use evcore::io::{load_codebook, load_net, read_codebook_csv, save_net};
use evcore::losses::{LossKind, RegularizationConfig};
use evcore::network::{random_grad_check, DenseNet, InitSpec, Nonlinearity};
use evcore::rng::{derive_seed, Rng};
use evcore::trainer::{
    adversarial_accuracy, ood_experiment, predict_records, regularization_sweep, stagnation_experiment, train,
    write_sweep_csv, Optimizer, StagnationConfig, TrainConfig,
};
use evcore::uncertainty::{accuracy_vacuity_curve, ece, reliability_bins, topk_confident_accuracy};

use crate::args::*;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input data.
    Config(String),
    Core(EvError),
    /// Already reported to the user (usage error, failed check).
    Reported,
}

impl From<EvError> for Failure {
    fn from(e: EvError) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(EvError::Io(e))
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

type Outcome = Result<(), Failure>;

// stream ids for sub-seeds derived from --seed
const TRAIN_DATA: u64 = 0;
const TEST_DATA: u64 = 1;
const NET_INIT: u64 = 2;
const IDX_SPLIT: u64 = 3;
const LABEL_NOISE: u64 = 4;
const OOD_SHIFT: u64 = 5;

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Summaries go to stdout when the CSV goes to a file, else to stderr.
fn summary(out: &Option<PathBuf>, msg: &str) {
    if out.is_some() {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
}

fn parse_list(what: &str, s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Failure::Config(format!("{what}: '{v}': {e}"))))
        .collect()
}

fn on(s: &str) -> bool {
    s == "on"
}

fn train_config(m: &ModelArgs, seed: u64) -> Result<TrainConfig, Failure> {
    let loss: LossKind = m.loss.parse()?;
    let act: ActivationKind = m.act.parse()?;
    let optimizer = match m.optimizer.as_str() {
        "sgd" => Optimizer::Sgd {
            lr: m.lr,
            momentum: m.momentum,
        },
        _ => Optimizer::adam(m.lr),
    };
    let mut c = TrainConfig::new(loss, act, RegularizationConfig::new(m.lambda1, on(&m.cor_reg)), optimizer, m.epochs, m.batch, seed);
    if on(&m.adv_train) {
        c.adversarial_eps = Some(m.adv_eps);
    }
    c.validate()?;
    Ok(c)
}

fn split(data: &LabeledDataset, idx: &[usize], seed: u64) -> Result<LabeledDataset, Failure> {
    let inputs = idx.iter().map(|&i| data.inputs()[i].clone()).collect();
    let labels = idx.iter().map(|&i| data.labels()[i].gt_index()).collect();
    Ok(LabeledDataset::new(inputs, labels, data.class_count(), seed)?)
}

fn datasets(d: &DataArgs, seed: u64) -> Result<(LabeledDataset, LabeledDataset), Failure> {
    let (train, test) = match (&d.idx_images, &d.idx_labels) {
        (Some(images), Some(labels)) => {
            let all = idx_load(images, labels, (d.limit > 0).then_some(d.limit))?;
            if all.len() < 2 {
                return Err(Failure::Config("IDX data needs at least two samples".into()));
            }
            let mut order: Vec<usize> = (0..all.len()).collect();
            Rng::derived(seed, IDX_SPLIT).shuffle(&mut order);
            let cut = (all.len() * 4 / 5).clamp(1, all.len() - 1);
            (split(&all, &order[..cut], seed)?, split(&all, &order[cut..], seed)?)
        }
        _ => (
            gaussian_blobs(d.classes, d.per_class, d.spread, d.separation, d.dim, derive_seed(seed, TRAIN_DATA))?,
            gaussian_blobs(d.classes, d.per_class, d.spread, d.separation, d.dim, derive_seed(seed, TEST_DATA))?,
        ),
    };
    let train = if d.label_noise > 0.0 {
        train.with_label_noise(d.label_noise, derive_seed(seed, LABEL_NOISE))?
    } else {
        train
    };
    Ok((train, test))
}

fn init_net(m: &ModelArgs, input: usize, classes: usize, seed: u64) -> Result<DenseNet, Failure> {
    let mut dims = vec![input];
    if !m.hidden.trim().is_empty() {
        for w in m.hidden.split(',') {
            dims.push(w.trim().parse().map_err(|e| Failure::Config(format!("--hidden: '{w}': {e}")))?);
        }
    }
    dims.push(classes);
    let hidden: Nonlinearity = m.hidden_act.parse()?;
    Ok(DenseNet::init(&dims, hidden, &InitSpec::uniform(derive_seed(seed, NET_INIT)))?)
}

/// The evaluated network: loaded from `--load`, or trained from scratch.
fn model(e: &EvalCmd) -> Result<(DenseNet, TrainConfig, LabeledDataset, LabeledDataset), Failure> {
    let seed = e.common.seed;
    let cfg = train_config(&e.model, seed)?;
    let (tr, te) = datasets(&e.data, seed)?;
    let net = match &e.load {
        Some(p) => load_net(p)?,
        None => train(init_net(&e.model, tr.dim(), tr.class_count(), seed)?, &tr, &te, &cfg)?.0,
    };
    if net.input_dim() != te.dim() || net.output_dim() != te.class_count() {
        return Err(Failure::Config(format!(
            "network maps {} inputs to {} classes but data has {} features and {} classes",
            net.input_dim(),
            net.output_dim(),
            te.dim(),
            te.class_count()
        )));
    }
    Ok((net, cfg, tr, te))
}

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Train(c) => cmd_train(&c),
        Command::GradCheck(c) => cmd_grad_check(&c),
        Command::Stagnation(c) => cmd_stagnation(&c),
        Command::RegSweep(c) => cmd_reg_sweep(&c),
        Command::AccVacuity(c) => cmd_acc_vacuity(&c),
        Command::Calibration(c) => cmd_calibration(&c),
        Command::Ood(c) => cmd_ood(&c),
        Command::Attack(c) => cmd_attack(&c),
        Command::CodebookDemo(c) => cmd_codebook(&c),
        Command::GenData(c) => cmd_gen_data(&c),
    }
}

fn cmd_train(c: &TrainCmd) -> Outcome {
    let seed = c.common.seed;
    let cfg = train_config(&c.model, seed)?;
    let (tr, te) = datasets(&c.data, seed)?;
    let net = init_net(&c.model, tr.dim(), tr.class_count(), seed)?;
    let (net, history) = train(net, &tr, &te, &cfg)?;
    let mut out = sink(&c.common.out)?;
    history.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &c.save {
        save_net(&net, p)?;
    }
    let last = history.last().expect("epochs >= 1");
    summary(
        &c.common.out,
        &format!(
            "train accuracy {:.4}, test accuracy {:.4}, mean vacuity {:.4}, frozen samples {}",
            last.train_accuracy, last.test_accuracy, last.mean_vacuity, last.frozen_sample_count
        ),
    );
    Ok(())
}

fn cmd_grad_check(c: &GradCheckCmd) -> Outcome {
    let r = random_grad_check(c.trials, c.common.seed)?;
    if let Some(p) = &c.common.out {
        let mut out = sink(&Some(p.clone()))?;
        writeln!(out, "trials,skipped,max_rel_error")?;
        writeln!(out, "{},{},{}", r.trials, r.skipped, r.max_rel_error)?;
        out.flush()?;
    }
    println!("max relative error: {:e} ({} trials, {} near kinks skipped)", r.max_rel_error, r.trials, r.skipped);
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Reported)
    }
}

fn cmd_stagnation(c: &StagnationCmd) -> Outcome {
    let report = stagnation_experiment(&StagnationConfig {
        epochs: c.epochs,
        lr: c.lr,
        seed: c.common.seed,
    })?;
    let mut out = sink(&c.common.out)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    for run in [&report.relu, &report.gred] {
        summary(
            &c.common.out,
            &format!("{}: final accuracy {:.2}, permanently frozen samples {:?}", run.variant, run.final_accuracy, run.permanently_frozen()),
        );
    }
    Ok(())
}

fn cmd_reg_sweep(c: &RegSweepCmd) -> Outcome {
    let seed = c.common.seed;
    let lambdas = parse_list("--lambdas", &c.lambdas)?;
    let cfg = train_config(&c.model, seed)?;
    let (tr, te) = datasets(&c.data, seed)?;
    let net = init_net(&c.model, tr.dim(), tr.class_count(), seed)?;
    let rows = regularization_sweep(&lambdas, &net, &cfg, &tr, &te)?;
    let mut out = sink(&c.common.out)?;
    write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_acc_vacuity(c: &EvalCmd) -> Outcome {
    let (net, cfg, _, te) = model(c)?;
    let records = predict_records(&net, &te, cfg.activation)?;
    let thresholds: Vec<f64> = (1..=20).map(|i| f64::from(i) / 20.0).collect();
    let fractions: Vec<f64> = (1..=10).map(|i| f64::from(i) / 10.0).collect();
    let mut out = sink(&c.common.out)?;
    writeln!(out, "curve,threshold,accuracy,coverage")?;
    for p in accuracy_vacuity_curve(&records, &thresholds)? {
        writeln!(out, "vacuity,{},{},{}", p.threshold, p.accuracy, p.coverage)?;
    }
    for (f, acc) in topk_confident_accuracy(&records, &fractions)? {
        writeln!(out, "topk,{f},{acc},{f}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_calibration(c: &CalibrationCmd) -> Outcome {
    let (net, cfg, _, te) = model(&c.eval)?;
    let records = predict_records(&net, &te, cfg.activation)?;
    let mut out = sink(&c.eval.common.out)?;
    writeln!(out, "bin_lower,bin_upper,count,accuracy,confidence")?;
    for b in reliability_bins(&records, c.bins)? {
        writeln!(out, "{},{},{},{},{}", b.lower, b.upper, b.count, b.accuracy, b.confidence)?;
    }
    out.flush()?;
    summary(&c.eval.common.out, &format!("ece {:.6}", ece(&records, c.bins)?));
    Ok(())
}

fn cmd_ood(c: &OodCmd) -> Outcome {
    let (net, cfg, _, te) = model(&c.eval)?;
    let shifted = ood_shift(&te, c.shift * c.eval.data.spread, derive_seed(c.eval.common.seed, OOD_SHIFT))?;
    let r = ood_experiment(&net, cfg.activation, &te, &shifted)?;
    let mut out = sink(&c.eval.common.out)?;
    r.write_csv(&mut out)?;
    out.flush()?;
    summary(&c.eval.common.out, &format!("auroc {:.6}", r.auroc));
    Ok(())
}

fn cmd_attack(c: &AttackCmd) -> Outcome {
    let eps = parse_list("--eps", &c.eps)?;
    let (net, cfg, _, te) = model(&c.eval)?;
    let objective = cfg.objective();
    let mut out = sink(&c.eval.common.out)?;
    writeln!(out, "eps,accuracy")?;
    for e in eps {
        writeln!(out, "{e},{}", adversarial_accuracy(&net, &te, &objective, e)?)?;
    }
    out.flush()?;
    Ok(())
}

fn read_codebook(p: &Path) -> Result<Codebook, Failure> {
    if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok(read_codebook_csv(BufReader::new(File::open(p)?))?)
    } else {
        Ok(load_codebook(p)?)
    }
}

fn cmd_codebook(c: &CodebookCmd) -> Outcome {
    let (fixture_e, fixture_cb) = demo_fixture(c.k, c.d)?;
    let cb = match &c.codebook {
        Some(p) => read_codebook(p)?,
        None => fixture_cb,
    };
    let e = match &c.evidence {
        Some(s) => EvidenceVector::new(parse_list("--evidence", s)?)?,
        None if c.codebook.is_some() => {
            return Err(Failure::Config("--codebook needs --evidence".into()));
        }
        None => fixture_e,
    };
    let code = select_code(&e, &cb, &SelectionConfig::new(c.t, c.vthr)?)?;
    let mut out = sink(&c.out)?;
    let header: Vec<String> = (0..code.len()).map(|j| format!("c{j}")).collect();
    let row: Vec<String> = code.iter().map(f64::to_string).collect();
    writeln!(out, "{}", header.join(","))?;
    writeln!(out, "{}", row.join(","))?;
    out.flush()?;
    Ok(())
}

fn cmd_gen_data(c: &GenDataCmd) -> Outcome {
    let seed = c.common.seed;
    let d = &c.data;
    let data = match c.kind.as_str() {
        "toy" => four_point_toy(seed),
        "shifted" => {
            let base = gaussian_blobs(d.classes, d.per_class, d.spread, d.separation, d.dim, derive_seed(seed, TEST_DATA))?;
            ood_shift(&base, c.shift * d.spread, derive_seed(seed, OOD_SHIFT))?
        }
        _ => datasets(d, seed)?.0,
    };
    let mut out = sink(&c.common.out)?;
    data.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
