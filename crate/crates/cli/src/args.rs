use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "evcore", version, about = "Regularized evidential classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a dense evidential classifier on Gaussian blobs (or IDX data) and emit its history.
    Train(TrainCmd),
    /// Compare analytic gradients with central differences on random configurations.
    GradCheck(GradCheckCmd),
    /// Four-point toy: ReLU evidence freezes two samples, the correct-evidence term revives them.
    Stagnation(StagnationCmd),
    /// Sweep the incorrect-evidence weight for baseline and GRED models.
    RegSweep(RegSweepCmd),
    /// Accuracy against vacuity threshold and on the top-K% most confident samples.
    AccVacuity(EvalCmd),
    /// Reliability bins and expected calibration error.
    Calibration(CalibrationCmd),
    /// Out-of-distribution detection against shifted blobs.
    Ood(OodCmd),
    /// Accuracy under FGSM perturbation.
    Attack(AttackCmd),
    /// Top-t belief-weighted code selection on a fixture or a supplied codebook.
    CodebookDemo(CodebookCmd),
    /// Write a synthetic dataset as CSV.
    GenData(GenDataCmd),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Random seed (required)
    #[arg(long)]
    pub seed: u64,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value config file; flags override it, it overrides defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Evidential loss
    #[arg(long, default_value = "mse", value_parser = ["mse", "ce", "log"])]
    pub loss: String,
    /// Evidential activation
    #[arg(long, default_value = "exp", value_parser = ["relu", "softplus", "exp", "selu"])]
    pub act: String,
    /// Incorrect-evidence (KL) weight before annealing
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    /// Correct-evidence regularizer
    #[arg(long, default_value = "on", value_parser = ["on", "off"])]
    pub cor_reg: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Mini-batch size
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value = "adam", value_parser = ["adam", "sgd"])]
    pub optimizer: String,
    /// SGD momentum
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Hidden layer widths, comma separated
    #[arg(long, default_value = "32")]
    pub hidden: String,
    /// Hidden nonlinearity
    #[arg(long, default_value = "tanh", value_parser = ["tanh", "relu"])]
    pub hidden_act: String,
    /// Train on FGSM-perturbed inputs
    #[arg(long, default_value = "off", value_parser = ["on", "off"])]
    pub adv_train: String,
    /// FGSM epsilon used by adversarial training
    #[arg(long, default_value_t = 0.05)]
    pub adv_eps: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Cluster standard deviation
    #[arg(long, default_value_t = 0.7)]
    pub spread: f64,
    /// Distance between neighbouring cluster centers
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Fraction of training labels replaced by another class
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
    /// IDX image file; with --idx-labels replaces the blobs (last 20% held out)
    #[arg(long, requires = "idx_labels")]
    pub idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    pub idx_labels: Option<PathBuf>,
    /// Maximum number of IDX samples to read (0 = all)
    #[arg(long, default_value_t = 0)]
    pub limit: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the trained network checkpoint here
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalCmd {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Evaluate this checkpoint instead of training
    #[arg(long)]
    pub load: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationCmd {
    #[command(flatten)]
    pub eval: EvalCmd,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OodCmd {
    #[command(flatten)]
    pub eval: EvalCmd,
    /// Shift magnitude in units of --spread
    #[arg(long, default_value_t = 10.0)]
    pub shift: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AttackCmd {
    #[command(flatten)]
    pub eval: EvalCmd,
    /// FGSM epsilons, comma separated
    #[arg(long, default_value = "0,0.05")]
    pub eps: String,
}

#[derive(Debug, Clone, Args)]
pub struct RegSweepCmd {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Incorrect-evidence weights, comma separated
    #[arg(long, default_value = "0,0.1,1,10")]
    pub lambdas: String,
}

#[derive(Debug, Clone, Args)]
pub struct GradCheckCmd {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args)]
pub struct StagnationCmd {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// SGD learning rate
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CodebookCmd {
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value config file; flags override it, it overrides defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of code items in the fixture
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Code dimension in the fixture
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Number of highest-belief codes to blend
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    /// Vacuity at or below which the max-belief code is used
    #[arg(long, default_value_t = 0.0)]
    pub vthr: f64,
    /// Codebook file (.csv or binary); replaces the fixture codes
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    /// Evidence vector, comma separated; replaces the fixture evidence
    #[arg(long)]
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataCmd {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DataArgs,
    /// Which generator to run
    #[arg(long, default_value = "blobs", value_parser = ["blobs", "toy", "shifted"])]
    pub kind: String,
    /// Shift magnitude in units of --spread (kind = shifted)
    #[arg(long, default_value_t = 10.0)]
    pub shift: f64,
}
