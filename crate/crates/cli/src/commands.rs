use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use d4_core::decompose::{Mode, StoppingRule};
use d4_core::embedkit::{
    bias_by_neighbour, debias, gender_direction, lexicon_probe_trajectory, load_embeddings, profession_neighbour_counts,
    read_word_sets, recoverability_probe, save_embeddings, weat, EmbeddingFormat, EmbeddingSet, GenderLexicon, LoadReport,
    WeatSpec,
};
use d4_core::learners::{registry, KernelSpec};
use d4_core::synthbench::{run_experiment, ExperimentTable, SynthConfig};
use d4_core::{d4_fit, d4_reduce, d4_transform, probe_trajectory, D4Config, D4Model, FeatureMatrix, LabeledDataset, LearnerSpec, Matrix, OrthonormalBasis, Vector};
use serde::Serialize;

use crate::error::CliError;
use crate::files::{read_matrix, read_model, read_vector, write_atomic, write_json, write_matrix, write_model};

#[derive(Debug, Parser)]
#[command(name = "d4", version, about = "Decision-directed data decomposition")]
pub struct Cli {
    /// Suppress tables and progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn decision directions from a feature matrix and targets.
    Fit(FitArgs),
    /// Remove the first k directions of a model from a feature matrix.
    Transform(TransformArgs),
    /// Probe how much target information survives each step of a model.
    Probe(ProbeArgs),
    /// Run the spurious-correlation benchmark.
    Synth(SynthArgs),
    /// Remove gender directions from a word embedding.
    Debias(DebiasArgs),
    /// Bias metrics on a word embedding.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct LearnerArgs {
    /// Learner name from the registry (ridge, ridge-ls, logistic).
    #[arg(long)]
    pub learner: Option<String>,
    /// Ridge alpha or logistic lambda.
    #[arg(long, default_value_t = 1.0)]
    pub reg: f64,
    #[arg(long)]
    pub no_intercept: bool,
}

impl LearnerArgs {
    fn spec(&self, default: &str) -> Result<LearnerSpec, CliError> {
        let name = self.learner.as_deref().unwrap_or(default);
        let names = registry().names();
        if !names.contains(&name) {
            return Err(CliError::Config(format!("unknown learner `{name}`; available: {}", names.join(", "))));
        }
        let mut spec = LearnerSpec::new(name, self.reg);
        spec.fit_intercept = !self.no_intercept;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    /// Binary for logistic or when every target is ±1 (or 0/1), else regression.
    Auto,
    Binary,
    Regression,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Projector,
    Fullrank,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StopArg {
    Fixed,
    Converge,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Feature matrix (D4MAT1 binary or CSV).
    #[arg(long)]
    pub features: PathBuf,
    /// Targets, one per row.
    #[arg(long)]
    pub targets: PathBuf,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Projector)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = StopArg::Fixed)]
    pub stop: StopArg,
    /// Distance to the majority baseline that counts as converged.
    #[arg(long, default_value_t = 0.02)]
    pub tolerance: f64,
    /// Consecutive converged iterations before stopping.
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    /// Fraction of rows held out for the convergence probe.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Directions to remove; defaults to all of them.
    #[arg(long)]
    pub k: Option<usize>,
    /// Output for the projected matrix (`.csv` for CSV, binary otherwise).
    #[arg(long)]
    pub out_perp: PathBuf,
    /// Output for the removed component.
    #[arg(long)]
    pub out_par: Option<PathBuf>,
    /// Write the n×(p−k) rank-reduced form instead of the n×p projection.
    #[arg(long)]
    pub reduced: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    /// Model whose directions are removed one at a time; without it only the
    /// raw features are probed.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, requires = "heldout_targets")]
    pub heldout_features: Option<PathBuf>,
    #[arg(long, requires = "heldout_features")]
    pub heldout_targets: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
    /// Trajectory output, JSON for `.json`, CSV otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// n = 100000, p = 300, corr 0.9, std 1 and 2, 10% label noise.
    Table1,
    /// Same with n = 20000.
    Reduced,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Base configuration; individual flags override it.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Training correlation; the test set uses its negation.
    #[arg(long, allow_hyphen_values = true)]
    pub corr: Option<f64>,
    #[arg(long)]
    pub std1: Option<f64>,
    #[arg(long)]
    pub std2: Option<f64>,
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Experiment table (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbeddingFormatArg {
    /// word2vec binary
    Bin,
    /// one word and its values per line
    Txt,
}

impl From<EmbeddingFormatArg> for EmbeddingFormat {
    fn from(f: EmbeddingFormatArg) -> Self {
        match f {
            EmbeddingFormatArg::Bin => EmbeddingFormat::Word2VecBinary,
            EmbeddingFormatArg::Txt => EmbeddingFormat::Text,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, value_enum, default_value_t = EmbeddingFormatArg::Bin)]
    pub format: EmbeddingFormatArg,
    /// Keep only the first N words (files are usually frequency sorted).
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Use vectors as stored instead of scaling them to unit length.
    #[arg(long)]
    pub no_normalize: bool,
}

impl EmbeddingArgs {
    fn load_raw(&self, path: &Path) -> Result<(EmbeddingSet, LoadReport), CliError> {
        let loaded = load_embeddings(path, self.format.into(), self.top_n)?;
        if loaded.embedding.is_empty() {
            return Err(CliError::parse(path, "no vectors"));
        }
        Ok((loaded.embedding, loaded.report))
    }

    fn prepare(&self, emb: EmbeddingSet) -> EmbeddingSet {
        if self.no_normalize {
            emb
        } else {
            emb.normalized()
        }
    }

    fn load(&self) -> Result<EmbeddingSet, CliError> {
        Ok(self.prepare(self.load_raw(&self.embedding)?.0))
    }

    fn load_reference(&self, reference: Option<&Path>) -> Result<Option<EmbeddingSet>, CliError> {
        reference.map(|p| Ok(self.prepare(self.load_raw(p)?.0))).transpose()
    }
}

#[derive(Debug, Args)]
pub struct DebiasArgs {
    #[command(flatten)]
    pub input: EmbeddingArgs,
    /// Word lists with `masculine`, `feminine` and optional `pairs` sets.
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub iterations: usize,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Debiased embedding, written in the input format.
    #[arg(long)]
    pub out_embedding: PathBuf,
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Cluster the most extreme words along the gender direction.
    NeighboursBias(NeighboursBiasArgs),
    /// Masculine-biased neighbour counts for professions.
    Professions(ProfessionsArgs),
    /// Word embedding association test.
    Weat(WeatArgs),
    /// Cross-validated kernel probe for gender on the lexicon.
    Probe(EvalProbeArgs),
}

#[derive(Debug, Args)]
pub struct DirectionArgs {
    /// Definitional pair `a,b`; the direction is `a − b`.
    #[arg(long, default_value = "she,he")]
    pub direction_pair: String,
    /// Embedding that defines the direction and the word ranking or labels
    /// (usually the original, before debiasing); defaults to --embedding.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

impl DirectionArgs {
    fn pair(&self) -> Result<(String, String), CliError> {
        match self.direction_pair.split(',').map(str::trim).collect::<Vec<_>>().as_slice() {
            [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
            _ => Err(CliError::Config(format!("--direction-pair must be `a,b`, got `{}`", self.direction_pair))),
        }
    }
}

#[derive(Debug, Args)]
pub struct NeighboursBiasArgs {
    #[command(flatten)]
    pub input: EmbeddingArgs,
    #[command(flatten)]
    pub direction: DirectionArgs,
    /// Words taken from each end of the direction.
    #[arg(long, default_value_t = 500)]
    pub n_extreme: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-word scatter data; JSON for `.json`, CSV otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfessionsArgs {
    #[command(flatten)]
    pub input: EmbeddingArgs,
    #[command(flatten)]
    pub direction: DirectionArgs,
    /// Word list of professions.
    #[arg(long)]
    pub professions: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeatArgs {
    #[command(flatten)]
    pub input: EmbeddingArgs,
    /// Word lists with sets X, Y, A and B.
    #[arg(long)]
    pub weat: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalProbeArgs {
    #[command(flatten)]
    pub input: EmbeddingArgs,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// `linear`, `rbf`, `rbf:GAMMA` or `poly:DEGREE:COEF0`.
    #[arg(long, default_value = "rbf")]
    pub kernel: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let out = Printer { quiet: cli.quiet };
    match &cli.command {
        Command::Fit(a) => fit(a, &out),
        Command::Transform(a) => transform(a, &out),
        Command::Probe(a) => probe(a, &out),
        Command::Synth(a) => synth(a, &out),
        Command::Debias(a) => debias_cmd(a, &out),
        Command::Eval(EvalCommand::NeighboursBias(a)) => neighbours_bias(a, &out),
        Command::Eval(EvalCommand::Professions(a)) => professions(a, &out),
        Command::Eval(EvalCommand::Weat(a)) => weat_cmd(a, &out),
        Command::Eval(EvalCommand::Probe(a)) => eval_probe(a, &out),
    }
}

struct Printer {
    quiet: bool,
}

impl Printer {
    fn line(&self, s: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", s.as_ref());
        }
    }
}

fn warn(s: impl AsRef<str>) {
    eprintln!("warning: {}", s.as_ref());
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r).map_err(std::io::Error::other)?;
        }
        csv.flush()
    })
}

/// JSON `report` for `.json` paths, `rows` as CSV otherwise.
fn write_report<R: Serialize, T: Serialize>(path: &Path, report: &R, rows: &[T]) -> Result<(), CliError> {
    if is_json(path) {
        write_json(path, report)
    } else {
        write_csv(path, rows)
    }
}

fn labeled(x: Matrix, y: Vector, task: TaskArg, learner: &LearnerSpec, fpath: &Path, ypath: &Path) -> Result<LabeledDataset, CliError> {
    if x.nrows() != y.len() {
        return Err(CliError::Dimension(format!(
            "{} has {} rows but {} has {} targets",
            fpath.display(),
            x.nrows(),
            ypath.display(),
            y.len()
        )));
    }
    let x = FeatureMatrix::new(x).map_err(|e| CliError::parse(fpath, e.to_string()))?;
    let is_pm1 = y.iter().all(|&v| v == 1.0 || v == -1.0);
    let is_01 = y.iter().all(|&v| v == 0.0 || v == 1.0);
    let binary = match task {
        TaskArg::Binary => true,
        TaskArg::Regression => false,
        TaskArg::Auto => learner.kind == "logistic" || is_pm1 || is_01,
    };
    if !binary {
        return Ok(LabeledDataset::regression(x, y)?);
    }
    let y = if !is_pm1 && is_01 { y.map(|v| 2.0 * v - 1.0) } else { y };
    if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(CliError::parse(ypath, format!("row {}: binary target {} is not ±1 or 0/1", i + 1, y[i])));
    }
    Ok(LabeledDataset::binary(x, y)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn fit(a: &FitArgs, out: &Printer) -> Result<(), CliError> {
    if a.iterations == 0 {
        return Err(CliError::Config("at least 1 iteration required".into()));
    }
    let learner = a.learner.spec("ridge")?;
    let x = read_matrix(&a.features)?;
    let y = read_vector(&a.targets)?;
    let data = labeled(x, y, a.task, &learner, &a.features, &a.targets)?;
    let stopping = match a.stop {
        StopArg::Fixed => StoppingRule::Fixed,
        StopArg::Converge => StoppingRule::ProbeConvergence {
            tolerance: a.tolerance,
            patience: a.patience,
            validation_fraction: a.validation_fraction,
        },
    };
    let mode = match a.mode {
        ModeArg::Projector => Mode::Projector,
        ModeArg::Fullrank => Mode::FullRank,
    };
    let config = D4Config::new(learner, a.iterations)
        .with_mode(mode)
        .with_stopping(stopping)
        .with_seed(a.seed);
    let model = d4_fit(&data, &config)?;
    write_model(&a.out, &model, Some(&config))?;
    out.line(format!("{:>9}  {:>10}  {:>10}", "iteration", "train", "validation"));
    for d in &model.diagnostics {
        out.line(format!("{:>9}  {:>10.4}  {:>10}", d.iteration, d.train_metric, fmt_opt(d.validation_metric)));
    }
    out.line(format!("{} direction(s), stop: {:?}", model.len(), model.stop_reason));
    Ok(())
}

fn check_model_dim(model: &D4Model, x: &Matrix, mpath: &Path, fpath: &Path) -> Result<(), CliError> {
    if model.dim() != x.ncols() {
        return Err(CliError::Dimension(format!(
            "{} has dimension {} but {} has {} columns",
            mpath.display(),
            model.dim(),
            fpath.display(),
            x.ncols()
        )));
    }
    Ok(())
}

fn transform(a: &TransformArgs, out: &Printer) -> Result<(), CliError> {
    let model = read_model(&a.model)?;
    let x = read_matrix(&a.features)?;
    check_model_dim(&model, &x, &a.model, &a.features)?;
    let k = a.k.unwrap_or(model.len());
    if k > model.len() {
        return Err(CliError::Config(format!("--k {k} exceeds the {} directions in {}", model.len(), a.model.display())));
    }
    let (perp, par) = if k == 0 {
        (x.clone(), Matrix::zeros(x.nrows(), x.ncols()))
    } else {
        d4_transform(&x, &model, k)?
    };
    let main = if a.reduced && k > 0 {
        if k == x.ncols() {
            warn("all directions removed; the reduced matrix has no columns");
        }
        d4_reduce(&x, &model, k, true)?
    } else {
        perp
    };
    write_matrix(&a.out_perp, &main)?;
    if let Some(p) = &a.out_par {
        write_matrix(p, &par)?;
    }
    out.line(format!("removed {k} direction(s): {}x{} -> {}x{}", x.nrows(), x.ncols(), main.nrows(), main.ncols()));
    Ok(())
}

#[derive(Serialize)]
struct ProbeRow {
    k: usize,
    train: f64,
    heldout: Option<f64>,
}

fn probe(a: &ProbeArgs, out: &Printer) -> Result<(), CliError> {
    let learner = a.learner.spec("ridge")?;
    let x = read_matrix(&a.features)?;
    let y = read_vector(&a.targets)?;
    let model = match &a.model {
        Some(m) => {
            let model = read_model(m)?;
            check_model_dim(&model, &x, m, &a.features)?;
            model
        }
        None => D4Model::new(OrthonormalBasis::empty(x.ncols()), vec![], d4_core::decompose::StopReason::Completed),
    };
    let data = labeled(x, y, a.task, &learner, &a.features, &a.targets)?;
    let heldout = match (&a.heldout_features, &a.heldout_targets) {
        (Some(f), Some(t)) => {
            let hx = read_matrix(f)?;
            check_model_dim(&model, &hx, a.model.as_deref().unwrap_or(&a.features), f)?;
            Some(labeled(hx, read_vector(t)?, a.task, &learner, f, t)?)
        }
        _ => None,
    };
    let points = probe_trajectory(&data, &model, &learner, heldout.as_ref())?;
    let rows: Vec<ProbeRow> = points
        .iter()
        .map(|p| ProbeRow {
            k: p.k,
            train: p.train_metric,
            heldout: p.heldout_metric,
        })
        .collect();
    out.line(format!("{:>3}  {:>10}  {:>10}", "k", "train", "heldout"));
    for r in &rows {
        out.line(format!("{:>3}  {:>10.4}  {:>10}", r.k, r.train, fmt_opt(r.heldout)));
    }
    if let Some(path) = &a.out {
        write_report(path, &rows, &rows)?;
    }
    Ok(())
}

fn synth(a: &SynthArgs, out: &Printer) -> Result<(), CliError> {
    let mut cfg = match a.preset {
        Some(Preset::Reduced) => SynthConfig::reduced(a.seed),
        _ => SynthConfig::table1(a.seed),
    };
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.p = a.p.unwrap_or(cfg.p);
    cfg.corr = a.corr.unwrap_or(cfg.corr);
    cfg.std1 = a.std1.unwrap_or(cfg.std1);
    cfg.std2 = a.std2.unwrap_or(cfg.std2);
    cfg.flip_prob = a.flip_prob.unwrap_or(cfg.flip_prob);
    cfg.validate()?;
    let learner = a.learner.spec("logistic")?;
    let table = run_experiment(&cfg, &cfg.reversed(), &learner)?;
    print_synth(&table, out);
    if let Some(path) = &a.out {
        write_csv(path, &table.rows)?;
    }
    Ok(())
}

fn print_synth(table: &ExperimentTable, out: &Printer) {
    out.line(format!(
        "{:>9}  {:>6}  {:>7}  {:>7}  {:>8}  {:>8}",
        "iteration", "target", "train", "test", "load_w1", "load_w2"
    ));
    for r in &table.rows {
        out.line(format!(
            "{:>9}  {:>6}  {:>7.3}  {:>7.3}  {:>8.3}  {:>8.3}",
            r.iteration, r.target, r.train_acc, r.test_acc, r.load_w1, r.load_w2
        ));
    }
}

#[derive(Serialize)]
struct DebiasReport {
    vocabulary: usize,
    dim: usize,
    iterations_requested: usize,
    directions: usize,
    stop_reason: d4_core::decompose::StopReason,
    learner: LearnerSpec,
    normalized_fit: bool,
    masculine_found: usize,
    feminine_found: usize,
    missing_words: Vec<String>,
    duplicate_words: Vec<(usize, String)>,
    probe: Vec<ProbeStep>,
}

#[derive(Serialize)]
struct ProbeStep {
    k: usize,
    cv_accuracy: f64,
}

fn read_lexicon(path: &Path) -> Result<GenderLexicon, CliError> {
    Ok(GenderLexicon::from_sets(&read_word_sets(path)?).map_err(|e| CliError::parse(path, e.to_string()))?)
}

fn debias_cmd(a: &DebiasArgs, out: &Printer) -> Result<(), CliError> {
    if a.iterations == 0 {
        return Err(CliError::Config("at least 1 iteration required".into()));
    }
    let learner = a.learner.spec("ridge")?;
    let lexicon = read_lexicon(&a.lexicon)?;
    let (emb, load) = a.input.load_raw(&a.input.embedding)?;
    let config = D4Config::new(learner.clone(), a.iterations.min(emb.dim())).with_seed(a.seed);
    let normalize = !a.input.no_normalize;
    let result = debias(&emb, &lexicon, &config, normalize)?;
    let probe_spec = LearnerSpec::ridge(1.0);
    let trajectory = lexicon_probe_trajectory(&emb, &lexicon, &result.model, &probe_spec, a.folds, a.seed, normalize)?;

    save_embeddings(&a.out_embedding, &result.embedding, a.input.format.into(), load.layout)?;
    if let Some(m) = &a.out_model {
        write_model(m, &result.model, Some(&config))?;
    }
    let report = DebiasReport {
        vocabulary: emb.len(),
        dim: emb.dim(),
        iterations_requested: a.iterations,
        directions: result.model.len(),
        stop_reason: result.model.stop_reason,
        learner,
        normalized_fit: normalize,
        masculine_found: result.masculine_found,
        feminine_found: result.feminine_found,
        missing_words: result.missing.clone(),
        duplicate_words: load.duplicates.clone(),
        probe: trajectory
            .iter()
            .enumerate()
            .map(|(k, &cv_accuracy)| ProbeStep { k, cv_accuracy })
            .collect(),
    };
    if let Some(r) = &a.report {
        write_json(r, &report)?;
    }
    if !result.missing.is_empty() {
        warn(format!("{} lexicon word(s) not in the vocabulary", result.missing.len()));
    }
    out.line(format!("{:>3}  {:>12}", "k", "probe_cv_acc"));
    for s in &report.probe {
        out.line(format!("{:>3}  {:>12.4}", s.k, s.cv_accuracy));
    }
    Ok(())
}

/// Direction from `reference` (or `emb`) plus the embedding used for ranking.
fn direction_and_reference(emb: &EmbeddingSet, input: &EmbeddingArgs, d: &DirectionArgs) -> Result<(Vector, Option<EmbeddingSet>), CliError> {
    let (a, b) = d.pair()?;
    let reference = input.load_reference(d.reference.as_deref())?;
    let dir = gender_direction(reference.as_ref().unwrap_or(emb), (&a, &b))?;
    Ok((dir, reference))
}

#[derive(Serialize)]
struct NeighbourReport<'a> {
    accuracy: f64,
    n_extreme: usize,
    direction_pair: &'a str,
    words: &'a [d4_core::embedkit::ExtremeWord],
}

fn neighbours_bias(a: &NeighboursBiasArgs, out: &Printer) -> Result<(), CliError> {
    let emb = a.input.load()?;
    let (dir, reference) = direction_and_reference(&emb, &a.input, &a.direction)?;
    let r = bias_by_neighbour(&emb, reference.as_ref().unwrap_or(&emb), &dir, a.n_extreme, a.seed)?;
    out.line(format!("bias_by_neighbour_accuracy {:.4}", r.accuracy));
    if let Some(path) = &a.out {
        let report = NeighbourReport {
            accuracy: r.accuracy,
            n_extreme: a.n_extreme,
            direction_pair: &a.direction.direction_pair,
            words: &r.extremes,
        };
        write_report(path, &report, &r.extremes)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ProfessionRow {
    word: String,
    dot: f64,
    masculine: bool,
    masculine_neighbours: usize,
}

#[derive(Serialize)]
struct ProfessionSummary<'a> {
    k: usize,
    direction_pair: &'a str,
    mean_count_masculine: Option<f64>,
    mean_count_feminine: Option<f64>,
    missing_words: &'a [String],
    professions: &'a [ProfessionRow],
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = v.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn professions(a: &ProfessionsArgs, out: &Printer) -> Result<(), CliError> {
    let emb = a.input.load()?;
    let words = read_word_sets(&a.professions)?.all_words();
    let (dir, reference) = direction_and_reference(&emb, &a.input, &a.direction)?;
    // direction pair `a,b` points from b to a; b is the masculine side
    let r = profession_neighbour_counts(&emb, reference.as_ref().unwrap_or(&emb), &words, &-&dir, a.k)?;
    let rows: Vec<ProfessionRow> = r
        .records
        .iter()
        .map(|p| ProfessionRow {
            word: p.word.clone(),
            dot: -p.dot,
            masculine: p.masculine,
            masculine_neighbours: p.masculine_neighbours,
        })
        .collect();
    let summary = ProfessionSummary {
        k: a.k,
        direction_pair: &a.direction.direction_pair,
        mean_count_masculine: mean_of(rows.iter().filter(|r| r.masculine).map(|r| r.masculine_neighbours as f64)),
        mean_count_feminine: mean_of(rows.iter().filter(|r| !r.masculine).map(|r| r.masculine_neighbours as f64)),
        missing_words: &r.missing,
        professions: &rows,
    };
    if !r.missing.is_empty() {
        warn(format!("{} profession(s) not in the vocabulary", r.missing.len()));
    }
    out.line(format!(
        "professions {}  mean masculine-neighbour count: masculine {}  feminine {}",
        rows.len(),
        fmt_opt(summary.mean_count_masculine),
        fmt_opt(summary.mean_count_feminine)
    ));
    if let Some(path) = &a.out {
        write_report(path, &summary, &rows)?;
    }
    Ok(())
}

fn weat_cmd(a: &WeatArgs, out: &Printer) -> Result<(), CliError> {
    let emb = a.input.load()?;
    let spec = WeatSpec::from_sets(&read_word_sets(&a.weat)?).map_err(|e| CliError::parse(&a.weat, e.to_string()))?;
    let r = weat(&emb, &spec)?;
    if !r.missing.is_empty() {
        warn(format!("{} word(s) not in the vocabulary", r.missing.len()));
    }
    out.line(format!("weat {}  effect_size {:.4}  mean_diff {:.4}", spec.name, r.effect_size, r.mean_diff));
    if let Some(path) = &a.out {
        write_report(path, &r, &r.scores)?;
    }
    Ok(())
}

fn eval_probe(a: &EvalProbeArgs, out: &Printer) -> Result<(), CliError> {
    let kernel: KernelSpec = a.kernel.parse()?;
    let emb = a.input.load()?;
    let lexicon = read_lexicon(&a.lexicon)?;
    let r = recoverability_probe(&emb, &lexicon, &kernel, a.folds, a.seed, a.ridge)?;
    out.line(format!("probe {}  cv_accuracy {:.4}", kernel, r.accuracy));
    if let Some(path) = &a.out {
        write_report(path, &r, &[&r])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn direction_pair_parsing() {
        let d = DirectionArgs {
            direction_pair: "she, he".into(),
            reference: None,
        };
        assert_eq!(d.pair().unwrap(), ("she".to_string(), "he".to_string()));
        let bad = DirectionArgs {
            direction_pair: "she".into(),
            reference: None,
        };
        assert!(matches!(bad.pair(), Err(CliError::Config(_))));
    }

    #[test]
    fn zero_one_targets_become_signs() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let d = labeled(x, Vector::from_vec(vec![0.0, 1.0]), TaskArg::Auto, &LearnerSpec::ridge(1.0), Path::new("x"), Path::new("y")).unwrap();
        assert_eq!(d.y(), &Vector::from_vec(vec![-1.0, 1.0]));
    }

    #[test]
    fn mismatched_rows_exit_three() {
        let x = Matrix::zeros(3, 1);
        let err = labeled(x, Vector::zeros(2), TaskArg::Auto, &LearnerSpec::ridge(1.0), Path::new("x.csv"), Path::new("y.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("x.csv"));
    }
}
